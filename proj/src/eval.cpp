#include "har/eval.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "har/error.hpp"
#include "har/infer.hpp"
#include "har/rng.hpp"

namespace har::eval {

std::uint64_t ConfusionMatrix::row_sum(std::size_t t) const {
  std::uint64_t s = 0;
  for (std::size_t p = 0; p < k(); ++p) s += at(t, p);
  return s;
}

std::uint64_t ConfusionMatrix::col_sum(std::size_t p) const {
  std::uint64_t s = 0;
  for (std::size_t t = 0; t < k(); ++t) s += at(t, p);
  return s;
}

std::uint64_t ConfusionMatrix::trace() const {
  std::uint64_t s = 0;
  for (std::size_t c = 0; c < k(); ++c) s += at(c, c);
  return s;
}

std::uint64_t ConfusionMatrix::total() const {
  std::uint64_t s = 0;
  for (std::uint64_t c : counts) s += c;
  return s;
}

ConfusionMatrix confusion(std::span<const std::size_t> predictions,
                          std::span<const std::size_t> labels,
                          std::vector<std::string> classes) {
  if (classes.empty()) {
    throw_contract("confusion: class list is empty");
  }
  if (predictions.size() != labels.size()) {
    throw_contract("confusion: " + std::to_string(predictions.size()) +
                   " predictions vs " + std::to_string(labels.size()) +
                   " labels");
  }
  ConfusionMatrix cm;
  cm.classes = std::move(classes);
  cm.counts.assign(cm.k() * cm.k(), 0);
  for (std::size_t i = 0; i < predictions.size(); ++i) {
    if (labels[i] >= cm.k() || predictions[i] >= cm.k()) {
      throw_contract("confusion: class index out of range at sample " +
                     std::to_string(i));
    }
    ++cm.counts[labels[i] * cm.k() + predictions[i]];
  }
  return cm;
}

Metrics metrics(const ConfusionMatrix& cm) {
  if (cm.total() == 0) {
    throw_contract("metrics: empty confusion matrix");
  }
  Metrics m;
  m.per_class.resize(cm.k());
  for (std::size_t c = 0; c < cm.k(); ++c) {
    ClassMetrics& cl = m.per_class[c];
    const double tp = static_cast<double>(cm.at(c, c));
    const std::uint64_t col = cm.col_sum(c);
    const std::uint64_t row = cm.row_sum(c);
    if (col == 0 || row == 0) cl.degenerate = true;
    cl.precision = col == 0 ? 0.0 : 100.0 * (tp / static_cast<double>(col));
    cl.recall = row == 0 ? 0.0 : 100.0 * (tp / static_cast<double>(row));
    cl.f1 = cl.precision + cl.recall == 0.0
                ? 0.0
                : 2.0 * cl.precision * cl.recall / (cl.precision + cl.recall);
    m.macro_precision += cl.precision;
    m.macro_recall += cl.recall;
    m.macro_f1 += cl.f1;
  }
  const double k = static_cast<double>(cm.k());
  m.macro_precision /= k;
  m.macro_recall /= k;
  m.macro_f1 /= k;
  m.accuracy = 100.0 * (static_cast<double>(cm.trace()) /
                        static_cast<double>(cm.total()));
  return m;
}

namespace {

template <typename T>
BenchmarkStats run_benchmark(const models::Model& model, std::size_t reps) {
  infer::Engine<T> engine(model);
  std::vector<T> sample(engine.input_size());
  Rng rng(1);
  for (T& x : sample) x = static_cast<T>(rng.uniform(-1.0, 1.0));
  std::vector<T> probs(engine.n_classes());

  using clock = std::chrono::steady_clock;
  for (int i = 0; i < 5; ++i) engine.forward(sample, probs);
  std::vector<double> ms(reps);
  for (std::size_t i = 0; i < reps; ++i) {
    const auto t0 = clock::now();
    engine.forward(sample, probs);
    const auto t1 = clock::now();
    ms[i] = std::chrono::duration<double, std::milli>(t1 - t0).count();
  }
  std::sort(ms.begin(), ms.end());

  BenchmarkStats st;
  st.repetitions = reps;
  double sum = 0.0;
  for (double v : ms) sum += v;
  st.mean_ms = sum / static_cast<double>(reps);
  st.median_ms = reps % 2 == 1 ? ms[reps / 2]
                               : 0.5 * (ms[reps / 2 - 1] + ms[reps / 2]);
  const std::size_t rank = static_cast<std::size_t>(
      std::ceil(0.95 * static_cast<double>(reps)));
  st.p95_ms = ms[rank - 1];
  st.memory_mb =
      static_cast<double>(engine.param_bytes() + engine.workspace_bytes()) /
      (1024.0 * 1024.0);
  return st;
}

}  // namespace

BenchmarkStats benchmark_inference(const models::Model& model,
                                   std::size_t repetitions,
                                   Precision precision) {
  if (repetitions < 30) {
    throw_contract("benchmark_inference: needs at least 30 repetitions, got " +
                   std::to_string(repetitions));
  }
  return precision == Precision::f32
             ? run_benchmark<float>(model, repetitions)
             : run_benchmark<double>(model, repetitions);
}

namespace {

std::string fixed4(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.4f", v);
  return buf;
}

std::string render_csv(const ConfusionMatrix& cm) {
  std::ostringstream out;
  out << "true\\pred";
  for (const std::string& name : cm.classes) out << ',' << name;
  out << '\n';
  for (std::size_t t = 0; t < cm.k(); ++t) {
    out << cm.classes[t];
    for (std::size_t p = 0; p < cm.k(); ++p) out << ',' << cm.at(t, p);
    out << '\n';
  }
  return out.str();
}

std::string render_json(const EvalReport& r) {
  std::ostringstream out;
  out << "{\n";
  out << "  \"accuracy\": " << fixed4(r.metrics.accuracy) << ",\n";
  out << "  \"macro_precision\": " << fixed4(r.metrics.macro_precision)
      << ",\n";
  out << "  \"macro_recall\": " << fixed4(r.metrics.macro_recall) << ",\n";
  out << "  \"macro_f1\": " << fixed4(r.metrics.macro_f1);
  for (std::size_t c = 0; c < r.cm.k(); ++c) {
    const std::string& name = r.cm.classes[c];
    const ClassMetrics& cl = r.metrics.per_class[c];
    out << ",\n  \"precision." << name << "\": " << fixed4(cl.precision);
    out << ",\n  \"recall." << name << "\": " << fixed4(cl.recall);
    out << ",\n  \"f1." << name << "\": " << fixed4(cl.f1);
  }
  if (r.benchmark) {
    out << ",\n  \"latency_mean_ms\": " << fixed4(r.benchmark->mean_ms);
    out << ",\n  \"latency_median_ms\": " << fixed4(r.benchmark->median_ms);
    out << ",\n  \"latency_p95_ms\": " << fixed4(r.benchmark->p95_ms);
    out << ",\n  \"memory_mb\": " << fixed4(r.benchmark->memory_mb);
  }
  out << "\n}\n";
  return out.str();
}

}  // namespace

void export_report(const EvalReport& report, const std::string& path,
                   ReportFormat format) {
  if (report.metrics.per_class.size() != report.cm.k()) {
    throw_contract("export_report: metrics cover " +
                   std::to_string(report.metrics.per_class.size()) +
                   " classes, matrix has " + std::to_string(report.cm.k()));
  }
  const std::string body =
      format == ReportFormat::csv ? render_csv(report.cm) : render_json(report);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out || !(out << body) || !out.flush()) {
    throw_io("export_report: cannot write " + path);
  }
}

}  // namespace har::eval
