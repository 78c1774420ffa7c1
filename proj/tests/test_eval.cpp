#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <string>
#include <vector>

#include <json.hpp>

#include "har/eval.hpp"
#include "har/models.hpp"
#include "har/rng.hpp"
#include "test_util.hpp"

using namespace har;
using namespace har::eval;
using testutil::check_close;
using testutil::expect_error;

namespace fs = std::filesystem;

namespace {

std::vector<std::string> names(std::size_t k) {
  std::vector<std::string> v;
  for (std::size_t i = 0; i < k; ++i) v.push_back("c" + std::to_string(i));
  return v;
}

struct Tally {
  std::vector<double> precision, recall, f1;
  double accuracy = 0.0;
  double macro_p = 0.0, macro_r = 0.0, macro_f1 = 0.0;
};

// Independent per-sample tally; never touches ConfusionMatrix.
Tally brute_tally(const std::vector<std::size_t>& preds,
                  const std::vector<std::size_t>& labels, std::size_t k) {
  std::vector<double> tp(k, 0), fp(k, 0), fn(k, 0);
  double hits = 0;
  for (std::size_t i = 0; i < preds.size(); ++i) {
    if (preds[i] == labels[i]) {
      tp[labels[i]] += 1;
      hits += 1;
    } else {
      fp[preds[i]] += 1;
      fn[labels[i]] += 1;
    }
  }
  Tally t;
  for (std::size_t c = 0; c < k; ++c) {
    const double p = tp[c] + fp[c] == 0 ? 0.0 : 100.0 * (tp[c] / (tp[c] + fp[c]));
    const double r = tp[c] + fn[c] == 0 ? 0.0 : 100.0 * (tp[c] / (tp[c] + fn[c]));
    t.precision.push_back(p);
    t.recall.push_back(r);
    t.f1.push_back(p + r == 0 ? 0.0 : 2.0 * p * r / (p + r));
    t.macro_p += p;
    t.macro_r += r;
    t.macro_f1 += t.f1.back();
  }
  t.macro_p /= static_cast<double>(k);
  t.macro_r /= static_cast<double>(k);
  t.macro_f1 /= static_cast<double>(k);
  t.accuracy = 100.0 * (hits / static_cast<double>(preds.size()));
  return t;
}

models::ModelConfig small_bilstm(std::size_t layers) {
  models::ModelConfig c;
  c.kind = models::ModelKind::bilstm;
  c.input_channels = 8;
  c.input_time = 32;
  c.n_classes = 4;
  c.lstm_layers = layers;
  c.lstm_hidden = 16;
  c.init_seed = 41;
  return c;
}

fs::path temp_path(const std::string& name) {
  return fs::temp_directory_path() / name;
}

}  // namespace

TEST_CASE("confusion matrix matches the hand tally") {
  std::vector<std::size_t> preds = {0, 0, 1, 1};
  std::vector<std::size_t> labels = {0, 1, 1, 1};
  ConfusionMatrix cm = confusion(preds, labels, names(2));
  CHECK(cm.at(0, 0) == 1);
  CHECK(cm.at(0, 1) == 0);
  CHECK(cm.at(1, 0) == 1);
  CHECK(cm.at(1, 1) == 2);
  CHECK(cm.total() == 4);
  CHECK(cm.row_sum(0) == 1);
  CHECK(cm.row_sum(1) == 3);
}

TEST_CASE("perfect predictions give a diagonal matrix of supports") {
  std::vector<std::size_t> labels = {2, 0, 1, 2, 2, 1};
  ConfusionMatrix cm = confusion(labels, labels, names(3));
  CHECK(cm.trace() == 6);
  CHECK(cm.at(0, 0) == 1);
  CHECK(cm.at(1, 1) == 2);
  CHECK(cm.at(2, 2) == 3);
  CHECK(cm.total() == 6);
}

TEST_CASE("empty input yields a zero matrix") {
  ConfusionMatrix cm = confusion({}, {}, names(3));
  CHECK(cm.total() == 0);
  CHECK(cm.counts.size() == 9);
}

TEST_CASE("confusion rejects out-of-range indices and ragged input") {
  std::vector<std::size_t> good = {0, 1};
  std::vector<std::size_t> bad = {0, 2};
  expect_error(ErrorKind::contract, "out of range",
               [&] { confusion(good, bad, names(2)); });
  expect_error(ErrorKind::contract, "out of range",
               [&] { confusion(bad, good, names(2)); });
  std::vector<std::size_t> shorter = {0};
  expect_error(ErrorKind::contract, "predictions",
               [&] { confusion(shorter, good, names(2)); });
  expect_error(ErrorKind::contract, "empty",
               [&] { confusion(good, good, {}); });
}

TEST_CASE("metrics reproduce the worked two-class example") {
  ConfusionMatrix cm;
  cm.classes = names(2);
  cm.counts = {2, 0, 1, 1};
  Metrics m = metrics(cm);
  check_close(m.per_class[0].precision, 200.0 / 3.0, 1e-12);
  check_close(m.per_class[0].recall, 100.0, 1e-12);
  check_close(m.per_class[0].f1, 80.0, 1e-12);
  check_close(m.per_class[1].precision, 100.0, 1e-12);
  check_close(m.per_class[1].recall, 50.0, 1e-12);
  check_close(m.per_class[1].f1, 200.0 / 3.0, 1e-12);
  check_close(m.accuracy, 75.0, 1e-12);
  check_close(m.macro_f1, 220.0 / 3.0, 1e-12);
  CHECK_FALSE(m.per_class[0].degenerate);
}

TEST_CASE("published per-class recalls aggregate to the published macro "
          "recall within rounding") {
  // class recalls 93,100,91,100,77,91 over balanced supports of 100
  const std::vector<std::uint64_t> diag = {93, 100, 91, 100, 77, 91};
  ConfusionMatrix cm;
  cm.classes = names(6);
  cm.counts.assign(36, 0);
  for (std::size_t c = 0; c < 6; ++c) {
    cm.counts[c * 6 + c] = diag[c];
    cm.counts[c * 6 + (c + 1) % 6] = 100 - diag[c];
  }
  Metrics m = metrics(cm);
  check_close(m.macro_recall, 92.0, 1e-9);
  CHECK(std::abs(m.macro_recall - 92.05) < 0.5);
  // balanced supports force accuracy to track macro recall
  check_close(m.accuracy, m.macro_recall, 1e-12);
}

TEST_CASE("a diagonal matrix scores 100 everywhere") {
  ConfusionMatrix cm;
  cm.classes = names(3);
  cm.counts = {5, 0, 0, 0, 2, 0, 0, 0, 9};
  Metrics m = metrics(cm);
  CHECK(m.accuracy == 100.0);
  CHECK(m.macro_precision == 100.0);
  CHECK(m.macro_recall == 100.0);
  CHECK(m.macro_f1 == 100.0);
  for (const ClassMetrics& c : m.per_class) {
    CHECK(c.f1 == 100.0);
    CHECK_FALSE(c.degenerate);
  }
}

TEST_CASE("accuracy equals macro recall exactly on balanced dyadic supports") {
  ConfusionMatrix cm;
  cm.classes = names(2);
  cm.counts = {3, 1, 2, 2};  // supports 4 and 4
  Metrics m = metrics(cm);
  CHECK(m.accuracy == m.macro_recall);
  CHECK(m.accuracy == 62.5);
}

TEST_CASE("zero-denominator classes score zero and carry the flag") {
  std::vector<std::size_t> preds = {0, 1};
  std::vector<std::size_t> labels = {0, 1};
  Metrics m = metrics(confusion(preds, labels, names(3)));
  CHECK(m.per_class[2].degenerate);
  CHECK(m.per_class[2].precision == 0.0);
  CHECK(m.per_class[2].recall == 0.0);
  CHECK(m.per_class[2].f1 == 0.0);
  CHECK_FALSE(m.per_class[0].degenerate);
  check_close(m.macro_recall, 200.0 / 3.0, 1e-12);
}

TEST_CASE("metrics reject an empty matrix") {
  ConfusionMatrix cm;
  cm.classes = names(2);
  cm.counts = {0, 0, 0, 0};
  expect_error(ErrorKind::contract, "empty", [&] { metrics(cm); });
}

TEST_CASE("metrics agree with a brute-force tally on random instances") {
  Rng rng(97);
  for (int rep = 0; rep < 10; ++rep) {
    const std::size_t k = 2 + rng.below(9);
    const std::size_t n = 1 + rng.below(10000);
    std::vector<std::size_t> preds(n), labels(n);
    for (std::size_t i = 0; i < n; ++i) {
      preds[i] = rng.below(k);
      labels[i] = rng.below(k);
    }
    Metrics m = metrics(confusion(preds, labels, names(k)));
    Tally t = brute_tally(preds, labels, k);
    check_close(m.accuracy, t.accuracy, 1e-12);
    check_close(m.macro_precision, t.macro_p, 1e-12);
    check_close(m.macro_recall, t.macro_r, 1e-12);
    check_close(m.macro_f1, t.macro_f1, 1e-12);
    for (std::size_t c = 0; c < k; ++c) {
      check_close(m.per_class[c].precision, t.precision[c], 1e-12);
      check_close(m.per_class[c].recall, t.recall[c], 1e-12);
      check_close(m.per_class[c].f1, t.f1[c], 1e-12);
    }
  }
}

TEST_CASE("per-class f1 is exactly the harmonic mean of that class's "
          "precision and recall") {
  Rng rng(98);
  std::vector<std::size_t> preds(500), labels(500);
  for (std::size_t i = 0; i < 500; ++i) {
    preds[i] = rng.below(4);
    labels[i] = rng.below(4);
  }
  Metrics m = metrics(confusion(preds, labels, names(4)));
  for (const ClassMetrics& c : m.per_class) {
    const double expect =
        c.precision + c.recall == 0.0
            ? 0.0
            : 2.0 * c.precision * c.recall / (c.precision + c.recall);
    CHECK(c.f1 == expect);
  }
}

TEST_CASE("permuting the class order permutes per-class metrics and "
          "preserves the macros") {
  Rng rng(99);
  const std::size_t k = 5, n = 400;
  std::vector<std::size_t> preds(n), labels(n);
  for (std::size_t i = 0; i < n; ++i) {
    preds[i] = rng.below(k);
    labels[i] = rng.below(k);
  }
  const std::vector<std::size_t> perm = {3, 0, 4, 1, 2};
  std::vector<std::size_t> p2(n), l2(n);
  for (std::size_t i = 0; i < n; ++i) {
    p2[i] = perm[preds[i]];
    l2[i] = perm[labels[i]];
  }
  Metrics a = metrics(confusion(preds, labels, names(k)));
  Metrics b = metrics(confusion(p2, l2, names(k)));
  check_close(a.macro_precision, b.macro_precision, 1e-12);
  check_close(a.macro_recall, b.macro_recall, 1e-12);
  check_close(a.macro_f1, b.macro_f1, 1e-12);
  check_close(a.accuracy, b.accuracy, 1e-12);
  for (std::size_t c = 0; c < k; ++c) {
    check_close(a.per_class[c].precision, b.per_class[perm[c]].precision,
                1e-12);
    check_close(a.per_class[c].recall, b.per_class[perm[c]].recall, 1e-12);
    check_close(a.per_class[c].f1, b.per_class[perm[c]].f1, 1e-12);
  }
}

TEST_CASE("benchmark reports ordered finite statistics and analytic memory") {
  models::Model m = models::build_model(small_bilstm(1));
  BenchmarkStats st = benchmark_inference(m, 40);
  CHECK(st.repetitions == 40);
  CHECK(st.mean_ms > 0.0);
  CHECK(st.median_ms > 0.0);
  CHECK(st.p95_ms >= st.median_ms);
  CHECK(std::isfinite(st.mean_ms));
  const double expected_mb =
      static_cast<double>(m.param_count() * sizeof(double)) /
      (1024.0 * 1024.0);
  CHECK(st.memory_mb > expected_mb);  // workspace adds on top of params

  BenchmarkStats f32 = benchmark_inference(m, 40, Precision::f32);
  CHECK(f32.memory_mb < st.memory_mb);

  expect_error(ErrorKind::contract, "repetitions",
               [&] { benchmark_inference(m, 29); });
}

TEST_CASE("more recurrent layers cost more latency") {
  models::Model one = models::build_model(small_bilstm(1));
  models::Model three = models::build_model(small_bilstm(3));
  BenchmarkStats a = benchmark_inference(one, 60);
  BenchmarkStats b = benchmark_inference(three, 60);
  CHECK(a.median_ms < b.median_ms);
  CHECK(a.memory_mb < b.memory_mb);
}

TEST_CASE("confusion csv export is exact and byte-stable") {
  EvalReport r;
  r.cm.classes = {"walk", "run"};
  r.cm.counts = {9, 1, 2, 8};
  r.metrics = metrics(r.cm);

  const fs::path p1 = temp_path("har_eval_cm1.csv");
  const fs::path p2 = temp_path("har_eval_cm2.csv");
  export_report(r, p1.string(), ReportFormat::csv);
  export_report(r, p2.string(), ReportFormat::csv);

  auto slurp = [](const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    return std::string(std::istreambuf_iterator<char>(in), {});
  };
  const std::string body = slurp(p1);
  CHECK(body ==
        "true\\pred,walk,run\n"
        "walk,9,1\n"
        "run,2,8\n");
  CHECK(body == slurp(p2));
  fs::remove(p1);
  fs::remove(p2);
}

TEST_CASE("metrics json export round-trips at four decimals") {
  EvalReport r;
  r.cm.classes = {"walk", "run"};
  r.cm.counts = {2, 0, 1, 1};
  r.metrics = metrics(r.cm);

  const fs::path p = temp_path("har_eval_metrics.json");
  export_report(r, p.string(), ReportFormat::json);
  std::ifstream in(p);
  nlohmann::json j;
  in >> j;
  check_close(j.at("accuracy").get<double>(), r.metrics.accuracy, 5e-5);
  check_close(j.at("macro_f1").get<double>(), r.metrics.macro_f1, 5e-5);
  check_close(j.at("precision.walk").get<double>(),
              r.metrics.per_class[0].precision, 5e-5);
  check_close(j.at("recall.run").get<double>(),
              r.metrics.per_class[1].recall, 5e-5);
  CHECK_FALSE(j.contains("latency_mean_ms"));

  r.benchmark = BenchmarkStats{1.0, 1.0, 1.5, 2.25, 30};
  export_report(r, p.string(), ReportFormat::json);
  std::ifstream in2(p);
  nlohmann::json j2;
  in2 >> j2;
  check_close(j2.at("latency_p95_ms").get<double>(), 1.5, 5e-5);
  check_close(j2.at("memory_mb").get<double>(), 2.25, 5e-5);
  fs::remove(p);
}

TEST_CASE("export to an unwritable path raises an io error") {
  EvalReport r;
  r.cm.classes = {"a", "b"};
  r.cm.counts = {1, 0, 0, 1};
  r.metrics = metrics(r.cm);
  const fs::path blocker = temp_path("har_eval_blocker");
  std::ofstream(blocker).put('x');
  const std::string bad = (blocker / "report.json").string();
  expect_error(ErrorKind::io, "cannot write",
               [&] { export_report(r, bad, ReportFormat::json); });
  fs::remove(blocker);
}
