#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "har/models.hpp"

namespace har::eval {

// Rows are true classes, columns predictions.
struct ConfusionMatrix {
  std::vector<std::string> classes;
  std::vector<std::uint64_t> counts;  // row-major [true][pred]

  std::size_t k() const { return classes.size(); }
  std::uint64_t at(std::size_t t, std::size_t p) const {
    return counts[t * k() + p];
  }
  std::uint64_t row_sum(std::size_t t) const;
  std::uint64_t col_sum(std::size_t p) const;
  std::uint64_t trace() const;
  std::uint64_t total() const;
};

ConfusionMatrix confusion(std::span<const std::size_t> predictions,
                          std::span<const std::size_t> labels,
                          std::vector<std::string> classes);

// All rates in percent. `degenerate` marks classes where a zero
// denominator forced the 0 convention.
struct ClassMetrics {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  bool degenerate = false;
};

struct Metrics {
  double accuracy = 0.0;
  double macro_precision = 0.0;
  double macro_recall = 0.0;
  double macro_f1 = 0.0;
  std::vector<ClassMetrics> per_class;
};

// Precision/recall per class from the matrix; overall values are
// unweighted macro averages, accuracy is trace/total.
Metrics metrics(const ConfusionMatrix& cm);

enum class Precision { f32, f64 };

struct BenchmarkStats {
  double mean_ms = 0.0;
  double median_ms = 0.0;
  double p95_ms = 0.0;
  double memory_mb = 0.0;  // analytic: parameters + inference workspace
  std::size_t repetitions = 0;
};

// Times graph-free single-sample forward passes. At least 30 timed
// repetitions after 5 discarded warm-up runs; p95 is nearest-rank.
BenchmarkStats benchmark_inference(const models::Model& model,
                                   std::size_t repetitions,
                                   Precision precision = Precision::f64);

struct EvalReport {
  Metrics metrics;
  ConfusionMatrix cm;
  std::optional<BenchmarkStats> benchmark;
};

enum class ReportFormat { json, csv };

// csv: the confusion matrix, first cell "true\pred", names as headers.
// json: flat metrics object, fixed key order, 4-decimal values.
// Identical reports produce byte-identical files.
void export_report(const EvalReport& report, const std::string& path,
                   ReportFormat format);

}  // namespace har::eval
