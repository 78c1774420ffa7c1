#include "har/c_api.h"

#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <fstream>
#include <memory>
#include <sstream>
#include <string>

#include <json.hpp>

#include "har/error.hpp"
#include "har/experiment.hpp"

using har::experiment::ExperimentConfig;

extern "C" struct har_config {
  nlohmann::json raw;
  ExperimentConfig parsed;
};

namespace {

thread_local std::string g_last_error;

char* dup_string(const std::string& s) {
  char* p = static_cast<char*>(std::malloc(s.size() + 1));
  if (p) std::memcpy(p, s.c_str(), s.size() + 1);
  return p;
}

void emit(char** out, const std::string& body) {
  if (out) *out = dup_string(body);
}

template <typename F>
har_status guarded(F&& f) {
  try {
    f();
    return HAR_OK;
  } catch (const har::Error& e) {
    g_last_error = e.what();
    switch (e.kind()) {
      case har::ErrorKind::config:
        return HAR_ERR_CONFIG;
      case har::ErrorKind::io:
        return HAR_ERR_IO;
      case har::ErrorKind::numeric:
        return HAR_ERR_NUMERIC;
      case har::ErrorKind::contract:
        return HAR_ERR_CONTRACT;
    }
    return HAR_ERR_CONTRACT;
  } catch (const std::exception& e) {
    g_last_error = e.what();
    return HAR_ERR_CONTRACT;
  } catch (...) {
    g_last_error = "unknown error";
    return HAR_ERR_CONTRACT;
  }
}

har_status fail_contract(const std::string& msg) {
  g_last_error = msg;
  return HAR_ERR_CONTRACT;
}

std::string fixed4(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.4f", v);
  return buf;
}

nlohmann::json parse_text(const std::string& text, const std::string& what) {
  try {
    return nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    har::throw_config(what + ": " + e.what());
  }
}

}  // namespace

extern "C" {

const char* har_version(void) { return "0.1.0"; }

const char* har_last_error(void) { return g_last_error.c_str(); }

void har_string_free(char* s) { std::free(s); }

har_status har_config_load(const char* path, har_config** out) {
  if (!path || !out) return fail_contract("har_config_load: null argument");
  return guarded([&] {
    std::ifstream in(path);
    if (!in) har::throw_io(std::string("cannot read config ") + path);
    std::stringstream buf;
    buf << in.rdbuf();
    auto cfg = std::make_unique<har_config>();
    cfg->raw = parse_text(buf.str(), std::string("config ") + path);
    cfg->parsed = ExperimentConfig::from_json(cfg->raw);
    *out = cfg.release();
  });
}

har_status har_config_parse(const char* json_text, har_config** out) {
  if (!json_text || !out) {
    return fail_contract("har_config_parse: null argument");
  }
  return guarded([&] {
    auto cfg = std::make_unique<har_config>();
    cfg->raw = parse_text(json_text, "config");
    cfg->parsed = ExperimentConfig::from_json(cfg->raw);
    *out = cfg.release();
  });
}

void har_config_free(har_config* config) { delete config; }

har_status har_config_render(const har_config* config, char** json_out) {
  if (!config || !json_out) {
    return fail_contract("har_config_render: null argument");
  }
  return guarded([&] { emit(json_out, config->parsed.to_json().dump(2) + "\n"); });
}

har_status har_config_set_output_dir(har_config* config, const char* dir) {
  if (!config || !dir) {
    return fail_contract("har_config_set_output_dir: null argument");
  }
  return guarded([&] {
    config->raw["output_dir"] = dir;
    config->parsed = ExperimentConfig::from_json(config->raw);
  });
}

har_status har_config_set_seed(har_config* config, uint64_t seed) {
  if (!config) return fail_contract("har_config_set_seed: null config");
  return guarded([&] {
    config->raw["seed"] = seed;
    config->parsed = ExperimentConfig::from_json(config->raw);
  });
}

har_status har_cmd_synth(const har_config* config, char** table_out) {
  if (!config) return fail_contract("har_cmd_synth: null config");
  return guarded(
      [&] { emit(table_out, har::experiment::cmd_synth(config->parsed)); });
}

har_status har_cmd_inspect(const char* dataset_dir, char** table_out) {
  if (!dataset_dir) return fail_contract("har_cmd_inspect: null path");
  return guarded(
      [&] { emit(table_out, har::experiment::cmd_inspect(dataset_dir)); });
}

har_status har_cmd_preprocess(const har_config* config, char** summary_out) {
  if (!config) return fail_contract("har_cmd_preprocess: null config");
  return guarded([&] {
    har::experiment::PreprocessSummary sum =
        har::experiment::cmd_preprocess(config->parsed);
    std::ostringstream out;
    out << "wrote " << sum.dataset_dir << "\n";
    out << "shape: " << sum.channels << " channels x " << sum.time
        << " steps\n";
    for (const auto& [split, n] : sum.split_counts) {
      out << split << ": " << n << "\n";
    }
    emit(summary_out, out.str());
  });
}

har_status har_cmd_train(const har_config* config, char** summary_out) {
  if (!config) return fail_contract("har_cmd_train: null config");
  return guarded([&] {
    har::experiment::TrainOutcome out =
        har::experiment::cmd_train(config->parsed);
    std::ostringstream s;
    s << "epochs: " << out.history.epochs.size() << "\n";
    s << "best_epoch: " << out.history.best_epoch << "\n";
    s << "best_val_loss: " << fixed4(out.best_val_loss) << "\n";
    s << "stop: " << har::training::stop_reason_name(out.history.stop_reason)
      << "\n";
    s << "checkpoint: " << out.checkpoint_dir << "\n";
    s << "history: " << out.history_csv << "\n";
    s << "config: " << out.config_snapshot << "\n";
    emit(summary_out, s.str());
  });
}

har_status har_cmd_eval(const har_config* config, const char* checkpoint_dir,
                        const char* split, char** summary_out) {
  if (!config || !split) return fail_contract("har_cmd_eval: null argument");
  return guarded([&] {
    har::eval::EvalReport rep = har::experiment::cmd_eval(
        config->parsed, checkpoint_dir ? checkpoint_dir : "", split);
    std::ostringstream s;
    s << "split: " << split << "\n";
    s << "samples: " << rep.cm.total() << "\n";
    s << "accuracy: " << fixed4(rep.metrics.accuracy) << "\n";
    s << "macro_precision: " << fixed4(rep.metrics.macro_precision) << "\n";
    s << "macro_recall: " << fixed4(rep.metrics.macro_recall) << "\n";
    s << "macro_f1: " << fixed4(rep.metrics.macro_f1) << "\n";
    emit(summary_out, s.str());
  });
}

har_status har_cmd_bench(const har_config* config, size_t repetitions,
                         int use_f32, char** summary_out) {
  if (!config) return fail_contract("har_cmd_bench: null config");
  return guarded([&] {
    har::eval::BenchmarkStats st = har::experiment::cmd_bench(
        config->parsed, repetitions,
        use_f32 ? har::eval::Precision::f32 : har::eval::Precision::f64);
    std::ostringstream s;
    s << "precision: " << (use_f32 ? "f32" : "f64") << "\n";
    s << "repetitions: " << st.repetitions << "\n";
    s << "latency_mean_ms: " << fixed4(st.mean_ms) << "\n";
    s << "latency_median_ms: " << fixed4(st.median_ms) << "\n";
    s << "latency_p95_ms: " << fixed4(st.p95_ms) << "\n";
    s << "memory_mb: " << fixed4(st.memory_mb) << "\n";
    emit(summary_out, s.str());
  });
}

har_status har_cmd_compare(const char* metrics_a, const char* metrics_b,
                           char** table_out) {
  if (!metrics_a || !metrics_b) {
    return fail_contract("har_cmd_compare: null path");
  }
  return guarded([&] {
    emit(table_out, har::experiment::cmd_compare(metrics_a, metrics_b));
  });
}

}  // extern "C"
