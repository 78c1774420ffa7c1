#include "har/experiment.hpp"

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <set>
#include <sstream>

#include "har/dsp.hpp"
#include "har/error.hpp"
#include "har/infer.hpp"
#include "har/rng.hpp"
#include "json_util.hpp"

namespace har::experiment {

namespace fs = std::filesystem;
using nlohmann::json;

// ---------------------------------------------------------------------------
// Config

namespace {

json synth_to_json(const data::SynthConfig& s) {
  json j{{"n_classes", s.n_classes},
         {"per_class_train", s.per_class_train},
         {"per_class_val", s.per_class_val},
         {"per_class_test", s.per_class_test},
         {"channels", s.channels},
         {"time", s.time},
         {"sample_rate_hz", s.sample_rate_hz},
         {"noise_std", s.noise_std},
         {"base_hz", s.base_hz},
         {"seed", s.seed},
         {"name", s.name}};
  j["class_names"] = s.class_names;
  return j;
}

data::SynthConfig synth_from_json(const json& j) {
  const std::string ctx = "dataset.synth";
  jsonu::check_keys(j, ctx,
                    {"n_classes", "per_class_train", "per_class_val",
                     "per_class_test", "channels", "time", "sample_rate_hz",
                     "noise_std", "base_hz", "seed", "name", "class_names"});
  data::SynthConfig s;
  s.n_classes = jsonu::get_uint(j, "n_classes", s.n_classes, ctx);
  s.per_class_train = jsonu::get_uint(j, "per_class_train", s.per_class_train, ctx);
  s.per_class_val = jsonu::get_uint(j, "per_class_val", s.per_class_val, ctx);
  s.per_class_test = jsonu::get_uint(j, "per_class_test", s.per_class_test, ctx);
  s.channels = jsonu::get_uint(j, "channels", s.channels, ctx);
  s.time = jsonu::get_uint(j, "time", s.time, ctx);
  s.sample_rate_hz = jsonu::get_num(j, "sample_rate_hz", s.sample_rate_hz, ctx);
  s.noise_std = jsonu::get_num(j, "noise_std", s.noise_std, ctx);
  s.base_hz = jsonu::get_num(j, "base_hz", s.base_hz, ctx);
  s.seed = jsonu::get_uint(j, "seed", s.seed, ctx);
  s.name = jsonu::get_str(j, "name", s.name, ctx);
  if (j.contains("class_names")) {
    const json& names = j.at("class_names");
    if (!names.is_array()) {
      throw_config(ctx + ".class_names: expected an array");
    }
    s.class_names.clear();
    for (const json& n : names) {
      if (!n.is_string()) {
        throw_config(ctx + ".class_names: expected strings");
      }
      s.class_names.push_back(n.get<std::string>());
    }
  }
  return s;
}

}  // namespace

void ExperimentConfig::validate() const {
  if (synth && !dataset_path.empty()) {
    throw_config("dataset: give either a path or a synth block, not both");
  }
  if (!synth && dataset_path.empty()) {
    throw_config("dataset: needs a path or a synth block");
  }
  if (synth) synth->validate();
  if (!preprocessing.is_array()) {
    throw_config("preprocessing: expected an array of steps");
  }
  model.validate();
  training.validate();
}

json ExperimentConfig::to_json() const {
  json dataset;
  if (synth) {
    dataset["synth"] = synth_to_json(*synth);
  } else {
    dataset["path"] = dataset_path;
  }
  return json{{"dataset", dataset},
              {"preprocessing", preprocessing},
              {"model", model.to_json()},
              {"training", training.to_json()},
              {"output_dir", output_dir},
              {"seed", seed}};
}

ExperimentConfig ExperimentConfig::from_json(const json& j) {
  jsonu::check_keys(j, "experiment",
                    {"dataset", "preprocessing", "model", "training",
                     "output_dir", "seed"});
  if (!j.contains("dataset")) {
    throw_config("experiment.dataset: missing");
  }
  const json& ds = j.at("dataset");
  jsonu::check_keys(ds, "dataset", {"path", "synth"});

  ExperimentConfig c;
  c.seed = jsonu::get_uint(j, "seed", 0, "experiment");
  c.output_dir = jsonu::get_str(j, "output_dir", "", "experiment");

  if (ds.contains("synth")) {
    c.synth = synth_from_json(ds.at("synth"));
    if (!ds.at("synth").contains("seed")) {
      c.synth->seed = mix_seed(c.seed, hash_name("data.synth"));
    }
  }
  c.dataset_path = jsonu::get_str(ds, "path", "", "dataset");

  if (j.contains("preprocessing")) {
    c.preprocessing = j.at("preprocessing");
  }
  const json model_block = j.contains("model") ? j.at("model") : json::object();
  c.model = models::ModelConfig::from_json(model_block, "model");
  if (!model_block.contains("init_seed")) {
    c.model.init_seed = mix_seed(c.seed, hash_name("model.init"));
  }
  const json train_block =
      j.contains("training") ? j.at("training") : json::object();
  c.training = training::TrainConfig::from_json(train_block, "training");
  if (!train_block.contains("shuffle_seed")) {
    c.training.shuffle_seed = mix_seed(c.seed, hash_name("train.shuffle"));
  }
  c.validate();
  return c;
}

ExperimentConfig ExperimentConfig::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw_io("cannot read config " + path);
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw_config("config " + path + ": " + e.what());
  }
  return from_json(j);
}

// ---------------------------------------------------------------------------
// Shared plumbing

namespace {

std::string fixed4(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.4f", v);
  return buf;
}

void write_text(const fs::path& path, const std::string& body) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out || !(out << body) || !out.flush()) {
    throw_io("cannot write " + path.string());
  }
}

void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw_io("cannot create " + dir.string() + ": " + ec.message());
}

fs::path need_output_dir(const ExperimentConfig& cfg) {
  if (cfg.output_dir.empty()) {
    throw_config("output_dir: required for this command");
  }
  fs::path dir(cfg.output_dir);
  ensure_dir(dir);
  return dir;
}

data::Dataset load_source(const ExperimentConfig& cfg) {
  if (cfg.synth) return data::synth_generate(*cfg.synth);
  return data::load_dataset(cfg.dataset_path);
}

dsp::Pipeline build_pipeline(const ExperimentConfig& cfg, double rate_hz) {
  return dsp::Pipeline::from_json(cfg.preprocessing, rate_hz);
}

data::Dataset apply_pipeline(const data::Dataset& in,
                             const dsp::Pipeline& pipe) {
  if (pipe.empty()) return in;
  data::Dataset out;
  out.name = in.name;
  out.classes = in.classes;
  out.sample_rate_hz = in.sample_rate_hz;
  out.provenance = json{{"source", in.name},
                        {"preprocessing", pipe.resolved()}};
  bool shaped = false;
  for (const auto& [split, samples] : in.splits) {
    std::vector<data::CsiSample>& dst = out.splits[split];
    for (const data::CsiSample& s : samples) {
      std::vector<double> buf(s.values.begin(), s.values.end());
      std::vector<dsp::Pipeline::Out> outs =
          pipe.apply(buf.data(), in.channels, in.time);
      for (const dsp::Pipeline::Out& o : outs) {
        if (!shaped) {
          out.channels = o.channels;
          out.time = o.time;
          shaped = true;
        } else if (o.channels != out.channels || o.time != out.time) {
          throw_contract("preprocessing produced mixed shapes: " +
                         std::to_string(o.channels) + "x" +
                         std::to_string(o.time) + " vs " +
                         std::to_string(out.channels) + "x" +
                         std::to_string(out.time));
        }
        data::CsiSample ns;
        ns.values.assign(o.values.begin(), o.values.end());
        ns.label = s.label;
        ns.source_id = outs.size() > 1
                           ? s.source_id + "#" + std::to_string(o.window_offset)
                           : s.source_id;
        dst.push_back(std::move(ns));
      }
    }
  }
  return out;
}

void check_dims(const models::ModelConfig& mc, const data::Dataset& ds) {
  if (mc.input_channels != ds.channels || mc.input_time != ds.time ||
      mc.n_classes != ds.classes.size()) {
    throw_config("model expects " + std::to_string(mc.input_channels) + "x" +
                 std::to_string(mc.input_time) + " with " +
                 std::to_string(mc.n_classes) + " classes, dataset provides " +
                 std::to_string(ds.channels) + "x" + std::to_string(ds.time) +
                 " with " + std::to_string(ds.classes.size()));
  }
}

std::vector<std::string> ordered_splits(const data::Dataset& ds) {
  std::vector<std::string> names;
  for (const char* s : {"train", "val", "test"}) {
    if (ds.has_split(s)) names.push_back(s);
  }
  for (const auto& [name, _] : ds.splits) {
    if (std::find(names.begin(), names.end(), name) == names.end()) {
      names.push_back(name);
    }
  }
  return names;
}

std::string counts_table(const data::Dataset& ds) {
  std::ostringstream out;
  out << ds.name << ": " << ds.classes.size() << " classes, " << ds.channels
      << " channels x " << ds.time << " steps @ " << ds.sample_rate_hz
      << " Hz\n";
  const std::vector<std::string> splits = ordered_splits(ds);
  std::size_t width = 5;
  for (const std::string& c : ds.classes) width = std::max(width, c.size());

  out << std::left << std::setw(static_cast<int>(width) + 2) << "class";
  for (const std::string& s : splits) {
    out << std::right << std::setw(8) << s;
  }
  out << '\n';
  std::vector<std::size_t> totals(splits.size(), 0);
  for (std::size_t c = 0; c < ds.classes.size(); ++c) {
    out << std::left << std::setw(static_cast<int>(width) + 2)
        << ds.classes[c];
    for (std::size_t s = 0; s < splits.size(); ++s) {
      const std::size_t n = ds.class_counts(splits[s])[c];
      totals[s] += n;
      out << std::right << std::setw(8) << n;
    }
    out << '\n';
  }
  out << std::left << std::setw(static_cast<int>(width) + 2) << "total";
  for (std::size_t t : totals) out << std::right << std::setw(8) << t;
  out << '\n';
  return out.str();
}

void write_snapshot(const ExperimentConfig& cfg, const dsp::Pipeline& pipe,
                    const fs::path& dir) {
  json j = cfg.to_json();
  j["preprocessing"] = pipe.resolved();
  write_text(dir / "resolved_config.json", j.dump(2) + "\n");
}

}  // namespace

// ---------------------------------------------------------------------------
// Commands

std::string cmd_synth(const ExperimentConfig& cfg) {
  cfg.validate();
  if (!cfg.synth) {
    throw_config("dataset.synth: the synth command needs a synth block");
  }
  const fs::path dir = need_output_dir(cfg);
  // validates the step list early even though synth does not run it
  dsp::Pipeline pipe = build_pipeline(cfg, cfg.synth->sample_rate_hz);
  data::Dataset ds = data::synth_generate(*cfg.synth);
  data::save_dataset(ds, dir / "dataset");
  write_snapshot(cfg, pipe, dir);
  return counts_table(ds);
}

std::string cmd_inspect(const std::string& dataset_dir) {
  return counts_table(data::load_dataset(dataset_dir));
}

PreprocessSummary cmd_preprocess(const ExperimentConfig& cfg) {
  cfg.validate();
  const fs::path dir = need_output_dir(cfg);
  data::Dataset src = load_source(cfg);
  dsp::Pipeline pipe = build_pipeline(cfg, src.sample_rate_hz);
  data::Dataset out = apply_pipeline(src, pipe);
  data::save_dataset(out, dir / "preprocessed");
  write_snapshot(cfg, pipe, dir);
  PreprocessSummary sum;
  sum.channels = out.channels;
  sum.time = out.time;
  for (const auto& [name, samples] : out.splits) {
    sum.split_counts[name] = samples.size();
  }
  sum.dataset_dir = (dir / "preprocessed").string();
  return sum;
}

TrainOutcome cmd_train(const ExperimentConfig& cfg) {
  cfg.validate();
  const fs::path dir = need_output_dir(cfg);
  data::Dataset src = load_source(cfg);
  dsp::Pipeline pipe = build_pipeline(cfg, src.sample_rate_hz);
  data::Dataset ds = apply_pipeline(src, pipe);
  check_dims(cfg.model, ds);

  models::Model init = models::build_model(cfg.model);
  training::TrainResult result = training::train(init, ds, cfg.training);

  TrainOutcome out;
  out.checkpoint_dir = (dir / "checkpoint").string();
  out.history_csv = (dir / "history.csv").string();
  out.config_snapshot = (dir / "resolved_config.json").string();
  training::save_checkpoint(training::to_checkpoint(result),
                            dir / "checkpoint");
  write_text(out.history_csv, training::history_to_csv(result.history));
  write_snapshot(cfg, pipe, dir);
  out.history = result.history;
  out.best_val_loss = result.best_val_loss;

  if (result.history.stop_reason == training::StopReason::divergence) {
    throw_numeric("training diverged after epoch " +
                  std::to_string(result.epochs_run) +
                  "; artifacts preserved in " + dir.string());
  }
  return out;
}

eval::EvalReport cmd_eval(const ExperimentConfig& cfg,
                          const std::string& checkpoint_dir,
                          const std::string& split) {
  cfg.validate();
  const fs::path dir = need_output_dir(cfg);
  const fs::path ck_dir = checkpoint_dir.empty()
                              ? dir / "checkpoint"
                              : fs::path(checkpoint_dir);
  if (!fs::exists(ck_dir / "manifest.json")) {
    throw_config("checkpoint not found: " + ck_dir.string());
  }
  training::Checkpoint ck = training::load_checkpoint(ck_dir);
  const models::Model& model = ck.best ? *ck.best : ck.model;

  data::Dataset src = load_source(cfg);
  dsp::Pipeline pipe = build_pipeline(cfg, src.sample_rate_hz);
  data::Dataset ds = apply_pipeline(src, pipe);
  if (!ds.has_split(split)) {
    throw_config("split \"" + split + "\" not found in dataset \"" + ds.name +
                 "\"");
  }
  check_dims(model.config(), ds);

  const std::vector<data::CsiSample>& samples = ds.split(split);
  std::vector<std::size_t> preds =
      training::predict(model, samples, cfg.training.batch_size);
  std::vector<std::size_t> labels(samples.size());
  for (std::size_t i = 0; i < samples.size(); ++i) {
    labels[i] = static_cast<std::size_t>(samples[i].label);
  }

  eval::EvalReport report;
  report.cm = eval::confusion(preds, labels, ds.classes);
  report.metrics = eval::metrics(report.cm);
  eval::export_report(report, (dir / "metrics.json").string(),
                      eval::ReportFormat::json);
  eval::export_report(report, (dir / "confusion.csv").string(),
                      eval::ReportFormat::csv);
  return report;
}

eval::BenchmarkStats cmd_bench(const ExperimentConfig& cfg,
                               std::size_t repetitions,
                               eval::Precision precision) {
  models::Model model = models::build_model(cfg.model);
  eval::BenchmarkStats st =
      eval::benchmark_inference(model, repetitions, precision);
  if (!cfg.output_dir.empty()) {
    const fs::path dir = need_output_dir(cfg);
    std::ostringstream body;
    body << "{\n";
    body << "  \"latency_mean_ms\": " << fixed4(st.mean_ms) << ",\n";
    body << "  \"latency_median_ms\": " << fixed4(st.median_ms) << ",\n";
    body << "  \"latency_p95_ms\": " << fixed4(st.p95_ms) << ",\n";
    body << "  \"memory_mb\": " << fixed4(st.memory_mb) << ",\n";
    body << "  \"repetitions\": " << st.repetitions << ",\n";
    body << "  \"precision\": \""
         << (precision == eval::Precision::f32 ? "f32" : "f64") << "\"\n";
    body << "}\n";
    write_text(dir / "bench.json", body.str());
  }
  return st;
}

namespace {

json load_metrics_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw_io("cannot read metrics " + path);
  try {
    json j;
    in >> j;
    return j;
  } catch (const json::exception& e) {
    throw_io("metrics " + path + ": " + e.what());
  }
}

std::set<std::string> roster(const json& j) {
  std::set<std::string> names;
  for (auto it = j.begin(); it != j.end(); ++it) {
    if (it.key().rfind("recall.", 0) == 0) {
      names.insert(it.key().substr(7));
    }
  }
  return names;
}

double metric(const json& j, const std::string& key, const std::string& path) {
  if (!j.contains(key) || !j.at(key).is_number()) {
    throw_io("metrics " + path + ": missing \"" + key + "\"");
  }
  return j.at(key).get<double>();
}

}  // namespace

std::string cmd_compare(const std::string& metrics_a,
                        const std::string& metrics_b) {
  const json a = load_metrics_file(metrics_a);
  const json b = load_metrics_file(metrics_b);
  const std::set<std::string> ra = roster(a), rb = roster(b);
  if (ra != rb) {
    throw_config("compare: class rosters differ between " + metrics_a +
                 " and " + metrics_b);
  }
  std::ostringstream out;
  out << "metric,A,B,delta(B-A)\n";
  auto row = [&](const std::string& label, const std::string& key) {
    const double va = metric(a, key, metrics_a);
    const double vb = metric(b, key, metrics_b);
    out << label << ',' << fixed4(va) << ',' << fixed4(vb) << ','
        << fixed4(vb - va) << '\n';
  };
  row("Accuracy(%)", "accuracy");
  row("Precision(%)", "macro_precision");
  row("Recall(%)", "macro_recall");
  row("F1-Score(%)", "macro_f1");
  for (const std::string& name : ra) {
    row("precision." + name + "(%)", "precision." + name);
    row("recall." + name + "(%)", "recall." + name);
    row("f1." + name + "(%)", "f1." + name);
  }
  return out.str();
}

}  // namespace har::experiment
