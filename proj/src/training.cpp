#include "har/training.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>

#include "har/error.hpp"
#include "har/rng.hpp"
#include "json_util.hpp"

static_assert(std::endian::native == std::endian::little,
              "checkpoint binaries are little-endian; byte swapping is not "
              "implemented");

namespace har::training {

namespace fs = std::filesystem;
using models::Model;
using nlohmann::json;

// ---------------------------------------------------------------------------
// Config

void TrainConfig::validate() const {
  if (!(learning_rate > 0.0)) {
    throw_config("training: learning_rate must be positive");
  }
  if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0)) {
    throw_config("training: betas must lie in [0, 1)");
  }
  if (!(epsilon > 0.0)) throw_config("training: epsilon must be positive");
  if (batch_size == 0) throw_config("training: batch_size must be positive");
  if (max_epochs == 0) throw_config("training: max_epochs must be positive");
  if (patience == 0) throw_config("training: patience must be at least 1");
  if (!(min_delta >= 0.0)) {
    throw_config("training: min_delta must be non-negative");
  }
  if (!(clip_norm >= 0.0)) {
    throw_config("training: clip_norm must be non-negative");
  }
}

json TrainConfig::to_json() const {
  return json{{"learning_rate", learning_rate},
              {"beta1", beta1},
              {"beta2", beta2},
              {"epsilon", epsilon},
              {"batch_size", batch_size},
              {"max_epochs", max_epochs},
              {"patience", patience},
              {"min_delta", min_delta},
              {"clip_norm", clip_norm},
              {"shuffle_seed", shuffle_seed}};
}

TrainConfig TrainConfig::from_json(const json& j, const std::string& ctx) {
  jsonu::check_keys(j, ctx,
                    {"learning_rate", "beta1", "beta2", "epsilon",
                     "batch_size", "max_epochs", "patience", "min_delta",
                     "clip_norm", "shuffle_seed"});
  TrainConfig c;
  c.learning_rate = jsonu::get_num(j, "learning_rate", c.learning_rate, ctx);
  c.beta1 = jsonu::get_num(j, "beta1", c.beta1, ctx);
  c.beta2 = jsonu::get_num(j, "beta2", c.beta2, ctx);
  c.epsilon = jsonu::get_num(j, "epsilon", c.epsilon, ctx);
  c.batch_size = jsonu::get_uint(j, "batch_size", c.batch_size, ctx);
  c.max_epochs = jsonu::get_uint(j, "max_epochs", c.max_epochs, ctx);
  c.patience = jsonu::get_uint(j, "patience", c.patience, ctx);
  c.min_delta = jsonu::get_num(j, "min_delta", c.min_delta, ctx);
  c.clip_norm = jsonu::get_num(j, "clip_norm", c.clip_norm, ctx);
  c.shuffle_seed = jsonu::get_uint(j, "shuffle_seed", c.shuffle_seed, ctx);
  c.validate();
  return c;
}

// ---------------------------------------------------------------------------
// Adam

AdamState AdamState::for_model(const Model& model) {
  AdamState st;
  st.slots.reserve(model.parameters().size());
  for (const auto& [_, t] : model.parameters()) {
    Slot s;
    s.m.assign(t.size(), 0.0);
    s.v.assign(t.size(), 0.0);
    st.slots.push_back(std::move(s));
  }
  return st;
}

void adam_step(Model& model, AdamState& state, const TrainConfig& config,
               double grad_scale) {
  const auto& params = model.parameters();
  if (state.slots.size() != params.size()) {
    throw_contract("adam_step: state has " +
                   std::to_string(state.slots.size()) + " slots for " +
                   std::to_string(params.size()) + " parameters");
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    const Tensor& p = params[i].second;
    if (state.slots[i].m.size() != p.size()) {
      throw_contract("adam_step: slot \"" + params[i].first +
                     "\" shape drifted from its parameter");
    }
    if (!p.has_grad()) continue;  // no graph touched it: gradient is zero
    for (double g : p.grad()) {
      if (!std::isfinite(g)) {
        throw_numeric("adam_step: non-finite gradient in \"" +
                      params[i].first + "\"");
      }
    }
  }

  state.t += 1;
  const double bc1 = 1.0 - std::pow(config.beta1, static_cast<double>(state.t));
  const double bc2 = 1.0 - std::pow(config.beta2, static_cast<double>(state.t));
  for (std::size_t i = 0; i < params.size(); ++i) {
    Tensor p = params[i].second;  // handle copy; storage is shared
    auto theta = p.values_mut();
    auto& slot = state.slots[i];
    const bool has = p.has_grad();
    auto grad = has ? p.grad() : std::span<const double>();
    for (std::size_t n = 0; n < theta.size(); ++n) {
      const double g = has ? grad[n] * grad_scale : 0.0;
      slot.m[n] = config.beta1 * slot.m[n] + (1.0 - config.beta1) * g;
      slot.v[n] = config.beta2 * slot.v[n] + (1.0 - config.beta2) * g * g;
      const double mhat = slot.m[n] / bc1;
      const double vhat = slot.v[n] / bc2;
      theta[n] -= config.learning_rate * mhat /
                  (std::sqrt(vhat) + config.epsilon);
    }
  }
}

// ---------------------------------------------------------------------------
// Early stopping

EarlyStopper::EarlyStopper(std::size_t patience, double min_delta)
    : patience_(patience), min_delta_(min_delta) {
  if (patience_ == 0) throw_config("early stopping: patience must be >= 1");
  if (!(min_delta_ >= 0.0)) {
    throw_config("early stopping: min_delta must be non-negative");
  }
}

bool EarlyStopper::update(double val_loss) {
  ++count_;
  if (val_loss < best_ - min_delta_) {
    best_ = val_loss;
    best_index_ = count_;
    since_best_ = 0;
    improved_ = true;
    return false;
  }
  improved_ = false;
  ++since_best_;
  return since_best_ >= patience_;
}

std::string stop_reason_name(StopReason r) {
  switch (r) {
    case StopReason::none: return "none";
    case StopReason::patience: return "patience";
    case StopReason::max_epochs: return "max_epochs";
    case StopReason::divergence: return "divergence";
  }
  throw_contract("stop_reason_name: unknown value");
}

StopReason stop_reason_from(const std::string& name) {
  if (name == "none") return StopReason::none;
  if (name == "patience") return StopReason::patience;
  if (name == "max_epochs") return StopReason::max_epochs;
  if (name == "divergence") return StopReason::divergence;
  throw_config("unknown stop reason \"" + name + "\"");
}

std::string history_to_csv(const TrainHistory& history) {
  std::string out = "epoch,train_loss,val_loss,val_acc\n";
  char line[128];
  for (const EpochStats& e : history.epochs) {
    std::snprintf(line, sizeof(line), "%zu,%.4f,%.4f,%.4f\n", e.epoch,
                  e.train_loss, e.val_loss, e.val_acc);
    out += line;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Batching and evaluation

namespace {

Tensor make_batch(const std::vector<data::CsiSample>& samples,
                  std::span<const std::size_t> idx, std::size_t channels,
                  std::size_t time, std::vector<std::size_t>& labels) {
  const std::size_t row = channels * time;
  std::vector<double> values(idx.size() * row);
  labels.clear();
  labels.reserve(idx.size());
  for (std::size_t b = 0; b < idx.size(); ++b) {
    const data::CsiSample& s = samples[idx[b]];
    if (s.values.size() != row) {
      throw_contract("train: sample \"" + s.source_id + "\" has " +
                     std::to_string(s.values.size()) + " values, expected " +
                     std::to_string(row));
    }
    for (std::size_t i = 0; i < row; ++i) {
      values[b * row + i] = static_cast<double>(s.values[i]);
    }
    labels.push_back(static_cast<std::size_t>(s.label));
  }
  return Tensor::from_values({idx.size(), channels, time},
                             std::move(values));
}

std::size_t argmax_row(const double* row, std::size_t k) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < k; ++i) {
    if (row[i] > row[best]) best = i;
  }
  return best;
}

}  // namespace

SplitStats evaluate_split(const Model& model,
                          const std::vector<data::CsiSample>& samples,
                          std::size_t batch_size) {
  if (samples.empty()) throw_config("evaluate: empty sample list");
  if (batch_size == 0) throw_config("evaluate: batch_size must be positive");
  NoGradGuard ng;
  const auto& cfg = model.config();
  const std::size_t n = samples.size();
  const std::size_t k = cfg.n_classes;
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::vector<std::size_t> labels;
  double loss_sum = 0.0;
  std::size_t correct = 0;
  for (std::size_t b0 = 0; b0 < n; b0 += batch_size) {
    const std::size_t b = std::min(batch_size, n - b0);
    auto idx = std::span<const std::size_t>(order).subspan(b0, b);
    Tensor batch = make_batch(samples, idx, cfg.input_channels,
                              cfg.input_time, labels);
    Tensor logits = model.forward_logits(batch);
    loss_sum +=
        cross_entropy(logits, labels).item() * static_cast<double>(b);
    for (std::size_t r = 0; r < b; ++r) {
      if (argmax_row(logits.values().data() + r * k, k) == labels[r]) {
        ++correct;
      }
    }
  }
  SplitStats st;
  st.loss = loss_sum / static_cast<double>(n);
  st.accuracy = static_cast<double>(correct) / static_cast<double>(n);
  return st;
}

std::vector<std::size_t> predict(const Model& model,
                                 const std::vector<data::CsiSample>& samples,
                                 std::size_t batch_size) {
  if (batch_size == 0) throw_config("predict: batch_size must be positive");
  NoGradGuard ng;
  const auto& cfg = model.config();
  const std::size_t n = samples.size();
  const std::size_t k = cfg.n_classes;
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::vector<std::size_t> labels, out;
  out.reserve(n);
  for (std::size_t b0 = 0; b0 < n; b0 += batch_size) {
    const std::size_t b = std::min(batch_size, n - b0);
    auto idx = std::span<const std::size_t>(order).subspan(b0, b);
    Tensor batch = make_batch(samples, idx, cfg.input_channels,
                              cfg.input_time, labels);
    Tensor logits = model.forward_logits(batch);
    for (std::size_t r = 0; r < b; ++r) {
      out.push_back(argmax_row(logits.values().data() + r * k, k));
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// The loop

namespace {

double global_grad_norm(const Model& model) {
  double sq = 0.0;
  for (const auto& [_, p] : model.parameters()) {
    if (!p.has_grad()) continue;
    for (double g : p.grad()) sq += g * g;
  }
  return std::sqrt(sq);
}

TrainResult run_loop(Model model, AdamState adam, TrainHistory history,
                     Model best, double best_val_loss, std::size_t best_epoch,
                     std::size_t start_epoch, const data::Dataset& ds,
                     const TrainConfig& cfg) {
  const auto& train_samples = ds.split("train");
  const auto& val_samples = ds.split("val");
  if (train_samples.empty()) throw_config("train: train split is empty");
  if (val_samples.empty()) throw_config("train: val split is empty");
  const std::size_t n = train_samples.size();

  EarlyStopper stopper(cfg.patience, cfg.min_delta);
  for (const EpochStats& e : history.epochs) stopper.update(e.val_loss);

  StopReason reason = StopReason::none;
  std::vector<std::size_t> order(n);
  std::vector<std::size_t> labels;
  for (std::size_t epoch = start_epoch; epoch <= cfg.max_epochs; ++epoch) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng rng(mix_seed(cfg.shuffle_seed, epoch));
    rng.shuffle(order);

    double loss_sum = 0.0;
    bool diverged = false;
    for (std::size_t b0 = 0; b0 < n; b0 += cfg.batch_size) {
      const std::size_t b = std::min(cfg.batch_size, n - b0);
      auto idx = std::span<const std::size_t>(order).subspan(b0, b);
      Tensor batch = make_batch(train_samples, idx,
                                model.config().input_channels,
                                model.config().input_time, labels);
      model.zero_grad();
      Tensor loss = cross_entropy(model.forward_logits(batch), labels);
      const double lv = loss.item();
      if (!std::isfinite(lv)) {
        diverged = true;
        break;
      }
      backward(loss);
      double scale = 1.0;
      if (cfg.clip_norm > 0.0) {
        const double norm = global_grad_norm(model);
        if (norm > cfg.clip_norm) scale = cfg.clip_norm / norm;
      }
      adam_step(model, adam, cfg, scale);
      loss_sum += lv * static_cast<double>(b);
    }
    if (diverged) {
      reason = StopReason::divergence;
      break;
    }

    EpochStats st;
    st.epoch = epoch;
    st.train_loss = loss_sum / static_cast<double>(n);
    SplitStats vs = evaluate_split(model, val_samples, cfg.batch_size);
    st.val_loss = vs.loss;
    st.val_acc = vs.accuracy;
    history.epochs.push_back(st);

    const bool stop = stopper.update(st.val_loss);
    if (stopper.improved()) {
      best = model.deep_copy();
      best_val_loss = st.val_loss;
      best_epoch = epoch;
    }
    if (stop) {
      reason = StopReason::patience;
      break;
    }
  }
  if (reason == StopReason::none) reason = StopReason::max_epochs;

  history.best_epoch = best_epoch;
  history.stop_reason = reason;
  TrainResult r;
  r.epochs_run = history.epochs.size();
  r.last = std::move(model);
  r.best = std::move(best);
  r.adam = std::move(adam);
  r.history = std::move(history);
  r.best_val_loss = best_val_loss;
  return r;
}

}  // namespace

TrainResult train(const Model& init, const data::Dataset& ds,
                  const TrainConfig& config) {
  config.validate();
  Model model = init.deep_copy();
  AdamState adam = AdamState::for_model(model);
  Model best = model.deep_copy();  // pre-training fallback
  return run_loop(std::move(model), std::move(adam), TrainHistory{},
                  std::move(best),
                  std::numeric_limits<double>::infinity(), 0, 1, ds, config);
}

TrainResult train_resume(const Checkpoint& from, const data::Dataset& ds,
                         const TrainConfig& config) {
  config.validate();
  Model model = from.model.deep_copy();
  AdamState adam =
      from.adam ? *from.adam : AdamState::for_model(model);
  Model best = from.best ? from.best->deep_copy() : model.deep_copy();
  TrainHistory history = from.history;
  history.stop_reason = StopReason::none;
  return run_loop(std::move(model), std::move(adam), std::move(history),
                  std::move(best), from.best_val_loss, from.best_epoch,
                  from.epoch + 1, ds, config);
}

Checkpoint to_checkpoint(const TrainResult& result) {
  Checkpoint ck;
  ck.model = result.last;
  ck.adam = result.adam;
  ck.best = result.best;
  ck.epoch = result.epochs_run;
  ck.best_epoch = result.history.best_epoch;
  ck.best_val_loss = result.best_val_loss;
  ck.history = result.history;
  return ck;
}

// ---------------------------------------------------------------------------
// Checkpoint files

namespace {

void write_file(const fs::path& path, const void* data, std::size_t bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw_io("cannot open \"" + path.string() + "\" for writing");
  out.write(static_cast<const char*>(data),
            static_cast<std::streamsize>(bytes));
  if (!out) throw_io("short write to \"" + path.string() + "\"");
}

constexpr int kCheckpointVersion = 1;

}  // namespace

void save_checkpoint(const Checkpoint& ck, const fs::path& dir) {
  const fs::path tmp = dir.string() + ".tmp";
  std::error_code ec;
  fs::remove_all(tmp, ec);
  if (!fs::create_directories(tmp, ec) || ec) {
    throw_io("cannot create directory \"" + tmp.string() + "\": " +
             ec.message());
  }

  json index = json::array();
  std::vector<double> blob;
  auto push = [&](const std::string& name, const Tensor& t) {
    index.push_back({{"name", name}, {"shape", t.shape()}});
    blob.insert(blob.end(), t.values().begin(), t.values().end());
  };
  auto push_raw = [&](const std::string& name,
                      const std::vector<double>& v) {
    index.push_back({{"name", name}, {"shape", {v.size()}}});
    blob.insert(blob.end(), v.begin(), v.end());
  };
  for (const auto& [name, t] : ck.model.parameters()) push(name, t);
  if (ck.best) {
    for (const auto& [name, t] : ck.best->parameters()) {
      push("best." + name, t);
    }
  }
  if (ck.adam) {
    const auto& params = ck.model.parameters();
    if (ck.adam->slots.size() != params.size()) {
      throw_contract("checkpoint: adam state does not mirror the model");
    }
    for (std::size_t i = 0; i < params.size(); ++i) {
      push_raw("adam.m." + params[i].first, ck.adam->slots[i].m);
      push_raw("adam.v." + params[i].first, ck.adam->slots[i].v);
    }
  }

  json manifest;
  manifest["format_version"] = kCheckpointVersion;
  manifest["model"] = ck.model.config().to_json();
  manifest["epoch"] = ck.epoch;
  manifest["best_epoch"] = ck.best_epoch;
  if (std::isfinite(ck.best_val_loss)) {
    manifest["best_val_loss"] = ck.best_val_loss;
  } else {
    manifest["best_val_loss"] = nullptr;
  }
  manifest["stop_reason"] = stop_reason_name(ck.history.stop_reason);
  json hist = json::array();
  for (const EpochStats& e : ck.history.epochs) {
    hist.push_back({{"epoch", e.epoch},
                    {"train_loss", e.train_loss},
                    {"val_loss", e.val_loss},
                    {"val_acc", e.val_acc}});
  }
  manifest["history"] = std::move(hist);
  if (ck.adam) manifest["adam_t"] = ck.adam->t;
  manifest["params"] = std::move(index);

  const std::string text = manifest.dump(2) + "\n";
  write_file(tmp / "manifest.json", text.data(), text.size());
  write_file(tmp / "params.bin", blob.data(), blob.size() * sizeof(double));

  fs::remove_all(dir, ec);
  fs::rename(tmp, dir, ec);
  if (ec) {
    throw_io("cannot move \"" + tmp.string() + "\" to \"" + dir.string() +
             "\": " + ec.message());
  }
}

Checkpoint load_checkpoint(const fs::path& dir) {
  const fs::path manifest_path = dir / "manifest.json";
  std::ifstream in(manifest_path);
  if (!in) throw_io("cannot open \"" + manifest_path.string() + "\"");
  json manifest;
  try {
    in >> manifest;
  } catch (const json::exception& e) {
    throw_io("\"" + manifest_path.string() + "\": " + e.what());
  }

  const std::string ctx = "checkpoint";
  jsonu::check_keys(manifest, ctx,
                    {"format_version", "model", "epoch", "best_epoch",
                     "best_val_loss", "stop_reason", "history", "adam_t",
                     "params"});
  const auto version = jsonu::get_uint(manifest, "format_version", 0, ctx);
  if (version != kCheckpointVersion) {
    throw_io("checkpoint: unsupported format_version " +
             std::to_string(version));
  }

  Checkpoint ck;
  ck.model = models::build_model(
      models::ModelConfig::from_json(manifest.at("model"), ctx + ".model"));
  ck.epoch = jsonu::get_uint(manifest, "epoch", 0, ctx);
  ck.best_epoch = jsonu::get_uint(manifest, "best_epoch", 0, ctx);
  if (manifest.contains("best_val_loss") &&
      !manifest.at("best_val_loss").is_null()) {
    ck.best_val_loss = jsonu::get_num(manifest, "best_val_loss", 0.0, ctx);
  }
  ck.history.best_epoch = ck.best_epoch;
  ck.history.stop_reason =
      stop_reason_from(jsonu::get_str(manifest, "stop_reason", "none", ctx));
  if (!manifest.at("history").is_array() ||
      !manifest.at("params").is_array()) {
    throw_config("checkpoint: history and params must be arrays");
  }
  for (const json& e : manifest.at("history")) {
    jsonu::check_keys(e, ctx + ".history",
                      {"epoch", "train_loss", "val_loss", "val_acc"});
    EpochStats st;
    st.epoch = jsonu::get_uint(e, "epoch", 0, ctx + ".history");
    st.train_loss = jsonu::get_num(e, "train_loss", 0.0, ctx + ".history");
    st.val_loss = jsonu::get_num(e, "val_loss", 0.0, ctx + ".history");
    st.val_acc = jsonu::get_num(e, "val_acc", 0.0, ctx + ".history");
    ck.history.epochs.push_back(st);
  }

  // parameter index, then the blob it describes
  struct Entry {
    std::string name;
    Shape shape;
    std::size_t offset = 0, size = 0;
  };
  std::vector<Entry> entries;
  std::size_t total = 0;
  for (const json& e : manifest.at("params")) {
    jsonu::check_keys(e, ctx + ".params", {"name", "shape"});
    Entry ent;
    ent.name = jsonu::get_str(e, "name", "", ctx + ".params");
    for (const json& d : e.at("shape")) {
      ent.shape.push_back(d.get<std::size_t>());
    }
    ent.size = shape_size(ent.shape);
    ent.offset = total;
    total += ent.size;
    entries.push_back(std::move(ent));
  }

  const fs::path bin_path = dir / "params.bin";
  std::ifstream bin(bin_path, std::ios::binary | std::ios::ate);
  if (!bin) throw_io("cannot open \"" + bin_path.string() + "\"");
  const std::size_t bytes = static_cast<std::size_t>(bin.tellg());
  if (bytes != total * sizeof(double)) {
    throw_io("\"" + bin_path.string() + "\" holds " +
             std::to_string(bytes) + " bytes, the parameter index expects " +
             std::to_string(total * sizeof(double)));
  }
  std::vector<double> blob(total);
  bin.seekg(0);
  bin.read(reinterpret_cast<char*>(blob.data()),
           static_cast<std::streamsize>(bytes));
  if (!bin) throw_io("short read from \"" + bin_path.string() + "\"");

  std::size_t cursor = 0;
  auto expect = [&](const std::string& name, const Shape& shape) {
    if (cursor >= entries.size()) {
      throw_contract("checkpoint: parameter index ends before \"" + name +
                     "\"");
    }
    const Entry& ent = entries[cursor];
    if (ent.name != name) {
      throw_contract("checkpoint: expected parameter \"" + name +
                     "\" at index " + std::to_string(cursor) + ", found \"" +
                     ent.name + "\"");
    }
    if (ent.shape != shape) {
      throw_contract("checkpoint: parameter \"" + name + "\" has shape " +
                     shape_str(ent.shape) + ", the model expects " +
                     shape_str(shape));
    }
    return cursor++;
  };
  auto load_into = [&](Model& m, const std::string& prefix) {
    std::vector<std::vector<double>> values;
    for (const auto& [name, t] : m.parameters()) {
      const Entry& ent = entries[expect(prefix + name, t.shape())];
      values.emplace_back(blob.begin() + ent.offset,
                          blob.begin() + ent.offset + ent.size);
    }
    m.load_values(values);
  };

  load_into(ck.model, "");

  const bool has_best =
      cursor < entries.size() && entries[cursor].name.rfind("best.", 0) == 0;
  if (has_best) {
    Model best = ck.model.deep_copy();
    load_into(best, "best.");
    ck.best = std::move(best);
  }
  if (manifest.contains("adam_t") && !manifest.at("adam_t").is_null()) {
    AdamState st;
    st.t = jsonu::get_uint(manifest, "adam_t", 0, ctx);
    for (const auto& [name, t] : ck.model.parameters()) {
      const Entry& em = entries[expect("adam.m." + name, {t.size()})];
      const Entry& ev = entries[expect("adam.v." + name, {t.size()})];
      AdamState::Slot slot;
      slot.m.assign(blob.begin() + em.offset,
                    blob.begin() + em.offset + em.size);
      slot.v.assign(blob.begin() + ev.offset,
                    blob.begin() + ev.offset + ev.size);
      st.slots.push_back(std::move(slot));
    }
    ck.adam = std::move(st);
  }
  if (cursor != entries.size()) {
    throw_contract("checkpoint: parameter index has " +
                   std::to_string(entries.size() - cursor) +
                   " unexpected trailing entries");
  }
  return ck;
}

}  // namespace har::training
