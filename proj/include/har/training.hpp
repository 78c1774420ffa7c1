#pragma once

#include <cstdint>
#include <filesystem>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "har/data.hpp"
#include "har/models.hpp"
#include "har/tensor.hpp"

namespace har::training {

struct TrainConfig {
  double learning_rate = 0.001;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  std::size_t batch_size = 32;
  std::size_t max_epochs = 50;
  std::size_t patience = 10;
  double min_delta = 1e-6;
  double clip_norm = 0.0;  // 0 disables clipping by global norm
  std::uint64_t shuffle_seed = 0;

  void validate() const;
  nlohmann::json to_json() const;
  static TrainConfig from_json(const nlohmann::json& j,
                               const std::string& ctx = "training");
};

// First/second moment buffers mirroring a model's parameter list.
struct AdamState {
  struct Slot {
    std::vector<double> m, v;
  };
  std::vector<Slot> slots;
  std::size_t t = 0;

  static AdamState for_model(const models::Model& model);
};

// One optimizer step over every parameter, consuming the gradients
// accumulated by backward(). grad_scale multiplies gradients as they are
// read (used for clipping). Non-finite gradients raise a numeric error
// naming the parameter.
void adam_step(models::Model& model, AdamState& state,
               const TrainConfig& config, double grad_scale = 1.0);

// Patience tracker over a validation-loss sequence. update() returns true
// when the loss has not improved by more than min_delta for `patience`
// consecutive calls.
class EarlyStopper {
 public:
  EarlyStopper(std::size_t patience, double min_delta);
  bool update(double val_loss);
  bool improved() const { return improved_; }
  std::size_t best_index() const { return best_index_; }  // 1-based, 0=none
  double best_loss() const { return best_; }

 private:
  std::size_t patience_;
  double min_delta_;
  double best_ = std::numeric_limits<double>::infinity();
  std::size_t best_index_ = 0;
  std::size_t count_ = 0;
  std::size_t since_best_ = 0;
  bool improved_ = false;
};

enum class StopReason { none, patience, max_epochs, divergence };
std::string stop_reason_name(StopReason r);
StopReason stop_reason_from(const std::string& name);

struct EpochStats {
  std::size_t epoch = 0;  // 1-based
  double train_loss = 0.0;
  double val_loss = 0.0;
  double val_acc = 0.0;
};

struct TrainHistory {
  std::vector<EpochStats> epochs;
  std::size_t best_epoch = 0;  // 1-based, 0 = no completed epoch
  StopReason stop_reason = StopReason::none;
};

// CSV with header epoch,train_loss,val_loss,val_acc; values at 4 decimal
// places so identical histories render byte-identically.
std::string history_to_csv(const TrainHistory& history);

struct TrainResult {
  models::Model last;   // parameters after the final completed step
  models::Model best;   // snapshot of the best-val-loss epoch
  AdamState adam;
  TrainHistory history;
  double best_val_loss = std::numeric_limits<double>::infinity();
  std::size_t epochs_run = 0;  // cumulative, includes resumed epochs
};

// Saved training state: the last parameters plus (optionally) everything
// needed to continue the run exactly where it stopped.
struct Checkpoint {
  models::Model model;
  std::optional<AdamState> adam;
  std::optional<models::Model> best;
  std::size_t epoch = 0;  // completed epochs
  std::size_t best_epoch = 0;
  double best_val_loss = std::numeric_limits<double>::infinity();
  TrainHistory history;
};

// Mini-batch loop over ds.split("train") with per-epoch evaluation on
// ds.split("val"). Shuffling draws from a stream keyed by (shuffle_seed,
// epoch), so any epoch's order is independent of how the run was split
// across resumes. Returns the best checkpoint, never the last, unless no
// epoch ever improved.
TrainResult train(const models::Model& init, const data::Dataset& ds,
                  const TrainConfig& config);

// Continues a checkpointed run; with identical config and dataset the
// parameter trajectory is bit-identical to the uninterrupted run.
TrainResult train_resume(const Checkpoint& from, const data::Dataset& ds,
                         const TrainConfig& config);

Checkpoint to_checkpoint(const TrainResult& result);

// Directory layout: manifest.json (config, epoch counters, history and a
// parameter index) + params.bin (the indexed tensors as little-endian
// 64-bit reals, concatenated in index order).
void save_checkpoint(const Checkpoint& ck, const std::filesystem::path& dir);
Checkpoint load_checkpoint(const std::filesystem::path& dir);

// Deterministic batched evaluation: mean loss and argmax accuracy (ties
// resolve to the lowest class index).
struct SplitStats {
  double loss = 0.0;
  double accuracy = 0.0;
};
SplitStats evaluate_split(const models::Model& model,
                          const std::vector<data::CsiSample>& samples,
                          std::size_t batch_size);

// Predicted class per sample, batched, deterministic.
std::vector<std::size_t> predict(const models::Model& model,
                                 const std::vector<data::CsiSample>& samples,
                                 std::size_t batch_size);

}  // namespace har::training
