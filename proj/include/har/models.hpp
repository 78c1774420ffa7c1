#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "har/tensor.hpp"

namespace har::models {

using har::Tensor;

// Gate parameter triplets. Weight matrices are stored input-major
// ([input x hidden] for W, [hidden x hidden] for U) so a batch-row layout
// multiplies as x * W + h * U + b.
struct LstmParams {
  // gate order: input (i), forget (f), cell candidate (g), output (o)
  Tensor w_i, u_i, b_i;
  Tensor w_f, u_f, b_f;
  Tensor w_g, u_g, b_g;
  Tensor w_o, u_o, b_o;
  std::size_t input_dim() const { return w_i.shape()[0]; }
  std::size_t hidden_dim() const { return w_i.shape()[1]; }
  static LstmParams zeros(std::size_t input, std::size_t hidden);
};

struct GruParams {
  // gate order: update (z), reset (r), candidate (h)
  Tensor w_z, u_z, b_z;
  Tensor w_r, u_r, b_r;
  Tensor w_h, u_h, b_h;
  std::size_t input_dim() const { return w_z.shape()[0]; }
  std::size_t hidden_dim() const { return w_z.shape()[1]; }
  static GruParams zeros(std::size_t input, std::size_t hidden);
};

// i = sig(xW_i + hU_i + b_i), f = sig(...), o = sig(...),
// g = tanh(xW_g + hU_g + b_g), c' = f*c + i*g, h' = o*tanh(c').
// x is [B x input], h and c are [B x hidden].
std::pair<Tensor, Tensor> lstm_cell(const Tensor& x, const Tensor& h,
                                    const Tensor& c, const LstmParams& p);

// z = sig(xW_z + hU_z + b_z), r = sig(...),
// hc = tanh(xW_h + (r*h)U_h + b_h), h' = (1-z)*h + z*hc.
Tensor gru_cell(const Tensor& x, const Tensor& h, const GruParams& p);

// Left-to-right and right-to-left passes over per-step inputs [B x input];
// step t of the result is [h_fwd[t] ; h_bwd[t]], width 2 * hidden.
std::vector<Tensor> bilstm_layer(const std::vector<Tensor>& xs,
                                 const LstmParams& fwd, const LstmParams& bwd);

enum class ModelKind { bilstm, cnn_gru };

struct ConvBlockConfig {
  std::size_t out_channels = 16;
  std::size_t kernel = 5;
  std::size_t stride = 1;
  std::size_t pool = 2;
};

struct ModelConfig {
  ModelKind kind = ModelKind::bilstm;
  std::size_t input_channels = 90;
  std::size_t input_time = 250;
  std::size_t n_classes = 6;
  // bilstm
  std::size_t lstm_layers = 3;
  std::size_t lstm_hidden = 128;
  // cnn_gru
  std::vector<ConvBlockConfig> conv_blocks = {{16, 5, 1, 2}, {32, 5, 1, 2}};
  std::size_t gru_hidden = 128;
  std::size_t gru_layers = 1;
  std::uint64_t init_seed = 0;

  void validate() const;
  // Time-axis length after the conv stack (cnn_gru only).
  std::size_t conv_output_time() const;
  nlohmann::json to_json() const;
  static ModelConfig from_json(const nlohmann::json& j,
                               const std::string& ctx = "model");
};

// A built network: an ordered, named parameter store plus the forward
// graph implied by its config. Copies share parameters; deep_copy
// duplicates them.
class Model {
 public:
  Model() = default;

  const ModelConfig& config() const { return config_; }
  const std::vector<std::pair<std::string, Tensor>>& parameters() const {
    return params_;
  }
  Tensor param(const std::string& name) const;
  std::size_t param_count() const;

  // batch [B x C x T] -> probabilities [B x K]
  Tensor forward(const Tensor& batch) const;
  Tensor forward_logits(const Tensor& batch) const;

  void zero_grad();
  // Detached duplicate (fresh parameter storage, same values).
  Model deep_copy() const;
  // Overwrites parameter values from flat buffers ordered as parameters().
  void load_values(const std::vector<std::vector<double>>& values);

 private:
  friend Model build_model(const ModelConfig&);
  void rebuild_views();

  ModelConfig config_;
  std::vector<std::pair<std::string, Tensor>> params_;
  // structured views aliasing entries of params_
  std::vector<std::pair<LstmParams, LstmParams>> lstm_;
  struct ConvParams {
    Tensor w, b;
  };
  std::vector<ConvParams> conv_;
  std::vector<GruParams> gru_;
  Tensor head_w_, head_b_;
};

// Deterministic construction: every parameter draws from its own named
// stream of init_seed, uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)); forget
// gate biases start at 1.
Model build_model(const ModelConfig& config);

}  // namespace har::models
