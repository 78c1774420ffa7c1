#include "har/models.hpp"

#include <cmath>

#include "har/error.hpp"
#include "har/rng.hpp"
#include "json_util.hpp"

namespace har::models {

using nlohmann::json;

// ---------------------------------------------------------------------------
// Cells

namespace {

void check_cell_dims(const char* op, const Tensor& x, const Tensor& h,
                     std::size_t input, std::size_t hidden) {
  if (x.rank() != 2 || x.shape()[1] != input) {
    throw_contract(std::string(op) + ": input " + shape_str(x.shape()) +
                   " does not match parameter input dim " +
                   std::to_string(input));
  }
  if (h.rank() != 2 || h.shape()[1] != hidden || h.shape()[0] != x.shape()[0]) {
    throw_contract(std::string(op) + ": state " + shape_str(h.shape()) +
                   " does not match input " + shape_str(x.shape()) +
                   " and hidden dim " + std::to_string(hidden));
  }
}

Tensor gate_preact(const Tensor& x, const Tensor& h, const Tensor& w,
                   const Tensor& u, const Tensor& b) {
  return add_rowvec(add(matmul(x, w), matmul(h, u)), b);
}

}  // namespace

LstmParams LstmParams::zeros(std::size_t input, std::size_t hidden) {
  LstmParams p;
  p.w_i = Tensor::zeros({input, hidden});
  p.u_i = Tensor::zeros({hidden, hidden});
  p.b_i = Tensor::zeros({hidden});
  p.w_f = Tensor::zeros({input, hidden});
  p.u_f = Tensor::zeros({hidden, hidden});
  p.b_f = Tensor::zeros({hidden});
  p.w_g = Tensor::zeros({input, hidden});
  p.u_g = Tensor::zeros({hidden, hidden});
  p.b_g = Tensor::zeros({hidden});
  p.w_o = Tensor::zeros({input, hidden});
  p.u_o = Tensor::zeros({hidden, hidden});
  p.b_o = Tensor::zeros({hidden});
  return p;
}

GruParams GruParams::zeros(std::size_t input, std::size_t hidden) {
  GruParams p;
  p.w_z = Tensor::zeros({input, hidden});
  p.u_z = Tensor::zeros({hidden, hidden});
  p.b_z = Tensor::zeros({hidden});
  p.w_r = Tensor::zeros({input, hidden});
  p.u_r = Tensor::zeros({hidden, hidden});
  p.b_r = Tensor::zeros({hidden});
  p.w_h = Tensor::zeros({input, hidden});
  p.u_h = Tensor::zeros({hidden, hidden});
  p.b_h = Tensor::zeros({hidden});
  return p;
}

std::pair<Tensor, Tensor> lstm_cell(const Tensor& x, const Tensor& h,
                                    const Tensor& c, const LstmParams& p) {
  check_cell_dims("lstm_cell", x, h, p.input_dim(), p.hidden_dim());
  if (c.shape() != h.shape()) {
    throw_contract("lstm_cell: cell state " + shape_str(c.shape()) +
                   " does not match hidden state " + shape_str(h.shape()));
  }
  Tensor i = sigmoid(gate_preact(x, h, p.w_i, p.u_i, p.b_i));
  Tensor f = sigmoid(gate_preact(x, h, p.w_f, p.u_f, p.b_f));
  Tensor g = har::tanh(gate_preact(x, h, p.w_g, p.u_g, p.b_g));
  Tensor o = sigmoid(gate_preact(x, h, p.w_o, p.u_o, p.b_o));
  Tensor c_next = add(mul(f, c), mul(i, g));
  Tensor h_next = mul(o, har::tanh(c_next));
  return {h_next, c_next};
}

Tensor gru_cell(const Tensor& x, const Tensor& h, const GruParams& p) {
  check_cell_dims("gru_cell", x, h, p.input_dim(), p.hidden_dim());
  Tensor z = sigmoid(gate_preact(x, h, p.w_z, p.u_z, p.b_z));
  Tensor r = sigmoid(gate_preact(x, h, p.w_r, p.u_r, p.b_r));
  Tensor hc =
      har::tanh(add_rowvec(add(matmul(x, p.w_h), matmul(mul(r, h), p.u_h)),
                           p.b_h));
  return add(mul(sub(1.0, z), h), mul(z, hc));
}

std::vector<Tensor> bilstm_layer(const std::vector<Tensor>& xs,
                                 const LstmParams& fwd,
                                 const LstmParams& bwd) {
  if (xs.empty()) throw_contract("bilstm_layer: empty sequence");
  if (fwd.hidden_dim() != bwd.hidden_dim()) {
    throw_contract("bilstm_layer: direction hidden dims differ");
  }
  const std::size_t t_len = xs.size();
  const std::size_t batch = xs[0].shape()[0];
  const std::size_t hidden = fwd.hidden_dim();

  std::vector<Tensor> hf(t_len), hb(t_len);
  Tensor h = Tensor::zeros({batch, hidden});
  Tensor c = Tensor::zeros({batch, hidden});
  for (std::size_t t = 0; t < t_len; ++t) {
    auto [hn, cn] = lstm_cell(xs[t], h, c, fwd);
    hf[t] = hn;
    h = hn;
    c = cn;
  }
  h = Tensor::zeros({batch, hidden});
  c = Tensor::zeros({batch, hidden});
  for (std::size_t t = t_len; t-- > 0;) {
    auto [hn, cn] = lstm_cell(xs[t], h, c, bwd);
    hb[t] = hn;
    h = hn;
    c = cn;
  }
  std::vector<Tensor> out(t_len);
  for (std::size_t t = 0; t < t_len; ++t) {
    out[t] = concat_cols(hf[t], hb[t]);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Config

void ModelConfig::validate() const {
  if (input_channels == 0 || input_time == 0) {
    throw_config("model: input shape must be positive");
  }
  if (n_classes < 2) throw_config("model: n_classes must be at least 2");
  if (kind == ModelKind::bilstm) {
    if (lstm_layers == 0 || lstm_hidden == 0) {
      throw_config("model: lstm_layers and lstm_hidden must be positive");
    }
  } else {
    if (conv_blocks.empty()) throw_config("model: conv_blocks is empty");
    if (gru_hidden == 0 || gru_layers == 0) {
      throw_config("model: gru_hidden and gru_layers must be positive");
    }
    conv_output_time();  // throws when a block eats the time axis
  }
}

std::size_t ModelConfig::conv_output_time() const {
  std::size_t t = input_time;
  for (std::size_t i = 0; i < conv_blocks.size(); ++i) {
    const ConvBlockConfig& b = conv_blocks[i];
    if (b.out_channels == 0 || b.kernel == 0 || b.stride == 0 || b.pool == 0) {
      throw_config("model: conv block " + std::to_string(i) +
                   " has a zero field");
    }
    // "same" padding then pooling
    t = (t + b.stride - 1) / b.stride;
    t = t / b.pool;
    if (t < 1) {
      throw_config("model: conv block " + std::to_string(i) +
                   " reduces the time axis below 1 (input_time " +
                   std::to_string(input_time) + ")");
    }
  }
  return t;
}

json ModelConfig::to_json() const {
  json j;
  j["kind"] = kind == ModelKind::bilstm ? "bilstm" : "cnn_gru";
  j["input_channels"] = input_channels;
  j["input_time"] = input_time;
  j["n_classes"] = n_classes;
  j["init_seed"] = init_seed;
  if (kind == ModelKind::bilstm) {
    j["lstm_layers"] = lstm_layers;
    j["lstm_hidden"] = lstm_hidden;
  } else {
    json blocks = json::array();
    for (const ConvBlockConfig& b : conv_blocks) {
      blocks.push_back({{"out_channels", b.out_channels},
                        {"kernel", b.kernel},
                        {"stride", b.stride},
                        {"pool", b.pool}});
    }
    j["conv_blocks"] = std::move(blocks);
    j["gru_hidden"] = gru_hidden;
    j["gru_layers"] = gru_layers;
  }
  return j;
}

ModelConfig ModelConfig::from_json(const json& j, const std::string& ctx) {
  jsonu::check_keys(j, ctx,
                    {"kind", "input_channels", "input_time", "n_classes",
                     "init_seed", "lstm_layers", "lstm_hidden", "conv_blocks",
                     "gru_hidden", "gru_layers"});
  ModelConfig c;
  const std::string kind = jsonu::get_str(j, "kind", "bilstm", ctx);
  if (kind == "bilstm") {
    c.kind = ModelKind::bilstm;
  } else if (kind == "cnn_gru") {
    c.kind = ModelKind::cnn_gru;
  } else {
    throw_config(ctx + ".kind: unknown kind \"" + kind +
                 "\" (bilstm, cnn_gru)");
  }
  c.input_channels = jsonu::get_uint(j, "input_channels", c.input_channels, ctx);
  c.input_time = jsonu::get_uint(j, "input_time", c.input_time, ctx);
  c.n_classes = jsonu::get_uint(j, "n_classes", c.n_classes, ctx);
  c.init_seed = jsonu::get_uint(j, "init_seed", c.init_seed, ctx);
  c.lstm_layers = jsonu::get_uint(j, "lstm_layers", c.lstm_layers, ctx);
  c.lstm_hidden = jsonu::get_uint(j, "lstm_hidden", c.lstm_hidden, ctx);
  c.gru_hidden = jsonu::get_uint(j, "gru_hidden", c.gru_hidden, ctx);
  c.gru_layers = jsonu::get_uint(j, "gru_layers", c.gru_layers, ctx);
  if (j.contains("conv_blocks")) {
    const json& blocks = j.at("conv_blocks");
    if (!blocks.is_array() || blocks.empty()) {
      throw_config(ctx + ".conv_blocks: expected a non-empty array");
    }
    c.conv_blocks.clear();
    for (std::size_t i = 0; i < blocks.size(); ++i) {
      const std::string bctx = ctx + ".conv_blocks[" + std::to_string(i) + "]";
      jsonu::check_keys(blocks[i], bctx,
                        {"out_channels", "kernel", "stride", "pool"});
      ConvBlockConfig b;
      b.out_channels = jsonu::get_uint(blocks[i], "out_channels", 16, bctx);
      b.kernel = jsonu::get_uint(blocks[i], "kernel", 5, bctx);
      b.stride = jsonu::get_uint(blocks[i], "stride", 1, bctx);
      b.pool = jsonu::get_uint(blocks[i], "pool", 2, bctx);
      c.conv_blocks.push_back(b);
    }
  }
  c.validate();
  return c;
}

// ---------------------------------------------------------------------------
// Model

Tensor Model::param(const std::string& name) const {
  for (const auto& [n, t] : params_) {
    if (n == name) return t;
  }
  throw_contract("model: no parameter named \"" + name + "\"");
}

std::size_t Model::param_count() const {
  std::size_t n = 0;
  for (const auto& [_, t] : params_) n += t.size();
  return n;
}

void Model::zero_grad() {
  for (auto& [_, t] : params_) t.zero_grad();
}

void Model::load_values(const std::vector<std::vector<double>>& values) {
  if (values.size() != params_.size()) {
    throw_contract("model: expected " + std::to_string(params_.size()) +
                   " parameter buffers, got " + std::to_string(values.size()));
  }
  for (std::size_t i = 0; i < values.size(); ++i) {
    Tensor& t = params_[i].second;
    if (values[i].size() != t.size()) {
      throw_contract("model: parameter \"" + params_[i].first + "\" expects " +
                     std::to_string(t.size()) + " values, got " +
                     std::to_string(values[i].size()));
    }
    std::copy(values[i].begin(), values[i].end(), t.values_mut().begin());
  }
}

Model Model::deep_copy() const {
  Model m;
  m.config_ = config_;
  m.params_.reserve(params_.size());
  for (const auto& [name, t] : params_) {
    m.params_.emplace_back(name, t.detached(true));
  }
  m.rebuild_views();
  return m;
}

namespace {

// Names follow construction order so checkpoints can index parameters by
// position as well as by name.
struct ParamBuilder {
  std::vector<std::pair<std::string, Tensor>>* out;
  std::uint64_t seed;

  Tensor uniform(const std::string& name, Shape shape, std::size_t fan_in) {
    Rng rng(mix_seed(seed, hash_name(name)));
    const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    std::vector<double> v(shape_size(shape));
    for (double& x : v) x = rng.uniform(-bound, bound);
    Tensor t = Tensor::from_values(std::move(shape), std::move(v), true);
    out->emplace_back(name, t);
    return t;
  }

  Tensor constant(const std::string& name, Shape shape, double value) {
    Tensor t = Tensor::full(std::move(shape), value, true);
    out->emplace_back(name, t);
    return t;
  }
};

LstmParams make_lstm(ParamBuilder& pb, const std::string& prefix,
                     std::size_t input, std::size_t hidden) {
  LstmParams p;
  auto gate = [&](const char* g, Tensor& w, Tensor& u, Tensor& b) {
    const std::string base = prefix + "." + g;
    w = pb.uniform(base + ".W", {input, hidden}, input);
    u = pb.uniform(base + ".U", {hidden, hidden}, hidden);
    // biases share the recurrent fan-in; the forget gate starts open
    if (g[0] == 'f') {
      b = pb.constant(base + ".b", {hidden}, 1.0);
    } else {
      b = pb.uniform(base + ".b", {hidden}, hidden);
    }
  };
  gate("i", p.w_i, p.u_i, p.b_i);
  gate("f", p.w_f, p.u_f, p.b_f);
  gate("g", p.w_g, p.u_g, p.b_g);
  gate("o", p.w_o, p.u_o, p.b_o);
  return p;
}

GruParams make_gru(ParamBuilder& pb, const std::string& prefix,
                   std::size_t input, std::size_t hidden) {
  GruParams p;
  auto gate = [&](const char* g, Tensor& w, Tensor& u, Tensor& b) {
    const std::string base = prefix + "." + g;
    w = pb.uniform(base + ".W", {input, hidden}, input);
    u = pb.uniform(base + ".U", {hidden, hidden}, hidden);
    b = pb.uniform(base + ".b", {hidden}, hidden);
  };
  gate("z", p.w_z, p.u_z, p.b_z);
  gate("r", p.w_r, p.u_r, p.b_r);
  gate("h", p.w_h, p.u_h, p.b_h);
  return p;
}

}  // namespace

void Model::rebuild_views() {
  lstm_.clear();
  conv_.clear();
  gru_.clear();
  std::size_t idx = 0;
  auto next = [&]() -> Tensor {
    if (idx >= params_.size()) {
      throw_contract("model: parameter list shorter than its config implies");
    }
    return params_[idx++].second;
  };
  auto take_lstm = [&]() {
    LstmParams p;
    p.w_i = next(); p.u_i = next(); p.b_i = next();
    p.w_f = next(); p.u_f = next(); p.b_f = next();
    p.w_g = next(); p.u_g = next(); p.b_g = next();
    p.w_o = next(); p.u_o = next(); p.b_o = next();
    return p;
  };
  if (config_.kind == ModelKind::bilstm) {
    for (std::size_t l = 0; l < config_.lstm_layers; ++l) {
      LstmParams fwd = take_lstm();
      LstmParams bwd = take_lstm();
      lstm_.emplace_back(std::move(fwd), std::move(bwd));
    }
  } else {
    for (std::size_t i = 0; i < config_.conv_blocks.size(); ++i) {
      ConvParams cp;
      cp.w = next();
      cp.b = next();
      conv_.push_back(std::move(cp));
    }
    for (std::size_t l = 0; l < config_.gru_layers; ++l) {
      GruParams p;
      p.w_z = next(); p.u_z = next(); p.b_z = next();
      p.w_r = next(); p.u_r = next(); p.b_r = next();
      p.w_h = next(); p.u_h = next(); p.b_h = next();
      gru_.push_back(std::move(p));
    }
  }
  head_w_ = next();
  head_b_ = next();
  if (idx != params_.size()) {
    throw_contract("model: parameter list longer than its config implies");
  }
}

Model build_model(const ModelConfig& config) {
  config.validate();
  Model m;
  m.config_ = config;
  ParamBuilder pb{&m.params_, config.init_seed};

  std::size_t features;
  if (config.kind == ModelKind::bilstm) {
    std::size_t input = config.input_channels;
    for (std::size_t l = 0; l < config.lstm_layers; ++l) {
      const std::string base = "lstm" + std::to_string(l);
      make_lstm(pb, base + ".fwd", input, config.lstm_hidden);
      make_lstm(pb, base + ".bwd", input, config.lstm_hidden);
      input = 2 * config.lstm_hidden;
    }
    features = 2 * config.lstm_hidden;
  } else {
    std::size_t channels = config.input_channels;
    for (std::size_t i = 0; i < config.conv_blocks.size(); ++i) {
      const ConvBlockConfig& b = config.conv_blocks[i];
      const std::string base = "conv" + std::to_string(i);
      pb.uniform(base + ".W", {b.out_channels, channels, b.kernel},
                 channels * b.kernel);
      pb.uniform(base + ".b", {b.out_channels}, channels * b.kernel);
      channels = b.out_channels;
    }
    std::size_t input = channels;
    for (std::size_t l = 0; l < config.gru_layers; ++l) {
      make_gru(pb, "gru" + std::to_string(l), input, config.gru_hidden);
      input = config.gru_hidden;
    }
    features = config.gru_hidden;
  }
  pb.uniform("head.W", {features, config.n_classes}, features);
  pb.uniform("head.b", {config.n_classes}, features);
  m.rebuild_views();
  return m;
}

Tensor Model::forward_logits(const Tensor& batch) const {
  if (batch.rank() != 3 || batch.shape()[1] != config_.input_channels ||
      batch.shape()[2] != config_.input_time) {
    throw_contract("model: batch " + shape_str(batch.shape()) +
                   " does not match configured input [" +
                   std::to_string(config_.input_channels) + "x" +
                   std::to_string(config_.input_time) + "]");
  }

  Tensor feat;
  if (config_.kind == ModelKind::bilstm) {
    std::vector<Tensor> xs(config_.input_time);
    for (std::size_t t = 0; t < config_.input_time; ++t) {
      xs[t] = select_time(batch, t);
    }
    for (const auto& [fwd, bwd] : lstm_) {
      xs = bilstm_layer(xs, fwd, bwd);
    }
    // final-step readout: last forward state and first backward state
    const std::size_t hidden = config_.lstm_hidden;
    Tensor last_fwd = slice_cols(xs.back(), 0, hidden);
    Tensor first_bwd = slice_cols(xs.front(), hidden, 2 * hidden);
    feat = concat_cols(last_fwd, first_bwd);
  } else {
    Tensor x = batch;
    for (std::size_t i = 0; i < conv_.size(); ++i) {
      const ConvBlockConfig& b = config_.conv_blocks[i];
      x = conv1d(x, conv_[i].w, b.stride, Padding::same);
      x = add_chanvec(x, conv_[i].b);
      x = relu(x);
      x = maxpool1d(x, b.pool);
    }
    const std::size_t t_len = x.shape()[2];
    std::vector<Tensor> xs(t_len);
    for (std::size_t t = 0; t < t_len; ++t) xs[t] = select_time(x, t);
    for (const GruParams& p : gru_) {
      Tensor h = Tensor::zeros({batch.shape()[0], p.hidden_dim()});
      for (std::size_t t = 0; t < t_len; ++t) {
        h = gru_cell(xs[t], h, p);
        xs[t] = h;
      }
    }
    feat = xs.back();
  }
  return add_rowvec(matmul(feat, head_w_), head_b_);
}

Tensor Model::forward(const Tensor& batch) const {
  return softmax(forward_logits(batch));
}

}  // namespace har::models
