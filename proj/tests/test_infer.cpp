#include <doctest.h>

#include <cmath>
#include <cstring>
#include <vector>

#include "har/infer.hpp"
#include "har/models.hpp"
#include "har/rng.hpp"
#include "test_util.hpp"

using namespace har;
using namespace har::models;
using har::infer::Engine;
using testutil::expect_error;

namespace {

ModelConfig tiny_bilstm() {
  ModelConfig c;
  c.kind = ModelKind::bilstm;
  c.input_channels = 4;
  c.input_time = 6;
  c.n_classes = 3;
  c.lstm_layers = 2;
  c.lstm_hidden = 3;
  c.init_seed = 21;
  return c;
}

ModelConfig tiny_cnn_gru() {
  ModelConfig c;
  c.kind = ModelKind::cnn_gru;
  c.input_channels = 3;
  c.input_time = 16;
  c.n_classes = 3;
  c.conv_blocks = {{4, 3, 1, 2}, {6, 5, 2, 2}};
  c.gru_hidden = 5;
  c.gru_layers = 2;
  c.init_seed = 23;
  return c;
}

std::vector<double> random_sample(const ModelConfig& cfg, Rng& rng) {
  std::vector<double> v(cfg.input_channels * cfg.input_time);
  for (double& x : v) x = rng.uniform(-1.5, 1.5);
  return v;
}

}  // namespace

TEST_CASE("f64 engine reproduces the graph forward pass bit for bit") {
  for (const ModelConfig& cfg : {tiny_bilstm(), tiny_cnn_gru()}) {
    Model m = build_model(cfg);
    Engine<double> eng(m);
    Rng rng(311);
    for (int rep = 0; rep < 4; ++rep) {
      std::vector<double> sample = random_sample(cfg, rng);
      Tensor batch = Tensor::from_values(
          {1, cfg.input_channels, cfg.input_time}, sample);
      Tensor probs = m.forward(batch);
      std::vector<double> fast = eng.forward(sample);
      REQUIRE(fast.size() == cfg.n_classes);
      CHECK(std::memcmp(fast.data(), probs.values().data(),
                        fast.size() * sizeof(double)) == 0);
    }
  }
}

TEST_CASE("f32 engine tracks the f64 engine to 1e-3") {
  for (const ModelConfig& cfg : {tiny_bilstm(), tiny_cnn_gru()}) {
    Model m = build_model(cfg);
    Engine<double> e64(m);
    Engine<float> e32(m);
    Rng rng(97);
    for (int rep = 0; rep < 8; ++rep) {
      std::vector<double> sample = random_sample(cfg, rng);
      std::vector<float> sample32(sample.begin(), sample.end());
      std::vector<double> p64 = e64.forward(sample);
      std::vector<float> p32 = e32.forward(sample32);
      for (std::size_t k = 0; k < p64.size(); ++k) {
        CHECK(std::abs(p64[k] - static_cast<double>(p32[k])) < 1e-3);
      }
    }
  }
}

TEST_CASE("engine calls are deterministic and allocation-free in size") {
  Model m = build_model(tiny_cnn_gru());
  Engine<double> eng(m);
  Rng rng(5);
  std::vector<double> sample = random_sample(m.config(), rng);
  std::vector<double> a = eng.forward(sample);
  std::vector<double> b = eng.forward(sample);
  CHECK(std::memcmp(a.data(), b.data(), a.size() * sizeof(double)) == 0);
  double total = 0.0;
  for (double p : a) {
    CHECK(p > 0.0);
    total += p;
  }
  CHECK(std::abs(total - 1.0) < 1e-12);
}

TEST_CASE("engine accounts for parameter and workspace bytes") {
  Model m = build_model(tiny_bilstm());
  Engine<double> e64(m);
  Engine<float> e32(m);
  CHECK(e64.param_bytes() == m.param_count() * sizeof(double));
  CHECK(e32.param_bytes() == m.param_count() * sizeof(float));
  CHECK(e64.workspace_bytes() > 0);
  CHECK(e64.workspace_bytes() == 2 * e32.workspace_bytes());
  CHECK(e64.input_size() == 4 * 6);
  CHECK(e64.n_classes() == 3);
}

TEST_CASE("default CNN+GRU needs less memory than default BiLSTM") {
  ModelConfig lstm_cfg;  // bilstm defaults
  ModelConfig gru_cfg;
  gru_cfg.kind = ModelKind::cnn_gru;
  Engine<double> lstm_eng(build_model(lstm_cfg));
  Engine<double> gru_eng(build_model(gru_cfg));
  CHECK(gru_eng.param_bytes() + gru_eng.workspace_bytes() <
        lstm_eng.param_bytes() + lstm_eng.workspace_bytes());
}

TEST_CASE("engine rejects wrong span sizes") {
  Model m = build_model(tiny_bilstm());
  Engine<double> eng(m);
  std::vector<double> sample(eng.input_size() + 1, 0.0);
  expect_error(ErrorKind::contract, "sample", [&] {
    eng.forward(std::span<const double>(sample));
  });
  sample.resize(eng.input_size());
  std::vector<double> probs(2);
  expect_error(ErrorKind::contract, "slots", [&] {
    eng.forward(std::span<const double>(sample), std::span<double>(probs));
  });
}
