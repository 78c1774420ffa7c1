// Acceptance gate. Runs eight release criteria and prints one line per
// criterion: "[PASS]/[FAIL] criterion N: <description> (<detail>)".
// Exit status is the number of failed criteria.
#include <array>
#include <chrono>
#include <cmath>
#include <complex>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <numbers>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "har/data.hpp"
#include "har/dsp.hpp"
#include "har/eval.hpp"
#include "har/experiment.hpp"
#include "har/models.hpp"
#include "har/rng.hpp"
#include "har/tensor.hpp"
#include "har/training.hpp"

namespace fs = std::filesystem;
using namespace har;
using Clock = std::chrono::steady_clock;

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

struct Failure : std::runtime_error {
  using std::runtime_error::runtime_error;
};

void require(bool ok, const std::string& what) {
  if (!ok) throw Failure(what);
}

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

double elapsed_s(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

Tensor rt(const std::vector<std::size_t>& shape, Rng& rng) {
  std::size_t n = 1;
  for (std::size_t d : shape) n *= d;
  std::vector<double> v(n);
  for (double& x : v) x = rng.uniform(-1.0, 1.0);
  return Tensor::from_values(shape, std::move(v));
}

models::LstmParams lstm_from(const std::array<Tensor, 12>& s) {
  models::LstmParams p;
  p.w_i = s[0];
  p.u_i = s[1];
  p.b_i = s[2];
  p.w_f = s[3];
  p.u_f = s[4];
  p.b_f = s[5];
  p.w_g = s[6];
  p.u_g = s[7];
  p.b_g = s[8];
  p.w_o = s[9];
  p.u_o = s[10];
  p.b_o = s[11];
  return p;
}

models::GruParams gru_from(const std::array<Tensor, 9>& s) {
  models::GruParams p;
  p.w_z = s[0];
  p.u_z = s[1];
  p.b_z = s[2];
  p.w_r = s[3];
  p.u_r = s[4];
  p.b_r = s[5];
  p.w_h = s[6];
  p.u_h = s[7];
  p.b_h = s[8];
  return p;
}

// ---------------------------------------------------------------------
// 1. Gradient correctness across the recurrent and convolutional kernels.

std::string criterion_gradients() {
  const auto t0 = Clock::now();
  double worst = 0.0;
  auto track = [&](double err) { worst = std::max(worst, err); };

  for (std::uint64_t seed = 1; seed <= 25; ++seed) {
    Rng rng(seed * 1009 + 7);

    {  // single LSTM cell, every parameter slot and every input
      const std::size_t in = 3, hid = 3;
      Tensor x = rt({2, in}, rng), h = rt({2, hid}, rng);
      Tensor c = rt({2, hid}, rng);
      std::array<Tensor, 12> base;
      for (std::size_t g = 0; g < 4; ++g) {
        base[3 * g] = rt({in, hid}, rng);
        base[3 * g + 1] = rt({hid, hid}, rng);
        base[3 * g + 2] = rt({hid}, rng);
      }
      for (std::size_t k = 0; k < 12; ++k) {
        track(grad_check(
            [&, k](const Tensor& t) {
              std::array<Tensor, 12> s = base;
              s[k] = t;
              auto [hn, cn] = models::lstm_cell(x, h, c, lstm_from(s));
              return sum(mul(hn, hn)) + sum(cn);
            },
            base[k]));
      }
      models::LstmParams p = lstm_from(base);
      track(grad_check(
          [&](const Tensor& t) {
            return sum(models::lstm_cell(t, h, c, p).first);
          },
          x));
      track(grad_check(
          [&](const Tensor& t) {
            return sum(models::lstm_cell(x, t, c, p).second);
          },
          h));
      track(grad_check(
          [&](const Tensor& t) {
            return sum(models::lstm_cell(x, h, t, p).first);
          },
          c));
    }

    {  // single GRU cell
      const std::size_t in = 3, hid = 2;
      Tensor x = rt({2, in}, rng), h = rt({2, hid}, rng);
      std::array<Tensor, 9> base;
      for (std::size_t g = 0; g < 3; ++g) {
        base[3 * g] = rt({in, hid}, rng);
        base[3 * g + 1] = rt({hid, hid}, rng);
        base[3 * g + 2] = rt({hid}, rng);
      }
      for (std::size_t k = 0; k < 9; ++k) {
        track(grad_check(
            [&, k](const Tensor& t) {
              std::array<Tensor, 9> s = base;
              s[k] = t;
              Tensor hn = models::gru_cell(x, h, gru_from(s));
              return sum(mul(hn, hn));
            },
            base[k]));
      }
      models::GruParams p = gru_from(base);
      track(grad_check(
          [&](const Tensor& t) { return sum(models::gru_cell(t, h, p)); },
          x));
      track(grad_check(
          [&](const Tensor& t) { return sum(models::gru_cell(x, t, p)); },
          h));
    }

    {  // bidirectional LSTM layer unrolled over three steps
      const std::size_t in = 2, hid = 2;
      std::vector<Tensor> xs = {rt({1, in}, rng), rt({1, in}, rng),
                                rt({1, in}, rng)};
      std::array<Tensor, 12> fwd, bwd;
      for (std::size_t g = 0; g < 4; ++g) {
        fwd[3 * g] = rt({in, hid}, rng);
        fwd[3 * g + 1] = rt({hid, hid}, rng);
        fwd[3 * g + 2] = rt({hid}, rng);
        bwd[3 * g] = rt({in, hid}, rng);
        bwd[3 * g + 1] = rt({hid, hid}, rng);
        bwd[3 * g + 2] = rt({hid}, rng);
      }
      auto scalar = [&](const std::array<Tensor, 12>& f,
                        const std::array<Tensor, 12>& b,
                        const std::vector<Tensor>& steps) {
        auto out = models::bilstm_layer(steps, lstm_from(f), lstm_from(b));
        Tensor acc = sum(mul(out[0], out[0]));
        for (std::size_t t = 1; t < out.size(); ++t) {
          acc = acc + sum(mul(out[t], out[t]));
        }
        return acc;
      };
      for (std::size_t k = 0; k < 12; ++k) {
        track(grad_check(
            [&, k](const Tensor& t) {
              std::array<Tensor, 12> f = fwd;
              f[k] = t;
              return scalar(f, bwd, xs);
            },
            fwd[k]));
        track(grad_check(
            [&, k](const Tensor& t) {
              std::array<Tensor, 12> b = bwd;
              b[k] = t;
              return scalar(fwd, b, xs);
            },
            bwd[k]));
      }
      for (std::size_t s = 0; s < 3; ++s) {
        track(grad_check(
            [&, s](const Tensor& t) {
              std::vector<Tensor> steps = xs;
              steps[s] = t;
              return scalar(fwd, bwd, steps);
            },
            xs[s]));
      }
    }

    {  // conv1d, both padding modes, input and kernel gradients
      Tensor x = rt({2, 2, 6}, rng);
      Tensor k = rt({2, 2, 3}, rng);
      for (auto [stride, pad] :
           {std::pair{std::size_t{1}, Padding::same},
            std::pair{std::size_t{2}, Padding::valid}}) {
        track(grad_check(
            [&, stride, pad](const Tensor& t) {
              Tensor y = conv1d(t, k, stride, pad);
              return sum(mul(y, y));
            },
            x));
        track(grad_check(
            [&, stride, pad](const Tensor& t) {
              Tensor y = conv1d(x, t, stride, pad);
              return sum(mul(y, y));
            },
            k));
      }
    }

    {  // dense layer into fused softmax cross-entropy
      const std::size_t b = 3, d = 4, k = 3;
      Tensor x = rt({b, d}, rng), w = rt({d, k}, rng), bias = rt({k}, rng);
      const std::vector<std::size_t> labels = {0, 2, 1};
      auto loss = [&](const Tensor& xx, const Tensor& ww, const Tensor& bb) {
        return cross_entropy(add_rowvec(matmul(xx, ww), bb), labels);
      };
      track(grad_check(
          [&](const Tensor& t) { return loss(t, w, bias); }, x));
      track(grad_check(
          [&](const Tensor& t) { return loss(x, t, bias); }, w));
      track(grad_check(
          [&](const Tensor& t) { return loss(x, w, t); }, bias));
    }
  }

  const double secs = elapsed_s(t0);
  require(worst < 1e-5, "max relative error " + fmt("%.3e", worst));
  require(secs < 60.0, "took " + fmt("%.1f", secs) + " s, budget 60 s");
  return "max rel err " + fmt("%.1e", worst) + ", " + fmt("%.1f", secs) +
         " s";
}

// ---------------------------------------------------------------------
// 2. DSP kernels against independent oracles.

std::string criterion_dsp() {
  double worst_dft = 0.0;
  Rng rng(20240);
  for (std::size_t n = 8; n <= 256; ++n) {
    std::vector<double> x(n);
    for (double& v : x) v = rng.uniform(-1.0, 1.0);
    auto fast = dsp::dft(std::span<const double>(x));
    for (std::size_t k = 0; k < n; ++k) {
      std::complex<double> acc = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        const double ang =
            -kTwoPi * static_cast<double>((k * i) % n) / static_cast<double>(n);
        acc += x[i] * std::complex<double>(std::cos(ang), std::sin(ang));
      }
      worst_dft = std::max(worst_dft, std::abs(fast[k] - acc));
    }
  }
  require(worst_dft < 1e-9,
          "dft vs direct summation err " + fmt("%.3e", worst_dft));

  double worst_haar = 0.0;
  for (std::size_t len : {8u, 13u, 32u, 100u, 256u}) {
    std::vector<double> x(len);
    for (double& v : x) v = rng.uniform(-2.0, 2.0);
    for (unsigned levels : {1u, 2u, 3u}) {
      dsp::HaarDwt d = dsp::haar_dwt(x, levels);
      auto back = dsp::haar_idwt(d);
      require(back.size() == x.size(), "haar round trip length");
      for (std::size_t i = 0; i < len; ++i) {
        worst_haar = std::max(worst_haar, std::abs(back[i] - x[i]));
      }
      if (d.padded_length == len) {  // energy is preserved unpadded
        double e_in = 0.0, e_out = 0.0;
        for (double v : x) e_in += v * v;
        for (double v : d.approx) e_out += v * v;
        for (const auto& band : d.details) {
          for (double v : band) e_out += v * v;
        }
        worst_haar = std::max(worst_haar, std::abs(e_in - e_out));
      }
    }
  }
  require(worst_haar < 1e-9, "haar err " + fmt("%.3e", worst_haar));

  const dsp::FilterSpec spec{2.0, 100.0, 2};
  std::vector<double> dc(600, 5.0);
  auto y = dsp::highpass(dc, spec);
  double worst_dc = 0.0;
  for (std::size_t n = 200; n < y.size(); ++n) {
    worst_dc = std::max(worst_dc, std::abs(y[n]));
  }
  require(worst_dc < 1e-3, "dc residual " + fmt("%.3e", worst_dc));

  const dsp::BiquadCoeffs c = dsp::design_highpass(spec);
  auto fitted_amplitude = [](std::span<const double> sig, double freq,
                             double fs, std::size_t begin) {
    double cc = 0, cs = 0, ss = 0, yc = 0, ys = 0;
    for (std::size_t n = begin; n < sig.size(); ++n) {
      const double ph = kTwoPi * freq * static_cast<double>(n) / fs;
      cc += std::cos(ph) * std::cos(ph);
      cs += std::cos(ph) * std::sin(ph);
      ss += std::sin(ph) * std::sin(ph);
      yc += sig[n] * std::cos(ph);
      ys += sig[n] * std::sin(ph);
    }
    const double det = cc * ss - cs * cs;
    return std::hypot((yc * ss - ys * cs) / det, (ys * cc - yc * cs) / det);
  };
  double worst_tf = 0.0;
  for (int i = 0; i < 10; ++i) {
    // ten log-spaced probes from deep stopband to passband, 0.2..40 Hz
    const double f = 0.2 * std::pow(200.0, i / 9.0);
    const double gain = dsp::biquad_gain(c, f, spec.sample_rate_hz);
    std::vector<double> x(12000);
    for (std::size_t n = 0; n < x.size(); ++n) {
      x[n] = std::cos(kTwoPi * f * static_cast<double>(n) / 100.0);
    }
    const double measured =
        fitted_amplitude(dsp::highpass(x, spec), f, 100.0, 2000);
    const double rel = std::abs(measured - gain) / std::max(gain, 1e-6);
    worst_tf = std::max(worst_tf, rel);
  }
  require(worst_tf < 0.01, "transfer fn rel err " + fmt("%.3e", worst_tf));

  return "dft " + fmt("%.1e", worst_dft) + ", haar " +
         fmt("%.1e", worst_haar) + ", biquad tf " + fmt("%.1e", worst_tf);
}

// ---------------------------------------------------------------------
// 3. Desk-scale end-to-end training on the six-class replica.

std::string criterion_training(const std::string& kind) {
  const fs::path out = fs::temp_directory_path() / ("har_acc_" + kind);
  fs::remove_all(out);

  nlohmann::json model = {{"kind", kind},
                          {"input_channels", 33},
                          {"input_time", 14},
                          {"n_classes", 6}};
  if (kind == "bilstm") {
    model["lstm_layers"] = 1;
    model["lstm_hidden"] = 32;
  } else {
    model["gru_hidden"] = 32;
  }
  nlohmann::json j = {
      {"dataset", {{"synth", {{"name", "replica"}}}}},
      {"preprocessing",
       nlohmann::json::array({{{"op", "doppler"}, {"fft_size", 64}, {"hop", 32}},
                              {{"op", "log1p"}}})},
      {"model", model},
      {"training", {{"max_epochs", 12}, {"batch_size", 32}}},
      {"output_dir", out.string()},
      {"seed", 1234}};

  const auto t0 = Clock::now();
  const auto cfg = experiment::ExperimentConfig::from_json(j);
  const auto outcome = experiment::cmd_train(cfg);
  const auto report = experiment::cmd_eval(cfg, outcome.checkpoint_dir, "val");
  const double secs = elapsed_s(t0);
  fs::remove_all(out);

  require(outcome.history.epochs.size() <= 50,
          kind + " used more than 50 epochs");
  require(report.metrics.accuracy >= 95.0,
          kind + " val accuracy " + fmt("%.2f", report.metrics.accuracy));
  require(secs < 300.0, kind + " took " + fmt("%.1f", secs) + " s");
  return kind + " " + fmt("%.1f", report.metrics.accuracy) + "% in " +
         std::to_string(outcome.history.epochs.size()) + " epochs, " +
         fmt("%.0f", secs) + " s";
}

// ---------------------------------------------------------------------
// 4. Confusion metrics against a brute-force tally.

std::string criterion_metric_oracle() {
  Rng rng(555);
  for (int inst = 0; inst < 100; ++inst) {
    const std::size_t n = 1 + rng.below(10000);
    const std::size_t k = 2 + rng.below(9);
    std::vector<std::size_t> preds(n), labels(n);
    for (std::size_t i = 0; i < n; ++i) {
      preds[i] = rng.below(k);
      labels[i] = rng.below(k);
    }
    std::vector<std::string> names(k);
    for (std::size_t c = 0; c < k; ++c) names[c] = "c" + std::to_string(c);
    const eval::Metrics m = eval::metrics(eval::confusion(preds, labels, names));

    // tally straight off the label/prediction arrays
    std::vector<std::uint64_t> tp(k, 0), pred_n(k, 0), true_n(k, 0);
    std::uint64_t correct = 0;
    for (std::size_t i = 0; i < n; ++i) {
      ++pred_n[preds[i]];
      ++true_n[labels[i]];
      if (preds[i] == labels[i]) {
        ++tp[preds[i]];
        ++correct;
      }
    }
    double mp = 0.0, mr = 0.0, mf = 0.0;
    for (std::size_t c = 0; c < k; ++c) {
      const double tpc = static_cast<double>(tp[c]);
      const double p = pred_n[c] == 0
                           ? 0.0
                           : 100.0 * (tpc / static_cast<double>(pred_n[c]));
      const double r = true_n[c] == 0
                           ? 0.0
                           : 100.0 * (tpc / static_cast<double>(true_n[c]));
      const double f = p + r == 0.0 ? 0.0 : 2.0 * p * r / (p + r);
      require(m.per_class[c].precision == p, "precision mismatch");
      require(m.per_class[c].recall == r, "recall mismatch");
      require(m.per_class[c].f1 == f, "f1 mismatch");
      mp += p;
      mr += r;
      mf += f;
    }
    const double kk = static_cast<double>(k);
    require(m.macro_precision == mp / kk, "macro precision mismatch");
    require(m.macro_recall == mr / kk, "macro recall mismatch");
    require(m.macro_f1 == mf / kk, "macro f1 mismatch");
    require(m.accuracy == 100.0 * (static_cast<double>(correct) /
                                   static_cast<double>(n)),
            "accuracy mismatch");
  }

  // balanced supports with power-of-two sizes keep every step exact, so
  // accuracy must equal macro recall to the last bit
  for (int inst = 0; inst < 50; ++inst) {
    const std::size_t k = std::size_t{2} << rng.below(3);  // 2, 4, 8
    const std::size_t support = std::size_t{8} << rng.below(4);
    std::vector<std::size_t> preds, labels;
    for (std::size_t c = 0; c < k; ++c) {
      for (std::size_t i = 0; i < support; ++i) {
        labels.push_back(c);
        preds.push_back(rng.below(k));
      }
    }
    std::vector<std::string> names(k);
    for (std::size_t c = 0; c < k; ++c) names[c] = "c" + std::to_string(c);
    const eval::Metrics m = eval::metrics(eval::confusion(preds, labels, names));
    require(m.accuracy == m.macro_recall,
            "balanced accuracy != macro recall");
  }
  return "100 random + 50 balanced instances, all exact";
}

// ---------------------------------------------------------------------
// 5. Transcribed per-class table vs its published summary row.

std::string criterion_table_fixture() {
  const std::vector<double> recalls = {93, 100, 91, 100, 77, 91};
  const std::vector<double> f1s = {96, 100, 86, 93, 83, 94};

  // the same aggregation the metrics code applies, on a matrix whose
  // diagonal realizes those recalls at support 100
  std::vector<std::size_t> preds, labels;
  for (std::size_t c = 0; c < 6; ++c) {
    for (int i = 0; i < 100; ++i) {
      labels.push_back(c);
      const bool hit = i < static_cast<int>(recalls[c]);
      preds.push_back(hit ? c : (c + 1) % 6);
    }
  }
  std::vector<std::string> names = {"box",  "circle", "clean",
                                    "fall", "run",    "walk"};
  const eval::Metrics m = eval::metrics(eval::confusion(preds, labels, names));

  double mr = 0.0, mf = 0.0;
  for (double v : recalls) mr += v;
  for (double v : f1s) mf += v;
  mr /= 6.0;
  mf /= 6.0;

  require(std::abs(m.macro_recall - mr) < 1e-9,
          "metrics macro recall " + fmt("%.4f", m.macro_recall));
  require(std::abs(mr - 92.05) <= 0.5,
          "macro recall " + fmt("%.2f", mr) + " vs 92.05");
  require(std::abs(mf - 92.03) <= 0.5,
          "macro f1 " + fmt("%.2f", mf) + " vs 92.03");
  return "recall " + fmt("%.2f", mr) + " ~ 92.05, f1 " + fmt("%.2f", mf) +
         " ~ 92.03";
}

// ---------------------------------------------------------------------
// 6. Efficiency ordering of the two default models.

std::string criterion_efficiency() {
  models::ModelConfig rnn;  // defaults: 90 x 250, 3 x 128 bilstm
  rnn.kind = models::ModelKind::bilstm;
  rnn.init_seed = 7;
  models::ModelConfig conv = rnn;
  conv.kind = models::ModelKind::cnn_gru;

  const auto rnn_stats =
      eval::benchmark_inference(models::build_model(rnn), 30);
  const auto conv_stats =
      eval::benchmark_inference(models::build_model(conv), 30);

  require(conv_stats.median_ms < rnn_stats.median_ms,
          "latency " + fmt("%.2f", conv_stats.median_ms) + " ms !< " +
              fmt("%.2f", rnn_stats.median_ms) + " ms");
  require(conv_stats.memory_mb < rnn_stats.memory_mb,
          "memory " + fmt("%.2f", conv_stats.memory_mb) + " MB !< " +
              fmt("%.2f", rnn_stats.memory_mb) + " MB");
  return "latency " + fmt("%.1f", conv_stats.median_ms) + " < " +
         fmt("%.1f", rnn_stats.median_ms) + " ms, memory " +
         fmt("%.1f", conv_stats.memory_mb) + " < " +
         fmt("%.1f", rnn_stats.memory_mb) + " MB";
}

// ---------------------------------------------------------------------
// 7. Byte-identical artifacts across repeated runs.

std::string criterion_determinism() {
  auto slurp = [](const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    require(in.good(), "missing artifact " + p.string());
    return std::string(std::istreambuf_iterator<char>(in), {});
  };

  std::array<fs::path, 2> dirs;
  std::array<std::vector<std::string>, 2> blobs;
  for (int run = 0; run < 2; ++run) {
    const fs::path out =
        fs::temp_directory_path() / ("har_acc_det_" + std::to_string(run));
    fs::remove_all(out);
    dirs[run] = out;
    nlohmann::json j = {
        {"dataset",
         {{"synth",
           {{"n_classes", 3}, {"per_class_train", 6}, {"per_class_val", 3},
            {"channels", 4}, {"time", 32}, {"noise_std", 0.3},
            {"name", "toy"}}}}},
        {"preprocessing", nlohmann::json::array({{{"op", "dft_magnitude"}}})},
        {"model",
         {{"kind", "bilstm"}, {"input_channels", 4}, {"input_time", 17},
          {"n_classes", 3}, {"lstm_layers", 1}, {"lstm_hidden", 6}}},
        {"training", {{"max_epochs", 3}, {"batch_size", 8}}},
        {"output_dir", out.string()},
        {"seed", 99}};
    const auto cfg = experiment::ExperimentConfig::from_json(j);
    const auto outcome = experiment::cmd_train(cfg);
    experiment::cmd_eval(cfg, outcome.checkpoint_dir, "val");
    for (const char* rel : {"checkpoint/params.bin", "history.csv",
                            "metrics.json", "confusion.csv"}) {
      blobs[run].push_back(slurp(out / rel));
    }
  }
  for (std::size_t i = 0; i < blobs[0].size(); ++i) {
    require(blobs[0][i] == blobs[1][i], "artifact " + std::to_string(i) +
                                            " differs between runs");
  }
  fs::remove_all(dirs[0]);
  fs::remove_all(dirs[1]);
  return "params.bin, history.csv, metrics.json, confusion.csv identical";
}

// ---------------------------------------------------------------------
// 8. Patience trace.

std::string criterion_stopper() {
  training::EarlyStopper st(3, 0.0);
  const std::vector<double> losses = {1.0, 0.9, 0.95, 0.96, 0.97};
  std::vector<bool> stops;
  for (double l : losses) stops.push_back(st.update(l));
  const std::vector<bool> expect = {false, false, false, false, true};
  require(stops == expect, "stop flags differ from the hand trace");
  require(st.best_index() == 2,
          "best index " + std::to_string(st.best_index()) + " != 2");
  require(st.best_loss() == 0.9, "best loss " + fmt("%.4f", st.best_loss()));
  return "stopped at update 5, kept epoch 2";
}

}  // namespace

int main() {
  struct Criterion {
    int n;
    const char* desc;
    std::function<std::string()> run;
  };
  const std::vector<Criterion> criteria = {
      {1, "recurrent and conv gradients match central differences",
       criterion_gradients},
      {2, "dsp kernels match independent oracles", criterion_dsp},
      {3, "both models reach 95% validation accuracy at replica scale",
       [] {
         return criterion_training("bilstm") + "; " +
                criterion_training("cnn_gru");
       }},
      {4, "confusion metrics equal a brute-force tally",
       criterion_metric_oracle},
      {5, "transcribed class table aggregates to its summary row",
       criterion_table_fixture},
      {6, "conv-recurrent model is faster and smaller than the bilstm",
       criterion_efficiency},
      {7, "identical configs reproduce artifacts byte for byte",
       criterion_determinism},
      {8, "patience stopper stops on schedule and keeps the best epoch",
       criterion_stopper},
  };

  int failed = 0;
  for (const Criterion& c : criteria) {
    std::string detail;
    bool ok = true;
    try {
      detail = c.run();
    } catch (const std::exception& e) {
      ok = false;
      detail = e.what();
    }
    std::printf("[%s] criterion %d: %s (%s)\n", ok ? "PASS" : "FAIL", c.n,
                c.desc, detail.c_str());
    std::fflush(stdout);
    if (!ok) ++failed;
  }
  return failed;
}
