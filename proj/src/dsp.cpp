#include "har/dsp.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "har/error.hpp"
#include "json_util.hpp"

namespace har::dsp {

namespace {
constexpr double kPi = std::numbers::pi;
constexpr double kTwoPi = 2.0 * std::numbers::pi;

bool is_pow2(std::size_t n) { return n != 0 && (n & (n - 1)) == 0; }
}  // namespace

// ---------------------------------------------------------------------------
// Filtering

void FilterSpec::validate() const {
  if (order != 2) {
    throw_config("filter: only order 2 is supported, got " +
                 std::to_string(order));
  }
  if (!(sample_rate_hz > 0.0)) {
    throw_config("filter: sample_rate_hz must be positive");
  }
  if (!(cutoff_hz > 0.0) || cutoff_hz >= sample_rate_hz / 2.0) {
    throw_config("filter: cutoff_hz " + std::to_string(cutoff_hz) +
                 " must lie in (0, " + std::to_string(sample_rate_hz / 2.0) +
                 ") for sample_rate_hz " + std::to_string(sample_rate_hz));
  }
}

BiquadCoeffs design_highpass(const FilterSpec& spec) {
  spec.validate();
  // Bilinear transform of H(s) = s^2 / (s^2 + sqrt(2) s + 1) with the
  // cutoff prewarped: K = tan(pi fc / fs).
  const double k = std::tan(kPi * spec.cutoff_hz / spec.sample_rate_hz);
  const double k2 = k * k;
  const double sqrt2 = std::numbers::sqrt2;
  const double norm = 1.0 / (1.0 + sqrt2 * k + k2);
  BiquadCoeffs c;
  c.b0 = norm;
  c.b1 = -2.0 * norm;
  c.b2 = norm;
  c.a1 = 2.0 * (k2 - 1.0) * norm;
  c.a2 = (1.0 - sqrt2 * k + k2) * norm;
  return c;
}

std::vector<double> highpass(std::span<const double> x,
                             const FilterSpec& spec) {
  const BiquadCoeffs c = design_highpass(spec);
  std::vector<double> y(x.size());
  double x1 = 0.0, x2 = 0.0, y1 = 0.0, y2 = 0.0;
  for (std::size_t n = 0; n < x.size(); ++n) {
    const double yn =
        c.b0 * x[n] + c.b1 * x1 + c.b2 * x2 - c.a1 * y1 - c.a2 * y2;
    x2 = x1;
    x1 = x[n];
    y2 = y1;
    y1 = yn;
    y[n] = yn;
  }
  return y;
}

double biquad_gain(const BiquadCoeffs& c, double freq_hz,
                   double sample_rate_hz) {
  const double w = kTwoPi * freq_hz / sample_rate_hz;
  const std::complex<double> z1 = std::polar(1.0, -w);
  const std::complex<double> z2 = z1 * z1;
  const std::complex<double> num = c.b0 + c.b1 * z1 + c.b2 * z2;
  const std::complex<double> den = 1.0 + c.a1 * z1 + c.a2 * z2;
  return std::abs(num / den);
}

// ---------------------------------------------------------------------------
// Normalization

std::vector<double> unwrap_phase(std::span<const double> x) {
  std::vector<double> y(x.size());
  if (x.empty()) return y;
  y[0] = x[0];
  for (std::size_t n = 1; n < x.size(); ++n) {
    double d = std::remainder(x[n] - x[n - 1], kTwoPi);  // in [-pi, pi]
    y[n] = y[n - 1] + d;
  }
  return y;
}

std::vector<double> detrend_linear(std::span<const double> x) {
  const std::size_t n = x.size();
  std::vector<double> y(x.begin(), x.end());
  if (n < 2) {
    if (n == 1) y[0] = 0.0;
    return y;
  }
  const double tbar = (static_cast<double>(n) - 1.0) / 2.0;
  double xbar = 0.0;
  for (double v : x) xbar += v;
  xbar /= static_cast<double>(n);
  double num = 0.0, den = 0.0;
  for (std::size_t t = 0; t < n; ++t) {
    const double dt = static_cast<double>(t) - tbar;
    num += dt * (x[t] - xbar);
    den += dt * dt;
  }
  const double slope = num / den;
  const double intercept = xbar - slope * tbar;
  for (std::size_t t = 0; t < n; ++t) {
    y[t] -= intercept + slope * static_cast<double>(t);
  }
  return y;
}

namespace {

void zscore_inplace(double* row, std::size_t n) {
  double mean = 0.0;
  for (std::size_t i = 0; i < n; ++i) mean += row[i];
  mean /= static_cast<double>(n);
  double var = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double d = row[i] - mean;
    var += d * d;
  }
  const double std = std::sqrt(var / static_cast<double>(n));
  if (std < 1e-12) {
    std::fill(row, row + n, 0.0);
    return;
  }
  for (std::size_t i = 0; i < n; ++i) row[i] = (row[i] - mean) / std;
}

}  // namespace

void normalize_inplace(double* data, std::size_t channels, std::size_t time,
                       const NormalizeSpec& spec) {
  std::size_t phase_start = channels;
  if (spec.mode == NormalizeMode::amplitude_phase_zscore) {
    phase_start = spec.phase_start_channel == NormalizeSpec::kPhaseStartAuto
                      ? channels / 2
                      : spec.phase_start_channel;
    if (phase_start > channels) {
      throw_contract("normalize: phase_start_channel " +
                     std::to_string(phase_start) + " exceeds channel count " +
                     std::to_string(channels));
    }
  }
  for (std::size_t c = 0; c < channels; ++c) {
    double* row = data + c * time;
    if (c >= phase_start) {
      std::vector<double> tmp =
          detrend_linear(unwrap_phase(std::span(row, time)));
      std::copy(tmp.begin(), tmp.end(), row);
    }
    zscore_inplace(row, time);
  }
}

// ---------------------------------------------------------------------------
// Transforms

namespace {

std::vector<std::complex<double>> dft_core(
    std::span<const std::complex<double>> x, bool inverse) {
  const std::size_t n = x.size();
  std::vector<std::complex<double>> out(x.begin(), x.end());
  if (n <= 1) return out;
  const double sign = inverse ? 1.0 : -1.0;
  if (is_pow2(n)) {
    // Iterative radix-2 with a precomputed twiddle table.
    for (std::size_t i = 1, j = 0; i < n; ++i) {
      std::size_t bit = n >> 1;
      for (; j & bit; bit >>= 1) j ^= bit;
      j ^= bit;
      if (i < j) std::swap(out[i], out[j]);
    }
    std::vector<std::complex<double>> tw(n / 2);
    for (std::size_t j = 0; j < n / 2; ++j) {
      tw[j] = std::polar(1.0, sign * kTwoPi * static_cast<double>(j) /
                                  static_cast<double>(n));
    }
    for (std::size_t len = 2; len <= n; len <<= 1) {
      const std::size_t step = n / len;
      for (std::size_t i = 0; i < n; i += len) {
        for (std::size_t j = 0; j < len / 2; ++j) {
          const std::complex<double> u = out[i + j];
          const std::complex<double> v = out[i + j + len / 2] * tw[j * step];
          out[i + j] = u + v;
          out[i + j + len / 2] = u - v;
        }
      }
    }
  } else {
    // Direct evaluation; the index product is reduced mod n before the
    // angle is formed to keep large-argument trig out of the sum.
    for (std::size_t k = 0; k < n; ++k) {
      std::complex<double> acc = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        const std::size_t m = (k * i) % n;
        acc += x[i] * std::polar(1.0, sign * kTwoPi * static_cast<double>(m) /
                                          static_cast<double>(n));
      }
      out[k] = acc;
    }
  }
  return out;
}

}  // namespace

std::vector<std::complex<double>> dft(std::span<const double> x) {
  std::vector<std::complex<double>> cx(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) cx[i] = x[i];
  return dft_core(cx, false);
}

std::vector<std::complex<double>> dft(
    std::span<const std::complex<double>> x) {
  return dft_core(x, false);
}

std::vector<std::complex<double>> idft(
    std::span<const std::complex<double>> x) {
  auto out = dft_core(x, true);
  const double scale = x.empty() ? 1.0 : 1.0 / static_cast<double>(x.size());
  for (auto& v : out) v *= scale;
  return out;
}

// ---------------------------------------------------------------------------
// Haar DWT

HaarDwt haar_dwt(std::span<const double> x, unsigned levels) {
  if (levels == 0) throw_config("haar_dwt: levels must be positive");
  if (x.empty()) throw_contract("haar_dwt: empty input");
  const std::size_t block = std::size_t{1} << levels;
  if (block > x.size()) {
    throw_config("haar_dwt: " + std::to_string(levels) +
                 " levels need at least " + std::to_string(block) +
                 " samples, got " + std::to_string(x.size()));
  }
  HaarDwt out;
  out.original_length = x.size();
  out.padded_length = ((x.size() + block - 1) / block) * block;

  std::vector<double> cur(x.begin(), x.end());
  cur.resize(out.padded_length, x.back());  // edge replication
  const double inv_sqrt2 = 1.0 / std::numbers::sqrt2;
  for (unsigned l = 0; l < levels; ++l) {
    const std::size_t half = cur.size() / 2;
    std::vector<double> approx(half), detail(half);
    for (std::size_t i = 0; i < half; ++i) {
      approx[i] = (cur[2 * i] + cur[2 * i + 1]) * inv_sqrt2;
      detail[i] = (cur[2 * i] - cur[2 * i + 1]) * inv_sqrt2;
    }
    out.details.push_back(std::move(detail));
    cur = std::move(approx);
  }
  out.approx = std::move(cur);
  return out;
}

std::vector<double> haar_idwt(const HaarDwt& dwt) {
  std::vector<double> cur = dwt.approx;
  const double inv_sqrt2 = 1.0 / std::numbers::sqrt2;
  for (std::size_t l = dwt.details.size(); l-- > 0;) {
    const std::vector<double>& detail = dwt.details[l];
    if (detail.size() != cur.size()) {
      throw_contract("haar_idwt: band sizes are inconsistent");
    }
    std::vector<double> next(cur.size() * 2);
    for (std::size_t i = 0; i < cur.size(); ++i) {
      next[2 * i] = (cur[i] + detail[i]) * inv_sqrt2;
      next[2 * i + 1] = (cur[i] - detail[i]) * inv_sqrt2;
    }
    cur = std::move(next);
  }
  cur.resize(dwt.original_length);
  return cur;
}

// ---------------------------------------------------------------------------
// Spectrogram

void SpectrogramSpec::validate() const {
  if (!is_pow2(fft_size)) {
    throw_config("spectrogram: fft_size must be a power of two, got " +
                 std::to_string(fft_size));
  }
  if (hop == 0 || hop > fft_size) {
    throw_config("spectrogram: hop must lie in [1, fft_size], got " +
                 std::to_string(hop));
  }
}

Spectrogram doppler_spectrogram(const double* data, std::size_t channels,
                                std::size_t time,
                                const SpectrogramSpec& spec) {
  spec.validate();
  if (channels == 0) throw_contract("doppler_spectrogram: no channels");
  if (time < spec.fft_size) {
    throw_config("doppler_spectrogram: time length " + std::to_string(time) +
                 " is shorter than fft_size " + std::to_string(spec.fft_size));
  }
  Spectrogram out;
  out.bins = spec.fft_size / 2 + 1;
  out.frames = (time - spec.fft_size) / spec.hop + 1;
  out.mag.assign(out.bins * out.frames, 0.0);

  std::vector<double> window(spec.fft_size);
  for (std::size_t i = 0; i < spec.fft_size; ++i) {
    window[i] = 0.5 * (1.0 - std::cos(kTwoPi * static_cast<double>(i) /
                                      static_cast<double>(spec.fft_size)));
  }

  std::vector<std::complex<double>> buf(spec.fft_size);
  for (std::size_t c = 0; c < channels; ++c) {
    const double* row = data + c * time;
    double mean = 0.0;
    for (std::size_t i = 0; i < time; ++i) mean += row[i];
    mean /= static_cast<double>(time);
    for (std::size_t f = 0; f < out.frames; ++f) {
      const double* seg = row + f * spec.hop;
      for (std::size_t i = 0; i < spec.fft_size; ++i) {
        buf[i] = (seg[i] - mean) * window[i];
      }
      auto spectrum = dft(std::span<const std::complex<double>>(buf));
      for (std::size_t b = 0; b < out.bins; ++b) {
        out.mag[b * out.frames + f] += std::abs(spectrum[b]);
      }
    }
  }
  const double inv = 1.0 / static_cast<double>(channels);
  for (double& v : out.mag) v *= inv;
  return out;
}

// ---------------------------------------------------------------------------
// Windowing

void WindowSpec::validate() const {
  if (length == 0) throw_config("window: length must be positive");
  if (stride == 0 || stride > length) {
    throw_config("window: stride must lie in [1, length], got stride " +
                 std::to_string(stride) + " for length " +
                 std::to_string(length));
  }
}

WindowingResult sliding_windows(const double* data, std::size_t channels,
                                std::size_t time, const WindowSpec& spec) {
  spec.validate();
  WindowingResult res;
  if (time < spec.length) {
    res.too_short = true;
    return res;
  }
  const std::size_t count = (time - spec.length) / spec.stride + 1;
  res.windows.reserve(count);
  for (std::size_t w = 0; w < count; ++w) {
    WindowSlice slice;
    slice.offset = w * spec.stride;
    slice.values.resize(channels * spec.length);
    for (std::size_t c = 0; c < channels; ++c) {
      const double* src = data + c * time + slice.offset;
      std::copy(src, src + spec.length,
                slice.values.begin() + c * spec.length);
    }
    res.windows.push_back(std::move(slice));
  }
  return res;
}

// ---------------------------------------------------------------------------
// Pipeline

namespace {

using jsonu::check_keys;
using jsonu::get_bool;
using jsonu::get_num;
using jsonu::get_str;
using jsonu::get_uint;
using nlohmann::json;

NormalizeMode parse_mode(const std::string& s, const std::string& ctx) {
  if (s == "amplitude_zscore") return NormalizeMode::amplitude_zscore;
  if (s == "amplitude_phase_zscore") {
    return NormalizeMode::amplitude_phase_zscore;
  }
  throw_config(ctx + ": unknown mode \"" + s +
               "\" (amplitude_zscore, amplitude_phase_zscore)");
}

}  // namespace

const std::vector<std::string>& Pipeline::step_names() {
  static const std::vector<std::string> names = {
      "highpass", "normalize",  "sliding_window",
      "doppler",  "dft_magnitude", "haar", "log1p"};
  return names;
}

Pipeline Pipeline::from_json(const nlohmann::json& steps,
                             double sample_rate_hz) {
  if (!steps.is_array()) throw_config("preprocess: expected an array of steps");
  Pipeline p;
  for (std::size_t idx = 0; idx < steps.size(); ++idx) {
    const json& s = steps[idx];
    const std::string ctx = "preprocess[" + std::to_string(idx) + "]";
    jsonu::require_object(s, ctx);
    const std::string op = get_str(s, "op", "", ctx);
    if (op.empty()) throw_config(ctx + ": missing \"op\"");
    json resolved{{"op", op}};

    if (op == "highpass") {
      check_keys(s, ctx, {"op", "cutoff_hz"});
      FilterSpec fs;
      fs.cutoff_hz = get_num(s, "cutoff_hz", 2.0, ctx);
      fs.sample_rate_hz = sample_rate_hz;
      fs.validate();
      resolved["cutoff_hz"] = fs.cutoff_hz;
      p.steps_.push_back([fs](std::vector<Out>& outs) {
        for (Out& o : outs) {
          for (std::size_t c = 0; c < o.channels; ++c) {
            double* row = o.values.data() + c * o.time;
            auto filtered = highpass(std::span(row, o.time), fs);
            std::copy(filtered.begin(), filtered.end(), row);
          }
        }
      });
    } else if (op == "normalize") {
      check_keys(s, ctx, {"op", "mode", "phase_start_channel"});
      NormalizeSpec ns;
      const std::string mode =
          get_str(s, "mode", "amplitude_zscore", ctx);
      ns.mode = parse_mode(mode, ctx);
      ns.phase_start_channel = get_uint(s, "phase_start_channel",
                                        NormalizeSpec::kPhaseStartAuto, ctx);
      resolved["mode"] = mode;
      if (ns.phase_start_channel != NormalizeSpec::kPhaseStartAuto) {
        resolved["phase_start_channel"] = ns.phase_start_channel;
      }
      p.steps_.push_back([ns](std::vector<Out>& outs) {
        for (Out& o : outs) {
          normalize_inplace(o.values.data(), o.channels, o.time, ns);
        }
      });
    } else if (op == "sliding_window") {
      check_keys(s, ctx, {"op", "length", "stride"});
      WindowSpec ws;
      ws.length = get_uint(s, "length", 250, ctx);
      ws.stride = get_uint(s, "stride", 125, ctx);
      ws.validate();
      resolved["length"] = ws.length;
      resolved["stride"] = ws.stride;
      p.steps_.push_back([ws](std::vector<Out>& outs) {
        std::vector<Out> next;
        for (Out& o : outs) {
          auto res = sliding_windows(o.values.data(), o.channels, o.time, ws);
          for (WindowSlice& w : res.windows) {
            Out n;
            n.values = std::move(w.values);
            n.channels = o.channels;
            n.time = ws.length;
            n.window_offset = o.window_offset + w.offset;
            next.push_back(std::move(n));
          }
        }
        outs = std::move(next);
      });
    } else if (op == "doppler") {
      check_keys(s, ctx, {"op", "fft_size", "hop"});
      SpectrogramSpec sp;
      sp.fft_size = get_uint(s, "fft_size", 128, ctx);
      sp.hop = get_uint(s, "hop", 64, ctx);
      sp.validate();
      resolved["fft_size"] = sp.fft_size;
      resolved["hop"] = sp.hop;
      p.steps_.push_back([sp](std::vector<Out>& outs) {
        for (Out& o : outs) {
          Spectrogram sg =
              doppler_spectrogram(o.values.data(), o.channels, o.time, sp);
          o.values = std::move(sg.mag);
          o.channels = sg.bins;
          o.time = sg.frames;
        }
      });
    } else if (op == "dft_magnitude") {
      check_keys(s, ctx, {"op", "remove_mean"});
      const bool remove_mean = get_bool(s, "remove_mean", true, ctx);
      resolved["remove_mean"] = remove_mean;
      p.steps_.push_back([remove_mean](std::vector<Out>& outs) {
        for (Out& o : outs) {
          const std::size_t bins = o.time / 2 + 1;
          std::vector<double> next(o.channels * bins);
          std::vector<double> row(o.time);
          for (std::size_t c = 0; c < o.channels; ++c) {
            const double* src = o.values.data() + c * o.time;
            std::copy(src, src + o.time, row.begin());
            if (remove_mean) {
              double mean = 0.0;
              for (double v : row) mean += v;
              mean /= static_cast<double>(o.time);
              for (double& v : row) v -= mean;
            }
            auto spectrum = dft(std::span<const double>(row));
            for (std::size_t b = 0; b < bins; ++b) {
              next[c * bins + b] = std::abs(spectrum[b]);
            }
          }
          o.values = std::move(next);
          o.time = bins;
        }
      });
    } else if (op == "haar") {
      check_keys(s, ctx, {"op", "levels"});
      const unsigned levels =
          static_cast<unsigned>(get_uint(s, "levels", 1, ctx));
      if (levels == 0) throw_config(ctx + ": levels must be positive");
      resolved["levels"] = levels;
      p.steps_.push_back([levels](std::vector<Out>& outs) {
        for (Out& o : outs) {
          HaarDwt first = haar_dwt(
              std::span(o.values.data(), o.time), levels);
          const std::size_t padded = first.padded_length;
          std::vector<double> next(o.channels * padded);
          for (std::size_t c = 0; c < o.channels; ++c) {
            HaarDwt d =
                c == 0 ? std::move(first)
                       : haar_dwt(std::span(o.values.data() + c * o.time,
                                            o.time),
                                  levels);
            double* dst = next.data() + c * padded;
            std::copy(d.approx.begin(), d.approx.end(), dst);
            dst += d.approx.size();
            for (std::size_t l = d.details.size(); l-- > 0;) {
              std::copy(d.details[l].begin(), d.details[l].end(), dst);
              dst += d.details[l].size();
            }
          }
          o.values = std::move(next);
          o.time = padded;
        }
      });
    } else if (op == "log1p") {
      check_keys(s, ctx, {"op"});
      p.steps_.push_back([](std::vector<Out>& outs) {
        for (Out& o : outs) {
          for (double& v : o.values) {
            v = v >= 0.0 ? std::log1p(v) : -std::log1p(-v);
          }
        }
      });
    } else {
      std::string known;
      for (const auto& n : step_names()) {
        if (!known.empty()) known += ", ";
        known += n;
      }
      throw_config(ctx + ": unknown op \"" + op + "\" (known: " + known + ")");
    }
    p.resolved_.push_back(std::move(resolved));
  }
  return p;
}

std::vector<Pipeline::Out> Pipeline::apply(const double* data,
                                           std::size_t channels,
                                           std::size_t time) const {
  std::vector<Out> outs(1);
  outs[0].values.assign(data, data + channels * time);
  outs[0].channels = channels;
  outs[0].time = time;
  for (const StepFn& step : steps_) step(outs);
  return outs;
}

}  // namespace har::dsp
