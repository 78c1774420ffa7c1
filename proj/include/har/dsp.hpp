#pragma once

#include <complex>
#include <cstddef>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

namespace har::dsp {

// ---------------------------------------------------------------------------
// Filtering

struct FilterSpec {
  double cutoff_hz = 2.0;
  double sample_rate_hz = 100.0;
  int order = 2;  // only 2 is supported
  void validate() const;  // config error unless 0 < cutoff < sample_rate / 2
};

struct BiquadCoeffs {
  double b0, b1, b2, a1, a2;  // y[n] = b0 x[n]+b1 x[n-1]+b2 x[n-2]-a1 y[n-1]-a2 y[n-2]
};

// Second-order Butterworth high-pass designed with the bilinear transform
// (frequency prewarped).
BiquadCoeffs design_highpass(const FilterSpec& spec);

// Applies the designed filter with zero initial state; output length equals
// input length.
std::vector<double> highpass(std::span<const double> x, const FilterSpec& spec);

// Analytic |H(e^{j 2 pi f / fs})| of a designed biquad.
double biquad_gain(const BiquadCoeffs& c, double freq_hz, double sample_rate_hz);

// ---------------------------------------------------------------------------
// Normalization

enum class NormalizeMode { amplitude_zscore, amplitude_phase_zscore };

struct NormalizeSpec {
  NormalizeMode mode = NormalizeMode::amplitude_zscore;
  // First channel treated as phase in amplitude_phase_zscore mode; the
  // canonical stacking puts amplitudes first, phases second. Defaults to
  // channels/2 when left unset.
  std::size_t phase_start_channel = kPhaseStartAuto;
  static constexpr std::size_t kPhaseStartAuto = static_cast<std::size_t>(-1);
};

// Removes +-2 pi jumps: each successive difference is shifted by a multiple
// of 2 pi into (-pi, pi].
std::vector<double> unwrap_phase(std::span<const double> x);

// Subtracts the least-squares line a + b t.
std::vector<double> detrend_linear(std::span<const double> x);

// Per-channel z-score with population std; channels with std < 1e-12 map to
// all zeros. Phase channels are unwrapped and detrended first.
void normalize_inplace(double* data, std::size_t channels, std::size_t time,
                       const NormalizeSpec& spec);

// ---------------------------------------------------------------------------
// Transforms

// X[k] = sum_n x[n] e^{-2 pi i k n / N}. Radix-2 fast path for powers of
// two, direct evaluation otherwise.
std::vector<std::complex<double>> dft(std::span<const double> x);
std::vector<std::complex<double>> dft(std::span<const std::complex<double>> x);
std::vector<std::complex<double>> idft(std::span<const std::complex<double>> x);

struct HaarDwt {
  std::vector<std::vector<double>> details;  // details[l] for level l
  std::vector<double> approx;                // final approximation band
  std::size_t original_length = 0;
  std::size_t padded_length = 0;  // original padded by edge replication
};

// Orthonormal Haar analysis: per level, approx = (x0+x1)/sqrt(2),
// detail = (x0-x1)/sqrt(2) over adjacent pairs. Input is padded to a
// multiple of 2^levels by edge replication first.
HaarDwt haar_dwt(std::span<const double> x, unsigned levels);

// Inverse transform; returns the original (unpadded) samples.
std::vector<double> haar_idwt(const HaarDwt& dwt);

// ---------------------------------------------------------------------------
// Spectrogram

struct SpectrogramSpec {
  std::size_t fft_size = 128;  // power of two
  std::size_t hop = 64;        // 0 < hop <= fft_size
  void validate() const;
};

struct Spectrogram {
  std::size_t bins = 0;    // fft_size / 2 + 1
  std::size_t frames = 0;  // floor((T - fft_size) / hop) + 1
  std::vector<double> mag;  // row-major [bins x frames]
  double at(std::size_t bin, std::size_t frame) const {
    return mag[bin * frames + frame];
  }
};

// Motion profile of a [channels x time] sample: per channel subtract the
// channel mean, run a Hann-windowed short-time DFT, and average the
// magnitudes across channels.
Spectrogram doppler_spectrogram(const double* data, std::size_t channels,
                                std::size_t time, const SpectrogramSpec& spec);

// ---------------------------------------------------------------------------
// Windowing

struct WindowSpec {
  std::size_t length = 250;
  std::size_t stride = 125;  // 0 < stride <= length
  void validate() const;
};

struct WindowSlice {
  std::size_t offset = 0;            // start index in the source series
  std::vector<double> values;        // [channels x length]
};

struct WindowingResult {
  std::vector<WindowSlice> windows;
  bool too_short = false;  // T < length: empty result, flagged not fatal
};

WindowingResult sliding_windows(const double* data, std::size_t channels,
                                std::size_t time, const WindowSpec& spec);

// ---------------------------------------------------------------------------
// Declarative pipeline

// An ordered list of named steps applied per sample. Steps map a
// [channels x time] buffer to a new one; "sliding_window" may fan one
// sample out into several. Unknown step names or parameters are rejected.
class Pipeline {
 public:
  struct Out {
    std::vector<double> values;  // [channels x time]
    std::size_t channels = 0;
    std::size_t time = 0;
    std::size_t window_offset = 0;  // from sliding_window, else 0
  };

  Pipeline() = default;
  static Pipeline from_json(const nlohmann::json& steps, double sample_rate_hz);

  std::vector<Out> apply(const double* data, std::size_t channels,
                         std::size_t time) const;

  bool empty() const { return steps_.empty(); }
  // Step list with every default materialized.
  nlohmann::json resolved() const { return resolved_; }
  static const std::vector<std::string>& step_names();

 private:
  using StepFn = std::function<void(std::vector<Out>&)>;
  std::vector<StepFn> steps_;
  nlohmann::json resolved_ = nlohmann::json::array();
};

}  // namespace har::dsp
