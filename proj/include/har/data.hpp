#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

namespace har::data {

struct CsiSample {
  std::vector<float> values;  // row-major [channels x time]
  int label = 0;
  std::string source_id;
};

// Immutable once built; split names are conventionally "train", "val" and
// optionally "test".
struct Dataset {
  std::string name;
  std::vector<std::string> classes;
  std::size_t channels = 0;
  std::size_t time = 0;
  double sample_rate_hz = 100.0;
  std::map<std::string, std::vector<CsiSample>> splits;
  nlohmann::json provenance;

  const std::vector<CsiSample>& split(const std::string& name) const;
  bool has_split(const std::string& name) const {
    return splits.count(name) != 0;
  }
  std::size_t total_samples() const;
  // Per-class sample count within one split.
  std::vector<std::size_t> class_counts(const std::string& split) const;
  // Shape consistency, label ranges, split disjointness by source_id.
  void validate() const;
};

struct SynthConfig {
  std::size_t n_classes = 6;
  std::size_t per_class_train = 156;
  std::size_t per_class_val = 44;
  std::size_t per_class_test = 0;
  std::size_t channels = 342;
  std::size_t time = 500;
  double sample_rate_hz = 100.0;
  double noise_std = 0.5;
  double base_hz = 3.0;  // class c carries a tone at base_hz * (c + 1)
  std::uint64_t seed = 0;
  std::string name = "synthetic";
  std::vector<std::string> class_names;  // default: class_0..class_{K-1}
  void validate() const;
};

// Seeded synthetic CSI-like generator. Per class c, every channel carries
// a tone at f_c = base_hz * (c+1) and a weaker second harmonic at 2 f_c,
// each with a per-channel random phase, plus a slow 0.2 Hz drift, a
// per-channel offset, and Gaussian noise of the configured std. Generation
// is a pure function of the config, so equal seeds give bit-identical
// datasets.
Dataset synth_generate(const SynthConfig& config);

// Directory format: manifest.json plus one <split>.bin per split holding
// the samples consecutively as little-endian 32-bit IEEE-754 reals,
// row-major [sample][channel][time]. Writes go to a temp directory that is
// renamed into place.
void save_dataset(const Dataset& ds, const std::filesystem::path& dir);
Dataset load_dataset(const std::filesystem::path& dir);

struct SplitResult {
  std::map<std::string, std::vector<CsiSample>> splits;
  // True when some class had fewer samples than requested and got a
  // shortened allocation.
  bool degenerate = false;
};

// Shuffles each class separately (seeded) and allocates per-class counts
// that differ from exact proportionality by at most 1.
SplitResult stratified_split(
    const std::vector<CsiSample>& samples,
    const std::vector<std::pair<std::string, double>>& ratios,
    std::uint64_t seed);

// Same, with explicit per-class counts per split.
SplitResult stratified_split_counts(
    const std::vector<CsiSample>& samples,
    const std::vector<std::pair<std::string, std::size_t>>& counts,
    std::uint64_t seed);

}  // namespace har::data
