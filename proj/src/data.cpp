#include "har/data.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>
#include <set>

#include "har/error.hpp"
#include "har/rng.hpp"
#include "json_util.hpp"

static_assert(std::endian::native == std::endian::little,
              "sample binaries are little-endian; byte swapping is not "
              "implemented");

namespace har::data {

namespace fs = std::filesystem;
using nlohmann::json;

// ---------------------------------------------------------------------------
// Dataset

const std::vector<CsiSample>& Dataset::split(const std::string& name) const {
  auto it = splits.find(name);
  if (it == splits.end()) {
    throw_config("dataset \"" + this->name + "\" has no split \"" + name +
                 "\"");
  }
  return it->second;
}

std::size_t Dataset::total_samples() const {
  std::size_t n = 0;
  for (const auto& [_, list] : splits) n += list.size();
  return n;
}

std::vector<std::size_t> Dataset::class_counts(const std::string& name) const {
  std::vector<std::size_t> counts(classes.size(), 0);
  for (const CsiSample& s : split(name)) {
    counts.at(static_cast<std::size_t>(s.label))++;
  }
  return counts;
}

void Dataset::validate() const {
  if (classes.empty()) throw_contract("dataset: empty class roster");
  if (channels == 0 || time == 0) {
    throw_contract("dataset: channels and time must be positive");
  }
  std::set<std::string> ids;
  for (const auto& [split_name, list] : splits) {
    for (const CsiSample& s : list) {
      if (s.values.size() != channels * time) {
        throw_contract("dataset: sample \"" + s.source_id + "\" in split \"" +
                       split_name + "\" has " +
                       std::to_string(s.values.size()) +
                       " values, expected " + std::to_string(channels * time));
      }
      if (s.label < 0 || static_cast<std::size_t>(s.label) >= classes.size()) {
        throw_contract("dataset: sample \"" + s.source_id + "\" has label " +
                       std::to_string(s.label) + " outside 0.." +
                       std::to_string(classes.size() - 1));
      }
      if (!ids.insert(s.source_id).second) {
        throw_contract("dataset: source_id \"" + s.source_id +
                       "\" appears in more than one place");
      }
    }
  }
}

// ---------------------------------------------------------------------------
// Synthetic generator

void SynthConfig::validate() const {
  if (n_classes == 0) throw_config("synth: n_classes must be positive");
  if (channels == 0 || time == 0) {
    throw_config("synth: channels and time must be positive");
  }
  if (!(sample_rate_hz > 0.0)) {
    throw_config("synth: sample_rate_hz must be positive");
  }
  if (!(noise_std >= 0.0)) throw_config("synth: noise_std must be >= 0");
  if (!(base_hz > 0.0)) throw_config("synth: base_hz must be positive");
  if (2.0 * base_hz * static_cast<double>(n_classes) >= sample_rate_hz / 2.0) {
    throw_config("synth: harmonic of the top class tone (" +
                 std::to_string(2.0 * base_hz * n_classes) +
                 " Hz) reaches Nyquist; lower base_hz or n_classes");
  }
  if (!class_names.empty() && class_names.size() != n_classes) {
    throw_config("synth: class_names size " +
                 std::to_string(class_names.size()) + " != n_classes " +
                 std::to_string(n_classes));
  }
}

namespace {

CsiSample synth_sample(const SynthConfig& cfg, std::size_t split_idx,
                       std::size_t cls, std::size_t idx,
                       const std::string& split_name) {
  constexpr double kTwoPi = 2.0 * std::numbers::pi;
  const double f1 = cfg.base_hz * static_cast<double>(cls + 1);
  const double f2 = 2.0 * f1;
  const double dt = 1.0 / cfg.sample_rate_hz;

  Rng rng(mix_seed(mix_seed(mix_seed(cfg.seed, split_idx), cls), idx));
  CsiSample s;
  s.label = static_cast<int>(cls);
  s.source_id = "synth/" + split_name + "/" + std::to_string(cls) + "/" +
                std::to_string(idx);
  s.values.resize(cfg.channels * cfg.time);
  for (std::size_t c = 0; c < cfg.channels; ++c) {
    const double ph1 = rng.uniform(0.0, kTwoPi);
    const double ph2 = rng.uniform(0.0, kTwoPi);
    const double phd = rng.uniform(0.0, kTwoPi);
    const double dc = rng.uniform(-0.5, 0.5);
    float* row = s.values.data() + c * cfg.time;
    for (std::size_t t = 0; t < cfg.time; ++t) {
      const double at = static_cast<double>(t) * dt;
      double v = std::sin(kTwoPi * f1 * at + ph1) +
                 0.4 * std::sin(kTwoPi * f2 * at + ph2) +
                 0.3 * std::sin(kTwoPi * 0.2 * at + phd) + dc;
      if (cfg.noise_std > 0.0) v += cfg.noise_std * rng.normal();
      row[t] = static_cast<float>(v);
    }
  }
  return s;
}

}  // namespace

Dataset synth_generate(const SynthConfig& cfg) {
  cfg.validate();
  Dataset ds;
  ds.name = cfg.name;
  ds.channels = cfg.channels;
  ds.time = cfg.time;
  ds.sample_rate_hz = cfg.sample_rate_hz;
  if (cfg.class_names.empty()) {
    for (std::size_t c = 0; c < cfg.n_classes; ++c) {
      ds.classes.push_back("class_" + std::to_string(c));
    }
  } else {
    ds.classes = cfg.class_names;
  }
  ds.provenance = {{"kind", "synthetic"},
                   {"seed", cfg.seed},
                   {"noise_std", cfg.noise_std},
                   {"base_hz", cfg.base_hz}};

  const struct {
    const char* name;
    std::size_t idx;
    std::size_t per_class;
  } plan[] = {{"train", 0, cfg.per_class_train},
              {"val", 1, cfg.per_class_val},
              {"test", 2, cfg.per_class_test}};
  for (const auto& p : plan) {
    if (p.per_class == 0) continue;
    std::vector<CsiSample> list;
    list.reserve(p.per_class * cfg.n_classes);
    for (std::size_t cls = 0; cls < cfg.n_classes; ++cls) {
      for (std::size_t i = 0; i < p.per_class; ++i) {
        list.push_back(synth_sample(cfg, p.idx, cls, i, p.name));
      }
    }
    ds.splits.emplace(p.name, std::move(list));
  }
  ds.validate();
  return ds;
}

// ---------------------------------------------------------------------------
// Interchange format

namespace {

constexpr int kFormatVersion = 1;

void write_file(const fs::path& path, const void* data, std::size_t bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw_io("cannot open \"" + path.string() + "\" for writing");
  out.write(static_cast<const char*>(data), static_cast<std::streamsize>(bytes));
  if (!out) throw_io("short write to \"" + path.string() + "\"");
}

}  // namespace

void save_dataset(const Dataset& ds, const fs::path& dir) {
  ds.validate();
  const fs::path tmp = dir.string() + ".tmp";
  std::error_code ec;
  fs::remove_all(tmp, ec);
  if (!fs::create_directories(tmp, ec) || ec) {
    throw_io("cannot create directory \"" + tmp.string() + "\": " +
             ec.message());
  }

  json manifest;
  manifest["format_version"] = kFormatVersion;
  manifest["name"] = ds.name;
  manifest["classes"] = ds.classes;
  manifest["shape"] = {ds.channels, ds.time};
  manifest["sample_rate_hz"] = ds.sample_rate_hz;
  manifest["provenance"] = ds.provenance;
  json jsplits = json::object();
  for (const auto& [split_name, list] : ds.splits) {
    const std::string file = split_name + ".bin";
    json samples = json::array();
    std::vector<float> blob;
    blob.reserve(list.size() * ds.channels * ds.time);
    for (const CsiSample& s : list) {
      samples.push_back({{"label", s.label}, {"source_id", s.source_id}});
      blob.insert(blob.end(), s.values.begin(), s.values.end());
    }
    write_file(tmp / file, blob.data(), blob.size() * sizeof(float));
    jsplits[split_name] = {{"file", file}, {"samples", std::move(samples)}};
  }
  manifest["splits"] = std::move(jsplits);
  const std::string text = manifest.dump(2) + "\n";
  write_file(tmp / "manifest.json", text.data(), text.size());

  fs::remove_all(dir, ec);
  fs::rename(tmp, dir, ec);
  if (ec) {
    throw_io("cannot move \"" + tmp.string() + "\" to \"" + dir.string() +
             "\": " + ec.message());
  }
}

Dataset load_dataset(const fs::path& dir) {
  const fs::path manifest_path = dir / "manifest.json";
  std::ifstream in(manifest_path);
  if (!in) throw_io("cannot open \"" + manifest_path.string() + "\"");
  json manifest;
  try {
    in >> manifest;
  } catch (const json::exception& e) {
    throw_io("\"" + manifest_path.string() + "\": " + e.what());
  }

  const std::string ctx = "manifest";
  jsonu::check_keys(manifest, ctx,
                    {"format_version", "name", "classes", "shape",
                     "sample_rate_hz", "provenance", "splits"});
  const auto version = jsonu::get_uint(manifest, "format_version", 0, ctx);
  if (version != kFormatVersion) {
    throw_io("manifest: unsupported format_version " +
             std::to_string(version) + " (supported: " +
             std::to_string(kFormatVersion) + ")");
  }

  Dataset ds;
  ds.name = jsonu::get_str(manifest, "name", "", ctx);
  ds.sample_rate_hz = jsonu::get_num(manifest, "sample_rate_hz", 100.0, ctx);
  if (manifest.contains("provenance")) ds.provenance = manifest["provenance"];
  if (!manifest.contains("classes") || !manifest["classes"].is_array()) {
    throw_io("manifest: missing class roster");
  }
  for (const json& c : manifest["classes"]) {
    if (!c.is_string()) throw_io("manifest: class names must be strings");
    ds.classes.push_back(c.get<std::string>());
  }

  if (!manifest.contains("shape") || !manifest["shape"].is_array()) {
    throw_io("manifest: missing shape");
  }
  const json& shape = manifest["shape"];
  // A leading [pairs, subcarriers, time] shape flattens its channel axes.
  if (shape.size() == 2) {
    ds.channels = shape[0].get<std::size_t>();
    ds.time = shape[1].get<std::size_t>();
  } else if (shape.size() == 3) {
    ds.channels = shape[0].get<std::size_t>() * shape[1].get<std::size_t>();
    ds.time = shape[2].get<std::size_t>();
  } else {
    throw_io("manifest: shape must have 2 or 3 entries, got " +
             std::to_string(shape.size()));
  }

  if (!manifest.contains("splits") || !manifest["splits"].is_object()) {
    throw_io("manifest: missing splits");
  }
  const std::size_t per_sample = ds.channels * ds.time;
  for (auto it = manifest["splits"].begin(); it != manifest["splits"].end();
       ++it) {
    const std::string sctx = "manifest.splits." + it.key();
    jsonu::check_keys(it.value(), sctx, {"file", "samples"});
    const std::string file = jsonu::get_str(it.value(), "file", "", sctx);
    const json& samples = it.value().at("samples");
    if (!samples.is_array()) throw_io(sctx + ": samples must be an array");

    const fs::path bin_path = dir / file;
    std::ifstream bin(bin_path, std::ios::binary | std::ios::ate);
    if (!bin) throw_io("cannot open \"" + bin_path.string() + "\"");
    const std::size_t found =
        static_cast<std::size_t>(bin.tellg());
    const std::size_t expected = samples.size() * per_sample * sizeof(float);
    if (found != expected) {
      throw_io("\"" + bin_path.string() + "\": expected " +
               std::to_string(expected) + " bytes for " +
               std::to_string(samples.size()) + " samples, found " +
               std::to_string(found));
    }
    bin.seekg(0);

    std::vector<CsiSample> list;
    list.reserve(samples.size());
    for (const json& meta : samples) {
      jsonu::check_keys(meta, sctx + ".samples", {"label", "source_id"});
      CsiSample s;
      s.label = static_cast<int>(jsonu::get_uint(meta, "label", 0, sctx));
      s.source_id = jsonu::get_str(meta, "source_id", "", sctx);
      s.values.resize(per_sample);
      bin.read(reinterpret_cast<char*>(s.values.data()),
               static_cast<std::streamsize>(per_sample * sizeof(float)));
      if (!bin) throw_io("short read from \"" + bin_path.string() + "\"");
      list.push_back(std::move(s));
    }
    ds.splits.emplace(it.key(), std::move(list));
  }
  ds.validate();
  return ds;
}

// ---------------------------------------------------------------------------
// Stratified splitting

namespace {

SplitResult split_by_counts(
    const std::vector<CsiSample>& samples,
    const std::vector<std::pair<std::string, std::size_t>>& per_class_counts,
    std::uint64_t seed, bool counts_are_exact) {
  // group per class
  std::map<int, std::vector<std::size_t>> by_class;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    by_class[samples[i].label].push_back(i);
  }
  SplitResult res;
  for (const auto& [name, _] : per_class_counts) res.splits[name];

  for (auto& [cls, idxs] : by_class) {
    Rng rng(mix_seed(seed, static_cast<std::uint64_t>(cls)));
    rng.shuffle(idxs);
    std::size_t cursor = 0;
    for (const auto& [name, want] : per_class_counts) {
      const std::size_t avail = idxs.size() - cursor;
      const std::size_t take = std::min(want, avail);
      if (take < want && counts_are_exact) res.degenerate = true;
      for (std::size_t i = 0; i < take; ++i) {
        res.splits[name].push_back(samples[idxs[cursor + i]]);
      }
      cursor += take;
    }
  }
  return res;
}

}  // namespace

SplitResult stratified_split(
    const std::vector<CsiSample>& samples,
    const std::vector<std::pair<std::string, double>>& ratios,
    std::uint64_t seed) {
  double total = 0.0;
  for (const auto& [name, r] : ratios) {
    if (r < 0.0) throw_config("split: ratio for \"" + name + "\" is negative");
    total += r;
  }
  if (std::abs(total - 1.0) > 1e-9) {
    throw_config("split: ratios sum to " + std::to_string(total) +
                 ", expected 1");
  }

  // Per class: floor the exact shares, then hand remaining samples to the
  // largest fractional parts, so each count differs from exact
  // proportionality by at most 1.
  std::map<int, std::size_t> class_sizes;
  for (const CsiSample& s : samples) class_sizes[s.label]++;

  SplitResult res;
  for (const auto& [name, _] : ratios) res.splits[name];
  for (const auto& [cls, n] : class_sizes) {
    std::vector<std::pair<std::string, std::size_t>> counts;
    std::vector<std::pair<double, std::size_t>> fractional;  // (frac, idx)
    std::size_t assigned = 0;
    for (std::size_t i = 0; i < ratios.size(); ++i) {
      const double exact = ratios[i].second * static_cast<double>(n);
      const std::size_t base = static_cast<std::size_t>(std::floor(exact));
      counts.emplace_back(ratios[i].first, base);
      fractional.emplace_back(exact - std::floor(exact), i);
      assigned += base;
    }
    std::stable_sort(fractional.begin(), fractional.end(),
                     [](const auto& a, const auto& b) { return a.first > b.first; });
    for (std::size_t i = 0; assigned < n && i < fractional.size(); ++i) {
      counts[fractional[i].second].second++;
      ++assigned;
    }

    std::vector<CsiSample> class_samples;
    for (const CsiSample& s : samples) {
      if (s.label == cls) class_samples.push_back(s);
    }
    SplitResult one = split_by_counts(class_samples, counts, seed, false);
    for (auto& [name, list] : one.splits) {
      auto& dst = res.splits[name];
      dst.insert(dst.end(), list.begin(), list.end());
    }
  }
  return res;
}

SplitResult stratified_split_counts(
    const std::vector<CsiSample>& samples,
    const std::vector<std::pair<std::string, std::size_t>>& counts,
    std::uint64_t seed) {
  return split_by_counts(samples, counts, seed, true);
}

}  // namespace har::data
