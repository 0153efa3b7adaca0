#pragma once

#include <algorithm>
#include <cmath>
#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <regex>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "addsl/annotation.hpp"
#include "addsl/error.hpp"
#include "addsl/imaging.hpp"

namespace addsl {

// ---------------------------------------------------------------------------
// Augmentation
// ---------------------------------------------------------------------------

struct AugmentSpec {
  std::vector<int> turns{1, 2, 3, 0};
  std::optional<std::pair<int, int>> resize_to;
  bool grayscale = false;
  bool keep_originals = true;
  bool allow_duplicate_turns = false;
  ResizeMode resize_mode = ResizeMode::Bilinear;
};

struct AugmentResult {
  DatasetManifest manifest;
  std::vector<Finding> findings;
};

/// "<stem>_r<degrees>", the provenance suffix of an augmented file.
inline std::string augmented_stem(const std::string& stem, int turns) { return stem + "_r" + std::to_string(90 * turns); }

/// Strips a trailing "_r<degrees>" suffix, recovering the source stem.
inline std::string source_stem(const std::string& stem) {
  static const std::regex kSuffix("^(.*)_r(0|90|180|270)$");
  std::smatch m;
  if (std::regex_match(stem, m, kSuffix)) return m[1].str();
  return stem;
}

namespace detail {

inline void check_augment_spec(const AugmentSpec& spec) {
  if (spec.turns.empty()) throw Error(ErrorCode::InvalidArgument, "augment needs at least one turn");
  for (int t : spec.turns) normalize_turns(t);
  if (!spec.allow_duplicate_turns) {
    std::set<int> seen(spec.turns.begin(), spec.turns.end());
    if (seen.size() != spec.turns.size()) throw Error(ErrorCode::InvalidArgument, "augment turns contain duplicates");
  }
  if (spec.resize_to && (spec.resize_to->first < 1 || spec.resize_to->second < 1)) {
    throw Error(ErrorCode::InvalidArgument, "resize target must be positive");
  }
}

inline Raster preprocess(Raster img, const AugmentSpec& spec) {
  if (spec.grayscale) img = to_grayscale(img);
  if (spec.resize_to) img = resize(img, spec.resize_to->first, spec.resize_to->second, spec.resize_mode);
  return img;
}

inline fs::path output_dir_for(const fs::path& rel) {
  return rel.is_absolute() ? fs::path{} : rel.parent_path();
}

}  // namespace detail

/// Writes every (entry, turn) pair under `out_dir`, mirroring the input
/// layout, and returns the manifest of the written tree. With
/// `keep_originals`, the (preprocessed) originals are written too under
/// their own names. Per-file failures are collected, not thrown.
inline AugmentResult augment(const DatasetManifest& manifest, const AugmentSpec& spec, const fs::path& out_dir,
                             const LabelMap& label_map) {
  detail::check_augment_spec(spec);
  std::error_code ec;
  fs::create_directories(out_dir, ec);
  if (ec) throw Error(ErrorCode::IoFailure, "cannot create " + out_dir.string() + ": " + ec.message());

  AugmentResult result;
  result.manifest.root = out_dir;
  for (const auto& entry : manifest.entries) {
    Raster image(1, 1, 1);
    LabelFile labels;
    try {
      image = read_image_file(manifest.resolve(entry.image));
      labels = read_yolo_file(manifest.resolve(entry.label), label_map);
    } catch (const Error& e) {
      result.findings.push_back({entry.image.generic_string(), 0, e.code(), e.what()});
      continue;
    }

    const fs::path image_dir = detail::output_dir_for(entry.image);
    const fs::path label_dir = detail::output_dir_for(entry.label);
    const std::string stem = entry.image.stem().string();

    auto emit = [&](const std::string& out_stem, const Raster& img, const LabelFile& lf) {
      const Raster processed = detail::preprocess(img, spec);
      const fs::path img_rel = image_dir / (out_stem + (processed.channels() == 1 ? ".pgm" : ".ppm"));
      const fs::path lbl_rel = label_dir / (out_stem + ".txt");
      try {
        fs::create_directories(out_dir / img_rel.parent_path());
        fs::create_directories(out_dir / lbl_rel.parent_path());
        write_image_file(out_dir / img_rel, processed);
        const auto text = serialize_yolo(lf);
        detail::write_file_bytes(out_dir / lbl_rel,
                                 std::span(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
      } catch (const std::exception& e) {
        result.findings.push_back({img_rel.generic_string(), 0, ErrorCode::IoFailure, e.what()});
        return;
      }
      result.manifest.entries.push_back({img_rel, lbl_rel, entry.split});
    };

    if (spec.keep_originals) emit(stem, image, labels);
    for (int t : spec.turns) {
      LabelFile rotated{augmented_stem(stem, t), {}};
      for (const auto& obj : labels.objects) rotated.objects.push_back({obj.class_id, rotate_box(obj.box, t)});
      emit(rotated.image_id, rotate_quarter(image, t), rotated);
    }
  }
  return result;
}

// ---------------------------------------------------------------------------
// Splitting
// ---------------------------------------------------------------------------

struct SplitSpec {
  double train = 0.8;
  double val = 0.1;
  double test = 0.1;
  std::uint64_t seed = 0;
  /// Keep augmented variants in their source image's split.
  bool group_by_source = true;
};

inline std::uint64_t splitmix64(std::uint64_t& state) noexcept {
  std::uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

inline std::uint64_t fnv1a64(std::string_view s) noexcept {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

/// Shuffle key of one path: splitmix64 finalizer of fnv1a(path) XOR the
/// first splitmix64 output of the seed.
inline std::uint64_t split_key(std::string_view path, std::uint64_t seed) noexcept {
  std::uint64_t stream_state = seed;
  const std::uint64_t stream = splitmix64(stream_state);
  std::uint64_t key_state = fnv1a64(path) ^ stream;
  return splitmix64(key_state);
}

/// Split sizes by the floor cut rule: train = floor(n*r_train),
/// val = floor(n*(r_train+r_val)) - train, test = rest.
inline std::array<std::size_t, 3> split_counts(std::size_t n, const SplitSpec& spec) {
  const double nd = static_cast<double>(n);
  const auto cut1 = static_cast<std::size_t>(std::floor(nd * spec.train + 1e-9));
  const auto cut2 = std::max(cut1, std::min(n, static_cast<std::size_t>(std::floor(nd * (spec.train + spec.val) + 1e-9))));
  return {cut1, cut2 - cut1, n - cut2};
}

/// Deterministic partition into train/val/test. Entries keep manifest order;
/// only their split column changes.
inline DatasetManifest split(const DatasetManifest& manifest, const SplitSpec& spec) {
  const double ratios[3] = {spec.train, spec.val, spec.test};
  for (double r : ratios) {
    if (!(r >= 0.0)) throw Error(ErrorCode::InvalidArgument, "split ratios must be non-negative");
  }
  if (std::abs(spec.train + spec.val + spec.test - 1.0) > 1e-9) {
    throw Error(ErrorCode::InvalidArgument, "split ratios must sum to 1");
  }
  if (manifest.entries.size() < 3) throw Error(ErrorCode::InvalidArgument, "split needs at least 3 entries");

  auto group_of = [&](const ManifestEntry& e) {
    if (!spec.group_by_source) return e.image.generic_string();
    return (e.image.parent_path() / source_stem(e.image.stem().string())).generic_string();
  };
  std::vector<std::string> groups;
  for (const auto& e : manifest.entries) groups.push_back(group_of(e));
  std::sort(groups.begin(), groups.end());
  groups.erase(std::unique(groups.begin(), groups.end()), groups.end());

  std::vector<std::pair<std::uint64_t, std::string>> keyed;
  keyed.reserve(groups.size());
  for (auto& g : groups) keyed.emplace_back(split_key(g, spec.seed), std::move(g));
  std::sort(keyed.begin(), keyed.end());

  const auto counts = split_counts(keyed.size(), spec);
  for (int s = 0; s < 3; ++s) {
    if (counts[static_cast<std::size_t>(s)] == 0 && ratios[s] > 0.0) {
      throw Error(ErrorCode::DegenerateSplit, std::string(to_string(static_cast<Split>(s))) +
                                                  " split would be empty with " + std::to_string(keyed.size()) + " groups");
    }
  }
  std::map<std::string, Split> assignment;
  for (std::size_t i = 0; i < keyed.size(); ++i) {
    const Split s = i < counts[0] ? Split::Train : i < counts[0] + counts[1] ? Split::Val : Split::Test;
    assignment.emplace(keyed[i].second, s);
  }
  DatasetManifest out = manifest;
  for (auto& e : out.entries) e.split = assignment.at(group_of(e));
  return out;
}

// ---------------------------------------------------------------------------
// Statistics
// ---------------------------------------------------------------------------

struct ClassStats {
  std::size_t images = 0;
  std::size_t objects = 0;
};

struct StatsReport {
  std::vector<ClassStats> classes;  // indexed by class id
  std::map<std::string, std::size_t> splits;
  std::map<std::string, std::size_t> image_sizes;  // "WxH" or "unknown"
  std::size_t images = 0;
  std::size_t objects = 0;
};

inline StatsReport stats(const DatasetManifest& manifest, const LabelMap& label_map) {
  StatsReport report;
  report.classes.assign(static_cast<std::size_t>(label_map.size()), {});
  for (const auto& entry : manifest.entries) {
    const auto labels = read_yolo_file(manifest.resolve(entry.label), label_map);
    ++report.images;
    ++report.splits[std::string(to_string(entry.split))];
    std::set<int> present;
    for (const auto& obj : labels.objects) {
      ++report.classes[static_cast<std::size_t>(obj.class_id)].objects;
      ++report.objects;
      present.insert(obj.class_id);
    }
    for (int c : present) ++report.classes[static_cast<std::size_t>(c)].images;
    std::string size_key = "unknown";
    try {
      const auto info = read_image_info(manifest.resolve(entry.image));
      size_key = std::to_string(info.width) + "x" + std::to_string(info.height);
    } catch (const Error& e) {
      if (e.code() == ErrorCode::IoFailure) throw;
    }
    ++report.image_sizes[size_key];
  }
  return report;
}

/// Number of classes with at least one object.
inline std::size_t classes_present(const StatsReport& r) {
  return static_cast<std::size_t>(std::count_if(r.classes.begin(), r.classes.end(), [](const ClassStats& c) { return c.objects > 0; }));
}

inline nlohmann::ordered_json to_json(const StatsReport& r, const LabelMap& label_map) {
  nlohmann::ordered_json j;
  j["images"] = r.images;
  j["objects"] = r.objects;
  j["classes_present"] = classes_present(r);
  j["splits"] = r.splits;
  j["image_sizes"] = r.image_sizes;
  auto rows = nlohmann::ordered_json::array();
  for (int id = 0; id < label_map.size(); ++id) {
    const auto& c = r.classes[static_cast<std::size_t>(id)];
    rows.push_back({{"id", id}, {"name", label_map.name(id)}, {"images", c.images}, {"objects", c.objects}});
  }
  j["classes"] = rows;
  return j;
}

}  // namespace addsl
