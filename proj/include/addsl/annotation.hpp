#pragma once

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <system_error>
#include <unordered_map>
#include <vector>

#include <nlohmann/json.hpp>

#include "addsl/error.hpp"
#include "addsl/geometry.hpp"
#include "addsl/imaging.hpp"

namespace addsl {

namespace fs = std::filesystem;

// ---------------------------------------------------------------------------
// Label map
// ---------------------------------------------------------------------------

/// Ordered class names; the position of a name is its class id. Each class
/// may carry one alias (e.g. a Danish gesture name) that resolves to the
/// same id.
class LabelMap {
 public:
  LabelMap() = default;

  explicit LabelMap(std::vector<std::string> names, std::vector<std::string> aliases = {})
      : names_(std::move(names)), aliases_(std::move(aliases)) {
    aliases_.resize(names_.size());
    for (std::size_t id = 0; id < names_.size(); ++id) {
      check_token(names_[id], "class name");
      if (!lookup_.emplace(names_[id], static_cast<int>(id)).second) {
        throw Error(ErrorCode::BadLabelMap, "duplicate class name '" + names_[id] + "'");
      }
    }
    for (std::size_t id = 0; id < aliases_.size(); ++id) {
      if (aliases_[id].empty()) continue;
      check_token(aliases_[id], "alias");
      const auto [it, inserted] = lookup_.emplace(aliases_[id], static_cast<int>(id));
      if (!inserted && it->second != static_cast<int>(id)) {
        throw Error(ErrorCode::BadLabelMap, "alias '" + aliases_[id] + "' collides with another class");
      }
    }
  }

  /// A..Z as ids 0..25, then 0..9 as ids 26..35.
  static LabelMap canonical() {
    std::vector<std::string> names;
    for (char c = 'A'; c <= 'Z'; ++c) names.emplace_back(1, c);
    for (char c = '0'; c <= '9'; ++c) names.emplace_back(1, c);
    return LabelMap(std::move(names));
  }

  /// One class per line, optionally "name=alias". Blank lines are skipped.
  static LabelMap parse(std::string_view text) {
    std::vector<std::string> names;
    std::vector<std::string> aliases;
    std::istringstream in{std::string(text)};
    std::string line;
    while (std::getline(in, line)) {
      if (!line.empty() && line.back() == '\r') line.pop_back();
      const auto first = line.find_first_not_of(" \t");
      if (first == std::string::npos) continue;
      const auto last = line.find_last_not_of(" \t");
      line = line.substr(first, last - first + 1);
      const auto eq = line.find('=');
      if (eq == std::string::npos) {
        names.push_back(line);
        aliases.emplace_back();
      } else {
        names.push_back(line.substr(0, eq));
        aliases.push_back(line.substr(eq + 1));
        if (aliases.back().empty()) throw Error(ErrorCode::BadLabelMap, "empty alias for '" + names.back() + "'");
      }
    }
    return LabelMap(std::move(names), std::move(aliases));
  }

  static LabelMap load(const fs::path& path) {
    const auto bytes = detail::read_file_bytes(path);
    return parse(std::string_view(reinterpret_cast<const char*>(bytes.data()), bytes.size()));
  }

  std::string serialize() const {
    std::string out;
    for (std::size_t id = 0; id < names_.size(); ++id) {
      out += names_[id];
      if (!aliases_[id].empty()) out += "=" + aliases_[id];
      out += '\n';
    }
    return out;
  }

  int size() const noexcept { return static_cast<int>(names_.size()); }
  const std::string& name(int id) const { return names_.at(static_cast<std::size_t>(id)); }
  const std::string& alias(int id) const { return aliases_.at(static_cast<std::size_t>(id)); }

  /// Resolves a name or alias.
  std::optional<int> id_of(std::string_view name) const {
    const auto it = lookup_.find(std::string(name));
    if (it == lookup_.end()) return std::nullopt;
    return it->second;
  }

 private:
  static void check_token(const std::string& s, const char* what) {
    if (s.empty()) throw Error(ErrorCode::BadLabelMap, std::string(what) + " is empty");
    if (s.find_first_of(" \t\r\n=") != std::string::npos) {
      throw Error(ErrorCode::BadLabelMap, std::string(what) + " '" + s + "' contains whitespace or '='");
    }
  }

  std::vector<std::string> names_;
  std::vector<std::string> aliases_;
  std::unordered_map<std::string, int> lookup_;
};

// ---------------------------------------------------------------------------
// YOLO TXT
// ---------------------------------------------------------------------------

struct LabeledBox {
  int class_id = 0;
  Box box;

  friend bool operator==(const LabeledBox&, const LabeledBox&) = default;
};

struct LabelFile {
  std::string image_id;
  std::vector<LabeledBox> objects;
};

/// Edge overshoot tolerated when reading: values written with six decimals
/// can land up to this far outside the image.
inline constexpr double kPrintQuantum = 1e-6;

namespace detail {

inline std::vector<std::string_view> split_ws(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && (line[i] == ' ' || line[i] == '\t' || line[i] == '\r' || line[i] == '\n')) ++i;
    const std::size_t start = i;
    while (i < line.size() && !(line[i] == ' ' || line[i] == '\t' || line[i] == '\r' || line[i] == '\n')) ++i;
    if (i > start) out.push_back(line.substr(start, i - start));
  }
  return out;
}

inline std::optional<int> parse_int(std::string_view tok) {
  int v = 0;
  const auto [ptr, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
  if (ec != std::errc() || ptr != tok.data() + tok.size()) return std::nullopt;
  return v;
}

inline std::optional<double> parse_real(std::string_view tok) {
  if (!tok.empty() && tok.front() == '+') tok.remove_prefix(1);
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
  if (ec != std::errc() || ptr != tok.data() + tok.size() || !std::isfinite(v)) return std::nullopt;
  return v;
}

// Shrinks an interval that overshoots [0,1] by at most kPrintQuantum.
inline void absorb_print_slack(double& center, double& size) {
  double lo = center - 0.5 * size;
  double hi = center + 0.5 * size;
  if (lo < 0.0 && lo >= -kPrintQuantum) lo = 0.0;
  if (hi > 1.0 && hi <= 1.0 + kPrintQuantum) hi = 1.0;
  center = 0.5 * (lo + hi);
  size = hi - lo;
}

inline std::string format_fixed6(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

inline std::string_view as_text(const std::vector<std::uint8_t>& bytes) {
  return {reinterpret_cast<const char*>(bytes.data()), bytes.size()};
}

}  // namespace detail

/// Parses one "<class> <cx> <cy> <w> <h>" line. `extra_fields` allows
/// trailing numeric columns (prediction files carry a confidence); their
/// values are appended to `extras` when given.
inline LabeledBox parse_yolo_line(std::string_view line, const LabelMap& label_map, std::size_t line_no = 1,
                                  std::size_t extra_fields = 0, std::vector<double>* extras = nullptr) {
  const auto tok = detail::split_ws(line);
  const std::size_t want = 5 + extra_fields;
  if (tok.size() != want) {
    const std::string offending = tok.empty() ? std::string(line) : std::string(tok.size() > want ? tok[want] : tok.back());
    throw ParseError(ErrorCode::MalformedLine, line_no, offending,
                     "expected " + std::to_string(want) + " fields, found " + std::to_string(tok.size()));
  }
  const auto cls = detail::parse_int(tok[0]);
  if (!cls) throw ParseError(ErrorCode::MalformedLine, line_no, std::string(tok[0]), "class id is not an integer");
  double v[4];
  for (int k = 0; k < 4; ++k) {
    const auto r = detail::parse_real(tok[static_cast<std::size_t>(k) + 1]);
    if (!r) throw ParseError(ErrorCode::MalformedLine, line_no, std::string(tok[static_cast<std::size_t>(k) + 1]), "not a real number");
    v[k] = *r;
  }
  for (std::size_t k = 5; k < want; ++k) {
    const auto r = detail::parse_real(tok[k]);
    if (!r) throw ParseError(ErrorCode::MalformedLine, line_no, std::string(tok[k]), "not a real number");
    if (extras) extras->push_back(*r);
  }
  if (*cls < 0 || *cls >= label_map.size()) {
    throw ParseError(ErrorCode::ClassOutOfRange, line_no, std::string(tok[0]),
                     "class id must lie in [0, " + std::to_string(label_map.size()) + ")");
  }
  auto [cx, cy, w, h] = v;
  if (!(w > 0.0) || w > 1.0 + kBoxBoundsEps) {
    throw ParseError(ErrorCode::BoxOutOfBounds, line_no, std::string(tok[3]), "width must lie in (0, 1]");
  }
  if (!(h > 0.0) || h > 1.0 + kBoxBoundsEps) {
    throw ParseError(ErrorCode::BoxOutOfBounds, line_no, std::string(tok[4]), "height must lie in (0, 1]");
  }
  detail::absorb_print_slack(cx, w);
  detail::absorb_print_slack(cy, h);
  if (cx - 0.5 * w < -kBoxBoundsEps || cx + 0.5 * w > 1.0 + kBoxBoundsEps) {
    throw ParseError(ErrorCode::BoxOutOfBounds, line_no, std::string(tok[1]),
                     "horizontal extent [" + std::to_string(cx - 0.5 * w) + ", " + std::to_string(cx + 0.5 * w) +
                         "] leaves the image");
  }
  if (cy - 0.5 * h < -kBoxBoundsEps || cy + 0.5 * h > 1.0 + kBoxBoundsEps) {
    throw ParseError(ErrorCode::BoxOutOfBounds, line_no, std::string(tok[2]),
                     "vertical extent [" + std::to_string(cy - 0.5 * h) + ", " + std::to_string(cy + 0.5 * h) +
                         "] leaves the image");
  }
  return {*cls, Box(cx, cy, w, h)};
}

/// Parses a whole label file; blank lines are ignored.
inline LabelFile parse_yolo(std::string_view text, const LabelMap& label_map, std::string image_id = {}) {
  LabelFile file{std::move(image_id), {}};
  std::size_t line_no = 0;
  std::size_t start = 0;
  while (start <= text.size()) {
    const auto nl = text.find('\n', start);
    const auto line = text.substr(start, nl == std::string_view::npos ? std::string_view::npos : nl - start);
    ++line_no;
    if (!detail::split_ws(line).empty()) file.objects.push_back(parse_yolo_line(line, label_map, line_no));
    if (nl == std::string_view::npos) break;
    start = nl + 1;
  }
  return file;
}

inline LabelFile read_yolo_file(const fs::path& path, const LabelMap& label_map) {
  const auto bytes = detail::read_file_bytes(path);
  return parse_yolo(detail::as_text(bytes), label_map, path.stem().string());
}

inline std::string serialize_yolo_line(const LabeledBox& obj) {
  return std::to_string(obj.class_id) + " " + detail::format_fixed6(obj.box.cx()) + " " +
         detail::format_fixed6(obj.box.cy()) + " " + detail::format_fixed6(obj.box.w()) + " " +
         detail::format_fixed6(obj.box.h());
}

/// Canonical form: one '\n'-terminated line per object, six decimals.
inline std::string serialize_yolo(const LabelFile& file) {
  std::string out;
  for (const auto& obj : file.objects) {
    out += serialize_yolo_line(obj);
    out += '\n';
  }
  return out;
}

// ---------------------------------------------------------------------------
// Manifest
// ---------------------------------------------------------------------------

enum class Split { Train, Val, Test, None };

inline std::string_view to_string(Split s) noexcept {
  switch (s) {
    case Split::Train: return "train";
    case Split::Val: return "val";
    case Split::Test: return "test";
    case Split::None: return "none";
  }
  return "none";
}

inline std::optional<Split> parse_split(std::string_view s) {
  if (s == "train") return Split::Train;
  if (s == "val") return Split::Val;
  if (s == "test") return Split::Test;
  if (s == "none") return Split::None;
  return std::nullopt;
}

struct ManifestEntry {
  fs::path image;
  fs::path label;
  Split split = Split::None;

  friend bool operator==(const ManifestEntry&, const ManifestEntry&) = default;
};

/// Image/label pairs. Relative paths resolve against `root`.
struct DatasetManifest {
  fs::path root;
  std::vector<ManifestEntry> entries;

  fs::path resolve(const fs::path& p) const { return p.is_absolute() || root.empty() ? p : root / p; }
};

/// "image<TAB>label<TAB>split" per line.
inline std::string serialize_manifest(const DatasetManifest& manifest) {
  std::string out;
  for (const auto& e : manifest.entries) {
    out += e.image.generic_string() + "\t" + e.label.generic_string() + "\t" + std::string(to_string(e.split)) + "\n";
  }
  return out;
}

inline DatasetManifest parse_manifest(std::string_view text, fs::path root = {}) {
  DatasetManifest manifest{std::move(root), {}};
  std::istringstream in{std::string(text)};
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::vector<std::string> cols;
    std::size_t start = 0;
    while (true) {
      const auto tab = line.find('\t', start);
      cols.push_back(line.substr(start, tab == std::string::npos ? std::string::npos : tab - start));
      if (tab == std::string::npos) break;
      start = tab + 1;
    }
    if (cols.size() != 3) {
      throw ParseError(ErrorCode::BadManifest, line_no, line, "expected 3 tab-separated columns");
    }
    const auto split = parse_split(cols[2]);
    if (!split) throw ParseError(ErrorCode::BadManifest, line_no, cols[2], "split must be train, val, test or none");
    if (cols[0].empty() || cols[1].empty()) throw ParseError(ErrorCode::BadManifest, line_no, line, "empty path");
    manifest.entries.push_back({cols[0], cols[1], *split});
  }
  return manifest;
}

/// Loads a manifest file; relative entries resolve against its directory.
inline DatasetManifest load_manifest(const fs::path& path) {
  const auto bytes = detail::read_file_bytes(path);
  return parse_manifest(detail::as_text(bytes), path.parent_path());
}

inline bool is_image_path(const fs::path& p) {
  std::string ext = p.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return ext == ".ppm" || ext == ".pgm" || ext == ".png" || ext == ".jpg" || ext == ".jpeg" || ext == ".bmp";
}

struct TreeScan {
  DatasetManifest manifest;
  std::vector<fs::path> orphan_images;
  std::vector<fs::path> orphan_labels;
};

/// Pairs images with "<stem>.txt" labels, either in the same directory or
/// in a sibling "labels" directory mirroring an "images" directory.
/// LabelImg's "classes.txt" is not a label file.
inline TreeScan scan_tree(const fs::path& root) {
  std::error_code ec;
  if (!fs::is_directory(root, ec)) throw Error(ErrorCode::IoFailure, "not a directory: " + root.string());
  std::vector<fs::path> images;
  std::vector<fs::path> labels;
  for (fs::recursive_directory_iterator it(root, ec), end; it != end; it.increment(ec)) {
    if (ec) throw Error(ErrorCode::IoFailure, "cannot walk " + root.string() + ": " + ec.message());
    if (!it->is_regular_file()) continue;
    const auto rel = fs::relative(it->path(), root);
    if (is_image_path(rel)) {
      images.push_back(rel);
    } else if (rel.extension() == ".txt" && rel.filename() != "classes.txt") {
      labels.push_back(rel);
    }
  }
  std::sort(images.begin(), images.end());
  std::sort(labels.begin(), labels.end());

  auto sibling_label = [](const fs::path& image) {
    fs::path out;
    bool swapped = false;
    std::vector<fs::path> parts(image.begin(), image.end());
    for (auto it = parts.rbegin() + 1; it != parts.rend(); ++it) {
      if (*it == "images") {
        *it = "labels";
        swapped = true;
        break;
      }
    }
    if (!swapped) return fs::path{};
    for (const auto& p : parts) out /= p;
    return out.replace_extension(".txt");
  };

  TreeScan scan;
  scan.manifest.root = root;
  std::vector<bool> label_used(labels.size(), false);
  auto claim = [&](const fs::path& candidate) -> bool {
    const auto it = std::lower_bound(labels.begin(), labels.end(), candidate);
    if (it == labels.end() || *it != candidate) return false;
    const auto idx = static_cast<std::size_t>(it - labels.begin());
    if (label_used[idx]) return false;
    label_used[idx] = true;
    return true;
  };
  for (const auto& image : images) {
    fs::path same_dir = image;
    same_dir.replace_extension(".txt");
    const fs::path mirrored = sibling_label(image);
    if (claim(same_dir)) {
      scan.manifest.entries.push_back({image, same_dir, Split::None});
    } else if (!mirrored.empty() && claim(mirrored)) {
      scan.manifest.entries.push_back({image, mirrored, Split::None});
    } else {
      scan.orphan_images.push_back(image);
    }
  }
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (!label_used[i]) scan.orphan_labels.push_back(labels[i]);
  }
  return scan;
}

// ---------------------------------------------------------------------------
// Validation
// ---------------------------------------------------------------------------

struct Finding {
  std::string path;
  std::size_t line = 0;  // 0 when not tied to a line
  ErrorCode code = ErrorCode::IoFailure;
  std::string message;

  friend bool operator==(const Finding&, const Finding&) = default;
};

struct ValidationReport {
  std::vector<Finding> findings;
  std::vector<std::size_t> class_objects;  // indexed by class id
  std::size_t images = 0;
  std::size_t objects = 0;
  std::map<std::string, std::size_t> split_counts;

  bool clean() const noexcept { return findings.empty(); }
};

inline nlohmann::ordered_json to_json(const ValidationReport& r, const LabelMap& label_map) {
  nlohmann::ordered_json j;
  j["clean"] = r.clean();
  j["images"] = r.images;
  j["objects"] = r.objects;
  std::size_t present = 0;
  for (auto n : r.class_objects) present += n > 0 ? 1 : 0;
  j["classes_present"] = present;
  j["splits"] = r.split_counts;
  auto classes = nlohmann::ordered_json::array();
  for (int id = 0; id < label_map.size(); ++id) {
    classes.push_back({{"id", id}, {"name", label_map.name(id)}, {"objects", r.class_objects[static_cast<std::size_t>(id)]}});
  }
  j["classes"] = classes;
  auto findings = nlohmann::ordered_json::array();
  for (const auto& f : r.findings) {
    findings.push_back({{"path", f.path}, {"line", f.line}, {"code", std::string(to_string(f.code))}, {"message", f.message}});
  }
  j["findings"] = findings;
  return j;
}

/// Checks every pair of a manifest (plus any orphans found by a tree scan).
/// Failures are collected, never thrown; findings are sorted by path.
inline ValidationReport validate_dataset(const DatasetManifest& manifest, const LabelMap& label_map,
                                         const std::vector<fs::path>& orphan_images = {},
                                         const std::vector<fs::path>& orphan_labels = {}) {
  ValidationReport report;
  report.class_objects.assign(static_cast<std::size_t>(label_map.size()), 0);
  for (const auto& p : orphan_images) {
    report.findings.push_back({p.generic_string(), 0, ErrorCode::BadManifest, "image has no label file"});
  }
  for (const auto& p : orphan_labels) {
    report.findings.push_back({p.generic_string(), 0, ErrorCode::BadManifest, "label file has no image"});
  }
  for (const auto& entry : manifest.entries) {
    const std::string label_name = entry.label.generic_string();
    ++report.split_counts[std::string(to_string(entry.split))];
    if (entry.image.stem() != entry.label.stem()) {
      report.findings.push_back({label_name, 0, ErrorCode::BadManifest,
                                 "stem differs from image '" + entry.image.generic_string() + "'"});
    }
    std::error_code ec;
    if (!fs::is_regular_file(manifest.resolve(entry.image), ec)) {
      report.findings.push_back({entry.image.generic_string(), 0, ErrorCode::IoFailure, "image file missing"});
    }
    std::vector<std::uint8_t> bytes;
    try {
      bytes = detail::read_file_bytes(manifest.resolve(entry.label));
    } catch (const Error& e) {
      report.findings.push_back({label_name, 0, e.code(), e.what()});
      continue;
    }
    ++report.images;
    const auto text = detail::as_text(bytes);
    std::size_t line_no = 0;
    std::size_t start = 0;
    while (start <= text.size()) {
      const auto nl = text.find('\n', start);
      const auto line = text.substr(start, nl == std::string_view::npos ? std::string_view::npos : nl - start);
      ++line_no;
      if (!detail::split_ws(line).empty()) {
        try {
          const auto obj = parse_yolo_line(line, label_map, line_no);
          ++report.class_objects[static_cast<std::size_t>(obj.class_id)];
          ++report.objects;
        } catch (const ParseError& e) {
          report.findings.push_back({label_name, line_no, e.code(), e.what()});
        } catch (const Error& e) {
          report.findings.push_back({label_name, line_no, e.code(), e.what()});
        }
      }
      if (nl == std::string_view::npos) break;
      start = nl + 1;
    }
  }
  std::stable_sort(report.findings.begin(), report.findings.end(), [](const Finding& a, const Finding& b) {
    return std::tie(a.path, a.line) < std::tie(b.path, b.line);
  });
  return report;
}

// ---------------------------------------------------------------------------
// PASCAL VOC
// ---------------------------------------------------------------------------

struct PixelBox {
  int xmin = 0;
  int ymin = 0;
  int xmax = 0;
  int ymax = 0;

  friend bool operator==(const PixelBox&, const PixelBox&) = default;
};

/// 1-based inclusive pixel corners: round(edge * size) + 1, clamped to [1, size].
inline PixelBox to_pixel_box(const Box& b, int image_w, int image_h) {
  auto px = [](double edge, int size) {
    const long v = std::lround(std::floor(edge * size + 0.5)) + 1;
    return static_cast<int>(std::clamp<long>(v, 1, size));
  };
  return {px(b.left(), image_w), px(b.top(), image_h), px(b.right(), image_w), px(b.bottom(), image_h)};
}

/// Inverse of to_pixel_box: edge = (pixel - 1) / size.
inline Box from_pixel_box(const PixelBox& p, int image_w, int image_h) {
  return Box::from_corners(static_cast<double>(p.xmin - 1) / image_w, static_cast<double>(p.ymin - 1) / image_h,
                           static_cast<double>(p.xmax - 1) / image_w, static_cast<double>(p.ymax - 1) / image_h);
}

namespace detail {

inline std::string xml_escape(std::string_view s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      case '\'': out += "&apos;"; break;
      default: out += c;
    }
  }
  return out;
}

inline std::string xml_unescape(std::string_view s) {
  static const std::pair<std::string_view, char> kEntities[] = {
      {"&amp;", '&'}, {"&lt;", '<'}, {"&gt;", '>'}, {"&quot;", '"'}, {"&apos;", '\''}};
  std::string out;
  for (std::size_t i = 0; i < s.size();) {
    bool matched = false;
    if (s[i] == '&') {
      for (const auto& [ent, ch] : kEntities) {
        if (s.substr(i, ent.size()) == ent) {
          out += ch;
          i += ent.size();
          matched = true;
          break;
        }
      }
    }
    if (!matched) out += s[i++];
  }
  return out;
}

// Text of the first <tag>...</tag> at or after `from`; advances `from` past it.
inline std::optional<std::string_view> xml_child(std::string_view xml, std::string_view tag, std::size_t& from,
                                                 std::size_t limit = std::string_view::npos) {
  const std::string open = "<" + std::string(tag) + ">";
  const std::string close = "</" + std::string(tag) + ">";
  const auto a = xml.find(open, from);
  if (a == std::string_view::npos || a >= limit) return std::nullopt;
  const auto b = xml.find(close, a + open.size());
  if (b == std::string_view::npos || b > limit) return std::nullopt;
  from = b + close.size();
  return xml.substr(a + open.size(), b - a - open.size());
}

inline std::string trim(std::string_view s) {
  const auto a = s.find_first_not_of(" \t\r\n");
  if (a == std::string_view::npos) return {};
  const auto b = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(a, b - a + 1));
}

}  // namespace detail

/// PASCAL VOC annotation document for one image.
inline std::string to_voc(const LabelFile& file, int image_w, int image_h, const LabelMap& label_map, int depth = 3) {
  if (image_w < 1 || image_h < 1) throw Error(ErrorCode::InvalidArgument, "image size must be positive");
  std::ostringstream out;
  out << "<annotation>\n"
      << "  <filename>" << detail::xml_escape(file.image_id) << "</filename>\n"
      << "  <size>\n"
      << "    <width>" << image_w << "</width>\n"
      << "    <height>" << image_h << "</height>\n"
      << "    <depth>" << depth << "</depth>\n"
      << "  </size>\n"
      << "  <segmented>0</segmented>\n";
  for (const auto& obj : file.objects) {
    const auto p = to_pixel_box(obj.box, image_w, image_h);
    out << "  <object>\n"
        << "    <name>" << detail::xml_escape(label_map.name(obj.class_id)) << "</name>\n"
        << "    <pose>Unspecified</pose>\n"
        << "    <truncated>0</truncated>\n"
        << "    <difficult>0</difficult>\n"
        << "    <bndbox>\n"
        << "      <xmin>" << p.xmin << "</xmin>\n"
        << "      <ymin>" << p.ymin << "</ymin>\n"
        << "      <xmax>" << p.xmax << "</xmax>\n"
        << "      <ymax>" << p.ymax << "</ymax>\n"
        << "    </bndbox>\n"
        << "  </object>\n";
  }
  out << "</annotation>\n";
  return out.str();
}

struct VocDocument {
  LabelFile file;
  int width = 0;
  int height = 0;
  std::vector<PixelBox> pixel_boxes;
};

/// Reads the subset of VOC written by to_voc (and by LabelImg).
inline VocDocument from_voc(std::string_view xml, const LabelMap& label_map) {
  VocDocument doc;
  std::size_t pos = 0;
  if (const auto fname = detail::xml_child(xml, "filename", pos)) {
    doc.file.image_id = fs::path(detail::xml_unescape(detail::trim(*fname))).stem().string();
  }
  pos = 0;
  const auto size = detail::xml_child(xml, "size", pos);
  if (!size) throw Error(ErrorCode::MalformedLine, "VOC document lacks <size>");
  const std::string sz(*size);
  auto dimension = [&](std::string_view tag) {
    std::size_t q = 0;
    const auto t = detail::xml_child(sz, tag, q);
    if (!t) throw Error(ErrorCode::MalformedLine, "VOC <size> lacks <" + std::string(tag) + ">");
    const auto v = detail::parse_int(detail::trim(*t));
    if (!v || *v < 1) throw Error(ErrorCode::MalformedLine, "VOC <" + std::string(tag) + "> must be a positive integer");
    return *v;
  };
  doc.width = dimension("width");
  doc.height = dimension("height");
  while (true) {
    std::size_t obj_from = pos;
    const auto object = detail::xml_child(xml, "object", obj_from);
    if (!object) break;
    pos = obj_from;
    const std::string obj(*object);
    std::size_t q = 0;
    const auto name = detail::xml_child(obj, "name", q);
    if (!name) throw Error(ErrorCode::MalformedLine, "VOC <object> lacks <name>");
    const auto cls_name = detail::xml_unescape(detail::trim(*name));
    const auto cls = label_map.id_of(cls_name);
    if (!cls) throw Error(ErrorCode::ClassOutOfRange, "VOC class '" + cls_name + "' is not in the label map");
    q = 0;
    const auto bnd = detail::xml_child(obj, "bndbox", q);
    if (!bnd) throw Error(ErrorCode::MalformedLine, "VOC <object> lacks <bndbox>");
    const std::string bb(*bnd);
    auto coord = [&](std::string_view tag) {
      std::size_t r = 0;
      const auto t = detail::xml_child(bb, tag, r);
      if (!t) throw Error(ErrorCode::MalformedLine, "VOC <bndbox> lacks <" + std::string(tag) + ">");
      const auto v = detail::parse_real(detail::trim(*t));
      if (!v) throw Error(ErrorCode::MalformedLine, "VOC <" + std::string(tag) + "> is not numeric");
      return static_cast<int>(std::lround(*v));
    };
    const PixelBox p{coord("xmin"), coord("ymin"), coord("xmax"), coord("ymax")};
    doc.pixel_boxes.push_back(p);
    doc.file.objects.push_back({*cls, from_pixel_box(p, doc.width, doc.height)});
  }
  return doc;
}

// ---------------------------------------------------------------------------
// COCO
// ---------------------------------------------------------------------------

struct CocoBox {
  double x = 0.0;
  double y = 0.0;
  double w = 0.0;
  double h = 0.0;
};

inline CocoBox to_coco_bbox(const Box& b, int image_w, int image_h) {
  return {b.left() * image_w, b.top() * image_h, b.w() * image_w, b.h() * image_h};
}

inline Box from_coco_bbox(const CocoBox& c, int image_w, int image_h) {
  return Box((c.x + 0.5 * c.w) / image_w, (c.y + 0.5 * c.h) / image_h, c.w / image_w, c.h / image_h);
}

/// Single COCO detection document over the manifest. Image sizes come from
/// the image headers; ids are dense from 1 in manifest/object order.
inline std::string to_coco(const DatasetManifest& manifest, const LabelMap& label_map) {
  using json = nlohmann::ordered_json;
  json images = json::array();
  json annotations = json::array();
  json categories = json::array();
  std::size_t ann_id = 1;
  std::size_t image_id = 1;
  for (const auto& entry : manifest.entries) {
    const auto info = read_image_info(manifest.resolve(entry.image));
    const auto labels = read_yolo_file(manifest.resolve(entry.label), label_map);
    images.push_back({{"id", image_id},
                      {"file_name", entry.image.generic_string()},
                      {"width", info.width},
                      {"height", info.height}});
    for (const auto& obj : labels.objects) {
      const auto bb = to_coco_bbox(obj.box, info.width, info.height);
      annotations.push_back({{"id", ann_id++},
                             {"image_id", image_id},
                             {"category_id", obj.class_id + 1},
                             {"bbox", {bb.x, bb.y, bb.w, bb.h}},
                             {"area", bb.w * bb.h},
                             {"iscrowd", 0}});
    }
    ++image_id;
  }
  for (int id = 0; id < label_map.size(); ++id) {
    categories.push_back({{"id", id + 1}, {"name", label_map.name(id)}, {"supercategory", "gesture"}});
  }
  json doc;
  doc["images"] = images;
  doc["annotations"] = annotations;
  doc["categories"] = categories;
  return doc.dump(2) + "\n";
}

}  // namespace addsl
