#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "addsl/annotation.hpp"
#include "addsl/error.hpp"
#include "addsl/geometry.hpp"

namespace addsl {

struct AnchorShape {
  double w = 0.0;
  double h = 0.0;

  friend bool operator==(const AnchorShape&, const AnchorShape&) = default;
};

/// IoU of two shapes sharing a center.
inline double shape_iou(double w0, double h0, double w1, double h1) noexcept {
  const double inter = std::min(w0, w1) * std::min(h0, h1);
  const double uni = w0 * h0 + w1 * h1 - inter;
  return uni > 0.0 ? inter / uni : 0.0;
}

/// Single-scale head: an S x S grid with B anchors per cell and C classes.
struct HeadConfig {
  int grid = 13;
  int classes = 36;
  std::vector<AnchorShape> anchors{{0.15, 0.25}, {0.25, 0.40}, {0.35, 0.55}, {0.50, 0.75}};

  int anchors_per_cell() const noexcept { return static_cast<int>(anchors.size()); }
  /// Values per anchor: confidence, 4 box fields, C class scores.
  int record_size() const noexcept { return 5 + classes; }
  /// Output channels of the head, B * (5 + C).
  int channels() const noexcept { return anchors_per_cell() * record_size(); }

  void validate() const {
    if (grid < 1) throw Error(ErrorCode::BadConfig, "grid size must be >= 1");
    if (classes < 1) throw Error(ErrorCode::BadConfig, "class count must be >= 1");
    if (anchors.empty()) throw Error(ErrorCode::BadConfig, "at least one anchor is required");
    for (const auto& a : anchors) {
      if (!(a.w > 0.0) || !(a.h > 0.0)) throw Error(ErrorCode::BadConfig, "anchor sizes must be positive");
    }
  }
};

struct GridShape {
  int grid = 0;
  int anchors = 0;
  int classes = 0;

  std::size_t entries() const noexcept {
    return static_cast<std::size_t>(grid) * static_cast<std::size_t>(grid) * static_cast<std::size_t>(anchors);
  }
  std::size_t record_size() const noexcept { return 5 + static_cast<std::size_t>(classes); }
  std::size_t size() const noexcept { return entries() * record_size(); }

  friend bool operator==(const GridShape&, const GridShape&) = default;
};

inline GridShape shape_of(const HeadConfig& cfg) { return {cfg.grid, cfg.anchors_per_cell(), cfg.classes}; }

/// Position of one anchor slot: cell (col, row) and anchor index.
struct Slot {
  int col = 0;
  int row = 0;
  int anchor = 0;
};

/// Dense S x S x B x (5 + C) tensor. Each record holds the confidence,
/// the box in grid parameterization (x offset, y offset within the cell,
/// normalized w, h) and C class scores. The tag keeps predictions, targets
/// and gradients from being mixed up.
template <class Tag>
class Grid {
 public:
  static constexpr std::size_t kConf = 0;
  static constexpr std::size_t kBox = 1;
  static constexpr std::size_t kClass = 5;

  Grid() = default;
  explicit Grid(GridShape shape) : shape_(shape), values_(shape.size(), 0.0) {
    if (shape.grid < 1 || shape.anchors < 1 || shape.classes < 1) {
      throw Error(ErrorCode::ShapeMismatch, "grid dimensions must be positive");
    }
  }
  explicit Grid(const HeadConfig& cfg) : Grid(shape_of(cfg)) {}

  const GridShape& shape() const noexcept { return shape_; }
  std::size_t entries() const noexcept { return shape_.entries(); }

  std::size_t entry_index(const Slot& s) const noexcept {
    return (static_cast<std::size_t>(s.row) * static_cast<std::size_t>(shape_.grid) + static_cast<std::size_t>(s.col)) *
               static_cast<std::size_t>(shape_.anchors) +
           static_cast<std::size_t>(s.anchor);
  }
  Slot slot_of(std::size_t entry) const noexcept {
    const auto a = static_cast<int>(entry % static_cast<std::size_t>(shape_.anchors));
    const auto cell = entry / static_cast<std::size_t>(shape_.anchors);
    return {static_cast<int>(cell % static_cast<std::size_t>(shape_.grid)),
            static_cast<int>(cell / static_cast<std::size_t>(shape_.grid)), a};
  }

  std::span<double> record(std::size_t entry) noexcept {
    return std::span<double>(values_).subspan(entry * shape_.record_size(), shape_.record_size());
  }
  std::span<const double> record(std::size_t entry) const noexcept {
    return std::span<const double>(values_).subspan(entry * shape_.record_size(), shape_.record_size());
  }

  double& conf(std::size_t e) noexcept { return record(e)[kConf]; }
  double conf(std::size_t e) const noexcept { return record(e)[kConf]; }
  std::span<double> box(std::size_t e) noexcept { return record(e).subspan(kBox, 4); }
  std::span<const double> box(std::size_t e) const noexcept { return record(e).subspan(kBox, 4); }
  std::span<double> classes(std::size_t e) noexcept { return record(e).subspan(kClass); }
  std::span<const double> classes(std::size_t e) const noexcept { return record(e).subspan(kClass); }

  std::span<double> values() noexcept { return values_; }
  std::span<const double> values() const noexcept { return values_; }

  friend bool operator==(const Grid&, const Grid&) = default;

 private:
  GridShape shape_{};
  std::vector<double> values_;
};

using PredictionGrid = Grid<struct PredictionTag>;
using TargetGrid = Grid<struct TargetTag>;
using GradientGrid = Grid<struct GradientTag>;

template <class To, class From>
To grid_cast(const Grid<From>& src) {
  To out(src.shape());
  std::copy(src.values().begin(), src.values().end(), out.values().begin());
  return out;
}

template <class A, class B>
void require_same_shape(const Grid<A>& a, const Grid<B>& b) {
  if (!(a.shape() == b.shape())) throw Error(ErrorCode::ShapeMismatch, "prediction and target grids differ in shape");
}

// ---------------------------------------------------------------------------
// Target assignment and decoding
// ---------------------------------------------------------------------------

/// Cell owning a normalized center: (floor(cx*S), floor(cy*S)), with the far
/// edge folded into the last cell.
inline std::pair<int, int> owning_cell(double cx, double cy, int grid) noexcept {
  auto idx = [grid](double v) { return std::clamp(static_cast<int>(std::floor(v * grid)), 0, grid - 1); };
  return {idx(cx), idx(cy)};
}

/// Anchor with the highest shape IoU; ties go to the lowest index.
inline int best_anchor(double w, double h, const std::vector<AnchorShape>& anchors) noexcept {
  int best = 0;
  double best_iou = -1.0;
  for (std::size_t i = 0; i < anchors.size(); ++i) {
    const double v = shape_iou(w, h, anchors[i].w, anchors[i].h);
    if (v > best_iou) {
      best_iou = v;
      best = static_cast<int>(i);
    }
  }
  return best;
}

struct Collision {
  std::size_t object_index = 0;  // the dropped object
  std::size_t kept_index = 0;    // the object already holding the slot
  Slot slot;
};

struct TargetAssignment {
  TargetGrid grid;
  std::vector<Collision> collisions;
  std::size_t assigned = 0;
};

/// Builds the ground-truth tensor. Each object lands in the cell holding its
/// center and the best-matching anchor of that cell; when two objects want
/// the same slot the later one is dropped and reported.
inline TargetAssignment assign_targets(std::span<const LabeledBox> objects, const HeadConfig& cfg) {
  cfg.validate();
  TargetAssignment out{TargetGrid(cfg), {}, 0};
  std::vector<std::size_t> owner(out.grid.entries(), static_cast<std::size_t>(-1));
  const double s = cfg.grid;
  for (std::size_t i = 0; i < objects.size(); ++i) {
    const auto& obj = objects[i];
    if (obj.class_id < 0 || obj.class_id >= cfg.classes) {
      throw Error(ErrorCode::ClassOutOfRange, "object class " + std::to_string(obj.class_id) + " outside head classes");
    }
    const auto [col, row] = owning_cell(obj.box.cx(), obj.box.cy(), cfg.grid);
    const Slot slot{col, row, best_anchor(obj.box.w(), obj.box.h(), cfg.anchors)};
    const auto e = out.grid.entry_index(slot);
    if (owner[e] != static_cast<std::size_t>(-1)) {
      out.collisions.push_back({i, owner[e], slot});
      continue;
    }
    owner[e] = i;
    out.grid.conf(e) = 1.0;
    auto box = out.grid.box(e);
    box[0] = obj.box.cx() * s - col;
    box[1] = obj.box.cy() * s - row;
    box[2] = obj.box.w();
    box[3] = obj.box.h();
    out.grid.classes(e)[static_cast<std::size_t>(obj.class_id)] = 1.0;
    ++out.assigned;
  }
  return out;
}

/// Normalized-image corners of the box stored at `entry`.
template <class Tag>
Rect decoded_rect(const Grid<Tag>& g, std::size_t entry) {
  const auto slot = g.slot_of(entry);
  const auto b = g.box(entry);
  const double s = g.shape().grid;
  return Rect::from_center((slot.col + b[0]) / s, (slot.row + b[1]) / s, b[2], b[3]);
}

/// Emits a detection for every slot with confidence >= threshold. Boxes are
/// clipped to the image (slots whose box vanishes are skipped); confidence
/// is conf * max class score, both clamped to [0, 1]. Rank order.
inline std::vector<Detection> decode(const PredictionGrid& pred, double conf_threshold) {
  if (!(conf_threshold >= 0.0 && conf_threshold <= 1.0)) {
    throw Error(ErrorCode::InvalidArgument, "confidence threshold must lie in [0, 1]");
  }
  std::vector<Detection> dets;
  const double s = pred.shape().grid;
  for (std::size_t e = 0; e < pred.entries(); ++e) {
    const double conf = pred.conf(e);
    if (!(conf >= conf_threshold)) continue;
    const auto slot = pred.slot_of(e);
    const auto b = pred.box(e);
    const double cx = (slot.col + b[0]) / s;
    const double cy = (slot.row + b[1]) / s;
    const double w = b[2];
    const double h = b[3];
    if (!std::isfinite(cx) || !std::isfinite(cy) || !(w > 0.0) || !(h > 0.0)) continue;
    std::optional<Box> box;
    try {
      box.emplace(cx, cy, w, h);
    } catch (const Error&) {
      const Rect r = Rect::from_center(cx, cy, w, h);
      const Rect clipped{std::max(r.x0, 0.0), std::max(r.y0, 0.0), std::min(r.x1, 1.0), std::min(r.y1, 1.0)};
      if (!(clipped.width() > 0.0) || !(clipped.height() > 0.0)) continue;
      box.emplace(Box::from_rect(clipped));
    }
    const auto cls = pred.classes(e);
    const auto best = std::max_element(cls.begin(), cls.end());
    const double score = std::clamp(conf, 0.0, 1.0) * std::clamp(*best, 0.0, 1.0);
    dets.push_back({*box, static_cast<int>(best - cls.begin()), score});
  }
  sort_detections(dets);
  return dets;
}

/// Same as above, after checking that the grid was produced for `cfg`.
inline std::vector<Detection> decode(const PredictionGrid& pred, const HeadConfig& cfg, double conf_threshold) {
  if (!(pred.shape() == shape_of(cfg))) throw Error(ErrorCode::ShapeMismatch, "prediction grid does not match head config");
  return decode(pred, conf_threshold);
}

// ---------------------------------------------------------------------------
// Anchor fitting
// ---------------------------------------------------------------------------

/// k-means over object shapes with distance 1 - shape IoU. Deterministic:
/// centroids start at area quantiles. Result is sorted by area.
inline std::vector<AnchorShape> fit_anchors(std::span<const AnchorShape> shapes, int k, int iterations = 100) {
  if (k < 1) throw Error(ErrorCode::InvalidArgument, "anchor count must be >= 1");
  if (shapes.size() < static_cast<std::size_t>(k)) throw Error(ErrorCode::InvalidArgument, "fewer shapes than anchors");
  std::vector<AnchorShape> sorted(shapes.begin(), shapes.end());
  auto by_area = [](const AnchorShape& a, const AnchorShape& b) {
    return a.w * a.h < b.w * b.h || (a.w * a.h == b.w * b.h && a.w < b.w);
  };
  std::sort(sorted.begin(), sorted.end(), by_area);
  std::vector<AnchorShape> centroids;
  for (int i = 0; i < k; ++i) {
    centroids.push_back(sorted[(static_cast<std::size_t>(2 * i + 1) * sorted.size()) / static_cast<std::size_t>(2 * k)]);
  }
  std::vector<int> label(sorted.size(), -1);
  for (int it = 0; it < iterations; ++it) {
    bool changed = false;
    for (std::size_t i = 0; i < sorted.size(); ++i) {
      int best = 0;
      double best_iou = -1.0;
      for (int c = 0; c < k; ++c) {
        const double v = shape_iou(sorted[i].w, sorted[i].h, centroids[static_cast<std::size_t>(c)].w,
                                   centroids[static_cast<std::size_t>(c)].h);
        if (v > best_iou) {
          best_iou = v;
          best = c;
        }
      }
      changed |= label[i] != best;
      label[i] = best;
    }
    if (!changed) break;
    for (int c = 0; c < k; ++c) {
      double sw = 0.0, sh = 0.0;
      std::size_t n = 0;
      for (std::size_t i = 0; i < sorted.size(); ++i) {
        if (label[i] != c) continue;
        sw += sorted[i].w;
        sh += sorted[i].h;
        ++n;
      }
      if (n > 0) centroids[static_cast<std::size_t>(c)] = {sw / static_cast<double>(n), sh / static_cast<double>(n)};
    }
  }
  std::sort(centroids.begin(), centroids.end(), by_area);
  return centroids;
}

// ---------------------------------------------------------------------------
// Layer shapes and parameter counts
// ---------------------------------------------------------------------------

enum class LayerKind { Conv, DepthwiseConv, PointwiseConv, MaxPool };

inline std::string_view to_string(LayerKind k) noexcept {
  switch (k) {
    case LayerKind::Conv: return "conv";
    case LayerKind::DepthwiseConv: return "depthwise";
    case LayerKind::PointwiseConv: return "pointwise";
    case LayerKind::MaxPool: return "maxpool";
  }
  return "conv";
}

struct LayerSpec {
  LayerKind kind = LayerKind::Conv;
  int in_ch = 0;
  int out_ch = 0;
  int kernel = 1;
  int stride = 1;
  int padding = 0;
  bool bias = false;

  static LayerSpec conv(int in, int out, int k, int s = 1, int p = 0, bool bias = false) {
    return {LayerKind::Conv, in, out, k, s, p, bias};
  }
  static LayerSpec depthwise(int ch, int k, int s = 1, int p = 0, bool bias = false) {
    return {LayerKind::DepthwiseConv, ch, ch, k, s, p, bias};
  }
  static LayerSpec pointwise(int in, int out, bool bias = false) { return {LayerKind::PointwiseConv, in, out, 1, 1, 0, bias}; }
  static LayerSpec maxpool(int ch, int k, int s, int p = 0) { return {LayerKind::MaxPool, ch, ch, k, s, p, false}; }
};

struct TensorShape {
  long height = 0;
  long width = 0;
  long channels = 0;

  friend bool operator==(const TensorShape&, const TensorShape&) = default;
};

namespace detail {
inline void check_layer(const LayerSpec& l, std::size_t index) {
  auto fail = [index](const std::string& why) {
    throw Error(ErrorCode::ShapeMismatch, "layer " + std::to_string(index) + ": " + why);
  };
  if (l.in_ch < 1 || l.out_ch < 1 || l.kernel < 1 || l.stride < 1 || l.padding < 0) fail("non-positive dimension");
  if ((l.kind == LayerKind::DepthwiseConv || l.kind == LayerKind::MaxPool) && l.out_ch != l.in_ch) {
    fail(std::string(to_string(l.kind)) + " requires out_ch == in_ch");
  }
  if (l.kind == LayerKind::PointwiseConv && l.kernel != 1) fail("pointwise requires kernel 1");
}
}  // namespace detail

/// Output shape after each layer: floor((in + 2p - k) / s) + 1 spatially.
inline std::vector<TensorShape> shape_propagate(TensorShape input, std::span<const LayerSpec> layers) {
  if (input.height < 1 || input.width < 1 || input.channels < 1) {
    throw Error(ErrorCode::ShapeMismatch, "input shape must be positive");
  }
  std::vector<TensorShape> out;
  out.reserve(layers.size());
  TensorShape cur = input;
  for (std::size_t i = 0; i < layers.size(); ++i) {
    const auto& l = layers[i];
    detail::check_layer(l, i);
    if (l.in_ch != cur.channels) {
      throw Error(ErrorCode::ShapeMismatch, "layer " + std::to_string(i) + ": expects " + std::to_string(l.in_ch) +
                                                " channels, receives " + std::to_string(cur.channels));
    }
    auto dim = [&](long in) {
      const long span = in + 2L * l.padding - l.kernel;
      if (span < 0) throw Error(ErrorCode::ShapeMismatch, "layer " + std::to_string(i) + ": kernel larger than padded input");
      return span / l.stride + 1;
    };
    cur = {dim(cur.height), dim(cur.width), l.out_ch};
    out.push_back(cur);
  }
  return out;
}

inline std::int64_t param_count(const LayerSpec& l) {
  const std::int64_t k2 = static_cast<std::int64_t>(l.kernel) * l.kernel;
  switch (l.kind) {
    case LayerKind::Conv: return k2 * l.in_ch * l.out_ch + (l.bias ? l.out_ch : 0);
    case LayerKind::DepthwiseConv: return k2 * l.in_ch + (l.bias ? l.in_ch : 0);
    case LayerKind::PointwiseConv: return static_cast<std::int64_t>(l.in_ch) * l.out_ch + (l.bias ? l.out_ch : 0);
    case LayerKind::MaxPool: return 0;
  }
  return 0;
}

inline std::int64_t param_count(std::span<const LayerSpec> layers) {
  std::int64_t total = 0;
  for (std::size_t i = 0; i < layers.size(); ++i) {
    detail::check_layer(layers[i], i);
    total += param_count(layers[i]);
  }
  return total;
}

// ---------------------------------------------------------------------------
// Config files
// ---------------------------------------------------------------------------

namespace detail {

inline std::string strip_comment(std::string line) {
  const auto hash = line.find('#');
  if (hash != std::string::npos) line.erase(hash);
  return trim(line);
}

inline int config_int(std::string_view value, std::size_t line_no, std::string_view key) {
  const auto v = parse_int(trim(value));
  if (!v) throw ParseError(ErrorCode::BadConfig, line_no, std::string(value), std::string(key) + " must be an integer");
  return *v;
}

}  // namespace detail

/// Key-value head config:
///   grid = 13
///   classes = 36
///   anchors = 0.15,0.25 0.25,0.40 0.35,0.55 0.50,0.75
/// Missing keys keep their defaults.
inline HeadConfig parse_head_config(std::string_view text) {
  HeadConfig cfg;
  std::optional<int> declared_anchors;
  std::istringstream in{std::string(text)};
  std::string raw;
  std::size_t line_no = 0;
  while (std::getline(in, raw)) {
    ++line_no;
    const auto line = detail::strip_comment(raw);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ParseError(ErrorCode::BadConfig, line_no, line, "expected key = value");
    const auto key = detail::trim(line.substr(0, eq));
    const auto value = detail::trim(line.substr(eq + 1));
    if (key == "grid") {
      cfg.grid = detail::config_int(value, line_no, key);
    } else if (key == "classes") {
      cfg.classes = detail::config_int(value, line_no, key);
    } else if (key == "anchors_per_cell") {
      declared_anchors = detail::config_int(value, line_no, key);
    } else if (key == "anchors") {
      cfg.anchors.clear();
      for (auto pair : detail::split_ws(value)) {
        const auto comma = pair.find(',');
        const std::optional<double> w = comma == std::string_view::npos ? std::nullopt : detail::parse_real(pair.substr(0, comma));
        const std::optional<double> h = comma == std::string_view::npos ? std::nullopt : detail::parse_real(pair.substr(comma + 1));
        if (!w || !h) throw ParseError(ErrorCode::BadConfig, line_no, std::string(pair), "anchor must be w,h");
        cfg.anchors.push_back({*w, *h});
      }
    } else {
      throw ParseError(ErrorCode::BadConfig, line_no, key, "unknown key");
    }
  }
  if (declared_anchors && *declared_anchors != cfg.anchors_per_cell()) {
    throw Error(ErrorCode::BadConfig, "anchors_per_cell disagrees with the anchor list");
  }
  cfg.validate();
  return cfg;
}

/// One layer per line, kind followed by key=value fields:
///   conv in=3 out=32 k=3 s=2 p=1 bias=1
///   depthwise in=256 k=3 s=1 p=1
///   pointwise in=256 out=512
///   maxpool in=512 k=2 s=2
/// Optionally a leading "input h=416 w=416 c=3" line.
struct LayerChain {
  std::optional<TensorShape> input;
  std::vector<LayerSpec> layers;
};

inline LayerChain parse_layer_chain(std::string_view text) {
  LayerChain chain;
  std::istringstream in{std::string(text)};
  std::string raw;
  std::size_t line_no = 0;
  while (std::getline(in, raw)) {
    ++line_no;
    const auto line = detail::strip_comment(raw);
    if (line.empty()) continue;
    const auto tok = detail::split_ws(line);
    const std::string kind(tok[0]);
    std::map<std::string, int> kv;
    for (std::size_t i = 1; i < tok.size(); ++i) {
      const auto eq = tok[i].find('=');
      if (eq == std::string_view::npos) throw ParseError(ErrorCode::BadConfig, line_no, std::string(tok[i]), "expected key=value");
      const std::string key(tok[i].substr(0, eq));
      kv[key] = detail::config_int(tok[i].substr(eq + 1), line_no, key);
    }
    auto get = [&](const std::string& key, std::optional<int> fallback = std::nullopt) {
      const auto it = kv.find(key);
      if (it != kv.end()) return it->second;
      if (fallback) return *fallback;
      throw ParseError(ErrorCode::BadConfig, line_no, kind, "missing field " + key);
    };
    if (kind == "input") {
      chain.input = TensorShape{get("h"), get("w"), get("c")};
      continue;
    }
    LayerSpec l;
    if (kind == "conv") {
      l = LayerSpec::conv(get("in"), get("out"), get("k"), get("s", 1), get("p", 0), get("bias", 0) != 0);
    } else if (kind == "depthwise") {
      l = LayerSpec::depthwise(get("in"), get("k"), get("s", 1), get("p", 0), get("bias", 0) != 0);
      l.out_ch = get("out", l.in_ch);
    } else if (kind == "pointwise") {
      l = LayerSpec::pointwise(get("in"), get("out"), get("bias", 0) != 0);
    } else if (kind == "maxpool") {
      l = LayerSpec::maxpool(get("in"), get("k"), get("s", get("k")), get("p", 0));
    } else {
      throw ParseError(ErrorCode::BadConfig, line_no, kind, "unknown layer kind");
    }
    chain.layers.push_back(l);
  }
  return chain;
}

// ---------------------------------------------------------------------------
// Grid files
// ---------------------------------------------------------------------------

template <class Tag>
nlohmann::ordered_json grid_to_json(const Grid<Tag>& g, std::string_view kind) {
  nlohmann::ordered_json j;
  j["kind"] = kind;
  j["grid"] = g.shape().grid;
  j["anchors"] = g.shape().anchors;
  j["classes"] = g.shape().classes;
  j["values"] = std::vector<double>(g.values().begin(), g.values().end());
  return j;
}

template <class GridT>
GridT grid_from_json(const nlohmann::json& j) {
  try {
    const GridShape shape{j.at("grid").get<int>(), j.at("anchors").get<int>(), j.at("classes").get<int>()};
    GridT g(shape);
    const auto values = j.at("values").get<std::vector<double>>();
    if (values.size() != shape.size()) throw Error(ErrorCode::ShapeMismatch, "grid value count does not match its shape");
    std::copy(values.begin(), values.end(), g.values().begin());
    return g;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::BadConfig, std::string("malformed grid document: ") + e.what());
  }
}

}  // namespace addsl
