#pragma once

#include <algorithm>
#include <cmath>
#include <array>
#include <cstdint>
#include <cstdio>
#include <random>
#include <string>
#include <vector>

#include "addsl/detector.hpp"
#include "addsl/error.hpp"
#include "addsl/geometry.hpp"

namespace addsl {

struct LossWeights {
  double conf = 1.0;
  double cls = 1.0;
  double loc = 1.0;
  double giou = 1.0;

  void validate() const {
    if (!(conf >= 0.0) || !(cls >= 0.0) || !(loc >= 0.0) || !(giou >= 0.0)) {
      throw Error(ErrorCode::InvalidArgument, "loss weights must be non-negative");
    }
  }
};

struct LossBreakdown {
  double conf = 0.0;
  double cls = 0.0;
  double loc = 0.0;
  double giou = 0.0;
  double total = 0.0;
};

/// Smallest predicted width/height used when a predicted box enters IoU.
inline constexpr double kMinPredSize = 1e-6;

/// Predicted box of `entry` in normalized image space with sizes clamped
/// to kMinPredSize.
inline Rect prediction_rect(const PredictionGrid& pred, std::size_t entry) {
  const auto slot = pred.slot_of(entry);
  const auto b = pred.box(entry);
  const double s = pred.shape().grid;
  return Rect::from_center((slot.col + b[0]) / s, (slot.row + b[1]) / s, std::max(b[2], kMinPredSize),
                           std::max(b[3], kMinPredSize));
}

/// lambda_conf * sum over every slot of (c - p)^2.
inline double loss_conf(const PredictionGrid& pred, const TargetGrid& target, const LossWeights& w) {
  require_same_shape(pred, target);
  double sum = 0.0;
  for (std::size_t e = 0; e < pred.entries(); ++e) {
    const double d = target.conf(e) - pred.conf(e);
    sum += d * d;
  }
  return w.conf * sum;
}

/// lambda_cls * sum over every slot and class of (t - p)^2.
inline double loss_cls(const PredictionGrid& pred, const TargetGrid& target, const LossWeights& w) {
  require_same_shape(pred, target);
  double sum = 0.0;
  for (std::size_t e = 0; e < pred.entries(); ++e) {
    const auto t = target.classes(e);
    const auto p = pred.classes(e);
    for (std::size_t c = 0; c < t.size(); ++c) {
      const double d = t[c] - p[c];
      sum += d * d;
    }
  }
  return w.cls * sum;
}

/// lambda_loc * sum over every slot of the squared box-field residual, in
/// grid parameterization.
inline double loss_loc(const PredictionGrid& pred, const TargetGrid& target, const LossWeights& w) {
  require_same_shape(pred, target);
  double sum = 0.0;
  for (std::size_t e = 0; e < pred.entries(); ++e) {
    const auto t = target.box(e);
    const auto p = pred.box(e);
    for (std::size_t k = 0; k < 4; ++k) {
      const double d = t[k] - p[k];
      sum += d * d;
    }
  }
  return w.loc * sum;
}

/// lambda_giou * sum over responsible slots of (1 - GIoU(pred, truth)).
inline double loss_giou(const PredictionGrid& pred, const TargetGrid& target, const LossWeights& w) {
  require_same_shape(pred, target);
  if (w.giou == 0.0) return 0.0;
  double sum = 0.0;
  for (std::size_t e = 0; e < pred.entries(); ++e) {
    if (target.conf(e) != 1.0) continue;
    sum += giou_loss_term(prediction_rect(pred, e), decoded_rect(target, e), 1.0);
  }
  return w.giou * sum;
}

inline LossBreakdown total_loss(const PredictionGrid& pred, const TargetGrid& target, const LossWeights& w) {
  w.validate();
  LossBreakdown out;
  out.conf = loss_conf(pred, target, w);
  out.cls = loss_cls(pred, target, w);
  out.loc = loss_loc(pred, target, w);
  out.giou = loss_giou(pred, target, w);
  out.total = out.conf + out.cls + out.loc + out.giou;
  return out;
}

namespace detail {

// d(1 - GIoU)/d(pred corners x0, y0, x1, y1) for fixed truth. At ties the
// derivative is taken from the positive direction.
inline std::array<double, 4> giou_loss_corner_grad(const Rect& p, const Rect& t) {
  const double pw = p.width();
  const double ph = p.height();
  const double iw_raw = std::min(p.x1, t.x1) - std::max(p.x0, t.x0);
  const double ih_raw = std::min(p.y1, t.y1) - std::max(p.y0, t.y0);
  const double iw = std::max(0.0, iw_raw);
  const double ih = std::max(0.0, ih_raw);
  const double inter = iw * ih;
  const double uni = pw * ph + t.area() - inter;
  const double cw = std::max(p.x1, t.x1) - std::min(p.x0, t.x0);
  const double ch = std::max(p.y1, t.y1) - std::min(p.y0, t.y0);
  const double hull = cw * ch;

  // partials of intersection width/height and hull width/height
  const double diw_dx0 = iw_raw > 0.0 && p.x0 >= t.x0 ? -1.0 : 0.0;
  const double diw_dx1 = iw_raw > 0.0 && p.x1 < t.x1 ? 1.0 : 0.0;
  const double dih_dy0 = ih_raw > 0.0 && p.y0 >= t.y0 ? -1.0 : 0.0;
  const double dih_dy1 = ih_raw > 0.0 && p.y1 < t.y1 ? 1.0 : 0.0;
  const double dcw_dx0 = p.x0 < t.x0 ? -1.0 : 0.0;
  const double dcw_dx1 = p.x1 >= t.x1 ? 1.0 : 0.0;
  const double dch_dy0 = p.y0 < t.y0 ? -1.0 : 0.0;
  const double dch_dy1 = p.y1 >= t.y1 ? 1.0 : 0.0;

  const double d_inter[4] = {diw_dx0 * ih, dih_dy0 * iw, diw_dx1 * ih, dih_dy1 * iw};
  const double d_area[4] = {-ph, -pw, ph, pw};
  const double d_hull[4] = {dcw_dx0 * ch, dch_dy0 * cw, dcw_dx1 * ch, dch_dy1 * cw};

  // L = 2 - I/U - U/H
  std::array<double, 4> g{};
  for (int k = 0; k < 4; ++k) {
    const double d_uni = d_area[k] - d_inter[k];
    g[static_cast<std::size_t>(k)] =
        -(d_inter[k] * uni - inter * d_uni) / (uni * uni) - (d_uni * hull - uni * d_hull[k]) / (hull * hull);
  }
  return g;
}

}  // namespace detail

/// Analytic gradient of total_loss with respect to every prediction value.
inline GradientGrid grad_total(const PredictionGrid& pred, const TargetGrid& target, const LossWeights& w) {
  require_same_shape(pred, target);
  w.validate();
  GradientGrid grad(pred.shape());
  const double s = pred.shape().grid;
  for (std::size_t e = 0; e < pred.entries(); ++e) {
    grad.conf(e) = -2.0 * w.conf * (target.conf(e) - pred.conf(e));
    const auto tc = target.classes(e);
    const auto pc = pred.classes(e);
    auto gc = grad.classes(e);
    for (std::size_t c = 0; c < tc.size(); ++c) gc[c] = -2.0 * w.cls * (tc[c] - pc[c]);
    const auto tb = target.box(e);
    const auto pb = pred.box(e);
    auto gb = grad.box(e);
    for (std::size_t k = 0; k < 4; ++k) gb[k] = -2.0 * w.loc * (tb[k] - pb[k]);

    if (w.giou == 0.0 || target.conf(e) != 1.0) continue;
    const auto corner = detail::giou_loss_corner_grad(prediction_rect(pred, e), decoded_rect(target, e));
    // x0 = (col + ox)/S - w/2, x1 = (col + ox)/S + w/2, likewise for y
    gb[0] += w.giou * (corner[0] + corner[2]) / s;
    gb[1] += w.giou * (corner[1] + corner[3]) / s;
    if (pb[2] >= kMinPredSize) gb[2] += w.giou * 0.5 * (corner[2] - corner[0]);
    if (pb[3] >= kMinPredSize) gb[3] += w.giou * 0.5 * (corner[3] - corner[1]);
  }
  return grad;
}

/// Relative error with a floor on the denominator so that components whose
/// true value is zero are judged on absolute error.
inline constexpr double kGradcheckFloor = 1e-4;

inline double relative_error(double analytic, double numeric) noexcept {
  return std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), kGradcheckFloor});
}

struct GradcheckResult {
  double max_relative_error = 0.0;
  std::size_t worst_index = 0;
  std::size_t checked = 0;
};

/// Compares grad_total against central differences of total_loss.
inline GradcheckResult gradient_check(const PredictionGrid& pred, const TargetGrid& target, const LossWeights& w,
                                      double step = 1e-5) {
  const auto analytic = grad_total(pred, target, w);
  PredictionGrid probe = pred;
  GradcheckResult result;
  for (std::size_t i = 0; i < probe.values().size(); ++i) {
    const double orig = probe.values()[i];
    probe.values()[i] = orig + step;
    const double up = total_loss(probe, target, w).total;
    const double hi = probe.values()[i];
    probe.values()[i] = orig - step;
    const double down = total_loss(probe, target, w).total;
    const double lo = probe.values()[i];
    probe.values()[i] = orig;
    const double numeric = (up - down) / (hi - lo);
    const double err = relative_error(analytic.values()[i], numeric);
    if (err > result.max_relative_error) {
      result.max_relative_error = err;
      result.worst_index = i;
    }
    ++result.checked;
  }
  return result;
}

struct GradcheckInstance {
  HeadConfig cfg;
  PredictionGrid pred;
  TargetGrid target;
  LossWeights weights;
};

namespace detail {

inline double unit_real(std::mt19937_64& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }
inline double uniform_real(std::mt19937_64& rng, double lo, double hi) { return lo + (hi - lo) * unit_real(rng); }
inline int uniform_int(std::mt19937_64& rng, int lo, int hi) {
  return lo + static_cast<int>(rng() % static_cast<std::uint64_t>(hi - lo + 1));
}

// True when an edge of `p` sits within `margin` of an edge of `t` that it is
// compared against in IoU/GIoU, or the overlap is within `margin` of vanishing.
inline bool near_giou_kink(const Rect& p, const Rect& t, double margin) {
  const double gaps[] = {p.x0 - t.x0, p.x1 - t.x1, p.y0 - t.y0, p.y1 - t.y1,
                         std::min(p.x1, t.x1) - std::max(p.x0, t.x0), std::min(p.y1, t.y1) - std::max(p.y0, t.y0)};
  return std::any_of(std::begin(gaps), std::end(gaps), [margin](double g) { return std::abs(g) < margin; });
}

}  // namespace detail

/// Seeded random instance with S <= 4, B <= 2, C <= 5, non-colliding
/// objects, positive predicted sizes and no GIoU tie within 1e-3.
inline GradcheckInstance make_gradcheck_instance(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  GradcheckInstance inst;
  inst.cfg.grid = detail::uniform_int(rng, 1, 4);
  inst.cfg.classes = detail::uniform_int(rng, 1, 5);
  const int anchors = detail::uniform_int(rng, 1, 2);
  inst.cfg.anchors.clear();
  for (int a = 0; a < anchors; ++a) {
    inst.cfg.anchors.push_back({0.15 + 0.3 * a, 0.2 + 0.3 * a});
  }
  inst.weights = {detail::uniform_real(rng, 0.1, 2.0), detail::uniform_real(rng, 0.1, 2.0),
                  detail::uniform_real(rng, 0.1, 2.0), detail::uniform_real(rng, 0.1, 2.0)};

  std::vector<LabeledBox> objects;
  const int n_objects = detail::uniform_int(rng, 1, 3);
  for (int i = 0; i < n_objects; ++i) {
    const double w = detail::uniform_real(rng, 0.05, 0.6);
    const double h = detail::uniform_real(rng, 0.05, 0.6);
    const double cx = detail::uniform_real(rng, 0.5 * w, 1.0 - 0.5 * w);
    const double cy = detail::uniform_real(rng, 0.5 * h, 1.0 - 0.5 * h);
    objects.push_back({detail::uniform_int(rng, 0, inst.cfg.classes - 1), Box(cx, cy, w, h)});
  }
  inst.target = assign_targets(objects, inst.cfg).grid;

  inst.pred = PredictionGrid(inst.cfg);
  for (std::size_t e = 0; e < inst.pred.entries(); ++e) {
    inst.pred.conf(e) = detail::uniform_real(rng, -0.2, 1.2);
    for (auto& c : inst.pred.classes(e)) c = detail::uniform_real(rng, -0.2, 1.2);
    auto b = inst.pred.box(e);
    const bool responsible = inst.target.conf(e) == 1.0;
    do {
      b[0] = detail::uniform_real(rng, -0.2, 1.2);
      b[1] = detail::uniform_real(rng, -0.2, 1.2);
      b[2] = detail::uniform_real(rng, 0.05, 0.7);
      b[3] = detail::uniform_real(rng, 0.05, 0.7);
    } while (responsible && detail::near_giou_kink(prediction_rect(inst.pred, e), decoded_rect(inst.target, e), 1e-3));
  }
  return inst;
}

// ---------------------------------------------------------------------------
// Toy gradient descent
// ---------------------------------------------------------------------------

struct ToyFitResult {
  PredictionGrid grid;
  std::vector<LossBreakdown> trace;  // trace[k] is the loss after k updates
  bool monotone = true;
};

/// Starting point: confidence 0.5, class scores 1/C, every box at its cell
/// center with the median anchor size.
inline PredictionGrid toy_initial_grid(const HeadConfig& cfg) {
  cfg.validate();
  auto anchors = cfg.anchors;
  std::sort(anchors.begin(), anchors.end(), [](const AnchorShape& a, const AnchorShape& b) { return a.w * a.h < b.w * b.h; });
  const auto median = anchors[(anchors.size() - 1) / 2];
  PredictionGrid g(cfg);
  for (std::size_t e = 0; e < g.entries(); ++e) {
    g.conf(e) = 0.5;
    for (auto& c : g.classes(e)) c = 1.0 / cfg.classes;
    auto b = g.box(e);
    b[0] = 0.5;
    b[1] = 0.5;
    b[2] = median.w;
    b[3] = median.h;
  }
  return g;
}

/// Plain gradient descent on total_loss with the grid values as free
/// parameters. Throws Diverged once the loss exceeds 1e6 or is not finite.
inline ToyFitResult toy_fit(std::span<const LabeledBox> objects, const HeadConfig& cfg, const LossWeights& w, double lr,
                            int steps) {
  if (!(lr > 0.0)) throw Error(ErrorCode::InvalidArgument, "learning rate must be positive");
  if (steps < 1) throw Error(ErrorCode::InvalidArgument, "steps must be >= 1");
  const auto assignment = assign_targets(objects, cfg);
  if (!assignment.collisions.empty()) {
    throw Error(ErrorCode::CellCollision, std::to_string(assignment.collisions.size()) + " objects share an anchor slot");
  }
  ToyFitResult result{toy_initial_grid(cfg), {}, true};
  result.trace.reserve(static_cast<std::size_t>(steps) + 1);

  auto record = [&](int step) {
    const auto loss = total_loss(result.grid, assignment.grid, w);
    if (!std::isfinite(loss.total) || loss.total > 1e6) {
      throw Error(ErrorCode::Diverged, "loss " + std::to_string(loss.total) + " at step " + std::to_string(step));
    }
    if (!result.trace.empty() && loss.total > result.trace.back().total) result.monotone = false;
    result.trace.push_back(loss);
  };
  record(0);
  for (int step = 1; step <= steps; ++step) {
    const auto grad = grad_total(result.grid, assignment.grid, w);
    auto values = result.grid.values();
    const auto g = grad.values();
    for (std::size_t i = 0; i < values.size(); ++i) values[i] -= lr * g[i];
    record(step);
  }
  return result;
}

/// CSV with header "step,conf,cls,loc,giou,total".
inline std::string trace_csv(const std::vector<LossBreakdown>& trace) {
  std::string out = "step,conf,cls,loc,giou,total\n";
  char buf[256];
  for (std::size_t k = 0; k < trace.size(); ++k) {
    const auto& t = trace[k];
    std::snprintf(buf, sizeof buf, "%zu,%.17g,%.17g,%.17g,%.17g,%.17g\n", k, t.conf, t.cls, t.loc, t.giou, t.total);
    out += buf;
  }
  return out;
}

}  // namespace addsl
