#pragma once

#include <algorithm>
#include <cmath>
#include <span>
#include <vector>

#include "addsl/error.hpp"

namespace addsl {

/// Slack allowed on the unit-image bounds check.
inline constexpr double kBoxBoundsEps = 1e-9;

/// Corner-form rectangle in an arbitrary coordinate space. Unchecked; used
/// for the arithmetic underneath Box and for predicted boxes that may leave
/// the image.
struct Rect {
  double x0 = 0.0;
  double y0 = 0.0;
  double x1 = 0.0;
  double y1 = 0.0;

  double width() const noexcept { return x1 - x0; }
  double height() const noexcept { return y1 - y0; }
  double area() const noexcept { return std::max(0.0, width()) * std::max(0.0, height()); }

  static Rect from_center(double cx, double cy, double w, double h) noexcept {
    return {cx - 0.5 * w, cy - 0.5 * h, cx + 0.5 * w, cy + 0.5 * h};
  }

  friend bool operator==(const Rect&, const Rect&) = default;
};

inline Rect intersection(const Rect& a, const Rect& b) noexcept {
  return {std::max(a.x0, b.x0), std::max(a.y0, b.y0), std::min(a.x1, b.x1), std::min(a.y1, b.y1)};
}

inline Rect enclosing(const Rect& a, const Rect& b) noexcept {
  return {std::min(a.x0, b.x0), std::min(a.y0, b.y0), std::max(a.x1, b.x1), std::max(a.y1, b.y1)};
}

inline double area(const Rect& r) noexcept { return r.area(); }

inline double iou(const Rect& a, const Rect& b) noexcept {
  const double inter = intersection(a, b).area();
  const double uni = a.area() + b.area() - inter;
  if (uni <= 0.0) return 0.0;
  return inter / uni;
}

/// IoU minus the fraction of the enclosing box not covered by the union.
inline double giou(const Rect& a, const Rect& b) noexcept {
  const double inter = intersection(a, b).area();
  const double uni = a.area() + b.area() - inter;
  const double hull = enclosing(a, b).area();
  if (uni <= 0.0 || hull <= 0.0) return 0.0;
  return inter / uni - (hull - uni) / hull;
}

/// Scalar stand-in for the "enclosing box" term of the GIoU loss:
/// IoU plus the uncovered fraction of the enclosing box, so that
/// `giou_loss_term(a, b, 1) == 1 - giou(a, b)`.
inline double enclosing_penalty_term(const Rect& a, const Rect& b) noexcept {
  const double inter = intersection(a, b).area();
  const double uni = a.area() + b.area() - inter;
  const double hull = enclosing(a, b).area();
  if (uni <= 0.0 || hull <= 0.0) return 0.0;
  return inter / uni + (hull - uni) / hull;
}

/// Per-box GIoU loss: 1 - IoU + lambda * (g - IoU).
inline double giou_loss_term(const Rect& pred, const Rect& truth, double lambda) noexcept {
  const double overlap = iou(pred, truth);
  return 1.0 - overlap + lambda * (enclosing_penalty_term(pred, truth) - overlap);
}

/// Normalized center-format box lying inside the unit image.
class Box {
 public:
  Box(double cx, double cy, double w, double h) : cx_(cx), cy_(cy), w_(w), h_(h) {
    if (!(w > 0.0) || !(h > 0.0) || !std::isfinite(cx) || !std::isfinite(cy) || !std::isfinite(w) ||
        !std::isfinite(h)) {
      throw Error(ErrorCode::DegenerateBox, "box must have finite center and positive size");
    }
    if (w > 1.0 + kBoxBoundsEps || h > 1.0 + kBoxBoundsEps || cx - 0.5 * w < -kBoxBoundsEps ||
        cx + 0.5 * w > 1.0 + kBoxBoundsEps || cy - 0.5 * h < -kBoxBoundsEps ||
        cy + 0.5 * h > 1.0 + kBoxBoundsEps) {
      throw Error(ErrorCode::BoxOutOfBounds, "box extends outside the unit image");
    }
  }

  /// Builds a box from corners, failing like the center constructor.
  static Box from_corners(double x0, double y0, double x1, double y1) {
    return Box(0.5 * (x0 + x1), 0.5 * (y0 + y1), x1 - x0, y1 - y0);
  }

  static Box from_rect(const Rect& r) { return from_corners(r.x0, r.y0, r.x1, r.y1); }

  double cx() const noexcept { return cx_; }
  double cy() const noexcept { return cy_; }
  double w() const noexcept { return w_; }
  double h() const noexcept { return h_; }

  double left() const noexcept { return cx_ - 0.5 * w_; }
  double top() const noexcept { return cy_ - 0.5 * h_; }
  double right() const noexcept { return cx_ + 0.5 * w_; }
  double bottom() const noexcept { return cy_ + 0.5 * h_; }

  Rect rect() const noexcept { return {left(), top(), right(), bottom()}; }

  friend bool operator==(const Box&, const Box&) = default;

 private:
  double cx_;
  double cy_;
  double w_;
  double h_;
};

inline double area(const Box& b) noexcept { return b.w() * b.h(); }
inline double iou(const Box& a, const Box& b) noexcept { return iou(a.rect(), b.rect()); }
inline double giou(const Box& a, const Box& b) noexcept { return giou(a.rect(), b.rect()); }
inline Box enclosing(const Box& a, const Box& b) { return Box::from_rect(enclosing(a.rect(), b.rect())); }

struct Detection {
  Box box;
  int class_id = 0;
  double confidence = 0.0;

  friend bool operator==(const Detection&, const Detection&) = default;
};

/// Strict weak order used wherever detections are ranked:
/// confidence desc, then class_id, cx, cy ascending.
inline bool detection_precedes(const Detection& a, const Detection& b) noexcept {
  if (a.confidence != b.confidence) return a.confidence > b.confidence;
  if (a.class_id != b.class_id) return a.class_id < b.class_id;
  if (a.box.cx() != b.box.cx()) return a.box.cx() < b.box.cx();
  return a.box.cy() < b.box.cy();
}

inline void sort_detections(std::vector<Detection>& dets) {
  std::stable_sort(dets.begin(), dets.end(), detection_precedes);
}

/// Greedy non-maximum suppression. A candidate is dropped when its IoU with
/// an already kept box strictly exceeds `iou_threshold` (and, if
/// `class_aware`, the classes agree). Survivors come back in rank order.
inline std::vector<Detection> nms(std::span<const Detection> dets, double iou_threshold,
                                  bool class_aware = true) {
  if (!(iou_threshold >= 0.0 && iou_threshold <= 1.0)) {
    throw Error(ErrorCode::InvalidArgument, "nms iou_threshold must lie in [0, 1]");
  }
  std::vector<Detection> ranked(dets.begin(), dets.end());
  sort_detections(ranked);

  std::vector<Detection> kept;
  kept.reserve(ranked.size());
  for (const auto& cand : ranked) {
    const bool suppressed = std::any_of(kept.begin(), kept.end(), [&](const Detection& k) {
      return (!class_aware || k.class_id == cand.class_id) && iou(k.box, cand.box) > iou_threshold;
    });
    if (!suppressed) kept.push_back(cand);
  }
  return kept;
}

}  // namespace addsl
