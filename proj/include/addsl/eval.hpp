#pragma once

#include <algorithm>
#include <cstdio>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "addsl/annotation.hpp"
#include "addsl/error.hpp"
#include "addsl/geometry.hpp"

namespace addsl {

struct MatchResult {
  std::vector<Detection> detections;         // in rank order
  std::vector<std::optional<std::size_t>> matched_gt;  // per ranked detection; set iff TP
  std::vector<bool> gt_matched;              // per ground truth

  std::size_t true_positives() const noexcept {
    return static_cast<std::size_t>(std::count_if(matched_gt.begin(), matched_gt.end(), [](const auto& m) { return m.has_value(); }));
  }
  std::size_t false_positives() const noexcept { return matched_gt.size() - true_positives(); }
  std::size_t ground_truths() const noexcept { return gt_matched.size(); }
};

/// Greedy matching in rank order. A detection is a true positive when an
/// unmatched ground truth of its class overlaps it with IoU >= threshold;
/// it consumes the highest-IoU such ground truth (lowest index on ties).
inline MatchResult match(std::span<const Detection> dets, std::span<const LabeledBox> gts, double iou_threshold = 0.5) {
  if (!(iou_threshold > 0.0 && iou_threshold <= 1.0)) {
    throw Error(ErrorCode::InvalidArgument, "match iou_threshold must lie in (0, 1]");
  }
  MatchResult m;
  m.detections.assign(dets.begin(), dets.end());
  sort_detections(m.detections);
  m.gt_matched.assign(gts.size(), false);
  for (const auto& det : m.detections) {
    std::optional<std::size_t> best;
    double best_iou = -1.0;
    for (std::size_t g = 0; g < gts.size(); ++g) {
      if (m.gt_matched[g] || gts[g].class_id != det.class_id) continue;
      const double v = iou(det.box, gts[g].box);
      if (v >= iou_threshold && v > best_iou) {
        best_iou = v;
        best = g;
      }
    }
    if (best) m.gt_matched[*best] = true;
    m.matched_gt.push_back(best);
  }
  return m;
}

struct PrecisionRecall {
  double precision = 1.0;
  double recall = 1.0;
};

/// precision = TP/(TP+FP), 1 without detections; recall = TP/|gt|, 1 without ground truth.
inline PrecisionRecall precision_recall(std::size_t tp, std::size_t n_dets, std::size_t n_gts) noexcept {
  PrecisionRecall pr;
  if (n_dets > 0) pr.precision = static_cast<double>(tp) / static_cast<double>(n_dets);
  if (n_gts > 0) pr.recall = static_cast<double>(tp) / static_cast<double>(n_gts);
  return pr;
}

inline PrecisionRecall precision_recall(const MatchResult& m) noexcept {
  return precision_recall(m.true_positives(), m.detections.size(), m.ground_truths());
}

/// One single-object image: its detections and its ground-truth class.
struct ImageClassification {
  std::vector<Detection> detections;
  int gt_class = 0;
};

/// Highest-ranked detection with confidence >= threshold, if any.
inline std::optional<Detection> top_detection(std::span<const Detection> dets, double conf_threshold = 0.0) {
  std::optional<Detection> best;
  for (const auto& d : dets) {
    if (d.confidence < conf_threshold) continue;
    if (!best || detection_precedes(d, *best)) best = d;
  }
  return best;
}

/// Fraction of images whose top detection carries the ground-truth class;
/// images without detections count as wrong. 1 for an empty list.
inline double accuracy_top1(std::span<const ImageClassification> images) {
  if (images.empty()) return 1.0;
  std::size_t correct = 0;
  for (const auto& img : images) {
    const auto top = top_detection(img.detections);
    if (top && top->class_id == img.gt_class) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(images.size());
}

/// Per-image detections and ground truths for corpus-level metrics.
struct ImageDetections {
  std::vector<Detection> detections;
  std::vector<LabeledBox> ground_truth;
};

/// All-points interpolated AP over the whole corpus. Detections are matched
/// per image, then ranked globally by confidence (image order breaks ties).
inline double average_precision(std::span<const ImageDetections> images, double iou_threshold = 0.5) {
  struct Scored {
    double confidence;
    std::size_t image;
    std::size_t rank;
    bool tp;
  };
  std::vector<Scored> scored;
  std::size_t n_gts = 0;
  for (std::size_t i = 0; i < images.size(); ++i) {
    const auto m = match(images[i].detections, images[i].ground_truth, iou_threshold);
    n_gts += images[i].ground_truth.size();
    for (std::size_t k = 0; k < m.detections.size(); ++k) {
      scored.push_back({m.detections[k].confidence, i, k, m.matched_gt[k].has_value()});
    }
  }
  if (n_gts == 0) return scored.empty() ? 1.0 : 0.0;
  std::stable_sort(scored.begin(), scored.end(), [](const Scored& a, const Scored& b) {
    if (a.confidence != b.confidence) return a.confidence > b.confidence;
    if (a.image != b.image) return a.image < b.image;
    return a.rank < b.rank;
  });
  std::vector<double> precision(scored.size());
  std::vector<double> recall(scored.size());
  std::size_t tp = 0;
  for (std::size_t k = 0; k < scored.size(); ++k) {
    tp += scored[k].tp ? 1 : 0;
    precision[k] = static_cast<double>(tp) / static_cast<double>(k + 1);
    recall[k] = static_cast<double>(tp) / static_cast<double>(n_gts);
  }
  // precision envelope: max precision at any recall >= r_k
  for (std::size_t k = scored.size(); k-- > 1;) precision[k - 1] = std::max(precision[k - 1], precision[k]);
  double ap = 0.0;
  double prev_recall = 0.0;
  for (std::size_t k = 0; k < scored.size(); ++k) {
    ap += (recall[k] - prev_recall) * precision[k];
    prev_recall = recall[k];
  }
  return std::clamp(ap, 0.0, 1.0);
}

/// (C+1) x (C+1) counts; rows are ground-truth classes, columns predicted
/// classes, index C is background.
class ConfusionMatrix {
 public:
  explicit ConfusionMatrix(int classes)
      : classes_(classes), counts_(static_cast<std::size_t>(classes + 1) * static_cast<std::size_t>(classes + 1), 0) {}

  int classes() const noexcept { return classes_; }
  int background() const noexcept { return classes_; }

  std::size_t at(int truth, int predicted) const { return counts_.at(index(truth, predicted)); }
  void add(int truth, int predicted) { ++counts_.at(index(truth, predicted)); }

  std::size_t row_sum(int truth) const {
    std::size_t s = 0;
    for (int p = 0; p <= classes_; ++p) s += at(truth, p);
    return s;
  }
  std::size_t total() const { return std::accumulate(counts_.begin(), counts_.end(), std::size_t{0}); }
  std::size_t diagonal() const {
    std::size_t s = 0;
    for (int c = 0; c < classes_; ++c) s += at(c, c);
    return s;
  }

 private:
  std::size_t index(int truth, int predicted) const {
    if (truth < 0 || truth > classes_ || predicted < 0 || predicted > classes_) {
      throw Error(ErrorCode::ClassOutOfRange, "confusion index outside [0, C]");
    }
    return static_cast<std::size_t>(truth) * static_cast<std::size_t>(classes_ + 1) + static_cast<std::size_t>(predicted);
  }

  int classes_;
  std::vector<std::size_t> counts_;
};

/// One increment per image: (gt, top detection class) or (gt, background)
/// when no detection reaches the threshold.
inline ConfusionMatrix confusion(std::span<const ImageClassification> images, int classes, double conf_threshold = 0.0) {
  ConfusionMatrix cm(classes);
  for (const auto& img : images) {
    const auto top = top_detection(img.detections, conf_threshold);
    cm.add(img.gt_class, top ? top->class_id : cm.background());
  }
  return cm;
}

// ---------------------------------------------------------------------------
// Prediction files: "<class> <cx> <cy> <w> <h> <conf>" per detection
// ---------------------------------------------------------------------------

inline std::vector<Detection> parse_predictions(std::string_view text, const LabelMap& label_map) {
  std::vector<Detection> dets;
  std::size_t line_no = 0;
  std::size_t start = 0;
  while (start <= text.size()) {
    const auto nl = text.find('\n', start);
    const auto line = text.substr(start, nl == std::string_view::npos ? std::string_view::npos : nl - start);
    ++line_no;
    if (!detail::split_ws(line).empty()) {
      std::vector<double> extra;
      const auto obj = parse_yolo_line(line, label_map, line_no, 1, &extra);
      if (!(extra[0] >= 0.0 && extra[0] <= 1.0)) {
        throw ParseError(ErrorCode::MalformedLine, line_no, std::string(detail::split_ws(line).back()),
                         "confidence must lie in [0, 1]");
      }
      dets.push_back({obj.box, obj.class_id, extra[0]});
    }
    if (nl == std::string_view::npos) break;
    start = nl + 1;
  }
  return dets;
}

inline std::vector<Detection> read_predictions_file(const fs::path& path, const LabelMap& label_map) {
  const auto bytes = detail::read_file_bytes(path);
  return parse_predictions(detail::as_text(bytes), label_map);
}

inline std::string serialize_predictions(std::span<const Detection> dets) {
  std::string out;
  for (const auto& d : dets) {
    out += serialize_yolo_line({d.class_id, d.box}) + " " + detail::format_fixed6(d.confidence) + "\n";
  }
  return out;
}

// ---------------------------------------------------------------------------
// Reports
// ---------------------------------------------------------------------------

struct EvalReport {
  double precision = 1.0;
  double recall = 1.0;
  double accuracy = 1.0;
  double average_precision = 1.0;
  std::size_t images = 0;
  std::size_t true_positives = 0;
  std::size_t false_positives = 0;
  std::size_t ground_truths = 0;
  double iou_threshold = 0.5;
  double conf_threshold = 0.25;
  std::optional<ConfusionMatrix> confusion;
};

/// Box-level precision/recall and AP over detections at or above the
/// confidence threshold; top-1 accuracy and the confusion matrix over
/// single-object images only.
inline EvalReport evaluate(std::span<const ImageDetections> images, int classes, double iou_threshold, double conf_threshold) {
  EvalReport r;
  r.iou_threshold = iou_threshold;
  r.conf_threshold = conf_threshold;
  r.images = images.size();
  std::vector<ImageDetections> kept;
  std::vector<ImageClassification> single;
  for (const auto& img : images) {
    ImageDetections k{{}, img.ground_truth};
    for (const auto& d : img.detections) {
      if (d.confidence >= conf_threshold) k.detections.push_back(d);
    }
    const auto m = match(k.detections, k.ground_truth, iou_threshold);
    r.true_positives += m.true_positives();
    r.false_positives += m.false_positives();
    r.ground_truths += m.ground_truths();
    if (img.ground_truth.size() == 1) single.push_back({k.detections, img.ground_truth.front().class_id});
    kept.push_back(std::move(k));
  }
  const auto pr = precision_recall(r.true_positives, r.true_positives + r.false_positives, r.ground_truths);
  r.precision = pr.precision;
  r.recall = pr.recall;
  r.average_precision = average_precision(kept, iou_threshold);
  r.accuracy = accuracy_top1(single);
  r.confusion = confusion(single, classes, conf_threshold);
  return r;
}

inline nlohmann::ordered_json to_json(const EvalReport& r, const LabelMap& label_map) {
  nlohmann::ordered_json j;
  j["images"] = r.images;
  j["iou_threshold"] = r.iou_threshold;
  j["conf_threshold"] = r.conf_threshold;
  j["precision"] = r.precision;
  j["recall"] = r.recall;
  j["accuracy"] = r.accuracy;
  j["average_precision"] = r.average_precision;
  j["true_positives"] = r.true_positives;
  j["false_positives"] = r.false_positives;
  j["ground_truths"] = r.ground_truths;
  if (r.confusion) {
    std::vector<std::string> labels;
    for (int c = 0; c < label_map.size(); ++c) labels.push_back(label_map.name(c));
    labels.emplace_back("background");
    j["confusion"]["labels"] = labels;
    auto rows = nlohmann::ordered_json::array();
    for (int t = 0; t <= r.confusion->classes(); ++t) {
      std::vector<std::size_t> row;
      for (int p = 0; p <= r.confusion->classes(); ++p) row.push_back(r.confusion->at(t, p));
      rows.push_back(row);
    }
    j["confusion"]["counts"] = rows;
  }
  return j;
}

/// Aligned text table with the Precision / Recall / Accuracy rows first.
inline std::string format_table(const EvalReport& r) {
  auto row = [](const char* name, double v) {
    char buf[96];
    std::snprintf(buf, sizeof buf, "%-18s %8.3f\n", name, v);
    return std::string(buf);
  };
  std::string out;
  char head[96];
  std::snprintf(head, sizeof head, "%-18s %8s\n", "Metric", "Value");
  out += head;
  out += row("Precision", r.precision);
  out += row("Recall", r.recall);
  out += row("Accuracy", r.accuracy);
  out += row("AP", r.average_precision);
  std::snprintf(head, sizeof head, "%-18s %8zu\n", "Images", r.images);
  out += head;
  return out;
}

}  // namespace addsl
