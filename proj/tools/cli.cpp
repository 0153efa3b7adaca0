#include "cli.hpp"

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "addsl/addsl.hpp"

namespace addsl::cli {
namespace {

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

/// Bad flags or arguments discovered after parsing.
struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct Globals {
  std::string label_map;
  std::uint64_t seed = 0;
  bool quiet = false;
  bool json = false;
  bool force = false;
};

struct DatasetSource {
  std::string manifest;
  std::string root;
};

void add_source_options(CLI::App* sub, DatasetSource& src) {
  auto* m = sub->add_option("--manifest", src.manifest, "Manifest file (image<TAB>label<TAB>split)");
  auto* r = sub->add_option("--root", src.root, "Dataset directory to scan for image/label pairs");
  m->excludes(r);
}

struct LoadedDataset {
  DatasetManifest manifest;
  std::vector<fs::path> orphan_images;
  std::vector<fs::path> orphan_labels;
};

LoadedDataset load_dataset(const DatasetSource& src) {
  if (!src.manifest.empty()) return {load_manifest(src.manifest), {}, {}};
  if (!src.root.empty()) {
    auto scan = scan_tree(src.root);
    return {std::move(scan.manifest), std::move(scan.orphan_images), std::move(scan.orphan_labels)};
  }
  throw UsageError("one of --manifest or --root is required");
}

LabelMap load_label_map(const Globals& g) {
  return g.label_map.empty() ? LabelMap::canonical() : LabelMap::load(g.label_map);
}

HeadConfig load_head(const std::string& path, const LabelMap& labels) {
  if (path.empty()) {
    HeadConfig cfg;
    cfg.classes = labels.size();
    return cfg;
  }
  const auto bytes = detail::read_file_bytes(path);
  return parse_head_config(detail::as_text(bytes));
}

std::string read_text(const fs::path& path) {
  const auto bytes = detail::read_file_bytes(path);
  return std::string(detail::as_text(bytes));
}

void guard_output_file(const fs::path& path, bool force) {
  std::error_code ec;
  if (fs::exists(path, ec) && !force) throw UsageError("refusing to overwrite " + path.string() + " (use --force)");
}

void guard_output_dir(const fs::path& path, bool force) {
  std::error_code ec;
  if (fs::exists(path, ec) && !(fs::is_directory(path, ec) && fs::is_empty(path, ec)) && !force) {
    throw UsageError("refusing to write into non-empty " + path.string() + " (use --force)");
  }
}

void write_text(const fs::path& path, std::string_view text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  detail::write_file_bytes(path, std::span(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
}

std::vector<int> parse_turn_degrees(const std::string& csv) {
  std::vector<int> turns;
  std::stringstream ss(csv);
  std::string item;
  while (std::getline(ss, item, ',')) {
    const auto deg = detail::parse_int(detail::trim(item));
    if (!deg || *deg % 90 != 0 || *deg < 0 || *deg > 360) {
      throw UsageError("--turns takes multiples of 90 in [0, 360], got '" + item + "'");
    }
    turns.push_back((*deg / 90) % 4);
  }
  if (turns.empty()) throw UsageError("--turns is empty");
  return turns;
}

std::vector<double> parse_real_list(const std::string& text, char sep, std::size_t want, const char* flag) {
  std::vector<double> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, sep)) {
    const auto v = detail::parse_real(detail::trim(item));
    if (!v) throw UsageError(std::string(flag) + ": '" + item + "' is not a number");
    out.push_back(*v);
  }
  if (out.size() != want) throw UsageError(std::string(flag) + " needs " + std::to_string(want) + " values");
  return out;
}

LossWeights parse_weights(const std::string& text) {
  const auto v = parse_real_list(text, ',', 4, "--weights");
  LossWeights w{v[0], v[1], v[2], v[3]};
  try {
    w.validate();
  } catch (const Error& e) {
    throw UsageError(e.what());
  }
  return w;
}

std::pair<int, int> parse_size(const std::string& text) {
  const auto x = text.find('x');
  const auto w = x == std::string::npos ? std::nullopt : detail::parse_int(text.substr(0, x));
  const auto h = x == std::string::npos ? std::nullopt : detail::parse_int(text.substr(x + 1));
  if (!w || !h || *w < 1 || *h < 1) throw UsageError("size must look like 416x416, got '" + text + "'");
  return {*w, *h};
}

std::string fmt(double v, int precision = 6) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(precision) << v;
  return os.str();
}

void emit_findings(std::ostream& out, const std::vector<Finding>& findings) {
  for (const auto& f : findings) {
    out << f.path;
    if (f.line > 0) out << ":" << f.line;
    out << ": " << to_string(f.code) << ": " << f.message << "\n";
  }
}

// ---------------------------------------------------------------------------

struct Context {
  Globals& g;
  std::ostream& out;
  std::ostream& err;
};

int cmd_validate(Context& ctx, const DatasetSource& src) {
  const auto labels = load_label_map(ctx.g);
  const auto data = load_dataset(src);
  const auto report = validate_dataset(data.manifest, labels, data.orphan_images, data.orphan_labels);
  if (ctx.g.json) {
    ctx.out << to_json(report, labels).dump(2) << "\n";
  } else if (!ctx.g.quiet) {
    std::size_t present = 0;
    for (auto n : report.class_objects) present += n > 0 ? 1 : 0;
    ctx.out << "images: " << report.images << "\nobjects: " << report.objects << "\nclasses: " << present << "/"
            << labels.size() << "\n";
    for (const auto& [split, n] : report.split_counts) ctx.out << "split " << split << ": " << n << "\n";
    ctx.out << "findings: " << report.findings.size() << "\n";
    emit_findings(ctx.out, report.findings);
  }
  return report.clean() ? kExitOk : kExitFindings;
}

int cmd_convert(Context& ctx, const DatasetSource& src, const std::string& to, const std::string& out_path) {
  if (to != "voc" && to != "coco") throw UsageError("--to must be voc or coco");
  if (to == "coco") {
    guard_output_file(out_path, ctx.g.force);
  } else {
    guard_output_dir(out_path, ctx.g.force);
  }
  const auto labels = load_label_map(ctx.g);
  const auto data = load_dataset(src);
  if (to == "coco") {
    write_text(out_path, to_coco(data.manifest, labels));
    if (!ctx.g.quiet) ctx.out << "wrote " << data.manifest.entries.size() << " images to " << out_path << "\n";
    return kExitOk;
  }
  std::vector<std::pair<fs::path, std::string>> docs;
  for (const auto& e : data.manifest.entries) {
    const auto info = read_image_info(data.manifest.resolve(e.image));
    auto lf = read_yolo_file(data.manifest.resolve(e.label), labels);
    lf.image_id = e.image.filename().string();
    fs::path rel = e.label.is_absolute() ? e.label.filename() : e.label;
    docs.emplace_back(rel.replace_extension(".xml"), to_voc(lf, info.width, info.height, labels, info.channels));
  }
  for (const auto& [rel, doc] : docs) write_text(fs::path(out_path) / rel, doc);
  if (!ctx.g.quiet) ctx.out << "wrote " << docs.size() << " VOC files to " << out_path << "\n";
  return kExitOk;
}

int cmd_augment(Context& ctx, const DatasetSource& src, const std::string& out_dir, const std::string& turns,
                const std::string& resize_to, bool grayscale, bool nearest, bool no_originals) {
  AugmentSpec spec;
  spec.turns = parse_turn_degrees(turns);
  if (!resize_to.empty()) spec.resize_to = parse_size(resize_to);
  spec.grayscale = grayscale;
  spec.keep_originals = !no_originals;
  spec.resize_mode = nearest ? ResizeMode::Nearest : ResizeMode::Bilinear;
  try {
    detail::check_augment_spec(spec);
  } catch (const Error& e) {
    throw UsageError(e.what());
  }
  guard_output_dir(out_dir, ctx.g.force);
  const auto labels = load_label_map(ctx.g);
  const auto data = load_dataset(src);
  const auto result = augment(data.manifest, spec, out_dir, labels);
  write_text(fs::path(out_dir) / "manifest.tsv", serialize_manifest(result.manifest));
  if (ctx.g.json) {
    json j;
    j["inputs"] = data.manifest.entries.size();
    j["outputs"] = result.manifest.entries.size();
    j["manifest"] = (fs::path(out_dir) / "manifest.tsv").generic_string();
    j["findings"] = result.findings.size();
    ctx.out << j.dump(2) << "\n";
  } else if (!ctx.g.quiet) {
    ctx.out << "inputs: " << data.manifest.entries.size() << "\noutputs: " << result.manifest.entries.size()
            << "\nmanifest: " << (fs::path(out_dir) / "manifest.tsv").generic_string() << "\n";
    emit_findings(ctx.out, result.findings);
  }
  return result.findings.empty() ? kExitOk : kExitFindings;
}

int cmd_split(Context& ctx, const DatasetSource& src, const std::string& ratios, const std::string& out_path, bool flat) {
  const auto r = parse_real_list(ratios, ':', 3, "--ratios");
  const double sum = r[0] + r[1] + r[2];
  if (!(r[0] >= 0 && r[1] >= 0 && r[2] >= 0) || !(sum > 0)) throw UsageError("--ratios must be non-negative with a positive sum");
  SplitSpec spec{r[0] / sum, r[1] / sum, r[2] / sum, ctx.g.seed, !flat};
  // renormalize rounding so the three ratios sum to one exactly enough
  spec.test = 1.0 - spec.train - spec.val;
  if (spec.test < 0.0) spec.test = 0.0;
  if (!out_path.empty()) guard_output_file(out_path, ctx.g.force);
  const auto data = load_dataset(src);
  const auto result = split(data.manifest, spec);
  DatasetManifest written = result;
  if (!out_path.empty()) {
    // keep entries resolvable relative to the new manifest's directory
    const fs::path out_dir = fs::absolute(out_path).parent_path();
    for (auto& e : written.entries) {
      const fs::path abs_img = fs::absolute(result.resolve(e.image));
      const fs::path abs_lbl = fs::absolute(result.resolve(e.label));
      e.image = abs_img.lexically_relative(out_dir);
      e.label = abs_lbl.lexically_relative(out_dir);
    }
    write_text(out_path, serialize_manifest(written));
  } else {
    ctx.out << serialize_manifest(written);
  }
  std::map<std::string, std::size_t> counts;
  for (const auto& e : result.entries) ++counts[std::string(to_string(e.split))];
  if (!out_path.empty() && !ctx.g.quiet) {
    if (ctx.g.json) {
      ctx.out << json(counts).dump(2) << "\n";
    } else {
      for (const auto& [name, n] : counts) ctx.out << name << ": " << n << "\n";
    }
  }
  return kExitOk;
}

int cmd_stats(Context& ctx, const DatasetSource& src) {
  const auto labels = load_label_map(ctx.g);
  const auto data = load_dataset(src);
  const auto report = stats(data.manifest, labels);
  if (ctx.g.json) {
    ctx.out << to_json(report, labels).dump(2) << "\n";
    return kExitOk;
  }
  ctx.out << "images: " << report.images << "\nobjects: " << report.objects << "\nclasses: " << classes_present(report)
          << "/" << labels.size() << "\n";
  for (const auto& [split, n] : report.splits) ctx.out << "split " << split << ": " << n << "\n";
  for (const auto& [size, n] : report.image_sizes) ctx.out << "size " << size << ": " << n << "\n";
  if (!ctx.g.quiet) {
    ctx.out << std::left << std::setw(6) << "id" << std::setw(12) << "class" << std::right << std::setw(8) << "images"
            << std::setw(9) << "objects" << "\n";
    for (int id = 0; id < labels.size(); ++id) {
      const auto& c = report.classes[static_cast<std::size_t>(id)];
      ctx.out << std::left << std::setw(6) << id << std::setw(12) << labels.name(id) << std::right << std::setw(8)
              << c.images << std::setw(9) << c.objects << "\n";
    }
  }
  return kExitOk;
}

int trailing_frame_number(const fs::path& p) {
  const std::string stem = p.stem().string();
  std::size_t end = stem.size();
  std::size_t begin = end;
  while (begin > 0 && std::isdigit(static_cast<unsigned char>(stem[begin - 1]))) --begin;
  if (begin == end) return -1;
  const auto v = detail::parse_int(std::string_view(stem).substr(begin, end - begin));
  return v ? *v : -1;
}

int cmd_select_frames(Context& ctx, int total, const std::vector<int>& indices, int start, int step, int count,
                      const std::string& frames_dir, const std::string& out_dir) {
  if (frames_dir.empty() != out_dir.empty()) throw UsageError("--frames and --out go together");
  std::vector<std::pair<int, fs::path>> frames;
  if (!frames_dir.empty()) {
    guard_output_dir(out_dir, ctx.g.force);
    for (const auto& entry : fs::directory_iterator(frames_dir)) {
      if (!entry.is_regular_file()) continue;
      const int n = trailing_frame_number(entry.path());
      if (n >= 0) frames.emplace_back(n, entry.path());
    }
    std::sort(frames.begin(), frames.end());
    if (total < 1) total = frames.empty() ? 0 : frames.back().first + 1;
  }
  if (total < 1) throw UsageError("--total is required (or --frames to infer it)");
  const FramePolicy policy = indices.empty() ? FramePolicy{FrameRange{start, step, count}} : FramePolicy{indices};
  const auto picked = select_frames(total, policy);
  std::size_t copied = 0;
  if (!frames_dir.empty()) {
    fs::create_directories(out_dir);
    for (const auto& [n, path] : frames) {
      if (!std::binary_search(picked.begin(), picked.end(), n)) continue;
      fs::copy_file(path, fs::path(out_dir) / path.filename(), fs::copy_options::overwrite_existing);
      ++copied;
    }
  }
  if (ctx.g.json) {
    json j;
    j["total"] = total;
    j["frames"] = picked;
    if (!frames_dir.empty()) j["copied"] = copied;
    ctx.out << j.dump() << "\n";
  } else {
    for (std::size_t i = 0; i < picked.size(); ++i) ctx.out << (i ? " " : "") << picked[i];
    ctx.out << "\n";
    if (!frames_dir.empty() && !ctx.g.quiet) ctx.out << "copied: " << copied << "\n";
  }
  return kExitOk;
}

int cmd_encode(Context& ctx, const std::string& labels_path, const std::string& head, const std::string& out_path) {
  guard_output_file(out_path, ctx.g.force);
  const auto labels = load_label_map(ctx.g);
  const auto cfg = load_head(head, labels);
  const auto lf = read_yolo_file(labels_path, labels);
  const auto assignment = assign_targets(lf.objects, cfg);
  write_text(out_path, grid_to_json(assignment.grid, "target").dump() + "\n");
  if (!ctx.g.quiet) {
    ctx.out << "assigned: " << assignment.assigned << "\ncollisions: " << assignment.collisions.size() << "\n";
    for (const auto& c : assignment.collisions) {
      ctx.out << "object " << c.object_index << " dropped: slot (" << c.slot.col << "," << c.slot.row << ","
              << c.slot.anchor << ") held by object " << c.kept_index << "\n";
    }
  }
  return assignment.collisions.empty() ? kExitOk : kExitFindings;
}

int cmd_decode(Context& ctx, const std::string& grid_path, double conf, const std::string& out_path) {
  if (!out_path.empty()) guard_output_file(out_path, ctx.g.force);
  const auto grid = grid_from_json<PredictionGrid>(nlohmann::json::parse(read_text(grid_path)));
  const auto dets = decode(grid, conf);
  const auto text = serialize_predictions(dets);
  if (out_path.empty()) {
    ctx.out << text;
  } else {
    write_text(out_path, text);
    if (!ctx.g.quiet) ctx.out << "detections: " << dets.size() << "\n";
  }
  return kExitOk;
}

void print_breakdown(Context& ctx, const LossBreakdown& b) {
  if (ctx.g.json) {
    json j{{"conf", b.conf}, {"cls", b.cls}, {"loc", b.loc}, {"giou", b.giou}, {"total", b.total}};
    ctx.out << j.dump(2) << "\n";
    return;
  }
  ctx.out << "conf  " << fmt(b.conf, 10) << "\ncls   " << fmt(b.cls, 10) << "\nloc   " << fmt(b.loc, 10) << "\ngiou  "
          << fmt(b.giou, 10) << "\ntotal " << fmt(b.total, 10) << "\n";
}

int cmd_loss(Context& ctx, const std::string& pred_path, const std::string& target_path, const std::string& weights) {
  const auto pred = grid_from_json<PredictionGrid>(nlohmann::json::parse(read_text(pred_path)));
  const auto target = grid_from_json<TargetGrid>(nlohmann::json::parse(read_text(target_path)));
  print_breakdown(ctx, total_loss(pred, target, parse_weights(weights)));
  return kExitOk;
}

int cmd_gradcheck(Context& ctx, int trials, const std::string& pred_path, const std::string& target_path,
                  const std::string& weights) {
  if (trials < 1) throw UsageError("--trials must be >= 1");
  double worst = 0.0;
  std::size_t checked = 0;
  if (!pred_path.empty() || !target_path.empty()) {
    if (pred_path.empty() || target_path.empty()) throw UsageError("--pred and --target go together");
    const auto pred = grid_from_json<PredictionGrid>(nlohmann::json::parse(read_text(pred_path)));
    const auto target = grid_from_json<TargetGrid>(nlohmann::json::parse(read_text(target_path)));
    const auto r = gradient_check(pred, target, parse_weights(weights));
    worst = r.max_relative_error;
    checked = r.checked;
    trials = 1;
  } else {
    for (int t = 0; t < trials; ++t) {
      const auto inst = make_gradcheck_instance(ctx.g.seed + static_cast<std::uint64_t>(t));
      const auto r = gradient_check(inst.pred, inst.target, inst.weights);
      worst = std::max(worst, r.max_relative_error);
      checked += r.checked;
    }
  }
  const bool ok = worst < 1e-5;
  if (ctx.g.json) {
    json j{{"trials", trials}, {"values_checked", checked}, {"max_relative_error", worst}, {"pass", ok}};
    ctx.out << j.dump(2) << "\n";
  } else {
    std::ostringstream os;
    os << std::scientific << std::setprecision(3) << worst;
    ctx.out << "trials: " << trials << "\nvalues checked: " << checked << "\nmax relative error: " << os.str() << "\n"
            << (ok ? "PASS" : "FAIL") << "\n";
  }
  return ok ? kExitOk : kExitFindings;
}

int cmd_toy_train(Context& ctx, const std::string& labels_path, const std::string& head, double lr, int steps,
                  const std::string& weights, const std::string& trace_path, const std::string& out_path) {
  if (!(lr > 0.0)) throw UsageError("--lr must be positive");
  if (steps < 1) throw UsageError("--steps must be >= 1");
  if (!trace_path.empty()) guard_output_file(trace_path, ctx.g.force);
  if (!out_path.empty()) guard_output_file(out_path, ctx.g.force);
  const auto labels = load_label_map(ctx.g);
  const auto cfg = load_head(head, labels);
  const auto lf = read_yolo_file(labels_path, labels);
  const auto result = toy_fit(lf.objects, cfg, parse_weights(weights), lr, steps);
  if (!trace_path.empty()) write_text(trace_path, trace_csv(result.trace));
  if (!out_path.empty()) write_text(out_path, grid_to_json(result.grid, "prediction").dump() + "\n");
  const auto dets = decode(result.grid, 0.5);
  const auto& last = result.trace.back();
  if (ctx.g.json) {
    json j{{"steps", steps}, {"lr", lr}, {"initial_total", result.trace.front().total}, {"final_total", last.total},
           {"monotone", result.monotone}, {"detections", dets.size()}};
    ctx.out << j.dump(2) << "\n";
  } else if (!ctx.g.quiet) {
    ctx.out << "initial loss: " << fmt(result.trace.front().total, 10) << "\nfinal loss:   " << fmt(last.total, 10)
            << "\nmonotone: " << (result.monotone ? "yes" : "no") << "\n";
    ctx.out << serialize_predictions(dets);
  }
  return kExitOk;
}

int cmd_nms(Context& ctx, const std::string& in_path, double iou_threshold, bool agnostic, const std::string& out_path) {
  if (!(iou_threshold >= 0.0 && iou_threshold <= 1.0)) throw UsageError("--iou must lie in [0, 1]");
  if (!out_path.empty()) guard_output_file(out_path, ctx.g.force);
  const auto labels = load_label_map(ctx.g);
  const auto dets = read_predictions_file(in_path, labels);
  const auto kept = nms(dets, iou_threshold, !agnostic);
  const auto text = serialize_predictions(kept);
  if (out_path.empty()) {
    ctx.out << text;
  } else {
    write_text(out_path, text);
    if (!ctx.g.quiet) ctx.out << "kept " << kept.size() << " of " << dets.size() << "\n";
  }
  return kExitOk;
}

int cmd_eval(Context& ctx, const DatasetSource& src, const std::string& pred_dir, double iou_threshold, double conf) {
  if (!(iou_threshold > 0.0 && iou_threshold <= 1.0)) throw UsageError("--iou must lie in (0, 1]");
  if (!(conf >= 0.0 && conf <= 1.0)) throw UsageError("--conf must lie in [0, 1]");
  const auto labels = load_label_map(ctx.g);
  const auto data = load_dataset(src);
  std::vector<ImageDetections> images;
  for (const auto& e : data.manifest.entries) {
    ImageDetections img;
    img.ground_truth = read_yolo_file(data.manifest.resolve(e.label), labels).objects;
    const fs::path pred_file = fs::path(pred_dir) / (e.label.stem().string() + ".txt");
    std::error_code ec;
    if (fs::exists(pred_file, ec)) img.detections = read_predictions_file(pred_file, labels);
    images.push_back(std::move(img));
  }
  const auto report = evaluate(images, labels.size(), iou_threshold, conf);
  if (ctx.g.json) {
    ctx.out << to_json(report, labels).dump(2) << "\n";
  } else {
    ctx.out << format_table(report);
  }
  return kExitOk;
}

int cmd_params(Context& ctx, const std::string& layers_path, const std::string& input) {
  const auto chain = parse_layer_chain(read_text(layers_path));
  std::optional<TensorShape> in = chain.input;
  if (!input.empty()) {
    const auto v = parse_real_list(input, 'x', 3, "--input");
    in = TensorShape{static_cast<long>(v[0]), static_cast<long>(v[1]), static_cast<long>(v[2])};
  }
  const auto total = param_count(chain.layers);
  std::vector<TensorShape> shapes;
  if (in) shapes = shape_propagate(*in, chain.layers);
  if (ctx.g.json) {
    json layers = json::array();
    for (std::size_t i = 0; i < chain.layers.size(); ++i) {
      json l{{"kind", std::string(to_string(chain.layers[i].kind))}, {"params", param_count(chain.layers[i])}};
      if (in) l["output"] = {shapes[i].height, shapes[i].width, shapes[i].channels};
      layers.push_back(l);
    }
    ctx.out << json{{"layers", layers}, {"total_params", total}}.dump(2) << "\n";
    return kExitOk;
  }
  for (std::size_t i = 0; i < chain.layers.size(); ++i) {
    ctx.out << std::left << std::setw(4) << i << std::setw(11) << to_string(chain.layers[i].kind) << std::right
            << std::setw(12) << param_count(chain.layers[i]);
    if (in) ctx.out << "  " << shapes[i].height << "x" << shapes[i].width << "x" << shapes[i].channels;
    ctx.out << "\n";
  }
  ctx.out << "total " << total << "\n";
  return kExitOk;
}

int cmd_anchors(Context& ctx, const DatasetSource& src, int k) {
  if (k < 1) throw UsageError("-k must be >= 1");
  const auto labels = load_label_map(ctx.g);
  const auto data = load_dataset(src);
  std::vector<AnchorShape> shapes;
  for (const auto& e : data.manifest.entries) {
    for (const auto& obj : read_yolo_file(data.manifest.resolve(e.label), labels).objects) {
      shapes.push_back({obj.box.w(), obj.box.h()});
    }
  }
  const auto anchors = fit_anchors(shapes, k);
  ctx.out << "anchors =";
  for (const auto& a : anchors) ctx.out << " " << fmt(a.w, 4) << "," << fmt(a.h, 4);
  ctx.out << "\n";
  return kExitOk;
}

}  // namespace

int run(const std::vector<std::string>& argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Dataset and detection-math toolkit for YOLO-format sign-language data", "addsl"};
  app.require_subcommand(1);
  app.fallthrough();
  Globals g;
  app.add_option("--label-map", g.label_map, "Label map file (one class per line, optional name=alias)");
  app.add_option("--seed", g.seed, "Seed for every randomized step");
  app.add_flag("--quiet", g.quiet, "Suppress non-essential output");
  app.add_flag("--json", g.json, "Machine-readable JSON output");
  app.add_flag("--force", g.force, "Allow overwriting existing outputs");

  std::function<int(Context&)> action;

  DatasetSource validate_src;
  auto* validate_cmd = app.add_subcommand("validate", "Check a dataset's labels and pairing");
  add_source_options(validate_cmd, validate_src);
  validate_cmd->callback([&] { action = [&](Context& c) { return cmd_validate(c, validate_src); }; });

  DatasetSource convert_src;
  std::string convert_to;
  std::string convert_out;
  auto* convert_cmd = app.add_subcommand("convert", "Convert YOLO labels to PASCAL VOC or COCO");
  add_source_options(convert_cmd, convert_src);
  convert_cmd->add_option("--to", convert_to, "voc or coco")->required();
  convert_cmd->add_option("--out", convert_out, "Output directory (voc) or file (coco)")->required();
  convert_cmd->callback([&] { action = [&](Context& c) { return cmd_convert(c, convert_src, convert_to, convert_out); }; });

  DatasetSource augment_src;
  std::string augment_out;
  std::string augment_turns = "90,180,270,0";
  std::string augment_resize;
  bool augment_gray = false;
  bool augment_nearest = false;
  bool augment_no_orig = false;
  auto* augment_cmd = app.add_subcommand("augment", "Write quarter-turn rotated copies of every pair");
  add_source_options(augment_cmd, augment_src);
  augment_cmd->add_option("--out", augment_out, "Output directory")->required();
  augment_cmd->add_option("--turns", augment_turns, "Clockwise rotations in degrees, comma separated");
  augment_cmd->add_option("--resize", augment_resize, "Resize outputs, e.g. 416x416");
  augment_cmd->add_flag("--grayscale", augment_gray, "Convert outputs to grayscale");
  augment_cmd->add_flag("--nearest", augment_nearest, "Nearest-neighbour resize instead of bilinear");
  augment_cmd->add_flag("--no-originals", augment_no_orig, "Do not copy the source pairs");
  augment_cmd->callback([&] {
    action = [&](Context& c) {
      return cmd_augment(c, augment_src, augment_out, augment_turns, augment_resize, augment_gray, augment_nearest,
                         augment_no_orig);
    };
  });

  DatasetSource split_src;
  std::string split_ratios = "80:10:10";
  std::string split_out;
  bool split_flat = false;
  auto* split_cmd = app.add_subcommand("split", "Assign train/val/test deterministically");
  add_source_options(split_cmd, split_src);
  split_cmd->add_option("--ratios", split_ratios, "train:val:test weights");
  split_cmd->add_option("--out", split_out, "Output manifest (stdout when omitted)");
  split_cmd->add_flag("--flat", split_flat, "Split entries individually instead of by source image");
  split_cmd->callback([&] { action = [&](Context& c) { return cmd_split(c, split_src, split_ratios, split_out, split_flat); }; });

  DatasetSource stats_src;
  auto* stats_cmd = app.add_subcommand("stats", "Per-class, per-split and image-size counts");
  add_source_options(stats_cmd, stats_src);
  stats_cmd->callback([&] { action = [&](Context& c) { return cmd_stats(c, stats_src); }; });

  int frames_total = 0;
  std::vector<int> frames_indices;
  int frames_start = 50;
  int frames_step = 10;
  int frames_count = 6;
  std::string frames_dir;
  std::string frames_out;
  auto* frames_cmd = app.add_subcommand("select-frames", "Pick frame indices (default 50,60,...,100)");
  frames_cmd->add_option("--total", frames_total, "Number of frames in the video");
  frames_cmd->add_option("--indices", frames_indices, "Explicit frame indices")->delimiter(',');
  frames_cmd->add_option("--start", frames_start, "First frame of the progression");
  frames_cmd->add_option("--step", frames_step, "Stride of the progression");
  frames_cmd->add_option("--count", frames_count, "Length of the progression");
  frames_cmd->add_option("--frames", frames_dir, "Directory of extracted frames (trailing number = index)");
  frames_cmd->add_option("--out", frames_out, "Directory receiving the selected frames");
  frames_cmd->callback([&] {
    action = [&](Context& c) {
      return cmd_select_frames(c, frames_total, frames_indices, frames_start, frames_step, frames_count, frames_dir,
                               frames_out);
    };
  });

  std::string encode_labels;
  std::string encode_head;
  std::string encode_out;
  auto* encode_cmd = app.add_subcommand("encode", "Build the target grid for one label file");
  encode_cmd->add_option("--labels", encode_labels, "YOLO label file")->required();
  encode_cmd->add_option("--head", encode_head, "Head config (grid, classes, anchors)");
  encode_cmd->add_option("--out", encode_out, "Output grid JSON")->required();
  encode_cmd->callback([&] { action = [&](Context& c) { return cmd_encode(c, encode_labels, encode_head, encode_out); }; });

  std::string decode_grid;
  double decode_conf = 0.5;
  std::string decode_out;
  auto* decode_cmd = app.add_subcommand("decode", "Turn a grid into detections");
  decode_cmd->add_option("--grid", decode_grid, "Grid JSON")->required();
  decode_cmd->add_option("--conf", decode_conf, "Confidence threshold");
  decode_cmd->add_option("--out", decode_out, "Prediction file (stdout when omitted)");
  decode_cmd->callback([&] { action = [&](Context& c) { return cmd_decode(c, decode_grid, decode_conf, decode_out); }; });

  std::string loss_pred;
  std::string loss_target;
  std::string loss_weights = "1,1,1,1";
  auto* loss_cmd = app.add_subcommand("loss", "Evaluate the four loss components");
  loss_cmd->add_option("--pred", loss_pred, "Prediction grid JSON")->required();
  loss_cmd->add_option("--target", loss_target, "Target grid JSON")->required();
  loss_cmd->add_option("--weights", loss_weights, "conf,cls,loc,giou weights");
  loss_cmd->callback([&] { action = [&](Context& c) { return cmd_loss(c, loss_pred, loss_target, loss_weights); }; });

  int gc_trials = 100;
  std::string gc_pred;
  std::string gc_target;
  std::string gc_weights = "1,1,1,1";
  auto* gc_cmd = app.add_subcommand("gradcheck", "Compare analytic gradients with central differences");
  gc_cmd->add_option("--trials", gc_trials, "Random instances to check");
  gc_cmd->add_option("--pred", gc_pred, "Check this prediction grid instead");
  gc_cmd->add_option("--target", gc_target, "Target grid for --pred");
  gc_cmd->add_option("--weights", gc_weights, "conf,cls,loc,giou weights for --pred");
  gc_cmd->callback([&] { action = [&](Context& c) { return cmd_gradcheck(c, gc_trials, gc_pred, gc_target, gc_weights); }; });

  std::string toy_labels;
  std::string toy_head;
  double toy_lr = 0.01;
  int toy_steps = 5000;
  std::string toy_weights = "1,1,1,0";
  std::string toy_trace;
  std::string toy_out;
  auto* toy_cmd = app.add_subcommand("toy-train", "Gradient descent on a free prediction grid");
  toy_cmd->add_option("--labels", toy_labels, "YOLO label file")->required();
  toy_cmd->add_option("--head", toy_head, "Head config");
  toy_cmd->add_option("--lr", toy_lr, "Learning rate");
  toy_cmd->add_option("--steps", toy_steps, "Update steps");
  toy_cmd->add_option("--weights", toy_weights, "conf,cls,loc,giou weights");
  toy_cmd->add_option("--trace", toy_trace, "Loss trace CSV");
  toy_cmd->add_option("--out", toy_out, "Fitted grid JSON");
  toy_cmd->callback([&] {
    action = [&](Context& c) { return cmd_toy_train(c, toy_labels, toy_head, toy_lr, toy_steps, toy_weights, toy_trace, toy_out); };
  });

  std::string nms_in;
  double nms_iou = 0.45;
  bool nms_agnostic = false;
  std::string nms_out;
  auto* nms_cmd = app.add_subcommand("nms", "Non-maximum suppression over a prediction file");
  nms_cmd->add_option("--input", nms_in, "Prediction file (<class> <cx> <cy> <w> <h> <conf>)")->required();
  nms_cmd->add_option("--iou", nms_iou, "Suppression IoU threshold");
  nms_cmd->add_flag("--class-agnostic", nms_agnostic, "Suppress across classes");
  nms_cmd->add_option("--out", nms_out, "Output file (stdout when omitted)");
  nms_cmd->callback([&] { action = [&](Context& c) { return cmd_nms(c, nms_in, nms_iou, nms_agnostic, nms_out); }; });

  DatasetSource eval_src;
  std::string eval_pred;
  double eval_iou = 0.5;
  double eval_conf = 0.25;
  auto* eval_cmd = app.add_subcommand("eval", "Precision, recall, accuracy, AP and confusion matrix");
  add_source_options(eval_cmd, eval_src);
  eval_cmd->add_option("--pred", eval_pred, "Directory of per-image prediction files")->required();
  eval_cmd->add_option("--iou", eval_iou, "Matching IoU threshold");
  eval_cmd->add_option("--conf", eval_conf, "Confidence threshold");
  eval_cmd->callback([&] { action = [&](Context& c) { return cmd_eval(c, eval_src, eval_pred, eval_iou, eval_conf); }; });

  std::string params_layers;
  std::string params_input;
  auto* params_cmd = app.add_subcommand("params", "Layer output shapes and parameter counts");
  params_cmd->add_option("--layers", params_layers, "Layer chain file")->required();
  params_cmd->add_option("--input", params_input, "Input HxWxC, e.g. 416x416x3");
  params_cmd->callback([&] { action = [&](Context& c) { return cmd_params(c, params_layers, params_input); }; });

  DatasetSource anchors_src;
  int anchors_k = 4;
  auto* anchors_cmd = app.add_subcommand("anchors", "Fit anchor shapes to a dataset (shape-IoU k-means)");
  add_source_options(anchors_cmd, anchors_src);
  anchors_cmd->add_option("-k", anchors_k, "Number of anchors");
  anchors_cmd->callback([&] { action = [&](Context& c) { return cmd_anchors(c, anchors_src, anchors_k); }; });

  std::vector<std::string> args(argv.begin() + (argv.empty() ? 0 : 1), argv.end());
  std::reverse(args.begin(), args.end());
  try {
    app.parse(args);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n";
    const auto parsed = app.get_subcommands();
    err << (parsed.empty() ? app.help() : parsed.front()->help());
    return kExitUsage;
  }

  Context ctx{g, out, err};
  try {
    return action(ctx);
  } catch (const UsageError& e) {
    err << "error: " << e.what() << "\n" << app.get_subcommands().front()->help();
    return kExitUsage;
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return kExitFindings;
  } catch (const nlohmann::json::exception& e) {
    err << "error: malformed JSON input: " << e.what() << "\n";
    return kExitFindings;
  } catch (const fs::filesystem_error& e) {
    err << "error: " << e.what() << "\n";
    return kExitFindings;
  }
}

}  // namespace addsl::cli
