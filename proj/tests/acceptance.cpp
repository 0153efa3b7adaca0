// Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on any failure.
#include <chrono>
#include <cstdio>
#include <functional>
#include <iostream>
#include <map>
#include <random>
#include <sstream>

#include "addsl/addsl.hpp"
#include "cli.hpp"
#include "oracles.hpp"

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

int failures = 0;

void criterion(int id, const char* title, double time_limit_s, const std::function<Outcome()>& body) {
  const auto t0 = std::chrono::steady_clock::now();
  Outcome o;
  try {
    o = body();
  } catch (const std::exception& e) {
    o = {false, std::string("exception: ") + e.what()};
  }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  bool pass = o.pass;
  std::string detail = o.detail;
  if (time_limit_s > 0 && secs >= time_limit_s) {
    pass = false;
    detail += "; over time limit";
  }
  char timing[64];
  if (time_limit_s > 0) {
    std::snprintf(timing, sizeof timing, "%.2fs (limit %.0fs)", secs, time_limit_s);
  } else {
    std::snprintf(timing, sizeof timing, "%.2fs", secs);
  }
  std::cout << (pass ? "PASS" : "FAIL") << " [" << id << "] " << title << ": " << detail << " | " << timing << std::endl;
  if (!pass) ++failures;
}

std::string sci(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3e", v);
  return buf;
}

// --- 1 --------------------------------------------------------------------

Outcome gradient_correctness() {
  double worst = 0;
  std::size_t values = 0;
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    const auto inst = addsl::make_gradcheck_instance(seed);
    if (inst.cfg.grid > 4 || inst.cfg.anchors_per_cell() > 2 || inst.cfg.classes > 5) {
      return {false, "instance " + std::to_string(seed) + " exceeds S<=4, B<=2, C<=5"};
    }
    const auto r = addsl::gradient_check(inst.pred, inst.target, inst.weights, 1e-5);
    worst = std::max(worst, r.max_relative_error);
    values += r.checked;
  }
  return {worst < 1e-5, "100 instances, " + std::to_string(values) + " values, h=1e-5, max rel err " + sci(worst) +
                            " (tol 1e-5)"};
}

// --- 2 --------------------------------------------------------------------

Outcome toy_convergence() {
  addsl::HeadConfig cfg;  // 13x13 grid, 4 anchors, 36 classes
  const addsl::LabeledBox obj{25, addsl::Box(0.41, 0.57, 0.28, 0.43)};
  const auto r = addsl::toy_fit(std::vector<addsl::LabeledBox>{obj}, cfg, {1, 1, 1, 0}, 0.01, 5000);
  std::size_t reached = r.trace.size();
  for (std::size_t k = 0; k < r.trace.size(); ++k) {
    if (r.trace[k].total < 1e-3) {
      reached = k;
      break;
    }
  }
  const double final_loss = r.trace.back().total;
  const auto dets = addsl::decode(r.grid, cfg, 0.5);
  if (dets.size() != 1) return {false, "decode returned " + std::to_string(dets.size()) + " detections"};
  const auto& d = dets.front();
  const double box_err = std::max({std::abs(d.box.cx() - obj.box.cx()), std::abs(d.box.cy() - obj.box.cy()),
                                   std::abs(d.box.w() - obj.box.w()), std::abs(d.box.h() - obj.box.h())});
  const bool ok = final_loss < 1e-3 && d.class_id == obj.class_id && box_err <= 1e-3;
  return {ok, "loss<1e-3 at step " + std::to_string(reached) + " of 5000, final " + sci(final_loss) + ", class " +
                  std::to_string(d.class_id) + "/" + std::to_string(obj.class_id) + ", max box err " + sci(box_err) +
                  " (tol 1e-3)"};
}

// --- 3 --------------------------------------------------------------------

Outcome nms_equivalence() {
  std::mt19937_64 rng(2024);
  int mismatches = 0;
  for (int t = 0; t < 1000; ++t) {
    const int n = oracle::uniform_int(rng, 0, 20);
    const auto dets = oracle::random_detections(rng, n, 3);
    const double thr = oracle::uniform_int(rng, 1, 9) / 10.0;
    const bool aware = t % 2 == 0;
    if (addsl::nms(dets, thr, aware) != oracle::brute_force_nms(dets, thr, aware)) ++mismatches;
  }
  return {mismatches == 0, "1000 instances (<=20 boxes), " + std::to_string(mismatches) + " mismatches vs brute force"};
}

// --- 4 --------------------------------------------------------------------

Outcome rotation_consistency() {
  std::mt19937_64 rng(4096);
  const int n = 64;
  double worst = 0;
  int identity_failures = 0;
  for (int t = 0; t < 500; ++t) {
    const auto b = oracle::random_box(rng, 2.0 / n, 1.0);
    const auto mask = oracle::rasterize(b, n);
    for (int k = 0; k < 4; ++k) {
      worst = std::max(worst, oracle::edge_gap(addsl::rotate_box(b, k), oracle::extent(addsl::rotate_quarter(mask, k)), n));
    }
    auto r = mask;
    for (int k = 0; k < 4; ++k) r = addsl::rotate_quarter(r, 1);
    if (!(r == mask)) ++identity_failures;
  }
  std::mt19937_64 img_rng(4097);
  for (int t = 0; t < 20; ++t) {
    addsl::Raster img(oracle::uniform_int(img_rng, 1, 40), oracle::uniform_int(img_rng, 1, 40), t % 2 ? 3 : 1);
    for (auto& v : img.data()) v = static_cast<std::uint8_t>(oracle::uniform_int(img_rng, 0, 255));
    auto r = img;
    for (int k = 0; k < 4; ++k) r = addsl::rotate_quarter(r, 1);
    if (!(r == img)) ++identity_failures;
  }
  const bool ok = worst <= 1.0 / n + 1e-12 && identity_failures == 0;
  return {ok, "500 boxes x 4 turns, max edge gap " + sci(worst * n) + " px of 64 (tol 1 px); 520 rasters, " +
                  std::to_string(identity_failures) + " non-identical after four quarter turns"};
}

// --- 5 --------------------------------------------------------------------

Outcome format_round_trips() {
  const auto map = addsl::LabelMap::canonical();
  std::mt19937_64 rng(5005);
  double yolo_err = 0;
  std::size_t objects = 0;
  for (int t = 0; t < 1000; ++t) {
    addsl::LabelFile f{"f", {}};
    const int n = oracle::uniform_int(rng, 0, 6);
    for (int k = 0; k < n; ++k) f.objects.push_back({oracle::uniform_int(rng, 0, 35), oracle::random_box(rng, 1e-5, 1.0)});
    const auto back = addsl::parse_yolo(addsl::serialize_yolo(f), map);
    if (back.objects.size() != f.objects.size()) return {false, "object count changed in file " + std::to_string(t)};
    for (std::size_t k = 0; k < f.objects.size(); ++k) {
      const auto& a = f.objects[k].box;
      const auto& b = back.objects[k].box;
      if (f.objects[k].class_id != back.objects[k].class_id) return {false, "class changed"};
      yolo_err = std::max({yolo_err, std::abs(a.cx() - b.cx()), std::abs(a.cy() - b.cy()), std::abs(a.w() - b.w()),
                           std::abs(a.h() - b.h())});
      ++objects;
    }
  }

  // VOC: integer pixel corners, judged per edge. Far edges within half a
  // pixel of the border are clamped to the last pixel and cannot be
  // recovered to half a pixel; they are counted and held to one pixel.
  const int W = 416;
  double voc_err = 0;
  double clamped_err = 0;
  std::size_t clamped = 0;
  std::size_t edges = 0;
  double coco_err = 0;
  for (int t = 0; t < 1000; ++t) {
    addsl::LabelFile f{"v", {}};
    const int n = oracle::uniform_int(rng, 1, 4);
    for (int k = 0; k < n; ++k) f.objects.push_back({oracle::uniform_int(rng, 0, 35), oracle::random_box(rng, 0.01, 1.0)});
    const auto doc = addsl::from_voc(addsl::to_voc(f, W, W, map), map);
    for (std::size_t k = 0; k < f.objects.size(); ++k) {
      const auto a = oracle::corners(f.objects[k].box);
      const auto b = oracle::corners(doc.file.objects.at(k).box);
      const double px[4] = {std::abs(a.x0 - b.x0) * W, std::abs(a.y0 - b.y0) * W, std::abs(a.x1 - b.x1) * W,
                            std::abs(a.y1 - b.y1) * W};
      const bool far_clamped[4] = {false, false, std::floor(a.x1 * W + 0.5) + 1 > W, std::floor(a.y1 * W + 0.5) + 1 > W};
      for (int e = 0; e < 4; ++e) {
        if (far_clamped[e]) {
          ++clamped;
          clamped_err = std::max(clamped_err, px[e]);
        } else {
          ++edges;
          voc_err = std::max(voc_err, px[e]);
        }
      }
      const auto c = addsl::from_coco_bbox(addsl::to_coco_bbox(f.objects[k].box, W, W), W, W);
      const auto& o = f.objects[k].box;
      coco_err = std::max({coco_err, std::abs(c.cx() - o.cx()) * W, std::abs(c.cy() - o.cy()) * W,
                           std::abs(c.w() - o.w()) * W, std::abs(c.h() - o.h()) * W});
    }
  }
  const bool ok = yolo_err <= 1e-6 && voc_err <= 0.5 + 1e-9 && clamped_err <= 1.0 + 1e-9 && coco_err <= 0.5;
  return {ok, "YOLO " + std::to_string(objects) + " objects max err " + sci(yolo_err) + " (tol 1e-6); VOC@416 max " +
                  sci(voc_err) + " px over " + std::to_string(edges) + " edges (tol 0.5), " + std::to_string(clamped) +
                  " border-clamped far edges max " + sci(clamped_err) + " px (tol 1); COCO@416 max " + sci(coco_err) +
                  " px (tol 0.5)"};
}

// --- 6 --------------------------------------------------------------------

Outcome pipeline_replication() {
  const auto map = addsl::LabelMap::canonical();
  oracle::TempDir dir("acceptance6");

  oracle::write_class_tree(dir / "six", map, 6, 32, 24, 6);
  const auto six = addsl::scan_tree(dir / "six").manifest;
  const auto aug = addsl::augment(six, addsl::AugmentSpec{}, dir / "aug", map);
  if (!aug.findings.empty()) return {false, std::to_string(aug.findings.size()) + " augment findings"};
  std::map<std::string, int> per_class;
  for (const auto& entry : fs::recursive_directory_iterator(dir / "aug")) {
    if (entry.is_regular_file() && entry.path().extension() == ".ppm") {
      ++per_class[entry.path().stem().string().substr(0, entry.path().stem().string().find('_'))];
    }
  }
  int bad_classes = 0;
  for (int id = 0; id < map.size(); ++id) bad_classes += per_class[map.name(id)] == 30 ? 0 : 1;
  const auto st = addsl::stats(aug.manifest, map);
  const int present = addsl::classes_present(st);

  oracle::write_class_tree(dir / "seven", map, 7, 16, 16, 7);
  const auto seven = addsl::scan_tree(dir / "seven").manifest;
  const auto sp = addsl::split(seven, addsl::SplitSpec{0.8, 0.1, 0.1, 7, true});
  std::array<long, 3> counts{0, 0, 0};
  for (const auto& e : sp.entries) ++counts[static_cast<std::size_t>(e.split)];
  const bool split_ok = sp.entries.size() == 252 && std::abs(counts[0] - 202) <= 1 && std::abs(counts[1] - 25) <= 1 &&
                        std::abs(counts[2] - 25) <= 1;
  const bool ok = bad_classes == 0 && per_class.size() == 36 && present == 36 && split_ok;
  return {ok, "216 originals -> " + std::to_string(aug.manifest.entries.size()) + " files, " +
                  std::to_string(36 - bad_classes) + "/36 classes with exactly 30; stats reports " +
                  std::to_string(present) + " classes; 252 split " + std::to_string(counts[0]) + "/" +
                  std::to_string(counts[1]) + "/" + std::to_string(counts[2]) + " (target 202/25/25 +-1)"};
}

// --- 7 --------------------------------------------------------------------

Outcome metric_fixtures() {
  const auto map = addsl::LabelMap::canonical();
  const int Z = map.id_of("Z").value();
  const int X = map.id_of("X").value();
  const addsl::Box b(0.5, 0.5, 0.4, 0.6);
  std::vector<addsl::ImageClassification> imgs;
  // 25 test images over 23 classes; Z and X appear twice each
  std::vector<int> gt;
  for (int c = 0; c < 21; ++c) gt.push_back(c);
  gt.push_back(Z);
  gt.push_back(Z);
  gt.push_back(X);
  gt.push_back(X);
  for (int g : gt) {
    imgs.push_back({{{b, g, 0.9}, {b, (g + 1) % 36, 0.3}}, g});
  }
  imgs[21].detections.front().class_id = X;  // one Z read as X
  imgs[23].detections.front().class_id = Z;  // one X read as Z
  const double acc = addsl::accuracy_top1(imgs);
  const auto cm = addsl::confusion(imgs, 36, 0.25);
  int row_mismatch = 0;
  for (int c = 0; c < 36; ++c) {
    const auto freq = static_cast<std::size_t>(std::count(gt.begin(), gt.end(), c));
    row_mismatch += cm.row_sum(c) == freq ? 0 : 1;
  }
  const bool zx = cm.at(Z, X) == 1 && cm.at(X, Z) == 1 && cm.diagonal() == 23;
  const bool ok = imgs.size() == 25 && acc == 0.92 && row_mismatch == 0 && zx && cm.total() == 25;
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", acc);
  return {ok, "25 images, accuracy " + std::string(buf) + " (exact 0.92), " + std::to_string(row_mismatch) +
                  " row-sum mismatches, cm[Z][X]=" + std::to_string(cm.at(Z, X)) + " cm[X][Z]=" +
                  std::to_string(cm.at(X, Z)) + ", diagonal " + std::to_string(cm.diagonal())};
}

// --- 8 --------------------------------------------------------------------

Outcome parameter_reduction() {
  using addsl::LayerSpec;
  const std::vector<LayerSpec> dense{LayerSpec::conv(256, 512, 3, 1, 1)};
  const std::vector<LayerSpec> separable{LayerSpec::depthwise(256, 3, 1, 1), LayerSpec::pointwise(256, 512)};
  const auto pd = addsl::param_count(dense);
  const auto ps = addsl::param_count(separable);
  std::vector<LayerSpec> backbone;
  int ch = 3;
  for (int out : {16, 32, 64, 128, 256}) {
    backbone.push_back(LayerSpec::conv(ch, out, 3, 1, 1));
    backbone.push_back(LayerSpec::maxpool(out, 2, 2));
    ch = out;
  }
  const addsl::HeadConfig head;
  backbone.push_back(LayerSpec::depthwise(ch, 3, 1, 1));
  backbone.push_back(LayerSpec::pointwise(ch, head.anchors_per_cell() * (5 + head.classes)));
  const auto shapes = addsl::shape_propagate({416, 416, 3}, backbone);
  const auto& last = shapes.back();
  const bool ok = pd == 1179648 && ps == 133376 && last.height == 13 && last.width == 13 &&
                  last.channels == 4 * (5 + 36) && head.grid == 13;
  return {ok, "k=3 256->512 conv " + std::to_string(pd) + " -> separable " + std::to_string(ps) + "; 416x416x3 -> " +
                  std::to_string(last.height) + "x" + std::to_string(last.width) + "x" + std::to_string(last.channels) +
                  " under total stride 32"};
}

// --- 9 --------------------------------------------------------------------

std::map<std::string, std::string> snapshot(const fs::path& root) {
  std::map<std::string, std::string> files;
  if (!fs::exists(root)) return files;
  for (const auto& e : fs::recursive_directory_iterator(root)) {
    if (e.is_regular_file()) files[e.path().lexically_relative(root).generic_string()] = oracle::read_text(e.path());
  }
  return files;
}

Outcome cli_determinism() {
  oracle::TempDir dir("acceptance9");
  const auto map = addsl::LabelMap::canonical();
  oracle::write_class_tree(dir / "data", map, 3, 20, 12, 9);
  const std::string data = (dir / "data").string();
  oracle::write_text(dir / "one.txt", "7 0.400000 0.550000 0.300000 0.350000\n");
  oracle::write_text(dir / "pred.txt", "0 0.5 0.5 0.2 0.2 0.9\n0 0.52 0.5 0.2 0.2 0.8\n2 0.1 0.1 0.1 0.1 0.4\n");
  oracle::write_text(dir / "net.txt", "input h=416 w=416 c=3\nconv in=3 out=16 k=3 s=2 p=1\ndepthwise in=16 k=3 s=2 p=1\n");
  for (int id = 0; id < map.size(); ++id) {
    for (int k = 0; k < 3; ++k) {
      const std::string stem = map.name(id) + "_" + std::to_string(k);
      const auto lf = addsl::read_yolo_file(dir / "data/labels" / map.name(id) / (stem + ".txt"), map);
      const std::vector<addsl::Detection> d{{lf.objects.front().box, (id + k / 2) % 36, 0.3 + 0.2 * k}};
      oracle::write_text(dir / "preds" / (stem + ".txt"), addsl::serialize_predictions(d));
    }
  }
  for (int f = 0; f < 120; ++f) {
    addsl::write_image_file(dir / "frames" / ("frame" + std::to_string(f) + ".pgm"), addsl::Raster(2, 2, 1));
  }
  auto grid_prep = std::vector<std::string>{"encode", "--labels", (dir / "one.txt").string(), "--out", (dir / "t.json").string()};

  // each case: arguments with {out} standing for a per-run output location
  const std::vector<std::pair<std::string, std::vector<std::string>>> cases{
      {"validate", {"validate", "--root", data}},
      {"convert voc", {"convert", "--root", data, "--to", "voc", "--out", "{out}"}},
      {"convert coco", {"convert", "--root", data, "--to", "coco", "--out", "{out}/coco.json"}},
      {"augment", {"augment", "--root", data, "--out", "{out}", "--resize", "16x16", "--grayscale"}},
      {"split", {"split", "--root", data, "--ratios", "80:10:10", "--out", "{out}/split.tsv"}},
      {"stats", {"stats", "--root", data}},
      {"select-frames", {"select-frames", "--total", "120", "--frames", (dir / "frames").string(), "--out", "{out}"}},
      {"encode", {"encode", "--labels", (dir / "one.txt").string(), "--out", "{out}/t.json"}},
      {"decode", {"decode", "--grid", (dir / "t.json").string()}},
      {"loss", {"loss", "--pred", (dir / "t.json").string(), "--target", (dir / "t.json").string()}},
      {"gradcheck", {"gradcheck", "--trials", "5"}},
      {"toy-train", {"toy-train", "--labels", (dir / "one.txt").string(), "--steps", "200", "--trace", "{out}/trace.csv",
                     "--out", "{out}/fit.json"}},
      {"nms", {"nms", "--input", (dir / "pred.txt").string(), "--iou", "0.45"}},
      {"eval", {"eval", "--root", data, "--pred", (dir / "preds").string()}},
      {"params", {"params", "--layers", (dir / "net.txt").string()}},
      {"anchors", {"anchors", "--root", data, "-k", "3"}},
  };

  {
    std::ostringstream o, e;
    std::vector<std::string> argv{"addsl"};
    argv.insert(argv.end(), grid_prep.begin(), grid_prep.end());
    if (addsl::cli::run(argv, o, e) != 0) return {false, "encode setup failed: " + e.str()};
  }

  std::vector<std::string> differing;
  std::vector<std::string> failed;
  int idx = 0;
  for (const auto& [name, args] : cases) {
    std::string stdout_text[2];
    std::map<std::string, std::string> files[2];
    int codes[2];
    for (int rep = 0; rep < 2; ++rep) {
      const fs::path out = dir / ("run" + std::to_string(rep)) / std::to_string(idx);
      fs::create_directories(out.parent_path());
      std::vector<std::string> argv{"addsl", "--seed", "11"};
      for (auto a : args) {
        const auto pos = a.find("{out}");
        if (pos != std::string::npos) a.replace(pos, 5, out.string());
        argv.push_back(a);
      }
      fs::create_directories(out);
      std::ostringstream o, e;
      codes[rep] = addsl::cli::run(argv, o, e);
      // paths of the run's own output location are the only legitimate difference
      std::string text = o.str();
      for (auto pos = text.find(out.string()); pos != std::string::npos; pos = text.find(out.string(), pos)) {
        text.replace(pos, out.string().size(), "{out}");
      }
      stdout_text[rep] = text;
      files[rep] = snapshot(out);
      if (codes[rep] != 0) failed.push_back(name + " (exit " + std::to_string(codes[rep]) + ": " + e.str() + ")");
    }
    if (stdout_text[0] != stdout_text[1] || files[0] != files[1] || codes[0] != codes[1]) differing.push_back(name);
    ++idx;
  }
  std::string detail = std::to_string(cases.size()) + " invocations covering every subcommand, " +
                       std::to_string(differing.size()) + " differing";
  for (const auto& d : differing) detail += " [" + d + "]";
  for (const auto& f : failed) detail += " failed: " + f;
  return {differing.empty() && failed.empty(), detail};
}

}  // namespace

int main() {
  criterion(1, "gradient correctness", 10, gradient_correctness);
  criterion(2, "toy convergence", 5, toy_convergence);
  criterion(3, "NMS oracle equivalence", 5, nms_equivalence);
  criterion(4, "rotation consistency", 0, rotation_consistency);
  criterion(5, "format round-trips", 0, format_round_trips);
  criterion(6, "pipeline replication at dataset scale", 0, pipeline_replication);
  criterion(7, "metric fixtures", 0, metric_fixtures);
  criterion(8, "parameter reduction", 0, parameter_reduction);
  criterion(9, "CLI determinism", 0, cli_determinism);
  std::cout << (failures == 0 ? "all criteria passed" : std::to_string(failures) + " criteria failed") << std::endl;
  return failures == 0 ? 0 : 1;
}
