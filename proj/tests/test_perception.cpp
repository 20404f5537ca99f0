#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>

#include "gradcheck.hpp"
#include "vistrack/errors.hpp"
#include "vistrack/perception.hpp"

using namespace vistrack;

namespace {

Tensor random_frame(int h, int w, Rng& rng) {
  Tensor t({3, h, w});
  for (int64_t i = 0; i < t.size(); ++i) t[i] = rng.uniform();
  return t;
}

double logit(double p) { return std::log(p / (1.0 - p)); }

// GroundTruth with one axis-aligned filled rectangle per entry.
GroundTruth rect_gt(int h, int w, const std::vector<std::array<int, 5>>& rects) {
  // rect: {track_id, category_id, x1, y1, side}
  GroundTruth gt;
  IdGrid ids(h, w);
  for (const auto& rc : rects) {
    for (int r = rc[3]; r < rc[3] + rc[4]; ++r)
      for (int c = rc[2]; c < rc[2] + rc[4]; ++c) ids.at(r, c) = static_cast<uint16_t>(rc[0]);
    gt.objects.push_back({rc[0], rc[1], {true}});
  }
  gt.id_masks.push_back(ids);
  return gt;
}

PyramidGeometry toy_geometry(int stride, int h, int w, int image_h, int image_w) {
  PyramidGeometry g;
  g.levels = {3};
  g.strides = {stride};
  g.heights = {h};
  g.widths = {w};
  g.image_height = image_h;
  g.image_width = image_w;
  return g;
}

}  // namespace

TEST_CASE("extract_pyramid shape contract") {
  Rng rng(1);
  ParamSet ps;
  PerceptionConfig cfg;
  Perception model(cfg, ps, rng);

  Tensor frame = random_frame(128, 128, rng);
  PyramidFeatures feats = model.extract_pyramid(Var::constant(frame));
  REQUIRE(feats.grids.size() == 3);
  CHECK(feats.grids[0].shape() == std::vector<int>{32, 16, 16});
  CHECK(feats.grids[1].shape() == std::vector<int>{32, 8, 8});
  CHECK(feats.grids[2].shape() == std::vector<int>{32, 4, 4});
  CHECK(feats.strides == std::vector<int>{8, 16, 32});

  Tensor bad = random_frame(100, 128, rng);
  CHECK_THROWS_WITH_AS(model.extract_pyramid(Var::constant(bad)), doctest::Contains("multiple"),
                       ShapeError);
}

TEST_CASE("extract_pyramid determinism and zero propagation") {
  Rng rng(2);
  ParamSet ps;
  Perception model(PerceptionConfig{}, ps, rng);

  Tensor frame = random_frame(64, 64, rng);
  PyramidFeatures a = model.extract_pyramid(Var::constant(frame));
  PyramidFeatures b = model.extract_pyramid(Var::constant(frame));
  for (size_t i = 0; i < a.grids.size(); ++i)
    CHECK(a.grids[i].value().vec() == b.grids[i].value().vec());

  // Biases are zero-initialized, so an all-zero frame yields an all-zero pyramid.
  Tensor zeros({3, 64, 64});
  PyramidFeatures z = model.extract_pyramid(Var::constant(zeros));
  for (const Var& g : z.grids)
    for (int64_t i = 0; i < g.value().size(); ++i) CHECK(g.value()[i] == 0.0);
}

TEST_CASE("assign_targets centerness is 1 at a box center") {
  // Box (8,8)-(24,24): its center (16,16) is the stride-8 location (2,2).
  GroundTruth gt = rect_gt(32, 32, {{1, 2, 8, 8, 16}});
  PyramidGeometry geom = toy_geometry(8, 4, 4, 32, 32);
  PerceptionConfig cfg;
  cfg.levels = {3};
  cfg.scale_breaks = {};
  DenseTargets t = assign_targets(gt, 0, geom, cfg);
  REQUIRE(t.levels.size() == 1);
  int idx = 2 * 4 + 2;
  CHECK(t.levels[0].cls[idx] == 2);
  CHECK(t.levels[0].ctr[idx] == doctest::Approx(1.0));
  CHECK(t.total_positives == 1);
}

TEST_CASE("assign_targets empty ground truth") {
  GroundTruth gt;
  gt.id_masks.emplace_back(32, 32);
  PyramidGeometry geom = toy_geometry(8, 4, 4, 32, 32);
  PerceptionConfig cfg;
  cfg.levels = {3};
  cfg.scale_breaks = {};
  DenseTargets t = assign_targets(gt, 0, geom, cfg);
  CHECK(t.total_positives == 0);
  for (int v : t.levels[0].cls) CHECK(v == 0);
}

TEST_CASE("assign_targets matches brute-force location scan") {
  // One 40x40 box on a 128x128 frame with default ranges: positives appear
  // only on the stride-8 level and match an independent enumeration.
  GroundTruth gt = rect_gt(128, 128, {{1, 1, 30, 40, 40}});
  PyramidGeometry geom;
  geom.levels = {3, 4, 5};
  geom.strides = {8, 16, 32};
  geom.heights = {16, 8, 4};
  geom.widths = {16, 8, 4};
  geom.image_height = geom.image_width = 128;
  PerceptionConfig cfg;
  DenseTargets t = assign_targets(gt, 0, geom, cfg);

  // Independent oracle over all grid points.
  Box box = gt.object_box(0, 1);
  std::vector<int> oracle_count(3, 0);
  for (int li = 0; li < 3; ++li) {
    double lo = li == 0 ? 0.0 : cfg.scale_breaks[li - 1];
    double hi = li < 2 ? cfg.scale_breaks[li] : std::numeric_limits<double>::infinity();
    for (int r = 0; r < geom.heights[li]; ++r)
      for (int c = 0; c < geom.widths[li]; ++c) {
        double x = c * geom.strides[li], y = r * geom.strides[li];
        double l = x - box[0], tt = y - box[1], rr = box[2] - x, b = box[3] - y;
        double mn = std::min({l, tt, rr, b});
        double mx = std::max({l, tt, rr, b});
        if (mn > 0 && mx > lo && mx <= hi) ++oracle_count[li];
      }
  }
  CHECK(oracle_count[1] == 0);
  CHECK(oracle_count[2] == 0);
  CHECK(static_cast<int>(t.levels[0].positive.size()) == oracle_count[0]);
  CHECK(t.levels[1].positive.empty());
  CHECK(t.levels[2].positive.empty());
  CHECK(oracle_count[0] > 0);
}

TEST_CASE("detect shape contract and non-negative distances") {
  Rng rng(3);
  ParamSet ps;
  Perception model(PerceptionConfig{}, ps, rng);
  Tensor frame = random_frame(128, 128, rng);
  PyramidFeatures feats = model.extract_pyramid(Var::constant(frame));
  DenseHeadOutput dense = model.detect(feats);
  REQUIRE(dense.cls.size() == 3);
  CHECK(dense.cls[0].shape() == std::vector<int>{4, 16, 16});
  CHECK(dense.box[1].shape() == std::vector<int>{4, 8, 8});
  CHECK(dense.ctr[2].shape() == std::vector<int>{1, 4, 4});
  for (const Var& b : dense.box)
    for (int64_t i = 0; i < b.value().size(); ++i) CHECK(b.value()[i] >= 0.0);

  DenseHeadOutput again = model.detect(feats);
  CHECK(dense.cls[0].value().vec() == again.cls[0].value().vec());
}

TEST_CASE("decode_detections empty below threshold") {
  PerceptionConfig cfg;
  cfg.levels = {3};
  cfg.scale_breaks = {};
  PyramidGeometry geom = toy_geometry(8, 2, 2, 16, 16);
  DenseHeadOutput dense;
  dense.cls.push_back(Var::constant(Tensor::full({4, 2, 2}, -10.0)));
  dense.box.push_back(Var::constant(Tensor::full({4, 2, 2}, 5.0)));
  dense.ctr.push_back(Var::constant(Tensor::full({1, 2, 2}, 0.0)));

  Rng rng(4);
  ParamSet ps;
  Perception model(cfg, ps, rng);
  CHECK(model.decode_detections(dense, geom).empty());
}

TEST_CASE("decode_detections suppresses duplicate boxes") {
  PerceptionConfig cfg;
  cfg.levels = {3};
  cfg.scale_breaks = {};
  PyramidGeometry geom = toy_geometry(8, 1, 2, 24, 24);

  Tensor cls = Tensor::full({4, 1, 2}, -20.0);
  cls.at(0, 0, 0) = logit(0.81);  // score ~ sqrt(.81) = .9 with saturated centerness
  cls.at(0, 0, 1) = logit(0.64);  // score ~ .8
  Tensor box({4, 1, 2});
  // Location (0,0): ltrb (4,4,20,12) -> box (-4,-4,20,12) -> clip (0,0,20,12).
  box.at(0, 0, 0) = 4;
  box.at(1, 0, 0) = 4;
  box.at(2, 0, 0) = 20;
  box.at(3, 0, 0) = 12;
  // Location (8,0): ltrb (8,4,12,12) -> same clipped box.
  box.at(0, 0, 1) = 8;
  box.at(1, 0, 1) = 4;
  box.at(2, 0, 1) = 12;
  box.at(3, 0, 1) = 12;
  Tensor ctr = Tensor::full({1, 1, 2}, 40.0);

  DenseHeadOutput dense;
  dense.cls.push_back(Var::constant(cls));
  dense.box.push_back(Var::constant(box));
  dense.ctr.push_back(Var::constant(ctr));

  Rng rng(5);
  ParamSet ps;
  Perception model(cfg, ps, rng);
  auto dets = model.decode_detections(dense, geom);
  REQUIRE(dets.size() == 1);
  CHECK(dets[0].score == doctest::Approx(0.9).epsilon(1e-6));
  CHECK(dets[0].box[0] == doctest::Approx(0.0));
}

TEST_CASE("decode_detections hand-built arithmetic") {
  // Center location ltrb (16,16,16,16) at stride-8 location (8,8) decodes to
  // box (-8,-8,24,24), clipped to the image.
  PerceptionConfig cfg;
  cfg.levels = {3};
  cfg.scale_breaks = {};
  PyramidGeometry geom = toy_geometry(8, 2, 2, 64, 64);

  Tensor cls = Tensor::full({4, 2, 2}, -20.0);
  cls.at(2, 1, 1) = logit(0.9);
  Tensor box = Tensor::full({4, 2, 2}, 16.0);
  Tensor ctr = Tensor::full({1, 2, 2}, 40.0);

  DenseHeadOutput dense;
  dense.cls.push_back(Var::constant(cls));
  dense.box.push_back(Var::constant(box));
  dense.ctr.push_back(Var::constant(ctr));

  Rng rng(6);
  ParamSet ps;
  Perception model(cfg, ps, rng);
  auto dets = model.decode_detections(dense, geom);
  REQUIRE(dets.size() == 1);
  CHECK(dets[0].category_id == 3);
  CHECK(dets[0].box[0] == doctest::Approx(0.0));
  CHECK(dets[0].box[1] == doctest::Approx(0.0));
  CHECK(dets[0].box[2] == doctest::Approx(24.0));
  CHECK(dets[0].box[3] == doctest::Approx(24.0));
}

TEST_CASE("roi_align preserves constants") {
  Tensor feat = Tensor::full({3, 8, 8}, 2.75);
  Var out = roi_align(Var::constant(feat), {0.7, 1.3, 5.9, 6.2}, 4);
  CHECK(out.shape() == std::vector<int>{3, 4, 4});
  for (int64_t i = 0; i < out.value().size(); ++i)
    CHECK(out.value()[i] == doctest::Approx(2.75).epsilon(1e-12));
}

TEST_CASE("roi_align matches a direct bilinear oracle on a ramp") {
  Tensor feat({1, 8, 8});
  for (int r = 0; r < 8; ++r)
    for (int c = 0; c < 8; ++c) feat.at(0, r, c) = 0.3 * c + 0.7 * r + 0.1;

  std::array<double, 4> box = {0.5, 0.5, 6.5, 6.5};
  int res = 4;
  Var out = roi_align(Var::constant(feat), box, res);

  auto bilinear = [&](double x, double y) {
    x = std::clamp(x, 0.0, 7.0);
    y = std::clamp(y, 0.0, 7.0);
    int x0 = static_cast<int>(std::floor(x)), y0 = static_cast<int>(std::floor(y));
    int x1 = std::min(x0 + 1, 7), y1 = std::min(y0 + 1, 7);
    double fx = x - x0, fy = y - y0;
    double top = feat.at(0, y0, x0) * (1 - fx) + feat.at(0, y0, x1) * fx;
    double bot = feat.at(0, y1, x0) * (1 - fx) + feat.at(0, y1, x1) * fx;
    return top * (1 - fy) + bot * fy;
  };

  double bw = (box[2] - box[0]) / res, bh = (box[3] - box[1]) / res;
  for (int i = 0; i < res; ++i)
    for (int j = 0; j < res; ++j) {
      double acc = 0;
      for (int sy = 0; sy < 2; ++sy)
        for (int sx = 0; sx < 2; ++sx)
          acc += bilinear(box[0] + (j + 0.25 + 0.5 * sx) * bw, box[1] + (i + 0.25 + 0.5 * sy) * bh);
      CHECK(std::abs(out.value().at(0, i, j) - acc / 4.0) < 1e-6);
    }
}

TEST_CASE("roi_align rejects degenerate boxes") {
  Tensor feat = Tensor::full({1, 8, 8}, 1.0);
  CHECK_THROWS_AS(roi_align(Var::constant(feat), {3.0, 1.0, 3.0, 5.0}, 4), ShapeError);
}

TEST_CASE("pooled_roi default output shape") {
  Rng rng(7);
  ParamSet ps;
  Perception model(PerceptionConfig{}, ps, rng);
  Tensor frame = random_frame(64, 64, rng);
  PyramidFeatures feats = model.extract_pyramid(Var::constant(frame));
  Var roi = model.pooled_roi(feats, 0, {10, 12, 40, 44});
  CHECK(roi.shape() == std::vector<int>{32, 14, 14});
}

TEST_CASE("predict_mask range, shape, determinism, unknown category") {
  Rng rng(8);
  ParamSet ps;
  Perception model(PerceptionConfig{}, ps, rng);
  Tensor roi({32, 14, 14});
  for (int64_t i = 0; i < roi.size(); ++i) roi[i] = rng.normal();

  Tensor m1 = model.predict_mask(Var::constant(roi), 2);
  Tensor m2 = model.predict_mask(Var::constant(roi), 2);
  CHECK(m1.shape() == std::vector<int>{28, 28});
  CHECK(m1.vec() == m2.vec());
  for (int64_t i = 0; i < m1.size(); ++i) {
    CHECK(m1[i] > 0.0);
    CHECK(m1[i] < 1.0);
  }
  CHECK_THROWS_AS(model.predict_mask(Var::constant(roi), 9), ValidationError);
}

TEST_CASE("zero-initialized attention conv gives a flat 0.5 map") {
  Rng rng(9);
  ParamSet ps;
  Perception model(PerceptionConfig{}, ps, rng);
  ps.find("perception/mask/attn/w")->mutable_value().zero();
  ps.find("perception/mask/attn/b")->mutable_value().zero();

  Tensor h({32, 14, 14});
  for (int64_t i = 0; i < h.size(); ++i) h[i] = rng.normal();
  Var att = model.attention_map(Var::constant(h));
  for (int64_t i = 0; i < att.value().size(); ++i) CHECK(att.value()[i] == 0.5);
}

TEST_CASE("detection_losses perfect-fit limit") {
  GroundTruth gt = rect_gt(32, 32, {{1, 2, 8, 8, 16}});
  PyramidGeometry geom = toy_geometry(8, 4, 4, 32, 32);
  PerceptionConfig cfg;
  cfg.levels = {3};
  cfg.scale_breaks = {};
  DenseTargets targets = assign_targets(gt, 0, geom, cfg);
  REQUIRE(targets.total_positives == 1);

  Tensor cls = Tensor::full({4, 4, 4}, -40.0);
  cls.at(1, 2, 2) = 40.0;
  Tensor box = Tensor::full({4, 4, 4}, 1.0);
  for (int ch = 0; ch < 4; ++ch) box.at(ch, 2, 2) = targets.levels[0].ltrb.at(ch, 2, 2);
  Tensor ctr = Tensor::full({1, 4, 4}, 40.0);

  DenseHeadOutput dense;
  dense.cls.push_back(Var::constant(cls));
  dense.box.push_back(Var::constant(box));
  dense.ctr.push_back(Var::constant(ctr));

  DetectionLosses losses = detection_losses(dense, targets, {}, {}, cfg);
  CHECK(losses.box.value().item() == 0.0);
  CHECK(losses.ctr.value().item() < 1e-12);
  CHECK(losses.cls.value().item() < 1e-12);
  CHECK(losses.mask.value().item() == 0.0);
}

TEST_CASE("detection_losses empty ground truth") {
  GroundTruth gt;
  gt.id_masks.emplace_back(32, 32);
  PyramidGeometry geom = toy_geometry(8, 4, 4, 32, 32);
  PerceptionConfig cfg;
  cfg.levels = {3};
  cfg.scale_breaks = {};
  DenseTargets targets = assign_targets(gt, 0, geom, cfg);

  DenseHeadOutput dense;
  dense.cls.push_back(Var::constant(Tensor::full({4, 4, 4}, 0.0)));
  dense.box.push_back(Var::constant(Tensor::full({4, 4, 4}, 3.0)));
  dense.ctr.push_back(Var::constant(Tensor::full({1, 4, 4}, 0.0)));

  DetectionLosses losses = detection_losses(dense, targets, {}, {}, cfg);
  CHECK(losses.box.value().item() == 0.0);
  CHECK(losses.ctr.value().item() == 0.0);
  CHECK(losses.mask.value().item() == 0.0);
  CHECK(losses.cls.value().item() > 0.0);
}

TEST_CASE("detection losses gradcheck end to end") {
  Rng rng(10);
  ParamSet ps;
  PerceptionConfig cfg;
  Perception model(cfg, ps, rng);

  ClipSpec spec;
  spec.num_frames = 2;
  spec.height = 64;
  spec.width = 64;
  spec.num_objects = 2;
  spec.seed = 31;
  auto [clip, gt] = generate_clip(spec);

  auto fn = [&]() {
    PyramidFeatures feats = model.extract_pyramid(Var::constant(clip.frames[0]));
    DenseHeadOutput dense = model.detect(feats);
    DenseTargets targets = assign_targets(gt, 0, feats.geometry(), cfg);

    std::vector<Var> mask_logits;
    std::vector<MaskGrid> mask_targets;
    for (const GtBox& gb : gt_boxes_for_frame(gt, 0)) {
      int li = model.level_index_for_box(gb.box);
      Var roi = model.pooled_roi(feats, li, gb.box);
      mask_logits.push_back(model.mask_logits(roi, gb.category_id));
      mask_targets.push_back(
          mask_target_for_box(gt.object_mask(0, gb.track_id), gb.box, cfg.mask_size));
    }
    DetectionLosses losses = detection_losses(dense, targets, mask_logits, mask_targets, cfg);
    return add(add(losses.cls, losses.box), add(losses.ctr, losses.mask));
  };

  auto res = testing::gradcheck(fn, testing::all_params(ps), 20, rng);
  CHECK(res.max_rel_err < 1e-4);
}
