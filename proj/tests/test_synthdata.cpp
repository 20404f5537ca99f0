#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <filesystem>
#include <fstream>

#include "vistrack/errors.hpp"
#include "vistrack/rng.hpp"
#include "vistrack/synthdata.hpp"

using namespace vistrack;
namespace fs = std::filesystem;

namespace {

ClipSpec basic_spec() {
  ClipSpec spec;
  spec.num_frames = 6;
  spec.height = 128;
  spec.width = 128;
  spec.num_objects = 3;
  spec.seed = 42;
  return spec;
}

bool clips_equal(const VideoClip& a, const VideoClip& b) {
  if (a.frames.size() != b.frames.size()) return false;
  for (size_t t = 0; t < a.frames.size(); ++t)
    if (a.frames[t].vec() != b.frames[t].vec()) return false;
  return true;
}

bool gts_equal(const GroundTruth& a, const GroundTruth& b) {
  if (a.id_masks.size() != b.id_masks.size() || a.objects.size() != b.objects.size()) return false;
  for (size_t t = 0; t < a.id_masks.size(); ++t)
    if (!(a.id_masks[t] == b.id_masks[t])) return false;
  for (size_t k = 0; k < a.objects.size(); ++k) {
    if (a.objects[k].track_id != b.objects[k].track_id) return false;
    if (a.objects[k].category_id != b.objects[k].category_id) return false;
    if (a.objects[k].present != b.objects[k].present) return false;
  }
  return true;
}

fs::path temp_dir(const std::string& tag) {
  fs::path p = fs::temp_directory_path() / ("vistrack_test_" + tag);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::pair<double, double> mask_centroid(const MaskGrid& m) {
  double sx = 0, sy = 0;
  int n = 0;
  for (int r = 0; r < m.height; ++r)
    for (int c = 0; c < m.width; ++c)
      if (m.at(r, c)) {
        sx += c;
        sy += r;
        ++n;
      }
  return {sx / n, sy / n};
}

}  // namespace

TEST_CASE("generate_clip is deterministic") {
  ClipSpec spec = basic_spec();
  auto [clip1, gt1] = generate_clip(spec);
  auto [clip2, gt2] = generate_clip(spec);
  CHECK(clips_equal(clip1, clip2));
  CHECK(gts_equal(gt1, gt2));
}

TEST_CASE("generate_clip track structure") {
  ClipSpec spec = basic_spec();
  spec.exit_reentry = false;
  auto [clip, gt] = generate_clip(spec);
  REQUIRE(gt.objects.size() == 3);
  for (const auto& obj : gt.objects) CHECK(obj.present[0]);
  CHECK(static_cast<int>(clip.frames.size()) == spec.num_frames);
  // Track ids unique.
  CHECK(gt.objects[0].track_id == 1);
  CHECK(gt.objects[1].track_id == 2);
  CHECK(gt.objects[2].track_id == 3);
}

TEST_CASE("generate_clip rejects invalid specs naming the field") {
  ClipSpec spec = basic_spec();
  spec.num_frames = 1;
  CHECK_THROWS_WITH_AS(generate_clip(spec), doctest::Contains("num_frames"), ValidationError);
  spec = basic_spec();
  spec.height = 32;
  CHECK_THROWS_WITH_AS(generate_clip(spec), doctest::Contains("height"), ValidationError);
  spec = basic_spec();
  spec.occlusion_rate = 1.5;
  CHECK_THROWS_WITH_AS(generate_clip(spec), doctest::Contains("occlusion_rate"), ValidationError);
}

TEST_CASE("occlusion-free clips have disjoint masks with analytic areas") {
  // Pixel-count oracle: rendered mask area must match the analytic shape area
  // within 1% when no occlusion can steal pixels.
  ClipSpec spec;
  spec.num_frames = 5;
  spec.height = 256;
  spec.width = 256;
  spec.num_objects = 3;
  spec.occlusion_rate = 0.0;
  spec.seed = 7;
  auto [clip, gt] = generate_clip(spec);

  // Mask exclusivity holds by construction of the id grid; check analytic area
  // per object per frame where the object is fully visible.
  // Recover each object's size from frame-0 area (areas are constant under
  // pure translation), then verify all frames agree within 1%.
  for (const auto& obj : gt.objects) {
    double area0 = 0;
    for (const auto& v : gt.id_masks[0].data)
      if (v == obj.track_id) area0 += 1;
    REQUIRE(area0 > 0);
    for (int t = 1; t < spec.num_frames; ++t) {
      double area = 0;
      for (const auto& v : gt.id_masks[t].data)
        if (v == obj.track_id) area += 1;
      CHECK(std::abs(area - area0) / area0 < 0.01);
    }
  }
}

TEST_CASE("analytic area oracle against rendered shapes") {
  // Render isolated shapes via the generator at a size where the pixel-count
  // oracle is well inside the 1% rasterization tolerance.
  for (int cat = 1; cat <= 4; ++cat) {
    ClipSpec spec;
    spec.num_frames = 2;
    spec.height = 256;
    spec.width = 256;
    spec.num_objects = 1;
    spec.category_set = {cat};
    spec.seed = 100 + cat;
    auto [clip, gt] = generate_clip(spec);
    double area = 0;
    for (const auto& v : gt.id_masks[0].data)
      if (v == 1) area += 1;
    // Size is internal; recover it by inverting the analytic area and checking
    // the rendered area stays within 1% of the analytic value at that size.
    // analytic_shape_area is strictly increasing in size for every category.
    double lo = 1.0, hi = 200.0;
    for (int it = 0; it < 200; ++it) {
      double mid = 0.5 * (lo + hi);
      if (analytic_shape_area(cat, mid) < area) lo = mid;
      else hi = mid;
    }
    double fitted = analytic_shape_area(cat, 0.5 * (lo + hi));
    CHECK(std::abs(fitted - area) / area < 0.01);
  }
}

TEST_CASE("exit_reentry produces a leave-and-return track") {
  ClipSpec spec = basic_spec();
  spec.num_frames = 10;
  spec.exit_reentry = true;
  auto [clip, gt] = generate_clip(spec);
  bool found = false;
  for (const auto& obj : gt.objects) {
    int first_absent = -1, reentry = -1;
    for (size_t t = 0; t < obj.present.size(); ++t) {
      if (!obj.present[t] && first_absent < 0) first_absent = static_cast<int>(t);
      if (first_absent >= 0 && obj.present[t] && static_cast<int>(t) > first_absent) reentry = static_cast<int>(t);
    }
    if (first_absent > 0 && reentry > first_absent) found = true;
  }
  CHECK(found);
}

TEST_CASE("rle encode hand cases") {
  MaskGrid zeros(2, 3);
  RleMask r = encode_rle(zeros);
  CHECK(r.counts == std::vector<int>{6});
  CHECK(r.height == 2);
  CHECK(r.width == 3);

  MaskGrid row(1, 6);
  row.data = {0, 0, 1, 1, 1, 0};
  CHECK(encode_rle(row).counts == std::vector<int>{2, 3, 1});

  MaskGrid ones(2, 3, 1);
  CHECK(encode_rle(ones).counts == std::vector<int>{0, 6});
}

TEST_CASE("rle decode hand cases") {
  RleMask r;
  r.height = 2;
  r.width = 3;
  r.counts = {6};
  CHECK(decode_rle(r).empty_area());

  r.counts = {0, 6};
  MaskGrid ones = decode_rle(r);
  for (auto v : ones.data) CHECK(v == 1);

  r.height = 1;
  r.width = 6;
  r.counts = {2, 3, 1};
  MaskGrid m = decode_rle(r);
  CHECK(m.data == std::vector<uint8_t>{0, 0, 1, 1, 1, 0});

  r.counts = {2, 3};
  CHECK_THROWS_AS(decode_rle(r), FormatError);
}

TEST_CASE("rle round-trip on random masks") {
  Rng rng(3);
  for (int trial = 0; trial < 100; ++trial) {
    int h = static_cast<int>(rng.randint(1, 12));
    int w = static_cast<int>(rng.randint(1, 12));
    MaskGrid m(h, w);
    for (auto& v : m.data) v = rng.bernoulli(0.4) ? 1 : 0;
    MaskGrid back = decode_rle(encode_rle(m));
    CHECK(back == m);
  }
}

namespace {

// Single-frame scene with two discs used by the augmentation tests.
std::pair<Tensor, GroundTruth> disc_scene(int h, int w, double cx1, double cy1, double r1,
                                          double cx2, double cy2, double r2) {
  Tensor img({3, h, w});
  GroundTruth gt;
  IdGrid ids(h, w);
  for (int r = 0; r < h; ++r)
    for (int c = 0; c < w; ++c) {
      double d1 = (c - cx1) * (c - cx1) + (r - cy1) * (r - cy1);
      double d2 = (c - cx2) * (c - cx2) + (r - cy2) * (r - cy2);
      if (d1 <= r1 * r1) {
        ids.at(r, c) = 1;
        img.at(0, r, c) = 0.9;
      } else if (d2 <= r2 * r2) {
        ids.at(r, c) = 2;
        img.at(1, r, c) = 0.8;
      } else {
        img.at(2, r, c) = 0.2;
      }
    }
  gt.id_masks.push_back(ids);
  gt.objects.push_back({1, 1, {true}});
  gt.objects.push_back({2, 2, {true}});
  return {img, gt};
}

}  // namespace

TEST_CASE("augment identity returns an unchanged second frame") {
  auto [img, gt] = disc_scene(96, 96, 30, 30, 8, 64, 60, 12);
  auto [clip, gt2] = augment_pair(img, gt, AffineBlurParams::identity(), 5);
  REQUIRE(clip.frames.size() == 2);
  CHECK(clip.frames[0].vec() == clip.frames[1].vec());
  CHECK(gt2.id_masks[0] == gt2.id_masks[1]);
  CHECK(gt2.objects[0].present[1]);
  CHECK(gt2.objects[1].present[1]);
}

TEST_CASE("augment pure translation shifts mask centroids") {
  auto [img, gt] = disc_scene(96, 96, 40, 44, 9, 70, 20, 7);
  AffineBlurParams params = AffineBlurParams::identity();
  params.translate_frac = {0.0677, 0.0677};  // 6.5 px on a 96-px side
  auto [clip, gt2] = augment_pair(img, gt, params, 9);
  double dx = 0.0677 * 96, dy = 0.0677 * 96;

  for (int tid : {1, 2}) {
    MaskGrid before = gt2.object_mask(0, tid);
    MaskGrid after = gt2.object_mask(1, tid);
    auto [bx, by] = mask_centroid(before);
    auto [ax, ay] = mask_centroid(after);
    CHECK(std::abs(ax - bx - dx) <= 0.5);
    CHECK(std::abs(ay - by - dy) <= 0.5);
  }
}

TEST_CASE("augment determinism under fixed seed") {
  auto [img, gt] = disc_scene(96, 96, 30, 30, 8, 64, 60, 12);
  AffineBlurParams params;  // full default ranges
  auto [c1, g1] = augment_pair(img, gt, params, 77);
  auto [c2, g2] = augment_pair(img, gt, params, 77);
  CHECK(clips_equal(c1, c2));
  CHECK(gts_equal(g1, g2));
}

TEST_CASE("augment clears presence for fully exited objects") {
  auto [img, gt] = disc_scene(96, 96, 8, 48, 5, 60, 48, 14);
  AffineBlurParams params = AffineBlurParams::identity();
  params.translate_frac = {-0.25, -0.25};  // push everything 24 px left/up
  auto [clip, gt2] = augment_pair(img, gt, params, 3);
  CHECK_FALSE(gt2.objects[0].present[1]);  // small disc near the left edge exits
  CHECK(gt2.objects[1].present[1]);
}

TEST_CASE("dataset round-trip is bitwise exact") {
  ClipSpec spec = basic_spec();
  auto [clips, gts] = generate_corpus(spec, 2);
  fs::path root = temp_dir("roundtrip");
  write_dataset(clips, gts, root.string());

  Dataset ds = read_dataset(root.string());
  REQUIRE(ds.clips().size() == 2);
  CHECK(ds.categories().size() == 4);
  for (size_t i = 0; i < clips.size(); ++i) {
    const auto& [clip, gt] = ds.load_clip(clips[i].clip_id);
    CHECK(clips_equal(clip, clips[i]));
    CHECK(gts_equal(gt, gts[i]));
  }
  fs::remove_all(root);
}

TEST_CASE("read_dataset on empty directory reports missing annotations") {
  fs::path root = temp_dir("empty");
  CHECK_THROWS_WITH_AS(read_dataset(root.string()), doctest::Contains("no annotations.json"),
                       ValidationError);
  fs::remove_all(root);
}

TEST_CASE("read_dataset names clips whose directory is missing") {
  ClipSpec spec = basic_spec();
  auto [clips, gts] = generate_corpus(spec, 1);
  fs::path root = temp_dir("missingdir");
  write_dataset(clips, gts, root.string());
  fs::remove_all(root / "clips" / clips[0].clip_id);
  CHECK_THROWS_WITH_AS(read_dataset(root.string()), doctest::Contains(clips[0].clip_id.c_str()),
                       FormatError);
  fs::remove_all(root);
}

TEST_CASE("read_dataset reports parse errors with clip id") {
  fs::path root = temp_dir("badjson");
  fs::create_directories(root);
  std::ofstream(root / "annotations.json")
      << R"({"categories":[{"id":1,"name":"circle"}],"clips":[{"id":"clip_x","num_frames":"oops"}]})";
  CHECK_THROWS_WITH_AS(read_dataset(root.string()), doctest::Contains("clip_x"), FormatError);
  fs::remove_all(root);
}
