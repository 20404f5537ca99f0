#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>

#include "gradcheck.hpp"
#include "vistrack/errors.hpp"
#include "vistrack/resfuser.hpp"

using namespace vistrack;

namespace {

PyramidFeatures random_pyramid(int c, Rng& rng, std::vector<int> levels = {3, 4, 5},
                               int image = 64) {
  PyramidFeatures f;
  f.image_height = f.image_width = image;
  for (int l : levels) {
    int s = 1 << l;
    Tensor g({c, image / s, image / s});
    for (int64_t i = 0; i < g.size(); ++i) g[i] = rng.normal();
    f.levels.push_back(l);
    f.strides.push_back(s);
    f.grids.push_back(Var::constant(g));
  }
  return f;
}

}  // namespace

TEST_CASE("zero-initialized final layer makes fuse the identity on curr") {
  Rng rng(1);
  ParamSet ps;
  ResFuser fuser(16, {3, 4, 5}, ps, rng);
  PyramidFeatures prev = random_pyramid(16, rng);
  PyramidFeatures curr = random_pyramid(16, rng);

  PyramidFeatures out = fuser.fuse(prev, curr);
  REQUIRE(out.grids.size() == 3);
  for (size_t i = 0; i < out.grids.size(); ++i) {
    CHECK(out.grids[i].value().same_shape(curr.grids[i].value()));
    CHECK(out.grids[i].value().vec() == curr.grids[i].value().vec());
  }
  CHECK(out.levels == curr.levels);
  CHECK(out.strides == curr.strides);
}

TEST_CASE("fuse_first_frame equals fuse(curr, curr) bit for bit") {
  Rng rng(2);
  ParamSet ps;
  ResFuser fuser(8, {3, 4}, ps, rng);
  // Give the final layers nonzero weights so the residual path is active.
  for (auto& [name, v] : ps.entries())
    for (int64_t i = 0; i < v.value().size(); ++i) v.mutable_value()[i] = rng.normal(0.0, 0.2);

  PyramidFeatures curr = random_pyramid(8, rng, {3, 4});
  PyramidFeatures a = fuser.fuse_first_frame(curr);
  PyramidFeatures b = fuser.fuse(curr, curr);
  for (size_t i = 0; i < a.grids.size(); ++i)
    CHECK(a.grids[i].value().vec() == b.grids[i].value().vec());

  PyramidFeatures c = fuser.fuse_first_frame(curr);
  for (size_t i = 0; i < a.grids.size(); ++i)
    CHECK(a.grids[i].value().vec() == c.grids[i].value().vec());
}

TEST_CASE("fuse rejects mismatched geometry naming the level") {
  Rng rng(3);
  ParamSet ps;
  ResFuser fuser(8, {3, 4}, ps, rng);
  PyramidFeatures a = random_pyramid(8, rng, {3, 4}, 64);
  PyramidFeatures b = random_pyramid(8, rng, {3, 4}, 64);
  // Corrupt level 4's grid shape.
  Tensor wrong({8, 2, 2});
  b.grids[1] = Var::constant(wrong);
  CHECK_THROWS_WITH_AS(fuser.fuse(a, b), doctest::Contains("level 4"), ShapeError);
}

TEST_CASE("fuse matches a per-pixel linear-algebra oracle") {
  // Effective 1x1 kernels: only the kernel center is nonzero, so the fused
  // output at each pixel is W2 * relu(W1 * [prev|curr] + b1) + b2 + curr.
  Rng rng(4);
  ParamSet ps;
  int c = 3;
  ResFuser fuser(c, {3}, ps, rng);

  Tensor& w1 = ps.find("resfuser/level3/conv1/w")->mutable_value();
  Tensor& b1 = ps.find("resfuser/level3/conv1/b")->mutable_value();
  Tensor& w2 = ps.find("resfuser/level3/conv2/w")->mutable_value();
  Tensor& b2 = ps.find("resfuser/level3/conv2/b")->mutable_value();
  w1.zero();
  w2.zero();
  std::vector<std::vector<double>> m1(c, std::vector<double>(2 * c));
  std::vector<std::vector<double>> m2(c, std::vector<double>(c));
  for (int o = 0; o < c; ++o) {
    for (int i = 0; i < 2 * c; ++i) {
      m1[o][i] = rng.normal(0.0, 0.7);
      w1[((static_cast<int64_t>(o) * 2 * c + i) * 3 + 1) * 3 + 1] = m1[o][i];
    }
    for (int i = 0; i < c; ++i) {
      m2[o][i] = rng.normal(0.0, 0.7);
      w2[((static_cast<int64_t>(o) * c + i) * 3 + 1) * 3 + 1] = m2[o][i];
    }
    b1[o] = rng.normal();
    b2[o] = rng.normal();
  }

  PyramidFeatures prev = random_pyramid(c, rng, {3}, 32);
  PyramidFeatures curr = random_pyramid(c, rng, {3}, 32);
  PyramidFeatures out = fuser.fuse(prev, curr);

  int h = 32 / 8, w = 32 / 8;
  for (int r = 0; r < h; ++r)
    for (int col = 0; col < w; ++col) {
      std::vector<double> input(2 * c);
      for (int i = 0; i < c; ++i) {
        input[i] = prev.grids[0].value().at(i, r, col);
        input[c + i] = curr.grids[0].value().at(i, r, col);
      }
      std::vector<double> hid(c);
      for (int o = 0; o < c; ++o) {
        double acc = b1[o];
        for (int i = 0; i < 2 * c; ++i) acc += m1[o][i] * input[i];
        hid[o] = std::max(acc, 0.0);
      }
      for (int o = 0; o < c; ++o) {
        double acc = b2[o];
        for (int i = 0; i < c; ++i) acc += m2[o][i] * hid[i];
        double expect = acc + curr.grids[0].value().at(o, r, col);
        CHECK(std::abs(out.grids[0].value().at(o, r, col) - expect) < 1e-6);
      }
    }
}

TEST_CASE("fuse gradcheck") {
  Rng rng(5);
  ParamSet ps;
  ResFuser fuser(6, {3, 4}, ps, rng);
  // Activate the final layers.
  for (auto& [name, v] : ps.entries())
    for (int64_t i = 0; i < v.value().size(); ++i) v.mutable_value()[i] = rng.normal(0.0, 0.3);

  PyramidFeatures prev = random_pyramid(6, rng, {3, 4}, 32);
  PyramidFeatures curr = random_pyramid(6, rng, {3, 4}, 32);

  auto fn = [&]() {
    PyramidFeatures out = fuser.fuse(prev, curr);
    Var acc = Var::constant(Tensor::scalar(0.0));
    for (const Var& g : out.grids) acc = add(acc, mean(square(g)));
    return acc;
  };
  auto res = testing::gradcheck(fn, testing::all_params(ps), 30, rng);
  CHECK(res.max_rel_err < 1e-4);
}
