#include "vistrack/synthdata.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>

#include "json.hpp"
#include "vistrack/errors.hpp"
#include "vistrack/image_io.hpp"
#include "vistrack/rng.hpp"

namespace fs = std::filesystem;
using nlohmann::ordered_json;

namespace vistrack {

void ClipSpec::validate() const {
  if (num_frames < 2) throw ValidationError("ClipSpec.num_frames: must be >= 2");
  if (num_objects < 1) throw ValidationError("ClipSpec.num_objects: must be >= 1");
  if (height < 64) throw ValidationError("ClipSpec.height: must be >= 64");
  if (width < 64) throw ValidationError("ClipSpec.width: must be >= 64");
  if (category_set.empty()) throw ValidationError("ClipSpec.category_set: must be non-empty");
  for (int c : category_set)
    if (c < 1 || c > 4)
      throw ValidationError("ClipSpec.category_set: unknown category id " + std::to_string(c));
  if (occlusion_rate < 0.0 || occlusion_rate > 1.0)
    throw ValidationError("ClipSpec.occlusion_rate: must be in [0,1]");
}

std::vector<std::pair<int, std::string>> shape_categories() {
  return {{1, "circle"}, {2, "square"}, {3, "triangle"}, {4, "ellipse"}};
}

double analytic_shape_area(int category_id, double size) {
  switch (category_id) {
    case 1:  // circle, radius = size
      return M_PI * size * size;
    case 2: {  // square, half-side = 0.88 * size
      double half = 0.88 * size;
      return 4.0 * half * half;
    }
    case 3: {  // equilateral triangle, circumradius = 1.25 * size
      double r = 1.25 * size;
      return 3.0 * std::sqrt(3.0) / 4.0 * r * r;
    }
    case 4:  // ellipse, semi-axes 1.15 * size and 0.7 * size
      return M_PI * (1.15 * size) * (0.7 * size);
    default:
      throw ValidationError("unknown category id " + std::to_string(category_id));
  }
}

namespace {

struct ShapeObject {
  int track_id = 0;
  int category_id = 0;
  double size = 10.0;
  double rot = 0.0;  // static orientation
  double cx0 = 0.0, cy0 = 0.0;
  double vx = 0.0, vy = 0.0;
  std::array<double, 3> color = {1, 0, 0};
  double tex_amp = 0.0, tex_fx = 0.0, tex_fy = 0.0, tex_phase = 0.0;
  std::vector<double> jitter_x, jitter_y;
  bool scripted_reversal = false;
  int reverse_frame = 0;

  double center_x(int t) const {
    double base =
        scripted_reversal && t > reverse_frame ? cx0 + vx * (2 * reverse_frame - t) : cx0 + vx * t;
    return base + (t < static_cast<int>(jitter_x.size()) ? jitter_x[t] : 0.0);
  }
  double center_y(int t) const {
    double base =
        scripted_reversal && t > reverse_frame ? cy0 + vy * (2 * reverse_frame - t) : cy0 + vy * t;
    return base + (t < static_cast<int>(jitter_y.size()) ? jitter_y[t] : 0.0);
  }

  // Extent radius used for placement and overlap checks.
  double extent() const {
    switch (category_id) {
      case 1: return size;
      case 2: return 0.88 * size * std::sqrt(2.0);
      case 3: return 1.25 * size;
      case 4: return 1.15 * size;
      default: return size;
    }
  }

  bool contains(double px, double py, int t) const {
    double dx = px - center_x(t);
    double dy = py - center_y(t);
    double c = std::cos(-rot), s = std::sin(-rot);
    double lx = c * dx - s * dy;
    double ly = s * dx + c * dy;
    switch (category_id) {
      case 1:
        return lx * lx + ly * ly <= size * size;
      case 2: {
        double half = 0.88 * size;
        return std::abs(lx) <= half && std::abs(ly) <= half;
      }
      case 3: {
        // Equilateral triangle, apex up, circumradius 1.25*size.
        double r = 1.25 * size;
        double x1 = 0.0, y1 = -r;
        double x2 = r * std::sqrt(3.0) / 2.0, y2 = r / 2.0;
        double x3 = -x2, y3 = y2;
        auto side = [&](double ax, double ay, double bx, double by) {
          return (bx - ax) * (ly - ay) - (by - ay) * (lx - ax);
        };
        double d1 = side(x1, y1, x2, y2);
        double d2 = side(x2, y2, x3, y3);
        double d3 = side(x3, y3, x1, y1);
        bool has_neg = (d1 < 0) || (d2 < 0) || (d3 < 0);
        bool has_pos = (d1 > 0) || (d2 > 0) || (d3 > 0);
        return !(has_neg && has_pos);
      }
      case 4: {
        double a = 1.15 * size, b = 0.7 * size;
        double nx = lx / a, ny = ly / b;
        return nx * nx + ny * ny <= 1.0;
      }
      default:
        return false;
    }
  }
};

std::array<double, 3> hsv_to_rgb(double h, double s, double v) {
  h = std::fmod(std::fmod(h, 360.0) + 360.0, 360.0);
  double c = v * s;
  double x = c * (1.0 - std::abs(std::fmod(h / 60.0, 2.0) - 1.0));
  double m = v - c;
  double r = 0, g = 0, b = 0;
  if (h < 60) { r = c; g = x; }
  else if (h < 120) { r = x; g = c; }
  else if (h < 180) { g = c; b = x; }
  else if (h < 240) { g = x; b = c; }
  else if (h < 300) { r = x; b = c; }
  else { r = c; b = x; }
  return {r + m, g + m, b + m};
}

// Hue bands keyed by category keep the toy classification task well-posed.
std::array<double, 3> sample_color(int category_id, Rng& rng) {
  double hue_center = 0.0;
  switch (category_id) {
    case 1: hue_center = 0.0; break;    // reds
    case 2: hue_center = 120.0; break;  // greens
    case 3: hue_center = 225.0; break;  // blues
    case 4: hue_center = 50.0; break;   // yellows
  }
  double h = hue_center + rng.uniform(-18.0, 18.0);
  double s = rng.uniform(0.65, 1.0);
  double v = rng.uniform(0.7, 1.0);
  return hsv_to_rgb(h, s, v);
}

bool trajectories_disjoint(const std::vector<ShapeObject>& objs, int num_frames) {
  for (size_t a = 0; a < objs.size(); ++a)
    for (size_t b = a + 1; b < objs.size(); ++b) {
      double min_gap = objs[a].extent() + objs[b].extent() + 2.0;
      for (int t = 0; t < num_frames; ++t) {
        double dx = objs[a].center_x(t) - objs[b].center_x(t);
        double dy = objs[a].center_y(t) - objs[b].center_y(t);
        if (dx * dx + dy * dy < min_gap * min_gap) return false;
      }
    }
  return true;
}

void place_on_grid(std::vector<ShapeObject>& objs, int height, int width) {
  int n = static_cast<int>(objs.size());
  int cols = static_cast<int>(std::ceil(std::sqrt(static_cast<double>(n))));
  int rows = (n + cols - 1) / cols;
  double cw = static_cast<double>(width) / cols;
  double ch = static_cast<double>(height) / rows;
  for (int k = 0; k < n; ++k) {
    objs[k].cx0 = (k % cols + 0.5) * cw;
    objs[k].cy0 = (k / cols + 0.5) * ch;
    objs[k].vx = objs[k].vy = 0.0;
    double max_ext = 0.45 * std::min(cw, ch) - 1.0;
    if (objs[k].extent() > max_ext && max_ext > 4.0) {
      objs[k].size *= max_ext / objs[k].extent();
    }
  }
}

}  // namespace

MaskGrid GroundTruth::object_mask(int frame, int track_id) const {
  const IdGrid& ids = id_masks[frame];
  MaskGrid m(ids.height, ids.width);
  for (size_t i = 0; i < ids.data.size(); ++i)
    m.data[i] = ids.data[i] == static_cast<uint16_t>(track_id) ? 1 : 0;
  return m;
}

std::array<double, 4> GroundTruth::object_box(int frame, int track_id) const {
  const IdGrid& ids = id_masks[frame];
  int min_r = ids.height, max_r = -1, min_c = ids.width, max_c = -1;
  for (int r = 0; r < ids.height; ++r)
    for (int c = 0; c < ids.width; ++c)
      if (ids.at(r, c) == static_cast<uint16_t>(track_id)) {
        min_r = std::min(min_r, r);
        max_r = std::max(max_r, r);
        min_c = std::min(min_c, c);
        max_c = std::max(max_c, c);
      }
  if (max_r < 0) return {0, 0, 0, 0};
  return {static_cast<double>(min_c), static_cast<double>(min_r),
          static_cast<double>(max_c + 1), static_cast<double>(max_r + 1)};
}

std::pair<VideoClip, GroundTruth> generate_clip(const ClipSpec& spec) {
  spec.validate();
  Rng rng(spec.seed);
  int T = spec.num_frames, H = spec.height, W = spec.width;

  // Background: per-clip gradient plus a faint sinusoidal texture.
  double bg_base = rng.uniform(0.10, 0.18);
  double bg_gx = rng.uniform(-0.06, 0.06);
  double bg_gy = rng.uniform(-0.06, 0.06);
  double bg_phase = rng.uniform(0.0, 2.0 * M_PI);

  double min_side = std::min(H, W);
  std::vector<ShapeObject> objs(spec.num_objects);
  for (int k = 0; k < spec.num_objects; ++k) {
    ShapeObject& o = objs[k];
    o.track_id = k + 1;
    o.category_id = spec.category_set[rng.randint(0, static_cast<int>(spec.category_set.size()) - 1)];
    o.size = rng.uniform(0.09, 0.16) * min_side;
    o.rot = rng.uniform(0.0, 2.0 * M_PI);
    o.color = sample_color(o.category_id, rng);
    o.tex_amp = rng.uniform(0.03, 0.10);
    o.tex_fx = rng.uniform(0.15, 0.5);
    o.tex_fy = rng.uniform(0.15, 0.5);
    o.tex_phase = rng.uniform(0.0, 2.0 * M_PI);
  }

  auto sample_motion = [&](ShapeObject& o, double speed_scale) {
    double margin = o.extent() + 2.0;
    o.cx0 = rng.uniform(margin, W - margin);
    o.cy0 = rng.uniform(margin, H - margin);
    double speed = rng.uniform(0.8, 3.2) * speed_scale;
    double angle = rng.uniform(0.0, 2.0 * M_PI);
    o.vx = speed * std::cos(angle);
    o.vy = speed * std::sin(angle);
    // Keep the straight-line path inside the frame.
    double end_x = o.cx0 + o.vx * (T - 1);
    double end_y = o.cy0 + o.vy * (T - 1);
    if (end_x < margin) o.vx = (margin - o.cx0) / (T - 1);
    if (end_x > W - margin) o.vx = (W - margin - o.cx0) / (T - 1);
    if (end_y < margin) o.vy = (margin - o.cy0) / (T - 1);
    if (end_y > H - margin) o.vy = (H - margin - o.cy0) / (T - 1);
  };

  if (spec.occlusion_rate <= 0.0) {
    // Disjoint trajectories: reject and retry, then fall back to a grid.
    bool placed = false;
    for (int attempt = 0; attempt < 300 && !placed; ++attempt) {
      double scale = attempt < 150 ? 1.0 : 0.5;
      for (auto& o : objs) sample_motion(o, scale);
      placed = trajectories_disjoint(objs, T);
    }
    if (!placed) place_on_grid(objs, H, W);
  } else {
    for (auto& o : objs) sample_motion(o, 1.0);
    // Steer selected pairs toward a shared crossing point mid-clip.
    std::vector<bool> engaged(objs.size(), false);
    for (size_t a = 0; a < objs.size(); ++a)
      for (size_t b = a + 1; b < objs.size(); ++b) {
        if (engaged[a] || engaged[b]) continue;
        if (!rng.bernoulli(spec.occlusion_rate)) continue;
        int tc = static_cast<int>(rng.randint(T / 3, std::max(T / 3, 2 * T / 3)));
        tc = std::max(1, tc);
        double cx = rng.uniform(0.3 * W, 0.7 * W);
        double cy = rng.uniform(0.3 * H, 0.7 * H);
        objs[a].vx = (cx - objs[a].cx0) / tc;
        objs[a].vy = (cy - objs[a].cy0) / tc;
        objs[b].vx = (cx - objs[b].cx0) / tc;
        objs[b].vy = (cy - objs[b].cy0) / tc;
        engaged[a] = engaged[b] = true;
      }
  }

  if (spec.exit_reentry) {
    // Object 1 exits through the nearest vertical edge and returns by reversal.
    ShapeObject& o = objs[0];
    int t_out = std::max(1, static_cast<int>(std::round(0.35 * (T - 1))));
    int t_rev = std::max(t_out, (T - 2 + t_out) / 2);
    bool leftward = o.cx0 < W / 2.0;
    double target_x = leftward ? -(o.extent() + 4.0) : W + o.extent() + 4.0;
    o.vx = (target_x - o.cx0) / t_out;
    o.vy = rng.uniform(-0.8, 0.8);
    o.scripted_reversal = true;
    o.reverse_frame = t_rev;
  }

  if (spec.motion_model == MotionModel::kLinearPlusJitter) {
    for (auto& o : objs) {
      o.jitter_x.resize(T);
      o.jitter_y.resize(T);
      for (int t = 0; t < T; ++t) {
        o.jitter_x[t] = rng.uniform(-1.5, 1.5);
        o.jitter_y[t] = rng.uniform(-1.5, 1.5);
      }
    }
  }

  VideoClip clip;
  clip.clip_id = "clip";
  GroundTruth gt;
  gt.objects.resize(objs.size());
  for (size_t k = 0; k < objs.size(); ++k) {
    gt.objects[k].track_id = objs[k].track_id;
    gt.objects[k].category_id = objs[k].category_id;
    gt.objects[k].present.assign(T, false);
  }

  for (int t = 0; t < T; ++t) {
    Tensor frame({3, H, W});
    IdGrid ids(H, W);
    for (int r = 0; r < H; ++r)
      for (int c = 0; c < W; ++c) {
        double px = c + 0.5, py = r + 0.5;
        double bg = bg_base + bg_gx * (px / W) + bg_gy * (py / H) +
                    0.02 * std::sin(0.11 * px + 0.07 * py + bg_phase);
        frame.at(0, r, c) = bg;
        frame.at(1, r, c) = bg * 1.05;
        frame.at(2, r, c) = bg * 1.1;
        // Painter order: higher index first; object 0 ends up nearest.
        for (int k = static_cast<int>(objs.size()) - 1; k >= 0; --k) {
          const ShapeObject& o = objs[k];
          if (!o.contains(px, py, t)) continue;
          double tex = 1.0 + o.tex_amp * std::sin(o.tex_fx * px + o.tex_fy * py + o.tex_phase);
          frame.at(0, r, c) = std::clamp(o.color[0] * tex, 0.0, 1.0);
          frame.at(1, r, c) = std::clamp(o.color[1] * tex, 0.0, 1.0);
          frame.at(2, r, c) = std::clamp(o.color[2] * tex, 0.0, 1.0);
          ids.at(r, c) = static_cast<uint16_t>(o.track_id);
        }
      }
    clip.frames.push_back(quantize_frame(frame));
    for (size_t k = 0; k < objs.size(); ++k) {
      bool present = false;
      for (const auto& v : ids.data)
        if (v == objs[k].track_id) {
          present = true;
          break;
        }
      gt.objects[k].present[t] = present;
    }
    gt.id_masks.push_back(std::move(ids));
  }
  return {std::move(clip), std::move(gt)};
}

std::pair<std::vector<VideoClip>, std::vector<GroundTruth>> generate_corpus(
    const ClipSpec& base, int num_clips, int num_objects_min, int num_objects_max) {
  std::vector<VideoClip> clips;
  std::vector<GroundTruth> gts;
  for (int k = 0; k < num_clips; ++k) {
    ClipSpec spec = base;
    spec.seed = base.seed ^ static_cast<uint64_t>(k);
    if (num_objects_max > 0) {
      Rng pick(spec.seed ^ 0x9E3779B97F4A7C15ULL);
      spec.num_objects = static_cast<int>(pick.randint(num_objects_min, num_objects_max));
    }
    auto [clip, gt] = generate_clip(spec);
    char buf[32];
    std::snprintf(buf, sizeof(buf), "clip_%04d", k);
    clip.clip_id = buf;
    clips.push_back(std::move(clip));
    gts.push_back(std::move(gt));
  }
  return {std::move(clips), std::move(gts)};
}

// ---------------------------------------------------------------------------
// RLE

RleMask encode_rle(const MaskGrid& mask) {
  RleMask r;
  r.height = mask.height;
  r.width = mask.width;
  uint8_t current = 0;  // runs start with background
  int run = 0;
  for (uint8_t v : mask.data) {
    if (v == current) {
      ++run;
    } else {
      r.counts.push_back(run);
      current = v;
      run = 1;
    }
  }
  r.counts.push_back(run);
  return r;
}

MaskGrid decode_rle(const RleMask& r) {
  int64_t total = 0;
  for (int c : r.counts) {
    if (c < 0) throw FormatError("decode_rle: negative run length");
    total += c;
  }
  if (total != static_cast<int64_t>(r.height) * r.width)
    throw FormatError("decode_rle: counts sum to " + std::to_string(total) + ", expected " +
                      std::to_string(static_cast<int64_t>(r.height) * r.width));
  MaskGrid m(r.height, r.width);
  size_t pos = 0;
  uint8_t v = 0;
  for (int c : r.counts) {
    for (int i = 0; i < c; ++i) m.data[pos++] = v;
    v = 1 - v;
  }
  return m;
}

// ---------------------------------------------------------------------------
// Augmentation

namespace {

struct Affine {
  // Maps (x,y) to (a*x + b*y + c, d*x + e*y + f).
  double a = 1, b = 0, c = 0, d = 0, e = 1, f = 0;

  static Affine compose(const Affine& m2, const Affine& m1) {  // m2 after m1
    Affine r;
    r.a = m2.a * m1.a + m2.b * m1.d;
    r.b = m2.a * m1.b + m2.b * m1.e;
    r.c = m2.a * m1.c + m2.b * m1.f + m2.c;
    r.d = m2.d * m1.a + m2.e * m1.d;
    r.e = m2.d * m1.b + m2.e * m1.e;
    r.f = m2.d * m1.c + m2.e * m1.f + m2.f;
    return r;
  }

  Affine inverse() const {
    double det = a * e - b * d;
    Affine r;
    r.a = e / det;
    r.b = -b / det;
    r.d = -d / det;
    r.e = a / det;
    r.c = -(r.a * c + r.b * f);
    r.f = -(r.d * c + r.e * f);
    return r;
  }
};

double bilinear_clamped(const Tensor& img, int ch, double x, double y) {
  int h = img.dim(1), w = img.dim(2);
  double xc = std::clamp(x, 0.0, static_cast<double>(w - 1));
  double yc = std::clamp(y, 0.0, static_cast<double>(h - 1));
  int x0 = static_cast<int>(std::floor(xc));
  int y0 = static_cast<int>(std::floor(yc));
  int x1 = std::min(x0 + 1, w - 1);
  int y1 = std::min(y0 + 1, h - 1);
  double fx = xc - x0, fy = yc - y0;
  double top = img.at(ch, y0, x0) * (1 - fx) + img.at(ch, y0, x1) * fx;
  double bot = img.at(ch, y1, x0) * (1 - fx) + img.at(ch, y1, x1) * fx;
  return top * (1 - fy) + bot * fy;
}

}  // namespace

std::pair<VideoClip, GroundTruth> augment_pair(const Tensor& image, const GroundTruth& gt,
                                               const AffineBlurParams& params, uint64_t seed) {
  if (image.rank() != 3 || image.dim(0) != 3) throw ShapeError("augment_pair: expects [3,H,W]");
  if (gt.id_masks.size() != 1) throw ShapeError("augment_pair: ground truth must be single-frame");
  int h = image.dim(1), w = image.dim(2);
  if (gt.id_masks[0].height != h || gt.id_masks[0].width != w)
    throw ShapeError("augment_pair: mask size does not match image");

  Rng rng(seed);
  double rot = rng.uniform(params.rot_deg.lo, params.rot_deg.hi) * M_PI / 180.0;
  double tx = rng.uniform(params.translate_frac.lo, params.translate_frac.hi) * w;
  double ty = rng.uniform(params.translate_frac.lo, params.translate_frac.hi) * h;
  double scale = rng.uniform(params.scale.lo, params.scale.hi);
  double shear = rng.uniform(params.shear_deg.lo, params.shear_deg.hi) * M_PI / 180.0;

  double cx = (w - 1) / 2.0, cy = (h - 1) / 2.0;
  Affine to_center{1, 0, -cx, 0, 1, -cy};
  Affine scale_m{scale, 0, 0, 0, scale, 0};
  Affine shear_m{1, std::tan(shear), 0, 0, 1, 0};
  Affine rot_m{std::cos(rot), -std::sin(rot), 0, std::sin(rot), std::cos(rot), 0};
  Affine back{1, 0, cx + tx, 0, 1, cy + ty};
  Affine fwd = Affine::compose(back, Affine::compose(rot_m, Affine::compose(shear_m, Affine::compose(scale_m, to_center))));
  Affine inv = fwd.inverse();

  bool is_identity = rot == 0.0 && tx == 0.0 && ty == 0.0 && scale == 1.0 && shear == 0.0;

  Tensor warped({3, h, w});
  IdGrid warped_ids(h, w);
  const IdGrid& src_ids = gt.id_masks[0];
  for (int r = 0; r < h; ++r)
    for (int c = 0; c < w; ++c) {
      double sx = inv.a * c + inv.b * r + inv.c;
      double sy = inv.d * c + inv.e * r + inv.f;
      if (is_identity) {
        sx = c;
        sy = r;
      }
      for (int ch = 0; ch < 3; ++ch) warped.at(ch, r, c) = bilinear_clamped(image, ch, sx, sy);
      int nx = static_cast<int>(std::lround(sx));
      int ny = static_cast<int>(std::lround(sy));
      if (nx >= 0 && nx < w && ny >= 0 && ny < h) warped_ids.at(r, c) = src_ids.at(ny, nx);
    }

  // Motion blur along the translation direction, applied to the image only.
  int blur_len = static_cast<int>(rng.randint(params.blur_len_min, params.blur_len_max));
  if (blur_len > 1) {
    double angle = (std::abs(tx) + std::abs(ty)) > 1e-9 ? std::atan2(ty, tx) : 0.0;
    double dx = std::cos(angle), dy = std::sin(angle);
    Tensor blurred({3, h, w});
    for (int r = 0; r < h; ++r)
      for (int c = 0; c < w; ++c)
        for (int ch = 0; ch < 3; ++ch) {
          double acc = 0.0;
          for (int k = 0; k < blur_len; ++k) {
            double off = k - (blur_len - 1) / 2.0;
            acc += bilinear_clamped(warped, ch, c + off * dx, r + off * dy);
          }
          blurred.at(ch, r, c) = acc / blur_len;
        }
    warped = std::move(blurred);
  }

  VideoClip clip;
  clip.clip_id = "augmented_pair";
  clip.frames.push_back(image);
  clip.frames.push_back(std::move(warped));

  GroundTruth out;
  out.id_masks.push_back(src_ids);
  out.id_masks.push_back(std::move(warped_ids));
  out.objects = gt.objects;
  for (auto& obj : out.objects) {
    obj.present.resize(2);
    bool present1 = false;
    for (const auto& v : out.id_masks[1].data)
      if (v == obj.track_id) {
        present1 = true;
        break;
      }
    obj.present[1] = present1;
  }
  return {std::move(clip), std::move(out)};
}

// ---------------------------------------------------------------------------
// Dataset IO

Dataset::Dataset(std::string root, std::vector<std::pair<int, std::string>> categories,
                 std::vector<ClipInfo> clips)
    : root_(std::move(root)), categories_(std::move(categories)), clips_(std::move(clips)) {}

const ClipInfo* Dataset::find_clip(const std::string& clip_id) const {
  for (const auto& c : clips_)
    if (c.id == clip_id) return &c;
  return nullptr;
}

const std::pair<VideoClip, GroundTruth>& Dataset::load_clip(const std::string& clip_id) const {
  auto it = cache_.find(clip_id);
  if (it != cache_.end()) return *it->second;
  const ClipInfo* info = find_clip(clip_id);
  if (!info) throw ValidationError("unknown clip id: " + clip_id);

  auto loaded = std::make_shared<std::pair<VideoClip, GroundTruth>>();
  VideoClip& clip = loaded->first;
  GroundTruth& gt = loaded->second;
  clip.clip_id = clip_id;
  fs::path base = fs::path(root_) / "clips" / clip_id;
  for (int t = 0; t < info->num_frames; ++t) {
    char buf[16];
    std::snprintf(buf, sizeof(buf), "%05d.png", t);
    clip.frames.push_back(read_frame_png((base / "frames" / buf).string()));
    gt.id_masks.push_back(read_id_mask_png((base / "masks" / buf).string()));
  }
  gt.objects = info->objects;
  cache_[clip_id] = loaded;
  return *loaded;
}

void write_dataset(const std::vector<VideoClip>& clips, const std::vector<GroundTruth>& gts,
                   const std::string& root,
                   const std::vector<std::pair<int, std::string>>& categories) {
  if (clips.size() != gts.size())
    throw ValidationError("write_dataset: clip and ground-truth counts differ");
  fs::create_directories(root);

  ordered_json ann;
  ann["categories"] = ordered_json::array();
  for (const auto& [id, name] : categories) ann["categories"].push_back({{"id", id}, {"name", name}});
  ann["clips"] = ordered_json::array();

  for (size_t i = 0; i < clips.size(); ++i) {
    const VideoClip& clip = clips[i];
    const GroundTruth& gt = gts[i];
    fs::path base = fs::path(root) / "clips" / clip.clip_id;
    fs::create_directories(base / "frames");
    fs::create_directories(base / "masks");
    for (size_t t = 0; t < clip.frames.size(); ++t) {
      char buf[16];
      std::snprintf(buf, sizeof(buf), "%05d.png", static_cast<int>(t));
      write_frame_png((base / "frames" / buf).string(), clip.frames[t]);
      write_id_mask_png((base / "masks" / buf).string(), gt.id_masks[t]);
    }
    ordered_json jclip;
    jclip["id"] = clip.clip_id;
    jclip["num_frames"] = static_cast<int>(clip.frames.size());
    jclip["height"] = clip.frames.at(0).dim(1);
    jclip["width"] = clip.frames.at(0).dim(2);
    jclip["objects"] = ordered_json::array();
    for (const auto& obj : gt.objects) {
      ordered_json jobj;
      jobj["track_id"] = obj.track_id;
      jobj["category_id"] = obj.category_id;
      jobj["present"] = obj.present;
      jclip["objects"].push_back(jobj);
    }
    ann["clips"].push_back(jclip);
  }

  std::ofstream out(fs::path(root) / "annotations.json");
  out << ann.dump(2) << "\n";
}

Dataset read_dataset(const std::string& root) {
  fs::path ann_path = fs::path(root) / "annotations.json";
  if (!fs::exists(ann_path)) throw ValidationError("no annotations.json in " + root);

  ordered_json ann;
  {
    std::ifstream in(ann_path);
    try {
      in >> ann;
    } catch (const std::exception& e) {
      throw FormatError("annotations.json: parse error: " + std::string(e.what()));
    }
  }

  std::vector<std::pair<int, std::string>> categories;
  std::vector<ClipInfo> clips;
  try {
    for (const auto& jc : ann.at("categories"))
      categories.emplace_back(jc.at("id").get<int>(), jc.at("name").get<std::string>());
    for (const auto& jc : ann.at("clips")) {
      ClipInfo info;
      info.id = jc.at("id").get<std::string>();
      try {
        info.num_frames = jc.at("num_frames").get<int>();
        info.height = jc.at("height").get<int>();
        info.width = jc.at("width").get<int>();
        for (const auto& jo : jc.at("objects")) {
          ObjectTrack obj;
          obj.track_id = jo.at("track_id").get<int>();
          obj.category_id = jo.at("category_id").get<int>();
          for (const auto& p : jo.at("present")) obj.present.push_back(p.get<bool>());
          info.objects.push_back(std::move(obj));
        }
      } catch (const ordered_json::exception& e) {
        throw FormatError("annotations.json: clip '" + info.id + "': " + e.what());
      }
      clips.push_back(std::move(info));
    }
  } catch (const ordered_json::exception& e) {
    throw FormatError("annotations.json: " + std::string(e.what()));
  }

  for (const auto& info : clips) {
    if (!fs::exists(fs::path(root) / "clips" / info.id))
      throw FormatError("annotations.json references missing clip directory: " + info.id);
  }
  return Dataset(root, std::move(categories), std::move(clips));
}

}  // namespace vistrack
