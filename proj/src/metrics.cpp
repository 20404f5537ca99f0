#include "vistrack/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <set>

#include "json.hpp"
#include "vistrack/errors.hpp"

namespace vistrack {

std::vector<GtTrack> gt_tracks_for_clip(const GroundTruth& gt, const std::string& clip_id) {
  std::vector<GtTrack> tracks;
  for (const auto& obj : gt.objects) {
    GtTrack t;
    t.clip_id = clip_id;
    t.track_id = obj.track_id;
    t.category_id = obj.category_id;
    for (size_t f = 0; f < gt.id_masks.size(); ++f)
      t.masks.push_back(gt.object_mask(static_cast<int>(f), obj.track_id));
    tracks.push_back(std::move(t));
  }
  return tracks;
}

namespace {

std::vector<MaskGrid> dense_pred_masks(const PredictedTrack& p, int num_frames, int h, int w) {
  std::vector<MaskGrid> out(num_frames, MaskGrid(h, w));
  for (const auto& [frame, rle] : p.masks) {
    if (frame < 0 || frame >= num_frames)
      throw FormatError("prediction for clip " + p.clip_id + " references frame " +
                        std::to_string(frame) + " outside the clip");
    if (rle.height != h || rle.width != w)
      throw FormatError("prediction mask size mismatch in clip " + p.clip_id);
    out[frame] = decode_rle(rle);
  }
  return out;
}

int64_t mask_area(const MaskGrid& m) {
  int64_t a = 0;
  for (uint8_t v : m.data) a += v;
  return a;
}

// Per-frame IoU with the DAVIS convention: two empty masks agree perfectly.
double frame_iou(const MaskGrid& a, const MaskGrid& b) {
  int64_t inter = 0, uni = 0;
  for (size_t i = 0; i < a.data.size(); ++i) {
    bool av = a.data[i] != 0, bv = b.data[i] != 0;
    inter += (av && bv) ? 1 : 0;
    uni += (av || bv) ? 1 : 0;
  }
  if (uni == 0) return 1.0;
  return static_cast<double>(inter) / static_cast<double>(uni);
}

}  // namespace

double st_iou(const PredictedTrack& pred, const GtTrack& gt) {
  if (pred.clip_id != gt.clip_id)
    throw ValidationError("st_iou: clip mismatch " + pred.clip_id + " vs " + gt.clip_id);
  int num_frames = static_cast<int>(gt.masks.size());
  int h = gt.masks.at(0).height, w = gt.masks.at(0).width;
  std::vector<MaskGrid> pm = dense_pred_masks(pred, num_frames, h, w);
  int64_t inter = 0, uni = 0;
  for (int f = 0; f < num_frames; ++f) {
    for (size_t i = 0; i < pm[f].data.size(); ++i) {
      bool a = pm[f].data[i] != 0, b = gt.masks[f].data[i] != 0;
      inter += (a && b) ? 1 : 0;
      uni += (a || b) ? 1 : 0;
    }
  }
  return uni == 0 ? 0.0 : static_cast<double>(inter) / static_cast<double>(uni);
}

// ---------------------------------------------------------------------------
// Video AP

namespace {

constexpr int kNumIouThresholds = 10;

double threshold_at(int k) { return 0.5 + 0.05 * k; }

// Greedy score-ordered matching; returns per-pred matched gt index or -1.
std::vector<int> greedy_match(const std::vector<int>& pred_order,
                              const std::vector<std::vector<double>>& iou, int num_gt,
                              double tau) {
  std::vector<int> match(pred_order.size(), -1);
  std::vector<bool> gt_taken(num_gt, false);
  for (size_t oi = 0; oi < pred_order.size(); ++oi) {
    int p = pred_order[oi];
    double best = tau;
    int best_gt = -1;
    for (int g = 0; g < num_gt; ++g) {
      if (gt_taken[g]) continue;
      if (iou[p][g] >= best) {
        best = iou[p][g];
        best_gt = g;
      }
    }
    if (best_gt >= 0) {
      gt_taken[best_gt] = true;
      match[oi] = best_gt;
    }
  }
  return match;
}

double interpolated_ap(const std::vector<bool>& tp_in_order, int num_gt) {
  if (num_gt == 0) return 0.0;
  std::vector<double> precision, recall;
  int tp = 0;
  for (size_t i = 0; i < tp_in_order.size(); ++i) {
    if (tp_in_order[i]) ++tp;
    precision.push_back(static_cast<double>(tp) / static_cast<double>(i + 1));
    recall.push_back(static_cast<double>(tp) / num_gt);
  }
  double ap = 0;
  for (int k = 0; k <= 100; ++k) {
    double r = k / 100.0;
    double best = 0;
    for (size_t i = 0; i < precision.size(); ++i)
      if (recall[i] >= r) best = std::max(best, precision[i]);
    ap += best;
  }
  return ap / 101.0;
}

}  // namespace

ApMetrics video_ap(const std::vector<PredictedTrack>& preds, const std::vector<GtTrack>& gts,
                   const std::vector<int>& category_ids) {
  std::set<int> known(category_ids.begin(), category_ids.end());
  for (const auto& p : preds)
    if (!known.count(p.category_id))
      throw ValidationError("video_ap: unknown category id " + std::to_string(p.category_id) +
                            " in predictions");

  double ap_sum = 0, ap50_sum = 0, ap75_sum = 0, ar1_sum = 0, ar10_sum = 0;
  int counted_categories = 0;

  for (int cat : category_ids) {
    std::vector<int> gt_idx, pred_idx;
    for (size_t i = 0; i < gts.size(); ++i)
      if (gts[i].category_id == cat) gt_idx.push_back(static_cast<int>(i));
    if (gt_idx.empty()) continue;
    ++counted_categories;
    for (size_t i = 0; i < preds.size(); ++i)
      if (preds[i].category_id == cat) pred_idx.push_back(static_cast<int>(i));

    // Deterministic score ordering.
    std::sort(pred_idx.begin(), pred_idx.end(), [&](int a, int b) {
      if (preds[a].score != preds[b].score) return preds[a].score > preds[b].score;
      if (preds[a].clip_id != preds[b].clip_id) return preds[a].clip_id < preds[b].clip_id;
      return preds[a].track_id < preds[b].track_id;
    });

    // Pairwise spatio-temporal IoU, zero across clips.
    std::vector<std::vector<double>> iou(pred_idx.size(),
                                         std::vector<double>(gt_idx.size(), 0.0));
    for (size_t pi = 0; pi < pred_idx.size(); ++pi)
      for (size_t gi = 0; gi < gt_idx.size(); ++gi)
        if (preds[pred_idx[pi]].clip_id == gts[gt_idx[gi]].clip_id)
          iou[pi][gi] = st_iou(preds[pred_idx[pi]], gts[gt_idx[gi]]);

    std::vector<int> order(pred_idx.size());
    for (size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);

    for (int k = 0; k < kNumIouThresholds; ++k) {
      double tau = threshold_at(k);
      std::vector<int> match = greedy_match(order, iou, static_cast<int>(gt_idx.size()), tau);
      std::vector<bool> tp(match.size());
      for (size_t i = 0; i < match.size(); ++i) tp[i] = match[i] >= 0;
      double ap = interpolated_ap(tp, static_cast<int>(gt_idx.size()));
      ap_sum += ap;
      if (k == 0) ap50_sum += ap;
      if (k == 5) ap75_sum += ap;

      // Average recall with per-clip truncation.
      for (int max_k : {1, 10}) {
        std::map<std::string, int> per_clip;
        std::vector<int> truncated;
        for (int oi : order) {
          const std::string& cid = preds[pred_idx[oi]].clip_id;
          if (per_clip[cid] < max_k) {
            ++per_clip[cid];
            truncated.push_back(oi);
          }
        }
        std::vector<int> m = greedy_match(truncated, iou, static_cast<int>(gt_idx.size()), tau);
        int matched = 0;
        for (int v : m)
          if (v >= 0) ++matched;
        double recall = static_cast<double>(matched) / static_cast<double>(gt_idx.size());
        (max_k == 1 ? ar1_sum : ar10_sum) += recall;
      }
    }
  }

  ApMetrics out;
  if (counted_categories > 0) {
    out.ap = ap_sum / (counted_categories * kNumIouThresholds);
    out.ap50 = ap50_sum / counted_categories;
    out.ap75 = ap75_sum / counted_categories;
    out.ar1 = ar1_sum / (counted_categories * kNumIouThresholds);
    out.ar10 = ar10_sum / (counted_categories * kNumIouThresholds);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Hungarian assignment (maximization, rectangular)

std::vector<int> optimal_assignment(const std::vector<std::vector<double>>& score) {
  int n = static_cast<int>(score.size());
  if (n == 0) return {};
  int m = static_cast<int>(score[0].size());
  int size = std::max(n, m);

  // Minimize negated scores on a padded square matrix.
  std::vector<std::vector<double>> a(size + 1, std::vector<double>(size + 1, 0.0));
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < m; ++j) a[i + 1][j + 1] = -score[i][j];

  const double inf = std::numeric_limits<double>::infinity();
  std::vector<double> u(size + 1, 0), v(size + 1, 0);
  std::vector<int> p(size + 1, 0), way(size + 1, 0);
  for (int i = 1; i <= size; ++i) {
    p[0] = i;
    int j0 = 0;
    std::vector<double> minv(size + 1, inf);
    std::vector<bool> used(size + 1, false);
    do {
      used[j0] = true;
      int i0 = p[j0], j1 = 0;
      double delta = inf;
      for (int j = 1; j <= size; ++j) {
        if (used[j]) continue;
        double cur = a[i0][j] - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (int j = 0; j <= size; ++j) {
        if (used[j]) {
          u[p[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (p[j0] != 0);
    do {
      int j1 = way[j0];
      p[j0] = p[j1];
      j0 = j1;
    } while (j0);
  }

  std::vector<int> result(n, -1);
  for (int j = 1; j <= size; ++j) {
    int i = p[j];
    if (i >= 1 && i <= n && j <= m) result[i - 1] = j - 1;
  }
  return result;
}

// ---------------------------------------------------------------------------
// DAVIS J & F

namespace detail {

MaskGrid boundary_pixels(const MaskGrid& mask) {
  MaskGrid b(mask.height, mask.width);
  for (int r = 0; r < mask.height; ++r)
    for (int c = 0; c < mask.width; ++c) {
      if (!mask.at(r, c)) continue;
      bool edge = false;
      for (int dr = -1; dr <= 1 && !edge; ++dr)
        for (int dc = -1; dc <= 1 && !edge; ++dc) {
          if (dr == 0 && dc == 0) continue;
          int nr = r + dr, nc = c + dc;
          if (nr < 0 || nr >= mask.height || nc < 0 || nc >= mask.width || !mask.at(nr, nc))
            edge = true;
        }
      if (edge) b.at(r, c) = 1;
    }
  return b;
}

namespace {

MaskGrid dilate(const MaskGrid& m, double tolerance) {
  int rad = static_cast<int>(std::floor(tolerance));
  std::vector<std::pair<int, int>> offsets;
  for (int dr = -rad; dr <= rad; ++dr)
    for (int dc = -rad; dc <= rad; ++dc)
      if (dr * dr + dc * dc <= tolerance * tolerance) offsets.emplace_back(dr, dc);
  MaskGrid out(m.height, m.width);
  for (int r = 0; r < m.height; ++r)
    for (int c = 0; c < m.width; ++c) {
      if (!m.at(r, c)) continue;
      for (auto [dr, dc] : offsets) {
        int nr = r + dr, nc = c + dc;
        if (nr >= 0 && nr < m.height && nc >= 0 && nc < m.width) out.at(nr, nc) = 1;
      }
    }
  return out;
}

}  // namespace

double boundary_f_score(const MaskGrid& pred, const MaskGrid& gt, double tolerance) {
  MaskGrid pb = boundary_pixels(pred);
  MaskGrid gb = boundary_pixels(gt);
  int64_t np = mask_area(pb), ng = mask_area(gb);
  if (np == 0 && ng == 0) return 1.0;
  if (np == 0 || ng == 0) return 0.0;

  MaskGrid gb_dilated = dilate(gb, tolerance);
  MaskGrid pb_dilated = dilate(pb, tolerance);
  int64_t match_p = 0, match_g = 0;
  for (size_t i = 0; i < pb.data.size(); ++i) {
    if (pb.data[i] && gb_dilated.data[i]) ++match_p;
    if (gb.data[i] && pb_dilated.data[i]) ++match_g;
  }
  double precision = static_cast<double>(match_p) / np;
  double recall = static_cast<double>(match_g) / ng;
  if (precision + recall == 0.0) return 0.0;
  return 2.0 * precision * recall / (precision + recall);
}

}  // namespace detail

namespace {

// Correspondence by highest mean per-frame IoU; returns per-gt matched pred
// index (-1 when unmatched), shared by J and F.
std::vector<int> correspondence(const std::vector<std::vector<MaskGrid>>& pred_masks,
                                const std::vector<GtTrack>& gts) {
  int num_frames = gts.empty() ? 0 : static_cast<int>(gts[0].masks.size());
  std::vector<std::vector<double>> score(gts.size(),
                                         std::vector<double>(pred_masks.size(), 0.0));
  for (size_t g = 0; g < gts.size(); ++g)
    for (size_t p = 0; p < pred_masks.size(); ++p) {
      double acc = 0;
      for (int f = 0; f < num_frames; ++f) acc += frame_iou(pred_masks[p][f], gts[g].masks[f]);
      score[g][p] = acc / std::max(1, num_frames);
    }
  if (pred_masks.empty()) return std::vector<int>(gts.size(), -1);
  return optimal_assignment(score);
}

struct PerObjectSeries {
  std::vector<std::vector<double>> values;  // per object, per frame
};

RegionMetrics summarize_series(const PerObjectSeries& series) {
  RegionMetrics out;
  if (series.values.empty()) return out;
  int count = 0;
  double mean_sum = 0, recall_sum = 0, decay_sum = 0;
  for (const auto& vals : series.values) {
    int n = static_cast<int>(vals.size());
    if (n == 0) continue;
    double m = 0;
    for (double v : vals) m += v;
    m /= n;
    mean_sum += m;
    recall_sum += (m > 0.5) ? 1.0 : 0.0;
    double d;
    if (n < 4) {
      d = vals.front() - vals.back();
    } else {
      // Four temporal quartiles; decay is Q1 mean minus Q4 mean.
      int b1 = static_cast<int>(std::round(n / 4.0));
      int b3 = static_cast<int>(std::round(3.0 * n / 4.0));
      b1 = std::max(1, b1);
      b3 = std::min(n - 1, b3);
      double q1 = 0, q4 = 0;
      for (int i = 0; i < b1; ++i) q1 += vals[i];
      q1 /= b1;
      for (int i = b3; i < n; ++i) q4 += vals[i];
      q4 /= (n - b3);
      d = q1 - q4;
    }
    decay_sum += d;
    ++count;
  }
  if (count == 0) return out;
  out.mean = mean_sum / count;
  out.recall = recall_sum / count;
  out.decay = decay_sum / count;
  return out;
}

PerObjectSeries j_series(const std::vector<PredictedTrack>& preds,
                         const std::vector<GtTrack>& gts) {
  PerObjectSeries series;
  if (gts.empty()) return series;
  int num_frames = static_cast<int>(gts[0].masks.size());
  int h = gts[0].masks[0].height, w = gts[0].masks[0].width;
  std::vector<std::vector<MaskGrid>> pm;
  for (const auto& p : preds) pm.push_back(dense_pred_masks(p, num_frames, h, w));
  std::vector<int> match = correspondence(pm, gts);

  MaskGrid empty(h, w);
  for (size_t g = 0; g < gts.size(); ++g) {
    std::vector<double> vals(num_frames);
    for (int f = 0; f < num_frames; ++f) {
      const MaskGrid& pmask = match[g] >= 0 ? pm[match[g]][f] : empty;
      vals[f] = frame_iou(pmask, gts[g].masks[f]);
    }
    series.values.push_back(std::move(vals));
  }
  return series;
}

PerObjectSeries f_series(const std::vector<PredictedTrack>& preds,
                         const std::vector<GtTrack>& gts) {
  PerObjectSeries series;
  if (gts.empty()) return series;
  int num_frames = static_cast<int>(gts[0].masks.size());
  int h = gts[0].masks[0].height, w = gts[0].masks[0].width;
  double tolerance = 0.008 * std::sqrt(static_cast<double>(h) * h + static_cast<double>(w) * w);
  std::vector<std::vector<MaskGrid>> pm;
  for (const auto& p : preds) pm.push_back(dense_pred_masks(p, num_frames, h, w));
  std::vector<int> match = correspondence(pm, gts);

  MaskGrid empty(h, w);
  for (size_t g = 0; g < gts.size(); ++g) {
    std::vector<double> vals(num_frames);
    for (int f = 0; f < num_frames; ++f) {
      const MaskGrid& pmask = match[g] >= 0 ? pm[match[g]][f] : empty;
      vals[f] = detail::boundary_f_score(pmask, gts[g].masks[f], tolerance);
    }
    series.values.push_back(std::move(vals));
  }
  return series;
}

}  // namespace

RegionMetrics j_measure(const std::vector<PredictedTrack>& preds,
                        const std::vector<GtTrack>& gts) {
  return summarize_series(j_series(preds, gts));
}

RegionMetrics f_measure(const std::vector<PredictedTrack>& preds,
                        const std::vector<GtTrack>& gts) {
  return summarize_series(f_series(preds, gts));
}

// ---------------------------------------------------------------------------
// Dataset-level evaluation

namespace {

void check_known_clips(const std::vector<PredictedTrack>& preds, const Dataset& dataset) {
  std::set<std::string> missing;
  for (const auto& p : preds)
    if (!dataset.find_clip(p.clip_id)) missing.insert(p.clip_id);
  if (!missing.empty()) {
    std::string ids;
    for (const auto& id : missing) ids += (ids.empty() ? "" : ", ") + id;
    throw ValidationError("predictions reference unknown clips: " + ids);
  }
}

}  // namespace

EvalReport evaluate_vis(const std::vector<PredictedTrack>& preds, const Dataset& dataset) {
  if (dataset.clips().empty()) throw ValidationError("no clips in dataset");
  check_known_clips(preds, dataset);

  std::vector<GtTrack> gts;
  for (const auto& info : dataset.clips()) {
    const auto& [clip, gt] = dataset.load_clip(info.id);
    std::vector<GtTrack> t = gt_tracks_for_clip(gt, info.id);
    gts.insert(gts.end(), t.begin(), t.end());
  }
  std::vector<int> cats;
  for (const auto& [id, name] : dataset.categories()) cats.push_back(id);

  ApMetrics ap = video_ap(preds, gts, cats);
  EvalReport report;
  report.ap = ap.ap;
  report.ap50 = ap.ap50;
  report.ap75 = ap.ap75;
  report.ar1 = ap.ar1;
  report.ar10 = ap.ar10;
  return report;
}

EvalReport evaluate_uvos(const std::vector<PredictedTrack>& preds, const Dataset& dataset) {
  if (dataset.clips().empty()) throw ValidationError("no clips in dataset");
  check_known_clips(preds, dataset);

  PerObjectSeries all_j, all_f;
  for (const auto& info : dataset.clips()) {
    const auto& [clip, gt] = dataset.load_clip(info.id);
    std::vector<GtTrack> gts = gt_tracks_for_clip(gt, info.id);
    std::vector<PredictedTrack> clip_preds;
    for (const auto& p : preds)
      if (p.clip_id == info.id) clip_preds.push_back(p);
    PerObjectSeries j = j_series(clip_preds, gts);
    PerObjectSeries f = f_series(clip_preds, gts);
    all_j.values.insert(all_j.values.end(), j.values.begin(), j.values.end());
    all_f.values.insert(all_f.values.end(), f.values.begin(), f.values.end());
  }

  RegionMetrics j = summarize_series(all_j);
  RegionMetrics f = summarize_series(all_f);
  EvalReport report;
  report.j_mean = j.mean;
  report.j_recall = j.recall;
  report.j_decay = j.decay;
  report.f_mean = f.mean;
  report.f_recall = f.recall;
  report.f_decay = f.decay;
  report.jf_mean = (j.mean + f.mean) / 2.0;
  return report;
}

void write_report(const std::string& path, const EvalReport& r) {
  nlohmann::ordered_json j;
  j["AP"] = r.ap;
  j["AP50"] = r.ap50;
  j["AP75"] = r.ap75;
  j["AR1"] = r.ar1;
  j["AR10"] = r.ar10;
  j["J_mean"] = r.j_mean;
  j["J_recall"] = r.j_recall;
  j["J_decay"] = r.j_decay;
  j["F_mean"] = r.f_mean;
  j["F_recall"] = r.f_recall;
  j["F_decay"] = r.f_decay;
  j["JF_mean"] = r.jf_mean;
  std::ofstream out(path);
  if (!out) throw FormatError("cannot write report: " + path);
  out << j.dump(2) << "\n";
}

int count_id_switches(const std::vector<PredictedTrack>& preds, const GroundTruth& gt,
                      const std::string& clip_id, double iou_threshold) {
  int num_frames = static_cast<int>(gt.id_masks.size());
  if (num_frames == 0) return 0;
  int h = gt.id_masks[0].height, w = gt.id_masks[0].width;

  std::vector<std::vector<MaskGrid>> pm;
  std::vector<int> pred_ids;
  for (const auto& p : preds) {
    if (p.clip_id != clip_id) continue;
    pm.push_back(dense_pred_masks(p, num_frames, h, w));
    pred_ids.push_back(p.track_id);
  }

  int switches = 0;
  for (const auto& obj : gt.objects) {
    int last_cover = -1;
    for (int f = 0; f < num_frames; ++f) {
      if (!obj.present[f]) continue;
      MaskGrid gmask = gt.object_mask(f, obj.track_id);
      double best = iou_threshold;
      int cover = -1;
      for (size_t p = 0; p < pm.size(); ++p) {
        double iou = frame_iou(pm[p][f], gmask);
        // frame_iou returns 1 for empty-vs-empty; gmask is non-empty here.
        if (iou >= best) {
          best = iou;
          cover = pred_ids[p];
        }
      }
      if (cover >= 0) {
        if (last_cover >= 0 && cover != last_cover) ++switches;
        last_cover = cover;
      }
    }
  }
  return switches;
}

}  // namespace vistrack
