#include "polydeform/metrics/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>

#include "polydeform/error.hpp"
#include "polydeform/geometry/morphology.hpp"

namespace polydeform::metrics {
namespace {

void require_same_size(const BinaryMask& a, const BinaryMask& b, const char* op) {
  if (a.height() != b.height() || a.width() != b.width()) {
    throw ShapeError(std::string(op) + ": mask sizes differ (" + std::to_string(a.height()) + "x" +
                     std::to_string(a.width()) + " vs " + std::to_string(b.height()) + "x" +
                     std::to_string(b.width()) + ")");
  }
}

/// Fraction of `from` boundary pixels within threshold of `to` boundary.
double matched_fraction(const BinaryMask& from, const std::vector<double>& dist2_to, double threshold) {
  const auto d = from.data();
  std::size_t total = 0, hit = 0;
  const double t2 = threshold * threshold;
  for (std::size_t i = 0; i < d.size(); ++i) {
    if (!d[i]) continue;
    ++total;
    if (dist2_to[i] <= t2) ++hit;
  }
  return total == 0 ? 0.0 : static_cast<double>(hit) / static_cast<double>(total);
}

std::vector<int> class_list(const std::vector<Detection>& dets, const std::vector<GroundTruth>& gts) {
  std::set<int> s;
  for (const auto& d : dets) s.insert(d.label);
  for (const auto& g : gts) s.insert(g.label);
  return {s.begin(), s.end()};
}

/// Detection indices of one class, by descending score then input order.
std::vector<std::size_t> ranked(const std::vector<Detection>& dets, int label) {
  std::vector<std::size_t> idx;
  for (std::size_t i = 0; i < dets.size(); ++i) {
    if (dets[i].label == label) idx.push_back(i);
  }
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return dets[a].score > dets[b].score; });
  return idx;
}

struct ClassMatches {
  std::vector<std::size_t> order;                // ranked detections
  std::vector<std::vector<long>> matched_gt;     // [threshold][rank] -> gt index or -1
  std::size_t gt_count = 0;
};

ClassMatches match_class(const std::vector<Detection>& dets, const std::vector<GroundTruth>& gts, int label,
                         const std::vector<double>& thresholds) {
  ClassMatches m;
  m.order = ranked(dets, label);
  std::vector<std::size_t> gt_idx;
  for (std::size_t j = 0; j < gts.size(); ++j) {
    if (gts[j].label == label) gt_idx.push_back(j);
  }
  m.gt_count = gt_idx.size();

  // IoU of every ranked detection against every same-image GT of the class.
  std::vector<std::vector<double>> iou(m.order.size(), std::vector<double>(gt_idx.size(), -1.0));
  for (std::size_t r = 0; r < m.order.size(); ++r) {
    const auto& d = dets[m.order[r]];
    for (std::size_t k = 0; k < gt_idx.size(); ++k) {
      if (gts[gt_idx[k]].image == d.image) iou[r][k] = mask_iou(d.mask, gts[gt_idx[k]].mask);
    }
  }
  for (double thr : thresholds) {
    std::vector<bool> used(gt_idx.size(), false);
    std::vector<long> assign(m.order.size(), -1);
    for (std::size_t r = 0; r < m.order.size(); ++r) {
      long best = -1;
      double best_iou = thr;
      for (std::size_t k = 0; k < gt_idx.size(); ++k) {
        if (used[k] || iou[r][k] < best_iou) continue;
        if (best < 0 || iou[r][k] > best_iou) {
          best = static_cast<long>(k);
          best_iou = iou[r][k];
        }
      }
      if (best >= 0) {
        used[static_cast<std::size_t>(best)] = true;
        assign[r] = static_cast<long>(gt_idx[static_cast<std::size_t>(best)]);
      }
    }
    m.matched_gt.push_back(std::move(assign));
  }
  return m;
}

double interpolated_ap(const std::vector<long>& assign, std::size_t gt_count) {
  if (gt_count == 0) return 0.0;
  const std::size_t n = assign.size();
  std::vector<double> precision(n), recall(n);
  std::size_t tp = 0;
  for (std::size_t r = 0; r < n; ++r) {
    if (assign[r] >= 0) ++tp;
    precision[r] = static_cast<double>(tp) / static_cast<double>(r + 1);
    recall[r] = static_cast<double>(tp) / static_cast<double>(gt_count);
  }
  for (std::size_t r = n; r-- > 1;) precision[r - 1] = std::max(precision[r - 1], precision[r]);
  double ap = 0.0, prev_recall = 0.0;
  for (std::size_t r = 0; r < n; ++r) {
    ap += (recall[r] - prev_recall) * precision[r];
    prev_recall = recall[r];
  }
  return ap;
}

}  // namespace

double mask_iou(const BinaryMask& a, const BinaryMask& b) {
  require_same_size(a, b, "mask_iou");
  const auto da = a.data(), db = b.data();
  std::size_t inter = 0, uni = 0;
  for (std::size_t i = 0; i < da.size(); ++i) {
    inter += (da[i] & db[i]);
    uni += (da[i] | db[i]);
  }
  return uni == 0 ? 1.0 : static_cast<double>(inter) / static_cast<double>(uni);
}

BoundaryScore boundary_score(const BinaryMask& pred, const BinaryMask& gt, double threshold) {
  require_same_size(pred, gt, "boundary_f");
  if (!(threshold >= 0)) throw ContractError("boundary_f: threshold must be >= 0");
  const auto bp = geometry::boundary_pixels(pred);
  const auto bg = geometry::boundary_pixels(gt);
  const bool ep = bp.empty(), eg = bg.empty();
  if (ep && eg) return {1.0, 1.0, 1.0};
  if (ep || eg) return {0.0, 0.0, 0.0};
  BoundaryScore s;
  s.precision = matched_fraction(bp, geometry::squared_distance_transform(bg), threshold);
  s.recall = matched_fraction(bg, geometry::squared_distance_transform(bp), threshold);
  s.f = (s.precision + s.recall) > 0 ? 2 * s.precision * s.recall / (s.precision + s.recall) : 0.0;
  return s;
}

double boundary_f(const BinaryMask& pred, const BinaryMask& gt, double threshold) {
  return boundary_score(pred, gt, threshold).f;
}

std::vector<double> default_iou_thresholds() {
  std::vector<double> t;
  for (int i = 0; i < 10; ++i) t.push_back(0.5 + 0.05 * i);
  return t;
}

std::vector<std::vector<std::pair<std::size_t, std::size_t>>> match_detections(
    const std::vector<Detection>& dets, const std::vector<GroundTruth>& gts,
    const std::vector<double>& iou_thresholds) {
  std::vector<std::vector<std::pair<std::size_t, std::size_t>>> out(iou_thresholds.size());
  for (int label : class_list(dets, gts)) {
    const auto m = match_class(dets, gts, label, iou_thresholds);
    for (std::size_t t = 0; t < iou_thresholds.size(); ++t) {
      for (std::size_t r = 0; r < m.order.size(); ++r) {
        if (m.matched_gt[t][r] >= 0) out[t].emplace_back(m.order[r], static_cast<std::size_t>(m.matched_gt[t][r]));
      }
    }
  }
  return out;
}

APResult average_precision(const std::vector<Detection>& dets, const std::vector<GroundTruth>& gts,
                           const std::vector<double>& iou_thresholds) {
  if (iou_thresholds.empty()) throw ContractError("average_precision: no IoU thresholds");
  APResult res;
  const auto classes = class_list(dets, gts);
  if (classes.empty()) return res;
  for (int label : classes) {
    const auto m = match_class(dets, gts, label, iou_thresholds);
    if (m.gt_count == 0) res.flagged_classes.push_back(label);
    double sum = 0.0;
    for (std::size_t t = 0; t < iou_thresholds.size(); ++t) sum += interpolated_ap(m.matched_gt[t], m.gt_count);
    res.per_class[label] = sum / static_cast<double>(iou_thresholds.size());
    const auto at50 = match_class(dets, gts, label, {0.5});
    res.per_class_ap50[label] = interpolated_ap(at50.matched_gt[0], at50.gt_count);
  }
  for (const auto& [_, v] : res.per_class) res.ap += v;
  for (const auto& [_, v] : res.per_class_ap50) res.ap50 += v;
  res.ap /= static_cast<double>(classes.size());
  res.ap50 /= static_cast<double>(classes.size());
  return res;
}

AFResult average_f(const std::vector<Detection>& dets, const std::vector<GroundTruth>& gts,
                   const std::vector<double>& iou_thresholds, double threshold_px) {
  if (iou_thresholds.empty()) throw ContractError("average_f: no IoU thresholds");
  AFResult res;
  std::map<std::pair<std::size_t, std::size_t>, double> cache;
  for (int label : class_list(dets, gts)) {
    const auto m = match_class(dets, gts, label, iou_thresholds);
    double sum = 0.0;
    std::size_t pairs = 0;
    for (std::size_t t = 0; t < iou_thresholds.size(); ++t) {
      for (std::size_t r = 0; r < m.order.size(); ++r) {
        if (m.matched_gt[t][r] < 0) continue;
        const auto key = std::make_pair(m.order[r], static_cast<std::size_t>(m.matched_gt[t][r]));
        auto it = cache.find(key);
        if (it == cache.end()) {
          it = cache.emplace(key, boundary_f(dets[key.first].mask, gts[key.second].mask, threshold_px)).first;
        }
        sum += it->second;
        ++pairs;
      }
    }
    if (pairs > 0) res.per_class[label] = sum / static_cast<double>(pairs);
    res.true_positive_pairs += pairs;
  }
  if (res.per_class.empty()) {
    res.undefined = true;
    return res;
  }
  for (const auto& [_, v] : res.per_class) res.af += v;
  res.af /= static_cast<double>(res.per_class.size());
  return res;
}

}  // namespace polydeform::metrics
