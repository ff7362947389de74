#pragma once

#include <map>
#include <vector>

#include <nlohmann/json.hpp>

#include "polydeform/geometry/types.hpp"

namespace polydeform::metrics {

using geometry::BinaryMask;

/// |a & b| / |a | b|; 1 when both are empty. Throws ShapeError on a size
/// mismatch.
double mask_iou(const BinaryMask& a, const BinaryMask& b);

struct BoundaryScore {
  double precision = 0.0;
  double recall = 0.0;
  double f = 0.0;
};

/// Boundary pixels are foreground pixels 4-adjacent to background. A
/// boundary pixel counts as matched when the Euclidean distance to the other
/// mask's boundary is <= threshold.
BoundaryScore boundary_score(const BinaryMask& pred, const BinaryMask& gt, double threshold);
double boundary_f(const BinaryMask& pred, const BinaryMask& gt, double threshold);

struct Detection {
  int image = 0;
  int label = 0;
  double score = 1.0;
  BinaryMask mask{1, 1};
};

struct GroundTruth {
  int image = 0;
  int label = 0;
  BinaryMask mask{1, 1};
};

/// 0.50, 0.55, ..., 0.95
std::vector<double> default_iou_thresholds();

struct APResult {
  double ap = 0.0;
  double ap50 = 0.0;
  std::map<int, double> per_class;
  std::map<int, double> per_class_ap50;
  /// Classes with detections but no ground truth.
  std::vector<int> flagged_classes;
};

/// Per class and threshold, detections are matched greedily in descending
/// score order (ties by input order) to the unmatched ground truth of the same
/// image with the highest IoU >= threshold. AP is the area under the
/// interpolated precision-recall curve, averaged over thresholds, then
/// classes. AP50 uses the 0.5 threshold alone.
APResult average_precision(const std::vector<Detection>& dets, const std::vector<GroundTruth>& gts,
                           const std::vector<double>& iou_thresholds = default_iou_thresholds());

struct AFResult {
  double af = 0.0;
  std::map<int, double> per_class;
  std::size_t true_positive_pairs = 0;
  /// Set when no true positive exists at any threshold.
  bool undefined = false;
};

/// Mean boundary F over every (true-positive match, IoU threshold) pair of a
/// class, then over classes with at least one true positive.
AFResult average_f(const std::vector<Detection>& dets, const std::vector<GroundTruth>& gts,
                   const std::vector<double>& iou_thresholds = default_iou_thresholds(),
                   double threshold_px = 1.0);

/// Matched pairs per threshold, exposed for reporting and tests:
/// result[t] lists (detection index, ground-truth index).
std::vector<std::vector<std::pair<std::size_t, std::size_t>>> match_detections(
    const std::vector<Detection>& dets, const std::vector<GroundTruth>& gts,
    const std::vector<double>& iou_thresholds);

}  // namespace polydeform::metrics
