#pragma once

#include <functional>
#include <iosfwd>
#include <string>
#include <vector>

#include "coopdet/rpn.hpp"
#include "coopdet/scenegen.hpp"
#include "coopdet/types.hpp"

namespace coopdet {

struct GroundTruth {
  Box3D box;
  ObjectClass cls = ObjectClass::Car;
  DifficultyTag difficulty;
};

// Greedy assignment of one frame's detections to ground truth of one class:
// predictions in descending score order each take the unmatched same-class
// truth with the highest volumetric IoU at or above iou_threshold.
struct MatchResult {
  std::vector<int> order;        // prediction indices, descending score
  std::vector<bool> tp;          // parallel to order
  std::vector<int> matched_gt;   // gt index or -1, parallel to order
  std::vector<bool> gt_matched;  // parallel to the gt list
  double iou_threshold = 0.7;
  double score_threshold = 0.0;
};

MatchResult match_detections(const std::vector<Detection>& detections,
                             const std::vector<GroundTruth>& gts, ObjectClass cls,
                             double iou_threshold = 0.7,
                             double score_threshold = 0.0);

// Cumulative precision/recall, one point per admitted prediction.
struct PRCurve {
  std::vector<double> recall;
  std::vector<double> precision;
};

// All-point interpolated area: sum over points of the best precision at any
// recall >= r_k, times the recall step from r_{k-1} (r_0 = 0).
double average_precision(const PRCurve& curve);

// Mean over the per-class values (they must all be finite).
double mean_ap(const std::vector<double>& per_class);

// Accuracy improvement per megabyte of exchanged content: mAP values in
// percentage points, bandwidth in bytes per frame.
double aib(double map_policy, double map_baseline, uint64_t bytes_per_frame);

// ---- multi-frame aggregation ----

struct FrameSample {
  std::vector<Detection> detections;
  std::vector<GroundTruth> gts;
};

using DifficultyPredicate = std::function<bool(const DifficultyTag&)>;

struct BucketResult {
  double ap = 0.0;
  int num_gt = 0;
  bool defined = false;  // false when the bucket holds no ground truth
};

// AP of one class over many frames restricted to a difficulty bucket.
// Matching runs against all same-class truths so a prediction that latched
// onto an out-of-bucket object is set aside rather than counted as a false
// positive; unmatched predictions count against every bucket.
BucketResult bucket_average_precision(const std::vector<FrameSample>& frames,
                                      ObjectClass cls,
                                      const DifficultyPredicate& in_bucket,
                                      double iou_threshold = 0.7);

// The standard evaluation slices.
struct DifficultySlice {
  std::string name;
  DifficultyPredicate predicate;
};
std::vector<DifficultySlice> standard_slices();  // overall, easy, moderate, hard, near, far

// ---- report rows ----

struct DetectionReportRow {
  std::string policy;
  std::string cls;
  std::string difficulty;
  BucketResult result;
};

struct BandwidthReportRow {
  std::string policy;
  double kb_per_frame = 0.0;
  double gross_kb_per_frame = 0.0;
  double map_moderate = 0.0;  // percentage points
  bool map_defined = false;
  double aib = 0.0;
  bool aib_defined = false;  // false for the zero-bandwidth baseline
};

void write_detection_report(std::ostream& out,
                            const std::vector<DetectionReportRow>& rows);
void write_bandwidth_report(std::ostream& out,
                            const std::vector<BandwidthReportRow>& rows);
// plot data: policy, difficulty, mean AP over classes
void write_plot_data(std::ostream& out, const std::vector<DetectionReportRow>& rows);

}  // namespace coopdet
