#include "coopdet/eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <ostream>
#include <stdexcept>

namespace coopdet {

MatchResult match_detections(const std::vector<Detection>& detections,
                             const std::vector<GroundTruth>& gts, ObjectClass cls,
                             double iou_threshold, double score_threshold) {
  if (!(iou_threshold > 0.0 && iou_threshold <= 1.0))
    throw std::invalid_argument("iou threshold must lie in (0, 1]");

  MatchResult result;
  result.iou_threshold = iou_threshold;
  result.score_threshold = score_threshold;
  result.gt_matched.assign(gts.size(), false);

  for (size_t i = 0; i < detections.size(); ++i) {
    if (detections[i].cls != cls) continue;
    if (detections[i].score < score_threshold) continue;
    result.order.push_back(static_cast<int>(i));
  }
  std::stable_sort(result.order.begin(), result.order.end(), [&](int a, int b) {
    return detections[static_cast<size_t>(a)].score >
           detections[static_cast<size_t>(b)].score;
  });

  result.tp.reserve(result.order.size());
  result.matched_gt.reserve(result.order.size());
  for (int idx : result.order) {
    const Detection& det = detections[static_cast<size_t>(idx)];
    int best = -1;
    double best_iou = 0.0;
    for (size_t j = 0; j < gts.size(); ++j) {
      if (gts[j].cls != cls || result.gt_matched[j]) continue;
      const double iou = iou_3d(det.box, gts[j].box);
      if (iou < iou_threshold) continue;
      if (iou > best_iou) {  // strict: ties keep the lowest gt index
        best_iou = iou;
        best = static_cast<int>(j);
      }
    }
    if (best >= 0) {
      result.gt_matched[static_cast<size_t>(best)] = true;
      result.tp.push_back(true);
      result.matched_gt.push_back(best);
    } else {
      result.tp.push_back(false);
      result.matched_gt.push_back(-1);
    }
  }
  return result;
}

double average_precision(const PRCurve& curve) {
  const size_t k = curve.recall.size();
  if (k == 0 || curve.precision.size() != k)
    throw std::invalid_argument("curve needs matching recall/precision points");
  for (size_t i = 1; i < k; ++i)
    if (curve.recall[i] < curve.recall[i - 1])
      throw std::invalid_argument("recall must be non-decreasing");

  std::vector<double> best_at(k);
  double running = 0.0;
  for (size_t i = k; i-- > 0;) {
    running = std::max(running, curve.precision[i]);
    best_at[i] = running;
  }
  double ap = 0.0;
  double prev_recall = 0.0;
  for (size_t i = 0; i < k; ++i) {
    ap += best_at[i] * (curve.recall[i] - prev_recall);
    prev_recall = curve.recall[i];
  }
  return ap;
}

double mean_ap(const std::vector<double>& per_class) {
  if (per_class.empty()) throw std::invalid_argument("no per-class values");
  double acc = 0.0;
  for (double v : per_class) {
    if (!std::isfinite(v)) throw std::invalid_argument("per-class AP must be finite");
    acc += v;
  }
  return acc / static_cast<double>(per_class.size());
}

double aib(double map_policy, double map_baseline, uint64_t bytes_per_frame) {
  if (bytes_per_frame == 0)
    throw std::invalid_argument("accuracy-per-bandwidth undefined at zero bytes");
  const double mb = static_cast<double>(bytes_per_frame) / (1024.0 * 1024.0);
  return std::fabs(map_policy - map_baseline) / mb;
}

BucketResult bucket_average_precision(const std::vector<FrameSample>& frames,
                                      ObjectClass cls,
                                      const DifficultyPredicate& in_bucket,
                                      double iou_threshold) {
  struct Record {
    double score;
    size_t frame;
    size_t pos;
    int outcome;  // 1 = true positive, 0 = false positive
  };
  std::vector<Record> records;
  int num_gt = 0;

  for (size_t f = 0; f < frames.size(); ++f) {
    const FrameSample& sample = frames[f];
    for (const auto& gt : sample.gts)
      if (gt.cls == cls && in_bucket(gt.difficulty)) ++num_gt;

    const MatchResult mr =
        match_detections(sample.detections, sample.gts, cls, iou_threshold);
    for (size_t p = 0; p < mr.order.size(); ++p) {
      const double score =
          sample.detections[static_cast<size_t>(mr.order[p])].score;
      if (mr.tp[p]) {
        const GroundTruth& gt = sample.gts[static_cast<size_t>(mr.matched_gt[p])];
        // Matched outside the bucket: neither credit nor penalty here.
        if (!in_bucket(gt.difficulty)) continue;
        records.push_back({score, f, p, 1});
      } else {
        records.push_back({score, f, p, 0});
      }
    }
  }

  if (num_gt == 0) return {};

  std::sort(records.begin(), records.end(), [](const Record& a, const Record& b) {
    if (a.score != b.score) return a.score > b.score;
    if (a.frame != b.frame) return a.frame < b.frame;
    return a.pos < b.pos;
  });

  BucketResult out;
  out.num_gt = num_gt;
  out.defined = true;
  if (records.empty()) {
    out.ap = 0.0;
    return out;
  }
  PRCurve curve;
  curve.recall.reserve(records.size());
  curve.precision.reserve(records.size());
  int tp = 0, fp = 0;
  for (const auto& rec : records) {
    rec.outcome ? ++tp : ++fp;
    curve.recall.push_back(static_cast<double>(tp) / num_gt);
    curve.precision.push_back(static_cast<double>(tp) / (tp + fp));
  }
  out.ap = average_precision(curve);
  return out;
}

std::vector<DifficultySlice> standard_slices() {
  return {
      {"overall", [](const DifficultyTag&) { return true; }},
      {"easy",
       [](const DifficultyTag& t) { return t.occlusion == OcclusionClass::Easy; }},
      {"moderate",
       [](const DifficultyTag& t) { return t.occlusion == OcclusionClass::Moderate; }},
      {"hard",
       [](const DifficultyTag& t) { return t.occlusion == OcclusionClass::Hard; }},
      {"near", [](const DifficultyTag& t) { return t.range == RangeClass::Near; }},
      {"far", [](const DifficultyTag& t) { return t.range == RangeClass::Far; }},
  };
}

void write_detection_report(std::ostream& out,
                            const std::vector<DetectionReportRow>& rows) {
  out << "policy,class,difficulty,ap,num_gt\n";
  char buf[64];
  for (const auto& row : rows) {
    out << row.policy << ',' << row.cls << ',' << row.difficulty << ',';
    if (row.result.defined) {
      std::snprintf(buf, sizeof buf, "%.6f", row.result.ap);
      out << buf;
    } else {
      out << "NA";
    }
    out << ',' << row.result.num_gt << "\n";
  }
}

void write_bandwidth_report(std::ostream& out,
                            const std::vector<BandwidthReportRow>& rows) {
  out << "policy,kb_per_frame,gross_kb_per_frame,map_moderate,aib\n";
  char buf[64];
  for (const auto& row : rows) {
    out << row.policy << ',';
    std::snprintf(buf, sizeof buf, "%.2f", row.kb_per_frame);
    out << buf << ',';
    std::snprintf(buf, sizeof buf, "%.2f", row.gross_kb_per_frame);
    out << buf << ',';
    if (row.map_defined) {
      std::snprintf(buf, sizeof buf, "%.2f", row.map_moderate);
      out << buf;
    } else {
      out << "NA";
    }
    out << ',';
    if (row.aib_defined) {
      std::snprintf(buf, sizeof buf, "%.2f", row.aib);
      out << buf;
    } else {
      out << "undefined";
    }
    out << "\n";
  }
}

void write_plot_data(std::ostream& out, const std::vector<DetectionReportRow>& rows) {
  out << "policy,difficulty,ap\n";
  // Preserve first-seen order of (policy, difficulty) pairs.
  std::vector<std::pair<std::string, std::string>> keys;
  std::map<std::pair<std::string, std::string>, std::pair<double, int>> acc;
  for (const auto& row : rows) {
    if (!row.result.defined) continue;
    const auto key = std::make_pair(row.policy, row.difficulty);
    auto it = acc.find(key);
    if (it == acc.end()) {
      keys.push_back(key);
      acc[key] = {row.result.ap, 1};
    } else {
      it->second.first += row.result.ap;
      it->second.second += 1;
    }
  }
  char buf[64];
  for (const auto& key : keys) {
    const auto& [sum, n] = acc[key];
    std::snprintf(buf, sizeof buf, "%.6f", sum / n);
    out << key.first << ',' << key.second << ',' << buf << "\n";
  }
}

}  // namespace coopdet
