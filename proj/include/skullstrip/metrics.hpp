#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "skullstrip/errors.hpp"
#include "skullstrip/image.hpp"

namespace skullstrip {

struct ConfusionCounts {
  uint64_t tp = 0, fp = 0, fn = 0, tn = 0;

  uint64_t total() const { return tp + fp + fn + tn; }
  ConfusionCounts& operator+=(const ConfusionCounts& o) {
    tp += o.tp;
    fp += o.fp;
    fn += o.fn;
    tn += o.tn;
    return *this;
  }
};

struct MetricsReport {
  double bce = 0.0;
  double accuracy = 0.0;
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  size_t n_images = 0;
  bool precision_undefined = false;  // zero denominator, value forced to 0
  bool recall_undefined = false;

  std::string to_keyvalue() const {
    std::ostringstream os;
    os.precision(10);
    os << "n_images=" << n_images << "\nbce=" << bce << "\naccuracy=" << accuracy
       << "\nprecision=" << precision << "\nrecall=" << recall << "\nf1=" << f1
       << "\nprecision_undefined=" << (precision_undefined ? 1 : 0)
       << "\nrecall_undefined=" << (recall_undefined ? 1 : 0) << "\n";
    return os.str();
  }

  static std::string csv_header() { return "n_images,bce,accuracy,precision,recall,f1"; }

  std::string to_csv_row() const {
    std::ostringstream os;
    os.precision(10);
    os << n_images << "," << bce << "," << accuracy << "," << precision << ","
       << recall << "," << f1;
    return os.str();
  }
};

/// Pixel confusion counts; positive class is brain (1).
inline ConfusionCounts confusion(const BinaryMask& pred, const BinaryMask& target) {
  require_same_extents(pred.width, pred.height, target.width, target.height,
                       "confusion");
  ConfusionCounts c;
  for (size_t i = 0; i < pred.bits.size(); ++i) {
    const bool p = pred.bits[i] != 0, t = target.bits[i] != 0;
    if (p && t)
      ++c.tp;
    else if (p && !t)
      ++c.fp;
    else if (!p && t)
      ++c.fn;
    else
      ++c.tn;
  }
  return c;
}

inline MetricsReport report_from_counts(const ConfusionCounts& c, double bce,
                                        size_t n_images) {
  MetricsReport r;
  r.bce = bce;
  r.n_images = n_images;
  r.accuracy = c.total() > 0 ? static_cast<double>(c.tp + c.tn) / c.total() : 0.0;
  if (c.tp + c.fp > 0)
    r.precision = static_cast<double>(c.tp) / (c.tp + c.fp);
  else
    r.precision_undefined = true;
  if (c.tp + c.fn > 0)
    r.recall = static_cast<double>(c.tp) / (c.tp + c.fn);
  else
    r.recall_undefined = true;
  if (r.precision + r.recall > 0.0)
    r.f1 = 2.0 * r.precision * r.recall / (r.precision + r.recall);
  return r;
}

inline BinaryMask binarize(const SoftMask& mask, float level = 0.5f) {
  if (level < 0.0f || level > 1.0f)
    throw ShapeMismatch("binarize: level must be in [0,1]");
  BinaryMask out(mask.width, mask.height);
  for (size_t i = 0; i < mask.probs.size(); ++i)
    out.bits[i] = mask.probs[i] >= level ? 1 : 0;
  return out;
}

/// Micro-averaged evaluation: BCE over every pixel of every pair, confusion
/// counts pooled after thresholding, ratios from the pooled counts.
inline MetricsReport compute_report(
    const std::vector<std::pair<SoftMask, BinaryMask>>& pairs,
    float threshold = 0.5f) {
  if (pairs.empty()) throw EmptyEvaluation("compute_report: no pairs");
  constexpr double kEps = 1e-7;
  ConfusionCounts counts;
  double bce_sum = 0.0;
  uint64_t n_pixels = 0;
  for (const auto& [soft, truth] : pairs) {
    require_same_extents(soft.width, soft.height, truth.width, truth.height,
                         "compute_report");
    for (size_t i = 0; i < soft.probs.size(); ++i) {
      const double p = std::clamp(static_cast<double>(soft.probs[i]), kEps, 1.0 - kEps);
      const double t = truth.bits[i];
      bce_sum -= t * std::log(p) + (1.0 - t) * std::log(1.0 - p);
    }
    n_pixels += soft.probs.size();
    counts += confusion(binarize(soft, threshold), truth);
  }
  return report_from_counts(counts, bce_sum / static_cast<double>(n_pixels),
                            pairs.size());
}

}  // namespace skullstrip
