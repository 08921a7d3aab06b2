#include "tesda/metrics.hpp"

#include "tesda/error.hpp"

namespace tesda {

DetectionReport compute_metrics(const ConfusionCounts& counts, double epsilon) {
  if (counts.attacked() == 0) throw ValidationError("metrics: no attacked samples, coverage undefined");
  if (counts.clean() == 0) throw ValidationError("metrics: no clean samples, FPR undefined");

  DetectionReport r;
  r.epsilon = epsilon;
  r.counts = counts;
  const double tp = static_cast<double>(counts.true_positive);
  const double fp = static_cast<double>(counts.false_positive);
  r.coverage = tp / static_cast<double>(counts.attacked());
  r.fpr = fp / static_cast<double>(counts.clean());
  r.precision = tp + fp > 0.0 ? tp / (tp + fp) : 0.0;
  const double denom = r.precision + r.coverage;
  r.f1 = denom > 0.0 ? 2.0 * r.precision * r.coverage / denom : 0.0;
  return r;
}

}  // namespace tesda
