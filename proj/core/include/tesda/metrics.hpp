#pragma once

#include <cstddef>

namespace tesda {

/// Positives are attacked samples; a sample is "flagged" when the detector
/// reports an attack.
struct ConfusionCounts {
  std::size_t true_positive = 0;   // attacked, flagged
  std::size_t false_negative = 0;  // attacked, not flagged
  std::size_t false_positive = 0;  // clean, flagged
  std::size_t true_negative = 0;   // clean, not flagged

  std::size_t attacked() const { return true_positive + false_negative; }
  std::size_t clean() const { return false_positive + true_negative; }
};

struct DetectionReport {
  double epsilon = 0.0;
  ConfusionCounts counts;
  double coverage = 0.0;   // TP / (TP + FN)
  double fpr = 0.0;        // FP / (FP + TN)
  double precision = 0.0;  // TP / (TP + FP); 0 when nothing is flagged
  double f1 = 0.0;         // 2 P R / (P + R); 0 when P + R == 0

  std::size_t n_clean() const { return counts.clean(); }
  std::size_t n_attacked() const { return counts.attacked(); }
};

/// ValidationError when there are no attacked or no clean samples.
DetectionReport compute_metrics(const ConfusionCounts& counts, double epsilon = 0.0);

}  // namespace tesda
