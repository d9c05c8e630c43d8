#pragma once

#include <array>
#include <cstddef>
#include <span>
#include <vector>

namespace safemon {

struct PredictionRecord {
  double estimate;  // predicted probability of the event
  bool outcome;     // whether the event occurred
};

inline constexpr std::size_t kCalibrationBins = 10;
inline constexpr std::size_t kPlottableBinCount = 50;

struct ReliabilityBin {
  double lower = 0.0;
  double upper = 0.0;
  std::size_t count = 0;
  double mean_estimate = 0.0;
  double frequency = 0.0;
  bool plottable = false;
};

/// Streaming accumulator for the ten fixed bins [0,0.1), ..., [0.9,1.0].
class CalibrationBins {
 public:
  void add(double estimate, bool outcome);
  void add(std::span<const PredictionRecord> records);
  void merge(const CalibrationBins& other);

  std::size_t total() const { return total_; }
  std::vector<ReliabilityBin> bins(std::size_t min_count = kPlottableBinCount) const;
  double ece() const;
  double ecce() const;

  static std::size_t bin_of(double estimate);

 private:
  std::array<std::size_t, kCalibrationBins> count_{};
  std::array<double, kCalibrationBins> sum_estimate_{};
  std::array<std::size_t, kCalibrationBins> positives_{};
  std::size_t total_ = 0;
};

/// Sum over bins of (n_b / N) |mean estimate_b - frequency_b|.
double ece(std::span<const PredictionRecord> records);
/// As ece, counting only bins whose mean estimate exceeds their frequency.
double ecce(std::span<const PredictionRecord> records);
/// Mean of (estimate - [outcome])^2.
double brier(std::span<const PredictionRecord> records);

std::vector<ReliabilityBin> reliability_bins(std::span<const PredictionRecord> records,
                                             std::size_t min_count = kPlottableBinCount);

struct RocPoint {
  double threshold;
  double false_positive_rate;
  double true_positive_rate;
};

struct RocCurve {
  std::vector<RocPoint> points;  // from (0,0) to (1,1)
  double auc = 0.0;
};

/// ROC with "event occurred" as the positive class; predictions at or above a
/// threshold count as positive. Thresholds sweep the distinct estimates in
/// decreasing order; AUC by the trapezoid rule. Throws ValidationError unless
/// both classes are present.
RocCurve roc_auc(std::span<const PredictionRecord> records);

struct CalibrationReport {
  std::vector<ReliabilityBin> bins;
  double ece = 0.0;
  double ecce = 0.0;
  double brier = 0.0;
  double auc = 0.0;
  RocCurve roc;
};

/// AUC is NaN and the ROC curve empty when only one outcome class occurs.
CalibrationReport calibration_report(std::span<const PredictionRecord> records,
                                     std::size_t min_count = kPlottableBinCount);

/// Two-sided 95% normal-approximation half-width of the observed frequency
/// of `count` Bernoulli(probability) draws.
double binomial_half_width(double probability, std::size_t count);

}  // namespace safemon
