#include "safemon/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "safemon/common.hpp"

namespace safemon {

namespace {

void require_records(std::span<const PredictionRecord> records) {
  if (records.empty()) throw ValidationError("metrics: no prediction records");
}

}  // namespace

std::size_t CalibrationBins::bin_of(double estimate) {
  if (!(estimate >= 0.0 && estimate <= 1.0))
    throw ValidationError("metrics: estimate outside [0, 1]");
  const auto b = static_cast<std::size_t>(std::floor(estimate * kCalibrationBins));
  return std::min(b, kCalibrationBins - 1);
}

void CalibrationBins::add(double estimate, bool outcome) {
  const std::size_t b = bin_of(estimate);
  ++count_[b];
  sum_estimate_[b] += estimate;
  positives_[b] += outcome ? 1 : 0;
  ++total_;
}

void CalibrationBins::add(std::span<const PredictionRecord> records) {
  for (const auto& r : records) add(r.estimate, r.outcome);
}

void CalibrationBins::merge(const CalibrationBins& other) {
  for (std::size_t b = 0; b < kCalibrationBins; ++b) {
    count_[b] += other.count_[b];
    sum_estimate_[b] += other.sum_estimate_[b];
    positives_[b] += other.positives_[b];
  }
  total_ += other.total_;
}

std::vector<ReliabilityBin> CalibrationBins::bins(std::size_t min_count) const {
  std::vector<ReliabilityBin> out(kCalibrationBins);
  for (std::size_t b = 0; b < kCalibrationBins; ++b) {
    auto& r = out[b];
    r.lower = static_cast<double>(b) / kCalibrationBins;
    r.upper = static_cast<double>(b + 1) / kCalibrationBins;
    r.count = count_[b];
    if (r.count > 0) {
      r.mean_estimate = sum_estimate_[b] / static_cast<double>(r.count);
      r.frequency = static_cast<double>(positives_[b]) / static_cast<double>(r.count);
    }
    r.plottable = r.count >= min_count;
  }
  return out;
}

double CalibrationBins::ece() const {
  if (total_ == 0) throw ValidationError("metrics: no prediction records");
  double sum = 0.0;
  for (const auto& b : bins())
    sum += static_cast<double>(b.count) * std::abs(b.mean_estimate - b.frequency);
  return sum / static_cast<double>(total_);
}

double CalibrationBins::ecce() const {
  if (total_ == 0) throw ValidationError("metrics: no prediction records");
  double sum = 0.0;
  for (const auto& b : bins())
    if (b.mean_estimate > b.frequency)
      sum += static_cast<double>(b.count) * (b.mean_estimate - b.frequency);
  return sum / static_cast<double>(total_);
}

double ece(std::span<const PredictionRecord> records) {
  require_records(records);
  CalibrationBins bins;
  bins.add(records);
  return bins.ece();
}

double ecce(std::span<const PredictionRecord> records) {
  require_records(records);
  CalibrationBins bins;
  bins.add(records);
  return bins.ecce();
}

double brier(std::span<const PredictionRecord> records) {
  require_records(records);
  double sum = 0.0;
  for (const auto& r : records) {
    CalibrationBins::bin_of(r.estimate);
    const double d = r.estimate - (r.outcome ? 1.0 : 0.0);
    sum += d * d;
  }
  return sum / static_cast<double>(records.size());
}

std::vector<ReliabilityBin> reliability_bins(std::span<const PredictionRecord> records,
                                             std::size_t min_count) {
  require_records(records);
  CalibrationBins bins;
  bins.add(records);
  return bins.bins(min_count);
}

RocCurve roc_auc(std::span<const PredictionRecord> records) {
  require_records(records);
  std::vector<PredictionRecord> sorted(records.begin(), records.end());
  for (const auto& r : sorted) CalibrationBins::bin_of(r.estimate);
  std::sort(sorted.begin(), sorted.end(),
            [](const auto& a, const auto& b) { return a.estimate > b.estimate; });
  std::size_t pos = 0;
  for (const auto& r : sorted) pos += r.outcome ? 1 : 0;
  const std::size_t neg = sorted.size() - pos;
  if (pos == 0 || neg == 0) throw ValidationError("metrics: AUC needs both outcome classes");

  RocCurve curve;
  curve.points.push_back({std::numeric_limits<double>::infinity(), 0.0, 0.0});
  std::size_t tp = 0, fp = 0;
  double area = 0.0;
  for (std::size_t i = 0; i < sorted.size();) {
    const double threshold = sorted[i].estimate;
    for (; i < sorted.size() && sorted[i].estimate == threshold; ++i)
      (sorted[i].outcome ? tp : fp) += 1;
    const RocPoint p{threshold, static_cast<double>(fp) / static_cast<double>(neg),
                     static_cast<double>(tp) / static_cast<double>(pos)};
    const RocPoint& q = curve.points.back();
    area += (p.false_positive_rate - q.false_positive_rate) *
            (p.true_positive_rate + q.true_positive_rate) / 2.0;
    curve.points.push_back(p);
  }
  curve.auc = area;
  return curve;
}

CalibrationReport calibration_report(std::span<const PredictionRecord> records,
                                     std::size_t min_count) {
  require_records(records);
  CalibrationBins bins;
  bins.add(records);
  CalibrationReport report;
  report.bins = bins.bins(min_count);
  report.ece = bins.ece();
  report.ecce = bins.ecce();
  report.brier = brier(records);
  const auto positives = std::count_if(records.begin(), records.end(),
                                       [](const PredictionRecord& r) { return r.outcome; });
  if (positives == 0 || static_cast<std::size_t>(positives) == records.size()) {
    report.auc = std::numeric_limits<double>::quiet_NaN();
    return report;
  }
  report.roc = roc_auc(records);
  report.auc = report.roc.auc;
  return report;
}

double binomial_half_width(double probability, std::size_t count) {
  if (count == 0) throw ValidationError("metrics: empty bin");
  return 1.959963984540054 *
         std::sqrt(probability * (1.0 - probability) / static_cast<double>(count));
}

}  // namespace safemon
