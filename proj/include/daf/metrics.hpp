#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

namespace daf {

double mae(std::span<const double> predicted, std::span<const double> truth);

/// Pearson correlation. Throws NumericError when either input is constant.
double pearson_cc(std::span<const double> predicted, std::span<const double> truth);

/// round(clamp(v, -3, 3)), halves away from zero.
int discretize7(double v);
double acc7(std::span<const double> predicted, std::span<const double> truth);

struct BinaryCounts {
  std::size_t tp = 0, fp = 0, tn = 0, fn = 0;
};

struct BinaryResult {
  double accuracy = 0.0;
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  BinaryCounts counts;
  std::size_t n_neutral_excluded = 0;
  bool zero_denominator = false;  // precision or recall had nothing to count
};

/// Positive/negative evaluation. Truth positive iff y > 0; prediction
/// positive iff yhat > 0. With exclude_neutral, samples with y == 0 are
/// removed; otherwise they count as negatives.
BinaryResult binary_eval(std::span<const double> predicted, std::span<const double> truth,
                         bool exclude_neutral = true);

struct RocPoint {
  double fpr = 0.0;
  double tpr = 0.0;
  double threshold = 0.0;  // +inf for the origin
};

struct RocResult {
  double auc = 0.0;
  std::vector<RocPoint> points;
  std::size_t positives = 0;
  std::size_t negatives = 0;
  std::size_t n_neutral_excluded = 0;
};

/// ROC over neutral-excluded samples, thresholds swept over sorted unique
/// scores; trapezoidal AUC, which equals P(s+ > s-) + P(s+ = s-)/2.
RocResult roc_auc(std::span<const double> scores, std::span<const double> truth);

struct MetricsReport {
  double mae = 0.0;
  std::optional<double> cc;
  double acc7 = 0.0;
  std::optional<double> acc2;
  std::optional<double> f1;
  std::optional<double> acc2_with_neutral;
  std::optional<double> f1_with_neutral;
  std::optional<double> auc;
  std::vector<RocPoint> roc_points;
  std::size_t n_total = 0;
  std::size_t n_neutral_excluded = 0;
  std::vector<std::string> unavailable;  // "metric: reason"
};

MetricsReport full_report(std::span<const double> predicted, std::span<const double> truth);

nlohmann::ordered_json to_json(const MetricsReport& report);
std::string roc_csv(const std::vector<RocPoint>& points);

}  // namespace daf
