#include "daf/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <limits>
#include <numeric>

#include "daf/error.hpp"

namespace daf {

namespace {

void check_pair(std::span<const double> a, std::span<const double> b, const char* what) {
  if (a.size() != b.size()) throw DimensionError(std::string(what) + ": prediction and label counts differ");
  if (a.empty()) throw DataError(std::string(what) + ": empty input");
}

}  // namespace

double mae(std::span<const double> predicted, std::span<const double> truth) {
  check_pair(predicted, truth, "mae");
  double s = 0.0;
  for (std::size_t i = 0; i < predicted.size(); ++i) s += std::abs(predicted[i] - truth[i]);
  return s / static_cast<double>(predicted.size());
}

double pearson_cc(std::span<const double> predicted, std::span<const double> truth) {
  check_pair(predicted, truth, "pearson_cc");
  if (predicted.size() < 2) throw NumericError("pearson_cc: needs at least two samples");
  const auto n = static_cast<double>(predicted.size());
  const double mx = std::accumulate(predicted.begin(), predicted.end(), 0.0) / n;
  const double my = std::accumulate(truth.begin(), truth.end(), 0.0) / n;
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < predicted.size(); ++i) {
    const double dx = predicted[i] - mx;
    const double dy = truth[i] - my;
    sxy += dx * dy;
    sxx += dx * dx;
    syy += dy * dy;
  }
  if (sxx == 0.0 || syy == 0.0) throw NumericError("pearson_cc: undefined for constant input");
  return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

int discretize7(double v) {
  if (!std::isfinite(v)) throw NumericError("discretize7: non-finite value");
  return static_cast<int>(std::round(std::clamp(v, -3.0, 3.0)));
}

double acc7(std::span<const double> predicted, std::span<const double> truth) {
  check_pair(predicted, truth, "acc7");
  std::size_t hit = 0;
  for (std::size_t i = 0; i < predicted.size(); ++i) hit += discretize7(predicted[i]) == discretize7(truth[i]);
  return static_cast<double>(hit) / static_cast<double>(predicted.size());
}

BinaryResult binary_eval(std::span<const double> predicted, std::span<const double> truth, bool exclude_neutral) {
  check_pair(predicted, truth, "binary_eval");
  BinaryResult r;
  for (std::size_t i = 0; i < predicted.size(); ++i) {
    if (exclude_neutral && truth[i] == 0.0) {
      ++r.n_neutral_excluded;
      continue;
    }
    const bool pos = truth[i] > 0.0;
    const bool pred = predicted[i] > 0.0;
    if (pos && pred) ++r.counts.tp;
    if (!pos && pred) ++r.counts.fp;
    if (!pos && !pred) ++r.counts.tn;
    if (pos && !pred) ++r.counts.fn;
  }
  const auto& c = r.counts;
  const std::size_t n = c.tp + c.fp + c.tn + c.fn;
  if (n == 0) throw NumericError("binary_eval: every sample is neutral");
  r.accuracy = static_cast<double>(c.tp + c.tn) / static_cast<double>(n);
  if (c.tp + c.fp > 0) {
    r.precision = static_cast<double>(c.tp) / static_cast<double>(c.tp + c.fp);
  } else {
    r.zero_denominator = true;
  }
  if (c.tp + c.fn > 0) {
    r.recall = static_cast<double>(c.tp) / static_cast<double>(c.tp + c.fn);
  } else {
    r.zero_denominator = true;
  }
  r.f1 = (r.precision + r.recall) > 0.0 ? 2.0 * r.precision * r.recall / (r.precision + r.recall) : 0.0;
  return r;
}

RocResult roc_auc(std::span<const double> scores, std::span<const double> truth) {
  check_pair(scores, truth, "roc_auc");
  std::vector<std::pair<double, bool>> items;
  RocResult r;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (truth[i] == 0.0) {
      ++r.n_neutral_excluded;
      continue;
    }
    if (!std::isfinite(scores[i])) throw NumericError("roc_auc: non-finite score");
    items.emplace_back(scores[i], truth[i] > 0.0);
    (truth[i] > 0.0 ? r.positives : r.negatives)++;
  }
  if (r.positives == 0 || r.negatives == 0) {
    throw NumericError("roc_auc: needs both classes after excluding " + std::to_string(r.n_neutral_excluded) +
                       " neutral samples (positives " + std::to_string(r.positives) + ", negatives " +
                       std::to_string(r.negatives) + ")");
  }
  std::sort(items.begin(), items.end(), [](const auto& a, const auto& b) { return a.first > b.first; });

  // Twice the trapezoid area in count units, kept integral so the result is
  // exactly (2 * #(s+ > s-) + #(s+ = s-)) / (2 * P * N).
  std::uint64_t area2 = 0;
  std::uint64_t tp = 0, fp = 0;
  const auto P = static_cast<double>(r.positives);
  const auto N = static_cast<double>(r.negatives);
  r.points.push_back({0.0, 0.0, std::numeric_limits<double>::infinity()});
  for (std::size_t i = 0; i < items.size();) {
    const double threshold = items[i].first;
    std::uint64_t dtp = 0, dfp = 0;
    for (; i < items.size() && items[i].first == threshold; ++i) (items[i].second ? dtp : dfp)++;
    area2 += dfp * (2 * tp + dtp);
    tp += dtp;
    fp += dfp;
    r.points.push_back({static_cast<double>(fp) / N, static_cast<double>(tp) / P, threshold});
  }
  r.auc = static_cast<double>(area2) / (2.0 * P * N);
  return r;
}

MetricsReport full_report(std::span<const double> predicted, std::span<const double> truth) {
  check_pair(predicted, truth, "full_report");
  MetricsReport rep;
  rep.n_total = predicted.size();
  rep.mae = mae(predicted, truth);
  rep.acc7 = acc7(predicted, truth);
  try {
    rep.cc = pearson_cc(predicted, truth);
  } catch (const NumericError& e) {
    rep.unavailable.push_back(std::string("cc: ") + e.what());
  }
  rep.n_neutral_excluded = static_cast<std::size_t>(std::count(truth.begin(), truth.end(), 0.0));
  try {
    const auto b = binary_eval(predicted, truth, true);
    rep.acc2 = b.accuracy;
    rep.f1 = b.f1;
  } catch (const NumericError& e) {
    rep.unavailable.push_back(std::string("acc2: ") + e.what());
  }
  const auto bn = binary_eval(predicted, truth, false);
  rep.acc2_with_neutral = bn.accuracy;
  rep.f1_with_neutral = bn.f1;
  try {
    auto roc = roc_auc(predicted, truth);
    rep.auc = roc.auc;
    rep.roc_points = std::move(roc.points);
  } catch (const NumericError& e) {
    rep.unavailable.push_back(std::string("auc: ") + e.what());
  }
  return rep;
}

nlohmann::ordered_json to_json(const MetricsReport& report) {
  using ojson = nlohmann::ordered_json;
  auto opt = [](const std::optional<double>& v) { return v ? ojson(*v) : ojson(nullptr); };
  ojson j;
  j["mae"] = report.mae;
  j["cc"] = opt(report.cc);
  j["acc7"] = report.acc7;
  j["acc2"] = opt(report.acc2);
  j["f1"] = opt(report.f1);
  j["acc2_with_neutral"] = opt(report.acc2_with_neutral);
  j["f1_with_neutral"] = opt(report.f1_with_neutral);
  j["auc"] = opt(report.auc);
  j["n_total"] = report.n_total;
  j["n_neutral_excluded"] = report.n_neutral_excluded;
  j["unavailable"] = report.unavailable;
  return j;
}

std::string roc_csv(const std::vector<RocPoint>& points) {
  std::string out = "fpr,tpr,threshold\n";
  char buf[128];
  for (const auto& p : points) {
    if (std::isinf(p.threshold)) {
      std::snprintf(buf, sizeof(buf), "%.17g,%.17g,inf\n", p.fpr, p.tpr);
    } else {
      std::snprintf(buf, sizeof(buf), "%.17g,%.17g,%.17g\n", p.fpr, p.tpr, p.threshold);
    }
    out += buf;
  }
  return out;
}

}  // namespace daf
