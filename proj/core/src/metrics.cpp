#include "faircal/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <set>

#include "faircal/data.hpp"
#include "faircal/error.hpp"

namespace faircal {

namespace {

void check_lengths(std::span<const double> values, std::span<const int> labels, const char* what) {
  if (values.size() != labels.size()) throw StructuralError(std::string(what) + ": values and labels differ in length");
}

std::vector<double> by_label(std::span<const double> values, std::span<const int> labels, int label) {
  std::vector<double> out;
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (labels[i] == label) out.push_back(values[i]);
  }
  return out;
}

}  // namespace

LabeledConfidences LabeledConfidences::slice(const std::string& subgroup) const {
  LabeledConfidences out;
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (subgroups[i] == subgroup) out.push_back(values[i], labels[i], subgroups[i]);
  }
  return out;
}

std::vector<std::string> LabeledConfidences::subgroup_names() const {
  std::set<std::string> names(subgroups.begin(), subgroups.end());
  names.erase(std::string(kIntergroup));
  return {names.begin(), names.end()};
}

double auroc(std::span<const double> values, std::span<const int> labels) {
  check_lengths(values, labels, "auroc");
  std::vector<std::size_t> order(values.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return values[a] < values[b]; });

  // Twice the Mann-Whitney count, kept integral so the result is exact.
  std::uint64_t twice_wins = 0;
  std::uint64_t imposters_below = 0;
  std::uint64_t genuines = 0;
  std::uint64_t imposters = 0;
  std::size_t i = 0;
  while (i < order.size()) {
    std::size_t j = i;
    std::uint64_t g = 0;
    std::uint64_t m = 0;
    while (j < order.size() && values[order[j]] == values[order[i]]) {
      (labels[order[j]] == 1 ? g : m) += 1;
      ++j;
    }
    twice_wins += g * (2 * imposters_below + m);
    imposters_below += m;
    genuines += g;
    imposters += m;
    i = j;
  }
  if (genuines == 0 || imposters == 0) throw MetricError("auroc needs both genuine and imposter pairs");
  return static_cast<double>(twice_wins) / static_cast<double>(2 * genuines * imposters);
}

double threshold_at_fpr(std::span<const double> values, std::span<const int> labels, double target_fpr) {
  check_lengths(values, labels, "threshold_at_fpr");
  if (!(target_fpr > 0.0 && target_fpr < 1.0)) {
    throw StructuralError("target FPR must lie in (0, 1), got " + std::to_string(target_fpr));
  }
  std::vector<double> imposters = by_label(values, labels, 0);
  if (imposters.empty()) throw MetricError("threshold_at_fpr needs at least one imposter");
  std::sort(imposters.begin(), imposters.end(), std::greater<>());
  const double n = static_cast<double>(imposters.size());
  double best = kAcceptNone;
  std::size_t i = 0;
  while (i < imposters.size()) {
    std::size_t j = i;
    while (j < imposters.size() && imposters[j] == imposters[i]) ++j;
    // j imposters are >= imposters[i]
    if (static_cast<double>(j) / n > target_fpr) break;
    best = imposters[i];
    i = j;
  }
  return best;
}

double tpr_at_fpr(std::span<const double> values, std::span<const int> labels, double target_fpr) {
  double t = threshold_at_fpr(values, labels, target_fpr);
  auto fnr = error_rate(values, labels, t, ErrorRate::kFnr);
  if (!fnr) throw MetricError("tpr_at_fpr needs at least one genuine pair");
  return 1.0 - *fnr;
}

std::optional<double> error_rate(std::span<const double> values, std::span<const int> labels, double threshold,
                                 ErrorRate rate) {
  check_lengths(values, labels, "error_rate");
  const int relevant = rate == ErrorRate::kFpr ? 0 : 1;
  std::size_t total = 0;
  std::size_t errors = 0;
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (labels[i] != relevant) continue;
    ++total;
    bool accepted = values[i] >= threshold;
    if (rate == ErrorRate::kFpr ? accepted : !accepted) ++errors;
  }
  if (total == 0) return std::nullopt;
  return static_cast<double>(errors) / static_cast<double>(total);
}

std::map<std::string, std::optional<double>> subgroup_rates(const LabeledConfidences& data, double threshold,
                                                            ErrorRate rate) {
  std::map<std::string, std::optional<double>> out;
  for (const auto& name : data.subgroup_names()) {
    LabeledConfidences part = data.slice(name);
    out.emplace(name, error_rate(part.values, part.labels, threshold, rate));
  }
  return out;
}

double ks_error(std::span<const double> confidences, std::span<const int> labels) {
  check_lengths(confidences, labels, "ks_error");
  if (confidences.empty()) throw MetricError("ks_error on an empty slice");
  std::vector<std::size_t> order(confidences.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return confidences[a] < confidences[b]; });
  const double n = static_cast<double>(confidences.size());
  double h = 0.0;
  double h_tilde = 0.0;
  double worst = 0.0;
  for (std::size_t i : order) {
    h += (labels[i] == 1 ? 1.0 : 0.0) / n;
    h_tilde += confidences[i] / n;
    worst = std::max(worst, std::abs(h - h_tilde));
  }
  return worst;
}

double ece_grouped(std::span<const double> confidences, std::span<const int> labels,
                   std::span<const std::size_t> groups) {
  check_lengths(confidences, labels, "ece");
  if (groups.size() != confidences.size()) throw StructuralError("ece: group ids differ in length");
  if (confidences.empty()) throw MetricError("ece on an empty slice");
  std::map<std::size_t, std::pair<double, double>> sums;  // group -> (sum labels - sum conf, count)
  for (std::size_t i = 0; i < confidences.size(); ++i) {
    auto& [diff, count] = sums[groups[i]];
    diff += labels[i] - confidences[i];
    count += 1.0;
  }
  // sum_b |B|/N |acc - conf| == sum_b |sum(y - c)| / N
  double total = 0.0;
  for (const auto& [group, entry] : sums) total += std::abs(entry.first);
  return total / static_cast<double>(confidences.size());
}

double ece(std::span<const double> confidences, std::span<const int> labels, int bins) {
  if (bins < 1) throw StructuralError("ece: bins must be >= 1");
  std::vector<std::size_t> groups(confidences.size());
  for (std::size_t i = 0; i < confidences.size(); ++i) {
    double c = std::clamp(confidences[i], 0.0, 1.0);
    groups[i] = std::min(static_cast<std::size_t>(c * bins), static_cast<std::size_t>(bins - 1));
  }
  return ece_grouped(confidences, labels, groups);
}

double brier(std::span<const double> confidences, std::span<const int> labels, BrierForm form) {
  check_lengths(confidences, labels, "brier");
  if (confidences.empty()) throw MetricError("brier on an empty slice");
  double total = 0.0;
  for (std::size_t i = 0; i < confidences.size(); ++i) {
    double target = labels[i];
    if (form == BrierForm::kCorrectness) {
      int predicted = confidences[i] >= 0.5 ? 1 : 0;
      target = predicted == labels[i] ? 1.0 : 0.0;
    }
    double d = target - confidences[i];
    total += d * d;
  }
  return total / static_cast<double>(confidences.size());
}

DeviationSummary deviation_summary(std::span<const double> values) {
  if (values.empty()) throw MetricError("deviation_summary on an empty list");
  const double n = static_cast<double>(values.size());
  DeviationSummary s;
  for (double v : values) s.mean += v;
  s.mean /= n;
  double sq = 0.0;
  for (double v : values) {
    double d = std::abs(v - s.mean);
    s.aad += d;
    s.mad = std::max(s.mad, d);
    sq += d * d;
  }
  s.aad /= n;
  s.std = std::sqrt(sq / n);
  return s;
}

}  // namespace faircal
