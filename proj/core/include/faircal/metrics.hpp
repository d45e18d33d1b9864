#pragma once

#include <cstddef>
#include <limits>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace faircal {

/// Confidences (or scores) with labels and per-pair subgroup tags.
struct LabeledConfidences {
  std::vector<double> values;
  std::vector<int> labels;
  std::vector<std::string> subgroups;

  std::size_t size() const noexcept { return values.size(); }
  void push_back(double value, int label, std::string subgroup) {
    values.push_back(value);
    labels.push_back(label);
    subgroups.push_back(std::move(subgroup));
  }
  /// The pairs tagged with `subgroup`, in original order.
  LabeledConfidences slice(const std::string& subgroup) const;
  /// Named subgroups present (kIntergroup excluded), sorted.
  std::vector<std::string> subgroup_names() const;
};

inline constexpr double kAcceptNone = std::numeric_limits<double>::infinity();

/// Probability that a random genuine outranks a random imposter, ties count
/// one half. Throws MetricError unless both classes are present.
double auroc(std::span<const double> values, std::span<const int> labels);

/// Smallest observed imposter value t with #{imposters >= t} / #imposters <=
/// target_fpr, or kAcceptNone when no observed value qualifies. Throws
/// StructuralError when target_fpr is outside (0, 1) and MetricError without
/// imposters.
double threshold_at_fpr(std::span<const double> values, std::span<const int> labels, double target_fpr);

/// Fraction of genuines >= threshold_at_fpr(...).
double tpr_at_fpr(std::span<const double> values, std::span<const int> labels, double target_fpr);

/// Fraction of imposters >= threshold (FPR) or of genuines < threshold (FNR).
/// Returns nullopt when the relevant class is absent.
enum class ErrorRate { kFpr, kFnr };
std::optional<double> error_rate(std::span<const double> values, std::span<const int> labels, double threshold,
                                 ErrorRate rate);

/// Per named subgroup (INTERGROUP excluded). Subgroups lacking the relevant
/// class map to nullopt.
std::map<std::string, std::optional<double>> subgroup_rates(const LabeledConfidences& data, double threshold,
                                                            ErrorRate rate);

/// Kolmogorov-Smirnov calibration error: max gap between the cumulative label
/// mass and cumulative confidence mass in ascending (stable) confidence order.
double ks_error(std::span<const double> confidences, std::span<const int> labels);

/// Expected calibration error over `bins` equal-width bins on [0, 1].
double ece(std::span<const double> confidences, std::span<const int> labels, int bins = 15);

/// Expected calibration error over an arbitrary partition given by group ids.
double ece_grouped(std::span<const double> confidences, std::span<const int> labels,
                   std::span<const std::size_t> groups);

enum class BrierForm {
  kLabel,        // mean (y - c)^2
  kCorrectness,  // mean (1{yhat == y} - c)^2 with yhat = 1{c >= 0.5}
};
double brier(std::span<const double> confidences, std::span<const int> labels, BrierForm form = BrierForm::kLabel);

struct DeviationSummary {
  double mean = 0.0;
  double aad = 0.0;
  double mad = 0.0;
  double std = 0.0;
};

/// Mean plus average/maximum absolute and population standard deviation about
/// the mean. Throws MetricError on empty input.
DeviationSummary deviation_summary(std::span<const double> values);

}  // namespace faircal
