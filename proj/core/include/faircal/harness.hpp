#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "faircal/calibrators.hpp"
#include "faircal/data.hpp"
#include "faircal/methods.hpp"
#include "faircal/metrics.hpp"

namespace faircal {

struct RunConfig {
  std::vector<MethodKind> methods;
  CalibratorKind calibrator = CalibratorKind::kBeta;
  /// Histogram bins; 0 picks 10 below 1e5 calibration pairs, 25 otherwise.
  int bins = 0;
  std::size_t clusters = 100;
  std::vector<double> target_fprs = {1e-3, 1e-2};
  std::vector<std::string> attribute_names;
  /// Expected fold count; 0 accepts whatever the dataset has.
  int folds = 0;
  std::uint64_t seed = 42;
  /// Beta-calibrate FSN/GST score outputs before calibration metrics.
  bool post_calibrate_scores = false;
  bool normalize = false;
  int ece_bins = 15;
  /// Worker threads; 0 uses FAIRCAL_THREADS or the hardware concurrency.
  int threads = 0;
  /// Thresholds in the pooled FPR curve of each method.
  int curve_points = 50;

  friend bool operator==(const RunConfig&, const RunConfig&) = default;
};

/// Throws ConfigError when the config is unusable.
void validate(const RunConfig& config);

/// One report cell: a value per fold (absent when undefined in that fold),
/// plus the mean and sample standard deviation over the present folds.
struct Cell {
  std::vector<std::optional<double>> folds;
  std::optional<double> mean;
  std::optional<double> std;

  friend bool operator==(const Cell&, const Cell&) = default;
};

struct CurvePoint {
  double threshold = 0.0;
  double global_fpr = 0.0;
  std::map<std::string, std::optional<double>> subgroup_fpr;

  friend bool operator==(const CurvePoint&, const CurvePoint&) = default;
};

/// family ("accuracy", "ks", "fpr@0.01", ...) -> row ("auroc", a subgroup,
/// "mean"/"aad"/"mad"/"std", ...) -> cell
using FamilyTable = std::map<std::string, std::map<std::string, Cell>>;

struct MethodReport {
  std::string method;
  FamilyTable families;
  /// Pooled out-of-fold outputs: threshold sweep -> per-subgroup FPR.
  std::vector<CurvePoint> fpr_curve;
  std::vector<std::string> errors;
  std::vector<std::string> notes;

  friend bool operator==(const MethodReport&, const MethodReport&) = default;
};

struct DatasetSummary {
  std::size_t pairs = 0;
  std::size_t dropped_pairs = 0;
  int folds = 0;
  std::size_t dimension = 0;
  std::vector<std::string> subgroups;

  friend bool operator==(const DatasetSummary&, const DatasetSummary&) = default;
};

struct MetricsReport {
  RunConfig config;
  DatasetSummary dataset;
  std::vector<MethodReport> methods;

  const MethodReport* find(std::string_view method) const;
  bool has_fit_failures() const;

  friend bool operator==(const MetricsReport&, const MetricsReport&) = default;
};

/// Row names used for deviation summaries inside a family.
inline constexpr std::string_view kDeviationRows[] = {"mean", "aad", "mad", "std"};

/// Family name for a rate at a target FPR, e.g. "fpr@0.01".
std::string rate_family(std::string_view rate, double target_fpr);

/// Leave-one-fold-out evaluation of every configured method.
MetricsReport run_cross_validation(const Dataset& ds, const RunConfig& config);

/// Per-subgroup FPR for a sweep of `points` thresholds over the imposter
/// values of `data`.
std::vector<CurvePoint> fpr_curve(const LabeledConfidences& data, int points);

enum class ReportFormat { kJson, kCsv };
ReportFormat report_format_from_string(std::string_view name);

std::string report_to_json(const MetricsReport& report);
MetricsReport report_from_json(std::string_view text);

/// Tables: "accuracy", "ks", "fpr-dev", "fnr-dev", "fpr-curve".
std::string report_table_csv(const MetricsReport& report, std::string_view table);
/// Every table, separated by blank lines.
std::string report_to_csv(const MetricsReport& report);

void emit_report(const MetricsReport& report, ReportFormat format, const std::filesystem::path& path);
MetricsReport read_report(const std::filesystem::path& path);

}  // namespace faircal
