#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <limits>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "faircal/calibrators.hpp"
#include "faircal/data.hpp"
#include "faircal/kmeans.hpp"

namespace faircal {

enum class MethodKind : unsigned char { kBaseline = 0, kFairCal = 1, kOracle = 2, kFsn = 3, kGst = 4 };

std::string_view to_string(MethodKind kind);
MethodKind method_from_string(std::string_view name);

/// FSN and GST output a normalized cosine score; the others a confidence.
inline bool produces_scores(MethodKind kind) { return kind == MethodKind::kFsn || kind == MethodKind::kGst; }

/// Key of the single Baseline map, also used as the Oracle's fallback map.
inline constexpr std::string_view kGlobalKey = "global";

struct MethodOptions {
  std::size_t clusters = 100;
  CalibratorOptions calibrator;
  double reference_fpr = 1e-3;
  std::vector<std::string> attribute_names;
  std::uint64_t seed = 42;
  /// Cluster unit-normalized embeddings instead of raw ones.
  bool normalize = false;
  int kmeans_max_iter = 300;
  double kmeans_tol = 1e-6;
  /// Reuse an already fitted clustering (must come from the same calibration
  /// folds) instead of running k-means again.
  std::optional<ClusterModel> clusters_hint;
};

/// A fitted verification method. Immutable after fit_method().
struct MethodModel {
  MethodKind kind = MethodKind::kBaseline;
  std::optional<ClusterModel> clusters;
  bool normalize = false;
  /// Calibration maps keyed by cluster index, subgroup label or kGlobalKey.
  std::map<std::string, CalibrationMap> maps;
  /// |S_cal| for every key of `maps`.
  std::map<std::string, std::uint64_t> set_sizes;
  /// FSN: per-cluster score shift t_ref - t_k.
  std::map<std::string, double> shifts;
  /// GST: per-subgroup threshold t_g. FSN: per-cluster threshold t_k.
  std::map<std::string, double> thresholds;
  /// FSN/GST: global threshold t_ref at reference_fpr.
  double global_threshold = std::numeric_limits<double>::quiet_NaN();
  double reference_fpr = std::numeric_limits<double>::quiet_NaN();
  /// Folds whose pairs were used for fitting.
  std::vector<int> fit_folds;
  std::vector<std::string> attribute_names;
};

/// Scores and labels of one calibration set.
struct CalibrationSet {
  std::vector<double> scores;  // cosine similarity
  std::vector<int> labels;
  std::vector<std::size_t> pair_indices;
};

/// S_k: every calibration pair with at least one image in cluster k. A pair
/// spanning two clusters lands in both sets.
std::vector<CalibrationSet> build_calibration_sets(const Dataset& ds, std::span<const int> cal_folds,
                                                   const ClusterModel& clusters, bool normalize = false);

/// Embeddings of every image referenced by a pair in `folds`, in first-seen
/// order (optionally unit-normalized).
std::vector<std::vector<double>> fold_embeddings(const Dataset& ds, std::span<const int> folds, bool normalize);

/// Fits `kind` on the pairs of `cal_folds`. Throws FitError naming the
/// offending set when a cluster or subgroup has < 2 pairs or one class.
MethodModel fit_method(MethodKind kind, const Dataset& ds, std::span<const int> cal_folds,
                       const MethodOptions& options);

/// Cluster of an embedding under the model's clustering.
std::size_t cluster_of(const MethodModel& model, std::span<const double> embedding);

/// mu_k(s) for a same-cluster pair, else theta mu_k1(s) + (1 - theta) mu_k2(s)
/// with theta = |S_k1| / (|S_k1| + |S_k2|). `score` is the cosine similarity.
double faircal_confidence(const MethodModel& model, std::size_t k1, std::size_t k2, double score);

/// mu_g(s) for an intra-subgroup pair, 0 for INTERGROUP. Unseen subgroups use
/// the global map and set *fell_back.
double oracle_confidence(const MethodModel& model, const std::string& subgroup, double score,
                         bool* fell_back = nullptr);

/// s plus the mean shift of the clusters holding the two images.
double fsn_normalized_score(const MethodModel& model, std::size_t k1, std::size_t k2, double score);

/// s - t_g + t_ref; INTERGROUP and unseen subgroups get no shift (the latter
/// sets *fell_back).
double gst_normalized_score(const MethodModel& model, const std::string& subgroup, double score,
                            bool* fell_back = nullptr);

/// Output of any method for one pair of `ds`.
double method_output(const MethodModel& model, const Dataset& ds, const PairRecord& pair, double score,
                     bool* fell_back = nullptr);

struct MethodOutputs {
  std::vector<std::size_t> pair_indices;
  std::vector<double> values;
  std::size_t unseen_subgroups = 0;
};

/// Outputs for every pair in `folds`, in dataset order. No fold hygiene check;
/// the harness uses it to place thresholds on calibration folds.
MethodOutputs outputs_for(const MethodModel& model, const Dataset& ds, std::span<const int> folds);

/// As outputs_for, but throws ProtocolError when `eval_folds` overlaps the
/// folds the model was fitted on.
MethodOutputs confidences_for(const MethodModel& model, const Dataset& ds, std::span<const int> eval_folds);

/// Finite per-set threshold: threshold_at_fpr, or just above the largest
/// imposter when no observed imposter score meets the target.
double set_threshold(std::span<const double> scores, std::span<const int> labels, double target_fpr);

void save_method_model(std::ostream& out, const MethodModel& model);
MethodModel load_method_model(std::istream& in);

}  // namespace faircal
