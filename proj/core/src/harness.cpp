#include "faircal/harness.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <mutex>
#include <set>
#include <thread>

#include "faircal/error.hpp"
#include "faircal/metrics.hpp"

namespace faircal {

namespace {

using RowValues = std::map<std::string, std::optional<double>>;
using FamilyValues = std::map<std::string, RowValues>;

struct MethodFold {
  FamilyValues cells;
  LabeledConfidences test_outputs;
  std::vector<std::string> errors;
  std::vector<std::string> notes;
  bool ok = false;
};

struct FoldOutcome {
  std::vector<MethodFold> methods;  // aligned with config.methods
};

constexpr int kReseedAttempts = 2;

std::string format_fpr(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%g", v);
  return buf;
}

int resolve_threads(int configured) {
  int threads = configured;
  if (threads <= 0) {
    if (const char* env = std::getenv("FAIRCAL_THREADS"); env != nullptr) threads = std::atoi(env);
  }
  if (threads <= 0) threads = static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
  return threads;
}

void add_deviation_rows(RowValues& rows, const std::vector<std::string>& subgroups) {
  std::vector<double> present;
  for (const auto& g : subgroups) {
    auto it = rows.find(g);
    if (it != rows.end() && it->second) present.push_back(*it->second);
  }
  if (present.empty()) {
    for (auto row : kDeviationRows) rows[std::string(row)] = std::nullopt;
    return;
  }
  DeviationSummary s = deviation_summary(present);
  rows["mean"] = s.mean;
  rows["aad"] = s.aad;
  rows["mad"] = s.mad;
  rows["std"] = s.std;
}

// Everything a method produces on one fold: test outputs and in-sample
// calibration-fold outputs.
struct Outputs {
  LabeledConfidences test;
  LabeledConfidences cal;
};

LabeledConfidences tag(const Dataset& ds, const MethodOutputs& out, const std::vector<std::string>& pair_groups) {
  LabeledConfidences data;
  for (std::size_t j = 0; j < out.pair_indices.size(); ++j) {
    std::size_t i = out.pair_indices[j];
    data.push_back(out.values[j], ds.pairs()[i].label, pair_groups[i]);
  }
  return data;
}

class FoldRunner {
 public:
  FoldRunner(const Dataset& ds, const RunConfig& config, int fold, const std::vector<std::string>& pair_groups,
             const std::vector<std::string>& subgroups)
      : ds_(ds), config_(config), fold_(fold), pair_groups_(pair_groups), subgroups_(subgroups) {
    for (int f = 0; f < ds.fold_count(); ++f) {
      if (f != fold) cal_folds_.push_back(f);
    }
    std::size_t cal_pairs = 0;
    for (const auto& p : ds.pairs()) cal_pairs += p.fold != fold ? 1 : 0;
    base_.clusters = config.clusters;
    base_.calibrator.kind = config.calibrator;
    base_.calibrator.bins = config.bins > 0 ? config.bins : (cal_pairs < 100000 ? 10 : 25);
    base_.attribute_names = config.attribute_names;
    base_.seed = config.seed + static_cast<std::uint64_t>(fold);
    base_.normalize = config.normalize;
  }

  FoldOutcome run() {
    FoldOutcome outcome;
    for (MethodKind kind : config_.methods) outcome.methods.push_back(run_method(kind));
    return outcome;
  }

 private:
  MethodFold run_method(MethodKind kind) {
    MethodFold result;
    const std::string prefix = "fold " + std::to_string(fold_) + ": ";
    try {
      const double primary_fpr = *std::min_element(config_.target_fprs.begin(), config_.target_fprs.end());
      MethodModel primary = fit(kind, primary_fpr, result.notes);
      Outputs primary_out = outputs(primary);

      auto& accuracy = result.cells["accuracy"];
      accuracy["auroc"] = auroc(primary_out.test.values, primary_out.test.labels);
      accuracy["auroc_raw"] = raw_auroc();

      calibration_cells(kind, primary_out, result.cells);

      for (double target : config_.target_fprs) {
        const Outputs* out = &primary_out;
        Outputs refit;
        if (produces_scores(kind) && target != primary_fpr) {
          // FSN/GST shifts depend on the operating point and must be refit.
          result.notes.push_back(prefix + "refit for FPR " + format_fpr(target));
          refit = outputs(fit(kind, target, result.notes));
          out = &refit;
        }
        double t = threshold_at_fpr(out->cal.values, out->cal.labels, target);
        auto fnr = error_rate(out->test.values, out->test.labels, t, ErrorRate::kFnr);
        accuracy["tpr@" + format_fpr(target)] = fnr ? std::optional<double>(1.0 - *fnr) : std::nullopt;
        for (auto [rate, name] : {std::pair{ErrorRate::kFpr, "fpr"}, std::pair{ErrorRate::kFnr, "fnr"}}) {
          auto& rows = result.cells[rate_family(name, target)];
          rows["global"] = error_rate(out->test.values, out->test.labels, t, rate);
          for (const auto& [g, v] : subgroup_rates(out->test, t, rate)) rows[g] = v;
          for (const auto& g : subgroups_) rows.try_emplace(g, std::nullopt);
          add_deviation_rows(rows, subgroups_);
        }
      }
      result.test_outputs = std::move(primary_out.test);
      result.ok = true;
    } catch (const Error& e) {
      result.cells.clear();
      result.errors.push_back(prefix + e.what());
    }
    return result;
  }

  void calibration_cells(MethodKind kind, const Outputs& out, FamilyValues& cells) {
    std::vector<double> conf = out.test.values;
    if (produces_scores(kind)) {
      std::vector<double> cal_rescaled;
      for (double v : out.cal.values) cal_rescaled.push_back(rescale_score(v));
      std::optional<CalibrationMap> post;
      if (config_.post_calibrate_scores) post = fit_beta(cal_rescaled, out.cal.labels);
      for (double& v : conf) v = post ? post->apply(rescale_score(v)) : rescale_score(v);
    }
    LabeledConfidences data{conf, out.test.labels, out.test.subgroups};
    auto family = [&](const char* name, auto metric) {
      auto& rows = cells[name];
      rows["global"] = metric(data.values, data.labels);
      for (const auto& g : subgroups_) {
        LabeledConfidences part = data.slice(g);
        rows[g] = part.size() == 0 ? std::nullopt : std::optional<double>(metric(part.values, part.labels));
      }
      add_deviation_rows(rows, subgroups_);
    };
    family("ks", [](auto v, auto y) { return ks_error(v, y); });
    family("ece", [&](auto v, auto y) { return ece(v, y, config_.ece_bins); });
    family("brier", [](auto v, auto y) { return brier(v, y); });
  }

  double raw_auroc() const {
    std::vector<double> scores;
    std::vector<int> labels;
    for (std::size_t i = 0; i < ds_.pairs().size(); ++i) {
      if (ds_.pairs()[i].fold != fold_) continue;
      scores.push_back(ds_.score(i));
      labels.push_back(ds_.pairs()[i].label);
    }
    return auroc(scores, labels);
  }

  Outputs outputs(const MethodModel& model) const {
    Outputs out;
    const int test_fold[] = {fold_};
    out.test = tag(ds_, confidences_for(model, ds_, test_fold), pair_groups_);
    out.cal = tag(ds_, outputs_for(model, ds_, cal_folds_), pair_groups_);
    return out;
  }

  const ClusterModel& clustering(std::size_t k, std::uint64_t seed) {
    auto key = std::pair(k, seed);
    auto it = clusterings_.find(key);
    if (it == clusterings_.end()) {
      if (points_.empty()) points_ = fold_embeddings(ds_, cal_folds_, config_.normalize);
      KMeansOptions km;
      km.k = k;
      km.seed = seed;
      it = clusterings_.emplace(key, fit_kmeans(points_, km)).first;
    }
    return it->second;
  }

  MethodModel fit(MethodKind kind, double reference_fpr, std::vector<std::string>& notes) {
    MethodOptions options = base_;
    options.reference_fpr = reference_fpr;
    if (kind != MethodKind::kFairCal && kind != MethodKind::kFsn) return fit_method(kind, ds_, cal_folds_, options);

    // A cluster whose calibration set cannot be fitted triggers a reseed, then
    // halving K.
    std::size_t k = options.clusters;
    int attempt = 0;
    while (true) {
      std::uint64_t seed = options.seed + 1000003ULL * static_cast<std::uint64_t>(attempt);
      options.clusters_hint = clustering(k, seed);
      options.clusters = k;
      try {
        return fit_method(kind, ds_, cal_folds_, options);
      } catch (const FitError& e) {
        if (k <= 1) throw;
        std::string msg = "fold " + std::to_string(fold_) + ": " + e.what();
        if (attempt < kReseedAttempts) {
          ++attempt;
          notes.push_back(msg + "; reseeding k-means");
        } else {
          k = std::max<std::size_t>(1, k / 2);
          attempt = 0;
          notes.push_back(msg + "; reducing K to " + std::to_string(k));
        }
      }
    }
  }

  const Dataset& ds_;
  const RunConfig& config_;
  int fold_;
  const std::vector<std::string>& pair_groups_;
  const std::vector<std::string>& subgroups_;
  std::vector<int> cal_folds_;
  MethodOptions base_;
  std::vector<std::vector<double>> points_;
  std::map<std::pair<std::size_t, std::uint64_t>, ClusterModel> clusterings_;
};

Cell aggregate(const std::vector<std::optional<double>>& folds) {
  Cell cell;
  cell.folds = folds;
  std::vector<double> present;
  for (const auto& v : folds) {
    if (v) present.push_back(*v);
  }
  if (present.empty()) return cell;
  double mean = 0.0;
  for (double v : present) mean += v;
  mean /= static_cast<double>(present.size());
  cell.mean = mean;
  if (present.size() >= 2) {
    double sq = 0.0;
    for (double v : present) sq += (v - mean) * (v - mean);
    cell.std = std::sqrt(sq / static_cast<double>(present.size() - 1));
  }
  return cell;
}

}  // namespace

void validate(const RunConfig& config) {
  if (config.methods.empty()) throw ConfigError("no methods configured");
  if (config.target_fprs.empty()) throw ConfigError("no target FPRs configured");
  for (double f : config.target_fprs) {
    if (!(f > 0.0 && f < 1.0)) throw ConfigError("target FPR " + std::to_string(f) + " outside (0, 1)");
  }
  if (config.clusters < 1) throw ConfigError("clusters must be >= 1");
  if (config.bins < 0) throw ConfigError("bins must be >= 0");
  if (config.ece_bins < 1) throw ConfigError("ece bins must be >= 1");
  if (config.curve_points < 2) throw ConfigError("curve points must be >= 2");
  if (config.calibrator == CalibratorKind::kIdentity) throw ConfigError("identity is not a calibrator");
  for (MethodKind m : config.methods) {
    if ((m == MethodKind::kOracle || m == MethodKind::kGst) && config.attribute_names.empty()) {
      throw ConfigError(std::string(to_string(m)) + " needs --attributes");
    }
  }
  std::set<MethodKind> unique(config.methods.begin(), config.methods.end());
  if (unique.size() != config.methods.size()) throw ConfigError("duplicate method in list");
}

std::string rate_family(std::string_view rate, double target_fpr) {
  return std::string(rate) + "@" + format_fpr(target_fpr);
}

const MethodReport* MetricsReport::find(std::string_view method) const {
  for (const auto& m : methods) {
    if (m.method == method) return &m;
  }
  return nullptr;
}

bool MetricsReport::has_fit_failures() const {
  return std::any_of(methods.begin(), methods.end(), [](const MethodReport& m) { return !m.errors.empty(); });
}

std::vector<CurvePoint> fpr_curve(const LabeledConfidences& data, int points) {
  std::vector<double> imposters;
  for (std::size_t i = 0; i < data.size(); ++i) {
    if (data.labels[i] == 0) imposters.push_back(data.values[i]);
  }
  std::vector<CurvePoint> curve;
  if (imposters.empty() || points < 2) return curve;
  std::sort(imposters.begin(), imposters.end());
  const std::size_t n = imposters.size();
  std::vector<double> thresholds;
  for (int q = 0; q < points; ++q) {
    std::size_t idx = static_cast<std::size_t>(q) * (n - 1) / static_cast<std::size_t>(points - 1);
    if (thresholds.empty() || thresholds.back() != imposters[idx]) thresholds.push_back(imposters[idx]);
  }
  for (double t : thresholds) {
    CurvePoint p;
    p.threshold = t;
    p.global_fpr = *error_rate(data.values, data.labels, t, ErrorRate::kFpr);
    p.subgroup_fpr = subgroup_rates(data, t, ErrorRate::kFpr);
    curve.push_back(std::move(p));
  }
  return curve;
}

MetricsReport run_cross_validation(const Dataset& ds, const RunConfig& config) {
  validate(config);
  if (ds.fold_count() < 2) throw ConfigError("cross-validation needs at least 2 folds");
  if (config.folds != 0 && config.folds != ds.fold_count()) {
    throw ConfigError("dataset has " + std::to_string(ds.fold_count()) + " folds, config expects " +
                      std::to_string(config.folds));
  }

  std::vector<std::string> pair_groups;
  pair_groups.reserve(ds.pairs().size());
  std::set<std::string> names;
  for (const auto& p : ds.pairs()) {
    pair_groups.push_back(config.attribute_names.empty() ? std::string(kIntergroup)
                                                         : subgroup_key(p, config.attribute_names));
    if (pair_groups.back() != kIntergroup) names.insert(pair_groups.back());
  }
  const std::vector<std::string> subgroups(names.begin(), names.end());

  const int folds = ds.fold_count();
  std::vector<FoldOutcome> outcomes(static_cast<std::size_t>(folds));
  std::atomic<int> next{0};
  std::mutex error_mutex;
  std::exception_ptr failure;
  auto worker = [&] {
    for (int f = next++; f < folds; f = next++) {
      try {
        outcomes[static_cast<std::size_t>(f)] = FoldRunner(ds, config, f, pair_groups, subgroups).run();
      } catch (...) {
        std::lock_guard lock(error_mutex);
        if (!failure) failure = std::current_exception();
      }
    }
  };
  const int threads = std::min(resolve_threads(config.threads), folds);
  if (threads <= 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (int t = 0; t < threads; ++t) pool.emplace_back(worker);
  }
  if (failure) std::rethrow_exception(failure);

  MetricsReport report;
  report.config = config;
  report.config.threads = 0;
  report.dataset = {ds.pairs().size(), ds.load_report().pairs_dropped, folds, ds.dimension(), subgroups};
  for (std::size_t m = 0; m < config.methods.size(); ++m) {
    MethodReport mr;
    mr.method = std::string(to_string(config.methods[m]));
    std::map<std::pair<std::string, std::string>, std::vector<std::optional<double>>> grid;
    LabeledConfidences pooled;
    for (int f = 0; f < folds; ++f) {
      auto& mf = outcomes[static_cast<std::size_t>(f)].methods[m];
      mr.errors.insert(mr.errors.end(), mf.errors.begin(), mf.errors.end());
      mr.notes.insert(mr.notes.end(), mf.notes.begin(), mf.notes.end());
      for (const auto& [family, rows] : mf.cells) {
        for (const auto& [row, value] : rows) {
          auto& slot = grid[{family, row}];
          slot.resize(static_cast<std::size_t>(folds));
          slot[static_cast<std::size_t>(f)] = value;
        }
      }
      for (std::size_t i = 0; i < mf.test_outputs.size(); ++i) {
        pooled.push_back(mf.test_outputs.values[i], mf.test_outputs.labels[i], mf.test_outputs.subgroups[i]);
      }
    }
    for (const auto& [key, values] : grid) mr.families[key.first][key.second] = aggregate(values);
    mr.fpr_curve = fpr_curve(pooled, config.curve_points);
    report.methods.push_back(std::move(mr));
  }
  return report;
}

}  // namespace faircal
