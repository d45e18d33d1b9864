#include "faircal/methods.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <unordered_set>

#include "faircal/binary_io.hpp"
#include "faircal/error.hpp"
#include "faircal/metrics.hpp"

namespace faircal {

namespace {

constexpr std::string_view kModelMagic = "FCMM";

std::vector<bool> fold_mask(const Dataset& ds, std::span<const int> folds) {
  std::vector<bool> mask(static_cast<std::size_t>(std::max(ds.fold_count(), 0)), false);
  for (int f : folds) {
    if (f < 0 || f >= ds.fold_count()) {
      throw ConfigError("fold " + std::to_string(f) + " outside [0, " + std::to_string(ds.fold_count()) + ")");
    }
    mask[static_cast<std::size_t>(f)] = true;
  }
  return mask;
}

std::vector<double> unit(std::span<const double> v) {
  double n = 0.0;
  for (double x : v) n += x * x;
  n = std::sqrt(n);
  std::vector<double> out(v.begin(), v.end());
  for (double& x : out) x /= n;
  return out;
}

std::string cluster_key(std::size_t k) { return std::to_string(k); }

std::vector<double> rescaled(std::span<const double> scores) {
  std::vector<double> out;
  out.reserve(scores.size());
  for (double s : scores) out.push_back(rescale_score(s));
  return out;
}

void require_fittable(const CalibrationSet& set, const std::string& name) {
  if (set.scores.size() < 2) {
    throw FitError("calibration set " + name + " has " + std::to_string(set.scores.size()) + " pairs (need >= 2)");
  }
  auto positives = std::count(set.labels.begin(), set.labels.end(), 1);
  if (positives == 0 || static_cast<std::size_t>(positives) == set.labels.size()) {
    throw FitError("calibration set " + name + " contains a single class");
  }
}

CalibrationMap fit_set(const CalibrationSet& set, const std::string& name, const CalibratorOptions& options) {
  require_fittable(set, name);
  try {
    return fit_calibrator(rescaled(set.scores), set.labels, options);
  } catch (const FitError& e) {
    throw FitError("calibration set " + name + ": " + e.what());
  }
}

// Per-image cluster cache so each embedding is assigned once.
class ClusterCache {
 public:
  ClusterCache(const MethodModel& model, const Dataset& ds)
      : model_(model), ds_(ds), cache_(ds.embeddings().size(), kUnset) {}

  std::size_t operator()(std::size_t image) {
    if (cache_[image] == kUnset) cache_[image] = cluster_of(model_, ds_.embeddings()[image].vector);
    return cache_[image];
  }

 private:
  static constexpr std::size_t kUnset = static_cast<std::size_t>(-1);
  const MethodModel& model_;
  const Dataset& ds_;
  std::vector<std::size_t> cache_;
};

CalibrationSet pairs_in(const Dataset& ds, const std::vector<bool>& mask) {
  CalibrationSet set;
  const auto& pairs = ds.pairs();
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    if (!mask[static_cast<std::size_t>(pairs[i].fold)]) continue;
    set.scores.push_back(ds.score(i));
    set.labels.push_back(pairs[i].label);
    set.pair_indices.push_back(i);
  }
  return set;
}

ClusterModel clustering_for(const Dataset& ds, std::span<const int> cal_folds, const MethodOptions& options) {
  if (options.clusters_hint) return *options.clusters_hint;
  auto points = fold_embeddings(ds, cal_folds, options.normalize);
  KMeansOptions km;
  km.k = options.clusters;
  km.seed = options.seed;
  km.max_iter = options.kmeans_max_iter;
  km.tol = options.kmeans_tol;
  return fit_kmeans(points, km);
}

double output_with_cache(const MethodModel& model, const Dataset& ds, const PairRecord& pair, double score,
                         ClusterCache* cache, bool* fell_back) {
  switch (model.kind) {
    case MethodKind::kBaseline:
      return model.maps.at(std::string(kGlobalKey)).apply(rescale_score(score));
    case MethodKind::kFairCal:
    case MethodKind::kFsn: {
      std::size_t k1 = cache ? (*cache)(pair.index1) : cluster_of(model, ds.vector1(pair));
      std::size_t k2 = cache ? (*cache)(pair.index2) : cluster_of(model, ds.vector2(pair));
      return model.kind == MethodKind::kFairCal ? faircal_confidence(model, k1, k2, score)
                                                : fsn_normalized_score(model, k1, k2, score);
    }
    case MethodKind::kOracle:
      return oracle_confidence(model, subgroup_key(pair, model.attribute_names), score, fell_back);
    case MethodKind::kGst:
      return gst_normalized_score(model, subgroup_key(pair, model.attribute_names), score, fell_back);
  }
  throw ConfigError("unknown method kind");
}

}  // namespace

std::string_view to_string(MethodKind kind) {
  switch (kind) {
    case MethodKind::kBaseline: return "baseline";
    case MethodKind::kFairCal: return "faircal";
    case MethodKind::kOracle: return "oracle";
    case MethodKind::kFsn: return "fsn";
    case MethodKind::kGst: return "gst";
  }
  return "unknown";
}

MethodKind method_from_string(std::string_view name) {
  if (name == "baseline") return MethodKind::kBaseline;
  if (name == "faircal") return MethodKind::kFairCal;
  if (name == "oracle") return MethodKind::kOracle;
  if (name == "fsn") return MethodKind::kFsn;
  if (name == "gst") return MethodKind::kGst;
  throw ConfigError("unknown method '" + std::string(name) + "'");
}

std::vector<std::vector<double>> fold_embeddings(const Dataset& ds, std::span<const int> folds, bool normalize) {
  auto mask = fold_mask(ds, folds);
  std::vector<bool> taken(ds.embeddings().size(), false);
  std::vector<std::vector<double>> out;
  auto take = [&](std::size_t image) {
    if (taken[image]) return;
    taken[image] = true;
    const auto& v = ds.embeddings()[image].vector;
    out.push_back(normalize ? unit(v) : v);
  };
  for (const auto& p : ds.pairs()) {
    if (!mask[static_cast<std::size_t>(p.fold)]) continue;
    take(p.index1);
    take(p.index2);
  }
  return out;
}

std::vector<CalibrationSet> build_calibration_sets(const Dataset& ds, std::span<const int> cal_folds,
                                                   const ClusterModel& clusters, bool normalize) {
  auto mask = fold_mask(ds, cal_folds);
  std::vector<CalibrationSet> sets(clusters.k());
  std::vector<std::size_t> cache(ds.embeddings().size(), static_cast<std::size_t>(-1));
  auto cluster = [&](std::size_t image) {
    if (cache[image] == static_cast<std::size_t>(-1)) {
      const auto& v = ds.embeddings()[image].vector;
      cache[image] = normalize ? clusters.assign(unit(v)) : clusters.assign(v);
    }
    return cache[image];
  };
  const auto& pairs = ds.pairs();
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    const auto& p = pairs[i];
    if (!mask[static_cast<std::size_t>(p.fold)]) continue;
    double s = ds.score(i);
    std::size_t k1 = cluster(p.index1);
    std::size_t k2 = cluster(p.index2);
    for (std::size_t k : {k1, k2}) {
      sets[k].scores.push_back(s);
      sets[k].labels.push_back(p.label);
      sets[k].pair_indices.push_back(i);
      if (k1 == k2) break;
    }
  }
  return sets;
}

double set_threshold(std::span<const double> scores, std::span<const int> labels, double target_fpr) {
  double t = threshold_at_fpr(scores, labels, target_fpr);
  if (std::isfinite(t)) return t;
  double top = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (labels[i] == 0) top = std::max(top, scores[i]);
  }
  return std::nextafter(top, std::numeric_limits<double>::infinity());
}

MethodModel fit_method(MethodKind kind, const Dataset& ds, std::span<const int> cal_folds,
                       const MethodOptions& options) {
  if (cal_folds.empty()) throw ConfigError("fit_method: no calibration folds");
  MethodModel model;
  model.kind = kind;
  model.fit_folds.assign(cal_folds.begin(), cal_folds.end());
  std::sort(model.fit_folds.begin(), model.fit_folds.end());
  model.fit_folds.erase(std::unique(model.fit_folds.begin(), model.fit_folds.end()), model.fit_folds.end());
  auto mask = fold_mask(ds, model.fit_folds);

  CalibrationSet all = pairs_in(ds, mask);
  auto fit_global = [&] {
    model.maps.emplace(std::string(kGlobalKey), fit_set(all, "global", options.calibrator));
    model.set_sizes.emplace(std::string(kGlobalKey), all.scores.size());
  };

  switch (kind) {
    case MethodKind::kBaseline:
      fit_global();
      break;

    case MethodKind::kFairCal: {
      model.normalize = options.normalize;
      model.clusters = clustering_for(ds, model.fit_folds, options);
      auto sets = build_calibration_sets(ds, model.fit_folds, *model.clusters, model.normalize);
      for (std::size_t k = 0; k < sets.size(); ++k) {
        std::string key = cluster_key(k);
        model.maps.emplace(key, fit_set(sets[k], "cluster " + key, options.calibrator));
        model.set_sizes.emplace(key, sets[k].scores.size());
      }
      break;
    }

    case MethodKind::kOracle: {
      if (options.attribute_names.empty()) throw ConfigError("oracle needs sensitive attribute names");
      model.attribute_names = options.attribute_names;
      fit_global();
      std::map<std::string, CalibrationSet> by_group;
      for (std::size_t j = 0; j < all.pair_indices.size(); ++j) {
        std::string g = subgroup_key(ds.pairs()[all.pair_indices[j]], model.attribute_names);
        if (g == kIntergroup) continue;
        auto& set = by_group[g];
        set.scores.push_back(all.scores[j]);
        set.labels.push_back(all.labels[j]);
        set.pair_indices.push_back(all.pair_indices[j]);
      }
      for (const auto& [g, set] : by_group) {
        model.maps.emplace(g, fit_set(set, "subgroup " + g, options.calibrator));
        model.set_sizes.emplace(g, set.scores.size());
      }
      break;
    }

    case MethodKind::kFsn: {
      model.normalize = options.normalize;
      model.reference_fpr = options.reference_fpr;
      model.clusters = clustering_for(ds, model.fit_folds, options);
      model.global_threshold = set_threshold(all.scores, all.labels, options.reference_fpr);
      auto sets = build_calibration_sets(ds, model.fit_folds, *model.clusters, model.normalize);
      for (std::size_t k = 0; k < sets.size(); ++k) {
        std::string key = cluster_key(k);
        if (std::find(sets[k].labels.begin(), sets[k].labels.end(), 0) == sets[k].labels.end()) {
          throw FitError("calibration set cluster " + key + " has no imposter pairs");
        }
        double t_k = set_threshold(sets[k].scores, sets[k].labels, options.reference_fpr);
        model.shifts.emplace(key, model.global_threshold - t_k);
        model.thresholds.emplace(key, t_k);
        model.set_sizes.emplace(key, sets[k].scores.size());
      }
      break;
    }

    case MethodKind::kGst: {
      if (options.attribute_names.empty()) throw ConfigError("gst needs sensitive attribute names");
      model.attribute_names = options.attribute_names;
      model.reference_fpr = options.reference_fpr;
      model.global_threshold = set_threshold(all.scores, all.labels, options.reference_fpr);
      std::map<std::string, CalibrationSet> by_group;
      for (std::size_t j = 0; j < all.pair_indices.size(); ++j) {
        std::string g = subgroup_key(ds.pairs()[all.pair_indices[j]], model.attribute_names);
        if (g == kIntergroup) continue;
        by_group[g].scores.push_back(all.scores[j]);
        by_group[g].labels.push_back(all.labels[j]);
      }
      for (const auto& [g, set] : by_group) {
        if (std::find(set.labels.begin(), set.labels.end(), 0) == set.labels.end()) {
          throw FitError("calibration set subgroup " + g + " has no imposter pairs");
        }
        model.thresholds.emplace(g, set_threshold(set.scores, set.labels, options.reference_fpr));
        model.set_sizes.emplace(g, set.scores.size());
      }
      break;
    }
  }
  return model;
}

std::size_t cluster_of(const MethodModel& model, std::span<const double> embedding) {
  if (!model.clusters) throw ConfigError(std::string(to_string(model.kind)) + " model has no clustering");
  return model.normalize ? model.clusters->assign(unit(embedding)) : model.clusters->assign(embedding);
}

double faircal_confidence(const MethodModel& model, std::size_t k1, std::size_t k2, double score) {
  const double s = rescale_score(score);
  const std::string key1 = cluster_key(k1);
  double c1 = model.maps.at(key1).apply(s);
  if (k1 == k2) return c1;
  const std::string key2 = cluster_key(k2);
  double c2 = model.maps.at(key2).apply(s);
  double n1 = static_cast<double>(model.set_sizes.at(key1));
  double n2 = static_cast<double>(model.set_sizes.at(key2));
  double theta = n1 / (n1 + n2);
  return theta * c1 + (1.0 - theta) * c2;
}

double oracle_confidence(const MethodModel& model, const std::string& subgroup, double score, bool* fell_back) {
  if (subgroup == kIntergroup) return 0.0;
  const double s = rescale_score(score);
  auto it = model.maps.find(subgroup);
  if (it == model.maps.end() || subgroup == kGlobalKey) {
    if (fell_back) *fell_back = true;
    return model.maps.at(std::string(kGlobalKey)).apply(s);
  }
  return it->second.apply(s);
}

double fsn_normalized_score(const MethodModel& model, std::size_t k1, std::size_t k2, double score) {
  if (k1 == k2) return (score - model.thresholds.at(cluster_key(k1))) + model.global_threshold;
  double shift1 = model.shifts.at(cluster_key(k1));
  double shift2 = model.shifts.at(cluster_key(k2));
  return score + 0.5 * (shift1 + shift2);
}

double gst_normalized_score(const MethodModel& model, const std::string& subgroup, double score, bool* fell_back) {
  if (subgroup == kIntergroup) return score;
  auto it = model.thresholds.find(subgroup);
  if (it == model.thresholds.end()) {
    if (fell_back) *fell_back = true;
    return score;
  }
  return (score - it->second) + model.global_threshold;
}

double method_output(const MethodModel& model, const Dataset& ds, const PairRecord& pair, double score,
                     bool* fell_back) {
  return output_with_cache(model, ds, pair, score, nullptr, fell_back);
}

MethodOutputs outputs_for(const MethodModel& model, const Dataset& ds, std::span<const int> folds) {
  auto mask = fold_mask(ds, folds);
  MethodOutputs out;
  ClusterCache cache(model, ds);
  ClusterCache* cache_ptr = model.clusters ? &cache : nullptr;
  const auto& pairs = ds.pairs();
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    if (!mask[static_cast<std::size_t>(pairs[i].fold)]) continue;
    bool fell_back = false;
    out.values.push_back(output_with_cache(model, ds, pairs[i], ds.score(i), cache_ptr, &fell_back));
    out.pair_indices.push_back(i);
    if (fell_back) ++out.unseen_subgroups;
  }
  return out;
}

MethodOutputs confidences_for(const MethodModel& model, const Dataset& ds, std::span<const int> eval_folds) {
  for (int f : eval_folds) {
    if (std::find(model.fit_folds.begin(), model.fit_folds.end(), f) != model.fit_folds.end()) {
      throw ProtocolError("evaluation fold " + std::to_string(f) + " was used to fit the " +
                          std::string(to_string(model.kind)) + " model");
    }
  }
  return outputs_for(model, ds, eval_folds);
}

void save_method_model(std::ostream& out, const MethodModel& model) {
  binary::Writer w(out);
  w.bytes(kModelMagic);
  w.u8(static_cast<std::uint8_t>(model.kind));
  // 0: no clustering, 1: clustering on raw embeddings, 2: on unit-normalized.
  w.u8(model.clusters ? (model.normalize ? 2 : 1) : 0);
  if (model.clusters) model.clusters->serialize(out);
  w.u32(static_cast<std::uint32_t>(model.maps.size()));
  for (const auto& [key, map] : model.maps) {
    w.short_string(key);
    map.serialize(out);
    auto size = model.set_sizes.find(key);
    w.u64(size == model.set_sizes.end() ? 0 : size->second);
  }
  auto keyed = [&](const std::map<std::string, double>& table) {
    w.u32(static_cast<std::uint32_t>(table.size()));
    for (const auto& [key, v] : table) {
      w.short_string(key);
      w.f64(v);
      auto size = model.set_sizes.find(key);
      w.u64(size == model.set_sizes.end() ? 0 : size->second);
    }
  };
  keyed(model.shifts);
  keyed(model.thresholds);
  w.f64(model.global_threshold);
  w.f64(model.reference_fpr);
  w.u32(static_cast<std::uint32_t>(model.fit_folds.size()));
  for (int f : model.fit_folds) w.u32(static_cast<std::uint32_t>(f));
  w.u32(static_cast<std::uint32_t>(model.attribute_names.size()));
  for (const auto& name : model.attribute_names) w.short_string(name);
  if (!out) throw IoError("failed writing method model");
}

MethodModel load_method_model(std::istream& in) {
  binary::Reader r(in);
  r.expect_magic(kModelMagic);
  MethodModel model;
  std::uint8_t kind = r.u8();
  if (kind > static_cast<std::uint8_t>(MethodKind::kGst)) throw ParseError("unknown method kind tag", r.offset());
  model.kind = static_cast<MethodKind>(kind);
  std::uint8_t clustering = r.u8();
  if (clustering > 2) throw ParseError("bad clustering flag", r.offset());
  if (clustering != 0) {
    model.normalize = clustering == 2;
    model.clusters = ClusterModel::deserialize(in);
  }
  std::uint32_t map_count = r.u32();
  for (std::uint32_t i = 0; i < map_count; ++i) {
    std::string key = r.short_string();
    model.maps.emplace(key, CalibrationMap::deserialize(in));
    model.set_sizes[key] = r.u64();
  }
  auto keyed = [&](std::map<std::string, double>& table) {
    std::uint32_t n = r.u32();
    for (std::uint32_t i = 0; i < n; ++i) {
      std::string key = r.short_string();
      table.emplace(key, r.f64());
      model.set_sizes[key] = r.u64();
    }
  };
  keyed(model.shifts);
  keyed(model.thresholds);
  model.global_threshold = r.f64();
  model.reference_fpr = r.f64();
  std::uint32_t folds = r.u32();
  for (std::uint32_t i = 0; i < folds; ++i) model.fit_folds.push_back(static_cast<int>(r.u32()));
  std::uint32_t names = r.u32();
  for (std::uint32_t i = 0; i < names; ++i) model.attribute_names.push_back(r.short_string());
  return model;
}

}  // namespace faircal
