#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <limits>
#include <numeric>
#include <random>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include <unistd.h>

#include "faircal/calibrators.hpp"
#include "faircal/data.hpp"
#include "faircal/synth.hpp"

namespace faircal::testing {

// Scratch directory removed on destruction.
class TempDir {
 public:
  TempDir() {
    static int counter = 0;
    path_ = std::filesystem::temp_directory_path() /
            ("faircal_test_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }
  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
};

inline std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

inline void write_text(const std::filesystem::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::binary);
  out << text;
}

/// Small hand-built dataset: two subgroups, four pairs per fold.
inline Dataset tiny_dataset(int folds = 2) {
  std::vector<Embedding> emb;
  std::vector<PairRecord> pairs;
  std::mt19937_64 rng(7);
  std::normal_distribution<double> n01;
  auto make = [&](const std::string& id) {
    std::vector<double> v(4);
    for (double& x : v) x = n01(rng);
    emb.push_back({id, v});
  };
  for (int f = 0; f < folds; ++f) {
    for (const std::string g : {"A", "B"}) {
      for (int i = 0; i < 4; ++i) make(g + std::to_string(f) + "_" + std::to_string(i));
      auto id = [&](int i) { return g + std::to_string(f) + "_" + std::to_string(i); };
      pairs.push_back({id(0), id(1), 1, f, {{"ethnicity", {g, g}}}, 0, 0});
      pairs.push_back({id(2), id(3), 1, f, {{"ethnicity", {g, g}}}, 0, 0});
      pairs.push_back({id(0), id(2), 0, f, {{"ethnicity", {g, g}}}, 0, 0});
      pairs.push_back({id(1), id(3), 0, f, {{"ethnicity", {g, g}}}, 0, 0});
    }
  }
  return Dataset(std::move(emb), std::move(pairs), {"ethnicity"});
}

/// A small synthetic dataset with clear subgroup disparity.
inline SynthSpec small_synth_spec(int folds = 5, std::uint64_t seed = 3) {
  SynthSpec spec;
  spec.subgroups = {{"lo", 40, 6, 0.10, 0.08}, {"hi", 40, 6, 0.16, 0.25}};
  spec.dim = 16;
  spec.genuine_pairs_per_id = 6;
  spec.imposter_pairs_per_id = 10;
  spec.folds = folds;
  spec.seed = seed;
  return spec;
}

namespace oracle {

/// Least-squares isotonic fit by dynamic programming over a value grid.
/// Points sharing a score are forced to share a value. Returns per-point
/// fitted values in input order.
inline std::vector<double> isotonic_grid(std::span<const double> scores, std::span<const int> labels,
                                         double step = 1e-3) {
  const std::size_t n = scores.size();
  std::vector<double> distinct(scores.begin(), scores.end());
  std::sort(distinct.begin(), distinct.end());
  distinct.erase(std::unique(distinct.begin(), distinct.end()), distinct.end());
  const std::size_t groups = distinct.size();
  std::vector<double> sum(groups, 0.0), count(groups, 0.0), sumsq(groups, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    auto g = static_cast<std::size_t>(std::lower_bound(distinct.begin(), distinct.end(), scores[i]) - distinct.begin());
    sum[g] += labels[i];
    sumsq[g] += labels[i] * labels[i];
    count[g] += 1.0;
  }
  const auto levels = static_cast<std::size_t>(std::llround(1.0 / step)) + 1;
  auto value = [&](std::size_t l) { return static_cast<double>(l) * step; };
  auto cost = [&](std::size_t g, std::size_t l) {
    double v = value(l);
    return sumsq[g] - 2.0 * v * sum[g] + count[g] * v * v;
  };
  std::vector<std::vector<double>> best(groups, std::vector<double>(levels));
  std::vector<std::vector<std::size_t>> arg(groups, std::vector<std::size_t>(levels));
  for (std::size_t l = 0; l < levels; ++l) {
    best[0][l] = cost(0, l);
    arg[0][l] = l;
  }
  for (std::size_t g = 1; g < groups; ++g) {
    double run = std::numeric_limits<double>::infinity();
    std::size_t run_arg = 0;
    for (std::size_t l = 0; l < levels; ++l) {
      if (best[g - 1][l] < run) {
        run = best[g - 1][l];
        run_arg = l;
      }
      best[g][l] = run + cost(g, l);
      arg[g][l] = run_arg;
    }
  }
  std::vector<std::size_t> level(groups);
  level[groups - 1] = static_cast<std::size_t>(
      std::min_element(best[groups - 1].begin(), best[groups - 1].end()) - best[groups - 1].begin());
  for (std::size_t g = groups - 1; g > 0; --g) level[g - 1] = arg[g][level[g]];
  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    auto g = static_cast<std::size_t>(std::lower_bound(distinct.begin(), distinct.end(), scores[i]) - distinct.begin());
    out[i] = value(level[g]);
  }
  return out;
}

inline double beta_loss(double a, double b, double c, std::span<const double> s, std::span<const int> y) {
  double total = 0.0;
  for (std::size_t i = 0; i < s.size(); ++i) {
    double z = a * std::log(s[i]) - b * std::log(1.0 - s[i]) + c;
    // log(1 + e^z) - y z, computed stably
    double softplus = z > 0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z));
    total += softplus - y[i] * z;
  }
  return total / static_cast<double>(s.size());
}

struct BetaGridResult {
  double a, b, c, loss;
};

/// Coarse-to-fine grid search for the log-loss minimizer with a, b >= 0. The
/// box is re-centred at the same step while the best point sits on its edge,
/// then halved.
inline BetaGridResult beta_grid(std::span<const double> s, std::span<const int> y, double resolution = 1e-3) {
  double lo[3] = {0.0, 0.0, -12.0};
  double hi[3] = {12.0, 12.0, 12.0};
  BetaGridResult best{0, 0, 0, std::numeric_limits<double>::infinity()};
  const int steps = 24;
  double h[3];
  for (int k = 0; k < 3; ++k) h[k] = (hi[k] - lo[k]) / steps;
  for (int sweep = 0; sweep < 1000; ++sweep) {
    for (int i = 0; i <= steps; ++i) {
      for (int j = 0; j <= steps; ++j) {
        for (int l = 0; l <= steps; ++l) {
          double a = lo[0] + i * h[0], b = lo[1] + j * h[1], c = lo[2] + l * h[2];
          double loss = beta_loss(a, b, c, s, y);
          if (loss < best.loss) best = {a, b, c, loss};
        }
      }
    }
    double centre[3] = {best.a, best.b, best.c};
    bool on_edge = false;
    for (int k = 0; k < 3; ++k) {
      bool pinned = k < 2 && lo[k] == 0.0 && centre[k] == 0.0;
      if (!pinned && (centre[k] <= lo[k] + 0.5 * h[k] || centre[k] >= hi[k] - 0.5 * h[k])) on_edge = true;
    }
    if (!on_edge) {
      if (std::max({h[0], h[1], h[2]}) <= resolution) break;
      for (double& v : h) v *= 0.5;
    }
    for (int k = 0; k < 3; ++k) {
      lo[k] = centre[k] - 0.5 * steps * h[k];
      hi[k] = centre[k] + 0.5 * steps * h[k];
      if (k < 2 && lo[k] < 0.0) {
        hi[k] -= lo[k];
        lo[k] = 0.0;
      }
    }
  }
  return best;
}

/// Probability that a random genuine outranks a random imposter, ties 1/2.
inline double mann_whitney(std::span<const double> v, std::span<const int> y) {
  double wins = 0.0, total = 0.0;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (y[i] != 1) continue;
    for (std::size_t j = 0; j < v.size(); ++j) {
      if (y[j] != 0) continue;
      total += 1.0;
      if (v[i] > v[j]) wins += 1.0;
      else if (v[i] == v[j]) wins += 0.5;
    }
  }
  return wins / total;
}

inline double fpr_at(std::span<const double> v, std::span<const int> y, double t) {
  double fp = 0.0, neg = 0.0;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (y[i] != 0) continue;
    neg += 1.0;
    if (v[i] >= t) fp += 1.0;
  }
  return fp / neg;
}

/// Smallest candidate threshold among imposter values meeting the target,
/// found by scanning every candidate; +inf when none qualifies.
inline double threshold_scan(std::span<const double> v, std::span<const int> y, double target) {
  double best = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (y[i] == 0 && fpr_at(v, y, v[i]) <= target) best = std::min(best, v[i]);
  }
  return best;
}

/// KS by recomputing both cumulative sums from scratch at every rank.
inline double ks_direct(std::span<const double> c, std::span<const int> y) {
  const std::size_t n = c.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return c[a] < c[b]; });
  double worst = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    double label_mass = 0.0, conf_mass = 0.0;
    for (std::size_t j = 0; j <= i; ++j) {
      label_mass += y[order[j]];
      conf_mass += c[order[j]];
    }
    worst = std::max(worst, std::abs(label_mass - conf_mass) / static_cast<double>(n));
  }
  return worst;
}

inline double ece_direct(std::span<const double> c, std::span<const int> y, int bins) {
  double total = 0.0;
  for (int b = 0; b < bins; ++b) {
    double lo = static_cast<double>(b) / bins, hi = static_cast<double>(b + 1) / bins;
    double cnt = 0.0, acc = 0.0, conf = 0.0;
    for (std::size_t i = 0; i < c.size(); ++i) {
      bool in = c[i] >= lo && (c[i] < hi || (b == bins - 1 && c[i] <= 1.0));
      if (!in) continue;
      cnt += 1.0;
      acc += y[i];
      conf += c[i];
    }
    if (cnt > 0) total += std::abs(acc - conf) / static_cast<double>(c.size());
  }
  return total;
}

inline double brier_direct(std::span<const double> c, std::span<const int> y) {
  double total = 0.0;
  for (std::size_t i = 0; i < c.size(); ++i) total += (y[i] - c[i]) * (y[i] - c[i]);
  return total / static_cast<double>(c.size());
}

inline std::size_t nearest_centroid(std::span<const double> centroids, std::size_t dim, std::span<const double> x) {
  std::size_t best = 0;
  double best_d = std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; k * dim < centroids.size(); ++k) {
    double d = 0.0;
    for (std::size_t j = 0; j < dim; ++j) d += (x[j] - centroids[k * dim + j]) * (x[j] - centroids[k * dim + j]);
    if (d < best_d) {
      best_d = d;
      best = k;
    }
  }
  return best;
}

/// Bin of the point with rank r among n distinct sorted scores, for m
/// equal-mass bins with edges at ranks floor(i n / m).
inline std::size_t equal_mass_bin(std::size_t r, std::size_t n, std::size_t m) {
  std::size_t bin = 0;
  for (std::size_t i = 1; i < m; ++i) {
    if (i * n / m <= r) ++bin;
  }
  return bin;
}

}  // namespace oracle

}  // namespace faircal::testing
