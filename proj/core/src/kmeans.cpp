#include "faircal/kmeans.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>

#include "faircal/binary_io.hpp"
#include "faircal/error.hpp"

namespace faircal {

namespace {

constexpr std::string_view kClusterMagic = "FCM1";

double squared_distance(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    double d = a[i] - b[i];
    s += d * d;
  }
  return s;
}

// Uniform in [0, 1) from the top 53 bits, so draws do not depend on the
// standard library's distribution implementation.
double uniform01(std::mt19937_64& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

std::size_t count_distinct(std::span<const std::vector<double>> points) {
  std::vector<const std::vector<double>*> sorted;
  sorted.reserve(points.size());
  for (const auto& p : points) sorted.push_back(&p);
  std::sort(sorted.begin(), sorted.end(), [](auto* a, auto* b) { return *a < *b; });
  auto last = std::unique(sorted.begin(), sorted.end(), [](auto* a, auto* b) { return *a == *b; });
  return static_cast<std::size_t>(last - sorted.begin());
}

struct Assignment {
  std::size_t cluster = 0;
  double dist2 = 0.0;
};

Assignment nearest(const std::vector<double>& centroids, std::size_t k, std::size_t dim,
                   std::span<const double> x) {
  Assignment best{0, std::numeric_limits<double>::infinity()};
  for (std::size_t c = 0; c < k; ++c) {
    double d = squared_distance(x, {centroids.data() + c * dim, dim});
    if (d < best.dist2) best = {c, d};
  }
  return best;
}

std::vector<double> kmeans_plus_plus(std::span<const std::vector<double>> points, std::size_t k,
                                     std::size_t dim, std::mt19937_64& rng) {
  const std::size_t n = points.size();
  std::vector<double> centroids;
  centroids.reserve(k * dim);
  std::size_t first = std::min(n - 1, static_cast<std::size_t>(uniform01(rng) * static_cast<double>(n)));
  centroids.insert(centroids.end(), points[first].begin(), points[first].end());

  std::vector<double> d2(n);
  for (std::size_t i = 0; i < n; ++i) d2[i] = squared_distance(points[i], points[first]);

  for (std::size_t c = 1; c < k; ++c) {
    double total = 0.0;
    for (double v : d2) total += v;
    // total > 0 because k <= distinct points.
    double target = uniform01(rng) * total;
    std::size_t pick = n;
    double acc = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      if (d2[i] <= 0.0) continue;
      acc += d2[i];
      pick = i;
      if (acc > target) break;
    }
    centroids.insert(centroids.end(), points[pick].begin(), points[pick].end());
    std::span<const double> chosen{centroids.data() + c * dim, dim};
    for (std::size_t i = 0; i < n; ++i) d2[i] = std::min(d2[i], squared_distance(points[i], chosen));
  }
  return centroids;
}

}  // namespace

ClusterModel::ClusterModel(std::size_t k, std::size_t dim, std::vector<double> centroids,
                           std::vector<std::uint64_t> sizes)
    : k_(k), dim_(dim), centroids_(std::move(centroids)), sizes_(std::move(sizes)) {
  if (k_ == 0) throw StructuralError("cluster model needs K >= 1");
  if (centroids_.size() != k_ * dim_ || sizes_.size() != k_) {
    throw StructuralError("cluster model arrays do not match K x d");
  }
  for (double v : centroids_) {
    if (!std::isfinite(v)) throw StructuralError("non-finite centroid value");
  }
}

std::size_t ClusterModel::assign(std::span<const double> x) const {
  if (x.size() != dim_) {
    throw StructuralError("assign: dimension " + std::to_string(x.size()) + " does not match model dimension " +
                          std::to_string(dim_));
  }
  return nearest(centroids_, k_, dim_, x).cluster;
}

void ClusterModel::serialize(std::ostream& out) const {
  binary::Writer w(out);
  w.bytes(kClusterMagic);
  w.u32(static_cast<std::uint32_t>(k_));
  w.u32(static_cast<std::uint32_t>(dim_));
  for (double v : centroids_) w.f64(v);
  for (auto s : sizes_) w.u64(s);
}

ClusterModel ClusterModel::deserialize(std::istream& in) {
  binary::Reader r(in);
  r.expect_magic(kClusterMagic);
  std::size_t k = r.u32();
  std::size_t dim = r.u32();
  std::vector<double> centroids(k * dim);
  for (auto& v : centroids) v = r.f64();
  std::vector<std::uint64_t> sizes(k);
  for (auto& s : sizes) s = r.u64();
  return ClusterModel(k, dim, std::move(centroids), std::move(sizes));
}

KMeansFit fit_kmeans_traced(std::span<const std::vector<double>> points, const KMeansOptions& options) {
  if (points.empty()) throw StructuralError("fit_kmeans: no points");
  if (options.k == 0) throw StructuralError("fit_kmeans: K must be >= 1");
  const std::size_t dim = points.front().size();
  for (const auto& p : points) {
    if (p.size() != dim) throw StructuralError("fit_kmeans: points disagree in dimension");
  }
  const std::size_t k = options.k;
  const std::size_t n = points.size();
  if (std::size_t distinct = count_distinct(points); k > distinct) {
    throw StructuralError("fit_kmeans: K=" + std::to_string(k) + " exceeds the " + std::to_string(distinct) +
                          " distinct points");
  }

  std::mt19937_64 rng(options.seed);
  std::vector<double> centroids = kmeans_plus_plus(points, k, dim, rng);

  KMeansFit fit;
  std::vector<Assignment> labels(n);
  std::vector<double> sums(k * dim);
  std::vector<std::size_t> counts(k);
  for (int iter = 0; iter < options.max_iter; ++iter) {
    double objective = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      labels[i] = nearest(centroids, k, dim, points[i]);
      objective += labels[i].dist2;
    }
    fit.objective.push_back(objective);
    fit.iterations = iter + 1;

    std::fill(sums.begin(), sums.end(), 0.0);
    std::fill(counts.begin(), counts.end(), 0);
    for (std::size_t i = 0; i < n; ++i) {
      std::size_t c = labels[i].cluster;
      ++counts[c];
      double* s = sums.data() + c * dim;
      for (std::size_t j = 0; j < dim; ++j) s[j] += points[i][j];
    }
    std::vector<double> next(k * dim);
    for (std::size_t c = 0; c < k; ++c) {
      if (counts[c] == 0) continue;
      for (std::size_t j = 0; j < dim; ++j) {
        next[c * dim + j] = sums[c * dim + j] / static_cast<double>(counts[c]);
      }
    }
    for (std::size_t c = 0; c < k; ++c) {
      if (counts[c] != 0) continue;
      std::size_t far = 0;
      for (std::size_t i = 1; i < n; ++i) {
        if (labels[i].dist2 > labels[far].dist2) far = i;
      }
      std::copy(points[far].begin(), points[far].end(), next.begin() + static_cast<std::ptrdiff_t>(c * dim));
      labels[far].dist2 = 0.0;
    }

    double shift = 0.0;
    for (std::size_t c = 0; c < k; ++c) {
      shift = std::max(shift, std::sqrt(squared_distance({centroids.data() + c * dim, dim},
                                                         {next.data() + c * dim, dim})));
    }
    centroids = std::move(next);
    if (shift < options.tol) {
      fit.converged = true;
      break;
    }
  }

  std::vector<std::uint64_t> sizes(k, 0);
  for (const auto& p : points) ++sizes[nearest(centroids, k, dim, p).cluster];
  fit.model = ClusterModel(k, dim, std::move(centroids), std::move(sizes));
  return fit;
}

ClusterModel fit_kmeans(std::span<const std::vector<double>> points, const KMeansOptions& options) {
  return fit_kmeans_traced(points, options).model;
}

}  // namespace faircal
