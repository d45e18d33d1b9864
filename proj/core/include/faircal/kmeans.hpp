#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <span>
#include <vector>

namespace faircal {

/// K centroids in row-major order plus the number of fit points per cluster.
/// Immutable after fit.
class ClusterModel {
 public:
  ClusterModel() = default;
  ClusterModel(std::size_t k, std::size_t dim, std::vector<double> centroids,
               std::vector<std::uint64_t> sizes);

  std::size_t k() const noexcept { return k_; }
  std::size_t dimension() const noexcept { return dim_; }
  std::span<const double> centroid(std::size_t i) const { return {centroids_.data() + i * dim_, dim_}; }
  const std::vector<double>& centroids() const noexcept { return centroids_; }
  const std::vector<std::uint64_t>& sizes() const noexcept { return sizes_; }

  /// Nearest centroid in Euclidean distance, lowest index on ties.
  std::size_t assign(std::span<const double> x) const;

  void serialize(std::ostream& out) const;
  static ClusterModel deserialize(std::istream& in);

  friend bool operator==(const ClusterModel&, const ClusterModel&) = default;

 private:
  std::size_t k_ = 0;
  std::size_t dim_ = 0;
  std::vector<double> centroids_;
  std::vector<std::uint64_t> sizes_;
};

struct KMeansOptions {
  std::size_t k = 100;
  std::uint64_t seed = 0;
  int max_iter = 300;
  double tol = 1e-6;
};

struct KMeansFit {
  ClusterModel model;
  /// Sum of squared distances after each assignment step.
  std::vector<double> objective;
  int iterations = 0;
  bool converged = false;
};

/// Lloyd iterations from a seeded k-means++ start. Stops once the largest
/// centroid move drops below tol. An empty cluster is re-seeded at the point
/// farthest from its assigned centroid. Throws StructuralError when k exceeds
/// the number of distinct points or the points disagree in dimension.
KMeansFit fit_kmeans_traced(std::span<const std::vector<double>> points, const KMeansOptions& options);

ClusterModel fit_kmeans(std::span<const std::vector<double>> points, const KMeansOptions& options);

}  // namespace faircal
