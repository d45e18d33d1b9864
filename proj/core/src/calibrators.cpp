#include "faircal/calibrators.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>
#include <string>

#include "faircal/binary_io.hpp"
#include "faircal/error.hpp"

namespace faircal {

double rescale_score(double s) {
  return std::clamp((s + 1.0) / 2.0, kRescaleEpsilon, 1.0 - kRescaleEpsilon);
}

std::string_view to_string(CalibratorKind kind) {
  switch (kind) {
    case CalibratorKind::kIdentity: return "identity";
    case CalibratorKind::kBeta: return "beta";
    case CalibratorKind::kBinning: return "binning";
    case CalibratorKind::kIsotonic: return "isotonic";
  }
  return "unknown";
}

CalibratorKind calibrator_from_string(std::string_view name) {
  if (name == "beta") return CalibratorKind::kBeta;
  if (name == "binning") return CalibratorKind::kBinning;
  if (name == "isotonic") return CalibratorKind::kIsotonic;
  if (name == "identity") return CalibratorKind::kIdentity;
  throw ConfigError("unknown calibrator '" + std::string(name) + "'");
}

namespace {

double sigmoid(double z) {
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  double e = std::exp(z);
  return e / (1.0 + e);
}

double softplus(double z) { return z > 0.0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z)); }

double clamp_open(double s) { return std::clamp(s, kRescaleEpsilon, 1.0 - kRescaleEpsilon); }

struct BetaFeatures {
  std::vector<std::array<double, 3>> x;  // ln s, -ln(1 - s), 1
};

BetaFeatures make_features(std::span<const double> rescaled) {
  BetaFeatures f;
  f.x.reserve(rescaled.size());
  for (double s : rescaled) {
    s = clamp_open(s);
    f.x.push_back({std::log(s), -std::log1p(-s), 1.0});
  }
  return f;
}

using Vec3 = std::array<double, 3>;
using Mat3 = std::array<std::array<double, 3>, 3>;

double objective(const BetaFeatures& f, std::span<const int> labels, const Vec3& theta,
                 const std::array<bool, 3>& active, double ridge) {
  double loss = 0.0;
  for (std::size_t i = 0; i < f.x.size(); ++i) {
    double z = theta[0] * f.x[i][0] + theta[1] * f.x[i][1] + theta[2];
    loss += softplus(z) - labels[i] * z;
  }
  loss /= static_cast<double>(f.x.size());
  for (int j = 0; j < 3; ++j) {
    if (active[j]) loss += 0.5 * ridge * theta[j] * theta[j];
  }
  return loss;
}

// Solves H d = rhs restricted to the active coordinates by Cholesky.
Vec3 solve_active(const Mat3& h, const Vec3& rhs, const std::array<bool, 3>& active) {
  std::array<int, 3> idx{};
  int m = 0;
  for (int j = 0; j < 3; ++j) {
    if (active[j]) idx[m++] = j;
  }
  double l[3][3] = {};
  for (int r = 0; r < m; ++r) {
    for (int c = 0; c <= r; ++c) {
      double s = h[idx[r]][idx[c]];
      for (int k = 0; k < c; ++k) s -= l[r][k] * l[c][k];
      if (r == c) {
        if (!(s > 0.0)) throw FitError("beta calibration: Hessian is not positive definite");
        l[r][r] = std::sqrt(s);
      } else {
        l[r][c] = s / l[c][c];
      }
    }
  }
  double y[3] = {};
  for (int r = 0; r < m; ++r) {
    double s = rhs[idx[r]];
    for (int k = 0; k < r; ++k) s -= l[r][k] * y[k];
    y[r] = s / l[r][r];
  }
  double x[3] = {};
  for (int r = m - 1; r >= 0; --r) {
    double s = y[r];
    for (int k = r + 1; k < m; ++k) s -= l[k][r] * x[k];
    x[r] = s / l[r][r];
  }
  Vec3 out{0.0, 0.0, 0.0};
  for (int r = 0; r < m; ++r) out[idx[r]] = x[r];
  return out;
}

constexpr double kMaxBetaMagnitude = 1e4;

Vec3 newton_fit(const BetaFeatures& f, std::span<const int> labels, Vec3 theta, const std::array<bool, 3>& active,
                const BetaFitOptions& options) {
  const double n = static_cast<double>(f.x.size());
  double grad_norm = 0.0;
  for (int iter = 0; iter <= options.max_iter; ++iter) {
    Vec3 g{0.0, 0.0, 0.0};
    Mat3 h{};
    for (std::size_t i = 0; i < f.x.size(); ++i) {
      const auto& x = f.x[i];
      double p = sigmoid(theta[0] * x[0] + theta[1] * x[1] + theta[2]);
      double r = p - labels[i];
      double w = p * (1.0 - p);
      for (int a = 0; a < 3; ++a) {
        g[a] += r * x[a];
        for (int b = 0; b <= a; ++b) h[a][b] += w * x[a] * x[b];
      }
    }
    for (int a = 0; a < 3; ++a) {
      g[a] = active[a] ? g[a] / n + options.ridge * theta[a] : 0.0;
      for (int b = 0; b <= a; ++b) {
        h[a][b] /= n;
        h[b][a] = h[a][b];
      }
      h[a][a] += options.ridge;
    }
    grad_norm = std::sqrt(g[0] * g[0] + g[1] * g[1] + g[2] * g[2]);
    if (grad_norm < options.gradient_tolerance) return theta;
    if (iter == options.max_iter) break;

    Vec3 neg_g{-g[0], -g[1], -g[2]};
    Vec3 step = solve_active(h, neg_g, active);
    double slope = g[0] * step[0] + g[1] * step[1] + g[2] * step[2];
    double current = objective(f, labels, theta, active, options.ridge);
    double t = 1.0;
    Vec3 trial = theta;
    bool accepted = false;
    for (int halving = 0; halving < 60; ++halving) {
      for (int a = 0; a < 3; ++a) trial[a] = theta[a] + t * step[a];
      if (objective(f, labels, trial, active, options.ridge) <= current + 1e-4 * t * slope) {
        accepted = true;
        break;
      }
      t *= 0.5;
    }
    if (!accepted) break;  // no further decrease representable
    theta = trial;
  }
  std::ostringstream msg;
  msg << "beta calibration did not converge (gradient norm " << grad_norm << ")";
  throw FitError(msg.str());
}

void check_fit_inputs(std::span<const double> rescaled, std::span<const int> labels, std::size_t min_size,
                      const char* what) {
  if (rescaled.size() != labels.size()) {
    throw StructuralError(std::string(what) + ": scores and labels differ in length");
  }
  if (rescaled.size() < min_size) {
    throw FitError(std::string(what) + ": needs at least " + std::to_string(min_size) + " samples");
  }
  for (int y : labels) {
    if (y != 0 && y != 1) throw StructuralError(std::string(what) + ": labels must be 0 or 1");
  }
}

void write_array(binary::Writer& w, const std::vector<double>& v) {
  w.u32(static_cast<std::uint32_t>(v.size()));
  for (double x : v) w.f64(x);
}

std::vector<double> read_array(binary::Reader& r) {
  std::vector<double> v(r.u32());
  for (auto& x : v) x = r.f64();
  return v;
}

}  // namespace

CalibrationMap CalibrationMap::beta(BetaParams params) {
  CalibrationMap m;
  m.kind_ = CalibratorKind::kBeta;
  m.beta_ = params;
  return m;
}

CalibrationMap CalibrationMap::binning(std::vector<double> edges, std::vector<double> confidences) {
  if (confidences.empty() || edges.size() + 1 != confidences.size()) {
    throw StructuralError("binning map needs one more confidence than edges");
  }
  if (!std::is_sorted(edges.begin(), edges.end())) throw StructuralError("binning edges must be sorted");
  CalibrationMap m;
  m.kind_ = CalibratorKind::kBinning;
  m.knots_ = std::move(edges);
  m.values_ = std::move(confidences);
  return m;
}

CalibrationMap CalibrationMap::isotonic(std::vector<double> breakpoints, std::vector<double> values) {
  if (breakpoints.empty() || breakpoints.size() != values.size()) {
    throw StructuralError("isotonic map needs matching non-empty breakpoints and values");
  }
  CalibrationMap m;
  m.kind_ = CalibratorKind::kIsotonic;
  m.knots_ = std::move(breakpoints);
  m.values_ = std::move(values);
  return m;
}

double CalibrationMap::apply(double rescaled) const {
  switch (kind_) {
    case CalibratorKind::kIdentity:
      return std::clamp(rescaled, 0.0, 1.0);
    case CalibratorKind::kBeta: {
      double s = clamp_open(rescaled);
      return sigmoid(beta_.a * std::log(s) - beta_.b * std::log1p(-s) + beta_.c);
    }
    case CalibratorKind::kBinning: {
      auto bin = std::upper_bound(knots_.begin(), knots_.end(), rescaled) - knots_.begin();
      return values_[static_cast<std::size_t>(bin)];
    }
    case CalibratorKind::kIsotonic: {
      auto it = std::lower_bound(knots_.begin(), knots_.end(), rescaled);
      std::size_t i = it == knots_.end() ? values_.size() - 1 : static_cast<std::size_t>(it - knots_.begin());
      return std::clamp(values_[i], 0.0, 1.0);
    }
  }
  return 0.0;
}

void CalibrationMap::serialize(std::ostream& out) const {
  binary::Writer w(out);
  w.u8(static_cast<std::uint8_t>(kind_));
  switch (kind_) {
    case CalibratorKind::kIdentity:
      break;
    case CalibratorKind::kBeta:
      write_array(w, {beta_.a, beta_.b, beta_.c});
      break;
    case CalibratorKind::kBinning:
    case CalibratorKind::kIsotonic:
      write_array(w, knots_);
      write_array(w, values_);
      break;
  }
}

CalibrationMap CalibrationMap::deserialize(std::istream& in) {
  binary::Reader r(in);
  std::uint8_t tag = r.u8();
  switch (tag) {
    case 0:
      return identity();
    case 1: {
      auto p = read_array(r);
      if (p.size() != 3) throw ParseError("beta map needs 3 parameters", r.offset());
      return beta({p[0], p[1], p[2]});
    }
    case 2: {
      auto edges = read_array(r);
      auto conf = read_array(r);
      return binning(std::move(edges), std::move(conf));
    }
    case 3: {
      auto knots = read_array(r);
      auto vals = read_array(r);
      return isotonic(std::move(knots), std::move(vals));
    }
    default:
      throw ParseError("unknown calibration map kind " + std::to_string(tag), 0);
  }
}

double beta_log_loss(const BetaParams& params, std::span<const double> rescaled, std::span<const int> labels) {
  BetaFeatures f = make_features(rescaled);
  return objective(f, labels, {params.a, params.b, params.c}, {false, false, false}, 0.0);
}

CalibrationMap fit_beta(std::span<const double> rescaled, std::span<const int> labels,
                        const BetaFitOptions& options) {
  check_fit_inputs(rescaled, labels, 2, "fit_beta");
  std::size_t positives = static_cast<std::size_t>(std::count(labels.begin(), labels.end(), 1));
  if (positives == 0 || positives == labels.size()) throw FitError("fit_beta: calibration set has a single class");

  BetaFeatures f = make_features(rescaled);
  std::array<bool, 3> active{true, true, true};
  Vec3 theta{1.0, 1.0, 0.0};
  BetaFitOptions plain = options;
  plain.ridge = 0.0;
  auto fit = [&](const Vec3& start) {
    try {
      Vec3 out = newton_fit(f, labels, start, active, plain);
      if (std::abs(out[0]) + std::abs(out[1]) + std::abs(out[2]) < kMaxBetaMagnitude) return out;
    } catch (const FitError&) {
      if (!(options.ridge > 0.0)) throw;
    }
    if (!(options.ridge > 0.0)) throw FitError("fit_beta: log-loss has no finite minimizer");
    return newton_fit(f, labels, start, active, options);
  };
  while (true) {
    theta = fit(theta);
    if (active[0] && theta[0] < 0.0) {
      active[0] = false;
    } else if (active[1] && theta[1] < 0.0) {
      active[1] = false;
    } else {
      break;
    }
    for (int j = 0; j < 2; ++j) {
      if (!active[j]) theta[j] = 0.0;
    }
  }
  return CalibrationMap::beta({theta[0], theta[1], theta[2]});
}

CalibrationMap fit_binning(std::span<const double> rescaled, std::span<const int> labels, int bins) {
  if (bins < 1) throw StructuralError("fit_binning: bin count must be >= 1");
  check_fit_inputs(rescaled, labels, static_cast<std::size_t>(bins), "fit_binning");
  const std::size_t n = rescaled.size();
  const std::size_t m = static_cast<std::size_t>(bins);

  std::vector<double> sorted(rescaled.begin(), rescaled.end());
  std::sort(sorted.begin(), sorted.end());
  std::vector<double> edges;
  edges.reserve(m - 1);
  for (std::size_t i = 1; i < m; ++i) edges.push_back(sorted[i * n / m]);

  std::vector<double> positives(m, 0.0);
  std::vector<double> counts(m, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    auto bin = static_cast<std::size_t>(std::upper_bound(edges.begin(), edges.end(), rescaled[i]) - edges.begin());
    counts[bin] += 1.0;
    positives[bin] += labels[i];
  }
  // Empty bins (from tied edges) are unreachable by apply() except at the
  // extremes; they inherit the nearest preceding non-empty confidence.
  std::vector<double> conf(m, 0.0);
  std::size_t first_nonempty = 0;
  while (counts[first_nonempty] == 0.0) ++first_nonempty;
  double carry = positives[first_nonempty] / counts[first_nonempty];
  for (std::size_t b = 0; b < m; ++b) {
    if (counts[b] > 0.0) carry = positives[b] / counts[b];
    conf[b] = carry;
  }
  return CalibrationMap::binning(std::move(edges), std::move(conf));
}

CalibrationMap fit_isotonic(std::span<const double> rescaled, std::span<const int> labels) {
  check_fit_inputs(rescaled, labels, 1, "fit_isotonic");
  std::vector<std::size_t> order(rescaled.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return rescaled[a] < rescaled[b]; });

  struct Block {
    double sum;
    double weight;
    double upper;  // largest score in the block
  };
  std::vector<Block> stack;
  std::size_t i = 0;
  while (i < order.size()) {
    // Equal scores must share one fitted value.
    double x = rescaled[order[i]];
    Block b{0.0, 0.0, x};
    while (i < order.size() && rescaled[order[i]] == x) {
      b.sum += labels[order[i]];
      b.weight += 1.0;
      ++i;
    }
    stack.push_back(b);
    while (stack.size() > 1) {
      Block& top = stack.back();
      Block& below = stack[stack.size() - 2];
      if (below.sum / below.weight < top.sum / top.weight) break;
      below.sum += top.sum;
      below.weight += top.weight;
      below.upper = top.upper;
      stack.pop_back();
    }
  }
  std::vector<double> knots;
  std::vector<double> values;
  knots.reserve(stack.size());
  values.reserve(stack.size());
  for (const auto& b : stack) {
    knots.push_back(b.upper);
    values.push_back(b.sum / b.weight);
  }
  return CalibrationMap::isotonic(std::move(knots), std::move(values));
}

CalibrationMap fit_calibrator(std::span<const double> rescaled, std::span<const int> labels,
                              const CalibratorOptions& options) {
  switch (options.kind) {
    case CalibratorKind::kBeta:
      return fit_beta(rescaled, labels);
    case CalibratorKind::kBinning: {
      check_fit_inputs(rescaled, labels, 1, "fit_binning");
      int bins = static_cast<int>(std::min<std::size_t>(static_cast<std::size_t>(std::max(options.bins, 1)),
                                                        rescaled.size()));
      return fit_binning(rescaled, labels, bins);
    }
    case CalibratorKind::kIsotonic:
      return fit_isotonic(rescaled, labels);
    case CalibratorKind::kIdentity:
      return CalibrationMap::identity();
  }
  throw ConfigError("unknown calibrator kind");
}

}  // namespace faircal
