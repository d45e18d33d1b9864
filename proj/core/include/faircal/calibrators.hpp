#pragma once

#include <array>
#include <iosfwd>
#include <span>
#include <string_view>
#include <vector>

namespace faircal {

/// Lower/upper clamp applied when mapping cosine scores into (0, 1).
inline constexpr double kRescaleEpsilon = 1e-6;

/// (s + 1) / 2 clamped to [eps, 1 - eps]. Calibration maps operate on this
/// rescaled score.
double rescale_score(double s);

enum class CalibratorKind : unsigned char { kIdentity = 0, kBeta = 1, kBinning = 2, kIsotonic = 3 };

std::string_view to_string(CalibratorKind kind);
CalibratorKind calibrator_from_string(std::string_view name);

/// Beta calibration parameters: sigmoid(a ln s + b (-ln(1 - s)) + c).
struct BetaParams {
  double a = 1.0;
  double b = 1.0;
  double c = 0.0;

  friend bool operator==(const BetaParams&, const BetaParams&) = default;
};

/// A fitted score -> probability map over rescaled scores. Immutable; apply()
/// is pure and thread-safe.
class CalibrationMap {
 public:
  /// Identity map.
  CalibrationMap() = default;

  static CalibrationMap identity() { return {}; }
  static CalibrationMap beta(BetaParams params);
  /// edges.size() == confidences.size() - 1, edges non-decreasing.
  static CalibrationMap binning(std::vector<double> edges, std::vector<double> confidences);
  /// Block upper ends (strictly increasing) and their fitted values.
  static CalibrationMap isotonic(std::vector<double> breakpoints, std::vector<double> values);

  CalibratorKind kind() const noexcept { return kind_; }
  const BetaParams& beta_params() const noexcept { return beta_; }
  const std::vector<double>& knots() const noexcept { return knots_; }
  const std::vector<double>& values() const noexcept { return values_; }

  /// Confidence in [0, 1] for a rescaled score s'.
  double apply(double rescaled) const;

  void serialize(std::ostream& out) const;
  static CalibrationMap deserialize(std::istream& in);

  friend bool operator==(const CalibrationMap&, const CalibrationMap&) = default;

 private:
  CalibratorKind kind_ = CalibratorKind::kIdentity;
  BetaParams beta_;
  std::vector<double> knots_;
  std::vector<double> values_;
};

struct BetaFitOptions {
  double gradient_tolerance = 1e-8;
  int max_iter = 200;
  /// Ridge weight on the mean log-loss, used only when the unpenalized fit
  /// fails or runs off to very large parameters (separable data, fewer than
  /// three distinct scores).
  double ridge = 1e-6;
};

/// Mean log-loss of beta parameters on (s', y).
double beta_log_loss(const BetaParams& params, std::span<const double> rescaled, std::span<const int> labels);

/// Newton fit of the beta map. A negative a (or b) after the fit is fixed at
/// zero and the remaining parameters refit, so the result is monotone.
CalibrationMap fit_beta(std::span<const double> rescaled, std::span<const int> labels,
                        const BetaFitOptions& options = {});

/// Equal-mass histogram binning with m bins.
CalibrationMap fit_binning(std::span<const double> rescaled, std::span<const int> labels, int bins);

/// Pool-adjacent-violators least-squares monotone fit.
CalibrationMap fit_isotonic(std::span<const double> rescaled, std::span<const int> labels);

struct CalibratorOptions {
  CalibratorKind kind = CalibratorKind::kBeta;
  int bins = 10;
};

/// Dispatches to the fitter for options.kind. Binning uses min(bins, n) bins.
CalibrationMap fit_calibrator(std::span<const double> rescaled, std::span<const int> labels,
                              const CalibratorOptions& options);

}  // namespace faircal
