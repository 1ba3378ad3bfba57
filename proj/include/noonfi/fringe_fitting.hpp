#pragma once

#include <array>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"
#include "noonfi/experiment_simulator.hpp"
#include "noonfi/fisher_engine.hpp"
#include "noonfi/loss_calibration.hpp"

namespace noonfi {

/// counts(phi) = A0 (1 + sign * V cos(m (phi - phi0))).
struct FringeModel {
  double amplitude = 0.0;
  double visibility = 0.0;
  int harmonic = 2;
  double phase_offset = 0.0;
  int sign = 1;

  double operator()(double phi) const;
  /// Partial derivatives with respect to (A0, V, phi0).
  std::array<double, 3> gradient(double phi) const;
};

/// +1 for outcomes on the constructive side of the fringe at phi = 0
/// (P12, P34, P10, P+), -1 for the complementary ones (P23, P14, P01, P-).
int fringe_sign(const std::string& label);

using Matrix3 = std::array<std::array<double, 3>, 3>;

struct CurveFit {
  std::string label;
  FringeModel model;
  Matrix3 covariance{};  // over (A0, V, phi0)
  bool covariance_valid = false;
  double chi2 = 0.0;
  int points = 0;
  double chi2_red = 0.0;
  int iterations = 0;

  double sigma_visibility() const;
};

struct FitOptions {
  bool shared_visibility = false;
  bool shared_phase = false;
  int max_iterations = 200;
};

struct FitResult {
  int harmonic = 2;
  FitOptions options;
  std::vector<CurveFit> curves;
  double pooled_visibility = 0.0;
  double pooled_sigma = 0.0;
  std::vector<std::string> warnings;
};

class FitError : public std::runtime_error {
 public:
  FitError(const std::string& what, std::vector<double> last_iterate)
      : std::runtime_error(what), last_iterate_(std::move(last_iterate)) {}
  const std::vector<double>& last_iterate() const { return last_iterate_; }

 private:
  std::vector<double> last_iterate_;
};

inline constexpr int kMinFitPoints = 8;

/// Poisson-weighted least squares (sigma^2 = max(counts, 1)) of every label's
/// curve, pooled into one visibility.
FitResult fit_fringes(const FringeScan& scan, int harmonic, const FitOptions& options = {});

struct Band {
  std::string label;
  std::vector<double> phi;
  std::vector<double> central;
  std::vector<double> lower;
  std::vector<double> upper;
};

/// Model +- k sigma_model(phi) from first-order propagation of the covariance.
Band confidence_band(const CurveFit& fit, double k, const std::vector<double>& grid);

struct FisherBand {
  FisherCurve central;
  std::vector<double> lower;
  std::vector<double> upper;
  double visibility = 0.0;
  double visibility_lower = 0.0;
  double visibility_upper = 0.0;
  FisherMaximum max_central;
  FisherMaximum max_lower;
  FisherMaximum max_upper;
  std::vector<std::string> warnings;
};

/// FI curve at the pooled visibility with the envelope obtained at V +- k sigma_V.
/// Uses the coincidence model for harmonic 2 and the single-photon model for harmonic 1.
FisherBand fi_band_from_fit(const FitResult& fit, const LossBudget& budget, double k,
                            const std::vector<double>& grid, Normalization normalization = Normalization::raw);

// Fit JSON: per-curve {label, A0, V, phi0, cov, chi2_red}, pooled {V, sigma_V}.
nlohmann::json to_json(const FitResult& fit);
FitResult fit_from_json(const nlohmann::json& j);

/// phi_rad,central,lower,upper
std::string band_to_csv(const std::vector<double>& phi, const std::vector<double>& central,
                        const std::vector<double>& lower, const std::vector<double>& upper);

}  // namespace noonfi
