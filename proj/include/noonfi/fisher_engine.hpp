#pragma once

#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "noonfi/interferometer_model.hpp"
#include "noonfi/loss_calibration.hpp"

namespace noonfi {

// Probabilities at or below this are treated as zero in the FI sum.
inline constexpr double kFisherProbabilityFloor = 1e-12;
// Terms above this (with p below the floor) mark the phase as singular.
inline constexpr double kFisherTermCap = 1e12;
inline constexpr double kFiniteDifferenceStep = 1e-6;
inline constexpr double kDefaultMaxTolerance = 1e-10;
inline constexpr int kDefaultPointsPerPeriod = 2048;

enum class DerivativeMode { analytic, finite_difference };

struct FisherOptions {
  DerivativeMode derivative = DerivativeMode::analytic;
  /// Count the "nothing detected" event as an outcome.
  bool include_loss_outcome = false;
};

struct FisherPoint {
  double value = 0.0;
  bool singular = false;
};

/// sum_k p_k'(phi)^2 / p_k(phi) with the near-zero rules applied per term.
/// Throws DomainError when every outcome vanishes at phi.
FisherPoint evaluate_fisher(const OutcomeDistribution& dist, double phi, const FisherOptions& options = {});

/// Same as evaluate_fisher but throws DomainError at singular phases.
double fisher_information(const OutcomeDistribution& dist, double phi, const FisherOptions& options = {});

enum class Normalization { raw, per_photon };

std::string to_string(Normalization n);
Normalization normalization_from_string(const std::string& name);

struct FisherCurve {
  std::vector<double> phi;
  std::vector<double> values;
  Normalization normalization = Normalization::raw;
  int n_photons = 1;
  /// Grid indices where the FI is singular; their value is stored as 0.
  std::vector<std::size_t> singular;
};

/// Pointwise FI over a strictly increasing grid, divided by N for per_photon.
FisherCurve fisher_curve(const OutcomeDistribution& dist, const std::vector<double>& grid,
                         Normalization normalization = Normalization::raw,
                         const FisherOptions& options = {});

/// n evenly spaced points on [start, stop] inclusive.
std::vector<double> linear_grid(double start, double stop, std::size_t n);

struct FisherMaximum {
  double phi = 0.0;
  double value = 0.0;
  std::size_t singular_points = 0;
  std::vector<std::string> warnings;
};

/// Global maximum over one period: dense grid followed by golden-section
/// refinement of the best bracket until its width is below tol.
FisherMaximum max_fisher(const OutcomeDistribution& dist, double tol = kDefaultMaxTolerance,
                         const FisherOptions& options = {}, int points_per_period = kDefaultPointsPerPeriod);

/// How the four line transmissions are grouped in the closed-form two-photon maximum.
enum class Pairing {
  channel_sums,  // (eta1 + eta3)(eta2 + eta4): sum of all four coincidence weights
  mixed_sums,    // (eta1 + eta4)(eta2 + eta3)
};

std::string to_string(Pairing p);
Pairing pairing_from_string(const std::string& name);

/// Two-photon FI at the quadrature phase pi/4: V2^2 * product of pairwise sums.
double closed_form_f2_max(const LossBudget& budget, const Visibility& v2,
                          Pairing pairing = Pairing::channel_sums);

/// Single-photon FI at the quadrature phase pi/2: V1^2 (eta1 + eta2 + eta3 + eta4) / 4.
double closed_form_f1_max(const LossBudget& budget, const Visibility& v1);

/// R = f2_max / (2 f1_max).
double advantage_ratio(double f2_max, double f1_max);

enum class Method { numeric, closed_form };

std::string to_string(Method m);

struct Warning {
  std::string code;
  std::string message;
  bool operator==(const Warning&) const = default;
};

struct MaximumEstimate {
  double value = 0.0;
  double phi = 0.0;
  Method method = Method::numeric;
  bool operator==(const MaximumEstimate&) const = default;
};

struct ClosedFormRatios {
  double mixed_sums = 0.0;
  double channel_sums = 0.0;
  bool operator==(const ClosedFormRatios&) const = default;
};

struct AdvantageReport {
  MaximumEstimate f1_max;
  MaximumEstimate f2_max;
  Method method = Method::numeric;
  Pairing pairing = Pairing::channel_sums;
  double ratio_R = 0.0;
  ClosedFormRatios closed_form;
  bool sub_sql = false;
  bool advantage = false;
  std::vector<Warning> warnings;

  bool has_warning(const std::string& code) const;
};

/// Closed-form ratio R = 2 (V2/V1)^2 * pairing product / sum(eta).
double closed_form_ratio(const LossBudget& budget, const Visibility& v1, const Visibility& v2, Pairing pairing);

AdvantageReport advantage_closed_form(const LossBudget& budget, const Visibility& v1, const Visibility& v2,
                                      Pairing pairing = Pairing::channel_sums);

struct AdvantageOptions {
  double tol = kDefaultMaxTolerance;
  int points_per_period = kDefaultPointsPerPeriod;
  /// Include the phase-dependent no-click outcome in the single-photon FI.
  bool include_no_click = false;
};

/// Numerically maximized F1 and F2; also carries both closed-form ratios.
AdvantageReport advantage_numeric(const LossBudget& budget, const Visibility& v1, const Visibility& v2,
                                  const AdvantageOptions& options = {});

struct SubSqlCheck {
  double f2_max = 0.0;
  bool passes = false;
};

/// Lossy two-photon probe with efficiency eta and visibility v: 4 eta^2 v^2 > 2.
SubSqlCheck sub_sql_check(double eta, double v);

struct Scenario {
  enum class Kind {
    none,
    no_relative_loss,  // V1 = V2 = 1, transmissions kept
    pnrd,              // no_relative_loss plus per-line loss recovery
  };
  Kind kind = Kind::none;
  LineValues recovered_db{};  // pnrd only
};

std::string to_string(Scenario::Kind kind);

struct ScenarioResult {
  LossBudget budget;
  Visibility v1;
  Visibility v2;
  AdvantageReport report;
};

/// Re-evaluates the advantage under a hypothetical change of the apparatus.
ScenarioResult scenario_report(const LossBudget& base, const Visibility& v1, const Visibility& v2,
                               const Scenario& scenario, const AdvantageOptions& options = {});

/// Uniform per-line loss recovery (dB) that brings the closed-form R of the
/// no-relative-loss configuration to target_ratio.
double recovery_for_target_ratio(const LossBudget& base, double target_ratio,
                                 Pairing pairing = Pairing::channel_sums);

/// Externally reported figures to compare a report against.
struct ReferenceClaims {
  std::optional<double> f1_max;
  std::optional<double> f2_max;
  Normalization normalization = Normalization::per_photon;
  double maxima_tolerance = 0.01;
  std::vector<double> ratios;
  double ratio_tolerance = 0.03;
};

/// Appends discrepancy warnings; returns true when every reported ratio lies
/// within ratio_tolerance of report.ratio_R.
bool compare_with_reference(AdvantageReport& report, const ReferenceClaims& claims);

// AdvantageReport JSON:
// {f1_max:{value,phi,method}, f2_max:{...}, ratio_R,
//  ratio_R_closed_form:{mixed_sums, channel_sums}, sub_sql, advantage, warnings:[...]}
nlohmann::json to_json(const AdvantageReport& report);
AdvantageReport advantage_report_from_json(const nlohmann::json& j);

nlohmann::json to_json(const Warning& w);

}  // namespace noonfi
