#pragma once

#include <cstddef>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "noonfi/loss_calibration.hpp"

namespace noonfi {

inline constexpr double kPi = 3.14159265358979323846;

/// Laws may overshoot [0, 1] by this much from rounding before it is an error.
inline constexpr double kClampTolerance = 1e-12;

enum class PairBasis { polarization, path };

/// Two-photon source state. In the polarization basis this is (|HH> + |VV>)/sqrt(2);
/// in the path basis it is already the two-mode N00N state of the interferometer.
struct EntangledPairSpec {
  PairBasis basis = PairBasis::polarization;
  double pair_phase = 0.0;  // total phase Phi accumulated by the pair, radians
  double degenerate_wavelength_nm = 1560.61;

  void validate() const;
};

enum class PhaseConvention {
  per_photon,  // phases are the per-photon phi
  total,       // phases are Phi = N * phi
};

class NoonProbe {
 public:
  NoonProbe(int n_photons, double arm_balance, PhaseConvention convention = PhaseConvention::per_photon);

  int n_photons() const { return n_photons_; }
  double arm_balance() const { return arm_balance_; }
  PhaseConvention convention() const { return convention_; }

  /// Converts a phase expressed in this probe's convention to the per-photon phase.
  double per_photon_phase(double phase) const;

  bool operator==(const NoonProbe&) const = default;

 private:
  int n_photons_;
  double arm_balance_;
  PhaseConvention convention_;
};

class Visibility {
 public:
  Visibility(double value, int order);

  double value() const { return value_; }
  int order() const { return order_; }

 private:
  double value_;
  int order_;
};

using PhaseFunction = std::function<double(double)>;

/// A phase-parametrized probability with its analytic phase derivative.
struct PhaseLaw {
  PhaseFunction probability;
  PhaseFunction derivative;
};

/// mean + amplitude * cos(harmonic * phi).
PhaseLaw harmonic_law(double mean, double amplitude, int harmonic);

struct Outcome {
  std::string label;
  PhaseLaw law;
};

/// Labeled outcome laws of one measurement plus the probability that none of
/// them fires (pair or photon lost). Immutable once built.
class OutcomeDistribution {
 public:
  OutcomeDistribution(std::vector<Outcome> outcomes, PhaseLaw loss_complement, double period,
                      int n_photons);

  std::size_t size() const { return outcomes_.size(); }
  const std::string& label(std::size_t i) const { return outcomes_.at(i).label; }
  std::vector<std::string> labels() const;
  std::optional<std::size_t> index_of(const std::string& label) const;

  /// Clamped to [0, 1]; throws ConsistencyError when the raw law is off by
  /// more than kClampTolerance.
  double probability(std::size_t i, double phi) const;
  double derivative(std::size_t i, double phi) const;
  double probability(const std::string& label, double phi) const;

  double loss_complement(double phi) const;
  double loss_complement_derivative(double phi) const;

  double period() const { return period_; }
  int n_photons() const { return n_photons_; }

 private:
  std::vector<Outcome> outcomes_;
  PhaseLaw loss_complement_;
  double period_;
  int n_photons_;
};

/// V_N = 2 sqrt(eta_t)^N / (1 + eta_t^N) for relative arm transmission eta_t.
Visibility visibility_from_relative_loss(double eta_t, int n_photons);

/// Output-port probabilities P+ and P- of a N00N state with a lossy long arm:
/// (1 + eta_t^N +- 2 sqrt(eta_t)^N cos(N phi)) / 4.
OutcomeDistribution noon_output_distribution(const NoonProbe& probe);

/// Four-detector coincidence laws P12, P34 (same port, +cos 2phi) and
/// P23, P14 (cross port, -cos 2phi), each weighted by eta_i * eta_j / 4.
OutcomeDistribution coincidence_distribution(const LossBudget& budget, const Visibility& v2);

/// Single-photon fringe: P10 = (eta1+eta2)/4 (1 + V1 cos phi),
/// P01 = (eta3+eta4)/4 (1 - V1 cos phi). The no-click law is the loss complement.
OutcomeDistribution single_photon_distribution(const LossBudget& budget, const Visibility& v1);

/// Photon-number-resolved pair outcomes for a two-photon state with overall
/// efficiency eta and fringe visibility v:
/// P20 = P02 = eta^2/4 (1 + v cos 2phi), P11 = eta^2/2 (1 - v cos 2phi).
OutcomeDistribution pnrd_pair_distribution(double eta, double v);

enum class FransonMode {
  post_selected,  // distinguishable terms discarded: efficiency halves
  full,           // distinguishable terms kept: visibility halves
};

struct FransonParameters {
  double eta_eff;
  double v_eff;
};

FransonParameters franson_effective_parameters(double eta, double v, FransonMode mode);

/// Folded Franson interferometer fed by a state with distinguishable
/// short-long/long-short components.
OutcomeDistribution distinguishable_franson_distribution(double eta, double v, FransonMode mode);

struct Transcription {
  NoonProbe probe;
  double per_photon_phase;
  std::optional<std::string> warning;
};

/// Polarization-to-path conversion at a polarizing beam splitter: the pair
/// becomes a N = 2 N00N state carrying the total pair phase.
Transcription transcribe_polarization_to_path(const EntangledPairSpec& spec, double eta_t);

}  // namespace noonfi
