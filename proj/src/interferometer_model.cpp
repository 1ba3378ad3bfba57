#include "noonfi/interferometer_model.hpp"

#include <algorithm>
#include <cmath>

#include "noonfi/errors.hpp"
#include "noonfi/io_util.hpp"

namespace noonfi {

void EntangledPairSpec::validate() const {
  if (!std::isfinite(pair_phase)) throw DomainError("pair phase must be finite");
  if (!(degenerate_wavelength_nm > 0.0) || !std::isfinite(degenerate_wavelength_nm)) {
    throw DomainError("wavelength must be positive");
  }
}

NoonProbe::NoonProbe(int n_photons, double arm_balance, PhaseConvention convention)
    : n_photons_(n_photons), arm_balance_(arm_balance), convention_(convention) {
  if (n_photons_ < 1) throw DomainError("N00N probe needs N >= 1");
  if (!(arm_balance_ > 0.0 && arm_balance_ <= 1.0)) {
    throw DomainError("arm balance eta_t must lie in (0, 1], got " + io::format_number(arm_balance_));
  }
}

double NoonProbe::per_photon_phase(double phase) const {
  return convention_ == PhaseConvention::total ? phase / n_photons_ : phase;
}

Visibility::Visibility(double value, int order) : value_(value), order_(order) {
  if (!(value_ >= 0.0 && value_ <= 1.0)) {
    throw DomainError("visibility must lie in [0, 1], got " + io::format_number(value_));
  }
  if (order_ < 1) throw DomainError("visibility order must be >= 1");
}

PhaseLaw harmonic_law(double mean, double amplitude, int harmonic) {
  const double m = harmonic;
  return {[=](double phi) { return mean + amplitude * std::cos(m * phi); },
          [=](double phi) { return -amplitude * m * std::sin(m * phi); }};
}

OutcomeDistribution::OutcomeDistribution(std::vector<Outcome> outcomes, PhaseLaw loss_complement,
                                         double period, int n_photons)
    : outcomes_(std::move(outcomes)),
      loss_complement_(std::move(loss_complement)),
      period_(period),
      n_photons_(n_photons) {
  if (outcomes_.empty()) throw DomainError("distribution needs at least one outcome");
  if (!(period_ > 0.0)) throw DomainError("distribution period must be positive");
  if (n_photons_ < 1) throw DomainError("distribution photon number must be >= 1");
}

std::vector<std::string> OutcomeDistribution::labels() const {
  std::vector<std::string> out;
  out.reserve(outcomes_.size());
  for (const auto& o : outcomes_) out.push_back(o.label);
  return out;
}

std::optional<std::size_t> OutcomeDistribution::index_of(const std::string& label) const {
  for (std::size_t i = 0; i < outcomes_.size(); ++i) {
    if (outcomes_[i].label == label) return i;
  }
  return std::nullopt;
}

namespace {

double clamp_probability(double p, const std::string& what) {
  if (!(p >= -kClampTolerance && p <= 1.0 + kClampTolerance)) {
    throw ConsistencyError(what + " evaluated outside [0, 1]: " + io::format_number(p));
  }
  return std::clamp(p, 0.0, 1.0);
}

}  // namespace

double OutcomeDistribution::probability(std::size_t i, double phi) const {
  const auto& o = outcomes_.at(i);
  return clamp_probability(o.law.probability(phi), o.label);
}

double OutcomeDistribution::derivative(std::size_t i, double phi) const {
  return outcomes_.at(i).law.derivative(phi);
}

double OutcomeDistribution::probability(const std::string& label, double phi) const {
  const auto i = index_of(label);
  if (!i) throw DomainError("unknown outcome label " + label);
  return probability(*i, phi);
}

double OutcomeDistribution::loss_complement(double phi) const {
  return clamp_probability(loss_complement_.probability(phi), "loss complement");
}

double OutcomeDistribution::loss_complement_derivative(double phi) const {
  return loss_complement_.derivative(phi);
}

Visibility visibility_from_relative_loss(double eta_t, int n_photons) {
  if (!(eta_t > 0.0 && eta_t <= 1.0)) {
    throw DomainError("relative transmission eta_t must lie in (0, 1], got " + io::format_number(eta_t));
  }
  if (n_photons < 1) throw DomainError("photon number must be >= 1");
  const double amplitude = std::pow(eta_t, 0.5 * n_photons);
  return Visibility(2.0 * amplitude / (1.0 + amplitude * amplitude), n_photons);
}

OutcomeDistribution noon_output_distribution(const NoonProbe& probe) {
  const int n = probe.n_photons();
  const double arm = std::pow(probe.arm_balance(), 0.5 * n);  // sqrt(eta_t)^N
  const double mean = 0.25 * (1.0 + arm * arm);
  const double amplitude = 0.5 * arm;
  std::vector<Outcome> outcomes{{"P+", harmonic_law(mean, amplitude, n)},
                                {"P-", harmonic_law(mean, -amplitude, n)}};
  return OutcomeDistribution(std::move(outcomes), harmonic_law(1.0 - 2.0 * mean, 0.0, n),
                             2.0 * kPi / n, n);
}

namespace {

void require_order(const Visibility& v, int order) {
  if (v.order() != order) {
    throw DomainError("expected a visibility of order " + std::to_string(order) + ", got order " +
                      std::to_string(v.order()));
  }
}

}  // namespace

OutcomeDistribution coincidence_distribution(const LossBudget& budget, const Visibility& v2) {
  require_order(v2, 2);
  const auto& e = budget.eta();
  const double v = v2.value();
  const double w12 = 0.25 * e[0] * e[1];
  const double w34 = 0.25 * e[2] * e[3];
  const double w23 = 0.25 * e[1] * e[2];
  const double w14 = 0.25 * e[0] * e[3];
  std::vector<Outcome> outcomes{{"P12", harmonic_law(w12, w12 * v, 2)},
                                {"P34", harmonic_law(w34, w34 * v, 2)},
                                {"P23", harmonic_law(w23, -w23 * v, 2)},
                                {"P14", harmonic_law(w14, -w14 * v, 2)}};
  // Closed form rather than 1 - sum so normalization stays an independent check.
  const double lost_mean = 1.0 - (w12 + w34 + w23 + w14);
  const double lost_amplitude = -v * (w12 + w34 - w23 - w14);
  return OutcomeDistribution(std::move(outcomes), harmonic_law(lost_mean, lost_amplitude, 2), kPi, 2);
}

OutcomeDistribution single_photon_distribution(const LossBudget& budget, const Visibility& v1) {
  require_order(v1, 1);
  const auto& e = budget.eta();
  const double v = v1.value();
  const double w10 = 0.25 * (e[0] + e[1]);
  const double w01 = 0.25 * (e[2] + e[3]);
  std::vector<Outcome> outcomes{{"P10", harmonic_law(w10, w10 * v, 1)},
                                {"P01", harmonic_law(w01, -w01 * v, 1)}};
  return OutcomeDistribution(std::move(outcomes),
                             harmonic_law(1.0 - w10 - w01, -v * (w10 - w01), 1), 2.0 * kPi, 1);
}

OutcomeDistribution pnrd_pair_distribution(double eta, double v) {
  if (!(eta > 0.0 && eta <= 1.0)) throw DomainError("efficiency must lie in (0, 1]");
  if (!(v >= 0.0 && v <= 1.0)) throw DomainError("visibility must lie in [0, 1]");
  const double e2 = eta * eta;
  std::vector<Outcome> outcomes{{"P20", harmonic_law(0.25 * e2, 0.25 * e2 * v, 2)},
                                {"P02", harmonic_law(0.25 * e2, 0.25 * e2 * v, 2)},
                                {"P11", harmonic_law(0.5 * e2, -0.5 * e2 * v, 2)}};
  return OutcomeDistribution(std::move(outcomes), harmonic_law(1.0 - e2, 0.0, 2), kPi, 2);
}

FransonParameters franson_effective_parameters(double eta, double v, FransonMode mode) {
  if (!(eta > 0.0 && eta <= 1.0)) throw DomainError("efficiency must lie in (0, 1]");
  if (!(v >= 0.0 && v <= 1.0)) throw DomainError("visibility must lie in [0, 1]");
  return mode == FransonMode::post_selected ? FransonParameters{eta / 2.0, v}
                                            : FransonParameters{eta, v / 2.0};
}

OutcomeDistribution distinguishable_franson_distribution(double eta, double v, FransonMode mode) {
  const auto p = franson_effective_parameters(eta, v, mode);
  return pnrd_pair_distribution(p.eta_eff, p.v_eff);
}

Transcription transcribe_polarization_to_path(const EntangledPairSpec& spec, double eta_t) {
  spec.validate();
  NoonProbe probe(2, eta_t, PhaseConvention::total);
  std::optional<std::string> warning;
  if (spec.basis == PairBasis::path) {
    warning = "pair is already path-entangled; transcription is the identity";
  }
  return {probe, probe.per_photon_phase(spec.pair_phase), warning};
}

}  // namespace noonfi
