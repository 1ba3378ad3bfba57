#include "noonfi/fringe_fitting.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <complex>
#include <sstream>

#include "noonfi/errors.hpp"
#include "noonfi/io_util.hpp"

namespace noonfi {

double FringeModel::operator()(double phi) const {
  return amplitude * (1.0 + sign * visibility * std::cos(harmonic * (phi - phase_offset)));
}

std::array<double, 3> FringeModel::gradient(double phi) const {
  const double arg = harmonic * (phi - phase_offset);
  const double c = std::cos(arg);
  const double s = std::sin(arg);
  return {1.0 + sign * visibility * c, amplitude * sign * c, amplitude * sign * visibility * harmonic * s};
}

int fringe_sign(const std::string& label) {
  if (label == "P12" || label == "P34" || label == "P10" || label == "P+") return 1;
  if (label == "P23" || label == "P14" || label == "P01" || label == "P-") return -1;
  throw DomainError("no fringe sign is defined for outcome label '" + label + "'");
}

double CurveFit::sigma_visibility() const { return std::sqrt(std::max(covariance[1][1], 0.0)); }

namespace {

struct CurveData {
  std::string label;
  int sign;
  std::vector<double> phi;
  std::vector<double> counts;
  std::vector<double> weight;  // 1 / sigma^2
};

/// Parameter slots of one curve inside the joint parameter vector.
struct Slots {
  int amplitude;
  int visibility;
  int phase;
};

constexpr double kTwoPi = 2.0 * kPi;

void check_coverage(const std::vector<double>& phi, int harmonic, const std::string& label) {
  if (phi.size() < static_cast<std::size_t>(kMinFitPoints)) {
    throw DomainError("curve " + label + " has " + std::to_string(phi.size()) + " points; at least " +
                      std::to_string(kMinFitPoints) + " are needed");
  }
  auto sorted = phi;
  std::sort(sorted.begin(), sorted.end());
  std::vector<double> gaps;
  for (std::size_t i = 1; i < sorted.size(); ++i) gaps.push_back(sorted[i] - sorted[i - 1]);
  std::nth_element(gaps.begin(), gaps.begin() + gaps.size() / 2, gaps.end());
  const double span = sorted.back() - sorted.front() + gaps[gaps.size() / 2];
  const double period = kTwoPi / harmonic;
  if (span < period * (1.0 - 1e-9)) {
    throw DomainError("curve " + label + " spans " + io::format_number(span) + " rad, less than one period (" +
                      io::format_number(period) + " rad)");
  }
}

/// Deterministic starting point: mean level, smoothed contrast, Fourier phase.
FringeModel initial_guess(const CurveData& c, int harmonic) {
  const std::size_t n = c.counts.size();
  double mean = 0.0;
  for (double y : c.counts) mean += y;
  mean /= static_cast<double>(n);

  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  std::sort(order.begin(), order.end(), [&](auto a, auto b) { return c.phi[a] < c.phi[b]; });
  double hi = -1e300, lo = 1e300;
  for (std::size_t i = 0; i < n; ++i) {
    const double prev = c.counts[order[i == 0 ? 0 : i - 1]];
    const double next = c.counts[order[i + 1 == n ? n - 1 : i + 1]];
    const double smooth = (prev + c.counts[order[i]] + next) / 3.0;
    hi = std::max(hi, smooth);
    lo = std::min(lo, smooth);
  }
  const double contrast = hi + lo > 0.0 ? (hi - lo) / (hi + lo) : 0.0;

  std::complex<double> fourier{0.0, 0.0};
  for (std::size_t i = 0; i < n; ++i) fourier += c.counts[i] * std::polar(1.0, -harmonic * c.phi[i]);
  double phase = -std::arg(fourier) / harmonic;
  if (c.sign < 0) phase += kPi / harmonic;

  FringeModel m;
  m.amplitude = mean > 0.0 ? mean : 1.0;
  m.visibility = std::clamp(contrast, 0.01, 1.0);
  m.harmonic = harmonic;
  m.phase_offset = phase;
  m.sign = c.sign;
  return m;
}

struct JointProblem {
  std::vector<CurveData> curves;
  std::vector<Slots> slots;
  int harmonic;
  int parameters;

  FringeModel model(const Eigen::VectorXd& theta, std::size_t k) const {
    FringeModel m;
    m.amplitude = theta[slots[k].amplitude];
    m.visibility = theta[slots[k].visibility];
    m.phase_offset = theta[slots[k].phase];
    m.harmonic = harmonic;
    m.sign = curves[k].sign;
    return m;
  }

  int rows() const {
    int n = 0;
    for (const auto& c : curves) n += static_cast<int>(c.phi.size());
    return n;
  }

  /// Weighted residuals and Jacobian; returns chi^2.
  double linearize(const Eigen::VectorXd& theta, Eigen::VectorXd& r, Eigen::MatrixXd& jac) const {
    r.resize(rows());
    jac.setZero(rows(), parameters);
    int row = 0;
    for (std::size_t k = 0; k < curves.size(); ++k) {
      const auto m = model(theta, k);
      const auto& c = curves[k];
      for (std::size_t i = 0; i < c.phi.size(); ++i, ++row) {
        const double w = std::sqrt(c.weight[i]);
        r[row] = (c.counts[i] - m(c.phi[i])) * w;
        const auto g = m.gradient(c.phi[i]);
        jac(row, slots[k].amplitude) += g[0] * w;
        jac(row, slots[k].visibility) += g[1] * w;
        jac(row, slots[k].phase) += g[2] * w;
      }
    }
    return r.squaredNorm();
  }

  double chi2(const Eigen::VectorXd& theta) const {
    double total = 0.0;
    for (std::size_t k = 0; k < curves.size(); ++k) {
      const auto m = model(theta, k);
      const auto& c = curves[k];
      for (std::size_t i = 0; i < c.phi.size(); ++i) {
        const double d = c.counts[i] - m(c.phi[i]);
        total += d * d * c.weight[i];
      }
    }
    return total;
  }
};

struct JointSolution {
  Eigen::VectorXd theta;
  Eigen::MatrixXd covariance;
  bool covariance_valid;
  int iterations;
};

JointSolution levenberg_marquardt(const JointProblem& problem, Eigen::VectorXd theta, int max_iterations) {
  Eigen::VectorXd r;
  Eigen::MatrixXd jac;
  double chi2 = problem.linearize(theta, r, jac);
  double lambda = 1e-3;
  bool converged = false;
  int iter = 0;
  for (; iter < max_iterations && !converged; ++iter) {
    const Eigen::MatrixXd jtj = jac.transpose() * jac;
    const Eigen::VectorXd jtr = jac.transpose() * r;
    bool accepted = false;
    while (!accepted) {
      Eigen::MatrixXd damped = jtj;
      for (int i = 0; i < problem.parameters; ++i) damped(i, i) += lambda * std::max(jtj(i, i), 1e-300);
      const Eigen::VectorXd step = damped.ldlt().solve(jtr);
      const Eigen::VectorXd trial = theta + step;
      const double trial_chi2 = problem.chi2(trial);
      if (std::isfinite(trial_chi2) && trial_chi2 <= chi2) {
        const double decrease = chi2 - trial_chi2;
        double rel_step = 0.0;
        for (int i = 0; i < problem.parameters; ++i) {
          rel_step = std::max(rel_step, std::abs(step[i]) / (std::abs(theta[i]) + 1e-12));
        }
        theta = trial;
        chi2 = problem.linearize(theta, r, jac);
        lambda = std::max(lambda / 10.0, 1e-12);
        accepted = true;
        converged = decrease <= 1e-12 * chi2 + 1e-24 || rel_step <= 1e-12;
      } else {
        lambda *= 10.0;
        if (lambda > 1e16) {
          // No downhill step exists at machine precision: this is the minimum.
          accepted = true;
          converged = true;
        }
      }
    }
  }
  if (!converged) {
    throw FitError("fringe fit did not converge after " + std::to_string(max_iterations) + " iterations",
                   std::vector<double>(theta.data(), theta.data() + theta.size()));
  }

  const Eigen::MatrixXd jtj = jac.transpose() * jac;
  Eigen::FullPivLU<Eigen::MatrixXd> lu(jtj);
  JointSolution out{theta, Eigen::MatrixXd::Constant(problem.parameters, problem.parameters, std::nan("")),
                    false, iter};
  if (lu.isInvertible()) {
    out.covariance = lu.inverse();
    out.covariance = 0.5 * (out.covariance + out.covariance.transpose());
    out.covariance_valid = out.covariance.allFinite();
  }
  return out;
}

double wrap(double phi, double period) {
  double r = std::fmod(phi, period);
  if (r < 0.0) r += period;
  return r;
}

FitResult solve(const std::vector<CurveData>& curves, int harmonic, const FitOptions& options) {
  JointProblem problem{curves, {}, harmonic, 0};
  int next = 0;
  const int shared_v = options.shared_visibility ? next++ : -1;
  const int shared_p = options.shared_phase ? next++ : -1;
  for (std::size_t k = 0; k < curves.size(); ++k) {
    Slots s{};
    s.amplitude = next++;
    s.visibility = shared_v >= 0 ? shared_v : next++;
    s.phase = shared_p >= 0 ? shared_p : next++;
    problem.slots.push_back(s);
  }
  problem.parameters = next;

  Eigen::VectorXd theta = Eigen::VectorXd::Zero(next);
  std::vector<int> seen(next, 0);
  std::complex<double> phase_sum{0.0, 0.0};
  for (std::size_t k = 0; k < curves.size(); ++k) {
    const auto guess = initial_guess(curves[k], harmonic);
    const auto& s = problem.slots[k];
    theta[s.amplitude] = guess.amplitude;
    theta[s.visibility] += guess.visibility;
    ++seen[s.visibility];
    phase_sum += std::polar(1.0, harmonic * guess.phase_offset);
    theta[s.phase] = guess.phase_offset;
  }
  if (shared_v >= 0) theta[shared_v] /= seen[shared_v];
  if (shared_p >= 0) theta[shared_p] = std::arg(phase_sum) / harmonic;

  const auto solution = levenberg_marquardt(problem, theta, options.max_iterations);

  FitResult result;
  result.harmonic = harmonic;
  result.options = options;
  const double period = kTwoPi / harmonic;
  for (std::size_t k = 0; k < curves.size(); ++k) {
    const auto& s = problem.slots[k];
    CurveFit fit;
    fit.label = curves[k].label;
    fit.model = problem.model(solution.theta, k);
    const int idx[3] = {s.amplitude, s.visibility, s.phase};
    for (int a = 0; a < 3; ++a) {
      for (int b = 0; b < 3; ++b) fit.covariance[a][b] = solution.covariance(idx[a], idx[b]);
    }
    fit.covariance_valid = solution.covariance_valid;
    if (fit.model.visibility < 0.0) {
      // -V cos(x) == V cos(x + pi): keep V >= 0 by moving the offset half a fringe.
      fit.model.visibility = -fit.model.visibility;
      fit.model.phase_offset += kPi / harmonic;
      for (int a = 0; a < 3; ++a) {
        if (a == 1) continue;
        fit.covariance[1][a] = -fit.covariance[1][a];
        fit.covariance[a][1] = -fit.covariance[a][1];
      }
    }
    fit.model.phase_offset = wrap(fit.model.phase_offset, period);
    const auto& c = curves[k];
    fit.points = static_cast<int>(c.phi.size());
    for (std::size_t i = 0; i < c.phi.size(); ++i) {
      const double d = c.counts[i] - fit.model(c.phi[i]);
      fit.chi2 += d * d * c.weight[i];
    }
    fit.chi2_red = fit.points > 3 ? fit.chi2 / (fit.points - 3) : 0.0;
    fit.iterations = solution.iterations;
    result.curves.push_back(fit);
  }
  return result;
}

}  // namespace

FitResult fit_fringes(const FringeScan& scan, int harmonic, const FitOptions& options) {
  if (harmonic != 1 && harmonic != 2) throw DomainError("fringe harmonic must be 1 or 2");
  scan.validate();
  const auto phi = scan.phases();

  std::vector<CurveData> curves;
  for (std::size_t k = 0; k < scan.labels.size(); ++k) {
    CurveData c{scan.labels[k], fringe_sign(scan.labels[k]), phi, scan.curve(k), {}};
    check_coverage(c.phi, harmonic, c.label);
    for (double y : c.counts) c.weight.push_back(1.0 / std::max(y, 1.0));
    curves.push_back(std::move(c));
  }

  FitResult result;
  if (options.shared_visibility || options.shared_phase) {
    result = solve(curves, harmonic, options);
  } else {
    // Independent curves: one small problem each.
    result.harmonic = harmonic;
    result.options = options;
    for (const auto& c : curves) {
      auto single = solve({c}, harmonic, options);
      result.curves.push_back(single.curves.front());
    }
  }

  if (options.shared_visibility) {
    result.pooled_visibility = result.curves.front().model.visibility;
    result.pooled_sigma = result.curves.front().sigma_visibility();
  } else {
    double sum_w = 0.0, sum_wv = 0.0;
    for (const auto& c : result.curves) {
      const double s = c.sigma_visibility();
      if (!c.covariance_valid || !(s > 0.0)) continue;
      sum_w += 1.0 / (s * s);
      sum_wv += c.model.visibility / (s * s);
    }
    if (sum_w > 0.0) {
      result.pooled_visibility = sum_wv / sum_w;
      result.pooled_sigma = 1.0 / std::sqrt(sum_w);
    } else {
      double mean = 0.0;
      for (const auto& c : result.curves) mean += c.model.visibility;
      result.pooled_visibility = mean / static_cast<double>(result.curves.size());
      result.pooled_sigma = 0.0;
      result.warnings.push_back("no curve has a usable visibility variance; pooled V is an unweighted mean");
    }
  }
  if (result.pooled_visibility > 1.0) {
    result.warnings.push_back("pooled visibility " + io::format_number(result.pooled_visibility) +
                              " exceeds 1 and was clamped");
    result.pooled_visibility = 1.0;
  }
  return result;
}

Band confidence_band(const CurveFit& fit, double k, const std::vector<double>& grid) {
  if (!(k >= 0.0)) throw DomainError("band width multiplier must be >= 0");
  if (!fit.covariance_valid) throw DomainError("curve " + fit.label + " has a singular covariance matrix");
  Band band;
  band.label = fit.label;
  band.phi = grid;
  for (double phi : grid) {
    const auto g = fit.model.gradient(phi);
    double var = 0.0;
    for (int a = 0; a < 3; ++a) {
      for (int b = 0; b < 3; ++b) var += g[a] * fit.covariance[a][b] * g[b];
    }
    const double half = k * std::sqrt(std::max(var, 0.0));
    const double y = fit.model(phi);
    band.central.push_back(y);
    band.lower.push_back(y - half);
    band.upper.push_back(y + half);
  }
  return band;
}

FisherBand fi_band_from_fit(const FitResult& fit, const LossBudget& budget, double k,
                            const std::vector<double>& grid, Normalization normalization) {
  if (!(k >= 0.0)) throw DomainError("band width multiplier must be >= 0");
  FisherBand band;
  band.visibility = std::clamp(fit.pooled_visibility, 0.0, 1.0);
  band.visibility_lower = std::max(band.visibility - k * fit.pooled_sigma, 0.0);
  band.visibility_upper = band.visibility + k * fit.pooled_sigma;
  if (band.visibility_upper > 1.0) {
    band.warnings.push_back("upper visibility " + io::format_number(band.visibility_upper) + " clamped to 1");
    band.visibility_upper = 1.0;
  }

  auto distribution = [&](double v) {
    return fit.harmonic == 2 ? coincidence_distribution(budget, Visibility(v, 2))
                             : single_photon_distribution(budget, Visibility(v, 1));
  };
  const auto central = distribution(band.visibility);
  const auto lower = distribution(band.visibility_lower);
  const auto upper = distribution(band.visibility_upper);

  // FI is nondecreasing in V at every phase, so the endpoints bound the band.
  band.central = fisher_curve(central, grid, normalization);
  band.lower = fisher_curve(lower, grid, normalization).values;
  band.upper = fisher_curve(upper, grid, normalization).values;
  band.max_central = max_fisher(central);
  band.max_lower = max_fisher(lower);
  band.max_upper = max_fisher(upper);
  if (normalization == Normalization::per_photon) {
    for (auto* m : {&band.max_central, &band.max_lower, &band.max_upper}) m->value /= fit.harmonic;
  }
  return band;
}

nlohmann::json to_json(const FitResult& fit) {
  auto r = [](double x) { return io::round_significant(x); };
  nlohmann::json curves = nlohmann::json::array();
  for (const auto& c : fit.curves) {
    nlohmann::json cov = nlohmann::json::array();
    for (const auto& row : c.covariance) {
      nlohmann::json jr = nlohmann::json::array();
      for (double x : row) jr.push_back(std::isfinite(x) ? nlohmann::json(r(x)) : nlohmann::json(nullptr));
      cov.push_back(jr);
    }
    curves.push_back({{"label", c.label},
                      {"A0", r(c.model.amplitude)},
                      {"V", r(c.model.visibility)},
                      {"phi0", r(c.model.phase_offset)},
                      {"sign", c.model.sign},
                      {"cov", cov},
                      {"chi2_red", r(c.chi2_red)},
                      {"points", c.points}});
  }
  return {{"harmonic", fit.harmonic},
          {"mode",
           {{"shared_visibility", fit.options.shared_visibility}, {"shared_phase", fit.options.shared_phase}}},
          {"curves", curves},
          {"pooled", {{"V", r(fit.pooled_visibility)}, {"sigma_V", r(fit.pooled_sigma)}}},
          {"warnings", fit.warnings}};
}

FitResult fit_from_json(const nlohmann::json& j) {
  try {
    FitResult fit;
    fit.harmonic = j.at("harmonic").get<int>();
    if (fit.harmonic != 1 && fit.harmonic != 2) throw SchemaError("fit harmonic must be 1 or 2");
    if (j.contains("mode")) {
      fit.options.shared_visibility = j.at("mode").value("shared_visibility", false);
      fit.options.shared_phase = j.at("mode").value("shared_phase", false);
    }
    for (const auto& jc : j.at("curves")) {
      CurveFit c;
      c.label = jc.at("label").get<std::string>();
      c.model.amplitude = jc.at("A0").get<double>();
      c.model.visibility = jc.at("V").get<double>();
      c.model.phase_offset = jc.at("phi0").get<double>();
      c.model.harmonic = fit.harmonic;
      c.model.sign = jc.contains("sign") ? jc.at("sign").get<int>() : fringe_sign(c.label);
      c.covariance_valid = true;
      for (int a = 0; a < 3; ++a) {
        for (int b = 0; b < 3; ++b) {
          const auto& x = jc.at("cov").at(a).at(b);
          c.covariance[a][b] = x.is_null() ? std::nan("") : x.get<double>();
          c.covariance_valid = c.covariance_valid && !x.is_null();
        }
      }
      c.chi2_red = jc.at("chi2_red").get<double>();
      c.points = jc.value("points", 0);
      fit.curves.push_back(c);
    }
    fit.pooled_visibility = j.at("pooled").at("V").get<double>();
    fit.pooled_sigma = j.at("pooled").at("sigma_V").get<double>();
    if (!(fit.pooled_visibility >= 0.0 && fit.pooled_visibility <= 1.0)) {
      throw SchemaError("pooled visibility must lie in [0, 1]");
    }
    if (j.contains("warnings")) fit.warnings = j.at("warnings").get<std::vector<std::string>>();
    return fit;
  } catch (const nlohmann::json::exception& e) {
    throw SchemaError(std::string("fit JSON: ") + e.what());
  }
}

std::string band_to_csv(const std::vector<double>& phi, const std::vector<double>& central,
                        const std::vector<double>& lower, const std::vector<double>& upper) {
  std::ostringstream out;
  out << "phi_rad,central,lower,upper\n";
  for (std::size_t i = 0; i < phi.size(); ++i) {
    out << io::format_number(phi[i]) << ',' << io::format_number(central[i]) << ','
        << io::format_number(lower[i]) << ',' << io::format_number(upper[i]) << '\n';
  }
  return out.str();
}

}  // namespace noonfi
