#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "noonfi/errors.hpp"
#include "noonfi/fringe_fitting.hpp"

using namespace noonfi;

namespace {

const LossBudget kMeasured({0.517, 0.546, 0.649, 0.608});

// Independent oracle (numpy grid + scipy bounded search) for the two-photon maximum at fixed V2.
constexpr double kOracleF2At0984 = 1.3032146580987456;
constexpr double kOracleF2At0990 = 1.319374832254656;
constexpr double kOracleF2At0996 = 1.336193526824393;

std::vector<double> one_period(int harmonic, std::size_t n) {
  std::vector<double> phi;
  const double period = 2 * kPi / harmonic;
  for (std::size_t i = 0; i < n; ++i) phi.push_back(period * static_cast<double>(i) / static_cast<double>(n));
  return phi;
}

ScanConfig scan_config(double v, int n_photons, std::uint64_t seed, bool noiseless = false) {
  ScanConfig c;
  c.n_photons = n_photons;
  c.visibility = v;
  c.budget = kMeasured;
  c.pair_rate = 1e5;
  c.dwell_s = 1.0;
  c.control = PhaseGrid{one_period(n_photons, 100)};
  c.seed = seed;
  c.noiseless = noiseless;
  return c;
}

FitResult synthetic_fit(double v, std::uint64_t seed) {
  ScanConfig c = scan_config(v, 2, seed);
  c.control = PhaseGrid{one_period(2, 100)};
  return fit_fringes(simulate_fringe_scan(c), 2);
}

}  // namespace

TEST(FringeModel, ValueAndGradient) {
  FringeModel m{100.0, 0.9, 2, 0.3, -1};
  const double phi = 0.8;
  EXPECT_NEAR(m(phi), 100.0 * (1 - 0.9 * std::cos(2 * (phi - 0.3))), 1e-12);
  const auto g = m.gradient(phi);
  const double h = 1e-6;
  FringeModel a = m, v = m, p = m;
  a.amplitude += h;
  v.visibility += h;
  p.phase_offset += h;
  EXPECT_NEAR(g[0], (a(phi) - m(phi)) / h, 1e-5);
  EXPECT_NEAR(g[1], (v(phi) - m(phi)) / h, 1e-4);
  EXPECT_NEAR(g[2], (p(phi) - m(phi)) / h, 1e-4);
}

TEST(FringeSign, ByLabelClass) {
  for (const char* l : {"P12", "P34", "P10", "P+"}) EXPECT_EQ(fringe_sign(l), 1);
  for (const char* l : {"P23", "P14", "P01", "P-"}) EXPECT_EQ(fringe_sign(l), -1);
  EXPECT_THROW(fringe_sign("P13"), DomainError);
}

TEST(FitFringes, NoiselessRecoveryIsExact) {
  const auto scan = simulate_fringe_scan(scan_config(0.992, 2, 1, true));
  const auto fit = fit_fringes(scan, 2);
  ASSERT_EQ(fit.curves.size(), 4u);
  for (const auto& c : fit.curves) {
    EXPECT_NEAR(c.model.visibility, 0.992, 1e-9) << c.label;
    EXPECT_NEAR(c.chi2_red, 0.0, 1e-12) << c.label;
    EXPECT_NEAR(std::remainder(c.model.phase_offset, kPi), 0.0, 1e-9) << c.label;
    EXPECT_TRUE(c.covariance_valid);
  }
  EXPECT_NEAR(fit.pooled_visibility, 0.992, 1e-9);
  EXPECT_NEAR(fit.curves[0].model.amplitude, 1e5 * 0.517 * 0.546 / 4, 1e-6);
}

TEST(FitFringes, NoiselessSinglePhoton) {
  const auto scan = simulate_fringe_scan(scan_config(0.998, 1, 1, true));
  const auto fit = fit_fringes(scan, 1);
  for (const auto& c : fit.curves) EXPECT_NEAR(c.model.visibility, 0.998, 1e-9);
}

TEST(FitFringes, PoissonRecoveryAtMeasuredStatistics) {
  int within = 0;
  double sum_pull = 0.0;
  const int trials = 30;
  for (int t = 0; t < trials; ++t) {
    const auto fit = synthetic_fit(0.990, 1000 + t);
    within += std::abs(fit.pooled_visibility - 0.990) <= 0.002;
    sum_pull += (fit.pooled_visibility - 0.990) / fit.pooled_sigma;
    for (const auto& c : fit.curves) EXPECT_LT(c.chi2_red, 2.0);
  }
  EXPECT_EQ(within, trials);
  EXPECT_LT(std::abs(sum_pull / trials), 1.0);
}

TEST(FitFringes, FlatDataIsConsistentWithZeroVisibility) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const auto fit = fit_fringes(simulate_fringe_scan(scan_config(0.0, 2, seed)), 2);
    for (const auto& c : fit.curves) {
      EXPECT_GE(c.model.visibility, 0.0);
      EXPECT_LT(c.model.visibility, 3.0 * c.sigma_visibility()) << c.label << " seed " << seed;
    }
  }
}

TEST(FitFringes, PhaseShiftMovesOnlyTheOffset) {
  const auto scan = simulate_fringe_scan(scan_config(0.97, 2, 3));
  const auto base = fit_fringes(scan, 2);
  for (double delta : {0.1, 0.9, -0.4}) {
    auto shifted = scan;
    for (auto& p : shifted.points) *p.phi += delta;
    const auto fit = fit_fringes(shifted, 2);
    for (std::size_t k = 0; k < fit.curves.size(); ++k) {
      EXPECT_NEAR(fit.curves[k].model.visibility, base.curves[k].model.visibility, 1e-9);
      EXPECT_NEAR(std::remainder(fit.curves[k].model.phase_offset - base.curves[k].model.phase_offset - delta, kPi),
                  0.0, 1e-9);
    }
  }
}

TEST(FitFringes, SharedModes) {
  const auto scan = simulate_fringe_scan(scan_config(0.99, 2, 11));
  FitOptions shared_v;
  shared_v.shared_visibility = true;
  const auto a = fit_fringes(scan, 2, shared_v);
  for (const auto& c : a.curves) EXPECT_DOUBLE_EQ(c.model.visibility, a.pooled_visibility);
  EXPECT_NEAR(a.pooled_visibility, 0.99, 0.002);

  FitOptions both = shared_v;
  both.shared_phase = true;
  const auto b = fit_fringes(scan, 2, both);
  for (const auto& c : b.curves) EXPECT_DOUBLE_EQ(c.model.phase_offset, b.curves[0].model.phase_offset);
  EXPECT_NEAR(b.pooled_visibility, 0.99, 0.002);

  const auto per_curve = fit_fringes(scan, 2);
  EXPECT_NEAR(per_curve.pooled_visibility, a.pooled_visibility, 3 * a.pooled_sigma);
}

TEST(FitFringes, CovarianceIsSymmetricPositive) {
  const auto fit = synthetic_fit(0.99, 5);
  for (const auto& c : fit.curves) {
    for (int i = 0; i < 3; ++i) {
      EXPECT_GT(c.covariance[i][i], 0.0);
      for (int j = 0; j < 3; ++j) EXPECT_DOUBLE_EQ(c.covariance[i][j], c.covariance[j][i]);
    }
  }
}

TEST(FitFringes, Preconditions) {
  ScanConfig few = scan_config(0.99, 2, 1);
  few.control = PhaseGrid{one_period(2, 7)};
  EXPECT_THROW(fit_fringes(simulate_fringe_scan(few), 2), DomainError);

  ScanConfig narrow = scan_config(0.99, 2, 1);
  narrow.control = PhaseGrid{linear_grid(0.0, 1.5, 40)};
  EXPECT_THROW(fit_fringes(simulate_fringe_scan(narrow), 2), DomainError);

  const auto scan = simulate_fringe_scan(scan_config(0.99, 2, 1));
  EXPECT_THROW(fit_fringes(scan, 3), DomainError);
  // Half a two-photon period is not a full single-photon period either.
  EXPECT_THROW(fit_fringes(scan, 1), DomainError);
}

TEST(FitFringes, NonConvergenceReportsLastIterate) {
  const auto scan = simulate_fringe_scan(scan_config(0.99, 2, 1));
  FitOptions opts;
  opts.max_iterations = 1;
  try {
    fit_fringes(scan, 2, opts);
    FAIL() << "expected FitError";
  } catch (const FitError& e) {
    EXPECT_EQ(e.last_iterate().size(), 3u);
  }
}

TEST(ConfidenceBand, ZeroCovarianceHasZeroWidth) {
  CurveFit c;
  c.label = "P12";
  c.model = {1000.0, 0.9, 2, 0.0, 1};
  c.covariance_valid = true;
  const auto band = confidence_band(c, 3.0, linear_grid(0.0, kPi, 20));
  for (std::size_t i = 0; i < band.phi.size(); ++i) {
    EXPECT_EQ(band.lower[i], band.central[i]);
    EXPECT_EQ(band.upper[i], band.central[i]);
  }
}

TEST(ConfidenceBand, VisibilityOnlyVarianceAtExtremum) {
  CurveFit c;
  c.model = {1000.0, 0.9, 2, 0.0, 1};
  c.covariance_valid = true;
  c.covariance[1][1] = 0.01 * 0.01;
  const auto band = confidence_band(c, 3.0, {0.0, kPi / 2});
  EXPECT_NEAR(band.upper[0] - band.central[0], 3.0 * 1000.0 * 0.01, 1e-9);
  EXPECT_NEAR(band.central[1] - band.lower[1], 3.0 * 1000.0 * 0.01, 1e-9);
}

TEST(ConfidenceBand, SingularCovarianceIsAnError) {
  CurveFit c;
  c.model = {1000.0, 0.9, 2, 0.0, 1};
  c.covariance_valid = false;
  EXPECT_THROW(confidence_band(c, 3.0, {0.0}), DomainError);
}

TEST(FiBand, ZeroSigmaHasZeroWidth) {
  FitResult fit;
  fit.harmonic = 2;
  fit.pooled_visibility = 0.99;
  fit.pooled_sigma = 0.0;
  const auto band = fi_band_from_fit(fit, kMeasured, 3.0, linear_grid(0.1, 3.0, 30));
  for (std::size_t i = 0; i < band.lower.size(); ++i) {
    EXPECT_EQ(band.lower[i], band.central.values[i]);
    EXPECT_EQ(band.upper[i], band.central.values[i]);
  }
}

TEST(FiBand, MeasuredBandOnTheMaximum) {
  FitResult fit;
  fit.harmonic = 2;
  fit.pooled_visibility = 0.990;
  fit.pooled_sigma = 0.002;
  const auto band = fi_band_from_fit(fit, kMeasured, 3.0, linear_grid(0.0, kPi, 101));
  EXPECT_NEAR(band.visibility_lower, 0.984, 1e-12);
  EXPECT_NEAR(band.visibility_upper, 0.996, 1e-12);
  EXPECT_NEAR(band.max_lower.value, kOracleF2At0984, 1e-9);
  EXPECT_NEAR(band.max_central.value, kOracleF2At0990, 1e-9);
  EXPECT_NEAR(band.max_upper.value, kOracleF2At0996, 1e-9);
  EXPECT_TRUE(band.warnings.empty());
  for (std::size_t i = 0; i < band.lower.size(); ++i) {
    EXPECT_LE(band.lower[i], band.central.values[i]);
    EXPECT_GE(band.upper[i], band.central.values[i]);
  }
  const double f1 = max_fisher(single_photon_distribution(kMeasured, visibility_from_relative_loss(0.88, 1))).value;
  const double ratio = advantage_ratio(band.max_central.value, f1);
  EXPECT_NEAR(ratio, 1.0777, 1e-4);
}

TEST(FiBand, UpperVisibilityClampsWithWarning) {
  FitResult fit;
  fit.harmonic = 2;
  fit.pooled_visibility = 0.999;
  fit.pooled_sigma = 0.002;
  const auto band = fi_band_from_fit(fit, kMeasured, 3.0, linear_grid(0.1, 1.4, 20));
  EXPECT_DOUBLE_EQ(band.visibility_upper, 1.0);
  ASSERT_EQ(band.warnings.size(), 1u);
}

TEST(FiBand, SinglePhotonHarmonic) {
  FitResult fit;
  fit.harmonic = 1;
  fit.pooled_visibility = 0.998;
  fit.pooled_sigma = 0.001;
  const auto band = fi_band_from_fit(fit, kMeasured, 1.0, linear_grid(0.1, 3.0, 20));
  EXPECT_EQ(band.central.n_photons, 1);
  EXPECT_NEAR(band.max_central.value, max_fisher(single_photon_distribution(kMeasured, Visibility(0.998, 1))).value,
              1e-12);
}

TEST(FiMonotonicity, NondecreasingInVisibility) {
  std::mt19937_64 rng(77);
  std::uniform_real_distribution<double> eta(0.05, 1.0), ph(0.0, kPi);
  for (int k = 0; k < 300; ++k) {
    const LossBudget b({eta(rng), eta(rng), eta(rng), eta(rng)});
    const double phi = ph(rng);
    if (std::abs(std::sin(2 * phi)) < 1e-3) continue;
    double previous = -1.0;
    for (int i = 0; i <= 100; ++i) {
      const double f = fisher_information(coincidence_distribution(b, Visibility(0.9 + 0.00099 * i, 2)), phi);
      EXPECT_GE(f, previous - 1e-15);
      previous = f;
    }
  }
}

TEST(FitJson, RoundTrip) {
  const auto fit = synthetic_fit(0.99, 21);
  const auto j = to_json(fit);
  ASSERT_EQ(j.at("curves").size(), 4u);
  for (const char* key : {"label", "A0", "V", "phi0", "cov", "chi2_red"}) EXPECT_TRUE(j.at("curves")[0].contains(key));
  EXPECT_TRUE(j.at("pooled").contains("V"));
  EXPECT_TRUE(j.at("pooled").contains("sigma_V"));
  const auto back = fit_from_json(j);
  EXPECT_EQ(back.harmonic, 2);
  EXPECT_NEAR(back.pooled_visibility, fit.pooled_visibility, 1e-11);
  EXPECT_NEAR(back.curves[2].covariance[1][1], fit.curves[2].covariance[1][1], 1e-11 * fit.curves[2].covariance[1][1]);
  EXPECT_EQ(to_json(back), j);
  EXPECT_THROW(fit_from_json(nlohmann::json{{"harmonic", 2}}), SchemaError);
}

TEST(BandCsv, Format) {
  const auto csv = band_to_csv({0.0, 1.0}, {2.0, 3.0}, {1.5, 2.5}, {2.5, 3.5});
  EXPECT_EQ(csv, "phi_rad,central,lower,upper\n0,2,1.5,2.5\n1,3,2.5,3.5\n");
}
