#include <gtest/gtest.h>

#include <cmath>
#include <set>
#include <sstream>

#include "noonfi/errors.hpp"
#include "noonfi/experiment_simulator.hpp"
#include "noonfi/fisher_engine.hpp"

using namespace noonfi;

namespace {

const LossBudget kMeasured({0.517, 0.546, 0.649, 0.608});

ScanConfig measured_config(std::vector<double> phi, std::uint64_t seed = 42) {
  ScanConfig c;
  c.n_photons = 2;
  c.visibility = 0.992;
  c.budget = kMeasured;
  c.pair_rate = 1e5;
  c.dwell_s = 1.0;
  c.control = PhaseGrid{std::move(phi)};
  c.seed = seed;
  return c;
}

}  // namespace

TEST(Routing, Examples) {
  const WdmPlan plan;
  EXPECT_EQ(route_by_wdm(plan, {20, OutputPort::a}, {22, OutputPort::a}), "P12");
  EXPECT_EQ(route_by_wdm(plan, {20, OutputPort::b}, {22, OutputPort::b}), "P34");
  EXPECT_EQ(route_by_wdm(plan, {22, OutputPort::a}, {20, OutputPort::b}), "P23");
  EXPECT_EQ(route_by_wdm(plan, {20, OutputPort::a}, {22, OutputPort::b}), "P14");
}

TEST(Routing, SameChannelViolatesEnergyConservation) {
  const WdmPlan plan;
  try {
    route_by_wdm(plan, {20, OutputPort::a}, {20, OutputPort::b});
    FAIL();
  } catch (const DomainError& e) {
    EXPECT_NE(std::string(e.what()).find("violates energy conservation model"), std::string::npos);
  }
  EXPECT_THROW(route_by_wdm(plan, {21, OutputPort::a}, {22, OutputPort::b}), DomainError);
}

TEST(Routing, Totality) {
  const WdmPlan plan;
  std::set<std::string> labels;
  int assignments = 0;
  for (auto p1 : {OutputPort::a, OutputPort::b}) {
    for (auto p2 : {OutputPort::a, OutputPort::b}) {
      const auto forward = route_by_wdm(plan, {20, p1}, {22, p2});
      EXPECT_EQ(forward, route_by_wdm(plan, {22, p2}, {20, p1}));
      labels.insert(forward);
      ++assignments;
    }
  }
  EXPECT_EQ(assignments, 4);
  EXPECT_EQ(labels, (std::set<std::string>{"P12", "P34", "P23", "P14"}));
  // D1/D3 share the signal channel and D2/D4 the idler channel.
  EXPECT_EQ(plan.detector(20, OutputPort::a), 1);
  EXPECT_EQ(plan.detector(20, OutputPort::b), 3);
  EXPECT_EQ(plan.detector(22, OutputPort::a), 2);
  EXPECT_EQ(plan.detector(22, OutputPort::b), 4);
}

TEST(Voltage, LinearMap) {
  EXPECT_DOUBLE_EQ(phase_from_voltage(1.0, 0.0, kPi), kPi);
  EXPECT_DOUBLE_EQ(phase_from_voltage(2.0, kPi, 0.0), kPi);
  EXPECT_DOUBLE_EQ(phase_from_voltage(0.5, 0.0, kPi), kPi / 2);
}

TEST(ExpectedCounts, MeasuredAtQuadrature) {
  const auto e = expected_counts(measured_config({kPi / 4}), kPi / 4);
  ASSERT_EQ(e.size(), 4u);
  EXPECT_NEAR(e[0], 7057.1, 0.1);  // P12
  EXPECT_NEAR(e[1], 9864.8, 0.1);  // P34
  EXPECT_NEAR(e[2], 8858.9, 0.1);  // P23
  EXPECT_NEAR(e[3], 7858.4, 0.1);  // P14
}

TEST(ExpectedCounts, FlatWithoutInterference) {
  ScanConfig c = measured_config({0.3});
  c.budget = LossBudget::uniform(1.0);
  c.visibility = 0.0;
  for (double phi : {0.0, 0.7, 2.0}) {
    for (double x : expected_counts(c, phi)) EXPECT_NEAR(x, 25000.0, 1e-9);
  }
}

TEST(ExpectedCounts, AccidentalFloorAndOverflowGuard) {
  ScanConfig c = measured_config({0.3});
  c.accidental_rate = 400.0;
  const auto base = expected_counts(measured_config({0.3}), 0.3);
  const auto with = expected_counts(c, 0.3);
  for (std::size_t i = 0; i < 4; ++i) EXPECT_NEAR(with[i] - base[i], 100.0, 1e-9);
  c.pair_rate = 1e11;
  EXPECT_THROW(expected_counts(c, 0.3), DomainError);
  EXPECT_THROW(simulate_fringe_scan(c), DomainError);
}

TEST(Simulate, SeedDeterminism) {
  const auto grid = linear_grid(0.0, kPi, 50);
  const auto a = scan_to_csv(simulate_fringe_scan(measured_config(grid, 7)));
  const auto b = scan_to_csv(simulate_fringe_scan(measured_config(grid, 7)));
  const auto c = scan_to_csv(simulate_fringe_scan(measured_config(grid, 8)));
  EXPECT_EQ(a, b);
  EXPECT_NE(a, c);
}

TEST(Simulate, PointsAreIndependentOfGridLength) {
  auto grid = linear_grid(0.0, kPi, 40);
  const auto full = simulate_fringe_scan(measured_config(grid));
  grid.resize(10);
  const auto prefix = simulate_fringe_scan(measured_config(grid));
  for (std::size_t i = 0; i < 10; ++i) EXPECT_EQ(prefix.points[i].counts, full.points[i].counts);
}

TEST(Simulate, LabelsAndMetadata) {
  const auto scan = simulate_fringe_scan(measured_config(linear_grid(0.0, kPi, 10)));
  EXPECT_EQ(scan.labels, (std::vector<std::string>{"P12", "P34", "P23", "P14"}));
  EXPECT_EQ(scan.seed, 42u);
  EXPECT_EQ(scan.config_digest.size(), 16u);
  scan.validate();

  ScanConfig single = measured_config(linear_grid(0.0, 2 * kPi, 10));
  single.n_photons = 1;
  single.visibility = 0.998;
  EXPECT_EQ(simulate_fringe_scan(single).labels, (std::vector<std::string>{"P10", "P01"}));
}

TEST(Simulate, DetectedFractionNeverExceedsOne) {
  const auto grid = linear_grid(0.0, kPi, 200);
  for (const auto& b : {kMeasured, LossBudget::uniform(1.0)}) {
    ScanConfig c = measured_config(grid);
    c.budget = b;
    c.visibility = 1.0;
    for (double phi : grid) {
      double total = 0.0;
      for (double x : expected_counts(c, phi)) total += x;
      EXPECT_LE(total / (c.pair_rate * c.dwell_s), 1.0 + 1e-12);
    }
  }
}

TEST(Simulate, MonteCarloMeanConverges) {
  const double phi = 0.61;
  ScanConfig c = measured_config(std::vector<double>(10000, phi), 99);
  c.pair_rate = 1e3;
  const auto scan = simulate_fringe_scan(c);
  const auto expected = expected_counts(c, phi);
  for (std::size_t k = 0; k < 4; ++k) {
    double sum = 0.0;
    for (const auto& p : scan.points) sum += p.counts[k];
    const double mean = sum / 10000.0;
    const double sigma_mean = std::sqrt(expected[k] / 10000.0);
    EXPECT_NEAR(mean, expected[k], 5.0 * sigma_mean) << scan.labels[k];
  }
}

TEST(Simulate, VoltageGridCarriesControlAndPhase) {
  ScanConfig c = measured_config({});
  c.control = VoltageGrid{{0.0, 1.0, 2.0, 3.0}, 0.5, 0.1};
  const auto scan = simulate_fringe_scan(c);
  EXPECT_DOUBLE_EQ(scan.points[2].control, 2.0);
  EXPECT_DOUBLE_EQ(*scan.points[2].phi, 1.1);
  const auto csv = scan_to_csv(scan);
  EXPECT_NE(csv.find("\n2,1.1,P12,"), std::string::npos) << csv;
}

TEST(Simulate, ConfigValidation) {
  ScanConfig c = measured_config({});
  EXPECT_THROW(simulate_fringe_scan(c), DomainError);
  c = measured_config({0.1});
  c.dwell_s = 0.0;
  EXPECT_THROW(simulate_fringe_scan(c), DomainError);
  c = measured_config({0.1});
  c.n_photons = 3;
  EXPECT_THROW(simulate_fringe_scan(c), DomainError);
}

TEST(MultiPair, DefaultModelHasNoTrueSameChannelCoincidences) {
  ScanConfig c = measured_config({0.1});
  const auto d = multi_pair_diagnostic(c);
  ASSERT_EQ(d.size(), 2u);
  EXPECT_EQ(d[0].label, "P13");
  EXPECT_EQ(d[1].label, "P24");
  EXPECT_EQ(d[0].true_before_loss, 0.0);
  EXPECT_EQ(d[1].true_detected, 0.0);
  for (const auto& o : observe_same_channel(c)) EXPECT_EQ(o.counts, 0);
}

TEST(MultiPair, InjectedRateAndAccidentalFloor) {
  ScanConfig c = measured_config({0.1});
  c.multi_pair_rate = 100.0;
  c.accidental_rate = 4.0;
  const auto d = multi_pair_diagnostic(c);
  EXPECT_DOUBLE_EQ(d[0].true_before_loss, 100.0);
  EXPECT_NEAR(d[0].true_detected, 100.0 * 0.517 * 0.649, 1e-12);
  EXPECT_NEAR(d[1].true_detected, 100.0 * 0.546 * 0.608, 1e-12);
  EXPECT_DOUBLE_EQ(d[0].accidental_floor, 1.0);
  for (const auto& o : observe_same_channel(c)) EXPECT_GT(o.significance, 5.0) << o.label;
}

TEST(MultiPair, AccidentalsAloneStayBelowFiveSigma) {
  int above = 0;
  for (std::uint64_t seed = 0; seed < 200; ++seed) {
    ScanConfig c = measured_config({0.1}, seed);
    c.accidental_rate = 40.0;
    for (const auto& o : observe_same_channel(c)) above += o.significance >= 5.0;
  }
  EXPECT_EQ(above, 0);
}

TEST(PairOutcomes, MultinomialMeans) {
  const auto d = coincidence_distribution(kMeasured, Visibility(0.99, 2));
  std::mt19937_64 rng(5);
  const std::int64_t n = 1000000;
  const auto counts = simulate_pair_outcomes(d, kPi / 8, n, rng);
  EXPECT_EQ(counts.trials(), n);
  for (std::size_t k = 0; k < d.size(); ++k) {
    const double p = d.probability(k, kPi / 8);
    EXPECT_NEAR(static_cast<double>(counts.outcomes[k]), n * p, 5.0 * std::sqrt(n * p * (1 - p)));
  }
  EXPECT_THROW(simulate_pair_outcomes(d, 0.0, -1, rng), DomainError);
}

TEST(ScanCsv, RoundTrip) {
  const auto scan = simulate_fringe_scan(measured_config(linear_grid(0.0, kPi, 12)));
  std::istringstream in(scan_to_csv(scan));
  const auto back = parse_scan_csv(in);
  EXPECT_EQ(back.labels, scan.labels);
  ASSERT_EQ(back.points.size(), scan.points.size());
  for (std::size_t i = 0; i < scan.points.size(); ++i) EXPECT_EQ(back.points[i].counts, scan.points[i].counts);
  EXPECT_FALSE(back.noiseless);

  ScanConfig nl = measured_config(linear_grid(0.0, kPi, 12));
  nl.noiseless = true;
  const auto exact = simulate_fringe_scan(nl);
  std::istringstream in2(scan_to_csv(exact));
  const auto back2 = parse_scan_csv(in2);
  EXPECT_TRUE(back2.noiseless);
  for (std::size_t i = 0; i < exact.points.size(); ++i) {
    for (std::size_t k = 0; k < 4; ++k) {
      EXPECT_NEAR(back2.points[i].counts[k], exact.points[i].counts[k], 1e-11 * exact.points[i].counts[k]);
    }
  }
}

TEST(ScanCsv, MalformedRowsAreNamed) {
  const std::string header = "control,phi_rad,label,counts,dwell_s\n";
  auto expect_row = [](const std::string& text, const std::string& needle) {
    std::istringstream in(text);
    try {
      parse_scan_csv(in);
      FAIL() << "expected SchemaError for: " << text;
    } catch (const SchemaError& e) {
      EXPECT_NE(std::string(e.what()).find(needle), std::string::npos) << e.what();
    }
  };
  expect_row(header + "0,0,P12,10,1\n0,0,P34,abc,1\n", "row 3");
  expect_row(header + "0,0,P12,10,1\n0,0,P34,11\n", "row 3");
  expect_row(header + "0,0,P12,10,1\n0,0,P34,-4,1\n", "row 3");
  expect_row(header + "0,0,P12,10,1\n0,0,P34,1,1\n1,1,P12,1,1\n1,1,P14,1,1\n", "row 5");
  expect_row("a,b\n", "header");
}
