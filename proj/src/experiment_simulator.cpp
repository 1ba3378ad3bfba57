#include "noonfi/experiment_simulator.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <istream>
#include <sstream>

#include "noonfi/errors.hpp"
#include "noonfi/io_util.hpp"

namespace noonfi {

void WdmPlan::validate() const {
  if (signal_channel == idler_channel) throw DomainError("signal and idler channels must differ");
  if (signal_channel + idler_channel != 2 * degenerate_channel) {
    throw DomainError("signal and idler channels must sit symmetrically around the degenerate channel");
  }
  if (!(channel_width_ghz > 0.0)) throw DomainError("channel width must be positive");
}

int WdmPlan::detector(int channel, OutputPort port) const {
  const int base = port == OutputPort::a ? 1 : 3;
  if (channel == signal_channel) return base;
  if (channel == idler_channel) return base + 1;
  throw DomainError("channel " + std::to_string(channel) + " is not routed to any detector");
}

std::string route_by_wdm(const WdmPlan& plan, PhotonArrival first, PhotonArrival second) {
  plan.validate();
  if (first.channel == second.channel) {
    throw DomainError("both photons in channel " + std::to_string(first.channel) +
                      " violates energy conservation model");
  }
  int i = plan.detector(first.channel, first.port);
  int j = plan.detector(second.channel, second.port);
  if (i > j) std::swap(i, j);
  return "P" + std::to_string(i) + std::to_string(j);
}

double phase_from_voltage(double rad_per_volt, double offset_rad, double volts) {
  return rad_per_volt * volts + offset_rad;
}

void ScanConfig::validate() const {
  if (n_photons != 1 && n_photons != 2) throw DomainError("scan probe must be single-photon (1) or pair (2)");
  if (!(pair_rate > 0.0) || !std::isfinite(pair_rate)) throw DomainError("pair rate must be positive");
  if (!(dwell_s > 0.0) || !std::isfinite(dwell_s)) throw DomainError("dwell time must be positive");
  if (accidental_rate < 0.0 || multi_pair_rate < 0.0) throw DomainError("background rates must be >= 0");
  if (size() == 0) throw DomainError("scan grid is empty");
  if (const auto* v = std::get_if<VoltageGrid>(&control)) {
    if (!std::isfinite(v->rad_per_volt) || !std::isfinite(v->offset_rad)) {
      throw DomainError("voltage map coefficients must be finite");
    }
  }
  resolved_visibility();
}

Visibility ScanConfig::resolved_visibility() const {
  if (visibility) return Visibility(*visibility, n_photons);
  return visibility_from_relative_loss(arm_balance, n_photons);
}

OutcomeDistribution ScanConfig::distribution() const {
  const auto v = resolved_visibility();
  return n_photons == 2 ? coincidence_distribution(budget, v) : single_photon_distribution(budget, v);
}

std::size_t ScanConfig::size() const {
  return std::visit(
      [](const auto& c) {
        if constexpr (std::is_same_v<std::decay_t<decltype(c)>, PhaseGrid>) {
          return c.phi.size();
        } else {
          return c.volts.size();
        }
      },
      control);
}

double ScanConfig::control_value(std::size_t i) const {
  if (const auto* p = std::get_if<PhaseGrid>(&control)) return p->phi.at(i);
  return std::get<VoltageGrid>(control).volts.at(i);
}

double ScanConfig::phase(std::size_t i) const {
  if (const auto* p = std::get_if<PhaseGrid>(&control)) return p->phi.at(i);
  const auto& v = std::get<VoltageGrid>(control);
  return phase_from_voltage(v.rad_per_volt, v.offset_rad, v.volts.at(i));
}

nlohmann::json ScanConfig::to_json() const {
  auto numbers = [](const std::vector<double>& xs) {
    nlohmann::json a = nlohmann::json::array();
    for (double x : xs) a.push_back(io::round_significant(x));
    return a;
  };
  nlohmann::json j;
  j["n_photons"] = n_photons;
  j["arm_balance"] = io::round_significant(arm_balance);
  j["visibility"] = visibility ? nlohmann::json(io::round_significant(*visibility)) : nlohmann::json(nullptr);
  j["eta"] = noonfi::to_json(budget)["eta"];
  j["pair_rate"] = io::round_significant(pair_rate);
  j["dwell_s"] = io::round_significant(dwell_s);
  if (const auto* p = std::get_if<PhaseGrid>(&control)) {
    j["phase_grid"] = numbers(p->phi);
  } else {
    const auto& v = std::get<VoltageGrid>(control);
    j["voltage_grid"] = {{"volts", numbers(v.volts)},
                         {"rad_per_volt", io::round_significant(v.rad_per_volt)},
                         {"offset_rad", io::round_significant(v.offset_rad)}};
  }
  j["seed"] = seed;
  j["accidental_rate"] = io::round_significant(accidental_rate);
  j["multi_pair_rate"] = io::round_significant(multi_pair_rate);
  j["noiseless"] = noiseless;
  return j;
}

std::string ScanConfig::digest() const { return io::fnv1a_hex(to_json().dump()); }

void FringeScan::validate() const {
  if (labels.empty()) throw SchemaError("scan has no outcome labels");
  for (std::size_t i = 0; i < points.size(); ++i) {
    const auto& p = points[i];
    if (p.counts.size() != labels.size()) {
      throw SchemaError("scan point " + std::to_string(i) + " has the wrong number of counts");
    }
    for (double c : p.counts) {
      if (!(c >= 0.0) || !std::isfinite(c)) throw SchemaError("scan point " + std::to_string(i) + ": negative count");
      if (!noiseless && c != std::floor(c)) {
        throw SchemaError("scan point " + std::to_string(i) + ": counts must be integers");
      }
    }
  }
}

std::vector<double> FringeScan::curve(std::size_t label) const {
  std::vector<double> out;
  out.reserve(points.size());
  for (const auto& p : points) out.push_back(p.counts.at(label));
  return out;
}

std::vector<double> FringeScan::phases() const {
  std::vector<double> out;
  out.reserve(points.size());
  for (std::size_t i = 0; i < points.size(); ++i) {
    if (!points[i].phi) throw SchemaError("scan point " + std::to_string(i) + " has no phase");
    out.push_back(*points[i].phi);
  }
  return out;
}

std::mt19937_64 substream(std::uint64_t seed, std::uint64_t index) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(index), static_cast<std::uint32_t>(index >> 32),
                    0x6e6f6f6eU};
  return std::mt19937_64(seq);
}

std::vector<double> expected_counts(const ScanConfig& config, double phi) {
  const auto dist = config.distribution();
  const double budget = config.pair_rate * config.dwell_s;
  const double floor = config.accidental_rate * config.dwell_s / static_cast<double>(dist.size());
  std::vector<double> out(dist.size());
  for (std::size_t k = 0; k < dist.size(); ++k) {
    out[k] = budget * dist.probability(k, phi) + floor;
    if (out[k] > kMaxExpectedCount) {
      throw DomainError("expected count " + io::format_number(out[k]) + " for " + dist.label(k) +
                        " exceeds 2^31; lower the pair rate or dwell time");
    }
  }
  return out;
}

namespace {

std::int64_t poisson_draw(double mean, std::mt19937_64& rng) {
  if (mean <= 0.0) return 0;
  return std::poisson_distribution<std::int64_t>(mean)(rng);
}

}  // namespace

FringeScan simulate_fringe_scan(const ScanConfig& config) {
  config.validate();
  const auto dist = config.distribution();
  FringeScan scan;
  scan.labels = dist.labels();
  scan.seed = config.seed;
  scan.config_digest = config.digest();
  scan.noiseless = config.noiseless;
  scan.points.resize(config.size());
  // Each point draws from its own substream, so points can be generated in any order.
  for (std::size_t i = 0; i < config.size(); ++i) {
    ScanPoint& point = scan.points[i];
    point.control = config.control_value(i);
    point.phi = config.phase(i);
    point.dwell_s = config.dwell_s;
    point.counts = expected_counts(config, *point.phi);
    if (!config.noiseless) {
      auto rng = substream(config.seed, i);
      for (double& c : point.counts) c = static_cast<double>(poisson_draw(c, rng));
    }
  }
  return scan;
}

std::vector<SameChannelExpectation> multi_pair_diagnostic(const ScanConfig& config) {
  config.validate();
  const auto& e = config.budget.eta();
  const double events = config.multi_pair_rate * config.dwell_s;
  // Accidentals are split uniformly over the four cross-channel labels; the
  // same floor applies to any other detector pair.
  const double floor = config.accidental_rate * config.dwell_s / 4.0;
  return {{"P13", events, events * e[0] * e[2], floor}, {"P24", events, events * e[1] * e[3], floor}};
}

double excess_significance(std::int64_t observed, double floor) {
  return (static_cast<double>(observed) - floor) / std::sqrt(std::max(floor, 1.0));
}

std::vector<SameChannelObservation> observe_same_channel(const ScanConfig& config) {
  std::vector<SameChannelObservation> out;
  // Substream indices past the scan grid keep these draws independent of the scan.
  std::uint64_t index = config.size();
  for (const auto& expectation : multi_pair_diagnostic(config)) {
    auto rng = substream(config.seed, index++);
    const auto n = poisson_draw(expectation.total(), rng);
    out.push_back({expectation.label, n, expectation.accidental_floor,
                   excess_significance(n, expectation.accidental_floor)});
  }
  return out;
}

OutcomeCounts simulate_pair_outcomes(const OutcomeDistribution& dist, double phi, std::int64_t n_pairs,
                                     std::mt19937_64& rng) {
  if (n_pairs < 0) throw DomainError("number of pairs must be >= 0");
  OutcomeCounts counts;
  counts.outcomes.resize(dist.size());
  std::int64_t remaining = n_pairs;
  double mass = 1.0;
  for (std::size_t k = 0; k < dist.size() && remaining > 0; ++k) {
    const double p = dist.probability(k, phi);
    const double q = mass > 0.0 ? std::clamp(p / mass, 0.0, 1.0) : 0.0;
    const auto n = std::binomial_distribution<std::int64_t>(remaining, q)(rng);
    counts.outcomes[k] = n;
    remaining -= n;
    mass -= p;
  }
  counts.lost = remaining;
  return counts;
}

std::string scan_to_csv(const FringeScan& scan) {
  std::ostringstream out;
  out << "control,phi_rad,label,counts,dwell_s\n";
  for (const auto& p : scan.points) {
    for (std::size_t k = 0; k < scan.labels.size(); ++k) {
      out << io::format_number(p.control) << ',' << (p.phi ? io::format_number(*p.phi) : std::string{}) << ','
          << scan.labels[k] << ',';
      if (scan.noiseless) {
        out << io::format_number(p.counts[k]);
      } else {
        out << static_cast<long long>(p.counts[k]);
      }
      out << ',' << io::format_number(p.dwell_s) << '\n';
    }
  }
  return out.str();
}

FringeScan parse_scan_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw SchemaError("scan CSV is empty");
  const std::vector<std::string> header{"control", "phi_rad", "label", "counts", "dwell_s"};
  if (io::split_csv_line(line) != header) {
    throw SchemaError("scan CSV header must be 'control,phi_rad,label,counts,dwell_s'");
  }

  struct Row {
    int number;
    double control;
    std::optional<double> phi;
    std::string label;
    double counts;
    double dwell;
  };
  std::vector<Row> rows;
  int number = 1;
  while (std::getline(in, line)) {
    ++number;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const auto f = io::split_csv_line(line);
    const std::string ctx = "scan CSV row " + std::to_string(number);
    if (f.size() != header.size()) {
      throw SchemaError(ctx + ": expected 5 fields, got " + std::to_string(f.size()));
    }
    Row r{number, io::parse_double(f[0], ctx + " control"), std::nullopt, f[2], 0.0, 0.0};
    if (!f[1].empty()) r.phi = io::parse_double(f[1], ctx + " phi_rad");
    if (r.label.empty()) throw SchemaError(ctx + ": empty label");
    r.counts = io::parse_double(f[3], ctx + " counts");
    if (r.counts < 0.0) throw SchemaError(ctx + ": negative counts");
    r.dwell = io::parse_double(f[4], ctx + " dwell_s");
    if (!(r.dwell > 0.0)) throw SchemaError(ctx + ": dwell_s must be positive");
    rows.push_back(std::move(r));
  }
  if (rows.empty()) throw SchemaError("scan CSV has no data rows");

  // The first point defines the label set: rows up to the first repeated label.
  FringeScan scan;
  for (const auto& r : rows) {
    if (std::find(scan.labels.begin(), scan.labels.end(), r.label) != scan.labels.end()) break;
    scan.labels.push_back(r.label);
  }
  const std::size_t n = scan.labels.size();
  if (rows.size() % n != 0) throw SchemaError("scan CSV ends with an incomplete point");

  bool all_integer = true;
  for (std::size_t start = 0; start < rows.size(); start += n) {
    const Row& first = rows[start];
    ScanPoint point{first.control, first.phi, {}, first.dwell};
    for (std::size_t k = 0; k < n; ++k) {
      const Row& r = rows[start + k];
      const std::string ctx = "scan CSV row " + std::to_string(r.number);
      if (r.label != scan.labels[k]) {
        throw SchemaError(ctx + ": expected label " + scan.labels[k] + ", got " + r.label);
      }
      if (r.control != first.control || r.phi != first.phi || r.dwell != first.dwell) {
        throw SchemaError(ctx + ": control/phi/dwell differ from the other rows of the same point");
      }
      all_integer = all_integer && r.counts == std::floor(r.counts);
      point.counts.push_back(r.counts);
    }
    scan.points.push_back(std::move(point));
  }
  scan.noiseless = !all_integer;
  return scan;
}

FringeScan read_scan_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw SchemaError("cannot open scan file " + path);
  return parse_scan_csv(in);
}

nlohmann::json scan_sidecar(const FringeScan& scan, const ScanConfig& config) {
  return {{"seed", scan.seed},
          {"config_digest", scan.config_digest},
          {"labels", scan.labels},
          {"noiseless", scan.noiseless},
          {"points", scan.points.size()},
          {"config", config.to_json()}};
}

}  // namespace noonfi
