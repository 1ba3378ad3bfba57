#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <random>
#include <string>
#include <variant>
#include <vector>

#include "json.hpp"
#include "noonfi/interferometer_model.hpp"
#include "noonfi/loss_calibration.hpp"
#include "noonfi/phase_estimation.hpp"

namespace noonfi {

enum class OutputPort { a, b };

struct PhotonArrival {
  int channel = 0;  // ITU channel number
  OutputPort port = OutputPort::a;
};

/// Frequency demultiplexing in front of the four detectors. Energy conservation
/// around the degenerate channel sends one photon of each pair to the signal
/// channel and the other to the idler channel, so the channel plus exit port
/// identifies the detector:
///   port A: D1 <- signal, D2 <- idler;  port B: D3 <- signal, D4 <- idler.
struct WdmPlan {
  int degenerate_channel = 21;
  double degenerate_wavelength_nm = 1560.61;
  int signal_channel = 20;
  int idler_channel = 22;
  double channel_width_ghz = 100.0;

  void validate() const;
  /// Detector number 1..4 for a photon in `channel` leaving through `port`.
  int detector(int channel, OutputPort port) const;
};

/// Coincidence label "P<i><j>" (i < j) for a detected pair.
std::string route_by_wdm(const WdmPlan& plan, PhotonArrival first, PhotonArrival second);

/// Linear phase-shifter response a * u + b.
double phase_from_voltage(double rad_per_volt, double offset_rad, double volts);

struct PhaseGrid {
  std::vector<double> phi;
};

struct VoltageGrid {
  std::vector<double> volts;
  double rad_per_volt = 1.0;
  double offset_rad = 0.0;
};

using ScanControl = std::variant<PhaseGrid, VoltageGrid>;

struct ScanConfig {
  int n_photons = 2;  // 2: four-way coincidences, 1: single-photon fringe
  double arm_balance = 1.0;
  std::optional<double> visibility;  // overrides the arm-balance visibility
  LossBudget budget = LossBudget::uniform(1.0);
  double pair_rate = 1e5;  // pairs (or photons) per second entering the interferometer
  double dwell_s = 1.0;
  ScanControl control = PhaseGrid{};
  std::uint64_t seed = 0;
  double accidental_rate = 0.0;  // coincidences per second, flat across labels
  double multi_pair_rate = 0.0;  // double-pair events per second
  bool noiseless = false;        // emit expectations instead of Poisson draws

  void validate() const;
  Visibility resolved_visibility() const;
  OutcomeDistribution distribution() const;
  std::size_t size() const;
  double control_value(std::size_t i) const;
  double phase(std::size_t i) const;
  /// Stable 64-bit FNV-1a digest of the canonical configuration, hex encoded.
  std::string digest() const;
  nlohmann::json to_json() const;
};

struct ScanPoint {
  double control = 0.0;
  std::optional<double> phi;
  std::vector<double> counts;  // one per label
  double dwell_s = 0.0;
};

struct FringeScan {
  std::vector<std::string> labels;
  std::vector<ScanPoint> points;
  std::uint64_t seed = 0;
  std::string config_digest;
  bool noiseless = false;

  void validate() const;
  std::vector<double> curve(std::size_t label) const;
  /// Phases of every point; throws SchemaError when any phase is unknown.
  std::vector<double> phases() const;
};

inline constexpr double kMaxExpectedCount = 2147483648.0;  // 2^31

/// Independent generator for point `index` of a run seeded with `seed`.
std::mt19937_64 substream(std::uint64_t seed, std::uint64_t index);

/// Expected counts per label at phase phi (signal plus accidental floor).
std::vector<double> expected_counts(const ScanConfig& config, double phi);

FringeScan simulate_fringe_scan(const ScanConfig& config);

struct SameChannelExpectation {
  std::string label;
  double true_before_loss = 0.0;  // multi-pair events reaching the pair of detectors
  double true_detected = 0.0;     // after the two line transmissions
  double accidental_floor = 0.0;
  double total() const { return true_detected + accidental_floor; }
};

/// Expected coincidences between detectors sharing a WDM channel (P13, P24).
/// A single pair never produces them; only multi-pair emission and accidentals do.
std::vector<SameChannelExpectation> multi_pair_diagnostic(const ScanConfig& config);

struct SameChannelObservation {
  std::string label;
  std::int64_t counts = 0;
  double accidental_floor = 0.0;
  double significance = 0.0;  // excess over the floor in standard deviations
};

/// Poisson draw of the same-channel coincidences over one dwell.
std::vector<SameChannelObservation> observe_same_channel(const ScanConfig& config);

/// (observed - floor) / sqrt(max(floor, 1)).
double excess_significance(std::int64_t observed, double floor);

/// Multinomial outcome tallies of n_pairs probe uses at phase phi.
OutcomeCounts simulate_pair_outcomes(const OutcomeDistribution& dist, double phi, std::int64_t n_pairs,
                                     std::mt19937_64& rng);

// Scan CSV: control,phi_rad,label,counts,dwell_s (one row per point x label).
std::string scan_to_csv(const FringeScan& scan);
FringeScan parse_scan_csv(std::istream& in);
FringeScan read_scan_csv(const std::string& path);

/// Metadata sidecar: seed, config digest, labels and the configuration itself.
nlohmann::json scan_sidecar(const FringeScan& scan, const ScanConfig& config);

}  // namespace noonfi
