#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "noonfi/experiment_simulator.hpp"
#include "noonfi/fisher_engine.hpp"
#include "noonfi/fringe_fitting.hpp"
#include "noonfi/loss_calibration.hpp"

namespace noonfi::pipeline {

inline constexpr const char* kToolVersion = "0.3.1";
inline constexpr const char* kOutDirEnv = "NOONFI_OUT_DIR";

struct CalibrationSection {
  std::optional<std::filesystem::path> file;         // calibration CSV
  std::optional<std::filesystem::path> budget_file;  // budget JSON
  std::optional<LineValues> eta;                     // inline transmissions
  std::optional<LineValues> reported_db;
};

struct ProbeSection {
  int n_photons = 2;
  std::optional<double> eta_t;
  std::optional<double> v1;
  std::optional<double> v2;

  /// Explicit override first, then the arm-balance law.
  Visibility visibility(int order) const;
};

struct GridSection {
  bool voltage = false;
  double start = 0.0;
  double stop = kPi;
  std::size_t points = 100;
  bool include_stop = false;  // false: [start, stop) so a full period has no duplicate
  double rad_per_volt = 1.0;
  double offset_rad = 0.0;
};

struct ScanSection {
  GridSection grid;
  double pair_rate = 1e5;
  double dwell_s = 1.0;
  std::uint64_t seed = 1;
  double accidental_rate = 0.0;
  double multi_pair_rate = 0.0;
  bool noiseless = false;
};

struct FitSection {
  std::optional<std::filesystem::path> scan;  // default: <out>/scan.csv
  std::optional<int> harmonic;                // default: probe N
  double k = 3.0;
  bool shared_visibility = false;
  bool shared_phase = false;
  std::size_t band_points = 200;
};

struct FisherSection {
  double tol = kDefaultMaxTolerance;
  Normalization normalization = Normalization::per_photon;
  Pairing pairing = Pairing::channel_sums;
  bool include_no_click = false;
  std::size_t grid_points = 513;
  /// Take V of the probe order from a fit JSON (path, or <out>/fit.json when true).
  std::optional<std::filesystem::path> fit;
};

struct ScenarioSection {
  bool no_relative_loss = false;
  std::optional<double> pnrd_recovered_db;
  std::optional<double> target_ratio;  // solve the uniform recovery for this R
};

struct PipelineConfig {
  std::filesystem::path base_dir;
  CalibrationSection calibration;
  ProbeSection probe;
  ScanSection scan;
  FitSection fit;
  FisherSection fisher;
  ScenarioSection scenario;
  std::optional<ReferenceClaims> reference;
  std::optional<std::filesystem::path> output;
  std::string digest;  // of the canonical configuration text

  /// Validates the whole document, reporting every problem in one SchemaError.
  static PipelineConfig from_json(const nlohmann::json& j, const std::filesystem::path& base_dir);
  static PipelineConfig load(const std::filesystem::path& path);
};

struct RunOptions {
  std::optional<std::uint64_t> seed;
  std::optional<std::filesystem::path> out_dir;
};

/// --out, then the config's output entry, then $NOONFI_OUT_DIR, then ./noonfi_out.
std::filesystem::path resolve_output_dir(const PipelineConfig& config, const RunOptions& options);

/// Budget from the calibration section (CSV, budget JSON or inline values).
LossBudget resolve_budget(const PipelineConfig& config);

ScanConfig make_scan_config(const PipelineConfig& config, const LossBudget& budget, const RunOptions& options);

struct CommandResult {
  std::vector<std::filesystem::path> written;
  std::vector<std::string> messages;
};

CommandResult cmd_calibrate(const PipelineConfig& config, const RunOptions& options = {});
CommandResult cmd_simulate(const PipelineConfig& config, const RunOptions& options = {});
CommandResult cmd_fit(const PipelineConfig& config, const RunOptions& options = {});
CommandResult cmd_advantage(const PipelineConfig& config, const RunOptions& options = {});
CommandResult cmd_scenario(const PipelineConfig& config, const RunOptions& options = {});

/// Report JSON written by cmd_advantage, exposed for reuse and testing.
nlohmann::json advantage_document(const PipelineConfig& config, const LossBudget& budget, const Visibility& v1,
                                  const Visibility& v2, const std::string& visibility_source);

}  // namespace noonfi::pipeline
