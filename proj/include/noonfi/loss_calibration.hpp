#pragma once

#include <array>
#include <iosfwd>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"

namespace noonfi {

inline constexpr int kDetectionLines = 4;

using LineValues = std::array<double, kDetectionLines>;

/// Power-ratio loss in dB to transmission, 10^(-dB/10). Negative dB (gain) is rejected.
double db_to_transmission(double loss_db);

/// Transmission to power-ratio loss in dB, -10 log10(eta).
double transmission_to_db(double eta);

enum class BudgetSource { measured, derived, scenario };

std::string to_string(BudgetSource source);
BudgetSource budget_source_from_string(const std::string& name);

/// Lumped transmissions of the four detection lines D1..D4, detector efficiency
/// included. Line numbers are 1-based in the accessors, matching detector names.
///
/// The reported dB column is carried as given (it may disagree with the linear
/// values; consistency_audit is the place that flags that).
class LossBudget {
 public:
  explicit LossBudget(LineValues eta, BudgetSource source = BudgetSource::measured);

  static LossBudget uniform(double eta, BudgetSource source = BudgetSource::derived);

  const LineValues& eta() const { return eta_; }
  double eta(int line) const;
  double total() const;

  LineValues derived_db() const;
  const std::optional<LineValues>& reported_db() const { return reported_db_; }
  const std::optional<LineValues>& sigma() const { return sigma_; }
  BudgetSource source() const { return source_; }
  const std::vector<std::string>& warnings() const { return warnings_; }

  LossBudget with_reported_db(const LineValues& db) const;
  LossBudget with_sigma(const LineValues& sigma) const;
  LossBudget with_warning(std::string warning) const;

  /// Every line multiplied by a common factor c in (0, 1/max(eta)].
  LossBudget scaled(double c) const;

  bool operator==(const LossBudget&) const = default;

 private:
  LineValues eta_;
  std::optional<LineValues> reported_db_;
  std::optional<LineValues> sigma_;
  BudgetSource source_;
  std::vector<std::string> warnings_;
};

/// Relative transmission of the long arm with respect to the short arm.
class ArmBalance {
 public:
  explicit ArmBalance(double eta_t);
  double value() const { return eta_t_; }

 private:
  double eta_t_;
};

struct CalibrationRecord {
  int line_id = 0;
  double reference_power_w = 0.0;
  double measured_power_w = 0.0;
  double attenuator_db = 0.0;
  double counts_per_s = 0.0;
  std::string timestamp;

  /// measured / reference with the attenuator setting divided out.
  double transmission() const;
  void validate() const;
};

/// Spread (max - min) / mean above which a line's records are flagged.
inline constexpr double kRecordSpreadThreshold = 0.10;

/// Averages per-line transmissions. Throws DomainError naming any absent lines.
LossBudget build_loss_budget(const std::vector<CalibrationRecord>& records);

struct AuditFinding {
  int line = 0;
  double eta = 0.0;
  double reported_db = 0.0;
  double implied_db = 0.0;   // from eta
  double implied_eta = 0.0;  // from reported_db
  std::string message() const;
};

struct AuditResult {
  std::vector<AuditFinding> findings;
  std::optional<std::string> note;
};

inline constexpr double kAuditThresholdDb = 0.02;

AuditResult consistency_audit(const LossBudget& budget);

/// Averaged per-port transmissions seen by a single photon:
/// ((eta1 + eta2) / 2, (eta3 + eta4) / 2).
std::pair<double, double> classical_arm_transmissions(const LossBudget& budget);

// Calibration CSV:
//   line_id,reference_power_w,measured_power_w,attenuator_db,counts_per_s,timestamp
std::vector<CalibrationRecord> parse_calibration_csv(std::istream& in);
std::vector<CalibrationRecord> read_calibration_csv(const std::string& path);

// Budget JSON: {eta:[...], db:[...], source:"measured", warnings:[...]}
nlohmann::json to_json(const LossBudget& budget);
LossBudget budget_from_json(const nlohmann::json& j);
nlohmann::json to_json(const AuditResult& audit);

}  // namespace noonfi
