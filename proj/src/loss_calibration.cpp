#include "noonfi/loss_calibration.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <istream>
#include <map>
#include <numeric>
#include <sstream>

#include "noonfi/errors.hpp"
#include "noonfi/io_util.hpp"

namespace noonfi {

namespace {

void require_transmission(double eta, const std::string& what) {
  if (!(eta > 0.0 && eta <= 1.0)) {
    throw DomainError(what + " must lie in (0, 1], got " + io::format_number(eta));
  }
}

}  // namespace

double db_to_transmission(double loss_db) {
  if (!std::isfinite(loss_db) || loss_db < 0.0) {
    throw DomainError("loss in dB must be finite and >= 0 (gain is not modeled), got " +
                      io::format_number(loss_db));
  }
  return std::pow(10.0, -loss_db / 10.0);
}

double transmission_to_db(double eta) {
  if (!(eta > 0.0) || !std::isfinite(eta)) {
    throw DomainError("transmission must be > 0, got " + io::format_number(eta));
  }
  return -10.0 * std::log10(eta);
}

std::string to_string(BudgetSource source) {
  switch (source) {
    case BudgetSource::measured: return "measured";
    case BudgetSource::derived: return "derived";
    case BudgetSource::scenario: return "scenario";
  }
  return "measured";
}

BudgetSource budget_source_from_string(const std::string& name) {
  if (name == "measured") return BudgetSource::measured;
  if (name == "derived") return BudgetSource::derived;
  if (name == "scenario") return BudgetSource::scenario;
  throw SchemaError("unknown budget source '" + name + "'");
}

LossBudget::LossBudget(LineValues eta, BudgetSource source) : eta_(eta), source_(source) {
  for (int i = 0; i < kDetectionLines; ++i) {
    require_transmission(eta_[i], "eta" + std::to_string(i + 1));
  }
}

LossBudget LossBudget::uniform(double eta, BudgetSource source) {
  return LossBudget({eta, eta, eta, eta}, source);
}

double LossBudget::eta(int line) const {
  if (line < 1 || line > kDetectionLines) {
    throw DomainError("detection line must be 1..4, got " + std::to_string(line));
  }
  return eta_[line - 1];
}

double LossBudget::total() const { return std::accumulate(eta_.begin(), eta_.end(), 0.0); }

LineValues LossBudget::derived_db() const {
  LineValues db{};
  for (int i = 0; i < kDetectionLines; ++i) db[i] = transmission_to_db(eta_[i]);
  return db;
}

LossBudget LossBudget::with_reported_db(const LineValues& db) const {
  for (double d : db) {
    if (!std::isfinite(d) || d < 0.0) throw DomainError("reported dB values must be finite and >= 0");
  }
  LossBudget copy = *this;
  copy.reported_db_ = db;
  return copy;
}

LossBudget LossBudget::with_sigma(const LineValues& sigma) const {
  LossBudget copy = *this;
  copy.sigma_ = sigma;
  return copy;
}

LossBudget LossBudget::with_warning(std::string warning) const {
  LossBudget copy = *this;
  copy.warnings_.push_back(std::move(warning));
  return copy;
}

LossBudget LossBudget::scaled(double c) const {
  if (!(c > 0.0) || !std::isfinite(c)) throw DomainError("scale factor must be positive");
  LineValues eta = eta_;
  for (double& e : eta) {
    e *= c;
    if (e > 1.0) {
      throw DomainError("scaled transmission exceeds 1 (" + io::format_number(e) + ")");
    }
  }
  LossBudget out(eta, BudgetSource::scenario);
  out.warnings_ = warnings_;
  return out;
}

ArmBalance::ArmBalance(double eta_t) : eta_t_(eta_t) { require_transmission(eta_t, "arm balance eta_t"); }

double CalibrationRecord::transmission() const {
  return measured_power_w * std::pow(10.0, attenuator_db / 10.0) / reference_power_w;
}

void CalibrationRecord::validate() const {
  const std::string where = "calibration record (line " + std::to_string(line_id) + ")";
  if (line_id < 1 || line_id > kDetectionLines) throw DomainError(where + ": line_id must be 1..4");
  if (!(reference_power_w > 0.0) || !(measured_power_w > 0.0)) {
    throw DomainError(where + ": powers must be positive");
  }
  if (!std::isfinite(attenuator_db) || attenuator_db < 0.0) {
    throw DomainError(where + ": attenuator setting must be >= 0 dB");
  }
  if (counts_per_s < 0.0) throw DomainError(where + ": negative detector counts");
  if (transmission() > 1.0 + 1e-12) {
    throw DomainError(where + ": measured power exceeds reference after attenuator correction");
  }
}

LossBudget build_loss_budget(const std::vector<CalibrationRecord>& records) {
  std::array<std::vector<double>, kDetectionLines> per_line;
  for (const auto& r : records) {
    r.validate();
    per_line[r.line_id - 1].push_back(std::min(r.transmission(), 1.0));
  }

  std::string missing;
  for (int i = 0; i < kDetectionLines; ++i) {
    if (per_line[i].empty()) missing += (missing.empty() ? "" : ", ") + std::to_string(i + 1);
  }
  if (!missing.empty()) throw DomainError("calibration is missing line(s): " + missing);

  LineValues mean{}, sigma{};
  std::vector<std::string> warnings;
  for (int i = 0; i < kDetectionLines; ++i) {
    // Sorted so the mean is bitwise independent of record order.
    auto values = per_line[i];
    std::sort(values.begin(), values.end());
    const double n = static_cast<double>(values.size());
    const double m = std::accumulate(values.begin(), values.end(), 0.0) / n;
    double ss = 0.0;
    for (double v : values) ss += (v - m) * (v - m);
    mean[i] = m;
    sigma[i] = values.size() > 1 ? std::sqrt(ss / (n - 1.0)) : 0.0;

    const double spread = (values.back() - values.front()) / m;
    if (spread > kRecordSpreadThreshold) {
      warnings.push_back("line " + std::to_string(i + 1) + ": record spread " +
                         io::format_number(100.0 * spread) + "% exceeds 10%");
    }
  }

  LossBudget budget = LossBudget(mean, BudgetSource::measured).with_sigma(sigma);
  for (auto& w : warnings) budget = budget.with_warning(std::move(w));
  return budget;
}

std::string AuditFinding::message() const {
  return "line " + std::to_string(line) + ": eta=" + io::format_number(eta) + " implies " +
         io::format_number(implied_db) + " dB but " + io::format_number(reported_db) +
         " dB is reported (which implies eta=" + io::format_number(implied_eta) + ")";
}

AuditResult consistency_audit(const LossBudget& budget) {
  AuditResult result;
  if (!budget.reported_db()) {
    result.note = "dB not provided";
    return result;
  }
  const auto& reported = *budget.reported_db();
  for (int i = 0; i < kDetectionLines; ++i) {
    const double implied_db = transmission_to_db(budget.eta()[i]);
    if (std::abs(implied_db - reported[i]) > kAuditThresholdDb) {
      result.findings.push_back({i + 1, budget.eta()[i], reported[i], implied_db,
                                 db_to_transmission(reported[i])});
    }
  }
  return result;
}

std::pair<double, double> classical_arm_transmissions(const LossBudget& budget) {
  const auto& e = budget.eta();
  return {(e[0] + e[1]) / 2.0, (e[2] + e[3]) / 2.0};
}

std::vector<CalibrationRecord> parse_calibration_csv(std::istream& in) {
  static const std::vector<std::string> kHeader = {
      "line_id", "reference_power_w", "measured_power_w", "attenuator_db", "counts_per_s", "timestamp"};
  std::string line;
  if (!std::getline(in, line)) throw SchemaError("calibration CSV is empty");
  if (io::split_csv_line(line) != kHeader) {
    throw SchemaError(
        "calibration CSV header must be "
        "'line_id,reference_power_w,measured_power_w,attenuator_db,counts_per_s,timestamp'");
  }
  std::vector<CalibrationRecord> records;
  int row = 1;
  while (std::getline(in, line)) {
    ++row;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const auto f = io::split_csv_line(line);
    const std::string ctx = "calibration CSV row " + std::to_string(row);
    if (f.size() != kHeader.size()) {
      throw SchemaError(ctx + ": expected 6 fields, got " + std::to_string(f.size()));
    }
    CalibrationRecord r;
    r.line_id = static_cast<int>(io::parse_integer(f[0], ctx + " line_id"));
    r.reference_power_w = io::parse_double(f[1], ctx + " reference_power_w");
    r.measured_power_w = io::parse_double(f[2], ctx + " measured_power_w");
    r.attenuator_db = io::parse_double(f[3], ctx + " attenuator_db");
    r.counts_per_s = io::parse_double(f[4], ctx + " counts_per_s");
    r.timestamp = f[5];
    try {
      r.validate();
    } catch (const DomainError& e) {
      throw SchemaError(ctx + ": " + e.what());
    }
    records.push_back(std::move(r));
  }
  return records;
}

std::vector<CalibrationRecord> read_calibration_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw SchemaError("cannot open calibration file " + path);
  return parse_calibration_csv(in);
}

nlohmann::json to_json(const LossBudget& budget) {
  auto rounded = [](const LineValues& v) {
    nlohmann::json arr = nlohmann::json::array();
    for (double x : v) arr.push_back(io::round_significant(x));
    return arr;
  };
  nlohmann::json j;
  j["eta"] = rounded(budget.eta());
  j["db"] = rounded(budget.reported_db().value_or(budget.derived_db()));
  j["db_derived"] = rounded(budget.derived_db());
  if (budget.sigma()) j["sigma"] = rounded(*budget.sigma());
  j["source"] = to_string(budget.source());
  j["warnings"] = budget.warnings();
  return j;
}

namespace {

LineValues line_values(const nlohmann::json& j, const std::string& key) {
  if (!j.contains(key) || !j.at(key).is_array() || j.at(key).size() != kDetectionLines) {
    throw SchemaError("budget field '" + key + "' must be an array of 4 numbers");
  }
  LineValues out{};
  for (int i = 0; i < kDetectionLines; ++i) {
    if (!j.at(key)[i].is_number()) throw SchemaError("budget field '" + key + "' must hold numbers");
    out[i] = j.at(key)[i].get<double>();
  }
  return out;
}

}  // namespace

LossBudget budget_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw SchemaError("budget JSON must be an object");
  const auto source = j.contains("source") ? budget_source_from_string(j.at("source").get<std::string>())
                                           : BudgetSource::measured;
  LossBudget budget = [&] {
    try {
      return LossBudget(line_values(j, "eta"), source);
    } catch (const DomainError& e) {
      throw SchemaError(std::string("budget: ") + e.what());
    }
  }();
  if (j.contains("db") && !j.at("db").is_null()) budget = budget.with_reported_db(line_values(j, "db"));
  if (j.contains("sigma")) budget = budget.with_sigma(line_values(j, "sigma"));
  if (j.contains("warnings")) {
    for (const auto& w : j.at("warnings")) budget = budget.with_warning(w.get<std::string>());
  }
  return budget;
}

nlohmann::json to_json(const AuditResult& audit) {
  nlohmann::json j;
  j["findings"] = nlohmann::json::array();
  for (const auto& f : audit.findings) {
    j["findings"].push_back({{"line", f.line},
                             {"eta", io::round_significant(f.eta)},
                             {"reported_db", io::round_significant(f.reported_db)},
                             {"implied_db", io::round_significant(f.implied_db)},
                             {"implied_eta", io::round_significant(f.implied_eta)},
                             {"message", f.message()}});
  }
  if (audit.note) j["note"] = *audit.note;
  return j;
}

}  // namespace noonfi
