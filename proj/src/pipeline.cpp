#include "noonfi/pipeline.hpp"

#include <cmath>
#include <cstdlib>
#include <set>
#include <sstream>

#include "noonfi/errors.hpp"
#include "noonfi/io_util.hpp"

namespace noonfi::pipeline {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

/// Walks one JSON object, recording every schema problem instead of stopping at the first.
class Section {
 public:
  Section(const json& j, std::string name, std::vector<std::string>& errors)
      : j_(j), name_(std::move(name)), errors_(errors) {
    if (!j_.is_object()) fail("must be an object");
  }

  bool has(const std::string& key) {
    seen_.insert(key);
    return j_.is_object() && j_.contains(key) && !j_.at(key).is_null();
  }

  std::optional<double> number(const std::string& key) {
    if (!has(key)) return std::nullopt;
    const auto& v = j_.at(key);
    if (!v.is_number()) {
      fail(key, "must be a number");
      return std::nullopt;
    }
    return v.get<double>();
  }

  double number(const std::string& key, double fallback, bool (*ok)(double), const char* requirement) {
    const auto v = number(key);
    if (!v) return fallback;
    if (!ok(*v)) {
      fail(key, requirement);
      return fallback;
    }
    return *v;
  }

  std::optional<std::int64_t> integer(const std::string& key) {
    if (!has(key)) return std::nullopt;
    const auto& v = j_.at(key);
    if (!v.is_number_integer()) {
      fail(key, "must be an integer");
      return std::nullopt;
    }
    return v.get<std::int64_t>();
  }

  bool boolean(const std::string& key, bool fallback) {
    if (!has(key)) return fallback;
    const auto& v = j_.at(key);
    if (!v.is_boolean()) {
      fail(key, "must be true or false");
      return fallback;
    }
    return v.get<bool>();
  }

  std::optional<std::string> string(const std::string& key) {
    if (!has(key)) return std::nullopt;
    const auto& v = j_.at(key);
    if (!v.is_string()) {
      fail(key, "must be a string");
      return std::nullopt;
    }
    return v.get<std::string>();
  }

  std::optional<LineValues> lines(const std::string& key) {
    if (!has(key)) return std::nullopt;
    const auto& v = j_.at(key);
    if (!v.is_array() || v.size() != kDetectionLines) {
      fail(key, "must be an array of 4 numbers");
      return std::nullopt;
    }
    LineValues out{};
    for (int i = 0; i < kDetectionLines; ++i) {
      if (!v[i].is_number()) {
        fail(key, "must be an array of 4 numbers");
        return std::nullopt;
      }
      out[i] = v[i].get<double>();
    }
    return out;
  }

  std::optional<Section> child(const std::string& key) {
    if (!has(key)) return std::nullopt;
    return Section(j_.at(key), name_ + "." + key, errors_);
  }

  void fail(const std::string& key, const std::string& message) { errors_.push_back(name_ + "." + key + " " + message); }
  void fail(const std::string& message) { errors_.push_back(name_ + " " + message); }

  /// Flags keys that were never asked for (usually typos).
  void reject_unknown() {
    if (!j_.is_object()) return;
    for (const auto& [key, value] : j_.items()) {
      if (!seen_.count(key)) errors_.push_back(name_ + "." + key + " is not a recognized setting");
    }
  }

 private:
  const json& j_;
  std::string name_;
  std::vector<std::string>& errors_;
  std::set<std::string> seen_;
};

bool positive(double x) { return x > 0.0; }
bool non_negative(double x) { return x >= 0.0; }
bool unit_interval(double x) { return x >= 0.0 && x <= 1.0; }
bool open_unit_interval(double x) { return x > 0.0 && x <= 1.0; }

fs::path resolve(const fs::path& base, const std::string& p) {
  const fs::path path(p);
  return path.is_absolute() ? path : (base / path).lexically_normal();
}

json with_provenance(json j, const PipelineConfig& config) {
  j["tool_version"] = kToolVersion;
  j["config_digest"] = config.digest;
  return j;
}

std::string dump(const json& j) { return j.dump(2) + "\n"; }

void write(CommandResult& result, const fs::path& path, const std::string& contents) {
  io::write_file_atomic(path, contents);
  result.written.push_back(path);
}

}  // namespace

Visibility ProbeSection::visibility(int order) const {
  const auto& explicit_v = order == 1 ? v1 : v2;
  if (explicit_v) return Visibility(*explicit_v, order);
  if (eta_t) return visibility_from_relative_loss(*eta_t, order);
  throw DomainError("probe needs eta_t or v" + std::to_string(order) + " to fix the order-" + std::to_string(order) +
                    " visibility");
}

PipelineConfig PipelineConfig::from_json(const json& j, const fs::path& base_dir) {
  std::vector<std::string> errors;
  PipelineConfig config;
  config.base_dir = base_dir;
  Section root(j, "config", errors);

  if (auto s = root.child("calibration")) {
    if (auto f = s->string("file")) config.calibration.file = resolve(base_dir, *f);
    if (auto f = s->string("budget")) config.calibration.budget_file = resolve(base_dir, *f);
    config.calibration.eta = s->lines("eta");
    config.calibration.reported_db = s->lines("db");
    const int sources = int(s->has("file")) + int(s->has("budget")) + int(s->has("eta"));
    if (sources != 1) s->fail("needs exactly one of file, budget, eta");
    if (config.calibration.eta) {
      for (double e : *config.calibration.eta) {
        if (!open_unit_interval(e)) s->fail("eta", "entries must lie in (0, 1]");
      }
    }
    s->reject_unknown();
  } else {
    errors.push_back("config.calibration is required");
  }

  if (auto s = root.child("probe")) {
    if (auto n = s->integer("n_photons")) {
      if (*n != 1 && *n != 2) s->fail("n_photons", "must be 1 or 2");
      else config.probe.n_photons = static_cast<int>(*n);
    }
    config.probe.eta_t = s->number("eta_t");
    if (config.probe.eta_t && !(*config.probe.eta_t >= 0.0 && *config.probe.eta_t <= 1.0)) {
      s->fail("eta_t", "must lie in [0, 1]");
    }
    config.probe.v1 = s->number("v1");
    config.probe.v2 = s->number("v2");
    if (config.probe.v1 && !unit_interval(*config.probe.v1)) s->fail("v1", "must lie in [0, 1]");
    if (config.probe.v2 && !unit_interval(*config.probe.v2)) s->fail("v2", "must lie in [0, 1]");
    s->reject_unknown();
  }

  if (auto s = root.child("scan")) {
    auto& scan = config.scan;
    auto phase = s->child("phase_grid");
    auto voltage = s->child("voltage_grid");
    if (phase && voltage) s->fail("takes phase_grid or voltage_grid, not both");
    auto grid = phase ? phase : voltage;
    if (grid) {
      scan.grid.voltage = !phase.has_value();
      scan.grid.start = grid->number("start").value_or(0.0);
      scan.grid.stop = grid->number("stop").value_or(scan.grid.voltage ? 1.0 : kPi);
      if (auto n = grid->integer("points")) {
        if (*n < 2) grid->fail("points", "must be at least 2");
        else scan.grid.points = static_cast<std::size_t>(*n);
      }
      scan.grid.include_stop = grid->boolean("include_stop", false);
      if (!(scan.grid.stop > scan.grid.start)) grid->fail("stop", "must exceed start");
      if (scan.grid.voltage) {
        scan.grid.rad_per_volt = grid->number("rad_per_volt").value_or(1.0);
        scan.grid.offset_rad = grid->number("offset_rad").value_or(0.0);
      }
      grid->reject_unknown();
    }
    scan.pair_rate = s->number("pair_rate", scan.pair_rate, positive, "must be positive");
    scan.dwell_s = s->number("dwell_s", scan.dwell_s, positive, "must be positive");
    if (auto seed = s->integer("seed")) {
      if (*seed < 0) s->fail("seed", "must be non-negative");
      else scan.seed = static_cast<std::uint64_t>(*seed);
    }
    scan.accidental_rate = s->number("accidental_rate", 0.0, non_negative, "must be non-negative");
    scan.multi_pair_rate = s->number("multi_pair_rate", 0.0, non_negative, "must be non-negative");
    scan.noiseless = s->boolean("noiseless", false);
    s->reject_unknown();
  }

  if (auto s = root.child("fit")) {
    auto& fit = config.fit;
    if (auto p = s->string("scan")) fit.scan = resolve(base_dir, *p);
    if (auto m = s->integer("harmonic")) {
      if (*m != 1 && *m != 2) s->fail("harmonic", "must be 1 or 2");
      else fit.harmonic = static_cast<int>(*m);
    }
    fit.k = s->number("k", fit.k, non_negative, "must be non-negative");
    fit.shared_visibility = s->boolean("shared_visibility", false);
    fit.shared_phase = s->boolean("shared_phase", false);
    if (auto n = s->integer("band_points")) {
      if (*n < 2) s->fail("band_points", "must be at least 2");
      else fit.band_points = static_cast<std::size_t>(*n);
    }
    s->reject_unknown();
  }

  if (auto s = root.child("fisher")) {
    auto& fisher = config.fisher;
    fisher.tol = s->number("tol", fisher.tol, positive, "must be positive");
    try {
      if (auto n = s->string("normalization")) fisher.normalization = normalization_from_string(*n);
    } catch (const std::exception& e) {
      s->fail("normalization", e.what());
    }
    try {
      if (auto p = s->string("pairing")) fisher.pairing = pairing_from_string(*p);
    } catch (const std::exception& e) {
      s->fail("pairing", e.what());
    }
    fisher.include_no_click = s->boolean("include_no_click", false);
    if (auto n = s->integer("grid_points")) {
      if (*n < 2) s->fail("grid_points", "must be at least 2");
      else fisher.grid_points = static_cast<std::size_t>(*n);
    }
    if (s->has("fit")) {
      const auto& v = j.at("fisher").at("fit");
      if (v.is_string()) fisher.fit = resolve(base_dir, v.get<std::string>());
      else if (v.is_boolean() && v.get<bool>()) fisher.fit = fs::path("fit.json");  // relative to output dir
      else if (!v.is_boolean()) s->fail("fit", "must be a path or a boolean");
    }
    s->reject_unknown();
  }

  if (auto s = root.child("scenario")) {
    auto& sc = config.scenario;
    sc.no_relative_loss = s->boolean("no_relative_loss", false);
    if (auto db = s->number("pnrd_recovered_db")) {
      if (*db < 0.0) s->fail("pnrd_recovered_db", "must be non-negative");
      else sc.pnrd_recovered_db = db;
    }
    if (auto r = s->number("target_ratio")) {
      if (!(*r > 0.0)) s->fail("target_ratio", "must be positive");
      else sc.target_ratio = r;
    }
    if (sc.pnrd_recovered_db && sc.target_ratio) s->fail("takes pnrd_recovered_db or target_ratio, not both");
    s->reject_unknown();
  }

  if (auto s = root.child("reference")) {
    ReferenceClaims claims;
    claims.f1_max = s->number("f1_max");
    claims.f2_max = s->number("f2_max");
    try {
      if (auto n = s->string("normalization")) claims.normalization = normalization_from_string(*n);
    } catch (const std::exception& e) {
      s->fail("normalization", e.what());
    }
    claims.maxima_tolerance = s->number("maxima_tolerance", claims.maxima_tolerance, positive, "must be positive");
    claims.ratio_tolerance = s->number("ratio_tolerance", claims.ratio_tolerance, positive, "must be positive");
    if (s->has("ratios")) {
      const auto& r = j.at("reference").at("ratios");
      if (!r.is_array()) {
        s->fail("ratios", "must be an array of numbers");
      } else {
        for (const auto& x : r) {
          if (x.is_number()) claims.ratios.push_back(x.get<double>());
          else s->fail("ratios", "must be an array of numbers");
        }
      }
    }
    config.reference = claims;
    s->reject_unknown();
  }

  if (auto out = root.string("output")) config.output = resolve(base_dir, *out);
  root.reject_unknown();

  if (!errors.empty()) {
    std::ostringstream msg;
    msg << "invalid configuration (" << errors.size() << " problem" << (errors.size() == 1 ? "" : "s") << "):";
    for (const auto& e : errors) msg << "\n  - " << e;
    throw SchemaError(msg.str());
  }
  config.digest = io::fnv1a_hex(j.dump());
  return config;
}

PipelineConfig PipelineConfig::load(const fs::path& path) {
  json j;
  try {
    j = json::parse(io::read_file(path));
  } catch (const json::parse_error& e) {
    throw SchemaError(path.string() + ": " + e.what());
  }
  const auto base = path.has_parent_path() ? path.parent_path() : fs::path(".");
  return from_json(j, base);
}

fs::path resolve_output_dir(const PipelineConfig& config, const RunOptions& options) {
  if (options.out_dir) return *options.out_dir;
  if (config.output) return *config.output;
  if (const char* env = std::getenv(kOutDirEnv); env && *env) return fs::path(env);
  return fs::path("noonfi_out");
}

LossBudget resolve_budget(const PipelineConfig& config) {
  const auto& cal = config.calibration;
  LossBudget budget = [&] {
    if (cal.file) return build_loss_budget(read_calibration_csv(cal.file->string()));
    if (cal.budget_file) {
      try {
        return budget_from_json(json::parse(io::read_file(*cal.budget_file)));
      } catch (const json::exception& e) {
        throw SchemaError(cal.budget_file->string() + ": " + e.what());
      }
    }
    return LossBudget(*cal.eta, BudgetSource::measured);
  }();
  if (cal.reported_db) budget = budget.with_reported_db(*cal.reported_db);
  return budget;
}

ScanConfig make_scan_config(const PipelineConfig& config, const LossBudget& budget, const RunOptions& options) {
  const auto& s = config.scan;
  ScanConfig scan;
  scan.n_photons = config.probe.n_photons;
  scan.arm_balance = config.probe.eta_t.value_or(1.0);
  const auto& explicit_v = scan.n_photons == 1 ? config.probe.v1 : config.probe.v2;
  if (explicit_v) scan.visibility = *explicit_v;
  scan.budget = budget;
  scan.pair_rate = s.pair_rate;
  scan.dwell_s = s.dwell_s;
  scan.seed = options.seed.value_or(s.seed);
  scan.accidental_rate = s.accidental_rate;
  scan.multi_pair_rate = s.multi_pair_rate;
  scan.noiseless = s.noiseless;

  std::vector<double> values;
  if (s.grid.include_stop) {
    values = linear_grid(s.grid.start, s.grid.stop, s.grid.points);
  } else {
    const double step = (s.grid.stop - s.grid.start) / static_cast<double>(s.grid.points);
    for (std::size_t i = 0; i < s.grid.points; ++i) values.push_back(s.grid.start + step * static_cast<double>(i));
  }
  if (s.grid.voltage) {
    scan.control = VoltageGrid{values, s.grid.rad_per_volt, s.grid.offset_rad};
  } else {
    scan.control = PhaseGrid{values};
  }
  scan.validate();
  return scan;
}

CommandResult cmd_calibrate(const PipelineConfig& config, const RunOptions& options) {
  CommandResult result;
  const auto budget = resolve_budget(config);
  const auto audit = consistency_audit(budget);
  json doc = to_json(budget);
  doc["audit"] = to_json(audit);
  const auto arms = classical_arm_transmissions(budget);
  doc["classical_arms"] = {io::round_significant(arms.first), io::round_significant(arms.second)};
  write(result, resolve_output_dir(config, options) / "budget.json", dump(with_provenance(doc, config)));
  for (const auto& f : audit.findings) result.messages.push_back(f.message());
  if (audit.note) result.messages.push_back(*audit.note);
  return result;
}

CommandResult cmd_simulate(const PipelineConfig& config, const RunOptions& options) {
  CommandResult result;
  const auto scan_config = make_scan_config(config, resolve_budget(config), options);
  const auto scan = simulate_fringe_scan(scan_config);
  const auto out = resolve_output_dir(config, options);

  json sidecar = scan_sidecar(scan, scan_config);
  if (scan_config.n_photons == 2) {
    json diag = json::array();
    const auto expected = multi_pair_diagnostic(scan_config);
    const auto observed = observe_same_channel(scan_config);
    for (std::size_t i = 0; i < expected.size(); ++i) {
      diag.push_back({{"label", expected[i].label},
                      {"expected_true", io::round_significant(expected[i].true_detected)},
                      {"accidental_floor", io::round_significant(expected[i].accidental_floor)},
                      {"observed", observed[i].counts},
                      {"significance", io::round_significant(observed[i].significance)}});
      if (observed[i].significance >= 5.0) {
        result.messages.push_back(observed[i].label + " coincidences exceed the accidental floor at " +
                                  io::format_number(observed[i].significance) + " sigma (multi-pair emission)");
      }
    }
    sidecar["same_channel"] = diag;
  }
  write(result, out / "scan.csv", scan_to_csv(scan));
  write(result, out / "scan.json", dump(with_provenance(sidecar, config)));
  return result;
}

CommandResult cmd_fit(const PipelineConfig& config, const RunOptions& options) {
  CommandResult result;
  const auto out = resolve_output_dir(config, options);
  const int harmonic = config.fit.harmonic.value_or(config.probe.n_photons);
  if (harmonic != config.probe.n_photons) {
    throw DomainError("fit harmonic m=" + std::to_string(harmonic) + " does not match the probe order N=" +
                      std::to_string(config.probe.n_photons));
  }
  const auto scan_path = config.fit.scan.value_or(out / "scan.csv");
  const auto scan = read_scan_csv(scan_path.string());

  FitOptions fit_options;
  fit_options.shared_visibility = config.fit.shared_visibility;
  fit_options.shared_phase = config.fit.shared_phase;
  const auto fit = fit_fringes(scan, harmonic, fit_options);

  const auto band_grid = linear_grid(0.0, 2.0 * kPi / harmonic, config.fit.band_points);
  for (const auto& curve : fit.curves) {
    const auto band = confidence_band(curve, config.fit.k, band_grid);
    write(result, out / ("band_" + curve.label + ".csv"),
          band_to_csv(band.phi, band.central, band.lower, band.upper));
  }

  const auto budget = resolve_budget(config);
  const auto fi_grid = linear_grid(0.0, kPi, config.fisher.grid_points);
  const auto fi = fi_band_from_fit(fit, budget, config.fit.k, fi_grid, config.fisher.normalization);
  write(result, out / "fi_band.csv", band_to_csv(fi.central.phi, fi.central.values, fi.lower, fi.upper));

  json doc = to_json(fit);
  doc["k"] = io::round_significant(config.fit.k);
  doc["fi_band"] = {{"normalization", to_string(config.fisher.normalization)},
                    {"V", io::round_significant(fi.visibility)},
                    {"V_lower", io::round_significant(fi.visibility_lower)},
                    {"V_upper", io::round_significant(fi.visibility_upper)},
                    {"max", io::round_significant(fi.max_central.value)},
                    {"max_lower", io::round_significant(fi.max_lower.value)},
                    {"max_upper", io::round_significant(fi.max_upper.value)},
                    {"argmax_phi", io::round_significant(fi.max_central.phi)},
                    {"warnings", fi.warnings}};
  doc["scan"] = {{"seed", scan.seed}, {"config_digest", scan.config_digest}};
  write(result, out / "fit.json", dump(with_provenance(doc, config)));
  for (const auto& w : fit.warnings) result.messages.push_back(w);
  for (const auto& w : fi.warnings) result.messages.push_back(w);
  return result;
}

json advantage_document(const PipelineConfig& config, const LossBudget& budget, const Visibility& v1,
                        const Visibility& v2, const std::string& visibility_source) {
  AdvantageOptions opts;
  opts.tol = config.fisher.tol;
  opts.include_no_click = config.fisher.include_no_click;
  auto report = advantage_numeric(budget, v1, v2, opts);
  report.pairing = config.fisher.pairing;
  if (config.reference) compare_with_reference(report, *config.reference);

  json doc = to_json(report);
  doc["per_photon"] = {{"f1_max", io::round_significant(report.f1_max.value)},
                       {"f2_max", io::round_significant(report.f2_max.value / 2.0)}};
  doc["inputs"] = {{"eta", to_json(budget)["eta"]},
                   {"v1", io::round_significant(v1.value())},
                   {"v2", io::round_significant(v2.value())},
                   {"visibility_source", visibility_source}};
  return with_provenance(doc, config);
}

CommandResult cmd_advantage(const PipelineConfig& config, const RunOptions& options) {
  CommandResult result;
  const auto out = resolve_output_dir(config, options);
  const auto budget = resolve_budget(config);
  const int order = config.probe.n_photons;

  std::optional<Visibility> fitted;
  std::string source = "probe";
  if (config.fisher.fit) {
    const auto path = config.fisher.fit->is_absolute() ? *config.fisher.fit : out / *config.fisher.fit;
    FitResult fit;
    try {
      fit = fit_from_json(json::parse(io::read_file(path)));
    } catch (const json::parse_error& e) {
      throw SchemaError(path.string() + ": " + e.what());
    }
    if (fit.harmonic != order) {
      throw DomainError("fitted visibility has order " + std::to_string(fit.harmonic) +
                        " but the probe order is N=" + std::to_string(order));
    }
    fitted = Visibility(fit.pooled_visibility, fit.harmonic);
    source = "fit:" + path.filename().string();
  }
  const Visibility v1 = fitted && order == 1 ? *fitted : config.probe.visibility(1);
  const Visibility v2 = fitted && order == 2 ? *fitted : config.probe.visibility(2);

  const auto doc = advantage_document(config, budget, v1, v2, source);
  write(result, out / "advantage.json", dump(doc));

  const auto grid = linear_grid(0.0, kPi, config.fisher.grid_points);
  FisherOptions f1_options;
  f1_options.include_loss_outcome = config.fisher.include_no_click;
  const auto f2 = fisher_curve(coincidence_distribution(budget, v2), grid);
  const auto f1 = fisher_curve(single_photon_distribution(budget, v1), grid, Normalization::raw, f1_options);
  std::ostringstream csv;
  csv << "phi_rad,f2_raw,f2_per_photon,f1_raw,f1_per_photon\n";
  for (std::size_t i = 0; i < grid.size(); ++i) {
    csv << io::format_number(grid[i]) << ',' << io::format_number(f2.values[i]) << ','
        << io::format_number(f2.values[i] / 2.0) << ',' << io::format_number(f1.values[i]) << ','
        << io::format_number(f1.values[i]) << '\n';
  }
  write(result, out / "fi_curve.csv", csv.str());

  for (const auto& w : doc.at("warnings")) result.messages.push_back(w.at("code").get<std::string>());
  return result;
}

CommandResult cmd_scenario(const PipelineConfig& config, const RunOptions& options) {
  CommandResult result;
  const auto base = resolve_budget(config);
  const auto& sc = config.scenario;

  Scenario scenario;
  if (sc.pnrd_recovered_db || sc.target_ratio) {
    scenario.kind = Scenario::Kind::pnrd;
    const double db = sc.target_ratio ? recovery_for_target_ratio(base, *sc.target_ratio, config.fisher.pairing)
                                      : *sc.pnrd_recovered_db;
    scenario.recovered_db.fill(db);
  } else if (sc.no_relative_loss) {
    scenario.kind = Scenario::Kind::no_relative_loss;
  }

  AdvantageOptions opts;
  opts.tol = config.fisher.tol;
  opts.include_no_click = config.fisher.include_no_click;
  auto outcome = scenario_report(base, config.probe.visibility(1), config.probe.visibility(2), scenario, opts);
  outcome.report.pairing = config.fisher.pairing;

  json recovered = json::array();
  for (double db : scenario.recovered_db) recovered.push_back(io::round_significant(db));
  json doc = {{"scenario", {{"kind", to_string(scenario.kind)}, {"recovered_db", recovered}}},
              {"budget", to_json(outcome.budget)},
              {"v1", io::round_significant(outcome.v1.value())},
              {"v2", io::round_significant(outcome.v2.value())},
              {"report", to_json(outcome.report)}};
  write(result, resolve_output_dir(config, options) / "scenario.json", dump(with_provenance(doc, config)));
  result.messages.push_back("closed-form R (" + to_string(config.fisher.pairing) + ") = " +
                            io::format_number(config.fisher.pairing == Pairing::channel_sums
                                                  ? outcome.report.closed_form.channel_sums
                                                  : outcome.report.closed_form.mixed_sums));
  return result;
}

}  // namespace noonfi::pipeline
