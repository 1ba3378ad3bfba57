#include <cstdint>
#include <iostream>
#include <map>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "noonfi/errors.hpp"
#include "noonfi/fringe_fitting.hpp"
#include "noonfi/pipeline.hpp"

namespace {

using Command = noonfi::pipeline::CommandResult (*)(const noonfi::pipeline::PipelineConfig&,
                                                    const noonfi::pipeline::RunOptions&);

const std::map<std::string, std::pair<Command, std::string>>& commands() {
  using namespace noonfi::pipeline;
  static const std::map<std::string, std::pair<Command, std::string>> table = {
      {"calibrate", {&cmd_calibrate, "Build the loss budget and audit its dB column"}},
      {"simulate", {&cmd_simulate, "Simulate a fringe scan (CSV plus JSON sidecar)"}},
      {"fit", {&cmd_fit, "Fit fringes, write confidence and Fisher-information bands"}},
      {"advantage", {&cmd_advantage, "Maximize F1 and F2 and report the advantage ratio"}},
      {"scenario", {&cmd_scenario, "Re-evaluate the advantage under a hypothetical apparatus"}},
  };
  return table;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Fisher-information analysis of lossy two-photon interferometry", "noonfi"};
  app.set_version_flag("--version", noonfi::pipeline::kToolVersion);
  app.require_subcommand(1);

  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out_dir;
  for (const auto& [name, entry] : commands()) {
    auto* sub = app.add_subcommand(name, entry.second);
    sub->add_option("--config", config_path, "Pipeline configuration (JSON)")->required();
    sub->add_option("--seed", seed, "Override the scan seed");
    sub->add_option("--out", out_dir, "Output directory (default: config output, then $NOONFI_OUT_DIR)");
  }
  CLI11_PARSE(app, argc, argv);

  const std::string name = app.get_subcommands().front()->get_name();
  try {
    const auto config = noonfi::pipeline::PipelineConfig::load(config_path);
    noonfi::pipeline::RunOptions options;
    options.seed = seed;
    if (out_dir) options.out_dir = *out_dir;
    const auto result = commands().at(name).first(config, options);
    for (const auto& path : result.written) std::cout << "wrote " << path.string() << '\n';
    for (const auto& msg : result.messages) std::cerr << "note: " << msg << '\n';
    return 0;
  } catch (const noonfi::SchemaError& e) {
    std::cerr << "noonfi " << name << ": schema error: " << e.what() << '\n';
    return 2;
  } catch (const noonfi::DomainError& e) {
    std::cerr << "noonfi " << name << ": " << e.what() << '\n';
    return 3;
  } catch (const noonfi::FitError& e) {
    std::cerr << "noonfi " << name << ": " << e.what() << '\n';
    return 4;
  } catch (const std::exception& e) {
    std::cerr << "noonfi " << name << ": " << e.what() << '\n';
    return 1;
  }
}
