// Batch front end: every flag is an override of a config key, so a config
// file plus flags and a config file alone go through the same path.

#include <CLI11.hpp>
#include <iostream>

#include "synthdid/job.hpp"

namespace {

void report(const std::exception& e) { std::cerr << synthdid::error_report(e).dump() << "\n"; }

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Synthetic difference-in-differences toolkit", "synthdid"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(synthdid::kToolVersion));

  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out_dir;
  std::optional<unsigned> threads;
  std::optional<std::size_t> replicates;
  std::vector<std::string> sets;
  app.add_option("--config", config_path, "JSON job configuration")->required();
  app.add_option("--seed", seed, "seed for every stochastic step");
  app.add_option("--out", out_dir, "output directory");
  app.add_option("--threads", threads, "worker threads, 0 = all cores (results do not depend on it)");
  app.add_option("--bootstrap", replicates, "bootstrap replicates");
  app.add_option("--set", sets, "override a config key, e.g. --set placebo.drop_last=2");

  for (const auto& name : synthdid::job_commands()) {
    app.add_subcommand(name)->fallthrough();
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    report(synthdid::ConfigError(e.what()));
    return 2;
  }

  try {
    nlohmann::json doc = synthdid::read_config_file(config_path);
    for (const auto& s : sets) synthdid::apply_override(doc, s);
    if (seed) {
      doc["seed"] = *seed;
      for (const char* section : {"bootstrap", "simulation"}) {
        if (doc.contains(section) && doc[section].is_object()) doc[section]["seed"] = *seed;
      }
    }
    if (replicates) doc["bootstrap"]["replicates"] = *replicates;
    if (out_dir) doc["output"]["dir"] = *out_dir;
    if (threads) doc["threads"] = *threads;

    const synthdid::JobConfig config = synthdid::parse_config(doc);
    const std::string command = app.get_subcommands().front()->get_name();
    for (const auto& path : synthdid::run_command(command, config)) std::cout << path << "\n";
    return 0;
  } catch (const std::exception& e) {
    report(e);
    return synthdid::exit_code_for(e);
  }
}
