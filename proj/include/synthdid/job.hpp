#pragma once

#include <cstddef>
#include <cstdint>
#include <exception>
#include <filesystem>
#include <nlohmann/json.hpp>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "synthdid/errors.hpp"
#include "synthdid/estimators.hpp"
#include "synthdid/panel.hpp"

namespace synthdid {

inline constexpr std::string_view kToolVersion = "0.3.0";

struct BootstrapConfig {
  std::size_t replicates = 1000;
  std::uint64_t seed = 0;
  bool dump_replicates = false;
};

struct SubgroupConfig {
  std::string name;
  std::string predicate;
};

struct SelectionModel {
  std::string name;
  std::string outcome;
  std::vector<std::string> covariates;
  std::vector<std::string> fixed_effects;
};

struct ScatterConfig {
  std::string x;
  std::string y;
  std::size_t bins = 20;
};

struct SelectionConfig {
  std::string path;
  std::vector<SelectionModel> models;
  std::optional<ScatterConfig> binned_scatter;
};

/// Effects removed by the simulator: either given directly or estimated from
/// the panel by re-running `spec` with the two named outcome columns.
struct SimulationTau {
  std::optional<double> turnout;
  std::optional<double> dvs;
  EstimatorSpec spec{};
  std::string turnout_outcome;
  std::string dvs_outcome;
  bool from_estimate() const noexcept { return !turnout.has_value(); }
};

struct SimulationConfig {
  std::string path;
  std::vector<std::pair<std::string, std::string>> columns;
  SimulationTau tau;
  std::size_t draws = 1000;
  std::uint64_t seed = 0;
  bool keep_draws = false;
};

struct JobConfig {
  std::optional<std::string> panel_path;
  PanelSchema schema;
  std::vector<EstimatorSpec> estimators;
  EstimateOptions estimate;
  std::optional<BootstrapConfig> bootstrap;
  std::size_t placebo_drop_last = 1;
  std::vector<SubgroupConfig> subgroups;
  std::optional<SelectionConfig> selection;
  std::optional<SimulationConfig> simulation;
  std::string out_dir = "out";
  unsigned threads = 1;
  /// Normalized configuration echoed into provenance sidecars. Leaves out the
  /// output directory and thread count, which never affect results.
  nlohmann::json resolved;
};

/// Parses a JSON configuration file. Input paths inside it are used as given.
nlohmann::json read_config_file(const std::string& path);

/// Applies one "dotted.key=value" override. The value is read as JSON when it
/// parses and as a plain string otherwise; intermediate objects are created.
void apply_override(nlohmann::json& doc, std::string_view assignment);

/// Validates and normalizes a configuration. Throws ConfigError naming the
/// offending key. Seeds are mandatory for bootstrap and simulation sections;
/// a top-level "seed" serves as their default.
JobConfig parse_config(const nlohmann::json& doc);

/// The subcommands understood by run_command.
const std::vector<std::string>& job_commands();

/// Runs one subcommand and returns the files it wrote (each data file is
/// followed by its sidecar). Outputs are written temp-then-rename.
std::vector<std::string> run_command(std::string_view command, const JobConfig& config);

/// 2 config, 3 data (and contract), 4 numerical, 1 anything else.
int exit_code_for(const std::exception& error);

/// Machine-readable description of a failure.
nlohmann::json error_report(const std::exception& error);

std::string sha256_hex(std::string_view bytes);

}  // namespace synthdid
