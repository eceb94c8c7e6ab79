#include "synthdid/job.hpp"

#include <openssl/evp.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "synthdid/csv.hpp"
#include "synthdid/inference.hpp"
#include "synthdid/kernels.hpp"
#include "synthdid/regression.hpp"
#include "synthdid/simulation.hpp"

namespace synthdid {

using nlohmann::json;

std::string sha256_hex(std::string_view bytes) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int length = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), digest, &length, EVP_sha256(), nullptr) != 1) {
    throw Error(ErrorKind::Contract, "DigestError", "SHA-256 digest failed");
  }
  static constexpr char kHex[] = "0123456789abcdef";
  std::string out;
  out.reserve(2 * length);
  for (unsigned int k = 0; k < length; ++k) {
    out.push_back(kHex[digest[k] >> 4]);
    out.push_back(kHex[digest[k] & 0xF]);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Configuration

namespace {

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open input file '" + path + "'");
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return buffer.str();
}

std::string join_key(std::string_view where, std::string_view key) {
  return where.empty() ? std::string(key) : std::string(where) + "." + std::string(key);
}

void check_keys(const json& obj, std::string_view where, std::initializer_list<std::string_view> allowed) {
  if (!obj.is_object()) {
    throw ConfigError("config key '" + std::string(where) + "' must be an object");
  }
  for (const auto& [key, value] : obj.items()) {
    if (std::find(allowed.begin(), allowed.end(), key) == allowed.end()) {
      throw ConfigError("unknown config key '" + join_key(where, key) + "'");
    }
  }
}

const json* find(const json& obj, std::string_view key) {
  auto it = obj.find(key);
  return it == obj.end() ? nullptr : &*it;
}

std::string get_string(const json& obj, std::string_view where, std::string_view key) {
  const json* v = find(obj, key);
  if (!v) throw ConfigError("missing config key '" + join_key(where, key) + "'");
  if (!v->is_string()) throw ConfigError("config key '" + join_key(where, key) + "' must be a string");
  return v->get<std::string>();
}

std::optional<std::string> opt_string(const json& obj, std::string_view where, std::string_view key) {
  if (!find(obj, key)) return std::nullopt;
  return get_string(obj, where, key);
}

std::vector<std::string> get_strings(const json& obj, std::string_view where, std::string_view key) {
  const json* v = find(obj, key);
  if (!v) return {};
  if (!v->is_array()) throw ConfigError("config key '" + join_key(where, key) + "' must be a list");
  std::vector<std::string> out;
  for (const auto& item : *v) {
    if (!item.is_string()) {
      throw ConfigError("config key '" + join_key(where, key) + "' must list strings");
    }
    out.push_back(item.get<std::string>());
  }
  return out;
}

double get_number(const json& obj, std::string_view where, std::string_view key) {
  const json* v = find(obj, key);
  if (!v) throw ConfigError("missing config key '" + join_key(where, key) + "'");
  if (!v->is_number()) throw ConfigError("config key '" + join_key(where, key) + "' must be a number");
  return v->get<double>();
}

std::uint64_t get_unsigned(const json& obj, std::string_view where, std::string_view key) {
  const json* v = find(obj, key);
  if (!v) throw ConfigError("missing config key '" + join_key(where, key) + "'");
  if (!v->is_number_integer() || (!v->is_number_unsigned() && v->get<std::int64_t>() < 0)) {
    throw ConfigError("config key '" + join_key(where, key) + "' must be a non-negative integer");
  }
  return v->get<std::uint64_t>();
}

bool get_bool(const json& obj, std::string_view where, std::string_view key, bool fallback) {
  const json* v = find(obj, key);
  if (!v) return fallback;
  if (!v->is_boolean()) throw ConfigError("config key '" + join_key(where, key) + "' must be true or false");
  return v->get<bool>();
}

std::uint64_t resolve_seed(const json& section, std::string_view where, const json& doc) {
  if (find(section, "seed")) return get_unsigned(section, where, "seed");
  if (find(doc, "seed")) return get_unsigned(doc, "", "seed");
  throw ConfigError("config key '" + join_key(where, "seed") + "' is required (or a top-level seed)");
}

EstimatorSpec spec_from_config(const std::string& text, std::string_view where) {
  try {
    return parse_estimator_spec(text);
  } catch (const Error& e) {
    throw ConfigError("config key '" + std::string(where) + "': " + e.what());
  }
}

}  // namespace

json read_config_file(const std::string& path) {
  const std::string text = read_file(path);
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError("config file '" + path + "' is not valid JSON: " + e.what());
  }
}

void apply_override(json& doc, std::string_view assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string_view::npos || eq == 0) {
    throw ConfigError("override '" + std::string(assignment) + "' must look like key=value");
  }
  const std::string key(assignment.substr(0, eq));
  const std::string raw(assignment.substr(eq + 1));
  json value = json::parse(raw, nullptr, false);
  if (value.is_discarded()) value = raw;

  json* node = &doc;
  std::size_t start = 0;
  for (;;) {
    const auto dot = key.find('.', start);
    const std::string part = key.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
    if (part.empty()) throw ConfigError("override key '" + key + "' has an empty component");
    if (!node->is_object()) {
      if (!node->is_null()) throw ConfigError("override key '" + key + "' descends into a non-object");
      *node = json::object();
    }
    if (dot == std::string::npos) {
      (*node)[part] = std::move(value);
      return;
    }
    node = &(*node)[part];
    start = dot + 1;
  }
}

JobConfig parse_config(const json& doc) {
  check_keys(doc, "", {"panel", "estimators", "solver", "entropy", "regularized_sc", "seed",
                       "bootstrap", "placebo", "subgroups", "selection", "simulation", "output",
                       "threads"});
  JobConfig cfg;

  if (const json* p = find(doc, "panel")) {
    check_keys(*p, "panel", {"path", "unit", "period", "outcome", "treated", "state", "vap",
                             "lag_dem_share", "grant_per_vap", "covariates", "bounded_outcome"});
    cfg.panel_path = get_string(*p, "panel", "path");
    if (auto v = opt_string(*p, "panel", "unit")) cfg.schema.unit = *v;
    if (auto v = opt_string(*p, "panel", "period")) cfg.schema.period = *v;
    if (auto v = opt_string(*p, "panel", "outcome")) cfg.schema.outcome = *v;
    if (auto v = opt_string(*p, "panel", "treated")) cfg.schema.treated = *v;
    cfg.schema.state = opt_string(*p, "panel", "state");
    cfg.schema.vap = opt_string(*p, "panel", "vap");
    cfg.schema.lag_dem_share = opt_string(*p, "panel", "lag_dem_share");
    cfg.schema.grant_per_vap = opt_string(*p, "panel", "grant_per_vap");
    cfg.schema.covariates = get_strings(*p, "panel", "covariates");
    cfg.schema.bounded_outcome = get_bool(*p, "panel", "bounded_outcome", false);
  }

  if (find(doc, "estimators")) {
    const auto names = get_strings(doc, "", "estimators");
    if (names.empty()) throw ConfigError("config key 'estimators' must not be empty");
    for (const auto& name : names) cfg.estimators.push_back(spec_from_config(name, "estimators"));
  } else {
    cfg.estimators = standard_variants();
  }

  if (const json* s = find(doc, "solver")) {
    check_keys(*s, "solver", {"tolerance", "max_iterations", "time_ridge_factor"});
    auto& w = cfg.estimate.weights;
    if (find(*s, "tolerance")) w.solver.tolerance = get_number(*s, "solver", "tolerance");
    if (find(*s, "max_iterations")) w.solver.max_iterations = get_unsigned(*s, "solver", "max_iterations");
    if (find(*s, "time_ridge_factor")) w.time_ridge_factor = get_number(*s, "solver", "time_ridge_factor");
    if (!(w.solver.tolerance > 0.0)) throw ConfigError("config key 'solver.tolerance' must be positive");
    if (w.solver.max_iterations == 0) throw ConfigError("config key 'solver.max_iterations' must be positive");
    if (w.time_ridge_factor < 0.0) throw ConfigError("config key 'solver.time_ridge_factor' must be >= 0");
  }
  if (const json* e = find(doc, "entropy")) {
    check_keys(*e, "entropy", {"tolerance", "max_iterations"});
    if (find(*e, "tolerance")) cfg.estimate.entropy.tolerance = get_number(*e, "entropy", "tolerance");
    if (find(*e, "max_iterations")) {
      cfg.estimate.entropy.max_iterations = get_unsigned(*e, "entropy", "max_iterations");
    }
  }
  if (const json* r = find(doc, "regularized_sc")) {
    check_keys(*r, "regularized_sc", {"l1", "l2", "grid_size", "max_sweeps"});
    const bool has_l1 = find(*r, "l1") != nullptr;
    const bool has_l2 = find(*r, "l2") != nullptr;
    if (has_l1 != has_l2) throw ConfigError("config keys 'regularized_sc.l1' and 'regularized_sc.l2' go together");
    if (has_l1) {
      ElasticNetPenalty pen{get_number(*r, "regularized_sc", "l1"), get_number(*r, "regularized_sc", "l2")};
      if (pen.l1 < 0.0 || pen.l2 < 0.0) throw ConfigError("regularized_sc penalties must be >= 0");
      cfg.estimate.rsc_penalty = pen;
    }
    if (find(*r, "grid_size")) cfg.estimate.rsc.grid_size = get_unsigned(*r, "regularized_sc", "grid_size");
    if (find(*r, "max_sweeps")) cfg.estimate.rsc.max_sweeps = get_unsigned(*r, "regularized_sc", "max_sweeps");
  }

  if (const json* b = find(doc, "bootstrap")) {
    check_keys(*b, "bootstrap", {"replicates", "seed", "dump_replicates"});
    BootstrapConfig bc;
    if (find(*b, "replicates")) bc.replicates = get_unsigned(*b, "bootstrap", "replicates");
    if (bc.replicates < 2) throw ConfigError("config key 'bootstrap.replicates' must be at least 2");
    bc.seed = resolve_seed(*b, "bootstrap", doc);
    bc.dump_replicates = get_bool(*b, "bootstrap", "dump_replicates", false);
    cfg.bootstrap = bc;
  }

  if (const json* p = find(doc, "placebo")) {
    check_keys(*p, "placebo", {"drop_last"});
    if (find(*p, "drop_last")) cfg.placebo_drop_last = get_unsigned(*p, "placebo", "drop_last");
    if (cfg.placebo_drop_last == 0) throw ConfigError("config key 'placebo.drop_last' must be positive");
  }

  if (const json* s = find(doc, "subgroups")) {
    if (!s->is_array()) throw ConfigError("config key 'subgroups' must be a list");
    std::set<std::string> seen;
    for (const auto& item : *s) {
      check_keys(item, "subgroups[]", {"name", "predicate"});
      SubgroupConfig sg{get_string(item, "subgroups[]", "name"), get_string(item, "subgroups[]", "predicate")};
      if (!seen.insert(sg.name).second) throw ConfigError("duplicate subgroup name '" + sg.name + "'");
      cfg.subgroups.push_back(std::move(sg));
    }
  }

  if (const json* s = find(doc, "selection")) {
    check_keys(*s, "selection", {"path", "models", "binned_scatter"});
    SelectionConfig sc;
    sc.path = get_string(*s, "selection", "path");
    const json* models = find(*s, "models");
    if (!models || !models->is_array() || models->empty()) {
      throw ConfigError("config key 'selection.models' must be a non-empty list");
    }
    for (const auto& m : *models) {
      check_keys(m, "selection.models[]", {"name", "outcome", "covariates", "fixed_effects"});
      SelectionModel model;
      model.name = get_string(m, "selection.models[]", "name");
      model.outcome = get_string(m, "selection.models[]", "outcome");
      model.covariates = get_strings(m, "selection.models[]", "covariates");
      model.fixed_effects = get_strings(m, "selection.models[]", "fixed_effects");
      if (model.covariates.empty()) throw ConfigError("selection model '" + model.name + "' has no covariates");
      sc.models.push_back(std::move(model));
    }
    if (const json* bs = find(*s, "binned_scatter")) {
      check_keys(*bs, "selection.binned_scatter", {"x", "y", "bins"});
      ScatterConfig scatter;
      scatter.x = get_string(*bs, "selection.binned_scatter", "x");
      scatter.y = get_string(*bs, "selection.binned_scatter", "y");
      if (find(*bs, "bins")) scatter.bins = get_unsigned(*bs, "selection.binned_scatter", "bins");
      sc.binned_scatter = scatter;
    }
    cfg.selection = std::move(sc);
  }

  if (const json* s = find(doc, "simulation")) {
    check_keys(*s, "simulation", {"path", "columns", "tau", "draws", "seed", "keep_draws"});
    SimulationConfig sim;
    sim.path = get_string(*s, "simulation", "path");
    if (const json* cols = find(*s, "columns")) {
      check_keys(*cols, "simulation.columns",
                 {"unit", "state", "dem_votes", "rep_votes", "vap", "treated", "lag_dem_share"});
      for (const auto& [role, name] : cols->items()) {
        sim.columns.emplace_back(role, get_string(*cols, "simulation.columns", role));
      }
    }
    const json* tau = find(*s, "tau");
    if (!tau) throw ConfigError("missing config key 'simulation.tau'");
    check_keys(*tau, "simulation.tau", {"turnout", "dvs", "estimator", "turnout_outcome", "dvs_outcome"});
    const bool explicit_tau = find(*tau, "turnout") || find(*tau, "dvs");
    const bool estimated_tau = find(*tau, "turnout_outcome") || find(*tau, "dvs_outcome");
    if (explicit_tau == estimated_tau) {
      throw ConfigError("config key 'simulation.tau' needs either turnout/dvs values or "
                        "turnout_outcome/dvs_outcome columns");
    }
    if (explicit_tau) {
      sim.tau.turnout = get_number(*tau, "simulation.tau", "turnout");
      sim.tau.dvs = get_number(*tau, "simulation.tau", "dvs");
    } else {
      sim.tau.turnout_outcome = get_string(*tau, "simulation.tau", "turnout_outcome");
      sim.tau.dvs_outcome = get_string(*tau, "simulation.tau", "dvs_outcome");
      if (auto e = opt_string(*tau, "simulation.tau", "estimator")) {
        sim.tau.spec = spec_from_config(*e, "simulation.tau.estimator");
      }
    }
    if (find(*s, "draws")) sim.draws = get_unsigned(*s, "simulation", "draws");
    if (sim.draws == 0) throw ConfigError("config key 'simulation.draws' must be positive");
    sim.seed = resolve_seed(*s, "simulation", doc);
    sim.keep_draws = get_bool(*s, "simulation", "keep_draws", false);
    cfg.simulation = std::move(sim);
  }

  if (const json* o = find(doc, "output")) {
    check_keys(*o, "output", {"dir"});
    cfg.out_dir = get_string(*o, "output", "dir");
  }
  if (find(doc, "threads")) cfg.threads = static_cast<unsigned>(get_unsigned(doc, "", "threads"));

  cfg.resolved = doc;
  cfg.resolved.erase("threads");
  cfg.resolved.erase("output");
  return cfg;
}

// ---------------------------------------------------------------------------
// Errors

int exit_code_for(const std::exception& error) {
  if (const auto* e = dynamic_cast<const Error*>(&error)) {
    switch (e->kind()) {
      case ErrorKind::Config: return 2;
      case ErrorKind::Data: return 3;
      case ErrorKind::Contract: return 3;
      case ErrorKind::Numerical: return 4;
    }
  }
  if (dynamic_cast<const json::exception*>(&error)) return 2;
  return 1;
}

json error_report(const std::exception& error) {
  json report;
  report["message"] = error.what();
  report["exit_code"] = exit_code_for(error);
  if (const auto* e = dynamic_cast<const Error*>(&error)) {
    report["code"] = e->code();
    static constexpr const char* kKinds[] = {"config", "data", "numerical", "contract"};
    report["kind"] = kKinds[static_cast<int>(e->kind())];
    if (const auto* r = dynamic_cast<const RankDeficient*>(&error)) report["column"] = r->column();
    if (const auto* c = dynamic_cast<const ConvergenceError*>(&error)) {
      report["last_objective"] = c->last_objective();
    }
  } else {
    report["code"] = dynamic_cast<const json::exception*>(&error) ? "ConfigError" : "InternalError";
    report["kind"] = dynamic_cast<const json::exception*>(&error) ? "config" : "internal";
  }
  return json{{"error", report}};
}

// ---------------------------------------------------------------------------
// Running

namespace {

const std::vector<std::string> kDesignDecisions = {
    "weight intercepts omega0 and lambda0 are unrestricted reals",
    "zeta = (N_treated * T_post)^(1/4) * sd of control first differences in the pre-period",
    "time weights carry a ridge of time_ridge_factor * Var(control pre outcomes) per control unit",
    "bootstrap resamples units with replacement and re-solves zeta and all weights per replicate",
    "bootstrap SE is the replicate standard deviation; CI is tau +/- 1.96 SE",
    "resamples with an empty arm are redrawn",
    "placebo drops the last drop_last periods and keeps T_post",
    "regularized SC penalty is chosen by leave-one-pre-period-out CV on a log grid unless fixed",
    "robust standard errors are HC1 with absorbed fixed-effect levels counted in k",
    "simulation removes effects in share space; unknown treatment is imputed from a logistic fit "
    "on lag_dem_share",
};

struct Input {
  std::string path;
  std::string text;
  std::string digest;
};

Input read_input(const std::string& path) {
  Input in{path, read_file(path), {}};
  in.digest = sha256_hex(in.text);
  return in;
}

class Outputs {
public:
  Outputs(const JobConfig& cfg, std::string_view command) : cfg_(cfg), command_(command) {
    std::error_code ec;
    std::filesystem::create_directories(cfg.out_dir, ec);
    if (ec) throw ConfigError("cannot create output directory '" + cfg.out_dir + "': " + ec.message());
  }

  void add_input(const Input& in) { inputs_[in.path] = in.digest; }

  void write(const std::string& name, const std::string& content) {
    const std::filesystem::path target = std::filesystem::path(cfg_.out_dir) / name;
    const std::filesystem::path tmp = target.string() + ".tmp";
    {
      std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
      if (!out) throw ConfigError("cannot write output file '" + tmp.string() + "'");
      out << content;
      out.flush();
      if (!out) throw ConfigError("failed writing output file '" + tmp.string() + "'");
    }
    std::error_code ec;
    std::filesystem::rename(tmp, target, ec);
    if (ec) throw ConfigError("cannot move '" + tmp.string() + "' into place: " + ec.message());
    written_.push_back(target.string());
  }

  // Writes a numeric output plus its provenance sidecar.
  void write_with_sidecar(const std::string& name, const std::string& content, json details) {
    write(name, content);
    json side;
    side["tool"] = "synthdid";
    side["version"] = std::string(kToolVersion);
    side["command"] = command_;
    side["output"] = name;
    side["output_sha256"] = sha256_hex(content);
    side["inputs"] = inputs_;
    side["config"] = cfg_.resolved;
    side["kernel_backend"] = std::string(kernels::backend_name(kernels::active_backend()));
    side["design_decisions"] = kDesignDecisions;
    side["details"] = std::move(details);
    write(name + ".provenance.json", side.dump(2) + "\n");
  }

  std::vector<std::string> take() { return std::move(written_); }

private:
  const JobConfig& cfg_;
  std::string command_;
  json inputs_ = json::object();
  std::vector<std::string> written_;
};

std::string file_stem(const EstimatorSpec& spec) {
  std::string s = to_string(spec);
  std::replace(s.begin(), s.end(), '/', '_');
  return s;
}

// A labelled grid rendered both as CSV and as aligned text.
struct Table {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  std::string csv() const {
    std::ostringstream out;
    write_csv_row(out, header);
    for (const auto& r : rows) write_csv_row(out, r);
    return out.str();
  }

  std::string text() const {
    std::vector<std::vector<std::string>> cells;
    cells.push_back(header);
    for (const auto& r : rows) {
      std::vector<std::string> line;
      const bool paren =
          !r.empty() && (r[0] == "se" || r[0].starts_with("se ") || r[0].ends_with("(se)"));
      for (std::size_t c = 0; c < r.size(); ++c) {
        std::string cell = r[c];
        if (c > 0) {
          if (auto v = parse_double(cell); v && std::isfinite(*v)) {
            char buf[64];
            const bool integral = std::abs(*v) < 1e15 && *v == std::floor(*v) && !paren &&
                                  cell.find_first_of(".eE") == std::string::npos;
            std::snprintf(buf, sizeof buf, integral ? "%.0f" : "%.3f", *v);
            cell = paren ? "(" + std::string(buf) + ")" : std::string(buf);
          }
        }
        line.push_back(std::move(cell));
      }
      cells.push_back(std::move(line));
    }
    std::vector<std::size_t> width;
    for (const auto& line : cells) {
      width.resize(std::max(width.size(), line.size()), 0);
      for (std::size_t c = 0; c < line.size(); ++c) width[c] = std::max(width[c], line[c].size());
    }
    std::ostringstream out;
    for (const auto& line : cells) {
      std::string text;
      for (std::size_t c = 0; c < line.size(); ++c) {
        const std::string& cell = line[c];
        if (c == 0) {
          text += cell + std::string(width[c] - cell.size(), ' ');
        } else {
          text += "  " + std::string(width[c] - cell.size(), ' ') + cell;
        }
      }
      while (!text.empty() && text.back() == ' ') text.pop_back();
      out << text << "\n";
    }
    return out.str();
  }
};

std::string num(double v) { return format_double(v); }
std::string num(std::size_t v) { return std::to_string(v); }

struct LoadedPanel {
  Input input;
  DesignedPanel data;
};

LoadedPanel load_configured_panel(const JobConfig& cfg, Outputs& out,
                                  std::optional<std::string> outcome = std::nullopt) {
  if (!cfg.panel_path) throw ConfigError("missing config key 'panel.path'");
  Input in = read_input(*cfg.panel_path);
  PanelSchema schema = cfg.schema;
  if (outcome) schema.outcome = *outcome;
  DesignedPanel data = load_panel(parse_csv(in.text), schema);
  out.add_input(in);
  return {std::move(in), std::move(data)};
}

json estimate_details(const EstimateResult& r) {
  json d;
  d["estimator"] = to_string(r.spec);
  d["tau"] = r.tau;
  d["converged"] = r.diagnostics.converged;
  d["unit_fixed_effects"] = r.unit_fixed_effects;
  if (r.zeta) {
    d["zeta"] = r.zeta->zeta;
    d["sigma_hat"] = r.zeta->sigma_hat;
  }
  if (r.unit_solution) d["unit_weights_converged"] = r.unit_solution->converged;
  if (r.time_solution) d["time_weights_converged"] = r.time_solution->converged;
  if (r.rsc_solution) {
    d["regularized_sc"] = {{"l1", r.rsc_solution->penalty.l1},
                           {"l2", r.rsc_solution->penalty.l2},
                           {"cross_validated", r.rsc_solution->cross_validated},
                           {"converged", r.rsc_solution->converged}};
  }
  d["closed_form_gap"] = r.diagnostics.closed_form_gap;
  d["pre_fit_rmse"] = r.diagnostics.pre_fit_rmse;
  d["notes"] = r.diagnostics.notes;
  return d;
}

json weights_dump(const PanelDataset& panel, const TreatmentDesign& design, const EstimateResult& r) {
  json d;
  d["estimator"] = to_string(r.spec);
  if (r.zeta) d["zeta"] = r.zeta->zeta;
  json omega = json::array();
  for (std::size_t j = 0; j < r.control_weights.size() && j < design.n_control(); ++j) {
    omega.push_back({{"unit", panel.units()[design.control_units()[j]]}, {"weight", r.control_weights[j]}});
  }
  d["unit_weights"] = omega;
  json lambda = json::array();
  for (std::size_t t = 0; t < r.pre_weights.size() && t < design.t_pre(); ++t) {
    lambda.push_back({{"period", panel.periods()[t]}, {"weight", r.pre_weights[t]}});
  }
  d["time_weights"] = lambda;
  if (r.unit_solution) {
    d["omega0"] = r.unit_solution->omega0;
    d["unit_objective"] = r.unit_solution->objective;
    d["unit_iterations"] = r.unit_solution->iterations;
    d["unit_converged"] = r.unit_solution->converged;
    d["unit_intercept"] = r.unit_solution->intercept;
  }
  if (r.time_solution) {
    d["lambda0"] = r.time_solution->lambda0;
    d["time_objective"] = r.time_solution->objective;
    d["time_iterations"] = r.time_solution->iterations;
    d["time_converged"] = r.time_solution->converged;
    d["time_ridge"] = r.time_solution->ridge;
  }
  if (r.entropy_solution) {
    d["entropy"] = {{"dual", r.entropy_solution->dual},
                    {"iterations", r.entropy_solution->iterations},
                    {"max_imbalance", r.entropy_solution->max_imbalance}};
  }
  if (r.rsc_solution) {
    d["regularized_sc"] = {{"intercept", r.rsc_solution->intercept},
                           {"l1", r.rsc_solution->penalty.l1},
                           {"l2", r.rsc_solution->penalty.l2},
                           {"objective", r.rsc_solution->objective},
                           {"sweeps", r.rsc_solution->sweeps},
                           {"converged", r.rsc_solution->converged},
                           {"cross_validated", r.rsc_solution->cross_validated},
                           {"cv_error", r.rsc_solution->cv_error}};
  }
  d["converged"] = r.diagnostics.converged;
  return d;
}

BootstrapOptions bootstrap_options(const JobConfig& cfg) {
  BootstrapOptions b;
  b.replicates = cfg.bootstrap->replicates;
  b.seed = cfg.bootstrap->seed;
  b.threads = cfg.threads;
  b.estimate = cfg.estimate;
  return b;
}

std::string yes_no(bool v) { return v ? "yes" : "no"; }

// One column of the estimates table.
struct Column {
  EstimateResult result;
  std::optional<BootstrapResult> boot;
};

Table estimates_table(const std::vector<Column>& columns) {
  Table t;
  t.header.push_back("row");
  for (std::size_t c = 0; c < columns.size(); ++c) {
    t.header.push_back("(" + std::to_string(c + 1) + ") " + to_string(columns[c].result.spec));
  }
  const bool with_se = !columns.empty() && columns.front().boot.has_value();
  auto row = [&](const std::string& label, auto&& cell) {
    std::vector<std::string> r{label};
    for (const auto& col : columns) r.push_back(cell(col));
    t.rows.push_back(std::move(r));
  };
  row("tau", [](const Column& c) { return num(c.result.tau); });
  if (with_se) {
    row("se", [](const Column& c) { return num(c.boot->se); });
    row("ci_low", [](const Column& c) { return num(c.boot->ci_low); });
    row("ci_high", [](const Column& c) { return num(c.boot->ci_high); });
  }
  row("n_obs", [](const Column& c) { return num(c.result.n_obs); });
  row("n_treated", [](const Column& c) { return num(c.result.n_treated); });
  row("n_control", [](const Column& c) { return num(c.result.n_control); });
  row("unit_weights", [](const Column& c) {
    return c.result.spec.unit == UnitScheme::Uniform ? std::string("no") : std::string(to_string(c.result.spec.unit));
  });
  row("time_weights", [](const Column& c) { return yes_no(c.result.spec.time == TimeScheme::Sdid); });
  return t;
}

json column_details(const std::vector<Column>& columns) {
  json list = json::array();
  for (const auto& c : columns) {
    json d = estimate_details(c.result);
    if (c.boot) {
      d["bootstrap"] = {{"replicates", c.boot->n_completed},
                        {"seed", c.boot->seed},
                        {"se", c.boot->se},
                        {"percentile_low", c.boot->percentile_low},
                        {"percentile_high", c.boot->percentile_high},
                        {"redrawn", c.boot->n_redrawn}};
    }
    list.push_back(std::move(d));
  }
  return list;
}

void write_estimate_tables(Outputs& out, const std::string& stem, const std::vector<Column>& columns,
                           json extra = json::object()) {
  const Table t = estimates_table(columns);
  json details = std::move(extra);
  details["estimates"] = column_details(columns);
  out.write_with_sidecar(stem + ".csv", t.csv(), std::move(details));
  out.write(stem + ".txt", t.text());
}

void dump_replicates(Outputs& out, const std::string& stem, const BootstrapResult& b,
                     const EstimatorSpec& spec) {
  Table t;
  t.header = {"replicate", "tau"};
  for (std::size_t r = 0; r < b.replicates.size(); ++r) t.rows.push_back({num(r), num(b.replicates[r])});
  out.write_with_sidecar(stem + "_" + file_stem(spec) + ".csv", t.csv(),
                         {{"estimator", to_string(spec)}, {"seed", b.seed}});
}

// --- subcommands -----------------------------------------------------------

void cmd_validate(const JobConfig& cfg, Outputs& out) {
  json report;
  if (cfg.panel_path) {
    const LoadedPanel lp = load_configured_panel(cfg, out);
    const auto& p = lp.data.panel;
    const auto& d = lp.data.design;
    report["panel"] = {{"path", lp.input.path},
                       {"units", p.num_units()},
                       {"periods", p.num_periods()},
                       {"first_period", p.periods().front()},
                       {"last_period", p.periods().back()},
                       {"n_treated", d.n_treated()},
                       {"n_control", d.n_control()},
                       {"t_pre", d.t_pre()},
                       {"t_post", d.t_post()},
                       {"attributes", p.meta_names()}};
    json groups = json::array();
    for (const auto& sg : cfg.subgroups) {
      const DesignedPanel sub = subset(p, d, parse_predicate(sg.predicate, p, d));
      groups.push_back({{"name", sg.name},
                        {"n_treated", sub.design.n_treated()},
                        {"n_control", sub.design.n_control()}});
    }
    report["subgroups"] = groups;
    if (cfg.simulation && cfg.simulation->tau.from_estimate()) {
      load_configured_panel(cfg, out, cfg.simulation->tau.turnout_outcome);
      load_configured_panel(cfg, out, cfg.simulation->tau.dvs_outcome);
    }
  }
  if (cfg.selection) {
    const Input in = read_input(cfg.selection->path);
    out.add_input(in);
    const CsvTable table = parse_csv(in.text);
    for (const auto& m : cfg.selection->models) {
      table.column(m.outcome);
      for (const auto& fe : m.fixed_effects) table.column(fe);
      for (const auto& cov : m.covariates) {
        std::size_t start = 0;
        for (;;) {
          const auto pos = cov.find_first_of("*:", start);
          std::string part = cov.substr(start, pos == std::string::npos ? std::string::npos : pos - start);
          part.erase(0, part.find_first_not_of(' '));
          part.erase(part.find_last_not_of(' ') + 1);
          table.column(part);
          if (pos == std::string::npos) break;
          start = pos + 1;
        }
      }
    }
    if (cfg.selection->binned_scatter) {
      table.column(cfg.selection->binned_scatter->x);
      table.column(cfg.selection->binned_scatter->y);
    }
    report["selection"] = {{"path", in.path}, {"rows", table.rows.size()}};
  }
  if (cfg.simulation) {
    const Input in = read_input(cfg.simulation->path);
    out.add_input(in);
    Warnings warnings;
    const auto counties = load_counties(parse_csv(in.text), cfg.simulation->columns, &warnings);
    std::size_t unknown = 0;
    for (const auto& c : counties) unknown += c.treated == TreatmentStatus::Unknown ? 1 : 0;
    report["simulation"] = {{"path", in.path},
                            {"counties", counties.size()},
                            {"unknown_treatment", unknown},
                            {"warnings", warnings}};
  }
  out.write_with_sidecar("validation.json", report.dump(2) + "\n", json::object());
}

void cmd_estimate(const JobConfig& cfg, Outputs& out) {
  const LoadedPanel lp = load_configured_panel(cfg, out);
  const auto& p = lp.data.panel;
  const auto& d = lp.data.design;
  std::vector<Column> columns;
  json weights = json::array();
  for (const auto& spec : cfg.estimators) {
    columns.push_back({estimate(p, d, spec, cfg.estimate), std::nullopt});
    weights.push_back(weights_dump(p, d, columns.back().result));
  }
  write_estimate_tables(out, "estimates", columns);
  out.write_with_sidecar("weights.json", weights.dump(2) + "\n", column_details(columns));
}

void cmd_bootstrap(const JobConfig& cfg, Outputs& out) {
  if (!cfg.bootstrap) throw ConfigError("missing config section 'bootstrap'");
  const LoadedPanel lp = load_configured_panel(cfg, out);
  std::vector<Column> columns;
  for (const auto& spec : cfg.estimators) {
    BootstrapResult b = block_bootstrap(lp.data.panel, lp.data.design, spec, bootstrap_options(cfg));
    EstimateResult r = estimate(lp.data.panel, lp.data.design, spec, cfg.estimate);
    if (cfg.bootstrap->dump_replicates) dump_replicates(out, "bootstrap_replicates", b, spec);
    columns.push_back({std::move(r), std::move(b)});
  }
  write_estimate_tables(out, "bootstrap", columns);
}

void cmd_placebo(const JobConfig& cfg, Outputs& out) {
  const LoadedPanel lp = load_configured_panel(cfg, out);
  std::vector<Column> columns;
  std::size_t t_pre = 0;
  for (const auto& spec : cfg.estimators) {
    std::optional<BootstrapOptions> boot;
    if (cfg.bootstrap) boot = bootstrap_options(cfg);
    PlaceboResult pr = placebo_backdate(lp.data.panel, lp.data.design, spec, cfg.placebo_drop_last,
                                        cfg.estimate, boot);
    t_pre = pr.t_pre;
    if (pr.bootstrap && cfg.bootstrap->dump_replicates) {
      dump_replicates(out, "placebo_replicates", *pr.bootstrap, spec);
    }
    columns.push_back({std::move(pr.estimate), std::move(pr.bootstrap)});
  }
  write_estimate_tables(out, "placebo", columns,
                        {{"drop_last", cfg.placebo_drop_last}, {"placebo_t_pre", t_pre}});
}

void cmd_subgroup(const JobConfig& cfg, Outputs& out) {
  if (cfg.subgroups.empty()) throw ConfigError("config key 'subgroups' is empty");
  const LoadedPanel lp = load_configured_panel(cfg, out);
  const auto& p = lp.data.panel;
  const auto& d = lp.data.design;

  Table t;
  t.header.push_back("row");
  for (const auto& sg : cfg.subgroups) t.header.push_back(sg.name);
  std::vector<std::vector<std::string>> tau_rows(cfg.estimators.size()), se_rows(cfg.estimators.size());
  std::vector<std::string> n_tr{"n_treated"}, n_co{"n_control"};
  json details = json::array();
  for (std::size_t e = 0; e < cfg.estimators.size(); ++e) {
    tau_rows[e].push_back("tau " + to_string(cfg.estimators[e]));
    se_rows[e].push_back("se " + to_string(cfg.estimators[e]));
  }
  for (const auto& sg : cfg.subgroups) {
    const DesignedPanel sub = subset(p, d, parse_predicate(sg.predicate, p, d));
    n_tr.push_back(num(sub.design.n_treated()));
    n_co.push_back(num(sub.design.n_control()));
    std::vector<Column> cols;
    for (std::size_t e = 0; e < cfg.estimators.size(); ++e) {
      const auto& spec = cfg.estimators[e];
      Column col{estimate(sub.panel, sub.design, spec, cfg.estimate), std::nullopt};
      if (cfg.bootstrap) col.boot = block_bootstrap(sub.panel, sub.design, spec, bootstrap_options(cfg));
      tau_rows[e].push_back(num(col.result.tau));
      se_rows[e].push_back(col.boot ? num(col.boot->se) : std::string());
      cols.push_back(std::move(col));
    }
    details.push_back({{"subgroup", sg.name}, {"predicate", sg.predicate}, {"estimates", column_details(cols)}});
  }
  for (std::size_t e = 0; e < cfg.estimators.size(); ++e) {
    t.rows.push_back(std::move(tau_rows[e]));
    if (cfg.bootstrap) t.rows.push_back(std::move(se_rows[e]));
  }
  t.rows.push_back(std::move(n_tr));
  t.rows.push_back(std::move(n_co));
  out.write_with_sidecar("subgroups.csv", t.csv(), {{"subgroups", details}});
  out.write("subgroups.txt", t.text());
}

void cmd_selection(const JobConfig& cfg, Outputs& out) {
  if (!cfg.selection) throw ConfigError("missing config section 'selection'");
  const Input in = read_input(cfg.selection->path);
  out.add_input(in);
  const CsvTable table = parse_csv(in.text);

  std::vector<RegressionResult> fits;
  std::vector<std::string> order;
  for (const auto& m : cfg.selection->models) {
    fits.push_back(fe_ols(table, m.outcome, m.covariates, m.fixed_effects));
    for (const auto& name : fits.back().names) {
      if (std::find(order.begin(), order.end(), name) == order.end()) order.push_back(name);
    }
  }

  Table t;
  t.header.push_back("row");
  for (const auto& m : cfg.selection->models) t.header.push_back(m.name);
  for (const auto& name : order) {
    std::vector<std::string> coef{name}, se{name + " (se)"};
    for (const auto& f : fits) {
      auto it = std::find(f.names.begin(), f.names.end(), name);
      if (it == f.names.end()) {
        coef.emplace_back();
        se.emplace_back();
      } else {
        const auto k = static_cast<std::size_t>(it - f.names.begin());
        coef.push_back(num(f.coefficients[k]));
        se.push_back(num(f.robust_se[k]));
      }
    }
    t.rows.push_back(std::move(coef));
    t.rows.push_back(std::move(se));
  }
  std::vector<std::string> outcome{"outcome"}, n{"n_obs"}, dropped{"n_dropped"}, fe{"fixed_effects"},
      r2{"r_squared"};
  json details = json::array();
  for (std::size_t k = 0; k < fits.size(); ++k) {
    const auto& f = fits[k];
    outcome.push_back(cfg.selection->models[k].outcome);
    n.push_back(num(f.n_obs));
    dropped.push_back(num(f.n_dropped));
    std::string groups;
    for (const auto& g : f.fe_groups) groups += (groups.empty() ? "" : "+") + g;
    fe.push_back(groups.empty() ? "none" : groups);
    r2.push_back(num(f.r_squared));
    details.push_back({{"model", cfg.selection->models[k].name},
                       {"se_type", f.se_type},
                       {"absorbed_dof", f.absorbed_dof},
                       {"n_dropped", f.n_dropped}});
  }
  for (auto* r : {&outcome, &n, &dropped, &fe, &r2}) t.rows.push_back(std::move(*r));
  out.write_with_sidecar("selection.csv", t.csv(), {{"models", details}});
  out.write("selection.txt", t.text());

  if (const auto& bs = cfg.selection->binned_scatter) {
    const std::size_t cx = table.column(bs->x);
    const std::size_t cy = table.column(bs->y);
    std::vector<double> xs, ys;
    for (const auto& row : table.rows) {
      auto x = is_missing(row[cx]) ? std::nullopt : parse_double(row[cx]);
      auto y = is_missing(row[cy]) ? std::nullopt : parse_double(row[cy]);
      if (x && y) {
        xs.push_back(*x);
        ys.push_back(*y);
      }
    }
    const auto bins = binned_scatter(xs, ys, bs->bins);
    Table b;
    b.header = {"bin", "mean_x", "mean_y", "count"};
    for (std::size_t k = 0; k < bins.size(); ++k) {
      b.rows.push_back({num(k + 1), num(bins[k].mean_x), num(bins[k].mean_y), num(bins[k].count)});
    }
    out.write_with_sidecar("binned_scatter.csv", b.csv(),
                           {{"x", bs->x}, {"y", bs->y}, {"bins", bs->bins}, {"rows", xs.size()}});
  }
}

void cmd_simulate(const JobConfig& cfg, Outputs& out) {
  if (!cfg.simulation) throw ConfigError("missing config section 'simulation'");
  const SimulationConfig& sim = *cfg.simulation;
  json tau_source;
  double tau_turnout = 0.0, tau_dvs = 0.0;
  if (!sim.tau.from_estimate()) {
    tau_turnout = *sim.tau.turnout;
    tau_dvs = *sim.tau.dvs;
    tau_source = {{"source", "explicit"}};
  } else {
    const LoadedPanel turnout = load_configured_panel(cfg, out, sim.tau.turnout_outcome);
    const EstimateResult rt = estimate(turnout.data.panel, turnout.data.design, sim.tau.spec, cfg.estimate);
    const LoadedPanel dvs = load_configured_panel(cfg, out, sim.tau.dvs_outcome);
    const EstimateResult rd = estimate(dvs.data.panel, dvs.data.design, sim.tau.spec, cfg.estimate);
    tau_turnout = rt.tau;
    tau_dvs = rd.tau;
    tau_source = {{"source", "estimate"},
                  {"turnout", estimate_details(rt)},
                  {"dvs", estimate_details(rd)}};
  }

  const Input in = read_input(sim.path);
  out.add_input(in);
  Warnings warnings;
  const auto counties = load_counties(parse_csv(in.text), sim.columns, &warnings);
  SimulationOptions opts;
  opts.draws = sim.draws;
  opts.seed = sim.seed;
  opts.threads = cfg.threads;
  opts.keep_draws = sim.keep_draws;
  SimulationResult result = simulate_margins(counties, tau_turnout, tau_dvs, opts);
  for (auto& w : result.warnings) warnings.push_back(std::move(w));

  Table t;
  t.header = {"state", "observed_margin", "mean_margin", "low_margin", "high_margin", "flip_probability"};
  for (const auto& s : result.states) {
    t.rows.push_back({s.state, num(s.observed_margin), num(s.mean_margin), num(s.low_margin),
                      num(s.high_margin), num(s.flip_probability)});
  }
  json model = {{"intercept", result.model.intercept},
                {"slope", result.model.slope},
                {"intercept_se", result.model.intercept_se},
                {"slope_se", result.model.slope_se},
                {"linear_fallback", result.model.linear_fallback},
                {"n_fit", result.model.n_fit}};
  json details = {{"seed", sim.seed},
                  {"draws", sim.draws},
                  {"tau_turnout", tau_turnout},
                  {"tau_dvs", tau_dvs},
                  {"tau", tau_source},
                  {"unknown_counties", result.unknown_counties},
                  {"treatment_model", model},
                  {"warnings", warnings}};
  out.write_with_sidecar("simulation.csv", t.csv(), details);
  out.write("simulation.txt", t.text());

  json bundle = details;
  json states = json::array();
  for (const auto& s : result.states) {
    states.push_back({{"state", s.state},
                      {"observed_margin", s.observed_margin},
                      {"mean_margin", s.mean_margin},
                      {"low_margin", s.low_margin},
                      {"high_margin", s.high_margin},
                      {"flip_probability", s.flip_probability}});
  }
  bundle["states"] = states;
  if (sim.keep_draws) bundle["draw_margins"] = result.draw_margins;
  out.write_with_sidecar("simulation.json", bundle.dump(2) + "\n", {{"seed", sim.seed}});
}

void cmd_export_figures(const JobConfig& cfg, Outputs& out) {
  const LoadedPanel lp = load_configured_panel(cfg, out);
  const auto& p = lp.data.panel;
  const auto& d = lp.data.design;

  const ArmTrends arms = group_trends(p, d);
  Table a;
  a.header = {"period", "series", "value"};
  for (std::size_t t = 0; t < p.num_periods(); ++t) {
    a.rows.push_back({std::to_string(p.periods()[t]), "treated", num(arms.treated[t])});
    a.rows.push_back({std::to_string(p.periods()[t]), "control", num(arms.control[t])});
  }
  out.write_with_sidecar("arm_trends.csv", a.csv(), {{"t_pre", d.t_pre()}, {"t_post", d.t_post()}});

  for (const auto& spec : cfg.estimators) {
    const EstimateResult r = estimate(p, d, spec, cfg.estimate);
    const CounterfactualTrend trend = counterfactual_trend(p, d, r);
    const std::string series = trend.synthetic ? "counterfactual" : "control";
    Table t;
    t.header = {"period", "series", "value"};
    for (std::size_t k = 0; k < p.num_periods(); ++k) {
      t.rows.push_back({std::to_string(p.periods()[k]), "treated", num(trend.treated[k])});
      t.rows.push_back({std::to_string(p.periods()[k]), series, num(trend.counterfactual[k])});
    }
    json details = estimate_details(r);
    details["level_shift"] = trend.level_shift;
    details["t_pre"] = d.t_pre();
    out.write_with_sidecar("trends_" + file_stem(spec) + ".csv", t.csv(), details);
  }
}

}  // namespace

const std::vector<std::string>& job_commands() {
  static const std::vector<std::string> commands = {
      "validate", "estimate", "bootstrap", "placebo", "subgroup", "selection", "simulate", "export-figures"};
  return commands;
}

std::vector<std::string> run_command(std::string_view command, const JobConfig& config) {
  using Handler = void (*)(const JobConfig&, Outputs&);
  static const std::map<std::string, Handler, std::less<>> handlers = {
      {"validate", cmd_validate},   {"estimate", cmd_estimate},   {"bootstrap", cmd_bootstrap},
      {"placebo", cmd_placebo},     {"subgroup", cmd_subgroup},   {"selection", cmd_selection},
      {"simulate", cmd_simulate},   {"export-figures", cmd_export_figures}};
  auto it = handlers.find(command);
  if (it == handlers.end()) throw ConfigError("unknown command '" + std::string(command) + "'");
  Outputs out(config, command);
  it->second(config, out);
  return out.take();
}

}  // namespace synthdid
