#include "synthdid/panel.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <map>
#include <ostream>
#include <set>
#include <unordered_map>

#include "synthdid/errors.hpp"

namespace synthdid {

std::vector<std::string> PanelSchema::meta_attributes() const {
  std::vector<std::string> names;
  if (state) names.emplace_back("state");
  if (vap) names.emplace_back("vap");
  if (lag_dem_share) names.emplace_back("lag_dem_share");
  if (grant_per_vap) names.emplace_back("grant_per_vap");
  for (const auto& c : covariates) names.push_back(c);
  return names;
}

// ---------------------------------------------------------------------------
// PanelDataset

PanelDataset::PanelDataset(std::vector<std::string> units, std::vector<std::int64_t> periods,
                           std::vector<double> outcome, std::vector<std::string> meta_names,
                           std::vector<std::vector<std::string>> meta_values)
    : units_(std::move(units)),
      periods_(std::move(periods)),
      outcome_(std::move(outcome)),
      meta_names_(std::move(meta_names)),
      meta_values_(std::move(meta_values)) {
  if (units_.empty()) throw DataError("panel has no units");
  if (periods_.empty()) throw DataError("panel has no periods");
  if (outcome_.size() != units_.size() * periods_.size()) {
    throw UnbalancedPanel("outcome matrix has " + std::to_string(outcome_.size()) +
                          " cells, expected " + std::to_string(units_.size() * periods_.size()));
  }
  for (std::size_t t = 1; t < periods_.size(); ++t) {
    if (periods_[t] <= periods_[t - 1]) throw DataError("periods must be strictly increasing");
  }
  {
    std::set<std::string_view> seen;
    for (const auto& u : units_) {
      if (!seen.insert(u).second) throw DuplicateCell("unit '" + u + "' appears twice");
    }
  }
  for (double v : outcome_) {
    if (!std::isfinite(v)) throw DataError("outcome values must be finite");
  }
  if (meta_values_.size() != meta_names_.size()) {
    throw ContractError("meta names and meta columns differ in count");
  }
  for (const auto& col : meta_values_) {
    if (col.size() != units_.size()) throw ContractError("meta column length differs from units");
  }
}

bool PanelDataset::has_meta(std::string_view name) const noexcept {
  return std::find(meta_names_.begin(), meta_names_.end(), name) != meta_names_.end();
}

std::size_t PanelDataset::meta_index(std::string_view name) const {
  auto it = std::find(meta_names_.begin(), meta_names_.end(), name);
  if (it == meta_names_.end()) {
    throw ConfigError("unknown meta attribute '" + std::string(name) + "'");
  }
  return static_cast<std::size_t>(it - meta_names_.begin());
}

const std::string& PanelDataset::meta(std::string_view name, std::size_t unit) const {
  return meta_values_[meta_index(name)][unit];
}

double PanelDataset::meta_number(std::string_view name, std::size_t unit) const {
  const std::string& cell = meta(name, unit);
  auto v = parse_double(cell);
  if (!v) {
    throw ParseError("meta attribute '" + std::string(name) + "' of unit '" + units_[unit] +
                     "' is not numeric: '" + cell + "'");
  }
  return *v;
}

PanelDataset PanelDataset::select(std::span<const std::size_t> rows, std::size_t num_periods,
                                  std::optional<std::vector<std::string>> ids) const {
  if (num_periods == 0 || num_periods > periods_.size()) {
    throw ContractError("select: period count out of range");
  }
  std::vector<std::string> units;
  units.reserve(rows.size());
  std::vector<double> outcome;
  outcome.reserve(rows.size() * num_periods);
  std::vector<std::vector<std::string>> meta(meta_names_.size());
  for (std::size_t r : rows) {
    units.push_back(units_.at(r));
    const auto src = row(r);
    outcome.insert(outcome.end(), src.begin(), src.begin() + num_periods);
    for (std::size_t m = 0; m < meta_names_.size(); ++m) meta[m].push_back(meta_values_[m][r]);
  }
  if (ids) {
    if (ids->size() != rows.size()) throw ContractError("select: id count differs from rows");
    units = std::move(*ids);
  }
  return PanelDataset(std::move(units),
                      std::vector<std::int64_t>(periods_.begin(), periods_.begin() + num_periods),
                      std::move(outcome), meta_names_, std::move(meta));
}

PanelDataset PanelDataset::with_outcome(std::vector<double> outcome) const {
  return PanelDataset(units_, periods_, std::move(outcome), meta_names_, meta_values_);
}

// ---------------------------------------------------------------------------
// TreatmentDesign

TreatmentDesign::TreatmentDesign(std::vector<bool> treated, std::size_t t_pre, std::size_t t_post)
    : treated_(std::move(treated)), t_pre_(t_pre), t_post_(t_post) {
  for (std::size_t i = 0; i < treated_.size(); ++i) {
    (treated_[i] ? treated_units_ : control_units_).push_back(i);
  }
  if (treated_units_.empty()) throw DesignError("design has no treated units");
  if (control_units_.empty()) throw DesignError("design has no control units");
  if (t_pre_ < 2) {
    throw DesignError("design needs at least 2 pre-treatment periods, got " +
                      std::to_string(t_pre_));
  }
  if (t_post_ < 1) throw DesignError("design needs at least 1 post-treatment period");
}

// ---------------------------------------------------------------------------
// Loading

namespace {

std::int64_t parse_period(const std::string& cell, std::size_t row) {
  std::string_view s = cell;
  while (!s.empty() && s.front() == ' ') s.remove_prefix(1);
  while (!s.empty() && s.back() == ' ') s.remove_suffix(1);
  std::int64_t value = 0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), value);
  if (s.empty() || ec != std::errc{} || ptr != s.data() + s.size()) {
    throw ParseError("row " + std::to_string(row + 1) + ": period '" + cell +
                     "' is not an integer");
  }
  return value;
}

bool parse_flag(const std::string& cell, std::size_t row) {
  if (cell == "1" || cell == "true" || cell == "TRUE" || cell == "True") return true;
  if (cell == "0" || cell == "false" || cell == "FALSE" || cell == "False") return false;
  if (auto v = parse_double(cell)) {
    if (*v == 1.0) return true;
    if (*v == 0.0) return false;
  }
  throw ParseError("row " + std::to_string(row + 1) + ": treated flag '" + cell +
                   "' is not 0/1");
}

}  // namespace

DesignedPanel load_panel(const CsvTable& table, const PanelSchema& schema) {
  const std::size_t c_unit = table.column(schema.unit);
  const std::size_t c_period = table.column(schema.period);
  const std::size_t c_outcome = table.column(schema.outcome);
  const std::size_t c_treated = table.column(schema.treated);

  const std::vector<std::string> meta_names = schema.meta_attributes();
  std::vector<std::size_t> meta_cols;
  if (schema.state) meta_cols.push_back(table.column(*schema.state));
  if (schema.vap) meta_cols.push_back(table.column(*schema.vap));
  if (schema.lag_dem_share) meta_cols.push_back(table.column(*schema.lag_dem_share));
  if (schema.grant_per_vap) meta_cols.push_back(table.column(*schema.grant_per_vap));
  for (const auto& c : schema.covariates) meta_cols.push_back(table.column(c));

  std::set<std::string> unit_set;
  std::set<std::int64_t> period_set;
  std::vector<std::int64_t> row_period(table.rows.size());
  for (std::size_t r = 0; r < table.rows.size(); ++r) {
    unit_set.insert(table.rows[r][c_unit]);
    row_period[r] = parse_period(table.rows[r][c_period], r);
    period_set.insert(row_period[r]);
  }
  if (unit_set.empty()) throw DataError("input has no data rows");

  std::vector<std::string> units(unit_set.begin(), unit_set.end());
  std::vector<std::int64_t> periods(period_set.begin(), period_set.end());
  std::unordered_map<std::string, std::size_t> unit_index;
  for (std::size_t i = 0; i < units.size(); ++i) unit_index.emplace(units[i], i);
  std::map<std::int64_t, std::size_t> period_index;
  for (std::size_t t = 0; t < periods.size(); ++t) period_index.emplace(periods[t], t);

  const std::size_t n = units.size();
  const std::size_t T = periods.size();
  std::vector<double> outcome(n * T, 0.0);
  std::vector<char> filled(n * T, 0);
  std::vector<char> flag(n * T, 0);
  std::vector<std::vector<std::string>> meta(meta_names.size(), std::vector<std::string>(n));
  std::vector<char> meta_seen(n, 0);

  for (std::size_t r = 0; r < table.rows.size(); ++r) {
    const auto& row = table.rows[r];
    const std::size_t i = unit_index.at(row[c_unit]);
    const std::size_t t = period_index.at(row_period[r]);
    const std::size_t cell = i * T + t;
    if (filled[cell]) {
      throw DuplicateCell("unit '" + units[i] + "' period " + std::to_string(periods[t]) +
                          " appears more than once");
    }
    filled[cell] = 1;
    auto v = parse_double(row[c_outcome]);
    if (!v || !std::isfinite(*v)) {
      throw ParseError("row " + std::to_string(r + 1) + ": outcome '" + row[c_outcome] +
                       "' is not a finite number");
    }
    if (schema.bounded_outcome && (*v < 0.0 || *v > 100.0)) {
      throw DataError("row " + std::to_string(r + 1) + ": outcome " + row[c_outcome] +
                      " outside [0, 100]");
    }
    outcome[cell] = *v;
    flag[cell] = parse_flag(row[c_treated], r) ? 1 : 0;

    for (std::size_t m = 0; m < meta_cols.size(); ++m) {
      const std::string& value = row[meta_cols[m]];
      if (!meta_seen[i]) {
        meta[m][i] = value;
      } else if (meta[m][i] != value) {
        throw ParseError("attribute '" + meta_names[m] + "' varies within unit '" + units[i] + "'");
      }
    }
    meta_seen[i] = 1;
  }

  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t t = 0; t < T; ++t) {
      if (!filled[i * T + t]) {
        throw UnbalancedPanel("unit '" + units[i] + "' has no row for period " +
                              std::to_string(periods[t]));
      }
    }
  }

  // Common adoption period = first period with any treated cell.
  std::size_t adoption = T;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t t = 0; t < T; ++t) {
      if (flag[i * T + t]) adoption = std::min(adoption, t);
    }
  }
  if (adoption == T) throw DesignError("no unit is ever treated");

  std::vector<bool> treated(n, false);
  for (std::size_t i = 0; i < n; ++i) {
    bool any = false;
    for (std::size_t t = 0; t < T; ++t) any = any || flag[i * T + t];
    if (!any) continue;
    treated[i] = true;
    for (std::size_t t = 0; t < T; ++t) {
      const bool expected = t >= adoption;
      if (static_cast<bool>(flag[i * T + t]) != expected) {
        throw NonBlockTreatment("unit '" + units[i] + "' has treated flag " +
                                std::to_string(flag[i * T + t]) + " in period " +
                                std::to_string(periods[t]) + "; block adoption starts at " +
                                std::to_string(periods[adoption]));
      }
    }
  }

  PanelDataset panel(std::move(units), std::move(periods), std::move(outcome), meta_names,
                     std::move(meta));
  TreatmentDesign design(std::move(treated), adoption, T - adoption);
  return {std::move(panel), std::move(design)};
}

DesignedPanel load_panel_file(const std::string& path, const PanelSchema& schema) {
  return load_panel(read_csv(path), schema);
}

void write_panel_csv(std::ostream& out, const PanelDataset& panel,
                     const TreatmentDesign& design) {
  std::vector<std::string> header{"unit", "period", "outcome", "treated"};
  for (const auto& m : panel.meta_names()) header.push_back(m);
  write_csv_row(out, header);
  std::vector<std::size_t> order(panel.num_units());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return panel.units()[a] < panel.units()[b]; });
  for (std::size_t i : order) {
    for (std::size_t t = 0; t < panel.num_periods(); ++t) {
      std::vector<std::string> row{panel.units()[i], std::to_string(panel.periods()[t]),
                                   format_double(panel.y(i, t)),
                                   design.treatment(i, t) ? "1" : "0"};
      for (const auto& m : panel.meta_names()) row.push_back(panel.meta(m, i));
      write_csv_row(out, row);
    }
  }
}

// ---------------------------------------------------------------------------
// Subsetting

DesignedPanel subset(const PanelDataset& panel, const TreatmentDesign& design,
                     const UnitPredicate& keep) {
  std::vector<std::size_t> rows;
  std::vector<bool> treated;
  std::size_t n_tr = 0;
  for (std::size_t i = 0; i < panel.num_units(); ++i) {
    if (!keep(UnitMeta(panel, design, i))) continue;
    rows.push_back(i);
    treated.push_back(design.is_treated(i));
    n_tr += design.is_treated(i) ? 1 : 0;
  }
  if (n_tr == 0) throw EmptyArmError("subset keeps no treated units");
  if (n_tr == rows.size()) throw EmptyArmError("subset keeps no control units");
  PanelDataset sub = panel.select(rows, panel.num_periods());
  TreatmentDesign sub_design(std::move(treated), design.t_pre(), design.t_post());
  return {std::move(sub), std::move(sub_design)};
}

UnitPredicate tercile_predicate(const PanelDataset& panel, const TreatmentDesign& design,
                                const std::string& attribute, int tercile) {
  if (tercile < 1 || tercile > 3) throw ConfigError("tercile must be 1, 2 or 3");
  std::vector<double> values;
  for (std::size_t i : design.treated_units()) values.push_back(panel.meta_number(attribute, i));
  std::sort(values.begin(), values.end());
  const std::size_t n = values.size();
  const double cut1 = values[(n + 2) / 3 - 1];
  const double cut2 = values[(2 * n + 2) / 3 - 1];
  return [attribute, tercile, cut1, cut2](const UnitMeta& unit) {
    if (!unit.treated()) return true;
    const double v = unit.number(attribute);
    const int group = v <= cut1 ? 1 : (v <= cut2 ? 2 : 3);
    return group == tercile;
  };
}

namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return s;
}

std::vector<std::string_view> split(std::string_view s, std::string_view sep) {
  std::vector<std::string_view> parts;
  std::size_t pos;
  while ((pos = s.find(sep)) != std::string_view::npos) {
    parts.push_back(s.substr(0, pos));
    s.remove_prefix(pos + sep.size());
  }
  parts.push_back(s);
  return parts;
}

void require_attribute(const PanelDataset& panel, std::string_view attr) {
  if (!panel.has_meta(attr)) {
    throw ConfigError("predicate references unknown attribute '" + std::string(attr) + "'");
  }
}

UnitPredicate parse_clause(std::string_view clause, const PanelDataset& panel,
                           const TreatmentDesign& design) {
  clause = trim(clause);
  if (clause.empty()) throw ConfigError("empty predicate clause");

  if (clause.rfind("tercile(", 0) == 0) {
    const auto close = clause.find(')');
    const auto eq = clause.find("==");
    if (close == std::string_view::npos || eq == std::string_view::npos || eq < close) {
      throw ConfigError("malformed tercile clause '" + std::string(clause) + "'");
    }
    const std::string attr(trim(clause.substr(8, close - 8)));
    require_attribute(panel, attr);
    auto k = parse_double(trim(clause.substr(eq + 2)));
    if (!k) throw ConfigError("tercile index must be 1, 2 or 3");
    return tercile_predicate(panel, design, attr, static_cast<int>(*k));
  }

  if (const auto in_pos = clause.find(" in "); in_pos != std::string_view::npos) {
    const std::string attr(trim(clause.substr(0, in_pos)));
    require_attribute(panel, attr);
    std::string_view set = trim(clause.substr(in_pos + 4));
    if (set.size() < 2 || set.front() != '{' || set.back() != '}') {
      throw ConfigError("set in clause '" + std::string(clause) + "' must be written {a, b}");
    }
    std::set<std::string> values;
    for (auto v : split(set.substr(1, set.size() - 2), ",")) {
      v = trim(v);
      if (!v.empty()) values.emplace(v);
    }
    return [attr, values = std::move(values)](const UnitMeta& unit) {
      return values.count(unit.text(attr)) > 0;
    };
  }

  static constexpr std::string_view ops[] = {"<=", ">=", "==", "!=", "<", ">"};
  for (std::string_view op : ops) {
    const auto pos = clause.find(op);
    if (pos == std::string_view::npos) continue;
    const std::string attr(trim(clause.substr(0, pos)));
    require_attribute(panel, attr);
    const std::string rhs(trim(clause.substr(pos + op.size())));
    const auto number = parse_double(rhs);
    const std::string op_s(op);
    if (!number) {
      if (op_s != "==" && op_s != "!=") {
        throw ConfigError("operator " + op_s + " needs a numeric right-hand side");
      }
      const bool equal = op_s == "==";
      return [attr, rhs, equal](const UnitMeta& unit) { return (unit.text(attr) == rhs) == equal; };
    }
    const double value = *number;
    return [attr, op_s, value](const UnitMeta& unit) {
      const double v = unit.number(attr);
      if (op_s == "<=") return v <= value;
      if (op_s == ">=") return v >= value;
      if (op_s == "==") return v == value;
      if (op_s == "!=") return v != value;
      if (op_s == "<") return v < value;
      return v > value;
    };
  }
  throw ConfigError("cannot parse predicate clause '" + std::string(clause) + "'");
}

}  // namespace

UnitPredicate parse_predicate(std::string_view text, const PanelDataset& panel,
                              const TreatmentDesign& design) {
  std::vector<UnitPredicate> clauses;
  for (auto part : split(text, "&&")) clauses.push_back(parse_clause(part, panel, design));
  return [clauses = std::move(clauses)](const UnitMeta& unit) {
    for (const auto& c : clauses) {
      if (!c(unit)) return false;
    }
    return true;
  };
}

// ---------------------------------------------------------------------------

ArmTrends group_trends(const PanelDataset& panel, const TreatmentDesign& design) {
  const std::size_t T = panel.num_periods();
  ArmTrends out{std::vector<double>(T, 0.0), std::vector<double>(T, 0.0)};
  for (std::size_t i : design.treated_units()) {
    for (std::size_t t = 0; t < T; ++t) out.treated[t] += panel.y(i, t);
  }
  for (std::size_t i : design.control_units()) {
    for (std::size_t t = 0; t < T; ++t) out.control[t] += panel.y(i, t);
  }
  for (std::size_t t = 0; t < T; ++t) {
    out.treated[t] /= static_cast<double>(design.n_treated());
    out.control[t] /= static_cast<double>(design.n_control());
  }
  return out;
}

}  // namespace synthdid
