#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "synthdid/csv.hpp"

namespace synthdid {

/// Maps long-format CSV columns onto panel roles.
struct PanelSchema {
  std::string unit = "unit";
  std::string period = "period";
  std::string outcome = "outcome";
  std::string treated = "treated";
  std::optional<std::string> state;
  std::optional<std::string> vap;
  std::optional<std::string> lag_dem_share;
  std::optional<std::string> grant_per_vap;
  std::vector<std::string> covariates;
  /// Outcome is a percentage (turnout-type) and must lie in [0, 100].
  bool bounded_outcome = false;

  /// Meta attribute names in declaration order, using the role names
  /// ("state", "vap", "lag_dem_share", "grant_per_vap") for the optional roles
  /// and the column names for free covariates.
  std::vector<std::string> meta_attributes() const;
};

/// Balanced unit x period outcome matrix. Immutable once built.
class PanelDataset {
public:
  /// Validates: units unique and nonempty, periods strictly increasing,
  /// outcome has units*periods finite entries in row-major (unit, period)
  /// order, each meta column has one value per unit.
  PanelDataset(std::vector<std::string> units, std::vector<std::int64_t> periods,
               std::vector<double> outcome, std::vector<std::string> meta_names = {},
               std::vector<std::vector<std::string>> meta_values = {});

  std::size_t num_units() const noexcept { return units_.size(); }
  std::size_t num_periods() const noexcept { return periods_.size(); }

  const std::vector<std::string>& units() const noexcept { return units_; }
  const std::vector<std::int64_t>& periods() const noexcept { return periods_; }

  double y(std::size_t unit, std::size_t period) const noexcept {
    return outcome_[unit * periods_.size() + period];
  }
  std::span<const double> row(std::size_t unit) const noexcept {
    return {outcome_.data() + unit * periods_.size(), periods_.size()};
  }
  std::span<const double> outcome() const noexcept { return outcome_; }

  const std::vector<std::string>& meta_names() const noexcept { return meta_names_; }
  bool has_meta(std::string_view name) const noexcept;
  /// Raw meta cell; throws ConfigError for an undeclared attribute.
  const std::string& meta(std::string_view name, std::size_t unit) const;
  /// Numeric meta cell; ParseError when the cell is not a number.
  double meta_number(std::string_view name, std::size_t unit) const;

  /// New panel holding the given unit rows (in the given order, repeats
  /// allowed) and the first `num_periods` periods. `ids` overrides unit names,
  /// which must stay unique.
  PanelDataset select(std::span<const std::size_t> rows, std::size_t num_periods,
                      std::optional<std::vector<std::string>> ids = std::nullopt) const;

  /// Same units and periods with a different outcome matrix.
  PanelDataset with_outcome(std::vector<double> outcome) const;

private:
  std::size_t meta_index(std::string_view name) const;

  std::vector<std::string> units_;
  std::vector<std::int64_t> periods_;
  std::vector<double> outcome_;
  std::vector<std::string> meta_names_;
  std::vector<std::vector<std::string>> meta_values_;
};

/// Block adoption: treated units switch on together for the last t_post periods.
class TreatmentDesign {
public:
  /// Throws DesignError unless both arms are nonempty, t_pre >= 2 and
  /// t_post >= 1. `treated` has one flag per unit.
  TreatmentDesign(std::vector<bool> treated, std::size_t t_pre, std::size_t t_post);

  const std::vector<bool>& treated_mask() const noexcept { return treated_; }
  bool is_treated(std::size_t unit) const noexcept { return treated_[unit]; }
  const std::vector<std::size_t>& treated_units() const noexcept { return treated_units_; }
  const std::vector<std::size_t>& control_units() const noexcept { return control_units_; }
  std::size_t n_treated() const noexcept { return treated_units_.size(); }
  std::size_t n_control() const noexcept { return control_units_.size(); }
  std::size_t t_pre() const noexcept { return t_pre_; }
  std::size_t t_post() const noexcept { return t_post_; }
  std::size_t num_periods() const noexcept { return t_pre_ + t_post_; }

  /// W_it
  bool treatment(std::size_t unit, std::size_t period) const noexcept {
    return treated_[unit] && period >= t_pre_;
  }

private:
  std::vector<bool> treated_;
  std::vector<std::size_t> treated_units_;
  std::vector<std::size_t> control_units_;
  std::size_t t_pre_;
  std::size_t t_post_;
};

struct DesignedPanel {
  PanelDataset panel;
  TreatmentDesign design;
};

/// Builds the panel from long-format rows. Units come out in lexicographic
/// order and periods ascending, so the row order of the file never matters.
DesignedPanel load_panel(const CsvTable& table, const PanelSchema& schema);
DesignedPanel load_panel_file(const std::string& path, const PanelSchema& schema);

/// Canonical long-format dump: one row per (unit, period) sorted by unit then
/// period, columns unit, period, outcome, treated, then meta attributes.
void write_panel_csv(std::ostream& out, const PanelDataset& panel, const TreatmentDesign& design);

/// Read-only view of one unit's attributes handed to subset predicates.
class UnitMeta {
public:
  UnitMeta(const PanelDataset& panel, const TreatmentDesign& design, std::size_t unit)
      : panel_(&panel), design_(&design), unit_(unit) {}

  const std::string& id() const noexcept { return panel_->units()[unit_]; }
  bool treated() const noexcept { return design_->is_treated(unit_); }
  const std::string& text(std::string_view attr) const { return panel_->meta(attr, unit_); }
  double number(std::string_view attr) const { return panel_->meta_number(attr, unit_); }

private:
  const PanelDataset* panel_;
  const TreatmentDesign* design_;
  std::size_t unit_;
};

using UnitPredicate = std::function<bool(const UnitMeta&)>;

/// Induced sub-panel of the units passing `keep`; periods unchanged.
/// Throws EmptyArmError when either arm ends up empty.
DesignedPanel subset(const PanelDataset& panel, const TreatmentDesign& design,
                     const UnitPredicate& keep);

/// Tercile (1, 2 or 3) of a numeric attribute computed over treated units.
/// Cut points are the order statistics at ranks ceil(n/3) and ceil(2n/3);
/// values equal to a cut point fall in the lower tercile. Controls always pass.
UnitPredicate tercile_predicate(const PanelDataset& panel, const TreatmentDesign& design,
                                const std::string& attribute, int tercile);

/// Parses a predicate over meta attributes. Clauses are joined with "&&":
///   state in {GA, AZ, WI}
///   lag_dem_share >= 0.5          (also <, <=, >, ==, !=)
///   state == GA
///   tercile(grant_per_vap) == 2
/// Unknown attributes raise ConfigError.
UnitPredicate parse_predicate(std::string_view text, const PanelDataset& panel,
                              const TreatmentDesign& design);

struct ArmTrends {
  std::vector<double> treated;
  std::vector<double> control;
};

/// Unweighted per-period means of each arm.
ArmTrends group_trends(const PanelDataset& panel, const TreatmentDesign& design);

}  // namespace synthdid
