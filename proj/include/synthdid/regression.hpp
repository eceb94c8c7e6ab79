#pragma once

#include <Eigen/Dense>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "synthdid/csv.hpp"

namespace synthdid {

struct RegressionResult {
  std::vector<std::string> names;
  std::vector<double> coefficients;
  std::vector<double> robust_se;  ///< HC1
  std::size_t n_obs = 0;
  std::size_t n_dropped = 0;  ///< rows removed for missing values
  std::vector<std::string> fe_groups;
  /// Absorbed fixed-effect parameters (levels - 1 per dimension).
  std::size_t absorbed_dof = 0;
  double r_squared = 0.0;
  std::string se_type = "HC1";

  /// Index of a named coefficient; throws ConfigError when absent.
  std::size_t index(const std::string& name) const;
};

/// Least squares with absorbed fixed effects and HC1 standard errors on
/// already-assembled data. `fixed_effects` holds one integer group code per
/// row for each absorbed dimension. An intercept is added when there are no
/// fixed effects. Degrees of freedom for HC1: k = regressors + 1 (intercept,
/// explicit or absorbed) + sum over dimensions of (levels - 1).
RegressionResult fe_ols(const Eigen::VectorXd& y, const Eigen::MatrixXd& x,
                        const std::vector<std::string>& names,
                        const std::vector<std::vector<std::size_t>>& fixed_effects = {},
                        const std::vector<std::string>& fe_names = {});

/// Table-driven front end. Covariates name columns; "a*b" or "a:b" adds the
/// elementwise product of a and b (main effects are not added implicitly).
/// Fixed-effect columns are categorical. Rows with a missing or non-numeric
/// outcome/covariate or a missing FE label are dropped listwise.
/// Throws RankDeficient naming the first collinear column.
RegressionResult fe_ols(const CsvTable& data, const std::string& outcome,
                        const std::vector<std::string>& covariates,
                        const std::vector<std::string>& fixed_effects = {});

struct ScatterBin {
  double mean_x = 0.0;
  double mean_y = 0.0;
  std::size_t count = 0;
};

/// Equal-count bins by rank of x (ties broken by input order); when rows do
/// not divide evenly the lowest bins take one extra row each.
/// Throws BinError when n_bins is 0 or exceeds the row count.
std::vector<ScatterBin> binned_scatter(std::span<const double> x, std::span<const double> y,
                                       std::size_t n_bins);

}  // namespace synthdid
