#include "synthdid/regression.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>

#include "synthdid/errors.hpp"

namespace synthdid {

std::size_t RegressionResult::index(const std::string& name) const {
  auto it = std::find(names.begin(), names.end(), name);
  if (it == names.end()) throw ConfigError("no coefficient named '" + name + "'");
  return static_cast<std::size_t>(it - names.begin());
}

namespace {

struct Grouping {
  std::vector<std::size_t> code;
  std::size_t levels = 0;
};

// Demeans v within groups of each dimension in turn until a full pass moves
// nothing by more than tol.
void absorb(Eigen::Ref<Eigen::VectorXd> v, const std::vector<Grouping>& groups, double tol) {
  if (groups.empty()) return;
  const double scale = std::max(1.0, v.cwiseAbs().maxCoeff());
  std::vector<double> sums;
  std::vector<std::size_t> counts;
  for (int pass = 0; pass < 10000; ++pass) {
    double moved = 0.0;
    for (const auto& g : groups) {
      sums.assign(g.levels, 0.0);
      counts.assign(g.levels, 0);
      for (Eigen::Index r = 0; r < v.size(); ++r) {
        sums[g.code[r]] += v[r];
        ++counts[g.code[r]];
      }
      for (std::size_t l = 0; l < g.levels; ++l) {
        if (counts[l]) sums[l] /= static_cast<double>(counts[l]);
        moved = std::max(moved, std::abs(sums[l]));
      }
      for (Eigen::Index r = 0; r < v.size(); ++r) v[r] -= sums[g.code[r]];
    }
    if (groups.size() == 1 || moved <= tol * scale) return;
  }
}

}  // namespace

RegressionResult fe_ols(const Eigen::VectorXd& y, const Eigen::MatrixXd& x,
                        const std::vector<std::string>& names,
                        const std::vector<std::vector<std::size_t>>& fixed_effects,
                        const std::vector<std::string>& fe_names) {
  const auto n = y.size();
  if (x.rows() != n) throw ContractError("design matrix rows differ from outcome length");
  if (static_cast<std::size_t>(x.cols()) != names.size()) {
    throw ContractError("one name per design column required");
  }

  RegressionResult out;
  out.n_obs = static_cast<std::size_t>(n);
  out.fe_groups = fe_names;

  std::vector<Grouping> groups;
  for (const auto& codes : fixed_effects) {
    if (codes.size() != static_cast<std::size_t>(n)) {
      throw ContractError("fixed-effect code vector length differs from outcome length");
    }
    Grouping g;
    g.code = codes;
    g.levels = codes.empty() ? 0 : *std::max_element(codes.begin(), codes.end()) + 1;
    std::vector<char> used(g.levels, 0);
    std::size_t distinct = 0;
    for (std::size_t c : codes) {
      if (!used[c]) {
        used[c] = 1;
        ++distinct;
      }
    }
    out.absorbed_dof += distinct - 1;
    groups.push_back(std::move(g));
  }

  const bool intercept = groups.empty();
  Eigen::MatrixXd design(n, x.cols() + (intercept ? 1 : 0));
  if (intercept) {
    design.col(0).setOnes();
    design.rightCols(x.cols()) = x;
    out.names.emplace_back("(Intercept)");
  } else {
    design = x;
  }
  for (const auto& nm : names) out.names.push_back(nm);

  std::vector<double> raw_norm(static_cast<std::size_t>(design.cols()));
  for (Eigen::Index c = 0; c < design.cols(); ++c) raw_norm[c] = design.col(c).norm();

  Eigen::VectorXd yt = y;
  constexpr double kAbsorbTol = 1e-14;
  absorb(yt, groups, kAbsorbTol);
  for (Eigen::Index c = 0; c < design.cols(); ++c) absorb(design.col(c), groups, kAbsorbTol);

  // Sequential rank check: a column is collinear when almost nothing is left
  // after projecting out the earlier ones.
  const Eigen::Index k = design.cols();
  {
    Eigen::MatrixXd basis(n, 0);
    for (Eigen::Index c = 0; c < k; ++c) {
      Eigen::VectorXd col = design.col(c);
      for (int again = 0; again < 2; ++again) {
        for (Eigen::Index b = 0; b < basis.cols(); ++b) col -= basis.col(b).dot(col) * basis.col(b);
      }
      if (col.norm() <= 1e-9 * std::max(raw_norm[c], 1e-300)) throw RankDeficient(out.names[c]);
      basis.conservativeResize(n, basis.cols() + 1);
      basis.col(basis.cols() - 1) = col / col.norm();
    }
  }

  // The absorbed dimensions also carry the intercept that is not in the design.
  const Eigen::Index dof_k =
      k + static_cast<Eigen::Index>(out.absorbed_dof) + (groups.empty() ? 0 : 1);
  if (n <= dof_k) throw DataError("regression has no residual degrees of freedom");

  const Eigen::HouseholderQR<Eigen::MatrixXd> qr(design);
  const Eigen::VectorXd beta = qr.solve(yt);
  const Eigen::VectorXd resid = yt - design * beta;

  const Eigen::MatrixXd xtx = design.transpose() * design;
  const Eigen::MatrixXd bread = xtx.ldlt().solve(Eigen::MatrixXd::Identity(k, k));
  const Eigen::MatrixXd scaled = design.array().colwise() * resid.array();
  const Eigen::MatrixXd meat = scaled.transpose() * scaled;
  const double correction = static_cast<double>(n) / static_cast<double>(n - dof_k);
  const Eigen::MatrixXd cov = correction * bread * meat * bread;

  out.coefficients.assign(beta.data(), beta.data() + k);
  for (Eigen::Index c = 0; c < k; ++c) out.robust_se.push_back(std::sqrt(std::max(0.0, cov(c, c))));

  const double ybar = y.mean();
  const double sst = (y.array() - ybar).square().sum();
  out.r_squared = sst > 0.0 ? 1.0 - resid.squaredNorm() / sst : 1.0;
  return out;
}

RegressionResult fe_ols(const CsvTable& data, const std::string& outcome,
                        const std::vector<std::string>& covariates,
                        const std::vector<std::string>& fixed_effects) {
  const std::size_t c_y = data.column(outcome);
  std::vector<std::vector<std::size_t>> factors;  // per covariate, columns multiplied
  for (const auto& cov : covariates) {
    std::vector<std::size_t> cols;
    std::size_t start = 0;
    for (;;) {
      const auto pos = cov.find_first_of("*:", start);
      std::string part = cov.substr(start, pos == std::string::npos ? std::string::npos : pos - start);
      part.erase(0, part.find_first_not_of(' '));
      part.erase(part.find_last_not_of(' ') + 1);
      cols.push_back(data.column(part));
      if (pos == std::string::npos) break;
      start = pos + 1;
    }
    factors.push_back(std::move(cols));
  }
  std::vector<std::size_t> fe_cols;
  for (const auto& fe : fixed_effects) fe_cols.push_back(data.column(fe));

  std::vector<std::size_t> keep;
  std::vector<double> yv;
  std::vector<double> xv;
  for (std::size_t r = 0; r < data.rows.size(); ++r) {
    const auto& row = data.rows[r];
    auto yval = is_missing(row[c_y]) ? std::nullopt : parse_double(row[c_y]);
    if (!yval) continue;
    bool ok = true;
    std::vector<double> xs;
    for (const auto& cols : factors) {
      double prod = 1.0;
      for (std::size_t c : cols) {
        auto v = is_missing(row[c]) ? std::nullopt : parse_double(row[c]);
        if (!v) {
          ok = false;
          break;
        }
        prod *= *v;
      }
      if (!ok) break;
      xs.push_back(prod);
    }
    for (std::size_t c : fe_cols) ok = ok && !is_missing(row[c]);
    if (!ok) continue;
    keep.push_back(r);
    yv.push_back(*yval);
    xv.insert(xv.end(), xs.begin(), xs.end());
  }

  const auto n = static_cast<Eigen::Index>(keep.size());
  const auto p = static_cast<Eigen::Index>(covariates.size());
  Eigen::VectorXd y = Eigen::Map<Eigen::VectorXd>(yv.data(), n);
  Eigen::MatrixXd x(n, p);
  for (Eigen::Index r = 0; r < n; ++r) {
    for (Eigen::Index c = 0; c < p; ++c) x(r, c) = xv[static_cast<std::size_t>(r * p + c)];
  }

  std::vector<std::vector<std::size_t>> codes;
  for (std::size_t c : fe_cols) {
    std::map<std::string, std::size_t> level;
    for (std::size_t r : keep) level.emplace(data.rows[r][c], 0);
    std::size_t next = 0;
    for (auto& [label, code] : level) code = next++;
    std::vector<std::size_t> col;
    col.reserve(keep.size());
    for (std::size_t r : keep) col.push_back(level.at(data.rows[r][c]));
    codes.push_back(std::move(col));
  }

  std::vector<std::string> names;
  for (const auto& cov : covariates) {
    std::string nm = cov;
    std::replace(nm.begin(), nm.end(), '*', ':');
    nm.erase(std::remove(nm.begin(), nm.end(), ' '), nm.end());
    names.push_back(nm);
  }
  RegressionResult out = fe_ols(y, x, names, codes, fixed_effects);
  out.n_dropped = data.rows.size() - keep.size();
  return out;
}

std::vector<ScatterBin> binned_scatter(std::span<const double> x, std::span<const double> y,
                                       std::size_t n_bins) {
  if (x.size() != y.size()) throw ContractError("binned_scatter: x and y lengths differ");
  if (n_bins == 0) throw BinError("need at least one bin");
  if (n_bins > x.size()) {
    throw BinError("requested " + std::to_string(n_bins) + " bins for " +
                   std::to_string(x.size()) + " rows");
  }
  std::vector<std::size_t> order(x.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return x[a] < x[b]; });

  const std::size_t base = x.size() / n_bins;
  const std::size_t extra = x.size() % n_bins;
  std::vector<ScatterBin> bins(n_bins);
  std::size_t pos = 0;
  for (std::size_t b = 0; b < n_bins; ++b) {
    const std::size_t size = base + (b < extra ? 1 : 0);
    double sx = 0.0, sy = 0.0;
    for (std::size_t k = 0; k < size; ++k, ++pos) {
      sx += x[order[pos]];
      sy += y[order[pos]];
    }
    bins[b] = {sx / static_cast<double>(size), sy / static_cast<double>(size), size};
  }
  return bins;
}

}  // namespace synthdid
