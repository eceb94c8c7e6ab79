#pragma once

// Reference computations written directly from the model definitions. None
// of them call into the library's solvers.

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <stdexcept>
#include <vector>

#include "support.hpp"

namespace oracle {

using testing::Matrix;

struct Arms {
  std::vector<std::size_t> treated;
  std::vector<std::size_t> control;
};

inline Arms split(const std::vector<bool>& treated) {
  Arms a;
  for (std::size_t i = 0; i < treated.size(); ++i) (treated[i] ? a.treated : a.control).push_back(i);
  return a;
}

inline double zeta(const Matrix& y, const std::vector<bool>& treated, std::size_t t_pre,
                   std::size_t t_post) {
  const Arms a = split(treated);
  std::vector<double> diffs;
  for (std::size_t i : a.control) {
    for (std::size_t t = 1; t < t_pre; ++t) diffs.push_back(y[i][t] - y[i][t - 1]);
  }
  if (diffs.size() < 2) return 0.0;
  double mean = 0.0;
  for (double d : diffs) mean += d;
  mean /= static_cast<double>(diffs.size());
  double ss = 0.0;
  for (double d : diffs) ss += (d - mean) * (d - mean);
  const double sigma = std::sqrt(ss / static_cast<double>(diffs.size() - 1));
  return std::pow(static_cast<double>(a.treated.size() * t_post), 0.25) * sigma;
}

// Unit-weight objective with the intercept at its optimum (the mean gap).
inline double unit_objective(const Matrix& y, const std::vector<bool>& treated, std::size_t t_pre,
                             const std::vector<double>& omega, double zeta) {
  const Arms a = split(treated);
  std::vector<double> gap(t_pre);
  for (std::size_t t = 0; t < t_pre; ++t) {
    double tm = 0.0;
    for (std::size_t i : a.treated) tm += y[i][t];
    tm /= static_cast<double>(a.treated.size());
    double synth = 0.0;
    for (std::size_t j = 0; j < a.control.size(); ++j) synth += omega[j] * y[a.control[j]][t];
    gap[t] = tm - synth;
  }
  double omega0 = 0.0;
  for (double g : gap) omega0 += g;
  omega0 /= static_cast<double>(t_pre);
  double f = 0.0;
  for (double g : gap) f += (omega0 - g) * (omega0 - g);
  double norm = 0.0;
  for (double w : omega) norm += w * w;
  return f + zeta * zeta * static_cast<double>(t_pre) * norm;
}

// 1e-6 times the sample variance of all control pre-period outcomes.
inline double time_ridge(const Matrix& y, const std::vector<bool>& treated, std::size_t t_pre) {
  const Arms a = split(treated);
  std::vector<double> v;
  for (std::size_t i : a.control) {
    for (std::size_t t = 0; t < t_pre; ++t) v.push_back(y[i][t]);
  }
  double mean = 0.0;
  for (double x : v) mean += x;
  mean /= static_cast<double>(v.size());
  double ss = 0.0;
  for (double x : v) ss += (x - mean) * (x - mean);
  return 1e-6 * ss / static_cast<double>(v.size() - 1);
}

inline double time_objective(const Matrix& y, const std::vector<bool>& treated, std::size_t t_pre,
                             const std::vector<double>& lambda, double ridge) {
  const Arms a = split(treated);
  const std::size_t T = y.front().size();
  std::vector<double> gap;
  for (std::size_t i : a.control) {
    double post = 0.0;
    for (std::size_t t = t_pre; t < T; ++t) post += y[i][t];
    post /= static_cast<double>(T - t_pre);
    double fit = 0.0;
    for (std::size_t t = 0; t < t_pre; ++t) fit += lambda[t] * y[i][t];
    gap.push_back(post - fit);
  }
  double lambda0 = 0.0;
  for (double g : gap) lambda0 += g;
  lambda0 /= static_cast<double>(gap.size());
  double f = 0.0;
  for (double g : gap) f += (lambda0 - g) * (lambda0 - g);
  double norm = 0.0;
  for (double l : lambda) norm += l * l;
  return f + ridge * static_cast<double>(a.control.size()) * norm;
}

// f(x) = x'Qx + q'x + c recovered by polarization from evaluations of an
// exactly quadratic function.
struct Quadratic {
  Eigen::MatrixXd Q;
  Eigen::VectorXd q;
  double c = 0.0;

  double operator()(const Eigen::VectorXd& x) const { return x.dot(Q * x) + q.dot(x) + c; }
};

inline Quadratic polarize(std::size_t n, const std::function<double(const std::vector<double>&)>& f) {
  Quadratic out;
  out.Q.setZero(n, n);
  out.q.setZero(n);
  std::vector<double> x(n, 0.0);
  out.c = f(x);
  std::vector<double> single(n);
  for (std::size_t i = 0; i < n; ++i) {
    x.assign(n, 0.0);
    x[i] = 1.0;
    single[i] = f(x);
    x[i] = 2.0;
    const double twice = f(x);
    out.Q(i, i) = (twice - 2.0 * single[i] + out.c) / 2.0;
    out.q(i) = single[i] - out.Q(i, i) - out.c;
  }
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      x.assign(n, 0.0);
      x[i] = x[j] = 1.0;
      const double both = f(x);
      out.Q(i, j) = out.Q(j, i) =
          (both - out.Q(i, i) - out.Q(j, j) - out.q(i) - out.q(j) - out.c) / 2.0;
    }
  }
  return out;
}

// Minimum of a quadratic over every simplex point whose coordinates are
// multiples of 1/steps. Handles dimension 1 to 4; the last two coordinates are
// swept with an exact incremental update along the edge direction.
inline double simplex_grid_min(const Quadratic& f, std::size_t steps) {
  const auto n = static_cast<std::size_t>(f.q.size());
  const double h = 1.0 / static_cast<double>(steps);
  if (n == 1) return f(Eigen::VectorXd::Ones(1));
  double best = std::numeric_limits<double>::infinity();
  Eigen::VectorXd base = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(n));
  const auto a = static_cast<Eigen::Index>(n - 2), b = static_cast<Eigen::Index>(n - 1);

  auto sweep = [&](std::size_t remaining) {
    // x = base + (remaining - k) h e_b + k h e_a, for k = 0..remaining
    Eigen::VectorXd u = base;
    u(b) = static_cast<double>(remaining) * h;
    Eigen::VectorXd dir = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(n));
    dir(a) = h;
    dir(b) = -h;
    const double f0 = f(u);
    const double lin = 2.0 * u.dot(f.Q * dir) + f.q.dot(dir);
    const double quad = dir.dot(f.Q * dir);
    for (std::size_t k = 0; k <= remaining; ++k) {
      const double kk = static_cast<double>(k);
      best = std::min(best, f0 + kk * lin + kk * kk * quad);
    }
  };

  if (n == 2) {
    sweep(steps);
  } else if (n == 3) {
    for (std::size_t i = 0; i <= steps; ++i) {
      base.setZero();
      base(0) = static_cast<double>(i) * h;
      sweep(steps - i);
    }
  } else if (n == 4) {
    for (std::size_t i = 0; i <= steps; ++i) {
      for (std::size_t j = 0; i + j <= steps; ++j) {
        base.setZero();
        base(0) = static_cast<double>(i) * h;
        base(1) = static_cast<double>(j) * h;
        sweep(steps - i - j);
      }
    }
  } else {
    throw std::invalid_argument("simplex_grid_min supports dimension 1 to 4");
  }
  return best;
}

// Double difference with normalized control and pre-period weights.
inline double double_difference(const Matrix& y, const std::vector<bool>& treated, std::size_t t_pre,
                                const std::vector<double>& omega, const std::vector<double>& lambda) {
  const Arms a = split(treated);
  const std::size_t T = y.front().size();
  auto pre_post = [&](std::size_t i) {
    double pre = 0.0, post = 0.0;
    for (std::size_t t = 0; t < t_pre; ++t) pre += lambda[t] * y[i][t];
    for (std::size_t t = t_pre; t < T; ++t) post += y[i][t];
    return post / static_cast<double>(T - t_pre) - pre;
  };
  double tr = 0.0;
  for (std::size_t i : a.treated) tr += pre_post(i);
  tr /= static_cast<double>(a.treated.size());
  double co = 0.0;
  for (std::size_t j = 0; j < a.control.size(); ++j) co += omega[j] * pre_post(a.control[j]);
  return tr - co;
}

// Weighted least squares of Y on unit dummies, period dummies (first dropped)
// and the treatment indicator, with cell weights w_it. Returns the coefficient
// on the treatment indicator.
inline double dense_weighted_twfe(const Matrix& y, const std::vector<bool>& treated, std::size_t t_pre,
                                  const std::vector<double>& unit_w, const std::vector<double>& time_w) {
  const std::size_t n = y.size(), T = y.front().size();
  const auto rows = static_cast<Eigen::Index>(n * T);
  const auto cols = static_cast<Eigen::Index>(n + T - 1 + 1);
  Eigen::MatrixXd x = Eigen::MatrixXd::Zero(rows, cols);
  Eigen::VectorXd v(rows), w(rows);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t t = 0; t < T; ++t) {
      const auto r = static_cast<Eigen::Index>(i * T + t);
      x(r, static_cast<Eigen::Index>(i)) = 1.0;
      if (t > 0) x(r, static_cast<Eigen::Index>(n + t - 1)) = 1.0;
      x(r, cols - 1) = (treated[i] && t >= t_pre) ? 1.0 : 0.0;
      v(r) = y[i][t];
      w(r) = unit_w[i] * time_w[t];
    }
  }
  const Eigen::VectorXd sw = w.array().sqrt();
  const Eigen::MatrixXd xw = x.array().colwise() * sw.array();
  const Eigen::VectorXd vw = v.array() * sw.array();
  const Eigen::VectorXd beta = xw.colPivHouseholderQr().solve(vw);
  return beta(cols - 1);
}

// Dense OLS by normal equations with HC1 sandwich covariance.
struct DenseOls {
  Eigen::VectorXd beta;
  Eigen::VectorXd se;
};

inline DenseOls dense_ols_hc1(const Eigen::MatrixXd& x, const Eigen::VectorXd& y) {
  const Eigen::MatrixXd xtx = x.transpose() * x;
  const Eigen::MatrixXd inv = xtx.inverse();
  DenseOls out;
  out.beta = inv * (x.transpose() * y);
  const Eigen::VectorXd e = y - x * out.beta;
  Eigen::MatrixXd meat = Eigen::MatrixXd::Zero(x.cols(), x.cols());
  for (Eigen::Index r = 0; r < x.rows(); ++r) meat += e(r) * e(r) * x.row(r).transpose() * x.row(r);
  const double n = static_cast<double>(x.rows()), k = static_cast<double>(x.cols());
  const Eigen::MatrixXd cov = n / (n - k) * inv * meat * inv;
  out.se = cov.diagonal().array().sqrt();
  return out;
}

}  // namespace oracle
