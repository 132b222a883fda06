#pragma once

#include <poisonguard/common.hpp>

#include <cmath>
#include <string>

namespace poisonguard {

enum class Learner { ols, ridge, lasso };

inline const char* to_string(Learner l) {
  switch (l) {
    case Learner::ols: return "ols";
    case Learner::ridge: return "ridge";
    case Learner::lasso: return "lasso";
  }
  return "?";
}

inline Learner learner_from_string(const std::string& s) {
  if (s == "ols") return Learner::ols;
  if (s == "ridge") return Learner::ridge;
  if (s == "lasso") return Learner::lasso;
  throw InvalidArgument("unknown learner: " + s);
}

/// f(x) = w'x + b. `lambda` is 0 for OLS. The bias is never penalized.
struct LinearModel {
  Vector w;
  double b = 0.0;
  Learner kind = Learner::ols;
  double lambda = 0.0;
  bool converged = true;
  int iterations = 0;

  double penalty() const {
    switch (kind) {
      case Learner::ols: return 0.0;
      case Learner::ridge: return lambda * w.squaredNorm();
      case Learner::lasso: return lambda * w.lpNorm<1>();
    }
    return 0.0;
  }
};

struct TrainConfig {
  double lambda = 0.0;
  int lasso_max_iter = 10000;
  double lasso_tol = 1e-8;

  void validate() const {
    require(lambda >= 0.0, "lambda must be non-negative");
    require(lasso_max_iter >= 1, "lasso_max_iter must be >= 1");
    require(lasso_tol > 0.0, "lasso_tol must be positive");
  }
};

/// Default regularization strengths on [0,1]-normalized data.
inline constexpr double kDefaultRidgeLambda = 0.01;
inline constexpr double kDefaultLassoLambda = 0.001;

inline double default_lambda(Learner l) {
  return l == Learner::ridge ? kDefaultRidgeLambda : l == Learner::lasso ? kDefaultLassoLambda : 0.0;
}

/// Normal equations of the centered problem:
///   C = Xc'Xc/n,  c = Xc'yc/n,  with Xc, yc the column-centered data.
/// Every learner here is a function of (C, c, means) alone, which lets the
/// poisoning attack retrain from running moment sums.
struct CenteredSystem {
  Matrix C;
  Vector c;
  Vector mean_x;
  double mean_y = 0.0;
  Index n = 0;

  static CenteredSystem from_data(const Matrix& X, const Vector& y) {
    require(X.rows() > 0, "empty input");
    require(X.rows() == y.size(), "rows(X) must equal len(y)");
    CenteredSystem s;
    s.n = X.rows();
    const double inv_n = 1.0 / static_cast<double>(s.n);
    s.mean_x = X.colwise().mean().transpose();
    s.mean_y = y.mean();
    const Matrix Xc = X.rowwise() - s.mean_x.transpose();
    const Vector yc = y.array() - s.mean_y;
    s.C = Xc.transpose() * Xc * inv_n;
    s.c = Xc.transpose() * yc * inv_n;
    return s;
  }
};

/// Running sums over rows of [x, y]; rows can be added and removed in O(d^2).
struct MomentSums {
  Matrix xx;
  Vector x;
  Vector xy;
  double y = 0.0;
  Index n = 0;

  explicit MomentSums(Index d = 0) : xx(Matrix::Zero(d, d)), x(Vector::Zero(d)), xy(Vector::Zero(d)) {}

  static MomentSums from_data(const Matrix& X, const Vector& yv) {
    MomentSums m(X.cols());
    m.xx = X.transpose() * X;
    m.x = X.colwise().sum().transpose();
    m.xy = X.transpose() * yv;
    m.y = yv.sum();
    m.n = X.rows();
    return m;
  }

  template <class Row>
  void add(const Row& r, double yv, double sign = 1.0) {
    xx.noalias() += sign * (r.transpose() * r);
    x += sign * r.transpose();
    xy += (sign * yv) * r.transpose();
    y += sign * yv;
    n += sign > 0 ? 1 : -1;
  }

  CenteredSystem centered() const {
    require(n > 0, "MomentSums: no rows");
    CenteredSystem s;
    s.n = n;
    const double inv_n = 1.0 / static_cast<double>(n);
    s.mean_x = x * inv_n;
    s.mean_y = y * inv_n;
    s.C = xx * inv_n - s.mean_x * s.mean_x.transpose();
    s.c = xy * inv_n - s.mean_x * s.mean_y;
    return s;
  }
};

namespace detail {

inline LinearModel finish(Vector w, const CenteredSystem& s, Learner kind, double lambda) {
  LinearModel m;
  m.b = s.mean_y - s.mean_x.dot(w);
  m.w = std::move(w);
  m.kind = kind;
  m.lambda = kind == Learner::ols ? 0.0 : lambda;
  return m;
}

inline double soft(double x, double t) {
  return x > t ? x - t : (x < -t ? x + t : 0.0);
}

}  // namespace detail

/// OLS on a centered system; minimum-norm w when C is singular.
inline LinearModel solve_ols(const CenteredSystem& s) {
  Eigen::CompleteOrthogonalDecomposition<Matrix> cod(s.C);
  return detail::finish(cod.solve(s.c), s, Learner::ols, 0.0);
}

/// (C + lambda I) w = c. Falls back to OLS when lambda = 0.
inline LinearModel solve_ridge(const CenteredSystem& s, double lambda) {
  require(lambda >= 0.0, "ridge: lambda must be non-negative");
  if (lambda == 0.0) {
    auto m = solve_ols(s);
    m.kind = Learner::ridge;
    return m;
  }
  Matrix A = s.C;
  A.diagonal().array() += lambda;
  Eigen::LLT<Matrix> llt(A);
  Vector w = llt.info() == Eigen::Success ? Vector(llt.solve(s.c))
                                          : Vector(Eigen::CompleteOrthogonalDecomposition<Matrix>(A).solve(s.c));
  return detail::finish(std::move(w), s, Learner::ridge, lambda);
}

/// Cyclic coordinate descent on  w'Cw - 2c'w + lambda*|w|_1. Stops once a
/// full sweep moves no coordinate by more than cfg.lasso_tol.
inline LinearModel solve_lasso(const CenteredSystem& s, const TrainConfig& cfg,
                               const Vector* warm_start = nullptr) {
  cfg.validate();
  const Index d = s.C.rows();
  Vector w = warm_start && warm_start->size() == d ? *warm_start : Vector::Zero(d);
  Vector Cw = s.C * w;
  const double half_lambda = cfg.lambda / 2.0;
  bool converged = false;
  int sweep = 0;
  while (sweep < cfg.lasso_max_iter) {
    ++sweep;
    double max_delta = 0.0;
    for (Index j = 0; j < d; ++j) {
      const double cjj = s.C(j, j);
      const double old = w(j);
      const double next = cjj > 0.0 ? detail::soft(s.c(j) - (Cw(j) - cjj * old), half_lambda) / cjj : 0.0;
      const double delta = next - old;
      if (delta != 0.0) {
        Cw.noalias() += delta * s.C.col(j);
        w(j) = next;
        max_delta = std::max(max_delta, std::abs(delta));
      }
    }
    if (max_delta < cfg.lasso_tol) {
      converged = true;
      break;
    }
  }
  auto m = detail::finish(std::move(w), s, Learner::lasso, cfg.lambda);
  m.converged = converged;
  m.iterations = sweep;
  return m;
}

inline LinearModel solve(const CenteredSystem& s, Learner learner, const TrainConfig& cfg,
                         const Vector* warm_start = nullptr) {
  switch (learner) {
    case Learner::ols: return solve_ols(s);
    case Learner::ridge: return solve_ridge(s, cfg.lambda);
    case Learner::lasso: return solve_lasso(s, cfg, warm_start);
  }
  throw InvalidArgument("unknown learner");
}

/// Least squares with a bias column; minimum-norm (w, b) when [X 1] is rank deficient.
inline LinearModel fit_ols(const Matrix& X, const Vector& y) {
  require(X.rows() > 0, "fit_ols: empty input");
  require(X.rows() == y.size(), "fit_ols: rows(X) must equal len(y)");
  Matrix A(X.rows(), X.cols() + 1);
  A.leftCols(X.cols()) = X;
  A.col(X.cols()).setOnes();
  Eigen::CompleteOrthogonalDecomposition<Matrix> cod(A);
  const Vector theta = cod.solve(y);
  LinearModel m;
  m.w = theta.head(X.cols());
  m.b = theta(X.cols());
  return m;
}

inline LinearModel fit_ridge(const Matrix& X, const Vector& y, double lambda) {
  require(lambda >= 0.0, "fit_ridge: lambda must be non-negative");
  if (lambda == 0.0) {
    auto m = fit_ols(X, y);
    m.kind = Learner::ridge;
    return m;
  }
  return solve_ridge(CenteredSystem::from_data(X, y), lambda);
}

inline LinearModel fit_lasso(const Matrix& X, const Vector& y, double lambda, TrainConfig cfg = {}) {
  require(lambda >= 0.0, "fit_lasso: lambda must be non-negative");
  cfg.lambda = lambda;
  return solve_lasso(CenteredSystem::from_data(X, y), cfg);
}

inline LinearModel fit(const Dataset& data, Learner learner, const TrainConfig& cfg) {
  switch (learner) {
    case Learner::ols: return fit_ols(data.X, data.y);
    case Learner::ridge: return fit_ridge(data.X, data.y, cfg.lambda);
    case Learner::lasso: return fit_lasso(data.X, data.y, cfg.lambda, cfg);
  }
  throw InvalidArgument("unknown learner");
}

inline Vector predict(const LinearModel& model, const Matrix& X) {
  require(X.cols() == model.w.size(), "predict: feature count mismatch");
  return (X * model.w).array() + model.b;
}

inline double mse(const Vector& predictions, const Vector& targets) {
  require(predictions.size() > 0, "mse: empty vectors");
  require(predictions.size() == targets.size(), "mse: length mismatch");
  return (predictions - targets).squaredNorm() / static_cast<double>(predictions.size());
}

/// Training objective of the model's own learner: MSE plus its penalty.
inline double objective(const LinearModel& model, const Dataset& data) {
  return mse(predict(model, data.X), data.y) + model.penalty();
}

}  // namespace poisonguard
