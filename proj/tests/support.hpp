#pragma once

#include <poisonguard/common.hpp>
#include <poisonguard/regress.hpp>

#include <Eigen/SVD>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <string>

namespace pgtest {

using poisonguard::Dataset;
using poisonguard::Index;
using poisonguard::Matrix;
using poisonguard::Rng;
using poisonguard::Vector;

inline Matrix uniform_matrix(Rng& rng, Index rows, Index cols, double lo = 0.0, double hi = 1.0) {
  Matrix m(rows, cols);
  for (Index j = 0; j < cols; ++j)
    for (Index i = 0; i < rows; ++i) m(i, j) = rng.uniform(lo, hi);
  return m;
}

inline Matrix gaussian_matrix(Rng& rng, Index rows, Index cols) {
  Matrix m(rows, cols);
  for (Index j = 0; j < cols; ++j)
    for (Index i = 0; i < rows; ++i) m(i, j) = rng.normal();
  return m;
}

/// y = clamp(0.5 + (x - 0.5)'w + sigma * noise) on uniform [0,1] features.
inline Dataset linear_dataset(Rng& rng, Index n, const Vector& w, double sigma) {
  Dataset d{Matrix(n, w.size()), Vector(n)};
  for (Index i = 0; i < n; ++i) {
    for (Index j = 0; j < w.size(); ++j) d.X(i, j) = rng.uniform();
    const double v = 0.5 + (d.X.row(i).array() - 0.5).matrix().dot(w) + sigma * rng.normal();
    d.y(i) = std::clamp(v, 0.0, 1.0);
  }
  return d;
}

/// Least squares with bias through an explicit SVD pseudoinverse of [X 1].
inline Vector pinv_ols(const Matrix& X, const Vector& y) {
  Matrix A(X.rows(), X.cols() + 1);
  A << X, Vector::Ones(X.rows());
  Eigen::JacobiSVD<Matrix> svd(A, Eigen::ComputeFullU | Eigen::ComputeFullV);
  const Vector& s = svd.singularValues();
  const double cutoff = 1e-12 * s(0) * static_cast<double>(std::max(A.rows(), A.cols()));
  Vector sinv = Vector::Zero(s.size());
  for (Index i = 0; i < s.size(); ++i)
    if (s(i) > cutoff) sinv(i) = 1.0 / s(i);
  const Matrix pinv = svd.matrixV().leftCols(s.size()) * sinv.asDiagonal() *
                      svd.matrixU().leftCols(s.size()).transpose();
  return pinv * y;  // [w; b]
}

/// Ridge from unnormalized centered normal equations (Xc'Xc + n*lambda*I) w = Xc'yc.
inline Vector ridge_closed_form(const Matrix& X, const Vector& y, double lambda, double& b) {
  const double n = static_cast<double>(X.rows());
  const Vector mx = X.colwise().mean();
  const double my = y.mean();
  const Matrix Xc = X.rowwise() - mx.transpose();
  Matrix A = Xc.transpose() * Xc;
  A.diagonal().array() += n * lambda;
  const Vector w = A.fullPivLu().solve(Xc.transpose() * (y.array() - my).matrix());
  b = my - mx.dot(w);
  return w;
}

/// Lasso objective MSE + lambda*|w|_1 with the bias at its optimum for w.
inline double lasso_objective(const Matrix& X, const Vector& y, const Vector& w, double lambda) {
  const double b = y.mean() - X.colwise().mean().dot(w);
  const Vector r = (X * w).array() + b - y.array();
  return r.squaredNorm() / static_cast<double>(X.rows()) + lambda * w.lpNorm<1>();
}

/// Subgradient descent on the lasso objective in Gram form, keeping the best
/// iterate. Slow but makes no use of coordinate structure.
inline double lasso_subgradient_oracle(const Matrix& X, const Vector& y, double lambda, long iterations) {
  const double n = static_cast<double>(X.rows());
  const Vector mx = X.colwise().mean();
  const Matrix Xc = X.rowwise() - mx.transpose();
  const Vector yc = y.array() - y.mean();
  const Matrix G = Xc.transpose() * Xc / n;
  const Vector c = Xc.transpose() * yc / n;
  const double yy = yc.squaredNorm() / n;
  auto f = [&](const Vector& w) { return w.dot(G * w) - 2.0 * c.dot(w) + yy + lambda * w.lpNorm<1>(); };
  const double L = 2.0 * Eigen::SelfAdjointEigenSolver<Matrix>(G).eigenvalues().maxCoeff() + 1e-12;

  Vector w = Vector::Zero(X.cols());
  double best = f(w);
  for (long k = 1; k <= iterations; ++k) {
    Vector g = 2.0 * (G * w - c);
    for (Index j = 0; j < w.size(); ++j) g(j) += lambda * (w(j) > 0 ? 1.0 : (w(j) < 0 ? -1.0 : 0.0));
    w -= g / (L * std::sqrt(static_cast<double>(k)));
    best = std::min(best, f(w));
  }
  return best;
}

struct PlantedRpca {
  Matrix low_rank;
  Matrix sparse;
  Matrix observed() const { return low_rank + sparse; }
};

/// Rank-r Gaussian product plus +/-1 spikes on `density` of the cells.
inline PlantedRpca planted_rpca(std::uint64_t seed, Index n, Index r, double density) {
  Rng rng(seed);
  const Matrix L = gaussian_matrix(rng, n, r), R = gaussian_matrix(rng, n, r);
  PlantedRpca p{L * R.transpose(), Matrix::Zero(n, n)};
  const auto cells = rng.sample_without_replacement(n * n, static_cast<Index>(density * static_cast<double>(n * n)));
  for (Index k : cells) p.sparse(k / n, k % n) = rng.below(2) ? 1.0 : -1.0;
  return p;
}

/// F1 of the estimated nonzero pattern (|est| > threshold) against the true one.
inline double support_f1(const Matrix& truth, const Matrix& estimate, double threshold) {
  double tp = 0, fp = 0, fn = 0;
  for (Index i = 0; i < truth.size(); ++i) {
    const bool t = truth.data()[i] != 0.0, e = std::abs(estimate.data()[i]) > threshold;
    tp += t && e;
    fp += !t && e;
    fn += t && !e;
  }
  return tp == 0 ? 0.0 : 2 * tp / (2 * tp + fp + fn);
}

inline std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return std::string(std::istreambuf_iterator<char>(in), {});
}

/// Fresh scratch directory under the system temp dir.
inline std::filesystem::path temp_dir(const std::string& name) {
  auto p = std::filesystem::temp_directory_path() / ("poisonguard_test_" + name);
  std::filesystem::remove_all(p);
  std::filesystem::create_directories(p);
  return p;
}

}  // namespace pgtest
