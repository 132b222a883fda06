#pragma once

#include <poisonguard/attack_fdi.hpp>
#include <poisonguard/common.hpp>
#include <poisonguard/dataset.hpp>

#include <Eigen/SVD>

#include <algorithm>
#include <cmath>
#include <optional>
#include <vector>

namespace poisonguard {

/// Robust PCA by accelerated proximal gradient with continuation on mu.
/// Unset fields are filled from the input: lambda = 1/sqrt(max(q,p)),
/// mu0 = 0.99 * ||s_a||_2, mu_floor = 1e-9 * mu0.
struct ApgConfig {
  std::optional<double> lambda;
  double eta = 0.9;
  std::optional<double> mu0;
  std::optional<double> mu_floor;
  int max_iter = 500;
  double tol = 1e-7;
  /// Keep the previous iterate when the proximal point does not lower the
  /// objective at the current mu (monotone variant). Off = plain extrapolation.
  bool monotone = true;

  void validate() const {
    require(eta > 0.0 && eta < 1.0, "APG: eta must be in (0, 1)");
    require(!lambda || *lambda > 0.0, "APG: lambda must be positive");
    require(!mu_floor || *mu_floor > 0.0, "APG: mu floor must be positive");
    require(!mu0 || *mu0 > 0.0, "APG: mu0 must be positive");
    require(max_iter >= 1, "APG: max_iter must be >= 1");
    require(tol > 0.0, "APG: tol must be positive");
  }
};

struct RpcaResult {
  Matrix low_rank;
  Matrix sparse;
  int iterations = 0;
  bool converged = false;
  Index rank = 0;
  double residual = 0.0;  ///< ||low_rank + sparse - s_a||_F
  double lambda = 0.0;
  double mu_floor = 0.0;
  std::vector<double> objective_trajectory;  ///< relaxed objective at the mu used in each step
  std::vector<double> mu_trajectory;
  /// Relaxed objective re-evaluated at mu = mu_floor, for the descent check once continuation settles.
  std::vector<double> floor_objective_trajectory;
};

/// sign(x) * max(|x| - tau, 0)
inline double soft_threshold(double x, double tau) {
  require(tau >= 0.0, "soft_threshold: tau must be non-negative");
  return x > tau ? x - tau : (x < -tau ? x + tau : 0.0);
}

inline Matrix soft_threshold(const Matrix& x, double tau) {
  require(tau >= 0.0, "soft_threshold: tau must be non-negative");
  return x.unaryExpr([tau](double v) { return v > tau ? v - tau : (v < -tau ? v + tau : 0.0); });
}

struct SvtResult {
  Matrix value;
  Index rank = 0;
  double nuclear_norm = 0.0;  ///< of the thresholded matrix
};

/// Singular value thresholding: U * soft(Sigma, tau) * V'.
inline SvtResult svt_detail(const Matrix& G, double tau) {
  require(tau >= 0.0, "svt: tau must be non-negative");
  SvtResult out;
  if (G.size() == 0) {
    out.value = G;
    return out;
  }
  Eigen::BDCSVD<Matrix> svd(G, Eigen::ComputeThinU | Eigen::ComputeThinV);
  if (svd.info() != Eigen::Success) throw std::runtime_error("svt: SVD failed");
  const Vector& sigma = svd.singularValues();
  Index r = 0;
  while (r < sigma.size() && sigma(r) > tau) ++r;
  out.rank = r;
  if (r == 0) {
    out.value = Matrix::Zero(G.rows(), G.cols());
    return out;
  }
  const Vector shrunk = (sigma.head(r).array() - tau).matrix();
  out.nuclear_norm = shrunk.sum();
  out.value = svd.matrixU().leftCols(r) * shrunk.asDiagonal() * svd.matrixV().leftCols(r).transpose();
  return out;
}

inline Matrix svt(const Matrix& G, double tau) { return svt_detail(G, tau).value; }

inline double nuclear_norm(const Matrix& m) {
  if (m.size() == 0) return 0.0;
  return Eigen::BDCSVD<Matrix>(m).singularValues().sum();
}

/// mu*||s||_* + mu*lambda*||i||_1 + 0.5*||s + i - s_a||_F^2
inline double relaxed_objective(double nuclear, const Matrix& sparse, const Matrix& residual, double mu, double lambda) {
  return mu * nuclear + mu * lambda * sparse.lpNorm<1>() + 0.5 * residual.squaredNorm();
}

/// Splits s_a into low-rank + sparse parts. Each step takes a half gradient
/// step on the coupling term from the extrapolated point Y, then applies
/// SVT(mu/2) to the low-rank part and soft-thresholding (lambda*mu/2) to the
/// sparse part. Momentum follows t_{k+1} = (1 + sqrt(4 t_k^2 + 1)) / 2 and mu
/// shrinks geometrically to its floor. Stops when the proximal point moves less
/// than tol * max(1, ||s_a||_F).
inline RpcaResult apg_rpca(const Matrix& observed, const ApgConfig& cfg = {}) {
  cfg.validate();
  require(observed.allFinite(), "apg_rpca: input must be finite");
  const Index q = observed.rows(), p = observed.cols();
  RpcaResult res;
  res.lambda = cfg.lambda.value_or(1.0 / std::sqrt(static_cast<double>(std::max<Index>({q, p, 1}))));
  res.low_rank = Matrix::Zero(q, p);
  res.sparse = Matrix::Zero(q, p);
  const double norm_obs = observed.norm();
  if (observed.size() == 0 || norm_obs == 0.0) {
    res.converged = true;
    res.iterations = observed.size() == 0 ? 0 : 1;
    if (res.iterations) {
      res.objective_trajectory.push_back(0.0);
      res.floor_objective_trajectory.push_back(0.0);
      res.mu_trajectory.push_back(0.0);
    }
    return res;
  }

  const double spectral = Eigen::BDCSVD<Matrix>(observed).singularValues()(0);
  double mu = cfg.mu0.value_or(0.99 * spectral);
  res.mu_floor = cfg.mu_floor.value_or(1e-9 * mu);
  const double lambda = res.lambda;
  const double stop = cfg.tol * std::max(1.0, norm_obs);

  // Current iterate x_k = (s, e) with the pieces of its objective cached so it
  // can be re-scored when mu changes.
  Matrix s = res.low_rank, e = res.sparse;
  Matrix Ys = s, Ye = e;
  double s_nuclear = 0.0, s_l1 = 0.0, s_fit = 0.5 * observed.squaredNorm();
  double t = 1.0;

  for (int k = 0; k < cfg.max_iter; ++k) {
    const Matrix half_grad = 0.5 * (Ys + Ye - observed);
    auto svt_out = svt_detail(Ys - half_grad, mu / 2.0);
    Matrix zs = std::move(svt_out.value);
    Matrix ze = soft_threshold(Ye - half_grad, lambda * mu / 2.0);

    const double z_l1 = ze.lpNorm<1>();
    const double z_fit = 0.5 * (zs + ze - observed).squaredNorm();
    const double f_z = mu * svt_out.nuclear_norm + mu * lambda * z_l1 + z_fit;
    const double f_x = mu * s_nuclear + mu * lambda * s_l1 + s_fit;
    const bool take = !cfg.monotone || k == 0 || f_z <= f_x;

    const double change = std::sqrt((zs - s).squaredNorm() + (ze - e).squaredNorm());
    const double t_next = (1.0 + std::sqrt(4.0 * t * t + 1.0)) / 2.0;
    if (take) {
      // Y = x_{k+1} + ((t_k - 1)/t_{k+1}) (x_{k+1} - x_k)
      const double beta = (t - 1.0) / t_next;
      Ys = zs + beta * (zs - s);
      Ye = ze + beta * (ze - e);
      s = std::move(zs);
      e = std::move(ze);
      s_nuclear = svt_out.nuclear_norm;
      s_l1 = z_l1;
      s_fit = z_fit;
      res.rank = svt_out.rank;
    } else {
      // Y = x_k + (t_k/t_{k+1}) (z - x_k)
      const double gamma = t / t_next;
      Ys = s + gamma * (zs - s);
      Ye = e + gamma * (ze - e);
    }
    res.objective_trajectory.push_back(mu * s_nuclear + mu * lambda * s_l1 + s_fit);
    res.floor_objective_trajectory.push_back(res.mu_floor * s_nuclear + res.mu_floor * lambda * s_l1 + s_fit);
    res.mu_trajectory.push_back(mu);

    t = t_next;
    mu = std::max(cfg.eta * mu, res.mu_floor);
    res.iterations = k + 1;
    if (change <= stop) {
      res.converged = true;
      break;
    }
  }
  // Singular values at or below the stopping resolution are not resolved by
  // the iteration; drop them so the reported rank is the numerical one.
  if (res.rank > 0) {
    Eigen::BDCSVD<Matrix> svd(s, Eigen::ComputeThinU | Eigen::ComputeThinV);
    const Vector& sigma = svd.singularValues();
    Index r = 0;
    while (r < sigma.size() && sigma(r) > stop) ++r;
    if (r < res.rank) {
      s = svd.matrixU().leftCols(r) * sigma.head(r).asDiagonal() * svd.matrixV().leftCols(r).transpose();
      res.rank = r;
    }
  }
  res.low_rank = std::move(s);
  res.sparse = std::move(e);
  res.residual = (res.low_rank + res.sparse - observed).norm();
  return res;
}

/// Output of sanitize_frame: the cleaned frame and the sparse part that was
/// removed from its feature block, for audit.
struct SanitizedFrame {
  DataFrameNorm frame;
  AttackVector estimated_attack;
  RpcaResult rpca;
};

/// Runs robust PCA on the feature block of `poisoned` (target untouched) and
/// replaces the features with the recovered low-rank part. Sparse entries with
/// magnitude at or below `support_threshold` are not reported as attack cells.
inline SanitizedFrame sanitize_frame(const DataFrameNorm& poisoned, const ApgConfig& cfg = {},
                                     double support_threshold = 1e-6) {
  SanitizedFrame out;
  out.rpca = apg_rpca(poisoned.X, cfg);
  out.frame = poisoned;
  out.frame.X = out.rpca.low_rank;
  out.estimated_attack = AttackVector::from_dense(out.rpca.sparse, support_threshold);
  return out;
}

/// Same decomposition for a bare feature matrix.
inline SanitizedFrame sanitize_matrix(const Matrix& features, const ApgConfig& cfg = {},
                                      double support_threshold = 1e-6) {
  DataFrameNorm f;
  f.X = features;
  return sanitize_frame(f, cfg, support_threshold);
}

}  // namespace poisonguard
