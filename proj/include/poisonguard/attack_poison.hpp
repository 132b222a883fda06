#pragma once

#include <poisonguard/common.hpp>
#include <poisonguard/regress.hpp>

#include <algorithm>
#include <cmath>
#include <memory>
#include <optional>
#include <vector>

namespace poisonguard {

enum class AttackMode { white_box, black_box };

inline const char* to_string(AttackMode m) { return m == AttackMode::white_box ? "white-box" : "black-box"; }

inline AttackMode attack_mode_from_string(const std::string& s) {
  if (s == "white-box" || s == "white") return AttackMode::white_box;
  if (s == "black-box" || s == "black") return AttackMode::black_box;
  throw InvalidArgument("unknown attack mode: " + s);
}

struct LineSearchConfig {
  double initial_step = 0.05;
  double shrink = 0.5;
  int max_halvings = 10;
};

struct PoisonConfig {
  double rate = 0.10;           ///< beta: poison points as a fraction of the training rows
  double tol = 1e-6;            ///< stop when one outer sweep changes the clean loss by less
  int max_outer_iter = 50;
  LineSearchConfig line_search;
  AttackMode mode = AttackMode::white_box;
  std::uint64_t seed = 0;
  bool optimize_response = false;  ///< also move y_c along the gradient (x only by default)
  Index poison_count = 0;          ///< overrides floor(rate * n) when > 0
  double fd_step = 1e-5;

  void validate() const {
    require(rate > 0.0 && rate <= 0.25, "poisoning rate must be in (0, 0.25]");
    require(tol > 0.0, "poisoning tolerance must be positive");
    require(max_outer_iter >= 1, "max_outer_iter must be >= 1");
    require(line_search.initial_step > 0.0 && line_search.shrink > 0.0 && line_search.shrink < 1.0 &&
                line_search.max_halvings >= 0,
            "invalid line search config");
    require(fd_step > 0.0, "fd_step must be positive");
  }
};

/// Poison points S_p with their initialization record and the attack's
/// clean-loss trajectory (one value before the first sweep, one per sweep).
struct PoisonSet {
  Matrix X;
  Vector y;
  std::vector<Index> source_rows;  ///< training row each point was initialized from
  std::vector<double> loss_trajectory;
  int outer_iterations = 0;
  int fd_fallbacks = 0;
  bool converged = false;

  Index size() const { return X.rows(); }
  Dataset dataset() const { return Dataset{X, y}; }
};

/// A dataset handle that counts how often its rows are read.
class TrackedDataset {
public:
  explicit TrackedDataset(Dataset data) : data_(std::move(data)) {}

  const Dataset& read() const {
    ++reads_;
    return data_;
  }
  std::size_t reads() const { return reads_; }

private:
  Dataset data_;
  mutable std::size_t reads_ = 0;
};

/// What the attacker knows: the learner, its hyperparameters, and either the
/// real training set (white-box) or a surrogate sample (black-box).
struct AttackerKnowledge {
  AttackMode mode = AttackMode::white_box;
  Learner learner = Learner::ridge;
  TrainConfig train;
  std::shared_ptr<const TrackedDataset> surrogate;  ///< black-box only
  LinearModel parameters;                           ///< known or estimated gamma
};

inline AttackerKnowledge white_box_knowledge(const TrackedDataset& train, Learner learner, const TrainConfig& cfg) {
  AttackerKnowledge k;
  k.mode = AttackMode::white_box;
  k.learner = learner;
  k.train = cfg;
  k.parameters = fit(train.read(), learner, cfg);
  return k;
}

/// Samples `size` rows (all rows when 0) from a pool disjoint from the
/// defender's training data and estimates gamma on them.
inline AttackerKnowledge build_blackbox_surrogate(const Dataset& pool, Learner learner, const TrainConfig& cfg,
                                                  std::uint64_t seed, Index size = 0) {
  require(pool.rows() >= 50, "surrogate pool too small (need at least 50 rows)");
  const Index k = size > 0 ? std::min(size, pool.rows()) : pool.rows();
  Rng rng(seed);
  auto rows = rng.sample_without_replacement(pool.rows(), k);
  AttackerKnowledge out;
  out.mode = AttackMode::black_box;
  out.learner = learner;
  out.train = cfg;
  out.surrogate = std::make_shared<const TrackedDataset>(pool.subset(rows));
  out.parameters = fit(out.surrogate->read(), learner, cfg);
  return out;
}

/// Samples p distinct training rows and flips their responses (y -> 1 - y).
inline PoisonSet init_poison_points(const Dataset& train, Index p, std::uint64_t seed) {
  require(!train.empty(), "init_poison_points: empty training set");
  require(p >= 1, "init_poison_points: need at least one poison point");
  require(p < train.rows(), "init_poison_points: poison count must stay below the training size");
  Rng rng(seed);
  PoisonSet s;
  s.source_rows = rng.sample_without_replacement(train.rows(), p);
  s.X.resize(p, train.features());
  s.y.resize(p);
  for (Index k = 0; k < p; ++k) {
    const Index r = s.source_rows[static_cast<std::size_t>(k)];
    s.X.row(k) = train.X.row(r).cwiseMax(0.0).cwiseMin(1.0);
    s.y(k) = std::clamp(1.0 - train.y(r), 0.0, 1.0);
  }
  return s;
}

/// LF: mean squared error of the model on the untainted set.
inline double loss_on_clean(const LinearModel& model, const Dataset& clean) {
  require(!clean.empty(), "loss_on_clean: empty clean set");
  return mse(predict(model, clean.X), clean.y);
}

struct PoisonGradient {
  Vector dx;
  double dy = 0.0;
  bool finite_difference = false;
};

namespace detail {

/// Retrains on the data summarized by `sums`, with point `c` replaced by (x, y).
struct PoisonedProblem {
  MomentSums sums;
  Learner learner;
  TrainConfig train;

  LinearModel retrain(const Vector* warm = nullptr) const { return solve(sums.centered(), learner, train, warm); }

  LinearModel retrain_with(const Vector& old_x, double old_y, const Vector& x, double y,
                           const Vector* warm = nullptr) const {
    MomentSums s = sums;
    s.add(old_x.transpose(), old_y, -1.0);
    s.add(x.transpose(), y, 1.0);
    return solve(s.centered(), learner, train, warm);
  }
};

inline Index count_poison(double rate, Index n) {
  return static_cast<Index>(std::floor(rate * static_cast<double>(n) + 1e-9));
}

inline std::vector<Index> active_set(const LinearModel& m) {
  std::vector<Index> a;
  for (Index j = 0; j < m.w.size(); ++j)
    if (m.kind != Learner::lasso || m.w(j) != 0.0) a.push_back(j);
  return a;
}

}  // namespace detail

/// dLF/d(x_c, y_c) through the retrained parameters, by implicit
/// differentiation of the learner's stationarity conditions
///   [Sxx/n + lambda*I, mean_x; mean_x', 1] [dw; db] = -(1/n) d(r_c [x_c; 1])
/// For lasso only the nonzero coordinates move (active-set approximation).
/// Returns nullopt when the system is singular.
inline std::optional<PoisonGradient> implicit_poison_gradient(const Vector& xc, double yc, const LinearModel& model,
                                                              const MomentSums& sums, const Dataset& clean) {
  const auto active = detail::active_set(model);
  const auto k = static_cast<Index>(active.size());
  const double n = static_cast<double>(sums.n);
  const Vector mean_x = sums.x / n;

  Matrix M(k + 1, k + 1);
  for (Index a = 0; a < k; ++a) {
    for (Index b = 0; b < k; ++b) M(a, b) = sums.xx(active[a], active[b]) / n;
    if (model.kind == Learner::ridge) M(a, a) += model.lambda;
    M(a, k) = M(k, a) = mean_x(active[a]);
  }
  M(k, k) = 1.0;

  const Vector err = predict(model, clean.X) - clean.y;
  const double m = static_cast<double>(clean.rows());
  const Vector dlf_dw = (2.0 / m) * (clean.X.transpose() * err);
  Vector rhs(k + 1);
  for (Index a = 0; a < k; ++a) rhs(a) = dlf_dw(active[a]);
  rhs(k) = (2.0 / m) * err.sum();

  Eigen::FullPivLU<Matrix> lu(M);
  if (!lu.isInvertible()) return std::nullopt;
  const Vector v = lu.solve(rhs);

  const double rc = model.w.dot(xc) + model.b - yc;
  double xv = 0.0;
  Vector scattered = Vector::Zero(xc.size());
  for (Index a = 0; a < k; ++a) {
    xv += xc(active[a]) * v(a);
    scattered(active[a]) = v(a);
  }
  PoisonGradient g;
  g.dx = -(rc * scattered + model.w * (xv + v(k))) / n;
  g.dy = (xv + v(k)) / n;
  return g;
}

/// Central finite differences of LF with respect to (x_c, y_c).
inline PoisonGradient finite_difference_poison_gradient(const Vector& xc, double yc, const MomentSums& sums,
                                                        Learner learner, const TrainConfig& train,
                                                        const Dataset& clean, double h, const Vector* warm = nullptr) {
  detail::PoisonedProblem prob{sums, learner, train};
  auto lf = [&](const Vector& x, double y) { return loss_on_clean(prob.retrain_with(xc, yc, x, y, warm), clean); };
  PoisonGradient g;
  g.finite_difference = true;
  g.dx.resize(xc.size());
  for (Index j = 0; j < xc.size(); ++j) {
    Vector xp = xc, xm = xc;
    xp(j) += h;
    xm(j) -= h;
    g.dx(j) = (lf(xp, yc) - lf(xm, yc)) / (2.0 * h);
  }
  g.dy = (lf(xc, yc + h) - lf(xc, yc - h)) / (2.0 * h);
  return g;
}

/// Gradient of the clean loss with respect to one poison point. `model` must be
/// the optimum of the learner on the data summarized by `sums` (which includes
/// the point). Falls back to finite differences when the implicit system is singular.
inline PoisonGradient poison_gradient(const Vector& xc, double yc, const LinearModel& model, const MomentSums& sums,
                                      const Dataset& clean, const TrainConfig& train, double fd_step = 1e-5) {
  if (auto g = implicit_poison_gradient(xc, yc, model, sums, clean)) return *g;
  return finite_difference_poison_gradient(xc, yc, sums, model.kind, train, clean, fd_step, &model.w);
}

/// Optimization-based poisoning: alternately moves each poison point by a
/// projected backtracking ascent step on the clean loss and retrains. A step is
/// kept only if it increases the clean loss, so the trajectory is non-decreasing.
/// In black-box mode the true training set is never read; the surrogate in
/// `knowledge` stands in for it.
inline PoisonSet run_poisoning_attack(const TrackedDataset& train, const Dataset& clean_validation,
                                      const AttackerKnowledge& knowledge, const PoisonConfig& cfg) {
  cfg.validate();
  require(knowledge.mode == cfg.mode, "attacker knowledge does not match the attack mode");
  require(cfg.mode == AttackMode::white_box || knowledge.surrogate, "black-box attack needs a surrogate dataset");
  const Dataset& base = cfg.mode == AttackMode::white_box ? train.read() : knowledge.surrogate->read();
  require(!base.empty(), "run_poisoning_attack: empty training set");
  require(clean_validation.features() == base.features(), "run_poisoning_attack: feature count mismatch");

  const Index p = cfg.poison_count > 0 ? cfg.poison_count : detail::count_poison(cfg.rate, base.rows());
  detail::PoisonedProblem prob{MomentSums::from_data(base.X, base.y), knowledge.learner, knowledge.train};
  prob.train.lambda = knowledge.learner == Learner::ols ? 0.0 : knowledge.train.lambda;

  PoisonSet set;
  if (p == 0) {
    set.X.resize(0, base.features());
    set.y.resize(0);
    set.loss_trajectory.push_back(loss_on_clean(prob.retrain(), clean_validation));
    set.converged = true;
    return set;
  }
  set = init_poison_points(base, p, cfg.seed);
  for (Index c = 0; c < p; ++c) prob.sums.add(set.X.row(c), set.y(c));

  LinearModel model = prob.retrain(&knowledge.parameters.w);
  double lf = loss_on_clean(model, clean_validation);
  set.loss_trajectory.push_back(lf);

  const double lo = 0.0, hi = 1.0;
  for (int iter = 0; iter < cfg.max_outer_iter; ++iter) {
    const double lf_start = lf;
    for (Index c = 0; c < p; ++c) {
      const Vector xc = set.X.row(c).transpose();
      const double yc = set.y(c);

      enum class Step { moved, stalled, stalled_active_change };
      auto try_direction = [&](const PoisonGradient& g) {
        Vector dir = g.dx;
        double dir_y = cfg.optimize_response ? g.dy : 0.0;
        const double norm = std::sqrt(dir.squaredNorm() + dir_y * dir_y);
        if (!(norm > 0.0) || !std::isfinite(norm)) return Step::stalled;
        dir /= norm;
        dir_y /= norm;
        const auto active = detail::active_set(model);
        bool active_changed = false;
        double step = cfg.line_search.initial_step;
        for (int h = 0; h <= cfg.line_search.max_halvings; ++h, step *= cfg.line_search.shrink) {
          const Vector cand = (xc + step * dir).cwiseMax(lo).cwiseMin(hi);
          const double cand_y = std::clamp(yc + step * dir_y, lo, hi);
          if (cand == xc && cand_y == yc) break;
          LinearModel trial = prob.retrain_with(xc, yc, cand, cand_y, &model.w);
          const double lf_trial = loss_on_clean(trial, clean_validation);
          if (lf_trial > lf) {
            prob.sums.add(xc.transpose(), yc, -1.0);
            prob.sums.add(cand.transpose(), cand_y, 1.0);
            set.X.row(c) = cand.transpose();
            set.y(c) = cand_y;
            model = std::move(trial);
            lf = lf_trial;
            return Step::moved;
          }
          active_changed = active_changed || detail::active_set(trial) != active;
        }
        return active_changed ? Step::stalled_active_change : Step::stalled;
      };

      PoisonGradient g = poison_gradient(xc, yc, model, prob.sums, clean_validation, prob.train, cfg.fd_step);
      if (g.finite_difference) ++set.fd_fallbacks;
      // The active-set gradient is only valid while the lasso support stays put.
      if (try_direction(g) == Step::stalled_active_change && !g.finite_difference) {
        ++set.fd_fallbacks;
        try_direction(finite_difference_poison_gradient(xc, yc, prob.sums, prob.learner, prob.train,
                                                        clean_validation, cfg.fd_step, &model.w));
      }
    }
    set.loss_trajectory.push_back(lf);
    set.outer_iterations = iter + 1;
    if (std::abs(lf - lf_start) < cfg.tol) {
      set.converged = true;
      break;
    }
  }
  return set;
}

}  // namespace poisonguard
