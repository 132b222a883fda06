#pragma once

#include <poisonguard/common.hpp>
#include <poisonguard/regress.hpp>

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <vector>

namespace poisonguard {

enum class TrimInit {
  random_subset,  ///< uniform random subset of size n
  elemental,      ///< n lowest-residual rows under a fit on d+1 random rows
};

struct TrimConfig {
  Index n_clean = 0;            ///< rows assumed legitimate; derived from beta when 0
  std::optional<double> beta;   ///< poisoning rate p/n, used when n_clean is 0
  int max_iter = 100;
  int restarts = 5;
  std::uint64_t seed = 0;
  double loss_tol = 1e-9;
  bool include_penalty = true;  ///< trimmed loss = learner objective (MSE + penalty) on the subset
  TrimInit init = TrimInit::elemental;

  /// n such that n + beta*n = total (rounded), or the explicit n_clean.
  Index resolve_clean_count(Index total) const {
    if (n_clean > 0) return n_clean;
    require(beta.has_value(), "TRIM: set n_clean or beta");
    require(*beta >= 0.0, "TRIM: beta must be non-negative");
    return static_cast<Index>(std::llround(static_cast<double>(total) / (1.0 + *beta)));
  }

  void validate(Index total) const {
    const Index n = resolve_clean_count(total);
    require(n > 0 && n <= total, "TRIM: n_clean out of range");
    require(max_iter >= 1, "TRIM: max_iter must be >= 1");
    require(restarts >= 1, "TRIM: restarts must be >= 1");
    require(loss_tol >= 0.0, "TRIM: loss_tol must be non-negative");
  }
};

struct TrimResult {
  LinearModel model;
  std::vector<Index> selected;        ///< ascending row indices, |selected| = n_clean
  std::vector<double> loss_trajectory;  ///< trimmed loss per iteration of the winning restart
  bool converged = false;
  int iterations = 0;
  int restart = 0;
};

inline double trimmed_loss(const LinearModel& model, const Dataset& subset, bool include_penalty) {
  const double fit_term = mse(predict(model, subset.X), subset.y);
  return include_penalty ? fit_term + model.penalty() : fit_term;
}

/// Indices of the n rows with the smallest squared residual, ties broken by
/// ascending row index, returned in ascending order.
inline std::vector<Index> lowest_residual_rows(const LinearModel& model, const Dataset& data, Index n) {
  const Vector r2 = (predict(model, data.X) - data.y).array().square();
  std::vector<Index> order(static_cast<std::size_t>(data.rows()));
  std::iota(order.begin(), order.end(), Index{0});
  std::sort(order.begin(), order.end(), [&](Index a, Index b) { return r2(a) < r2(b) || (r2(a) == r2(b) && a < b); });
  order.resize(static_cast<std::size_t>(n));
  std::sort(order.begin(), order.end());
  return order;
}

/// Trimmed regression: from a size-n starting subset (see TrimInit), alternate
/// between keeping the n rows with the lowest residuals and refitting on them,
/// until the trimmed loss stops changing. Best restart (lowest loss, then
/// lowest index) wins.
inline TrimResult trim_fit(const Dataset& data, Learner learner, double lambda, const TrimConfig& cfg,
                           TrainConfig train = {}) {
  require(!data.empty(), "TRIM: empty data");
  cfg.validate(data.rows());
  train.lambda = learner == Learner::ols ? 0.0 : lambda;
  const Index n = cfg.resolve_clean_count(data.rows());

  std::optional<TrimResult> best;
  for (int restart = 0; restart < cfg.restarts; ++restart) {
    Rng rng(mix_seed(cfg.seed ^ mix_seed(static_cast<std::uint64_t>(restart))));
    std::vector<Index> subset;
    if (cfg.init == TrimInit::elemental && data.features() + 1 < n) {
      auto seed_rows = rng.sample_without_replacement(data.rows(), data.features() + 1);
      std::sort(seed_rows.begin(), seed_rows.end());
      subset = lowest_residual_rows(fit(data.subset(seed_rows), learner, train), data, n);
    } else {
      subset = rng.sample_without_replacement(data.rows(), n);
      std::sort(subset.begin(), subset.end());
    }

    TrimResult run;
    run.restart = restart;
    run.selected = subset;
    run.model = fit(data.subset(subset), learner, train);
    run.loss_trajectory.push_back(trimmed_loss(run.model, data.subset(subset), cfg.include_penalty));

    for (int it = 1; it <= cfg.max_iter; ++it) {
      auto next = lowest_residual_rows(run.model, data, n);
      const Dataset chosen = data.subset(next);
      LinearModel model = fit(chosen, learner, train);
      const double loss = trimmed_loss(model, chosen, cfg.include_penalty);
      const double prev = run.loss_trajectory.back();
      run.iterations = it;
      if (loss > prev) {
        // Only rounding can get here (both steps are descent steps); keep the
        // previous iterate so the trajectory stays non-increasing.
        run.converged = true;
        break;
      }
      run.selected = std::move(next);
      run.model = std::move(model);
      run.loss_trajectory.push_back(loss);
      if (std::abs(prev - loss) <= cfg.loss_tol) {
        run.converged = true;
        break;
      }
    }
    if (!best || run.loss_trajectory.back() < best->loss_trajectory.back()) best = std::move(run);
  }
  return *best;
}

struct DefendedOutcome {
  TrimResult trim;
  double defended_mse = 0.0;
  double undefended_mse = 0.0;
};

/// Test MSE of the TRIM-defended model next to the model fit on everything.
inline DefendedOutcome defended_pipeline(const Dataset& poisoned_train, const Dataset& test, Learner learner,
                                         double lambda, const TrimConfig& cfg, TrainConfig train = {}) {
  require(!test.empty(), "defended_pipeline: empty test set");
  DefendedOutcome out;
  out.trim = trim_fit(poisoned_train, learner, lambda, cfg, train);
  train.lambda = learner == Learner::ols ? 0.0 : lambda;
  const LinearModel undefended = fit(poisoned_train, learner, train);
  out.defended_mse = mse(predict(out.trim.model, test.X), test.y);
  out.undefended_mse = mse(predict(undefended, test.X), test.y);
  return out;
}

}  // namespace poisonguard
