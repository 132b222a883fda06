// Acceptance suite. Each test ends with one line
//   [acceptance] criterion N PASS|FAIL: <summary>
// and is registered with ctest on its own.

#include <poisonguard/attack_fdi.hpp>
#include <poisonguard/attack_poison.hpp>
#include <poisonguard/bench.hpp>
#include <poisonguard/defense_apg.hpp>
#include <poisonguard/defense_trim.hpp>
#include <poisonguard/synth.hpp>

#include <gtest/gtest.h>

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <numeric>
#include <sstream>

#include "support.hpp"

using namespace poisonguard;

namespace {

using Clock = std::chrono::steady_clock;

double since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

void verdict(int criterion, bool ok, const std::string& detail) {
  std::printf("[acceptance] criterion %d %s: %s\n", criterion, ok ? "PASS" : "FAIL", detail.c_str());
  std::fflush(stdout);
  EXPECT_TRUE(ok) << detail;
}

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

/// Spearman correlation with average ranks for ties.
double spearman(const std::vector<double>& a, const std::vector<double>& b) {
  auto ranks = [](const std::vector<double>& v) {
    std::vector<std::size_t> idx(v.size());
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    std::sort(idx.begin(), idx.end(), [&](auto i, auto j) { return v[i] < v[j]; });
    std::vector<double> r(v.size());
    for (std::size_t i = 0; i < idx.size();) {
      std::size_t j = i;
      while (j + 1 < idx.size() && v[idx[j + 1]] == v[idx[i]]) ++j;
      for (std::size_t k = i; k <= j; ++k) r[idx[k]] = (static_cast<double>(i + j) / 2.0);
      i = j + 1;
    }
    return r;
  };
  const auto ra = ranks(a), rb = ranks(b);
  const Eigen::Map<const Vector> x(ra.data(), static_cast<Index>(ra.size())), y(rb.data(), static_cast<Index>(rb.size()));
  const Vector xc = x.array() - x.mean(), yc = y.array() - y.mean();
  return xc.dot(yc) / std::sqrt(xc.squaredNorm() * yc.squaredNorm());
}

RawFrame synthetic_raw(Index rows, std::uint64_t seed) {
  std::stringstream ss;
  write_synthetic_uci(ss, {rows, seed});
  return load_csv(ss, "Appliances", nullptr);
}

std::string uci_path() {
  const char* env = std::getenv("POISONGUARD_UCI_CSV");
  return env ? env : "data/energydata_complete.csv";
}

Vector random_weights(Rng& rng, Index d) {
  Vector w(d);
  for (Index j = 0; j < d; ++j) w(j) = rng.uniform(-0.4, 0.4);
  return w;
}

/// Poisoned instance with a known clean generator: 300 training rows,
/// 100 validation rows for the attacker, 2000 test rows.
struct TrimCell {
  Dataset train, validation, test;
  PoisonSet poison;
  double attack_s = 0.0;
};

TrimCell trim_cell(Learner learner, double beta, std::uint64_t seed) {
  Rng rng(seed * 7 + 1);
  const Vector w = random_weights(rng, 5);
  TrimCell c;
  c.train = pgtest::linear_dataset(rng, 300, w, 0.05);
  c.validation = pgtest::linear_dataset(rng, 100, w, 0.05);
  c.test = pgtest::linear_dataset(rng, 2000, w, 0.05);
  TrainConfig tc;
  tc.lambda = default_lambda(learner);
  const TrackedDataset tracked(c.train);
  PoisonConfig pc;
  pc.rate = beta;
  pc.seed = seed;
  const auto t0 = Clock::now();
  c.poison = run_poisoning_attack(tracked, c.validation, white_box_knowledge(tracked, learner, tc), pc);
  c.attack_s = since(t0);
  return c;
}

TrimConfig trim20(std::uint64_t seed) {
  TrimConfig cfg;
  cfg.n_clean = 300;
  cfg.seed = seed;
  cfg.restarts = 20;
  return cfg;
}

}  // namespace

TEST(Acceptance, C1_RegressionOracles) {
  const auto t0 = Clock::now();
  Rng rng(101);
  double worst_ols = 0, worst_ridge = 0;
  for (int k = 0; k < 100; ++k) {
    const Index n = 20 + static_cast<Index>(rng.below(31));
    const Index d = 3 + static_cast<Index>(rng.below(6));
    const Matrix X = pgtest::gaussian_matrix(rng, n, d);
    const Vector y = pgtest::gaussian_matrix(rng, n, 1);

    const Vector theta = pgtest::pinv_ols(X, y);
    const auto ols = fit_ols(X, y);
    Vector got(d + 1);
    got << ols.w, ols.b;
    worst_ols = std::max(worst_ols, (got - theta).norm() / theta.norm());

    const double lambda = std::exp(rng.uniform(std::log(1e-4), std::log(1.0)));
    double b = 0;
    const Vector w = pgtest::ridge_closed_form(X, y, lambda, b);
    Vector expected(d + 1);
    expected << w, b;
    const auto ridge = fit_ridge(X, y, lambda);
    got << ridge.w, ridge.b;
    worst_ridge = std::max(worst_ridge, (got - expected).norm() / expected.norm());
  }

  // Lasso: objective gap to a long subgradient run. Negative means coordinate
  // descent found a lower objective than the oracle.
  double worst_gap = -std::numeric_limits<double>::infinity(), worst_abs = 0;
  for (int k = 0; k < 20; ++k) {
    const Index n = 20 + static_cast<Index>(rng.below(31));
    const Index d = 3 + static_cast<Index>(rng.below(6));
    const Matrix X = pgtest::uniform_matrix(rng, n, d);
    const Vector y = pgtest::uniform_matrix(rng, n, 1);
    const double lambda = rng.uniform(1e-3, 0.05);
    TrainConfig cfg;
    cfg.lasso_tol = 1e-12;
    cfg.lasso_max_iter = 100000;
    const auto m = fit_lasso(X, y, lambda, cfg);
    const double gap = pgtest::lasso_objective(X, y, m.w, lambda) - pgtest::lasso_subgradient_oracle(X, y, lambda, 1000000);
    worst_gap = std::max(worst_gap, gap);
    worst_abs = std::max(worst_abs, std::abs(gap));
  }
  const double elapsed = since(t0);
  const bool ok = worst_ols <= 1e-8 && worst_ridge <= 1e-8 && worst_gap <= 1e-8 && elapsed < 10.0;
  verdict(1, ok,
          "ols max rel err " + fmt("%.2e", worst_ols) + ", ridge " + fmt("%.2e", worst_ridge) +
              ", lasso objective - oracle max " + fmt("%.2e", worst_gap) + " (max |gap| " + fmt("%.2e", worst_abs) +
              "), " + fmt("%.2f", elapsed) + " s");
}

TEST(Acceptance, C2_RpcaPlantedRecovery) {
  double worst_err = 0, worst_f1 = 1, worst_t = 0;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const auto planted = pgtest::planted_rpca(seed, 50, 2, 0.05);
    ApgConfig cfg;
    cfg.lambda = 1.0 / std::sqrt(50.0);
    const auto t0 = Clock::now();
    const auto res = apg_rpca(planted.observed(), cfg);
    worst_t = std::max(worst_t, since(t0));
    worst_err = std::max(worst_err, (res.low_rank - planted.low_rank).norm() / planted.low_rank.norm());
    worst_f1 = std::min(worst_f1, pgtest::support_f1(planted.sparse, res.sparse, 1e-3));
  }
  verdict(2, worst_err <= 1e-4 && worst_f1 >= 0.95 && worst_t < 5.0,
          "max low-rank rel err " + fmt("%.2e", worst_err) + ", min support F1 " + fmt("%.4f", worst_f1) +
              ", slowest run " + fmt("%.3f", worst_t) + " s");
}

TEST(Acceptance, C3_ApgDegradationTrend) {
  const std::vector<double> rates{0.05, 0.10, 0.15, 0.20, 0.25};
  std::vector<double> mean(rates.size(), 0.0);
  std::string per_seed;
  int seeds_at_09 = 0;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    SplitSpec split;
    split.seed = seed;
    const auto frame = normalize_split(synthetic_raw(300, seed), split);
    const Matrix X = frame.dataset(Split::train).X;
    const auto access = SensorAccessSet::by_prefix(frame, "T");
    std::vector<double> residual;
    for (double rate : rates) {
      FdiConfig fdi;
      fdi.rate = rate;
      fdi.seed = mix_seed(seed * 100 + static_cast<std::uint64_t>(std::llround(rate * 100)));
      const auto res = apg_rpca(inject(X, build_attack_vector(X, access, fdi)));
      residual.push_back((res.low_rank - X).norm() / X.norm());
    }
    for (std::size_t k = 0; k < rates.size(); ++k) mean[k] += residual[k] / 10.0;
    const double rho = spearman(rates, residual);
    seeds_at_09 += rho >= 0.9;
    per_seed += fmt(" %.1f", rho);
  }
  const double rho = spearman(rates, mean);
  std::string curve;
  for (double m : mean) curve += fmt(" %.4f", m);
  verdict(3, rho >= 0.9 && mean.back() > 0.0,
          "Spearman of 10-seed mean residual vs rate " + fmt("%.3f", rho) + ", mean residual" + curve +
              "; per-seed rho" + per_seed + " (" + std::to_string(seeds_at_09) + "/10 >= 0.9)");
}

TEST(Acceptance, C4_AttackOrdering) {
  ExperimentSpec spec;
  spec.max_rows = 2000;
  spec.rates = {0.05, 0.10, 0.15, 0.20, 0.25};
  spec.defend_apg = false;
  spec.defend_trim = false;

  auto evaluate = [&](const ExperimentResult& res, std::string& detail) {
    bool ok = !res.has_failures();
    for (auto m : spec.models) {
      double prev_ridge = -1;
      detail += std::string(" ") + to_string(m) + ":";
      for (double rate : spec.rates) {
        double clean = NAN, attacked = NAN;
        for (const auto& r : res.records)
          if (r.model == m && r.rate == rate) {
            if (r.stage == Stage::no_attack) clean = r.mse_validation;
            if (r.stage == Stage::attacked) attacked = r.mse_validation;
          }
        ok = ok && attacked > clean;
        if (m == Learner::ridge) {
          ok = ok && attacked >= prev_ridge;
          prev_ridge = attacked;
        }
        detail += fmt(" %.4g", clean) + "->" + fmt("%.4g", attacked);
      }
    }
    return ok;
  };

  // Synthetic stand-in with the same schema; informational only.
  {
    std::string detail;
    const bool ok = evaluate(run_experiment(spec, synthetic_raw(2000, 0)), detail);
    std::printf("[acceptance] criterion 4 info: synthetic proxy ordering %s;%s\n", ok ? "holds" : "violated",
                detail.c_str());
  }

  const std::string path = uci_path();
  if (!std::filesystem::exists(path)) {
    verdict(4, false, "UCI appliances file not found at " + path + " (set POISONGUARD_UCI_CSV)");
    return;
  }
  spec.dataset = path;
  std::string detail;
  const bool ok = evaluate(run_experiment(spec), detail);
  verdict(4, ok, "validation MSE clean->attacked per rate;" + detail);
}

TEST(Acceptance, C5_TrimEffectiveness) {
  int passed = 0, total = 0;
  double worst_rel = 0, worst_t = 0;
  for (auto learner : {Learner::ols, Learner::ridge, Learner::lasso})
    for (double beta : {0.1, 0.2})
      for (std::uint64_t seed = 0; seed < 10; ++seed) {
        const auto cell = trim_cell(learner, beta, seed);
        TrainConfig tc;
        tc.lambda = default_lambda(learner);
        const auto t0 = Clock::now();
        const auto out = defended_pipeline(concat(cell.train, cell.poison.dataset()), cell.test, learner, tc.lambda,
                                           trim20(seed));
        const double t = cell.attack_s + since(t0);
        const double clean = mse(predict(fit(cell.train, learner, tc), cell.test.X), cell.test.y);
        const double rel = std::abs(out.defended_mse - clean) / clean;
        const bool ok = rel <= 0.01 && out.defended_mse <= out.undefended_mse && t < 2.0;
        worst_rel = std::max(worst_rel, rel);
        worst_t = std::max(worst_t, t);
        passed += ok;
        ++total;
        if (!ok)
          std::printf("  cell %s beta=%.1f seed=%d: clean %.6g defended %.6g undefended %.6g (%.3f s)\n",
                      to_string(learner), beta, static_cast<int>(seed), clean, out.defended_mse, out.undefended_mse, t);
      }
  verdict(5, passed == total,
          std::to_string(passed) + "/" + std::to_string(total) + " cells; max rel gap to clean-only " +
              fmt("%.2e", worst_rel) + ", slowest cell " + fmt("%.3f", worst_t) + " s (TRIM restarts=20)");
}

TEST(Acceptance, C6_MonotoneInvariants) {
  int trim_runs = 0, attack_runs = 0, apg_runs = 0, apg_steps = 0, violations = 0;
  // TRIM and the poisoning attack on the criterion 5 corpus.
  for (auto learner : {Learner::ols, Learner::ridge, Learner::lasso})
    for (double beta : {0.1, 0.2})
      for (std::uint64_t seed = 0; seed < 10; ++seed) {
        const auto cell = trim_cell(learner, beta, seed);
        const auto& lf = cell.poison.loss_trajectory;
        for (std::size_t k = 1; k < lf.size(); ++k) violations += lf[k] < lf[k - 1];
        ++attack_runs;
        for (auto init : {TrimInit::elemental, TrimInit::random_subset}) {
          auto cfg = trim20(seed);
          cfg.init = init;
          const auto res = trim_fit(concat(cell.train, cell.poison.dataset()), learner, default_lambda(learner), cfg);
          const auto& tl = res.loss_trajectory;
          for (std::size_t k = 1; k < tl.size(); ++k) violations += tl[k] > tl[k - 1];
          ++trim_runs;
        }
      }
  // APG on planted problems and on FDI-attacked sensor blocks.
  auto check_apg = [&](const Matrix& m) {
    const auto res = apg_rpca(m);
    const auto& f = res.floor_objective_trajectory;
    for (std::size_t k = 1; k < f.size(); ++k)
      if (res.mu_trajectory[k - 1] == res.mu_floor) {
        ++apg_steps;
        violations += f[k] > f[k - 1];
      }
    ++apg_runs;
  };
  for (std::uint64_t seed = 0; seed < 10; ++seed) check_apg(pgtest::planted_rpca(seed, 50, 2, 0.05).observed());
  for (std::uint64_t seed = 0; seed < 3; ++seed) {
    const auto frame = normalize_split(synthetic_raw(200, seed), SplitSpec{});
    FdiConfig fdi;
    fdi.rate = 0.1;
    fdi.seed = seed;
    const Matrix X = frame.dataset(Split::train).X;
    check_apg(inject(X, build_attack_vector(X, SensorAccessSet::by_prefix(frame, "T"), fdi)));
  }
  verdict(6, violations == 0 && apg_steps > 0,
          std::to_string(violations) + " violations over " + std::to_string(trim_runs) + " TRIM runs, " +
              std::to_string(attack_runs) + " attack runs, " + std::to_string(apg_runs) + " APG runs (" +
              std::to_string(apg_steps) + " steps at the mu floor)");
}

TEST(Acceptance, C7_TrimBruteForce) {
  Rng rng(707);
  int matches = 0;
  double worst = 0;
  for (int inst = 0; inst < 50; ++inst) {
    const Vector w = random_weights(rng, 2);
    Dataset d = pgtest::linear_dataset(rng, 10, w, 0.05);
    for (Index k : rng.sample_without_replacement(10, 2)) d.y(k) = d.y(k) > 0.5 ? 0.0 : 1.0;

    double best = std::numeric_limits<double>::infinity();
    for (Index a = 0; a < 10; ++a)
      for (Index b = a + 1; b < 10; ++b) {
        std::vector<Index> keep;
        for (Index i = 0; i < 10; ++i)
          if (i != a && i != b) keep.push_back(i);
        const Dataset s = d.subset(keep);
        best = std::min(best, mse(predict(fit_ols(s.X, s.y), s.X), s.y));
      }
    TrimConfig cfg;
    cfg.n_clean = 8;
    cfg.restarts = 20;
    cfg.seed = static_cast<std::uint64_t>(inst);
    const double got = trim_fit(d, Learner::ols, 0.0, cfg).loss_trajectory.back();
    worst = std::max(worst, got - best);
    matches += std::abs(got - best) <= 1e-9;
  }
  verdict(7, matches >= 48,
          std::to_string(matches) + "/50 instances match the exhaustive optimum; largest excess " + fmt("%.2e", worst));
}

TEST(Acceptance, C8_GradientChecks) {
  Rng rng(808);
  double worst = 0;
  int passed = 0;
  for (int inst = 0; inst < 50; ++inst) {
    const Learner learner = inst % 2 ? Learner::ridge : Learner::ols;
    const Index d = 2 + static_cast<Index>(rng.below(5));
    const Vector w = random_weights(rng, d);
    const Dataset train = pgtest::linear_dataset(rng, 30 + static_cast<Index>(rng.below(40)), w, 0.05);
    const Dataset clean = pgtest::linear_dataset(rng, 40, w, 0.05);
    const Vector xc = pgtest::uniform_matrix(rng, d, 1);
    const double yc = rng.uniform();
    MomentSums sums = MomentSums::from_data(train.X, train.y);
    sums.add(xc.transpose(), yc);
    TrainConfig tc;
    tc.lambda = learner == Learner::ridge ? std::exp(rng.uniform(std::log(1e-3), std::log(1.0))) : 0.0;
    const auto model = solve(sums.centered(), learner, tc);
    const auto g = implicit_poison_gradient(xc, yc, model, sums, clean);
    ASSERT_TRUE(g.has_value());
    const auto fd = finite_difference_poison_gradient(xc, yc, sums, learner, tc, clean, 1e-5);
    Vector a(d + 1), b(d + 1);
    a << g->dx, g->dy;
    b << fd.dx, fd.dy;
    const double rel = (a - b).norm() / std::max(b.norm(), 1e-12);
    worst = std::max(worst, rel);
    passed += rel <= 1e-3;
  }
  verdict(8, passed == 50, std::to_string(passed) + "/50 within 1e-3; max rel err " + fmt("%.2e", worst));
}

TEST(Acceptance, C9_DeterministicBench) {
  namespace fs = std::filesystem;
  const fs::path dir = pgtest::temp_dir("acceptance_bench");
  std::string data = uci_path();
  const bool uci = fs::exists(data);
  if (!uci) {
    data = (dir / "energydata_synthetic.csv").string();
    std::ofstream out(data);
    write_synthetic_uci(out, {2000, 0});
  }
  {
    std::ofstream cfg(dir / "spec.json");
    cfg << R"({"max_rows": 2000, "rates": [0.01, 0.02, 0.03, 0.04, 0.05, 0.06, 0.07, 0.08, 0.09, 0.10]})";
  }

  auto run = [&](const std::string& out) {
#ifdef POISONGUARD_CLI
    const std::string cmd = std::string("\"") + POISONGUARD_CLI + "\" --config \"" + (dir / "spec.json").string() +
                            "\" --out \"" + (dir / out).string() + "\" bench --data \"" + data + "\" > \"" +
                            (dir / (out + ".log")).string() + "\" 2>&1";
    return std::system(cmd.c_str());
#else
    auto spec = spec_from_json(io::read_json((dir / "spec.json").string()));
    spec.dataset = data;
    const auto res = run_experiment(spec);
    emit_report(spec, res, (dir / out).string());
    return res.has_failures() ? 3 : 0;
#endif
  };
  const int rc1 = run("run1"), rc2 = run("run2");
  ASSERT_EQ(rc1, 0);
  ASSERT_EQ(rc2, 0);

  bool identical = true;
  for (const char* f : {"report.csv", "table1.csv", "run.json"})
    identical = identical && pgtest::slurp(dir / "run1" / f) == pgtest::slurp(dir / "run2" / f);

  std::istringstream table(pgtest::slurp(dir / "run1" / "table1.csv"));
  std::string line, row10;
  int rows = 0;
  std::getline(table, line);
  const bool header_ok = line == "rate,actual_wh,ols_clean_wh,ridge_clean_wh,lasso_clean_wh,ols,ridge,lasso";
  while (std::getline(table, line)) {
    ++rows;
    if (line.rfind("0.1,", 0) == 0) row10 = line;
  }
  std::vector<std::string> cells;
  std::istringstream rs(row10);
  for (std::string c; std::getline(rs, c, ',');) cells.push_back(c);
  bool nonzero = cells.size() == 8;
  for (std::size_t k = 5; nonzero && k < 8; ++k) nonzero = std::strtod(cells[k].c_str(), nullptr) != 0.0;

  if (cells.size() == 8)
    std::printf("[acceptance] criterion 9 info: %s data, percent change at 10%%: ols %s (reference 281.46), "
                "ridge %s (reference 263.67), lasso %s (reference 287.96)\n",
                uci ? "UCI" : "synthetic", cells[5].c_str(), cells[6].c_str(), cells[7].c_str());
  verdict(9, identical && header_ok && rows == 10 && nonzero,
          std::string(identical ? "report.csv, table1.csv and run.json byte-identical" : "outputs differ") +
              "; table1 " + std::to_string(rows) + " rates x 3 models; non-zero change at 10%: " +
              (nonzero ? "yes" : "no"));
}
