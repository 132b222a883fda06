#pragma once

// Experiment grid: for every (model, rate) cell, fit a clean baseline, apply
// the transit attack (FDI) and the training-set poisoning attack, then the two
// defenses (robust PCA on the stored features, TRIM on the poisoned training
// set), and record MSE, the prediction shift at a reference row, and timings.

#include <poisonguard/attack_fdi.hpp>
#include <poisonguard/attack_poison.hpp>
#include <poisonguard/common.hpp>
#include <poisonguard/csv.hpp>
#include <poisonguard/dataset.hpp>
#include <poisonguard/defense_apg.hpp>
#include <poisonguard/defense_trim.hpp>
#include <poisonguard/io.hpp>
#include <poisonguard/regress.hpp>

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <limits>
#include <map>
#include <ostream>
#include <set>
#include <string>
#include <vector>

#ifndef POISONGUARD_VERSION
#define POISONGUARD_VERSION "0.0.0"
#endif

namespace poisonguard {

/// Which training set the poisoning attacker optimizes against.
enum class PoisonBase {
  attacked,  ///< the stored, FDI-corrupted set (s_a)
  clean,     ///< the uncorrupted training rows
};

struct ExperimentSpec {
  std::string dataset;
  std::string target = "Appliances";
  Index max_rows = 0;  ///< keep only the first N rows of the file (0 = all)
  SplitSpec split;
  std::vector<Learner> models{Learner::ols, Learner::ridge, Learner::lasso};
  std::vector<double> rates{0.01, 0.02, 0.03, 0.04, 0.05, 0.06, 0.07, 0.08, 0.09, 0.10, 0.15, 0.20, 0.25};
  bool attack_fdi = true;
  bool attack_poison = true;
  bool defend_apg = true;
  bool defend_trim = true;
  double ridge_lambda = kDefaultRidgeLambda;
  double lasso_lambda = kDefaultLassoLambda;
  TrainConfig train;  ///< lasso solver settings; lambda is set per model

  std::string access_prefix = "T";
  std::vector<std::string> access_columns;  ///< overrides the prefix when non-empty
  FdiConfig fdi;                            ///< rate and seed are set per cell
  PoisonConfig poison;                      ///< rate, seed and count are set per cell
  PoisonBase poison_base = PoisonBase::attacked;
  ApgConfig apg;
  TrimConfig trim;  ///< n_clean and seed are set per cell

  double reference_wh = 580.0;
  std::uint64_t seed = 0;
  std::string out_dir = "out";

  double lambda_for(Learner l) const {
    return l == Learner::ridge ? ridge_lambda : l == Learner::lasso ? lasso_lambda : 0.0;
  }

  void validate() const {
    if (rates.empty() || models.empty()) throw InvalidArgument("empty grid");
    for (double r : rates) require(r > 0.0 && r <= 0.25, "rates must lie in (0, 0.25]");
    std::set<Learner> uniq(models.begin(), models.end());
    require(uniq.size() == models.size(), "models must not repeat");
    require(ridge_lambda >= 0.0 && lasso_lambda >= 0.0, "lambda must be non-negative");
    require(reference_wh >= 0.0, "reference_wh must be non-negative");
    require(max_rows >= 0, "max_rows must be non-negative");
    split.validate();
    train.validate();
    apg.validate();
    FdiConfig f = fdi;
    f.rate = 0.05;
    f.validate();
    PoisonConfig p = poison;
    p.rate = 0.05;
    p.validate();
    require(trim.max_iter >= 1 && trim.restarts >= 1 && trim.loss_tol >= 0.0, "invalid TRIM config");
  }
};

enum class Stage { no_attack, attacked, defended, failed };

inline const char* to_string(Stage s) {
  switch (s) {
    case Stage::no_attack: return "no-attack";
    case Stage::attacked: return "attacked";
    case Stage::defended: return "defended";
    case Stage::failed: return "failed";
  }
  return "?";
}

struct ReportRecord {
  Learner model = Learner::ols;
  double rate = 0.0;
  Stage stage = Stage::no_attack;
  double mse = 0.0;             ///< test split
  double mse_validation = 0.0;  ///< validation split (the attacker's objective set)
  double predicted_wh = 0.0;    ///< prediction at the reference row
  double percent_change = 0.0;  ///< versus the no-attack prediction at the reference row
  double feature_error = 0.0;   ///< ||X_fit - X_clean||_F / ||X_clean||_F over the original training rows
  double elapsed_attack_s = 0.0;
  double elapsed_defense_s = 0.0;
  std::uint64_t seed = 0;  ///< cell seed
  std::string config_hash;
  std::string message;  ///< error text on failure rows
};

/// Per-cell wall-clock breakdown (seconds).
struct CellTiming {
  Learner model = Learner::ols;
  double rate = 0.0;
  double fdi_s = 0.0;
  double poison_s = 0.0;
  double apg_s = 0.0;
  double trim_s = 0.0;
};

struct ExperimentResult {
  std::vector<ReportRecord> records;
  std::vector<CellTiming> timings;
  std::string config_hash;
  Index reference_row = -1;  ///< frame row used for the prediction shift
  double reference_actual_wh = 0.0;
  Index rows = 0;
  std::size_t rejected_rows = 0;

  bool has_failures() const {
    for (const auto& r : records)
      if (r.stage == Stage::failed) return true;
    return false;
  }
};

inline constexpr const char* kPercentChangeDefinition =
    "|prediction_poisoned - prediction_clean| / |prediction_clean| * 100, both in Wh at the reference test row";

/// |poisoned - clean| / |clean| * 100.
inline double percent_change(double pred_poisoned, double pred_clean) {
  if (pred_clean == 0.0) throw InvalidArgument("percent_change: clean prediction is zero");
  return std::abs(pred_poisoned - pred_clean) / std::abs(pred_clean) * 100.0;
}

// ---------------------------------------------------------------------------
// Config document

namespace detail {

using json = io::json;

inline void reject_unknown(const json& j, std::initializer_list<const char*> keys, const std::string& where) {
  if (!j.is_object()) throw InvalidArgument(where + " must be an object");
  for (const auto& [k, v] : j.items()) {
    bool known = false;
    for (const char* key : keys) known = known || k == key;
    if (!known) throw InvalidArgument("unknown config key: " + where + "." + k);
  }
}

template <class T>
void take(const json& j, const char* key, T& out) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const json::exception&) {
    throw InvalidArgument(std::string("config key has the wrong type: ") + key);
  }
}

template <class T>
void take_optional(const json& j, const char* key, std::optional<T>& out) {
  if (!j.contains(key)) return;
  if (j.at(key).is_null()) {
    out.reset();
    return;
  }
  T v{};
  take(j, key, v);
  out = v;
}

template <class T>
json optional_json(const std::optional<T>& v) {
  return v ? json(*v) : json(nullptr);
}

inline const char* to_string(SplitMode m) { return m == SplitMode::random_shuffle ? "random-shuffle" : "chronological"; }
inline const char* to_string(FdiSelection s) { return s == FdiSelection::rows ? "rows" : "cells"; }
inline const char* to_string(PoisonBase b) { return b == PoisonBase::attacked ? "attacked" : "clean"; }
inline const char* to_string(TrimInit i) { return i == TrimInit::elemental ? "elemental" : "random-subset"; }

template <class E>
E parse_enum(const std::string& s, std::initializer_list<std::pair<const char*, E>> options, const char* what) {
  for (const auto& [name, value] : options)
    if (s == name) return value;
  throw InvalidArgument(std::string("unknown ") + what + ": " + s);
}

}  // namespace detail

/// Fully resolved spec as a JSON document (every default spelled out).
inline io::json to_json(const ExperimentSpec& s) {
  using detail::optional_json;
  using json = io::json;
  json models = json::array();
  for (auto m : s.models) models.push_back(to_string(m));
  return json{
      {"dataset", s.dataset},
      {"target", s.target},
      {"max_rows", s.max_rows},
      {"split",
       {{"train", s.split.train_fraction},
        {"validation", s.split.validation_fraction},
        {"test", s.split.test_fraction},
        {"mode", detail::to_string(s.split.mode)}}},
      {"models", models},
      {"rates", s.rates},
      {"attacks", {{"fdi", s.attack_fdi}, {"poison", s.attack_poison}}},
      {"defenses", {{"apg", s.defend_apg}, {"trim", s.defend_trim}}},
      {"lambda", {{"ridge", s.ridge_lambda}, {"lasso", s.lasso_lambda}}},
      {"lasso_solver", {{"max_iter", s.train.lasso_max_iter}, {"tol", s.train.lasso_tol}}},
      {"fdi",
       {{"access_prefix", s.access_prefix},
        {"access_columns", s.access_columns},
        {"magnitude_lo", s.fdi.magnitude_lo},
        {"magnitude_hi", s.fdi.magnitude_hi},
        {"selection", detail::to_string(s.fdi.selection)}}},
      {"poison",
       {{"mode", to_string(s.poison.mode)},
        {"base", detail::to_string(s.poison_base)},
        {"tol", s.poison.tol},
        {"max_outer_iter", s.poison.max_outer_iter},
        {"optimize_response", s.poison.optimize_response},
        {"fd_step", s.poison.fd_step},
        {"line_search",
         {{"initial_step", s.poison.line_search.initial_step},
          {"shrink", s.poison.line_search.shrink},
          {"max_halvings", s.poison.line_search.max_halvings}}}}},
      {"apg",
       {{"lambda", optional_json(s.apg.lambda)},
        {"eta", s.apg.eta},
        {"mu0", optional_json(s.apg.mu0)},
        {"mu_floor", optional_json(s.apg.mu_floor)},
        {"max_iter", s.apg.max_iter},
        {"tol", s.apg.tol},
        {"monotone", s.apg.monotone}}},
      {"trim",
       {{"max_iter", s.trim.max_iter},
        {"restarts", s.trim.restarts},
        {"loss_tol", s.trim.loss_tol},
        {"include_penalty", s.trim.include_penalty},
        {"init", detail::to_string(s.trim.init)}}},
      {"reference_wh", s.reference_wh},
      {"seed", s.seed},
      {"out", s.out_dir},
  };
}

/// Overlays a config document onto `base`. Unknown keys and wrong types are
/// config errors (InvalidArgument).
inline ExperimentSpec spec_from_json(const io::json& j, ExperimentSpec s = {}) {
  using detail::take;
  using detail::take_optional;
  detail::reject_unknown(j,
                         {"dataset", "target", "max_rows", "split", "models", "rates", "attacks", "defenses", "lambda",
                          "lasso_solver", "fdi", "poison", "apg", "trim", "reference_wh", "seed", "out"},
                         "spec");
  take(j, "dataset", s.dataset);
  take(j, "target", s.target);
  take(j, "max_rows", s.max_rows);
  take(j, "rates", s.rates);
  take(j, "reference_wh", s.reference_wh);
  take(j, "seed", s.seed);
  take(j, "out", s.out_dir);
  if (j.contains("models")) {
    std::vector<std::string> names;
    take(j, "models", names);
    s.models.clear();
    for (const auto& n : names) s.models.push_back(learner_from_string(n));
  }
  if (j.contains("split")) {
    const auto& sp = j.at("split");
    detail::reject_unknown(sp, {"train", "validation", "test", "mode"}, "split");
    take(sp, "train", s.split.train_fraction);
    take(sp, "validation", s.split.validation_fraction);
    take(sp, "test", s.split.test_fraction);
    std::string mode = detail::to_string(s.split.mode);
    take(sp, "mode", mode);
    s.split.mode = detail::parse_enum<SplitMode>(
        mode, {{"random-shuffle", SplitMode::random_shuffle}, {"chronological", SplitMode::chronological}},
        "split mode");
  }
  if (j.contains("attacks")) {
    detail::reject_unknown(j.at("attacks"), {"fdi", "poison"}, "attacks");
    take(j.at("attacks"), "fdi", s.attack_fdi);
    take(j.at("attacks"), "poison", s.attack_poison);
  }
  if (j.contains("defenses")) {
    detail::reject_unknown(j.at("defenses"), {"apg", "trim"}, "defenses");
    take(j.at("defenses"), "apg", s.defend_apg);
    take(j.at("defenses"), "trim", s.defend_trim);
  }
  if (j.contains("lambda")) {
    detail::reject_unknown(j.at("lambda"), {"ridge", "lasso"}, "lambda");
    take(j.at("lambda"), "ridge", s.ridge_lambda);
    take(j.at("lambda"), "lasso", s.lasso_lambda);
  }
  if (j.contains("lasso_solver")) {
    detail::reject_unknown(j.at("lasso_solver"), {"max_iter", "tol"}, "lasso_solver");
    take(j.at("lasso_solver"), "max_iter", s.train.lasso_max_iter);
    take(j.at("lasso_solver"), "tol", s.train.lasso_tol);
  }
  if (j.contains("fdi")) {
    const auto& f = j.at("fdi");
    detail::reject_unknown(f, {"access_prefix", "access_columns", "magnitude_lo", "magnitude_hi", "selection"}, "fdi");
    take(f, "access_prefix", s.access_prefix);
    take(f, "access_columns", s.access_columns);
    take(f, "magnitude_lo", s.fdi.magnitude_lo);
    take(f, "magnitude_hi", s.fdi.magnitude_hi);
    std::string sel = detail::to_string(s.fdi.selection);
    take(f, "selection", sel);
    s.fdi.selection =
        detail::parse_enum<FdiSelection>(sel, {{"rows", FdiSelection::rows}, {"cells", FdiSelection::cells}}, "selection");
  }
  if (j.contains("poison")) {
    const auto& p = j.at("poison");
    detail::reject_unknown(p, {"mode", "base", "tol", "max_outer_iter", "optimize_response", "fd_step", "line_search"},
                           "poison");
    std::string mode = to_string(s.poison.mode), base = detail::to_string(s.poison_base);
    take(p, "mode", mode);
    take(p, "base", base);
    s.poison.mode = attack_mode_from_string(mode);
    s.poison_base = detail::parse_enum<PoisonBase>(
        base, {{"attacked", PoisonBase::attacked}, {"clean", PoisonBase::clean}}, "poison base");
    take(p, "tol", s.poison.tol);
    take(p, "max_outer_iter", s.poison.max_outer_iter);
    take(p, "optimize_response", s.poison.optimize_response);
    take(p, "fd_step", s.poison.fd_step);
    if (p.contains("line_search")) {
      const auto& ls = p.at("line_search");
      detail::reject_unknown(ls, {"initial_step", "shrink", "max_halvings"}, "poison.line_search");
      take(ls, "initial_step", s.poison.line_search.initial_step);
      take(ls, "shrink", s.poison.line_search.shrink);
      take(ls, "max_halvings", s.poison.line_search.max_halvings);
    }
  }
  if (j.contains("apg")) {
    const auto& a = j.at("apg");
    detail::reject_unknown(a, {"lambda", "eta", "mu0", "mu_floor", "max_iter", "tol", "monotone"}, "apg");
    take_optional(a, "lambda", s.apg.lambda);
    take(a, "eta", s.apg.eta);
    take_optional(a, "mu0", s.apg.mu0);
    take_optional(a, "mu_floor", s.apg.mu_floor);
    take(a, "max_iter", s.apg.max_iter);
    take(a, "tol", s.apg.tol);
    take(a, "monotone", s.apg.monotone);
  }
  if (j.contains("trim")) {
    const auto& t = j.at("trim");
    detail::reject_unknown(t, {"max_iter", "restarts", "loss_tol", "include_penalty", "init"}, "trim");
    take(t, "max_iter", s.trim.max_iter);
    take(t, "restarts", s.trim.restarts);
    take(t, "loss_tol", s.trim.loss_tol);
    take(t, "include_penalty", s.trim.include_penalty);
    std::string init = detail::to_string(s.trim.init);
    take(t, "init", init);
    s.trim.init = detail::parse_enum<TrimInit>(
        init, {{"elemental", TrimInit::elemental}, {"random-subset", TrimInit::random_subset}}, "TRIM init");
  }
  return s;
}

/// Hash of the resolved spec. The output directory is left out so moving a
/// run elsewhere keeps its identity.
inline std::string config_hash(const ExperimentSpec& s) {
  auto j = to_json(s);
  j.erase("out");
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(fnv1a(j.dump())));
  return buf;
}

/// Seed for one grid cell, derived from the global seed, the model and the rate.
inline std::uint64_t cell_seed(std::uint64_t seed, Learner model, double rate) {
  const auto basis_points = static_cast<std::uint64_t>(std::llround(rate * 10000.0));
  return mix_seed(seed ^ mix_seed(fnv1a(to_string(model)) ^ mix_seed(basis_points)));
}

// ---------------------------------------------------------------------------
// Running the grid

namespace detail {

class Stopwatch {
public:
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
  }

private:
  std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
};

inline RawFrame head(const RawFrame& f, Index n) {
  if (n <= 0 || n >= f.rows()) return f;
  RawFrame out = f;
  out.values = f.values.topRows(n);
  out.y = f.y.head(n);
  out.timestamps.resize(static_cast<std::size_t>(n));
  return out;
}

}  // namespace detail

/// Runs the grid on an already loaded frame. Module errors inside a cell turn
/// into a `failed` record and the grid carries on.
inline ExperimentResult run_experiment(const ExperimentSpec& spec, const RawFrame& raw, std::ostream* log = nullptr) {
  spec.validate();
  ExperimentResult result;
  result.config_hash = config_hash(spec);
  const RawFrame frame_raw = detail::head(raw, spec.max_rows);
  result.rows = frame_raw.rows();
  result.rejected_rows = raw.rejected;

  SplitSpec split = spec.split;
  split.seed = spec.seed;
  const DataFrameNorm frame = normalize_split(frame_raw, split);
  const Dataset train = frame.dataset(Split::train);
  const Dataset validation = frame.dataset(Split::validation);
  const Dataset test = frame.dataset(Split::test);
  if (train.rows() < 2 || validation.empty() || test.empty()) throw DataError("dataset too small for the split");

  // Reference row: the test row whose actual consumption is closest to reference_wh.
  const auto test_rows = frame.rows_in(Split::test);
  double best_gap = std::numeric_limits<double>::infinity();
  Index ref_local = 0;
  for (std::size_t k = 0; k < test_rows.size(); ++k) {
    const double gap = std::abs(frame_raw.y(test_rows[k]) - spec.reference_wh);
    if (gap < best_gap) {
      best_gap = gap;
      ref_local = static_cast<Index>(k);
    }
  }
  result.reference_row = test_rows[static_cast<std::size_t>(ref_local)];
  result.reference_actual_wh = frame_raw.y(result.reference_row);
  const Matrix ref_x = test.X.row(ref_local);

  const SensorAccessSet access = spec.access_columns.empty() ? SensorAccessSet::by_prefix(frame, spec.access_prefix)
                                                             : SensorAccessSet::by_name(frame, spec.access_columns);

  // The transit attack and its sanitizer do not depend on the learner, so they
  // are computed once per rate and shared by every model.
  struct StoredSet {
    Dataset attacked;
    Dataset sanitized;
    double fdi_s = 0.0;
    double apg_s = 0.0;
    std::string error;
  };
  std::map<double, StoredSet> stored_by_rate;
  auto stored_for = [&](double rate) -> const StoredSet& {
    auto it = stored_by_rate.find(rate);
    if (it != stored_by_rate.end()) return it->second;
    StoredSet st;
    st.attacked = train;
    try {
      detail::Stopwatch sw;
      if (spec.attack_fdi) {
        FdiConfig f = spec.fdi;
        f.rate = rate;
        f.seed = mix_seed(spec.seed ^ mix_seed(static_cast<std::uint64_t>(std::llround(rate * 10000.0))));
        st.attacked.X = inject(train.X, build_attack_vector(train.X, access, f));
      }
      st.fdi_s = sw.seconds();
      st.sanitized = st.attacked;
      if (spec.defend_apg) {
        detail::Stopwatch apg_sw;
        st.sanitized.X = apg_rpca(st.attacked.X, spec.apg).low_rank;
        st.apg_s = apg_sw.seconds();
      }
    } catch (const std::exception& e) {
      st.error = e.what();
    }
    return stored_by_rate.emplace(rate, std::move(st)).first->second;
  };
  const double clean_norm = train.X.norm();
  auto feature_error = [&](const Matrix& X) { return clean_norm > 0.0 ? (X - train.X).norm() / clean_norm : 0.0; };

  for (Learner model : spec.models) {
    for (double rate : spec.rates) {
      const std::uint64_t seed = cell_seed(spec.seed, model, rate);
      CellTiming timing{model, rate};
      auto record = [&](Stage stage) {
        ReportRecord r;
        r.model = model;
        r.rate = rate;
        r.stage = stage;
        r.seed = seed;
        r.config_hash = result.config_hash;
        return r;
      };
      if (log) *log << "cell " << to_string(model) << " rate=" << format_sig(rate) << '\n';
      std::vector<ReportRecord> cell;
      try {
        TrainConfig tc = spec.train;
        tc.lambda = spec.lambda_for(model);
        auto score = [&](const LinearModel& m, ReportRecord& r) {
          r.mse = mse(predict(m, test.X), test.y);
          r.mse_validation = mse(predict(m, validation.X), validation.y);
          r.predicted_wh = denormalize_target(predict(m, ref_x)(0), frame.target_params);
        };

        ReportRecord clean_rec = record(Stage::no_attack);
        score(fit(train, model, tc), clean_rec);

        // Level 1: the stored training features, corrupted in transit.
        const StoredSet& stored = stored_for(rate);
        if (!stored.error.empty()) throw InvalidArgument(stored.error);
        timing.fdi_s = stored.fdi_s;
        timing.apg_s = stored.apg_s;

        // Level 2: optimized poison points appended to the training set.
        PoisonSet poison;
        poison.X.resize(0, train.features());
        poison.y.resize(0);
        if (spec.attack_poison) {
          detail::Stopwatch sw;
          PoisonConfig pc = spec.poison;
          pc.rate = rate;
          pc.seed = mix_seed(seed ^ 2);
          pc.poison_count = detail::count_poison(rate, train.rows());
          if (pc.poison_count < 1) throw InvalidArgument("poisoning rate too small for the training size");
          const TrackedDataset target_set(spec.poison_base == PoisonBase::attacked ? stored.attacked : train);
          const AttackerKnowledge knowledge =
              pc.mode == AttackMode::white_box
                  ? white_box_knowledge(target_set, model, tc)
                  : build_blackbox_surrogate(validation, model, tc, mix_seed(seed ^ 3));
          poison = run_poisoning_attack(target_set, validation, knowledge, pc);
          timing.poison_s = sw.seconds();
        }

        ReportRecord attacked_rec = record(Stage::attacked);
        score(fit(concat(stored.attacked, poison.dataset()), model, tc), attacked_rec);
        attacked_rec.percent_change = percent_change(attacked_rec.predicted_wh, clean_rec.predicted_wh);
        attacked_rec.feature_error = feature_error(stored.attacked.X);
        attacked_rec.elapsed_attack_s = timing.fdi_s + timing.poison_s;

        // Defenses: robust PCA already replaced the stored features; trim the poisoned set.
        const Dataset defended_set = concat(stored.sanitized, poison.dataset());
        LinearModel defended_model;
        if (spec.defend_trim) {
          detail::Stopwatch sw;
          TrimConfig trim = spec.trim;
          trim.n_clean = train.rows();
          trim.seed = mix_seed(seed ^ 4);
          defended_model = trim_fit(defended_set, model, tc.lambda, trim, tc).model;
          timing.trim_s = sw.seconds();
        } else {
          defended_model = fit(defended_set, model, tc);
        }
        ReportRecord defended_rec = record(Stage::defended);
        score(defended_model, defended_rec);
        defended_rec.percent_change = percent_change(defended_rec.predicted_wh, clean_rec.predicted_wh);
        defended_rec.feature_error = feature_error(stored.sanitized.X);
        defended_rec.elapsed_attack_s = attacked_rec.elapsed_attack_s;
        defended_rec.elapsed_defense_s = timing.apg_s + timing.trim_s;

        cell = {clean_rec, attacked_rec, defended_rec};
      } catch (const std::exception& e) {
        ReportRecord r = record(Stage::failed);
        r.mse = r.mse_validation = r.predicted_wh = r.percent_change = r.feature_error =
            std::numeric_limits<double>::quiet_NaN();
        r.message = e.what();
        if (log) *log << "  failed: " << e.what() << '\n';
        cell = {r};
      }
      result.records.insert(result.records.end(), cell.begin(), cell.end());
      result.timings.push_back(timing);
    }
  }
  return result;
}

/// Loads the dataset named in the spec and runs the grid.
inline ExperimentResult run_experiment(const ExperimentSpec& spec, std::ostream* log = nullptr) {
  spec.validate();
  if (spec.dataset.empty()) throw InvalidArgument("spec has no dataset path");
  const RawFrame raw = load_csv(spec.dataset, spec.target, log);
  return run_experiment(spec, raw, log);
}

// ---------------------------------------------------------------------------
// Report files

/// report.csv column order. Timings are kept in timing.csv so that this file
/// is byte-identical across runs with the same spec and seed.
inline const std::vector<std::string>& report_columns() {
  static const std::vector<std::string> cols{"model",          "rate",         "stage", "mse",
                                             "mse_validation", "predicted_wh", "percent_change",
                                             "feature_error",  "seed",         "config_hash",  "message"};
  return cols;
}

inline void write_report_csv(std::ostream& out, const std::vector<ReportRecord>& records) {
  csv::write_record(out, report_columns());
  for (const auto& r : records)
    csv::write_record(out, {to_string(r.model), format_sig(r.rate), to_string(r.stage), format_sig(r.mse),
                            format_sig(r.mse_validation), format_sig(r.predicted_wh), format_sig(r.percent_change),
                            format_sig(r.feature_error), std::to_string(r.seed), r.config_hash, r.message});
}

/// Percent change of the attacked stage, one row per rate and one column per model.
inline void write_table1_csv(std::ostream& out, const std::vector<ReportRecord>& records, double actual_wh) {
  std::vector<Learner> models;
  std::vector<double> rates;
  std::map<std::pair<double, Learner>, double> change;
  std::map<Learner, double> clean_wh;
  for (const auto& r : records) {
    if (std::find(models.begin(), models.end(), r.model) == models.end()) models.push_back(r.model);
    if (std::find(rates.begin(), rates.end(), r.rate) == rates.end()) rates.push_back(r.rate);
    if (r.stage == Stage::attacked) change[{r.rate, r.model}] = r.percent_change;
    if (r.stage == Stage::no_attack && !clean_wh.count(r.model)) clean_wh[r.model] = r.predicted_wh;
  }
  std::sort(rates.begin(), rates.end());
  std::vector<std::string> header{"rate", "actual_wh"};
  for (auto m : models) header.push_back(std::string(to_string(m)) + "_clean_wh");
  for (auto m : models) header.emplace_back(to_string(m));
  csv::write_record(out, header);
  for (double rate : rates) {
    std::vector<std::string> rec{format_sig(rate), format_sig(actual_wh)};
    for (auto m : models) rec.push_back(clean_wh.count(m) ? format_sig(clean_wh[m]) : "");
    for (auto m : models) {
      auto it = change.find({rate, m});
      rec.push_back(it == change.end() ? "" : format_sig(it->second));
    }
    csv::write_record(out, rec);
  }
}

/// Seconds at millisecond resolution.
inline std::string format_ms(double seconds) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3f", seconds);
  return buf;
}

inline void write_timing_csv(std::ostream& out, const std::vector<CellTiming>& timings) {
  csv::write_record(out, {"model", "rate", "fdi_s", "poison_s", "apg_s", "trim_s"});
  for (const auto& t : timings)
    csv::write_record(out, {to_string(t.model), format_sig(t.rate), format_ms(t.fdi_s), format_ms(t.poison_s),
                            format_ms(t.apg_s), format_ms(t.trim_s)});
}

/// run.json body. The output directory is left out, as in the config hash, so
/// the same spec yields the same file wherever it is written.
inline io::json run_json(const ExperimentSpec& spec, const ExperimentResult& result) {
  auto resolved = to_json(spec);
  resolved.erase("out");
  return {{"version", POISONGUARD_VERSION},
          {"config_hash", result.config_hash},
          {"spec", std::move(resolved)},
          {"percent_change", kPercentChangeDefinition},
          {"reference", {{"row", result.reference_row}, {"actual_wh", result.reference_actual_wh}}},
          {"dataset", {{"rows", result.rows}, {"rejected_rows", result.rejected_rows}}},
          {"report_columns", report_columns()},
          {"failures", result.has_failures()}};
}

/// Writes report.csv, table1.csv, timing.csv and run.json into `dir`.
inline void emit_report(const ExperimentSpec& spec, const ExperimentResult& result, const std::string& dir) {
  require(!result.records.empty(), "emit_report: no records");
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw DataError("cannot create output directory " + dir + ": " + ec.message());
  const std::filesystem::path base(dir);
  {
    auto out = csv::open_out((base / "report.csv").string());
    write_report_csv(out, result.records);
  }
  {
    auto out = csv::open_out((base / "table1.csv").string());
    write_table1_csv(out, result.records, result.reference_actual_wh);
  }
  {
    auto out = csv::open_out((base / "timing.csv").string());
    write_timing_csv(out, result.timings);
  }
  io::write_json(run_json(spec, result), (base / "run.json").string());
}

}  // namespace poisonguard
