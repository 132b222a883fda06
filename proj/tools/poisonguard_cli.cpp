// poisonguard: command-line front end for the attack/defense pipeline.
//
// Each stage reads and writes a directory holding frame.csv + norm.json, so the
// stages can be chained by hand or replaced by a single `bench` run.

#include <poisonguard/attack_fdi.hpp>
#include <poisonguard/attack_poison.hpp>
#include <poisonguard/bench.hpp>
#include <poisonguard/dataset.hpp>
#include <poisonguard/defense_apg.hpp>
#include <poisonguard/defense_trim.hpp>
#include <poisonguard/io.hpp>
#include <poisonguard/regress.hpp>
#include <poisonguard/synth.hpp>

#include <CLI11.hpp>

#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

namespace fs = std::filesystem;
using namespace poisonguard;

namespace {

enum Exit { kOk = 0, kConfigError = 1, kDataError = 2, kPartialFailure = 3 };

struct Globals {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out = "out";
};

ExperimentSpec load_spec(const Globals& g) {
  ExperimentSpec spec;
  if (!g.config.empty()) {
    io::json j;
    try {
      j = io::read_json(g.config);
    } catch (const DataError& e) {
      throw InvalidArgument(std::string("config: ") + e.what());
    }
    spec = spec_from_json(j);
  }
  if (g.seed) spec.seed = *g.seed;
  spec.out_dir = g.out;
  return spec;
}

fs::path prepare_out(const Globals& g) {
  std::error_code ec;
  fs::create_directories(g.out, ec);
  if (ec) throw DataError("cannot create output directory " + g.out + ": " + ec.message());
  return fs::path(g.out);
}

DataFrameNorm read_stage(const std::string& dir) {
  const fs::path d(dir);
  return io::read_frame((d / "frame.csv").string(), (d / "norm.json").string());
}

void write_stage(const DataFrameNorm& f, const fs::path& out) {
  io::write_frame(f, (out / "frame.csv").string(), (out / "norm.json").string());
}

// Training rows of `f` with their features replaced by `X`.
void set_train_features(DataFrameNorm& f, const Matrix& X) {
  const auto rows = f.rows_in(Split::train);
  for (std::size_t k = 0; k < rows.size(); ++k) f.X.row(rows[k]) = X.row(static_cast<Index>(k));
}

double lambda_or_default(const ExperimentSpec& spec, Learner l, std::optional<double> lambda) {
  return lambda ? *lambda : spec.lambda_for(l);
}

SensorAccessSet access_set(const ExperimentSpec& spec, const DataFrameNorm& f) {
  return spec.access_columns.empty() ? SensorAccessSet::by_prefix(f, spec.access_prefix)
                                     : SensorAccessSet::by_name(f, spec.access_columns);
}

void print_mse(const LinearModel& m, const DataFrameNorm& f) {
  for (Split s : {Split::train, Split::validation, Split::test}) {
    const Dataset d = f.dataset(s);
    if (!d.empty()) std::cout << "mse_" << to_string(s) << ' ' << format_sig(mse(predict(m, d.X), d.y)) << '\n';
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Bi-level poisoning attacks and defenses for energy-consumption regression"};
  app.set_version_flag("--version", POISONGUARD_VERSION);
  app.require_subcommand(1);
  Globals g;
  app.add_option("--config", g.config, "JSON experiment spec (module settings for every subcommand)");
  app.add_option("--seed", g.seed, "Global seed (overrides the config)");
  app.add_option("--out", g.out, "Output directory")->capture_default_str();
  app.fallthrough();

  // synth
  auto* synth = app.add_subcommand("synth", "Write a synthetic CSV with the UCI appliances schema");
  SynthConfig synth_cfg;
  synth->add_option("--rows", synth_cfg.rows, "Row count")->capture_default_str();

  // ingest
  auto* ingest = app.add_subcommand("ingest", "Load a CSV, split and normalize it");
  std::string data_path;
  ingest->add_option("--data", data_path, "Input CSV")->required();

  // train
  auto* train = app.add_subcommand("train", "Fit a model on the training rows of a stage directory");
  std::string in_dir, model_name = "ridge", poison_path;
  std::optional<double> lambda;
  train->add_option("--in", in_dir, "Stage directory (frame.csv + norm.json)")->required();
  train->add_option("--model", model_name, "ols | ridge | lasso")->capture_default_str();
  train->add_option("--lambda", lambda, "Regularization strength (default per model)");
  train->add_option("--poison", poison_path, "Extra training rows from attack-poison");

  // attack-fdi
  auto* fdi = app.add_subcommand("attack-fdi", "Inject sparse false data into the training features");
  double rate = 0.05;
  fdi->add_option("--in", in_dir, "Stage directory")->required();
  fdi->add_option("--rate", rate, "Fraction of training rows to corrupt")->capture_default_str();

  // attack-poison
  auto* poison = app.add_subcommand("attack-poison", "Optimize poison points against a model");
  poison->add_option("--in", in_dir, "Stage directory")->required();
  poison->add_option("--model", model_name, "ols | ridge | lasso")->capture_default_str();
  poison->add_option("--lambda", lambda, "Regularization strength (default per model)");
  poison->add_option("--rate", rate, "Poison points as a fraction of training rows")->capture_default_str();

  // defend-apg
  auto* apg = app.add_subcommand("defend-apg", "Replace the training features with their robust-PCA low-rank part");
  apg->add_option("--in", in_dir, "Stage directory")->required();

  // defend-trim
  auto* trim = app.add_subcommand("defend-trim", "Fit with TRIM on training rows plus poison points");
  std::optional<double> beta;
  trim->add_option("--in", in_dir, "Stage directory")->required();
  trim->add_option("--poison", poison_path, "Poison CSV from attack-poison")->required();
  trim->add_option("--model", model_name, "ols | ridge | lasso")->capture_default_str();
  trim->add_option("--lambda", lambda, "Regularization strength (default per model)");
  trim->add_option("--beta", beta, "Assumed poisoning rate (default: the true poison fraction)");

  // bench
  auto* bench = app.add_subcommand("bench", "Run the full experiment grid and write the report files");
  std::optional<std::string> bench_data;
  bench->add_option("--data", bench_data, "Dataset CSV (overrides the config)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? kOk : kConfigError;
  }

  try {
    const ExperimentSpec spec = load_spec(g);

    if (*synth) {
      const fs::path out = prepare_out(g);
      synth_cfg.seed = spec.seed;
      auto file = csv::open_out((out / "energydata_synthetic.csv").string());
      write_synthetic_uci(file, synth_cfg);
      std::cout << (out / "energydata_synthetic.csv").string() << '\n';
      return kOk;
    }

    if (*ingest) {
      const RawFrame raw = detail::head(load_csv(data_path, spec.target), spec.max_rows);
      SplitSpec split = spec.split;
      split.seed = spec.seed;
      const DataFrameNorm f = normalize_split(raw, split);
      const fs::path out = prepare_out(g);
      write_stage(f, out);
      std::cout << "rows " << f.rows() << "\nrejected " << raw.rejected << "\nclipped_cells " << f.clipped_cells
                << '\n';
      for (std::size_t c = 0; c < f.columns.size(); ++c)
        if (f.constant_columns[c]) std::cout << "constant_column " << f.columns[c] << '\n';
      return kOk;
    }

    if (*train) {
      const DataFrameNorm f = read_stage(in_dir);
      const Learner learner = learner_from_string(model_name);
      TrainConfig tc = spec.train;
      tc.lambda = lambda_or_default(spec, learner, lambda);
      Dataset data = f.dataset(Split::train);
      if (!poison_path.empty()) data = concat(data, io::read_poison_csv(poison_path, f.features()).dataset());
      const LinearModel m = fit(data, learner, tc);
      io::write_json(io::to_json(m, f.columns), (prepare_out(g) / "model.json").string());
      print_mse(m, f);
      return kOk;
    }

    if (*fdi) {
      DataFrameNorm f = read_stage(in_dir);
      const Dataset tr = f.dataset(Split::train);
      FdiConfig cfg = spec.fdi;
      cfg.rate = rate;
      cfg.seed = spec.seed;
      const AttackVector local = build_attack_vector(tr.X, access_set(spec, f), cfg);
      set_train_features(f, inject(tr.X, local));
      // Report the attack in frame row coordinates.
      const auto rows = f.rows_in(Split::train);
      AttackVector global{f.rows(), f.features(), {}};
      for (const auto& e : local.entries) global.entries.push_back({rows[static_cast<std::size_t>(e.row)], e.col, e.delta});
      const fs::path out = prepare_out(g);
      write_stage(f, out);
      io::write_triplets(global, f.columns, (out / "attack.csv").string());
      std::cout << "attacked_rows " << local.touched_rows().size() << "\nattacked_cells " << local.entries.size()
                << '\n';
      return kOk;
    }

    if (*poison) {
      const DataFrameNorm f = read_stage(in_dir);
      const Learner learner = learner_from_string(model_name);
      TrainConfig tc = spec.train;
      tc.lambda = lambda_or_default(spec, learner, lambda);
      PoisonConfig cfg = spec.poison;
      cfg.rate = rate;
      cfg.seed = spec.seed;
      const TrackedDataset tr(f.dataset(Split::train));
      const Dataset val = f.dataset(Split::validation);
      cfg.poison_count = detail::count_poison(rate, tr.read().rows());
      const AttackerKnowledge k = cfg.mode == AttackMode::white_box
                                      ? white_box_knowledge(tr, learner, tc)
                                      : build_blackbox_surrogate(val, learner, tc, mix_seed(spec.seed ^ 3));
      const PoisonSet set = run_poisoning_attack(tr, val, k, cfg);
      const fs::path out = prepare_out(g);
      io::write_poison_csv(set, f.columns, f.target, (out / "poison.csv").string());
      io::write_json(io::trajectory_json(set), (out / "poison_trajectory.json").string());
      std::cout << "poison_points " << set.size() << "\nloss_start " << format_sig(set.loss_trajectory.front())
                << "\nloss_end " << format_sig(set.loss_trajectory.back()) << "\nouter_iterations "
                << set.outer_iterations << '\n';
      return kOk;
    }

    if (*apg) {
      DataFrameNorm f = read_stage(in_dir);
      const Dataset tr = f.dataset(Split::train);
      const SanitizedFrame s = sanitize_matrix(tr.X, spec.apg);
      set_train_features(f, s.frame.X);
      const auto rows = f.rows_in(Split::train);
      AttackVector estimated{f.rows(), f.features(), {}};
      for (const auto& e : s.estimated_attack.entries)
        estimated.entries.push_back({rows[static_cast<std::size_t>(e.row)], e.col, e.delta});
      const fs::path out = prepare_out(g);
      write_stage(f, out);
      io::write_triplets(estimated, f.columns, (out / "estimated_attack.csv").string());
      io::write_json(io::to_json(s.rpca), (out / "apg.json").string());
      std::cout << "iterations " << s.rpca.iterations << "\nconverged " << s.rpca.converged << "\nrank "
                << s.rpca.rank << "\nsparse_cells " << estimated.entries.size() << '\n';
      return kOk;
    }

    if (*trim) {
      const DataFrameNorm f = read_stage(in_dir);
      const Learner learner = learner_from_string(model_name);
      TrainConfig tc = spec.train;
      tc.lambda = lambda_or_default(spec, learner, lambda);
      const Dataset tr = f.dataset(Split::train);
      const Dataset all = concat(tr, io::read_poison_csv(poison_path, f.features()).dataset());
      TrimConfig cfg = spec.trim;
      cfg.seed = spec.seed;
      if (beta) cfg.beta = *beta;
      else cfg.n_clean = tr.rows();
      const DefendedOutcome r = defended_pipeline(all, f.dataset(Split::test), learner, tc.lambda, cfg, tc);
      io::write_json(io::to_json(r.trim), (prepare_out(g) / "trim.json").string());
      std::cout << "defended_mse " << format_sig(r.defended_mse) << "\nundefended_mse "
                << format_sig(r.undefended_mse) << "\nrestart " << r.trim.restart << "\niterations "
                << r.trim.iterations << '\n';
      return kOk;
    }

    if (*bench) {
      ExperimentSpec s = spec;
      if (bench_data) s.dataset = *bench_data;
      const ExperimentResult r = run_experiment(s, &std::clog);
      emit_report(s, r, s.out_dir);
      std::cout << "records " << r.records.size() << "\nconfig_hash " << r.config_hash << "\nout " << s.out_dir
                << '\n';
      return r.has_failures() ? kPartialFailure : kOk;
    }
  } catch (const InvalidArgument& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kConfigError;
  } catch (const DataError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kDataError;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kDataError;
  }
  return kOk;
}
