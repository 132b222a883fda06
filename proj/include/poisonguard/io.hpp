#pragma once

// On-disk artifacts shared by the CLI stages. Numbers in CSV files are written
// in shortest round-trip form so a stage can reload exactly what the previous
// one produced.

#include <poisonguard/attack_fdi.hpp>
#include <poisonguard/attack_poison.hpp>
#include <poisonguard/common.hpp>
#include <poisonguard/csv.hpp>
#include <poisonguard/dataset.hpp>
#include <poisonguard/defense_apg.hpp>
#include <poisonguard/defense_trim.hpp>
#include <poisonguard/regress.hpp>

#include <json.hpp>

#include <fstream>
#include <string>
#include <vector>

namespace poisonguard::io {

using json = nlohmann::ordered_json;

inline json to_json(const NormalizationParams& p) { return {{"min", p.min}, {"max", p.max}}; }

inline NormalizationParams params_from_json(const json& j) {
  return {j.at("min").get<double>(), j.at("max").get<double>()};
}

/// Normalization sidecar: column names, per-column (min, max), constant flags, clip count.
inline json norm_json(const DataFrameNorm& f) {
  json cols = json::array();
  for (std::size_t c = 0; c < f.columns.size(); ++c) {
    json e = to_json(f.feature_params[c]);
    e["name"] = f.columns[c];
    e["constant"] = static_cast<bool>(f.constant_columns[c]);
    cols.push_back(std::move(e));
  }
  return {{"target", f.target},
          {"target_params", to_json(f.target_params)},
          {"features", std::move(cols)},
          {"clipped_cells", f.clipped_cells}};
}

/// frame.csv: `split,<features...>,<target>`, one row per observation.
inline void write_frame(const DataFrameNorm& f, const std::string& csv_path, const std::string& norm_path) {
  auto out = csv::open_out(csv_path);
  std::vector<std::string> rec{"split"};
  rec.insert(rec.end(), f.columns.begin(), f.columns.end());
  rec.push_back(f.target);
  csv::write_record(out, rec);
  for (Index r = 0; r < f.rows(); ++r) {
    rec.clear();
    rec.emplace_back(to_string(f.split[static_cast<std::size_t>(r)]));
    for (Index c = 0; c < f.features(); ++c) rec.push_back(format_exact(f.X(r, c)));
    rec.push_back(format_exact(f.y(r)));
    csv::write_record(out, rec);
  }
  auto norm = csv::open_out(norm_path);
  norm << norm_json(f).dump(2) << '\n';
}

inline json read_json(const std::string& path) {
  auto in = csv::open_in(path);
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw DataError(path + ": " + e.what());
  }
}

inline void write_json(const json& j, const std::string& path) {
  auto out = csv::open_out(path);
  out << j.dump(2) << '\n';
}

inline DataFrameNorm read_frame(const std::string& csv_path, const std::string& norm_path) {
  const json norm = read_json(norm_path);
  DataFrameNorm f;
  try {
    f.target = norm.at("target").get<std::string>();
    f.target_params = params_from_json(norm.at("target_params"));
    for (const auto& c : norm.at("features")) {
      f.columns.push_back(c.at("name").get<std::string>());
      f.feature_params.push_back(params_from_json(c));
      f.constant_columns.push_back(c.at("constant").get<bool>());
    }
    f.clipped_cells = norm.at("clipped_cells").get<std::size_t>();
  } catch (const json::exception& e) {
    throw DataError(norm_path + ": " + e.what());
  }

  auto in = csv::open_in(csv_path);
  std::vector<std::string> rec;
  if (!csv::read_record(in, rec) || rec.size() != f.columns.size() + 2 || rec.front() != "split" ||
      rec.back() != f.target)
    throw DataError(csv_path + ": header does not match " + norm_path);
  std::vector<std::vector<double>> rows;
  std::vector<double> ys;
  while (csv::read_record(in, rec)) {
    if (rec.size() == 1 && rec[0].empty()) continue;
    if (rec.size() != f.columns.size() + 2) throw DataError(csv_path + ": bad record arity");
    f.split.push_back(split_from_string(rec[0]));
    std::vector<double> row(f.columns.size());
    for (std::size_t c = 0; c < row.size(); ++c)
      if (!parse_double(rec[c + 1], row[c])) throw DataError(csv_path + ": bad number '" + rec[c + 1] + "'");
    double yv = 0.0;
    if (!parse_double(rec.back(), yv)) throw DataError(csv_path + ": bad number '" + rec.back() + "'");
    rows.push_back(std::move(row));
    ys.push_back(yv);
  }
  f.X.resize(static_cast<Index>(rows.size()), static_cast<Index>(f.columns.size()));
  f.y.resize(static_cast<Index>(ys.size()));
  for (std::size_t r = 0; r < rows.size(); ++r) {
    for (std::size_t c = 0; c < rows[r].size(); ++c) f.X(static_cast<Index>(r), static_cast<Index>(c)) = rows[r][c];
    f.y(static_cast<Index>(r)) = ys[r];
  }
  return f;
}

inline json to_json(const Vector& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

inline Vector vector_from_json(const json& j) {
  const auto v = j.get<std::vector<double>>();
  return Eigen::Map<const Vector>(v.data(), static_cast<Index>(v.size()));
}

inline json to_json(const LinearModel& m, const std::vector<std::string>& columns = {}) {
  json j{{"learner", to_string(m.kind)}, {"lambda", m.lambda}, {"w", to_json(m.w)}, {"b", m.b},
         {"converged", m.converged}, {"iterations", m.iterations}};
  if (!columns.empty()) j["columns"] = columns;
  return j;
}

inline LinearModel model_from_json(const json& j) {
  try {
    LinearModel m;
    m.kind = learner_from_string(j.at("learner").get<std::string>());
    m.lambda = j.at("lambda").get<double>();
    m.w = vector_from_json(j.at("w"));
    m.b = j.at("b").get<double>();
    m.converged = j.value("converged", true);
    m.iterations = j.value("iterations", 0);
    return m;
  } catch (const json::exception& e) {
    throw DataError(std::string("model file: ") + e.what());
  }
}

/// Poison points as CSV: features, response, then the training row each one started from.
inline void write_poison_csv(const PoisonSet& s, const std::vector<std::string>& columns, const std::string& target,
                             const std::string& path) {
  require(static_cast<Index>(columns.size()) == s.X.cols(), "write_poison_csv: column count mismatch");
  auto out = csv::open_out(path);
  std::vector<std::string> rec(columns);
  rec.push_back(target);
  rec.emplace_back("source_row");
  csv::write_record(out, rec);
  for (Index r = 0; r < s.size(); ++r) {
    rec.clear();
    for (Index c = 0; c < s.X.cols(); ++c) rec.push_back(format_exact(s.X(r, c)));
    rec.push_back(format_exact(s.y(r)));
    rec.push_back(std::to_string(s.source_rows[static_cast<std::size_t>(r)]));
    csv::write_record(out, rec);
  }
}

inline PoisonSet read_poison_csv(const std::string& path, Index features) {
  auto in = csv::open_in(path);
  std::vector<std::string> rec;
  if (!csv::read_record(in, rec) || static_cast<Index>(rec.size()) != features + 2)
    throw DataError(path + ": header does not match the feature count");
  std::vector<std::vector<double>> rows;
  PoisonSet s;
  while (csv::read_record(in, rec)) {
    if (rec.size() == 1 && rec[0].empty()) continue;
    if (static_cast<Index>(rec.size()) != features + 2) throw DataError(path + ": bad record arity");
    std::vector<double> row(rec.size());
    for (std::size_t c = 0; c < rec.size(); ++c)
      if (!parse_double(rec[c], row[c])) throw DataError(path + ": bad number '" + rec[c] + "'");
    s.source_rows.push_back(static_cast<Index>(row.back()));
    rows.push_back(std::move(row));
  }
  s.X.resize(static_cast<Index>(rows.size()), features);
  s.y.resize(static_cast<Index>(rows.size()));
  for (std::size_t r = 0; r < rows.size(); ++r) {
    for (Index c = 0; c < features; ++c) s.X(static_cast<Index>(r), c) = rows[r][static_cast<std::size_t>(c)];
    s.y(static_cast<Index>(r)) = rows[r][static_cast<std::size_t>(features)];
  }
  return s;
}

inline json trajectory_json(const PoisonSet& s) {
  return {{"loss_trajectory", s.loss_trajectory},
          {"outer_iterations", s.outer_iterations},
          {"converged", s.converged},
          {"fd_fallbacks", s.fd_fallbacks}};
}

inline json to_json(const TrimResult& r) {
  return {{"selected", r.selected},         {"loss_trajectory", r.loss_trajectory},
          {"converged", r.converged},       {"iterations", r.iterations},
          {"restart", r.restart},           {"model", to_json(r.model)}};
}

inline json to_json(const RpcaResult& r) {
  return {{"iterations", r.iterations},
          {"converged", r.converged},
          {"rank", r.rank},
          {"residual", r.residual},
          {"lambda", r.lambda},
          {"mu_floor", r.mu_floor},
          {"objective_trajectory", r.objective_trajectory},
          {"mu_trajectory", r.mu_trajectory}};
}

inline void write_triplets(const AttackVector& a, const std::vector<std::string>& columns, const std::string& path) {
  auto out = csv::open_out(path);
  poisonguard::write_triplets(out, a, columns);
}

inline AttackVector read_triplets(const std::string& path, Index rows, const std::vector<std::string>& columns) {
  auto in = csv::open_in(path);
  return poisonguard::read_triplets(in, rows, columns);
}

}  // namespace poisonguard::io
