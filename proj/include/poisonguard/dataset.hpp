#pragma once

#include <poisonguard/common.hpp>
#include <poisonguard/csv.hpp>

#include <algorithm>
#include <cctype>
#include <cmath>
#include <iostream>
#include <string>
#include <vector>

namespace poisonguard {

/// Parsed sensor table. Feature columns keep the file's header order; the
/// date column (if any) is moved to `timestamps` and the target to `y`.
struct RawFrame {
  std::vector<std::string> columns;
  std::string target;
  std::vector<std::string> timestamps;
  Matrix values;
  Vector y;
  std::size_t rejected = 0;
  std::vector<std::size_t> rejected_lines;

  Index rows() const { return values.rows(); }
};

/// Per-column min-max scaling fit on the training rows.
struct NormalizationParams {
  double min = 0.0;
  double max = 1.0;

  bool constant() const { return !(max > min); }
  double normalize(double v) const { return constant() ? 0.0 : (v - min) / (max - min); }
};

enum class Split : std::uint8_t { train, validation, test };

inline const char* to_string(Split s) {
  switch (s) {
    case Split::train: return "train";
    case Split::validation: return "validation";
    case Split::test: return "test";
  }
  return "?";
}

inline Split split_from_string(const std::string& s) {
  if (s == "train") return Split::train;
  if (s == "validation") return Split::validation;
  if (s == "test") return Split::test;
  throw InvalidArgument("unknown split label: " + s);
}

enum class SplitMode { random_shuffle, chronological };

struct SplitSpec {
  double train_fraction = 0.70;
  double validation_fraction = 0.15;
  double test_fraction = 0.15;
  std::uint64_t seed = 0;
  SplitMode mode = SplitMode::random_shuffle;

  void validate() const {
    require(train_fraction > 0 && validation_fraction > 0 && test_fraction > 0,
            "split fractions must be positive");
    require(std::abs(train_fraction + validation_fraction + test_fraction - 1.0) <= 1e-12,
            "split fractions must sum to 1");
  }
};

struct DataFrameNorm {
  std::vector<std::string> columns;
  std::string target;
  Matrix X;
  Vector y;
  std::vector<NormalizationParams> feature_params;
  NormalizationParams target_params;
  std::vector<bool> constant_columns;
  std::vector<Split> split;
  std::size_t clipped_cells = 0;

  Index rows() const { return X.rows(); }
  Index features() const { return X.cols(); }

  std::vector<Index> rows_in(Split s) const {
    std::vector<Index> out;
    for (std::size_t r = 0; r < split.size(); ++r)
      if (split[r] == s) out.push_back(static_cast<Index>(r));
    return out;
  }

  Dataset dataset(Split s) const { return Dataset{X, y}.subset(rows_in(s)); }

  Index column_index(const std::string& name) const {
    auto it = std::find(columns.begin(), columns.end(), name);
    if (it == columns.end()) throw InvalidArgument("unknown column: " + name);
    return static_cast<Index>(it - columns.begin());
  }
};

inline bool operator==(const NormalizationParams& a, const NormalizationParams& b) {
  return a.min == b.min && a.max == b.max;
}

inline bool operator==(const DataFrameNorm& a, const DataFrameNorm& b) {
  return a.columns == b.columns && a.target == b.target && a.X == b.X && a.y == b.y &&
         a.feature_params == b.feature_params && a.target_params == b.target_params &&
         a.constant_columns == b.constant_columns && a.split == b.split &&
         a.clipped_cells == b.clipped_cells;
}

namespace detail {

inline std::string lower(std::string s) {
  for (auto& c : s) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return s;
}

// "YYYY-MM-DD HH:MM:SS"
inline bool is_uci_timestamp(const std::string& s) {
  if (s.size() != 19) return false;
  static constexpr const char* shape = "dddd-dd-dd dd:dd:dd";
  for (std::size_t i = 0; i < 19; ++i) {
    const bool digit = std::isdigit(static_cast<unsigned char>(s[i])) != 0;
    if (shape[i] == 'd' ? !digit : s[i] != shape[i]) return false;
  }
  return true;
}

}  // namespace detail

/// Reads a comma-separated sensor file. Rows with a wrong arity or any
/// unparseable cell are rejected (counted and logged to `log`).
inline RawFrame load_csv(std::istream& in, const std::string& target_column,
                         std::ostream* log = &std::clog) {
  std::vector<std::string> header;
  if (!csv::read_record(in, header) || header.empty())
    throw DataError("missing header row");

  Index target_pos = -1;
  Index date_pos = -1;
  for (std::size_t c = 0; c < header.size(); ++c) {
    if (header[c] == target_column) target_pos = static_cast<Index>(c);
    else if (detail::lower(header[c]) == "date") date_pos = static_cast<Index>(c);
  }
  if (target_pos < 0) throw DataError("missing target column: " + target_column);

  RawFrame frame;
  frame.target = target_column;
  std::vector<Index> feature_pos;
  for (std::size_t c = 0; c < header.size(); ++c) {
    const auto ci = static_cast<Index>(c);
    if (ci == target_pos || ci == date_pos) continue;
    feature_pos.push_back(ci);
    frame.columns.push_back(header[c]);
  }

  std::vector<double> cells;
  std::vector<double> targets;
  std::vector<std::string> fields;
  std::size_t line = 1;
  const auto p = feature_pos.size();
  std::vector<double> row(p);
  while (csv::read_record(in, fields)) {
    ++line;
    if (fields.size() == 1 && fields[0].empty()) continue;  // blank line
    bool ok = fields.size() == header.size();
    double t = 0.0;
    if (ok) ok = parse_double(fields[static_cast<std::size_t>(target_pos)], t);
    for (std::size_t k = 0; ok && k < p; ++k)
      ok = parse_double(fields[static_cast<std::size_t>(feature_pos[k])], row[k]);
    if (ok && date_pos >= 0) ok = detail::is_uci_timestamp(fields[static_cast<std::size_t>(date_pos)]);
    if (!ok) {
      ++frame.rejected;
      frame.rejected_lines.push_back(line);
      if (log) *log << "load_csv: rejected line " << line << '\n';
      continue;
    }
    cells.insert(cells.end(), row.begin(), row.end());
    targets.push_back(t);
    if (date_pos >= 0) frame.timestamps.push_back(fields[static_cast<std::size_t>(date_pos)]);
  }
  if (targets.empty()) throw DataError("no parseable rows");

  const auto n = static_cast<Index>(targets.size());
  frame.values = Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(
      cells.data(), n, static_cast<Index>(p));
  frame.y = Eigen::Map<const Vector>(targets.data(), n);
  if (log && frame.rejected) *log << "load_csv: " << frame.rejected << " row(s) rejected\n";
  return frame;
}

inline RawFrame load_csv(const std::string& path, const std::string& target_column,
                         std::ostream* log = &std::clog) {
  auto in = csv::open_in(path);
  return load_csv(in, target_column, log);
}

/// Assigns rows to train/validation/test. Sizes are rounded to the nearest row;
/// the test split takes the remainder.
inline std::vector<Split> assign_splits(Index n, const SplitSpec& spec) {
  spec.validate();
  const auto n_train = static_cast<Index>(std::floor(spec.train_fraction * static_cast<double>(n) + 0.5));
  const auto n_val = std::min<Index>(
      n - n_train, static_cast<Index>(std::floor(spec.validation_fraction * static_cast<double>(n) + 0.5)));
  std::vector<Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), Index{0});
  if (spec.mode == SplitMode::random_shuffle) {
    Rng rng(spec.seed);
    rng.shuffle(order);
  }
  std::vector<Split> out(static_cast<std::size_t>(n), Split::test);
  for (Index k = 0; k < n; ++k) {
    const auto r = static_cast<std::size_t>(order[static_cast<std::size_t>(k)]);
    out[r] = k < n_train ? Split::train : (k < n_train + n_val ? Split::validation : Split::test);
  }
  return out;
}

/// Min-max scales every feature and the target to [0, 1] using the training
/// rows only. Validation/test cells falling outside are clipped. A column that
/// is constant on the training rows maps to 0.0 and is flagged.
inline DataFrameNorm normalize_split(const RawFrame& frame, const SplitSpec& spec) {
  require(frame.rows() > 0, "normalize_split: empty frame");
  DataFrameNorm out;
  out.columns = frame.columns;
  out.target = frame.target;
  out.split = assign_splits(frame.rows(), spec);

  const Index n = frame.rows();
  const Index p = frame.values.cols();
  auto fit = [&](auto&& column) {
    NormalizationParams params{std::numeric_limits<double>::infinity(),
                               -std::numeric_limits<double>::infinity()};
    for (Index r = 0; r < n; ++r) {
      if (out.split[static_cast<std::size_t>(r)] != Split::train) continue;
      params.min = std::min(params.min, column(r));
      params.max = std::max(params.max, column(r));
    }
    return params;
  };
  auto apply = [&](const NormalizationParams& params, double v, Index r) {
    double z = params.normalize(v);
    if (out.split[static_cast<std::size_t>(r)] != Split::train && (z < 0.0 || z > 1.0)) {
      z = std::clamp(z, 0.0, 1.0);
      ++out.clipped_cells;
    }
    return z;
  };

  out.X.resize(n, p);
  out.feature_params.resize(static_cast<std::size_t>(p));
  out.constant_columns.resize(static_cast<std::size_t>(p));
  for (Index c = 0; c < p; ++c) {
    const auto params = fit([&](Index r) { return frame.values(r, c); });
    out.feature_params[static_cast<std::size_t>(c)] = params;
    out.constant_columns[static_cast<std::size_t>(c)] = params.constant();
    for (Index r = 0; r < n; ++r) out.X(r, c) = apply(params, frame.values(r, c), r);
  }
  out.target_params = fit([&](Index r) { return frame.y(r); });
  out.y.resize(n);
  for (Index r = 0; r < n; ++r) out.y(r) = apply(out.target_params, frame.y(r), r);
  return out;
}

/// Maps a normalized response back to watt-hours.
inline double denormalize_target(double value, const NormalizationParams& params) {
  if (params.constant()) throw InvalidArgument("denormalize_target: target range is empty (max = min)");
  return value * (params.max - params.min) + params.min;
}

}  // namespace poisonguard
