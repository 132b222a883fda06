#pragma once

#include <poisonguard/common.hpp>
#include <poisonguard/csv.hpp>
#include <poisonguard/dataset.hpp>

#include <algorithm>
#include <cmath>
#include <string>
#include <tuple>
#include <vector>

namespace poisonguard {

/// Column indices the attacker can tamper with. Kept sorted and unique.
class SensorAccessSet {
public:
  SensorAccessSet() = default;
  explicit SensorAccessSet(std::vector<Index> columns) : columns_(std::move(columns)) {
    std::sort(columns_.begin(), columns_.end());
    columns_.erase(std::unique(columns_.begin(), columns_.end()), columns_.end());
  }

  static SensorAccessSet by_name(const DataFrameNorm& frame, const std::vector<std::string>& names) {
    std::vector<Index> idx;
    for (const auto& n : names) idx.push_back(frame.column_index(n));
    return SensorAccessSet(std::move(idx));
  }

  /// Every column whose name starts with `prefix` (e.g. "T" for the temperature sensors
  /// T1..T9, which excludes "T_out" and "Tdewpoint" when `digits_only` is set).
  static SensorAccessSet by_prefix(const DataFrameNorm& frame, const std::string& prefix,
                                   bool digits_only = true) {
    std::vector<Index> idx;
    for (std::size_t c = 0; c < frame.columns.size(); ++c) {
      const auto& name = frame.columns[c];
      if (name.rfind(prefix, 0) != 0 || name.size() == prefix.size()) continue;
      const auto rest = name.substr(prefix.size());
      if (digits_only && !std::all_of(rest.begin(), rest.end(), [](char ch) { return ch >= '0' && ch <= '9'; }))
        continue;
      idx.push_back(static_cast<Index>(c));
    }
    return SensorAccessSet(std::move(idx));
  }

  const std::vector<Index>& columns() const { return columns_; }
  Index size() const { return static_cast<Index>(columns_.size()); }
  bool contains(Index c) const { return std::binary_search(columns_.begin(), columns_.end(), c); }

  void validate(Index feature_count) const {
    require(!columns_.empty(), "sensor access set is empty");
    require(columns_.front() >= 0 && columns_.back() < feature_count, "sensor access set: column out of range");
  }

private:
  std::vector<Index> columns_;
};

enum class FdiSelection {
  rows,   ///< perturb every accessible cell of the selected rows (a captured frame)
  cells,  ///< perturb individually selected accessible cells
};

struct FdiConfig {
  double rate = 0.05;
  double magnitude_lo = 0.1;
  double magnitude_hi = 0.5;
  std::uint64_t seed = 0;
  FdiSelection selection = FdiSelection::rows;

  void validate() const {
    require(rate > 0.0 && rate <= 0.25, "FDI rate must be in (0, 0.25]");
    require(magnitude_lo >= 0.0 && magnitude_lo <= magnitude_hi, "FDI magnitude range must satisfy 0 <= lo <= hi");
  }
};

/// Sparse additive corruption i of a q x p sensor matrix (s_a = s + i).
struct AttackVector {
  struct Entry {
    Index row;
    Index col;
    double delta;
    friend bool operator==(const Entry&, const Entry&) = default;
  };

  Index rows = 0;
  Index cols = 0;
  std::vector<Entry> entries;  ///< sorted by (row, col), duplicate-free

  double density() const {
    return rows * cols == 0 ? 0.0 : static_cast<double>(entries.size()) / static_cast<double>(rows * cols);
  }

  Matrix dense() const {
    Matrix m = Matrix::Zero(rows, cols);
    for (const auto& e : entries) m(e.row, e.col) = e.delta;
    return m;
  }

  std::vector<Index> touched_rows() const {
    std::vector<Index> out;
    for (const auto& e : entries)
      if (out.empty() || out.back() != e.row) out.push_back(e.row);
    return out;
  }

  /// Nonzero cells of `m` with |value| > threshold.
  static AttackVector from_dense(const Matrix& m, double threshold = 0.0) {
    AttackVector a{m.rows(), m.cols(), {}};
    for (Index r = 0; r < m.rows(); ++r)
      for (Index c = 0; c < m.cols(); ++c)
        if (std::abs(m(r, c)) > threshold) a.entries.push_back({r, c, m(r, c)});
    return a;
  }

  friend bool operator==(const AttackVector&, const AttackVector&) = default;
};

namespace detail {
inline Index count_at_rate(double rate, Index n) {
  // Tolerate products like 0.29 * 100 = 28.999999999999996.
  return static_cast<Index>(std::floor(rate * static_cast<double>(n) + 1e-9));
}
}  // namespace detail

/// Draws a sparse attack confined to the accessible columns. In row mode
/// floor(rate*q) rows are picked uniformly and every accessible cell in them
/// is shifted by a value of magnitude U[lo, hi] with a random sign.
inline AttackVector build_attack_vector(const Matrix& sensors, const SensorAccessSet& access, const FdiConfig& cfg) {
  cfg.validate();
  access.validate(sensors.cols());
  const Index q = sensors.rows();
  Rng rng(cfg.seed);
  AttackVector attack{q, sensors.cols(), {}};
  auto draw = [&] {
    const double mag = rng.uniform(cfg.magnitude_lo, cfg.magnitude_hi);
    return rng.below(2) ? mag : -mag;
  };

  if (cfg.selection == FdiSelection::rows) {
    const Index k = detail::count_at_rate(cfg.rate, q);
    if (k < 1) throw InvalidArgument("attack too small to realize: rate * rows < 1");
    auto rows = rng.sample_without_replacement(q, k);
    std::sort(rows.begin(), rows.end());
    for (Index r : rows)
      for (Index c : access.columns()) attack.entries.push_back({r, c, draw()});
  } else {
    const Index cells = q * access.size();
    const Index k = detail::count_at_rate(cfg.rate, cells);
    if (k < 1) throw InvalidArgument("attack too small to realize: rate * cells < 1");
    auto picks = rng.sample_without_replacement(cells, k);
    std::sort(picks.begin(), picks.end());
    for (Index p : picks)
      attack.entries.push_back({p / access.size(), access.columns()[static_cast<std::size_t>(p % access.size())], draw()});
  }
  return attack;
}

inline AttackVector build_attack_vector(const DataFrameNorm& frame, const SensorAccessSet& access,
                                        const FdiConfig& cfg) {
  return build_attack_vector(frame.X, access, cfg);
}

inline Matrix inject(const Matrix& sensors, const AttackVector& attack) {
  require(sensors.rows() == attack.rows && sensors.cols() == attack.cols, "inject: shape mismatch");
  Matrix out = sensors;
  for (const auto& e : attack.entries) out(e.row, e.col) += e.delta;
  return out;
}

/// s_a = s + i on the feature block; the target column is untouched.
inline DataFrameNorm inject(const DataFrameNorm& frame, const AttackVector& attack) {
  DataFrameNorm out = frame;
  out.X = inject(frame.X, attack);
  return out;
}

/// s_a - i. Exact inverse of inject() whenever both roundings are exact;
/// otherwise within one rounding per cell.
inline Matrix remove_attack(const Matrix& attacked, const AttackVector& attack) {
  require(attacked.rows() == attack.rows && attacked.cols() == attack.cols, "remove_attack: shape mismatch");
  Matrix out = attacked;
  for (const auto& e : attack.entries) out(e.row, e.col) -= e.delta;
  return out;
}

/// Sparse-triplet audit format: header `row,column,delta`, one nonzero per line,
/// delta in shortest round-trip decimal.
inline void write_triplets(std::ostream& out, const AttackVector& attack, const std::vector<std::string>& columns) {
  require(static_cast<Index>(columns.size()) == attack.cols, "write_triplets: column names do not match shape");
  csv::write_record(out, {"row", "column", "delta"});
  for (const auto& e : attack.entries)
    csv::write_record(out, {std::to_string(e.row), columns[static_cast<std::size_t>(e.col)], format_exact(e.delta)});
}

inline AttackVector read_triplets(std::istream& in, Index rows, const std::vector<std::string>& columns) {
  AttackVector a{rows, static_cast<Index>(columns.size()), {}};
  std::vector<std::string> f;
  if (!csv::read_record(in, f) || f != std::vector<std::string>{"row", "column", "delta"})
    throw DataError("triplet file: bad header");
  while (csv::read_record(in, f)) {
    if (f.size() == 1 && f[0].empty()) continue;
    if (f.size() != 3) throw DataError("triplet file: bad record");
    double row = 0, delta = 0;
    if (!parse_double(f[0], row) || !parse_double(f[2], delta)) throw DataError("triplet file: bad number");
    auto it = std::find(columns.begin(), columns.end(), f[1]);
    if (it == columns.end()) throw DataError("triplet file: unknown column " + f[1]);
    const auto r = static_cast<Index>(row);
    if (r < 0 || r >= rows) throw DataError("triplet file: row out of range");
    a.entries.push_back({r, static_cast<Index>(it - columns.begin()), delta});
  }
  std::sort(a.entries.begin(), a.entries.end(),
            [](const auto& x, const auto& y) { return std::tie(x.row, x.col) < std::tie(y.row, y.col); });
  return a;
}

}  // namespace poisonguard
