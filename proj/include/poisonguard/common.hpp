#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <random>
#include <stdexcept>
#include <string>
#include <string_view>
#include <system_error>
#include <vector>

namespace poisonguard {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using Index = Eigen::Index;

/// Raised for contract violations on inputs (bad shapes, out-of-range config).
class InvalidArgument : public std::invalid_argument {
public:
  using std::invalid_argument::invalid_argument;
};

/// Raised for I/O and data-quality problems (missing file, no usable rows).
class DataError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

inline void require(bool ok, const std::string& what) {
  if (!ok) throw InvalidArgument(what);
}

/// A regression dataset: one row of features per response value.
struct Dataset {
  Matrix X;
  Vector y;

  Index rows() const { return X.rows(); }
  Index features() const { return X.cols(); }
  bool empty() const { return X.rows() == 0; }

  Dataset subset(const std::vector<Index>& idx) const {
    Dataset out{Matrix(static_cast<Index>(idx.size()), X.cols()),
                Vector(static_cast<Index>(idx.size()))};
    for (std::size_t k = 0; k < idx.size(); ++k) {
      out.X.row(static_cast<Index>(k)) = X.row(idx[k]);
      out.y(static_cast<Index>(k)) = y(idx[k]);
    }
    return out;
  }
};

inline Dataset concat(const Dataset& a, const Dataset& b) {
  require(a.empty() || b.empty() || a.features() == b.features(),
          "concat: feature count mismatch");
  const Index d = a.empty() ? b.features() : a.features();
  Dataset out{Matrix(a.rows() + b.rows(), d), Vector(a.rows() + b.rows())};
  if (!a.empty()) {
    out.X.topRows(a.rows()) = a.X;
    out.y.head(a.rows()) = a.y;
  }
  if (!b.empty()) {
    out.X.bottomRows(b.rows()) = b.X;
    out.y.tail(b.rows()) = b.y;
  }
  return out;
}

// Random numbers. std distributions are implementation-defined, so sampling
// is done by hand on top of the (fully specified) mt19937_64 engine; the same
// seed yields the same stream on every standard library.
class Rng {
public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next() { return engine_(); }

  /// Uniform double in [0, 1).
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Uniform integer in [0, n), rejection-sampled.
  std::uint64_t below(std::uint64_t n) {
    if (n <= 1) return 0;
    const std::uint64_t limit = ~std::uint64_t{0} - (~std::uint64_t{0} % n);
    std::uint64_t v;
    do {
      v = engine_();
    } while (v >= limit);
    return v % n;
  }

  double normal() {
    // Box-Muller; the second variate is discarded to keep the stream simple.
    double u1 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * 3.14159265358979323846 * u2);
  }

  template <class T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      const auto j = static_cast<std::size_t>(below(i));
      std::swap(v[i - 1], v[j]);
    }
  }

  /// k distinct indices from [0, n), in sampling order.
  std::vector<Index> sample_without_replacement(Index n, Index k) {
    require(k >= 0 && k <= n, "sample_without_replacement: k out of range");
    std::vector<Index> all(static_cast<std::size_t>(n));
    std::iota(all.begin(), all.end(), Index{0});
    for (Index i = 0; i < k; ++i) {
      const auto j = i + static_cast<Index>(below(static_cast<std::uint64_t>(n - i)));
      std::swap(all[static_cast<std::size_t>(i)], all[static_cast<std::size_t>(j)]);
    }
    all.resize(static_cast<std::size_t>(k));
    return all;
  }

private:
  std::mt19937_64 engine_;
};

/// splitmix64 finalizer, used to derive independent sub-seeds.
constexpr std::uint64_t mix_seed(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

constexpr std::uint64_t fnv1a(std::string_view s, std::uint64_t h = 0xcbf29ce484222325ULL) {
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

/// Shortest decimal text that parses back to exactly the same double.
inline std::string format_exact(double v) {
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  if (ec != std::errc{}) throw std::runtime_error("format_exact: to_chars failed");
  return std::string(buf, end);
}

/// Fixed significant-digit text for reports.
inline std::string format_sig(double v, int digits = 6) {
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof(buf), v, std::chars_format::general, digits);
  if (ec != std::errc{}) throw std::runtime_error("format_sig: to_chars failed");
  return std::string(buf, end);
}

inline bool parse_double(std::string_view text, double& out) {
  while (!text.empty() && (text.front() == ' ' || text.front() == '\t')) text.remove_prefix(1);
  while (!text.empty() && (text.back() == ' ' || text.back() == '\t' || text.back() == '\r'))
    text.remove_suffix(1);
  if (text.empty()) return false;
  if (text.front() == '+') text.remove_prefix(1);
  auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), out);
  return ec == std::errc{} && ptr == text.data() + text.size() && std::isfinite(out);
}

}  // namespace poisonguard
