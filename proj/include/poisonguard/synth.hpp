#pragma once

#include <poisonguard/common.hpp>
#include <poisonguard/csv.hpp>
#include <poisonguard/dataset.hpp>

#include <charconv>
#include <cmath>
#include <ctime>
#include <ostream>
#include <string>
#include <vector>

namespace poisonguard {

/// Column layout of the UCI appliances-energy file.
inline std::vector<std::string> uci_columns() {
  std::vector<std::string> cols{"date", "Appliances", "lights"};
  for (int i = 1; i <= 9; ++i) {
    cols.push_back("T" + std::to_string(i));
    cols.push_back("RH_" + std::to_string(i));
  }
  for (const char* c : {"T_out", "Press_mm_hg", "RH_out", "Windspeed", "Visibility", "Tdewpoint", "rv1", "rv2"})
    cols.emplace_back(c);
  return cols;
}

struct SynthConfig {
  Index rows = 2000;
  std::uint64_t seed = 0;
  double noise_wh = 25.0;  ///< std-dev of the appliance noise before rounding
};

namespace detail {

inline std::string fixed(double v, int decimals) {
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v, std::chars_format::fixed, decimals);
  return std::string(buf, end);
}

inline std::string uci_timestamp(Index step) {
  // 10-minute cadence starting 2016-01-11 17:00:00 UTC, like the published file.
  std::time_t t = 1452531600 + static_cast<std::time_t>(step) * 600;
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%d %H:%M:%S", &tm);
  return buf;
}

}  // namespace detail

/// Synthetic stand-in with the UCI schema. Sensors are driven by a few shared
/// latent signals (daily cycle, weather drift, occupancy) plus small noise, so
/// the sensor block is close to low rank. Appliances is a noisy linear function
/// of the latents, rounded to 10 Wh and kept in [10, 1080].
inline void write_synthetic_uci(std::ostream& out, const SynthConfig& cfg) {
  require(cfg.rows > 0, "synthetic dataset needs at least one row");
  Rng rng(cfg.seed);
  const auto cols = uci_columns();
  csv::write_record(out, cols);

  std::vector<double> offset(9), gain(9), rh_base(9), rh_gain(9);
  for (int i = 0; i < 9; ++i) {
    offset[i] = rng.uniform(18.0, 23.0);
    gain[i] = rng.uniform(0.5, 2.0);
    rh_base[i] = rng.uniform(35.0, 50.0);
    rh_gain[i] = rng.uniform(-4.0, 4.0);
  }
  double weather = 0.0;
  constexpr double kPi = 3.14159265358979323846;
  std::vector<std::string> rec(cols.size());
  for (Index r = 0; r < cfg.rows; ++r) {
    const double day = std::sin(2.0 * kPi * static_cast<double>(r % 144) / 144.0);
    weather = 0.995 * weather + 0.1 * rng.normal();
    const double occupancy = std::max(0.0, day + 0.3 * rng.normal());
    const double lights = 10.0 * std::round(std::min(7.0, std::max(0.0, 2.0 * occupancy + rng.normal())));
    const double t_out = 6.0 + 4.0 * day + 3.0 * weather + 0.3 * rng.normal();

    std::size_t k = 0;
    rec[k++] = detail::uci_timestamp(r);
    const double wh = 100.0 + 90.0 * occupancy + 4.0 * lights + 15.0 * weather + cfg.noise_wh * rng.normal();
    rec[k++] = detail::fixed(10.0 * std::round(std::clamp(wh, 10.0, 1080.0) / 10.0), 0);
    rec[k++] = detail::fixed(lights, 0);
    for (int i = 0; i < 9; ++i) {
      rec[k++] = detail::fixed(offset[i] + gain[i] * day + 0.4 * weather + 0.1 * rng.normal(), 4);
      rec[k++] = detail::fixed(rh_base[i] + rh_gain[i] * occupancy - 1.5 * weather + 0.3 * rng.normal(), 4);
    }
    rec[k++] = detail::fixed(t_out, 4);
    rec[k++] = detail::fixed(755.0 + 5.0 * weather + 0.2 * rng.normal(), 4);
    rec[k++] = detail::fixed(std::clamp(80.0 - 5.0 * day - 4.0 * weather + rng.normal(), 20.0, 100.0), 4);
    rec[k++] = detail::fixed(std::max(0.0, 4.0 + 1.5 * weather + rng.normal()), 4);
    rec[k++] = detail::fixed(std::clamp(40.0 + 10.0 * weather + 3.0 * rng.normal(), 1.0, 66.0), 4);
    rec[k++] = detail::fixed(t_out - 4.0 + 0.3 * rng.normal(), 4);
    const double rv = rng.uniform(0.0, 50.0);
    rec[k++] = detail::fixed(rv, 6);
    rec[k++] = detail::fixed(rv, 6);
    csv::write_record(out, rec);
  }
}

}  // namespace poisonguard
