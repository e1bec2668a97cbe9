#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>
#include <vector>

#include <Eigen/Dense>

#include "redoff/error.hpp"
#include "redoff/geo.hpp"
#include "redoff/trace.hpp"

namespace redoff {

struct RegimeParams {
  double mean = 0.15;    // seconds, total capture-to-output delay
  double stddev = 0.01;  // seconds
};

/// Markov-modulated delay model for one server.
struct RegimeModel {
  std::vector<RegimeParams> regimes;
  std::vector<std::vector<double>> transition;  // row-stochastic, regimes x regimes
};

struct WaypointModel {
  double radius_m = 30.0;
  double altitude_min_m = 5.0;
  double altitude_max_m = 15.0;
  double speed_min = 1.0;  // m/s
  double speed_max = 4.0;
  double waypoint_tolerance_m = 3.0;
  double max_acceleration = 2.0;  // m/s^2
  double rate_hz = 5.0;           // telemetry sampling rate
};

struct RssiModel {
  double reference_power_dbm = -30.0;  // at reference distance
  double reference_distance_m = 1.0;
  double path_loss_exponent = 2.5;
  double shadowing_std_db = 4.0;
};

struct SyntheticConfig {
  int n_servers = 3;
  std::int64_t n_tasks = 10'000;
  double inter_arrival = 1.0 / 15.0;
  RegimeModel regime_model;
  /// Optional per-server overrides; empty or exactly n_servers entries.
  std::vector<RegimeModel> per_server;
  double comp_delay = 0.010;
  WaypointModel telemetry;
  RssiModel rssi;
  GeoPoint origin{45.0, 9.0, 0.0};
  double server_ring_radius_m = 10.0;
  double server_altitude_m = 1.0;
  std::uint64_t seed = 1;

  const RegimeModel& model_for(int server_id) const {
    return per_server.empty() ? regime_model : per_server[static_cast<std::size_t>(server_id - 1)];
  }
};

inline void validate(const RegimeModel& m) {
  const auto k = m.regimes.size();
  require(k >= 1, ErrorKind::kConfig, "regime model needs at least one regime");
  require(m.transition.size() == k, ErrorKind::kConfig, "transition matrix must be regimes x regimes");
  for (const auto& r : m.regimes)
    require(r.mean > 0.0 && r.stddev >= 0.0, ErrorKind::kConfig, "regime means must be > 0, stds >= 0");
  for (const auto& row : m.transition) {
    require(row.size() == k, ErrorKind::kConfig, "transition matrix must be square");
    double sum = 0.0;
    for (double p : row) {
      require(p >= 0.0 && p <= 1.0, ErrorKind::kConfig, "transition probabilities must lie in [0,1]");
      sum += p;
    }
    require(std::abs(sum - 1.0) <= 1e-9, ErrorKind::kConfig, "transition rows must sum to 1");
  }
}

inline void validate(const SyntheticConfig& c) {
  require(c.n_servers >= 1 && c.n_servers <= 16, ErrorKind::kConfig, "n_servers must be in [1, 16]");
  require(c.n_tasks >= 1, ErrorKind::kConfig, "n_tasks must be positive");
  require(c.inter_arrival > 0.0, ErrorKind::kConfig, "inter_arrival must be positive");
  require(c.comp_delay >= 0.0, ErrorKind::kConfig, "comp_delay must be nonnegative");
  require(c.per_server.empty() || static_cast<int>(c.per_server.size()) == c.n_servers, ErrorKind::kConfig,
          "per_server regime models must be empty or one per server");
  validate(c.regime_model);
  for (const auto& m : c.per_server) validate(m);
  const auto& w = c.telemetry;
  require(w.radius_m > 0 && w.altitude_max_m >= w.altitude_min_m && w.speed_max >= w.speed_min &&
              w.speed_min > 0 && w.rate_hz > 0 && w.max_acceleration > 0,
          ErrorKind::kConfig, "invalid waypoint model");
  require(c.rssi.shadowing_std_db >= 0 && c.rssi.reference_distance_m > 0, ErrorKind::kConfig,
          "invalid RSSI model");
}

/// Stationary distribution of a row-stochastic matrix.
inline std::vector<double> stationary_distribution(const std::vector<std::vector<double>>& p) {
  const auto k = static_cast<Eigen::Index>(p.size());
  Eigen::MatrixXd a(k + 1, k);
  for (Eigen::Index i = 0; i < k; ++i)
    for (Eigen::Index j = 0; j < k; ++j)
      a(j, i) = p[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)] - (i == j ? 1.0 : 0.0);
  a.row(k).setOnes();
  Eigen::VectorXd b = Eigen::VectorXd::Zero(k + 1);
  b(k) = 1.0;
  Eigen::VectorXd pi = a.colPivHouseholderQr().solve(b);
  std::vector<double> out(static_cast<std::size_t>(k));
  double sum = 0.0;
  for (Eigen::Index i = 0; i < k; ++i) sum += out[static_cast<std::size_t>(i)] = std::max(0.0, pi(i));
  for (auto& v : out) v /= sum;
  return out;
}

namespace detail {

inline std::uint64_t splitmix64(std::uint64_t& state) {
  std::uint64_t z = (state += 0x9E3779B97F4A7C15ull);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

/// Splits `total` into (comm, comp) with comm + comp == total exactly when
/// representable.
inline double comm_part(double total, double comp) {
  double comm = std::max(0.0, total - comp);
  for (int i = 0; i < 4 && comm + comp != total; ++i)
    comm = std::max(0.0, std::nextafter(comm, comm + comp < total ? 1.0 : -1.0));
  return comm;
}

inline double truncated_gaussian(std::mt19937_64& rng, double mean, double stddev, double floor) {
  if (stddev == 0.0) return std::max(mean, floor);
  std::normal_distribution<double> dist(mean, stddev);
  for (int i = 0; i < 10'000; ++i) {
    const double x = dist(rng);
    if (x >= floor) return x;
  }
  return floor;
}

inline int draw_index(std::mt19937_64& rng, const std::vector<double>& probs) {
  const double u = std::uniform_real_distribution<double>(0.0, 1.0)(rng);
  double acc = 0.0;
  for (std::size_t i = 0; i < probs.size(); ++i) {
    acc += probs[i];
    if (u < acc) return static_cast<int>(i);
  }
  return static_cast<int>(probs.size() - 1);
}

struct MotionState {
  double east = 0, north = 0, up = 10;
  Vec3 velocity{};
  double target_e = 0, target_n = 0, target_u = 10;
  double speed = 1;
  double heading = 0;
  double cpu = 0.55, gpu = 0.6, ram = 0.4;
};

inline void new_waypoint(MotionState& m, const WaypointModel& w, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const double r = w.radius_m * std::sqrt(u(rng));
  const double theta = 2.0 * std::numbers::pi * u(rng);
  m.target_e = r * std::cos(theta);
  m.target_n = r * std::sin(theta);
  m.target_u = w.altitude_min_m + (w.altitude_max_m - w.altitude_min_m) * u(rng);
  m.speed = w.speed_min + (w.speed_max - w.speed_min) * u(rng);
}

/// Random-waypoint flight inside a cylinder, sampled at the telemetry rate.
inline std::vector<TelemetrySample> simulate_flight(const SyntheticConfig& c, std::int64_t n_samples,
                                                    std::mt19937_64& rng) {
  const auto& w = c.telemetry;
  const double dt = 1.0 / w.rate_hz;
  std::normal_distribution<double> noise(0.0, 1.0);
  MotionState m;
  m.up = 0.5 * (w.altitude_min_m + w.altitude_max_m);
  new_waypoint(m, w, rng);
  std::vector<TelemetrySample> out;
  out.reserve(static_cast<std::size_t>(n_samples));
  for (std::int64_t k = 0; k < n_samples; ++k) {
    const double de = m.target_e - m.east, dn = m.target_n - m.north, du = m.target_u - m.up;
    const double dist = std::sqrt(de * de + dn * dn + du * du);
    if (dist < w.waypoint_tolerance_m) new_waypoint(m, w, rng);
    Vec3 desired{};
    if (dist > 1e-9) desired = {de / dist * m.speed, dn / dist * m.speed, du / dist * m.speed};
    Vec3 dv{desired[0] - m.velocity[0], desired[1] - m.velocity[1], desired[2] - m.velocity[2]};
    const double dv_norm = norm(dv);
    const double max_dv = w.max_acceleration * dt;
    if (dv_norm > max_dv)
      for (auto& x : dv) x *= max_dv / dv_norm;
    const Vec3 old_velocity = m.velocity;
    for (int a = 0; a < 3; ++a) m.velocity[a] += dv[a];
    m.east += m.velocity[0] * dt;
    m.north += m.velocity[1] * dt;
    m.up = std::clamp(m.up + m.velocity[2] * dt, 0.0, w.altitude_max_m + 5.0);

    const double old_heading = m.heading;
    if (std::hypot(m.velocity[0], m.velocity[1]) > 0.2)
      m.heading = geo::wrap_360(geo::rad2deg(std::atan2(m.velocity[0], m.velocity[1])));
    double dheading = m.heading - old_heading;
    if (dheading > 180) dheading -= 360;
    if (dheading < -180) dheading += 360;

    TelemetrySample t;
    t.position = geo::offset(c.origin, m.east, m.north, m.up);
    t.velocity = m.velocity;
    for (int a = 0; a < 3; ++a) t.acceleration[a] = (m.velocity[a] - old_velocity[a]) / dt + 0.05 * noise(rng);
    t.gyroscope = {0.02 * noise(rng) + 0.05 * t.acceleration[1], 0.02 * noise(rng) - 0.05 * t.acceleration[0],
                   geo::deg2rad(dheading) / dt + 0.01 * noise(rng)};
    t.heading = m.heading;
    m.cpu = std::clamp(0.55 + 0.9 * (m.cpu - 0.55) + 0.03 * noise(rng), 0.0, 1.0);
    m.gpu = std::clamp(0.60 + 0.9 * (m.gpu - 0.60) + 0.03 * noise(rng), 0.0, 1.0);
    m.ram = std::clamp(0.40 + 0.99 * (m.ram - 0.40) + 0.005 * noise(rng), 0.0, 1.0);
    t.onboard = {m.cpu, m.gpu, m.ram};
    out.push_back(t);
  }
  return out;
}

}  // namespace detail

/// Evenly spaced ring of servers around the configured origin.
inline std::vector<GeoPoint> server_ring(const SyntheticConfig& c) {
  std::vector<GeoPoint> out;
  for (int n = 0; n < c.n_servers; ++n) {
    const double a = 2.0 * std::numbers::pi * n / c.n_servers;
    out.push_back(geo::offset(c.origin, c.server_ring_radius_m * std::sin(a),
                              c.server_ring_radius_m * std::cos(a), c.server_altitude_m));
  }
  return out;
}

/// Deterministic synthetic trace. Each server's delay follows its own Markov
/// regime chain with a truncated Gaussian per regime; telemetry follows a
/// random-waypoint flight held onto the task grid; RSSI is log-distance path
/// loss plus i.i.d. shadowing; TCP statistics are noisy functions of the
/// communication delay.
inline TraceDataset generate_synthetic(const SyntheticConfig& c) {
  validate(c);
  std::uint64_t seed_state = c.seed;
  std::mt19937_64 flight_rng(detail::splitmix64(seed_state));
  std::mt19937_64 regime_rng(detail::splitmix64(seed_state));
  std::mt19937_64 delay_rng(detail::splitmix64(seed_state));
  std::mt19937_64 net_rng(detail::splitmix64(seed_state));

  const double task_span = static_cast<double>(c.n_tasks) * c.inter_arrival;
  const auto n_tel = static_cast<std::int64_t>(std::floor(task_span * c.telemetry.rate_hz)) + 2;
  const auto flight = detail::simulate_flight(c, n_tel, flight_rng);

  // Zero-order hold of the telemetry stream onto the task grid.
  std::vector<TelemetrySample> telemetry;
  telemetry.reserve(static_cast<std::size_t>(c.n_tasks));
  for (std::int64_t i = 0; i < c.n_tasks; ++i) {
    const double t = static_cast<double>(i) * c.inter_arrival;
    auto k = static_cast<std::int64_t>(std::floor(t * c.telemetry.rate_hz + 1e-9));
    k = std::min(k, n_tel - 1);
    TelemetrySample s = flight[static_cast<std::size_t>(k)];
    s.task_index = i;
    telemetry.push_back(s);
  }

  const auto positions = server_ring(c);
  std::vector<int> regime(static_cast<std::size_t>(c.n_servers));
  for (int n = 1; n <= c.n_servers; ++n)
    regime[static_cast<std::size_t>(n - 1)] =
        detail::draw_index(regime_rng, stationary_distribution(c.model_for(n).transition));

  std::normal_distribution<double> gauss(0.0, 1.0);
  std::vector<PipelineSample> samples;
  samples.reserve(static_cast<std::size_t>(c.n_tasks * c.n_servers));
  for (std::int64_t i = 0; i < c.n_tasks; ++i) {
    for (int n = 1; n <= c.n_servers; ++n) {
      const auto& model = c.model_for(n);
      auto& r = regime[static_cast<std::size_t>(n - 1)];
      if (i > 0) r = detail::draw_index(regime_rng, model.transition[static_cast<std::size_t>(r)]);
      const auto& params = model.regimes[static_cast<std::size_t>(r)];

      PipelineSample s;
      s.task_index = i;
      s.server_id = n;
      s.regime = r;
      s.comp_delay = c.comp_delay;
      const double total = detail::truncated_gaussian(delay_rng, params.mean, params.stddev, c.comp_delay);
      s.comm_delay = detail::comm_part(total, c.comp_delay);

      const auto& pos = telemetry[static_cast<std::size_t>(i)].position;
      const auto& srv = positions[static_cast<std::size_t>(n - 1)];
      const double ground = geo::haversine_distance(pos, srv);
      const double d3 = std::max(std::hypot(ground, pos.alt - srv.alt), c.rssi.reference_distance_m);
      s.rssi = c.rssi.reference_power_dbm -
               10.0 * c.rssi.path_loss_exponent * std::log10(d3 / c.rssi.reference_distance_m) +
               c.rssi.shadowing_std_db * gauss(net_rng);
      s.mcs_index = std::clamp(static_cast<int>(std::floor((s.rssi + 92.0) / 5.0)), 0, 7);

      const double comm = s.comm_delay;
      s.tcp.rtt_avg = std::max(0.001, 0.5 * comm + 0.008 * gauss(net_rng));
      s.tcp.retransmissions = static_cast<double>(
          std::poisson_distribution<int>(std::max(1e-6, (comm - 0.08) * 12.0))(net_rng));
      s.tcp.timeouts = static_cast<double>(
          std::poisson_distribution<int>(std::max(1e-6, (comm - 0.25) * 4.0))(net_rng));
      s.tcp.congestion_window = std::max(1.0, 45.0 - 80.0 * comm + 4.0 * gauss(net_rng));
      s.tcp.packets_received = std::max(0.0, std::round(16.0 - 20.0 * comm + 1.5 * gauss(net_rng)));
      samples.push_back(s);
    }
  }
  return TraceDataset(c.n_servers, c.inter_arrival, positions, std::move(samples), std::move(telemetry));
}

/// Mean and variance of N(mu, sigma) truncated to [floor, inf).
inline std::pair<double, double> truncated_moments(double mu, double sigma, double floor) {
  if (sigma == 0.0) return {std::max(mu, floor), 0.0};
  const double alpha = (floor - mu) / sigma;
  const double pdf = std::exp(-0.5 * alpha * alpha) / std::sqrt(2.0 * std::numbers::pi);
  const double tail = 0.5 * std::erfc(alpha / std::numbers::sqrt2);
  if (tail < 1e-300) return {floor, 0.0};
  const double lambda = pdf / tail;
  return {mu + sigma * lambda, sigma * sigma * (1.0 + alpha * lambda - lambda * lambda)};
}

/// Chooses the high-regime (mean, std) of a two-regime model so that the
/// stationary mixture of truncated Gaussians has the target mean and std.
/// `transition` fixes the regime occupancy; `low` stays as given.
inline RegimeModel calibrate_two_regime(double target_mean, double target_std, RegimeParams low,
                                        std::vector<std::vector<double>> transition, double floor) {
  require(transition.size() == 2, ErrorKind::kConfig, "calibration expects two regimes");
  const auto pi = stationary_distribution(transition);
  const double w_low = pi[0], w_high = pi[1];
  require(w_high > 0.0, ErrorKind::kConfig, "high regime never occupied");
  const auto [m_low, v_low] = truncated_moments(low.mean, low.stddev, floor);
  const double need_mean = (target_mean - w_low * m_low) / w_high;
  const double need_second = (target_std * target_std + target_mean * target_mean - w_low * (v_low + m_low * m_low)) / w_high;
  require(need_mean > floor && need_second > need_mean * need_mean, ErrorKind::kConfig,
          "calibration targets unreachable with this low regime and occupancy");
  const double need_var = need_second - need_mean * need_mean;

  // For each sigma pick mu hitting the truncated mean, then bisect sigma on
  // the truncated variance (monotone along that curve).
  auto mu_for = [&](double sigma) {
    double lo = floor - 50.0 * sigma - 10.0, hi = need_mean;
    for (int i = 0; i < 200; ++i) {
      const double mid = 0.5 * (lo + hi);
      (truncated_moments(mid, sigma, floor).first < need_mean ? lo : hi) = mid;
    }
    return 0.5 * (lo + hi);
  };
  double s_lo = 1e-9, s_hi = 50.0 * std::sqrt(need_var) + 1.0;
  for (int i = 0; i < 200; ++i) {
    const double mid = 0.5 * (s_lo + s_hi);
    (truncated_moments(mu_for(mid), mid, floor).second < need_var ? s_lo : s_hi) = mid;
  }
  const double sigma = 0.5 * (s_lo + s_hi);
  RegimeModel m;
  m.regimes = {low, {mu_for(sigma), sigma}};
  m.transition = std::move(transition);
  return m;
}

/// Sticky two-regime model whose stationary mixture has mean 0.178 s and
/// std 0.14 s with a 10 ms computation floor.
inline RegimeModel default_regime_model() {
  return calibrate_two_regime(0.178, 0.14, {0.12, 0.02}, {{0.99, 0.01}, {0.03, 0.97}}, 0.010);
}

inline SyntheticConfig default_synthetic_config(std::uint64_t seed = 1) {
  SyntheticConfig c;
  c.regime_model = default_regime_model();
  c.seed = seed;
  return c;
}

}  // namespace redoff
