#pragma once

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "redoff/error.hpp"
#include "redoff/geo.hpp"
#include "redoff/server_set.hpp"
#include "redoff/trace.hpp"

namespace redoff {

/// Application and network features are only observed through a selected
/// server; telemetry is always observed.
enum class FeatureBlock { kApplication, kTelemetry, kNetwork };

inline const char* to_string(FeatureBlock b) {
  switch (b) {
    case FeatureBlock::kApplication: return "application";
    case FeatureBlock::kTelemetry: return "telemetry";
    case FeatureBlock::kNetwork: return "network";
  }
  return "?";
}

inline FeatureBlock parse_block(const std::string& s) {
  if (s == "application") return FeatureBlock::kApplication;
  if (s == "telemetry") return FeatureBlock::kTelemetry;
  if (s == "network") return FeatureBlock::kNetwork;
  fail(ErrorKind::kConfig, "unknown feature block '" + s + "'");
}

inline bool is_masked(FeatureBlock b) { return b != FeatureBlock::kTelemetry; }

enum class FeatureSource {
  kDelay, kCommDelay, kCompDelay,
  kRssi, kMcsIndex, kTcpRetransmissions, kTcpCongestionWindow, kTcpRttAvg, kTcpTimeouts,
  kTcpPacketsReceived,
  kAltitude, kSpeed, kVerticalSpeed, kAccelerationNorm, kAccX, kAccY, kAccZ, kGyroscopeNorm,
  kInclination, kHeading, kCpuUtil, kGpuUtil, kRamUtil,
  kDistance, kAzimuth, kElevation, kRelativeHeading, kRadialSpeed,
  kRegime,
};

struct FeatureKind {
  const char* name;
  FeatureSource source;
  FeatureBlock block;
  const char* units;
};

/// Every feature name the extractor understands.
inline const std::vector<FeatureKind>& feature_registry() {
  using S = FeatureSource;
  using B = FeatureBlock;
  static const std::vector<FeatureKind> r{
      {"delay", S::kDelay, B::kApplication, "s"},
      {"comm_delay", S::kCommDelay, B::kApplication, "s"},
      {"comp_delay", S::kCompDelay, B::kApplication, "s"},
      {"rssi", S::kRssi, B::kNetwork, "dBm"},
      {"mcs_index", S::kMcsIndex, B::kNetwork, "index"},
      {"tcp_retransmissions", S::kTcpRetransmissions, B::kNetwork, "count"},
      {"tcp_congestion_window", S::kTcpCongestionWindow, B::kNetwork, "segments"},
      {"tcp_rtt_avg", S::kTcpRttAvg, B::kNetwork, "s"},
      {"tcp_timeouts", S::kTcpTimeouts, B::kNetwork, "count"},
      {"tcp_packets_received", S::kTcpPacketsReceived, B::kNetwork, "count"},
      {"altitude", S::kAltitude, B::kTelemetry, "m"},
      {"speed", S::kSpeed, B::kTelemetry, "m/s"},
      {"vertical_speed", S::kVerticalSpeed, B::kTelemetry, "m/s"},
      {"acceleration_norm", S::kAccelerationNorm, B::kTelemetry, "m/s^2"},
      {"acc_x", S::kAccX, B::kTelemetry, "m/s^2"},
      {"acc_y", S::kAccY, B::kTelemetry, "m/s^2"},
      {"acc_z", S::kAccZ, B::kTelemetry, "m/s^2"},
      {"gyroscope_norm", S::kGyroscopeNorm, B::kTelemetry, "rad/s"},
      {"inclination", S::kInclination, B::kTelemetry, "deg"},
      {"heading", S::kHeading, B::kTelemetry, "deg"},
      {"cpu_util", S::kCpuUtil, B::kTelemetry, "fraction"},
      {"gpu_util", S::kGpuUtil, B::kTelemetry, "fraction"},
      {"ram_util", S::kRamUtil, B::kTelemetry, "fraction"},
      {"distance", S::kDistance, B::kTelemetry, "m"},
      {"azimuth", S::kAzimuth, B::kTelemetry, "deg"},
      {"elevation", S::kElevation, B::kTelemetry, "deg"},
      {"relative_heading", S::kRelativeHeading, B::kTelemetry, "deg"},
      {"radial_speed", S::kRadialSpeed, B::kTelemetry, "m/s"},
      // Generator ground truth exposed as side information; only meaningful
      // on synthetic traces.
      {"regime", S::kRegime, B::kTelemetry, "index"},
  };
  return r;
}

inline const FeatureKind& find_feature_kind(const std::string& name) {
  for (const auto& k : feature_registry())
    if (name == k.name) return k;
  fail(ErrorKind::kConfig, "unknown feature '" + name + "'");
}

/// Raw (unnormalized) value of one feature for a (task, server) pair.
inline double extract_feature(FeatureSource src, const TraceDataset& d, std::int64_t task, int server) {
  using S = FeatureSource;
  const auto& tel = d.telemetry(task);
  switch (src) {
    case S::kDelay: return d.sample(task, server).total_delay();
    case S::kCommDelay: return d.sample(task, server).comm_delay;
    case S::kCompDelay: return d.sample(task, server).comp_delay;
    case S::kRssi: return d.sample(task, server).rssi;
    case S::kMcsIndex: return d.sample(task, server).mcs_index;
    case S::kTcpRetransmissions: return d.sample(task, server).tcp.retransmissions;
    case S::kTcpCongestionWindow: return d.sample(task, server).tcp.congestion_window;
    case S::kTcpRttAvg: return d.sample(task, server).tcp.rtt_avg;
    case S::kTcpTimeouts: return d.sample(task, server).tcp.timeouts;
    case S::kTcpPacketsReceived: return d.sample(task, server).tcp.packets_received;
    case S::kAltitude: return tel.position.alt;
    case S::kSpeed: return norm(tel.velocity);
    case S::kVerticalSpeed: return tel.velocity[2];
    case S::kAccelerationNorm: return norm(tel.acceleration);
    case S::kAccX: return tel.acceleration[0];
    case S::kAccY: return tel.acceleration[1];
    case S::kAccZ: return tel.acceleration[2];
    case S::kGyroscopeNorm: return norm(tel.gyroscope);
    case S::kInclination:
      return geo::rad2deg(std::atan2(std::hypot(tel.acceleration[0], tel.acceleration[1]), 9.80665));
    case S::kHeading: return tel.heading;
    case S::kCpuUtil: return tel.onboard.cpu;
    case S::kGpuUtil: return tel.onboard.gpu;
    case S::kRamUtil: return tel.onboard.ram;
    case S::kDistance: return geo::polar_relative(tel.position, d.server_position(server)).distance;
    case S::kAzimuth: return geo::polar_relative(tel.position, d.server_position(server)).azimuth;
    case S::kElevation: return geo::polar_relative(tel.position, d.server_position(server)).elevation;
    case S::kRelativeHeading:
      return geo::relative_heading(geo::wrap_360(tel.heading),
                                   geo::polar_relative(tel.position, d.server_position(server)).azimuth);
    case S::kRadialSpeed: {
      // Velocity component along the server -> drone direction (positive when receding).
      const auto& srv = d.server_position(server);
      const double north = geo::deg2rad(tel.position.lat - srv.lat) * geo::kEarthRadiusM;
      const double east = geo::deg2rad(tel.position.lon - srv.lon) * geo::kEarthRadiusM *
                          std::cos(geo::deg2rad(srv.lat));
      const double up = tel.position.alt - srv.alt;
      const double r = std::sqrt(east * east + north * north + up * up);
      if (r == 0.0) return 0.0;
      return (tel.velocity[0] * east + tel.velocity[1] * north + tel.velocity[2] * up) / r;
    }
    case S::kRegime: return d.sample(task, server).regime;
  }
  return 0.0;
}

struct FeatureSpec {
  std::string name;
  FeatureBlock block = FeatureBlock::kNetwork;
  std::string units;
  double mean = 0.0;
  double stddev = 1.0;
  int lag_step = 1;  // tasks between consecutive lag slots
};

/// Ordered feature list with per-feature normalization.
class FeatureCatalog {
 public:
  FeatureCatalog() = default;
  explicit FeatureCatalog(std::vector<FeatureSpec> entries) : entries_(std::move(entries)) { resolve(); }

  const std::vector<FeatureSpec>& entries() const noexcept { return entries_; }
  std::size_t size() const noexcept { return entries_.size(); }
  const FeatureSpec& operator[](std::size_t i) const { return entries_[i]; }
  FeatureSource source(std::size_t i) const { return sources_[i]; }
  int max_lag_step() const {
    int m = 1;
    for (const auto& e : entries_) m = std::max(m, e.lag_step);
    return m;
  }
  std::optional<std::size_t> index_of(const std::string& name) const {
    for (std::size_t i = 0; i < entries_.size(); ++i)
      if (entries_[i].name == name) return i;
    return std::nullopt;
  }

  double normalize(std::size_t f, double x) const { return (x - entries_[f].mean) / entries_[f].stddev; }
  double denormalize(std::size_t f, double z) const { return z * entries_[f].stddev + entries_[f].mean; }

  /// Replaces every entry's (mean, std) with statistics over tasks
  /// [begin, end) of `d`, pooled across servers. Constant features get std 1.
  FeatureCatalog fitted(const TraceDataset& d, std::int64_t begin, std::int64_t end) const {
    require(begin >= 0 && begin < end && end <= d.n_tasks(), ErrorKind::kValue, "invalid fit range");
    auto out = entries_;
    for (std::size_t f = 0; f < entries_.size(); ++f) {
      double sum = 0, sq = 0, count = 0;
      for (std::int64_t t = begin; t < end; ++t)
        for (int n = 1; n <= d.n_servers(); ++n) {
          const double x = extract_feature(sources_[f], d, t, n);
          sum += x;
          sq += x * x;
          count += 1;
        }
      const double m = sum / count;
      const double var = std::max(0.0, sq / count - m * m);
      out[f].mean = m;
      out[f].stddev = var > 1e-18 ? std::sqrt(var) : 1.0;
    }
    return FeatureCatalog(std::move(out));
  }

  /// FNV-1a over the canonical description; stored in checkpoints.
  std::uint64_t hash() const {
    std::uint64_t h = 1469598103934665603ull;
    auto mix = [&](const std::string& s) {
      for (unsigned char ch : s) {
        h ^= ch;
        h *= 1099511628211ull;
      }
      h ^= 0xff;
      h *= 1099511628211ull;
    };
    for (const auto& e : entries_) {
      mix(e.name);
      mix(to_string(e.block));
      mix(csv_double(e.mean));
      mix(csv_double(e.stddev));
      mix(std::to_string(e.lag_step));
    }
    return h;
  }

  friend bool operator==(const FeatureCatalog& a, const FeatureCatalog& b) { return a.hash() == b.hash(); }

 private:
  static std::string csv_double(double v) {
    char buf[64];
    auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
  }

  void resolve() {
    sources_.clear();
    for (std::size_t i = 0; i < entries_.size(); ++i) {
      const auto& e = entries_[i];
      const auto& kind = find_feature_kind(e.name);
      require(kind.block == e.block, ErrorKind::kConfig,
              "feature '" + e.name + "' belongs to block " + to_string(kind.block));
      require(e.stddev > 0.0 && std::isfinite(e.stddev) && std::isfinite(e.mean), ErrorKind::kConfig,
              "feature '" + e.name + "' needs std > 0");
      require(e.lag_step >= 1, ErrorKind::kConfig, "lag_step must be >= 1");
      for (std::size_t j = 0; j < i; ++j)
        require(entries_[j].name != e.name, ErrorKind::kConfig, "duplicate feature '" + e.name + "'");
      sources_.push_back(kind.source);
    }
  }

  std::vector<FeatureSpec> entries_;
  std::vector<FeatureSource> sources_;
};

inline FeatureCatalog make_catalog(const std::vector<std::string>& names) {
  std::vector<FeatureSpec> specs;
  for (const auto& n : names) {
    const auto& k = find_feature_kind(n);
    specs.push_back({n, k.block, k.units, 0.0, 1.0, 1});
  }
  return FeatureCatalog(std::move(specs));
}

/// Full per-server catalog: delays, TCP/802.11 link state, and telemetry.
inline FeatureCatalog default_catalog() {
  return make_catalog({"delay", "comm_delay", "comp_delay", "rssi", "mcs_index", "tcp_retransmissions",
                       "tcp_congestion_window", "tcp_rtt_avg", "tcp_timeouts", "tcp_packets_received",
                       "altitude", "speed", "vertical_speed", "acceleration_norm", "acc_x", "acc_y", "acc_z",
                       "gyroscope_norm", "inclination", "heading", "cpu_util", "gpu_util", "ram_util",
                       "distance", "azimuth", "elevation", "relative_heading", "radial_speed"});
}

/// Small catalog used where training time matters.
inline FeatureCatalog compact_catalog() {
  return make_catalog({"delay", "tcp_rtt_avg", "tcp_retransmissions", "rssi", "distance"});
}

/// Per-task selections plus, for each (task, server), the most recent task at
/// or before it where that server was selected.
class SelectionHistory {
 public:
  explicit SelectionHistory(int n_servers) : n_servers_(n_servers) {
    require(n_servers >= 1 && n_servers <= kMaxServers, ErrorKind::kValue, "invalid server count");
  }

  SelectionHistory(int n_servers, const std::vector<ServerSet>& sets) : SelectionHistory(n_servers) {
    for (const auto& s : sets) push_back(s);
  }

  void push_back(const ServerSet& set) {
    require(!set.empty(), ErrorKind::kContractViolation, "selection must be nonempty");
    require((set.mask() >> n_servers_) == 0, ErrorKind::kContractViolation, "selection references unknown server");
    const auto t = static_cast<std::int64_t>(sets_.size());
    for (int n = 1; n <= n_servers_; ++n) {
      std::int64_t prev = t == 0 ? -1 : last_[static_cast<std::size_t>((t - 1) * n_servers_ + n - 1)];
      last_.push_back(set.contains(n) ? t : prev);
    }
    sets_.push_back(set);
  }

  std::int64_t size() const noexcept { return static_cast<std::int64_t>(sets_.size()); }
  int n_servers() const noexcept { return n_servers_; }
  const ServerSet& operator[](std::int64_t t) const { return sets_[static_cast<std::size_t>(t)]; }
  const std::vector<ServerSet>& sets() const noexcept { return sets_; }

  /// Last task <= t that selected `server`, or -1.
  std::int64_t last_selected(int server, std::int64_t t) const {
    return last_[static_cast<std::size_t>(t * n_servers_ + server - 1)];
  }

 private:
  int n_servers_;
  std::vector<ServerSet> sets_;
  std::vector<std::int64_t> last_;
};

/// F x L normalized feature values for one server. Column j is lag slot j:
/// slot L-1 is the newest task, slot 0 the oldest.
struct FeatureMatrix {
  int server_id = 0;
  std::size_t n_features = 0;
  std::size_t history = 0;
  std::vector<double> values;  // row-major F x L
  std::vector<bool> mask;      // true = observed

  double value(std::size_t f, std::size_t j) const { return values[f * history + j]; }
  bool observed(std::size_t f, std::size_t j) const { return mask[f * history + j]; }
  friend bool operator==(const FeatureMatrix&, const FeatureMatrix&) = default;
};

struct FeatureState {
  std::int64_t task_index = 0;
  std::vector<FeatureMatrix> per_server;
  std::vector<std::int64_t> staleness;  // N x F, tasks since last observation

  std::int64_t age(int server_id, std::size_t f) const {
    return staleness[static_cast<std::size_t>(server_id - 1) * per_server.front().n_features + f];
  }
  friend bool operator==(const FeatureState&, const FeatureState&) = default;
};

/// State for task i over lag slots i-L+1 .. i. Masked features of a server
/// not selected at a slot carry the last observed value (normalized 0 if
/// never observed) with mask false. `history` must cover tasks 0..i.
inline FeatureState build_state(const TraceDataset& d, const FeatureCatalog& catalog, std::int64_t i,
                                std::size_t L, const SelectionHistory& history) {
  require(L >= 1, ErrorKind::kValue, "history length L must be >= 1");
  require(catalog.size() >= 1, ErrorKind::kValue, "catalog is empty");
  const auto reach = static_cast<std::int64_t>(L - 1) * catalog.max_lag_step();
  require(i >= reach, ErrorKind::kInsufficientHistory,
          "task " + std::to_string(i) + " has fewer than L lags of history");
  require(i < d.n_tasks(), ErrorKind::kValue, "task index beyond trace");
  require(history.size() > i && history.n_servers() == d.n_servers(), ErrorKind::kContractViolation,
          "selection history must cover every task up to the state index");

  const std::size_t F = catalog.size();
  FeatureState s;
  s.task_index = i;
  s.staleness.assign(static_cast<std::size_t>(d.n_servers()) * F, 0);
  for (int n = 1; n <= d.n_servers(); ++n) {
    FeatureMatrix m;
    m.server_id = n;
    m.n_features = F;
    m.history = L;
    m.values.assign(F * L, 0.0);
    m.mask.assign(F * L, true);
    const std::int64_t last_now = history.last_selected(n, i);
    for (std::size_t f = 0; f < F; ++f) {
      const auto& spec = catalog[f];
      const bool masked = is_masked(spec.block);
      if (masked)
        s.staleness[static_cast<std::size_t>(n - 1) * F + f] = last_now >= 0 ? i - last_now : i + 1;
      for (std::size_t j = 0; j < L; ++j) {
        const std::int64_t task = i - static_cast<std::int64_t>(L - 1 - j) * spec.lag_step;
        double z = 0.0;
        bool seen = true;
        if (!masked) {
          z = catalog.normalize(f, extract_feature(catalog.source(f), d, task, n));
        } else {
          const std::int64_t last = history.last_selected(n, task);
          seen = last == task;
          if (last >= 0) z = catalog.normalize(f, extract_feature(catalog.source(f), d, last, n));
        }
        m.values[f * L + j] = z;
        m.mask[f * L + j] = seen;
      }
    }
    s.per_server.push_back(std::move(m));
  }
  return s;
}

/// Hides the `missing` most recent slots of every masked feature of one
/// server, carrying the newest remaining value forward.
inline void mask_recent(FeatureState& s, const FeatureCatalog& catalog, int server_id, std::size_t missing) {
  auto& m = s.per_server[static_cast<std::size_t>(server_id - 1)];
  require(missing < m.history, ErrorKind::kValue, "cannot hide every lag slot");
  if (missing == 0) return;
  const std::size_t src = m.history - 1 - missing;
  for (std::size_t f = 0; f < m.n_features; ++f) {
    if (!is_masked(catalog[f].block)) continue;
    for (std::size_t j = src + 1; j < m.history; ++j) {
      m.values[f * m.history + j] = m.values[f * m.history + src];
      m.mask[f * m.history + j] = false;
    }
    auto& age = s.staleness[static_cast<std::size_t>(server_id - 1) * m.n_features + f];
    age = std::max<std::int64_t>(age, static_cast<std::int64_t>(missing));
  }
}

inline constexpr double kDefaultAgeCap = 32.0;

/// Network input for one server: F*L values, F*L mask bits, F scaled ages.
inline std::size_t server_input_size(std::size_t F, std::size_t L) { return 2 * F * L + F; }
inline std::size_t state_input_size(int N, std::size_t F, std::size_t L) {
  return static_cast<std::size_t>(N) * server_input_size(F, L);
}

inline void encode_server_into(const FeatureState& s, int server_id, double age_cap, double* out) {
  const auto& m = s.per_server[static_cast<std::size_t>(server_id - 1)];
  const std::size_t FL = m.n_features * m.history;
  for (std::size_t k = 0; k < FL; ++k) out[k] = m.values[k];
  for (std::size_t k = 0; k < FL; ++k) out[FL + k] = m.mask[k] ? 1.0 : 0.0;
  for (std::size_t f = 0; f < m.n_features; ++f)
    out[2 * FL + f] = std::min(static_cast<double>(s.age(server_id, f)), age_cap) / age_cap;
}

inline std::vector<double> encode_server(const FeatureState& s, int server_id, double age_cap = kDefaultAgeCap) {
  const auto& m = s.per_server.front();
  std::vector<double> out(server_input_size(m.n_features, m.history));
  encode_server_into(s, server_id, age_cap, out.data());
  return out;
}

/// Flattened agent input: all values (server-major, then feature, then lag),
/// then all mask bits in the same order, then ages (server-major, feature).
inline std::vector<double> flatten(const FeatureState& s, double age_cap = kDefaultAgeCap) {
  const auto& first = s.per_server.front();
  const std::size_t F = first.n_features, L = first.history, N = s.per_server.size();
  std::vector<double> out(N * (2 * F * L + F));
  for (std::size_t n = 0; n < N; ++n) {
    const auto& m = s.per_server[n];
    for (std::size_t k = 0; k < F * L; ++k) {
      out[n * F * L + k] = m.values[k];
      out[N * F * L + n * F * L + k] = m.mask[k] ? 1.0 : 0.0;
    }
    for (std::size_t f = 0; f < F; ++f)
      out[2 * N * F * L + n * F + f] =
          std::min(static_cast<double>(s.staleness[n * F + f]), age_cap) / age_cap;
  }
  return out;
}

}  // namespace redoff
