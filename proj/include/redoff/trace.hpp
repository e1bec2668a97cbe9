#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "redoff/error.hpp"
#include "redoff/stats.hpp"

namespace redoff {

struct GeoPoint {
  double lat = 0.0;  // degrees
  double lon = 0.0;  // degrees
  double alt = 0.0;  // meters
  friend bool operator==(const GeoPoint&, const GeoPoint&) = default;
};

using Vec3 = std::array<double, 3>;

inline double norm(const Vec3& v) { return std::sqrt(v[0] * v[0] + v[1] * v[1] + v[2] * v[2]); }

struct TcpStats {
  double retransmissions = 0.0;
  double congestion_window = 0.0;
  double rtt_avg = 0.0;  // seconds
  double timeouts = 0.0;
  double packets_received = 0.0;
  friend bool operator==(const TcpStats&, const TcpStats&) = default;
};

/// One (task, server) record: the capture-to-output delay split into its
/// communication and computation parts, plus the link's network state.
struct PipelineSample {
  std::int64_t task_index = 0;
  int server_id = 1;
  double comm_delay = 0.0;
  double comp_delay = 0.0;
  double rssi = 0.0;  // dBm
  TcpStats tcp;
  int mcs_index = 0;
  int regime = -1;  // generator ground truth; -1 when unknown

  double total_delay() const noexcept { return comm_delay + comp_delay; }
  friend bool operator==(const PipelineSample&, const PipelineSample&) = default;
};

struct OnboardStats {
  double cpu = 0.0;
  double gpu = 0.0;
  double ram = 0.0;
  friend bool operator==(const OnboardStats&, const OnboardStats&) = default;
};

/// Vehicle state shared by every server for one task.
struct TelemetrySample {
  std::int64_t task_index = 0;
  GeoPoint position;
  Vec3 velocity{};      // m/s, east/north/up
  Vec3 acceleration{};  // m/s^2
  Vec3 gyroscope{};     // rad/s
  double heading = 0.0;  // degrees clockwise from north, [0, 360)
  OnboardStats onboard;
  friend bool operator==(const TelemetrySample&, const TelemetrySample&) = default;
};

/// Replayable ground truth: one PipelineSample per (task, server) pair and
/// one TelemetrySample per task. Immutable once constructed.
class TraceDataset {
 public:
  TraceDataset() = default;

  TraceDataset(int n_servers, double inter_arrival, std::vector<GeoPoint> server_positions,
               std::vector<PipelineSample> samples, std::vector<TelemetrySample> telemetry)
      : n_servers_(n_servers),
        inter_arrival_(inter_arrival),
        server_positions_(std::move(server_positions)),
        samples_(std::move(samples)),
        telemetry_(std::move(telemetry)) {
    validate();
  }

  int n_servers() const noexcept { return n_servers_; }
  double inter_arrival() const noexcept { return inter_arrival_; }
  std::int64_t n_tasks() const noexcept { return static_cast<std::int64_t>(telemetry_.size()); }
  const std::vector<GeoPoint>& server_positions() const noexcept { return server_positions_; }
  const std::vector<PipelineSample>& samples() const noexcept { return samples_; }
  const std::vector<TelemetrySample>& telemetry() const noexcept { return telemetry_; }

  const PipelineSample& sample(std::int64_t task, int server_id) const {
    return samples_[static_cast<std::size_t>(task) * static_cast<std::size_t>(n_servers_) +
                    static_cast<std::size_t>(server_id - 1)];
  }
  double delay(std::int64_t task, int server_id) const { return sample(task, server_id).total_delay(); }
  const TelemetrySample& telemetry(std::int64_t task) const {
    return telemetry_[static_cast<std::size_t>(task)];
  }
  const GeoPoint& server_position(int server_id) const {
    return server_positions_[static_cast<std::size_t>(server_id - 1)];
  }

  std::vector<double> server_delays(int server_id) const {
    std::vector<double> out;
    out.reserve(telemetry_.size());
    for (std::int64_t t = 0; t < n_tasks(); ++t) out.push_back(delay(t, server_id));
    return out;
  }

  /// Contiguous sub-trace [begin, end) with task indices rebased to 0.
  TraceDataset slice(std::int64_t begin, std::int64_t end) const {
    require(begin >= 0 && begin < end && end <= n_tasks(), ErrorKind::kValue, "invalid trace slice");
    std::vector<PipelineSample> samples(samples_.begin() + begin * n_servers_,
                                        samples_.begin() + end * n_servers_);
    std::vector<TelemetrySample> telemetry(telemetry_.begin() + begin, telemetry_.begin() + end);
    for (auto& s : samples) s.task_index -= begin;
    for (auto& t : telemetry) t.task_index -= begin;
    return TraceDataset(n_servers_, inter_arrival_, server_positions_, std::move(samples),
                        std::move(telemetry));
  }

  friend bool operator==(const TraceDataset&, const TraceDataset&) = default;

 private:
  void validate() const {
    require(n_servers_ >= 1, ErrorKind::kValue, "trace needs at least one server");
    require(inter_arrival_ > 0.0 && std::isfinite(inter_arrival_), ErrorKind::kValue,
            "inter-arrival time must be positive");
    require(static_cast<int>(server_positions_.size()) == n_servers_, ErrorKind::kIntegrity,
            "expected one position per server");
    require(samples_.size() == telemetry_.size() * static_cast<std::size_t>(n_servers_),
            ErrorKind::kIntegrity, "samples must cover every (task, server) pair");
    for (std::size_t t = 0; t < telemetry_.size(); ++t) {
      const auto& tel = telemetry_[t];
      require(tel.task_index == static_cast<std::int64_t>(t), ErrorKind::kIntegrity,
              "telemetry task indices must be contiguous from 0");
      require(tel.position.lat >= -90.0 && tel.position.lat <= 90.0 && tel.position.lon >= -180.0 &&
                  tel.position.lon <= 180.0,
              ErrorKind::kValue, "telemetry coordinates out of range at task " + std::to_string(t));
      for (double u : {tel.onboard.cpu, tel.onboard.gpu, tel.onboard.ram})
        require(u >= 0.0 && u <= 1.0, ErrorKind::kValue, "utilization outside [0,1]");
    }
    for (std::size_t k = 0; k < samples_.size(); ++k) {
      const auto& s = samples_[k];
      const auto task = static_cast<std::int64_t>(k / static_cast<std::size_t>(n_servers_));
      const int server = static_cast<int>(k % static_cast<std::size_t>(n_servers_)) + 1;
      require(s.task_index == task && s.server_id == server, ErrorKind::kIntegrity,
              "samples must be ordered by (task, server) with contiguous task indices");
      require(s.comm_delay >= 0.0 && s.comp_delay >= 0.0 && std::isfinite(s.comm_delay) &&
                  std::isfinite(s.comp_delay),
              ErrorKind::kValue, "negative or non-finite delay at task " + std::to_string(task));
    }
  }

  int n_servers_ = 0;
  double inter_arrival_ = 0.0;
  std::vector<GeoPoint> server_positions_;
  std::vector<PipelineSample> samples_;
  std::vector<TelemetrySample> telemetry_;
};

struct DelaySummary {
  int server_id = 0;  // 0 = pooled over all servers
  std::size_t count = 0;
  double mean = 0.0;
  double stddev = 0.0;  // population
  double min = 0.0;
  double max = 0.0;
  double peak_to_peak = 0.0;
  std::vector<std::pair<double, double>> quantiles;  // (level, value)
  std::vector<stats::CdfPoint> cdf;
};

inline constexpr std::array<double, 7> kSummaryQuantiles{0.05, 0.10, 0.25, 0.50, 0.75, 0.90, 0.95};

inline DelaySummary summarize_delays(std::span<const double> delays, int server_id) {
  require(!delays.empty(), ErrorKind::kEmptyInput, "no delays to summarize");
  DelaySummary s;
  s.server_id = server_id;
  s.count = delays.size();
  s.mean = stats::mean(delays);
  s.stddev = stats::stddev(delays);
  const auto [lo, hi] = std::minmax_element(delays.begin(), delays.end());
  s.min = *lo;
  s.max = *hi;
  s.peak_to_peak = s.max - s.min;
  for (double q : kSummaryQuantiles) s.quantiles.emplace_back(q, stats::quantile(delays, q));
  s.cdf = stats::ecdf(delays);
  return s;
}

/// Per-server summaries followed by the pooled summary (server_id 0).
inline std::vector<DelaySummary> trace_stats(const TraceDataset& dataset) {
  require(dataset.n_tasks() > 0, ErrorKind::kEmptyInput, "trace has no tasks");
  std::vector<DelaySummary> out;
  std::vector<double> pooled;
  for (int n = 1; n <= dataset.n_servers(); ++n) {
    auto d = dataset.server_delays(n);
    pooled.insert(pooled.end(), d.begin(), d.end());
    out.push_back(summarize_delays(d, n));
  }
  out.push_back(summarize_delays(pooled, 0));
  return out;
}

}  // namespace redoff
