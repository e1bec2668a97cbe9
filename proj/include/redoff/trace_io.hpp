#pragma once

#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "redoff/csv.hpp"
#include "redoff/trace.hpp"

namespace redoff {

/// Canonical trace fields. A TraceSchema maps each of them onto a column
/// name in the file, which is how foreign datasets get ingested.
enum class TraceField {
  kTaskIndex, kServerId, kCommDelay, kCompDelay, kRssi, kMcsIndex,
  kTcpRetransmissions, kTcpCongestionWindow, kTcpRttAvg, kTcpTimeouts, kTcpPacketsReceived,
  kRegime,
  kLatitude, kLongitude, kAltitude,
  kVelEast, kVelNorth, kVelUp,
  kAccX, kAccY, kAccZ,
  kGyroX, kGyroY, kGyroZ,
  kHeading, kCpuUtil, kGpuUtil, kRamUtil,
};

inline constexpr int kTraceFieldCount = static_cast<int>(TraceField::kRamUtil) + 1;

inline const std::vector<std::string>& default_trace_columns() {
  static const std::vector<std::string> cols{
      "task_index", "server_id", "comm_delay", "comp_delay", "rssi", "mcs_index",
      "tcp_retransmissions", "tcp_congestion_window", "tcp_rtt_avg", "tcp_timeouts",
      "tcp_packets_received", "regime", "latitude", "longitude", "altitude",
      "vel_east", "vel_north", "vel_up", "acc_x", "acc_y", "acc_z",
      "gyro_x", "gyro_y", "gyro_z", "heading", "cpu_util", "gpu_util", "ram_util"};
  return cols;
}

inline bool is_telemetry_field(TraceField f) { return f >= TraceField::kLatitude; }

struct TraceSchema {
  /// Column name for each canonical field, indexed by TraceField.
  std::vector<std::string> columns = default_trace_columns();
  /// Fields that may be absent from the file (filled with defaults).
  std::vector<TraceField> optional_fields{TraceField::kRegime};

  const std::string& column(TraceField f) const { return columns[static_cast<std::size_t>(f)]; }
  bool is_optional(TraceField f) const {
    return std::find(optional_fields.begin(), optional_fields.end(), f) != optional_fields.end();
  }
};

inline constexpr const char* kTraceMagic = "#redoff-trace ";

namespace detail {

inline std::vector<std::string> sample_fields(const PipelineSample& s, const TelemetrySample* tel) {
  using csv::format;
  std::vector<std::string> f{format(s.task_index), format(s.server_id), format(s.comm_delay),
                             format(s.comp_delay), format(s.rssi), format(s.mcs_index),
                             format(s.tcp.retransmissions), format(s.tcp.congestion_window),
                             format(s.tcp.rtt_avg), format(s.tcp.timeouts),
                             format(s.tcp.packets_received), format(s.regime)};
  if (tel) {
    for (double v : {tel->position.lat, tel->position.lon, tel->position.alt, tel->velocity[0],
                     tel->velocity[1], tel->velocity[2], tel->acceleration[0], tel->acceleration[1],
                     tel->acceleration[2], tel->gyroscope[0], tel->gyroscope[1], tel->gyroscope[2],
                     tel->heading, tel->onboard.cpu, tel->onboard.gpu, tel->onboard.ram})
      f.push_back(format(v));
  } else {
    f.resize(kTraceFieldCount);
  }
  return f;
}

}  // namespace detail

/// Serializes a trace: a JSON header line, a column header row, then one row
/// per (task, server). Telemetry columns are only filled on the server-1 row.
inline std::string trace_to_string(const TraceDataset& d) {
  nlohmann::json header;
  header["version"] = 1;
  header["n_servers"] = d.n_servers();
  header["inter_arrival"] = d.inter_arrival();
  header["n_tasks"] = d.n_tasks();
  auto positions = nlohmann::json::array();
  for (const auto& p : d.server_positions()) positions.push_back({p.lat, p.lon, p.alt});
  header["server_positions"] = positions;
  header["columns"] = default_trace_columns();

  std::ostringstream os;
  os << kTraceMagic << header.dump() << '\n';
  os << csv::join(default_trace_columns()) << '\n';
  for (const auto& s : d.samples()) {
    const TelemetrySample* tel = s.server_id == 1 ? &d.telemetry(s.task_index) : nullptr;
    os << csv::join(detail::sample_fields(s, tel)) << '\n';
  }
  return os.str();
}

inline void save_trace(const TraceDataset& d, const std::string& path) {
  csv::write_file(path, trace_to_string(d));
}

inline TraceDataset parse_trace(const std::string& text, const TraceSchema& schema = {}) {
  std::istringstream is(text);
  std::string line;
  require(static_cast<bool>(std::getline(is, line)) && line.rfind(kTraceMagic, 0) == 0,
          ErrorKind::kSchema, "trace must start with a '#redoff-trace {...}' header line");
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(line.substr(std::string(kTraceMagic).size()));
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::kSchema, std::string("malformed trace header: ") + e.what());
  }
  int n_servers = 0;
  double inter_arrival = 0.0;
  std::vector<GeoPoint> positions;
  std::vector<std::string> declared;
  try {
    n_servers = header.at("n_servers").get<int>();
    inter_arrival = header.at("inter_arrival").get<double>();
    declared = header.at("columns").get<std::vector<std::string>>();
    if (header.contains("server_positions")) {
      for (const auto& p : header.at("server_positions")) {
        require(p.size() == 3, ErrorKind::kSchema, "server position must be [lat, lon, alt]");
        positions.push_back({p[0].get<double>(), p[1].get<double>(), p[2].get<double>()});
      }
    } else {
      positions.assign(static_cast<std::size_t>(std::max(n_servers, 0)), GeoPoint{});
    }
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::kSchema, std::string("trace header missing N, T or columns: ") + e.what());
  }
  require(n_servers >= 1 && n_servers <= 64, ErrorKind::kSchema, "header declares invalid N");
  require(inter_arrival > 0.0, ErrorKind::kSchema, "header declares non-positive T");

  require(static_cast<bool>(std::getline(is, line)), ErrorKind::kSchema, "missing column row");
  const auto column_row = csv::split(line);
  require(column_row == declared, ErrorKind::kSchema, "column row does not match header schema");

  std::vector<int> index(kTraceFieldCount, -1);
  for (int f = 0; f < kTraceFieldCount; ++f) {
    const auto& name = schema.columns[static_cast<std::size_t>(f)];
    auto it = std::find(declared.begin(), declared.end(), name);
    if (it != declared.end()) {
      index[static_cast<std::size_t>(f)] = static_cast<int>(it - declared.begin());
    } else {
      require(schema.is_optional(static_cast<TraceField>(f)), ErrorKind::kSchema,
              "required column '" + name + "' not declared");
    }
  }

  std::vector<PipelineSample> samples;
  std::vector<TelemetrySample> telemetry;
  std::size_t row_no = 2;
  while (std::getline(is, line)) {
    ++row_no;
    if (line.empty() || line == "\r") continue;
    const auto fields = csv::split(line);
    const std::string ctx = "row " + std::to_string(row_no);
    require(fields.size() == declared.size(), ErrorKind::kSchema, ctx + " has wrong width");
    auto cell = [&](TraceField f) -> const std::string* {
      int i = index[static_cast<std::size_t>(f)];
      return i < 0 ? nullptr : &fields[static_cast<std::size_t>(i)];
    };
    auto num = [&](TraceField f, double fallback) {
      const auto* c = cell(f);
      if (!c || c->empty()) return fallback;
      return csv::parse_double(*c, ctx);
    };

    PipelineSample s;
    s.task_index = csv::parse_int(*cell(TraceField::kTaskIndex), ctx);
    s.server_id = static_cast<int>(csv::parse_int(*cell(TraceField::kServerId), ctx));
    for (auto f : {TraceField::kCommDelay, TraceField::kCompDelay})
      require(!cell(f)->empty(), ErrorKind::kIntegrity, ctx + " is missing a delay value");
    s.comm_delay = num(TraceField::kCommDelay, 0.0);
    s.comp_delay = num(TraceField::kCompDelay, 0.0);
    require(s.comm_delay >= 0.0 && s.comp_delay >= 0.0, ErrorKind::kValue, ctx + " has a negative delay");
    s.rssi = num(TraceField::kRssi, 0.0);
    s.mcs_index = static_cast<int>(num(TraceField::kMcsIndex, 0.0));
    s.tcp.retransmissions = num(TraceField::kTcpRetransmissions, 0.0);
    s.tcp.congestion_window = num(TraceField::kTcpCongestionWindow, 0.0);
    s.tcp.rtt_avg = num(TraceField::kTcpRttAvg, 0.0);
    s.tcp.timeouts = num(TraceField::kTcpTimeouts, 0.0);
    s.tcp.packets_received = num(TraceField::kTcpPacketsReceived, 0.0);
    s.regime = static_cast<int>(num(TraceField::kRegime, -1.0));

    const auto expected_task = static_cast<std::int64_t>(samples.size() / static_cast<std::size_t>(n_servers));
    const int expected_server = static_cast<int>(samples.size() % static_cast<std::size_t>(n_servers)) + 1;
    require(s.task_index == expected_task && s.server_id == expected_server, ErrorKind::kIntegrity,
            ctx + ": expected task " + std::to_string(expected_task) + " server " +
                std::to_string(expected_server));

    if (s.server_id == 1) {
      TelemetrySample t;
      t.task_index = s.task_index;
      auto tel = [&](TraceField f) {
        const auto* c = cell(f);
        require(c && !c->empty(), ErrorKind::kIntegrity, ctx + " is missing telemetry");
        return csv::parse_double(*c, ctx);
      };
      t.position = {tel(TraceField::kLatitude), tel(TraceField::kLongitude), tel(TraceField::kAltitude)};
      t.velocity = {tel(TraceField::kVelEast), tel(TraceField::kVelNorth), tel(TraceField::kVelUp)};
      t.acceleration = {tel(TraceField::kAccX), tel(TraceField::kAccY), tel(TraceField::kAccZ)};
      t.gyroscope = {tel(TraceField::kGyroX), tel(TraceField::kGyroY), tel(TraceField::kGyroZ)};
      t.heading = tel(TraceField::kHeading);
      t.onboard = {tel(TraceField::kCpuUtil), tel(TraceField::kGpuUtil), tel(TraceField::kRamUtil)};
      telemetry.push_back(t);
    }
    samples.push_back(s);
  }
  require(samples.size() % static_cast<std::size_t>(n_servers) == 0, ErrorKind::kIntegrity,
          "last task does not cover every server");
  return TraceDataset(n_servers, inter_arrival, std::move(positions), std::move(samples),
                      std::move(telemetry));
}

inline TraceDataset load_trace(const std::string& path, const TraceSchema& schema = {}) {
  return parse_trace(csv::read_file(path), schema);
}

/// Stats as long-format CSV: statistic,server,value. Server 0 is pooled.
inline std::string stats_to_csv(const std::vector<DelaySummary>& summaries) {
  csv::Table t;
  t.header = {"statistic", "server", "value"};
  auto row = [&](const std::string& stat, int server, double v) {
    t.rows.push_back({stat, std::to_string(server), csv::format(v)});
  };
  for (const auto& s : summaries) {
    row("count", s.server_id, static_cast<double>(s.count));
    row("mean", s.server_id, s.mean);
    row("std", s.server_id, s.stddev);
    row("min", s.server_id, s.min);
    row("max", s.server_id, s.max);
    row("peak_to_peak", s.server_id, s.peak_to_peak);
    for (auto [q, v] : s.quantiles) {
      std::ostringstream name;
      name << "q" << static_cast<int>(std::lround(q * 100));
      row(name.str(), s.server_id, v);
    }
  }
  return t.to_string();
}

}  // namespace redoff
