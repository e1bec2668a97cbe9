#pragma once

#include <cstdint>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "redoff/config.hpp"
#include "redoff/drl.hpp"
#include "redoff/error.hpp"
#include "redoff/myopic.hpp"
#include "redoff/nn.hpp"

namespace redoff {

// Layout: 8-byte magic, u32 format version, u64 metadata length, metadata
// JSON, then raw network payloads in the order the metadata lists them.
inline constexpr char kCheckpointMagic[8] = {'R', 'E', 'D', 'O', 'F', 'F', 'C', 'K'};
inline constexpr std::uint32_t kCheckpointVersion = 1;
inline constexpr int kActionEncodingVersion = 1;  // index k <-> bitmask k+1

namespace detail {

inline void write_header(std::ostream& os, const nlohmann::json& meta) {
  os.write(kCheckpointMagic, sizeof(kCheckpointMagic));
  nn::io::put<std::uint32_t>(os, kCheckpointVersion);
  const auto text = meta.dump();
  nn::io::put<std::uint64_t>(os, text.size());
  os.write(text.data(), static_cast<std::streamsize>(text.size()));
}

inline nlohmann::json read_header(std::istream& is) {
  char magic[8];
  is.read(magic, sizeof(magic));
  require(static_cast<bool>(is) && std::equal(magic, magic + 8, kCheckpointMagic), ErrorKind::kSchema,
          "not a checkpoint file");
  require(nn::io::get<std::uint32_t>(is) == kCheckpointVersion, ErrorKind::kSchema, "unsupported checkpoint version");
  const auto len = nn::io::get<std::uint64_t>(is);
  require(len < (1ull << 30), ErrorKind::kSchema, "implausible checkpoint metadata length");
  std::string text(len, '\0');
  is.read(text.data(), static_cast<std::streamsize>(len));
  require(static_cast<bool>(is), ErrorKind::kSchema, "truncated checkpoint metadata");
  try {
    return nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::kSchema, std::string("checkpoint metadata: ") + e.what());
  }
}

inline FeatureCatalog checked_catalog(const nlohmann::json& meta) {
  FeatureCatalog c;
  try {
    c = config::catalog_from_json(meta.at("catalog"));
    require(std::to_string(c.hash()) == meta.at("catalog_hash").get<std::string>(), ErrorKind::kIntegrity,
            "checkpoint catalog does not match its recorded hash");
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::kSchema, std::string("checkpoint metadata: ") + e.what());
  }
  return c;
}

inline void expect_kind(const nlohmann::json& meta, const std::string& kind) {
  require(meta.value("kind", std::string{}) == kind, ErrorKind::kSchema, "checkpoint does not hold a " + kind);
}

inline std::ofstream open_out(const std::string& path) {
  std::ofstream os(path, std::ios::binary);
  require(static_cast<bool>(os), ErrorKind::kIo, "cannot write " + path);
  return os;
}

inline std::ifstream open_in(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  require(static_cast<bool>(is), ErrorKind::kIo, "cannot read " + path);
  return is;
}

}  // namespace detail

inline void write_predictors(std::ostream& os, const std::vector<PredictorModel>& models) {
  require(!models.empty(), ErrorKind::kValue, "no predictors to save");
  nlohmann::json meta;
  meta["kind"] = "predictor";
  meta["catalog"] = config::to_json(models.front().catalog);
  meta["catalog_hash"] = std::to_string(models.front().catalog.hash());
  meta["predictor"] = config::to_json(models.front().config);
  nlohmann::json servers = nlohmann::json::array();
  for (const auto& m : models) {
    require(m.catalog == models.front().catalog, ErrorKind::kValue, "predictors disagree on the catalog");
    servers.push_back({{"server_id", m.server_id}, {"final_train_loss", m.final_train_loss}});
  }
  meta["servers"] = servers;
  detail::write_header(os, meta);
  for (const auto& m : models) nn::write_net(os, m.net);
}

inline std::vector<PredictorModel> read_predictors(std::istream& is) {
  const auto meta = detail::read_header(is);
  detail::expect_kind(meta, "predictor");
  const auto catalog = detail::checked_catalog(meta);
  const auto cfg = config::predictor_from_json(meta.at("predictor"));
  std::vector<PredictorModel> models;
  for (const auto& s : meta.at("servers")) {
    PredictorModel m;
    m.server_id = s.at("server_id").get<int>();
    m.final_train_loss = s.at("final_train_loss").get<double>();
    m.config = cfg;
    m.catalog = catalog;
    m.net = nn::read_net<double>(is);
    require(m.net.input_size() == m.input_size() && m.net.output_size() == 2, ErrorKind::kSchema,
            "predictor network shape does not match its catalog");
    models.push_back(std::move(m));
  }
  return models;
}

inline void save_predictors(const std::vector<PredictorModel>& models, const std::string& path) {
  auto os = detail::open_out(path);
  write_predictors(os, models);
}

inline std::vector<PredictorModel> load_predictors(const std::string& path) {
  auto is = detail::open_in(path);
  return read_predictors(is);
}

inline void write_agent(std::ostream& os, const TrainedAgent& t) {
  nlohmann::json meta;
  meta["kind"] = "agent";
  meta["catalog"] = config::to_json(t.catalog);
  meta["catalog_hash"] = std::to_string(t.catalog.hash());
  meta["agent"] = config::to_json(t.agent.config());
  meta["cost"] = config::to_json(t.cost);
  meta["n_servers"] = t.agent.n_servers();
  meta["input_size"] = t.agent.input_size();
  meta["train_steps"] = t.agent.train_steps();
  meta["action_encoding_version"] = kActionEncodingVersion;
  detail::write_header(os, meta);
  nn::write_net(os, t.agent.online());
  nn::write_net(os, t.agent.target());
  nn::write_adam(os, t.agent.adam());
}

/// The training log is not stored; the returned agent has an empty log.
inline TrainedAgent read_agent(std::istream& is) {
  const auto meta = detail::read_header(is);
  detail::expect_kind(meta, "agent");
  require(meta.value("action_encoding_version", 0) == kActionEncodingVersion, ErrorKind::kSchema,
          "checkpoint uses an unknown action encoding");
  TrainedAgent t;
  t.catalog = detail::checked_catalog(meta);
  const int n = meta.at("n_servers").get<int>();
  const auto cfg = config::agent_from_json(meta.at("agent"));
  t.cost = config::cost_from_json(meta.at("cost"), n, 0.0, 0.175);
  const auto input = meta.at("input_size").get<std::size_t>();
  require(input == state_input_size(n, t.catalog.size(), cfg.history_length), ErrorKind::kSchema,
          "agent input size does not match its catalog");
  t.agent = QAgent(n, input, cfg);
  auto online = nn::read_net<double>(is);
  auto target = nn::read_net<double>(is);
  auto adam = nn::read_adam(is, online);
  t.agent.restore(std::move(online), std::move(target), std::move(adam), meta.at("train_steps").get<std::int64_t>());
  return t;
}

inline void save_agent(const TrainedAgent& t, const std::string& path) {
  auto os = detail::open_out(path);
  write_agent(os, t);
}

inline TrainedAgent load_agent(const std::string& path) {
  auto is = detail::open_in(path);
  return read_agent(is);
}

}  // namespace redoff
