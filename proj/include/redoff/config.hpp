#pragma once

#include <set>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "redoff/drl.hpp"
#include "redoff/error.hpp"
#include "redoff/features.hpp"
#include "redoff/myopic.hpp"
#include "redoff/synthetic.hpp"

namespace redoff::config {

using nlohmann::json;

/// Reads optional keys from one JSON object and rejects keys nobody asked for.
class ObjectReader {
 public:
  ObjectReader(const json& j, std::string where) : j_(j), where_(std::move(where)) {
    require(j.is_object(), ErrorKind::kConfig, where_ + " must be a JSON object");
  }

  template <typename T>
  void get(const char* key, T& out) {
    seen_.insert(key);
    if (!j_.contains(key)) return;
    try {
      out = j_.at(key).get<T>();
    } catch (const json::exception& e) {
      fail(ErrorKind::kConfig, where_ + "." + key + ": " + e.what());
    }
  }

  bool has(const char* key) {
    seen_.insert(key);
    return j_.contains(key);
  }
  const json& at(const char* key) const { return j_.at(key); }

  void finish() const {
    for (const auto& [k, v] : j_.items())
      require(seen_.count(k) > 0, ErrorKind::kConfig, "unknown key '" + k + "' in " + where_);
  }

 private:
  const json& j_;
  std::string where_;
  std::set<std::string> seen_;
};

inline json parse_json(const std::string& text, const std::string& where) {
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    fail(ErrorKind::kConfig, where + ": " + e.what());
  }
}

// -- feature catalog -------------------------------------------------------

inline json to_json(const FeatureCatalog& c) {
  json arr = json::array();
  for (const auto& e : c.entries())
    arr.push_back({{"name", e.name}, {"block", to_string(e.block)}, {"units", e.units}, {"mean", e.mean},
                   {"stddev", e.stddev}, {"lag_step", e.lag_step}});
  return arr;
}

/// Accepts "default", "compact", a list of names, or a list of full entries.
inline FeatureCatalog catalog_from_json(const json& j) {
  if (j.is_string()) {
    const auto s = j.get<std::string>();
    if (s == "default") return default_catalog();
    if (s == "compact") return compact_catalog();
    fail(ErrorKind::kConfig, "unknown catalog preset '" + s + "'");
  }
  require(j.is_array() && !j.empty(), ErrorKind::kConfig, "catalog must be a preset name or a nonempty list");
  std::vector<FeatureSpec> specs;
  for (const auto& e : j) {
    if (e.is_string()) {
      const auto& k = find_feature_kind(e.get<std::string>());
      specs.push_back({e.get<std::string>(), k.block, k.units, 0.0, 1.0, 1});
      continue;
    }
    ObjectReader r(e, "catalog entry");
    FeatureSpec s;
    r.get("name", s.name);
    const auto& k = find_feature_kind(s.name);
    s.block = k.block;
    s.units = k.units;
    std::string block;
    r.get("block", block);
    if (!block.empty()) s.block = parse_block(block);
    r.get("units", s.units);
    r.get("mean", s.mean);
    r.get("stddev", s.stddev);
    r.get("lag_step", s.lag_step);
    r.finish();
    specs.push_back(s);
  }
  return FeatureCatalog(std::move(specs));
}

// -- synthetic generator ---------------------------------------------------

inline json to_json(const RegimeModel& m) {
  json regimes = json::array();
  for (const auto& r : m.regimes) regimes.push_back({{"mean", r.mean}, {"stddev", r.stddev}});
  return {{"regimes", regimes}, {"transition", m.transition}};
}

inline RegimeModel regime_model_from_json(const json& j) {
  ObjectReader r(j, "regime_model");
  RegimeModel m;
  if (r.has("regimes")) {
    for (const auto& e : j.at("regimes")) {
      ObjectReader rr(e, "regime");
      RegimeParams p;
      rr.get("mean", p.mean);
      rr.get("stddev", p.stddev);
      rr.finish();
      m.regimes.push_back(p);
    }
  }
  r.get("transition", m.transition);
  r.finish();
  return m;
}

inline json to_json(const SyntheticConfig& c) {
  json per = json::array();
  for (const auto& m : c.per_server) per.push_back(to_json(m));
  const auto& t = c.telemetry;
  return {{"n_servers", c.n_servers},
          {"n_tasks", c.n_tasks},
          {"inter_arrival", c.inter_arrival},
          {"regime_model", to_json(c.regime_model)},
          {"per_server", per},
          {"comp_delay", c.comp_delay},
          {"telemetry",
           {{"radius_m", t.radius_m},
            {"altitude_min_m", t.altitude_min_m},
            {"altitude_max_m", t.altitude_max_m},
            {"speed_min", t.speed_min},
            {"speed_max", t.speed_max},
            {"waypoint_tolerance_m", t.waypoint_tolerance_m},
            {"max_acceleration", t.max_acceleration},
            {"rate_hz", t.rate_hz}}},
          {"rssi",
           {{"reference_power_dbm", c.rssi.reference_power_dbm},
            {"reference_distance_m", c.rssi.reference_distance_m},
            {"path_loss_exponent", c.rssi.path_loss_exponent},
            {"shadowing_std_db", c.rssi.shadowing_std_db}}},
          {"origin", {{"lat", c.origin.lat}, {"lon", c.origin.lon}, {"alt", c.origin.alt}}},
          {"server_ring_radius_m", c.server_ring_radius_m},
          {"server_altitude_m", c.server_altitude_m},
          {"seed", c.seed}};
}

inline SyntheticConfig synthetic_from_json(const json& j) {
  ObjectReader r(j, "synthetic");
  SyntheticConfig c = default_synthetic_config();
  r.get("n_servers", c.n_servers);
  r.get("n_tasks", c.n_tasks);
  r.get("inter_arrival", c.inter_arrival);
  if (r.has("regime_model")) c.regime_model = regime_model_from_json(j.at("regime_model"));
  if (r.has("per_server"))
    for (const auto& m : j.at("per_server")) c.per_server.push_back(regime_model_from_json(m));
  r.get("comp_delay", c.comp_delay);
  if (r.has("telemetry")) {
    ObjectReader t(j.at("telemetry"), "telemetry");
    auto& w = c.telemetry;
    t.get("radius_m", w.radius_m);
    t.get("altitude_min_m", w.altitude_min_m);
    t.get("altitude_max_m", w.altitude_max_m);
    t.get("speed_min", w.speed_min);
    t.get("speed_max", w.speed_max);
    t.get("waypoint_tolerance_m", w.waypoint_tolerance_m);
    t.get("max_acceleration", w.max_acceleration);
    t.get("rate_hz", w.rate_hz);
    t.finish();
  }
  if (r.has("rssi")) {
    ObjectReader t(j.at("rssi"), "rssi");
    t.get("reference_power_dbm", c.rssi.reference_power_dbm);
    t.get("reference_distance_m", c.rssi.reference_distance_m);
    t.get("path_loss_exponent", c.rssi.path_loss_exponent);
    t.get("shadowing_std_db", c.rssi.shadowing_std_db);
    t.finish();
  }
  if (r.has("origin")) {
    ObjectReader t(j.at("origin"), "origin");
    t.get("lat", c.origin.lat);
    t.get("lon", c.origin.lon);
    t.get("alt", c.origin.alt);
    t.finish();
  }
  r.get("server_ring_radius_m", c.server_ring_radius_m);
  r.get("server_altitude_m", c.server_altitude_m);
  r.get("seed", c.seed);
  r.finish();
  try {
    validate(c);
  } catch (const Error& e) {
    fail(ErrorKind::kConfig, e.what());
  }
  return c;
}

// -- training configs ------------------------------------------------------

inline json to_json(const nn::AdamConfig& a) {
  return {{"learning_rate", a.learning_rate}, {"beta1", a.beta1}, {"beta2", a.beta2}, {"epsilon", a.epsilon}};
}

inline nn::AdamConfig adam_from_json(const json& j) {
  ObjectReader r(j, "adam");
  nn::AdamConfig a;
  r.get("learning_rate", a.learning_rate);
  r.get("beta1", a.beta1);
  r.get("beta2", a.beta2);
  r.get("epsilon", a.epsilon);
  r.finish();
  return a;
}

inline json to_json(const WindowPredictorConfig& c) {
  return {{"window", c.window},       {"exceed_count", c.exceed_count},
          {"delta_star", c.delta_star}, {"hidden_sizes", c.hidden_sizes},
          {"epochs", c.epochs},       {"batch_size", c.batch_size},
          {"adam", to_json(c.adam)},  {"history_length", c.history_length},
          {"age_cap", c.age_cap},     {"seed", c.seed},
          {"augment_missing", c.augment_missing}};
}

/// `exceed_count` defaults to ceil(W/2) when absent.
inline WindowPredictorConfig predictor_from_json(const json& j) {
  ObjectReader r(j, "predictor");
  WindowPredictorConfig c;
  r.get("window", c.window);
  c.exceed_count = default_exceed_count(c.window);
  r.get("exceed_count", c.exceed_count);
  r.get("delta_star", c.delta_star);
  r.get("hidden_sizes", c.hidden_sizes);
  r.get("epochs", c.epochs);
  r.get("batch_size", c.batch_size);
  if (r.has("adam")) c.adam = adam_from_json(j.at("adam"));
  r.get("history_length", c.history_length);
  r.get("age_cap", c.age_cap);
  r.get("seed", c.seed);
  r.get("augment_missing", c.augment_missing);
  r.finish();
  c.validate();
  return c;
}

inline json to_json(const AgentConfig& c) {
  return {{"hidden_sizes", c.hidden_sizes},
          {"gamma", c.gamma},
          {"buffer_capacity", c.buffer_capacity},
          {"batch_size", c.batch_size},
          {"sync_period", c.sync_period},
          {"epsilon", {{"start", c.epsilon.start}, {"end", c.epsilon.end}, {"decay_steps", c.epsilon.decay_steps}}},
          {"adam", to_json(c.adam)},
          {"huber_kappa", c.huber_kappa},
          {"cost_scale", c.cost_scale},
          {"history_length", c.history_length},
          {"age_cap", c.age_cap},
          {"seed", c.seed}};
}

inline AgentConfig agent_from_json(const json& j) {
  ObjectReader r(j, "agent");
  AgentConfig c;
  r.get("hidden_sizes", c.hidden_sizes);
  r.get("gamma", c.gamma);
  r.get("buffer_capacity", c.buffer_capacity);
  r.get("batch_size", c.batch_size);
  r.get("sync_period", c.sync_period);
  if (r.has("epsilon")) {
    ObjectReader e(j.at("epsilon"), "epsilon");
    e.get("start", c.epsilon.start);
    e.get("end", c.epsilon.end);
    e.get("decay_steps", c.epsilon.decay_steps);
    e.finish();
  }
  if (r.has("adam")) c.adam = adam_from_json(j.at("adam"));
  r.get("huber_kappa", c.huber_kappa);
  r.get("cost_scale", c.cost_scale);
  r.get("history_length", c.history_length);
  r.get("age_cap", c.age_cap);
  r.get("seed", c.seed);
  r.finish();
  c.validate();
  return c;
}

inline json to_json(const CostParams& p) {
  return {{"lambda", p.lambda},       {"alpha_delay", p.alpha_delay}, {"kappa_delay", p.kappa_delay},
          {"alpha_set", p.alpha_set}, {"kappa_set", p.kappa_set},     {"delta_star", p.delta_star}};
}

/// Unset fields take the defaults for `n_servers` and the given delta*.
inline CostParams cost_from_json(const json& j, int n_servers, double lambda, double delta_star) {
  auto p = CostParams::defaults(n_servers, lambda, delta_star);
  if (j.is_null()) return p;
  ObjectReader r(j, "cost");
  r.get("lambda", p.lambda);
  r.get("delta_star", p.delta_star);
  p.kappa_delay = p.alpha_delay * p.delta_star;
  r.get("alpha_delay", p.alpha_delay);
  if (!j.contains("kappa_delay")) p.kappa_delay = p.alpha_delay * p.delta_star;
  r.get("kappa_delay", p.kappa_delay);
  r.get("alpha_set", p.alpha_set);
  r.get("kappa_set", p.kappa_set);
  r.finish();
  p.validate();
  return p;
}

inline json to_json(const TrainingSchedule& s) { return {{"total_steps", s.total_steps}, {"log_every", s.log_every}}; }

inline TrainingSchedule schedule_from_json(const json& j) {
  ObjectReader r(j, "schedule");
  TrainingSchedule s;
  r.get("total_steps", s.total_steps);
  r.get("log_every", s.log_every);
  r.finish();
  require(s.total_steps >= 1 && s.log_every >= 1, ErrorKind::kConfig, "schedule steps must be positive");
  return s;
}

}  // namespace redoff::config
