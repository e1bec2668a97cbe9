#pragma once

#include <algorithm>
#include <cstdint>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "redoff/csv.hpp"
#include "redoff/error.hpp"
#include "redoff/features.hpp"
#include "redoff/myopic.hpp"
#include "redoff/stats.hpp"
#include "redoff/trace.hpp"

namespace redoff {

/// Mann-Whitney AUC from midranks; tied scores count one half.
inline double auc(std::span<const double> scores, std::span<const int> labels) {
  require(scores.size() == labels.size(), ErrorKind::kDimension, "scores and labels differ in length");
  std::size_t pos = 0;
  for (int l : labels) {
    require(l == 0 || l == 1, ErrorKind::kValue, "labels must be binary");
    pos += static_cast<std::size_t>(l);
  }
  const std::size_t neg = labels.size() - pos;
  require(pos > 0 && neg > 0, ErrorKind::kDegenerateLabels, "AUC needs both classes");
  const auto ranks = stats::midranks(scores);
  double rank_sum = 0.0;
  for (std::size_t i = 0; i < labels.size(); ++i)
    if (labels[i] == 1) rank_sum += ranks[i];
  const double p = static_cast<double>(pos);
  return (rank_sum - p * (p + 1.0) / 2.0) / (p * static_cast<double>(neg));
}

struct NamedSamples {
  std::string name;
  std::vector<double> samples;
};

/// curve,x,cdf rows, one step point per distinct sample value.
inline std::string cdf_compare(const std::vector<NamedSamples>& sets) {
  csv::Table t;
  t.header = {"curve", "x", "cdf"};
  for (const auto& s : sets) {
    require(!s.samples.empty(), ErrorKind::kEmptyInput, "curve '" + s.name + "' has no samples");
    for (const auto& p : stats::ecdf(s.samples)) t.rows.push_back({s.name, csv::format(p.x), csv::format(p.p)});
  }
  return t.to_string();
}

/// Per-task delay series of a trace: the minimum over servers, each server,
/// the mean over servers, and the server with the strongest true RSSI.
inline std::vector<NamedSamples> delay_series(const TraceDataset& d) {
  const int n = d.n_servers();
  std::vector<NamedSamples> out;
  out.push_back({"min", {}});
  for (int s = 1; s <= n; ++s) out.push_back({"server_" + std::to_string(s), {}});
  out.push_back({"average", {}});
  out.push_back({"best_rssi", {}});
  for (std::int64_t i = 0; i < d.n_tasks(); ++i) {
    double mn = std::numeric_limits<double>::infinity(), sum = 0.0, best_rssi = -std::numeric_limits<double>::infinity();
    double best_delay = 0.0;
    for (int s = 1; s <= n; ++s) {
      const double v = d.delay(i, s);
      out[static_cast<std::size_t>(s)].samples.push_back(v);
      mn = std::min(mn, v);
      sum += v;
      if (d.sample(i, s).rssi > best_rssi) {
        best_rssi = d.sample(i, s).rssi;
        best_delay = v;
      }
    }
    out[0].samples.push_back(mn);
    out[static_cast<std::size_t>(n) + 1].samples.push_back(sum / n);
    out[static_cast<std::size_t>(n) + 2].samples.push_back(best_delay);
  }
  return out;
}

struct DegradationRow {
  int window = 1;
  std::size_t missing = 0;
  double auc = 0.0;
  std::size_t n_samples = 0;
};

/// AUC of already trained predictors (one W) with the `missing` most recent
/// samples of each server hidden, scores pooled over the given servers.
inline DegradationRow degradation_auc(const std::vector<PredictorModel>& models, const TraceDataset& test,
                                      const SelectionHistory& history, std::size_t missing) {
  require(!models.empty(), ErrorKind::kValue, "no predictors to evaluate");
  std::vector<double> scores;
  std::vector<int> labels;
  const auto& cfg = models.front().config;
  for (const auto& m : models) {
    const auto data = labeled_set(test, history, m.catalog, m.config, m.server_id, missing);
    const auto out = m.net.forward_batch(data.inputs).output;
    for (Eigen::Index k = 0; k < out.cols(); ++k) scores.push_back(out(1, k));
    labels.insert(labels.end(), data.labels.begin(), data.labels.end());
  }
  return {cfg.window, missing, auc(scores, labels), scores.size()};
}

/// One row per (W, missing) for missing in 0..max_missing.
inline std::vector<DegradationRow> degradation_study(const std::map<int, std::vector<PredictorModel>>& predictors,
                                                     const TraceDataset& test, const SelectionHistory& history,
                                                     std::size_t max_missing) {
  std::vector<DegradationRow> rows;
  for (const auto& [w, models] : predictors)
    for (std::size_t m = 0; m <= max_missing; ++m) rows.push_back(degradation_auc(models, test, history, m));
  return rows;
}

inline std::string degradation_csv(const std::vector<DegradationRow>& rows) {
  csv::Table t;
  t.header = {"window", "missing", "auc", "n_samples"};
  for (const auto& r : rows)
    t.rows.push_back({std::to_string(r.window), std::to_string(r.missing), csv::format(r.auc), std::to_string(r.n_samples)});
  return t.to_string();
}

}  // namespace redoff
