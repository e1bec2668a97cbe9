#include <catch_amalgamated.hpp>

#include <cmath>
#include <functional>
#include <random>
#include <sstream>

#include "redoff/stats.hpp"
#include "redoff/synthetic.hpp"
#include "redoff/trace_io.hpp"

using namespace redoff;
using Catch::Matchers::WithinAbs;

namespace {

// One row per (task, server), all telemetry columns filled on every row.
std::string tiny_csv(const std::vector<std::vector<double>>& delays, int n_servers) {
  const auto& cols = default_trace_columns();
  std::ostringstream os;
  os << kTraceMagic << R"({"n_servers":)" << n_servers << R"(,"inter_arrival":0.0666,"columns":[)";
  for (std::size_t i = 0; i < cols.size(); ++i) os << (i ? "," : "") << '"' << cols[i] << '"';
  os << "]}\n" << csv::join(cols) << "\n";
  for (std::size_t t = 0; t < delays.size(); ++t)
    for (int n = 1; n <= n_servers; ++n) {
      std::vector<std::string> row(cols.size(), "0");
      row[0] = std::to_string(t);
      row[1] = std::to_string(n);
      row[2] = csv::format(delays[t][static_cast<std::size_t>(n - 1)]);
      row[3] = "0";
      row[12] = "45";
      row[13] = "9";
      os << csv::join(row) << "\n";
    }
  return os.str();
}

TraceDataset single_server(const std::vector<double>& d) {
  std::vector<std::vector<double>> rows;
  for (double v : d) rows.push_back({v});
  return parse_trace(tiny_csv(rows, 1));
}

SyntheticConfig two_regime_config(std::uint64_t seed) {
  SyntheticConfig c;
  c.n_servers = 3;
  c.n_tasks = 10000;
  c.regime_model.regimes = {{0.15, 0.01}, {0.30, 0.05}};
  c.regime_model.transition = {{0.98, 0.02}, {0.02, 0.98}};
  c.seed = seed;
  return c;
}

ErrorKind kind_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.kind();
  }
  FAIL("expected an error");
  return ErrorKind::kIo;
}

}  // namespace

TEST_CASE("minimal trace file loads", "[trace]") {
  const auto d = parse_trace(tiny_csv({{0.15}, {0.20}}, 1));
  CHECK(d.n_servers() == 1);
  CHECK(d.n_tasks() == 2);
  CHECK(d.samples().size() == 2);
  CHECK(d.delay(0, 1) == 0.15);
  CHECK(d.delay(1, 1) == 0.20);
}

TEST_CASE("negative delay is a value error", "[trace]") {
  CHECK(kind_of([] { parse_trace(tiny_csv({{0.15}, {-0.1}}, 1)); }) == ErrorKind::kValue);
}

TEST_CASE("malformed files are rejected with the right error", "[trace]") {
  CHECK(kind_of([] { parse_trace("task_index,server_id\n0,1\n"); }) == ErrorKind::kSchema);
  CHECK(kind_of([] { parse_trace(std::string(kTraceMagic) + "{not json\n"); }) == ErrorKind::kSchema);
  auto text = tiny_csv({{0.1}, {0.2}, {0.3}}, 1);
  const auto pos = text.find("\n1,1,");
  text.replace(pos, 5, "\n5,1,");
  CHECK(kind_of([&] { parse_trace(text); }) == ErrorKind::kIntegrity);
  auto missing = tiny_csv({{0.1}}, 1);
  missing.replace(missing.find("\n0,1,0.1,"), 9, "\n0,1,,");
  CHECK(kind_of([&] { parse_trace(missing); }) == ErrorKind::kIntegrity);
  const auto two = tiny_csv({{0.1, 0.2}}, 2);
  CHECK(kind_of([&] { parse_trace(two.substr(0, two.rfind("0,2,"))); }) == ErrorKind::kIntegrity);
}

TEST_CASE("foreign column names map through a schema", "[trace]") {
  auto text = tiny_csv({{0.15}, {0.2}}, 1);
  for (std::size_t p; (p = text.find("comm_delay")) != std::string::npos;) text.replace(p, 10, "tx_time");
  CHECK_THROWS_AS(parse_trace(text), Error);
  TraceSchema schema;
  schema.columns[static_cast<std::size_t>(TraceField::kCommDelay)] = "tx_time";
  CHECK(parse_trace(text, schema).delay(1, 1) == 0.2);
}

TEST_CASE("save then load reproduces randomized datasets field for field", "[trace][property]") {
  std::mt19937_64 rng(7);
  for (int rep = 0; rep < 6; ++rep) {
    auto c = default_synthetic_config(rng());
    c.n_servers = 1 + static_cast<int>(rng() % 4);
    c.n_tasks = 1 + static_cast<std::int64_t>(rng() % 300);
    c.inter_arrival = 0.01 + static_cast<double>(rng() % 1000) / 7919.0;
    const auto d = generate_synthetic(c);
    const auto back = parse_trace(trace_to_string(d));
    CHECK(back == d);
  }
}

TEST_CASE("generator is deterministic and seed-sensitive", "[synthetic]") {
  const auto a = generate_synthetic(two_regime_config(3));
  const auto b = generate_synthetic(two_regime_config(3));
  const auto c = generate_synthetic(two_regime_config(4));
  CHECK(a == b);
  CHECK_FALSE(a == c);
}

TEST_CASE("single regime with zero spread gives constant delays", "[synthetic]") {
  SyntheticConfig c;
  c.n_servers = 2;
  c.n_tasks = 500;
  c.regime_model.regimes = {{0.2, 0.0}};
  c.regime_model.transition = {{1.0}};
  const auto d = generate_synthetic(c);
  for (int n = 1; n <= 2; ++n)
    for (double v : d.server_delays(n)) CHECK_THAT(v, WithinAbs(0.2, 1e-15));
}

TEST_CASE("regime occupancy follows the stationary distribution", "[synthetic][statistical]") {
  // One 10k-task trace of a 0.98-sticky chain has an occupancy standard
  // error near 2%, so ten seeds are pooled to make the 2% tolerance ~3 sigma.
  const auto pi = stationary_distribution(two_regime_config(1).regime_model.transition);
  CHECK_THAT(pi[1], WithinAbs(0.5, 1e-12));
  std::vector<std::vector<double>> by_regime(2);
  std::size_t total = 0;
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    const auto d = generate_synthetic(two_regime_config(seed));
    for (const auto& s : d.samples()) by_regime[static_cast<std::size_t>(s.regime)].push_back(s.total_delay());
    total += d.samples().size();
    const double overall = stats::mean(d.server_delays(1));
    CHECK(overall > 0.15);
    CHECK(overall < 0.30);
  }
  const double occ_high = static_cast<double>(by_regime[1].size()) / static_cast<double>(total);
  CHECK_THAT(occ_high, WithinAbs(pi[1], 0.02));
  const auto c = two_regime_config(1);
  for (std::size_t r = 0; r < 2; ++r) {
    const auto& params = c.regime_model.regimes[r];
    const double m = stats::mean(by_regime[r]);
    const double se = params.stddev / std::sqrt(static_cast<double>(by_regime[r].size()));
    CHECK(std::abs(m - params.mean) < 3.0 * se);
  }
}

TEST_CASE("stationary distribution solves pi P = pi", "[synthetic]") {
  const std::vector<std::vector<double>> p{{0.9, 0.1, 0.0}, {0.2, 0.7, 0.1}, {0.0, 0.5, 0.5}};
  const auto pi = stationary_distribution(p);
  double sum = 0.0;
  for (std::size_t j = 0; j < 3; ++j) {
    double v = 0.0;
    for (std::size_t i = 0; i < 3; ++i) v += pi[i] * p[i][j];
    CHECK_THAT(v, WithinAbs(pi[j], 1e-12));
    sum += pi[j];
  }
  CHECK_THAT(sum, WithinAbs(1.0, 1e-12));
}

TEST_CASE("default regime model hits the calibration targets", "[synthetic][statistical]") {
  const auto m = default_regime_model();
  const auto pi = stationary_distribution(m.transition);
  double mean = 0.0, second = 0.0;
  for (std::size_t r = 0; r < 2; ++r) {
    const auto [mu, var] = truncated_moments(m.regimes[r].mean, m.regimes[r].stddev, 0.010);
    mean += pi[r] * mu;
    second += pi[r] * (var + mu * mu);
  }
  CHECK_THAT(mean, WithinAbs(0.178, 1e-9));
  CHECK_THAT(std::sqrt(second - mean * mean), WithinAbs(0.14, 1e-9));

  auto c = default_synthetic_config(5);
  c.n_tasks = 50000;
  const auto st = trace_stats(generate_synthetic(c));
  CHECK_THAT(st.back().mean, WithinAbs(0.178, 0.006));
  CHECK_THAT(st.back().stddev, WithinAbs(0.14, 0.01));
}

TEST_CASE("truncated moments match Monte Carlo", "[synthetic]") {
  std::mt19937_64 rng(1);
  std::normal_distribution<double> g(0.05, 0.1);
  std::vector<double> xs;
  while (xs.size() < 200000) {
    const double v = g(rng);
    if (v >= 0.01) xs.push_back(v);
  }
  const auto [mu, var] = truncated_moments(0.05, 0.1, 0.01);
  CHECK_THAT(stats::mean(xs), WithinAbs(mu, 0.001));
  CHECK_THAT(stats::stddev(xs), WithinAbs(std::sqrt(var), 0.001));
}

TEST_CASE("non-stochastic transition matrix is a config error", "[synthetic]") {
  auto c = two_regime_config(1);
  c.regime_model.transition = {{0.5, 0.4}, {0.5, 0.5}};
  CHECK(kind_of([&] { generate_synthetic(c); }) == ErrorKind::kConfig);
  c.regime_model.transition = {{0.98, 0.02}, {0.02, 0.98}};
  c.regime_model.regimes[0].mean = 0.0;
  CHECK(kind_of([&] { generate_synthetic(c); }) == ErrorKind::kConfig);
}

TEST_CASE("telemetry respects the domain ranges", "[synthetic]") {
  auto c = default_synthetic_config(2);
  c.n_tasks = 3000;
  const auto d = generate_synthetic(c);
  for (const auto& t : d.telemetry()) {
    CHECK(t.heading >= 0.0);
    CHECK(t.heading < 360.0);
    CHECK(t.onboard.cpu >= 0.0);
    CHECK(t.onboard.cpu <= 1.0);
    CHECK(t.onboard.ram <= 1.0);
    CHECK(t.position.alt >= c.telemetry.altitude_min_m - 1e-9);
    CHECK(t.position.alt <= c.telemetry.altitude_max_m + 1e-9);
  }
  for (const auto& s : d.samples()) {
    CHECK(s.comm_delay >= 0.0);
    CHECK(s.comp_delay == c.comp_delay);
  }
}

TEST_CASE("trace stats hand examples", "[stats]") {
  const auto s = trace_stats(single_server({0.1, 0.2, 0.3}));
  REQUIRE(s.size() == 2);
  CHECK_THAT(s[0].mean, WithinAbs(0.2, 1e-15));
  CHECK_THAT(s[0].peak_to_peak, WithinAbs(0.2, 1e-15));
  CHECK_THAT(s[0].stddev, WithinAbs(std::sqrt(0.02 / 3.0), 1e-15));  // population normalization

  const auto flat = trace_stats(single_server({0.25, 0.25, 0.25, 0.25}));
  CHECK(flat[0].stddev == 0.0);
  REQUIRE(flat[0].cdf.size() == 1);
  CHECK(flat[0].cdf[0].x == 0.25);
  CHECK(flat[0].cdf[0].p == 1.0);
}

TEST_CASE("empty dataset is an empty-input error", "[stats]") {
  CHECK(kind_of([] { trace_stats(TraceDataset{}); }) == ErrorKind::kEmptyInput);
}

TEST_CASE("CDF points are monotone and end at one", "[stats][property]") {
  auto c = default_synthetic_config(9);
  c.n_tasks = 2000;
  for (const auto& s : trace_stats(generate_synthetic(c))) {
    REQUIRE(!s.cdf.empty());
    for (std::size_t i = 1; i < s.cdf.size(); ++i) {
      CHECK(s.cdf[i].x > s.cdf[i - 1].x);
      CHECK(s.cdf[i].p >= s.cdf[i - 1].p);
    }
    CHECK(s.cdf.front().p > 0.0);
    CHECK(s.cdf.back().p == 1.0);
    CHECK(s.cdf.back().x == s.max);
  }
}

TEST_CASE("stats CSV is long-format and parses back", "[stats]") {
  const auto d = single_server({0.1, 0.2, 0.3});
  const auto t = csv::parse_table(stats_to_csv(trace_stats(d)));
  CHECK(t.header == std::vector<std::string>{"statistic", "server", "value"});
  bool found = false;
  for (const auto& r : t.rows)
    if (r[0] == "mean" && r[1] == "1") {
      CHECK_THAT(csv::parse_double(r[2], "mean"), WithinAbs(0.2, 1e-15));
      found = true;
    }
  CHECK(found);
}

TEST_CASE("slices rebase task indices", "[trace]") {
  auto c = default_synthetic_config(1);
  c.n_tasks = 100;
  const auto d = generate_synthetic(c);
  const auto s = d.slice(40, 60);
  CHECK(s.n_tasks() == 20);
  CHECK(s.telemetry(0).task_index == 0);
  CHECK(s.delay(5, 2) == d.delay(45, 2));
  CHECK_THROWS_AS(d.slice(10, 10), Error);
}

TEST_CASE("quantile and midranks", "[stats]") {
  const std::vector<double> xs{3.0, 1.0, 2.0, 2.0};
  CHECK(stats::quantile(xs, 0.0) == 1.0);
  CHECK(stats::quantile(xs, 1.0) == 3.0);
  CHECK_THAT(stats::quantile(xs, 0.5), WithinAbs(2.0, 1e-15));
  CHECK(stats::midranks(xs) == std::vector<double>{4.0, 1.0, 2.5, 2.5});
  const std::vector<double> a{1, 2, 3, 4}, b{10, 20, 30, 45}, c{4, 3, 2, 1};
  CHECK_THAT(stats::spearman(a, b), WithinAbs(1.0, 1e-12));
  CHECK_THAT(stats::spearman(a, c), WithinAbs(-1.0, 1e-12));
}
