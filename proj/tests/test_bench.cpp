#include "support.hpp"

#include "esim/bench.hpp"

#include <doctest.h>

#include <filesystem>

using namespace esim;
using namespace esim::testing;
namespace fs = std::filesystem;

namespace {

ExperimentConfig tiny() {
  ExperimentConfig c;
  c.nObjects = 1;
  c.graspsPerObject = 1;
  c.masterSeed = 3;
  for (auto s : default_strategies()) {
    s.maxSteps = 2;
    s.upDirections = 16;
    s.refineTop = 1;
    s.bank = BankOptions{24, 12, 100};
    c.strategies.push_back(s);
  }
  c.pipeline.gpMaxPoints = 200;
  return c;
}

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("esim_test_" + name);
  fs::remove_all(p);
  return p;
}

EpisodeRow row(int object, int grasp, const std::string& strategy, int steps, bool success = true) {
  EpisodeRow r;
  r.object = object;
  r.grasp = grasp;
  r.strategy = strategy;
  r.steps = steps;
  r.success = success;
  return r;
}

}  // namespace

TEST_CASE("paired t-test against the closed form for two degrees of freedom") {
  // differences {1, 2, 3}: mean 2, sd 1, t = 2 sqrt(3)
  const auto r = paired_t_test({2, 4, 6}, {1, 2, 3});
  CHECK(r.dof == 2);
  CHECK(r.meanDiff == doctest::Approx(2.0));
  CHECK(r.t == doctest::Approx(2 * std::sqrt(3.0)).epsilon(1e-12));
  // two-sided p for 2 dof: 1 - |t| / sqrt(2 + t^2)
  CHECK(r.p == doctest::Approx(1 - r.t / std::sqrt(2 + r.t * r.t)).epsilon(1e-10));
  CHECK(r.p == doctest::Approx(0.074180).epsilon(1e-5));

  CHECK_THROWS_AS(paired_t_test({1, 2, 3}, {0, 1, 2}), Error);
  CHECK_THROWS_AS(paired_t_test({1}, {0}), Error);
  CHECK_THROWS_AS(paired_t_test({1, 2}, {0}), Error);
}

TEST_CASE("paired t-test p-values are uniform under the null") {
  Rng rng(4);
  std::normal_distribution<double> g;
  std::vector<double> p;
  for (int t = 0; t < 2000; ++t) {
    std::vector<double> a(10), b(10);
    for (int i = 0; i < 10; ++i) a[i] = g(rng), b[i] = g(rng);
    p.push_back(paired_t_test(a, b).p);
  }
  std::sort(p.begin(), p.end());
  double ks = 0;
  for (std::size_t i = 0; i < p.size(); ++i)
    ks = std::max({ks, std::abs(p[i] - double(i) / p.size()), std::abs(p[i] - double(i + 1) / p.size())});
  CHECK(ks < 1.36 / std::sqrt(2000.0));
}

TEST_CASE("type-7 quantiles") {
  CHECK(quantile({4, 1, 3, 2}, 0.25) == doctest::Approx(1.75));
  CHECK(quantile({4, 1, 3, 2}, 0.5) == doctest::Approx(2.5));
  CHECK(quantile({4, 1, 3, 2}, 1.0) == 4.0);
  CHECK(quantile({7}, 0.3) == 7.0);
  CHECK_THROWS_AS(quantile({}, 0.5), Error);
  CHECK_THROWS_AS(quantile({1, 2}, 1.5), Error);
}

TEST_CASE("summaries and paired comparisons from rows") {
  std::vector<EpisodeRow> rows;
  const int a[] = {2, 3, 4, 5}, b[] = {4, 4, 7, 10};
  for (int g = 0; g < 4; ++g) {
    rows.push_back(row(0, g, "bo", a[g]));
    rows.push_back(row(0, g, "random", b[g], g != 3));
  }
  const auto s = summarize(rows, {"bo", "random"});
  REQUIRE(s.size() == 2);
  CHECK(s[0].strategy == "bo");
  CHECK(s[0].medianSteps == 3.5);
  CHECK(s[0].successRate == 1.0);
  CHECK(s[1].successRate == 0.75);
  CHECK(s[1].meanSteps == 6.25);
  const auto c = paired_comparisons(rows, {"bo", "random"});
  REQUIRE(c.size() == 1);
  REQUIRE(c[0].test.has_value());
  const auto direct = paired_t_test({2, 3, 4, 5}, {4, 4, 7, 10});
  CHECK(c[0].test->t == direct.t);

  // identical steps: the comparison is reported without a test
  std::vector<EpisodeRow> same{row(0, 0, "x", 3), row(0, 0, "y", 3), row(0, 1, "x", 5), row(0, 1, "y", 5)};
  const auto d = paired_comparisons(same, {"x", "y"});
  REQUIRE(d.size() == 1);
  CHECK_FALSE(d[0].test.has_value());
}

TEST_CASE("episode CSV round-trip") {
  std::vector<EpisodeRow> rows{row(0, 1, "bo", 3), row(2, 0, "random", 10, false)};
  rows[1].trueMargin = -0.00123;
  rows[1].finalOrientation = {0.1, -0.2, 0.3};
  rows[1].streamHash = "00ff00ff00ff00ff";
  const auto back = parse_episodes_csv(episodes_csv(rows));
  REQUIRE(back.size() == 2);
  CHECK(back[1].strategy == "random");
  CHECK(back[1].steps == 10);
  CHECK_FALSE(back[1].success);
  CHECK(back[1].trueMargin == doctest::Approx(-0.00123));
  CHECK(back[1].streamHash == "00ff00ff00ff00ff");
  CHECK(episodes_csv(back) == episodes_csv(rows));
  CHECK_THROWS_AS(parse_episodes_csv("nonsense\n1,2\n"), Error);
}

TEST_CASE("suite objects and cells are deterministic and shared by strategies") {
  const auto c = tiny();
  const auto a = make_cell(c, 0, 0), b = make_cell(c, 0, 0);
  CHECK(a.streamHash == b.streamHash);
  CHECK(a.streamHash != make_cell(c, 0, 1).streamHash);
  const auto [o, h] = suite_object(3, 0, 72, 0.002);
  CHECK(h.radii == a.hole.radii);
  CHECK(std::abs(true_min_margin(a.base, a.feasible, a.hole) - 0.002) <= a.base.maxWidth * 2 * kPi / 72);
}

TEST_CASE("a small experiment writes a consistent report") {
  auto c = tiny();
  const fs::path dir = scratch("report");
  c.outputPath = dir.string();
  int progress = 0;
  const auto r = run_experiment(c, [&](const EpisodeRow&) { ++progress; });
  CHECK(progress == 4);
  REQUIRE(r.rows.size() == 4);
  REQUIRE(r.summary.size() == 4);
  for (const auto& row : r.rows) {
    CHECK(row.steps >= 1);
    CHECK(row.steps <= 2);
    CHECK(row.streamHash == r.rows[0].streamHash);
  }
  CHECK(r.pairedTests.size() == 6);
  CHECK(fs::exists(dir / "episodes.csv"));
  CHECK(fs::exists(dir / "summary.json"));
  const auto stored = parse_episodes_csv(read_file(dir / "episodes.csv"));
  CHECK(episodes_csv(stored) == episodes_csv(r.rows));
  const auto j = nlohmann::json::parse(read_file(dir / "summary.json"));
  CHECK(j.at("strategies").size() == 4);

  // rerunning gives byte-identical files
  const auto episodes = read_file(dir / "episodes.csv");
  const auto summary = read_file(dir / "summary.json");
  run_experiment(c);
  CHECK(read_file(dir / "episodes.csv") == episodes);
  CHECK(read_file(dir / "summary.json") == summary);

  const auto files = emit_plots(r, dir / "plots");
  CHECK(files.size() == 2);
  const auto csv = read_file(dir / "plots" / "boxplot.csv");
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 5);
  CHECK(read_file(dir / "plots" / "boxplot.svg").find("<svg") != std::string::npos);
  const auto two = emit_plots(r, dir / "two", std::vector<std::string>{"bo", "random"});
  const auto twoCsv = read_file(dir / "two" / "boxplot.csv");
  CHECK(std::count(twoCsv.begin(), twoCsv.end(), '\n') == 3);
  CHECK(emit_plots(r, dir / "none", std::vector<std::string>{}).empty());
  CHECK_FALSE(fs::exists(dir / "none"));
  fs::remove_all(dir);
}

TEST_CASE("experiment config validation and JSON") {
  auto c = tiny();
  CHECK_NOTHROW(c.validate());
  const auto back = experiment_config_from_json(to_json(c));
  CHECK(back.strategies.size() == 4);
  CHECK(back.strategies[0].maxSteps == 2);
  CHECK(back.masterSeed == 3);
  auto bad = c;
  bad.nObjects = 0;
  CHECK_THROWS_AS(bad.validate(), Error);
  bad = c;
  bad.strategies[1] = bad.strategies[0];
  CHECK_THROWS_AS(bad.validate(), Error);
  CHECK_THROWS_AS(experiment_config_from_json(nlohmann::json::array()), Error);
  CHECK_THROWS_AS(load_experiment_config("/nonexistent/config.json"), Error);
  CHECK(sweep_target_from_string("depth") == SweepTarget::DepthImage);
  CHECK(sweep_target_from_string(to_string(SweepTarget::ReconstructedModel)) == SweepTarget::ReconstructedModel);
}

TEST_CASE("atomic write leaves no temporary behind") {
  const fs::path dir = scratch("atomic");
  fs::create_directories(dir);
  write_file_atomic(dir / "a.txt", "hello\n");
  CHECK(read_file(dir / "a.txt") == "hello\n");
  int entries = 0;
  for ([[maybe_unused]] const auto& e : fs::directory_iterator(dir)) ++entries;
  CHECK(entries == 1);
  CHECK_THROWS_AS(write_file_atomic(dir / "missing" / "deep" / "a.txt", "x"), Error);
  fs::remove_all(dir);
}
