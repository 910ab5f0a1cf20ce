#include "support.hpp"

#include "esim/explore.hpp"

#include <doctest.h>

#include <numeric>

using namespace esim;
using namespace esim::testing;

namespace {

// Coarse search so episodes stay fast in unit tests.
StrategyConfig small(StrategyKind kind) {
  StrategyConfig c;
  c.kind = kind;
  c.upDirections = 24;
  c.refineTop = 1;
  c.bank = BankOptions{24, 12, 100};
  return c;
}

PipelineOptions light() {
  PipelineOptions p;
  p.gpMaxPoints = 250;
  return p;
}

std::vector<nlohmann::json> unlabeled(const std::vector<StepLog>& log) {
  std::vector<nlohmann::json> out;
  for (const auto& s : log) {
    auto j = to_json(s);
    j.erase("strategy");
    out.push_back(j);
  }
  return out;
}

}  // namespace

TEST_CASE("UCB selection") {
  const std::vector<ScoreDistribution> s{{0.001, 0.0, 1}, {0.0, 0.001, 1}, {0.0005, 0.0002, 1}};
  CHECK(select_ucb(s, 0.0) == 0);
  CHECK(select_ucb(s, 500.0) == 1);

  // scaling every sigma by c and lambda by 1/c leaves the choice unchanged
  Rng rng(1);
  for (int t = 0; t < 50; ++t) {
    std::vector<ScoreDistribution> a, b;
    const double c = uniform(rng, 0.1, 10.0), lambda = uniform(rng, 0.0, 5.0);
    for (int i = 0; i < 8; ++i) {
      const double mu = uniform(rng, -2e-3, 2e-3), sd = uniform(rng, 0.0, 1e-3);
      a.push_back({mu, sd, 1});
      b.push_back({mu, sd * c, 1});
    }
    CHECK(select_ucb(a, lambda) == select_ucb(b, lambda / c));
  }
  CHECK_THROWS_AS(select_ucb({}, 1.0), Error);
}

TEST_CASE("section selection") {
  const std::vector<ScoreDistribution> s{{0.002, 1e-4, 1}, {0.0005, 2e-4, 1}, {0.001, 9e-4, 1}, {0.0005, 2e-4, 1}};
  CHECK(select_ucb_section(s, 0.0) == 1);  // least margin, lowest index on ties
  CHECK(select_ucb_section(s, 1e6) == 2);
  CHECK(select_max_sigma(s) == 2);
  // equal value: smaller sigma wins
  CHECK(select_ucb_section({{0.001, 5e-4, 1}, {0.001, 1e-4, 1}}, 0.0) == 1);
}

TEST_CASE("section plane for a given orientation") {
  const double e = 0.02;
  const auto mid = section_to_scan(Orientation{}, 2, 5, e, e);
  CHECK(std::abs(mid.spec.d) < 1e-15);
  CHECK((mid.spec.normal() - Vec3::UnitZ()).norm() < 1e-12);
  CHECK_FALSE(mid.clamped);

  const auto upper = section_to_scan(Orientation{}, 3, 5, e, e);
  CHECK(upper.spec.d == doctest::Approx(e * std::sin(0.2 * kPi)));
  CHECK_FALSE(upper.clamped);
  const auto lower = section_to_scan(Orientation{}, 1, 5, e, 0.5 * e);
  CHECK(lower.spec.d == doctest::Approx(-0.5 * e * std::sin(0.2 * kPi)));

  const auto top = section_to_scan(Orientation{}, 4, 5, e, e);
  CHECK(top.clamped);
  CHECK(top.spec.d == doctest::Approx(0.9 * e));

  Rng rng(2);
  for (int t = 0; t < 20; ++t) {
    const Orientation q = random_orientation(rng);
    const auto c = section_to_scan(q, 2, 5, e, e);
    CHECK((c.spec.normal() - q.matrix().transpose() * Vec3::UnitZ()).norm() < 1e-9);
  }
  CHECK_THROWS_AS(section_to_scan(Orientation{}, 5, 5, e, e), Error);
}

TEST_CASE("thinning keeps every sample accounted for") {
  Rng rng(3);
  std::vector<SurfacePoint> pts;
  Vec3 total = Vec3::Zero();
  for (int i = 0; i < 3000; ++i) {
    const Direction d = random_direction(rng);
    pts.push_back({d.theta, d.phi, uniform(rng, 0.01, 0.03)});
    total += pts.back().position();
  }
  const auto few = thin_points({pts.begin(), pts.begin() + 50}, 100);
  CHECK(few.points.size() == 50);
  CHECK(std::all_of(few.counts.begin(), few.counts.end(), [](double c) { return c == 1.0; }));

  const auto t = thin_points(pts, 200);
  CHECK(t.points.size() <= 200);
  CHECK(std::accumulate(t.counts.begin(), t.counts.end(), 0.0) == 3000.0);
  // each output is the centroid of its cell
  Vec3 weighted = Vec3::Zero();
  for (std::size_t i = 0; i < t.points.size(); ++i) weighted += t.points[i].position() * t.counts[i];
  CHECK((weighted - total).norm() < 1e-12);

  // points on a plane thin to points on the same plane
  std::vector<SurfacePoint> face;
  for (int i = 0; i < 2000; ++i) {
    const Vec3 x(0.015, uniform(rng, -0.01, 0.01), uniform(rng, -0.01, 0.01));
    const Direction d = Direction::from_vector(x);
    face.push_back({d.theta, d.phi, x.norm()});
  }
  for (const auto& p : thin_points(face, 50).points) CHECK(p.position().x() == doctest::Approx(0.015).epsilon(1e-12));
  CHECK_THROWS_AS(thin_points(pts, 0), Error);
}

TEST_CASE("stop rule") {
  StrategyConfig c;
  ExplorationState s;
  CHECK_FALSE(should_stop(s, c));
  s.hasScore = true;
  s.bestScore = {0.001, 0.001, 100};
  s.stepCount = 1;
  CHECK(should_stop(s, c));
  s.bestScore = {0.001, 0.0016, 100};
  CHECK_FALSE(should_stop(s, c));
  s.bestScore = {-1e-5, 1e-5, 100};
  CHECK_FALSE(should_stop(s, c));
  s.bestScore = {0.0, 1e-5, 100};
  CHECK_FALSE(should_stop(s, c));
  s.stepCount = c.maxSteps;
  CHECK(should_stop(s, c));
}

TEST_CASE("cold start scans the hand equator and builds a model") {
  const auto o = generate_object(21, 3);
  const auto h = make_hole(o, {}, 72, 0.002);
  ExplorationState s;
  NoiseConfig n;
  n.seed = 5;
  step(s, o, h, small(StrategyKind::Bo), n, 9, light());
  CHECK(s.stepCount == 1);
  REQUIRE(s.model.has_value());
  CHECK(s.hasScore);
  REQUIRE(s.log.size() == 1);
  CHECK(s.log[0].step == 1);
  CHECK_FALSE(s.log[0].chosenOrientation.has_value());
  CHECK(std::abs(s.log[0].section.d) < 1e-15);
  CHECK((s.log[0].section.normal() - Vec3::UnitZ()).norm() < 1e-12);

  step(s, o, h, small(StrategyKind::Bo), n, 9, light());
  CHECK(s.stepCount == 2);
  CHECK(s.log[1].chosenOrientation.has_value());
  CHECK(s.log[1].chosenSection.has_value());
  CHECK(s.scannedSections.size() == 2);
}

TEST_CASE("a sphere with clearance is inserted") {
  const auto o = sphere(0.02);
  const auto h = make_hole(o, {}, 72, 0.002);
  NoiseConfig n;
  n.seed = 1;
  auto c = small(StrategyKind::Bo);
  c.maxSteps = 6;
  const auto r = run_episode(o, h, c, n, 2, light());
  CHECK(r.success);
  CHECK(r.steps < 6);
  CHECK(r.trueMargin == doctest::Approx(0.002).epsilon(1e-6));
}

TEST_CASE("a hole smaller than the object is never reported as fitting") {
  const auto o = sphere(0.02);
  const auto h = make_hole(o, {}, 72, -0.001);
  NoiseConfig n;
  n.seed = 1;
  auto c = small(StrategyKind::Bo);
  c.maxSteps = 4;
  const auto r = run_episode(o, h, c, n, 2, light());
  CHECK_FALSE(r.success);
  CHECK(r.steps == 4);
  CHECK(r.finalScore.meanS < 0);
}

TEST_CASE("explore-only and random never read the mean") {
  const auto o = generate_object(22, 3);
  const auto h = make_hole(o, {}, 72, 0.002);
  NoiseConfig n;
  n.seed = 6;
  for (auto kind : {StrategyKind::ExploreOnly, StrategyKind::Random}) {
    ExplorationState s;
    for (int i = 0; i < 3; ++i) step(s, o, h, small(kind), n, 4, light());
    CHECK(s.meanQueries == 0);
  }
  ExplorationState bo;
  for (int i = 0; i < 2; ++i) step(bo, o, h, small(StrategyKind::Bo), n, 4, light());
  CHECK(bo.meanQueries > 0);
}

TEST_CASE("bo with lambda zero is exploit-only") {
  const auto o = generate_object(23, 3);
  const auto h = make_hole(o, {}, 72, 0.002);
  NoiseConfig n;
  n.seed = 7;
  auto bo = small(StrategyKind::Bo);
  bo.lambda = 0.0;
  bo.maxSteps = 3;
  auto ex = small(StrategyKind::ExploitOnly);
  ex.maxSteps = 3;
  const auto a = run_episode(o, h, bo, n, 8, light());
  const auto b = run_episode(o, h, ex, n, 8, light());
  CHECK(a.steps == b.steps);
  CHECK(unlabeled(a.log) == unlabeled(b.log));
}

TEST_CASE("episodes are deterministic") {
  const auto o = generate_object(24, 3);
  const auto h = make_hole(o, {}, 72, 0.002);
  NoiseConfig n;
  n.seed = 8;
  auto c = small(StrategyKind::Random);
  c.maxSteps = 3;
  const auto a = run_episode(o, h, c, n, 3, light());
  const auto b = run_episode(o, h, c, n, 3, light());
  CHECK(a.steps == b.steps);
  CHECK(a.trueMargin == b.trueMargin);
  CHECK(unlabeled(a.log) == unlabeled(b.log));
}

TEST_CASE("strategy config validation and JSON") {
  StrategyConfig c;
  CHECK_NOTHROW(c.validate());
  auto bad = c;
  bad.sectionCount = 0;
  CHECK_THROWS_AS(bad.validate(), Error);
  bad = c;
  bad.lambda = -1;
  CHECK_THROWS_AS(bad.validate(), Error);
  bad = c;
  bad.decisionKappa = -0.5;
  CHECK_THROWS_AS(bad.validate(), Error);

  c.kind = StrategyKind::ExploreOnly;
  c.name = "explore";
  c.orientationGrid = {{0.1, 0.2, 0.3}};
  const auto back = strategy_config_from_json(to_json(c));
  CHECK(back.kind == c.kind);
  CHECK(back.label() == "explore");
  REQUIRE(back.orientationGrid.size() == 1);
  CHECK(back.orientationGrid[0].gamma == 0.3);
  CHECK(strategy_kind_from_string(to_string(StrategyKind::ExploitOnly)) == StrategyKind::ExploitOnly);
  CHECK_THROWS_AS(strategy_kind_from_string("greedy"), Error);
  CHECK(small(StrategyKind::ExploitOnly).effective_lambda() == 0.0);
}
