#include "support.hpp"

#include "esim/gp.hpp"
#include "esim/scanner.hpp"

#include <doctest.h>

#include <Eigen/Dense>

using namespace esim;
using namespace esim::testing;

namespace {

// Direct textbook evaluation with a full LU solve, sharing nothing with the model.
struct Oracle {
  std::vector<Vec3> x;
  std::vector<double> y;
  GPHyperparameters h;
  double prior;

  double k(const Vec3& a, const Vec3& b) const {
    return h.kernelVariance * std::exp(-(a - b).squaredNorm() / (2 * h.lengthscale * h.lengthscale));
  }
  Eigen::MatrixXd gram() const {
    const int n = static_cast<int>(x.size());
    Eigen::MatrixXd K(n, n);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) K(i, j) = k(x[i], x[j]) + (i == j ? h.noiseSigma * h.noiseSigma : 0.0);
    return K;
  }
  Eigen::VectorXd kstar(const Vec3& q) const {
    Eigen::VectorXd v(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) v[i] = k(x[i], q);
    return v;
  }
  std::pair<double, double> at(const Vec3& q) const {
    const Eigen::MatrixXd K = gram();
    Eigen::VectorXd r(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) r[i] = y[i] - prior;
    const Eigen::VectorXd ks = kstar(q);
    const auto lu = K.fullPivLu();
    return {prior + ks.dot(lu.solve(r)), k(q, q) - ks.dot(lu.solve(ks))};
  }
  double cov(const Vec3& a, const Vec3& b) const {
    const auto lu = gram().fullPivLu();
    return k(a, b) - kstar(a).dot(lu.solve(kstar(b)));
  }
};

GPModel model_from(const std::vector<Direction>& d, const std::vector<double>& r, const GPHyperparameters& h,
                   double prior) {
  return GPModel(d, r, h, prior);
}

std::vector<SurfacePoint> sphere_points(int n, double r, std::uint64_t seed, double sigma = 0.0) {
  Rng rng(seed);
  std::normal_distribution<double> g(0.0, sigma > 0 ? sigma : 1.0);
  std::vector<SurfacePoint> pts;
  for (int i = 0; i < n; ++i) {
    const Direction d = random_direction(rng);
    pts.push_back({d.theta, d.phi, r + (sigma > 0 ? g(rng) : 0.0)});
  }
  return pts;
}

}  // namespace

TEST_CASE("posterior matches a direct-formula oracle on three points") {
  Rng rng(1);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<Direction> d;
    std::vector<double> r;
    Oracle o;
    for (int i = 0; i < 3; ++i) {
      d.push_back(random_direction(rng));
      r.push_back(uniform(rng, 0.015, 0.025));
      o.x.push_back(d.back().unit());
    }
    o.y = r;
    o.h = {uniform(rng, 1e-6, 1e-4), uniform(rng, 0.2, 1.5), uniform(rng, 1e-4, 3e-3)};
    o.prior = 0.02;
    const auto m = model_from(d, r, o.h, o.prior);
    std::vector<Direction> q;
    for (int i = 0; i < 5; ++i) q.push_back(random_direction(rng));
    const auto post = gp_posterior(m, q);
    for (int i = 0; i < 5; ++i) {
      const auto [mu, var] = o.at(q[i].unit());
      CHECK(std::abs(post.means[i] - mu) < 1e-10);
      CHECK(std::abs(post.variances[i] - var) < 1e-10);
    }
  }
}

TEST_CASE("two-point posterior against a hand 2x2 solve") {
  const std::vector<Direction> d{{0.0, 0.0}, {kPi / 2, 0.0}};
  const std::vector<double> r{0.021, 0.019};
  const GPHyperparameters h{4e-6, 1.0, 5e-4};
  const auto m = model_from(d, r, h, 0.02);
  const Direction q{kPi / 4, 0.0};
  auto k = [&](const Vec3& a, const Vec3& b) {
    return h.kernelVariance * std::exp(-(a - b).squaredNorm() / (2 * h.lengthscale * h.lengthscale));
  };
  const Vec3 a = d[0].unit(), b = d[1].unit(), x = q.unit();
  const double s2 = h.noiseSigma * h.noiseSigma;
  const double A = k(a, a) + s2, B = k(a, b), D = k(b, b) + s2;
  const double det = A * D - B * B;
  const double ia = D / det, ib = -B / det, id = A / det;
  const double k1 = k(a, x), k2 = k(b, x);
  const double y1 = r[0] - 0.02, y2 = r[1] - 0.02;
  const double mean = 0.02 + k1 * (ia * y1 + ib * y2) + k2 * (ib * y1 + id * y2);
  const double var = k(x, x) - (k1 * (ia * k1 + ib * k2) + k2 * (ib * k1 + id * k2));
  const auto post = gp_posterior(m, std::vector<Direction>{q});
  CHECK(post.means[0] == doctest::Approx(mean).epsilon(1e-12));
  CHECK(post.variances[0] == doctest::Approx(var).epsilon(1e-9));
}

TEST_CASE("joint posterior on a 3x3 grid matches the direct formula") {
  Rng rng(2);
  Oracle o;
  std::vector<Direction> d;
  for (int i = 0; i < 6; ++i) {
    d.push_back(random_direction(rng));
    o.x.push_back(d.back().unit());
    o.y.push_back(uniform(rng, 0.018, 0.022));
  }
  o.h = {2e-5, 0.6, 1e-3};
  o.prior = 0.02;
  const auto m = model_from(d, o.y, o.h, o.prior);
  EvalGrid grid;
  grid.M = 3;
  grid.N = 3;
  const auto jp = gp_joint(m, grid);
  const auto dirs = grid.directions();
  REQUIRE(jp.cov.rows() == 9);
  for (int i = 0; i < 9; ++i) {
    CHECK(std::abs(jp.mean[i] - o.at(dirs[i].unit()).first) < 1e-10);
    for (int j = 0; j < 9; ++j) CHECK(std::abs(jp.cov(i, j) - o.cov(dirs[i].unit(), dirs[j].unit())) < 1e-10);
  }
  CHECK((jp.cov - jp.cov.transpose()).cwiseAbs().maxCoeff() < 1e-12);
  const auto post = gp_posterior(m, dirs);
  for (int i = 0; i < 9; ++i) CHECK(std::abs(jp.cov(i, i) - post.variances[i]) < 1e-10);
}

TEST_CASE("grid flat index is latitude-major") {
  EvalGrid g;
  g.M = 4;
  g.N = 3;
  const auto dirs = g.directions();
  for (int n = 0; n < 3; ++n)
    for (int m = 0; m < 4; ++m) {
      CHECK(dirs[n * 4 + m].theta == doctest::Approx(g.theta(m)));
      CHECK(dirs[n * 4 + m].phi == doctest::Approx(g.phi(n)));
    }
  EvalGrid big;
  big.M = 100;
  big.N = 50;
  GPModel m({{0, 0}, {1, 0}}, {0.02, 0.02}, {}, 0.02);
  CHECK_THROWS_AS(gp_joint(m, big), Error);
}

TEST_CASE("noiseless sphere gives a flat posterior") {
  const auto pts = sphere_points(100, 0.02, 3);
  const auto m = gp_fit(pts);
  Rng rng(4);
  std::vector<Direction> q;
  for (int i = 0; i < 50; ++i) q.push_back(random_direction(rng));
  const auto post = gp_posterior(m, q);
  for (int i = 0; i < 50; ++i) CHECK(std::abs(post.means[i] - 0.02) < 1e-4);
}

TEST_CASE("fitted noise recovers the point noise") {
  const auto pts = sphere_points(300, 0.02, 5, 0.002);
  const auto m = gp_fit(pts);
  CHECK(m.hyper().noiseSigma >= 0.001);
  CHECK(m.hyper().noiseSigma <= 0.004);
}

TEST_CASE("fitting is deterministic") {
  const auto pts = sphere_points(150, 0.02, 6, 0.001);
  const auto a = gp_fit(pts);
  const auto b = gp_fit(pts);
  CHECK(a.hyper().lengthscale == b.hyper().lengthscale);
  CHECK(a.hyper().kernelVariance == b.hyper().kernelVariance);
  CHECK(a.hyper().noiseSigma == b.hyper().noiseSigma);
}

TEST_CASE("interpolation limit and prior far from data") {
  Rng rng(7);
  std::vector<Direction> d;
  std::vector<double> r;
  for (int i = 0; i < 5; ++i) {
    const Vec3 u = (Vec3(1, 0, 0) + 0.3 * random_unit(rng)).normalized();
    d.push_back(Direction::from_vector(u));
    r.push_back(uniform(rng, 0.018, 0.022));
  }
  const GPHyperparameters h{1e-5, 0.3, 1e-6};
  const auto m = model_from(d, r, h, 0.02);
  const auto post = gp_posterior(m, d);
  for (int i = 0; i < 5; ++i) CHECK(std::abs(post.means[i] - r[i]) < 1e-5);
  const auto far = gp_posterior(m, std::vector<Direction>{Direction::from_vector(Vec3(-1, 0, 0))});
  CHECK(far.variances[0] >= 0.9 * h.kernelVariance);
}

TEST_CASE("adding a training point never increases the variance") {
  Rng rng(8);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<Direction> d;
    std::vector<double> r;
    const int n = 2 + trial % 6;
    for (int i = 0; i < n; ++i) {
      d.push_back(random_direction(rng));
      r.push_back(uniform(rng, 0.015, 0.025));
    }
    const GPHyperparameters h{uniform(rng, 1e-6, 1e-4), uniform(rng, 0.1, 1.5), uniform(rng, 1e-4, 3e-3)};
    const Direction q = random_direction(rng);
    const double before = gp_posterior(model_from(d, r, h, 0.02), std::vector<Direction>{q}).variances[0];
    d.push_back(random_direction(rng));
    r.push_back(uniform(rng, 0.015, 0.025));
    const double after = gp_posterior(model_from(d, r, h, 0.02), std::vector<Direction>{q}).variances[0];
    CHECK(after <= before + 1e-18);
  }
}

TEST_CASE("shifting every radius shifts the posterior mean") {
  const auto pts = sphere_points(60, 0.02, 9, 0.001);
  const double c = 0.003;
  auto shifted = pts;
  for (auto& p : shifted) p.r += c;
  const auto a = gp_fit(pts);
  std::vector<Direction> d;
  std::vector<double> r1, r2;
  for (std::size_t i = 0; i < pts.size(); ++i) {
    d.push_back(pts[i].direction());
    r1.push_back(pts[i].r);
    r2.push_back(shifted[i].r);
  }
  const auto m1 = model_from(d, r1, a.hyper(), a.priorMean());
  const auto m2 = model_from(d, r2, a.hyper(), a.priorMean() + c);
  Rng rng(10);
  std::vector<Direction> q;
  for (int i = 0; i < 20; ++i) q.push_back(random_direction(rng));
  const auto p1 = gp_posterior(m1, q), p2 = gp_posterior(m2, q);
  for (int i = 0; i < 20; ++i) CHECK(std::abs(p2.means[i] - p1.means[i] - c) < 1e-12);
  const auto b = gp_fit(shifted);
  CHECK(b.priorMean() == doctest::Approx(a.priorMean() + c).epsilon(1e-12));
}

TEST_CASE("kernel depends only on the angle between directions") {
  GPModel m({{0, 0}, {1, 0}}, {0.02, 0.02}, {1e-5, 0.4, 1e-3}, 0.02);
  const Direction a{0.7, 0.3};
  const Direction b{0.7 + 2 * kPi, 0.3};
  CHECK(m.kernel(a.unit(), b.unit()) == doctest::Approx(m.kernel(a.unit(), a.unit())).epsilon(1e-14));
  Rng rng(11);
  for (int i = 0; i < 20; ++i) {
    const Vec3 u = random_unit(rng), v = random_unit(rng);
    const Mat3 R = uniform_random_rotation(rng);
    CHECK(m.kernel(R * u, R * v) == doctest::Approx(m.kernel(u, v)).epsilon(1e-12));
  }
}

TEST_CASE("sample counts scale the noise") {
  const std::vector<Direction> d{{0, 0}, {0.5, 0.2}, {1.0, -0.3}};
  const std::vector<double> r{0.02, 0.021, 0.019};
  const GPHyperparameters h{1e-5, 0.5, 2e-3};
  GPModel m(d, r, h, 0.02, {4.0, 1.0, 2.0});
  Oracle o;
  for (auto& x : d) o.x.push_back(x.unit());
  o.y = r;
  o.prior = 0.02;
  o.h = h;
  Eigen::MatrixXd K = o.gram();
  K(0, 0) -= 0.75 * h.noiseSigma * h.noiseSigma;
  K(2, 2) -= 0.5 * h.noiseSigma * h.noiseSigma;
  const Vec3 q = Direction{0.3, 0.1}.unit();
  Eigen::VectorXd res(3);
  for (int i = 0; i < 3; ++i) res[i] = r[i] - 0.02;
  const double mean = 0.02 + o.kstar(q).dot(K.fullPivLu().solve(res));
  CHECK(gp_posterior(m, std::vector<Direction>{Direction::from_vector(q)}).means[0] ==
        doctest::Approx(mean).epsilon(1e-10));
  CHECK_THROWS_AS(GPModel(d, r, h, 0.02, {1.0, 0.5, 1.0}), Error);
}

TEST_CASE("sphere from one equatorial and one meridian band") {
  NoiseConfig n;
  n.pointSigma = 0;
  std::vector<SurfacePoint> pts;
  for (const auto& spec : {SectionSpec{}, SectionSpec::from_normal(Vec3::UnitY(), 0.0, 6 * kPi / 180)})
    for (const auto& p : scan_section(sphere(0.02), spec, n, 120, 3)) pts.push_back(p);
  const auto m = gp_fit(pts);
  EvalGrid g;
  g.M = 72;
  g.N = 36;
  const auto dirs = g.directions();
  const auto post = gp_posterior(m, dirs);
  double s = 0;
  for (int i = 0; i < post.means.size(); ++i) s += (post.means[i] - 0.02) * (post.means[i] - 0.02);
  CHECK(std::sqrt(s / post.means.size()) < 0.001);
}

TEST_CASE("joint samples reproduce the posterior moments") {
  Rng rng(12);
  std::vector<Direction> d;
  std::vector<double> r;
  for (int i = 0; i < 8; ++i) {
    d.push_back(random_direction(rng));
    r.push_back(uniform(rng, 0.018, 0.022));
  }
  const auto m = model_from(d, r, {1e-5, 0.5, 1e-3}, 0.02);

  SUBCASE("mean on a 10-point grid") {
    EvalGrid g;
    g.M = 5;
    g.N = 2;
    const auto jp = gp_joint(m, g);
    const auto S = sample_joint(jp, 100000, 42);
    const Eigen::VectorXd mean = S.rowwise().mean();
    for (int i = 0; i < 10; ++i) CHECK(std::abs(mean[i] - jp.mean[i]) < 4 * std::sqrt(jp.cov(i, i) / 1e5) + 1e-12);
  }
  SUBCASE("covariance on a 20-point grid") {
    EvalGrid g;
    g.M = 5;
    g.N = 4;
    const auto jp = gp_joint(m, g);
    const auto S = sample_joint(jp, 100000, 43);
    const Eigen::VectorXd mean = S.rowwise().mean();
    const Eigen::MatrixXd C = S.colwise() - mean;
    const Eigen::MatrixXd cov = C * C.transpose() / (S.cols() - 1.0);
    CHECK((cov - jp.cov).norm() / jp.cov.norm() < 0.05);
  }
  SUBCASE("same seed gives the same draws") {
    EvalGrid g;
    g.M = 6;
    g.N = 2;
    CHECK(gp_sample(m, g, 50, 9) == gp_sample(m, g, 50, 9));
    CHECK(gp_sample(m, g, 50, 9) != gp_sample(m, g, 50, 10));
  }
}

TEST_CASE("model JSON round-trip") {
  const auto pts = sphere_points(40, 0.02, 13, 0.001);
  const auto m = gp_fit(pts);
  const auto back = gp_model_from_json(nlohmann::json::parse(to_json(m).dump()));
  Rng rng(14);
  std::vector<Direction> q;
  for (int i = 0; i < 10; ++i) q.push_back(random_direction(rng));
  const auto a = gp_posterior(m, q), b = gp_posterior(back, q);
  for (int i = 0; i < 10; ++i) CHECK(a.means[i] == doctest::Approx(b.means[i]).epsilon(1e-12));
}
