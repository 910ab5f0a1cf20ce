#include "support.hpp"

#include "esim/geometry.hpp"

#include <doctest.h>

using namespace esim;
using namespace esim::testing;

namespace {

// Ray marcher over Primitive::contains, independent of the slab/quadric clipping.
double march_exit(const SolidObject& o, const Vec3& dir, double step = 1e-6, double tMax = 0.1) {
  double last = 0.0;
  for (double t = 0.0; t < tMax; t += step) {
    const Vec3 p = t * dir;
    for (const auto& prim : o.primitives)
      if (prim.contains(p)) {
        last = t;
        break;
      }
  }
  return last;
}

// Number of inside/outside transitions along the ray from the origin.
int crossings(const SolidObject& o, const Vec3& dir, double tMax = 0.1, int n = 4000) {
  auto inside = [&](double t) {
    for (const auto& prim : o.primitives)
      if (prim.contains(t * dir)) return true;
    return false;
  };
  int c = 0;
  bool prev = inside(0.0);
  for (int i = 1; i <= n; ++i) {
    const bool cur = inside(tMax * i / n);
    if (cur != prev) ++c;
    prev = cur;
  }
  return c;
}

// Radial function of an axis-aligned rectangle with half-sides a, b.
double rect_radius(double a, double b, double theta) {
  const double c = std::abs(std::cos(theta)), s = std::abs(std::sin(theta));
  return std::min(c > 1e-15 ? a / c : 1e300, s > 1e-15 ? b / s : 1e300);
}

}  // namespace

TEST_CASE("forced sphere has constant radius") {
  GenerateOptions opt;
  opt.forceKind = PrimitiveKind::Sphere;
  opt.forceHalfExtents = Vec3::Constant(0.02);
  const auto o = generate_object(7, 1, opt);
  Rng rng(1);
  for (int i = 0; i < 100; ++i) CHECK(o.radius(random_unit(rng)) == doctest::Approx(0.02).epsilon(1e-12));
}

TEST_CASE("generated composite respects the width and aspect bounds") {
  const auto o = generate_object(42, 3);
  const auto st = shape_stats(o, 128);
  CHECK(st.maxWidth <= 0.05 + 1e-12);
  CHECK(st.aspect <= 2.5 + 1e-9);
  CHECK(star_shape_check(o, 64));
}

TEST_CASE("generate_object is a pure function of its seed") {
  for (std::uint64_t seed : {1ull, 42ull, 1234567ull}) {
    const auto a = generate_object(seed, 3);
    const auto b = generate_object(seed, 3);
    CHECK(to_json(a).dump() == to_json(b).dump());
  }
  CHECK(to_json(generate_object(1, 3)).dump() != to_json(generate_object(2, 3)).dump());
}

TEST_CASE("primitive radii") {
  CHECK(sphere(0.02).radius(Direction{1.3, -0.4}.unit()) == doctest::Approx(0.02));
  const double a = 0.01;
  const auto b = box(Vec3::Constant(a));
  CHECK(b.radius(Vec3::UnitX()) == doctest::Approx(a).epsilon(1e-12));
  const Vec3 diag = Vec3(1, 1, 0).normalized();
  CHECK(b.radius(diag) == doctest::Approx(a * std::sqrt(2.0)).epsilon(1e-12));
  CHECK(std::abs(march_exit(b, diag) - a * std::sqrt(2.0)) < 2e-6);
}

TEST_CASE("ray clipping agrees with a marching oracle on random primitives") {
  Rng rng(11);
  for (int trial = 0; trial < 20; ++trial) {
    const auto o = generate_object(1000 + trial, 1 + trial % 3);
    for (int i = 0; i < 5; ++i) {
      const Vec3 d = random_unit(rng);
      CHECK(std::abs(o.radius(d) - march_exit(o, d, 2e-6)) < 4e-6);
    }
  }
}

TEST_CASE("star-shape check") {
  CHECK(star_shape_check(sphere(0.02), 32));

  SolidObject two;
  for (double x : {-0.015, 0.015}) {
    Primitive p;
    p.halfExtents = Vec3::Constant(0.005);
    p.offset = Vec3(x, 0, 0);
    two.primitives.push_back(p);
  }
  CHECK_FALSE(star_shape_check(two, 32));
  // the oracle: a ray through both spheres changes side more than once
  CHECK(crossings(two, Vec3::UnitX()) >= 2);

  for (std::uint64_t s = 0; s < 5; ++s) CHECK(star_shape_check(generate_object(s, 3), 48));
}

TEST_CASE("hole of a sphere") {
  const auto h = make_hole(sphere(0.02), {}, 72, 0.002);
  REQUIRE(h.size() == 72);
  for (double r : h.radii) CHECK(r == doctest::Approx(0.022).epsilon(1e-9));
  Rng rng(3);
  for (int i = 0; i < 10; ++i)
    CHECK(true_min_margin(sphere(0.02), random_orientation(rng), h) == doctest::Approx(0.002).epsilon(1e-8));
  CHECK_THROWS_AS(make_hole(sphere(0.02), {}, 20, 0.002), Error);
}

TEST_CASE("margin at the feasible orientation equals the clearance") {
  Rng rng(5);
  for (int i = 0; i < 5; ++i) {
    const auto o = generate_object(200 + i, 3);
    const Orientation q = random_orientation(rng);
    const auto h = make_hole(o, q, 72, 0.002);
    const double dtheta = 2 * kPi / 72;
    CHECK(std::abs(true_min_margin(o, q, h) - 0.002) <= o.maxWidth * dtheta);
  }
}

TEST_CASE("zero clearance at the identity gives zero margin") {
  for (std::uint64_t s = 0; s < 5; ++s) {
    const auto o = generate_object(300 + s, 2);
    CHECK(true_min_margin(o, Orientation{}, make_hole(o, {}, 72, 0.0)) == 0.0);
  }
}

TEST_CASE("elongated box turned a quarter turn does not fit") {
  const double a = 0.02, b = 0.008;
  const auto o = box(Vec3(a, b, b));
  const auto h = make_hole(o, {}, 72, 0.002);
  const Orientation q{0, 0, kPi / 2};
  double oracle = 1e300;
  for (std::size_t m = 0; m < h.size(); ++m) {
    const double th = h.angles[m];
    oracle = std::min(oracle, rect_radius(a, b, th) + 0.002 - rect_radius(b, a, th));
  }
  CHECK(oracle < 0);
  CHECK(true_min_margin(o, q, h) == doctest::Approx(oracle).epsilon(1e-6));
  for (std::size_t m = 0; m < h.size(); ++m)
    CHECK(projected_contour(o, q.matrix(), h.angles[m]) ==
          doctest::Approx(rect_radius(b, a, h.angles[m])).epsilon(1e-6));
}

TEST_CASE("asymmetric composite only fits near its feasible orientation") {
  // Bar with a diagonal arm and a tilted peg: no mirror or turn symmetry.
  SolidObject o = box(Vec3(0.02, 0.006, 0.005));
  Primitive arm;
  arm.kind = PrimitiveKind::Box;
  arm.halfExtents = Vec3(0.016, 0.004, 0.004);
  arm.rotation = Eigen::Quaterniond(Eigen::AngleAxisd(kPi / 4, Vec3::UnitZ()));
  arm.offset = Vec3(0.008, 0.008, 0.0);
  Primitive peg;
  peg.kind = PrimitiveKind::Cylinder;
  peg.halfExtents = Vec3(0.004, 0.004, 0.013);
  peg.rotation = Eigen::Quaterniond(Eigen::AngleAxisd(-kPi / 4, Vec3::UnitY()));
  peg.offset = Vec3(-0.008, 0.0, 0.008);
  o.primitives.push_back(arm);
  o.primitives.push_back(peg);
  REQUIRE(star_shape_check(o, 64));
  Rng rng(17);
  const Orientation feasible = Orientation::from_matrix(uniform_random_rotation(rng));
  const auto h = make_hole(o, feasible, 72, 0.002);
  const Mat3 F = feasible.matrix();
  int tested = 0, fits = 0;
  for (int i = -18; i < 18; i += 3)
    for (int j = -9; j <= 9; j += 3)
      for (int k = -18; k < 18; k += 3) {
        const Orientation q{i * kPi / 18, j * kPi / 18, k * kPi / 18};
        if (rotation_angle_between(q.matrix(), F) < 30 * kPi / 180) continue;
        ++tested;
        if (true_min_margin(o, q, h) >= 0) ++fits;
      }
  CHECK(tested > 500);
  CHECK(fits == 0);
}

TEST_CASE("radius is rotation-equivariant") {
  Rng rng(23);
  for (int trial = 0; trial < 5; ++trial) {
    const auto o = generate_object(500 + trial, 3);
    const Mat3 R = uniform_random_rotation(rng);
    const auto ro = o.rotated(R);
    for (int i = 0; i < 100; ++i) {
      const Vec3 d = random_unit(rng);
      CHECK(std::abs(ro.radius(d) - o.radius(R.transpose() * d)) < 1e-9);
    }
  }
}

TEST_CASE("orientation and direction conversions round-trip") {
  Rng rng(29);
  for (int i = 0; i < 100; ++i) {
    const Mat3 R = uniform_random_rotation(rng);
    CHECK(rotation_angle_between(Orientation::from_matrix(R).matrix(), R) < 1e-9);
    const Vec3 v = random_unit(rng);
    CHECK((Direction::from_vector(v).unit() - v).norm() < 1e-12);
  }
  const Orientation q{0.3, -0.2, 1.1};
  CHECK(q.matrix().isApprox(rot_z(1.1) * rot_y(-0.2) * rot_x(0.3), 1e-15));
}

TEST_CASE("section frame") {
  const auto s = SectionSpec::from_normal(Vec3(0, 1, 1).normalized(), 0.003, 0.1);
  CHECK((s.normal() - Vec3(0, 1, 1).normalized()).norm() < 1e-12);
  CHECK(s.d == 0.003);
  CHECK((s.frame().transpose() * s.frame() - Mat3::Identity()).norm() < 1e-12);
}

TEST_CASE("object and hole JSON round-trip") {
  const auto o = generate_object(77, 3);
  const auto o2 = object_from_json(nlohmann::json::parse(to_json(o).dump()));
  Rng rng(31);
  for (int i = 0; i < 20; ++i) {
    const Vec3 d = random_unit(rng);
    CHECK(o2.radius(d) == doctest::Approx(o.radius(d)).epsilon(1e-12));
  }
  const auto h = make_hole(o, {0.1, 0.2, 0.3}, 72, 0.002);
  const auto h2 = hole_from_json(nlohmann::json::parse(to_json(h).dump()));
  CHECK(h2.radii == h.radii);
  CHECK(h2.clearance == h.clearance);
  CHECK_THROWS_AS(object_from_json(nlohmann::json{{"primitives", 3}}), Error);
}
