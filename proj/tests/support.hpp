#pragma once

#include "esim/geometry.hpp"

#include <random>

namespace esim::testing {

// Hand-rolled generators for the property tests. Every test seeds its own
// stream so failures reproduce from the printed seed.

inline Vec3 random_unit(Rng& rng) {
  std::normal_distribution<double> g;
  Vec3 v(g(rng), g(rng), g(rng));
  while (v.norm() < 1e-9) v = Vec3(g(rng), g(rng), g(rng));
  return v.normalized();
}

inline Direction random_direction(Rng& rng) { return Direction::from_vector(random_unit(rng)); }

inline Orientation random_orientation(Rng& rng) {
  std::uniform_real_distribution<double> a(-kPi, kPi), b(-kPi / 2, kPi / 2);
  return {a(rng), b(rng), a(rng)};
}

inline double uniform(Rng& rng, double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng); }

inline SolidObject sphere(double r) {
  SolidObject o;
  Primitive p;
  p.kind = PrimitiveKind::Sphere;
  p.halfExtents = Vec3::Constant(r);
  o.primitives.push_back(p);
  o.maxWidth = 2 * r;
  return o;
}

inline SolidObject box(const Vec3& h) {
  SolidObject o;
  Primitive p;
  p.kind = PrimitiveKind::Box;
  p.halfExtents = h;
  o.primitives.push_back(p);
  o.maxWidth = 2 * h.norm();
  return o;
}

}  // namespace esim::testing
