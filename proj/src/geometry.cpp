#include "esim/geometry.hpp"

#include <algorithm>
#include <limits>
#include <string>

namespace esim {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

// Intersect [lo, hi] with the slab |t * d - o| <= h along one axis.
bool clip_slab(double d, double o, double h, double& lo, double& hi) {
  if (std::abs(d) < 1e-300) return std::abs(o) <= h;
  double t0 = (o - h) / d;
  double t1 = (o + h) / d;
  if (t0 > t1) std::swap(t0, t1);
  lo = std::max(lo, t0);
  hi = std::min(hi, t1);
  return lo <= hi;
}

// Solve |t * a - b|^2 <= rho^2 for t (a, b 2D or 3D).
template <typename V>
bool clip_quadric(const V& a, const V& b, double rho, double& lo, double& hi) {
  const double A = a.squaredNorm();
  const double B = -2.0 * a.dot(b);
  const double C = b.squaredNorm() - rho * rho;
  if (A < 1e-300) return C <= 0.0;
  const double disc = B * B - 4.0 * A * C;
  if (disc < 0.0) return false;
  const double sq = std::sqrt(disc);
  // numerically stable roots
  const double q = -0.5 * (B + std::copysign(sq, B));
  double t0 = q / A;
  double t1 = (q != 0.0) ? C / q : -t0;
  if (t0 > t1) std::swap(t0, t1);
  lo = std::max(lo, t0);
  hi = std::min(hi, t1);
  return lo <= hi;
}

double contour_at(const SolidObject& object, const Mat3& Rt, double theta) {
  // r(phi) cos(phi) along the hole-frame meridian at theta; dense scan then
  // golden-section refinement around the best sample.
  auto f = [&](double phi) {
    const Vec3 d = Rt * Direction{theta, phi}.unit();
    return object.radius(d) * std::cos(phi);
  };
  constexpr int kSteps = 180;
  const double h = kPi / kSteps;
  double best = -kInf;
  int bestIdx = 0;
  for (int i = 0; i <= kSteps; ++i) {
    const double v = f(-kPi / 2 + i * h);
    if (v > best) {
      best = v;
      bestIdx = i;
    }
  }
  double a = -kPi / 2 + std::max(0, bestIdx - 1) * h;
  double b = -kPi / 2 + std::min(kSteps, bestIdx + 1) * h;
  const double g = (std::sqrt(5.0) - 1.0) / 2.0;
  double c = b - g * (b - a), d = a + g * (b - a);
  double fc = f(c), fd = f(d);
  for (int it = 0; it < 40; ++it) {
    if (fc > fd) {
      b = d;
      d = c;
      fd = fc;
      c = b - g * (b - a);
      fc = f(c);
    } else {
      a = c;
      c = d;
      fc = fd;
      d = a + g * (b - a);
      fd = f(d);
    }
  }
  return std::max({best, fc, fd});
}

}  // namespace

const char* to_string(PrimitiveKind kind) {
  switch (kind) {
    case PrimitiveKind::Sphere: return "sphere";
    case PrimitiveKind::Box: return "box";
    case PrimitiveKind::Cylinder: return "cylinder";
  }
  return "sphere";
}

PrimitiveKind primitive_kind_from_string(const std::string& s) {
  if (s == "sphere") return PrimitiveKind::Sphere;
  if (s == "box") return PrimitiveKind::Box;
  if (s == "cylinder") return PrimitiveKind::Cylinder;
  throw Error(ErrorCode::InvalidArgument, "unknown primitive kind '" + s + "'");
}

std::optional<std::pair<double, double>> Primitive::ray_interval(const Vec3& dir) const {
  double lo = -kInf, hi = kInf;
  switch (kind) {
    case PrimitiveKind::Sphere:
      if (!clip_quadric(dir, offset, halfExtents.x(), lo, hi)) return std::nullopt;
      break;
    case PrimitiveKind::Box: {
      const Mat3 Qt = rotation.toRotationMatrix().transpose();
      const Vec3 d = Qt * dir;
      const Vec3 o = Qt * offset;
      for (int i = 0; i < 3; ++i)
        if (!clip_slab(d[i], o[i], halfExtents[i], lo, hi)) return std::nullopt;
      break;
    }
    case PrimitiveKind::Cylinder: {
      const Mat3 Qt = rotation.toRotationMatrix().transpose();
      const Vec3 d = Qt * dir;
      const Vec3 o = Qt * offset;
      if (!clip_slab(d.z(), o.z(), halfExtents.z(), lo, hi)) return std::nullopt;
      if (!clip_quadric(Eigen::Vector2d(d.x(), d.y()), Eigen::Vector2d(o.x(), o.y()),
                        halfExtents.x(), lo, hi))
        return std::nullopt;
      break;
    }
  }
  return std::make_pair(lo, hi);
}

bool Primitive::contains(const Vec3& p) const {
  const Vec3 local = rotation.toRotationMatrix().transpose() * (p - offset);
  switch (kind) {
    case PrimitiveKind::Sphere: return local.norm() <= halfExtents.x();
    case PrimitiveKind::Box: return (local.cwiseAbs() - halfExtents).maxCoeff() <= 0.0;
    case PrimitiveKind::Cylinder:
      return std::abs(local.z()) <= halfExtents.z() &&
             local.head<2>().norm() <= halfExtents.x();
  }
  return false;
}

double SolidObject::radius(const Vec3& dir) const {
  double r = 0.0;
  for (const auto& p : primitives) {
    const auto iv = p.ray_interval(dir);
    if (iv && iv->second > r) r = iv->second;
  }
  return r;
}

SolidObject SolidObject::rotated(const Mat3& R) const {
  SolidObject out = *this;
  const Eigen::Quaterniond qR(R);
  for (auto& p : out.primitives) {
    p.rotation = (qR * p.rotation).normalized();
    p.offset = R * p.offset;
  }
  return out;
}

Orientation Orientation::from_matrix(const Mat3& R) {
  Orientation q;
  q.beta = std::atan2(-R(2, 0), std::hypot(R(0, 0), R(1, 0)));
  q.alpha = wrap_angle(std::atan2(R(2, 1), R(2, 2)));
  q.gamma = wrap_angle(std::atan2(R(1, 0), R(0, 0)));
  q.beta = wrap_angle(q.beta);
  return q;
}

SectionSpec SectionSpec::from_normal(const Vec3& n, double d, double bandHalfWidth) {
  const Vec3 u = n.normalized();
  SectionSpec s;
  s.zeta = std::asin(std::clamp(-u.y(), -1.0, 1.0));
  s.psi = std::atan2(u.x(), u.z());
  s.d = d;
  s.bandHalfWidth = bandHalfWidth;
  return s;
}

ShapeStats shape_stats(const SolidObject& object, int gridRes) {
  ShapeStats st;
  st.minRadius = kInf;
  const int nTheta = gridRes;
  const int nPhi = std::max(2, gridRes / 2);
  for (int j = 0; j < nPhi; ++j) {
    const double phi = -kPi / 2 + (j + 0.5) * kPi / nPhi;
    for (int i = 0; i < nTheta; ++i) {
      const Vec3 d = Direction{-kPi + i * 2 * kPi / nTheta, phi}.unit();
      const double r = object.radius(d);
      st.minRadius = std::min(st.minRadius, r);
      st.maxRadius = std::max(st.maxRadius, r);
      st.maxWidth = std::max(st.maxWidth, r + object.radius(-d));
    }
  }
  st.aspect = st.minRadius > 0 ? st.maxRadius / st.minRadius : kInf;
  return st;
}

bool star_shape_check(const SolidObject& object, int gridRes) {
  if (gridRes < 4) throw Error(ErrorCode::InvalidArgument, "star_shape_check: gridRes too small");
  const int nTheta = gridRes;
  const int nPhi = gridRes;
  std::vector<std::pair<double, double>> ivs;
  for (int j = 0; j < nPhi; ++j) {
    const double phi = -kPi / 2 + (j + 0.5) * kPi / nPhi;
    for (int i = 0; i < nTheta; ++i) {
      const Vec3 d = Direction{-kPi + i * 2 * kPi / nTheta, phi}.unit();
      ivs.clear();
      for (const auto& p : object.primitives) {
        const auto iv = p.ray_interval(d);
        if (iv && iv->second > 0.0) ivs.emplace_back(std::max(iv->first, 0.0), iv->second);
      }
      if (ivs.empty()) return false;
      std::sort(ivs.begin(), ivs.end());
      // inside at the origin, then a single inside -> outside transition
      if (ivs.front().first > 0.0) return false;
      double reach = ivs.front().second;
      for (std::size_t k = 1; k < ivs.size(); ++k) {
        if (ivs[k].first > reach + 1e-12) return false;
        reach = std::max(reach, ivs[k].second);
      }
    }
  }
  return true;
}

SolidObject generate_object(std::uint64_t seed, int nPrimitives, const GenerateOptions& options) {
  if (nPrimitives < 1 || nPrimitives > 3)
    throw Error(ErrorCode::InvalidArgument, "generate_object: nPrimitives must be 1, 2 or 3");

  Rng rng(derive_seed(seed, {0x6f626a656374ULL}));
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  auto uniform = [&](double a, double b) { return a + (b - a) * unit(rng); };

  std::string lastViolation = "none";
  for (int draw = 0; draw < options.maxDraws; ++draw) {
    SolidObject obj;
    obj.seed = seed;
    for (int k = 0; k < nPrimitives; ++k) {
      Primitive p;
      const int kindIdx = static_cast<int>(unit(rng) * 3.0) % 3;
      p.kind = options.forceKind.value_or(static_cast<PrimitiveKind>(kindIdx));
      switch (p.kind) {
        case PrimitiveKind::Sphere: p.halfExtents = Vec3::Constant(uniform(0.010, 0.022)); break;
        case PrimitiveKind::Box:
          p.halfExtents = Vec3(uniform(0.007, 0.016), uniform(0.007, 0.016), uniform(0.007, 0.016));
          break;
        case PrimitiveKind::Cylinder: {
          const double rad = uniform(0.008, 0.018);
          p.halfExtents = Vec3(rad, rad, uniform(0.008, 0.020));
          break;
        }
      }
      if (options.forceHalfExtents) p.halfExtents = *options.forceHalfExtents;
      p.rotation = Eigen::Quaterniond(uniform_random_rotation(rng)).normalized();
      // offset keeps the origin inside every primitive
      Vec3 dir(uniform(-1, 1), uniform(-1, 1), uniform(-1, 1));
      if (dir.norm() < 1e-9) dir = Vec3::UnitX();
      const double mag = uniform(0.0, 0.6) * p.halfExtents.minCoeff();
      p.offset = (nPrimitives == 1 && p.kind == PrimitiveKind::Sphere) ? Vec3::Zero()
                                                                       : Vec3(mag * dir.normalized());
      obj.primitives.push_back(p);
    }

    if (!star_shape_check(obj, options.checkGrid)) {
      lastViolation = "star-shaped";
      continue;
    }
    const auto st = shape_stats(obj, options.checkGrid);
    if (st.maxWidth > options.maxWidth) {
      lastViolation = "maxWidth <= " + std::to_string(options.maxWidth);
      continue;
    }
    if (st.aspect > options.maxAspect) {
      lastViolation = "aspect ratio <= " + std::to_string(options.maxAspect);
      continue;
    }
    obj.maxWidth = st.maxWidth;
    return obj;
  }
  throw Error(ErrorCode::Generation, "generate_object: rejection sampling failed after " +
                                         std::to_string(options.maxDraws) +
                                         " draws; violated invariant: " + lastViolation);
}

double radius(const SolidObject& object, double theta, double phi) {
  return object.radius(theta, phi);
}

double projected_contour(const SolidObject& object, const Mat3& R, double theta) {
  return contour_at(object, R.transpose(), theta);
}

std::vector<double> contour_angles(int M) {
  std::vector<double> a(M);
  for (int m = 0; m < M; ++m) a[m] = -kPi + 2.0 * kPi * m / M;
  return a;
}

HoleContour make_hole(const SolidObject& object, const Orientation& feasible, int M, double clearance) {
  if (M < 36) throw Error(ErrorCode::InvalidArgument, "make_hole: M must be >= 36");
  HoleContour hole;
  hole.angles = contour_angles(M);
  hole.clearance = clearance;
  hole.radii.resize(M);
  const Mat3 Rt = feasible.matrix().transpose();
  for (int m = 0; m < M; ++m) hole.radii[m] = contour_at(object, Rt, hole.angles[m]) + clearance;
  return hole;
}

double true_min_margin(const SolidObject& object, const Mat3& R, const HoleContour& hole) {
  const Mat3 Rt = R.transpose();
  double best = kInf;
  for (std::size_t m = 0; m < hole.size(); ++m)
    best = std::min(best, hole.radii[m] - contour_at(object, Rt, hole.angles[m]));
  return best;
}

double true_min_margin(const SolidObject& object, const Orientation& q, const HoleContour& hole) {
  return true_min_margin(object, q.matrix(), hole);
}

nlohmann::json to_json(const SolidObject& object) {
  nlohmann::json prims = nlohmann::json::array();
  for (const auto& p : object.primitives) {
    prims.push_back({
        {"kind", to_string(p.kind)},
        {"halfExtents", {p.halfExtents.x(), p.halfExtents.y(), p.halfExtents.z()}},
        {"rotation", {p.rotation.w(), p.rotation.x(), p.rotation.y(), p.rotation.z()}},
        {"offset", {p.offset.x(), p.offset.y(), p.offset.z()}},
    });
  }
  return {{"primitives", prims}, {"seed", object.seed}, {"maxWidth", object.maxWidth}};
}

SolidObject object_from_json(const nlohmann::json& j) {
  try {
    SolidObject obj;
    obj.seed = j.value("seed", std::uint64_t{0});
    for (const auto& pj : j.at("primitives")) {
      Primitive p;
      p.kind = primitive_kind_from_string(pj.at("kind").get<std::string>());
      const auto& h = pj.at("halfExtents");
      p.halfExtents = Vec3(h.at(0), h.at(1), h.at(2));
      const auto& q = pj.at("rotation");
      p.rotation = Eigen::Quaterniond(q.at(0), q.at(1), q.at(2), q.at(3)).normalized();
      const auto& o = pj.at("offset");
      p.offset = Vec3(o.at(0), o.at(1), o.at(2));
      if ((p.halfExtents.array() <= 0.0).any())
        throw Error(ErrorCode::InvalidArgument, "primitive halfExtents must be positive");
      obj.primitives.push_back(p);
    }
    if (obj.primitives.empty() || obj.primitives.size() > 3)
      throw Error(ErrorCode::InvalidArgument, "object must have 1-3 primitives");
    obj.maxWidth = j.contains("maxWidth") ? j.at("maxWidth").get<double>() : shape_stats(obj, 64).maxWidth;
    return obj;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::InvalidArgument, std::string("object json: ") + e.what());
  }
}

nlohmann::json to_json(const HoleContour& hole) {
  return {{"angles", hole.angles}, {"radii", hole.radii}, {"clearance", hole.clearance}};
}

HoleContour hole_from_json(const nlohmann::json& j) {
  try {
    HoleContour h;
    h.angles = j.at("angles").get<std::vector<double>>();
    h.radii = j.at("radii").get<std::vector<double>>();
    h.clearance = j.value("clearance", 0.0);
    if (h.angles.size() != h.radii.size() || h.radii.empty())
      throw Error(ErrorCode::InvalidArgument, "hole json: angles/radii length mismatch");
    for (double r : h.radii)
      if (!(r > 0.0)) throw Error(ErrorCode::InvalidArgument, "hole json: radii must be positive");
    return h;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::InvalidArgument, std::string("hole json: ") + e.what());
  }
}

nlohmann::json to_json(const Orientation& q) {
  return {{"alpha", q.alpha}, {"beta", q.beta}, {"gamma", q.gamma}};
}

Orientation orientation_from_json(const nlohmann::json& j) {
  return {j.at("alpha").get<double>(), j.at("beta").get<double>(), j.at("gamma").get<double>()};
}

}  // namespace esim
