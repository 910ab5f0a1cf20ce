#include "esim/scanner.hpp"

#include <Eigen/Dense>

#include <algorithm>

namespace esim {

namespace {

enum StreamTag : std::uint64_t { kSectionStream = 11, kDepthStream = 12, kOdomStream = 13 };

struct BandGrid {
  int S = 0;
  int B = 0;
  std::vector<double> t;
  std::vector<Vec3> points;  // [i * B + j]
};

double curve_radius(const SolidObject& object, const Vec3& centre, const Vec3& u) {
  // The in-plane ray from the plane centre starts inside the body; bisect for
  // the first parameter where |p| meets the surface radius.
  auto f = [&](double rho) {
    const Vec3 p = centre + rho * u;
    const double n = p.norm();
    return n - object.radius(p / n);
  };
  double lo = 0.0;
  double hi = 2.0 * std::max(object.maxWidth, 0.01) + centre.norm();
  while (f(hi) <= 0.0) hi *= 2.0;
  for (int it = 0; it < 64; ++it) {
    const double mid = 0.5 * (lo + hi);
    (f(mid) > 0.0 ? hi : lo) = mid;
  }
  return 0.5 * (lo + hi);
}

void check_plane_hits(const SolidObject& object, const SectionSpec& spec) {
  const Vec3 n = spec.normal();
  if (spec.d == 0.0) return;
  const double reach = object.radius(spec.d > 0 ? n : Vec3(-n));
  if (std::abs(spec.d) >= reach)
    throw Error(ErrorCode::EmptyScan, "section plane at d=" + std::to_string(spec.d) +
                                          " misses the object (extent " + std::to_string(reach) + ")");
}

Vec3 tilt(const SolidObject& object, const Vec3& curvePoint, const Vec3& n, double delta) {
  const Vec3 c = curvePoint.normalized();
  if (delta == 0.0) return curvePoint;
  const Vec3 nPerp = (n - n.dot(c) * c).normalized();
  const Vec3 dir = (std::cos(delta) * c + std::sin(delta) * nPerp).normalized();
  return object.radius(dir) * dir;
}

BandGrid band_grid(const SolidObject& object, const SectionSpec& spec, int S, int B) {
  check_plane_hits(object, spec);
  const Mat3 F = spec.frame();
  const Vec3 e1 = F.col(0), e2 = F.col(1), n = F.col(2);
  const Vec3 centre = spec.d * n;
  BandGrid g;
  g.S = S;
  g.B = B;
  g.t.resize(S);
  g.points.resize(static_cast<std::size_t>(S) * B);
  for (int i = 0; i < S; ++i) {
    const double t = -kPi + 2.0 * kPi * i / S;
    g.t[i] = t;
    const Vec3 u = std::cos(t) * e1 + std::sin(t) * e2;
    const Vec3 p = centre + curve_radius(object, centre, u) * u;
    for (int j = 0; j < B; ++j) {
      const double delta = B == 1 ? 0.0 : -spec.bandHalfWidth + 2.0 * spec.bandHalfWidth * j / (B - 1);
      g.points[static_cast<std::size_t>(i) * B + j] = tilt(object, p, n, delta);
    }
  }
  return g;
}

void check_band_args(const SectionSpec& spec, int samplesPerCircle, int bandRows) {
  if (samplesPerCircle < 36) throw Error(ErrorCode::InvalidArgument, "samplesPerCircle must be at least 36");
  if (bandRows < 1) throw Error(ErrorCode::InvalidArgument, "bandRows must be positive");
  if (!(spec.bandHalfWidth > 0.0)) throw Error(ErrorCode::InvalidArgument, "bandHalfWidth must be positive");
}

}  // namespace

void NoiseConfig::validate() const {
  if (pointSigma < 0 || depthSigma < 0 || odomRotSigma < 0 || odomTransSigma < 0)
    throw Error(ErrorCode::InvalidArgument, "noise sigmas must be non-negative");
}

Vec3 section_band_point(const SolidObject& object, const SectionSpec& spec, double t, double delta) {
  check_plane_hits(object, spec);
  const Mat3 F = spec.frame();
  const Vec3 n = F.col(2);
  const Vec3 centre = spec.d * n;
  const Vec3 u = std::cos(t) * F.col(0) + std::sin(t) * F.col(1);
  return tilt(object, centre + curve_radius(object, centre, u) * u, n, delta);
}

std::vector<SurfacePoint> scan_section(const SolidObject& object, const SectionSpec& spec, const NoiseConfig& noise,
                                       int samplesPerCircle, int bandRows) {
  noise.validate();
  check_band_args(spec, samplesPerCircle, bandRows);
  const BandGrid g = band_grid(object, spec, samplesPerCircle, bandRows);
  Rng rng(derive_seed(noise.seed, {kSectionStream}));
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::vector<SurfacePoint> out;
  out.reserve(g.points.size());
  for (const Vec3& p : g.points) {
    SurfacePoint s = SurfacePoint::from_position(p);
    if (noise.pointSigma > 0) s.r = std::max(s.r + noise.pointSigma * gauss(rng), 1e-6);
    out.push_back(s);
  }
  return out;
}

std::vector<ScanPatch> scan_patch_sequence(const SolidObject& object, const SectionSpec& spec,
                                           const NoiseConfig& noise, int nPatches, const PatchOptions& options) {
  noise.validate();
  check_band_args(spec, options.samplesPerCircle, options.bandRows);
  if (nPatches < 2) throw Error(ErrorCode::InvalidArgument, "nPatches must be at least 2");
  if (!(options.coverage > 0.0)) throw Error(ErrorCode::InvalidArgument, "coverage must be positive");
  if (options.widthFactor < 1.0 / 0.7)
    throw Error(ErrorCode::InvalidArgument, "patch width gives less than 30% overlap between neighbours");

  const BandGrid g = band_grid(object, spec, options.samplesPerCircle, options.bandRows);
  const Vec3 n = spec.normal();
  const Vec3 sensorAxis = spec.frame().col(0);
  const double step = options.coverage / (nPatches - 1);
  const double width = std::min(options.widthFactor * step, 2.0 * kPi);

  Rng depthRng(derive_seed(noise.seed, {kDepthStream}));
  Rng odomRng(derive_seed(noise.seed, {kOdomStream}));
  std::normal_distribution<double> gauss(0.0, 1.0);

  std::vector<ScanPatch> patches(nPatches);
  for (int k = 0; k < nPatches; ++k) {
    ScanPatch& patch = patches[k];
    const double a = k * step;
    const Mat3 Tk = exp_so3(a * n);
    patch.trueObjectRotation = a;
    patch.truePose = {Tk.transpose(), Vec3::Zero()};
    patch.rollAxis = n;
    patch.sensorAxis = sensorAxis;
    patch.arcWidth = width;
    for (int i = 0; i < g.S; ++i) {
      if (std::abs(wrap_angle(g.t[i] + a)) > 0.5 * width + 1e-9) continue;
      for (int j = 0; j < g.B; ++j) {
        Vec3 p = Tk * g.points[static_cast<std::size_t>(i) * g.B + j];
        if (noise.depthSigma > 0) p += noise.depthSigma * gauss(depthRng) * sensorAxis;
        patch.points.push_back(p);
      }
    }
    if (patch.points.size() < 10)
      throw Error(ErrorCode::InvalidArgument, "patch has fewer than 10 points; increase samplesPerCircle");

    if (k == 0) {
      patch.odomPose = patch.truePose;
    } else {
      const RigidTransform rel = patches[k - 1].truePose.inverse() * patch.truePose;
      Eigen::Matrix<double, 6, 1> xi;
      for (int c = 0; c < 3; ++c) xi[c] = noise.odomRotSigma * gauss(odomRng);
      for (int c = 3; c < 6; ++c) xi[c] = noise.odomTransSigma * gauss(odomRng);
      patch.odomPose = patches[k - 1].odomPose * rel * exp_se3(xi);
    }
  }
  return patches;
}

std::vector<ScanPatch> filter_patch_depth(const std::vector<ScanPatch>& patches, double radius) {
  if (!(radius > 0.0)) return patches;
  std::vector<ScanPatch> out = patches;
  const double r2 = radius * radius;
  for (std::size_t k = 0; k < patches.size(); ++k) {
    const auto& src = patches[k].points;
    const Vec3 a = patches[k].sensorAxis.normalized();
    const Vec3 u = (std::abs(a.x()) < 0.9 ? Vec3::UnitX() : Vec3::UnitY()).cross(a).normalized();
    const Vec3 v = a.cross(u);
    std::vector<Eigen::Vector3d> img(src.size());  // (u, v, depth)
    for (std::size_t i = 0; i < src.size(); ++i) img[i] = {src[i].dot(u), src[i].dot(v), src[i].dot(a)};
    for (std::size_t i = 0; i < src.size(); ++i) {
      Eigen::Matrix3d A = Eigen::Matrix3d::Zero();
      Eigen::Vector3d b = Eigen::Vector3d::Zero();
      int count = 0;
      for (std::size_t j = 0; j < src.size(); ++j) {
        const double du = img[j].x() - img[i].x(), dv = img[j].y() - img[i].y();
        if (du * du + dv * dv > r2) continue;
        const Eigen::Vector3d row(1.0, du, dv);
        A += row * row.transpose();
        b += row * img[j].z();
        ++count;
      }
      if (count < 6) continue;
      const Eigen::Vector3d coef = A.ldlt().solve(b);
      if (!coef.allFinite()) continue;
      out[k].points[i] = src[i] + (coef[0] - img[i].z()) * a;
    }
  }
  return out;
}

nlohmann::json to_json(const RigidTransform& T) {
  const Eigen::Quaterniond q(T.rotation);
  return {{"rotation", {q.w(), q.x(), q.y(), q.z()}},
          {"translation", {T.translation.x(), T.translation.y(), T.translation.z()}}};
}

RigidTransform rigid_transform_from_json(const nlohmann::json& j) {
  try {
    const auto& r = j.at("rotation");
    const auto& t = j.at("translation");
    Eigen::Quaterniond q(r.at(0).get<double>(), r.at(1).get<double>(), r.at(2).get<double>(),
                         r.at(3).get<double>());
    return {q.normalized().toRotationMatrix(), Vec3(t.at(0).get<double>(), t.at(1).get<double>(),
                                                    t.at(2).get<double>())};
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::InvalidArgument, std::string("transform json: ") + e.what());
  }
}

nlohmann::json to_json(const std::vector<ScanPatch>& patches) {
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& p : patches) {
    nlohmann::json pts = nlohmann::json::array();
    for (const auto& v : p.points) pts.push_back({v.x(), v.y(), v.z()});
    arr.push_back({{"points", pts},
                   {"pose", to_json(p.odomPose)},
                   {"truePose", to_json(p.truePose)},
                   {"trueObjectRotation", p.trueObjectRotation},
                   {"rollAxis", {p.rollAxis.x(), p.rollAxis.y(), p.rollAxis.z()}},
                   {"sensorAxis", {p.sensorAxis.x(), p.sensorAxis.y(), p.sensorAxis.z()}},
                   {"arcWidth", p.arcWidth}});
  }
  return arr;
}

std::vector<ScanPatch> patches_from_json(const nlohmann::json& j) {
  std::vector<ScanPatch> out;
  try {
    for (const auto& e : j) {
      ScanPatch p;
      for (const auto& v : e.at("points"))
        p.points.emplace_back(v.at(0).get<double>(), v.at(1).get<double>(), v.at(2).get<double>());
      p.odomPose = rigid_transform_from_json(e.at("pose"));
      if (e.contains("truePose")) p.truePose = rigid_transform_from_json(e.at("truePose"));
      p.trueObjectRotation = e.value("trueObjectRotation", 0.0);
      if (e.contains("rollAxis")) {
        const auto& a = e.at("rollAxis");
        p.rollAxis = Vec3(a.at(0).get<double>(), a.at(1).get<double>(), a.at(2).get<double>());
      }
      if (e.contains("sensorAxis")) {
        const auto& a = e.at("sensorAxis");
        p.sensorAxis = Vec3(a.at(0).get<double>(), a.at(1).get<double>(), a.at(2).get<double>());
      }
      p.arcWidth = e.value("arcWidth", 0.0);
      out.push_back(std::move(p));
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::InvalidArgument, std::string("patch json: ") + e.what());
  }
  return out;
}

nlohmann::json to_json(const NoiseConfig& noise) {
  return {{"pointSigma", noise.pointSigma},
          {"depthSigma", noise.depthSigma},
          {"odomRotSigma", noise.odomRotSigma},
          {"odomTransSigma", noise.odomTransSigma},
          {"seed", noise.seed}};
}

NoiseConfig noise_config_from_json(const nlohmann::json& j) {
  NoiseConfig n;
  try {
    n.pointSigma = j.value("pointSigma", n.pointSigma);
    n.depthSigma = j.value("depthSigma", n.depthSigma);
    n.odomRotSigma = j.value("odomRotSigma", n.odomRotSigma);
    n.odomTransSigma = j.value("odomTransSigma", n.odomTransSigma);
    n.seed = j.value("seed", n.seed);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::InvalidArgument, std::string("noise json: ") + e.what());
  }
  n.validate();
  return n;
}

}  // namespace esim
