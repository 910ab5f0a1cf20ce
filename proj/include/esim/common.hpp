#pragma once

#include <Eigen/Core>
#include <Eigen/Geometry>

#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <numbers>
#include <random>
#include <stdexcept>
#include <string>

namespace esim {

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;

inline constexpr double kPi = std::numbers::pi;

enum class ErrorCode {
  InvalidArgument = 1,
  Generation,
  EmptyScan,
  DegenerateGeometry,
  Conditioning,
  GridTooLarge,
  Configuration,
  DegenerateInput,
  Io,
  Internal,
};

const char* to_string(ErrorCode code);

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

using Rng = std::mt19937_64;

/// splitmix64 finalizer; used to derive independent sub-streams from one seed.
std::uint64_t mix64(std::uint64_t x);

/// Derives a seed from a base seed and a list of tags (object index, step, purpose...).
std::uint64_t derive_seed(std::uint64_t base, std::initializer_list<std::uint64_t> tags);

/// Direction on the unit sphere in azimuth/latitude form. phi is latitude in
/// [-pi/2, pi/2], theta is azimuth in [-pi, pi).
struct Direction {
  double theta = 0.0;
  double phi = 0.0;

  Vec3 unit() const {
    const double c = std::cos(phi);
    return {c * std::cos(theta), c * std::sin(theta), std::sin(phi)};
  }
  static Direction from_vector(const Vec3& v);
};

/// A surface sample in object-centred spherical coordinates.
struct SurfacePoint {
  double theta = 0.0;
  double phi = 0.0;
  double r = 0.0;

  Direction direction() const { return {theta, phi}; }
  Vec3 position() const { return r * direction().unit(); }
  static SurfacePoint from_position(const Vec3& p);
};

/// Wraps an angle into [-pi, pi).
double wrap_angle(double a);

Mat3 rot_x(double a);
Mat3 rot_y(double a);
Mat3 rot_z(double a);

/// Rotation by angle |w| about w / |w|.
Mat3 exp_so3(const Vec3& w);
/// Inverse of exp_so3 for rotations with angle in [0, pi].
Vec3 log_so3(const Mat3& R);
/// Geodesic angle between two rotations, radians.
double rotation_angle_between(const Mat3& a, const Mat3& b);

Mat3 uniform_random_rotation(Rng& rng);

/// Rigid motion p -> rotation * p + translation.
struct RigidTransform {
  Mat3 rotation = Mat3::Identity();
  Vec3 translation = Vec3::Zero();

  Vec3 apply(const Vec3& p) const { return rotation * p + translation; }
  RigidTransform inverse() const { return {rotation.transpose(), -(rotation.transpose() * translation)}; }
  RigidTransform operator*(const RigidTransform& o) const {
    return {rotation * o.rotation, rotation * o.translation + translation};
  }
};

/// SE(3) exponential and logarithm; the tangent vector is (rotation, translation).
RigidTransform exp_se3(const Eigen::Matrix<double, 6, 1>& xi);
Eigen::Matrix<double, 6, 1> log_se3(const RigidTransform& T);

}  // namespace esim
