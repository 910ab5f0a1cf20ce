#include "esim/common.hpp"

#include <algorithm>

namespace esim {

const char* to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::InvalidArgument: return "invalid argument";
    case ErrorCode::Generation: return "generation error";
    case ErrorCode::EmptyScan: return "empty scan";
    case ErrorCode::DegenerateGeometry: return "degenerate geometry";
    case ErrorCode::Conditioning: return "conditioning error";
    case ErrorCode::GridTooLarge: return "grid too large";
    case ErrorCode::Configuration: return "configuration error";
    case ErrorCode::DegenerateInput: return "degenerate input";
    case ErrorCode::Io: return "I/O error";
    case ErrorCode::Internal: return "internal error";
  }
  return "unknown error";
}

std::uint64_t mix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

std::uint64_t derive_seed(std::uint64_t base, std::initializer_list<std::uint64_t> tags) {
  std::uint64_t h = mix64(base);
  for (auto t : tags) h = mix64(h ^ mix64(t + 0x632be59bd9b4e019ULL));
  return h;
}

Direction Direction::from_vector(const Vec3& v) {
  const double n = v.norm();
  const double z = std::clamp(v.z() / n, -1.0, 1.0);
  return {wrap_angle(std::atan2(v.y(), v.x())), std::asin(z)};
}

SurfacePoint SurfacePoint::from_position(const Vec3& p) {
  const auto d = Direction::from_vector(p);
  return {d.theta, d.phi, p.norm()};
}

double wrap_angle(double a) {
  double w = std::fmod(a + kPi, 2.0 * kPi);
  if (w < 0.0) w += 2.0 * kPi;
  w -= kPi;
  // fmod can land exactly on +pi after the shift through rounding
  if (w >= kPi) w -= 2.0 * kPi;
  return w;
}

Mat3 rot_x(double a) {
  const double c = std::cos(a), s = std::sin(a);
  Mat3 m;
  m << 1, 0, 0, 0, c, -s, 0, s, c;
  return m;
}

Mat3 rot_y(double a) {
  const double c = std::cos(a), s = std::sin(a);
  Mat3 m;
  m << c, 0, s, 0, 1, 0, -s, 0, c;
  return m;
}

Mat3 rot_z(double a) {
  const double c = std::cos(a), s = std::sin(a);
  Mat3 m;
  m << c, -s, 0, s, c, 0, 0, 0, 1;
  return m;
}

Mat3 exp_so3(const Vec3& w) {
  const double angle = w.norm();
  if (angle < 1e-12) {
    Mat3 m = Mat3::Identity();
    m(0, 1) = -w.z();
    m(0, 2) = w.y();
    m(1, 0) = w.z();
    m(1, 2) = -w.x();
    m(2, 0) = -w.y();
    m(2, 1) = w.x();
    return m;
  }
  return Eigen::AngleAxisd(angle, w / angle).toRotationMatrix();
}

Vec3 log_so3(const Mat3& R) {
  Eigen::AngleAxisd aa(R);
  double angle = aa.angle();
  Vec3 axis = aa.axis();
  if (angle > kPi) {
    angle = 2.0 * kPi - angle;
    axis = -axis;
  }
  return angle * axis;
}

double rotation_angle_between(const Mat3& a, const Mat3& b) {
  const Mat3 d = a.transpose() * b;
  const Vec3 v(d(2, 1) - d(1, 2), d(0, 2) - d(2, 0), d(1, 0) - d(0, 1));
  return std::atan2(0.5 * v.norm(), 0.5 * (d.trace() - 1.0));
}

Mat3 uniform_random_rotation(Rng& rng) {
  // Shoemake's method: uniform unit quaternion.
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const double u1 = u(rng), u2 = u(rng), u3 = u(rng);
  const double a = std::sqrt(1.0 - u1), b = std::sqrt(u1);
  Eigen::Quaterniond q(b * std::cos(2 * kPi * u3), a * std::sin(2 * kPi * u2),
                       a * std::cos(2 * kPi * u2), b * std::sin(2 * kPi * u3));
  return q.normalized().toRotationMatrix();
}

namespace {

// Left Jacobian of SO(3) and its inverse.
Mat3 so3_left_jacobian(const Vec3& w) {
  const double a = w.norm();
  Mat3 W;
  W << 0, -w.z(), w.y(), w.z(), 0, -w.x(), -w.y(), w.x(), 0;
  if (a < 1e-8) return Mat3::Identity() + 0.5 * W;
  return Mat3::Identity() + (1 - std::cos(a)) / (a * a) * W + (a - std::sin(a)) / (a * a * a) * W * W;
}

Mat3 so3_left_jacobian_inv(const Vec3& w) {
  const double a = w.norm();
  Mat3 W;
  W << 0, -w.z(), w.y(), w.z(), 0, -w.x(), -w.y(), w.x(), 0;
  if (a < 1e-8) return Mat3::Identity() - 0.5 * W;
  const double half = 0.5 * a;
  const double k = (1.0 - half * std::cos(half) / std::sin(half)) / (a * a);
  return Mat3::Identity() - 0.5 * W + k * W * W;
}

}  // namespace

RigidTransform exp_se3(const Eigen::Matrix<double, 6, 1>& xi) {
  const Vec3 w = xi.head<3>();
  return {exp_so3(w), so3_left_jacobian(w) * xi.tail<3>()};
}

Eigen::Matrix<double, 6, 1> log_se3(const RigidTransform& T) {
  const Vec3 w = log_so3(T.rotation);
  Eigen::Matrix<double, 6, 1> xi;
  xi.head<3>() = w;
  xi.tail<3>() = so3_left_jacobian_inv(w) * T.translation;
  return xi;
}

}  // namespace esim
