#pragma once

#include "esim/common.hpp"

#include <json.hpp>

#include <optional>
#include <utility>
#include <vector>

namespace esim {

enum class PrimitiveKind { Sphere, Box, Cylinder };

const char* to_string(PrimitiveKind kind);
PrimitiveKind primitive_kind_from_string(const std::string& s);

/// A convex primitive placed in the object frame. The cylinder axis is the
/// local z axis; a sphere uses halfExtents.x() as its radius.
struct Primitive {
  PrimitiveKind kind = PrimitiveKind::Sphere;
  Vec3 halfExtents = Vec3::Constant(0.01);
  Eigen::Quaterniond rotation = Eigen::Quaterniond::Identity();
  Vec3 offset = Vec3::Zero();

  /// Parameter interval [enter, exit] of the ray t * dir (t in R) inside the
  /// primitive, or nullopt if the line misses it. dir must be unit length.
  std::optional<std::pair<double, double>> ray_interval(const Vec3& dir) const;
  bool contains(const Vec3& p) const;
};

struct SolidObject {
  std::vector<Primitive> primitives;
  double maxWidth = 0.0;
  std::uint64_t seed = 0;

  /// Distance from the origin to the surface along dir (unit vector): the
  /// farthest exit over all primitives.
  double radius(const Vec3& dir) const;
  double radius(double theta, double phi) const { return radius(Direction{theta, phi}.unit()); }

  /// The same body expressed in a frame rotated by R (points p -> R p).
  SolidObject rotated(const Mat3& R) const;
};

/// Euler angles with rotation = Rz(gamma) * Ry(beta) * Rx(alpha), applied to
/// object-frame points to express them in the hole frame.
struct Orientation {
  double alpha = 0.0;
  double beta = 0.0;
  double gamma = 0.0;

  Mat3 matrix() const { return rot_z(gamma) * rot_y(beta) * rot_x(alpha); }
  static Orientation from_matrix(const Mat3& R);
};

struct HoleContour {
  std::vector<double> angles;
  std::vector<double> radii;
  double clearance = 0.0;

  std::size_t size() const { return radii.size(); }
};

/// A cross-section plane n . x = d with n = Ry(psi) Rx(zeta) e_z, plus the
/// angular half-width of the scanned band around the section curve.
struct SectionSpec {
  double zeta = 0.0;
  double psi = 0.0;
  double d = 0.0;
  double bandHalfWidth = 6.0 * kPi / 180.0;

  /// Columns: in-plane axes e1, e2 and the plane normal.
  Mat3 frame() const { return rot_y(psi) * rot_x(zeta); }
  Vec3 normal() const { return frame().col(2); }
  static SectionSpec from_normal(const Vec3& n, double d, double bandHalfWidth);
};

struct GenerateOptions {
  double maxWidth = 0.05;
  double maxAspect = 2.5;
  int maxDraws = 1000;
  int checkGrid = 64;
  std::optional<PrimitiveKind> forceKind;
  std::optional<Vec3> forceHalfExtents;
};

struct ShapeStats {
  double minRadius = 0.0;
  double maxRadius = 0.0;
  double maxWidth = 0.0;
  double aspect = 0.0;
};

/// Uniform theta x phi grid statistics; gridRes azimuth samples and gridRes/2 latitudes.
ShapeStats shape_stats(const SolidObject& object, int gridRes);

SolidObject generate_object(std::uint64_t seed, int nPrimitives, const GenerateOptions& options = {});

double radius(const SolidObject& object, double theta, double phi);

/// True iff every sampled ray from the origin is inside the composite from
/// t = 0 up to a single exit point.
bool star_shape_check(const SolidObject& object, int gridRes);

/// Radial extent at planar angle theta of the object's projection onto the
/// hole plane, with the object rotated by R.
double projected_contour(const SolidObject& object, const Mat3& R, double theta);

/// Equally spaced angles theta_m = -pi + 2 pi m / M.
std::vector<double> contour_angles(int M);

HoleContour make_hole(const SolidObject& object, const Orientation& feasible, int M, double clearance);

double true_min_margin(const SolidObject& object, const Mat3& R, const HoleContour& hole);
double true_min_margin(const SolidObject& object, const Orientation& q, const HoleContour& hole);

nlohmann::json to_json(const SolidObject& object);
SolidObject object_from_json(const nlohmann::json& j);
nlohmann::json to_json(const HoleContour& hole);
HoleContour hole_from_json(const nlohmann::json& j);
nlohmann::json to_json(const Orientation& q);
Orientation orientation_from_json(const nlohmann::json& j);

}  // namespace esim
