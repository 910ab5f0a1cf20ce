#pragma once

#include "esim/geometry.hpp"

#include <json.hpp>

#include <vector>

namespace esim {

struct NoiseConfig {
  double pointSigma = 0.002;       // m, radial noise on fused points
  double depthSigma = 0.0005;      // m, per-sample depth noise inside a patch
  double odomRotSigma = 0.02;      // rad per patch step
  double odomTransSigma = 0.0001;  // m per patch step
  std::uint64_t seed = 0;

  void validate() const;
};

struct PatchOptions {
  double coverage = 2.0 * kPi;  // total roll angle of the sequence
  int samplesPerCircle = 360;   // sample spacing along the section curve
  int bandRows = 5;             // samples across the band
  double widthFactor = 2.0;     // patch arc width in units of the roll step
};

/// One tactile frame: points in the sensor frame at the time of capture and
/// the pose that maps them into the frame of patch 0 (the object frame).
struct ScanPatch {
  std::vector<Vec3> points;
  RigidTransform odomPose;
  RigidTransform truePose;         // hidden ground truth
  double trueObjectRotation = 0.0; // rad rolled since patch 0
  Vec3 rollAxis = Vec3::UnitZ();   // section normal, known to the rig
  Vec3 sensorAxis = Vec3::UnitX(); // viewing direction of the depth sensor
  double arcWidth = 0.0;           // rad of section curve seen by the patch
};

/// Surface point of the band at curve parameter t and out-of-plane tilt delta.
/// Throws EmptyScan if the plane misses the object.
Vec3 section_band_point(const SolidObject& object, const SectionSpec& spec, double t, double delta);

/// Band of samplesPerCircle x bandRows surface points around the section curve,
/// each radius perturbed by N(0, pointSigma^2).
std::vector<SurfacePoint> scan_section(const SolidObject& object, const SectionSpec& spec, const NoiseConfig& noise,
                                       int samplesPerCircle, int bandRows = 5);

/// Rolls the object about the section normal and records overlapping patches
/// with depth noise and a drifting odometry chain.
std::vector<ScanPatch> scan_patch_sequence(const SolidObject& object, const SectionSpec& spec,
                                           const NoiseConfig& noise, int nPatches,
                                           const PatchOptions& options = {});

/// Local linear smoothing of patch depth: each point's coordinate along the
/// sensor axis is replaced by a plane fit over neighbours within radius in the
/// image plane. Mimics filtering of a tactile depth map.
std::vector<ScanPatch> filter_patch_depth(const std::vector<ScanPatch>& patches, double radius);

nlohmann::json to_json(const RigidTransform& T);
RigidTransform rigid_transform_from_json(const nlohmann::json& j);
nlohmann::json to_json(const std::vector<ScanPatch>& patches);
std::vector<ScanPatch> patches_from_json(const nlohmann::json& j);
nlohmann::json to_json(const NoiseConfig& noise);
NoiseConfig noise_config_from_json(const nlohmann::json& j);

}  // namespace esim
