#pragma once

#include "esim/scanner.hpp"

#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace esim {

using Vec6 = Eigen::Matrix<double, 6, 1>;
using Mat6 = Eigen::Matrix<double, 6, 6>;

struct IcpResult {
  RigidTransform transform;  // maps source points onto the target
  double rmse = 0.0;         // over inlier correspondences
  int inliers = 0;
  int iterations = 0;
  bool converged = false;
  std::vector<double> objective;  // truncated sum of squares per iteration
};

/// Point-to-point ICP with brute-force nearest neighbours. Correspondences
/// farther than maxCorrespondence count as outliers with a capped cost, which
/// keeps the per-iteration objective non-increasing.
IcpResult icp_align(std::span<const Vec3> source, std::span<const Vec3> target, const RigidTransform& init,
                    int maxIter, double tol,
                    double maxCorrespondence = std::numeric_limits<double>::infinity());

/// Gauss-Newton information of the point-to-plane alignment error at T
/// (right perturbation of T), divided by sigma^2. Target normals come from
/// local PCA over the nearest neighbours.
Mat6 icp_information(std::span<const Vec3> source, std::span<const Vec3> target, const RigidTransform& T,
                     double maxCorrespondence, double sigma);

struct PoseEdge {
  int i = 0;
  int j = 0;
  RigidTransform measured;  // pose of j in the frame of i
  Mat6 information = Mat6::Identity();  // (rotation, translation) order
  bool loop = false;
  double huber = 0.0;  // threshold on the whitened residual norm; 0 = quadratic
};

struct PoseGraph {
  std::vector<RigidTransform> nodes;
  std::vector<PoseEdge> edges;

  void validate() const;
};

Vec6 edge_residual(const PoseEdge& e, const RigidTransform& Ti, const RigidTransform& Tj);
double pose_graph_cost(const PoseGraph& graph, const std::vector<RigidTransform>& poses);

struct PoseGraphResult {
  std::vector<RigidTransform> poses;
  double initialCost = 0.0;
  double finalCost = 0.0;
  int iterations = 0;
  bool converged = false;
};

/// Levenberg-Marquardt over node poses with node 0 held fixed. Only
/// cost-decreasing steps are accepted.
PoseGraphResult optimize_pose_graph(const PoseGraph& graph, int maxIter);

struct LoopClosure {
  int i = 0;
  int j = 0;
  RigidTransform transform;  // pose of patch j in the frame of patch i
  double rmse = 0.0;
  double overlap = 0.0;
};

struct LoopOptions {
  double minOverlap = 0.3;
  double minRoll = kPi;          // estimated roll between the pair before it counts as a revisit
  double gateSigma = 0.0005;     // ICP RMSE must stay below 3 * gateSigma
  int icpMaxIter = 40;
  double icpTol = 1e-9;
  double maxCorrespondence = 0.004;
};

/// Estimated arc overlap of two patches from their poses.
double patch_overlap(const ScanPatch& a, const RigidTransform& poseA, const ScanPatch& b,
                     const RigidTransform& poseB);

/// Earliest non-adjacent pair (ordered by the later patch) that overlaps enough
/// and aligns with a small ICP residual.
std::optional<LoopClosure> detect_loop_closure(const std::vector<ScanPatch>& patches,
                                               const std::vector<RigidTransform>& poses,
                                               const LoopOptions& options = {});

/// ICP between two patches after cropping the source to the target's arc.
IcpResult align_patches(const ScanPatch& source, const ScanPatch& target, const RigidTransform& init, int maxIter,
                        double tol, double maxCorrespondence);

struct SlamOptions {
  bool useIcp = true;
  bool useLoopClosure = true;
  int icpMaxIter = 40;
  double icpTol = 1e-9;
  int graphMaxIter = 50;
  double huberDelta = 0.002;  // m, on loop edges
  double minSigma = 0.0002;   // m, floor on the RMSE used to weight ICP edges
  double filterRadius = 0.0015; // m, depth-map smoothing before registration (0 = off)
  double icpInfoScale = 0.01;   // discounts ICP information for correlated point errors
  LoopOptions loop;
};

struct SlamResult {
  std::vector<RigidTransform> poses;
  std::vector<ScanPatch> patches;  // after depth filtering; fuse these
  std::optional<LoopClosure> loop;
  PoseGraph graph;
  bool graphConverged = true;
  int icpFallbacks = 0;
};

/// Odometry chain plus pairwise ICP edges plus one loop closure, solved as a
/// pose graph. Odometry edges are weighted by the odometry sigmas; ICP and
/// loop edges by their alignment information over RMSE^2.
SlamResult run_section_slam(const std::vector<ScanPatch>& patches, const NoiseConfig& noise,
                            const SlamOptions& options = {});

struct FuseOptions {
  std::size_t maxPoints = 2000;
  double voxel = 0.001;  // m, initial voxel edge
};

/// Moves patch points into the object frame, converts to spherical form and
/// keeps the point nearest each voxel centroid.
std::vector<SurfacePoint> fuse_section(const std::vector<ScanPatch>& patches,
                                       const std::vector<RigidTransform>& poses, const FuseOptions& options = {});

/// Root-mean-square radial error of points against the exact object.
double surface_rmse(const SolidObject& object, std::span<const SurfacePoint> points);

std::string write_g2o(const PoseGraph& graph);
PoseGraph read_g2o(const std::string& text);

}  // namespace esim
