#include "esim/slam.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <iomanip>
#include <map>
#include <sstream>
#include <tuple>

namespace esim {

namespace {

RigidTransform kabsch(const std::vector<Vec3>& p, const std::vector<Vec3>& q) {
  Vec3 pm = Vec3::Zero(), qm = Vec3::Zero();
  for (std::size_t i = 0; i < p.size(); ++i) {
    pm += p[i];
    qm += q[i];
  }
  pm /= static_cast<double>(p.size());
  qm /= static_cast<double>(q.size());
  Mat3 H = Mat3::Zero();
  for (std::size_t i = 0; i < p.size(); ++i) H += (p[i] - pm) * (q[i] - qm).transpose();
  Eigen::JacobiSVD<Mat3> svd(H, Eigen::ComputeFullU | Eigen::ComputeFullV);
  const Vec3 s = svd.singularValues();
  if (!(s[0] > 0.0) || s[1] < 1e-12 * s[0])
    throw Error(ErrorCode::DegenerateGeometry, "icp: correspondences are collinear, rotation is unobservable");
  const Mat3 U = svd.matrixU(), V = svd.matrixV();
  Mat3 D = Mat3::Identity();
  D(2, 2) = (V * U.transpose()).determinant() < 0 ? -1.0 : 1.0;
  const Mat3 R = V * D * U.transpose();
  return {R, qm - R * pm};
}

Vec3 any_perpendicular(const Vec3& n) {
  const Vec3 a = std::abs(n.x()) < 0.9 ? Vec3::UnitX() : Vec3::UnitY();
  return (a - a.dot(n) * n).normalized();
}

// Whitened squared norm and its robust cost.
double edge_cost(const PoseEdge& e, const Vec6& r) {
  const double s2 = r.dot(e.information * r);
  if (e.huber <= 0.0) return s2;
  const double s = std::sqrt(s2);
  return s <= e.huber ? s2 : 2.0 * e.huber * s - e.huber * e.huber;
}

// Swaps the rotation and translation blocks (our order vs the g2o order).
Mat6 reorder(const Mat6& m) {
  Eigen::PermutationMatrix<6> P;
  P.indices() << 3, 4, 5, 0, 1, 2;
  return P * m * P.transpose();
}

}  // namespace

IcpResult icp_align(std::span<const Vec3> source, std::span<const Vec3> target, const RigidTransform& init,
                    int maxIter, double tol, double maxCorrespondence) {
  if (source.size() < 10 || target.size() < 10)
    throw Error(ErrorCode::InvalidArgument, "icp: each cloud needs at least 10 points");
  if (maxIter < 1) throw Error(ErrorCode::InvalidArgument, "icp: maxIter must be positive");
  const double cap2 = maxCorrespondence * maxCorrespondence;

  IcpResult res;
  res.transform = init;
  double prevLevel = std::numeric_limits<double>::infinity();
  std::vector<Vec3> p, q;
  p.reserve(source.size());
  q.reserve(source.size());
  for (int it = 0; it < maxIter; ++it) {
    p.clear();
    q.clear();
    double objective = 0.0, inlierSum = 0.0;
    for (const Vec3& s : source) {
      const Vec3 x = res.transform.apply(s);
      double best = std::numeric_limits<double>::infinity();
      std::size_t bestIdx = 0;
      for (std::size_t t = 0; t < target.size(); ++t) {
        const double d2 = (target[t] - x).squaredNorm();
        if (d2 < best) {
          best = d2;
          bestIdx = t;
        }
      }
      if (best <= cap2) {
        p.push_back(x);
        q.push_back(target[bestIdx]);
        inlierSum += best;
        objective += best;
      } else {
        objective += cap2;
      }
    }
    if (!res.objective.empty() && objective > res.objective.back() * (1.0 + 1e-9) + 1e-18)
      throw Error(ErrorCode::Internal, "icp: objective increased between iterations");
    res.objective.push_back(objective);
    res.iterations = it + 1;
    res.inliers = static_cast<int>(p.size());
    res.rmse = p.empty() ? std::numeric_limits<double>::infinity() : std::sqrt(inlierSum / p.size());
    if (p.size() < 3) throw Error(ErrorCode::DegenerateGeometry, "icp: fewer than 3 correspondences within range");
    // Terminate on the truncated RMSE, which is monotone unlike the inlier RMSE.
    const double level = std::sqrt(objective / static_cast<double>(source.size()));
    if (prevLevel - level < tol || level == 0.0) {
      res.converged = true;
      break;
    }
    prevLevel = level;
    if (it + 1 == maxIter) break;
    res.transform = kabsch(p, q) * res.transform;
  }
  return res;
}

void PoseGraph::validate() const {
  const int n = static_cast<int>(nodes.size());
  if (n < 1) throw Error(ErrorCode::InvalidArgument, "pose graph has no nodes");
  std::vector<int> parent(n);
  for (int i = 0; i < n; ++i) parent[i] = i;
  auto find = [&](int x) {
    while (parent[x] != x) x = parent[x] = parent[parent[x]];
    return x;
  };
  for (const auto& e : edges) {
    if (e.i < 0 || e.j < 0 || e.i >= n || e.j >= n || e.i == e.j)
      throw Error(ErrorCode::InvalidArgument, "pose graph edge has invalid endpoints");
    parent[find(e.i)] = find(e.j);
  }
  for (int i = 1; i < n; ++i)
    if (find(i) != find(0)) throw Error(ErrorCode::InvalidArgument, "pose graph is not connected");
}

Vec6 edge_residual(const PoseEdge& e, const RigidTransform& Ti, const RigidTransform& Tj) {
  return log_se3(e.measured.inverse() * Ti.inverse() * Tj);
}

double pose_graph_cost(const PoseGraph& graph, const std::vector<RigidTransform>& poses) {
  double c = 0.0;
  for (const auto& e : graph.edges) c += edge_cost(e, edge_residual(e, poses[e.i], poses[e.j]));
  return c;
}

PoseGraphResult optimize_pose_graph(const PoseGraph& graph, int maxIter) {
  graph.validate();
  const int n = static_cast<int>(graph.nodes.size());
  PoseGraphResult res;
  res.poses = graph.nodes;
  res.initialCost = res.finalCost = pose_graph_cost(graph, res.poses);
  if (n == 1 || graph.edges.empty()) {
    res.converged = true;
    return res;
  }
  const int dim = 6 * (n - 1);
  double mu = 1e-4;
  constexpr double eps = 1e-7;
  for (int it = 0; it < maxIter; ++it) {
    res.iterations = it + 1;
    Eigen::MatrixXd H = Eigen::MatrixXd::Zero(dim, dim);
    Eigen::VectorXd g = Eigen::VectorXd::Zero(dim);
    for (const auto& e : graph.edges) {
      const Vec6 r = edge_residual(e, res.poses[e.i], res.poses[e.j]);
      Mat6 w = e.information;
      if (e.huber > 0.0) {
        const double s = std::sqrt(r.dot(e.information * r));
        if (s > e.huber) w *= e.huber / s;
      }
      Eigen::Matrix<double, 6, 12> J = Eigen::Matrix<double, 6, 12>::Zero();
      for (int side = 0; side < 2; ++side) {
        const int node = side == 0 ? e.i : e.j;
        if (node == 0) continue;
        for (int c = 0; c < 6; ++c) {
          Vec6 d = Vec6::Zero();
          d[c] = eps;
          const RigidTransform Tp = res.poses[node] * exp_se3(d);
          const Vec6 rp = side == 0 ? edge_residual(e, Tp, res.poses[e.j]) : edge_residual(e, res.poses[e.i], Tp);
          J.col(6 * side + c) = (rp - r) / eps;
        }
      }
      const int idx[2] = {e.i, e.j};
      for (int a = 0; a < 2; ++a) {
        if (idx[a] == 0) continue;
        const auto Ja = J.middleCols<6>(6 * a);
        g.segment<6>(6 * (idx[a] - 1)) += Ja.transpose() * w * r;
        for (int b = 0; b < 2; ++b) {
          if (idx[b] == 0) continue;
          H.block<6, 6>(6 * (idx[a] - 1), 6 * (idx[b] - 1)) += Ja.transpose() * w * J.middleCols<6>(6 * b);
        }
      }
    }
    bool accepted = false;
    for (int attempt = 0; attempt < 10 && !accepted; ++attempt) {
      Eigen::MatrixXd A = H;
      A.diagonal() += mu * (H.diagonal().array() + 1e-12).matrix();
      const Eigen::VectorXd delta = A.ldlt().solve(-g);
      std::vector<RigidTransform> trial = res.poses;
      for (int k = 1; k < n; ++k) trial[k] = trial[k] * exp_se3(delta.segment<6>(6 * (k - 1)));
      const double cost = pose_graph_cost(graph, trial);
      if (std::isfinite(cost) && cost < res.finalCost) {
        const double gain = res.finalCost - cost;
        res.poses = std::move(trial);
        const double prev = res.finalCost;
        res.finalCost = cost;
        mu = std::max(mu / 3.0, 1e-12);
        accepted = true;
        if (gain <= 1e-12 * prev || delta.norm() < 1e-12) {
          res.converged = true;
          return res;
        }
      } else {
        mu *= 4.0;
      }
    }
    if (!accepted) {
      // No descent direction left at machine precision.
      res.converged = true;
      return res;
    }
  }
  return res;
}

Mat6 icp_information(std::span<const Vec3> source, std::span<const Vec3> target, const RigidTransform& T,
                     double maxCorrespondence, double sigma) {
  if (target.size() < 3) throw Error(ErrorCode::InvalidArgument, "icp_information: target too small");
  const std::size_t kNeighbours = std::min<std::size_t>(12, target.size());
  std::vector<Vec3> normals(target.size());
  std::vector<std::pair<double, std::size_t>> d(target.size());
  for (std::size_t a = 0; a < target.size(); ++a) {
    for (std::size_t b = 0; b < target.size(); ++b) d[b] = {(target[b] - target[a]).squaredNorm(), b};
    std::partial_sort(d.begin(), d.begin() + kNeighbours, d.end());
    Vec3 mean = Vec3::Zero();
    for (std::size_t k = 0; k < kNeighbours; ++k) mean += target[d[k].second];
    mean /= static_cast<double>(kNeighbours);
    Mat3 C = Mat3::Zero();
    for (std::size_t k = 0; k < kNeighbours; ++k) {
      const Vec3 v = target[d[k].second] - mean;
      C += v * v.transpose();
    }
    Eigen::SelfAdjointEigenSolver<Mat3> es(C);
    normals[a] = es.eigenvectors().col(0);
  }
  const double cap2 = maxCorrespondence * maxCorrespondence;
  const Mat3 Rt = T.rotation.transpose();
  Mat6 H = Mat6::Zero();
  for (const Vec3& s : source) {
    const Vec3 x = T.apply(s);
    double best = std::numeric_limits<double>::infinity();
    std::size_t idx = 0;
    for (std::size_t b = 0; b < target.size(); ++b) {
      const double d2 = (target[b] - x).squaredNorm();
      if (d2 < best) {
        best = d2;
        idx = b;
      }
    }
    if (best > cap2) continue;
    const Vec3 m = Rt * normals[idx];
    Vec6 J;
    J << s.cross(m), m;
    H += J * J.transpose();
  }
  return H / (sigma * sigma);
}

double patch_overlap(const ScanPatch& a, const RigidTransform& poseA, const ScanPatch& b,
                     const RigidTransform& poseB) {
  const double width = std::min(a.arcWidth, b.arcWidth);
  if (!(width > 0.0)) return 0.0;
  const double angle = rotation_angle_between(poseA.rotation, poseB.rotation);
  return std::max(0.0, 1.0 - angle / width);
}

IcpResult align_patches(const ScanPatch& source, const ScanPatch& target, const RigidTransform& init, int maxIter,
                        double tol, double maxCorrespondence) {
  const Vec3 n = target.rollAxis.normalized();
  const Vec3 e1 = any_perpendicular(n);
  const Vec3 e2 = n.cross(e1);
  auto angle = [&](const Vec3& p) { return std::atan2(p.dot(e2), p.dot(e1)); };
  double sx = 0.0, sy = 0.0;
  for (const auto& p : target.points) {
    const double a = angle(p);
    sx += std::cos(a);
    sy += std::sin(a);
  }
  const double centre = std::atan2(sy, sx);
  double lo = kPi, hi = -kPi;
  for (const auto& p : target.points) {
    const double a = wrap_angle(angle(p) - centre);
    lo = std::min(lo, a);
    hi = std::max(hi, a);
  }
  std::vector<Vec3> cropped;
  for (const auto& p : source.points) {
    const double a = wrap_angle(angle(init.apply(p)) - centre);
    if (a >= lo && a <= hi) cropped.push_back(p);
  }
  if (cropped.size() < 10) cropped = source.points;
  return icp_align(cropped, target.points, init, maxIter, tol, maxCorrespondence);
}

std::optional<LoopClosure> detect_loop_closure(const std::vector<ScanPatch>& patches,
                                               const std::vector<RigidTransform>& poses,
                                               const LoopOptions& options) {
  if (patches.size() < 2) throw Error(ErrorCode::InvalidArgument, "loop closure needs at least 2 patches");
  if (poses.size() != patches.size()) throw Error(ErrorCode::InvalidArgument, "one pose per patch is required");
  const int n = static_cast<int>(patches.size());
  // Cumulative estimated roll along the chain.
  std::vector<double> roll(n, 0.0);
  for (int k = 1; k < n; ++k) roll[k] = roll[k - 1] + rotation_angle_between(poses[k - 1].rotation, poses[k].rotation);
  const double gate = 3.0 * options.gateSigma;
  for (int j = 2; j < n; ++j) {
    for (int i = 0; i + 1 < j; ++i) {
      if (roll[j] - roll[i] < options.minRoll) continue;
      const double overlap = patch_overlap(patches[i], poses[i], patches[j], poses[j]);
      if (overlap < options.minOverlap) continue;
      const RigidTransform init = poses[i].inverse() * poses[j];
      IcpResult icp;
      try {
        icp = align_patches(patches[j], patches[i], init, options.icpMaxIter, options.icpTol,
                            options.maxCorrespondence);
      } catch (const Error& e) {
        if (e.code() == ErrorCode::DegenerateGeometry) continue;
        throw;
      }
      if (icp.rmse < gate) return LoopClosure{i, j, icp.transform, icp.rmse, overlap};
    }
  }
  return std::nullopt;
}

SlamResult run_section_slam(const std::vector<ScanPatch>& patches, const NoiseConfig& noise,
                            const SlamOptions& options) {
  if (patches.empty()) throw Error(ErrorCode::EmptyScan, "no patches to register");
  const int n = static_cast<int>(patches.size());
  SlamResult res;
  res.patches = filter_patch_depth(patches, options.filterRadius);
  const auto& P = res.patches;
  const double corr = std::max(0.002, 4.0 * noise.depthSigma);

  auto& g = res.graph;
  for (const auto& p : P) g.nodes.push_back(p.odomPose);
  Mat6 odomInfo = Mat6::Zero();
  const double sr = std::max(noise.odomRotSigma, 1e-4), st = std::max(noise.odomTransSigma, 1e-5);
  odomInfo.diagonal() << Vec3::Constant(1.0 / (sr * sr)), Vec3::Constant(1.0 / (st * st));

  auto registration_edge = [&](int i, int j, const RigidTransform& init, bool loop) -> std::optional<PoseEdge> {
    try {
      const IcpResult icp = align_patches(P[j], P[i], init, options.icpMaxIter, options.icpTol, corr);
      if (icp.inliers < 10) return std::nullopt;
      const double sigma = std::max(icp.rmse, options.minSigma);
      PoseEdge e{i, j, icp.transform, options.icpInfoScale * icp_information(P[j].points, P[i].points, icp.transform, corr, sigma), loop,
                 0.0};
      if (loop) e.huber = options.huberDelta / sigma * std::sqrt(static_cast<double>(icp.inliers));
      return e;
    } catch (const Error& err) {
      if (err.code() != ErrorCode::DegenerateGeometry) throw;
      return std::nullopt;
    }
  };

  for (int k = 1; k < n; ++k) {
    const RigidTransform rel = P[k - 1].odomPose.inverse() * P[k].odomPose;
    g.edges.push_back({k - 1, k, rel, odomInfo, false, 0.0});
    if (options.useIcp) {
      if (auto e = registration_edge(k - 1, k, rel, false)) g.edges.push_back(*e);
      else ++res.icpFallbacks;
    }
  }
  res.poses = g.nodes;
  if (options.useIcp) {
    const PoseGraphResult opt = optimize_pose_graph(g, options.graphMaxIter);
    res.poses = opt.poses;
    res.graphConverged = opt.converged;
  }

  if (options.useLoopClosure && n >= 3) {
    LoopOptions lo = options.loop;
    lo.gateSigma = std::max(lo.gateSigma, noise.depthSigma);
    lo.maxCorrespondence = std::max(lo.maxCorrespondence, corr);
    res.loop = detect_loop_closure(P, res.poses, lo);
    if (res.loop) {
      const RigidTransform init = res.poses[res.loop->i].inverse() * res.poses[res.loop->j];
      if (auto e = registration_edge(res.loop->i, res.loop->j, init, true)) {
        g.edges.push_back(*e);
        g.nodes = res.poses;
        const PoseGraphResult opt = optimize_pose_graph(g, options.graphMaxIter);
        res.poses = opt.poses;
        res.graphConverged = opt.converged;
      }
    }
  }
  return res;
}

std::vector<SurfacePoint> fuse_section(const std::vector<ScanPatch>& patches,
                                       const std::vector<RigidTransform>& poses, const FuseOptions& options) {
  if (poses.size() != patches.size()) throw Error(ErrorCode::InvalidArgument, "one pose per patch is required");
  if (options.maxPoints < 1 || !(options.voxel > 0.0))
    throw Error(ErrorCode::InvalidArgument, "fuse_section: bad downsampling options");
  std::vector<Vec3> pts;
  for (std::size_t k = 0; k < patches.size(); ++k)
    for (const auto& p : patches[k].points) pts.push_back(poses[k].apply(p));
  if (pts.empty()) throw Error(ErrorCode::EmptyScan, "fuse_section: no points");

  using Key = std::tuple<long, long, long>;
  double voxel = options.voxel;
  std::vector<Vec3> kept;
  for (;;) {
    std::map<Key, std::vector<std::size_t>> cells;
    for (std::size_t i = 0; i < pts.size(); ++i)
      cells[{static_cast<long>(std::floor(pts[i].x() / voxel)), static_cast<long>(std::floor(pts[i].y() / voxel)),
             static_cast<long>(std::floor(pts[i].z() / voxel))}]
          .push_back(i);
    if (cells.size() <= options.maxPoints) {
      kept.clear();
      for (const auto& [key, idx] : cells) {
        Vec3 c = Vec3::Zero();
        for (auto i : idx) c += pts[i];
        c /= static_cast<double>(idx.size());
        std::size_t best = idx[0];
        for (auto i : idx)
          if ((pts[i] - c).squaredNorm() < (pts[best] - c).squaredNorm()) best = i;
        kept.push_back(pts[best]);
      }
      break;
    }
    voxel *= 1.25;
  }
  std::vector<SurfacePoint> out;
  out.reserve(kept.size());
  for (const auto& p : kept)
    if (p.norm() > 0.0) out.push_back(SurfacePoint::from_position(p));
  return out;
}

double surface_rmse(const SolidObject& object, std::span<const SurfacePoint> points) {
  if (points.empty()) throw Error(ErrorCode::InvalidArgument, "surface_rmse: no points");
  double s = 0.0;
  for (const auto& p : points) {
    const double e = p.r - object.radius(p.direction().unit());
    s += e * e;
  }
  return std::sqrt(s / static_cast<double>(points.size()));
}

std::string write_g2o(const PoseGraph& graph) {
  std::ostringstream os;
  os << std::setprecision(17);
  for (std::size_t k = 0; k < graph.nodes.size(); ++k) {
    const auto& T = graph.nodes[k];
    const Eigen::Quaterniond q(T.rotation);
    os << "VERTEX_SE3:QUAT " << k << ' ' << T.translation.x() << ' ' << T.translation.y() << ' '
       << T.translation.z() << ' ' << q.x() << ' ' << q.y() << ' ' << q.z() << ' ' << q.w() << '\n';
  }
  for (const auto& e : graph.edges) {
    const Eigen::Quaterniond q(e.measured.rotation);
    const auto& t = e.measured.translation;
    os << "EDGE_SE3:QUAT " << e.i << ' ' << e.j << ' ' << t.x() << ' ' << t.y() << ' ' << t.z() << ' ' << q.x()
       << ' ' << q.y() << ' ' << q.z() << ' ' << q.w();
    // Upper triangle of the 6x6 information matrix, translation block first.
    const Mat6 I = reorder(e.information);
    for (int r = 0; r < 6; ++r)
      for (int c = r; c < 6; ++c) os << ' ' << I(r, c);
    os << '\n';
  }
  return os.str();
}

PoseGraph read_g2o(const std::string& text) {
  PoseGraph g;
  std::istringstream is(text);
  std::string line;
  std::map<int, RigidTransform> nodes;
  while (std::getline(is, line)) {
    std::istringstream ls(line);
    std::string tag;
    if (!(ls >> tag)) continue;
    if (tag == "VERTEX_SE3:QUAT") {
      int id;
      double x, y, z, qx, qy, qz, qw;
      if (!(ls >> id >> x >> y >> z >> qx >> qy >> qz >> qw))
        throw Error(ErrorCode::InvalidArgument, "g2o: malformed vertex line");
      nodes[id] = {Eigen::Quaterniond(qw, qx, qy, qz).normalized().toRotationMatrix(), Vec3(x, y, z)};
    } else if (tag == "EDGE_SE3:QUAT") {
      PoseEdge e;
      double x, y, z, qx, qy, qz, qw;
      if (!(ls >> e.i >> e.j >> x >> y >> z >> qx >> qy >> qz >> qw))
        throw Error(ErrorCode::InvalidArgument, "g2o: malformed edge line");
      e.measured = {Eigen::Quaterniond(qw, qx, qy, qz).normalized().toRotationMatrix(), Vec3(x, y, z)};
      double info[21];
      for (double& v : info)
        if (!(ls >> v)) throw Error(ErrorCode::InvalidArgument, "g2o: malformed information matrix");
      Mat6 I;
      int n = 0;
      for (int r = 0; r < 6; ++r)
        for (int c = r; c < 6; ++c) I(r, c) = I(c, r) = info[n++];
      e.information = reorder(I);
      e.loop = std::abs(e.j - e.i) != 1;
      g.edges.push_back(e);
    } else {
      throw Error(ErrorCode::InvalidArgument, "g2o: unknown record " + tag);
    }
  }
  int expect = 0;
  for (const auto& [id, T] : nodes) {
    if (id != expect++) throw Error(ErrorCode::InvalidArgument, "g2o: vertex ids must be 0..n-1");
    g.nodes.push_back(T);
  }
  g.validate();
  return g;
}

}  // namespace esim
