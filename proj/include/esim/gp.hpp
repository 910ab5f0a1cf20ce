#pragma once

#include "esim/common.hpp"

#include <Eigen/Dense>
#include <json.hpp>

#include <span>
#include <vector>

namespace esim {

struct GPHyperparameters {
  double kernelVariance = 1e-5;  // m^2
  double lengthscale = 0.3;      // rad, on the chord between unit directions
  double noiseSigma = 1e-3;      // m
};

/// M azimuths equally spaced in [-pi, pi) times N latitudes, cell-centred in
/// [phiLo, phiHi]. Flat index = n * M + m (latitude-major).
struct EvalGrid {
  int M = 72;
  int N = 8;
  double phiLo = -kPi / 2;
  double phiHi = kPi / 2;

  static EvalGrid section(int M, int N, int l, int P);
  static EvalGrid whole(int M, int nPerSection, int P);

  std::size_t size() const { return static_cast<std::size_t>(M) * N; }
  double theta(int m) const { return -kPi + 2.0 * kPi * m / M; }
  double phi(int n) const { return phiLo + (n + 0.5) * (phiHi - phiLo) / N; }
  std::vector<double> thetas() const;
  std::vector<double> phis() const;
  std::vector<Direction> directions() const;
  void validate() const;
};

struct FitOptions {
  double lengthscaleMin = 0.05, lengthscaleMax = 0.25;
  double varianceMin = 1.6e-5, varianceMax = 1e-2;
  double noiseMin = 1e-4, noiseMax = 5e-3;
  int gridLengthscale = 7;
  int gridRatio = 8;
  int descentRounds = 6;
  /// Hyperparameters are searched on an evenly strided subset of at most
  /// this many points; the final model always conditions on every point.
  int maxHyperFitPoints = 200;
};

/// Zero-mean-residual GP on the sphere with a squared-exponential kernel of
/// the chord length between unit directions, plus a constant prior mean.
///
/// Each input may carry a sample count: an input that averages c raw samples
/// has noise variance sigma_n^2 / c. An empty count vector means 1 everywhere.
class GPModel {
 public:
  GPModel(std::vector<Direction> inputs, std::vector<double> radii, const GPHyperparameters& hyper,
          double priorMean, std::vector<double> counts = {});

  const std::vector<Direction>& inputs() const { return inputs_; }
  const std::vector<double>& radii() const { return radii_; }
  const GPHyperparameters& hyper() const { return hyper_; }
  double priorMean() const { return priorMean_; }
  std::size_t size() const { return radii_.size(); }
  const std::vector<double>& counts() const { return counts_; }

  /// Lower-triangular L with L L^T = K + sigma_n^2 diag(1 / counts).
  const Eigen::MatrixXd& factor() const { return L_; }
  const Eigen::VectorXd& weights() const { return alpha_; }
  const Eigen::Matrix3Xd& unitInputs() const { return X_; }

  double kernel(const Vec3& a, const Vec3& b) const;
  /// Kernel matrix between training inputs and the given unit directions (n x q).
  Eigen::MatrixXd cross_kernel(const Eigen::Matrix3Xd& q) const;
  double log_marginal_likelihood() const { return lml_; }

 private:
  std::vector<Direction> inputs_;
  std::vector<double> radii_;
  std::vector<double> counts_;
  GPHyperparameters hyper_;
  double priorMean_ = 0.0;
  Eigen::Matrix3Xd X_;
  Eigen::MatrixXd L_;
  Eigen::VectorXd alpha_;
  double lml_ = 0.0;
};

/// Log marginal likelihood of residuals y under the kernel on X; throws
/// Conditioning when K + sigma_n^2 I cannot be factorized.
double gp_log_marginal_likelihood(const Eigen::Matrix3Xd& X, const Eigen::VectorXd& y,
                                  const GPHyperparameters& hyper, std::span<const double> counts = {});

GPModel gp_fit(std::span<const SurfacePoint> points, const FitOptions& options = {},
               std::span<const double> counts = {});

struct Posterior {
  Eigen::VectorXd means;
  Eigen::VectorXd variances;
};

Posterior gp_posterior(const GPModel& model, std::span<const Direction> queries);

struct JointPosterior {
  Eigen::VectorXd mean;
  Eigen::MatrixXd cov;
};

inline constexpr std::size_t kMaxJointSize = 4096;

JointPosterior gp_joint(const GPModel& model, const EvalGrid& grid);
JointPosterior gp_joint_at(const GPModel& model, std::span<const Direction> queries,
                           std::size_t cap = kMaxJointSize);

/// K joint draws (columns) from N(mean, cov) via a jittered Cholesky factor.
Eigen::MatrixXd sample_joint(const JointPosterior& joint, int K, std::uint64_t seed);
Eigen::MatrixXd gp_sample(const GPModel& model, const EvalGrid& grid, int K, std::uint64_t seed);

nlohmann::json to_json(const GPModel& model);
GPModel gp_model_from_json(const nlohmann::json& j);

}  // namespace esim
