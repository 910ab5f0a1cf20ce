#include "esim/gp.hpp"

#include <algorithm>
#include <limits>
#include <string>

namespace esim {

namespace {

Eigen::Matrix3Xd to_units(std::span<const Direction> dirs) {
  Eigen::Matrix3Xd X(3, static_cast<Eigen::Index>(dirs.size()));
  for (std::size_t i = 0; i < dirs.size(); ++i) X.col(static_cast<Eigen::Index>(i)) = dirs[i].unit();
  return X;
}

// s^2 exp(-|a-b|^2 / (2 l^2)) with |a-b|^2 = 2 - 2 a.b for unit vectors.
Eigen::MatrixXd kernel_matrix(const Eigen::Matrix3Xd& A, const Eigen::Matrix3Xd& B,
                              const GPHyperparameters& hp) {
  Eigen::MatrixXd G = A.transpose() * B;
  const double inv = 1.0 / (hp.lengthscale * hp.lengthscale);
  const double s2 = hp.kernelVariance;
  return G.unaryExpr([=](double c) { return s2 * std::exp((c - 1.0) * inv); });
}

bool factorize(Eigen::MatrixXd& K, Eigen::MatrixXd& L, double jitter) {
  if (jitter > 0.0) K.diagonal().array() += jitter;
  Eigen::LLT<Eigen::MatrixXd> llt(K);
  if (llt.info() != Eigen::Success) return false;
  L = llt.matrixL();
  return L.diagonal().minCoeff() > 0.0;
}

void check_counts(std::span<const double> counts, std::size_t n) {
  if (counts.empty()) return;
  if (counts.size() != n) throw Error(ErrorCode::InvalidArgument, "GP: counts must match the number of inputs");
  for (double c : counts)
    if (!(c >= 1.0)) throw Error(ErrorCode::InvalidArgument, "GP: sample counts must be at least 1");
}

// Factor K + sigma_n^2 diag(1/c), retrying once with a 1e-10 relative jitter.
Eigen::MatrixXd factor_training(const Eigen::Matrix3Xd& X, const GPHyperparameters& hp,
                                std::span<const double> counts = {}) {
  Eigen::MatrixXd K = kernel_matrix(X, X, hp);
  const double s2 = hp.noiseSigma * hp.noiseSigma;
  if (counts.empty())
    K.diagonal().array() += s2;
  else
    for (Eigen::Index i = 0; i < K.rows(); ++i) K(i, i) += s2 / counts[static_cast<std::size_t>(i)];
  Eigen::MatrixXd L;
  Eigen::MatrixXd Kc = K;
  if (factorize(Kc, L, 0.0)) return L;
  if (factorize(K, L, 1e-10 * hp.kernelVariance)) return L;
  throw Error(ErrorCode::Conditioning,
              "GP training covariance is not positive definite even with 1e-10 jitter");
}

double lml_from_factor(const Eigen::MatrixXd& L, const Eigen::VectorXd& y) {
  const Eigen::VectorXd w = L.triangularView<Eigen::Lower>().solve(y);
  const double n = static_cast<double>(y.size());
  return -0.5 * w.squaredNorm() - L.diagonal().array().log().sum() - 0.5 * n * std::log(2.0 * kPi);
}

}  // namespace

EvalGrid EvalGrid::section(int M, int N, int l, int P) {
  if (P < 1 || l < 0 || l >= P) throw Error(ErrorCode::InvalidArgument, "EvalGrid::section: bad section index");
  EvalGrid g;
  g.M = M;
  g.N = N;
  g.phiLo = -kPi / 2 + kPi * l / P;
  g.phiHi = -kPi / 2 + kPi * (l + 1) / P;
  return g;
}

EvalGrid EvalGrid::whole(int M, int nPerSection, int P) {
  EvalGrid g;
  g.M = M;
  g.N = nPerSection * P;
  return g;
}

std::vector<double> EvalGrid::thetas() const {
  std::vector<double> t(M);
  for (int m = 0; m < M; ++m) t[m] = theta(m);
  return t;
}

std::vector<double> EvalGrid::phis() const {
  std::vector<double> p(N);
  for (int n = 0; n < N; ++n) p[n] = phi(n);
  return p;
}

std::vector<Direction> EvalGrid::directions() const {
  std::vector<Direction> d;
  d.reserve(size());
  for (int n = 0; n < N; ++n)
    for (int m = 0; m < M; ++m) d.push_back({theta(m), phi(n)});
  return d;
}

void EvalGrid::validate() const {
  if (M < 1 || N < 1 || !(phiHi > phiLo) || phiLo < -kPi / 2 - 1e-12 || phiHi > kPi / 2 + 1e-12)
    throw Error(ErrorCode::InvalidArgument, "EvalGrid: invalid dimensions or latitude range");
}

GPModel::GPModel(std::vector<Direction> inputs, std::vector<double> radii, const GPHyperparameters& hyper,
                 double priorMean, std::vector<double> counts)
    : inputs_(std::move(inputs)),
      radii_(std::move(radii)),
      counts_(std::move(counts)),
      hyper_(hyper),
      priorMean_(priorMean) {
  if (inputs_.size() != radii_.size() || inputs_.empty())
    throw Error(ErrorCode::InvalidArgument, "GPModel: inputs and radii must be non-empty and equal length");
  if (!(hyper_.kernelVariance > 0.0) || !(hyper_.lengthscale > 0.0))
    throw Error(ErrorCode::InvalidArgument, "GPModel: kernel variance and lengthscale must be positive");
  check_counts(counts_, inputs_.size());
  hyper_.noiseSigma = std::max(hyper_.noiseSigma, 1e-6);
  X_ = to_units(inputs_);
  L_ = factor_training(X_, hyper_, counts_);
  Eigen::VectorXd y(static_cast<Eigen::Index>(radii_.size()));
  for (std::size_t i = 0; i < radii_.size(); ++i) y[static_cast<Eigen::Index>(i)] = radii_[i] - priorMean_;
  alpha_ = L_.triangularView<Eigen::Lower>().solve(y);
  lml_ = -0.5 * alpha_.squaredNorm() - L_.diagonal().array().log().sum() -
         0.5 * static_cast<double>(y.size()) * std::log(2.0 * kPi);
  L_.transpose().triangularView<Eigen::Upper>().solveInPlace(alpha_);
}

double GPModel::kernel(const Vec3& a, const Vec3& b) const {
  const double d2 = (a - b).squaredNorm();
  return hyper_.kernelVariance * std::exp(-0.5 * d2 / (hyper_.lengthscale * hyper_.lengthscale));
}

Eigen::MatrixXd GPModel::cross_kernel(const Eigen::Matrix3Xd& q) const { return kernel_matrix(X_, q, hyper_); }

double gp_log_marginal_likelihood(const Eigen::Matrix3Xd& X, const Eigen::VectorXd& y,
                                  const GPHyperparameters& hyper, std::span<const double> counts) {
  check_counts(counts, static_cast<std::size_t>(X.cols()));
  return lml_from_factor(factor_training(X, hyper, counts), y);
}

GPModel gp_fit(std::span<const SurfacePoint> points, const FitOptions& opt, std::span<const double> counts) {
  if (points.size() < 10) throw Error(ErrorCode::InvalidArgument, "gp_fit: need at least 10 points");
  check_counts(counts, points.size());
  std::vector<Direction> inputs;
  std::vector<double> radii;
  inputs.reserve(points.size());
  radii.reserve(points.size());
  double sum = 0.0;
  for (const auto& p : points) {
    if (!(p.r > 0.0)) throw Error(ErrorCode::InvalidArgument, "gp_fit: radii must be positive");
    inputs.push_back(p.direction());
    radii.push_back(p.r);
    sum += p.r;
  }
  const double mean = sum / static_cast<double>(points.size());

  // strided subset for the hyperparameter search
  const std::size_t n = points.size();
  const std::size_t stride = (n + opt.maxHyperFitPoints - 1) / static_cast<std::size_t>(opt.maxHyperFitPoints);
  std::vector<Direction> sub;
  std::vector<double> subY;
  std::vector<double> subC;
  for (std::size_t i = 0; i < n; i += std::max<std::size_t>(stride, 1)) {
    sub.push_back(inputs[i]);
    subY.push_back(radii[i] - mean);
    if (!counts.empty()) subC.push_back(counts[i]);
  }
  const Eigen::Matrix3Xd X = to_units(sub);
  const Eigen::VectorXd y = Eigen::Map<const Eigen::VectorXd>(subY.data(), static_cast<Eigen::Index>(subY.size()));

  struct LogParams {
    double ls, var, noise;  // natural logs
  };
  const LogParams lo{std::log(opt.lengthscaleMin), std::log(opt.varianceMin), std::log(opt.noiseMin)};
  const LogParams hi{std::log(opt.lengthscaleMax), std::log(opt.varianceMax), std::log(opt.noiseMax)};
  auto clampP = [&](LogParams p) {
    p.ls = std::clamp(p.ls, lo.ls, hi.ls);
    p.var = std::clamp(p.var, lo.var, hi.var);
    p.noise = std::clamp(p.noise, lo.noise, hi.noise);
    return p;
  };
  auto toHyper = [](const LogParams& p) {
    return GPHyperparameters{std::exp(p.var), std::exp(p.ls), std::exp(p.noise)};
  };
  auto score = [&](const LogParams& p) {
    try {
      return gp_log_marginal_likelihood(X, y, toHyper(p), subC);
    } catch (const Error&) {
      return -std::numeric_limits<double>::infinity();
    }
  };

  // Coarse grid over (lengthscale, noise/signal ratio) with the signal
  // variance profiled out in closed form, then clamped to its bounds.
  LogParams best{};
  double bestScore = -std::numeric_limits<double>::infinity();
  const double m = static_cast<double>(y.size());
  for (int i = 0; i < opt.gridLengthscale; ++i) {
    const double ls = lo.ls + (hi.ls - lo.ls) * i / std::max(1, opt.gridLengthscale - 1);
    for (int j = 0; j < opt.gridRatio; ++j) {
      const double logRatio = std::log(1e-4) + (std::log(10.0) - std::log(1e-4)) * j / std::max(1, opt.gridRatio - 1);
      GPHyperparameters unitHp{1.0, std::exp(ls), std::sqrt(std::exp(logRatio))};
      double var;
      try {
        const Eigen::MatrixXd L = factor_training(X, unitHp, subC);
        var = L.triangularView<Eigen::Lower>().solve(y).squaredNorm() / m;
      } catch (const Error&) {
        continue;
      }
      var = std::max(var, 1e-300);
      LogParams p = clampP({ls, std::log(var), 0.5 * (logRatio + std::log(var))});
      const double s = score(p);
      if (s > bestScore) {
        bestScore = s;
        best = p;
      }
    }
  }
  if (!std::isfinite(bestScore))
    throw Error(ErrorCode::Conditioning, "gp_fit: no hyperparameter setting gave a factorizable covariance");

  // derivative-free coordinate descent in log space
  double step = 0.5 * (hi.ls - lo.ls) / std::max(1, opt.gridLengthscale - 1);
  for (int round = 0; round < opt.descentRounds; ++round) {
    for (int c = 0; c < 3; ++c) {
      for (int sign : {-1, 1}) {
        LogParams p = best;
        double* field = c == 0 ? &p.ls : (c == 1 ? &p.var : &p.noise);
        *field += sign * step;
        p = clampP(p);
        const double s = score(p);
        if (s > bestScore) {
          bestScore = s;
          best = p;
        }
      }
    }
    step *= 0.5;
  }

  return GPModel(std::move(inputs), std::move(radii), toHyper(best), mean,
                 std::vector<double>(counts.begin(), counts.end()));
}

Posterior gp_posterior(const GPModel& model, std::span<const Direction> queries) {
  const Eigen::Matrix3Xd Q = to_units(queries);
  const Eigen::MatrixXd Kxq = model.cross_kernel(Q);
  Posterior post;
  post.means = (Kxq.transpose() * model.weights()).array() + model.priorMean();
  const Eigen::MatrixXd V = model.factor().triangularView<Eigen::Lower>().solve(Kxq);
  post.variances = (model.hyper().kernelVariance - V.colwise().squaredNorm().array()).max(0.0).matrix().transpose();
  return post;
}

JointPosterior gp_joint_at(const GPModel& model, std::span<const Direction> queries, std::size_t cap) {
  if (queries.size() > cap)
    throw Error(ErrorCode::GridTooLarge, "gp_joint: " + std::to_string(queries.size()) +
                                             " query points exceed the cap of " + std::to_string(cap));
  const Eigen::Matrix3Xd Q = to_units(queries);
  const Eigen::MatrixXd Kxq = model.cross_kernel(Q);
  const Eigen::MatrixXd V = model.factor().triangularView<Eigen::Lower>().solve(Kxq);
  JointPosterior jp;
  jp.mean = (Kxq.transpose() * model.weights()).array() + model.priorMean();
  jp.cov = kernel_matrix(Q, Q, model.hyper());
  jp.cov.selfadjointView<Eigen::Lower>().rankUpdate(V.transpose(), -1.0);
  for (Eigen::Index c = 1; c < jp.cov.cols(); ++c)
    for (Eigen::Index r = 0; r < c; ++r) jp.cov(r, c) = jp.cov(c, r);
  return jp;
}

JointPosterior gp_joint(const GPModel& model, const EvalGrid& grid) {
  grid.validate();
  const auto dirs = grid.directions();
  return gp_joint_at(model, dirs);
}

Eigen::MatrixXd sample_joint(const JointPosterior& joint, int K, std::uint64_t seed) {
  if (K < 1) throw Error(ErrorCode::InvalidArgument, "sample_joint: K must be positive");
  const Eigen::Index d = joint.mean.size();
  const double scale = std::max(joint.cov.diagonal().maxCoeff(), 1e-300);
  Eigen::MatrixXd L;
  bool ok = false;
  for (double rel = 1e-10; rel <= 1e-6 * 1.0001; rel *= 10.0) {
    Eigen::MatrixXd C = joint.cov;
    if (factorize(C, L, rel * scale)) {
      ok = true;
      break;
    }
  }
  if (!ok) throw Error(ErrorCode::Conditioning, "sample_joint: covariance factorization failed up to 1e-6 jitter");

  Rng rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  Eigen::MatrixXd Z(d, K);
  for (int k = 0; k < K; ++k)
    for (Eigen::Index i = 0; i < d; ++i) Z(i, k) = normal(rng);
  Eigen::MatrixXd S = L.triangularView<Eigen::Lower>() * Z;
  S.colwise() += joint.mean;
  return S;
}

Eigen::MatrixXd gp_sample(const GPModel& model, const EvalGrid& grid, int K, std::uint64_t seed) {
  return sample_joint(gp_joint(model, grid), K, seed);
}

nlohmann::json to_json(const GPModel& model) {
  nlohmann::json inputs = nlohmann::json::array();
  for (const auto& d : model.inputs()) inputs.push_back({d.theta, d.phi});
  return {{"inputs", inputs},
          {"radii", model.radii()},
          {"hyperparams",
           {{"kernelVariance", model.hyper().kernelVariance},
            {"lengthscale", model.hyper().lengthscale},
            {"noiseSigma", model.hyper().noiseSigma}}},
          {"priorMean", model.priorMean()},
          {"counts", model.counts()}};
}

GPModel gp_model_from_json(const nlohmann::json& j) {
  try {
    std::vector<Direction> inputs;
    for (const auto& p : j.at("inputs")) inputs.push_back({p.at(0).get<double>(), p.at(1).get<double>()});
    const auto& h = j.at("hyperparams");
    GPHyperparameters hp{h.at("kernelVariance").get<double>(), h.at("lengthscale").get<double>(),
                         h.at("noiseSigma").get<double>()};
    return GPModel(std::move(inputs), j.at("radii").get<std::vector<double>>(), hp, j.at("priorMean").get<double>(),
                   j.value("counts", std::vector<double>{}));
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::InvalidArgument, std::string("gp json: ") + e.what());
  }
}

}  // namespace esim
