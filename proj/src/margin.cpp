#include "esim/margin.hpp"

#include <algorithm>
#include <cstdio>
#include <limits>

namespace esim {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

void check_hole_matches(const HoleContour& hole, const EvalGrid& grid) {
  if (static_cast<int>(hole.size()) != grid.M)
    throw Error(ErrorCode::Configuration, "hole has " + std::to_string(hole.size()) +
                                              " contour angles but the grid has M=" + std::to_string(grid.M));
  for (int m = 0; m < grid.M; ++m)
    if (std::abs(wrap_angle(hole.angles[m] - grid.theta(m))) > 1e-9)
      throw Error(ErrorCode::Configuration, "hole angles do not match the evaluation grid azimuths");
}

double survival(double k, const GaussianMarginal& g) {
  if (g.stdev <= 0.0) return g.mean > k ? 1.0 : (g.mean == k ? 0.5 : 0.0);
  return 0.5 * std::erfc((k - g.mean) / (g.stdev * std::sqrt(2.0)));
}

// Moments of a variable whose survival function S(k_j) is tabulated on an
// even grid: mass below k_0 sits at k_0, mass between neighbours at the
// midpoint, the remaining tail at the last node.
ScoreDistribution moments_from_survival(const std::vector<double>& k, const std::vector<double>& S) {
  const std::size_t n = k.size();
  std::vector<std::pair<double, double>> atoms;  // (location, mass)
  atoms.reserve(n + 1);
  atoms.emplace_back(k[0], 1.0 - S[0]);
  for (std::size_t j = 0; j + 1 < n; ++j) atoms.emplace_back(0.5 * (k[j] + k[j + 1]), S[j] - S[j + 1]);
  atoms.emplace_back(k[n - 1], S[n - 1]);
  double mu = 0.0;
  for (const auto& [x, p] : atoms) mu += x * p;
  double var = 0.0;
  for (const auto& [x, p] : atoms) var += (x - mu) * (x - mu) * p;
  return {mu, std::sqrt(std::max(var, 0.0)), static_cast<int>(n)};
}

}  // namespace

std::vector<Direction> rotate_query_grid(const Mat3& R, const EvalGrid& grid) {
  grid.validate();
  const Mat3 Rt = R.transpose();
  std::vector<Direction> out;
  out.reserve(grid.size());
  for (int n = 0; n < grid.N; ++n)
    for (int m = 0; m < grid.M; ++m)
      out.push_back(Direction::from_vector(Rt * Direction{grid.theta(m), grid.phi(n)}.unit()));
  return out;
}

std::vector<Direction> rotate_query_grid(const Orientation& orientation, const EvalGrid& grid) {
  return rotate_query_grid(orientation.matrix(), grid);
}

JointSampler gp_sampler(const GPModel& model) {
  return [&model](std::span<const Direction> dirs, int K, std::uint64_t seed) {
    return sample_joint(gp_joint_at(model, dirs), K, seed);
  };
}

JointSampler exact_sampler(const SolidObject& object) {
  return [&object](std::span<const Direction> dirs, int K, std::uint64_t) {
    Eigen::MatrixXd S(static_cast<Eigen::Index>(dirs.size()), K);
    for (std::size_t i = 0; i < dirs.size(); ++i)
      S.row(static_cast<Eigen::Index>(i)).setConstant(object.radius(dirs[i].unit()));
    return S;
  };
}

Eigen::VectorXd min_margin_samples(const Eigen::MatrixXd& samples, const EvalGrid& grid, const HoleContour& hole) {
  check_hole_matches(hole, grid);
  if (samples.rows() != static_cast<Eigen::Index>(grid.size()))
    throw Error(ErrorCode::InvalidArgument, "min_margin_samples: sample rows do not match the grid");
  const Eigen::Index K = samples.cols();
  std::vector<double> cosPhi(grid.N);
  for (int n = 0; n < grid.N; ++n) cosPhi[n] = std::cos(grid.phi(n));
  Eigen::VectorXd s(K);
  for (Eigen::Index k = 0; k < K; ++k) {
    double best = std::numeric_limits<double>::infinity();
    for (int m = 0; m < grid.M; ++m) {
      double contour = kNegInf;
      for (int n = 0; n < grid.N; ++n)
        contour = std::max(contour, samples(static_cast<Eigen::Index>(n) * grid.M + m, k) * cosPhi[n]);
      best = std::min(best, hole.radii[m] - contour);
    }
    s[k] = best;
  }
  return s;
}

ScoreDistribution summarize_samples(const Eigen::VectorXd& s) {
  ScoreDistribution d;
  d.nSamples = static_cast<int>(s.size());
  if (s.size() == 0) return d;
  d.meanS = s.mean();
  if (s.size() > 1) d.stdS = std::sqrt((s.array() - d.meanS).square().sum() / static_cast<double>(s.size() - 1));
  return d;
}

ScoreDistribution margin_score_mc(const JointSampler& sampler, const HoleContour& hole, const MarginQuery& query,
                                  std::uint64_t seed) {
  check_hole_matches(hole, query.grid);
  if (query.mcSamples < 1) throw Error(ErrorCode::InvalidArgument, "margin_score_mc: mcSamples must be positive");
  const auto dirs = rotate_query_grid(query.orientation, query.grid);
  const Eigen::MatrixXd samples = sampler(dirs, query.mcSamples, seed);
  return summarize_samples(min_margin_samples(samples, query.grid, hole));
}

ScoreDistribution margin_score_mc(const GPModel& model, const HoleContour& hole, const MarginQuery& query,
                                  std::uint64_t seed) {
  return margin_score_mc(gp_sampler(model), hole, query, seed);
}

std::vector<ScoreDistribution> margin_score_sections(const GPModel& model, const HoleContour& hole,
                                                     const Orientation& orientation, int P,
                                                     const SectionGrids& grids, int K, std::uint64_t seed) {
  if (P < 1) throw Error(ErrorCode::InvalidArgument, "margin_score_sections: P must be positive");
  std::vector<ScoreDistribution> out;
  out.reserve(P);
  for (int l = 0; l < P; ++l) {
    MarginQuery q{orientation, l, EvalGrid::section(grids.M, grids.nPerSection, l, P), K};
    out.push_back(margin_score_mc(model, hole, q, seed));
  }
  return out;
}

DiscretizedScore discretized_min_moments(const std::vector<std::vector<GaussianMarginal>>& sections, int kPoints,
                                         double spanSigmas) {
  if (kPoints < 2) throw Error(ErrorCode::Configuration, "discretized estimator needs at least 2 k points");
  double yMin = std::numeric_limits<double>::infinity();
  double yMax = -yMin;
  for (const auto& sec : sections)
    for (const auto& g : sec) {
      yMin = std::min(yMin, g.mean - spanSigmas * g.stdev);
      yMax = std::max(yMax, g.mean + spanSigmas * g.stdev);
    }
  if (!(yMin < yMax)) throw Error(ErrorCode::Configuration, "discretized estimator: empty k grid (y_min >= y_max)");

  std::vector<double> k(kPoints);
  for (int j = 0; j < kPoints; ++j) k[j] = yMin + (yMax - yMin) * j / (kPoints - 1);

  DiscretizedScore out;
  std::vector<double> W(kPoints, 1.0);
  for (const auto& sec : sections) {
    std::vector<double> Q(kPoints, 1.0);
    for (int j = 0; j < kPoints; ++j) {
      for (const auto& g : sec) Q[j] *= survival(k[j], g);
      W[j] *= Q[j];
    }
    out.sections.push_back(moments_from_survival(k, Q));
  }
  out.whole = moments_from_survival(k, W);
  return out;
}

DiscretizedScore margin_score_discretized(const GPModel& model, const HoleContour& hole, const MarginQuery& query,
                                          const DiscretizedOptions& options) {
  const EvalGrid& grid = query.grid;
  check_hole_matches(hole, grid);
  const int P = std::max(1, options.sectionCount);
  if (grid.N % P != 0)
    throw Error(ErrorCode::Configuration, "discretized estimator: grid rows not divisible by section count");
  const auto dirs = rotate_query_grid(query.orientation, grid);
  const Posterior post = gp_posterior(model, dirs);
  const int rowsPer = grid.N / P;
  std::vector<std::vector<GaussianMarginal>> sections(P);
  for (int n = 0; n < grid.N; ++n) {
    const double c = std::cos(grid.phi(n));
    for (int m = 0; m < grid.M; ++m) {
      const auto i = static_cast<Eigen::Index>(n) * grid.M + m;
      sections[n / rowsPer].push_back(
          {hole.radii[m] - post.means[i] * c, std::sqrt(std::max(post.variances[i], 0.0)) * c});
    }
  }
  return discretized_min_moments(sections, options.kPoints, options.spanSigmas);
}

PosteriorSampleBank::PosteriorSampleBank(const GPModel& model, const BankOptions& options, std::uint64_t seed)
    : K_(options.samples) {
  lattice_.M = options.thetaCount;
  lattice_.N = options.phiCount;
  if (lattice_.M < 4 || lattice_.N < 2 || K_ < 1)
    throw Error(ErrorCode::InvalidArgument, "PosteriorSampleBank: lattice or sample count too small");
  const auto dirs = lattice_.directions();
  const Eigen::MatrixXd S = sample_joint(gp_joint_at(model, dirs), K_, seed);
  values_.resize(static_cast<std::size_t>(S.rows()) * K_);
  for (Eigen::Index i = 0; i < S.rows(); ++i)
    for (int k = 0; k < K_; ++k) values_[static_cast<std::size_t>(i) * K_ + k] = S(i, k);
}

PosteriorSampleBank::Stencil PosteriorSampleBank::stencil(const Vec3& dir) const {
  const int Mb = lattice_.M, Nb = lattice_.N;
  const double theta = std::atan2(dir.y(), dir.x());
  const double phi = std::asin(std::clamp(dir.z() / dir.norm(), -1.0, 1.0));
  const double x = (theta + kPi) * Mb / (2.0 * kPi);
  const double xf = std::floor(x);
  const double fx = x - xf;
  const int i0 = ((static_cast<int>(xf) % Mb) + Mb) % Mb;
  const int i1 = (i0 + 1) % Mb;
  const double dphi = kPi / Nb;
  const double y = std::clamp((phi - (-kPi / 2 + 0.5 * dphi)) / dphi, 0.0, static_cast<double>(Nb - 1));
  const int j0 = std::min(static_cast<int>(std::floor(y)), Nb - 2);
  const double fy = y - j0;
  const int j1 = j0 + 1;
  Stencil s;
  s.idx[0] = j0 * Mb + i0;
  s.idx[1] = j0 * Mb + i1;
  s.idx[2] = j1 * Mb + i0;
  s.idx[3] = j1 * Mb + i1;
  s.w[0] = (1 - fx) * (1 - fy);
  s.w[1] = fx * (1 - fy);
  s.w[2] = (1 - fx) * fy;
  s.w[3] = fx * fy;
  return s;
}

void PosteriorSampleBank::interpolate(const Vec3& dir, double* out) const {
  const Stencil s = stencil(dir);
  const double* a = &values_[static_cast<std::size_t>(s.idx[0]) * K_];
  const double* b = &values_[static_cast<std::size_t>(s.idx[1]) * K_];
  const double* c = &values_[static_cast<std::size_t>(s.idx[2]) * K_];
  const double* d = &values_[static_cast<std::size_t>(s.idx[3]) * K_];
  for (int k = 0; k < K_; ++k) out[k] = s.w[0] * a[k] + s.w[1] * b[k] + s.w[2] * c[k] + s.w[3] * d[k];
}

void PosteriorSampleBank::accumulate_max(const Vec3& dir, double scale, double* out) const {
  const Stencil s = stencil(dir);
  const double* a = &values_[static_cast<std::size_t>(s.idx[0]) * K_];
  const double* b = &values_[static_cast<std::size_t>(s.idx[1]) * K_];
  const double* c = &values_[static_cast<std::size_t>(s.idx[2]) * K_];
  const double* d = &values_[static_cast<std::size_t>(s.idx[3]) * K_];
  const double w0 = scale * s.w[0], w1 = scale * s.w[1], w2 = scale * s.w[2], w3 = scale * s.w[3];
  for (int k = 0; k < K_; ++k) {
    const double v = w0 * a[k] + w1 * b[k] + w2 * c[k] + w3 * d[k];
    out[k] = v > out[k] ? v : out[k];
  }
}

ContourScorer::ContourScorer(const PosteriorSampleBank& bank, const HoleContour& hole, int P, int nPerSection)
    : bank_(bank), hole_(hole), P_(P), nPerSection_(nPerSection), M_(static_cast<int>(hole.size())),
      K_(bank.samples()) {
  if (P_ < 1 || nPerSection_ < 1) throw Error(ErrorCode::InvalidArgument, "ContourScorer: bad section layout");
  check_hole_matches(hole_, EvalGrid::whole(M_, nPerSection_, P_));
}

ContourScorer::Contours ContourScorer::contours(const Mat3& R) const {
  Contours c;
  c.sections.assign(P_, std::vector<double>(static_cast<std::size_t>(M_) * K_, kNegInf));
  const Mat3 Rt = R.transpose();
  for (int l = 0; l < P_; ++l) {
    const EvalGrid g = EvalGrid::section(M_, nPerSection_, l, P_);
    for (int n = 0; n < g.N; ++n) {
      const double phi = g.phi(n);
      const double cp = std::cos(phi);
      for (int m = 0; m < M_; ++m) {
        const Vec3 d = Rt * Direction{hole_.angles[m], phi}.unit();
        bank_.accumulate_max(d, cp, &c.sections[l][static_cast<std::size_t>(m) * K_]);
      }
    }
  }
  return c;
}

ScoreDistribution ContourScorer::score(const Contours& c, std::optional<int> section, int spinShift) const {
  std::vector<double> best(K_, std::numeric_limits<double>::infinity());
  std::vector<double> contour(K_);
  for (int m = 0; m < M_; ++m) {
    const int src = ((m - spinShift) % M_ + M_) % M_;
    const std::size_t off = static_cast<std::size_t>(src) * K_;
    if (section) {
      std::copy_n(&c.sections.at(*section)[off], K_, contour.data());
    } else {
      std::copy_n(&c.sections[0][off], K_, contour.data());
      for (int l = 1; l < P_; ++l)
        for (int k = 0; k < K_; ++k) contour[k] = std::max(contour[k], c.sections[l][off + k]);
    }
    const double h = hole_.radii[m];
    for (int k = 0; k < K_; ++k) best[k] = std::min(best[k], h - contour[k]);
  }
  return summarize_samples(Eigen::Map<Eigen::VectorXd>(best.data(), K_));
}

std::vector<ScoreDistribution> ContourScorer::spin_scores(const Contours& c) const {
  std::vector<double> whole = c.sections[0];
  for (int l = 1; l < P_; ++l)
    for (std::size_t i = 0; i < whole.size(); ++i) whole[i] = std::max(whole[i], c.sections[l][i]);
  std::vector<ScoreDistribution> out(M_);
  std::vector<double> best(K_);
  for (int s = 0; s < M_; ++s) {
    std::fill(best.begin(), best.end(), std::numeric_limits<double>::infinity());
    for (int m = 0; m < M_; ++m) {
      const double* w = &whole[static_cast<std::size_t>(((m - s) % M_ + M_) % M_) * K_];
      const double h = hole_.radii[m];
      for (int k = 0; k < K_; ++k) {
        const double v = h - w[k];
        best[k] = v < best[k] ? v : best[k];
      }
    }
    out[s] = summarize_samples(Eigen::Map<Eigen::VectorXd>(best.data(), K_));
  }
  return out;
}

std::vector<ScoreDistribution> ContourScorer::section_scores(const Contours& c) const {
  std::vector<ScoreDistribution> out;
  out.reserve(P_);
  for (int l = 0; l < P_; ++l) out.push_back(score(c, l));
  return out;
}

std::string score_csv_row(const Orientation& q, int section, const ScoreDistribution& s) {
  char buf[256];
  std::snprintf(buf, sizeof(buf), "%.6f,%.6f,%.6f,%d,%.9g,%.9g,%d", q.alpha, q.beta, q.gamma, section, s.meanS,
                s.stdS, s.nSamples);
  return buf;
}

}  // namespace esim
