#pragma once

#include "esim/geometry.hpp"
#include "esim/gp.hpp"

#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace esim {

struct ScoreDistribution {
  double meanS = 0.0;  // m
  double stdS = 0.0;   // m
  int nSamples = 0;
};

struct MarginQuery {
  Orientation orientation;
  std::optional<int> sectionIndex;  // informational; the grid carries the latitude range
  EvalGrid grid;
  int mcSamples = 2000;
};

/// Maps every hole-frame grid direction into the object frame (R^T u), in
/// grid flat-index order.
std::vector<Direction> rotate_query_grid(const Mat3& R, const EvalGrid& grid);
std::vector<Direction> rotate_query_grid(const Orientation& orientation, const EvalGrid& grid);

/// Draws K joint radius samples (rows = directions, columns = draws).
using JointSampler = std::function<Eigen::MatrixXd(std::span<const Direction>, int K, std::uint64_t seed)>;

JointSampler gp_sampler(const GPModel& model);
/// Zero-variance sampler returning the exact radius in every column.
JointSampler exact_sampler(const SolidObject& object);

/// Per-draw minimum margin: project samples by cos(phi), take the contour max
/// over latitudes at each azimuth, subtract from the hole and minimise.
Eigen::VectorXd min_margin_samples(const Eigen::MatrixXd& samples, const EvalGrid& grid,
                                   const HoleContour& hole);
ScoreDistribution summarize_samples(const Eigen::VectorXd& s);

ScoreDistribution margin_score_mc(const JointSampler& sampler, const HoleContour& hole,
                                  const MarginQuery& query, std::uint64_t seed);
ScoreDistribution margin_score_mc(const GPModel& model, const HoleContour& hole, const MarginQuery& query,
                                  std::uint64_t seed);

struct SectionGrids {
  int M = 72;
  int nPerSection = 8;
};

/// One score per horizontal section l = 0..P-1 (latitude bands of the hole
/// frame). All sections share the seed.
std::vector<ScoreDistribution> margin_score_sections(const GPModel& model, const HoleContour& hole,
                                                     const Orientation& orientation, int P,
                                                     const SectionGrids& grids, int K, std::uint64_t seed);

struct GaussianMarginal {
  double mean = 0.0;
  double stdev = 0.0;
};

struct DiscretizedOptions {
  int kPoints = 200;
  double spanSigmas = 6.0;
  int sectionCount = 1;  // grid latitude rows are split evenly into this many sections
};

struct DiscretizedScore {
  ScoreDistribution whole;
  std::vector<ScoreDistribution> sections;
};

/// Product-form estimate of min(y) treating every y as independent:
/// Q_l(k) = prod_i P(y_l^i > k), W(k) = prod_l Q_l(k), moments by summation
/// over an evenly spaced k grid.
DiscretizedScore discretized_min_moments(const std::vector<std::vector<GaussianMarginal>>& sections,
                                         int kPoints, double spanSigmas);

DiscretizedScore margin_score_discretized(const GPModel& model, const HoleContour& hole,
                                          const MarginQuery& query, const DiscretizedOptions& options = {});

struct BankOptions {
  int thetaCount = 48;
  int phiCount = 24;
  int samples = 400;
};

/// Joint posterior draws on a fixed object-frame lat-long lattice. Values
/// at arbitrary directions are bilinearly interpolated, so every orientation
/// scored from one bank shares the same random draws.
class PosteriorSampleBank {
 public:
  PosteriorSampleBank(const GPModel& model, const BankOptions& options, std::uint64_t seed);

  int samples() const { return K_; }
  const EvalGrid& lattice() const { return lattice_; }

  /// out[k] = max(out[k], scale * sample_k(dir)).
  void accumulate_max(const Vec3& dir, double scale, double* out) const;
  void interpolate(const Vec3& dir, double* out) const;

 private:
  struct Stencil {
    int idx[4];
    double w[4];
  };
  Stencil stencil(const Vec3& dir) const;

  EvalGrid lattice_;
  int K_ = 0;
  std::vector<double> values_;  // node-major, K contiguous per node
};

/// Scores orientations against one hole using a sample bank. Contours are
/// cached per section so the whole-object score, per-section scores and
/// every in-plane spin that is a multiple of the hole's angular step come
/// from one interpolation pass.
class ContourScorer {
 public:
  ContourScorer(const PosteriorSampleBank& bank, const HoleContour& hole, int P, int nPerSection);

  struct Contours {
    std::vector<std::vector<double>> sections;  // [l][m * K + k]
  };

  Contours contours(const Mat3& R) const;
  ScoreDistribution score(const Contours& c, std::optional<int> section = std::nullopt, int spinShift = 0) const;
  /// Whole-object score for R' = Rz(s * 2pi / M) R, s = 0..M-1.
  std::vector<ScoreDistribution> spin_scores(const Contours& c) const;
  std::vector<ScoreDistribution> section_scores(const Contours& c) const;

  int sectionCount() const { return P_; }
  int contourSize() const { return M_; }

 private:
  const PosteriorSampleBank& bank_;
  const HoleContour& hole_;
  int P_;
  int nPerSection_;
  int M_;
  int K_;
};

inline constexpr const char* kScoreCsvHeader = "alpha,beta,gamma,section,muS,sigmaS,nSamples";
/// section < 0 denotes the whole object.
std::string score_csv_row(const Orientation& q, int section, const ScoreDistribution& s);

}  // namespace esim
