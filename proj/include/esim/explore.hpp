#pragma once

#include "esim/margin.hpp"
#include "esim/slam.hpp"

#include <json.hpp>

#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace esim {

enum class StrategyKind { Bo, Random, ExploitOnly, ExploreOnly };

const char* to_string(StrategyKind kind);
StrategyKind strategy_kind_from_string(const std::string& s);

struct StrategyConfig {
  StrategyKind kind = StrategyKind::Bo;
  std::string name;  // report label; empty means the kind name
  double lambda = 500.0;
  /// Explicit orientation candidates. Empty selects the built-in search:
  /// Fibonacci up-directions times every in-plane spin of the hole grid,
  /// followed by local pattern-search refinement of the best few.
  std::vector<Orientation> orientationGrid;
  int sectionCount = 5;
  int maxSteps = 10;
  double stopThreshold = 0.003;  // m
  /// The reported best orientation maximizes muS - decisionKappa * sigmaS.
  double decisionKappa = 0.0;

  int upDirections = 96;
  int refineTop = 2;
  double refineStart = 4.0 * kPi / 180.0;
  double refineStop = 0.5 * kPi / 180.0;
  int phiPerSection = 4;
  BankOptions bank{60, 30, 400};

  double effective_lambda() const { return kind == StrategyKind::ExploitOnly ? 0.0 : lambda; }
  std::string label() const { return name.empty() ? to_string(kind) : name; }
  void validate() const;
};

nlohmann::json to_json(const StrategyConfig& c);
StrategyConfig strategy_config_from_json(const nlohmann::json& j);

/// Scanning and modelling knobs shared by every strategy.
struct PipelineOptions {
  int nPatches = 24;
  PatchOptions patches;
  SlamOptions slam;
  FuseOptions fuse;
  FitOptions fit;
  std::size_t gpMaxPoints = 900;
  double randomOffsetFraction = 0.8;  // random strategy draws |d| up to this fraction of the extent
  double clampFraction = 0.9;
};

struct Acquisition {
  Orientation orientation;
  ScoreDistribution score;
  double value = 0.0;  // acquisition function value
  int index = -1;      // candidate index when an explicit grid is used
};

/// Scores orientations and sections for one model with a shared posterior
/// sample bank, so every comparison uses common random numbers.
class Acquirer {
 public:
  Acquirer(std::shared_ptr<const PosteriorSampleBank> bank, const HoleContour& hole, const StrategyConfig& config);
  Acquirer(const Acquirer&) = delete;
  Acquirer& operator=(const Acquirer&) = delete;

  /// argmax over orientations of muS + lambda * sigmaS.
  Acquisition best_orientation(double lambda);
  /// argmax over sections of -muS(l) + lambda * sigmaS(l) at orientation q.
  int best_section(const Orientation& q, double lambda);
  /// argmax of sigmaS over every (orientation, section) pair; never reads muS.
  std::pair<Orientation, int> most_uncertain();

  ScoreDistribution score(const Orientation& q, std::optional<int> section = std::nullopt) const;
  std::vector<ScoreDistribution> section_scores(const Orientation& q) const;

  long meanQueries() const { return meanQueries_; }

 private:
  double ucb(const ScoreDistribution& s, double lambda) {
    ++meanQueries_;
    return s.meanS + lambda * s.stdS;
  }
  Acquisition refine(const Mat3& start, double lambda, double value);

  const StrategyConfig& config_;
  std::shared_ptr<const PosteriorSampleBank> bank_;
  ContourScorer scorer_;
  long meanQueries_ = 0;
};

/// Tie rule shared by every selection: larger value, then smaller sigma,
/// then lower index.
int select_ucb(const std::vector<ScoreDistribution>& scores, double lambda);
int select_ucb_section(const std::vector<ScoreDistribution>& scores, double lambda);
int select_max_sigma(const std::vector<ScoreDistribution>& scores);

Acquisition acquire_orientation(const GPModel& model, const HoleContour& hole, const StrategyConfig& config,
                                std::uint64_t seed);
int acquire_section(const GPModel& model, const HoleContour& hole, const Orientation& orientation,
                    const StrategyConfig& config, std::uint64_t seed);

struct SectionChoice {
  SectionSpec spec;
  bool clamped = false;
};

/// Hole-frame horizontal plane through the centre latitude of section l,
/// expressed in the object frame. extentUp/extentDown are the object radius
/// along +/- the plane normal.
SectionChoice section_to_scan(const Orientation& orientation, int l, int P, double extentUp, double extentDown,
                              double clampFraction = 0.9);
SectionChoice section_to_scan(const Orientation& orientation, int l, int P, const GPModel& model,
                              double clampFraction = 0.9);

struct ThinnedPoints {
  std::vector<SurfacePoint> points;
  std::vector<double> counts;  // raw samples averaged into each point
};

/// Equal-angle binning of points into at most maxPoints averaged samples.
ThinnedPoints thin_points(const std::vector<SurfacePoint>& points, std::size_t maxPoints);

struct StepLog {
  int step = 0;
  std::string strategy;
  std::optional<Orientation> chosenOrientation;
  std::optional<int> chosenSection;
  SectionSpec section;
  bool failed = false;
  bool clamped = false;
  double muS = 0.0;
  double sigmaS = 0.0;
  bool stop = false;
};

nlohmann::json to_json(const StepLog& s);

struct ExplorationState {
  std::vector<SurfacePoint> rawPoints;    // every fused point so far
  std::vector<SurfacePoint> fusedPoints;  // thinned set the model is trained on
  std::vector<double> fusedCounts;
  std::optional<GPModel> model;
  std::vector<SectionSpec> scannedSections;
  int stepCount = 0;
  int failedSteps = 0;
  Orientation bestOrientation;
  ScoreDistribution bestScore;
  bool hasScore = false;
  long meanQueries = 0;  // muS reads made while selecting what to scan
  std::vector<StepLog> log;
  std::shared_ptr<const PosteriorSampleBank> bank;  // samples of the current model
};

/// One exploration step on the object as held in the hand.
void step(ExplorationState& state, const SolidObject& object, const HoleContour& hole, const StrategyConfig& config,
          const NoiseConfig& noise, std::uint64_t strategySeed, const PipelineOptions& pipeline = {});

bool should_stop(const ExplorationState& state, const StrategyConfig& config);

struct EpisodeResult {
  bool success = false;
  int steps = 0;
  Orientation finalOrientation;
  double trueMargin = 0.0;
  ScoreDistribution finalScore;
  int failedSteps = 0;
  long meanQueries = 0;
  std::vector<StepLog> log;
};

EpisodeResult run_episode(const SolidObject& object, const HoleContour& hole, const StrategyConfig& config,
                          const NoiseConfig& noise, std::uint64_t seed, const PipelineOptions& pipeline = {});

}  // namespace esim
