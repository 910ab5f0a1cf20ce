#pragma once

#include "esim/explore.hpp"

#include <json.hpp>

#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace esim {

struct ExperimentConfig {
  int nObjects = 5;
  int graspsPerObject = 12;
  std::vector<StrategyConfig> strategies;  // empty selects the four standard strategies
  NoiseConfig noise;
  std::uint64_t masterSeed = 0;
  std::string outputPath;  // empty: nothing is written

  int holeSamples = 72;
  double clearance = 0.002;
  int threads = 1;  // 0 = one per hardware thread
  PipelineOptions pipeline;

  void validate() const;
  std::vector<StrategyConfig> resolved_strategies() const;
};

nlohmann::json to_json(const ExperimentConfig& c);
ExperimentConfig experiment_config_from_json(const nlohmann::json& j);
ExperimentConfig load_experiment_config(const std::filesystem::path& path);

std::vector<StrategyConfig> default_strategies();

/// One (object, grasp) cell of the suite: ground truth, the in-hand rotation
/// and the seeds every strategy shares.
struct BenchCell {
  int object = 0;
  int grasp = 0;
  SolidObject base;
  HoleContour hole;
  Orientation feasible;  // of the base object
  Mat3 grasp_rotation = Mat3::Identity();
  NoiseConfig noise;
  std::uint64_t strategySeed = 0;
  std::string streamHash;  // fingerprint of geometry, grasp and noise streams
};

/// Object i of a suite and its hole. Deterministic in (masterSeed, i).
std::pair<SolidObject, HoleContour> suite_object(std::uint64_t masterSeed, int i, int holeSamples, double clearance,
                                                 Orientation* feasible = nullptr);
BenchCell make_cell(const ExperimentConfig& config, int object, int grasp);

struct EpisodeRow {
  int object = 0;
  int grasp = 0;
  std::string strategy;
  int steps = 0;
  bool success = false;
  double trueMargin = 0.0;
  double muS = 0.0;
  double sigmaS = 0.0;
  int failedSteps = 0;
  Orientation finalOrientation;
  std::string streamHash;
};

struct StrategySummary {
  std::string strategy;
  int episodes = 0;
  double medianSteps = 0.0;
  double q25Steps = 0.0;
  double q75Steps = 0.0;
  double meanSteps = 0.0;
  double successRate = 0.0;
};

struct PairedTTest {
  double t = 0.0;
  double p = 1.0;
  int dof = 0;
  double meanDiff = 0.0;
};

struct PairedComparison {
  std::string a;
  std::string b;
  std::optional<PairedTTest> test;  // empty when the step differences are all equal
};

struct ExperimentReport {
  std::vector<EpisodeRow> rows;
  std::vector<StrategySummary> summary;
  std::vector<PairedComparison> pairedTests;
  std::vector<std::string> stepLog;  // JSON lines
};

/// Two-sided paired-samples t-test of a against b.
PairedTTest paired_t_test(const std::vector<double>& a, const std::vector<double>& b);

/// Type-7 sample quantile (linear interpolation between order statistics).
double quantile(std::vector<double> values, double p);

std::vector<StrategySummary> summarize(const std::vector<EpisodeRow>& rows, const std::vector<std::string>& order);
std::vector<PairedComparison> paired_comparisons(const std::vector<EpisodeRow>& rows,
                                                 const std::vector<std::string>& order);

using ProgressFn = std::function<void(const EpisodeRow&)>;

/// Runs every (object, grasp, strategy) episode. When config.outputPath is
/// set the report is written there atomically; rows finished before an I/O
/// failure are kept in episodes.csv.partial.
ExperimentReport run_experiment(const ExperimentConfig& config, const ProgressFn& progress = {});

std::string episodes_csv(const std::vector<EpisodeRow>& rows);
std::vector<EpisodeRow> parse_episodes_csv(const std::string& text);
nlohmann::json summary_json(const ExperimentReport& report, const ExperimentConfig& config);
void write_report(const ExperimentReport& report, const ExperimentConfig& config, const std::filesystem::path& dir);

enum class SweepTarget { ReconstructedModel, DepthImage };
const char* to_string(SweepTarget t);
SweepTarget sweep_target_from_string(const std::string& s);

struct SweepRow {
  double sigma = 0.0;
  std::string strategy;
  double successRate = 0.0;
  double medianSteps = 0.0;
  int episodes = 0;
};

/// Success rate per strategy per noise level. Only the targeted sigma
/// changes; the other noise settings keep their configured values.
std::vector<SweepRow> noise_sweep(const ExperimentConfig& config, const std::vector<double>& sigmas,
                                  SweepTarget target, const ProgressFn& progress = {});
std::string sweep_csv(const std::vector<SweepRow>& rows);

/// Writes boxplot.csv (strategy, q25, median, q75) and boxplot.svg for the
/// selected strategies (nullopt = all). An empty selection writes nothing.
/// Returns the files written.
std::vector<std::filesystem::path> emit_plots(const ExperimentReport& report, const std::filesystem::path& dir,
                                              const std::optional<std::vector<std::string>>& strategies = std::nullopt);
std::string boxplot_csv(const std::vector<StrategySummary>& summary);
std::string boxplot_svg(const std::vector<StrategySummary>& summary, const std::vector<EpisodeRow>& rows);

/// Writes text to path via a temporary file and rename. Throws Io.
void write_file_atomic(const std::filesystem::path& path, const std::string& text);
std::string read_file(const std::filesystem::path& path);

}  // namespace esim
