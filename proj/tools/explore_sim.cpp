#include "esim/esim_c.h"

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

namespace {

constexpr int kExitOk = 0;
constexpr int kExitInvariant = 2;
constexpr int kExitIo = 3;

int exit_code(esim_status s) {
  if (s == ESIM_OK) return kExitOk;
  if (s == ESIM_ERR_IO) return kExitIo;
  return kExitInvariant;
}

int fail(esim_status s, const char* what) {
  std::cerr << "explore-sim: " << what << ": " << esim_status_string(s) << ": " << esim_last_error() << "\n";
  return exit_code(s);
}

struct Taken {
  char* s = nullptr;
  ~Taken() { esim_string_free(s); }
};

struct NoiseFlags {
  double point = -1.0;
  double depth = -1.0;
  std::string odom;  // "ROT" or "ROT,TRANS"
};

void add_noise_flags(CLI::App* cmd, NoiseFlags& f) {
  cmd->add_option("--noise-point", f.point, "radial point noise sigma [m]")->check(CLI::NonNegativeNumber);
  cmd->add_option("--noise-depth", f.depth, "per-sample depth noise sigma [m]")->check(CLI::NonNegativeNumber);
  cmd->add_option("--noise-odom", f.odom, "odometry sigma: ROT[rad] or ROT,TRANS[m]");
}

esim_status apply_noise(esim_experiment* exp, const NoiseFlags& f) {
  double rot = -1.0, trans = -1.0;
  if (!f.odom.empty()) {
    std::istringstream in(f.odom);
    char comma = 0;
    if (!(in >> rot) || rot < 0) return ESIM_ERR_INVALID_ARGUMENT;
    if (in >> comma) {
      if (comma != ',' || !(in >> trans) || trans < 0) return ESIM_ERR_INVALID_ARGUMENT;
    }
  }
  return esim_experiment_set_noise(exp, f.point, f.depth, rot, trans);
}

void print_progress(int object, int grasp, const char* strategy, int steps, int success, void* user) {
  if (*static_cast<bool*>(user)) return;
  std::fprintf(stderr, "object %d grasp %d %-12s steps %2d %s\n", object, grasp, strategy, steps,
               success ? "ok" : "FAIL");
}

std::vector<double> parse_sigmas(const std::string& text) {
  std::vector<double> out;
  std::istringstream in(text);
  std::string tok;
  while (std::getline(in, tok, ',')) out.push_back(std::stod(tok));
  return out;
}

esim_status load_experiment(const std::string& path, esim_experiment** exp) {
  if (path.empty()) return esim_experiment_from_json("{}", exp);
  return esim_experiment_load(path.c_str(), exp);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Tactile exploration simulator for shape-aware insertion"};
  app.require_subcommand(1);
  app.set_version_flag("--version", esim_version());
  bool quiet = false;
  app.add_flag("-q,--quiet", quiet, "no progress output");

  auto* gen = app.add_subcommand("gen-objects", "generate an object suite with holes");
  int genN = 15;
  std::uint64_t genSeed = 0;
  int genSamples = 72;
  double genClearance = 0.002;
  std::string genOut;
  gen->add_option("--n", genN, "number of objects")->check(CLI::PositiveNumber);
  gen->add_option("--seed", genSeed, "master seed");
  gen->add_option("--hole-samples", genSamples, "hole contour samples")->check(CLI::Range(8, 100000));
  gen->add_option("--clearance", genClearance, "hole clearance [m]")->check(CLI::NonNegativeNumber);
  gen->add_option("--out", genOut, "output file (default stdout)");

  auto* run = app.add_subcommand("run", "run the strategy x object x grasp matrix");
  std::string runConfig, runOut;
  int runThreads = -1;
  NoiseFlags runNoise;
  run->add_option("--config", runConfig, "experiment config JSON")->check(CLI::ExistingFile);
  run->add_option("--out", runOut, "report directory")->required();
  run->add_option("--threads", runThreads, "worker threads (0 = all cores)")->check(CLI::NonNegativeNumber);
  add_noise_flags(run, runNoise);

  auto* sweep = app.add_subcommand("sweep", "success rate against a noise level");
  std::string sweepConfig, sweepOut, sweepTarget = "depth", sweepSigmas = "0,1e-3,2e-3,4e-3,6e-3";
  int sweepThreads = -1;
  NoiseFlags sweepNoise;
  sweep->add_option("--config", sweepConfig, "experiment config JSON")->check(CLI::ExistingFile);
  sweep->add_option("--target", sweepTarget, "depth or model")->check(CLI::IsMember({"depth", "model"}));
  sweep->add_option("--sigmas", sweepSigmas, "comma-separated sigmas [m]");
  sweep->add_option("--out", sweepOut, "output directory (default: table on stdout only)");
  sweep->add_option("--threads", sweepThreads, "worker threads (0 = all cores)")->check(CLI::NonNegativeNumber);
  add_noise_flags(sweep, sweepNoise);

  auto* stats = app.add_subcommand("stats", "recompute summary statistics of a report directory");
  std::string statsDir;
  stats->add_option("dir", statsDir, "report directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : kExitInvariant;
  }

  if (*gen) {
    Taken json;
    if (auto s = esim_generate_suite(genSeed, genN, genSamples, genClearance, &json.s)) return fail(s, "gen-objects");
    if (genOut.empty()) {
      std::cout << json.s;
      return kExitOk;
    }
    std::ofstream f(genOut, std::ios::binary);
    f << json.s;
    if (!f.flush()) {
      std::cerr << "explore-sim: cannot write " << genOut << "\n";
      return kExitIo;
    }
    return kExitOk;
  }

  if (*run || *sweep) {
    const bool isRun = static_cast<bool>(*run);
    esim_experiment* exp = nullptr;
    if (auto s = load_experiment(isRun ? runConfig : sweepConfig, &exp)) return fail(s, "config");
    struct Guard {
      esim_experiment* e;
      ~Guard() { esim_experiment_free(e); }
    } guard{exp};
    if (auto s = apply_noise(exp, isRun ? runNoise : sweepNoise)) return fail(s, "noise flags");
    const int threads = isRun ? runThreads : sweepThreads;
    if (threads >= 0) {
      if (auto s = esim_experiment_set_threads(exp, threads)) return fail(s, "threads");
    }
    const std::string& out = isRun ? runOut : sweepOut;
    if (!out.empty() || isRun) {
      if (auto s = esim_experiment_set_output(exp, out.c_str())) return fail(s, "output");
    }

    if (isRun) {
      esim_report* report = nullptr;
      if (auto s = esim_experiment_run(exp, print_progress, &quiet, &report)) return fail(s, "run");
      Taken summary;
      int plots = 0;
      esim_status s = esim_report_emit_plots(report, (std::filesystem::path(out) / "plots").string().c_str(), nullptr, &plots);
      if (!s) s = esim_report_summary_json(report, &summary.s);
      esim_report_free(report);
      if (s) return fail(s, "summary");
      if (!quiet) std::cout << summary.s;
      return kExitOk;
    }

    std::vector<double> sigmas;
    try {
      sigmas = parse_sigmas(sweepSigmas);
    } catch (const std::exception&) {
      std::cerr << "explore-sim: --sigmas must be comma-separated numbers\n";
      return kExitInvariant;
    }
    Taken csv;
    if (auto s = esim_experiment_sweep(exp, sigmas.data(), sigmas.size(), sweepTarget.c_str(), print_progress,
                                       &quiet, &csv.s))
      return fail(s, "sweep");
    std::cout << csv.s;
    return kExitOk;
  }

  Taken json;
  int consistent = 0;
  if (auto s = esim_stats(statsDir.c_str(), &json.s, &consistent)) return fail(s, "stats");
  std::cout << json.s;
  if (!consistent) {
    std::cerr << "explore-sim: summary.json does not match episodes.csv\n";
    return kExitInvariant;
  }
  return kExitOk;
}
