#include "esim/esim_c.h"

#include "esim/bench.hpp"

#include <algorithm>
#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <exception>
#include <string>

struct esim_object {
  esim::SolidObject value;
};
struct esim_hole {
  esim::HoleContour value;
};
struct esim_experiment {
  esim::ExperimentConfig value;
};
struct esim_report {
  esim::ExperimentReport value;
  esim::ExperimentConfig config;
};

namespace {

thread_local std::string g_lastError;

esim_status status_of(esim::ErrorCode code) { return static_cast<esim_status>(static_cast<int>(code)); }

template <class F>
esim_status guarded(F&& f) {
  try {
    f();
    g_lastError.clear();
    return ESIM_OK;
  } catch (const esim::Error& e) {
    g_lastError = e.what();
    return status_of(e.code());
  } catch (const nlohmann::json::exception& e) {
    g_lastError = std::string("json: ") + e.what();
    return ESIM_ERR_INVALID_ARGUMENT;
  } catch (const std::bad_alloc&) {
    g_lastError = "out of memory";
    return ESIM_ERR_INTERNAL;
  } catch (const std::exception& e) {
    g_lastError = e.what();
    return ESIM_ERR_INTERNAL;
  } catch (...) {
    g_lastError = "unknown exception";
    return ESIM_ERR_INTERNAL;
  }
}

void require(bool ok, const char* what) {
  if (!ok) throw esim::Error(esim::ErrorCode::InvalidArgument, what);
}

char* dup_string(const std::string& s) {
  char* out = static_cast<char*>(std::malloc(s.size() + 1));
  if (!out) throw std::bad_alloc();
  std::memcpy(out, s.c_str(), s.size() + 1);
  return out;
}

nlohmann::json parse(const char* text, const char* what) {
  require(text != nullptr, what);
  try {
    return nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw esim::Error(esim::ErrorCode::InvalidArgument, std::string(what) + ": " + e.what());
  }
}

esim::ProgressFn wrap_progress(esim_progress_fn fn, void* user) {
  if (!fn) return {};
  return [fn, user](const esim::EpisodeRow& r) {
    fn(r.object, r.grasp, r.strategy.c_str(), r.steps, r.success ? 1 : 0, user);
  };
}

}  // namespace

extern "C" {

const char* esim_last_error(void) { return g_lastError.c_str(); }

const char* esim_status_string(esim_status status) {
  if (status == ESIM_OK) return "ok";
  if (status < ESIM_ERR_INVALID_ARGUMENT || status > ESIM_ERR_INTERNAL) return "unknown status";
  return esim::to_string(static_cast<esim::ErrorCode>(static_cast<int>(status)));
}

const char* esim_version(void) { return "0.1.0"; }

void esim_string_free(char* s) { std::free(s); }

esim_status esim_object_generate(uint64_t seed, int n_primitives, esim_object** out) {
  return guarded([&] {
    require(out != nullptr, "out is null");
    *out = new esim_object{esim::generate_object(seed, n_primitives)};
  });
}

esim_status esim_object_from_json(const char* json, esim_object** out) {
  return guarded([&] {
    require(out != nullptr, "out is null");
    *out = new esim_object{esim::object_from_json(parse(json, "object json"))};
  });
}

esim_status esim_object_to_json(const esim_object* object, char** out_json) {
  return guarded([&] {
    require(object && out_json, "null argument");
    *out_json = dup_string(esim::to_json(object->value).dump());
  });
}

esim_status esim_object_radius(const esim_object* object, double theta, double phi, double* out) {
  return guarded([&] {
    require(object && out, "null argument");
    require(phi >= -esim::kPi / 2 && phi <= esim::kPi / 2, "phi must lie in [-pi/2, pi/2]");
    *out = esim::radius(object->value, theta, phi);
  });
}

esim_status esim_object_rotated(const esim_object* object, double alpha, double beta, double gamma,
                                esim_object** out) {
  return guarded([&] {
    require(object && out, "null argument");
    *out = new esim_object{object->value.rotated(esim::Orientation{alpha, beta, gamma}.matrix())};
  });
}

void esim_object_free(esim_object* object) { delete object; }

esim_status esim_hole_make(const esim_object* object, double alpha, double beta, double gamma, int samples,
                           double clearance, esim_hole** out) {
  return guarded([&] {
    require(object && out, "null argument");
    *out = new esim_hole{esim::make_hole(object->value, {alpha, beta, gamma}, samples, clearance)};
  });
}

esim_status esim_hole_from_json(const char* json, esim_hole** out) {
  return guarded([&] {
    require(out != nullptr, "out is null");
    *out = new esim_hole{esim::hole_from_json(parse(json, "hole json"))};
  });
}

esim_status esim_hole_to_json(const esim_hole* hole, char** out_json) {
  return guarded([&] {
    require(hole && out_json, "null argument");
    *out_json = dup_string(esim::to_json(hole->value).dump());
  });
}

esim_status esim_true_min_margin(const esim_object* object, const esim_hole* hole, double alpha, double beta,
                                 double gamma, double* out) {
  return guarded([&] {
    require(object && hole && out, "null argument");
    *out = esim::true_min_margin(object->value, esim::Orientation{alpha, beta, gamma}, hole->value);
  });
}

void esim_hole_free(esim_hole* hole) { delete hole; }

esim_status esim_run_episode(const esim_object* hand, const esim_hole* hole, const char* strategy_json,
                             const char* noise_json, uint64_t seed, char** out_json) {
  return guarded([&] {
    require(hand && hole && out_json, "null argument");
    esim::StrategyConfig strategy;
    if (strategy_json) strategy = esim::strategy_config_from_json(parse(strategy_json, "strategy json"));
    esim::NoiseConfig noise;
    if (noise_json) noise = esim::noise_config_from_json(parse(noise_json, "noise json"));
    const auto r = esim::run_episode(hand->value, hole->value, strategy, noise, seed);
    nlohmann::json log = nlohmann::json::array();
    for (const auto& s : r.log) log.push_back(esim::to_json(s));
    const nlohmann::json j{{"success", r.success},
                           {"steps", r.steps},
                           {"trueMargin", r.trueMargin},
                           {"finalOrientation", esim::to_json(r.finalOrientation)},
                           {"finalScore", {{"muS", r.finalScore.meanS}, {"sigmaS", r.finalScore.stdS}}},
                           {"failedSteps", r.failedSteps},
                           {"meanQueries", r.meanQueries},
                           {"log", log}};
    *out_json = dup_string(j.dump());
  });
}

esim_status esim_generate_suite(uint64_t seed, int n, int hole_samples, double clearance, char** out_json) {
  return guarded([&] {
    require(out_json != nullptr, "out is null");
    require(n >= 1, "n must be at least 1");
    nlohmann::json arr = nlohmann::json::array();
    for (int i = 0; i < n; ++i) {
      esim::Orientation feasible;
      auto [object, hole] = esim::suite_object(seed, i, hole_samples, clearance, &feasible);
      arr.push_back({{"index", i},
                     {"object", esim::to_json(object)},
                     {"hole", esim::to_json(hole)},
                     {"feasible", esim::to_json(feasible)}});
    }
    *out_json = dup_string(nlohmann::json{{"seed", seed}, {"objects", arr}}.dump(2) + "\n");
  });
}

esim_status esim_experiment_from_json(const char* json, esim_experiment** out) {
  return guarded([&] {
    require(out != nullptr, "out is null");
    *out = new esim_experiment{esim::experiment_config_from_json(parse(json, "experiment json"))};
  });
}

esim_status esim_experiment_load(const char* path, esim_experiment** out) {
  return guarded([&] {
    require(path && out, "null argument");
    *out = new esim_experiment{esim::load_experiment_config(path)};
  });
}

esim_status esim_experiment_set_output(esim_experiment* experiment, const char* path) {
  return guarded([&] {
    require(experiment != nullptr, "experiment is null");
    experiment->value.outputPath = path ? path : "";
  });
}

esim_status esim_experiment_set_noise(esim_experiment* experiment, double point_sigma, double depth_sigma,
                                      double odom_rot_sigma, double odom_trans_sigma) {
  return guarded([&] {
    require(experiment != nullptr, "experiment is null");
    esim::NoiseConfig n = experiment->value.noise;
    if (point_sigma >= 0) n.pointSigma = point_sigma;
    if (depth_sigma >= 0) n.depthSigma = depth_sigma;
    if (odom_rot_sigma >= 0) n.odomRotSigma = odom_rot_sigma;
    if (odom_trans_sigma >= 0) n.odomTransSigma = odom_trans_sigma;
    n.validate();
    experiment->value.noise = n;
  });
}

esim_status esim_experiment_set_threads(esim_experiment* experiment, int threads) {
  return guarded([&] {
    require(experiment != nullptr, "experiment is null");
    require(threads >= 0, "threads must be non-negative");
    experiment->value.threads = threads;
  });
}

esim_status esim_experiment_to_json(const esim_experiment* experiment, char** out_json) {
  return guarded([&] {
    require(experiment && out_json, "null argument");
    *out_json = dup_string(esim::to_json(experiment->value).dump(2) + "\n");
  });
}

void esim_experiment_free(esim_experiment* experiment) { delete experiment; }

esim_status esim_experiment_run(const esim_experiment* experiment, esim_progress_fn progress, void* user,
                                esim_report** out) {
  return guarded([&] {
    require(experiment && out, "null argument");
    auto report = esim::run_experiment(experiment->value, wrap_progress(progress, user));
    if (!experiment->value.outputPath.empty()) esim::emit_plots(report, experiment->value.outputPath);
    *out = new esim_report{std::move(report), experiment->value};
  });
}

esim_status esim_experiment_sweep(const esim_experiment* experiment, const double* sigmas, size_t n,
                                  const char* target, esim_progress_fn progress, void* user, char** out_csv) {
  return guarded([&] {
    require(experiment && sigmas && target && out_csv, "null argument");
    const std::vector<double> s(sigmas, sigmas + n);
    const auto rows =
        esim::noise_sweep(experiment->value, s, esim::sweep_target_from_string(target), wrap_progress(progress, user));
    const std::string csv = esim::sweep_csv(rows);
    if (!experiment->value.outputPath.empty()) {
      std::error_code ec;
      std::filesystem::create_directories(experiment->value.outputPath, ec);
      if (ec) throw esim::Error(esim::ErrorCode::Io, "cannot create " + experiment->value.outputPath);
      esim::write_file_atomic(std::filesystem::path(experiment->value.outputPath) / "sweep.csv", csv);
    }
    *out_csv = dup_string(csv);
  });
}

esim_status esim_report_summary_json(const esim_report* report, char** out_json) {
  return guarded([&] {
    require(report && out_json, "null argument");
    *out_json = dup_string(esim::summary_json(report->value, report->config).dump(2) + "\n");
  });
}

esim_status esim_report_episodes_csv(const esim_report* report, char** out_csv) {
  return guarded([&] {
    require(report && out_csv, "null argument");
    *out_csv = dup_string(esim::episodes_csv(report->value.rows));
  });
}

esim_status esim_report_emit_plots(const esim_report* report, const char* dir, const char* strategies_csv,
                                   int* files_written) {
  return guarded([&] {
    require(report && dir, "null argument");
    std::optional<std::vector<std::string>> filter;
    if (strategies_csv) {
      filter.emplace();
      std::string cur;
      for (const char* c = strategies_csv;; ++c) {
        if (*c == ',' || *c == '\0') {
          if (!cur.empty()) filter->push_back(cur);
          cur.clear();
          if (*c == '\0') break;
        } else {
          cur += *c;
        }
      }
    }
    const auto files = esim::emit_plots(report->value, dir, filter);
    if (files_written) *files_written = static_cast<int>(files.size());
  });
}

void esim_report_free(esim_report* report) { delete report; }

esim_status esim_stats(const char* report_dir, char** out_json, int* consistent) {
  return guarded([&] {
    require(report_dir && out_json, "null argument");
    const std::filesystem::path dir(report_dir);
    esim::ExperimentReport report;
    report.rows = esim::parse_episodes_csv(esim::read_file(dir / "episodes.csv"));
    std::vector<std::string> order;
    for (const auto& r : report.rows)
      if (std::find(order.begin(), order.end(), r.strategy) == order.end()) order.push_back(r.strategy);
    report.summary = esim::summarize(report.rows, order);
    report.pairedTests = esim::paired_comparisons(report.rows, order);

    esim::ExperimentConfig config;
    int same = 1;
    nlohmann::json recomputed;
    if (std::filesystem::exists(dir / "summary.json")) {
      nlohmann::json stored;
      try {
        stored = nlohmann::json::parse(esim::read_file(dir / "summary.json"));
        config = esim::experiment_config_from_json(stored.at("config"));
      } catch (const nlohmann::json::exception& e) {
        throw esim::Error(esim::ErrorCode::Configuration, std::string("summary.json: ") + e.what());
      }
      recomputed = esim::summary_json(report, config);
      same = recomputed.at("strategies") == stored.at("strategies") &&
                     recomputed.at("pairedTests") == stored.at("pairedTests")
                 ? 1
                 : 0;
    } else {
      recomputed = esim::summary_json(report, config);
      recomputed.erase("config");
    }
    if (consistent) *consistent = same;
    *out_json = dup_string(recomputed.dump(2) + "\n");
  });
}

esim_status esim_paired_t_test(const double* a, const double* b, size_t n, double* t, double* p) {
  return guarded([&] {
    require(a && b, "null argument");
    const auto r = esim::paired_t_test(std::vector<double>(a, a + n), std::vector<double>(b, b + n));
    if (t) *t = r.t;
    if (p) *p = r.p;
  });
}

}  // extern "C"
