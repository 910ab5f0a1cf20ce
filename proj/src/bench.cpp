#include "esim/bench.hpp"

#include <boost/math/distributions/students_t.hpp>

#include <algorithm>
#include <atomic>
#include <cstdio>
#include <fstream>
#include <mutex>
#include <set>
#include <sstream>
#include <thread>

namespace esim {

namespace fs = std::filesystem;

namespace {

enum SeedTag : std::uint64_t {
  kObjectTag = 101,
  kPrimitiveCountTag,
  kFeasibleTag,
  kGraspTag,
  kNoiseTag,
  kStrategyTag,
};

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

std::uint64_t hash_bytes(const std::string& s, std::uint64_t h = 0xcbf29ce484222325ULL) {
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string cur;
  std::istringstream in(s);
  while (std::getline(in, cur, sep)) out.push_back(cur);
  if (!s.empty() && s.back() == sep) out.emplace_back();
  return out;
}

}  // namespace

std::vector<StrategyConfig> default_strategies() {
  std::vector<StrategyConfig> out(4);
  out[0].kind = StrategyKind::Bo;
  out[1].kind = StrategyKind::Random;
  out[2].kind = StrategyKind::ExploitOnly;
  out[3].kind = StrategyKind::ExploreOnly;
  return out;
}

std::vector<StrategyConfig> ExperimentConfig::resolved_strategies() const {
  return strategies.empty() ? default_strategies() : strategies;
}

void ExperimentConfig::validate() const {
  if (nObjects < 1) throw Error(ErrorCode::Configuration, "nObjects must be at least 1");
  if (graspsPerObject < 1) throw Error(ErrorCode::Configuration, "graspsPerObject must be at least 1");
  if (holeSamples < 8) throw Error(ErrorCode::Configuration, "holeSamples must be at least 8");
  if (threads < 0) throw Error(ErrorCode::Configuration, "threads must be non-negative");
  noise.validate();
  std::set<std::string> labels;
  for (const auto& s : resolved_strategies()) {
    s.validate();
    if (!labels.insert(s.label()).second)
      throw Error(ErrorCode::Configuration, "duplicate strategy label '" + s.label() + "'");
  }
}

nlohmann::json to_json(const ExperimentConfig& c) {
  nlohmann::json strategies = nlohmann::json::array();
  for (const auto& s : c.resolved_strategies()) strategies.push_back(to_json(s));
  return {{"nObjects", c.nObjects},
          {"graspsPerObject", c.graspsPerObject},
          {"strategies", strategies},
          {"noise", to_json(c.noise)},
          {"masterSeed", c.masterSeed},
          {"outputPath", c.outputPath},
          {"holeSamples", c.holeSamples},
          {"clearance", c.clearance},
          {"threads", c.threads}};
}

ExperimentConfig experiment_config_from_json(const nlohmann::json& j) {
  ExperimentConfig c;
  try {
    if (!j.is_object()) throw Error(ErrorCode::Configuration, "experiment config must be a JSON object");
    c.nObjects = j.value("nObjects", c.nObjects);
    c.graspsPerObject = j.value("graspsPerObject", c.graspsPerObject);
    if (j.contains("strategies"))
      for (const auto& s : j.at("strategies")) c.strategies.push_back(strategy_config_from_json(s));
    if (j.contains("noise")) c.noise = noise_config_from_json(j.at("noise"));
    c.masterSeed = j.value("masterSeed", c.masterSeed);
    c.outputPath = j.value("outputPath", c.outputPath);
    c.holeSamples = j.value("holeSamples", c.holeSamples);
    c.clearance = j.value("clearance", c.clearance);
    c.threads = j.value("threads", c.threads);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::Configuration, std::string("experiment config: ") + e.what());
  }
  c.validate();
  return c;
}

ExperimentConfig load_experiment_config(const fs::path& path) {
  const std::string text = read_file(path);
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::Configuration, path.string() + ": " + e.what());
  }
  return experiment_config_from_json(j);
}

std::pair<SolidObject, HoleContour> suite_object(std::uint64_t masterSeed, int i, int holeSamples, double clearance,
                                                 Orientation* feasible) {
  const auto idx = static_cast<std::uint64_t>(i);
  const int nPrimitives = 1 + static_cast<int>(derive_seed(masterSeed, {idx, kPrimitiveCountTag}) % 3);
  SolidObject object = generate_object(derive_seed(masterSeed, {idx, kObjectTag}), nPrimitives);
  Rng rng(derive_seed(masterSeed, {idx, kFeasibleTag}));
  const Orientation q = Orientation::from_matrix(uniform_random_rotation(rng));
  if (feasible) *feasible = q;
  HoleContour hole = make_hole(object, q, holeSamples, clearance);
  return {std::move(object), std::move(hole)};
}

BenchCell make_cell(const ExperimentConfig& config, int object, int grasp) {
  BenchCell cell;
  cell.object = object;
  cell.grasp = grasp;
  std::tie(cell.base, cell.hole) =
      suite_object(config.masterSeed, object, config.holeSamples, config.clearance, &cell.feasible);
  const auto o = static_cast<std::uint64_t>(object);
  const auto g = static_cast<std::uint64_t>(grasp);
  Rng rng(derive_seed(config.masterSeed, {o, g, kGraspTag}));
  cell.grasp_rotation = uniform_random_rotation(rng);
  cell.noise = config.noise;
  cell.noise.seed = derive_seed(config.masterSeed ^ config.noise.seed, {o, g, kNoiseTag});
  cell.strategySeed = derive_seed(config.masterSeed, {o, g, kStrategyTag});

  std::uint64_t h = hash_bytes(to_json(cell.base).dump());
  h = hash_bytes(to_json(cell.hole).dump(), h);
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < 3; ++c) h = hash_bytes(fmt("%.17g", cell.grasp_rotation(r, c)), h);
  h = hash_bytes(to_json(cell.noise).dump(), h);
  h = mix64(h ^ cell.strategySeed);
  cell.streamHash = hex64(h);
  return cell;
}

PairedTTest paired_t_test(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size()) throw Error(ErrorCode::InvalidArgument, "paired_t_test: samples differ in length");
  if (a.size() < 2) throw Error(ErrorCode::InvalidArgument, "paired_t_test: need at least two pairs");
  const double n = static_cast<double>(a.size());
  double mean = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) mean += a[i] - b[i];
  mean /= n;
  double ss = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) ss += (a[i] - b[i] - mean) * (a[i] - b[i] - mean);
  const double var = ss / (n - 1.0);
  if (!(var > 0.0)) throw Error(ErrorCode::DegenerateInput, "paired_t_test: differences have zero variance");
  PairedTTest r;
  r.dof = static_cast<int>(a.size()) - 1;
  r.meanDiff = mean;
  r.t = mean / std::sqrt(var / n);
  const boost::math::students_t dist(r.dof);
  r.p = std::clamp(2.0 * boost::math::cdf(boost::math::complement(dist, std::abs(r.t))), 0.0, 1.0);
  return r;
}

double quantile(std::vector<double> v, double p) {
  if (v.empty()) throw Error(ErrorCode::InvalidArgument, "quantile of an empty sample");
  if (!(p >= 0.0 && p <= 1.0)) throw Error(ErrorCode::InvalidArgument, "quantile level outside [0, 1]");
  std::sort(v.begin(), v.end());
  const double h = (static_cast<double>(v.size()) - 1.0) * p;
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const std::size_t hi = std::min(lo + 1, v.size() - 1);
  return v[lo] + (h - static_cast<double>(lo)) * (v[hi] - v[lo]);
}

std::vector<StrategySummary> summarize(const std::vector<EpisodeRow>& rows, const std::vector<std::string>& order) {
  std::vector<StrategySummary> out;
  for (const auto& name : order) {
    std::vector<double> steps;
    int successes = 0;
    for (const auto& r : rows)
      if (r.strategy == name) {
        steps.push_back(r.steps);
        successes += r.success ? 1 : 0;
      }
    if (steps.empty()) continue;
    StrategySummary s;
    s.strategy = name;
    s.episodes = static_cast<int>(steps.size());
    s.medianSteps = quantile(steps, 0.5);
    s.q25Steps = quantile(steps, 0.25);
    s.q75Steps = quantile(steps, 0.75);
    double sum = 0.0;
    for (double v : steps) sum += v;
    s.meanSteps = sum / static_cast<double>(steps.size());
    s.successRate = static_cast<double>(successes) / static_cast<double>(steps.size());
    out.push_back(s);
  }
  return out;
}

std::vector<PairedComparison> paired_comparisons(const std::vector<EpisodeRow>& rows,
                                                 const std::vector<std::string>& order) {
  std::map<std::pair<int, int>, std::map<std::string, double>> cells;
  for (const auto& r : rows) cells[{r.object, r.grasp}][r.strategy] = r.steps;
  std::vector<PairedComparison> out;
  for (std::size_t i = 0; i < order.size(); ++i)
    for (std::size_t j = i + 1; j < order.size(); ++j) {
      std::vector<double> a, b;
      for (const auto& [key, byStrategy] : cells) {
        const auto ia = byStrategy.find(order[i]);
        const auto ib = byStrategy.find(order[j]);
        if (ia != byStrategy.end() && ib != byStrategy.end()) {
          a.push_back(ia->second);
          b.push_back(ib->second);
        }
      }
      PairedComparison c{order[i], order[j], std::nullopt};
      try {
        c.test = paired_t_test(a, b);
      } catch (const Error& e) {
        if (e.code() != ErrorCode::DegenerateInput && e.code() != ErrorCode::InvalidArgument) throw;
      }
      out.push_back(c);
    }
  return out;
}

std::string episodes_csv(const std::vector<EpisodeRow>& rows) {
  std::string s = "object,grasp,strategy,steps,success,trueMargin,muS,sigmaS,failedSteps,alpha,beta,gamma,streamHash\n";
  for (const auto& r : rows) {
    s += std::to_string(r.object) + "," + std::to_string(r.grasp) + "," + r.strategy + "," + std::to_string(r.steps) +
         "," + (r.success ? "1" : "0") + "," + fmt("%.9g", r.trueMargin) + "," + fmt("%.9g", r.muS) + "," +
         fmt("%.9g", r.sigmaS) + "," + std::to_string(r.failedSteps) + "," + fmt("%.9g", r.finalOrientation.alpha) +
         "," + fmt("%.9g", r.finalOrientation.beta) + "," + fmt("%.9g", r.finalOrientation.gamma) + "," +
         r.streamHash + "\n";
  }
  return s;
}

std::vector<EpisodeRow> parse_episodes_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line) || line.rfind("object,grasp,strategy,steps,success", 0) != 0)
    throw Error(ErrorCode::Configuration, "episodes.csv: missing or unexpected header");
  std::vector<EpisodeRow> rows;
  int lineNo = 1;
  while (std::getline(in, line)) {
    ++lineNo;
    if (line.empty()) continue;
    const auto f = split(line, ',');
    if (f.size() != 13) throw Error(ErrorCode::Configuration, "episodes.csv line " + std::to_string(lineNo) + ": expected 13 fields");
    try {
      EpisodeRow r;
      r.object = std::stoi(f[0]);
      r.grasp = std::stoi(f[1]);
      r.strategy = f[2];
      r.steps = std::stoi(f[3]);
      r.success = f[4] == "1";
      r.trueMargin = std::stod(f[5]);
      r.muS = std::stod(f[6]);
      r.sigmaS = std::stod(f[7]);
      r.failedSteps = std::stoi(f[8]);
      r.finalOrientation = {std::stod(f[9]), std::stod(f[10]), std::stod(f[11])};
      r.streamHash = f[12];
      rows.push_back(r);
    } catch (const std::logic_error&) {
      throw Error(ErrorCode::Configuration, "episodes.csv line " + std::to_string(lineNo) + ": malformed number");
    }
  }
  return rows;
}

nlohmann::json summary_json(const ExperimentReport& report, const ExperimentConfig& config) {
  nlohmann::json strategies = nlohmann::json::array();
  for (const auto& s : report.summary)
    strategies.push_back({{"strategy", s.strategy},
                          {"episodes", s.episodes},
                          {"medianSteps", s.medianSteps},
                          {"q25Steps", s.q25Steps},
                          {"q75Steps", s.q75Steps},
                          {"meanSteps", s.meanSteps},
                          {"successRate", s.successRate}});
  nlohmann::json tests = nlohmann::json::array();
  for (const auto& c : report.pairedTests) {
    nlohmann::json t{{"a", c.a}, {"b", c.b}};
    if (c.test) {
      t["t"] = c.test->t;
      t["p"] = c.test->p;
      t["dof"] = c.test->dof;
      t["meanDiff"] = c.test->meanDiff;
    } else {
      t["p"] = nullptr;
      t["note"] = "step differences have zero variance";
    }
    tests.push_back(t);
  }
  return {{"config", to_json(config)},
          {"episodes", report.rows.size()},
          {"strategies", strategies},
          {"pairedTests", tests},
          {"successTarget", 0.9},
          {"successTargetNote", "desk-scale suite; a smaller object set than the full benchmark, so the "
                                "success target is relaxed to 0.9"}};
}

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::Io, "cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  if (in.bad()) throw Error(ErrorCode::Io, "read failed for " + path.string());
  return ss.str();
}

void write_file_atomic(const fs::path& path, const std::string& text) {
  fs::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorCode::Io, "cannot open " + tmp.string() + " for writing");
    out << text;
    out.flush();
    if (!out) throw Error(ErrorCode::Io, "write failed for " + tmp.string());
  }
  std::error_code ec;
  fs::rename(tmp, path, ec);
  if (ec) {
    fs::remove(tmp, ec);
    throw Error(ErrorCode::Io, "cannot move " + tmp.string() + " to " + path.string());
  }
}

void write_report(const ExperimentReport& report, const ExperimentConfig& config, const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw Error(ErrorCode::Io, "cannot create " + dir.string() + ": " + ec.message());
  std::string steps;
  for (const auto& line : report.stepLog) steps += line + "\n";
  std::string scores = std::string("object,grasp,strategy,") + kScoreCsvHeader + "\n";
  for (const auto& r : report.rows)
    scores += std::to_string(r.object) + "," + std::to_string(r.grasp) + "," + r.strategy + "," +
              score_csv_row(r.finalOrientation, -1, {r.muS, r.sigmaS, 0}) + "\n";
  write_file_atomic(dir / "episodes.csv", episodes_csv(report.rows));
  write_file_atomic(dir / "steps.jsonl", steps);
  write_file_atomic(dir / "scores.csv", scores);
  write_file_atomic(dir / "summary.json", summary_json(report, config).dump(2) + "\n");
}

ExperimentReport run_experiment(const ExperimentConfig& config, const ProgressFn& progress) {
  config.validate();
  const auto strategies = config.resolved_strategies();
  const int nCells = config.nObjects * config.graspsPerObject;
  const int nStrategies = static_cast<int>(strategies.size());
  const int nJobs = nCells * nStrategies;

  fs::path partial;
  std::ofstream partialOut;
  if (!config.outputPath.empty()) {
    std::error_code ec;
    fs::create_directories(config.outputPath, ec);
    if (ec) throw Error(ErrorCode::Io, "cannot create " + config.outputPath + ": " + ec.message());
    partial = fs::path(config.outputPath) / "episodes.csv.partial";
    partialOut.open(partial, std::ios::binary | std::ios::trunc);
    if (!partialOut) throw Error(ErrorCode::Io, "cannot open " + partial.string());
    partialOut << episodes_csv({});
  }

  std::vector<BenchCell> cells(static_cast<std::size_t>(nCells));
  for (int o = 0; o < config.nObjects; ++o)
    for (int g = 0; g < config.graspsPerObject; ++g)
      cells[static_cast<std::size_t>(o * config.graspsPerObject + g)] = make_cell(config, o, g);

  std::vector<EpisodeRow> rows(static_cast<std::size_t>(nJobs));
  std::vector<std::vector<std::string>> logs(static_cast<std::size_t>(nJobs));
  std::atomic<int> next{0};
  std::mutex mu;
  std::exception_ptr failure;

  auto worker = [&] {
    for (;;) {
      const int job = next.fetch_add(1);
      if (job >= nJobs) return;
      {
        std::lock_guard<std::mutex> lock(mu);
        if (failure) return;
      }
      try {
        const BenchCell& cell = cells[static_cast<std::size_t>(job / nStrategies)];
        const StrategyConfig& strategy = strategies[static_cast<std::size_t>(job % nStrategies)];
        const SolidObject hand = cell.base.rotated(cell.grasp_rotation);
        const EpisodeResult ep =
            run_episode(hand, cell.hole, strategy, cell.noise, cell.strategySeed, config.pipeline);
        EpisodeRow row{cell.object, cell.grasp, strategy.label(), ep.steps,          ep.success,
                       ep.trueMargin, ep.finalScore.meanS, ep.finalScore.stdS, ep.failedSteps, ep.finalOrientation,
                       cell.streamHash};
        std::vector<std::string> lines;
        for (const auto& s : ep.log) {
          nlohmann::json j = to_json(s);
          j["object"] = cell.object;
          j["grasp"] = cell.grasp;
          lines.push_back(j.dump());
        }
        std::lock_guard<std::mutex> lock(mu);
        rows[static_cast<std::size_t>(job)] = row;
        logs[static_cast<std::size_t>(job)] = std::move(lines);
        if (partialOut.is_open()) {
          partialOut << episodes_csv({row}).substr(episodes_csv({}).size());
          partialOut.flush();
        }
        if (progress) progress(row);
      } catch (...) {
        std::lock_guard<std::mutex> lock(mu);
        if (!failure) failure = std::current_exception();
        return;
      }
    }
  };

  int nThreads = config.threads == 0 ? static_cast<int>(std::max(1U, std::thread::hardware_concurrency()))
                                     : config.threads;
  nThreads = std::clamp(nThreads, 1, std::max(1, nJobs));
  if (nThreads == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int t = 0; t < nThreads; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  if (failure) std::rethrow_exception(failure);

  ExperimentReport report;
  report.rows = std::move(rows);
  for (auto& l : logs)
    for (auto& line : l) report.stepLog.push_back(std::move(line));
  std::vector<std::string> order;
  for (const auto& s : strategies) order.push_back(s.label());
  report.summary = summarize(report.rows, order);
  report.pairedTests = paired_comparisons(report.rows, order);

  if (!config.outputPath.empty()) {
    partialOut.close();
    write_report(report, config, config.outputPath);
    std::error_code ec;
    fs::remove(partial, ec);
  }
  return report;
}

const char* to_string(SweepTarget t) {
  return t == SweepTarget::DepthImage ? "depthImage" : "reconstructedModel";
}

SweepTarget sweep_target_from_string(const std::string& s) {
  if (s == "depth" || s == "depthImage") return SweepTarget::DepthImage;
  if (s == "model" || s == "point" || s == "reconstructedModel") return SweepTarget::ReconstructedModel;
  throw Error(ErrorCode::Configuration, "unknown sweep target '" + s + "'");
}

std::vector<SweepRow> noise_sweep(const ExperimentConfig& config, const std::vector<double>& sigmas,
                                  SweepTarget target, const ProgressFn& progress) {
  if (sigmas.empty()) throw Error(ErrorCode::InvalidArgument, "noise_sweep: no sigmas given");
  for (std::size_t i = 0; i < sigmas.size(); ++i) {
    if (!(sigmas[i] >= 0.0)) throw Error(ErrorCode::InvalidArgument, "noise_sweep: sigmas must be non-negative");
    if (i > 0 && sigmas[i] < sigmas[i - 1])
      throw Error(ErrorCode::InvalidArgument, "noise_sweep: sigmas must be sorted ascending");
  }
  std::vector<SweepRow> out;
  for (double sigma : sigmas) {
    ExperimentConfig c = config;
    c.outputPath.clear();
    if (target == SweepTarget::DepthImage)
      c.noise.depthSigma = sigma;
    else
      c.noise.pointSigma = sigma;
    const ExperimentReport r = run_experiment(c, progress);
    for (const auto& s : r.summary) out.push_back({sigma, s.strategy, s.successRate, s.medianSteps, s.episodes});
  }
  return out;
}

std::string sweep_csv(const std::vector<SweepRow>& rows) {
  std::string s = "sigma,strategy,successRate,medianSteps,episodes\n";
  for (const auto& r : rows)
    s += fmt("%.9g", r.sigma) + "," + r.strategy + "," + fmt("%.9g", r.successRate) + "," +
         fmt("%.9g", r.medianSteps) + "," + std::to_string(r.episodes) + "\n";
  return s;
}

std::string boxplot_csv(const std::vector<StrategySummary>& summary) {
  std::string s = "strategy,q25,median,q75\n";
  for (const auto& r : summary)
    s += r.strategy + "," + fmt("%.9g", r.q25Steps) + "," + fmt("%.9g", r.medianSteps) + "," +
         fmt("%.9g", r.q75Steps) + "\n";
  return s;
}

std::string boxplot_svg(const std::vector<StrategySummary>& summary, const std::vector<EpisodeRow>& rows) {
  const double width = 120.0 * static_cast<double>(summary.size()) + 80.0;
  const double top = 20.0, height = 240.0;
  double maxSteps = 1.0;
  for (const auto& r : rows) maxSteps = std::max(maxSteps, static_cast<double>(r.steps));
  auto y = [&](double v) { return top + height * (1.0 - v / maxSteps); };
  std::ostringstream svg;
  svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\"" << height + 60
      << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
  svg << "<line x1=\"50\" y1=\"" << top << "\" x2=\"50\" y2=\"" << top + height << "\" stroke=\"black\"/>\n";
  for (int t = 0; t <= static_cast<int>(maxSteps); ++t)
    svg << "<text x=\"44\" y=\"" << y(t) + 4 << "\" text-anchor=\"end\">" << t << "</text>\n";
  for (std::size_t i = 0; i < summary.size(); ++i) {
    const auto& s = summary[i];
    double lo = maxSteps, hi = 0.0;
    for (const auto& r : rows)
      if (r.strategy == s.strategy) {
        lo = std::min(lo, static_cast<double>(r.steps));
        hi = std::max(hi, static_cast<double>(r.steps));
      }
    const double cx = 110.0 + 120.0 * static_cast<double>(i);
    svg << "<line x1=\"" << cx << "\" y1=\"" << y(hi) << "\" x2=\"" << cx << "\" y2=\"" << y(lo)
        << "\" stroke=\"black\"/>\n";
    svg << "<rect x=\"" << cx - 30 << "\" y=\"" << y(s.q75Steps) << "\" width=\"60\" height=\""
        << std::max(1.0, y(s.q25Steps) - y(s.q75Steps)) << "\" fill=\"#9ecae1\" stroke=\"black\"/>\n";
    svg << "<line x1=\"" << cx - 30 << "\" y1=\"" << y(s.medianSteps) << "\" x2=\"" << cx + 30 << "\" y2=\""
        << y(s.medianSteps) << "\" stroke=\"#d62728\" stroke-width=\"2\"/>\n";
    svg << "<text x=\"" << cx << "\" y=\"" << top + height + 20 << "\" text-anchor=\"middle\">" << s.strategy
        << "</text>\n";
  }
  svg << "<text x=\"12\" y=\"" << top + height / 2 << "\" transform=\"rotate(-90 12 " << top + height / 2
      << ")\" text-anchor=\"middle\">exploration steps</text>\n</svg>\n";
  return svg.str();
}

std::vector<fs::path> emit_plots(const ExperimentReport& report, const fs::path& dir,
                                 const std::optional<std::vector<std::string>>& strategies) {
  std::vector<StrategySummary> selected;
  for (const auto& s : report.summary)
    if (!strategies || std::find(strategies->begin(), strategies->end(), s.strategy) != strategies->end())
      selected.push_back(s);
  if (selected.empty()) return {};
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw Error(ErrorCode::Io, "cannot create " + dir.string() + ": " + ec.message());
  const std::vector<fs::path> files{dir / "boxplot.csv", dir / "boxplot.svg"};
  write_file_atomic(files[0], boxplot_csv(selected));
  write_file_atomic(files[1], boxplot_svg(selected, report.rows));
  return files;
}

}  // namespace esim
