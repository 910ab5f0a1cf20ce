#include "esim/explore.hpp"

#include <algorithm>
#include <map>
#include <tuple>

namespace esim {

namespace {

enum SeedTag : std::uint64_t { kAcquireTag = 1, kRandomTag = 2, kBankTag = 3, kPointNoiseTag = 4 };

// Rotation taking the object-frame direction u onto the hole axis e_z,
// written as Ry(beta) Rx(alpha).
Orientation up_orientation(const Vec3& u) {
  const double rho = std::hypot(u.y(), u.z());
  return {std::atan2(u.y(), u.z()), std::atan2(-u.x(), rho), 0.0};
}

std::vector<Vec3> fibonacci_directions(int n) {
  std::vector<Vec3> out;
  out.reserve(n);
  const double golden = kPi * (3.0 - std::sqrt(5.0));
  for (int i = 0; i < n; ++i) {
    const double z = 1.0 - (2.0 * i + 1.0) / n;
    const double r = std::sqrt(std::max(0.0, 1.0 - z * z));
    const double t = golden * i;
    out.emplace_back(r * std::cos(t), r * std::sin(t), z);
  }
  return out;
}

// a beats b: larger value, then smaller sigma, then lower index.
bool better(double va, double sa, int ia, double vb, double sb, int ib) {
  if (va != vb) return va > vb;
  if (sa != sb) return sa < sb;
  return ia < ib;
}

int select_by(const std::vector<ScoreDistribution>& scores, const std::vector<double>& values) {
  if (scores.empty()) throw Error(ErrorCode::InvalidArgument, "selection over an empty candidate set");
  int best = 0;
  for (int i = 1; i < static_cast<int>(scores.size()); ++i)
    if (better(values[i], scores[i].stdS, i, values[best], scores[best].stdS, best)) best = i;
  return best;
}

std::shared_ptr<const PosteriorSampleBank> make_bank(const GPModel& model, const StrategyConfig& config,
                                                     std::uint64_t seed) {
  return std::make_shared<const PosteriorSampleBank>(model, config.bank, seed);
}

}  // namespace

const char* to_string(StrategyKind kind) {
  switch (kind) {
    case StrategyKind::Bo: return "bo";
    case StrategyKind::Random: return "random";
    case StrategyKind::ExploitOnly: return "exploitOnly";
    case StrategyKind::ExploreOnly: return "exploreOnly";
  }
  return "bo";
}

StrategyKind strategy_kind_from_string(const std::string& s) {
  if (s == "bo") return StrategyKind::Bo;
  if (s == "random") return StrategyKind::Random;
  if (s == "exploitOnly") return StrategyKind::ExploitOnly;
  if (s == "exploreOnly") return StrategyKind::ExploreOnly;
  throw Error(ErrorCode::Configuration, "unknown strategy kind '" + s + "'");
}

void StrategyConfig::validate() const {
  if (lambda < 0) throw Error(ErrorCode::Configuration, "lambda must be non-negative");
  if (maxSteps < 1) throw Error(ErrorCode::Configuration, "maxSteps must be at least 1");
  if (sectionCount < 1) throw Error(ErrorCode::Configuration, "sectionCount must be positive");
  if (!(stopThreshold > 0)) throw Error(ErrorCode::Configuration, "stopThreshold must be positive");
  if (decisionKappa < 0) throw Error(ErrorCode::Configuration, "decisionKappa must be non-negative");
  if (upDirections < 1 || refineTop < 0 || phiPerSection < 1)
    throw Error(ErrorCode::Configuration, "bad orientation search settings");
  if (bank.samples < 100) throw Error(ErrorCode::Configuration, "acquisition needs at least 100 samples per score");
}

nlohmann::json to_json(const StrategyConfig& c) {
  nlohmann::json grid = nlohmann::json::array();
  for (const auto& q : c.orientationGrid) grid.push_back(to_json(q));
  return {{"kind", to_string(c.kind)},
          {"name", c.label()},
          {"lambda", c.lambda},
          {"sectionCount", c.sectionCount},
          {"maxSteps", c.maxSteps},
          {"stopThreshold", c.stopThreshold},
          {"decisionKappa", c.decisionKappa},
          {"orientationGrid", grid},
          {"upDirections", c.upDirections},
          {"refineTop", c.refineTop},
          {"phiPerSection", c.phiPerSection},
          {"bank", {{"thetaCount", c.bank.thetaCount}, {"phiCount", c.bank.phiCount}, {"samples", c.bank.samples}}}};
}

StrategyConfig strategy_config_from_json(const nlohmann::json& j) {
  StrategyConfig c;
  try {
    c.kind = strategy_kind_from_string(j.value("kind", std::string("bo")));
    c.name = j.value("name", std::string());
    c.lambda = j.value("lambda", c.lambda);
    c.sectionCount = j.value("sectionCount", c.sectionCount);
    c.maxSteps = j.value("maxSteps", c.maxSteps);
    c.stopThreshold = j.value("stopThreshold", c.stopThreshold);
    c.decisionKappa = j.value("decisionKappa", c.decisionKappa);
    if (j.contains("orientationGrid"))
      for (const auto& q : j.at("orientationGrid")) c.orientationGrid.push_back(orientation_from_json(q));
    c.upDirections = j.value("upDirections", c.upDirections);
    c.refineTop = j.value("refineTop", c.refineTop);
    c.phiPerSection = j.value("phiPerSection", c.phiPerSection);
    if (j.contains("bank")) {
      const auto& b = j.at("bank");
      c.bank.thetaCount = b.value("thetaCount", c.bank.thetaCount);
      c.bank.phiCount = b.value("phiCount", c.bank.phiCount);
      c.bank.samples = b.value("samples", c.bank.samples);
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::Configuration, std::string("strategy json: ") + e.what());
  }
  c.validate();
  return c;
}

int select_ucb(const std::vector<ScoreDistribution>& scores, double lambda) {
  std::vector<double> v;
  for (const auto& s : scores) v.push_back(s.meanS + lambda * s.stdS);
  return select_by(scores, v);
}

int select_ucb_section(const std::vector<ScoreDistribution>& scores, double lambda) {
  std::vector<double> v;
  for (const auto& s : scores) v.push_back(-s.meanS + lambda * s.stdS);
  return select_by(scores, v);
}

int select_max_sigma(const std::vector<ScoreDistribution>& scores) {
  if (scores.empty()) throw Error(ErrorCode::InvalidArgument, "selection over an empty candidate set");
  int best = 0;
  for (int i = 1; i < static_cast<int>(scores.size()); ++i)
    if (scores[i].stdS > scores[best].stdS) best = i;
  return best;
}

Acquirer::Acquirer(std::shared_ptr<const PosteriorSampleBank> bank, const HoleContour& hole,
                   const StrategyConfig& config)
    : config_(config), bank_(std::move(bank)), scorer_(*bank_, hole, config.sectionCount, config.phiPerSection) {}

ScoreDistribution Acquirer::score(const Orientation& q, std::optional<int> section) const {
  return scorer_.score(scorer_.contours(q.matrix()), section);
}

std::vector<ScoreDistribution> Acquirer::section_scores(const Orientation& q) const {
  return scorer_.section_scores(scorer_.contours(q.matrix()));
}

Acquisition Acquirer::refine(const Mat3& start, double lambda, double value) {
  Mat3 R = start;
  ScoreDistribution s = scorer_.score(scorer_.contours(R));
  double v = value;
  for (double stepSize = config_.refineStart; stepSize >= config_.refineStop * (1 - 1e-12); stepSize *= 0.5) {
    bool improved = true;
    for (int guard = 0; improved && guard < 20; ++guard) {
      improved = false;
      for (int axis = 0; axis < 3 && !improved; ++axis)
        for (double sign : {1.0, -1.0}) {
          const Mat3 Rn = exp_so3(sign * stepSize * Vec3::Unit(axis)) * R;
          const ScoreDistribution sn = scorer_.score(scorer_.contours(Rn));
          const double vn = ucb(sn, lambda);
          if (vn > v) {
            R = Rn;
            s = sn;
            v = vn;
            improved = true;
            break;
          }
        }
    }
  }
  return {Orientation::from_matrix(R), s, v, -1};
}

Acquisition Acquirer::best_orientation(double lambda) {
  if (!config_.orientationGrid.empty()) {
    std::vector<ScoreDistribution> scores;
    std::vector<double> values;
    for (const auto& q : config_.orientationGrid) {
      scores.push_back(scorer_.score(scorer_.contours(q.matrix())));
      values.push_back(ucb(scores.back(), lambda));
    }
    const int i = select_by(scores, values);
    return {config_.orientationGrid[i], scores[i], values[i], i};
  }

  struct Candidate {
    double value;
    ScoreDistribution score;
    int index;
    Mat3 R;
  };
  const int M = scorer_.contourSize();
  std::vector<Candidate> cands;
  const auto dirs = fibonacci_directions(config_.upDirections);
  for (int u = 0; u < static_cast<int>(dirs.size()); ++u) {
    const Mat3 R0 = up_orientation(dirs[u]).matrix();
    const auto spins = scorer_.spin_scores(scorer_.contours(R0));
    for (int sp = 0; sp < M; ++sp)
      cands.push_back({ucb(spins[sp], lambda), spins[sp], u * M + sp, rot_z(2.0 * kPi * sp / M) * R0});
  }
  std::sort(cands.begin(), cands.end(), [](const Candidate& a, const Candidate& b) {
    return better(a.value, a.score.stdS, a.index, b.value, b.score.stdS, b.index);
  });
  Acquisition best{Orientation::from_matrix(cands[0].R), cands[0].score, cands[0].value, -1};
  int bestRank = 0;
  for (int k = 0; k < std::min<int>(config_.refineTop, static_cast<int>(cands.size())); ++k) {
    Acquisition a = refine(cands[k].R, lambda, cands[k].value);
    if (better(a.value, a.score.stdS, k, best.value, best.score.stdS, bestRank)) {
      best = a;
      bestRank = k;
    }
  }
  return best;
}

int Acquirer::best_section(const Orientation& q, double lambda) {
  const auto scores = scorer_.section_scores(scorer_.contours(q.matrix()));
  meanQueries_ += static_cast<long>(scores.size());
  return select_ucb_section(scores, lambda);
}

std::pair<Orientation, int> Acquirer::most_uncertain() {
  std::vector<std::pair<Orientation, int>> keys;
  std::vector<ScoreDistribution> scores;
  auto consider = [&](const Orientation& q, const ScoreDistribution& s, int l) {
    // Only sigma enters the comparison.
    keys.emplace_back(q, l);
    scores.push_back(s);
  };
  if (!config_.orientationGrid.empty()) {
    for (const auto& q : config_.orientationGrid) {
      const auto c = scorer_.contours(q.matrix());
      for (int l = 0; l < scorer_.sectionCount(); ++l) consider(q, scorer_.score(c, l), l);
    }
  } else {
    const int M = scorer_.contourSize();
    const int stride = std::max(1, M / 24);
    const auto dirs = fibonacci_directions(config_.upDirections);
    for (const auto& u : dirs) {
      const Orientation q0 = up_orientation(u);
      const auto c = scorer_.contours(q0.matrix());
      for (int sp = 0; sp < M; sp += stride)
        for (int l = 0; l < scorer_.sectionCount(); ++l)
          consider({q0.alpha, q0.beta, wrap_angle(2.0 * kPi * sp / M)}, scorer_.score(c, l, sp), l);
    }
  }
  const int i = select_max_sigma(scores);
  return keys[i];
}

Acquisition acquire_orientation(const GPModel& model, const HoleContour& hole, const StrategyConfig& config,
                                std::uint64_t seed) {
  config.validate();
  Acquirer acq(make_bank(model, config, seed), hole, config);
  return acq.best_orientation(config.effective_lambda());
}

int acquire_section(const GPModel& model, const HoleContour& hole, const Orientation& orientation,
                    const StrategyConfig& config, std::uint64_t seed) {
  config.validate();
  Acquirer acq(make_bank(model, config, seed), hole, config);
  return acq.best_section(orientation, config.effective_lambda());
}

SectionChoice section_to_scan(const Orientation& orientation, int l, int P, double extentUp, double extentDown,
                              double clampFraction) {
  if (P < 1 || l < 0 || l >= P) throw Error(ErrorCode::InvalidArgument, "section index out of range");
  const double phiC = -kPi / 2 + (l + 0.5) * kPi / P;
  const Vec3 n = orientation.matrix().transpose() * Vec3::UnitZ();
  const double extent = phiC >= 0 ? extentUp : extentDown;
  double d = extent * std::sin(phiC);
  SectionChoice out;
  const double limit = clampFraction * std::min(extentUp, extentDown);
  if (std::abs(d) > limit) {
    d = std::copysign(limit, d);
    out.clamped = true;
  }
  out.spec = SectionSpec::from_normal(n, d, SectionSpec{}.bandHalfWidth);
  return out;
}

SectionChoice section_to_scan(const Orientation& orientation, int l, int P, const GPModel& model,
                              double clampFraction) {
  const Vec3 n = orientation.matrix().transpose() * Vec3::UnitZ();
  const std::vector<Direction> q{Direction::from_vector(n), Direction::from_vector(-n)};
  const Posterior post = gp_posterior(model, q);
  return section_to_scan(orientation, l, P, std::max(post.means[0], 1e-4), std::max(post.means[1], 1e-4),
                         clampFraction);
}

ThinnedPoints thin_points(const std::vector<SurfacePoint>& points, std::size_t maxPoints) {
  if (maxPoints < 1) throw Error(ErrorCode::InvalidArgument, "thin_points: maxPoints must be positive");
  if (points.size() <= maxPoints) return {points, std::vector<double>(points.size(), 1.0)};
  double bin = 0.5 * std::sqrt(4.0 * kPi / static_cast<double>(maxPoints));
  for (;;) {
    // cell -> (sum of positions, sample count)
    std::map<std::pair<long, long>, std::pair<Vec3, int>> cells;
    const long rows = static_cast<long>(std::ceil(kPi / bin));
    for (const auto& p : points) {
      const long i = std::min(rows - 1, static_cast<long>(std::floor((p.phi + kPi / 2) / bin)));
      const double phiC = -kPi / 2 + (i + 0.5) * bin;
      const long cols = std::max(1L, static_cast<long>(std::round(2.0 * kPi * std::cos(phiC) / bin)));
      const long j = std::min(cols - 1, static_cast<long>(std::floor((p.theta + kPi) / (2.0 * kPi) * cols)));
      auto& cell = cells.try_emplace({i, j}, Vec3::Zero(), 0).first->second;
      cell.first += p.position();
      ++cell.second;
    }
    if (cells.size() <= maxPoints) {
      // centroids stay on flat faces, unlike separately averaged radii and angles
      ThinnedPoints out;
      out.points.reserve(cells.size());
      for (const auto& [key, cell] : cells) {
        const Vec3 c = cell.first / cell.second;
        const Direction d = Direction::from_vector(c);
        out.points.push_back({d.theta, d.phi, c.norm()});
        out.counts.push_back(static_cast<double>(cell.second));
      }
      return out;
    }
    bin *= 1.15;
  }
}

nlohmann::json to_json(const StepLog& s) {
  nlohmann::json j{{"step", s.step},
                   {"strategy", s.strategy},
                   {"section", {{"zeta", s.section.zeta}, {"psi", s.section.psi}, {"d", s.section.d}}},
                   {"failed", s.failed},
                   {"clamped", s.clamped},
                   {"muS", s.muS},
                   {"sigmaS", s.sigmaS},
                   {"stop", s.stop}};
  j["chosenOrientation"] = s.chosenOrientation ? to_json(*s.chosenOrientation) : nlohmann::json(nullptr);
  j["chosenSection"] = s.chosenSection ? nlohmann::json(*s.chosenSection) : nlohmann::json(nullptr);
  return j;
}

void step(ExplorationState& state, const SolidObject& object, const HoleContour& hole, const StrategyConfig& config,
          const NoiseConfig& noise, std::uint64_t strategySeed, const PipelineOptions& pipeline) {
  config.validate();
  noise.validate();
  if (state.stepCount >= config.maxSteps) throw Error(ErrorCode::InvalidArgument, "step: episode already at maxSteps");
  const auto k = static_cast<std::uint64_t>(state.stepCount);
  StepLog log;
  log.step = state.stepCount + 1;
  log.strategy = config.label();

  SectionChoice choice;  // cold start: equatorial plane of the hand frame
  if (state.model) {
    if (!state.bank) state.bank = make_bank(*state.model, config, derive_seed(strategySeed, {k, kBankTag}));
    Acquirer acq(state.bank, hole, config);
    const int P = config.sectionCount;
    switch (config.kind) {
      case StrategyKind::Bo:
      case StrategyKind::ExploitOnly: {
        const double lambda = config.effective_lambda();
        const Acquisition a = acq.best_orientation(lambda);
        const int l = acq.best_section(a.orientation, lambda);
        log.chosenOrientation = a.orientation;
        log.chosenSection = l;
        choice = section_to_scan(a.orientation, l, P, *state.model, pipeline.clampFraction);
        break;
      }
      case StrategyKind::ExploreOnly: {
        const auto [q, l] = acq.most_uncertain();
        log.chosenOrientation = q;
        log.chosenSection = l;
        choice = section_to_scan(q, l, P, *state.model, pipeline.clampFraction);
        break;
      }
      case StrategyKind::Random: {
        Rng rng(derive_seed(strategySeed, {k, kRandomTag}));
        std::normal_distribution<double> gauss(0.0, 1.0);
        Vec3 n;
        do n = Vec3(gauss(rng), gauss(rng), gauss(rng));
        while (n.norm() < 1e-9);
        n.normalize();
        const std::vector<Direction> q{Direction::from_vector(n), Direction::from_vector(-n)};
        const Posterior post = gp_posterior(*state.model, q);
        const double extent = std::max(1e-4, std::min(post.means[0], post.means[1]));
        std::uniform_real_distribution<double> u(-pipeline.randomOffsetFraction, pipeline.randomOffsetFraction);
        choice.spec = SectionSpec::from_normal(n, u(rng) * extent, SectionSpec{}.bandHalfWidth);
        break;
      }
    }
    state.meanQueries += acq.meanQueries();
  }
  log.clamped = choice.clamped;

  NoiseConfig stepNoise = noise;
  stepNoise.seed = derive_seed(noise.seed, {k});
  std::vector<ScanPatch> patches;
  for (int attempt = 0; attempt < 2 && patches.empty(); ++attempt) {
    try {
      patches = scan_patch_sequence(object, choice.spec, stepNoise, pipeline.nPatches, pipeline.patches);
    } catch (const Error& e) {
      if (e.code() != ErrorCode::EmptyScan) throw;
      choice.spec.d *= 0.5;
    }
  }
  log.section = choice.spec;

  if (patches.empty()) {
    log.failed = true;
    ++state.failedSteps;
  } else {
    const SlamResult slam = run_section_slam(patches, stepNoise, pipeline.slam);
    auto pts = fuse_section(slam.patches, slam.poses, pipeline.fuse);
    if (noise.pointSigma > 0) {
      Rng rng(derive_seed(noise.seed, {k, kPointNoiseTag}));
      std::normal_distribution<double> gauss(0.0, noise.pointSigma);
      for (auto& p : pts) p.r = std::max(p.r + gauss(rng), 1e-4);
    }
    state.rawPoints.insert(state.rawPoints.end(), pts.begin(), pts.end());
    state.scannedSections.push_back(choice.spec);
    auto thinned = thin_points(state.rawPoints, pipeline.gpMaxPoints);
    state.fusedPoints = std::move(thinned.points);
    state.fusedCounts = std::move(thinned.counts);
    state.model = gp_fit(state.fusedPoints, pipeline.fit, state.fusedCounts);
    state.bank = make_bank(*state.model, config, derive_seed(strategySeed, {k + 1, kBankTag}));
    Acquirer acq(state.bank, hole, config);
    const Acquisition best = acq.best_orientation(-config.decisionKappa);
    state.bestOrientation = best.orientation;
    state.bestScore = best.score;
    state.hasScore = true;
  }
  ++state.stepCount;
  log.muS = state.bestScore.meanS;
  log.sigmaS = state.bestScore.stdS;
  log.stop = should_stop(state, config);
  state.log.push_back(log);
}

bool should_stop(const ExplorationState& state, const StrategyConfig& config) {
  if (state.stepCount >= config.maxSteps) return true;
  return state.hasScore && state.bestScore.meanS > 0.0 && 2.0 * state.bestScore.stdS < config.stopThreshold;
}

EpisodeResult run_episode(const SolidObject& object, const HoleContour& hole, const StrategyConfig& config,
                          const NoiseConfig& noise, std::uint64_t seed, const PipelineOptions& pipeline) {
  ExplorationState state;
  do step(state, object, hole, config, noise, seed, pipeline);
  while (!should_stop(state, config));
  EpisodeResult r;
  r.steps = state.stepCount;
  r.finalOrientation = state.bestOrientation;
  r.finalScore = state.bestScore;
  r.trueMargin = true_min_margin(object, state.bestOrientation, hole);
  r.success = r.trueMargin >= 0.0;
  r.failedSteps = state.failedSteps;
  r.meanQueries = state.meanQueries;
  r.log = std::move(state.log);
  return r;
}

}  // namespace esim
