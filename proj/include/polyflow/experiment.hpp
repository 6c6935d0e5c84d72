// Config-driven pipeline: round -> sample -> normalize -> train -> evaluate ->
// emit. Every stage draws from named substreams of the config seed.

#ifndef POLYFLOW_EXPERIMENT_HPP
#define POLYFLOW_EXPERIMENT_HPP

#include "polyflow/example_model.hpp"
#include "polyflow/io.hpp"

#include <chrono>
#include <functional>
#include <map>
#include <ostream>

#ifndef POLYFLOW_VERSION
#define POLYFLOW_VERSION "0.1.0"
#endif

namespace polyflow {

class StageError : public Error {
 public:
  StageError(const std::string& stage, const std::string& what) : Error("[" + stage + "] " + what), stage_(stage) {}
  const std::string& stage() const { return stage_; }

 private:
  std::string stage_;
};

template <class F>
auto run_stage(const std::string& stage, F&& f) -> decltype(f()) {
  try {
    return f();
  } catch (const StageError&) {
    throw;
  } catch (const std::exception& e) {
    throw StageError(stage, e.what());
  }
}

struct TargetConfig {
  std::string kind = "polytope_mixture";  // polytope_mixture | hypercube_mixture | mixture | uniform
  double distance = 1.015;
  double variance = 0.05;
  json mixture;  // explicit weights/means/covariances for kind "mixture"
};

struct FlowsConfig {
  std::vector<FlowKind> manifolds{FlowKind::Euclidean, FlowKind::Ball, FlowKind::Aitchison};
  TrainConfig train;
  Index n_train = 48000;
};

struct EvalConfig {
  Index n_samples = 4096;
  Index kde_grid = 64;
  Index kde_max_samples = 4096;
};

struct ExperimentConfig {
  std::string name = "experiment";
  std::uint64_t seed = 0;
  json model = "example";
  EmbeddingKind embedding = EmbeddingKind::RREF;
  TargetConfig target;
  SamplerConfig mcmc;
  Index volume_samples = 200000;
  Index normalizer_samples = 125000;
  FlowsConfig flows;
  EvalConfig eval;
  std::filesystem::path base_dir;  // relative model paths resolve against this
};

inline DivergenceMode parse_divergence(const std::string& s) {
  if (s == "exact") return DivergenceMode::exact();
  const std::string prefix = "hutchinson:";
  if (s.rfind(prefix, 0) == 0) {
    int n = 0;
    try {
      n = std::stoi(s.substr(prefix.size()));
    } catch (const std::exception&) {
      n = 0;
    }
    if (n >= 1) return DivergenceMode::hutchinson(n);
  }
  throw DomainError("divergence must be 'exact' or 'hutchinson:N' with N >= 1, got '" + s + "'");
}

inline std::string to_string(const DivergenceMode& d) {
  return d.is_exact() ? "exact" : "hutchinson:" + std::to_string(d.probes);
}

inline KernelKind parse_kernel(const std::string& s) {
  if (s == "peskun") return KernelKind::Peskun;
  if (s == "barker") return KernelKind::Barker;
  throw DomainError("kernel must be 'peskun' or 'barker', got '" + s + "'");
}

inline ExperimentConfig config_from_json(const json& j, const std::filesystem::path& base_dir = {}) {
  ExperimentConfig c;
  c.base_dir = base_dir;
  c.name = j.value("name", c.name);
  c.seed = j.value("seed", c.seed);
  if (j.contains("model")) c.model = j.at("model");
  c.embedding = j.value("embedding", std::string("rref")) == "svd" ? EmbeddingKind::SVD : EmbeddingKind::RREF;

  if (j.contains("target")) {
    const json& t = j.at("target");
    c.target.kind = t.value("kind", c.target.kind);
    c.target.distance = t.value("distance", c.target.distance);
    c.target.variance = t.value("variance", c.target.variance);
    if (c.target.kind == "mixture") c.target.mixture = t;
  }

  c.mcmc.M = 3;
  c.mcmc.thin = 15;
  c.mcmc.n_samples = 6000;
  if (j.contains("mcmc")) {
    const json& m = j.at("mcmc");
    c.mcmc.n_chains = m.value("n_chains", c.mcmc.n_chains);
    c.mcmc.n_samples = m.value("n_samples", c.mcmc.n_samples);
    c.mcmc.M = m.value("M", c.mcmc.M);
    c.mcmc.burn_in = m.value("burn_in", c.mcmc.burn_in);
    c.mcmc.thin = m.value("thin", c.mcmc.thin);
    c.mcmc.kernel = parse_kernel(m.value("kernel", std::string("peskun")));
    c.mcmc.parallel = m.value("parallel", true);
    const std::string prop = m.value("proposal", std::string("uniform"));
    if (prop == "truncated_normal") {
      c.mcmc.proposal.kind = ProposalKind::TruncatedNormal;
      c.mcmc.proposal.Sigma = Matrix();  // filled from the polytope dimension below
      if (m.contains("proposal_sigma")) c.mcmc.proposal.Sigma = matrix_from_rows(m.at("proposal_sigma"));
    } else if (prop != "uniform") {
      throw DomainError("proposal must be 'uniform' or 'truncated_normal', got '" + prop + "'");
    }
  }

  if (j.contains("volume")) c.volume_samples = j.at("volume").value("n", c.volume_samples);
  if (j.contains("normalizer")) c.normalizer_samples = j.at("normalizer").value("n_uniform", c.normalizer_samples);

  if (j.contains("flows")) {
    const json& f = j.at("flows");
    if (f.contains("manifolds")) {
      c.flows.manifolds.clear();
      for (const auto& m : f.at("manifolds")) c.flows.manifolds.push_back(parse_flow_kind(m.get<std::string>()));
    }
    TrainConfig& t = c.flows.train;
    t.epochs = f.value("epochs", t.epochs);
    t.lr = f.value("lr", t.lr);
    t.batch_size = f.value("batch_size", t.batch_size);
    t.step_size = f.value("step_size", t.step_size);
    t.hidden = f.value("hidden", t.hidden);
    t.max_steps = f.value("max_steps", t.max_steps);
    t.project_euclidean = f.value("project_euclidean", t.project_euclidean);
    t.divergence = parse_divergence(f.value("divergence", std::string("exact")));
    c.flows.n_train = f.value("n_train", c.flows.n_train);
  }
  if (j.contains("eval")) {
    const json& e = j.at("eval");
    c.eval.n_samples = e.value("n_samples", c.eval.n_samples);
    c.eval.kde_grid = e.value("kde_grid", c.eval.kde_grid);
    c.eval.kde_max_samples = e.value("kde_max_samples", c.eval.kde_max_samples);
  }
  require(c.flows.n_train >= 1 && c.eval.n_samples >= 2, "config: n_train and eval.n_samples must be positive");
  require(c.volume_samples >= 1 && c.normalizer_samples >= 1, "config: volume and normalizer sample counts must be positive");
  return c;
}

inline ExperimentConfig load_config(const std::filesystem::path& path) {
  return config_from_json(read_json(path), path.parent_path());
}

inline json to_json(const ExperimentConfig& c) {
  json manifolds = json::array();
  for (FlowKind k : c.flows.manifolds) manifolds.push_back(to_string(k));
  json target = {{"kind", c.target.kind}, {"distance", c.target.distance}, {"variance", c.target.variance}};
  if (c.target.kind == "mixture") target = c.target.mixture;
  return {{"name", c.name},
          {"seed", c.seed},
          {"model", c.model},
          {"embedding", to_string(c.embedding)},
          {"target", target},
          {"mcmc",
           {{"n_chains", c.mcmc.n_chains},
            {"n_samples", c.mcmc.n_samples},
            {"M", c.mcmc.M},
            {"burn_in", c.mcmc.burn_in},
            {"thin", c.mcmc.thin},
            {"kernel", to_string(c.mcmc.kernel)},
            {"proposal", to_string(c.mcmc.proposal.kind)}}},
          {"volume", {{"n", c.volume_samples}}},
          {"normalizer", {{"n_uniform", c.normalizer_samples}}},
          {"flows",
           {{"manifolds", manifolds},
            {"epochs", c.flows.train.epochs},
            {"lr", c.flows.train.lr},
            {"batch_size", c.flows.train.batch_size},
            {"step_size", c.flows.train.step_size},
            {"hidden", c.flows.train.hidden},
            {"max_steps", c.flows.train.max_steps},
            {"project_euclidean", c.flows.train.project_euclidean},
            {"divergence", to_string(c.flows.train.divergence)},
            {"n_train", c.flows.n_train}}},
          {"eval",
           {{"n_samples", c.eval.n_samples}, {"kde_grid", c.eval.kde_grid}, {"kde_max_samples", c.eval.kde_max_samples}}}};
}

// ---------------------------------------------------------------------------
// Stages

/// "example", {"file": path}, {"box": [[lo, hi], ...]} or an inline model.
inline CanonicalModel resolve_model(const json& spec, const std::filesystem::path& base_dir = {}) {
  if (spec.is_string()) {
    const std::string s = spec.get<std::string>();
    if (s == "example") return build_example_model();
    std::filesystem::path p(s);
    if (p.is_relative() && !base_dir.empty() && !std::filesystem::exists(p)) p = base_dir / p;
    return model_from_json(read_json(p));
  }
  if (spec.contains("file")) return resolve_model(spec.at("file"), base_dir);
  if (spec.contains("box")) {
    CanonicalModel m;
    std::vector<std::pair<double, double>> bounds;
    for (const auto& b : spec.at("box")) bounds.emplace_back(b.at(0).get<double>(), b.at(1).get<double>());
    for (std::size_t i = 0; i < bounds.size(); ++i) m.variable_names.push_back("x" + std::to_string(i));
    const Index R = static_cast<Index>(bounds.size());
    m.S.resize(0, R);
    m.h.resize(0);
    m.A_c.resize(0, R);
    m.b_c.resize(0);
    m.add_bounds(bounds);
    m.validate();
    return m;
  }
  return model_from_json(spec);
}

inline TransformChain round_stage(const ExperimentConfig& cfg) {
  return run_stage("round", [&] {
    RoundingOptions opt;
    opt.embedding = cfg.embedding;
    TransformChain chain = round_model(resolve_model(cfg.model, cfg.base_dir), opt);
    return chain;
  });
}

/// Target in rounded coordinates. Mixture parameters are given in these
/// coordinates too.
inline LogDensity make_target(const TargetConfig& t, Index K) {
  if (t.kind == "uniform") return [](const Vector&) { return 0.0; };
  MixtureOfGaussians mog;
  if (t.kind == "polytope_mixture") mog = polytope_mixture(K, t.distance, t.variance);
  else if (t.kind == "hypercube_mixture") mog = hypercube_mixture(K, t.distance, t.variance);
  else if (t.kind == "mixture") mog = mixture_from_json(t.mixture, K);
  else throw DomainError("unknown target kind '" + t.kind + "'");
  return [mog](const Vector& v) { return mog.logpdf(v); };
}

inline SamplerConfig sampler_config(const ExperimentConfig& cfg, Index K) {
  SamplerConfig s = cfg.mcmc;
  s.seed = RandomStream(cfg.seed).substream("target")();
  if (s.proposal.kind == ProposalKind::TruncatedNormal && s.proposal.Sigma.size() == 0) s.proposal.Sigma = Matrix::Identity(K, K);
  return s;
}

inline SamplerResult sample_stage(const ExperimentConfig& cfg, const TransformChain& chain) {
  return run_stage("sample", [&] {
    const Index K = chain.dim();
    return run_chains(chain.john, make_target(cfg.target, K), sampler_config(cfg, K));
  });
}

struct Normalizer {
  VolumeEstimate volume;
  double Z = 0.0;
  double log_Z = 0.0;
};

inline Normalizer normalizer_stage(const ExperimentConfig& cfg, const TransformChain& chain) {
  return run_stage("normalize", [&] {
    RandomStream root = RandomStream(cfg.seed).substream("normalizer");
    Normalizer n;
    n.volume = estimate_volume(chain.john, cfg.volume_samples, root.substream("volume"));
    const Matrix U = uniform_polytope_samples(chain.john, cfg.normalizer_samples, root.substream("uniform")());
    n.Z = estimate_Z(make_target(cfg.target, chain.dim()), n.volume.volume, U);
    n.log_Z = std::log(n.Z);
    return n;
  });
}

/// First n target samples, interleaved across chains so that a prefix covers every chain.
inline Matrix training_set(const SamplerResult& mcmc, Index n) {
  const Index C = static_cast<Index>(mcmc.chains.size());
  require(C >= 1, "training_set: no chains");
  const Index per = mcmc.chains.front().cols();
  n = std::min(n, C * per);
  Matrix X(mcmc.chains.front().rows(), n);
  for (Index j = 0; j < n; ++j) X.col(j) = mcmc.chains[static_cast<std::size_t>(j % C)].col(j / C);
  return X;
}

inline TrainedFlow train_stage(const ExperimentConfig& cfg, const TransformChain& chain, const Matrix& X, FlowKind kind,
                               const Normalizer& norm, std::ostream* log = nullptr) {
  return run_stage(std::string("train:") + to_string(kind), [&] {
    TrainConfig t = cfg.flows.train;
    t.seed = RandomStream(cfg.seed).substream("train").substream(to_string(kind))();
    std::optional<VPolytope> vertices;
    if (kind == FlowKind::Aitchison) vertices = VPolytope(enumerate_vertices(chain.john));
    auto on_epoch = [&](int epoch, double loss) {
      if (log) *log << "  " << to_string(kind) << " epoch " << epoch + 1 << "/" << t.epochs << " loss " << loss << std::endl;
    };
    return train_flow(kind, chain.john, X, t, std::log(norm.volume.volume), vertices ? &*vertices : nullptr, on_epoch);
  });
}

struct FlowEvaluation {
  MetricsReport metrics;
  FlowSamples samples;
};

inline FlowEvaluation eval_stage(const ExperimentConfig& cfg, const TrainedFlow& flow, const Normalizer& norm) {
  return run_stage(std::string("eval:") + to_string(flow.kind), [&] {
    RandomStream rng = RandomStream(cfg.seed).substream("eval").substream(to_string(flow.kind));
    FlowEvaluation e;
    e.samples = sample_with_log_density(flow, cfg.eval.n_samples, rng);
    const LogDensity target = make_target(cfg.target, flow.dim());
    Vector logp(e.samples.v.cols());
    for (Index j = 0; j < logp.size(); ++j) logp(j) = target(e.samples.v.col(j));
    e.metrics = flow_metrics(e.samples.v, e.samples.logq, logp, norm.Z, flow.polytope);
    e.metrics.seed = cfg.seed;
    return e;
  });
}

inline std::vector<DensityGrid> marginal_grids(const Matrix& V, Index grid, Index max_samples) {
  const Matrix X = V.leftCols(std::min(V.cols(), max_samples));
  std::vector<DensityGrid> out;
  if (X.cols() < 2) return out;
  for (Index i = 0; i < X.rows(); ++i)
    for (Index j = i + 1; j < X.rows(); ++j) out.push_back(kde_grid_2d(X, i, j, grid));
  return out;
}

inline Matrix inside_columns(const FlowSamples& s) {
  std::vector<Index> keep;
  for (Index j = 0; j < s.v.cols(); ++j)
    if (s.inside[static_cast<std::size_t>(j)]) keep.push_back(j);
  Matrix X(s.v.rows(), static_cast<Index>(keep.size()));
  for (std::size_t k = 0; k < keep.size(); ++k) X.col(static_cast<Index>(k)) = s.v.col(keep[k]);
  return X;
}

// ---------------------------------------------------------------------------
// Full pipeline

struct ExperimentResult {
  TransformChain chain;
  SamplerResult mcmc;
  Normalizer normalizer;
  std::map<std::string, TrainedFlow> flows;
  std::map<std::string, MetricsReport> metrics;
};

inline json manifest_json(const ExperimentConfig& cfg) {
  return {{"name", cfg.name},
          {"seed", cfg.seed},
          {"substreams",
           {"target", "normalizer/volume", "normalizer/uniform", "train/<manifold>", "eval/<manifold>"}},
          {"versions",
           {{"polyflow", POLYFLOW_VERSION},
            {"eigen", std::to_string(EIGEN_WORLD_VERSION) + "." + std::to_string(EIGEN_MAJOR_VERSION) + "." +
                          std::to_string(EIGEN_MINOR_VERSION)},
            {"boost", std::to_string(BOOST_VERSION / 100000) + "." + std::to_string(BOOST_VERSION / 100 % 1000) + "." +
                          std::to_string(BOOST_VERSION % 100)},
            {"nlohmann_json", std::to_string(NLOHMANN_JSON_VERSION_MAJOR) + "." +
                                  std::to_string(NLOHMANN_JSON_VERSION_MINOR) + "." +
                                  std::to_string(NLOHMANN_JSON_VERSION_PATCH)},
            {"compiler", __VERSION__}}},
          {"config", to_json(cfg)},
          {"outputs",
           {"transform_chain.json", "samples.csv", "chain_diagnostics.json", "metrics.json", "density_grid.csv",
            "flow_checkpoint.json"}}};
}

/// Runs every stage and writes the artifacts into out_dir.
inline ExperimentResult run_experiment(const ExperimentConfig& cfg, const std::filesystem::path& out_dir,
                                       std::ostream* log = nullptr) {
  using clock = std::chrono::steady_clock;
  auto say = [&](const std::string& s) {
    if (log) *log << s << std::endl;
  };
  std::filesystem::create_directories(out_dir);
  ExperimentResult res;
  json timings = json::object();
  auto timed = [&](const std::string& name, auto&& f) {
    const auto t0 = clock::now();
    f();
    timings[name] = std::chrono::duration<double>(clock::now() - t0).count();
  };

  timed("round", [&] { res.chain = round_stage(cfg); });
  const std::vector<std::string> names = res.chain.rounded_names();
  say("round: K = " + std::to_string(res.chain.dim()) + ", inscribed radius " + format_double(res.chain.inscribed_radius()));
  write_json(out_dir / "transform_chain.json", to_json(res.chain));

  timed("sample", [&] { res.mcmc = sample_stage(cfg, res.chain); });
  say("sample: " + std::to_string(res.mcmc.samples().cols()) + " draws");
  std::string samples = samples_csv_header(names) + samples_csv_rows(res.mcmc.samples(), "mcmc");
  json diag = {{"per_dimension", to_json(res.mcmc.diagnostics, names)}, {"acceptance", res.mcmc.acceptance}};
  write_json(out_dir / "chain_diagnostics.json", diag);

  timed("normalize", [&] { res.normalizer = normalizer_stage(cfg, res.chain); });
  say("normalize: volume " + format_double(res.normalizer.volume.volume) + ", Z " + format_double(res.normalizer.Z));

  std::string grids = kDensityGridHeader;
  grids += density_grid_rows(marginal_grids(res.mcmc.samples(), cfg.eval.kde_grid, cfg.eval.kde_max_samples), names, "mcmc");

  json checkpoints = json::object();
  json flow_metrics_json = json::object();
  const Matrix X = training_set(res.mcmc, cfg.flows.n_train);
  for (FlowKind kind : cfg.flows.manifolds) {
    const std::string k = to_string(kind);
    say("train: " + k);
    timed("train:" + k, [&] { res.flows[k] = train_stage(cfg, res.chain, X, kind, res.normalizer, log); });
    FlowEvaluation ev;
    timed("eval:" + k, [&] { ev = eval_stage(cfg, res.flows[k], res.normalizer); });
    res.metrics[k] = ev.metrics;
    say("eval: " + k + " KL " + format_double(ev.metrics.kl_nats) + " ESS% " + format_double(ev.metrics.ess_pct) +
        " outside% " + format_double(ev.metrics.outside_pct));
    checkpoints[k] = to_json(res.flows[k]);
    flow_metrics_json[k] = to_json(ev.metrics);
    samples += samples_csv_rows(ev.samples.v, k);
    grids += density_grid_rows(marginal_grids(inside_columns(ev.samples), cfg.eval.kde_grid, cfg.eval.kde_max_samples),
                               names, k);
  }

  write_file(out_dir / "samples.csv", samples);
  write_file(out_dir / "density_grid.csv", grids);
  write_json(out_dir / "flow_checkpoint.json", checkpoints);
  write_json(out_dir / "metrics.json", {{"volume", res.normalizer.volume.volume},
                                        {"volume_std_error", res.normalizer.volume.std_error},
                                        {"z", res.normalizer.Z},
                                        {"flows", flow_metrics_json}});
  json manifest = manifest_json(cfg);
  manifest["timings_s"] = timings;
  write_json(out_dir / "manifest.json", manifest);
  return res;
}

}  // namespace polyflow

#endif  // POLYFLOW_EXPERIMENT_HPP
