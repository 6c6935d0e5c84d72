// polyflow command line: round, sample, train, eval, run.

#include "polyflow/polyflow.hpp"

#include "CLI11.hpp"

#include <iostream>

using namespace polyflow;
namespace fs = std::filesystem;

namespace {

struct Overrides {
  std::string config;
  std::vector<std::string> manifolds;
  int epochs = -1;
  double lr = -1.0;
  Index batch_size = -1;
  double step_size = -1.0;
  long long seed = -1;
  std::string divergence;
  Index n_train = -1;
  Index n_eval = -1;
  Index max_steps = -2;
};

void add_config_options(CLI::App* cmd, Overrides& o, bool training) {
  cmd->add_option("--config", o.config, "Experiment config JSON")->required()->check(CLI::ExistingFile);
  cmd->add_option("--seed", o.seed, "Override the config seed");
  if (!training) return;
  cmd->add_option("--manifold", o.manifolds, "Flow manifold(s): euclid, ball, ait");
  cmd->add_option("--epochs", o.epochs, "Training epochs");
  cmd->add_option("--lr", o.lr, "Adam learning rate");
  cmd->add_option("--batch-size", o.batch_size, "Training batch size");
  cmd->add_option("--step-size", o.step_size, "ODE step size");
  cmd->add_option("--divergence", o.divergence, "exact or hutchinson:N");
  cmd->add_option("--n-train", o.n_train, "Number of target samples used for training");
  cmd->add_option("--n-eval", o.n_eval, "Number of flow samples drawn for evaluation");
  cmd->add_option("--max-steps", o.max_steps, "Cap on optimizer steps (-1: none)");
}

ExperimentConfig make_config(const Overrides& o) {
  ExperimentConfig cfg = load_config(o.config);
  if (o.seed >= 0) cfg.seed = static_cast<std::uint64_t>(o.seed);
  if (!o.manifolds.empty()) {
    cfg.flows.manifolds.clear();
    for (const auto& m : o.manifolds) cfg.flows.manifolds.push_back(parse_flow_kind(m));
  }
  TrainConfig& t = cfg.flows.train;
  if (o.epochs >= 0) t.epochs = o.epochs;
  if (o.lr > 0.0) t.lr = o.lr;
  if (o.batch_size > 0) t.batch_size = o.batch_size;
  if (o.step_size > 0.0) t.step_size = o.step_size;
  if (!o.divergence.empty()) t.divergence = parse_divergence(o.divergence);
  if (o.max_steps >= -1) t.max_steps = o.max_steps;
  if (o.n_train > 0) cfg.flows.n_train = o.n_train;
  if (o.n_eval > 0) cfg.eval.n_samples = o.n_eval;
  return cfg;
}

void print_metrics(const std::string& kind, const MetricsReport& m) {
  std::cout << kind << ": KL " << m.kl_nats << " nats, ESS " << m.ess_pct << "%, outside " << m.outside_pct
            << "%, Z_KL " << m.z_estimate << "\n";
}

int cmd_round(const std::string& model, const std::string& embedding, const fs::path& out) {
  RoundingOptions opt;
  opt.embedding = embedding == "svd" ? EmbeddingKind::SVD : EmbeddingKind::RREF;
  const TransformChain chain = run_stage("round", [&] { return round_model(resolve_model(json(model)), opt); });
  write_json(out / "transform_chain.json", to_json(chain));
  std::cout << "K = " << chain.dim() << "\nfree variables:";
  for (const auto& n : chain.embedding.free_names) std::cout << " " << n;
  std::cout << "\nJohn polytope: " << chain.john.rows() << " constraints, inscribed radius " << chain.inscribed_radius()
            << "\n";
  return 0;
}

int cmd_sample(const ExperimentConfig& cfg, const fs::path& out) {
  const TransformChain chain = round_stage(cfg);
  const SamplerResult mcmc = sample_stage(cfg, chain);
  const auto names = chain.rounded_names();
  write_json(out / "transform_chain.json", to_json(chain));
  write_file(out / "samples.csv", samples_csv(mcmc.samples(), names, "mcmc"));
  write_json(out / "chain_diagnostics.json",
             {{"per_dimension", to_json(mcmc.diagnostics, names)}, {"acceptance", mcmc.acceptance}});
  for (std::size_t k = 0; k < names.size(); ++k) {
    std::cout << names[k];
    if (k < mcmc.diagnostics.rhat.size())
      std::cout << ": R-hat " << mcmc.diagnostics.rhat[k] << ", ESS " << mcmc.diagnostics.ess_pct[k] << "%";
    std::cout << "\n";
  }
  return 0;
}

int cmd_train(const ExperimentConfig& cfg, const std::string& samples_path, const fs::path& out) {
  const TransformChain chain = round_stage(cfg);
  Matrix X;
  if (!samples_path.empty()) {
    X = run_stage("load", [&] { return read_samples_csv(samples_path, "mcmc"); });
    X = X.leftCols(std::min(X.cols(), cfg.flows.n_train));
  } else {
    X = training_set(sample_stage(cfg, chain), cfg.flows.n_train);
  }
  require(X.rows() == chain.dim(), "train: samples do not match the polytope dimension");
  const Normalizer norm = normalizer_stage(cfg, chain);
  json checkpoints = json::object();
  for (FlowKind kind : cfg.flows.manifolds) {
    const TrainedFlow flow = train_stage(cfg, chain, X, kind, norm, &std::cout);
    checkpoints[to_string(kind)] = to_json(flow);
  }
  write_json(out / "flow_checkpoint.json", checkpoints);
  write_json(out / "transform_chain.json", to_json(chain));
  return 0;
}

int cmd_eval(const ExperimentConfig& cfg, const fs::path& checkpoint, const fs::path& out) {
  const TransformChain chain = round_stage(cfg);
  const Normalizer norm = normalizer_stage(cfg, chain);
  const json ckpt = read_json(checkpoint);
  const auto names = chain.rounded_names();
  std::string samples = samples_csv_header(names);
  std::string grids = kDensityGridHeader;
  json flows = json::object();
  for (FlowKind kind : cfg.flows.manifolds) {
    const std::string k = to_string(kind);
    if (!ckpt.contains(k)) throw StageError("eval", "checkpoint has no '" + k + "' flow");
    const TrainedFlow flow = run_stage("load", [&] { return flow_from_json(ckpt.at(k)); });
    const FlowEvaluation ev = eval_stage(cfg, flow, norm);
    flows[k] = to_json(ev.metrics);
    samples += samples_csv_rows(ev.samples.v, k);
    grids += density_grid_rows(marginal_grids(inside_columns(ev.samples), cfg.eval.kde_grid, cfg.eval.kde_max_samples),
                               names, k);
    print_metrics(k, ev.metrics);
  }
  write_file(out / "samples.csv", samples);
  write_file(out / "density_grid.csv", grids);
  write_json(out / "metrics.json", {{"volume", norm.volume.volume},
                                    {"volume_std_error", norm.volume.std_error},
                                    {"z", norm.Z},
                                    {"flows", flows}});
  return 0;
}

int cmd_run(const ExperimentConfig& cfg, const fs::path& out) {
  const ExperimentResult res = run_experiment(cfg, out, &std::cout);
  for (const auto& [k, m] : res.metrics) print_metrics(k, m);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Sampling and normalizing flows on convex polytopes"};
  app.require_subcommand(1);
  app.set_version_flag("--version", POLYFLOW_VERSION);
  std::string out = "out";
  app.add_option("--out", out, "Output directory")->capture_default_str();

  std::string model = "example", embedding = "rref";
  auto* round = app.add_subcommand("round", "Round a model into John position and write the transform chain");
  round->add_option("--model", model, "Model JSON file, or 'example'")->capture_default_str();
  round->add_option("--embedding", embedding, "rref or svd")->check(CLI::IsMember({"rref", "svd"}));
  round->add_option("--out", out, "Output directory");

  Overrides so, to, eo, ro;
  auto* sample = app.add_subcommand("sample", "Draw target samples by hit-and-run");
  add_config_options(sample, so, false);
  sample->add_option("--out", out, "Output directory");

  std::string samples_path;
  auto* train = app.add_subcommand("train", "Train flows and write a checkpoint");
  add_config_options(train, to, true);
  train->add_option("--samples", samples_path, "samples.csv from 'sample' (otherwise sampled afresh)");
  train->add_option("--out", out, "Output directory");

  std::string checkpoint;
  auto* eval = app.add_subcommand("eval", "Evaluate trained flows");
  add_config_options(eval, eo, true);
  eval->add_option("--checkpoint", checkpoint, "flow_checkpoint.json")->required()->check(CLI::ExistingFile);
  eval->add_option("--out", out, "Output directory");

  auto* run = app.add_subcommand("run", "Round, sample, train, evaluate and write every artifact");
  add_config_options(run, ro, true);
  run->add_option("--out", out, "Output directory");

  CLI11_PARSE(app, argc, argv);
  try {
    const fs::path dir(out);
    if (round->parsed()) return cmd_round(model, embedding, dir);
    if (sample->parsed()) return cmd_sample(make_config(so), dir);
    if (train->parsed()) return cmd_train(make_config(to), samples_path, dir);
    if (eval->parsed()) {
      ExperimentConfig cfg = make_config(eo);
      if (eo.manifolds.empty()) {
        // Evaluate whatever the checkpoint holds.
        cfg.flows.manifolds.clear();
        for (const auto& [k, v] : read_json(checkpoint).items()) cfg.flows.manifolds.push_back(parse_flow_kind(k));
      }
      return cmd_eval(cfg, checkpoint, dir);
    }
    if (run->parsed()) return cmd_run(make_config(ro), dir);
  } catch (const std::exception& e) {
    std::cerr << "polyflow: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
