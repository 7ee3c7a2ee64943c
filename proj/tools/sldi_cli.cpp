#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "sldi/checkpoint.hpp"
#include "sldi/config.hpp"
#include "sldi/dataset.hpp"
#include "sldi/errors.hpp"
#include "sldi/evaluate.hpp"
#include "sldi/experiments.hpp"
#include "sldi/trainer.hpp"

namespace fs = std::filesystem;
using namespace sldi;

namespace {

constexpr int kExitFailure = 1;
constexpr int kExitConfig = 2;
constexpr int kExitNumerics = 3;

struct Common {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
  std::string grad_mode;
  std::string posterior;
  std::string scheme;
};

void add_common(CLI::App* cmd, Common& c) {
  cmd->add_option("--config", c.config, "INI configuration file");
  cmd->add_option("--seed", c.seed, "Run seed (overrides the configuration)");
  cmd->add_option("--out", c.out, "Output file or directory");
  cmd->add_option("--grad-mode", c.grad_mode, "Gradient mode")->check(CLI::IsMember({"tape", "adjoint", "adjoint-corrected"}));
  cmd->add_option("--posterior", c.posterior, "Posterior parameterisation")->check(CLI::IsMember({"shared", "separate"}));
  cmd->add_option("--scheme", c.scheme, "Integration scheme")->check(CLI::IsMember({"em", "milstein"}));
}

TrainConfig resolve(const Common& c, const std::optional<fs::path>& fallback = std::nullopt) {
  TrainConfig cfg;
  if (!c.config.empty()) cfg = load_config(c.config);
  else if (fallback && fs::exists(*fallback)) cfg = load_config(*fallback);
  if (c.seed) cfg.run.seed = *c.seed;
  if (!c.grad_mode.empty()) cfg.objective.grad_mode = parse_grad_mode(c.grad_mode);
  if (!c.posterior.empty()) cfg.model.posterior = parse_posterior(c.posterior);
  if (!c.scheme.empty()) cfg.scheme = parse_scheme(c.scheme);
  cfg.validate();
  return cfg;
}

void write_text(const std::string& out, const std::string& text) {
  if (out.empty()) {
    std::cout << text;
    return;
  }
  std::ofstream f(out, std::ios::binary | std::ios::trunc);
  if (!f) throw ConfigError("cannot write " + out);
  f << text;
}

Dataset dataset_from(const TrainConfig& cfg, const std::string& data_flag) {
  const std::string path = data_flag.empty() ? cfg.run.data : data_flag;
  if (path.empty()) throw ConfigError("no dataset given (use --data or run.data)");
  return load_dataset(path);
}

Dataset generate(const GenerateConfig& g) {
  if (g.generator == "ou") return gen_ou(g.options, g.ou);
  if (g.generator == "gbm") return gen_gbm(g.options, g.gbm);
  if (g.generator == "sinusoid") return gen_sinusoid(g.options, g.sinusoid);
  throw ConfigError("unknown generator '" + g.generator + "' (ou, gbm or sinusoid)");
}

std::vector<LadderRung> parse_rungs(const std::string& text) {
  std::vector<LadderRung> rungs;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    const auto colon = item.find(':');
    try {
      if (colon == std::string::npos) throw std::invalid_argument(item);
      const long width = std::stol(item.substr(0, colon));
      const int log2_inv_dt = std::stoi(item.substr(colon + 1));
      if (width < 1 || log2_inv_dt < 0) throw std::invalid_argument(item);
      rungs.push_back({width, std::ldexp(1.0, -log2_inv_dt)});
    } catch (const std::logic_error&) {
      throw ConfigError("rung '" + item + "' is not <width>:<k> with dt = 2^-k");
    }
  }
  if (rungs.empty()) throw ConfigError("the rung list is empty");
  return rungs;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Latent neural SDE toolkit: data generation, training, evaluation and numerical checks"};
  app.require_subcommand(1);

  Common gen_c, train_c, eval_c, grad_c, conv_c, ladder_c, var_c;

  auto* gen = app.add_subcommand("generate", "Write a synthetic dataset from the [generate] section");
  add_common(gen, gen_c);

  auto* tr = app.add_subcommand("train", "Train a model; writes metrics.jsonl and checkpoints to --out");
  add_common(tr, train_c);
  std::string train_data;
  tr->add_option("--data", train_data, "Dataset file (overrides run.data)");

  auto* ev = app.add_subcommand("eval", "Evaluate a checkpoint on a dataset split");
  add_common(ev, eval_c);
  std::string eval_data, eval_ckpt, eval_split = "test";
  std::size_t eval_samples = 64;
  ev->add_option("--data", eval_data, "Dataset file (overrides run.data)");
  ev->add_option("--checkpoint", eval_ckpt, "Checkpoint file")->required();
  ev->add_option("--split", eval_split, "train, val or test")->check(CLI::IsMember({"train", "val", "test"}));
  ev->add_option("--samples", eval_samples, "Posterior samples per sequence");

  auto* gc = app.add_subcommand("gradcheck", "Compare analytic gradients with finite differences and the adjoint");
  add_common(gc, grad_c);
  std::string fault;
  gc->add_option("--inject-fault", fault, "Corrupt the weight cotangent of a block (drift, postdrift, diffusion, dec, coadj)");

  auto* cv = app.add_subcommand("convergence", "Strong and weak error table of the integrators");
  add_common(cv, conv_c);
  std::string conv_fixture = "gbm";
  std::size_t conv_paths = 1000;
  int conv_kmin = 4, conv_kmax = 9;
  cv->add_option("--fixture", conv_fixture, "gbm or ou")->check(CLI::IsMember({"gbm", "ou"}));
  cv->add_option("--paths", conv_paths, "Coupled paths per step size");
  cv->add_option("--kmin", conv_kmin, "Coarsest step 2^-kmin");
  cv->add_option("--kmax", conv_kmax, "Finest step 2^-kmax");

  auto* tl = app.add_subcommand("theorem-ladder", "Encoder posterior against the exact smoother along a capacity ladder");
  add_common(tl, ladder_c);
  std::string rungs_text = "4:3,16:5,64:7";
  std::size_t ladder_seeds = 5, ladder_steps = LadderOptions{}.steps;
  double ladder_threshold = LadderOptions{}.threshold;
  tl->add_option("--rungs", rungs_text, "Comma-separated <encoder width>:<k>, dt = 2^-k");
  tl->add_option("--seeds", ladder_seeds, "Number of seeds, counted from --seed");
  tl->add_option("--steps", ladder_steps, "Training steps per rung");
  tl->add_option("--threshold", ladder_threshold, "Top-rung KL threshold (nats)");

  auto* vr = app.add_subcommand("variance-report", "Gradient-estimator variance on the OU terminal-loss fixture");
  add_common(vr, var_c);
  std::size_t var_seeds = 100;
  vr->add_option("--seeds", var_seeds, "Independent estimates per estimator");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitConfig;
  }

  try {
    if (gen->parsed()) {
      TrainConfig cfg = resolve(gen_c);
      if (gen_c.seed) cfg.generate.options.seed = *gen_c.seed;
      if (gen_c.out.empty()) throw ConfigError("generate needs --out <dataset file>");
      const Dataset ds = generate(cfg.generate);
      save_dataset(gen_c.out, ds);
      std::cout << nlohmann::ordered_json{{"records", ds.records.size()},
                                          {"train", ds.split(Split::train).size()},
                                          {"val", ds.split(Split::val).size()},
                                          {"test", ds.split(Split::test).size()},
                                          {"path", gen_c.out}}
                       .dump()
                << '\n';
    } else if (tr->parsed()) {
      const TrainConfig cfg = resolve(train_c);
      if (train_c.out.empty()) throw ConfigError("train needs --out <run directory>");
      const Dataset ds = dataset_from(cfg, train_data);
      SldiModel model(cfg.model);
      const TrainResult r = train(model, cfg, ds.split(Split::train), ds.split(Split::val), fs::path(train_c.out));
      nlohmann::ordered_json j{{"steps", cfg.optim.steps}, {"out", train_c.out}};
      j["initial_val_elbo"] = std::isfinite(r.initial_val_elbo) ? nlohmann::json(r.initial_val_elbo) : nlohmann::json();
      j["final_val_elbo"] = std::isfinite(r.final_val_elbo) ? nlohmann::json(r.final_val_elbo) : nlohmann::json();
      std::cout << j.dump() << '\n';
    } else if (ev->parsed()) {
      const fs::path ckpt_path(eval_ckpt);
      const TrainConfig cfg = resolve(eval_c, ckpt_path.parent_path() / "config.ini");
      const Dataset ds = dataset_from(cfg, eval_data);
      SldiModel model(cfg.model);
      restore(model.store(), load_checkpoint(ckpt_path));
      const EvalMetrics m =
          evaluate(model, model.params(), ds.split(parse_split(eval_split)), cfg, eval_samples, validation_seed(cfg.run.seed));
      write_text(eval_c.out, m.to_json() + "\n");
    } else if (gc->parsed()) {
      const TrainConfig cfg = resolve(grad_c);
      GradcheckOptions opts;
      opts.base = cfg.model;
      opts.seed = cfg.run.seed;
      if (!fault.empty()) opts.fault_block = fault;
      const auto rows = gradcheck(opts);
      write_text(grad_c.out, format_gradcheck(rows));
      return all_pass(rows) ? 0 : kExitFailure;
    } else if (cv->parsed()) {
      const TrainConfig cfg = resolve(conv_c);
      if (conv_kmin > conv_kmax || conv_kmin < 0) throw ConfigError("--kmin must not exceed --kmax");
      std::vector<double> dts;
      for (int k = conv_kmin; k <= conv_kmax; ++k) dts.push_back(std::ldexp(1.0, -k));
      const AnalyticFixture fx = AnalyticFixture::named(conv_fixture);
      std::vector<Scheme> schemes{Scheme::em, Scheme::milstein};
      if (!conv_c.scheme.empty()) schemes = {cfg.scheme};
      std::vector<std::pair<Scheme, ErrorTable>> tables;
      for (Scheme s : schemes) tables.emplace_back(s, strong_weak_error(fx, s, dts, conv_paths, cfg.run.seed));
      write_text(conv_c.out, convergence_csv(tables));
    } else if (tl->parsed()) {
      const TrainConfig cfg = resolve(ladder_c);
      LadderOptions opts;
      opts.rungs = parse_rungs(rungs_text);
      opts.seeds.clear();
      for (std::size_t i = 0; i < ladder_seeds; ++i) opts.seeds.push_back(cfg.run.seed + i);
      opts.steps = ladder_steps;
      opts.threshold = ladder_threshold;
      const LadderReport rep = theorem_ladder(opts);
      write_text(ladder_c.out, ladder_csv(rep));
      std::cerr << ladder_summary(rep);
      if (rep.pass && !*rep.pass) return kExitFailure;
    } else if (vr->parsed()) {
      const TrainConfig cfg = resolve(var_c);
      VarianceFixture fx;
      fx.alpha = cfg.optim.alpha;
      fx.rho = cfg.optim.rho;
      write_text(var_c.out, variance_csv(gradient_variance_report(fx, var_seeds, cfg.run.seed)));
    }
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const FormatError& e) {
    std::cerr << "input error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const ParseError& e) {
    std::cerr << "input error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const InvalidInput& e) {
    std::cerr << "input error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const NumericsError& e) {
    std::cerr << "numerical abort: " << e.what() << '\n';
    return kExitNumerics;
  } catch (const NumericalBlowup& e) {
    std::cerr << "numerical abort: " << e.what() << '\n';
    return kExitNumerics;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitFailure;
  }
  return 0;
}
