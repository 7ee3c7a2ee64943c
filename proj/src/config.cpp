#include "sldi/config.hpp"

#include <fstream>
#include <functional>
#include <set>
#include <sstream>

#include "sldi/errors.hpp"
#include "sldi/text.hpp"

namespace sldi {

namespace {

template <typename E>
E pick(const std::string& s, std::initializer_list<std::pair<const char*, E>> table, const char* what) {
  for (const auto& [name, v] : table)
    if (s == name) return v;
  std::string allowed;
  for (const auto& [name, v] : table) allowed += (allowed.empty() ? "" : ", ") + std::string(name);
  throw ConfigError(std::string("unknown ") + what + " '" + s + "' (expected one of: " + allowed + ")");
}

double to_double(const std::string& s) {
  const auto v = parse_double(s);
  if (!v) throw ConfigError("expected a number, got '" + s + "'");
  return *v;
}

template <typename Int>
Int to_int(const std::string& s) {
  const auto v = parse_int<Int>(s);
  if (!v) throw ConfigError("expected a non-negative integer, got '" + s + "'");
  return *v;
}

bool to_bool(const std::string& s) {
  if (s == "true" || s == "1") return true;
  if (s == "false" || s == "0") return false;
  throw ConfigError("expected true or false, got '" + s + "'");
}

std::vector<Eigen::Index> to_widths(const std::string& s) {
  std::vector<Eigen::Index> out;
  for (auto f : split_view(s, ',')) {
    const auto v = parse_int<Eigen::Index>(trim(f));
    if (!v || *v < 1) throw ConfigError("expected a comma-separated list of positive widths, got '" + s + "'");
    out.push_back(*v);
  }
  return out;
}

std::string from_widths(const std::vector<Eigen::Index>& w) {
  std::string s;
  for (std::size_t i = 0; i < w.size(); ++i) s += (i ? "," : "") + std::to_string(w[i]);
  return s;
}

std::vector<std::string> to_list(const std::string& s) {
  std::vector<std::string> out;
  for (auto f : split_view(s, ',')) {
    const auto t = trim(f);
    if (t.empty()) throw ConfigError("empty entry in list '" + s + "'");
    out.emplace_back(t);
  }
  return out;
}

std::string from_list(const std::vector<std::string>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + v[i];
  return s;
}

struct Binding {
  const char* section;
  const char* key;
  std::function<void(TrainConfig&, const std::string&)> set;
  std::function<std::string(const TrainConfig&)> get;
};

#define SLDI_DOUBLE(sec, name, field) \
  Binding { sec, name, [](TrainConfig& c, const std::string& v) { c.field = to_double(v); }, \
            [](const TrainConfig& c) { return format_double(c.field); } }
#define SLDI_INT(sec, name, field, type) \
  Binding { sec, name, [](TrainConfig& c, const std::string& v) { c.field = to_int<type>(v); }, \
            [](const TrainConfig& c) { return std::to_string(c.field); } }
#define SLDI_BOOL(sec, name, field) \
  Binding { sec, name, [](TrainConfig& c, const std::string& v) { c.field = to_bool(v); }, \
            [](const TrainConfig& c) { return std::string(c.field ? "true" : "false"); } }
#define SLDI_WIDTHS(sec, name, field) \
  Binding { sec, name, [](TrainConfig& c, const std::string& v) { c.field = to_widths(v); }, \
            [](const TrainConfig& c) { return from_widths(c.field); } }
#define SLDI_ENUM(sec, name, field, parser) \
  Binding { sec, name, [](TrainConfig& c, const std::string& v) { c.field = parser(v); }, \
            [](const TrainConfig& c) { return std::string(to_string(c.field)); } }

const std::vector<Binding>& bindings() {
  static const std::vector<Binding> table = {
      SLDI_INT("model", "latent_dim", model.latent_dim, Eigen::Index),
      SLDI_INT("model", "obs_dim", model.obs_dim, Eigen::Index),
      SLDI_ENUM("model", "diffusion", model.diffusion_mode, parse_diffusion_mode),
      SLDI_WIDTHS("model", "drift_hidden", model.drift_hidden),
      SLDI_WIDTHS("model", "diffusion_hidden", model.diffusion_hidden),
      SLDI_WIDTHS("model", "decoder_hidden", model.decoder_hidden),
      SLDI_WIDTHS("model", "coadjoint_hidden", model.coadjoint_hidden),
      SLDI_INT("model", "encoder_hidden", model.encoder_hidden, Eigen::Index),
      SLDI_ENUM("model", "posterior", model.posterior, parse_posterior),
      SLDI_ENUM("model", "noise", model.noise, parse_noise),
      SLDI_DOUBLE("model", "obs_var", model.obs_var),

      SLDI_DOUBLE("objective", "dt", objective.dt),
      SLDI_DOUBLE("objective", "horizon", objective.horizon),
      SLDI_DOUBLE("objective", "lambda", objective.lambda),
      SLDI_DOUBLE("objective", "beta", objective.beta),
      SLDI_INT("objective", "mc_samples", objective.mc_samples, std::size_t),
      SLDI_ENUM("objective", "grad_mode", objective.grad_mode, parse_grad_mode),
      SLDI_BOOL("objective", "antithetic", objective.antithetic),
      SLDI_ENUM("objective", "scheme", scheme, parse_scheme),

      SLDI_DOUBLE("optim", "lr", optim.lr),
      SLDI_DOUBLE("optim", "lr_final_fraction", optim.lr_final_fraction),
      SLDI_DOUBLE("optim", "beta1", optim.beta1),
      SLDI_DOUBLE("optim", "beta2", optim.beta2),
      SLDI_DOUBLE("optim", "eps", optim.eps),
      SLDI_INT("optim", "batch_size", optim.batch_size, std::size_t),
      SLDI_INT("optim", "steps", optim.steps, std::size_t),
      SLDI_BOOL("optim", "variance_clip", optim.variance_clip),
      SLDI_DOUBLE("optim", "alpha", optim.alpha),
      SLDI_DOUBLE("optim", "rho", optim.rho),
      SLDI_DOUBLE("optim", "spectral_bound", optim.spectral_bound),
      SLDI_INT("optim", "spectral_iters", optim.spectral_iters, int),
      Binding{"optim", "train_prefixes",
              [](TrainConfig& c, const std::string& v) { c.optim.train_prefixes = to_list(v); },
              [](const TrainConfig& c) { return from_list(c.optim.train_prefixes); }},
      SLDI_DOUBLE("optim", "blowup_abort", optim.blowup_abort),

      SLDI_ENUM("anneal", "kind", anneal.kind, parse_anneal_kind),
      SLDI_INT("anneal", "warmup", anneal.warmup, std::uint64_t),
      SLDI_DOUBLE("anneal", "reference_entropy", anneal.reference_entropy),

      SLDI_INT("run", "seed", run.seed, std::uint64_t),
      SLDI_INT("run", "log_every", run.log_every, std::size_t),
      SLDI_INT("run", "checkpoint_every", run.checkpoint_every, std::size_t),
      SLDI_INT("run", "eval_every", run.eval_every, std::size_t),
      SLDI_INT("run", "eval_samples", run.eval_samples, std::size_t),
      SLDI_DOUBLE("run", "context_fraction", run.context_fraction),
      Binding{"run", "data", [](TrainConfig& c, const std::string& v) { c.run.data = v; },
              [](const TrainConfig& c) { return c.run.data; }},

      Binding{"generate", "generator", [](TrainConfig& c, const std::string& v) { c.generate.generator = v; },
              [](const TrainConfig& c) { return c.generate.generator; }},
      SLDI_INT("generate", "n_seq", generate.options.n_seq, std::size_t),
      SLDI_DOUBLE("generate", "horizon", generate.options.horizon),
      SLDI_INT("generate", "steps", generate.options.steps, std::size_t),
      SLDI_DOUBLE("generate", "train_fraction", generate.options.train_fraction),
      SLDI_DOUBLE("generate", "val_fraction", generate.options.val_fraction),
      SLDI_DOUBLE("generate", "keep_prob", generate.options.keep_prob),
      SLDI_INT("generate", "min_keep", generate.options.min_keep, std::size_t),
      SLDI_INT("generate", "seed", generate.options.seed, std::uint64_t),
      SLDI_INT("generate", "ou_dim", generate.ou.dim, std::size_t),
      SLDI_DOUBLE("generate", "ou_theta", generate.ou.theta),
      SLDI_DOUBLE("generate", "ou_sigma", generate.ou.sigma),
      SLDI_DOUBLE("generate", "ou_z0_mean", generate.ou.z0_mean),
      SLDI_DOUBLE("generate", "ou_z0_std", generate.ou.z0_std),
      SLDI_DOUBLE("generate", "ou_obs_noise", generate.ou.obs_noise),
      SLDI_DOUBLE("generate", "gbm_drift", generate.gbm.drift),
      SLDI_DOUBLE("generate", "gbm_vol", generate.gbm.vol),
      SLDI_DOUBLE("generate", "gbm_z0", generate.gbm.z0),
      SLDI_DOUBLE("generate", "sin_omega", generate.sinusoid.omega),
      SLDI_DOUBLE("generate", "sin_gamma", generate.sinusoid.gamma),
      SLDI_DOUBLE("generate", "sin_sigma", generate.sinusoid.sigma),
      SLDI_DOUBLE("generate", "sin_radius", generate.sinusoid.radius),
      SLDI_DOUBLE("generate", "sin_obs_noise", generate.sinusoid.obs_noise),
  };
  return table;
}

#undef SLDI_DOUBLE
#undef SLDI_INT
#undef SLDI_BOOL
#undef SLDI_WIDTHS
#undef SLDI_ENUM

void require(bool ok, const std::string& what) {
  if (!ok) throw ConfigError(what);
}

}  // namespace

DiffusionMode parse_diffusion_mode(const std::string& s) {
  return pick<DiffusionMode>(
      s, {{"diagonal", DiffusionMode::diagonal}, {"scalar", DiffusionMode::scalar}, {"full", DiffusionMode::full}},
      "diffusion mode");
}

PosteriorMode parse_posterior(const std::string& s) {
  return pick<PosteriorMode>(
      s, {{"shared", PosteriorMode::shared_dynamics}, {"separate", PosteriorMode::separate_drift}}, "posterior mode");
}

NoiseModel parse_noise(const std::string& s) {
  return pick<NoiseModel>(s, {{"fixed", NoiseModel::fixed}, {"heteroscedastic", NoiseModel::heteroscedastic}},
                          "noise model");
}

GradMode parse_grad_mode(const std::string& s) {
  return pick<GradMode>(
      s, {{"tape", GradMode::tape}, {"adjoint", GradMode::adjoint}, {"adjoint-corrected", GradMode::adjoint_corrected}},
      "gradient mode");
}

Scheme parse_scheme(const std::string& s) {
  return pick<Scheme>(s, {{"em", Scheme::em}, {"milstein", Scheme::milstein}}, "scheme");
}

AnnealSchedule::Kind parse_anneal_kind(const std::string& s) {
  return pick<AnnealSchedule::Kind>(s,
                                    {{"constant", AnnealSchedule::Kind::constant},
                                     {"linear_warmup", AnnealSchedule::Kind::linear_warmup},
                                     {"entropy_aware", AnnealSchedule::Kind::entropy_aware}},
                                    "annealing schedule");
}

const char* to_string(Scheme s) { return s == Scheme::em ? "em" : "milstein"; }

const char* to_string(AnnealSchedule::Kind k) {
  switch (k) {
    case AnnealSchedule::Kind::constant: return "constant";
    case AnnealSchedule::Kind::linear_warmup: return "linear_warmup";
    case AnnealSchedule::Kind::entropy_aware: return "entropy_aware";
  }
  return "constant";
}

void TrainConfig::validate() const {
  model.validate();
  require(objective.dt > 0.0, "objective.dt must be positive");
  require(objective.horizon > 0.0, "objective.horizon must be positive");
  require(objective.lambda >= 0.0, "objective.lambda must be non-negative");
  require(objective.beta >= 0.0, "objective.beta must be non-negative");
  require(objective.mc_samples >= 1, "objective.mc_samples must be at least 1");
  require(optim.lr >= 0.0, "optim.lr must be non-negative");
  require(optim.lr_final_fraction >= 0.0 && optim.lr_final_fraction <= 1.0,
          "optim.lr_final_fraction must lie in [0, 1]");
  require(optim.beta1 >= 0.0 && optim.beta1 < 1.0, "optim.beta1 must lie in [0, 1)");
  require(optim.beta2 >= 0.0 && optim.beta2 < 1.0, "optim.beta2 must lie in [0, 1)");
  require(optim.eps > 0.0, "optim.eps must be positive");
  require(optim.batch_size >= 1, "optim.batch_size must be at least 1");
  require(optim.alpha >= 0.0 && optim.alpha <= 1.0, "optim.alpha must lie in [0, 1]");
  require(optim.rho >= 0.0 && optim.rho <= 1.0, "optim.rho must lie in [0, 1]");
  require(optim.spectral_bound > 0.0, "optim.spectral_bound must be positive");
  require(optim.spectral_iters >= 1, "optim.spectral_iters must be at least 1");
  require(optim.blowup_abort > 0.0 && optim.blowup_abort <= 1.0, "optim.blowup_abort must lie in (0, 1]");
  require(run.log_every >= 1, "run.log_every must be at least 1");
  require(run.eval_samples >= 1, "run.eval_samples must be at least 1");
  require(run.context_fraction > 0.0 && run.context_fraction <= 1.0, "run.context_fraction must lie in (0, 1]");
  const auto& g = generate.options;
  require(g.horizon > 0.0 && g.steps >= 1, "generate.horizon and generate.steps must be positive");
  require(g.train_fraction >= 0.0 && g.val_fraction >= 0.0 && g.train_fraction + g.val_fraction <= 1.0,
          "generate split fractions must be non-negative and sum to at most 1");
  require(g.keep_prob > 0.0 && g.keep_prob <= 1.0, "generate.keep_prob must lie in (0, 1]");
  require(generate.generator == "ou" || generate.generator == "gbm" || generate.generator == "sinusoid",
          "generate.generator must be ou, gbm or sinusoid");
}

TrainConfig parse_config(const std::string& text) {
  TrainConfig c;
  std::istringstream in(text);
  std::string line, section;
  std::set<std::string> seen;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto where = "config line " + std::to_string(lineno) + ": ";
    std::string_view body = line;
    if (const auto hash = body.find_first_of("#;"); hash != std::string_view::npos) body = body.substr(0, hash);
    body = trim(body);
    if (body.empty()) continue;
    if (body.front() == '[') {
      if (body.back() != ']') throw ConfigError(where + "malformed section header");
      section = std::string(trim(body.substr(1, body.size() - 2)));
      bool known = false;
      for (const auto& b : bindings()) known = known || section == b.section;
      if (!known) throw ConfigError(where + "unknown section [" + section + "]");
      continue;
    }
    const auto eq = body.find('=');
    if (eq == std::string_view::npos) throw ConfigError(where + "expected key = value");
    if (section.empty()) throw ConfigError(where + "key outside of any section");
    const std::string key(trim(body.substr(0, eq)));
    const std::string value(trim(body.substr(eq + 1)));
    const Binding* hit = nullptr;
    for (const auto& b : bindings())
      if (section == b.section && key == b.key) hit = &b;
    if (!hit) throw ConfigError(where + "unknown key '" + key + "' in [" + section + "]");
    if (!seen.insert(section + "." + key).second) throw ConfigError(where + "duplicate key '" + key + "'");
    try {
      hit->set(c, value);
    } catch (const ConfigError& e) {
      throw ConfigError(where + section + "." + key + ": " + e.what());
    }
  }
  c.validate();
  return c;
}

TrainConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_config(buf.str());
}

std::string to_config_text(const TrainConfig& c) {
  std::string out, section;
  for (const auto& b : bindings()) {
    if (section != b.section) {
      out += (out.empty() ? "[" : "\n[") + std::string(b.section) + "]\n";
      section = b.section;
    }
    out += std::string(b.key) + " = " + b.get(c) + "\n";
  }
  return out;
}

void save_config(const std::filesystem::path& path, const TrainConfig& c) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot write config file " + path.string());
  out << to_config_text(c);
}

bool operator==(const TrainConfig& a, const TrainConfig& b) { return to_config_text(a) == to_config_text(b); }

}  // namespace sldi
