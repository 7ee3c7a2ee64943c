#include "sldi/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <functional>
#include <optional>
#include <numeric>
#include <random>
#include <sstream>

#include "sldi/errors.hpp"
#include "sldi/rng.hpp"
#include "sldi/sde.hpp"
#include "sldi/text.hpp"

namespace sldi {

const char* split_name(Split s) {
  switch (s) {
    case Split::train: return "train";
    case Split::val: return "val";
    case Split::test: return "test";
  }
  return "train";
}

Split parse_split(const std::string& s) {
  if (s == "train") return Split::train;
  if (s == "val") return Split::val;
  if (s == "test") return Split::test;
  throw FormatError("unknown split label '" + s + "'");
}

std::vector<ObservationSeq> Dataset::split(Split s) const {
  std::vector<ObservationSeq> out;
  for (const auto& r : records)
    if (r.split == s) out.push_back(r.seq);
  return out;
}

void assign_splits(Dataset& ds, double train_fraction, double val_fraction, std::uint64_t seed) {
  if (train_fraction < 0 || val_fraction < 0 || train_fraction + val_fraction > 1.0 + 1e-12)
    throw InvalidInput("split fractions must be non-negative and sum to at most 1");
  std::vector<std::size_t> order(ds.records.size());
  std::iota(order.begin(), order.end(), 0);
  Rng rng(derive_seed(seed, {0x5b1170}));
  std::shuffle(order.begin(), order.end(), rng);
  const auto n = static_cast<double>(order.size());
  const auto n_train = static_cast<std::size_t>(std::llround(n * train_fraction));
  const auto n_val = std::min(order.size() - n_train, static_cast<std::size_t>(std::llround(n * val_fraction)));
  for (std::size_t i = 0; i < order.size(); ++i)
    ds.records[order[i]].split = i < n_train ? Split::train : (i < n_train + n_val ? Split::val : Split::test);
}

namespace {

std::string seq_id(const std::string& prefix, std::size_t i) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%s-%05zu", prefix.c_str(), i);
  return buf;
}

void common_config(Dataset& ds, const std::string& name, const GenOptions& opt) {
  ds.config["generator"] = name;
  ds.config["n_seq"] = std::to_string(opt.n_seq);
  ds.config["horizon"] = format_double(opt.horizon);
  ds.config["steps"] = std::to_string(opt.steps);
  ds.config["keep_prob"] = format_double(opt.keep_prob);
  ds.config["min_keep"] = std::to_string(opt.min_keep);
  ds.config["seed"] = std::to_string(opt.seed);
}

void finish(Dataset& ds, const GenOptions& opt) {
  for (std::size_t i = 0; i < ds.records.size(); ++i) {
    auto& seq = ds.records[i].seq;
    if (opt.keep_prob < 1.0) seq = subsample_irregular(seq, opt.keep_prob, opt.min_keep, derive_seed(opt.seed, {i, 3}));
  }
  assign_splits(ds, opt.train_fraction, opt.val_fraction, opt.seed);
}

// Latent paths of a linear SDE with observation noise added at every knot.
Dataset gen_linear(const GenOptions& opt, const std::string& name, const Eigen::MatrixXd& A, const Eigen::MatrixXd& B,
                   const std::function<Eigen::VectorXd(Rng&)>& draw_z0, double obs_noise,
                   const std::map<std::string, std::string>& meta) {
  if (obs_noise < 0.0) throw InvalidInput("observation noise must be non-negative");
  ParamStore store;
  const SdeModel model = fixtures::linear(store, "gen", A, B);
  const TimeGrid grid = TimeGrid::uniform(0.0, opt.horizon, opt.steps);
  Dataset ds;
  common_config(ds, name, opt);
  for (const auto& [k, v] : meta) ds.config[k] = v;
  for (std::size_t i = 0; i < opt.n_seq; ++i) {
    Rng rng(derive_seed(opt.seed, {i, 1}));
    const Eigen::VectorXd z0 = draw_z0(rng);
    const LatentPath path = simulate_path(model, z0, grid, sample_brownian(grid, B.cols(), derive_seed(opt.seed, {i, 2})));
    Eigen::MatrixXd x = path.states;
    if (obs_noise > 0.0) {
      for (Eigen::Index c = 0; c < x.cols(); ++c) x.col(c) += obs_noise * standard_normal(rng, x.rows());
    }
    Record r{seq_id(name, i), Split::train, {grid.knots(), x, meta}};
    r.seq.meta["generator"] = name;
    r.seq.meta["seed"] = std::to_string(opt.seed);
    r.seq.meta["index"] = std::to_string(i);
    ds.records.push_back(std::move(r));
  }
  finish(ds, opt);
  return ds;
}

}  // namespace

Dataset gen_ou(const GenOptions& opt, const OuParams& p) {
  if (!(p.theta > 0.0) || !(p.sigma > 0.0)) throw InvalidInput("OU needs theta > 0 and sigma > 0");
  if (!(p.obs_noise >= 0.0)) throw InvalidInput("observation noise must be non-negative");
  const auto d = static_cast<Eigen::Index>(p.dim);
  std::map<std::string, std::string> meta{{"theta", format_double(p.theta)},   {"sigma", format_double(p.sigma)},
                                          {"obs_noise", format_double(p.obs_noise)}, {"z0_mean", format_double(p.z0_mean)},
                                          {"z0_std", format_double(p.z0_std)},   {"dim", std::to_string(p.dim)}};
  return gen_linear(
      opt, "ou", -p.theta * Eigen::MatrixXd::Identity(d, d), p.sigma * Eigen::MatrixXd::Identity(d, d),
      [&](Rng& rng) { return (Eigen::VectorXd::Constant(d, p.z0_mean) + p.z0_std * standard_normal(rng, d)).eval(); },
      p.obs_noise, meta);
}

Dataset gen_sinusoid(const GenOptions& opt, const SinusoidParams& p) {
  Eigen::MatrixXd A(2, 2);
  A << -p.gamma, -p.omega, p.omega, -p.gamma;
  std::map<std::string, std::string> meta{{"omega", format_double(p.omega)},
                                          {"gamma", format_double(p.gamma)},
                                          {"sigma", format_double(p.sigma)},
                                          {"radius", format_double(p.radius)},
                                          {"obs_noise", format_double(p.obs_noise)}};
  return gen_linear(
      opt, "sinusoid", A, p.sigma * Eigen::MatrixXd::Identity(2, 2),
      [&](Rng& rng) {
        const double phase = std::uniform_real_distribution<double>(0.0, 2.0 * 3.141592653589793)(rng);
        return Eigen::Vector2d(p.radius * std::cos(phase), p.radius * std::sin(phase)).eval();
      },
      p.obs_noise, meta);
}

Dataset gen_gbm(const GenOptions& opt, const GbmParams& p) {
  if (!(p.z0 > 0.0) || !(p.vol > 0.0)) throw InvalidInput("GBM needs z0 > 0 and vol > 0");
  const TimeGrid grid = TimeGrid::uniform(0.0, opt.horizon, opt.steps);
  Dataset ds;
  common_config(ds, "gbm", opt);
  const std::map<std::string, std::string> meta{
      {"drift", format_double(p.drift)}, {"vol", format_double(p.vol)}, {"z0", format_double(p.z0)}};
  for (const auto& [k, v] : meta) ds.config[k] = v;
  const double mu = p.drift - 0.5 * p.vol * p.vol;
  for (std::size_t i = 0; i < opt.n_seq; ++i) {
    const BrownianPath w = sample_brownian(grid, 1, derive_seed(opt.seed, {i, 2}));
    Eigen::MatrixXd x(1, static_cast<Eigen::Index>(grid.size()));
    x(0, 0) = p.z0;
    double log_z = std::log(p.z0), W = 0.0;
    for (std::size_t k = 0; k < grid.steps(); ++k) {
      W += w.increments(0, static_cast<Eigen::Index>(k));
      // Closed form from the start so no error accumulates in the deterministic part.
      log_z = std::log(p.z0) + mu * grid[k + 1] + p.vol * W;
      x(0, static_cast<Eigen::Index>(k + 1)) = std::exp(log_z);
    }
    Record r{seq_id("gbm", i), Split::train, {grid.knots(), x, meta}};
    r.seq.meta["generator"] = "gbm";
    r.seq.meta["seed"] = std::to_string(opt.seed);
    r.seq.meta["index"] = std::to_string(i);
    ds.records.push_back(std::move(r));
  }
  finish(ds, opt);
  return ds;
}

ObservationSeq subsample_irregular(const ObservationSeq& seq, double keep_prob, std::size_t min_keep,
                                   std::uint64_t seed) {
  if (!(keep_prob > 0.0) || keep_prob > 1.0) throw InvalidInput("keep probability must lie in (0, 1]");
  if (min_keep < 1) throw InvalidInput("min_keep must be at least 1");
  const std::size_t n = seq.length();
  if (keep_prob == 1.0 || n == 0) return seq;
  Rng rng(seed);
  std::bernoulli_distribution coin(keep_prob);
  std::vector<char> keep(n, 0);
  for (std::size_t i = 0; i < n; ++i) keep[i] = coin(rng) ? 1 : 0;
  keep.front() = keep.back() = 1;
  std::size_t count = static_cast<std::size_t>(std::count(keep.begin(), keep.end(), 1));
  const std::size_t target = std::min(min_keep, n);
  while (count < target) {
    std::vector<std::size_t> dropped;
    for (std::size_t i = 0; i < n; ++i)
      if (!keep[i]) dropped.push_back(i);
    keep[dropped[std::uniform_int_distribution<std::size_t>(0, dropped.size() - 1)(rng)]] = 1;
    ++count;
  }
  ObservationSeq out;
  out.meta = seq.meta;
  out.values.resize(seq.dim(), static_cast<Eigen::Index>(count));
  Eigen::Index c = 0;
  for (std::size_t i = 0; i < n; ++i) {
    if (!keep[i]) continue;
    out.timestamps.push_back(seq.timestamps[i]);
    out.values.col(c++) = seq.values.col(static_cast<Eigen::Index>(i));
  }
  return out;
}

std::filesystem::path header_path(const std::filesystem::path& data) {
  auto p = data;
  p += ".header";
  return p;
}

namespace {

void check_token(const std::string& s, const std::string& what) {
  if (s.find_first_of("\t\n\r;=") != std::string::npos)
    throw FormatError(what + " '" + s + "' contains a reserved character");
}

}  // namespace

void save_dataset(const std::filesystem::path& path, const Dataset& ds) {
  std::ofstream hdr(header_path(path), std::ios::binary);
  if (!hdr) throw FormatError("cannot write " + header_path(path).string());
  hdr << "format=sldi-dataset\nversion=" << Dataset::kVersion << "\nrecords=" << ds.records.size() << '\n';
  for (const auto& [k, v] : ds.config) {
    check_token(k, "config key");
    if (v.find_first_of("\n\r") != std::string::npos) throw FormatError("config value contains a newline");
    hdr << "config." << k << '=' << v << '\n';
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FormatError("cannot write " + path.string());
  for (const auto& r : ds.records) {
    check_token(r.id, "record id");
    if (r.id.find(',') != std::string::npos || r.id.empty()) throw FormatError("invalid record id '" + r.id + "'");
    r.seq.validate();
    std::string line = r.id + '\t' + split_name(r.split) + '\t' + std::to_string(r.seq.dim()) + '\t';
    for (std::size_t j = 0; j < r.seq.length(); ++j) line += (j ? "," : "") + format_double(r.seq.timestamps[j]);
    line += '\t';
    for (Eigen::Index j = 0; j < r.seq.values.cols(); ++j) {
      if (j) line += ';';
      for (Eigen::Index i = 0; i < r.seq.values.rows(); ++i) line += (i ? "," : "") + format_double(r.seq.values(i, j));
    }
    line += '\t';
    bool first = true;
    for (const auto& [k, v] : r.seq.meta) {
      check_token(k, "meta key");
      check_token(v, "meta value");
      line += (first ? "" : ";") + k + '=' + v;
      first = false;
    }
    out << line << '\n';
  }
  if (!out) throw FormatError("write failed for " + path.string());
}

Dataset load_dataset(const std::filesystem::path& path) {
  std::ifstream hdr(header_path(path), std::ios::binary);
  if (!hdr) throw FormatError("missing dataset header " + header_path(path).string());
  Dataset ds;
  std::string line;
  bool format_ok = false, version_ok = false;
  std::optional<std::size_t> expected;
  while (std::getline(hdr, line)) {
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw FormatError("malformed header line '" + line + "'");
    const std::string key = line.substr(0, eq), value = line.substr(eq + 1);
    if (key == "format") {
      if (value != "sldi-dataset") throw FormatError("not a dataset header: format=" + value);
      format_ok = true;
    } else if (key == "version") {
      if (value != std::to_string(Dataset::kVersion))
        throw FormatError("dataset version " + value + " is not supported (expected " +
                          std::to_string(Dataset::kVersion) + ")");
      version_ok = true;
    } else if (key == "records") {
      expected = parse_int<std::size_t>(value);
      if (!expected) throw FormatError("bad record count '" + value + "'");
    } else if (key.rfind("config.", 0) == 0) {
      ds.config[key.substr(7)] = value;
    } else {
      throw FormatError("unknown header key '" + key + "'");
    }
  }
  if (!format_ok || !version_ok) throw FormatError("dataset header lacks format or version");

  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot read " + path.string());
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto fields = split_view(line, '\t');
    if (fields.size() != 6) throw ParseError(lineno, "expected 6 tab-separated fields, found " + std::to_string(fields.size()));
    Record r;
    r.id = std::string(fields[0]);
    if (r.id.empty()) throw ParseError(lineno, "empty record id");
    try {
      r.split = parse_split(std::string(fields[1]));
    } catch (const FormatError& e) {
      throw ParseError(lineno, e.what());
    }
    const auto n = parse_int<Eigen::Index>(fields[2]);
    if (!n || *n < 0) throw ParseError(lineno, "bad dimension field");
    for (auto t : split_view(fields[3], ',')) {
      const auto v = parse_double(t);
      if (!v) throw ParseError(lineno, "sequence '" + r.id + "': bad timestamp '" + std::string(t) + "'");
      r.seq.timestamps.push_back(*v);
    }
    const auto cols = split_view(fields[4], ';');
    if (cols.size() != r.seq.timestamps.size())
      throw ParseError(lineno, "sequence '" + r.id + "': value count does not match timestamp count");
    r.seq.values.resize(*n, static_cast<Eigen::Index>(cols.size()));
    for (std::size_t j = 0; j < cols.size(); ++j) {
      const auto entries = split_view(cols[j], ',');
      if (static_cast<Eigen::Index>(entries.size()) != *n)
        throw ParseError(lineno, "sequence '" + r.id + "': observation " + std::to_string(j) + " has the wrong dimension");
      for (std::size_t i = 0; i < entries.size(); ++i) {
        const auto v = parse_double(entries[i]);
        if (!v) throw ParseError(lineno, "sequence '" + r.id + "': bad value '" + std::string(entries[i]) + "'");
        r.seq.values(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = *v;
      }
    }
    for (auto kv : split_view(fields[5], ';')) {
      const auto eq = kv.find('=');
      if (eq == std::string_view::npos) throw ParseError(lineno, "sequence '" + r.id + "': malformed metadata");
      r.seq.meta[std::string(kv.substr(0, eq))] = std::string(kv.substr(eq + 1));
    }
    try {
      r.seq.validate();
    } catch (const InvalidInput& e) {
      throw ParseError(lineno, "sequence '" + r.id + "': " + e.what());
    }
    ds.records.push_back(std::move(r));
  }
  if (expected && *expected != ds.records.size())
    throw FormatError("header promises " + std::to_string(*expected) + " records, file has " +
                      std::to_string(ds.records.size()));
  return ds;
}

}  // namespace sldi
