#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <iterator>

#include "sldi/dataset.hpp"
#include "sldi/errors.hpp"
#include "sldi/expm.hpp"

using namespace sldi;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / "sldi_test_dataset";
  fs::create_directories(dir);
  return dir / name;
}

struct Stats {
  double mean, var, n;
};

Stats stats(const std::vector<double>& xs) {
  const auto n = static_cast<double>(xs.size());
  double m = 0, v = 0;
  for (double x : xs) m += x;
  m /= n;
  for (double x : xs) v += (x - m) * (x - m);
  return {m, v / (n - 1), n};
}

void write_lines(const fs::path& p, const std::vector<std::string>& lines) {
  std::ofstream out(p);
  for (const auto& l : lines) out << l << '\n';
}

}  // namespace

TEST_CASE("OU generator matches the Euler-Maruyama marginal") {
  GenOptions opt;
  opt.n_seq = 4000;
  opt.steps = 32;
  opt.horizon = 1.0;
  opt.seed = 5;
  OuParams p;
  p.theta = 1.2;
  p.sigma = 0.6;
  p.z0_mean = 0.5;
  p.z0_std = 0.8;
  p.obs_noise = 0.2;
  const Dataset ds = gen_ou(opt, p);
  REQUIRE(ds.records.size() == opt.n_seq);

  double m = p.z0_mean, v = p.z0_std * p.z0_std;
  const double dt = opt.horizon / static_cast<double>(opt.steps);
  for (std::size_t k = 0; k < opt.steps; ++k) {
    m *= 1.0 - p.theta * dt;
    v = v * (1.0 - p.theta * dt) * (1.0 - p.theta * dt) + p.sigma * p.sigma * dt;
  }
  v += p.obs_noise * p.obs_noise;

  std::vector<double> last;
  for (const auto& r : ds.records) {
    CHECK(r.seq.length() == opt.steps + 1);
    last.push_back(r.seq.values(0, r.seq.values.cols() - 1));
  }
  const Stats s = stats(last);
  CHECK(std::abs(s.mean - m) < 3.0 * std::sqrt(v / s.n));
  CHECK(std::abs(s.var - v) < 3.0 * v * std::sqrt(2.0 / (s.n - 1)));
  CHECK(ds.records[0].seq.meta.at("generator") == "ou");
  CHECK(ds.records[0].id == "ou-00000");
}

TEST_CASE("GBM generator samples the exact log-normal law") {
  GenOptions opt;
  opt.n_seq = 4000;
  opt.horizon = 1.0;
  opt.seed = 2;
  GbmParams p{0.3, 0.4, 2.0};
  const Dataset ds = gen_gbm(opt, p);
  std::vector<double> logs;
  for (const auto& r : ds.records) logs.push_back(std::log(r.seq.values(0, r.seq.values.cols() - 1) / p.z0));
  const Stats s = stats(logs);
  const double mean = (p.drift - 0.5 * p.vol * p.vol) * opt.horizon, var = p.vol * p.vol * opt.horizon;
  CHECK(std::abs(s.mean - mean) < 3.0 * std::sqrt(var / s.n));
  CHECK(std::abs(s.var - var) < 3.0 * var * std::sqrt(2.0 / (s.n - 1)));
  for (const auto& r : ds.records) CHECK(r.seq.values(0, 0) == p.z0);
}

TEST_CASE("sinusoid generator shape and determinism") {
  GenOptions opt;
  opt.n_seq = 10;
  opt.seed = 9;
  const Dataset a = gen_sinusoid(opt, {});
  const Dataset b = gen_sinusoid(opt, {});
  CHECK(a == b);
  CHECK(a.records[0].seq.dim() == 2);
  opt.seed = 10;
  CHECK_FALSE(gen_sinusoid(opt, {}) == a);
}

TEST_CASE("splits") {
  GenOptions opt;
  opt.n_seq = 50;
  opt.train_fraction = 0.6;
  opt.val_fraction = 0.2;
  const Dataset ds = gen_ou(opt, {});
  CHECK(ds.split(Split::train).size() == 30);
  CHECK(ds.split(Split::val).size() == 10);
  CHECK(ds.split(Split::test).size() == 10);
  CHECK(parse_split("val") == Split::val);
  CHECK(std::string(split_name(Split::test)) == "test");
  CHECK_THROWS_AS(parse_split("dev"), FormatError);
}

TEST_CASE("irregular subsampling") {
  GenOptions opt;
  opt.n_seq = 1;
  opt.steps = 100;
  const ObservationSeq full = gen_ou(opt, {}).records[0].seq;
  const ObservationSeq sub = subsample_irregular(full, 0.3, 2, 4);
  CHECK(sub.timestamps.front() == full.timestamps.front());
  CHECK(sub.timestamps.back() == full.timestamps.back());
  CHECK(sub.length() < full.length());
  CHECK(sub.length() > 10);
  CHECK_NOTHROW(sub.validate());
  CHECK(subsample_irregular(full, 1e-9, 7, 4).length() == 7);
  CHECK_THROWS_AS(subsample_irregular(full, 0.0, 7, 4), InvalidInput);
  CHECK(subsample_irregular(full, 1.0, 2, 4) == full);
  CHECK(subsample_irregular(full, 0.3, 2, 4) == sub);

  opt.keep_prob = 0.5;
  const Dataset irregular = gen_ou(opt, {});
  CHECK(irregular.records[0].seq.length() < full.length());
}

TEST_CASE("dataset files round-trip exactly") {
  GenOptions opt;
  opt.n_seq = 12;
  opt.keep_prob = 0.6;
  opt.seed = 77;
  const Dataset ds = gen_sinusoid(opt, {});
  const fs::path p = scratch("round.tsv");
  save_dataset(p, ds);
  CHECK(fs::exists(header_path(p)));
  const Dataset back = load_dataset(p);
  CHECK(back == ds);

  Dataset empty;
  empty.config["generator"] = "none";
  save_dataset(scratch("empty.tsv"), empty);
  CHECK(load_dataset(scratch("empty.tsv")) == empty);
}

TEST_CASE("malformed dataset files") {
  const fs::path p = scratch("bad.tsv");
  write_lines(header_path(p), {"format=sldi-dataset", "version=1", "records=2"});

  SUBCASE("non-increasing timestamps name the sequence and line") {
    write_lines(p, {"a\ttrain\t1\t0,0.5\t1;2\tk=v", "b\ttrain\t1\t0,0.5,0.5\t1;2;3\t"});
    try {
      load_dataset(p);
      FAIL("expected a parse error");
    } catch (const ParseError& e) {
      CHECK(e.line() == 2);
      CHECK(std::string(e.what()).find("'b'") != std::string::npos);
    }
  }
  SUBCASE("wrong field count") {
    write_lines(p, {"a\ttrain\t1\t0,0.5\t1;2\t", "b\ttrain\t1"});
    CHECK_THROWS_AS(load_dataset(p), ParseError);
  }
  SUBCASE("bad numbers") {
    write_lines(p, {"a\ttrain\t1\t0,x\t1;2\t", "b\ttrain\t1\t0\t1\t"});
    CHECK_THROWS_AS(load_dataset(p), ParseError);
  }
  SUBCASE("record count disagrees with the header") {
    write_lines(p, {"a\ttrain\t1\t0,0.5\t1;2\t"});
    CHECK_THROWS(load_dataset(p));
  }
  SUBCASE("unsupported version") {
    write_lines(header_path(p), {"format=sldi-dataset", "version=9", "records=0"});
    write_lines(p, {});
    CHECK_THROWS_AS(load_dataset(p), FormatError);
  }
  SUBCASE("missing header") {
    fs::remove(header_path(p));
    write_lines(p, {});
    CHECK_THROWS_AS(load_dataset(p), FormatError);
  }
}

TEST_CASE("OU generator examples") {
  GenOptions opt;
  opt.n_seq = 200;
  opt.steps = 32;
  opt.horizon = 1.0;
  opt.seed = 8;
  OuParams clean;
  clean.obs_noise = 0.0;
  OuParams noisy = clean;
  noisy.obs_noise = 0.1;
  const Dataset a = gen_ou(opt, clean), b = gen_ou(opt, noisy);
  std::vector<double> scaled;
  for (std::size_t i = 0; i < a.records.size(); ++i) {
    const Eigen::MatrixXd diff = b.records[i].seq.values - a.records[i].seq.values;
    for (Eigen::Index j = 0; j < diff.cols(); ++j) scaled.push_back(diff(0, j) / 0.1);
  }
  const Stats s = stats(scaled);
  CHECK(std::abs(s.mean) < 3.0 / std::sqrt(s.n));
  CHECK(std::abs(s.var - 1.0) < 3.0 * std::sqrt(2.0 / (s.n - 1)));

  SUBCASE("terminal mean against the closed form") {
    GenOptions big = opt;
    big.n_seq = 10000;
    big.steps = 256;
    OuParams p;
    p.theta = 1.0;
    p.sigma = 0.5;
    p.z0_mean = 1.0;
    p.z0_std = 0.0;
    p.obs_noise = 0.0;
    std::vector<double> xs;
    for (const auto& r : gen_ou(big, p).records) xs.push_back(r.seq.values(0, r.seq.values.cols() - 1));
    const Stats t = stats(xs);
    const auto exact = ou_statistics(p.theta, p.sigma, p.z0_mean, 1.0);
    CHECK(std::abs(t.mean - exact.mean) < 3.0 * std::sqrt(t.var / t.n));
  }

  SUBCASE("same seed writes the same bytes") {
    const fs::path p1 = scratch("same1.tsv"), p2 = scratch("same2.tsv");
    save_dataset(p1, gen_ou(opt, noisy));
    save_dataset(p2, gen_ou(opt, noisy));
    std::ifstream f1(p1, std::ios::binary), f2(p2, std::ios::binary);
    const std::string s1{std::istreambuf_iterator<char>(f1), {}}, s2{std::istreambuf_iterator<char>(f2), {}};
    CHECK(s1 == s2);
    CHECK_FALSE(s1.empty());
  }

  OuParams bad = clean;
  bad.obs_noise = -0.1;
  CHECK_THROWS_AS(gen_ou(opt, bad), InvalidInput);
  bad = clean;
  bad.theta = 0.0;
  CHECK_THROWS_AS(gen_ou(opt, bad), InvalidInput);
}

TEST_CASE("GBM generator examples") {
  GenOptions opt;
  opt.n_seq = 20;
  opt.steps = 16;
  opt.horizon = 1.0;
  GbmParams p;
  p.drift = 0.3;
  p.vol = 1e-9;
  for (const auto& r : gen_gbm(opt, p).records)
    for (Eigen::Index j = 0; j < r.seq.values.cols(); ++j)
      CHECK(r.seq.values(0, j) == doctest::Approx(p.z0 * std::exp(p.drift * r.seq.timestamps[j])).epsilon(1e-7));

  opt.n_seq = 100000;
  opt.steps = 4;
  p.vol = 0.8;
  std::vector<double> xs;
  bool positive = true;
  for (const auto& r : gen_gbm(opt, p).records) {
    positive = positive && (r.seq.values.array() > 0.0).all();
    xs.push_back(r.seq.values(0, 4));
  }
  const Stats s = stats(xs);
  CHECK(positive);
  CHECK(std::abs(s.mean - p.z0 * std::exp(p.drift)) < 3.0 * std::sqrt(s.var / s.n));
}

TEST_CASE("subsampling keeps interior points at the requested rate") {
  ObservationSeq full{{}, Eigen::MatrixXd::Zero(1, 12), {}};
  for (int i = 0; i < 12; ++i) full.timestamps.push_back(i * 0.1);
  const double keep = 0.35;
  std::vector<double> fractions;
  for (std::uint64_t t = 0; t < 10000; ++t) {
    const ObservationSeq sub = subsample_irregular(full, keep, 1, t);
    fractions.push_back(static_cast<double>(sub.length() - 2) / 10.0);
  }
  const Stats s = stats(fractions);
  CHECK(std::abs(s.mean - keep) < 3.0 * std::sqrt(s.var / s.n));
}
