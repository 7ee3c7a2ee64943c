#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "sldi/observation.hpp"
#include "sldi/time_grid.hpp"

namespace sldi {

enum class Split { train, val, test };

const char* split_name(Split s);
/// Throws FormatError for anything but train / val / test.
Split parse_split(const std::string& s);

struct Record {
  std::string id;
  Split split = Split::train;
  ObservationSeq seq;

  bool operator==(const Record&) const = default;
};

struct Dataset {
  static constexpr int kVersion = 1;

  /// Generator configuration, written to the header file.
  std::map<std::string, std::string> config;
  std::vector<Record> records;

  std::vector<ObservationSeq> split(Split s) const;
  bool operator==(const Dataset&) const = default;
};

/// Assign train/val/test labels by a seeded shuffle: the first round(n * train)
/// shuffled records are train, the next round(n * val) are val, the rest test.
void assign_splits(Dataset& ds, double train_fraction, double val_fraction, std::uint64_t seed);

/// Shared knobs of the synthetic generators.
struct GenOptions {
  std::size_t n_seq = 100;
  double horizon = 2.0;
  std::size_t steps = 64;
  double train_fraction = 0.8;
  double val_fraction = 0.1;
  /// Each knot is observed with this probability (endpoints always); 1 keeps the full grid.
  double keep_prob = 1.0;
  std::size_t min_keep = 2;
  std::uint64_t seed = 0;
};

/// Ornstein-Uhlenbeck in `dim` independent coordinates, simulated with
/// Euler-Maruyama on the uniform grid; x = z + N(0, obs_noise^2).
struct OuParams {
  std::size_t dim = 1;
  double theta = 1.0;
  double sigma = 0.5;
  double z0_mean = 0.0;
  double z0_std = 1.0;
  double obs_noise = 0.1;
};
Dataset gen_ou(const GenOptions& opt, const OuParams& p);

/// Geometric Brownian motion sampled exactly in log space; observed without noise.
struct GbmParams {
  double drift = 0.1;
  double vol = 0.2;
  double z0 = 1.0;
};
Dataset gen_gbm(const GenOptions& opt, const GbmParams& p);

/// Damped stochastic oscillator dz = [[-gamma, -omega], [omega, -gamma]] z dt + sigma dW
/// in two dimensions, observed as z + N(0, obs_noise^2 I).
struct SinusoidParams {
  double omega = 3.0;
  double gamma = 0.1;
  double sigma = 0.2;
  double radius = 1.0;
  double obs_noise = 0.1;
};
Dataset gen_sinusoid(const GenOptions& opt, const SinusoidParams& p);

/// Keep each point with probability keep_prob; the first and last points
/// always survive and uniformly chosen points are restored until min_keep remain.
ObservationSeq subsample_irregular(const ObservationSeq& seq, double keep_prob, std::size_t min_keep,
                                   std::uint64_t seed);

/// Data file: one record per line,
///   id TAB split TAB n TAB t_1,...,t_T TAB x_1;...;x_T TAB k=v;k=v
/// where x_j is the comma-separated n-vector observed at t_j and every number is
/// written with 17 significant digits. The sibling "<path>.header" holds
/// "format=sldi-dataset", "version=1", "records=<count>" and "config.<key>=<value>" lines.
void save_dataset(const std::filesystem::path& path, const Dataset& ds);
/// Throws FormatError for a missing or mismatched header and ParseError
/// (carrying the 1-based line number) for malformed rows.
Dataset load_dataset(const std::filesystem::path& path);

std::filesystem::path header_path(const std::filesystem::path& data);

}  // namespace sldi
