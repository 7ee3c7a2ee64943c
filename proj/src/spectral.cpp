#include "sldi/spectral.hpp"

#include <random>

namespace sldi {

namespace {

bool selected(const TensorInfo& in, const std::vector<std::string>& prefixes) {
  if (in.shape.size() != 2) return false;
  for (const auto& p : prefixes)
    if (in.name.compare(0, p.size(), p) == 0) return true;
  return false;
}

}  // namespace

ParamStore spectral_project(ParamStore params, const std::vector<std::string>& prefixes, const SpectralOptions& opts) {
  if (!(opts.bound > 0.0)) throw InvalidInput("spectral bound must be positive");
  auto& flat = params.flat();
  for (const auto& in : params.tensors()) {
    if (!selected(in, prefixes)) continue;
    Eigen::Map<RowMatrix> W(flat.data() + in.offset, in.shape[0], in.shape[1]);
    const double sigma = spectral_norm_estimate(W, opts.iters, opts.seed, opts.rel_tol, opts.max_iters);
    if (sigma > opts.bound * (1.0 + 1e-12)) W *= opts.bound / sigma;
  }
  return params;
}

double max_spectral_norm(const ParamStore& params, const std::vector<std::string>& prefixes,
                         const SpectralOptions& opts) {
  double worst = 0.0;
  for (const auto& in : params.tensors()) {
    if (!selected(in, prefixes)) continue;
    Eigen::Map<const RowMatrix> W(params.flat().data() + in.offset, in.shape[0], in.shape[1]);
    worst = std::max(worst, spectral_norm_estimate(W, opts.iters, opts.seed, opts.rel_tol, opts.max_iters));
  }
  return worst;
}

void xavier_init(ParamStore& params, std::uint64_t seed) {
  Rng rng(seed);
  auto& flat = params.flat();
  for (const auto& in : params.tensors()) {
    auto block = flat.segment(in.offset, in.size);
    if (in.shape.size() != 2) {
      block.setZero();
      continue;
    }
    const double fan_out = static_cast<double>(in.shape[0]);
    const double fan_in = static_cast<double>(in.shape[1]);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    const double bound = std::sqrt(6.0 / (fan_in + fan_out));
    for (Eigen::Index i = 0; i < in.size; ++i) block[i] = bound * u(rng);
  }
}

}  // namespace sldi
