#pragma once

#include <filesystem>
#include <map>
#include <string>

#include "sldi/param_store.hpp"

namespace sldi {

/// Text container of named tensors:
///   sldi-checkpoint 1
///   meta <count>
///   <key> <value>            (one line each; value runs to end of line)
///   tensors <count>
///   tensor <name> <rank> <dim_1> ... <dim_rank>
///   <v_1> <v_2> ...          (row-major, 17 significant digits)
struct Checkpoint {
  static constexpr int kVersion = 1;
  std::map<std::string, std::string> meta;
  std::map<std::string, Tensor> tensors;

  bool operator==(const Checkpoint&) const = default;
};

Checkpoint make_checkpoint(const ParamStore& store, std::map<std::string, std::string> meta = {});

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
/// Throws FormatError on a bad header or version and ParseError on malformed lines.
Checkpoint load_checkpoint(const std::filesystem::path& path);

/// Load tensors into `store`; throws ConfigError when names or shapes disagree.
void restore(ParamStore& store, const Checkpoint& ckpt);

}  // namespace sldi
