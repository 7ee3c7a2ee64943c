#include "sldi/checkpoint.hpp"

#include <fstream>
#include <sstream>

#include "sldi/errors.hpp"
#include "sldi/text.hpp"

namespace sldi {

Checkpoint make_checkpoint(const ParamStore& store, std::map<std::string, std::string> meta) {
  return {std::move(meta), store.unflatten()};
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FormatError("cannot write checkpoint " + path.string());
  out << "sldi-checkpoint " << Checkpoint::kVersion << '\n';
  out << "meta " << ckpt.meta.size() << '\n';
  for (const auto& [k, v] : ckpt.meta) {
    if (k.empty() || k.find_first_of(" \t\n\r") != std::string::npos || v.find_first_of("\n\r") != std::string::npos)
      throw FormatError("checkpoint metadata entry '" + k + "' cannot be stored");
    out << k << ' ' << v << '\n';
  }
  out << "tensors " << ckpt.tensors.size() << '\n';
  for (const auto& [name, t] : ckpt.tensors) {
    if (name.find_first_of(" \t\n\r") != std::string::npos) throw FormatError("tensor name '" + name + "' has spaces");
    out << "tensor " << name << ' ' << t.shape.size();
    for (auto s : t.shape) out << ' ' << s;
    out << '\n';
    for (std::size_t i = 0; i < t.data.size(); ++i) out << (i ? " " : "") << format_double(t.data[i]);
    out << '\n';
  }
  if (!out) throw FormatError("write failed for " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot read checkpoint " + path.string());
  std::string line;
  std::size_t lineno = 0;
  const auto next = [&](const char* what) {
    if (!std::getline(in, line)) throw ParseError(lineno + 1, std::string("unexpected end of file, expected ") + what);
    ++lineno;
  };
  next("header");
  if (line.rfind("sldi-checkpoint ", 0) != 0) throw FormatError("not a checkpoint file");
  if (line != "sldi-checkpoint " + std::to_string(Checkpoint::kVersion))
    throw FormatError("unsupported checkpoint version: " + line.substr(16));

  Checkpoint ck;
  const auto count_line = [&](const std::string& key) {
    next(key.c_str());
    const auto f = split_view(line, ' ');
    std::optional<std::size_t> n;
    if (f.size() == 2 && f[0] == key) n = parse_int<std::size_t>(f[1]);
    if (!n) throw ParseError(lineno, "expected '" + key + " <count>'");
    return *n;
  };
  const std::size_t n_meta = count_line("meta");
  for (std::size_t i = 0; i < n_meta; ++i) {
    next("metadata");
    const auto sp = line.find(' ');
    if (sp == std::string::npos || sp == 0) throw ParseError(lineno, "malformed metadata line");
    ck.meta[line.substr(0, sp)] = line.substr(sp + 1);
  }
  const std::size_t n_tensors = count_line("tensors");
  for (std::size_t i = 0; i < n_tensors; ++i) {
    next("tensor header");
    const auto f = split_view(line, ' ');
    if (f.size() < 3 || f[0] != "tensor") throw ParseError(lineno, "expected 'tensor <name> <rank> <dims>'");
    const auto rank = parse_int<std::size_t>(f[2]);
    if (!rank || f.size() != 3 + *rank) throw ParseError(lineno, "tensor rank does not match its dimensions");
    const std::string name(f[1]);
    Tensor t;
    std::size_t count = 1;
    for (std::size_t r = 0; r < *rank; ++r) {
      const auto dim = parse_int<Eigen::Index>(f[3 + r]);
      if (!dim || *dim < 0) throw ParseError(lineno, "bad tensor dimension");
      t.shape.push_back(*dim);
      count *= static_cast<std::size_t>(*dim);
    }
    next("tensor values");
    const auto vals = split_view(line, ' ');
    if (vals.size() != count) throw ParseError(lineno, "tensor '" + name + "' has the wrong number of values");
    for (auto v : vals) {
      const auto x = parse_double(v);
      if (!x) throw ParseError(lineno, "bad number '" + std::string(v) + "'");
      t.data.push_back(*x);
    }
    ck.tensors[name] = std::move(t);
  }
  return ck;
}

void restore(ParamStore& store, const Checkpoint& ckpt) {
  for (const auto& info : store.tensors()) {
    const auto it = ckpt.tensors.find(info.name);
    if (it == ckpt.tensors.end()) throw ConfigError("checkpoint lacks tensor '" + info.name + "'");
    if (it->second.shape != info.shape) throw ConfigError("checkpoint tensor '" + info.name + "' has a different shape");
  }
  if (ckpt.tensors.size() != store.tensors().size()) throw ConfigError("checkpoint holds tensors the model does not have");
  store.load(ckpt.tensors);
}

}  // namespace sldi
