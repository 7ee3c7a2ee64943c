#include "sldi/param_store.hpp"

#include <numeric>

#include "sldi/errors.hpp"

namespace sldi {

namespace {
Eigen::Index product(const std::vector<Eigen::Index>& shape) {
  return std::accumulate(shape.begin(), shape.end(), Eigen::Index{1}, std::multiplies<>());
}
}  // namespace

Eigen::Index ParamStore::add(std::string name, std::vector<Eigen::Index> shape) {
  if (index_.count(name)) throw InvalidInput("duplicate parameter name " + name);
  const Eigen::Index n = product(shape);
  const Eigen::Index offset = flat_.size();
  index_.emplace(name, infos_.size());
  infos_.push_back({std::move(name), std::move(shape), offset, n});
  flat_.conservativeResize(offset + n);
  flat_.segment(offset, n).setZero();
  return offset;
}

void ParamStore::set_flat(const Eigen::VectorXd& values) {
  if (values.size() != flat_.size()) throw ShapeError("flat parameter vector has the wrong length");
  flat_ = values;
}

const TensorInfo& ParamStore::info(std::string_view name) const {
  auto it = index_.find(name);
  if (it == index_.end()) throw InvalidInput("unknown parameter " + std::string(name));
  return infos_[it->second];
}

bool ParamStore::contains(std::string_view name) const { return index_.find(name) != index_.end(); }

Tensor ParamStore::tensor(std::string_view name) const {
  const auto& in = info(name);
  Tensor t{in.shape, std::vector<double>(static_cast<std::size_t>(in.size))};
  Eigen::Map<Eigen::VectorXd>(t.data.data(), in.size) = flat_.segment(in.offset, in.size);
  return t;
}

void ParamStore::set_tensor(std::string_view name, const Tensor& value) {
  const auto& in = info(name);
  if (value.shape != in.shape || static_cast<Eigen::Index>(value.data.size()) != in.size)
    throw ShapeError("shape mismatch for parameter " + in.name);
  flat_.segment(in.offset, in.size) = Eigen::Map<const Eigen::VectorXd>(value.data.data(), in.size);
}

std::map<std::string, Tensor> ParamStore::unflatten() const {
  std::map<std::string, Tensor> out;
  for (const auto& in : infos_) out.emplace(in.name, tensor(in.name));
  return out;
}

void ParamStore::load(const std::map<std::string, Tensor>& tensors) {
  if (tensors.size() != infos_.size()) throw ShapeError("tensor count mismatch");
  for (const auto& in : infos_) {
    auto it = tensors.find(in.name);
    if (it == tensors.end()) throw ShapeError("missing parameter " + in.name);
    set_tensor(in.name, it->second);
  }
}

Eigen::VectorXd ParamStore::mask(std::string_view prefix) const {
  Eigen::VectorXd m = Eigen::VectorXd::Zero(flat_.size());
  for (const auto& in : infos_)
    if (std::string_view(in.name).substr(0, prefix.size()) == prefix) m.segment(in.offset, in.size).setOnes();
  return m;
}

}  // namespace sldi
