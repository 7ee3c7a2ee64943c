#pragma once

#include <map>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Core>

namespace sldi {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Shaped, row-major block of values.
struct Tensor {
  std::vector<Eigen::Index> shape;
  std::vector<double> data;

  bool operator==(const Tensor&) const = default;
};

struct TensorInfo {
  std::string name;
  std::vector<Eigen::Index> shape;
  Eigen::Index offset = 0;
  Eigen::Index size = 0;
};

/// Named parameter tensors packed, in registration order, into one flat vector.
/// Namespaces are name prefixes ("enc." for the encoder, "drift." etc.).
class ParamStore {
 public:
  /// Registers a zero-initialised tensor and returns its flat offset.
  Eigen::Index add(std::string name, std::vector<Eigen::Index> shape);

  Eigen::Index size() const noexcept { return flat_.size(); }
  const Eigen::VectorXd& flat() const noexcept { return flat_; }
  Eigen::VectorXd& flat() noexcept { return flat_; }
  void set_flat(const Eigen::VectorXd& values);

  const std::vector<TensorInfo>& tensors() const noexcept { return infos_; }
  const TensorInfo& info(std::string_view name) const;
  bool contains(std::string_view name) const;

  Tensor tensor(std::string_view name) const;
  void set_tensor(std::string_view name, const Tensor& value);

  std::map<std::string, Tensor> unflatten() const;
  /// Inverse of unflatten(); every registered name must be present with its shape.
  void load(const std::map<std::string, Tensor>& tensors);

  /// Boolean mask over the flat vector selecting tensors whose name starts with prefix.
  Eigen::VectorXd mask(std::string_view prefix) const;

 private:
  std::vector<TensorInfo> infos_;
  std::map<std::string, std::size_t, std::less<>> index_;
  Eigen::VectorXd flat_;
};

}  // namespace sldi
