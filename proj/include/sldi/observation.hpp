#pragma once

#include <map>
#include <string>
#include <vector>

#include <Eigen/Core>

namespace sldi {

/// Irregularly timestamped observations; column i of `values` is observed at timestamps[i].
struct ObservationSeq {
  std::vector<double> timestamps;
  Eigen::MatrixXd values;  // n x T
  /// Generator provenance: name, seed, true parameters.
  std::map<std::string, std::string> meta;

  std::size_t length() const noexcept { return timestamps.size(); }
  Eigen::Index dim() const noexcept { return values.rows(); }

  /// Throws InvalidInput unless timestamps strictly increase, values are finite
  /// and lengths agree.
  void validate() const;

  /// Prefix of observations with timestamp <= t_end.
  ObservationSeq prefix_until(double t_end) const;
  /// Observations with timestamp > t_start.
  ObservationSeq suffix_after(double t_start) const;

  bool operator==(const ObservationSeq& other) const {
    return timestamps == other.timestamps && values.rows() == other.values.rows() &&
           values.cols() == other.values.cols() && values == other.values && meta == other.meta;
  }
};

}  // namespace sldi
