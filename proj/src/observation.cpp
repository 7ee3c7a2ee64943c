#include "sldi/observation.hpp"

#include <cmath>

#include "sldi/errors.hpp"

namespace sldi {

void ObservationSeq::validate() const {
  if (static_cast<Eigen::Index>(timestamps.size()) != values.cols())
    throw InvalidInput("timestamp count does not match value count");
  for (std::size_t i = 0; i < timestamps.size(); ++i) {
    if (!std::isfinite(timestamps[i])) throw InvalidInput("non-finite timestamp");
    if (i > 0 && !(timestamps[i] > timestamps[i - 1]))
      throw InvalidInput("timestamps not strictly increasing at index " + std::to_string(i));
  }
  if (!values.allFinite()) throw InvalidInput("non-finite observation value");
}

ObservationSeq ObservationSeq::prefix_until(double t_end) const {
  std::size_t n = 0;
  while (n < timestamps.size() && timestamps[n] <= t_end) ++n;
  return {std::vector<double>(timestamps.begin(), timestamps.begin() + static_cast<std::ptrdiff_t>(n)),
          values.leftCols(static_cast<Eigen::Index>(n)), meta};
}

ObservationSeq ObservationSeq::suffix_after(double t_start) const {
  std::size_t first = 0;
  while (first < timestamps.size() && timestamps[first] <= t_start) ++first;
  const auto n = timestamps.size() - first;
  return {std::vector<double>(timestamps.begin() + static_cast<std::ptrdiff_t>(first), timestamps.end()),
          values.rightCols(static_cast<Eigen::Index>(n)), meta};
}

}  // namespace sldi
