// SPDX-License-Identifier: Apache-2.0
#include "csifb/metrics.hpp"

#include <cmath>
#include <string>

namespace csifb {

double nmse(std::span<const AngularDelayCsi> truth, std::span<const AngularDelayCsi> estimate) {
  if (truth.size() != estimate.size()) {
    throw DimensionError("nmse: " + std::to_string(truth.size()) + " truths vs " +
                         std::to_string(estimate.size()) + " estimates");
  }
  if (truth.empty()) throw DimensionError("nmse: empty input");
  double sum = 0.0;
  for (std::size_t k = 0; k < truth.size(); ++k) {
    const auto& h = truth[k].values;
    const auto& e = estimate[k].values;
    if (h.rows() != e.rows() || h.cols() != e.cols()) {
      throw DimensionError("nmse: shape mismatch at sample " + std::to_string(k));
    }
    const double energy = h.squaredNorm();
    if (energy <= 0.0) throw DomainError("nmse: zero-norm truth sample " + std::to_string(k));
    sum += (h - e).squaredNorm() / energy;
  }
  return sum / static_cast<double>(truth.size());
}

double to_db(double linear) { return 10.0 * std::log10(linear); }

}  // namespace csifb
