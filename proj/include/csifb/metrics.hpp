// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <span>

#include "csifb/channel.hpp"

namespace csifb {

/// Mean over samples of ||H - H_hat||_F^2 / ||H||_F^2.
/// Throws DimensionError on length mismatch or empty input and DomainError for a zero-norm truth.
double nmse(std::span<const AngularDelayCsi> truth, std::span<const AngularDelayCsi> estimate);

double to_db(double linear);

}  // namespace csifb
