// Copyright (c) 2026 The AdaPM Authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <random>

#include "adapm/matrix.hpp"

namespace bench {

inline adapm::Matrix gaussian(std::mt19937_64& rng, std::size_t rows, std::size_t cols,
                              double scale = 1.0) {
  std::normal_distribution<double> n(0.0, scale);
  adapm::Matrix out(rows, cols);
  for (auto& x : out.values()) x = n(rng);
  return out;
}

}  // namespace bench
