// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>

#include "mtfl/gradcheck.hpp"
#include "mtfl/model.hpp"
#include "mtfl/objective.hpp"

namespace mtfl {

// Finite-difference check of the full forward pass plus training objective
// on a random paired batch, dropout disabled.
struct ModelGradcheckSetup {
  ModelConfig model;
  LossWeights loss;
  std::size_t pairs = 2;
  std::uint64_t seed = 0;
  GradCheckOptions options;

  // T=8, D=8, 2 heads, hidden (6, 4), k=2, every loss term weighted in.
  static ModelGradcheckSetup tiny();
};

GradReport check_model_gradients(const ModelGradcheckSetup& setup);

}  // namespace mtfl
