#pragma once

#include <cstdint>
#include <string>

#include "dqpp/error.hpp"
#include "dqpp/interaction.hpp"
#include "dqpp/ir_data.hpp"
#include "dqpp/reshape.hpp"

namespace dqpp {

enum class Objective { pairwise, pointwise };

inline const char* to_string(Objective o) {
  return o == Objective::pairwise ? "pairwise" : "pointwise";
}

inline Objective parse_objective(const std::string& s) {
  if (s == "pairwise") return Objective::pairwise;
  if (s == "pointwise") return Objective::pointwise;
  throw UsageError("unknown objective: " + s);
}

// Everything needed to rebuild a training run: tensor construction, network
// widths, and optimization settings.
struct TrainConfig {
  InteractionConfig interaction;          // t, b, n_limit, p, k, idf_on
  ReshapeMode mode = ReshapeMode::sdmq;
  Objective objective = Objective::pairwise;
  TargetMetric metric = TargetMetric::ap100;
  int epochs = 20;
  double lr = 1e-3;
  int batch_size = 32;
  double dropout = 0.2;
  std::uint64_t seed = 42;
  int conv1_channels = 8;
  int conv2_channels = 16;
  int hidden = 128;
  bool filter_ties = false;  // drop equal-metric pairs from training
};

}  // namespace dqpp
