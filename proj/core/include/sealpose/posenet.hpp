#pragma once

#include <cstdint>

#include <nlohmann/json.hpp>

#include "sealpose/autodiff.hpp"
#include "sealpose/param_store.hpp"
#include "sealpose/types.hpp"

namespace sealpose {

/// Residual-MLP lifter: relu(linear) -> n_blocks x [h + W2 relu(W1 h)] -> linear.
struct PoseNetConfig {
  int hidden_width = 256;
  int n_blocks = 2;
  /// <= 0 selects 1/sqrt(fan_in) per layer.
  double init_scale = 0.0;
  std::uint64_t seed = 1;
};

void validate(const PoseNetConfig& config);

/// Parameters under the "posenet." prefix.
ParamStore init_posenet(const PoseNetConfig& config, int joints);
std::size_t posenet_param_count(int joints, int hidden_width, int n_blocks);

/// x: B x 2J normalized inputs (a tape variable when input gradients are
/// needed). Returns B x 3J poses in meters with the root columns exactly 0.
ad::Var posenet_forward(const ParamBinding& params, const PoseNetConfig& config, int joints, int root,
                        ad::Var x);

/// Frozen, tape-free convenience wrapper around posenet_forward.
Matrix posenet_predict(const ParamStore& params, const PoseNetConfig& config, int joints, int root,
                       const Matrix& x);

nlohmann::json to_json(const PoseNetConfig& config);
PoseNetConfig posenet_from_json(const nlohmann::json& j);

}  // namespace sealpose
