#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "sealpose/autodiff.hpp"
#include "sealpose/param_store.hpp"
#include "sealpose/skeleton.hpp"
#include "sealpose/types.hpp"

namespace sealpose {

enum class LossNetVariant { kMlp, kGraph };

/// How 2D evidence and the 3D hypothesis reach the energy.
enum class Mechanism {
  kM1,  ///< 3D-only node features
  kM2,  ///< separate 2D / 3D encoders coupled by a bilinear form
  kM3,  ///< joint-aligned early fusion [k2D, k3D, one-hot]
  kM4,  ///< 3D-only global energy plus per-joint bilinear local energy
};

struct LossNetConfig {
  LossNetVariant variant = LossNetVariant::kGraph;
  Mechanism mechanism = Mechanism::kM3;
  // Graph variant.
  int d_embed = 32;
  int d_model = 64;
  int heads = 4;
  int depth = 3;
  int spd_max = 8;
  int ffn_width = 128;
  /// Learnable per-distance edge-path term added to the spatial bias.
  bool edge_path_bias = false;
  // MLP variant.
  int mlp_hidden = 512;
  int mlp_blocks = 2;
  // Shared.
  int head_hidden = 64;
  /// Width of the per-joint 2D / 3D projections of the M4 local energy.
  int local_width = 8;
  std::uint64_t seed = 2;
};

void validate(const LossNetConfig& config);

std::string to_string(LossNetVariant v);
std::string to_string(Mechanism m);
LossNetVariant parse_variant(const std::string& s);
Mechanism parse_mechanism(const std::string& s);

/// Per-joint node features. For M2 and M4 `two_d` holds the 2D-side set
/// [k2D, e] and `three_d` the 3D-side set [k3D, e]; for M1 / M3 only
/// `fused` is populated.
struct NodeFeatureSet {
  Matrix fused;
  Matrix two_d;
  Matrix three_d;
  int width() const { return static_cast<int>(fused.size() ? fused.cols() : three_d.cols()); }
};

/// x: J x 2 normalized 2D keypoints, y: J x 3 pose (any consistent unit).
NodeFeatureSet build_node_features(Mechanism mechanism, const Matrix& x, const Matrix& y,
                                   const SkeletonSpec& spec);

/// Skeleton-derived constants needed to evaluate the energy.
struct LossNetContext {
  int joints = 0;
  /// (J+1) x (J+1) attention bias buckets; row/col 0 is the virtual node.
  Eigen::MatrixXi attention_index;
  int bucket_count = 0;

  static LossNetContext build(const SkeletonSpec& spec, const LossNetConfig& config);
};

/// Parameters under the "lossnet." prefix.
ParamStore init_lossnet(const LossNetConfig& config, const LossNetContext& ctx);

/// Energies for a batch. x: B x 2J normalized inputs, y: B x 3J poses in
/// meters. Returns B x 1.
ad::Var lossnet_energy(const ParamBinding& params, const LossNetConfig& config, const LossNetContext& ctx,
                       ad::Var x, ad::Var y);

/// Tape-free evaluation with frozen parameters.
Matrix lossnet_energies(const ParamStore& params, const LossNetConfig& config, const LossNetContext& ctx,
                        const Matrix& x, const Matrix& y);

/// One pre-norm attention block over (B * nodes) x d_model rows:
///   h += out(attn(ln1(h)));  h += fc2(relu(fc1(ln2(h))))
/// Attention probabilities (one nodes x nodes matrix per (sample, head))
/// are written to `probs_out` when provided.
ad::Var graph_attention_layer(const ParamBinding& params, const std::string& prefix, ad::Var h, ad::Var bias_table,
                              const LossNetConfig& config, const LossNetContext& ctx, Eigen::Index batch,
                              std::vector<Matrix>* probs_out = nullptr);

/// Attention-mixing output before the output projection, for inspection.
ad::Var attention_mix(const ParamBinding& params, const std::string& prefix, ad::Var normed, ad::Var bias_table,
                      const LossNetConfig& config, const LossNetContext& ctx, Eigen::Index batch,
                      std::vector<Matrix>* probs_out = nullptr);

nlohmann::json to_json(const LossNetConfig& config);
LossNetConfig lossnet_from_json(const nlohmann::json& j);

}  // namespace sealpose
