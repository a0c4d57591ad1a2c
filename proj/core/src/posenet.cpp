#include "sealpose/posenet.hpp"

#include <cmath>
#include <string>

#include "sealpose/errors.hpp"

namespace sealpose {

namespace {

std::string block_name(int b, const char* layer) { return "posenet.block" + std::to_string(b) + "." + layer; }

double bound_for(const PoseNetConfig& config, Eigen::Index fan_in) {
  return config.init_scale > 0.0 ? config.init_scale : 1.0 / std::sqrt(static_cast<double>(fan_in));
}

// Maps the 3(J-1) non-root outputs into 3J columns with zeros at the root.
Matrix root_expansion(int joints, int root) {
  Matrix e = Matrix::Zero(3 * (joints - 1), 3 * joints);
  int k = 0;
  for (int j = 0; j < joints; ++j) {
    if (j == root) continue;
    for (int c = 0; c < 3; ++c) e(3 * k + c, 3 * j + c) = 1.0;
    ++k;
  }
  return e;
}

ad::Var linear(const ParamBinding& p, const std::string& prefix, ad::Var x) {
  return ad::add_row(ad::matmul(x, p[prefix + ".weight"]), p[prefix + ".bias"]);
}

}  // namespace

void validate(const PoseNetConfig& config) {
  if (config.hidden_width < 1) throw ContractError("posenet: hidden_width must be >= 1");
  if (config.n_blocks < 0) throw ContractError("posenet: n_blocks must be >= 0");
}

std::size_t posenet_param_count(int joints, int hidden_width, int n_blocks) {
  const auto J = static_cast<std::size_t>(joints);
  const auto w = static_cast<std::size_t>(hidden_width);
  const auto nb = static_cast<std::size_t>(n_blocks);
  return (2 * J * w + w) + nb * 2 * (w * w + w) + (w * 3 * (J - 1) + 3 * (J - 1));
}

ParamStore init_posenet(const PoseNetConfig& config, int joints) {
  validate(config);
  if (joints < 2) throw ContractError("posenet: at least two joints required");
  ParamStore store(config.seed);
  Rng rng(config.seed);
  const Eigen::Index w = config.hidden_width;
  const Eigen::Index in = 2 * joints;
  const Eigen::Index out = 3 * (joints - 1);
  store.add_uniform("posenet.input.weight", in, w, bound_for(config, in), rng);
  store.add_uniform("posenet.input.bias", 1, w, bound_for(config, in), rng);
  for (int b = 0; b < config.n_blocks; ++b) {
    store.add_uniform(block_name(b, "fc1.weight"), w, w, bound_for(config, w), rng);
    store.add_uniform(block_name(b, "fc1.bias"), 1, w, bound_for(config, w), rng);
    store.add_uniform(block_name(b, "fc2.weight"), w, w, bound_for(config, w), rng);
    store.add_uniform(block_name(b, "fc2.bias"), 1, w, bound_for(config, w), rng);
  }
  store.add_uniform("posenet.output.weight", w, out, bound_for(config, w), rng);
  store.add_uniform("posenet.output.bias", 1, out, bound_for(config, w), rng);
  return store;
}

ad::Var posenet_forward(const ParamBinding& params, const PoseNetConfig& config, int joints, int root,
                        ad::Var x) {
  if (x.cols() != 2 * joints) {
    throw ContractError("posenet_forward: expected " + std::to_string(2 * joints) + " input columns, got " +
                        std::to_string(x.cols()));
  }
  ad::Tape& tape = params.tape();
  ad::Var h = ad::relu(linear(params, "posenet.input", x));
  for (int b = 0; b < config.n_blocks; ++b) {
    const std::string pre = "posenet.block" + std::to_string(b);
    ad::Var inner = ad::relu(linear(params, pre + ".fc1", h));
    h = ad::add(h, linear(params, pre + ".fc2", inner));
  }
  ad::Var y = linear(params, "posenet.output", h);
  return ad::matmul(y, tape.constant(root_expansion(joints, root)));
}

Matrix posenet_predict(const ParamStore& params, const PoseNetConfig& config, int joints, int root,
                       const Matrix& x) {
  ad::Tape tape;
  ParamBinding bound(tape, params, false);
  return posenet_forward(bound, config, joints, root, tape.constant(x)).value();
}

nlohmann::json to_json(const PoseNetConfig& c) {
  return {{"hidden_width", c.hidden_width}, {"n_blocks", c.n_blocks}, {"init_scale", c.init_scale}, {"seed", c.seed}};
}

PoseNetConfig posenet_from_json(const nlohmann::json& j) {
  PoseNetConfig c;
  c.hidden_width = j.value("hidden_width", c.hidden_width);
  c.n_blocks = j.value("n_blocks", c.n_blocks);
  c.init_scale = j.value("init_scale", c.init_scale);
  c.seed = j.value("seed", c.seed);
  return c;
}

}  // namespace sealpose
