#include "sealpose/lossnet.hpp"

#include <cmath>

#include "sealpose/errors.hpp"

namespace sealpose {

namespace {

double fan_bound(Eigen::Index fan_in) { return 1.0 / std::sqrt(static_cast<double>(fan_in)); }

void add_linear(ParamStore& s, const std::string& name, Eigen::Index in, Eigen::Index out, Rng& rng) {
  s.add_uniform(name + ".weight", in, out, fan_bound(in), rng);
  s.add_uniform(name + ".bias", 1, out, fan_bound(in), rng);
}

void add_layer_norm(ParamStore& s, const std::string& name, Eigen::Index width) {
  s.add(name + ".gain", 1, width).setOnes();
  s.add(name + ".bias", 1, width);
}

ad::Var linear(const ParamBinding& p, const std::string& name, ad::Var x) {
  return ad::add_row(ad::matmul(x, p[name + ".weight"]), p[name + ".bias"]);
}

ad::Var norm(const ParamBinding& p, const std::string& name, ad::Var x) {
  return ad::layer_norm(x, p[name + ".gain"], p[name + ".bias"]);
}

int node_width(Mechanism m, int joints, bool two_d_side) {
  switch (m) {
    case Mechanism::kM1: return 3 + joints;
    case Mechanism::kM3: return 2 + 3 + joints;
    case Mechanism::kM2:
    case Mechanism::kM4: return (two_d_side ? 2 : 3) + joints;
  }
  return 0;
}

int readout_width(const LossNetConfig& c) {
  return c.variant == LossNetVariant::kGraph ? c.d_model : c.mlp_hidden;
}

void add_encoder(ParamStore& s, const std::string& prefix, int in_width, const LossNetConfig& c,
                 const LossNetContext& ctx, Rng& rng) {
  if (c.variant == LossNetVariant::kMlp) {
    add_linear(s, prefix + ".input", static_cast<Eigen::Index>(in_width) * ctx.joints, c.mlp_hidden, rng);
    for (int b = 0; b < c.mlp_blocks; ++b) {
      const std::string pre = prefix + ".block" + std::to_string(b);
      add_linear(s, pre + ".fc1", c.mlp_hidden, c.mlp_hidden, rng);
      add_linear(s, pre + ".fc2", c.mlp_hidden, c.mlp_hidden, rng);
    }
    return;
  }
  add_linear(s, prefix + ".embed", in_width, c.d_embed, rng);
  add_linear(s, prefix + ".proj", c.d_embed, c.d_model, rng);
  s.add_uniform(prefix + ".cls", 1, c.d_model, fan_bound(c.d_model), rng);
  s.add(prefix + ".spatial_bias", c.heads, ctx.bucket_count);
  if (c.edge_path_bias) s.add(prefix + ".edge_bias", c.heads, ctx.bucket_count);
  for (int l = 0; l < c.depth; ++l) {
    const std::string pre = prefix + ".layer" + std::to_string(l);
    add_layer_norm(s, pre + ".ln1", c.d_model);
    add_linear(s, pre + ".q", c.d_model, c.d_model, rng);
    add_linear(s, pre + ".k", c.d_model, c.d_model, rng);
    add_linear(s, pre + ".v", c.d_model, c.d_model, rng);
    add_linear(s, pre + ".out", c.d_model, c.d_model, rng);
    add_layer_norm(s, pre + ".ln2", c.d_model);
    add_linear(s, pre + ".fc1", c.d_model, c.ffn_width, rng);
    add_linear(s, pre + ".fc2", c.ffn_width, c.d_model, rng);
  }
  add_layer_norm(s, prefix + ".final_ln", c.d_model);
}

void add_head(ParamStore& s, const std::string& prefix, int in_width, const LossNetConfig& c, Rng& rng) {
  add_linear(s, prefix + ".fc1", in_width, c.head_hidden, rng);
  add_linear(s, prefix + ".fc2", c.head_hidden, 1, rng);
}

Matrix one_hot_rows(Eigen::Index batch, int joints) {
  Matrix e = Matrix::Zero(batch * joints, joints);
  for (Eigen::Index b = 0; b < batch; ++b) {
    for (int j = 0; j < joints; ++j) e(b * joints + j, j) = 1.0;
  }
  return e;
}

// (B*J) x F node rows -> B x readout.
ad::Var encode(const ParamBinding& p, const std::string& prefix, ad::Var nodes, const LossNetConfig& c,
               const LossNetContext& ctx, Eigen::Index batch) {
  ad::Tape& tape = p.tape();
  if (c.variant == LossNetVariant::kMlp) {
    ad::Var flat = ad::reshape(nodes, batch, nodes.cols() * ctx.joints);
    ad::Var h = ad::relu(linear(p, prefix + ".input", flat));
    for (int b = 0; b < c.mlp_blocks; ++b) {
      const std::string pre = prefix + ".block" + std::to_string(b);
      ad::Var inner = ad::relu(linear(p, pre + ".fc1", h));
      h = ad::add(h, ad::relu(linear(p, pre + ".fc2", inner)));
    }
    return h;
  }

  ad::Var emb = linear(p, prefix + ".proj", linear(p, prefix + ".embed", nodes));
  // Prepend the virtual node to every sample's block of joints.
  ad::Var per_sample = ad::reshape(emb, batch, static_cast<Eigen::Index>(ctx.joints) * c.d_model);
  ad::Var cls = ad::matmul(tape.constant(Matrix::Ones(batch, 1)), p[prefix + ".cls"]);
  const ad::Var parts[] = {cls, per_sample};
  ad::Var h = ad::reshape(ad::concat_cols(parts), batch * (ctx.joints + 1), c.d_model);

  ad::Var table = p[prefix + ".spatial_bias"];
  if (c.edge_path_bias) table = ad::add(table, p[prefix + ".edge_bias"]);
  for (int l = 0; l < c.depth; ++l) {
    h = graph_attention_layer(p, prefix + ".layer" + std::to_string(l), h, table, c, ctx, batch);
  }
  h = norm(p, prefix + ".final_ln", h);
  std::vector<Eigen::Index> cls_rows(static_cast<std::size_t>(batch));
  for (Eigen::Index b = 0; b < batch; ++b) cls_rows[static_cast<std::size_t>(b)] = b * (ctx.joints + 1);
  return ad::gather_rows(h, cls_rows);
}

ad::Var scalar_head(const ParamBinding& p, const std::string& prefix, ad::Var readout) {
  return linear(p, prefix + ".fc2", ad::relu(linear(p, prefix + ".fc1", readout)));
}

}  // namespace

void validate(const LossNetConfig& c) {
  if (c.variant == LossNetVariant::kGraph) {
    if (c.d_embed < 1 || c.d_model < 1 || c.heads < 1 || c.ffn_width < 1) {
      throw ContractError("lossnet: graph widths must be positive");
    }
    if (c.d_model % c.heads != 0) throw ContractError("lossnet: d_model must be divisible by heads");
    if (c.depth < 0) throw ContractError("lossnet: depth must be >= 0");
    if (c.spd_max < 1) throw ContractError("lossnet: spd_max must be >= 1");
  } else {
    if (c.mlp_hidden < 1 || c.mlp_blocks < 0) throw ContractError("lossnet: invalid MLP shape");
  }
  if (c.head_hidden < 1 || c.local_width < 1) throw ContractError("lossnet: head widths must be positive");
}

std::string to_string(LossNetVariant v) { return v == LossNetVariant::kGraph ? "graph" : "mlp"; }

std::string to_string(Mechanism m) {
  switch (m) {
    case Mechanism::kM1: return "m1";
    case Mechanism::kM2: return "m2";
    case Mechanism::kM3: return "m3";
    case Mechanism::kM4: return "m4";
  }
  return "?";
}

LossNetVariant parse_variant(const std::string& s) {
  if (s == "graph") return LossNetVariant::kGraph;
  if (s == "mlp") return LossNetVariant::kMlp;
  throw ContractError("unknown loss-net variant '" + s + "' (expected graph|mlp)");
}

Mechanism parse_mechanism(const std::string& s) {
  if (s == "m1" || s == "M1") return Mechanism::kM1;
  if (s == "m2" || s == "M2") return Mechanism::kM2;
  if (s == "m3" || s == "M3") return Mechanism::kM3;
  if (s == "m4" || s == "M4") return Mechanism::kM4;
  throw ContractError("unknown mechanism '" + s + "' (expected m1|m2|m3|m4)");
}

NodeFeatureSet build_node_features(Mechanism mechanism, const Matrix& x, const Matrix& y,
                                   const SkeletonSpec& spec) {
  const int J = spec.joint_count();
  if (x.rows() != J || x.cols() != 2 || y.rows() != J || y.cols() != 3) {
    throw ContractError("build_node_features: expected J x 2 and J x 3 inputs");
  }
  const Matrix e = Matrix::Identity(J, J);
  auto cat = [J](std::initializer_list<const Matrix*> parts) {
    Eigen::Index cols = 0;
    for (const Matrix* m : parts) cols += m->cols();
    Matrix out(J, cols);
    Eigen::Index off = 0;
    for (const Matrix* m : parts) {
      out.middleCols(off, m->cols()) = *m;
      off += m->cols();
    }
    return out;
  };
  NodeFeatureSet f;
  switch (mechanism) {
    case Mechanism::kM1: f.fused = cat({&y, &e}); break;
    case Mechanism::kM3: f.fused = cat({&x, &y, &e}); break;
    case Mechanism::kM2:
    case Mechanism::kM4:
      f.two_d = cat({&x, &e});
      f.three_d = cat({&y, &e});
      break;
    default: throw ContractError("build_node_features: unknown mechanism");
  }
  return f;
}

LossNetContext LossNetContext::build(const SkeletonSpec& spec, const LossNetConfig& config) {
  if (auto d = validate(spec)) throw StructuralError("lossnet skeleton: " + d->message);
  LossNetContext ctx;
  ctx.joints = spec.joint_count();
  const SpdMatrix spd = compute_spd(spec, config.spd_max);
  const int virtual_bucket = config.spd_max + 1;
  ctx.bucket_count = config.spd_max + 2;
  ctx.attention_index = Eigen::MatrixXi::Constant(ctx.joints + 1, ctx.joints + 1, virtual_bucket);
  ctx.attention_index.bottomRightCorner(ctx.joints, ctx.joints) = spd.buckets();
  return ctx;
}

ParamStore init_lossnet(const LossNetConfig& c, const LossNetContext& ctx) {
  validate(c);
  ParamStore s(c.seed);
  Rng rng(c.seed);
  const int J = ctx.joints;
  const int r = readout_width(c);
  switch (c.mechanism) {
    case Mechanism::kM1:
    case Mechanism::kM3:
      add_encoder(s, "lossnet.encoder", node_width(c.mechanism, J, false), c, ctx, rng);
      add_head(s, "lossnet.head", r, c, rng);
      break;
    case Mechanism::kM2:
      add_encoder(s, "lossnet.encoder2d", node_width(c.mechanism, J, true), c, ctx, rng);
      add_encoder(s, "lossnet.encoder3d", node_width(c.mechanism, J, false), c, ctx, rng);
      s.add_uniform("lossnet.bilinear", r, r, fan_bound(r), rng);
      break;
    case Mechanism::kM4:
      add_encoder(s, "lossnet.encoder", node_width(c.mechanism, J, false), c, ctx, rng);
      add_head(s, "lossnet.head", r, c, rng);
      for (int j = 0; j < J; ++j) {
        const std::string pre = "lossnet.local.joint" + std::to_string(j);
        add_linear(s, pre + ".f2d", 2, c.local_width, rng);
        add_linear(s, pre + ".f3d", 3, c.local_width, rng);
        s.add_uniform(pre + ".coupling", c.local_width, c.local_width, fan_bound(c.local_width), rng);
      }
      break;
  }
  return s;
}

ad::Var attention_mix(const ParamBinding& p, const std::string& prefix, ad::Var normed, ad::Var bias_table,
                      const LossNetConfig& c, const LossNetContext& ctx, Eigen::Index batch,
                      std::vector<Matrix>* probs_out) {
  ad::Var q = linear(p, prefix + ".q", normed);
  ad::Var k = linear(p, prefix + ".k", normed);
  ad::Var v = linear(p, prefix + ".v", normed);
  return ad::multi_head_attention(q, k, v, bias_table, ctx.attention_index,
                                  ad::AttentionShape{batch, ctx.joints + 1, c.heads}, probs_out);
}

ad::Var graph_attention_layer(const ParamBinding& p, const std::string& prefix, ad::Var h, ad::Var bias_table,
                              const LossNetConfig& c, const LossNetContext& ctx, Eigen::Index batch,
                              std::vector<Matrix>* probs_out) {
  if (h.cols() != c.d_model) throw ContractError("graph_attention_layer: feature width must equal d_model");
  ad::Var mixed = attention_mix(p, prefix, norm(p, prefix + ".ln1", h), bias_table, c, ctx, batch, probs_out);
  h = ad::add(h, linear(p, prefix + ".out", mixed));
  ad::Var ff = linear(p, prefix + ".fc2", ad::relu(linear(p, prefix + ".fc1", norm(p, prefix + ".ln2", h))));
  return ad::add(h, ff);
}

ad::Var lossnet_energy(const ParamBinding& p, const LossNetConfig& c, const LossNetContext& ctx, ad::Var x,
                       ad::Var y) {
  const int J = ctx.joints;
  const Eigen::Index B = x.rows();
  if (x.cols() != 2 * J || y.cols() != 3 * J || y.rows() != B) {
    throw ContractError("lossnet_energy: expected B x 2J inputs and B x 3J poses");
  }
  ad::Tape& tape = p.tape();
  ad::Var onehot = tape.constant(one_hot_rows(B, J));
  ad::Var x2 = ad::reshape(x, B * J, 2);
  ad::Var y3 = ad::reshape(y, B * J, 3);

  switch (c.mechanism) {
    case Mechanism::kM1: {
      const ad::Var parts[] = {y3, onehot};
      return scalar_head(p, "lossnet.head", encode(p, "lossnet.encoder", ad::concat_cols(parts), c, ctx, B));
    }
    case Mechanism::kM3: {
      const ad::Var parts[] = {x2, y3, onehot};
      return scalar_head(p, "lossnet.head", encode(p, "lossnet.encoder", ad::concat_cols(parts), c, ctx, B));
    }
    case Mechanism::kM2: {
      const ad::Var parts2[] = {x2, onehot};
      const ad::Var parts3[] = {y3, onehot};
      ad::Var g2 = encode(p, "lossnet.encoder2d", ad::concat_cols(parts2), c, ctx, B);
      ad::Var g3 = encode(p, "lossnet.encoder3d", ad::concat_cols(parts3), c, ctx, B);
      return ad::row_sum(ad::cwise_mul(ad::matmul(g2, p["lossnet.bilinear"]), g3));
    }
    case Mechanism::kM4: {
      const ad::Var parts3[] = {y3, onehot};
      ad::Var energy =
          scalar_head(p, "lossnet.head", encode(p, "lossnet.encoder", ad::concat_cols(parts3), c, ctx, B));
      for (int j = 0; j < J; ++j) {
        const std::string pre = "lossnet.local.joint" + std::to_string(j);
        ad::Var a = linear(p, pre + ".f2d", ad::slice_cols(x, 2 * j, 2));
        ad::Var b = linear(p, pre + ".f3d", ad::slice_cols(y, 3 * j, 3));
        energy = ad::add(energy, ad::row_sum(ad::cwise_mul(ad::matmul(a, p[pre + ".coupling"]), b)));
      }
      return energy;
    }
  }
  throw ContractError("lossnet_energy: unknown mechanism");
}

Matrix lossnet_energies(const ParamStore& params, const LossNetConfig& config, const LossNetContext& ctx,
                        const Matrix& x, const Matrix& y) {
  ad::Tape tape;
  ParamBinding bound(tape, params, false);
  return lossnet_energy(bound, config, ctx, tape.constant(x), tape.constant(y)).value();
}

nlohmann::json to_json(const LossNetConfig& c) {
  return {{"variant", to_string(c.variant)},
          {"mechanism", to_string(c.mechanism)},
          {"d_embed", c.d_embed},
          {"d_model", c.d_model},
          {"heads", c.heads},
          {"depth", c.depth},
          {"spd_max", c.spd_max},
          {"ffn_width", c.ffn_width},
          {"edge_path_bias", c.edge_path_bias},
          {"mlp_hidden", c.mlp_hidden},
          {"mlp_blocks", c.mlp_blocks},
          {"head_hidden", c.head_hidden},
          {"local_width", c.local_width},
          {"seed", c.seed}};
}

LossNetConfig lossnet_from_json(const nlohmann::json& j) {
  LossNetConfig c;
  if (j.contains("variant")) c.variant = parse_variant(j.at("variant").get<std::string>());
  if (j.contains("mechanism")) c.mechanism = parse_mechanism(j.at("mechanism").get<std::string>());
  c.d_embed = j.value("d_embed", c.d_embed);
  c.d_model = j.value("d_model", c.d_model);
  c.heads = j.value("heads", c.heads);
  c.depth = j.value("depth", c.depth);
  c.spd_max = j.value("spd_max", c.spd_max);
  c.ffn_width = j.value("ffn_width", c.ffn_width);
  c.edge_path_bias = j.value("edge_path_bias", c.edge_path_bias);
  c.mlp_hidden = j.value("mlp_hidden", c.mlp_hidden);
  c.mlp_blocks = j.value("mlp_blocks", c.mlp_blocks);
  c.head_hidden = j.value("head_hidden", c.head_hidden);
  c.local_width = j.value("local_width", c.local_width);
  c.seed = j.value("seed", c.seed);
  return c;
}

}  // namespace sealpose
