#include "sealpose/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace sealpose::ad {

std::string_view op_name(OpKind op) {
  switch (op) {
    case OpKind::kConstant: return "constant";
    case OpKind::kVariable: return "variable";
    case OpKind::kParameter: return "parameter";
    case OpKind::kAdd: return "add";
    case OpKind::kSub: return "sub";
    case OpKind::kScale: return "scale";
    case OpKind::kAddScalar: return "add_scalar";
    case OpKind::kCwiseMul: return "cwise_mul";
    case OpKind::kMatmul: return "matmul";
    case OpKind::kAddRow: return "add_row";
    case OpKind::kRelu: return "relu";
    case OpKind::kSquare: return "square";
    case OpKind::kAbs: return "abs";
    case OpKind::kSoftplus: return "softplus";
    case OpKind::kSum: return "sum";
    case OpKind::kMean: return "mean";
    case OpKind::kRowSum: return "row_sum";
    case OpKind::kConcatCols: return "concat_cols";
    case OpKind::kSliceCols: return "slice_cols";
    case OpKind::kGatherRows: return "gather_rows";
    case OpKind::kReshape: return "reshape";
    case OpKind::kLayerNorm: return "layer_norm";
    case OpKind::kAttention: return "attention";
  }
  return "unknown";
}

const Matrix& Var::value() const { return tape_->value(id_); }
const Matrix& Var::grad() const { return tape_->grad(id_); }
bool Var::requires_grad() const { return tape_->requires_grad(id_); }

double Var::scalar() const {
  const Matrix& v = value();
  if (v.rows() != 1 || v.cols() != 1) {
    throw ContractError("Var::scalar on a non-scalar node");
  }
  return v(0, 0);
}

Var Tape::push_leaf(Matrix value, OpKind op, bool requires_grad) {
  Node node;
  node.value = std::move(value);
  node.op = op;
  node.requires_grad = requires_grad;
  nodes_.push_back(std::move(node));
  return Var(this, nodes_.size() - 1);
}

Var Tape::constant(Matrix value) { return push_leaf(std::move(value), OpKind::kConstant, false); }

Var Tape::variable(Matrix value) { return push_leaf(std::move(value), OpKind::kVariable, true); }

Var Tape::parameter(const std::string& name, Matrix value) {
  if (parameters_.contains(name)) {
    throw ContractError("parameter '" + name + "' registered twice on one tape");
  }
  Var v = push_leaf(std::move(value), OpKind::kParameter, true);
  parameters_.emplace(name, v.id());
  return v;
}

Var Tape::push(Matrix value, OpKind op, std::span<const Var> parents, BackwardFn backward) {
  Node node;
  node.value = std::move(value);
  node.op = op;
  const std::size_t self = nodes_.size();
  for (const Var& p : parents) {
    if (p.tape() != this) {
      throw StructuralError(std::string(op_name(op)) + ": operand belongs to a different tape");
    }
    // Parents must precede the node; anything else would close a cycle.
    if (p.id() >= self) {
      throw StructuralError(std::string(op_name(op)) + ": cycle detected");
    }
    node.parents.push_back(p.id());
    node.requires_grad = node.requires_grad || nodes_[p.id()].requires_grad;
  }
  if (node.requires_grad) node.backward = std::move(backward);
  nodes_.push_back(std::move(node));
  return Var(this, self);
}

namespace {

// A non-finite sum means a non-finite entry or an overflowing sum; only
// the first case is an error, so confirm with the exact scan.
bool finite(const Matrix& m) { return std::isfinite(m.sum()) || m.allFinite(); }

}  // namespace

void Tape::backward(Var root) {
  if (root.tape() != this) throw StructuralError("backward: root belongs to a different tape");
  const Node& r = nodes_[root.id()];
  if (r.value.rows() != 1 || r.value.cols() != 1) {
    throw ContractError("backward: root must be a scalar node");
  }
  for (Node& n : nodes_) n.grad.resize(0, 0);
  nodes_[root.id()].grad = Matrix::Ones(1, 1);

  for (std::size_t i = root.id() + 1; i-- > 0;) {
    Node& n = nodes_[i];
    if (n.grad.size() == 0) continue;
    if (!finite(n.value) || !finite(n.grad)) {
      std::ostringstream msg;
      msg << "non-finite " << (n.value.allFinite() ? "gradient" : "value") << " at node #" << i
          << " (" << op_name(n.op) << ")";
      throw NumericError(msg.str());
    }
    if (n.backward) n.backward(*this, i);
  }
}

GradientMap Tape::parameter_gradients() const {
  GradientMap out;
  for (const auto& [name, id] : parameters_) {
    const Node& n = nodes_[id];
    if (n.grad.size() == 0) {
      out.emplace(name, Matrix::Zero(n.value.rows(), n.value.cols()));
    } else {
      out.emplace(name, n.grad);
    }
  }
  return out;
}

void Tape::clear() {
  nodes_.clear();
  parameters_.clear();
}

namespace {

void require_same_shape(Var a, Var b, std::string_view op) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    std::ostringstream msg;
    msg << op << ": shape mismatch (" << a.rows() << "x" << a.cols() << " vs " << b.rows() << "x"
        << b.cols() << ")";
    throw ContractError(msg.str());
  }
}

Tape& tape_of(Var a) {
  if (!a.valid()) throw ContractError("operation on an unbound Var");
  return *a.tape();
}

}  // namespace

Var add(Var a, Var b) {
  require_same_shape(a, b, "add");
  const std::size_t ia = a.id(), ib = b.id();
  const Var parents[] = {a, b};
  return tape_of(a).push(a.value() + b.value(), OpKind::kAdd, parents,
                         [ia, ib](Tape& t, std::size_t self) {
                           if (t.requires_grad(ia)) t.accumulate(ia, t.grad(self));
                           if (t.requires_grad(ib)) t.accumulate(ib, t.grad(self));
                         });
}

Var sub(Var a, Var b) {
  require_same_shape(a, b, "sub");
  const std::size_t ia = a.id(), ib = b.id();
  const Var parents[] = {a, b};
  return tape_of(a).push(a.value() - b.value(), OpKind::kSub, parents,
                         [ia, ib](Tape& t, std::size_t self) {
                           if (t.requires_grad(ia)) t.accumulate(ia, t.grad(self));
                           if (t.requires_grad(ib)) t.accumulate(ib, -t.grad(self));
                         });
}

Var scale(Var a, double s) {
  const std::size_t ia = a.id();
  const Var parents[] = {a};
  return tape_of(a).push(s * a.value(), OpKind::kScale, parents,
                         [ia, s](Tape& t, std::size_t self) { t.accumulate(ia, s * t.grad(self)); });
}

Var add_scalar(Var a, double s) {
  const std::size_t ia = a.id();
  const Var parents[] = {a};
  Matrix out = a.value().array() + s;
  return tape_of(a).push(std::move(out), OpKind::kAddScalar, parents,
                         [ia](Tape& t, std::size_t self) { t.accumulate(ia, t.grad(self)); });
}

Var cwise_mul(Var a, Var b) {
  require_same_shape(a, b, "cwise_mul");
  const std::size_t ia = a.id(), ib = b.id();
  const Var parents[] = {a, b};
  return tape_of(a).push(a.value().cwiseProduct(b.value()), OpKind::kCwiseMul, parents,
                         [ia, ib](Tape& t, std::size_t self) {
                           const Matrix& g = t.grad(self);
                           if (t.requires_grad(ia)) t.accumulate(ia, g.cwiseProduct(t.value(ib)));
                           if (t.requires_grad(ib)) t.accumulate(ib, g.cwiseProduct(t.value(ia)));
                         });
}

Var matmul(Var a, Var b) {
  if (a.cols() != b.rows()) {
    std::ostringstream msg;
    msg << "matmul: inner dimensions differ (" << a.rows() << "x" << a.cols() << " * " << b.rows()
        << "x" << b.cols() << ")";
    throw ContractError(msg.str());
  }
  const std::size_t ia = a.id(), ib = b.id();
  const Var parents[] = {a, b};
  Matrix out = a.value() * b.value();
  return tape_of(a).push(std::move(out), OpKind::kMatmul, parents,
                         [ia, ib](Tape& t, std::size_t self) {
                           const Matrix& g = t.grad(self);
                           if (t.requires_grad(ia)) {
                             Matrix ga = g * t.value(ib).transpose();
                             t.accumulate(ia, ga);
                           }
                           if (t.requires_grad(ib)) {
                             Matrix gb = t.value(ia).transpose() * g;
                             t.accumulate(ib, gb);
                           }
                         });
}

Var add_row(Var a, Var row) {
  if (row.rows() != 1 || row.cols() != a.cols()) {
    throw ContractError("add_row: bias must be 1 x cols(a)");
  }
  const std::size_t ia = a.id(), ir = row.id();
  const Var parents[] = {a, row};
  Matrix out = a.value().rowwise() + row.value().row(0);
  return tape_of(a).push(std::move(out), OpKind::kAddRow, parents,
                         [ia, ir](Tape& t, std::size_t self) {
                           const Matrix& g = t.grad(self);
                           if (t.requires_grad(ia)) t.accumulate(ia, g);
                           if (t.requires_grad(ir)) t.accumulate(ir, g.colwise().sum());
                         });
}

Var relu(Var a) {
  const std::size_t ia = a.id();
  const Var parents[] = {a};
  Matrix out = a.value().cwiseMax(0.0);
  return tape_of(a).push(std::move(out), OpKind::kRelu, parents,
                         [ia](Tape& t, std::size_t self) {
                           const Matrix& x = t.value(ia);
                           Matrix g = (x.array() > 0.0).select(t.grad(self), 0.0);
                           t.accumulate(ia, g);
                         });
}

Var square(Var a) {
  const std::size_t ia = a.id();
  const Var parents[] = {a};
  return tape_of(a).push(a.value().array().square().matrix(), OpKind::kSquare, parents,
                         [ia](Tape& t, std::size_t self) {
                           t.accumulate(ia, 2.0 * t.grad(self).cwiseProduct(t.value(ia)));
                         });
}

Var abs(Var a) {
  const std::size_t ia = a.id();
  const Var parents[] = {a};
  return tape_of(a).push(a.value().cwiseAbs(), OpKind::kAbs, parents,
                         [ia](Tape& t, std::size_t self) {
                           const Matrix& x = t.value(ia);
                           Matrix sign = x.unaryExpr([](double v) {
                             return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0);
                           });
                           t.accumulate(ia, t.grad(self).cwiseProduct(sign));
                         });
}

Var softplus(Var a) {
  const std::size_t ia = a.id();
  const Var parents[] = {a};
  Matrix out = a.value().unaryExpr(
      [](double v) { return std::max(v, 0.0) + std::log1p(std::exp(-std::abs(v))); });
  return tape_of(a).push(std::move(out), OpKind::kSoftplus, parents,
                         [ia](Tape& t, std::size_t self) {
                           Matrix sig = t.value(ia).unaryExpr([](double v) {
                             if (v >= 0.0) return 1.0 / (1.0 + std::exp(-v));
                             const double e = std::exp(v);
                             return e / (1.0 + e);
                           });
                           t.accumulate(ia, t.grad(self).cwiseProduct(sig));
                         });
}

Var sum(Var a) {
  const std::size_t ia = a.id();
  const Var parents[] = {a};
  Matrix out(1, 1);
  out(0, 0) = a.value().sum();
  return tape_of(a).push(std::move(out), OpKind::kSum, parents,
                         [ia](Tape& t, std::size_t self) {
                           const Matrix& x = t.value(ia);
                           t.accumulate(ia, Matrix::Constant(x.rows(), x.cols(), t.grad(self)(0, 0)));
                         });
}

Var mean(Var a) {
  if (a.value().size() == 0) throw ContractError("mean: empty operand");
  const std::size_t ia = a.id();
  const Var parents[] = {a};
  Matrix out(1, 1);
  out(0, 0) = a.value().mean();
  return tape_of(a).push(std::move(out), OpKind::kMean, parents,
                         [ia](Tape& t, std::size_t self) {
                           const Matrix& x = t.value(ia);
                           const double g = t.grad(self)(0, 0) / static_cast<double>(x.size());
                           t.accumulate(ia, Matrix::Constant(x.rows(), x.cols(), g));
                         });
}

Var row_sum(Var a) {
  const std::size_t ia = a.id();
  const Var parents[] = {a};
  Matrix out = a.value().rowwise().sum();
  return tape_of(a).push(std::move(out), OpKind::kRowSum, parents,
                         [ia](Tape& t, std::size_t self) {
                           const Matrix& x = t.value(ia);
                           Matrix g = t.grad(self).replicate(1, x.cols());
                           t.accumulate(ia, g);
                         });
}

Var concat_cols(std::span<const Var> parts) {
  if (parts.empty()) throw ContractError("concat_cols: no operands");
  const Eigen::Index rows = parts.front().rows();
  Eigen::Index cols = 0;
  for (const Var& p : parts) {
    if (p.rows() != rows) throw ContractError("concat_cols: row counts differ");
    cols += p.cols();
  }
  Matrix out(rows, cols);
  std::vector<std::size_t> ids;
  std::vector<Eigen::Index> offsets;
  Eigen::Index offset = 0;
  for (const Var& p : parts) {
    out.middleCols(offset, p.cols()) = p.value();
    ids.push_back(p.id());
    offsets.push_back(offset);
    offset += p.cols();
  }
  return tape_of(parts.front())
      .push(std::move(out), OpKind::kConcatCols, parts,
            [ids, offsets](Tape& t, std::size_t self) {
              const Matrix& g = t.grad(self);
              for (std::size_t i = 0; i < ids.size(); ++i) {
                if (!t.requires_grad(ids[i])) continue;
                t.accumulate(ids[i], g.middleCols(offsets[i], t.value(ids[i]).cols()));
              }
            });
}

Var slice_cols(Var a, Eigen::Index start, Eigen::Index count) {
  if (start < 0 || count < 0 || start + count > a.cols()) {
    throw ContractError("slice_cols: range out of bounds");
  }
  const std::size_t ia = a.id();
  const Var parents[] = {a};
  Matrix out = a.value().middleCols(start, count);
  return tape_of(a).push(std::move(out), OpKind::kSliceCols, parents,
                         [ia, start, count](Tape& t, std::size_t self) {
                           const Matrix& x = t.value(ia);
                           Matrix g = Matrix::Zero(x.rows(), x.cols());
                           g.middleCols(start, count) = t.grad(self);
                           t.accumulate(ia, g);
                         });
}

Var gather_rows(Var a, std::span<const Eigen::Index> indices) {
  std::vector<Eigen::Index> idx(indices.begin(), indices.end());
  Matrix out(static_cast<Eigen::Index>(idx.size()), a.cols());
  for (std::size_t r = 0; r < idx.size(); ++r) {
    if (idx[r] < 0 || idx[r] >= a.rows()) throw ContractError("gather_rows: index out of bounds");
    out.row(static_cast<Eigen::Index>(r)) = a.value().row(idx[r]);
  }
  const std::size_t ia = a.id();
  const Var parents[] = {a};
  return tape_of(a).push(std::move(out), OpKind::kGatherRows, parents,
                         [ia, idx = std::move(idx)](Tape& t, std::size_t self) {
                           const Matrix& x = t.value(ia);
                           const Matrix& g = t.grad(self);
                           Matrix acc = Matrix::Zero(x.rows(), x.cols());
                           for (std::size_t r = 0; r < idx.size(); ++r) {
                             acc.row(idx[r]) += g.row(static_cast<Eigen::Index>(r));
                           }
                           t.accumulate(ia, acc);
                         });
}

Var reshape(Var a, Eigen::Index rows, Eigen::Index cols) {
  if (rows * cols != a.value().size()) throw ContractError("reshape: element count changes");
  const std::size_t ia = a.id();
  const Eigen::Index in_rows = a.rows(), in_cols = a.cols();
  const Var parents[] = {a};
  Matrix out = Eigen::Map<const Matrix>(a.value().data(), rows, cols);
  return tape_of(a).push(std::move(out), OpKind::kReshape, parents,
                         [ia, in_rows, in_cols](Tape& t, std::size_t self) {
                           const Matrix& g = t.grad(self);
                           t.accumulate(ia, Eigen::Map<const Matrix>(g.data(), in_rows, in_cols));
                         });
}

Var layer_norm(Var a, Var gain, Var bias, double eps) {
  const Eigen::Index m = a.cols();
  if (gain.rows() != 1 || gain.cols() != m || bias.rows() != 1 || bias.cols() != m) {
    throw ContractError("layer_norm: gain and bias must be 1 x cols");
  }
  const Matrix& x = a.value();
  Vector inv_std(x.rows());
  Matrix xhat(x.rows(), m);
  for (Eigen::Index r = 0; r < x.rows(); ++r) {
    const double mu = x.row(r).mean();
    const double var = (x.row(r).array() - mu).square().mean();
    inv_std(r) = 1.0 / std::sqrt(var + eps);
    xhat.row(r) = (x.row(r).array() - mu) * inv_std(r);
  }
  Matrix out = (xhat.array().rowwise() * gain.value().row(0).array()).matrix();
  out.rowwise() += bias.value().row(0);
  const std::size_t ia = a.id(), ig = gain.id(), ib = bias.id();
  const Var parents[] = {a, gain, bias};
  return tape_of(a).push(
      std::move(out), OpKind::kLayerNorm, parents,
      [ia, ig, ib, xhat = std::move(xhat), inv_std = std::move(inv_std)](Tape& t, std::size_t self) {
        const Matrix& g = t.grad(self);
        if (t.requires_grad(ig)) t.accumulate(ig, g.cwiseProduct(xhat).colwise().sum());
        if (t.requires_grad(ib)) t.accumulate(ib, g.colwise().sum());
        if (t.requires_grad(ia)) {
          Matrix dxhat = (g.array().rowwise() * t.value(ig).row(0).array()).matrix();
          Matrix dx(g.rows(), g.cols());
          for (Eigen::Index r = 0; r < g.rows(); ++r) {
            const double mean_d = dxhat.row(r).mean();
            const double mean_dx = dxhat.row(r).dot(xhat.row(r)) / static_cast<double>(g.cols());
            dx.row(r) = inv_std(r) * (dxhat.row(r).array() - mean_d - xhat.row(r).array() * mean_dx);
          }
          t.accumulate(ia, dx);
        }
      });
}

Var multi_head_attention(Var q, Var k, Var v, Var table, const Eigen::MatrixXi& index,
                         AttentionShape shape, std::vector<Matrix>* probs_out) {
  require_same_shape(q, k, "attention");
  require_same_shape(q, v, "attention");
  const Eigen::Index batch = shape.batch, nodes = shape.nodes, heads = shape.heads;
  const Eigen::Index d = q.cols();
  if (heads < 1 || d % heads != 0) throw ContractError("attention: width not divisible by heads");
  if (q.rows() != batch * nodes) throw ContractError("attention: rows != batch * nodes");
  if (index.rows() != nodes || index.cols() != nodes) throw ContractError("attention: bad bias index");
  if (table.rows() != heads) throw ContractError("attention: bias table must have one row per head");
  if (index.minCoeff() < 0 || index.maxCoeff() >= table.cols()) {
    throw ContractError("attention: bias index outside table");
  }
  const Eigen::Index dh = d / heads;
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(dh));

  const Matrix& Q = q.value();
  const Matrix& K = k.value();
  const Matrix& V = v.value();
  const Matrix& T = table.value();

  Matrix bias_h(nodes, nodes);
  std::vector<Matrix> probs(static_cast<std::size_t>(batch * heads));
  Matrix out(batch * nodes, d);
  for (Eigen::Index h = 0; h < heads; ++h) {
    for (Eigen::Index i = 0; i < nodes; ++i) {
      for (Eigen::Index j = 0; j < nodes; ++j) bias_h(i, j) = T(h, index(i, j));
    }
    for (Eigen::Index b = 0; b < batch; ++b) {
      const auto qb = Q.block(b * nodes, h * dh, nodes, dh);
      const auto kb = K.block(b * nodes, h * dh, nodes, dh);
      const auto vb = V.block(b * nodes, h * dh, nodes, dh);
      Matrix s = (qb * kb.transpose()) * inv_sqrt + bias_h;
      if (!s.allFinite()) throw NumericError("attention: non-finite logits");
      for (Eigen::Index i = 0; i < nodes; ++i) {
        const double mx = s.row(i).maxCoeff();
        s.row(i) = (s.row(i).array() - mx).exp();
        s.row(i) /= s.row(i).sum();
      }
      out.block(b * nodes, h * dh, nodes, dh).noalias() = s * vb;
      probs[static_cast<std::size_t>(b * heads + h)] = std::move(s);
    }
  }
  if (probs_out != nullptr) *probs_out = probs;

  const std::size_t iq = q.id(), ik = k.id(), iv = v.id(), it = table.id();
  const Var parents[] = {q, k, v, table};
  return tape_of(q).push(
      std::move(out), OpKind::kAttention, parents,
      [=, probs = std::move(probs)](Tape& t, std::size_t self) {
        const Matrix& G = t.grad(self);
        const Matrix& Qv = t.value(iq);
        const Matrix& Kv = t.value(ik);
        const Matrix& Vv = t.value(iv);
        const bool need_q = t.requires_grad(iq), need_k = t.requires_grad(ik);
        const bool need_v = t.requires_grad(iv), need_t = t.requires_grad(it);
        Matrix dQ, dK, dV, dT;
        if (need_q) dQ = Matrix::Zero(Qv.rows(), Qv.cols());
        if (need_k) dK = Matrix::Zero(Kv.rows(), Kv.cols());
        if (need_v) dV = Matrix::Zero(Vv.rows(), Vv.cols());
        if (need_t) dT = Matrix::Zero(t.value(it).rows(), t.value(it).cols());
        for (Eigen::Index h = 0; h < heads; ++h) {
          for (Eigen::Index b = 0; b < batch; ++b) {
            const Matrix& P = probs[static_cast<std::size_t>(b * heads + h)];
            const auto gb = G.block(b * nodes, h * dh, nodes, dh);
            const auto vb = Vv.block(b * nodes, h * dh, nodes, dh);
            if (need_v) dV.block(b * nodes, h * dh, nodes, dh).noalias() += P.transpose() * gb;
            if (!(need_q || need_k || need_t)) continue;
            Matrix dP = gb * vb.transpose();
            Vector rs = dP.cwiseProduct(P).rowwise().sum();
            Matrix dS = P.cwiseProduct((dP.colwise() - rs));
            if (need_t) {
              for (Eigen::Index i = 0; i < nodes; ++i) {
                for (Eigen::Index j = 0; j < nodes; ++j) dT(h, index(i, j)) += dS(i, j);
              }
            }
            if (need_q) {
              dQ.block(b * nodes, h * dh, nodes, dh).noalias() +=
                  inv_sqrt * (dS * Kv.block(b * nodes, h * dh, nodes, dh));
            }
            if (need_k) {
              dK.block(b * nodes, h * dh, nodes, dh).noalias() +=
                  inv_sqrt * (dS.transpose() * Qv.block(b * nodes, h * dh, nodes, dh));
            }
          }
        }
        if (need_q) t.accumulate(iq, dQ);
        if (need_k) t.accumulate(ik, dK);
        if (need_v) t.accumulate(iv, dV);
        if (need_t) t.accumulate(it, dT);
      });
}

}  // namespace sealpose::ad
