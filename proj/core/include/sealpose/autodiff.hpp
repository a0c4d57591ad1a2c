#pragma once

// Reverse-mode automatic differentiation over an eager tape of dense 2-D
// matrix nodes. A scalar is a 1x1 node. Nodes are appended in evaluation
// order, so the tape is a topological order by construction and backward()
// is a single reverse sweep.

#include <cstddef>
#include <functional>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Core>

#include "sealpose/errors.hpp"
#include "sealpose/types.hpp"

namespace sealpose::ad {

enum class OpKind {
  kConstant,
  kVariable,
  kParameter,
  kAdd,
  kSub,
  kScale,
  kAddScalar,
  kCwiseMul,
  kMatmul,
  kAddRow,
  kRelu,
  kSquare,
  kAbs,
  kSoftplus,
  kSum,
  kMean,
  kRowSum,
  kConcatCols,
  kSliceCols,
  kGatherRows,
  kReshape,
  kLayerNorm,
  kAttention,
};

std::string_view op_name(OpKind op);

class Tape;

/// Lightweight handle to a node on a tape.
class Var {
 public:
  Var() = default;

  const Matrix& value() const;
  /// Empty until backward() reaches this node.
  const Matrix& grad() const;
  Eigen::Index rows() const { return value().rows(); }
  Eigen::Index cols() const { return value().cols(); }
  double scalar() const;
  bool requires_grad() const;
  std::size_t id() const { return id_; }
  Tape* tape() const { return tape_; }
  bool valid() const { return tape_ != nullptr; }

 private:
  friend class Tape;
  Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

using GradientMap = std::map<std::string, Matrix>;

class Tape {
 public:
  using BackwardFn = std::function<void(Tape&, std::size_t)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Matrix value);
  /// Leaf that receives a gradient but is not reported as a parameter.
  Var variable(Matrix value);
  /// Named leaf; its gradient is returned by parameter_gradients().
  Var parameter(const std::string& name, Matrix value);

  /// Seeds d(root)/d(root) = 1 and sweeps the tape once in reverse.
  /// Throws NumericError naming the first non-finite node encountered.
  void backward(Var root);

  /// Gradients for every registered parameter (zeros if unreached).
  GradientMap parameter_gradients() const;

  std::size_t size() const { return nodes_.size(); }
  void clear();

  // -- op implementer interface ------------------------------------------
  Var push(Matrix value, OpKind op, std::span<const Var> parents, BackwardFn backward);

  const Matrix& value(std::size_t id) const { return node(id).value; }
  const Matrix& grad(std::size_t id) const { return node(id).grad; }
  bool requires_grad(std::size_t id) const { return node(id).requires_grad; }
  OpKind op(std::size_t id) const { return nodes_[id].op; }

  template <typename Derived>
  void accumulate(std::size_t id, const Eigen::MatrixBase<Derived>& g) {
    Matrix& dst = nodes_[id].grad;
    if (dst.size() == 0) {
      dst = g;
    } else {
      dst += g;
    }
  }

 private:
  struct Node {
    Matrix value;
    Matrix grad;
    std::vector<std::size_t> parents;
    BackwardFn backward;
    OpKind op = OpKind::kConstant;
    bool requires_grad = false;
  };

  Var push_leaf(Matrix value, OpKind op, bool requires_grad);
  const Node& node(std::size_t id) const {
    // An id past the end is a handle that outlived a clear(); using it as an
    // operand would point forward in the tape.
    if (id >= nodes_.size()) throw StructuralError("stale Var handle: cycle detected");
    return nodes_[id];
  }

  std::vector<Node> nodes_;
  std::map<std::string, std::size_t> parameters_;
};

// -- operations ------------------------------------------------------------
// All binary ops require both operands on the same tape.

Var add(Var a, Var b);
Var sub(Var a, Var b);
Var scale(Var a, double s);
Var add_scalar(Var a, double s);
Var cwise_mul(Var a, Var b);
Var matmul(Var a, Var b);
/// a (n x m) + row (1 x m) broadcast over rows.
Var add_row(Var a, Var row);
Var relu(Var a);
Var square(Var a);
/// Subgradient 0 at 0.
Var abs(Var a);
/// log(1 + exp(a)), evaluated without overflow.
Var softplus(Var a);
Var sum(Var a);
Var mean(Var a);
/// (n x m) -> (n x 1).
Var row_sum(Var a);
Var concat_cols(std::span<const Var> parts);
Var slice_cols(Var a, Eigen::Index start, Eigen::Index count);
/// Output row r is input row indices[r]; gradients scatter-add back.
Var gather_rows(Var a, std::span<const Eigen::Index> indices);
/// Row-major reinterpretation; rows * cols must be preserved.
Var reshape(Var a, Eigen::Index rows, Eigen::Index cols);
/// Per-row normalization with learnable gain and bias rows (1 x m).
Var layer_norm(Var a, Var gain, Var bias, double eps = 1e-5);

/// Batched multi-head self-attention over blocks of `nodes` consecutive rows.
///
/// For every block b and head h with width dh = d / heads:
///   S = Q_bh K_bh^T / sqrt(dh) + table(h, index(i, j))
///   P = softmax_rows(S),  out_bh = P V_bh
/// `table` is (heads x n_buckets) and receives gradients; `index` is a
/// constant (nodes x nodes) bucket map shared by all blocks.
struct AttentionShape {
  Eigen::Index batch = 1;
  Eigen::Index nodes = 1;
  Eigen::Index heads = 1;
};
Var multi_head_attention(Var q, Var k, Var v, Var table, const Eigen::MatrixXi& index,
                         AttentionShape shape, std::vector<Matrix>* probs_out = nullptr);

inline Var operator+(Var a, Var b) { return add(a, b); }
inline Var operator-(Var a, Var b) { return sub(a, b); }
inline Var operator*(double s, Var a) { return scale(a, s); }

}  // namespace sealpose::ad
