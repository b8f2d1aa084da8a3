#pragma once

#include <functional>
#include <string>
#include <vector>

#include "ffr/ndarray.hpp"

namespace ffr {
class ParamStore;
}

namespace ffr::ad {

class Tape;

/// Handle to a node on a tape. Cheap to copy; valid until Tape::reset().
struct Tensor {
  Tape* tape = nullptr;
  int id = -1;

  bool valid() const { return tape != nullptr && id >= 0; }
  const ArrayD& value() const;
  const Shape& shape() const { return value().shape(); }
};

/// Reverse-mode tape. One training step owns one tape: record a forward
/// program, call backward(loss) once, read gradients, reset.
class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  /// Non-differentiable value (no adjoint is propagated into it).
  Tensor constant(ArrayD v);

  /// Differentiable leaf (network inputs under test, etc.).
  Tensor input(ArrayD v);

  /// Differentiable leaf bound to a ParamStore entry; backward() accumulates
  /// the adjoint into the entry's gradient slot.
  Tensor param(ParamStore& store, const std::string& name);

  /// Runs the adjoint pass from a scalar loss. Rejected if already run on
  /// this tape without reset().
  void backward(const Tensor& loss);

  const ArrayD& value(const Tensor& t) const { return nodes_[t.id].value; }
  /// Gradient of the last backward() w.r.t. a differentiable node
  /// (exact zero for nodes the loss does not reach).
  const ArrayD& grad(const Tensor& t);

  void reset();
  size_t num_nodes() const { return nodes_.size(); }

  /// Analytic cost of the recorded forward program (see ops for the per-op
  /// accounting rules).
  double flops() const { return flops_; }

  // --- used by op implementations ---
  using BackFn = std::function<void(Tape&, int self)>;
  int add_node(ArrayD value, std::vector<int> parents, BackFn back, double op_flops);
  bool needs_grad(int id) const { return nodes_[id].needs_grad; }
  ArrayD& adjoint(int id);             // lazily zero-initialized
  const ArrayD& node_value(int id) const { return nodes_[id].value; }
  const std::vector<int>& parents(int id) const { return nodes_[id].parents; }

 private:
  struct Node {
    ArrayD value;
    ArrayD adj;  // empty until touched in backward
    std::vector<int> parents;
    BackFn back;
    bool needs_grad = false;
    ParamStore* store = nullptr;
    std::string pname;
  };
  std::vector<Node> nodes_;
  bool backward_ran_ = false;
  double flops_ = 0;
};

}  // namespace ffr::ad
