#include "ffr/tape.hpp"

#include <cmath>

#include "ffr/params.hpp"

namespace ffr::ad {

const ArrayD& Tensor::value() const { return tape->value(*this); }

Tensor Tape::constant(ArrayD v) {
  int id = add_node(std::move(v), {}, nullptr, 0);
  nodes_[id].needs_grad = false;
  return {this, id};
}

Tensor Tape::input(ArrayD v) {
  int id = add_node(std::move(v), {}, nullptr, 0);
  nodes_[id].needs_grad = true;
  return {this, id};
}

Tensor Tape::param(ParamStore& store, const std::string& name) {
  int id = add_node(store.value(name), {}, nullptr, 0);
  nodes_[id].needs_grad = true;
  nodes_[id].store = &store;
  nodes_[id].pname = name;
  return {this, id};
}

int Tape::add_node(ArrayD value, std::vector<int> parents, BackFn back, double op_flops) {
  Node n;
  n.value = std::move(value);
  n.parents = std::move(parents);
  n.back = std::move(back);
  for (int p : n.parents)
    if (nodes_[p].needs_grad) n.needs_grad = true;
  flops_ += op_flops;
  nodes_.push_back(std::move(n));
  return static_cast<int>(nodes_.size()) - 1;
}

ArrayD& Tape::adjoint(int id) {
  Node& n = nodes_[id];
  if (n.adj.empty()) n.adj = ArrayD(n.value.shape());
  return n.adj;
}

void Tape::backward(const Tensor& loss) {
  if (backward_ran_) throw std::runtime_error("tape: backward already ran; reset() first");
  if (loss.tape != this || loss.id < 0) throw std::invalid_argument("tape: foreign loss tensor");
  if (nodes_[loss.id].value.size() != 1)
    throw std::invalid_argument("tape: loss must be scalar, got shape " +
                                shape_str(nodes_[loss.id].value.shape()));
  backward_ran_ = true;
  adjoint(loss.id)[0] = 1.0;
  for (int i = loss.id; i >= 0; --i) {
    Node& n = nodes_[i];
    if (!n.needs_grad || n.adj.empty()) continue;
    if (n.back) n.back(*this, i);
    if (n.store) {
      ArrayD& g = n.store->grad(n.pname);
      for (Index t = 0; t < g.size(); ++t) g[t] += n.adj[t];
    }
  }
}

const ArrayD& Tape::grad(const Tensor& t) {
  if (!backward_ran_) throw std::runtime_error("tape: grad requested before backward");
  return adjoint(t.id);
}

void Tape::reset() {
  nodes_.clear();
  backward_ran_ = false;
  flops_ = 0;
}

}  // namespace ffr::ad
