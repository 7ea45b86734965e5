#include "ssmnd/tape.hpp"

#include "ssmnd/errors.hpp"

namespace ssmnd {

const NdArray& Var::value() const { return tape_->value(id_); }

bool Var::requires_grad() const { return tape_->requires_grad(id_); }

NdArray Gradients::of(Var v) const {
  if (has(v)) return *grads_[v.id()];
  return NdArray(v.shape(), 0.0);
}

Var Tape::leaf(NdArray value) {
  nodes_.push_back(Node{std::move(value), {}, nullptr, true});
  return Var(this, nodes_.size() - 1);
}

Var Tape::constant(NdArray value) {
  nodes_.push_back(Node{std::move(value), {}, nullptr, false});
  return Var(this, nodes_.size() - 1);
}

Var Tape::record(NdArray value, std::vector<std::size_t> inputs, BackwardFn backward) {
  bool needs = false;
  for (auto id : inputs) {
    if (id >= nodes_.size()) throw Error("tape input refers to a later node");
    needs = needs || nodes_[id].requires_grad;
  }
  if (!needs) backward = nullptr;
  nodes_.push_back(Node{std::move(value), std::move(inputs), std::move(backward), needs});
  return Var(this, nodes_.size() - 1);
}

namespace {

void accumulate(std::optional<NdArray>& slot, NdArray&& g) {
  if (!slot) {
    slot = std::move(g);
    return;
  }
  if (slot->shape() != g.shape()) throw ShapeError("gradient shape mismatch during accumulation");
  auto dst = slot->data();
  auto src = g.data();
  for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
}

}  // namespace

Gradients Tape::backward(Var root, std::optional<NdArray> seed) const {
  if (root.tape() != this) throw Error("root belongs to another tape");
  const std::size_t r = root.id();
  const NdArray& rv = nodes_.at(r).value;
  if (!seed) {
    if (rv.size() != 1) throw MissingSeed("non-scalar root " + shape_string(rv.shape()) +
                                          " needs a seed gradient");
    seed = NdArray(rv.shape(), 1.0);
  } else if (seed->shape() != rv.shape()) {
    throw ShapeError("seed shape " + shape_string(seed->shape()) + " does not match root " +
                     shape_string(rv.shape()));
  }

  std::vector<bool> reachable(r + 1, false);
  reachable[r] = true;
  for (std::size_t id = r + 1; id-- > 0;)
    if (reachable[id])
      for (auto in : nodes_[id].inputs) reachable[in] = true;

  std::vector<std::optional<NdArray>> grads(nodes_.size());
  grads[r] = std::move(*seed);
  for (std::size_t id = r + 1; id-- > 0;) {
    if (!reachable[id]) continue;
    const Node& node = nodes_[id];
    if (!grads[id]) grads[id] = NdArray(node.value.shape(), 0.0);
    if (!node.backward) continue;
    std::vector<NdArray> in_grads = node.backward(*grads[id]);
    if (in_grads.size() != node.inputs.size()) throw Error("backward returned wrong arity");
    for (std::size_t k = 0; k < node.inputs.size(); ++k) {
      const std::size_t in = node.inputs[k];
      if (!nodes_[in].requires_grad || in_grads[k].empty()) continue;
      accumulate(grads[in], std::move(in_grads[k]));
    }
  }
  return Gradients(std::move(grads));
}

}  // namespace ssmnd
