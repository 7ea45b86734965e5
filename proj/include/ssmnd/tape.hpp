#pragma once

#include <cstddef>
#include <deque>
#include <functional>
#include <optional>
#include <vector>

#include "ssmnd/ndarray.hpp"

namespace ssmnd {

class Tape;

/// Handle to a node on a Tape. Cheap to copy; valid while the tape lives.
class Var {
 public:
  Var() = default;
  Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

  const NdArray& value() const;
  const Shape& shape() const { return value().shape(); }
  std::size_t id() const noexcept { return id_; }
  Tape* tape() const noexcept { return tape_; }
  bool requires_grad() const;

 private:
  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

/// Maps the gradient flowing into a node's output to one gradient per input.
/// Entries for inputs that do not require a gradient may be left empty.
using BackwardFn = std::function<std::vector<NdArray>(const NdArray& grad_out)>;

/// Result of Tape::backward: one gradient per node reachable from the root.
class Gradients {
 public:
  explicit Gradients(std::vector<std::optional<NdArray>> grads) : grads_(std::move(grads)) {}

  bool has(Var v) const { return v.id() < grads_.size() && grads_[v.id()].has_value(); }
  /// Gradient for `v`; zeros shaped like v when no gradient reached it.
  NdArray of(Var v) const;

 private:
  std::vector<std::optional<NdArray>> grads_;
};

/// Linear record of a forward computation for reverse-mode differentiation.
/// Nodes are appended in execution order, so inputs always precede users.
/// A tape is single-threaded; use one tape per independent sample.
class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  /// Differentiable input (parameter or probed activation).
  Var leaf(NdArray value);
  /// Non-differentiable input.
  Var constant(NdArray value);

  /// Appends an op node. `backward` is dropped when no input needs a gradient.
  Var record(NdArray value, std::vector<std::size_t> inputs, BackwardFn backward);

  /// Reverse sweep from `root`. A non-scalar root needs an explicit seed.
  Gradients backward(Var root, std::optional<NdArray> seed = std::nullopt) const;

  std::size_t size() const noexcept { return nodes_.size(); }
  const NdArray& value(std::size_t id) const { return nodes_.at(id).value; }
  bool requires_grad(std::size_t id) const { return nodes_.at(id).requires_grad; }
  const std::vector<std::size_t>& inputs(std::size_t id) const { return nodes_.at(id).inputs; }

 private:
  struct Node {
    NdArray value;
    std::vector<std::size_t> inputs;
    BackwardFn backward;
    bool requires_grad = false;
  };
  std::deque<Node> nodes_;
};

}  // namespace ssmnd
