#pragma once

#include <cstddef>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "ssmnd/ndarray.hpp"
#include "ssmnd/tape.hpp"

namespace ssmnd {

/// Index of a parameter inside a ParamStore.
struct ParamHandle {
  std::size_t index = 0;
};

/// Ordered, named collection of trainable arrays. Insertion order is the
/// canonical order used by checkpoints and optimizers.
class ParamStore {
 public:
  ParamHandle add(std::string name, NdArray value);

  const NdArray& value(ParamHandle h) const { return values_.at(h.index); }
  NdArray& value(ParamHandle h) { return values_.at(h.index); }
  const std::string& name(ParamHandle h) const { return names_.at(h.index); }
  std::optional<ParamHandle> find(const std::string& name) const;

  std::size_t size() const noexcept { return values_.size(); }
  /// Total number of scalars.
  std::size_t scalar_count() const;

  const std::vector<std::string>& names() const noexcept { return names_; }
  const std::vector<NdArray>& values() const noexcept { return values_; }
  std::vector<NdArray>& values() noexcept { return values_; }

 private:
  std::vector<std::string> names_;
  std::vector<NdArray> values_;
  std::map<std::string, std::size_t> index_;
};

/// Per-tape view of a ParamStore: creates one tape node per parameter on
/// first use and maps gradients back to handles.
class Binding {
 public:
  Binding(Tape& tape, const ParamStore& store, bool trainable = true);

  Var operator()(ParamHandle h);
  Tape& tape() noexcept { return *tape_; }

  /// Gradient for every parameter (zeros when unused by the forward pass).
  std::vector<NdArray> gradients(const Gradients& grads) const;

 private:
  Tape* tape_;
  const ParamStore* store_;
  bool trainable_;
  std::vector<std::optional<Var>> vars_;
};

}  // namespace ssmnd
