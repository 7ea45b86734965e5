#include "ssmnd/params.hpp"

#include "ssmnd/errors.hpp"

namespace ssmnd {

ParamHandle ParamStore::add(std::string name, NdArray value) {
  if (index_.count(name)) throw Error("duplicate parameter name '" + name + "'");
  index_.emplace(name, values_.size());
  names_.push_back(std::move(name));
  values_.push_back(std::move(value));
  return ParamHandle{values_.size() - 1};
}

std::optional<ParamHandle> ParamStore::find(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) return std::nullopt;
  return ParamHandle{it->second};
}

std::size_t ParamStore::scalar_count() const {
  std::size_t n = 0;
  for (const auto& v : values_) n += v.size();
  return n;
}

Binding::Binding(Tape& tape, const ParamStore& store, bool trainable)
    : tape_(&tape), store_(&store), trainable_(trainable), vars_(store.size()) {}

Var Binding::operator()(ParamHandle h) {
  auto& slot = vars_.at(h.index);
  if (!slot) slot = trainable_ ? tape_->leaf(store_->value(h)) : tape_->constant(store_->value(h));
  return *slot;
}

std::vector<NdArray> Binding::gradients(const Gradients& grads) const {
  std::vector<NdArray> out;
  out.reserve(vars_.size());
  for (std::size_t i = 0; i < vars_.size(); ++i) {
    const auto& slot = vars_[i];
    if (slot && grads.has(*slot)) out.push_back(grads.of(*slot));
    else out.push_back(NdArray(store_->values()[i].shape(), 0.0));
  }
  return out;
}

}  // namespace ssmnd
