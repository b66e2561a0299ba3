#include "mre/param_store.hpp"

#include "mre/errors.hpp"

namespace mre {

Tensor ParamStore::add(const std::string& name, Shape shape, std::vector<double> init, bool trainable) {
  if (index_.count(name)) throw ConfigError("duplicate parameter name '" + name + "'");
  ParamEntry e;
  e.name = name;
  e.value = trainable ? Tensor::parameter(std::move(shape), std::move(init))
                      : Tensor::from_data(std::move(shape), std::move(init));
  e.first_moment.assign(e.value.numel(), 0.0);
  e.second_moment.assign(e.value.numel(), 0.0);
  e.trainable = trainable;
  index_.emplace(name, entries_.size());
  entries_.push_back(std::move(e));
  return entries_.back().value;
}

bool ParamStore::contains(const std::string& name) const { return index_.count(name) > 0; }

const ParamEntry& ParamStore::entry(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) throw UsageError("unknown parameter '" + name + "'");
  return entries_[it->second];
}

Tensor ParamStore::get(const std::string& name) const { return entry(name).value; }

std::size_t ParamStore::trainable_scalars() const {
  std::size_t n = 0;
  for (const auto& e : entries_)
    if (e.trainable) n += e.value.numel();
  return n;
}

void ParamStore::zero_grad() {
  for (auto& e : entries_)
    if (e.trainable) e.value.zero_grad();
}

void ParamStore::backward(const Tensor& loss) {
  zero_grad();
  mre::backward(loss);
}

}  // namespace mre
