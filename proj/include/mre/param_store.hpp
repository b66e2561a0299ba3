#pragma once

#include <cstdint>
#include <string>
#include <unordered_map>
#include <vector>

#include "mre/tensor.hpp"

namespace mre {

struct ParamEntry {
  std::string name;
  Tensor value;
  std::vector<double> first_moment;
  std::vector<double> second_moment;
  // Buffers such as batch-norm running statistics are stored and
  // checkpointed alongside parameters but never optimized.
  bool trainable = true;
};

// Named, ordered collection of every learned quantity of a model together
// with its Adam state.
class ParamStore {
 public:
  /// Registers a new entry; names must be unique.
  Tensor add(const std::string& name, Shape shape, std::vector<double> init, bool trainable = true);

  bool contains(const std::string& name) const;
  Tensor get(const std::string& name) const;
  const ParamEntry& entry(const std::string& name) const;

  std::vector<ParamEntry>& entries() { return entries_; }
  const std::vector<ParamEntry>& entries() const { return entries_; }
  std::size_t size() const { return entries_.size(); }
  /// Total number of trainable scalars.
  std::size_t trainable_scalars() const;

  /// Zeroes gradients of every trainable entry (reachable or not).
  void zero_grad();
  /// zero_grad() followed by a backward sweep from `loss`.
  void backward(const Tensor& loss);

  std::uint64_t step() const { return step_; }
  void set_step(std::uint64_t step) { step_ = step; }

 private:
  std::vector<ParamEntry> entries_;
  std::unordered_map<std::string, std::size_t> index_;
  std::uint64_t step_ = 0;
};

}  // namespace mre
