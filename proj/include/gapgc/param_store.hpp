#pragma once

#include <map>
#include <string>
#include <vector>

#include "gapgc/autodiff.hpp"
#include "gapgc/tensor.hpp"

namespace gapgc {

// Which part of the model a parameter belongs to. Adaptation methods pick the
// partitions they are allowed to update; everything else stays frozen.
enum class Partition {
  encoder,      // GIN body (Phi_1)
  classifier,   // linear head (Phi_2)
  projector,    // contrastive projection head
  aug_encoder,  // augmenter's own GIN body (Theta_1)
  aug_scorer,   // augmenter's pairwise MLP (Theta_2)
};

std::string partition_name(Partition p);
Partition partition_from_name(const std::string& name);

struct ParamEntry {
  Tensor value;
  Partition partition = Partition::encoder;
  bool trainable = true;
};

// Ordered, named parameter collection. Iteration order is the lexicographic
// name order of std::map, which keeps optimizer traversal deterministic.
class ParamStore {
 public:
  void add(const std::string& name, Tensor value, Partition partition, bool trainable = true);
  bool contains(const std::string& name) const { return entries_.count(name) > 0; }
  ParamEntry& at(const std::string& name);
  const ParamEntry& at(const std::string& name) const;

  const std::map<std::string, ParamEntry>& entries() const { return entries_; }
  std::map<std::string, ParamEntry>& entries() { return entries_; }

  std::vector<std::string> names() const;
  std::vector<std::string> names(Partition partition) const;

  void set_trainable(Partition partition, bool trainable);
  void set_all_trainable(bool trainable);

  std::size_t size() const { return entries_.size(); }

 private:
  std::map<std::string, ParamEntry> entries_;
};

// Binds every parameter of a store onto a tape exactly once per forward pass:
// trainable entries become named leaves (so backward() reports their grads),
// frozen entries are recorded as plain constants.
class BoundParams {
 public:
  BoundParams(Tape& tape, const ParamStore& store);

  const Tensor& operator[](const std::string& name) const;

 private:
  std::map<std::string, Tensor> bound_;
};

}  // namespace gapgc
