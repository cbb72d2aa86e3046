#include "gapgc/param_store.hpp"

#include "gapgc/error.hpp"

namespace gapgc {

std::string partition_name(Partition p) {
  switch (p) {
    case Partition::encoder: return "encoder";
    case Partition::classifier: return "classifier";
    case Partition::projector: return "projector";
    case Partition::aug_encoder: return "aug_encoder";
    case Partition::aug_scorer: return "aug_scorer";
  }
  throw ContractError("partition_name: unknown partition");
}

Partition partition_from_name(const std::string& name) {
  if (name == "encoder") return Partition::encoder;
  if (name == "classifier") return Partition::classifier;
  if (name == "projector") return Partition::projector;
  if (name == "aug_encoder") return Partition::aug_encoder;
  if (name == "aug_scorer") return Partition::aug_scorer;
  throw ParseError("unknown partition name: " + name);
}

void ParamStore::add(const std::string& name, Tensor value, Partition partition,
                     bool trainable) {
  if (entries_.count(name)) {
    throw ContractError("ParamStore::add: duplicate parameter name: " + name);
  }
  entries_.emplace(name, ParamEntry{std::move(value), partition, trainable});
}

ParamEntry& ParamStore::at(const std::string& name) {
  auto it = entries_.find(name);
  if (it == entries_.end()) throw ContractError("ParamStore: no parameter named " + name);
  return it->second;
}

const ParamEntry& ParamStore::at(const std::string& name) const {
  auto it = entries_.find(name);
  if (it == entries_.end()) throw ContractError("ParamStore: no parameter named " + name);
  return it->second;
}

std::vector<std::string> ParamStore::names() const {
  std::vector<std::string> out;
  out.reserve(entries_.size());
  for (const auto& [name, entry] : entries_) out.push_back(name);
  return out;
}

std::vector<std::string> ParamStore::names(Partition partition) const {
  std::vector<std::string> out;
  for (const auto& [name, entry] : entries_)
    if (entry.partition == partition) out.push_back(name);
  return out;
}

void ParamStore::set_trainable(Partition partition, bool trainable) {
  for (auto& [name, entry] : entries_)
    if (entry.partition == partition) entry.trainable = trainable;
}

void ParamStore::set_all_trainable(bool trainable) {
  for (auto& [name, entry] : entries_) entry.trainable = trainable;
}

BoundParams::BoundParams(Tape& tape, const ParamStore& store) {
  for (const auto& [name, entry] : store.entries()) {
    if (entry.trainable) {
      bound_.emplace(name, tape.leaf(entry.value, name));
    } else {
      bound_.emplace(name, entry.value);  // plain constant, no grad tracking
    }
  }
}

const Tensor& BoundParams::operator[](const std::string& name) const {
  auto it = bound_.find(name);
  if (it == bound_.end()) throw ContractError("BoundParams: no parameter named " + name);
  return it->second;
}

}  // namespace gapgc
