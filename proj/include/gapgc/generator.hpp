#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "gapgc/graph.hpp"

namespace gapgc {

// How new tree nodes pick their parent while the backbone grows.
enum class AttachStyle {
  uniform,       // parent uniform over existing nodes
  preferential,  // parent proportional to current degree
  chain,         // biased toward the newest node (long paths)
};

AttachStyle attach_style_from_name(const std::string& name);
std::string attach_style_name(AttachStyle style);

// The distribution shift: training-pool and test-pool graphs differ in
// backbone size range and attachment style.
struct ShiftProfile {
  std::pair<int, int> size_range_train{10, 20};
  std::pair<int, int> size_range_test{24, 40};
  AttachStyle attach_style_train = AttachStyle::uniform;
  AttachStyle attach_style_test = AttachStyle::preferential;
};

struct GeneratedDataset {
  std::vector<Graph> graphs;
  DatasetSplit split;
  std::size_t task_count = 0;
  std::size_t feature_width = 0;
  std::uint64_t generator_seed = 0;
  ShiftProfile profile;
};

// Synthetic multi-task benchmark. Every graph is a random tree backbone;
// with probability 1/2 a chordless cycle of length 4-6 (new nodes) is
// attached by a single edge — task 0 = cycle present. Task t >= 1 plants a
// star with probability 1/2; its label is whether the final graph holds a
// node of degree >= t+3. Node features are a degree one-hot (capped at 6)
// plus two uniform-noise channels. structure_key hashes the backbone degree
// sequence. 90% of graphs come from the train profile (split into train and
// validation by structure cluster), 10% from the shifted test profile.
GeneratedDataset generate_motif_ood_dataset(std::uint64_t seed, std::size_t n_graphs,
                                            const ShiftProfile& profile,
                                            std::size_t task_count = 2);

// True iff the graph contains any cycle (depth-first search). Used as the
// independent task-0 label oracle.
bool has_cycle(const Graph& g);

// Writes graphs.jsonl, metadata.json and split.json into `dir`.
void write_dataset(const std::string& dir, const GeneratedDataset& data);
// Loads a dataset previously written by write_dataset.
GeneratedDataset load_dataset(const std::string& dir);

}  // namespace gapgc
