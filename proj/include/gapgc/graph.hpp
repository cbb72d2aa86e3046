#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "gapgc/tensor.hpp"

namespace gapgc {

// Label entries are 0, 1 or kMissingLabel.
constexpr int kMissingLabel = -1;

struct Graph {
  std::size_t num_nodes = 0;
  Tensor node_features;                     // [num_nodes, F]
  std::vector<std::pair<int, int>> edges;   // undirected, canonical u < v, each once
  std::vector<int> labels;                  // length T
  std::int64_t structure_key = 0;

  std::size_t feature_width() const { return node_features.cols(); }
  std::size_t task_count() const { return labels.size(); }
};

// Throws ValidationError naming `graph_index` on any invariant violation:
// empty graph, feature shape mismatch, out-of-range/duplicate/self-loop
// edges, or label values outside {0, 1, missing}.
void validate_graph(const Graph& g, std::size_t graph_index);

// Disjoint union of graphs. Each undirected pair is expanded into its two
// directed edges; both directions carry the same source-pair id so a single
// learned weight governs them.
struct GraphBatch {
  Tensor features;                   // [N_total, F]
  std::vector<int> edge_src;         // directed, length 2 * num_pairs
  std::vector<int> edge_dst;
  std::vector<int> edge_pair;        // source-pair id per directed edge
  std::vector<std::pair<int, int>> pairs;  // global node ids, canonical order
  std::vector<int> node_to_graph;    // length N_total, non-decreasing
  std::vector<std::size_t> node_offset;  // length m+1, cumulative node counts
  Tensor labels;                     // [m, T]; missing entries stored as 0
  Tensor label_mask;                 // [m, T]; 1 where the label is present

  std::size_t num_graphs() const { return node_offset.empty() ? 0 : node_offset.size() - 1; }
  std::size_t num_nodes() const { return node_to_graph.size(); }
  std::size_t num_pairs() const { return pairs.size(); }
  std::size_t task_count() const { return labels.cols(); }
};

GraphBatch batch_graphs(const std::vector<Graph>& graphs);
// Batches dataset[indices[0]], dataset[indices[1]], ... in the given order.
GraphBatch batch_graphs(const std::vector<Graph>& dataset, const std::vector<int>& indices);

// One JSON object per line: num_nodes, features, edges, labels (0|1|null),
// structure_key. Malformed lines raise ParseError with the 1-based line
// number; semantic violations raise ValidationError with the graph index.
std::vector<Graph> load_jsonl(const std::string& path);
void write_jsonl(const std::string& path, const std::vector<Graph>& graphs);

struct DatasetSplit {
  std::vector<int> train;
  std::vector<int> validation;
  std::vector<int> test;
};

// Groups graphs by structure_key, orders clusters by descending size (ties
// by first appearance) and assigns whole clusters greedily: train until the
// train quota is met, then validation, then test. Fewer than 3 clusters or
// an empty resulting split is a SplitError.
DatasetSplit structural_cluster_split(const std::vector<Graph>& graphs,
                                      double train_ratio = 0.8, double val_ratio = 0.1);

}  // namespace gapgc
