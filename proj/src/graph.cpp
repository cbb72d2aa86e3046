#include "gapgc/graph.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <set>

#include <json.hpp>

#include "gapgc/error.hpp"

namespace gapgc {

using nlohmann::json;

void validate_graph(const Graph& g, std::size_t graph_index) {
  const std::string where = "graph " + std::to_string(graph_index) + ": ";
  if (g.num_nodes < 1) throw ValidationError(where + "num_nodes must be >= 1");
  if (g.node_features.rank() != 2 || g.node_features.shape()[0] != g.num_nodes) {
    throw ValidationError(where + "features must be [num_nodes, F], got " +
                          shape_string(g.node_features) + " for " +
                          std::to_string(g.num_nodes) + " nodes");
  }
  std::set<std::pair<int, int>> seen;
  for (const auto& [u, v] : g.edges) {
    if (u < 0 || v < 0 || static_cast<std::size_t>(u) >= g.num_nodes ||
        static_cast<std::size_t>(v) >= g.num_nodes) {
      throw ValidationError(where + "edge (" + std::to_string(u) + "," + std::to_string(v) +
                            ") out of range for " + std::to_string(g.num_nodes) + " nodes");
    }
    if (u == v) throw ValidationError(where + "self-loop on node " + std::to_string(u));
    const auto key = std::minmax(u, v);
    if (!seen.insert(key).second) {
      throw ValidationError(where + "duplicate undirected pair (" + std::to_string(key.first) +
                            "," + std::to_string(key.second) + ")");
    }
  }
  for (std::size_t t = 0; t < g.labels.size(); ++t) {
    const int l = g.labels[t];
    if (l != 0 && l != 1 && l != kMissingLabel) {
      throw ValidationError(where + "label " + std::to_string(l) + " at task " +
                            std::to_string(t) + " not in {0, 1, missing}");
    }
  }
}

GraphBatch batch_graphs(const std::vector<Graph>& dataset, const std::vector<int>& indices) {
  std::vector<Graph> selected;
  selected.reserve(indices.size());
  for (int idx : indices) {
    if (idx < 0 || static_cast<std::size_t>(idx) >= dataset.size()) {
      throw IndexError("batch_graphs: dataset index " + std::to_string(idx) +
                       " out of range [0," + std::to_string(dataset.size()) + ")");
    }
    selected.push_back(dataset[static_cast<std::size_t>(idx)]);
  }
  return batch_graphs(selected);
}

GraphBatch batch_graphs(const std::vector<Graph>& graphs) {
  if (graphs.empty()) throw ContractError("batch_graphs: empty graph list");
  const std::size_t f = graphs[0].feature_width();
  const std::size_t t = graphs[0].task_count();
  for (std::size_t i = 1; i < graphs.size(); ++i) {
    if (graphs[i].feature_width() != f) {
      throw ValidationError("batch_graphs: graph " + std::to_string(i) + " feature width " +
                            std::to_string(graphs[i].feature_width()) +
                            " differs from first graph's " + std::to_string(f));
    }
    if (graphs[i].task_count() != t) {
      throw ValidationError("batch_graphs: graph " + std::to_string(i) + " task count " +
                            std::to_string(graphs[i].task_count()) +
                            " differs from first graph's " + std::to_string(t));
    }
  }

  GraphBatch batch;
  batch.node_offset.push_back(0);
  std::size_t n_total = 0;
  for (const Graph& g : graphs) {
    n_total += g.num_nodes;
    batch.node_offset.push_back(n_total);
  }

  std::vector<double> feats(n_total * f);
  std::vector<double> labels(graphs.size() * t, 0.0);
  std::vector<double> mask(graphs.size() * t, 0.0);
  batch.node_to_graph.resize(n_total);

  for (std::size_t gi = 0; gi < graphs.size(); ++gi) {
    const Graph& g = graphs[gi];
    const std::size_t off = batch.node_offset[gi];
    std::copy(g.node_features.data().begin(), g.node_features.data().end(),
              feats.begin() + static_cast<std::ptrdiff_t>(off * f));
    for (std::size_t i = 0; i < g.num_nodes; ++i)
      batch.node_to_graph[off + i] = static_cast<int>(gi);
    for (std::size_t task = 0; task < t; ++task) {
      if (g.labels[task] != kMissingLabel) {
        labels[gi * t + task] = static_cast<double>(g.labels[task]);
        mask[gi * t + task] = 1.0;
      }
    }
    for (const auto& [u, v] : g.edges) {
      const int a = static_cast<int>(off) + std::min(u, v);
      const int b = static_cast<int>(off) + std::max(u, v);
      const int pair_id = static_cast<int>(batch.pairs.size());
      batch.pairs.emplace_back(a, b);
      batch.edge_src.push_back(a);
      batch.edge_dst.push_back(b);
      batch.edge_pair.push_back(pair_id);
      batch.edge_src.push_back(b);
      batch.edge_dst.push_back(a);
      batch.edge_pair.push_back(pair_id);
    }
  }

  batch.features = Tensor({n_total, f}, std::move(feats));
  batch.labels = Tensor({graphs.size(), t}, std::move(labels));
  batch.label_mask = Tensor({graphs.size(), t}, std::move(mask));
  return batch;
}

namespace {

Graph graph_from_json(const json& obj, std::size_t graph_index) {
  const std::string where = "graph " + std::to_string(graph_index) + ": ";
  for (const char* key : {"num_nodes", "features", "edges", "labels", "structure_key"}) {
    if (!obj.contains(key)) throw ValidationError(where + "missing key \"" + key + "\"");
  }
  Graph g;
  if (!obj["num_nodes"].is_number_integer() || obj["num_nodes"].get<std::int64_t>() < 1) {
    throw ValidationError(where + "num_nodes must be a positive integer");
  }
  g.num_nodes = obj["num_nodes"].get<std::size_t>();

  const json& feats = obj["features"];
  if (!feats.is_array() || feats.size() != g.num_nodes) {
    throw ValidationError(where + "features must be an array with one row per node");
  }
  const std::size_t width = feats.empty() || !feats[0].is_array() ? 0 : feats[0].size();
  std::vector<double> values;
  values.reserve(g.num_nodes * width);
  for (const json& row : feats) {
    if (!row.is_array() || row.size() != width) {
      throw ValidationError(where + "feature rows must all have the same width");
    }
    for (const json& v : row) {
      if (!v.is_number()) throw ValidationError(where + "feature entries must be numbers");
      values.push_back(v.get<double>());
    }
  }
  g.node_features = Tensor({g.num_nodes, width}, std::move(values));

  for (const json& e : obj["edges"]) {
    if (!e.is_array() || e.size() != 2 || !e[0].is_number_integer() ||
        !e[1].is_number_integer()) {
      throw ValidationError(where + "edges must be [u, v] integer pairs");
    }
    const int u = e[0].get<int>(), v = e[1].get<int>();
    g.edges.emplace_back(std::min(u, v), std::max(u, v));
  }

  for (const json& l : obj["labels"]) {
    if (l.is_null()) {
      g.labels.push_back(kMissingLabel);
    } else if (l.is_number_integer() && (l.get<int>() == 0 || l.get<int>() == 1)) {
      g.labels.push_back(l.get<int>());
    } else {
      throw ValidationError(where + "labels must be 0, 1 or null");
    }
  }

  if (!obj["structure_key"].is_number_integer()) {
    throw ValidationError(where + "structure_key must be an integer");
  }
  g.structure_key = obj["structure_key"].get<std::int64_t>();

  validate_graph(g, graph_index);
  return g;
}

}  // namespace

std::vector<Graph> load_jsonl(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("load_jsonl: cannot open " + path);
  std::vector<Graph> graphs;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    json obj;
    try {
      obj = json::parse(line);
    } catch (const json::parse_error& e) {
      throw ParseError("load_jsonl: " + path + " line " + std::to_string(line_no) + ": " +
                       e.what());
    }
    if (!obj.is_object()) {
      throw ParseError("load_jsonl: " + path + " line " + std::to_string(line_no) +
                       ": expected a JSON object");
    }
    graphs.push_back(graph_from_json(obj, graphs.size()));
  }
  return graphs;
}

void write_jsonl(const std::string& path, const std::vector<Graph>& graphs) {
  std::ofstream out(path);
  if (!out) throw ParseError("write_jsonl: cannot open " + path + " for writing");
  for (const Graph& g : graphs) {
    json obj;
    obj["num_nodes"] = g.num_nodes;
    json feats = json::array();
    const std::size_t f = g.feature_width();
    for (std::size_t i = 0; i < g.num_nodes; ++i) {
      json row = json::array();
      for (std::size_t j = 0; j < f; ++j) row.push_back(g.node_features.data()[i * f + j]);
      feats.push_back(std::move(row));
    }
    obj["features"] = std::move(feats);
    json edges = json::array();
    for (const auto& [u, v] : g.edges) edges.push_back(json::array({u, v}));
    obj["edges"] = std::move(edges);
    json labels = json::array();
    for (int l : g.labels) {
      if (l == kMissingLabel) {
        labels.push_back(nullptr);
      } else {
        labels.push_back(l);
      }
    }
    obj["labels"] = std::move(labels);
    obj["structure_key"] = g.structure_key;
    out << obj.dump() << '\n';
  }
  if (!out) throw ParseError("write_jsonl: write to " + path + " failed");
}

DatasetSplit structural_cluster_split(const std::vector<Graph>& graphs, double train_ratio,
                                      double val_ratio) {
  if (graphs.empty()) throw SplitError("structural_cluster_split: empty dataset");
  if (train_ratio <= 0.0 || val_ratio <= 0.0 || train_ratio + val_ratio >= 1.0) {
    throw ConfigError("structural_cluster_split: ratios must be positive and sum below 1");
  }

  struct Cluster {
    std::int64_t key;
    std::vector<int> members;
    std::size_t first = 0;
  };
  std::map<std::int64_t, std::size_t> index_of;
  std::vector<Cluster> clusters;
  for (std::size_t i = 0; i < graphs.size(); ++i) {
    const std::int64_t key = graphs[i].structure_key;
    auto it = index_of.find(key);
    if (it == index_of.end()) {
      index_of.emplace(key, clusters.size());
      clusters.push_back({key, {static_cast<int>(i)}, i});
    } else {
      clusters[it->second].members.push_back(static_cast<int>(i));
    }
  }
  if (clusters.size() < 3) {
    throw SplitError("structural_cluster_split: need at least 3 structure clusters, have " +
                     std::to_string(clusters.size()));
  }

  std::sort(clusters.begin(), clusters.end(), [](const Cluster& a, const Cluster& b) {
    if (a.members.size() != b.members.size()) return a.members.size() > b.members.size();
    return a.first < b.first;
  });

  const auto n = static_cast<double>(graphs.size());
  const auto train_quota = static_cast<std::size_t>(std::llround(train_ratio * n));
  const auto val_quota = static_cast<std::size_t>(std::llround(val_ratio * n));

  DatasetSplit split;
  for (const Cluster& c : clusters) {
    if (split.train.size() < train_quota) {
      split.train.insert(split.train.end(), c.members.begin(), c.members.end());
    } else if (split.validation.size() < val_quota) {
      split.validation.insert(split.validation.end(), c.members.begin(), c.members.end());
    } else {
      split.test.insert(split.test.end(), c.members.begin(), c.members.end());
    }
  }
  if (split.train.empty() || split.validation.empty() || split.test.empty()) {
    throw SplitError(
        "structural_cluster_split: cluster sizes cannot honor the 8:1:1 quota (a split came "
        "out empty)");
  }
  std::sort(split.train.begin(), split.train.end());
  std::sort(split.validation.begin(), split.validation.end());
  std::sort(split.test.begin(), split.test.end());
  return split;
}

}  // namespace gapgc
