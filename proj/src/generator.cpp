#include "gapgc/generator.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>

#include <json.hpp>

#include "gapgc/error.hpp"
#include "gapgc/rng.hpp"

namespace gapgc {

using nlohmann::json;

AttachStyle attach_style_from_name(const std::string& name) {
  if (name == "uniform") return AttachStyle::uniform;
  if (name == "preferential") return AttachStyle::preferential;
  if (name == "chain") return AttachStyle::chain;
  throw ConfigError("unknown attach style: " + name +
                    " (expected uniform, preferential or chain)");
}

std::string attach_style_name(AttachStyle style) {
  switch (style) {
    case AttachStyle::uniform: return "uniform";
    case AttachStyle::preferential: return "preferential";
    case AttachStyle::chain: return "chain";
  }
  throw ContractError("attach_style_name: unknown style");
}

namespace {

constexpr std::size_t kNoiseChannels = 2;
constexpr std::size_t kDegreeBins = 6;  // one-hot of degree 1..6+, so F = 8
constexpr int kMinCycle = 4;
constexpr int kMaxCycle = 6;

std::int64_t degree_sequence_key(std::vector<int> degrees) {
  std::sort(degrees.begin(), degrees.end());
  std::uint64_t h = 1469598103934665603ULL;  // FNV-1a 64
  for (int d : degrees) {
    h ^= static_cast<std::uint64_t>(d);
    h *= 1099511628211ULL;
  }
  return static_cast<std::int64_t>(h);
}

// Grows a random tree of `n` nodes; fills `edges` and per-node degrees.
void grow_backbone(Rng& rng, int n, AttachStyle style,
                   std::vector<std::pair<int, int>>& edges, std::vector<int>& degree) {
  degree.assign(static_cast<std::size_t>(n), 0);
  // endpoint list: each node appears once per incident edge, giving
  // degree-proportional sampling for the preferential style
  std::vector<int> endpoints = {0};
  for (int v = 1; v < n; ++v) {
    int parent = 0;
    switch (style) {
      case AttachStyle::uniform:
        parent = static_cast<int>(rng.integer(static_cast<std::uint64_t>(v)));
        break;
      case AttachStyle::preferential:
        parent = endpoints[rng.integer(endpoints.size())];
        break;
      case AttachStyle::chain:
        parent = rng.uniform() < 0.75
                     ? v - 1
                     : static_cast<int>(rng.integer(static_cast<std::uint64_t>(v)));
        break;
    }
    edges.emplace_back(std::min(parent, v), std::max(parent, v));
    degree[static_cast<std::size_t>(parent)]++;
    degree[static_cast<std::size_t>(v)]++;
    endpoints.push_back(parent);
    endpoints.push_back(v);
  }
}

Graph make_graph(Rng& rng, std::pair<int, int> size_range, AttachStyle style,
                 std::size_t task_count) {
  const int backbone_n = rng.uniform_int(size_range.first, size_range.second);
  std::vector<std::pair<int, int>> edges;
  std::vector<int> degree;
  grow_backbone(rng, backbone_n, style, edges, degree);
  const std::int64_t key = degree_sequence_key(degree);

  int n = backbone_n;
  auto add_edge = [&](int u, int v) {
    edges.emplace_back(std::min(u, v), std::max(u, v));
    degree[static_cast<std::size_t>(u)]++;
    degree[static_cast<std::size_t>(v)]++;
  };
  auto add_node = [&]() {
    degree.push_back(0);
    return n++;
  };

  // Task 0: chordless cycle of fresh nodes, hooked on by a single edge.
  const bool plant_cycle = rng.bernoulli(0.5);
  if (plant_cycle) {
    const int len = rng.uniform_int(kMinCycle, kMaxCycle);
    const int first = n;
    for (int i = 0; i < len; ++i) add_node();
    for (int i = 0; i < len; ++i) add_edge(first + i, first + (i + 1) % len);
    add_edge(static_cast<int>(rng.integer(static_cast<std::uint64_t>(backbone_n))),
             first + static_cast<int>(rng.integer(static_cast<std::uint64_t>(len))));
  }

  // Tasks t >= 1: star of degree >= t+3, grown with fresh leaves.
  for (std::size_t t = 1; t < task_count; ++t) {
    if (!rng.bernoulli(0.5)) continue;
    const int target = static_cast<int>(t) + 3;
    const int center = static_cast<int>(rng.integer(static_cast<std::uint64_t>(n)));
    while (degree[static_cast<std::size_t>(center)] < target) add_edge(center, add_node());
  }

  Graph g;
  g.num_nodes = static_cast<std::size_t>(n);
  g.edges = std::move(edges);
  g.structure_key = key;

  g.labels.assign(task_count, 0);
  g.labels[0] = plant_cycle ? 1 : 0;
  const int max_degree = *std::max_element(degree.begin(), degree.end());
  for (std::size_t t = 1; t < task_count; ++t)
    g.labels[t] = max_degree >= static_cast<int>(t) + 3 ? 1 : 0;

  const std::size_t f = kDegreeBins + kNoiseChannels;
  std::vector<double> feats(g.num_nodes * f, 0.0);
  for (std::size_t i = 0; i < g.num_nodes; ++i) {
    const int capped = std::min(degree[i], static_cast<int>(kDegreeBins));
    if (capped >= 1) feats[i * f + static_cast<std::size_t>(capped - 1)] = 1.0;
    for (std::size_t c = 0; c < kNoiseChannels; ++c)
      feats[i * f + kDegreeBins + c] = rng.uniform();
  }
  g.node_features = Tensor({g.num_nodes, f}, std::move(feats));
  return g;
}

Rng graph_stream(std::uint64_t seed, int pool, std::size_t index, int retry) {
  const std::uint64_t pool_seed = mix_seed(seed, static_cast<std::uint64_t>(pool));
  return Rng(mix_seed(pool_seed, static_cast<std::uint64_t>(index) * 1024 +
                                     static_cast<std::uint64_t>(retry)));
}

void validate_profile(const ShiftProfile& profile) {
  for (const auto& [name, range] :
       {std::pair{"size_range_train", profile.size_range_train},
        std::pair{"size_range_test", profile.size_range_test}}) {
    if (range.first > range.second) {
      throw ConfigError(std::string("generate_motif_ood_dataset: ") + name +
                        " is empty (" + std::to_string(range.first) + " > " +
                        std::to_string(range.second) + ")");
    }
    if (range.first < kMinCycle) {
      throw ConfigError(std::string("generate_motif_ood_dataset: ") + name + " minimum " +
                        std::to_string(range.first) + " is below the smallest planted cycle (" +
                        std::to_string(kMinCycle) + " nodes)");
    }
  }
}

}  // namespace

bool has_cycle(const Graph& g) {
  // adjacency with edge ids so the DFS can skip the edge it arrived by
  std::vector<std::vector<std::pair<int, int>>> adj(g.num_nodes);
  for (std::size_t e = 0; e < g.edges.size(); ++e) {
    const auto& [u, v] = g.edges[e];
    adj[static_cast<std::size_t>(u)].emplace_back(v, static_cast<int>(e));
    adj[static_cast<std::size_t>(v)].emplace_back(u, static_cast<int>(e));
  }
  std::vector<char> visited(g.num_nodes, 0);
  std::vector<std::pair<int, int>> stack;  // node, arriving edge id
  for (std::size_t start = 0; start < g.num_nodes; ++start) {
    if (visited[start]) continue;
    stack.push_back({static_cast<int>(start), -1});
    visited[start] = 1;
    while (!stack.empty()) {
      const auto [node, in_edge] = stack.back();
      stack.pop_back();
      for (const auto& [next, edge_id] : adj[static_cast<std::size_t>(node)]) {
        if (edge_id == in_edge) continue;
        if (visited[static_cast<std::size_t>(next)]) return true;
        visited[static_cast<std::size_t>(next)] = 1;
        stack.push_back({next, edge_id});
      }
    }
  }
  return false;
}

GeneratedDataset generate_motif_ood_dataset(std::uint64_t seed, std::size_t n_graphs,
                                            const ShiftProfile& profile,
                                            std::size_t task_count) {
  if (n_graphs < 50) {
    throw ConfigError("generate_motif_ood_dataset: need at least 50 graphs, asked for " +
                      std::to_string(n_graphs));
  }
  if (task_count < 1) {
    throw ConfigError("generate_motif_ood_dataset: task_count must be >= 1");
  }
  validate_profile(profile);

  const auto n_test = static_cast<std::size_t>(
      std::max<long long>(1, std::llround(0.1 * static_cast<double>(n_graphs))));
  const std::size_t n_pool = n_graphs - n_test;

  GeneratedDataset data;
  data.task_count = task_count;
  data.feature_width = kDegreeBins + kNoiseChannels;
  data.generator_seed = seed;
  data.profile = profile;
  data.graphs.reserve(n_graphs);

  std::set<std::int64_t> pool_keys;
  for (std::size_t i = 0; i < n_pool; ++i) {
    Rng rng = graph_stream(seed, 1, i, 0);
    data.graphs.push_back(
        make_graph(rng, profile.size_range_train, profile.attach_style_train, task_count));
    pool_keys.insert(data.graphs.back().structure_key);
  }

  // Test graphs must not share a structure cluster with the training pool;
  // regenerate from a fresh stream on the (astronomically rare) hash clash.
  for (std::size_t i = 0; i < n_test; ++i) {
    Graph g;
    bool ok = false;
    for (int retry = 0; retry < 100 && !ok; ++retry) {
      Rng rng = graph_stream(seed, 2, i, retry);
      g = make_graph(rng, profile.size_range_test, profile.attach_style_test, task_count);
      ok = pool_keys.count(g.structure_key) == 0;
    }
    if (!ok) {
      throw SplitError(
          "generate_motif_ood_dataset: could not draw a test graph with a structure key "
          "absent from the training pool");
    }
    data.graphs.push_back(std::move(g));
  }

  // Training pool split 8:1 (of the full dataset's 8:1:1) by structure
  // cluster; the shifted pool is the test split.
  struct Cluster {
    std::vector<int> members;
    std::size_t first;
  };
  std::map<std::int64_t, std::size_t> index_of;
  std::vector<Cluster> clusters;
  for (std::size_t i = 0; i < n_pool; ++i) {
    const std::int64_t key = data.graphs[i].structure_key;
    auto it = index_of.find(key);
    if (it == index_of.end()) {
      index_of.emplace(key, clusters.size());
      clusters.push_back({{static_cast<int>(i)}, i});
    } else {
      clusters[it->second].members.push_back(static_cast<int>(i));
    }
  }
  std::sort(clusters.begin(), clusters.end(), [](const Cluster& a, const Cluster& b) {
    if (a.members.size() != b.members.size()) return a.members.size() > b.members.size();
    return a.first < b.first;
  });

  const auto train_quota = static_cast<std::size_t>(
      std::llround(0.8 * static_cast<double>(n_graphs)));
  for (const Cluster& c : clusters) {
    auto& dst = data.split.train.size() < train_quota ? data.split.train
                                                      : data.split.validation;
    dst.insert(dst.end(), c.members.begin(), c.members.end());
  }
  if (data.split.validation.empty()) {
    throw SplitError(
        "generate_motif_ood_dataset: structure clusters too coarse to carve out a "
        "validation split");
  }
  std::sort(data.split.train.begin(), data.split.train.end());
  std::sort(data.split.validation.begin(), data.split.validation.end());
  for (std::size_t i = n_pool; i < n_graphs; ++i)
    data.split.test.push_back(static_cast<int>(i));

  for (std::size_t i = 0; i < data.graphs.size(); ++i) validate_graph(data.graphs[i], i);
  return data;
}

void write_dataset(const std::string& dir, const GeneratedDataset& data) {
  std::filesystem::create_directories(dir);
  write_jsonl(dir + "/graphs.jsonl", data.graphs);

  json meta;
  meta["task_count"] = data.task_count;
  meta["feature_width"] = data.feature_width;
  meta["generator_seed"] = data.generator_seed;
  meta["shift_profile"] = {
      {"size_range_train",
       json::array({data.profile.size_range_train.first, data.profile.size_range_train.second})},
      {"size_range_test",
       json::array({data.profile.size_range_test.first, data.profile.size_range_test.second})},
      {"attach_style_train", attach_style_name(data.profile.attach_style_train)},
      {"attach_style_test", attach_style_name(data.profile.attach_style_test)},
  };
  std::ofstream meta_out(dir + "/metadata.json");
  if (!meta_out) throw ParseError("write_dataset: cannot open " + dir + "/metadata.json");
  meta_out << meta.dump(2) << '\n';

  json split;
  split["train"] = data.split.train;
  split["validation"] = data.split.validation;
  split["test"] = data.split.test;
  std::ofstream split_out(dir + "/split.json");
  if (!split_out) throw ParseError("write_dataset: cannot open " + dir + "/split.json");
  split_out << split.dump(2) << '\n';
}

GeneratedDataset load_dataset(const std::string& dir) {
  GeneratedDataset data;
  data.graphs = load_jsonl(dir + "/graphs.jsonl");

  std::ifstream meta_in(dir + "/metadata.json");
  if (!meta_in) throw ParseError("load_dataset: cannot open " + dir + "/metadata.json");
  json meta;
  try {
    meta = json::parse(meta_in);
  } catch (const json::parse_error& e) {
    throw ParseError("load_dataset: " + dir + "/metadata.json: " + e.what());
  }
  data.task_count = meta.at("task_count").get<std::size_t>();
  data.feature_width = meta.at("feature_width").get<std::size_t>();
  data.generator_seed = meta.at("generator_seed").get<std::uint64_t>();
  const json& prof = meta.at("shift_profile");
  data.profile.size_range_train = {prof.at("size_range_train")[0].get<int>(),
                                   prof.at("size_range_train")[1].get<int>()};
  data.profile.size_range_test = {prof.at("size_range_test")[0].get<int>(),
                                  prof.at("size_range_test")[1].get<int>()};
  data.profile.attach_style_train =
      attach_style_from_name(prof.at("attach_style_train").get<std::string>());
  data.profile.attach_style_test =
      attach_style_from_name(prof.at("attach_style_test").get<std::string>());

  std::ifstream split_in(dir + "/split.json");
  if (!split_in) throw ParseError("load_dataset: cannot open " + dir + "/split.json");
  json split;
  try {
    split = json::parse(split_in);
  } catch (const json::parse_error& e) {
    throw ParseError("load_dataset: " + dir + "/split.json: " + e.what());
  }
  data.split.train = split.at("train").get<std::vector<int>>();
  data.split.validation = split.at("validation").get<std::vector<int>>();
  data.split.test = split.at("test").get<std::vector<int>>();
  return data;
}

}  // namespace gapgc
