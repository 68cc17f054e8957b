#pragma once

// Directed host/flow multigraph and fanout-capped neighbourhood sampling.

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "graphids/flow_ingest.hpp"
#include "graphids/tensor.hpp"

namespace graphids {

using NodeId = std::int64_t;
using EdgeId = std::int64_t;

// Which incident edges feed a node's aggregation.
enum class Direction { Both, In, Out };

Direction parse_direction(std::string_view s);
std::string_view direction_name(Direction d);

class FlowGraph {
 public:
  FlowGraph() = default;

  // Edge i is flow i; node ids are assigned in first-seen order (src before dst).
  static FlowGraph build(std::span<const std::string> src, std::span<const std::string> dst,
                         Mat edge_features);
  static FlowGraph build(const std::vector<FlowRecord>& records, Mat edge_features);

  std::size_t num_nodes() const { return node_names_.size(); }
  std::size_t num_edges() const { return src_.size(); }
  std::size_t feature_dim() const { return static_cast<std::size_t>(features_.cols()); }

  NodeId src(EdgeId e) const { return src_[static_cast<std::size_t>(e)]; }
  NodeId dst(EdgeId e) const { return dst_[static_cast<std::size_t>(e)]; }
  // Original flow index of edge e (differs from e only after retain_window).
  std::size_t flow_index(EdgeId e) const { return flow_index_[static_cast<std::size_t>(e)]; }
  const std::string& node_name(NodeId v) const { return node_names_[static_cast<std::size_t>(v)]; }
  const Mat& features() const { return features_; }

  std::span<const EdgeId> out_edges(NodeId v) const;
  std::span<const EdgeId> in_edges(NodeId v) const;
  // Incident edges in the chosen direction(s): out-edges first, then in-edges;
  // a self-loop is listed once.
  std::vector<EdgeId> incident_edges(NodeId v, Direction dir) const;
  std::size_t degree(NodeId v, Direction dir) const;

  // Keeps only the `window` most recent edges (highest flow indices).
  FlowGraph retain_window(std::size_t window) const;

  // Debug dump: edge,src,dst,flow_index,f0..fn
  void write_edge_csv(std::ostream& out) const;

 private:
  void index_adjacency();

  std::vector<std::string> node_names_;
  std::vector<NodeId> src_;
  std::vector<NodeId> dst_;
  std::vector<std::size_t> flow_index_;
  Mat features_;
  std::vector<std::size_t> out_offsets_, in_offsets_;
  std::vector<EdgeId> out_list_, in_list_;
};

// Target edges plus their sampled k-hop neighbourhood. Nodes are renumbered
// locally; `nodes[i]` is the graph id of local node i.
struct EdgeBatch {
  std::vector<EdgeId> target_edges;
  std::vector<NodeId> nodes;
  // CSR over local nodes: sampled incident edges and their opposite endpoint.
  std::vector<std::size_t> adj_offsets;
  std::vector<EdgeId> adj_edges;
  std::vector<std::int64_t> adj_neighbors;  // local id of the other endpoint
  std::vector<std::int64_t> target_src;     // local ids of target endpoints
  std::vector<std::int64_t> target_dst;
  int hops = 0;

  std::size_t size() const { return target_edges.size(); }
  std::size_t num_local_nodes() const { return nodes.size(); }
  // Distinct edges of the subgraph: targets followed by sampled edges.
  std::vector<EdgeId> subgraph_edges() const;
};

struct SamplerOptions {
  int hops = 1;
  std::size_t fanout = 32768;
  Direction direction = Direction::Both;
};

// Per-node sampling without replacement, each node sampled once per batch.
EdgeBatch sample_edge_batch(const FlowGraph& graph, std::span<const EdgeId> edge_ids,
                            const SamplerOptions& options, Rng& rng);
EdgeBatch sample_edge_batch(const FlowGraph& graph, std::span<const EdgeId> edge_ids,
                            const SamplerOptions& options, std::uint64_t seed);
// Batch with targets only (no neighbourhood), used by graph-free models.
EdgeBatch target_only_batch(const FlowGraph& graph, std::span<const EdgeId> edge_ids);

// Partition of 0..n_edges-1 into consecutive batches, optionally shuffled.
std::vector<std::vector<EdgeId>> partition_edges(std::size_t n_edges, std::size_t batch_size,
                                                 bool shuffle, Rng& rng);

class BatchIterator {
 public:
  BatchIterator(const FlowGraph& graph, std::size_t batch_size, bool shuffle, std::uint64_t seed,
                SamplerOptions sampler, bool sample_neighbors = true);

  // Starts a new epoch; reshuffles when shuffling is enabled.
  void start_epoch();
  bool next(EdgeBatch& batch);
  std::size_t batches_per_epoch() const;

  Rng& shuffle_rng() { return shuffle_rng_; }
  Rng& sample_rng() { return sample_rng_; }

 private:
  const FlowGraph* graph_;
  std::size_t batch_size_;
  bool shuffle_;
  SamplerOptions sampler_;
  bool sample_neighbors_;
  Rng shuffle_rng_;
  Rng sample_rng_;
  std::vector<std::vector<EdgeId>> epoch_;
  std::size_t cursor_ = 0;
};

}  // namespace graphids
