#include "graphids/flow_graph.hpp"

#include <algorithm>
#include <charconv>
#include <numeric>
#include <ostream>
#include <unordered_map>

#include "graphids/error.hpp"

namespace graphids {

Direction parse_direction(std::string_view s) {
  if (s == "both") return Direction::Both;
  if (s == "in") return Direction::In;
  if (s == "out") return Direction::Out;
  throw Error("unknown aggregation direction '" + std::string(s) + "' (expected both|in|out)");
}

std::string_view direction_name(Direction d) {
  switch (d) {
    case Direction::Both:
      return "both";
    case Direction::In:
      return "in";
    case Direction::Out:
      return "out";
  }
  return "both";
}

FlowGraph FlowGraph::build(std::span<const std::string> src, std::span<const std::string> dst,
                           Mat edge_features) {
  if (src.size() != dst.size()) throw ShapeError("build_graph: endpoint lists differ in length");
  if (static_cast<std::size_t>(edge_features.rows()) != src.size())
    throw ShapeError("build_graph: feature rows must equal the number of flows");
  FlowGraph g;
  std::unordered_map<std::string, NodeId> ids;
  auto intern = [&](const std::string& name) {
    if (name.empty()) throw Error("build_graph: empty endpoint identifier");
    const auto [it, inserted] = ids.emplace(name, static_cast<NodeId>(g.node_names_.size()));
    if (inserted) g.node_names_.push_back(name);
    return it->second;
  };
  g.src_.reserve(src.size());
  g.dst_.reserve(src.size());
  for (std::size_t i = 0; i < src.size(); ++i) {
    g.src_.push_back(intern(src[i]));
    g.dst_.push_back(intern(dst[i]));
  }
  g.flow_index_.resize(src.size());
  std::iota(g.flow_index_.begin(), g.flow_index_.end(), std::size_t{0});
  g.features_ = std::move(edge_features);
  g.index_adjacency();
  return g;
}

FlowGraph FlowGraph::build(const std::vector<FlowRecord>& records, Mat edge_features) {
  std::vector<std::string> src, dst;
  src.reserve(records.size());
  dst.reserve(records.size());
  for (const auto& r : records) {
    src.push_back(r.src_ip);
    dst.push_back(r.dst_ip);
  }
  return build(src, dst, std::move(edge_features));
}

void FlowGraph::index_adjacency() {
  const std::size_t n = node_names_.size();
  out_offsets_.assign(n + 1, 0);
  in_offsets_.assign(n + 1, 0);
  for (std::size_t e = 0; e < src_.size(); ++e) {
    ++out_offsets_[static_cast<std::size_t>(src_[e]) + 1];
    ++in_offsets_[static_cast<std::size_t>(dst_[e]) + 1];
  }
  std::partial_sum(out_offsets_.begin(), out_offsets_.end(), out_offsets_.begin());
  std::partial_sum(in_offsets_.begin(), in_offsets_.end(), in_offsets_.begin());
  out_list_.resize(src_.size());
  in_list_.resize(src_.size());
  std::vector<std::size_t> oc(out_offsets_.begin(), out_offsets_.end() - 1);
  std::vector<std::size_t> ic(in_offsets_.begin(), in_offsets_.end() - 1);
  for (std::size_t e = 0; e < src_.size(); ++e) {
    out_list_[oc[static_cast<std::size_t>(src_[e])]++] = static_cast<EdgeId>(e);
    in_list_[ic[static_cast<std::size_t>(dst_[e])]++] = static_cast<EdgeId>(e);
  }
}

std::span<const EdgeId> FlowGraph::out_edges(NodeId v) const {
  const auto i = static_cast<std::size_t>(v);
  return {out_list_.data() + out_offsets_[i], out_offsets_[i + 1] - out_offsets_[i]};
}

std::span<const EdgeId> FlowGraph::in_edges(NodeId v) const {
  const auto i = static_cast<std::size_t>(v);
  return {in_list_.data() + in_offsets_[i], in_offsets_[i + 1] - in_offsets_[i]};
}

std::vector<EdgeId> FlowGraph::incident_edges(NodeId v, Direction dir) const {
  std::vector<EdgeId> out;
  if (dir != Direction::In) {
    const auto o = out_edges(v);
    out.insert(out.end(), o.begin(), o.end());
  }
  if (dir != Direction::Out) {
    for (const EdgeId e : in_edges(v)) {
      // self-loops were already listed as out-edges
      if (dir == Direction::Both && src(e) == v) continue;
      out.push_back(e);
    }
  }
  return out;
}

std::size_t FlowGraph::degree(NodeId v, Direction dir) const {
  return incident_edges(v, dir).size();
}

FlowGraph FlowGraph::retain_window(std::size_t window) const {
  const std::size_t n = num_edges();
  const std::size_t keep = std::min(window, n);
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return flow_index_[a] < flow_index_[b]; });
  order.erase(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n - keep));
  std::vector<std::string> s, d;
  Mat f(static_cast<Eigen::Index>(keep), features_.cols());
  for (std::size_t i = 0; i < keep; ++i) {
    s.push_back(node_name(src_[order[i]]));
    d.push_back(node_name(dst_[order[i]]));
    f.row(static_cast<Eigen::Index>(i)) = features_.row(static_cast<Eigen::Index>(order[i]));
  }
  FlowGraph g = build(s, d, std::move(f));
  for (std::size_t i = 0; i < keep; ++i) g.flow_index_[i] = flow_index_[order[i]];
  return g;
}

void FlowGraph::write_edge_csv(std::ostream& out) const {
  out << "edge,src,dst,flow_index";
  for (Eigen::Index j = 0; j < features_.cols(); ++j) out << ",f" << j;
  out << '\n';
  char buf[64];
  for (std::size_t e = 0; e < num_edges(); ++e) {
    out << e << ',' << src_[e] << ',' << dst_[e] << ',' << flow_index_[e];
    for (Eigen::Index j = 0; j < features_.cols(); ++j) {
      const auto [p, ec] = std::to_chars(buf, buf + sizeof(buf), features_(static_cast<Eigen::Index>(e), j));
      (void)ec;
      out << ',' << std::string_view(buf, static_cast<std::size_t>(p - buf));
    }
    out << '\n';
  }
}

std::vector<EdgeId> EdgeBatch::subgraph_edges() const {
  std::vector<EdgeId> out = target_edges;
  std::vector<EdgeId> seen(target_edges.begin(), target_edges.end());
  std::vector<EdgeId> extra(adj_edges.begin(), adj_edges.end());
  std::sort(seen.begin(), seen.end());
  std::sort(extra.begin(), extra.end());
  extra.erase(std::unique(extra.begin(), extra.end()), extra.end());
  for (const EdgeId e : extra)
    if (!std::binary_search(seen.begin(), seen.end(), e)) out.push_back(e);
  return out;
}

namespace {

void check_targets(const FlowGraph& graph, std::span<const EdgeId> edge_ids) {
  for (const EdgeId e : edge_ids)
    if (e < 0 || static_cast<std::size_t>(e) >= graph.num_edges())
      throw Error("sample_edge_batch: invalid edge id " + std::to_string(e));
}

}  // namespace

EdgeBatch sample_edge_batch(const FlowGraph& graph, std::span<const EdgeId> edge_ids,
                            const SamplerOptions& options, Rng& rng) {
  if (options.hops < 1) throw Error("sample_edge_batch: hops must be >= 1");
  if (options.fanout < 1) throw Error("sample_edge_batch: fanout must be >= 1");
  check_targets(graph, edge_ids);

  EdgeBatch b;
  b.hops = options.hops;
  b.target_edges.assign(edge_ids.begin(), edge_ids.end());
  std::unordered_map<NodeId, std::int64_t> local;
  auto intern = [&](NodeId v, std::vector<NodeId>* frontier) {
    const auto [it, inserted] = local.emplace(v, static_cast<std::int64_t>(b.nodes.size()));
    if (inserted) {
      b.nodes.push_back(v);
      if (frontier != nullptr) frontier->push_back(v);
    }
    return it->second;
  };

  std::vector<NodeId> frontier;
  for (const EdgeId e : edge_ids) {
    b.target_src.push_back(intern(graph.src(e), &frontier));
    b.target_dst.push_back(intern(graph.dst(e), &frontier));
  }

  b.adj_offsets.push_back(0);
  std::vector<EdgeId> picked;
  for (int hop = 0; hop < options.hops; ++hop) {
    std::vector<NodeId> next;
    for (const NodeId v : frontier) {
      const std::vector<EdgeId> incident = graph.incident_edges(v, options.direction);
      picked.clear();
      if (incident.size() <= options.fanout) {
        picked = incident;
      } else {
        std::sample(incident.begin(), incident.end(), std::back_inserter(picked),
                    static_cast<std::ptrdiff_t>(options.fanout), rng);
      }
      for (const EdgeId e : picked) {
        const NodeId other = graph.src(e) == v ? graph.dst(e) : graph.src(e);
        b.adj_edges.push_back(e);
        b.adj_neighbors.push_back(intern(other, &next));
      }
      b.adj_offsets.push_back(b.adj_edges.size());
    }
    frontier = std::move(next);
  }
  // Outermost frontier nodes carry no sampled adjacency.
  while (b.adj_offsets.size() < b.nodes.size() + 1) b.adj_offsets.push_back(b.adj_edges.size());
  return b;
}

EdgeBatch sample_edge_batch(const FlowGraph& graph, std::span<const EdgeId> edge_ids,
                            const SamplerOptions& options, std::uint64_t seed) {
  Rng rng = make_rng(seed, 0x5a3b1e);
  return sample_edge_batch(graph, edge_ids, options, rng);
}

EdgeBatch target_only_batch(const FlowGraph& graph, std::span<const EdgeId> edge_ids) {
  check_targets(graph, edge_ids);
  EdgeBatch b;
  b.target_edges.assign(edge_ids.begin(), edge_ids.end());
  b.adj_offsets.push_back(0);
  return b;
}

std::vector<std::vector<EdgeId>> partition_edges(std::size_t n_edges, std::size_t batch_size,
                                                 bool shuffle, Rng& rng) {
  if (batch_size < 1) throw Error("batch size must be >= 1");
  std::vector<EdgeId> order(n_edges);
  std::iota(order.begin(), order.end(), EdgeId{0});
  if (shuffle) std::shuffle(order.begin(), order.end(), rng);
  std::vector<std::vector<EdgeId>> batches;
  for (std::size_t i = 0; i < n_edges; i += batch_size) {
    const std::size_t j = std::min(n_edges, i + batch_size);
    batches.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(i),
                         order.begin() + static_cast<std::ptrdiff_t>(j));
  }
  return batches;
}

BatchIterator::BatchIterator(const FlowGraph& graph, std::size_t batch_size, bool shuffle,
                             std::uint64_t seed, SamplerOptions sampler, bool sample_neighbors)
    : graph_(&graph),
      batch_size_(batch_size),
      shuffle_(shuffle),
      sampler_(sampler),
      sample_neighbors_(sample_neighbors),
      shuffle_rng_(make_rng(seed, 0x5f0ff1e)),
      sample_rng_(make_rng(seed, 0x5a3b1e)) {
  if (batch_size_ < 1) throw Error("batch size must be >= 1");
}

void BatchIterator::start_epoch() {
  epoch_ = partition_edges(graph_->num_edges(), batch_size_, shuffle_, shuffle_rng_);
  cursor_ = 0;
}

bool BatchIterator::next(EdgeBatch& batch) {
  if (cursor_ >= epoch_.size()) return false;
  const auto& ids = epoch_[cursor_++];
  batch = sample_neighbors_ ? sample_edge_batch(*graph_, ids, sampler_, sample_rng_)
                            : target_only_batch(*graph_, ids);
  return true;
}

std::size_t BatchIterator::batches_per_epoch() const {
  return (graph_->num_edges() + batch_size_ - 1) / batch_size_;
}

}  // namespace graphids
