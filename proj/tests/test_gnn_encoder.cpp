#include <gtest/gtest.h>

#include <numeric>

#include "graphids/error.hpp"
#include "graphids/gnn_encoder.hpp"
#include "test_support.hpp"

namespace graphids {
namespace {

struct Toy {
  std::vector<std::string> src, dst;
  Mat x;
  FlowGraph graph() const { return FlowGraph::build(src, dst, x); }
};

Toy five_edges(int dim, std::uint64_t seed) {
  Toy t;
  t.src = {"a", "b", "c", "a", "d"};
  t.dst = {"b", "c", "a", "d", "b"};
  Rng rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  t.x.resize(5, dim);
  for (Eigen::Index i = 0; i < t.x.size(); ++i) t.x.data()[i] = u(rng);
  return t;
}

std::vector<EdgeId> all_edges(const FlowGraph& g) {
  std::vector<EdgeId> ids(g.num_edges());
  std::iota(ids.begin(), ids.end(), EdgeId{0});
  return ids;
}

GnnConfig small_config(int dim, int layers = 1) {
  return GnnConfig{.feature_dim = dim, .hidden_dim = 4, .out_dim = 3, .layers = layers, .dropout = 0.0};
}

// Scalar re-implementation of the recurrence over the full (unsampled)
// neighbourhood, written with plain loops.
std::vector<std::vector<double>> reference_embeddings(const Toy& t, const GnnEncoder& enc) {
  const FlowGraph g = t.graph();
  const int d = static_cast<int>(t.x.cols());
  const auto params = enc.parameters();
  std::vector<std::vector<double>> h(g.num_nodes(), std::vector<double>(static_cast<std::size_t>(d), 1.0));
  for (int k = 0; k < enc.config().layers; ++k) {
    const Mat& w = params[2 * k]->value;
    const Mat& b = params[2 * k + 1]->value;
    std::vector<std::vector<double>> next(g.num_nodes());
    for (std::size_t v = 0; v < g.num_nodes(); ++v) {
      const std::size_t sd = h[v].size();
      std::vector<double> msg(sd + d, 0.0);
      std::size_t count = 0;
      for (std::size_t e = 0; e < g.num_edges(); ++e) {
        const auto s = static_cast<std::size_t>(g.src(e)), q = static_cast<std::size_t>(g.dst(e));
        if (s != v && q != v) continue;
        const std::size_t other = s == v ? q : s;
        for (std::size_t j = 0; j < sd; ++j) msg[j] += h[other][j];
        for (int j = 0; j < d; ++j) msg[sd + j] += t.x(static_cast<Eigen::Index>(e), j);
        ++count;
      }
      for (double& m : msg) m = count ? m / count : 0.0;
      std::vector<double> in = h[v];
      in.insert(in.end(), msg.begin(), msg.end());
      for (Eigen::Index o = 0; o < w.cols(); ++o) {
        double z = b(0, o);
        for (std::size_t i = 0; i < in.size(); ++i) z += in[i] * w(static_cast<Eigen::Index>(i), o);
        next[v].push_back(std::max(0.0, z));
      }
    }
    h = next;
  }
  const Mat& pw = params[params.size() - 2]->value;
  const Mat& pb = params.back()->value;
  std::vector<std::vector<double>> out;
  for (std::size_t e = 0; e < g.num_edges(); ++e) {
    std::vector<double> in = h[static_cast<std::size_t>(g.src(e))];
    const auto& hv = h[static_cast<std::size_t>(g.dst(e))];
    in.insert(in.end(), hv.begin(), hv.end());
    std::vector<double> row;
    for (Eigen::Index o = 0; o < pw.cols(); ++o) {
      double z = pb(0, o);
      for (std::size_t i = 0; i < in.size(); ++i) z += in[i] * pw(static_cast<Eigen::Index>(i), o);
      row.push_back(z);
    }
    out.push_back(row);
  }
  return out;
}

TEST(GnnEncoder, InitialStatesAreOnes) {
  EXPECT_EQ(init_node_states(3, 4), Mat::Ones(3, 4));
  EXPECT_EQ(init_node_states(0, 4).rows(), 0);
}

TEST(GnnEncoder, ZeroWeightsGiveZeroEmbeddings) {
  const Toy t = five_edges(3, 1);
  const FlowGraph g = t.graph();
  ParameterStore store;
  Rng rng(0);
  GnnEncoder enc(small_config(3), store, rng);
  for (Parameter& p : store) p.value.setZero();
  const auto ids = all_edges(g);
  const Mat e = enc.embed(g, sample_edge_batch(g, ids, {}, 1));
  EXPECT_EQ(e.rows(), 5);
  EXPECT_EQ(e.cwiseAbs().maxCoeff(), 0.0);
}

TEST(GnnEncoder, SingleEdgeHandEvaluation) {
  // u -> v with one feature x = 0.5. Both endpoints see the single edge, so
  // msg = [1, 0.5] and the layer input is [1, 1, 0.5] for u and v alike.
  const Toy t{{"u"}, {"v"}, Mat::Constant(1, 1, 0.5)};
  const FlowGraph g = t.graph();
  ParameterStore store;
  Rng rng(0);
  GnnEncoder enc(GnnConfig{.feature_dim = 1, .hidden_dim = 2, .out_dim = 2, .layers = 1}, store, rng);
  store.find("gnn.layer0.weight")->value = (Mat(3, 2) << 1, -1, 2, 0, 4, 1).finished();
  store.find("gnn.layer0.bias")->value = (Mat(1, 2) << 0, -0.2).finished();
  store.find("gnn.edge_proj.weight")->value = (Mat(4, 2) << 1, 0, 0, 1, 1, 0, 0, -1).finished();
  store.find("gnn.edge_proj.bias")->value = (Mat(1, 2) << 0.1, 0.0).finished();
  // h = relu([1*1 + 1*2 + 0.5*4 + 0, 1*-1 + 0 + 0.5*1 - 0.2]) = [5, 0]
  // edge = [5, 0, 5, 0] P + c = [10.1, 0]
  const std::vector<EdgeId> ids{0};
  const Mat e = enc.embed(g, sample_edge_batch(g, ids, {}, 1));
  EXPECT_DOUBLE_EQ(e(0, 0), 10.1);
  EXPECT_DOUBLE_EQ(e(0, 1), 0.0);
}

TEST(GnnEncoder, MatchesScalarReference) {
  for (int layers : {1, 2}) {
    const Toy t = five_edges(3, 2);
    const FlowGraph g = t.graph();
    ParameterStore store;
    Rng rng(layers);
    GnnEncoder enc(small_config(3, layers), store, rng);
    const auto ids = all_edges(g);
    const Mat e = enc.embed(g, sample_edge_batch(g, ids, {.hops = layers}, 1));
    const auto ref = reference_embeddings(t, enc);
    for (std::size_t i = 0; i < ref.size(); ++i)
      for (std::size_t j = 0; j < ref[i].size(); ++j)
        EXPECT_NEAR(e(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)), ref[i][j], 1e-12);
  }
}

TEST(GnnEncoder, FullFanoutEqualsUncapped) {
  const Toy t = five_edges(2, 3);
  const FlowGraph g = t.graph();
  ParameterStore store;
  Rng rng(1);
  GnnEncoder enc(small_config(2), store, rng);
  const auto ids = all_edges(g);
  const Mat a = enc.embed(g, sample_edge_batch(g, ids, {.fanout = 4}, 5));  // max degree is 3
  const Mat b = enc.embed(g, sample_edge_batch(g, ids, {.fanout = 32768}, 6));
  EXPECT_EQ(a, b);
}

TEST(GnnEncoder, GradientMatchesFiniteDifferences) {
  const Toy t = five_edges(3, 4);
  const FlowGraph g = t.graph();
  ParameterStore store;
  Rng rng(2);
  GnnEncoder enc(small_config(3, 2), store, rng);
  const auto ids = all_edges(g);
  const EdgeBatch batch = sample_edge_batch(g, ids, {.hops = 2}, 1);
  Rng urng(3);
  std::normal_distribution<double> n;
  Mat upstream(5, 3);
  for (Eigen::Index i = 0; i < upstream.size(); ++i) upstream.data()[i] = n(urng);

  Rng drop(0);
  GnnTrace trace = enc.forward_trace(g, batch, Mode::Train, drop);
  enc.backward(trace, upstream);
  auto loss = [&] { return (enc.embed(g, batch).array() * upstream.array()).sum(); };
  const auto r = testing::finite_difference_check(store, loss);
  EXPECT_LE(r.max_rel, 1e-4) << r.worst;
}

TEST(GnnEncoder, BackwardContracts) {
  const Toy t = five_edges(2, 5);
  const FlowGraph g = t.graph();
  ParameterStore store;
  Rng rng(2);
  GnnEncoder enc(small_config(2), store, rng);
  const auto ids = all_edges(g);
  const EdgeBatch batch = sample_edge_batch(g, ids, {}, 1);
  Rng d1(0), d2(0);
  GnnTrace a = enc.forward_trace(g, batch, Mode::Train, d1);
  for (const Mat& gr : enc.backward(a, Mat::Zero(5, 3))) EXPECT_EQ(gr.cwiseAbs().maxCoeff(), 0.0);

  GnnTrace b = enc.forward_trace(g, batch, Mode::Train, d1);
  GnnTrace c = enc.forward_trace(g, batch, Mode::Train, d2);
  const Mat up = Mat::Ones(5, 3);
  EXPECT_EQ(enc.backward(b, up), enc.backward(c, up));

  GnnTrace empty;
  EXPECT_THROW(enc.backward(empty, up), Error);
  GnnTrace eval = enc.forward_trace(g, batch, Mode::Eval, d1);
  EXPECT_THROW(enc.backward(eval, up), Error);
}

TEST(GnnEncoder, DropoutOnlyInTraining) {
  const Toy t = five_edges(2, 6);
  const FlowGraph g = t.graph();
  ParameterStore store;
  Rng rng(3);
  GnnConfig cfg = small_config(2);
  cfg.dropout = 0.5;
  GnnEncoder enc(cfg, store, rng);
  const auto ids = all_edges(g);
  const EdgeBatch batch = sample_edge_batch(g, ids, {}, 1);
  EXPECT_EQ(enc.embed(g, batch), enc.embed(g, batch));
  Rng d(1);
  Tape tape(false);
  const Mat train = enc.forward(tape, g, batch, Mode::Train, d).value();
  EXPECT_NE(train, enc.embed(g, batch));
}

TEST(GnnEncoder, PermutationInvariance) {
  const Toy t = five_edges(3, 7);
  ParameterStore store;
  Rng rng(4);
  GnnEncoder enc(small_config(3, 2), store, rng);
  const std::vector<std::size_t> perm = {3, 0, 4, 1, 2};
  Toy p;
  for (const std::size_t i : perm) {
    // relabel hosts as well
    p.src.push_back("host_" + t.src[i]);
    p.dst.push_back("host_" + t.dst[i]);
  }
  p.x.resize(5, 3);
  for (std::size_t i = 0; i < 5; ++i) p.x.row(static_cast<Eigen::Index>(i)) = t.x.row(static_cast<Eigen::Index>(perm[i]));
  const FlowGraph g = t.graph(), gp = p.graph();
  const Mat a = enc.embed(g, sample_edge_batch(g, all_edges(g), {.hops = 2}, 1));
  const Mat b = enc.embed(gp, sample_edge_batch(gp, all_edges(gp), {.hops = 2}, 1));
  for (std::size_t i = 0; i < 5; ++i)
    EXPECT_TRUE(b.row(static_cast<Eigen::Index>(i)).isApprox(a.row(static_cast<Eigen::Index>(perm[i])), 1e-12));
}

TEST(GnnEncoder, DuplicatedEdgesLeaveMeanUnchanged) {
  const Toy t = five_edges(3, 8);
  Toy dup = t;
  dup.src.insert(dup.src.end(), t.src.begin(), t.src.end());
  dup.dst.insert(dup.dst.end(), t.dst.begin(), t.dst.end());
  dup.x.resize(10, 3);
  dup.x << t.x, t.x;
  ParameterStore store;
  Rng rng(5);
  GnnEncoder enc(small_config(3), store, rng);
  const FlowGraph g = t.graph(), gd = dup.graph();
  const Mat a = enc.embed(g, sample_edge_batch(g, all_edges(g), {}, 1));
  const Mat b = enc.embed(gd, sample_edge_batch(gd, all_edges(gd), {}, 1));
  EXPECT_TRUE(b.topRows(5).isApprox(a, 1e-12));
}

TEST(GnnEncoder, OneHopLocality) {
  Toy t;
  t.src = {"a", "b", "x", "y"};
  t.dst = {"b", "c", "y", "z"};
  t.x = Mat::Constant(4, 2, 0.3);
  Toy other = t;
  other.x.row(3).setConstant(9.0);  // y->z does not touch a or b
  ParameterStore store;
  Rng rng(6);
  GnnEncoder enc(small_config(2), store, rng);
  const std::vector<EdgeId> target{0};
  const FlowGraph g1 = t.graph(), g2 = other.graph();
  EXPECT_EQ(enc.embed(g1, sample_edge_batch(g1, target, {}, 1)), enc.embed(g2, sample_edge_batch(g2, target, {}, 1)));
}

TEST(GnnEncoder, RejectsNonFiniteFeaturesAndBadShapes) {
  Toy t = five_edges(2, 9);
  t.x(2, 1) = std::nan("");
  const FlowGraph g = t.graph();
  ParameterStore store;
  Rng rng(7);
  GnnEncoder enc(small_config(2), store, rng);
  EXPECT_THROW(enc.embed(g, sample_edge_batch(g, all_edges(g), {}, 1)), Error);
  ParameterStore other;
  EXPECT_THROW(GnnEncoder(small_config(0), other, rng), Error);
  ParameterStore store3;
  GnnEncoder three(small_config(3), store3, rng);
  const Toy ok = five_edges(2, 9);
  const FlowGraph g2 = ok.graph();
  EXPECT_THROW(three.embed(g2, sample_edge_batch(g2, all_edges(g2), {}, 1)), ShapeError);
}

TEST(GnnEncoder, IsolatedNodeGetsZeroMessage) {
  // target-only batch: no sampled adjacency for any node
  const Toy t{{"u"}, {"v"}, Mat::Constant(1, 1, 0.5)};
  const FlowGraph g = t.graph();
  ParameterStore store;
  Rng rng(0);
  GnnEncoder enc(GnnConfig{.feature_dim = 1, .hidden_dim = 1, .out_dim = 1, .layers = 1}, store, rng);
  store.find("gnn.layer0.weight")->value = (Mat(3, 1) << 1, 7, 7).finished();
  store.find("gnn.layer0.bias")->value.setZero();
  store.find("gnn.edge_proj.weight")->value = (Mat(2, 1) << 1, 1).finished();
  store.find("gnn.edge_proj.bias")->value.setZero();
  EdgeBatch b = sample_edge_batch(g, std::vector<EdgeId>{0}, {}, 1);
  b.adj_edges.clear();
  b.adj_neighbors.clear();
  std::fill(b.adj_offsets.begin(), b.adj_offsets.end(), 0);
  // h = relu(1*1 + 0 + 0) = 1 for both endpoints
  EXPECT_DOUBLE_EQ(enc.embed(g, b)(0, 0), 2.0);
}

}  // namespace
}  // namespace graphids
