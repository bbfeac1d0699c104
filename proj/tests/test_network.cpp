#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <cstdio>

#include "fd_check.hpp"
#include "voxgrasp/network.hpp"

using namespace vg;
using vgtest::fd_check;
using vgtest::weighted_sum;

namespace {

ModelConfig tiny_config(int n = 8) {
  ModelConfig c;
  c.grid_resolution = n;
  c.c1 = 4;
  c.c2 = 8;
  c.c3 = 8;
  c.mos_parts = 2;
  c.init_seed = 3;
  return c;
}

Tensor<double> random_input(int n, std::uint64_t seed) {
  Tensor<double> t({1, n, n, n});
  Rng rng(seed);
  for (auto& v : t.data) v = rng.uniform(-1, 1);
  return t;
}

void zero_param(ParamStore<double>& s, const std::string& name) {
  auto& e = s.at(name);
  std::fill(e.value.data.begin(), e.value.data.end(), 0.0);
}

}  // namespace

TEST_CASE("model config validation") {
  ModelConfig c = ModelConfig::toy(32);
  c.validate();
  c.grid_resolution = 30;
  CHECK_THROWS_AS(c.validate(), config_error);
  c = ModelConfig::toy(32);
  c.mos_parts = 3;  // does not divide 32
  CHECK_THROWS_AS(c.validate(), config_error);
  c = ModelConfig::toy(32);
  c.reduction = 3;
  CHECK_THROWS_AS(c.validate(), config_error);
  CHECK(ModelConfig{}.c1 == 32);
  CHECK(ModelConfig{}.c2 == 64);
  CHECK(ModelConfig{}.c3 == 128);
  CHECK(ModelConfig{}.mos_parts == 2);
}

TEST_CASE("pyramid shapes follow the stride arithmetic") {
  ModelConfig c = ModelConfig::toy(32);
  GraspNet<double> net(c);
  Graph<double> g(&net.params);
  Var in = g.input(random_input(32, 1));
  typename GraspNet<double>::Forward f;
  net.fpn(g, in, f);
  CHECK(g.value(f.x1).shape == std::vector<int>{8, 32, 32, 32});
  CHECK(g.value(f.x2).shape == std::vector<int>{16, 16, 16, 16});
  CHECK(g.value(f.x3).shape == std::vector<int>{32, 8, 8, 8});

  Var bad = g.input(random_input(16, 2));
  typename GraspNet<double>::Forward f2;
  CHECK_THROWS_AS(net.fpn(g, bad, f2), config_error);
}

TEST_CASE("zero input with zero biases produces zero features") {
  GraspNet<double> net(tiny_config());
  Graph<double> g(&net.params);
  Var in = g.input(Tensor<double>({1, 8, 8, 8}));
  typename GraspNet<double>::Forward f;
  net.fpn(g, in, f);
  for (Var v : {f.x1, f.x2, f.x3})
    for (double x : g.value(v).data) CHECK(x == 0.0);
}

TEST_CASE("insight block: zero MLP weights give a 0.5 gate") {
  GraspNet<double> net(tiny_config());
  for (const char* p : {"it1.mlp1.w", "it1.mlp1.b", "it1.mlp2.w", "it1.mlp2.b"})
    zero_param(net.params, p);

  Graph<double> g(&net.params);
  Var in = g.input(random_input(8, 7));
  typename GraspNet<double>::Forward f;
  net.fpn(g, in, f);
  Var xi = net.insight(g, "it1", f.x3, f.x1, {"it1.v0", "it1.v1"});

  // reference composition with an explicit 0.5 gate
  Var q = net.conv(g, "it1.qa", f.x3);
  Var qh = net.conv(g, "it1.qb", g.scale(q, 0.5));
  Var v = net.conv(g, "it1.v1", net.conv(g, "it1.v0", f.x1, 2), 2);
  Var want = g.relu(net.conv(g, "it1.refine", g.add(qh, v)));
  const auto& a = g.value(xi);
  const auto& b = g.value(want);
  REQUIRE(a.shape == b.shape);
  for (std::size_t i = 0; i < a.data.size(); ++i)
    CHECK(a.data[i] == Catch::Approx(b.data[i]).margin(1e-12));
}

TEST_CASE("insight block: zero V-path weights leave only the query path") {
  GraspNet<double> net(tiny_config());
  for (const char* p : {"it1.v0.w", "it1.v0.b", "it1.v1.w", "it1.v1.b"}) zero_param(net.params, p);
  Graph<double> g(&net.params);
  Var in = g.input(random_input(8, 8));
  typename GraspNet<double>::Forward f;
  net.fpn(g, in, f);
  Var xi = net.insight(g, "it1", f.x3, f.x1, {"it1.v0", "it1.v1"});

  Var pooled = g.reshape(g.global_avg_pool(f.x1), {1, 4});
  Var hidden = g.relu(g.linear(pooled, g.param("it1.mlp1.w"), g.param("it1.mlp1.b")));
  Var gate = g.reshape(
      g.sigmoid(g.linear(hidden, g.param("it1.mlp2.w"), g.param("it1.mlp2.b"))), {8});
  Var qh = net.conv(g, "it1.qb", g.channel_gate(gate, net.conv(g, "it1.qa", f.x3)));
  Var want = g.relu(net.conv(g, "it1.refine", qh));
  const auto& a = g.value(xi);
  const auto& b = g.value(want);
  for (std::size_t i = 0; i < a.data.size(); ++i)
    CHECK(a.data[i] == Catch::Approx(b.data[i]).margin(1e-12));
}

TEST_CASE("empower block: mixture coefficients and attention rows are stochastic") {
  GraspNet<double> net(tiny_config());
  Graph<double> g(&net.params);
  Var in = g.input(random_input(8, 9));
  typename GraspNet<double>::Forward f;
  net.fpn(g, in, f);
  net.empower(g, f.x3, f);

  const auto& pi = g.value(f.pi);
  REQUIRE(pi.shape == std::vector<int>{1, 2});
  CHECK(pi.data[0] + pi.data[1] == Catch::Approx(1.0).margin(1e-12));

  const auto& att = g.value(f.attention);
  const int m = att.dim(0);
  REQUIRE(att.dim(1) == m);
  for (int r = 0; r < m; ++r) {
    double sum = 0;
    for (int c2 = 0; c2 < m; ++c2) sum += att.data[std::size_t(r) * m + c2];
    CHECK(std::abs(sum - 1.0) < 1e-6);
  }
}

TEST_CASE("empower block: zero output conv is the identity (residual)") {
  GraspNet<double> net(tiny_config());
  zero_param(net.params, "et.out.w");
  zero_param(net.params, "et.out.b");
  Graph<double> g(&net.params);
  Var in = g.input(random_input(8, 10));
  typename GraspNet<double>::Forward f;
  net.fpn(g, in, f);
  Var xe = net.empower(g, f.x3, f);
  const auto& a = g.value(xe);
  const auto& b = g.value(f.x3);
  for (std::size_t i = 0; i < a.data.size(); ++i) CHECK(a.data[i] == b.data[i]);
}

TEST_CASE("empower block: one part reduces to plain scaled-dot attention") {
  ModelConfig c = tiny_config();
  c.mos_parts = 1;
  GraspNet<double> net(c);
  Graph<double> g(&net.params);
  Var in = g.input(random_input(8, 11));
  typename GraspNet<double>::Forward f;
  net.fpn(g, in, f);
  net.empower(g, f.x3, f);

  CHECK(g.value(f.pi).data[0] == 1.0);

  // direct computation: softmax(Q^T Q / sqrt(d)) with the shared projection
  Var qk4 = net.conv(g, "et.qk", f.x3);
  const auto& qk = g.value(qk4);
  const int d = qk.dim(0), m = int(qk.spatial());
  const auto& att = g.value(f.attention);
  for (int i = 0; i < m; ++i) {
    std::vector<double> row(static_cast<std::size_t>(m));
    double mx = -1e30;
    for (int j = 0; j < m; ++j) {
      double acc = 0;
      for (int ch = 0; ch < d; ++ch)
        acc += qk.data[std::size_t(ch) * m + i] * qk.data[std::size_t(ch) * m + j];
      row[std::size_t(j)] = acc / std::sqrt(double(d));
      mx = std::max(mx, row[std::size_t(j)]);
    }
    double sum = 0;
    for (double& v : row) {
      v = std::exp(v - mx);
      sum += v;
    }
    for (int j = 0; j < m; ++j)
      CHECK(std::abs(att.data[std::size_t(i) * m + j] - row[std::size_t(j)] / sum) <= 1e-9);
  }
}

TEST_CASE("empower block: constant input gives uniform attention rows") {
  GraspNet<double> net(tiny_config());
  Graph<double> g(&net.params);
  Var x3 = g.input(Tensor<double>({8, 2, 2, 2}, 0.37));
  typename GraspNet<double>::Forward f;
  net.empower(g, x3, f);
  const auto& att = g.value(f.attention);
  const int m = att.dim(0);
  for (double v : att.data) CHECK(v == Catch::Approx(1.0 / m).margin(1e-12));
}

TEST_CASE("full forward: head shapes, ranges, per-voxel unit quaternions") {
  ModelConfig c = tiny_config(8);
  GraspNet<double> net(c);
  Graph<double> g(&net.params);
  Var in = g.input(random_input(8, 12));
  auto f = net.forward(g, in);

  CHECK(g.value(f.quality).shape == std::vector<int>{1, 8, 8, 8});
  CHECK(g.value(f.rotation).shape == std::vector<int>{4, 8, 8, 8});
  CHECK(g.value(f.width).shape == std::vector<int>{1, 8, 8, 8});

  for (double q : g.value(f.quality).data) {
    CHECK(q > 0.0);
    CHECK(q < 1.0);
  }
  for (double w : g.value(f.width).data) {
    CHECK(w >= 0.0);
    CHECK(w <= c.max_width);
  }
  const auto& rot = g.value(f.rotation);
  const std::int64_t s = rot.spatial();
  for (std::int64_t v = 0; v < s; ++v) {
    double n = 0;
    for (int ch = 0; ch < 4; ++ch)
      n += rot.data[std::size_t(ch) * s + v] * rot.data[std::size_t(ch) * s + v];
    CHECK(std::abs(std::sqrt(n) - 1.0) < 1e-6);
  }

  // fusion concat width: 2 insight outputs + empower + the top level
  CHECK(net.params.at("fuse.w").value.dim(1) == 4 * c.c3);
}

TEST_CASE("zero head weights give quality 0.5 and width max_width/2") {
  GraspNet<double> net(tiny_config());
  for (const char* p : {"head_q.w", "head_q.b", "head_w.w", "head_w.b"}) zero_param(net.params, p);
  Graph<double> g(&net.params);
  auto f = net.forward(g, g.input(random_input(8, 13)));
  for (double q : g.value(f.quality).data) CHECK(q == 0.5);
  for (double w : g.value(f.width).data) CHECK(w == Catch::Approx(net.cfg.max_width / 2));
}

TEST_CASE("backbone gradient check on a 1x8^3 input") {
  GraspNet<double> net(tiny_config());
  Tensor<double> in = random_input(8, 14);
  auto rep = fd_check(
      net.params,
      [&](Graph<double>& g) {
        typename GraspNet<double>::Forward f;
        net.fpn(g, g.input(in), f);
        return g.mean_scalars({weighted_sum(g, f.x1, 1), weighted_sum(g, f.x2, 2),
                               weighted_sum(g, f.x3, 3)});
      },
      1e-5, 37);  // strided element subsample
  INFO(rep.worst_param);
  CHECK(rep.max_rel_err <= 1e-5);
}

TEST_CASE("full model gradient check at toy scale") {
  GraspNet<double> net(tiny_config());
  // keep every rotation column away from the normalization singularity at 0
  net.params.at("head_r.b").value.data = {0.2, -0.15, 0.1, 0.12};
  Tensor<double> in = random_input(8, 15);
  auto rep = fd_check(
      net.params,
      [&](Graph<double>& g) {
        auto f = net.forward(g, g.input(in));
        return g.mean_scalars({weighted_sum(g, f.quality_logits, 4),
                               weighted_sum(g, f.rotation, 5), weighted_sum(g, f.width, 6)});
      },
      1e-5, 101);
  INFO(rep.worst_param);
  CHECK(rep.max_rel_err <= 1e-4);
}

TEST_CASE("inference path matches the taped forward and is block-size independent") {
  ModelConfig c = tiny_config(8);
  GraspNet<double> net(c);
  TsdfGrid grid;
  grid.resolution = 8;
  grid.voxel_size = 0.3 / 8;
  grid.truncation = 4 * grid.voxel_size;
  grid.values.resize(grid.num_voxels());
  grid.weights.assign(grid.num_voxels(), 1.0f);
  Rng rng(16);
  for (auto& v : grid.values) v = float(rng.uniform(-1, 1));

  Graph<double> g(&net.params);
  auto f = net.forward(g, g.input(net.tsdf_to_tensor(grid)));
  GraspPrediction pred = net.predict(grid);

  const auto& q = g.value(f.quality);
  const auto& r = g.value(f.rotation);
  const auto& w = g.value(f.width);
  double max_diff = 0;
  for (std::size_t i = 0; i < pred.quality.size(); ++i)
    max_diff = std::max(max_diff, std::abs(double(pred.quality[i]) - q.data[i]));
  for (std::size_t i = 0; i < pred.rotation.size(); ++i)
    max_diff = std::max(max_diff, std::abs(double(pred.rotation[i]) - r.data[i]));
  for (std::size_t i = 0; i < pred.width.size(); ++i)
    max_diff = std::max(max_diff, std::abs(double(pred.width[i]) - w.data[i]));
  CHECK(max_diff < 1e-6);  // float export rounding only

  GraspNet<double> net_small_block(c);
  net_small_block.cfg.attention_row_block = 3;
  GraspPrediction pred2 = net_small_block.predict(grid);
  CHECK(pred2.quality == pred.quality);
  CHECK(pred2.rotation == pred.rotation);
  CHECK(pred2.width == pred.width);
}

TEST_CASE("model config text round-trip") {
  ModelConfig c = tiny_config(16);
  c.max_width = 0.0731;
  write_model_config(c, "model_cfg_rt.txt");
  ModelConfig back = read_model_config("model_cfg_rt.txt");
  CHECK(back.grid_resolution == 16);
  CHECK(back.c1 == c.c1);
  CHECK(back.c2 == c.c2);
  CHECK(back.c3 == c.c3);
  CHECK(back.mos_parts == c.mos_parts);
  CHECK(back.max_width == c.max_width);
  std::remove("model_cfg_rt.txt");
}
