#pragma once

#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <string>
#include <vector>

#include "voxgrasp/common.hpp"
#include "voxgrasp/graph.hpp"
#include "voxgrasp/tensor.hpp"
#include "voxgrasp/volume.hpp"

namespace vg {

// ---------------------------------------------------------------------------
// Model configuration. Full scale uses an 80-cell grid, pyramid channels
// (32, 64, 128) and a two-part softmax mixture; tests shrink everything.
// ---------------------------------------------------------------------------

struct ModelConfig {
  int grid_resolution = 80;  // must be divisible by 4
  int c1 = 32, c2 = 64, c3 = 128;
  int mos_parts = 2;       // softmax mixture size
  int reduction = 4;       // channel-attention MLP bottleneck ratio
  double max_width = 0.08;
  std::uint64_t init_seed = 1;
  int attention_row_block = 512;

  static ModelConfig toy(int n = 32) {
    ModelConfig c;
    c.grid_resolution = n;
    c.c1 = 8;
    c.c2 = 16;
    c.c3 = 32;
    return c;
  }

  void validate() const {
    if (grid_resolution < 4 || grid_resolution % 4)
      throw config_error("grid_resolution must be a positive multiple of 4");
    if (c1 <= 0 || c2 <= 0 || c3 <= 0) throw config_error("channel dims must be positive");
    if (mos_parts <= 0 || c3 % mos_parts)
      throw config_error("mixture part count must divide the level-3 channel dim");
    if (reduction <= 0 || c1 % reduction || c2 % reduction)
      throw config_error("reduction ratio must divide the lower-level channel dims");
    if (!(max_width > 0)) throw config_error("max_width must be positive");
  }
};

// Per-voxel prediction volumes (channel-major, x fastest; quaternions stored
// w,x,y,z).
struct GraspPrediction {
  int resolution = 0;
  double voxel_size = 0.0;
  double max_width = 0.0;
  std::vector<float> quality;   // N^3 in [0,1]
  std::vector<float> rotation;  // 4*N^3, unit per voxel
  std::vector<float> width;     // N^3 in [0, max_width]

  std::size_t num_voxels() const {
    return std::size_t(resolution) * resolution * resolution;
  }
  std::size_t index(int i, int j, int k) const {
    return (std::size_t(k) * resolution + j) * resolution + i;
  }
};

// ---------------------------------------------------------------------------
// The grasp network
// ---------------------------------------------------------------------------

template <typename T>
class GraspNet {
 public:
  ModelConfig cfg;
  ParamStore<T> params;

  explicit GraspNet(const ModelConfig& c) : cfg(c) {
    cfg.validate();
    Rng rng(cfg.init_seed);
    const int c1 = cfg.c1, c2 = cfg.c2, c3 = cfg.c3;

    // pyramid backbone: bottom-up stride-2 stages, 1x1 laterals, top-down adds
    params.add_conv("stem", c1, 1, 3, rng);
    params.add_conv("down2", c2, c1, 3, rng);
    params.add_conv("down3", c3, c2, 3, rng);
    params.add_conv("lat1", c1, c1, 1, rng);
    params.add_conv("lat2", c2, c2, 1, rng);
    params.add_conv("lat3", c3, c3, 1, rng);
    params.add_conv("td2", c2, c3, 1, rng);
    params.add_conv("td1", c1, c2, 1, rng);

    // insight blocks: one per lower level, each queried by level 3
    auto add_insight = [&](const std::string& prefix, int c_low) {
      params.add_linear(prefix + ".mlp1", std::max(1, c_low / cfg.reduction), c_low, rng);
      params.add_linear(prefix + ".mlp2", c3, std::max(1, c_low / cfg.reduction), rng);
      params.add_conv(prefix + ".qa", c3, c3, 3, rng);
      params.add_conv(prefix + ".qb", c3, c3, 3, rng);
      params.add_conv(prefix + ".refine", c3, c3, 3, rng);
    };
    add_insight("it1", c1);
    params.add_conv("it1.v0", c2, c1, 3, rng);  // stride 2
    params.add_conv("it1.v1", c3, c2, 3, rng);  // stride 2
    add_insight("it2", c2);
    params.add_conv("it2.v0", c3, c2, 3, rng);  // stride 2

    // empower block: shared Q/K projection, value projection, mixture matrix
    params.add_conv("et.qk", c3, c3, 1, rng);
    params.add_conv("et.v", c3, c3, 1, rng);
    {
      std::size_t w = params.add("et.mix", {cfg.mos_parts, c3});
      he_uniform_fill(params.entries[w].value, c3, rng);
    }
    params.add_conv("et.out", c3, c3, 1, rng);

    params.add_conv("fuse", c3, 4 * c3, 3, rng);
    params.add_conv("dec2", c2, c3, 3, rng);
    params.add_conv("skip2", c2, c2, 1, rng);
    params.add_conv("dec1", c1, c2, 3, rng);
    params.add_conv("skip1", c1, c1, 1, rng);
    params.add_conv("head_q", 1, c1, 1, rng);
    params.add_conv("head_r", 4, c1, 1, rng);
    params.add_conv("head_w", 1, c1, 1, rng);
  }

  struct Forward {
    Var x1 = -1, x2 = -1, x3 = -1;  // pyramid levels (strides 1, 2, 4)
    Var xi1 = -1, xi2 = -1, xe = -1;
    Var quality_logits = -1, quality = -1, rotation = -1, width = -1;
    Var pi = -1;         // [1, parts]
    Var attention = -1;  // mixed attention map [M, M]
  };

  Var conv(Graph<T>& g, const std::string& name, Var x, int stride = 1) const {
    return g.conv3(x, g.param(name + ".w"), g.param(name + ".b"), stride);
  }

  // ---- pyramid -------------------------------------------------------------

  void fpn(Graph<T>& g, Var tsdf, Forward& f) const {
    const auto& shape = g.value(tsdf).shape;
    if (shape.size() != 4 || shape[0] != 1 || shape[1] != cfg.grid_resolution ||
        shape[2] != cfg.grid_resolution || shape[3] != cfg.grid_resolution)
      throw config_error("fpn: input must be [1, N, N, N] with the configured N");
    Var e1 = g.relu(conv(g, "stem", tsdf));
    Var e2 = g.relu(conv(g, "down2", e1, 2));
    Var e3 = g.relu(conv(g, "down3", e2, 2));
    f.x3 = conv(g, "lat3", e3);
    f.x2 = g.add(conv(g, "lat2", e2), conv(g, "td2", g.upsample_x2(f.x3)));
    f.x1 = g.add(conv(g, "lat1", e1), conv(g, "td1", g.upsample_x2(f.x2)));
  }

  // ---- insight block: level-3 queries gated by pooled low-level context ----

  Var insight(Graph<T>& g, const std::string& prefix, Var q_high, Var kv_low,
              const std::vector<std::string>& v_chain) const {
    const int c_low = g.value(kv_low).dim(0);
    Var pooled = g.reshape(g.global_avg_pool(kv_low), {1, c_low});
    Var hidden = g.relu(g.linear(pooled, g.param(prefix + ".mlp1.w"), g.param(prefix + ".mlp1.b")));
    Var gate2d = g.sigmoid(g.linear(hidden, g.param(prefix + ".mlp2.w"), g.param(prefix + ".mlp2.b")));
    Var gate = g.reshape(gate2d, {cfg.c3});

    Var q = conv(g, prefix + ".qa", q_high);
    Var qg = g.channel_gate(gate, q);
    Var qh = conv(g, prefix + ".qb", qg);

    Var v = kv_low;
    for (const auto& name : v_chain) v = conv(g, name, v, 2);
    return g.relu(conv(g, prefix + ".refine", g.add(qh, v)));
  }

  // ---- empower block: mixture-of-softmax self-attention with shared Q/K ----

  Var empower(Graph<T>& g, Var x3, Forward& f) const {
    const int n = cfg.grid_resolution / 4;
    const int m = n * n * n;
    const int d = cfg.c3;
    Var qk4 = conv(g, "et.qk", x3);
    Var v4 = conv(g, "et.v", x3);
    Var qk = g.reshape(qk4, {d, m});
    Var v = g.reshape(v4, {d, m});

    Var qbar = g.reshape(g.global_avg_pool(qk4), {d, 1});
    Var pi_logits = g.reshape(g.matmul_op(g.param("et.mix"), qbar, false, false),
                              {1, cfg.mos_parts});
    f.pi = g.softmax_rows(pi_logits);

    const int dp = d / cfg.mos_parts;
    std::vector<Var> maps;
    for (int p = 0; p < cfg.mos_parts; ++p) {
      Var qp = slice_rows(g, qk, p * dp, (p + 1) * dp);
      Var scores = g.scale(g.matmul_op(qp, qp, true, false), 1.0 / std::sqrt(double(d)));
      maps.push_back(g.softmax_rows(scores));
    }
    f.attention = mix_maps(g, maps, f.pi);

    Var attended = g.matmul_op(v, f.attention, false, true);  // [d, m]
    Var out4 = g.reshape(attended, {d, n, n, n});
    return g.add(conv(g, "et.out", out4), x3);
  }

  // ---- full forward ----------------------------------------------------------

  Forward forward(Graph<T>& g, Var tsdf) const {
    Forward f;
    fpn(g, tsdf, f);
    f.xi1 = insight(g, "it1", f.x3, f.x1, {"it1.v0", "it1.v1"});
    f.xi2 = insight(g, "it2", f.x3, f.x2, {"it2.v0"});
    f.xe = empower(g, f.x3, f);

    Var cat = g.concat_channels({f.xi1, f.xi2, f.xe, f.x3});
    Var fused = g.relu(conv(g, "fuse", cat));
    Var d2 = g.relu(g.add(conv(g, "dec2", g.upsample_x2(fused)), conv(g, "skip2", f.x2)));
    Var d1 = g.relu(g.add(conv(g, "dec1", g.upsample_x2(d2)), conv(g, "skip1", f.x1)));

    f.quality_logits = conv(g, "head_q", d1);
    f.quality = g.sigmoid(f.quality_logits);
    f.rotation = g.normalize_channels(conv(g, "head_r", d1));
    f.width = g.scale(g.sigmoid(conv(g, "head_w", d1)), cfg.max_width);
    return f;
  }

  // ---- inference -------------------------------------------------------------

  Tensor<T> tsdf_to_tensor(const TsdfGrid& grid) const {
    if (grid.resolution != cfg.grid_resolution)
      throw config_error("grid resolution does not match the model configuration");
    Tensor<T> t({1, grid.resolution, grid.resolution, grid.resolution});
    for (std::size_t i = 0; i < grid.values.size(); ++i) t.data[i] = T(grid.values[i]);
    return t;
  }

  GraspPrediction predict(const TsdfGrid& grid) const {
    Tensor<T> in = tsdf_to_tensor(grid);
    auto cv = [&](const std::string& name, const Tensor<T>& x, int stride = 1) {
      return conv3_forward(x, params.at(name + ".w").value, params.at(name + ".b").value, stride);
    };

    Tensor<T> e1 = relu_forward(cv("stem", in));
    Tensor<T> e2 = relu_forward(cv("down2", e1, 2));
    Tensor<T> e3 = relu_forward(cv("down3", e2, 2));
    Tensor<T> x3 = cv("lat3", e3);
    Tensor<T> x2 = cv("lat2", e2);
    add_inplace(x2, cv("td2", upsample_trilinear_x2_forward(x3)));
    Tensor<T> x1 = cv("lat1", e1);
    add_inplace(x1, cv("td1", upsample_trilinear_x2_forward(x2)));
    e2 = Tensor<T>();
    e3 = Tensor<T>();

    auto insight_eager = [&](const std::string& prefix, const Tensor<T>& kv,
                             const std::vector<std::string>& v_chain) {
      Tensor<T> pooled = global_avg_pool_forward(kv);
      pooled.shape = {1, kv.dim(0)};
      Tensor<T> hidden = relu_forward(
          linear_forward(pooled, params.at(prefix + ".mlp1.w").value, params.at(prefix + ".mlp1.b").value));
      Tensor<T> gate = sigmoid_forward(
          linear_forward(hidden, params.at(prefix + ".mlp2.w").value, params.at(prefix + ".mlp2.b").value));
      Tensor<T> q = cv(prefix + ".qa", x3);
      const std::int64_t S = q.spatial();
      for (int c = 0; c < q.dim(0); ++c) {
        T gc = gate.data[std::size_t(c)];
        T* p = q.chan(c);
        for (std::int64_t s = 0; s < S; ++s) p[s] *= gc;
      }
      Tensor<T> qh = cv(prefix + ".qb", q);
      Tensor<T> v = kv;
      for (const auto& name : v_chain) v = cv(name, v, 2);
      add_inplace(qh, v);
      return relu_forward(cv(prefix + ".refine", qh));
    };
    Tensor<T> xi1 = insight_eager("it1", x1, {"it1.v0", "it1.v1"});
    Tensor<T> xi2 = insight_eager("it2", x2, {"it2.v0"});
    e1 = Tensor<T>();

    Tensor<T> xe = empower_eager(x3);

    const int n3 = cfg.grid_resolution / 4;
    Tensor<T> cat({4 * cfg.c3, n3, n3, n3});
    std::size_t off = 0;
    for (const Tensor<T>* part : {&xi1, &xi2, &xe, &x3}) {
      std::copy(part->data.begin(), part->data.end(), cat.data.begin() + off);
      off += part->data.size();
    }
    xi1 = Tensor<T>();
    xi2 = Tensor<T>();
    xe = Tensor<T>();

    Tensor<T> fused = relu_forward(cv("fuse", cat));
    cat = Tensor<T>();
    Tensor<T> d2 = cv("dec2", upsample_trilinear_x2_forward(fused));
    add_inplace(d2, cv("skip2", x2));
    d2 = relu_forward(d2);
    Tensor<T> d1 = cv("dec1", upsample_trilinear_x2_forward(d2));
    add_inplace(d1, cv("skip1", x1));
    d1 = relu_forward(d1);
    d2 = Tensor<T>();
    x1 = Tensor<T>();
    x2 = Tensor<T>();

    Tensor<T> q = sigmoid_forward(cv("head_q", d1));
    Tensor<T> r = normalize_channels_forward(cv("head_r", d1));
    Tensor<T> w = sigmoid_forward(cv("head_w", d1));

    GraspPrediction pred;
    pred.resolution = cfg.grid_resolution;
    pred.voxel_size = grid.voxel_size;
    pred.max_width = cfg.max_width;
    pred.quality.resize(q.data.size());
    pred.rotation.resize(r.data.size());
    pred.width.resize(w.data.size());
    for (std::size_t i = 0; i < q.data.size(); ++i) pred.quality[i] = float(q.data[i]);
    for (std::size_t i = 0; i < r.data.size(); ++i) pred.rotation[i] = float(r.data[i]);
    for (std::size_t i = 0; i < w.data.size(); ++i) pred.width[i] = float(cfg.max_width * w.data[i]);
    return pred;
  }

  // Streaming mixture attention for inference: processes query rows in
  // blocks so the [M, M] map is never materialized.
  Tensor<T> empower_eager(const Tensor<T>& x3) const {
    const int n = cfg.grid_resolution / 4;
    const std::int64_t m = std::int64_t(n) * n * n;
    const int d = cfg.c3;
    const int parts = cfg.mos_parts;
    const int dp = d / parts;
    auto cv = [&](const std::string& name, const Tensor<T>& x) {
      return conv3_forward(x, params.at(name + ".w").value, params.at(name + ".b").value, 1);
    };
    Tensor<T> qk = cv("et.qk", x3);
    Tensor<T> v = cv("et.v", x3);

    // pi = softmax(W * mean(Q))
    Tensor<T> qbar = global_avg_pool_forward(qk);
    const auto& mix = params.at("et.mix").value;
    std::vector<T> pi(static_cast<std::size_t>(parts));
    T pmax = -std::numeric_limits<T>::infinity();
    for (int p = 0; p < parts; ++p) {
      T acc = T(0);
      for (int c = 0; c < d; ++c) acc += mix.data[std::size_t(p) * d + c] * qbar.data[std::size_t(c)];
      pi[std::size_t(p)] = acc;
      pmax = std::max(pmax, acc);
    }
    T psum = T(0);
    for (auto& x : pi) {
      x = std::exp(x - pmax);
      psum += x;
    }
    for (auto& x : pi) x /= psum;

    const T inv_sqrt_d = T(1.0 / std::sqrt(double(d)));
    Tensor<T> out({d, n, n, n});
    const int block = std::max(1, cfg.attention_row_block);
    const std::int64_t nblocks = (m + block - 1) / block;
    parallel_for(std::size_t(nblocks), [&](std::size_t b0, std::size_t b1) {
      std::vector<T> row(static_cast<std::size_t>(m));
      std::vector<T> mixed(static_cast<std::size_t>(m));
      for (std::size_t blk = b0; blk < b1; ++blk) {
        std::int64_t i0 = std::int64_t(blk) * block, i1 = std::min(m, i0 + block);
        for (std::int64_t i = i0; i < i1; ++i) {
          std::fill(mixed.begin(), mixed.end(), T(0));
          for (int p = 0; p < parts; ++p) {
            // scores for row i within this part's channel block
            for (std::int64_t j = 0; j < m; ++j) {
              T acc = T(0);
              for (int c = p * dp; c < (p + 1) * dp; ++c)
                acc += qk.data[std::size_t(c) * m + i] * qk.data[std::size_t(c) * m + j];
              row[std::size_t(j)] = acc * inv_sqrt_d;
            }
            T mx = row[0];
            for (std::int64_t j = 1; j < m; ++j) mx = std::max(mx, row[std::size_t(j)]);
            T sum = T(0);
            for (std::int64_t j = 0; j < m; ++j) {
              row[std::size_t(j)] = std::exp(row[std::size_t(j)] - mx);
              sum += row[std::size_t(j)];
            }
            const T pscale = pi[std::size_t(p)] / sum;
            for (std::int64_t j = 0; j < m; ++j) mixed[std::size_t(j)] += pscale * row[std::size_t(j)];
          }
          for (int c = 0; c < d; ++c) {
            T acc = T(0);
            const T* vc = v.data.data() + std::size_t(c) * m;
            for (std::int64_t j = 0; j < m; ++j) acc += mixed[std::size_t(j)] * vc[j];
            out.data[std::size_t(c) * m + i] = acc;
          }
        }
      }
    });

    Tensor<T> res = cv("et.out", out);
    add_inplace(res, x3);
    return res;
  }

 private:
  static void add_inplace(Tensor<T>& a, const Tensor<T>& b) {
    for (std::size_t i = 0; i < a.data.size(); ++i) a.data[i] += b.data[i];
  }

  // rows [r0, r1) of a 2D node
  static Var slice_rows(Graph<T>& g, Var x, int r0, int r1) {
    const auto& v = g.value(x);
    const int C = v.dim(1);
    Tensor<T> out({r1 - r0, C});
    std::copy(v.data.begin() + std::size_t(r0) * C, v.data.begin() + std::size_t(r1) * C,
              out.data.begin());
    return g.make(std::move(out), g.needs(x), [x, r0, C](Graph<T>& gg, Var self) {
      if (!gg.needs(x)) return;
      const auto& go = gg.grad(self);
      auto& gx = gg.grad(x);
      for (std::size_t i = 0; i < go.data.size(); ++i)
        gx.data[std::size_t(r0) * C + i] += go.data[i];
    });
  }

  // convex mix of attention maps with graph-tracked coefficients pi [1, P]
  static Var mix_maps(Graph<T>& g, const std::vector<Var>& maps, Var pi) {
    const auto& pv = g.value(pi);
    Tensor<T> out(g.value(maps.at(0)).shape);
    for (std::size_t p = 0; p < maps.size(); ++p) {
      const auto& mv = g.value(maps[p]);
      const T c = pv.data[p];
      for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] += c * mv.data[i];
    }
    bool rq = g.needs(pi);
    for (Var mvar : maps) rq = rq || g.needs(mvar);
    return g.make(std::move(out), rq, [maps, pi](Graph<T>& gg, Var self) {
      const auto& go = gg.grad(self);
      const auto& pv = gg.value(pi);
      for (std::size_t p = 0; p < maps.size(); ++p) {
        if (gg.needs(maps[p])) {
          auto& gm = gg.grad(maps[p]);
          const T c = pv.data[p];
          for (std::size_t i = 0; i < go.data.size(); ++i) gm.data[i] += c * go.data[i];
        }
        if (gg.needs(pi)) {
          const auto& mv = gg.value(maps[p]);
          std::vector<T> prod(go.data.size());
          for (std::size_t i = 0; i < go.data.size(); ++i) prod[i] = go.data[i] * mv.data[i];
          gg.grad(pi).data[p] += pairwise_sum(prod.data(), prod.size());
        }
      }
    });
  }
};

// ---------------------------------------------------------------------------
// Model configuration as structured text, written alongside checkpoints so
// loaders can rebuild the parameter shapes without guessing.
// ---------------------------------------------------------------------------

inline void write_model_config(const ModelConfig& cfg, const std::string& path) {
  std::ofstream f(path);
  if (!f) throw io_error(path, "cannot open for writing");
  char w[48];
  std::snprintf(w, sizeof w, "%a", cfg.max_width);
  f << "voxgrasp-model 1\n"
    << "grid_resolution " << cfg.grid_resolution << "\n"
    << "c1 " << cfg.c1 << "\nc2 " << cfg.c2 << "\nc3 " << cfg.c3 << "\n"
    << "mos_parts " << cfg.mos_parts << "\n"
    << "reduction " << cfg.reduction << "\n"
    << "max_width " << w << "\n"
    << "attention_row_block " << cfg.attention_row_block << "\n";
  if (!f) throw io_error(path, "write failed");
}

inline ModelConfig read_model_config(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw io_error(path, "cannot open for reading");
  std::string tag;
  int version = 0;
  if (!(f >> tag >> version) || tag != "voxgrasp-model") throw io_error(path, "bad magic");
  if (version != 1) throw io_error(path, "version mismatch");
  ModelConfig cfg;
  std::string key;
  while (f >> key) {
    std::string val;
    if (!(f >> val)) throw io_error(path, "truncated file");
    if (key == "grid_resolution") cfg.grid_resolution = std::stoi(val);
    else if (key == "c1") cfg.c1 = std::stoi(val);
    else if (key == "c2") cfg.c2 = std::stoi(val);
    else if (key == "c3") cfg.c3 = std::stoi(val);
    else if (key == "mos_parts") cfg.mos_parts = std::stoi(val);
    else if (key == "reduction") cfg.reduction = std::stoi(val);
    else if (key == "max_width") cfg.max_width = std::strtod(val.c_str(), nullptr);
    else if (key == "attention_row_block") cfg.attention_row_block = std::stoi(val);
    else throw io_error(path, "unknown key: " + key);
  }
  cfg.validate();
  return cfg;
}

// ---------------------------------------------------------------------------
// Prediction volume export: magic "VGPR", u32 version, u32 N, u32 channels
// (6: quality, quaternion wxyz, width), f32 voxel_size, f32 max_width,
// channel-major f32 data (x fastest), trailing CRC-32.
// ---------------------------------------------------------------------------

inline constexpr char kPredictionMagic[4] = {'V', 'G', 'P', 'R'};
inline constexpr std::uint32_t kPredictionVersion = 1;

inline void write_prediction(const GraspPrediction& pred, const std::string& path) {
  BinaryWriter w(path);
  w.bytes(kPredictionMagic, 4);
  w.u32(kPredictionVersion);
  w.u32(std::uint32_t(pred.resolution));
  w.u32(6);
  w.f32(float(pred.voxel_size));
  w.f32(float(pred.max_width));
  w.f32s(pred.quality.data(), pred.quality.size());
  w.f32s(pred.rotation.data(), pred.rotation.size());
  w.f32s(pred.width.data(), pred.width.size());
  w.finish_crc();
}

inline GraspPrediction read_prediction(const std::string& path) {
  BinaryReader r(path);
  r.expect_magic(kPredictionMagic);
  r.expect_version(kPredictionVersion);
  GraspPrediction pred;
  pred.resolution = int(r.u32());
  if (pred.resolution <= 0 || pred.resolution > 4096)
    throw io_error(path, "implausible resolution");
  std::uint32_t channels = r.u32();
  if (channels != 6) throw io_error(path, "unexpected channel count");
  pred.voxel_size = r.f32();
  pred.max_width = r.f32();
  std::size_t nv = pred.num_voxels();
  pred.quality.resize(nv);
  pred.rotation.resize(4 * nv);
  pred.width.resize(nv);
  r.f32s(pred.quality.data(), nv);
  r.f32s(pred.rotation.data(), 4 * nv);
  r.f32s(pred.width.data(), nv);
  r.verify_crc();
  return pred;
}

}  // namespace vg
