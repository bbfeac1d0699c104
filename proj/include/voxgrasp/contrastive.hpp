#pragma once

#include <cmath>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "voxgrasp/common.hpp"
#include "voxgrasp/geometry.hpp"
#include "voxgrasp/graph.hpp"
#include "voxgrasp/network.hpp"
#include "voxgrasp/volume.hpp"

namespace vg {

// ---------------------------------------------------------------------------
// FIFO ring of unit-normalized embeddings. Lookup returns the entry with the
// highest dot product (ties broken by lowest slot index) and is gradient-free
// by design: stored embeddings are detached history.
// ---------------------------------------------------------------------------

template <typename T>
class MemoryBank {
 public:
  MemoryBank(int capacity, int dim) : capacity_(capacity), dim_(dim) {
    if (capacity < 1 || dim < 1) throw std::invalid_argument("memory bank needs capacity, dim >= 1");
    data_.assign(std::size_t(capacity) * dim, T(0));
  }

  int capacity() const { return capacity_; }
  int dim() const { return dim_; }
  int fill() const { return fill_; }
  int warmup_threshold() const { return std::max(1, capacity_ / 8); }
  bool ready() const { return fill_ >= warmup_threshold(); }

  const T* slot(int i) const { return data_.data() + std::size_t(i) * dim_; }

  // Push one embedding (unit-normalized on insertion); evicts oldest-first
  // once full.
  void push(std::span<const T> z) {
    if (int(z.size()) != dim_) throw std::invalid_argument("memory bank dim mismatch");
    T nsq = T(0);
    for (T v : z) nsq += v * v;
    T inv = nsq > T(0) ? T(1) / std::sqrt(nsq) : T(0);
    T* dst = data_.data() + std::size_t(write_pos_) * dim_;
    for (int i = 0; i < dim_; ++i) dst[i] = z[std::size_t(i)] * inv;
    if (nsq <= T(0)) dst[0] = T(1);  // degenerate input: store e1
    write_pos_ = (write_pos_ + 1) % capacity_;
    fill_ = std::min(fill_ + 1, capacity_);
  }

  template <typename It>
  void push_all(It begin, It end) {
    for (It it = begin; it != end; ++it) push(std::span<const T>(it->data(), it->size()));
  }

  // Nearest neighbor by cosine (entries and queries are unit vectors, so the
  // dot product decides). Returns the slot index.
  int nearest(std::span<const T> z) const {
    if (!ready()) throw std::logic_error("memory bank below warmup fill");
    int best = 0;
    T best_dot = -std::numeric_limits<T>::infinity();
    for (int s = 0; s < fill_; ++s) {
      const T* e = slot(s);
      T d = T(0);
      for (int i = 0; i < dim_; ++i) d += e[i] * z[std::size_t(i)];
      if (d > best_dot) {
        best_dot = d;
        best = s;
      }
    }
    return best;
  }

 private:
  int capacity_, dim_;
  int fill_ = 0, write_pos_ = 0;
  std::vector<T> data_;
};

// ---------------------------------------------------------------------------
// Multi-scale positive embedding extraction: trilinear samples of each
// pyramid level at the grasp position using that level's voxel geometry,
// concatenated per position. Gradients scatter back into the level volumes.
// ---------------------------------------------------------------------------

// Samples one feature volume [C, n, n, n] at workspace points; level voxel
// size is the workspace size divided by n.
template <typename T>
Var sample_volume_at_points(Graph<T>& g, Var volume, const std::vector<Vec3>& points,
                            double workspace_size) {
  const auto& v = g.value(volume);
  if (v.rank() != 4 || v.dim(1) != v.dim(2) || v.dim(2) != v.dim(3))
    throw std::invalid_argument("sample_volume_at_points: expects a cubic volume");
  const int C = v.dim(0), n = v.dim(1);
  const double vs = workspace_size / n;
  const std::int64_t S = std::int64_t(n) * n * n;

  std::vector<TrilinearWeights> weights;
  weights.reserve(points.size());
  for (const Vec3& p : points) {
    if (p.x < 0 || p.x > workspace_size || p.y < 0 || p.y > workspace_size || p.z < 0 ||
        p.z > workspace_size)
      throw std::domain_error("sample position outside workspace");
    weights.push_back(trilinear_setup(p, vs, n, n, n));
  }

  Tensor<T> out({int(points.size()), C});
  for (std::size_t r = 0; r < points.size(); ++r)
    for (int c = 0; c < C; ++c)
      out.data[r * std::size_t(C) + c] =
          trilinear_sample_channel(v.chan(c), weights[r], n, n);

  return g.make(std::move(out), g.needs(volume),
                [volume, weights, C, n, S](Graph<T>& gg, Var self) {
                  if (!gg.needs(volume)) return;
                  const auto& go = gg.grad(self);
                  auto& gv = gg.grad(volume);
                  for (std::size_t r = 0; r < weights.size(); ++r) {
                    const auto& w = weights[r];
                    const double wx[2] = {1 - w.fx, w.fx};
                    const double wy[2] = {1 - w.fy, w.fy};
                    const double wz[2] = {1 - w.fz, w.fz};
                    const int xi[2] = {w.i0, w.i1}, yi[2] = {w.j0, w.j1}, zi[2] = {w.k0, w.k1};
                    for (int c = 0; c < C; ++c) {
                      const T gr = go.data[r * std::size_t(C) + c];
                      T* chan = gv.data.data() + std::size_t(c) * S;
                      for (int a = 0; a < 2; ++a)
                        for (int b = 0; b < 2; ++b)
                          for (int d = 0; d < 2; ++d)
                            chan[(std::int64_t(zi[d]) * n + yi[b]) * n + xi[a]] +=
                                gr * T(wx[a] * wy[b] * wz[d]);
                    }
                  }
                });
}

template <typename T>
Var concat_columns(Graph<T>& g, const std::vector<Var>& parts) {
  const int R = g.value(parts.at(0)).dim(0);
  int ctotal = 0;
  for (Var p : parts) {
    if (g.value(p).dim(0) != R) throw std::invalid_argument("concat_columns: row mismatch");
    ctotal += g.value(p).dim(1);
  }
  Tensor<T> out({R, ctotal});
  bool rq = false;
  int off = 0;
  for (Var p : parts) {
    const auto& v = g.value(p);
    const int c = v.dim(1);
    for (int r = 0; r < R; ++r)
      std::copy(v.data.begin() + std::size_t(r) * c, v.data.begin() + std::size_t(r + 1) * c,
                out.data.begin() + std::size_t(r) * ctotal + off);
    off += c;
    rq = rq || g.needs(p);
  }
  return g.make(std::move(out), rq, [parts, R, ctotal](Graph<T>& gg, Var self) {
    const auto& go = gg.grad(self);
    int off = 0;
    for (Var p : parts) {
      const int c = gg.value(p).dim(1);
      if (gg.needs(p)) {
        auto& gp = gg.grad(p);
        for (int r = 0; r < R; ++r)
          for (int i = 0; i < c; ++i)
            gp.data[std::size_t(r) * c + i] += go.data[std::size_t(r) * ctotal + off + i];
      }
      off += c;
    }
  });
}

// Concatenated per-position features across all pyramid levels: [P, c1+c2+c3].
template <typename T>
Var extract_positive_embeddings(Graph<T>& g, const typename GraspNet<T>::Forward& f,
                                const std::vector<Vec3>& positions, double workspace_size) {
  Var s1 = sample_volume_at_points(g, f.x1, positions, workspace_size);
  Var s2 = sample_volume_at_points(g, f.x2, positions, workspace_size);
  Var s3 = sample_volume_at_points(g, f.x3, positions, workspace_size);
  return concat_columns(g, {s1, s2, s3});
}

// ---------------------------------------------------------------------------
// Projection head: three linear layers with rectifiers between, then row-wise
// L2 normalization. A zero pre-normalization row degenerates to e1 and is
// flagged via the returned counter.
// ---------------------------------------------------------------------------

struct ProjectionConfig {
  int hidden = 128;
  int out = 128;
};

template <typename T>
void add_projection_head(ParamStore<T>& params, int input_dim, const ProjectionConfig& pc,
                         Rng& rng) {
  params.add_linear("proj.fc1", pc.hidden, input_dim, rng);
  params.add_linear("proj.fc2", pc.hidden, pc.hidden, rng);
  params.add_linear("proj.fc3", pc.out, pc.hidden, rng);
}

// Row-wise L2 normalization over [R, C]; rows with a vanishing norm map to
// e1 with zero gradient, counted into *degenerate_rows when provided.
template <typename T>
Var normalize_rows(Graph<T>& g, Var x, int* degenerate_rows = nullptr, T eps = T(1e-12)) {
  const auto& v = g.value(x);
  const int R = v.dim(0), C = v.dim(1);
  Tensor<T> out = v;
  std::vector<char> degenerate(static_cast<std::size_t>(R), 0);
  for (int r = 0; r < R; ++r) {
    T* row = out.data.data() + std::size_t(r) * C;
    T nsq = T(0);
    for (int c = 0; c < C; ++c) nsq += row[c] * row[c];
    if (nsq <= eps * eps) {
      std::fill(row, row + C, T(0));
      row[0] = T(1);
      degenerate[std::size_t(r)] = 1;
      if (degenerate_rows) ++*degenerate_rows;
    } else {
      T inv = T(1) / std::sqrt(nsq);
      for (int c = 0; c < C; ++c) row[c] *= inv;
    }
  }
  return g.make(std::move(out), g.needs(x), [x, R, C, degenerate](Graph<T>& gg, Var self) {
    if (!gg.needs(x)) return;
    const auto& xv = gg.value(x);
    const auto& yv = gg.value(self);
    const auto& go = gg.grad(self);
    auto& gx = gg.grad(x);
    for (int r = 0; r < R; ++r) {
      if (degenerate[std::size_t(r)]) continue;
      const T* xr = xv.data.data() + std::size_t(r) * C;
      const T* yr = yv.data.data() + std::size_t(r) * C;
      const T* gr = go.data.data() + std::size_t(r) * C;
      T* gxr = gx.data.data() + std::size_t(r) * C;
      T nsq = T(0);
      for (int c = 0; c < C; ++c) nsq += xr[c] * xr[c];
      T norm = std::sqrt(nsq);
      T dot = T(0);
      for (int c = 0; c < C; ++c) dot += yr[c] * gr[c];
      for (int c = 0; c < C; ++c) gxr[c] += (gr[c] - yr[c] * dot) / norm;
    }
  });
}

template <typename T>
Var project_embeddings(Graph<T>& g, Var x, int* degenerate_rows = nullptr) {
  Var h1 = g.relu(g.linear(x, g.param("proj.fc1.w"), g.param("proj.fc1.b")));
  Var h2 = g.relu(g.linear(h1, g.param("proj.fc2.w"), g.param("proj.fc2.b")));
  Var h3 = g.linear(h2, g.param("proj.fc3.w"), g.param("proj.fc3.b"));
  return normalize_rows(g, h3, degenerate_rows);
}

// ---------------------------------------------------------------------------
// Cosine similarity loss against detached nearest neighbors:
// -(1/|P|) sum_p z_p . NN(z_p). All vectors are unit, so cosine = dot.
// ---------------------------------------------------------------------------

template <typename T>
Var contrastive_loss(Graph<T>& g, Var z, const MemoryBank<T>& bank) {
  const auto& zv = g.value(z);
  const int R = zv.dim(0), C = zv.dim(1);
  if (C != bank.dim()) throw std::invalid_argument("embedding dim does not match the bank");
  Tensor<T> nn({R, C});
  for (int r = 0; r < R; ++r) {
    int s = bank.nearest(std::span<const T>(zv.data.data() + std::size_t(r) * C, std::size_t(C)));
    std::copy(bank.slot(s), bank.slot(s) + C, nn.data.begin() + std::size_t(r) * C);
  }
  Tensor<T> out({1});
  {
    std::vector<T> dots(static_cast<std::size_t>(R));
    for (int r = 0; r < R; ++r) {
      T d = T(0);
      for (int c = 0; c < C; ++c)
        d += zv.data[std::size_t(r) * C + c] * nn.data[std::size_t(r) * C + c];
      dots[std::size_t(r)] = d;
    }
    out.data[0] = -pairwise_sum(dots.data(), dots.size()) / T(R);
  }
  auto nn_copy = nn;  // captured as constants; no gradient into the bank
  return g.make(std::move(out), g.needs(z), [z, nn_copy, R, C](Graph<T>& gg, Var self) {
    if (!gg.needs(z)) return;
    const T go = gg.grad(self).data[0];
    auto& gz = gg.grad(z);
    const T scale = -go / T(R);
    for (std::size_t i = 0; i < gz.data.size(); ++i) gz.data[i] += scale * nn_copy.data[i];
  });
}

// End-of-step bank update: push the step's embeddings in batch order.
template <typename T>
void bank_update(MemoryBank<T>& bank, const Tensor<T>& z) {
  const int R = z.dim(0), C = z.dim(1);
  for (int r = 0; r < R; ++r)
    bank.push(std::span<const T>(z.data.data() + std::size_t(r) * C, std::size_t(C)));
}

}  // namespace vg
