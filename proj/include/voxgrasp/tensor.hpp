#pragma once

#include <algorithm>
#include <cassert>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

#include "voxgrasp/common.hpp"

namespace vg {

// ---------------------------------------------------------------------------
// Dense tensor, channels-first, spatial x fastest. Volumes are [C, Z, Y, X];
// matrices [R, C]; vectors [N].
// ---------------------------------------------------------------------------

template <typename T>
struct Tensor {
  std::vector<int> shape;
  std::vector<T> data;

  Tensor() = default;
  explicit Tensor(std::vector<int> s, T fill = T(0)) : shape(std::move(s)) {
    data.assign(std::size_t(numel_of(shape)), fill);
  }

  static std::int64_t numel_of(const std::vector<int>& s) {
    std::int64_t n = 1;
    for (int e : s) {
      if (e <= 0) throw std::invalid_argument("tensor extents must be positive");
      n *= e;
    }
    return n;
  }

  std::int64_t numel() const { return std::int64_t(data.size()); }
  int rank() const { return int(shape.size()); }
  int dim(int i) const { return shape[std::size_t(i)]; }

  // product of all dims after the channel dim
  std::int64_t spatial() const {
    std::int64_t n = 1;
    for (std::size_t i = 1; i < shape.size(); ++i) n *= shape[i];
    return n;
  }

  T* chan(int c) { return data.data() + std::size_t(c) * spatial(); }
  const T* chan(int c) const { return data.data() + std::size_t(c) * spatial(); }

  bool same_shape(const Tensor& o) const { return shape == o.shape; }
};

template <typename T>
void check_shape(const Tensor<T>& t, const std::vector<int>& want, const char* what) {
  if (t.shape != want) {
    std::string msg = std::string(what) + ": shape mismatch, got [";
    for (int e : t.shape) msg += std::to_string(e) + " ";
    msg += "], want [";
    for (int e : want) msg += std::to_string(e) + " ";
    msg += "]";
    throw std::invalid_argument(msg);
  }
}

template <typename T>
void he_uniform_fill(Tensor<T>& t, std::int64_t fan_in, Rng& rng) {
  double limit = std::sqrt(6.0 / double(std::max<std::int64_t>(fan_in, 1)));
  for (auto& v : t.data) v = T(rng.uniform(-limit, limit));
}

// ---------------------------------------------------------------------------
// 3D convolution (cross-correlation), kernels 1 or 3, same padding,
// stride 1 or 2. Stride 2 requires even spatial extents. Weights are
// [Co, Ci, K, K, K].
// ---------------------------------------------------------------------------

inline void conv3_check(int kernel, int stride) {
  if (kernel != 1 && kernel != 3) throw std::invalid_argument("conv3: kernel must be 1 or 3");
  if (stride != 1 && stride != 2) throw std::invalid_argument("conv3: stride must be 1 or 2");
  if (kernel == 1 && stride == 2) throw std::invalid_argument("conv3: 1x1 kernels use stride 1");
}

template <typename T>
Tensor<T> conv3_forward(const Tensor<T>& in, const Tensor<T>& w, const Tensor<T>& b, int stride) {
  const int k = w.dim(2);
  conv3_check(k, stride);
  const int ci_n = in.dim(0), Z = in.dim(1), Y = in.dim(2), X = in.dim(3);
  const int co_n = w.dim(0);
  if (w.dim(1) != ci_n) throw std::invalid_argument("conv3: channel mismatch");
  if (stride == 2 && (Z % 2 || Y % 2 || X % 2))
    throw std::invalid_argument("conv3: stride 2 requires even extents");
  const int Zo = Z / stride, Yo = Y / stride, Xo = X / stride;
  Tensor<T> out({co_n, Zo, Yo, Xo});
  const std::int64_t S_in = std::int64_t(Z) * Y * X;
  const std::int64_t S_out = std::int64_t(Zo) * Yo * Xo;

  if (k == 1) {
    parallel_for(std::size_t(co_n), [&](std::size_t c0, std::size_t c1) {
      for (std::size_t co = c0; co < c1; ++co) {
        T* op = out.data.data() + co * std::size_t(S_out);
        std::fill(op, op + S_out, b.data[co]);
        for (int ci = 0; ci < ci_n; ++ci) {
          const T wv = w.data[co * std::size_t(ci_n) + ci];
          const T* ip = in.data.data() + std::size_t(ci) * S_in;
          for (std::int64_t s = 0; s < S_in; ++s) op[s] += wv * ip[s];
        }
      }
    });
    return out;
  }

  if (stride == 1) {
    parallel_for(std::size_t(co_n), [&](std::size_t c0, std::size_t c1) {
      for (std::size_t co = c0; co < c1; ++co) {
        T* op = out.data.data() + co * std::size_t(S_out);
        std::fill(op, op + S_out, b.data[co]);
        for (int ci = 0; ci < ci_n; ++ci) {
          const T* ip = in.data.data() + std::size_t(ci) * S_in;
          const T* wp = w.data.data() + (co * std::size_t(ci_n) + ci) * 27;
          for (int dz = -1; dz <= 1; ++dz)
            for (int dy = -1; dy <= 1; ++dy)
              for (int dx = -1; dx <= 1; ++dx) {
                const T wv = wp[((dz + 1) * 3 + (dy + 1)) * 3 + (dx + 1)];
                const int z0 = std::max(0, -dz), z1 = Z - std::max(0, dz);
                const int y0 = std::max(0, -dy), y1 = Y - std::max(0, dy);
                const int x0 = std::max(0, -dx), x1 = X - std::max(0, dx);
                for (int z = z0; z < z1; ++z)
                  for (int y = y0; y < y1; ++y) {
                    T* orow = op + (std::int64_t(z) * Y + y) * X;
                    const T* irow = ip + (std::int64_t(z + dz) * Y + (y + dy)) * X + dx;
                    for (int x = x0; x < x1; ++x) orow[x] += wv * irow[x];
                  }
              }
        }
      }
    });
    return out;
  }

  // k == 3, stride == 2: direct gather
  parallel_for(std::size_t(co_n), [&](std::size_t c0, std::size_t c1) {
    for (std::size_t co = c0; co < c1; ++co) {
      T* op = out.data.data() + co * std::size_t(S_out);
      for (int zo = 0; zo < Zo; ++zo)
        for (int yo = 0; yo < Yo; ++yo)
          for (int xo = 0; xo < Xo; ++xo) {
            T acc = b.data[co];
            for (int ci = 0; ci < ci_n; ++ci) {
              const T* ip = in.data.data() + std::size_t(ci) * S_in;
              const T* wp = w.data.data() + (co * std::size_t(ci_n) + ci) * 27;
              for (int dz = -1; dz <= 1; ++dz) {
                int z = 2 * zo + dz;
                if (z < 0 || z >= Z) continue;
                for (int dy = -1; dy <= 1; ++dy) {
                  int y = 2 * yo + dy;
                  if (y < 0 || y >= Y) continue;
                  for (int dx = -1; dx <= 1; ++dx) {
                    int x = 2 * xo + dx;
                    if (x < 0 || x >= X) continue;
                    acc += wp[((dz + 1) * 3 + (dy + 1)) * 3 + (dx + 1)] *
                           ip[(std::int64_t(z) * Y + y) * X + x];
                  }
                }
              }
            }
            op[(std::int64_t(zo) * Yo + yo) * Xo + xo] = acc;
          }
    }
  });
  return out;
}

template <typename T>
void conv3_backward(const Tensor<T>& in, const Tensor<T>& w, int stride, const Tensor<T>& gout,
                    Tensor<T>* gin, Tensor<T>* gw, Tensor<T>* gb) {
  const int k = w.dim(2);
  conv3_check(k, stride);
  const int ci_n = in.dim(0), Z = in.dim(1), Y = in.dim(2), X = in.dim(3);
  const int co_n = w.dim(0);
  const int Zo = Z / stride, Yo = Y / stride, Xo = X / stride;
  const std::int64_t S_in = std::int64_t(Z) * Y * X;
  const std::int64_t S_out = std::int64_t(Zo) * Yo * Xo;

  if (gb) {
    for (int co = 0; co < co_n; ++co)
      gb->data[co] += pairwise_sum(gout.data.data() + std::size_t(co) * S_out, std::size_t(S_out));
  }

  if (k == 1) {
    if (gin) {
      parallel_for(std::size_t(ci_n), [&](std::size_t a, std::size_t bnd) {
        for (std::size_t ci = a; ci < bnd; ++ci) {
          T* gp = gin->data.data() + ci * std::size_t(S_in);
          for (int co = 0; co < co_n; ++co) {
            const T wv = w.data[std::size_t(co) * ci_n + ci];
            const T* op = gout.data.data() + std::size_t(co) * S_out;
            for (std::int64_t s = 0; s < S_in; ++s) gp[s] += wv * op[s];
          }
        }
      });
    }
    if (gw) {
      parallel_for(std::size_t(co_n) * ci_n, [&](std::size_t a, std::size_t bnd) {
        std::vector<T> prod(static_cast<std::size_t>(S_in));
        for (std::size_t wi = a; wi < bnd; ++wi) {
          std::size_t co = wi / ci_n, ci = wi % ci_n;
          const T* op = gout.data.data() + co * std::size_t(S_out);
          const T* ip = in.data.data() + ci * std::size_t(S_in);
          for (std::int64_t s = 0; s < S_in; ++s) prod[std::size_t(s)] = op[s] * ip[s];
          gw->data[wi] += pairwise_sum(prod.data(), prod.size());
        }
      });
    }
    return;
  }

  if (stride == 1) {
    if (gin) {
      parallel_for(std::size_t(ci_n), [&](std::size_t a, std::size_t bnd) {
        for (std::size_t ci = a; ci < bnd; ++ci) {
          T* gp = gin->data.data() + ci * std::size_t(S_in);
          for (int co = 0; co < co_n; ++co) {
            const T* op = gout.data.data() + std::size_t(co) * S_out;
            const T* wp = w.data.data() + (std::size_t(co) * ci_n + ci) * 27;
            for (int dz = -1; dz <= 1; ++dz)
              for (int dy = -1; dy <= 1; ++dy)
                for (int dx = -1; dx <= 1; ++dx) {
                  // gin[z] accumulates w[d] * gout[z - d]
                  const T wv = wp[((dz + 1) * 3 + (dy + 1)) * 3 + (dx + 1)];
                  const int z0 = std::max(0, dz), z1 = Z + std::min(0, dz);
                  const int y0 = std::max(0, dy), y1 = Y + std::min(0, dy);
                  const int x0 = std::max(0, dx), x1 = X + std::min(0, dx);
                  for (int z = z0; z < z1; ++z)
                    for (int y = y0; y < y1; ++y) {
                      T* grow = gp + (std::int64_t(z) * Y + y) * X;
                      const T* orow = op + (std::int64_t(z - dz) * Y + (y - dy)) * X - dx;
                      for (int x = x0; x < x1; ++x) grow[x] += wv * orow[x];
                    }
                }
          }
        }
      });
    }
    if (gw) {
      parallel_for(std::size_t(co_n) * ci_n, [&](std::size_t a, std::size_t bnd) {
        for (std::size_t wi = a; wi < bnd; ++wi) {
          std::size_t co = wi / ci_n, ci = wi % ci_n;
          const T* op = gout.data.data() + co * std::size_t(S_out);
          const T* ip = in.data.data() + ci * std::size_t(S_in);
          T* wp = gw->data.data() + wi * 27;
          for (int dz = -1; dz <= 1; ++dz)
            for (int dy = -1; dy <= 1; ++dy)
              for (int dx = -1; dx <= 1; ++dx) {
                const int z0 = std::max(0, -dz), z1 = Z - std::max(0, dz);
                const int y0 = std::max(0, -dy), y1 = Y - std::max(0, dy);
                const int x0 = std::max(0, -dx), x1 = X - std::max(0, dx);
                T acc = T(0);
                for (int z = z0; z < z1; ++z)
                  for (int y = y0; y < y1; ++y) {
                    const T* orow = op + (std::int64_t(z) * Y + y) * X;
                    const T* irow = ip + (std::int64_t(z + dz) * Y + (y + dy)) * X + dx;
                    T racc = T(0);
                    for (int x = x0; x < x1; ++x) racc += orow[x] * irow[x];
                    acc += racc;
                  }
                wp[((dz + 1) * 3 + (dy + 1)) * 3 + (dx + 1)] += acc;
              }
        }
      });
    }
    return;
  }

  // k == 3, stride == 2
  if (gin) {
    parallel_for(std::size_t(ci_n), [&](std::size_t a, std::size_t bnd) {
      for (std::size_t ci = a; ci < bnd; ++ci) {
        T* gp = gin->data.data() + ci * std::size_t(S_in);
        for (int z = 0; z < Z; ++z)
          for (int y = 0; y < Y; ++y)
            for (int x = 0; x < X; ++x) {
              T acc = T(0);
              for (int co = 0; co < co_n; ++co) {
                const T* op = gout.data.data() + std::size_t(co) * S_out;
                const T* wp = w.data.data() + (std::size_t(co) * ci_n + ci) * 27;
                for (int dz = -1; dz <= 1; ++dz) {
                  int zr = z - dz;
                  if (zr < 0 || zr % 2 || zr / 2 >= Zo) continue;
                  for (int dy = -1; dy <= 1; ++dy) {
                    int yr = y - dy;
                    if (yr < 0 || yr % 2 || yr / 2 >= Yo) continue;
                    for (int dx = -1; dx <= 1; ++dx) {
                      int xr = x - dx;
                      if (xr < 0 || xr % 2 || xr / 2 >= Xo) continue;
                      acc += wp[((dz + 1) * 3 + (dy + 1)) * 3 + (dx + 1)] *
                             op[(std::int64_t(zr / 2) * Yo + yr / 2) * Xo + xr / 2];
                    }
                  }
                }
              }
              gp[(std::int64_t(z) * Y + y) * X + x] += acc;
            }
      }
    });
  }
  if (gw) {
    parallel_for(std::size_t(co_n) * ci_n, [&](std::size_t a, std::size_t bnd) {
      for (std::size_t wi = a; wi < bnd; ++wi) {
        std::size_t co = wi / ci_n, ci = wi % ci_n;
        const T* op = gout.data.data() + co * std::size_t(S_out);
        const T* ip = in.data.data() + ci * std::size_t(S_in);
        T* wp = gw->data.data() + wi * 27;
        for (int dz = -1; dz <= 1; ++dz)
          for (int dy = -1; dy <= 1; ++dy)
            for (int dx = -1; dx <= 1; ++dx) {
              T acc = T(0);
              for (int zo = 0; zo < Zo; ++zo) {
                int z = 2 * zo + dz;
                if (z < 0 || z >= Z) continue;
                for (int yo = 0; yo < Yo; ++yo) {
                  int y = 2 * yo + dy;
                  if (y < 0 || y >= Y) continue;
                  for (int xo = 0; xo < Xo; ++xo) {
                    int x = 2 * xo + dx;
                    if (x < 0 || x >= X) continue;
                    acc += op[(std::int64_t(zo) * Yo + yo) * Xo + xo] *
                           ip[(std::int64_t(z) * Y + y) * X + x];
                  }
                }
              }
              wp[((dz + 1) * 3 + (dy + 1)) * 3 + (dx + 1)] += acc;
            }
      }
    });
  }
}

// ---------------------------------------------------------------------------
// Global average pooling: per-channel spatial mean via pairwise summation.
// ---------------------------------------------------------------------------

template <typename T>
Tensor<T> global_avg_pool_forward(const Tensor<T>& in) {
  const int C = in.dim(0);
  const std::int64_t S = in.spatial();
  Tensor<T> out({C});
  for (int c = 0; c < C; ++c)
    out.data[std::size_t(c)] = pairwise_sum(in.chan(c), std::size_t(S)) / T(S);
  return out;
}

template <typename T>
void global_avg_pool_backward(const Tensor<T>& gout, Tensor<T>& gin) {
  const int C = gin.dim(0);
  const std::int64_t S = gin.spatial();
  for (int c = 0; c < C; ++c) {
    const T g = gout.data[std::size_t(c)] / T(S);
    T* p = gin.chan(c);
    for (std::int64_t s = 0; s < S; ++s) p[s] += g;
  }
}

// ---------------------------------------------------------------------------
// Fully connected layer over row-major batches: x [B, in] -> [B, out].
// ---------------------------------------------------------------------------

template <typename T>
Tensor<T> linear_forward(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& b) {
  const int B = x.dim(0), In = x.dim(1), Out = w.dim(0);
  if (w.dim(1) != In) throw std::invalid_argument("linear: input dim mismatch");
  Tensor<T> out({B, Out});
  for (int r = 0; r < B; ++r) {
    const T* xp = x.data.data() + std::size_t(r) * In;
    T* op = out.data.data() + std::size_t(r) * Out;
    for (int o = 0; o < Out; ++o) {
      const T* wp = w.data.data() + std::size_t(o) * In;
      T acc = b.data[std::size_t(o)];
      for (int i = 0; i < In; ++i) acc += wp[i] * xp[i];
      op[o] = acc;
    }
  }
  return out;
}

template <typename T>
void linear_backward(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& gout, Tensor<T>* gin,
                     Tensor<T>* gw, Tensor<T>* gb) {
  const int B = x.dim(0), In = x.dim(1), Out = w.dim(0);
  for (int r = 0; r < B; ++r) {
    const T* gp = gout.data.data() + std::size_t(r) * Out;
    const T* xp = x.data.data() + std::size_t(r) * In;
    for (int o = 0; o < Out; ++o) {
      const T g = gp[o];
      if (gb) gb->data[std::size_t(o)] += g;
      if (gw) {
        T* wp = gw->data.data() + std::size_t(o) * In;
        for (int i = 0; i < In; ++i) wp[i] += g * xp[i];
      }
      if (gin) {
        const T* wp = w.data.data() + std::size_t(o) * In;
        T* ip = gin->data.data() + std::size_t(r) * In;
        for (int i = 0; i < In; ++i) ip[i] += g * wp[i];
      }
    }
  }
}

// ---------------------------------------------------------------------------
// Elementwise activations
// ---------------------------------------------------------------------------

template <typename T>
Tensor<T> relu_forward(const Tensor<T>& x) {
  Tensor<T> out = x;
  for (auto& v : out.data) v = v > T(0) ? v : T(0);
  return out;
}

template <typename T>
void relu_backward(const Tensor<T>& x, const Tensor<T>& gout, Tensor<T>& gin) {
  for (std::size_t i = 0; i < x.data.size(); ++i)
    if (x.data[i] > T(0)) gin.data[i] += gout.data[i];
}

template <typename T>
Tensor<T> sigmoid_forward(const Tensor<T>& x) {
  Tensor<T> out = x;
  for (auto& v : out.data) v = T(1) / (T(1) + std::exp(-v));
  return out;
}

template <typename T>
void sigmoid_backward(const Tensor<T>& y, const Tensor<T>& gout, Tensor<T>& gin) {
  for (std::size_t i = 0; i < y.data.size(); ++i)
    gin.data[i] += gout.data[i] * y.data[i] * (T(1) - y.data[i]);
}

// ---------------------------------------------------------------------------
// Row-wise softmax with max subtraction.
// ---------------------------------------------------------------------------

template <typename T>
Tensor<T> softmax_rows_forward(const Tensor<T>& x) {
  const int R = x.dim(0), C = x.dim(1);
  Tensor<T> out({R, C});
  parallel_for(std::size_t(R), [&](std::size_t r0, std::size_t r1) {
    for (std::size_t r = r0; r < r1; ++r) {
      const T* xp = x.data.data() + r * std::size_t(C);
      T* op = out.data.data() + r * std::size_t(C);
      T m = xp[0];
      for (int c = 1; c < C; ++c) m = std::max(m, xp[c]);
      T sum = T(0);
      for (int c = 0; c < C; ++c) {
        op[c] = std::exp(xp[c] - m);
        sum += op[c];
      }
      for (int c = 0; c < C; ++c) op[c] /= sum;
    }
  });
  return out;
}

template <typename T>
void softmax_rows_backward(const Tensor<T>& y, const Tensor<T>& gout, Tensor<T>& gin) {
  const int R = y.dim(0), C = y.dim(1);
  parallel_for(std::size_t(R), [&](std::size_t r0, std::size_t r1) {
    for (std::size_t r = r0; r < r1; ++r) {
      const T* yp = y.data.data() + r * std::size_t(C);
      const T* gp = gout.data.data() + r * std::size_t(C);
      T* ip = gin.data.data() + r * std::size_t(C);
      T dot = T(0);
      for (int c = 0; c < C; ++c) dot += yp[c] * gp[c];
      for (int c = 0; c < C; ++c) ip[c] += yp[c] * (gp[c] - dot);
    }
  });
}

// ---------------------------------------------------------------------------
// x2 trilinear upsampling, align_corners=false (source coordinate
// (o + 0.5)/2 - 0.5, clamped replication at the borders).
// ---------------------------------------------------------------------------

namespace detail {
struct UpAxis {
  std::vector<int> i0, i1;
  std::vector<double> f;
};
inline UpAxis upsample_axis(int n_in) {
  UpAxis a;
  int n_out = 2 * n_in;
  a.i0.resize(std::size_t(n_out));
  a.i1.resize(std::size_t(n_out));
  a.f.resize(std::size_t(n_out));
  for (int o = 0; o < n_out; ++o) {
    double src = 0.5 * (o + 0.5) - 0.5;
    double fl = std::floor(src);
    a.f[std::size_t(o)] = src - fl;
    a.i0[std::size_t(o)] = std::clamp(int(fl), 0, n_in - 1);
    a.i1[std::size_t(o)] = std::clamp(int(fl) + 1, 0, n_in - 1);
  }
  return a;
}
}  // namespace detail

template <typename T>
Tensor<T> upsample_trilinear_x2_forward(const Tensor<T>& in) {
  const int C = in.dim(0), Z = in.dim(1), Y = in.dim(2), X = in.dim(3);
  auto az = detail::upsample_axis(Z), ay = detail::upsample_axis(Y), ax = detail::upsample_axis(X);
  Tensor<T> out({C, 2 * Z, 2 * Y, 2 * X});
  parallel_for(std::size_t(C), [&](std::size_t c0, std::size_t c1) {
    for (std::size_t c = c0; c < c1; ++c) {
      const T* ip = in.chan(int(c));
      T* op = out.chan(int(c));
      for (int zo = 0; zo < 2 * Z; ++zo) {
        T fz = T(az.f[std::size_t(zo)]);
        for (int yo = 0; yo < 2 * Y; ++yo) {
          T fy = T(ay.f[std::size_t(yo)]);
          const T* r00 = ip + (std::int64_t(az.i0[zo]) * Y + ay.i0[yo]) * X;
          const T* r10 = ip + (std::int64_t(az.i0[zo]) * Y + ay.i1[yo]) * X;
          const T* r01 = ip + (std::int64_t(az.i1[zo]) * Y + ay.i0[yo]) * X;
          const T* r11 = ip + (std::int64_t(az.i1[zo]) * Y + ay.i1[yo]) * X;
          T* orow = op + (std::int64_t(zo) * 2 * Y + yo) * 2 * X;
          for (int xo = 0; xo < 2 * X; ++xo) {
            T fx = T(ax.f[std::size_t(xo)]);
            int x0 = ax.i0[xo], x1 = ax.i1[xo];
            T c00 = r00[x0] * (T(1) - fx) + r00[x1] * fx;
            T c10 = r10[x0] * (T(1) - fx) + r10[x1] * fx;
            T c01 = r01[x0] * (T(1) - fx) + r01[x1] * fx;
            T c11 = r11[x0] * (T(1) - fx) + r11[x1] * fx;
            T c0 = c00 * (T(1) - fy) + c10 * fy;
            T c1 = c01 * (T(1) - fy) + c11 * fy;
            orow[xo] = c0 * (T(1) - fz) + c1 * fz;
          }
        }
      }
    }
  });
  return out;
}

namespace detail {
// per input index: the (output index, weight) pairs referencing it
inline std::vector<std::vector<std::pair<int, double>>> upsample_contributors(int n_in) {
  auto a = upsample_axis(n_in);
  std::vector<std::vector<std::pair<int, double>>> c(static_cast<std::size_t>(n_in));
  for (int o = 0; o < 2 * n_in; ++o) {
    c[std::size_t(a.i0[o])].emplace_back(o, 1.0 - a.f[std::size_t(o)]);
    c[std::size_t(a.i1[o])].emplace_back(o, a.f[std::size_t(o)]);
  }
  return c;
}
}  // namespace detail

template <typename T>
void upsample_trilinear_x2_backward(const Tensor<T>& gout, Tensor<T>& gin) {
  const int C = gin.dim(0), Z = gin.dim(1), Y = gin.dim(2), X = gin.dim(3);
  auto cz = detail::upsample_contributors(Z);
  auto cy = detail::upsample_contributors(Y);
  auto cx = detail::upsample_contributors(X);
  parallel_for(std::size_t(C), [&](std::size_t c0, std::size_t c1) {
    for (std::size_t c = c0; c < c1; ++c) {
      const T* gp = gout.chan(int(c));
      T* ip = gin.chan(int(c));
      for (int z = 0; z < Z; ++z)
        for (int y = 0; y < Y; ++y)
          for (int x = 0; x < X; ++x) {
            T acc = T(0);
            for (auto [zo, wz] : cz[std::size_t(z)])
              for (auto [yo, wy] : cy[std::size_t(y)]) {
                const T* grow = gp + (std::int64_t(zo) * 2 * Y + yo) * 2 * X;
                T wzy = T(wz * wy);
                for (auto [xo, wx] : cx[std::size_t(x)]) acc += wzy * T(wx) * grow[xo];
              }
            ip[(std::int64_t(z) * Y + y) * X + x] += acc;
          }
    }
  });
}

// ---------------------------------------------------------------------------
// 2D matrix product with optional transposes: out = op(A) * op(B).
// ---------------------------------------------------------------------------

template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b, bool ta, bool tb) {
  const int ar = a.dim(0), ac = a.dim(1), br = b.dim(0), bc = b.dim(1);
  const int M = ta ? ac : ar, K = ta ? ar : ac;
  const int K2 = tb ? bc : br, N = tb ? br : bc;
  if (K != K2) throw std::invalid_argument("matmul: inner dimension mismatch");
  Tensor<T> out({M, N});
  auto A = [&](int i, int k) { return ta ? a.data[std::size_t(k) * ac + i] : a.data[std::size_t(i) * ac + k]; };
  auto B = [&](int k, int j) { return tb ? b.data[std::size_t(j) * bc + k] : b.data[std::size_t(k) * bc + j]; };
  parallel_for(std::size_t(M), [&](std::size_t m0, std::size_t m1) {
    for (std::size_t i = m0; i < m1; ++i) {
      T* op = out.data.data() + i * std::size_t(N);
      for (int j = 0; j < N; ++j) {
        T acc = T(0);
        for (int k = 0; k < K; ++k) acc += A(int(i), k) * B(k, j);
        op[j] = acc;
      }
    }
  });
  return out;
}

// ---------------------------------------------------------------------------
// Per-position L2 normalization along the channel dim: x [C, S] -> y with
// each column scaled to unit norm. Columns whose norm vanishes map to the
// fixed unit vector e1 (first channel 1) with zero gradient.
// ---------------------------------------------------------------------------

template <typename T>
Tensor<T> normalize_channels_forward(const Tensor<T>& x, T eps = T(1e-8)) {
  const int C = x.dim(0);
  const std::int64_t S = x.spatial();
  Tensor<T> out = x;
  for (std::int64_t s = 0; s < S; ++s) {
    T nsq = T(0);
    for (int c = 0; c < C; ++c) {
      T v = x.data[std::size_t(c) * S + s];
      nsq += v * v;
    }
    T r = std::sqrt(nsq);
    if (r > eps) {
      for (int c = 0; c < C; ++c) out.data[std::size_t(c) * S + s] /= r;
    } else {
      out.data[std::size_t(0) * S + s] = T(1);
      for (int c = 1; c < C; ++c) out.data[std::size_t(c) * S + s] = T(0);
    }
  }
  return out;
}

template <typename T>
void normalize_channels_backward(const Tensor<T>& x, const Tensor<T>& gout, Tensor<T>& gin,
                                 T eps = T(1e-8)) {
  const int C = x.dim(0);
  const std::int64_t S = x.spatial();
  for (std::int64_t s = 0; s < S; ++s) {
    T nsq = T(0);
    for (int c = 0; c < C; ++c) {
      T v = x.data[std::size_t(c) * S + s];
      nsq += v * v;
    }
    T r = std::sqrt(nsq);
    if (r > eps) {
      // d(x/r)/dx = (I - y y^T) / r
      T dot = T(0);
      for (int c = 0; c < C; ++c)
        dot += x.data[std::size_t(c) * S + s] * gout.data[std::size_t(c) * S + s];
      dot /= (r * r);
      for (int c = 0; c < C; ++c)
        gin.data[std::size_t(c) * S + s] +=
            (gout.data[std::size_t(c) * S + s] - x.data[std::size_t(c) * S + s] * dot) / r;
    }
    // degenerate columns output a constant; no gradient flows
  }
}

}  // namespace vg
