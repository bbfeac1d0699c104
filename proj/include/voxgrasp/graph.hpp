#pragma once

#include <cmath>
#include <functional>
#include <map>
#include <string>
#include <unordered_map>
#include <vector>

#include "voxgrasp/common.hpp"
#include "voxgrasp/tensor.hpp"

namespace vg {

// ---------------------------------------------------------------------------
// Named parameters with gradient slots and Adam moments.
// ---------------------------------------------------------------------------

template <typename T>
struct ParamStore {
  struct Entry {
    std::string name;
    Tensor<T> value, grad, m, v;
  };
  std::vector<Entry> entries;
  std::unordered_map<std::string, std::size_t> by_name;
  std::int64_t step = 0;

  std::size_t add(const std::string& name, std::vector<int> shape) {
    if (by_name.count(name)) throw std::invalid_argument("duplicate parameter: " + name);
    Entry e;
    e.name = name;
    e.value = Tensor<T>(shape);
    e.grad = Tensor<T>(shape);
    e.m = Tensor<T>(shape);
    e.v = Tensor<T>(std::move(shape));
    entries.push_back(std::move(e));
    by_name[name] = entries.size() - 1;
    return entries.size() - 1;
  }

  // conv weight (He uniform over fan-in) plus zero bias
  void add_conv(const std::string& name, int co, int ci, int k, Rng& rng) {
    std::size_t w = add(name + ".w", {co, ci, k, k, k});
    he_uniform_fill(entries[w].value, std::int64_t(ci) * k * k * k, rng);
    add(name + ".b", {co});
  }

  void add_linear(const std::string& name, int out, int in, Rng& rng) {
    std::size_t w = add(name + ".w", {out, in});
    he_uniform_fill(entries[w].value, in, rng);
    add(name + ".b", {out});
  }

  std::size_t index_of(const std::string& name) const {
    auto it = by_name.find(name);
    if (it == by_name.end()) throw std::invalid_argument("unknown parameter: " + name);
    return it->second;
  }
  Entry& at(const std::string& name) { return entries[index_of(name)]; }
  const Entry& at(const std::string& name) const { return entries[index_of(name)]; }

  std::int64_t parameter_count() const {
    std::int64_t n = 0;
    for (const auto& e : entries) n += e.value.numel();
    return n;
  }

  void zero_grad() {
    for (auto& e : entries) std::fill(e.grad.data.begin(), e.grad.data.end(), T(0));
  }

  // Bias-corrected Adam; clears gradients afterwards.
  void adam_step(double lr, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8) {
    ++step;
    const double bc1 = 1.0 - std::pow(beta1, double(step));
    const double bc2 = 1.0 - std::pow(beta2, double(step));
    for (auto& e : entries) {
      for (std::size_t i = 0; i < e.value.data.size(); ++i) {
        double g = double(e.grad.data[i]);
        double m = beta1 * double(e.m.data[i]) + (1.0 - beta1) * g;
        double v = beta2 * double(e.v.data[i]) + (1.0 - beta2) * g * g;
        e.m.data[i] = T(m);
        e.v.data[i] = T(v);
        e.value.data[i] -= T(lr * (m / bc1) / (std::sqrt(v / bc2) + eps));
      }
      std::fill(e.grad.data.begin(), e.grad.data.end(), T(0));
    }
  }
};

// ---------------------------------------------------------------------------
// One-cycle schedule: cosine warmup from lr_init to lr_max over the first
// warmup fraction of steps, cosine anneal to lr_init/final_div afterwards.
// ---------------------------------------------------------------------------

inline double one_cycle_lr(std::int64_t step, std::int64_t total_steps, double lr_init,
                           double lr_max, double warmup_frac = 0.3, double final_div = 25.0) {
  if (step < 0 || step > total_steps) throw std::invalid_argument("one_cycle_lr: step out of range");
  if (!(lr_init < lr_max)) throw std::invalid_argument("one_cycle_lr: lr_init must be < lr_max");
  if (total_steps <= 0) return lr_init;
  double w = warmup_frac * double(total_steps);
  double s = double(step);
  if (s <= w && w > 0.0)
    return lr_init + (lr_max - lr_init) * 0.5 * (1.0 - std::cos(M_PI * s / w));
  double lr_final = lr_init / final_div;
  double rest = double(total_steps) - w;
  if (rest <= 0.0) return lr_final;
  return lr_final + (lr_max - lr_final) * 0.5 * (1.0 + std::cos(M_PI * (s - w) / rest));
}

// ---------------------------------------------------------------------------
// Recorded-forward tape. Operations execute eagerly, storing the values and
// a backward closure; backward() walks the tape in reverse. The model's
// graph is fixed per step, so this stays deliberately minimal.
// ---------------------------------------------------------------------------

using Var = int;

template <typename T>
class Graph {
 public:
  struct Node {
    Tensor<T> value;
    Tensor<T> grad;
    std::function<void(Graph&, Var)> backward;
    bool requires_grad = false;
    int param_entry = -1;
  };

  explicit Graph(ParamStore<T>* store = nullptr) : store_(store) {}

  const Tensor<T>& value(Var v) const { return nodes_[std::size_t(v)].value; }
  Tensor<T>& grad(Var v) { return nodes_[std::size_t(v)].grad; }
  bool needs(Var v) const { return nodes_[std::size_t(v)].requires_grad; }
  std::size_t size() const { return nodes_.size(); }

  Var make(Tensor<T> value, bool requires_grad, std::function<void(Graph&, Var)> backward = {}) {
    Node n;
    n.value = std::move(value);
    n.requires_grad = requires_grad;
    n.backward = std::move(backward);
    nodes_.push_back(std::move(n));
    return Var(nodes_.size() - 1);
  }

  Var input(Tensor<T> value, bool requires_grad = false) {
    return make(std::move(value), requires_grad);
  }

  Var param(const std::string& name) {
    if (!store_) throw std::logic_error("graph has no parameter store");
    std::size_t e = store_->index_of(name);
    Var v = make(store_->entries[e].value, true);
    nodes_[std::size_t(v)].param_entry = int(e);
    return v;
  }

  // ---- ops -----------------------------------------------------------------

  Var conv3(Var x, Var w, Var b, int stride = 1) {
    Tensor<T> out = conv3_forward(value(x), value(w), value(b), stride);
    bool rq = needs(x) || needs(w) || needs(b);
    return make(std::move(out), rq, [x, w, b, stride](Graph& g, Var self) {
      conv3_backward(g.value(x), g.value(w), stride, g.grad(self),
                     g.needs(x) ? &g.grad(x) : nullptr, g.needs(w) ? &g.grad(w) : nullptr,
                     g.needs(b) ? &g.grad(b) : nullptr);
    });
  }

  Var relu(Var x) {
    return make(relu_forward(value(x)), needs(x), [x](Graph& g, Var self) {
      if (g.needs(x)) relu_backward(g.value(x), g.grad(self), g.grad(x));
    });
  }

  Var sigmoid(Var x) {
    return make(sigmoid_forward(value(x)), needs(x), [x](Graph& g, Var self) {
      if (g.needs(x)) sigmoid_backward(g.value(self), g.grad(self), g.grad(x));
    });
  }

  Var add(Var a, Var b) {
    if (!value(a).same_shape(value(b))) throw std::invalid_argument("add: shape mismatch");
    Tensor<T> out = value(a);
    const auto& vb = value(b);
    for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] += vb.data[i];
    return make(std::move(out), needs(a) || needs(b), [a, b](Graph& g, Var self) {
      const auto& go = g.grad(self);
      if (g.needs(a)) {
        auto& ga = g.grad(a);
        for (std::size_t i = 0; i < go.data.size(); ++i) ga.data[i] += go.data[i];
      }
      if (g.needs(b)) {
        auto& gb = g.grad(b);
        for (std::size_t i = 0; i < go.data.size(); ++i) gb.data[i] += go.data[i];
      }
    });
  }

  Var scale(Var x, double c) {
    Tensor<T> out = value(x);
    for (auto& v : out.data) v *= T(c);
    return make(std::move(out), needs(x), [x, c](Graph& g, Var self) {
      if (!g.needs(x)) return;
      const auto& go = g.grad(self);
      auto& gx = g.grad(x);
      for (std::size_t i = 0; i < go.data.size(); ++i) gx.data[i] += T(c) * go.data[i];
    });
  }

  Var concat_channels(const std::vector<Var>& parts) {
    int ctotal = 0;
    std::vector<int> rest(value(parts.at(0)).shape.begin() + 1, value(parts.at(0)).shape.end());
    for (Var p : parts) {
      const auto& s = value(p).shape;
      if (std::vector<int>(s.begin() + 1, s.end()) != rest)
        throw std::invalid_argument("concat: trailing shape mismatch");
      ctotal += s[0];
    }
    std::vector<int> shape = {ctotal};
    shape.insert(shape.end(), rest.begin(), rest.end());
    Tensor<T> out(shape);
    std::size_t off = 0;
    bool rq = false;
    for (Var p : parts) {
      const auto& v = value(p);
      std::copy(v.data.begin(), v.data.end(), out.data.begin() + off);
      off += v.data.size();
      rq = rq || needs(p);
    }
    return make(std::move(out), rq, [parts](Graph& g, Var self) {
      const auto& go = g.grad(self);
      std::size_t off = 0;
      for (Var p : parts) {
        std::size_t n = g.value(p).data.size();
        if (g.needs(p)) {
          auto& gp = g.grad(p);
          for (std::size_t i = 0; i < n; ++i) gp.data[i] += go.data[off + i];
        }
        off += n;
      }
    });
  }

  Var global_avg_pool(Var x) {
    return make(global_avg_pool_forward(value(x)), needs(x), [x](Graph& g, Var self) {
      if (g.needs(x)) global_avg_pool_backward(g.grad(self), g.grad(x));
    });
  }

  Var linear(Var x, Var w, Var b) {
    bool rq = needs(x) || needs(w) || needs(b);
    return make(linear_forward(value(x), value(w), value(b)), rq, [x, w, b](Graph& g, Var self) {
      linear_backward(g.value(x), g.value(w), g.grad(self), g.needs(x) ? &g.grad(x) : nullptr,
                      g.needs(w) ? &g.grad(w) : nullptr, g.needs(b) ? &g.grad(b) : nullptr);
    });
  }

  // gate [C] applied across the spatial dims of x [C, ...]
  Var channel_gate(Var gate, Var x) {
    const auto& gv = value(gate);
    const auto& xv = value(x);
    if (gv.dim(0) != xv.dim(0)) throw std::invalid_argument("channel_gate: channel mismatch");
    Tensor<T> out = xv;
    const std::int64_t S = xv.spatial();
    for (int c = 0; c < xv.dim(0); ++c) {
      T* p = out.chan(c);
      const T gc = gv.data[std::size_t(c)];
      for (std::int64_t s = 0; s < S; ++s) p[s] *= gc;
    }
    return make(std::move(out), needs(gate) || needs(x), [gate, x](Graph& g, Var self) {
      const auto& go = g.grad(self);
      const auto& gv = g.value(gate);
      const auto& xv = g.value(x);
      const std::int64_t S = xv.spatial();
      if (g.needs(x)) {
        auto& gx = g.grad(x);
        for (int c = 0; c < xv.dim(0); ++c) {
          const T gc = gv.data[std::size_t(c)];
          const T* gop = go.chan(c);
          T* gxp = gx.chan(c);
          for (std::int64_t s = 0; s < S; ++s) gxp[s] += gc * gop[s];
        }
      }
      if (g.needs(gate)) {
        auto& gg = g.grad(gate);
        std::vector<T> prod(static_cast<std::size_t>(S));
        for (int c = 0; c < xv.dim(0); ++c) {
          const T* gop = go.chan(c);
          const T* xp = xv.chan(c);
          for (std::int64_t s = 0; s < S; ++s) prod[std::size_t(s)] = gop[s] * xp[s];
          gg.data[std::size_t(c)] += pairwise_sum(prod.data(), prod.size());
        }
      }
    });
  }

  Var softmax_rows(Var x) {
    return make(softmax_rows_forward(value(x)), needs(x), [x](Graph& g, Var self) {
      if (g.needs(x)) softmax_rows_backward(g.value(self), g.grad(self), g.grad(x));
    });
  }

  Var matmul_op(Var a, Var b, bool ta, bool tb) {
    bool rq = needs(a) || needs(b);
    return make(matmul(value(a), value(b), ta, tb), rq, [a, b, ta, tb](Graph& g, Var self) {
      const auto& go = g.grad(self);  // [M, N]
      // out = op(A) op(B); dA and dB follow from the transpose pattern
      if (g.needs(a)) {
        Tensor<T> da = ta ? matmul(g.value(b), go, tb, true) : matmul(go, g.value(b), false, !tb);
        auto& ga = g.grad(a);
        for (std::size_t i = 0; i < da.data.size(); ++i) ga.data[i] += da.data[i];
      }
      if (g.needs(b)) {
        Tensor<T> db = tb ? matmul(go, g.value(a), true, ta) : matmul(g.value(a), go, !ta, false);
        auto& gb = g.grad(b);
        for (std::size_t i = 0; i < db.data.size(); ++i) gb.data[i] += db.data[i];
      }
    });
  }

  Var upsample_x2(Var x) {
    return make(upsample_trilinear_x2_forward(value(x)), needs(x), [x](Graph& g, Var self) {
      if (g.needs(x)) upsample_trilinear_x2_backward(g.grad(self), g.grad(x));
    });
  }

  Var normalize_channels(Var x, T eps = T(1e-8)) {
    return make(normalize_channels_forward(value(x), eps), needs(x), [x, eps](Graph& g, Var self) {
      if (g.needs(x)) normalize_channels_backward(g.value(x), g.grad(self), g.grad(x), eps);
    });
  }

  // reinterpret [C, Z, Y, X] as [C, Z*Y*X] (or any same-numel 2D view)
  Var reshape(Var x, std::vector<int> shape) {
    Tensor<T> out = value(x);
    if (Tensor<T>::numel_of(shape) != out.numel()) throw std::invalid_argument("reshape: numel mismatch");
    out.shape = shape;
    return make(std::move(out), needs(x), [x](Graph& g, Var self) {
      if (!g.needs(x)) return;
      const auto& go = g.grad(self);
      auto& gx = g.grad(x);
      for (std::size_t i = 0; i < go.data.size(); ++i) gx.data[i] += go.data[i];
    });
  }

  // mean of a list of scalar nodes
  Var mean_scalars(const std::vector<Var>& xs) {
    T acc = T(0);
    bool rq = false;
    for (Var v : xs) {
      acc += value(v).data.at(0);
      rq = rq || needs(v);
    }
    Tensor<T> out({1});
    out.data[0] = acc / T(xs.size());
    return make(std::move(out), rq, [xs](Graph& g, Var self) {
      const T go = g.grad(self).data[0] / T(xs.size());
      for (Var v : xs)
        if (g.needs(v)) g.grad(v).data[0] += go;
    });
  }

  Var axpby(Var a, double alpha, Var b, double beta) {
    if (!value(a).same_shape(value(b))) throw std::invalid_argument("axpby: shape mismatch");
    Tensor<T> out = value(a);
    const auto& vb = value(b);
    for (std::size_t i = 0; i < out.data.size(); ++i)
      out.data[i] = T(alpha) * out.data[i] + T(beta) * vb.data[i];
    return make(std::move(out), needs(a) || needs(b), [a, alpha, b, beta](Graph& g, Var self) {
      const auto& go = g.grad(self);
      if (g.needs(a)) {
        auto& ga = g.grad(a);
        for (std::size_t i = 0; i < go.data.size(); ++i) ga.data[i] += T(alpha) * go.data[i];
      }
      if (g.needs(b)) {
        auto& gb = g.grad(b);
        for (std::size_t i = 0; i < go.data.size(); ++i) gb.data[i] += T(beta) * go.data[i];
      }
    });
  }

  // ---- backward -------------------------------------------------------------

  // Seeds d(loss)/d(loss) = 1 and walks the tape in reverse, then flushes
  // parameter-node gradients into the store.
  void backward(Var loss) {
    if (value(loss).numel() != 1) throw std::invalid_argument("backward: loss must be scalar");
    for (auto& n : nodes_)
      if (n.requires_grad) n.grad = Tensor<T>(n.value.shape);
    nodes_[std::size_t(loss)].grad.data[0] = T(1);
    for (std::size_t i = nodes_.size(); i-- > 0;) {
      auto& n = nodes_[i];
      if (n.requires_grad && n.backward) n.backward(*this, Var(i));
    }
    if (store_) {
      for (std::size_t i = 0; i < nodes_.size(); ++i) {
        auto& n = nodes_[i];
        if (n.param_entry >= 0 && n.requires_grad) {
          auto& ge = store_->entries[std::size_t(n.param_entry)].grad;
          for (std::size_t j = 0; j < ge.data.size(); ++j) ge.data[j] += n.grad.data[j];
        }
      }
    }
  }

 private:
  std::vector<Node> nodes_;
  ParamStore<T>* store_ = nullptr;
};

// ---------------------------------------------------------------------------
// Checkpoint file: magic "VGCK", u32 version, u32 record count, then per
// record u32 name length + bytes, u32 rank, u32 extents, f32 data, and a
// trailing CRC-32. Parameter values come first, then Adam moments and any
// caller-supplied metadata records.
// ---------------------------------------------------------------------------

inline constexpr char kCheckpointMagic[4] = {'V', 'G', 'C', 'K'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

template <typename T>
void save_checkpoint(const ParamStore<T>& store, const std::string& path,
                     const std::map<std::string, std::vector<float>>& extra = {}) {
  BinaryWriter w(path);
  w.bytes(kCheckpointMagic, 4);
  w.u32(kCheckpointVersion);
  std::uint32_t count = std::uint32_t(store.entries.size() * 3 + extra.size() + 1);
  w.u32(count);
  auto write_record = [&](const std::string& name, const std::vector<int>& shape,
                          auto&& get_value, std::size_t n) {
    w.u32(std::uint32_t(name.size()));
    w.bytes(name.data(), name.size());
    w.u32(std::uint32_t(shape.size()));
    for (int e : shape) w.u32(std::uint32_t(e));
    for (std::size_t i = 0; i < n; ++i) w.f32(get_value(i));
  };
  for (const auto& e : store.entries)
    write_record(e.name, e.value.shape, [&](std::size_t i) { return float(e.value.data[i]); },
                 e.value.data.size());
  for (const auto& e : store.entries)
    write_record("adam.m/" + e.name, e.m.shape, [&](std::size_t i) { return float(e.m.data[i]); },
                 e.m.data.size());
  for (const auto& e : store.entries)
    write_record("adam.v/" + e.name, e.v.shape, [&](std::size_t i) { return float(e.v.data[i]); },
                 e.v.data.size());
  {
    std::vector<float> s = {float(store.step)};
    write_record("adam.step", {1}, [&](std::size_t i) { return s[i]; }, 1);
  }
  for (const auto& [name, vals] : extra)
    write_record(name, {int(vals.size())}, [&](std::size_t i) { return vals[i]; }, vals.size());
  w.finish_crc();
}

// Loads matching parameter/moment records into the store; returns any other
// records (metadata) by name.
template <typename T>
std::map<std::string, std::vector<float>> load_checkpoint(ParamStore<T>& store,
                                                          const std::string& path) {
  BinaryReader r(path);
  r.expect_magic(kCheckpointMagic);
  r.expect_version(kCheckpointVersion);
  std::uint32_t count = r.u32();
  std::map<std::string, std::vector<float>> extra;
  std::size_t values_loaded = 0;
  for (std::uint32_t rec = 0; rec < count; ++rec) {
    std::uint32_t name_len = r.u32();
    if (name_len > 4096) throw io_error(path, "implausible record name length");
    std::string name(name_len, '\0');
    r.bytes(name.data(), name_len);
    std::uint32_t rank = r.u32();
    if (rank > 8) throw io_error(path, "implausible record rank");
    std::vector<int> shape(rank);
    std::size_t n = 1;
    for (auto& e : shape) {
      e = int(r.u32());
      n *= std::size_t(e);
    }
    std::vector<float> vals(n);
    r.f32s(vals.data(), n);

    auto assign = [&](Tensor<T>& t) {
      if (t.shape != shape) throw io_error(path, "shape mismatch for record " + name);
      for (std::size_t i = 0; i < n; ++i) t.data[i] = T(vals[i]);
    };
    if (store.by_name.count(name)) {
      assign(store.entries[store.by_name[name]].value);
      ++values_loaded;
    } else if (name.rfind("adam.m/", 0) == 0 && store.by_name.count(name.substr(7))) {
      assign(store.entries[store.by_name[name.substr(7)]].m);
    } else if (name.rfind("adam.v/", 0) == 0 && store.by_name.count(name.substr(7))) {
      assign(store.entries[store.by_name[name.substr(7)]].v);
    } else if (name == "adam.step") {
      store.step = std::int64_t(vals.at(0));
    } else {
      extra[name] = std::move(vals);
    }
  }
  r.verify_crc();
  if (values_loaded < store.entries.size())
    throw io_error(path, "checkpoint is missing parameters for this model configuration");
  return extra;
}

}  // namespace vg
