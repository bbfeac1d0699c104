#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <string>
#include <vector>

#include "voxgrasp/common.hpp"
#include "voxgrasp/contrastive.hpp"
#include "voxgrasp/datagen.hpp"
#include "voxgrasp/graph.hpp"
#include "voxgrasp/network.hpp"

namespace vg {

// ---------------------------------------------------------------------------
// Training configuration (defaults follow the full-scale protocol).
// ---------------------------------------------------------------------------

struct TrainConfig {
  int scenes_per_iter = 4;
  int positives_per_scene = 8;
  int negatives_per_scene = 16;
  double pos_bce_weight = 2.0;
  double neg_bce_weight = 1.0;
  double contrast_weight = 0.5;
  double width_loss_coeff = 0.1;
  int epochs = 100;
  double lr_init = 4e-5;
  double lr_max = 4e-4;
  double warmup_frac = 0.3;
  double final_lr_div = 25.0;
  std::uint64_t seed = 1;

  int bank_capacity = 32768;
  int embed_dim = 128;
  int proj_hidden = 128;

  void validate() const {
    if (scenes_per_iter < 1 || positives_per_scene < 1 || negatives_per_scene < 1 || epochs < 1)
      throw config_error("train counts must be >= 1");
    if (!(pos_bce_weight > 0 && neg_bce_weight > 0)) throw config_error("loss weights must be > 0");
    if (contrast_weight < 0) throw config_error("contrast_weight must be >= 0");
    if (!(lr_init < lr_max)) throw config_error("lr_init must be < lr_max");
    if (bank_capacity < 1 || embed_dim < 1 || proj_hidden < 1)
      throw config_error("bank/projection dims must be >= 1");
  }
};

inline std::size_t nearest_voxel_index(const Vec3& p, int n, double voxel_size) {
  auto axis = [&](double c) { return std::clamp(int(std::floor(c / voxel_size)), 0, n - 1); };
  return (std::size_t(axis(p.z)) * n + axis(p.y)) * n + axis(p.x);
}

// gripper roll by pi about the approach axis: q * (0,0,0,1)
inline UnitQuaternion roll_pi(const UnitQuaternion& q) {
  return q * UnitQuaternion(0, 0, 0, 1);
}

// ---------------------------------------------------------------------------
// Loss terms as tape ops. Supervision is sparse: each term touches only the
// labeled voxels.
// ---------------------------------------------------------------------------

// Weighted binary cross-entropy on the quality logits, mean over labels.
template <typename T>
Var bce_logits_at(Graph<T>& g, Var logits, const std::vector<std::size_t>& voxels,
                  const std::vector<int>& targets, const std::vector<double>& weights) {
  const auto& lv = g.value(logits);
  const std::size_t n = voxels.size();
  std::vector<T> terms(n);
  for (std::size_t i = 0; i < n; ++i) {
    T s = lv.data[voxels[i]];
    T y = T(targets[i]);
    // max(s,0) - s*y + log(1 + exp(-|s|))
    terms[i] = T(weights[i]) *
               (std::max(s, T(0)) - s * y + std::log1p(std::exp(-std::abs(s))));
  }
  Tensor<T> out({1});
  out.data[0] = pairwise_sum(terms.data(), n) / T(n);
  return g.make(std::move(out), g.needs(logits),
                [logits, voxels, targets, weights](Graph<T>& gg, Var self) {
                  if (!gg.needs(logits)) return;
                  const T go = gg.grad(self).data[0];
                  const auto& lv = gg.value(logits);
                  auto& gl = gg.grad(logits);
                  const T inv_n = T(1) / T(voxels.size());
                  for (std::size_t i = 0; i < voxels.size(); ++i) {
                    T s = lv.data[voxels[i]];
                    T sig = T(1) / (T(1) + std::exp(-s));
                    gl.data[voxels[i]] += go * T(weights[i]) * (sig - T(targets[i])) * inv_n;
                  }
                });
}

// Orientation loss at positive voxels: per label the smaller of
// 1 - |<q_hat, q_gt>| and 1 - |<q_hat, q_gt rolled by pi>|, averaged.
// `rotation` is the per-voxel normalized head [4, N^3...].
template <typename T>
Var rotation_loss_at(Graph<T>& g, Var rotation, const std::vector<std::size_t>& voxels,
                     const std::vector<UnitQuaternion>& gt) {
  const auto& rv = g.value(rotation);
  const std::int64_t S = rv.spatial();
  const std::size_t n = voxels.size();
  if (n == 0) return g.input(Tensor<T>({1}), false);

  std::vector<std::array<double, 4>> chosen(n);  // signed gradient targets
  std::vector<T> terms(n);
  for (std::size_t i = 0; i < n; ++i) {
    std::array<double, 4> a = {gt[i].w, gt[i].x, gt[i].y, gt[i].z};
    UnitQuaternion rolled = roll_pi(gt[i]);
    std::array<double, 4> b = {rolled.w, rolled.x, rolled.y, rolled.z};
    double da = 0, db = 0;
    for (int c = 0; c < 4; ++c) {
      double qc = double(rv.data[std::size_t(c) * S + voxels[i]]);
      da += qc * a[c];
      db += qc * b[c];
    }
    const auto& pick = std::abs(da) >= std::abs(db) ? a : b;
    double d = std::abs(da) >= std::abs(db) ? da : db;
    terms[i] = T(1.0 - std::abs(d));
    double sgn = d >= 0 ? 1.0 : -1.0;
    for (int c = 0; c < 4; ++c) chosen[i][std::size_t(c)] = sgn * pick[std::size_t(c)];
  }
  Tensor<T> out({1});
  out.data[0] = pairwise_sum(terms.data(), n) / T(n);
  return g.make(std::move(out), g.needs(rotation),
                [rotation, voxels, chosen, S](Graph<T>& gg, Var self) {
                  if (!gg.needs(rotation)) return;
                  const T go = gg.grad(self).data[0];
                  auto& gr = gg.grad(rotation);
                  const T inv_n = T(1) / T(voxels.size());
                  for (std::size_t i = 0; i < voxels.size(); ++i)
                    for (int c = 0; c < 4; ++c)
                      gr.data[std::size_t(c) * S + voxels[i]] -=
                          go * inv_n * T(chosen[i][std::size_t(c)]);
                });
}

// Width loss at positive voxels: mean of ((w_hat - w_gt)/max_width)^2.
template <typename T>
Var width_loss_at(Graph<T>& g, Var width, const std::vector<std::size_t>& voxels,
                  const std::vector<double>& gt_width, double max_width) {
  const auto& wv = g.value(width);
  const std::size_t n = voxels.size();
  if (n == 0) return g.input(Tensor<T>({1}), false);
  std::vector<T> terms(n);
  for (std::size_t i = 0; i < n; ++i) {
    double r = (double(wv.data[voxels[i]]) - gt_width[i]) / max_width;
    terms[i] = T(r * r);
  }
  Tensor<T> out({1});
  out.data[0] = pairwise_sum(terms.data(), n) / T(n);
  return g.make(std::move(out), g.needs(width),
                [width, voxels, gt_width, max_width](Graph<T>& gg, Var self) {
                  if (!gg.needs(width)) return;
                  const T go = gg.grad(self).data[0];
                  const auto& wv = gg.value(width);
                  auto& gw = gg.grad(width);
                  const T inv_n = T(1) / T(voxels.size());
                  for (std::size_t i = 0; i < voxels.size(); ++i) {
                    double r = (double(wv.data[voxels[i]]) - gt_width[i]) / max_width;
                    gw.data[voxels[i]] += go * inv_n * T(2.0 * r / max_width);
                  }
                });
}

// ---------------------------------------------------------------------------
// Per-scene supervision batch: the sampled labels mapped to voxel indices.
// ---------------------------------------------------------------------------

struct SceneBatch {
  std::vector<std::size_t> voxels;         // all labeled voxels (positives first)
  std::vector<int> targets;                // quality 0/1
  std::vector<double> bce_weights;
  std::vector<std::size_t> pos_voxels;
  std::vector<UnitQuaternion> pos_rotations;
  std::vector<double> pos_widths;
  std::vector<Vec3> pos_positions;
  bool resampled_positives = false;
};

inline SceneBatch make_scene_batch(const SceneRecord& rec, const TrainConfig& tc, Rng& rng) {
  SceneBatch b;
  std::vector<std::size_t> pos_idx, neg_idx;
  for (std::size_t i = 0; i < rec.labels.size(); ++i)
    (rec.labels[i].quality ? pos_idx : neg_idx).push_back(i);

  std::vector<std::size_t> chosen_pos;
  if (int(pos_idx.size()) >= tc.positives_per_scene) {
    auto perm = rng.permutation(pos_idx.size());
    for (int i = 0; i < tc.positives_per_scene; ++i) chosen_pos.push_back(pos_idx[perm[i]]);
  } else if (!pos_idx.empty()) {
    b.resampled_positives = true;
    for (int i = 0; i < tc.positives_per_scene; ++i)
      chosen_pos.push_back(pos_idx[rng.uniform_int(pos_idx.size())]);
  }
  std::vector<std::size_t> chosen_neg;
  if (int(neg_idx.size()) >= tc.negatives_per_scene) {
    auto perm = rng.permutation(neg_idx.size());
    for (int i = 0; i < tc.negatives_per_scene; ++i) chosen_neg.push_back(neg_idx[perm[i]]);
  } else if (!neg_idx.empty()) {
    for (int i = 0; i < tc.negatives_per_scene; ++i)
      chosen_neg.push_back(neg_idx[rng.uniform_int(neg_idx.size())]);
  }

  const int n = rec.tsdf.resolution;
  const double vs = rec.tsdf.voxel_size;
  for (std::size_t li : chosen_pos) {
    const GraspLabel& l = rec.labels[li];
    std::size_t vx = nearest_voxel_index(l.position, n, vs);
    b.voxels.push_back(vx);
    b.targets.push_back(1);
    b.bce_weights.push_back(tc.pos_bce_weight);
    b.pos_voxels.push_back(vx);
    b.pos_rotations.push_back(l.rotation);
    b.pos_widths.push_back(l.width);
    b.pos_positions.push_back(l.position);
  }
  for (std::size_t li : chosen_neg) {
    const GraspLabel& l = rec.labels[li];
    b.voxels.push_back(nearest_voxel_index(l.position, n, vs));
    b.targets.push_back(0);
    b.bce_weights.push_back(tc.neg_bce_weight);
  }
  return b;
}

// row-wise stack of [R_i, C] matrices
template <typename T>
Var concat_rows(Graph<T>& g, const std::vector<Var>& parts) {
  const int C = g.value(parts.at(0)).dim(1);
  int rtotal = 0;
  bool rq = false;
  for (Var p : parts) {
    if (g.value(p).dim(1) != C) throw std::invalid_argument("concat_rows: column mismatch");
    rtotal += g.value(p).dim(0);
    rq = rq || g.needs(p);
  }
  Tensor<T> out({rtotal, C});
  std::size_t off = 0;
  for (Var p : parts) {
    const auto& v = g.value(p);
    std::copy(v.data.begin(), v.data.end(), out.data.begin() + off);
    off += v.data.size();
  }
  return g.make(std::move(out), rq, [parts](Graph<T>& gg, Var self) {
    const auto& go = gg.grad(self);
    std::size_t off = 0;
    for (Var p : parts) {
      std::size_t n = gg.value(p).data.size();
      if (gg.needs(p)) {
        auto& gp = gg.grad(p);
        for (std::size_t i = 0; i < n; ++i) gp.data[i] += go.data[off + i];
      }
      off += n;
    }
  });
}

// ---------------------------------------------------------------------------
// One optimization step over a batch of scenes.
// ---------------------------------------------------------------------------

struct StepMetrics {
  double lr = 0;
  double l_q = 0, l_rot = 0, l_w = 0, l_contrast = 0, l_total = 0;
  bool contrast_active = false;
  bool resampled_positives = false;
};

template <typename T>
Var total_loss(Graph<T>& g, Var l_grasp, Var l_contrast, double contrast_weight) {
  return g.axpby(l_grasp, 1.0, l_contrast, contrast_weight);
}

template <typename T>
StepMetrics train_step(GraspNet<T>& model, MemoryBank<T>& bank,
                       const std::vector<const SceneRecord*>& batch, const TrainConfig& tc,
                       std::int64_t step, std::int64_t total_steps, Rng& rng) {
  if (batch.empty()) throw std::invalid_argument("train_step: empty batch");
  StepMetrics met;
  Graph<T> g(&model.params);

  std::vector<Var> scene_lq, scene_lrot, scene_lw;
  std::vector<Var> z_parts;
  const double ws = batch[0]->tsdf.workspace_size();

  for (const SceneRecord* rec : batch) {
    SceneBatch sb = make_scene_batch(*rec, tc, rng);
    met.resampled_positives = met.resampled_positives || sb.resampled_positives;
    Var in = g.input(model.tsdf_to_tensor(rec->tsdf));
    auto f = model.forward(g, in);
    scene_lq.push_back(bce_logits_at(g, f.quality_logits, sb.voxels, sb.targets, sb.bce_weights));
    scene_lrot.push_back(rotation_loss_at(g, f.rotation, sb.pos_voxels, sb.pos_rotations));
    scene_lw.push_back(width_loss_at(g, f.width, sb.pos_voxels, sb.pos_widths, model.cfg.max_width));
    if (tc.contrast_weight > 0 && !sb.pos_positions.empty())
      z_parts.push_back(extract_positive_embeddings(g, f, sb.pos_positions, ws));
  }

  Var l_q = g.mean_scalars(scene_lq);
  Var l_rot = g.mean_scalars(scene_lrot);
  Var l_w = g.mean_scalars(scene_lw);
  // L_grasp = L_q + mean over positives of (L_rot + width_coeff * L_w)
  Var l_grasp = g.add(l_q, g.axpby(l_rot, 1.0, l_w, tc.width_loss_coeff));

  Var z = -1, l_contrast = -1;
  if (!z_parts.empty()) {
    Var x = z_parts.size() == 1 ? z_parts[0] : concat_rows(g, z_parts);
    z = project_embeddings(g, x);
    if (bank.ready()) {
      l_contrast = contrastive_loss(g, z, bank);
      met.contrast_active = true;
    }
  }
  Var total = met.contrast_active ? total_loss(g, l_grasp, l_contrast, tc.contrast_weight) : l_grasp;

  model.params.zero_grad();
  g.backward(total);
  met.lr = one_cycle_lr(step, total_steps, tc.lr_init, tc.lr_max, tc.warmup_frac, tc.final_lr_div);
  model.params.adam_step(met.lr);

  // the bank is queried before this step's embeddings enter it
  if (z >= 0) bank_update(bank, g.value(z));

  met.l_q = double(g.value(l_q).data[0]);
  met.l_rot = double(g.value(l_rot).data[0]);
  met.l_w = double(g.value(l_w).data[0]);
  met.l_contrast = met.contrast_active ? double(g.value(l_contrast).data[0]) : 0.0;
  met.l_total = double(g.value(total).data[0]);
  return met;
}

// ---------------------------------------------------------------------------
// Validation metrics over held-out scenes (all labels, inference path).
// ---------------------------------------------------------------------------

struct ValMetrics {
  double bce = 0;
  double quality_accuracy = 0;
  double rotation_loss = 0;
  std::int64_t labels = 0, positives = 0;
};

template <typename T>
ValMetrics validate(const GraspNet<T>& model, const std::vector<const SceneRecord*>& scenes,
                    const TrainConfig& tc) {
  ValMetrics m;
  double bce_sum = 0, rot_sum = 0;
  std::int64_t correct = 0;
  for (const SceneRecord* rec : scenes) {
    GraspPrediction pred = model.predict(rec->tsdf);
    const int n = rec->tsdf.resolution;
    const double vs = rec->tsdf.voxel_size;
    const std::size_t nv = pred.num_voxels();
    for (const GraspLabel& l : rec->labels) {
      std::size_t vx = nearest_voxel_index(l.position, n, vs);
      double q = std::clamp(double(pred.quality[vx]), 1e-7, 1.0 - 1e-7);
      double w = l.quality ? tc.pos_bce_weight : tc.neg_bce_weight;
      bce_sum += w * -(l.quality * std::log(q) + (1 - l.quality) * std::log(1.0 - q));
      correct += (q >= 0.5) == (l.quality == 1);
      ++m.labels;
      if (l.quality) {
        double da = 0, db = 0;
        UnitQuaternion rolled = roll_pi(l.rotation);
        const double a[4] = {l.rotation.w, l.rotation.x, l.rotation.y, l.rotation.z};
        const double b[4] = {rolled.w, rolled.x, rolled.y, rolled.z};
        for (int c = 0; c < 4; ++c) {
          double qc = double(pred.rotation[std::size_t(c) * nv + vx]);
          da += qc * a[c];
          db += qc * b[c];
        }
        rot_sum += 1.0 - std::max(std::abs(da), std::abs(db));
        ++m.positives;
      }
    }
  }
  if (m.labels) {
    m.bce = bce_sum / double(m.labels);
    m.quality_accuracy = double(correct) / double(m.labels);
  }
  if (m.positives) m.rotation_loss = rot_sum / double(m.positives);
  return m;
}

// ---------------------------------------------------------------------------
// Epoch loop with metrics CSV, per-epoch checkpoints and best-by-validation
// retention. Shuffling and label sampling are seeded from (seed, epoch,
// iteration), so a run resumed from an epoch checkpoint continues exactly.
// ---------------------------------------------------------------------------

struct TrainResult {
  std::string last_checkpoint, best_checkpoint;
  int best_epoch = -1;
  double best_val_bce = 0;
  std::int64_t steps_run = 0;
};

template <typename T>
TrainResult train(GraspNet<T>& model, const std::vector<SceneRecord>& records,
                  const TrainConfig& tc, const std::string& out_dir,
                  const std::function<void(const std::string&)>& log = {},
                  int resume_epoch = 0) {
  tc.validate();
  if (records.empty()) throw std::invalid_argument("train: empty dataset");
  std::filesystem::create_directories(out_dir);

  std::size_t val_n = validation_count(records.size());
  std::size_t train_n = records.size() - val_n;
  if (train_n == 0) throw std::invalid_argument("train: no training scenes after split");
  std::vector<const SceneRecord*> val_scenes;
  for (std::size_t i = train_n; i < records.size(); ++i) val_scenes.push_back(&records[i]);

  MemoryBank<T> bank(tc.bank_capacity, tc.embed_dim);
  std::int64_t steps_per_epoch =
      std::int64_t((train_n + tc.scenes_per_iter - 1) / tc.scenes_per_iter);
  std::int64_t total_steps = steps_per_epoch * tc.epochs;

  std::string metrics_path = out_dir + "/metrics.csv";
  bool fresh = resume_epoch == 0;
  std::ofstream metrics(metrics_path, fresh ? std::ios::trunc : std::ios::app);
  if (!metrics) throw io_error(metrics_path, "cannot open for writing");
  if (fresh) metrics << "step,lr,l_q,l_rot,l_w,l_contrast,l_total\n";
  std::string val_path = out_dir + "/val_metrics.csv";
  std::ofstream val_csv(val_path, fresh ? std::ios::trunc : std::ios::app);
  if (fresh) val_csv << "epoch,val_bce,val_quality_accuracy,val_rotation_loss\n";

  TrainResult result;
  result.best_val_bce = std::numeric_limits<double>::infinity();
  std::int64_t step = std::int64_t(resume_epoch) * steps_per_epoch;

  for (int epoch = resume_epoch; epoch < tc.epochs; ++epoch) {
    Rng shuffle_rng(tc.seed, splitmix64(0x5351 /*shuffle*/) ^ std::uint64_t(epoch));
    auto perm = shuffle_rng.permutation(train_n);
    for (std::int64_t it = 0; it < steps_per_epoch; ++it) {
      std::vector<const SceneRecord*> batch;
      for (int s = 0; s < tc.scenes_per_iter; ++s) {
        std::size_t idx = std::size_t(it) * tc.scenes_per_iter + s;
        if (idx >= train_n) break;
        batch.push_back(&records[perm[idx]]);
      }
      Rng step_rng(tc.seed, splitmix64(std::uint64_t(epoch) << 20) ^ std::uint64_t(it));
      StepMetrics met = train_step(model, bank, batch, tc, step, total_steps, step_rng);
      metrics << step << ',' << met.lr << ',' << met.l_q << ',' << met.l_rot << ',' << met.l_w
              << ',' << met.l_contrast << ',' << met.l_total << '\n';
      ++step;
      ++result.steps_run;
    }
    metrics.flush();

    ValMetrics vm;
    if (!val_scenes.empty()) vm = validate(model, val_scenes, tc);
    val_csv << epoch << ',' << vm.bce << ',' << vm.quality_accuracy << ',' << vm.rotation_loss
            << '\n';
    val_csv.flush();

    std::map<std::string, std::vector<float>> meta = {
        {"meta.epoch", {float(epoch + 1)}},
        {"meta.total_steps", {float(total_steps)}},
    };
    result.last_checkpoint = out_dir + "/ckpt_last.vgck";
    save_checkpoint(model.params, result.last_checkpoint, meta);
    if (val_scenes.empty() || vm.bce < result.best_val_bce) {
      result.best_val_bce = val_scenes.empty() ? 0.0 : vm.bce;
      result.best_epoch = epoch;
      result.best_checkpoint = out_dir + "/ckpt_best.vgck";
      save_checkpoint(model.params, result.best_checkpoint, meta);
    }
    if (log) {
      char buf[160];
      std::snprintf(buf, sizeof buf, "epoch %d/%d  val_bce=%.4f  val_acc=%.3f  val_rot=%.4f",
                    epoch + 1, tc.epochs, vm.bce, vm.quality_accuracy, vm.rotation_loss);
      log(buf);
    }
  }
  return result;
}

}  // namespace vg
