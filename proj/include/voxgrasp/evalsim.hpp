#pragma once

#include <cstdio>
#include <fstream>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "voxgrasp/common.hpp"
#include "voxgrasp/datagen.hpp"
#include "voxgrasp/network.hpp"
#include "voxgrasp/scene.hpp"
#include "voxgrasp/volume.hpp"

namespace vg {

// ---------------------------------------------------------------------------
// Grasp selection from a prediction volume: argmax quality over valid voxels,
// ties broken by the lowest linear index, none when everything is below the
// execution threshold.
// ---------------------------------------------------------------------------

struct SelectedGrasp {
  std::size_t voxel = 0;
  Pose pose;
  double width = 0.0;
  double quality = 0.0;
};

inline std::optional<SelectedGrasp> select_grasp(const GraspPrediction& pred,
                                                 const std::vector<std::uint8_t>& mask = {},
                                                 double q_min = 0.5) {
  const std::size_t nv = pred.num_voxels();
  if (!mask.empty() && mask.size() != nv)
    throw std::invalid_argument("select_grasp: mask size mismatch");
  std::size_t best = nv;
  float best_q = -1.0f;
  for (std::size_t v = 0; v < nv; ++v) {
    if (!mask.empty() && !mask[v]) continue;
    if (pred.quality[v] > best_q) {
      best_q = pred.quality[v];
      best = v;
    }
  }
  if (best == nv || double(best_q) < q_min) return std::nullopt;

  const int n = pred.resolution;
  int i = int(best % std::size_t(n));
  int j = int((best / std::size_t(n)) % std::size_t(n));
  int k = int(best / (std::size_t(n) * n));
  SelectedGrasp sel;
  sel.voxel = best;
  sel.quality = double(best_q);
  sel.width = double(pred.width[best]);
  sel.pose.translation = {(i + 0.5) * pred.voxel_size, (j + 0.5) * pred.voxel_size,
                          (k + 0.5) * pred.voxel_size};
  sel.pose.rotation = UnitQuaternion(pred.rotation[best], pred.rotation[nv + best],
                                     pred.rotation[2 * nv + best], pred.rotation[3 * nv + best]);
  return sel;
}

// ---------------------------------------------------------------------------
// Episodes. A planner maps the fused grid (and, for the harness-validation
// oracle planner, the live scene) to a grasp choice.
// ---------------------------------------------------------------------------

using Planner = std::function<std::optional<SelectedGrasp>(const TsdfGrid&, const SdfScene&)>;

inline std::size_t nearest_voxel(const TsdfGrid& grid, const Vec3& p) {
  const int n = grid.resolution;
  auto axis = [&](double c) { return std::clamp(int(std::floor(c / grid.voxel_size)), 0, n - 1); };
  return (std::size_t(axis(p.z)) * n + axis(p.y)) * n + axis(p.x);
}

template <typename T>
Planner network_planner(const GraspNet<T>& model, double q_min = 0.5) {
  return [&model, q_min](const TsdfGrid& grid, const SdfScene&) {
    return select_grasp(model.predict(grid), {}, q_min);
  };
}

// Bypasses any model: samples candidates from the fused grid, prunes, and
// returns the first grasp the oracle accepts. Used to validate the harness
// (a perfect planner must clear graspable scenes).
inline Planner oracle_planner(const GripperModel& gripper, const OracleConfig& oc,
                              std::uint64_t seed, int surface_picks = 400) {
  return [gripper, oc, seed, surface_picks](const TsdfGrid& grid,
                                            const SdfScene& scene) -> std::optional<SelectedGrasp> {
    Rng rng(seed, 0xBEEF ^ std::uint64_t(scene.objects.size()));
    auto surface = surface_points_normals(grid);
    std::erase_if(surface, [&](const SurfacePoint& sp) {
      return sp.point.z <= scene.table_height + grid.voxel_size;
    });
    auto cands = sample_candidates_from_surface(surface, surface_picks, rng, gripper);
    for (const auto& cand : cands) {
      if (!grid.inside_workspace(cand.pose.translation)) continue;
      if (candidate_collides(grid, cand, gripper)) continue;
      GraspOutcome out = grasp_oracle(scene, cand.pose, gripper, oc.friction, oc);
      if (out.success) {
        SelectedGrasp sel;
        sel.voxel = nearest_voxel(grid, cand.pose.translation);
        sel.pose = cand.pose;
        sel.width = out.achieved_width;
        sel.quality = 1.0;
        return sel;
      }
    }
    return std::nullopt;
  };
}

enum class Termination { cleared, consecutive_failures, no_prediction };

inline const char* termination_name(Termination t) {
  switch (t) {
    case Termination::cleared: return "cleared";
    case Termination::consecutive_failures: return "consecutive_failures";
    case Termination::no_prediction: return "no_prediction";
  }
  return "?";
}

struct AttemptLog {
  int attempt = 0;
  std::size_t voxel = 0;
  UnitQuaternion rotation;
  double width = 0, quality = 0;
  bool success = false;
  std::optional<FailureReason> reason;
};

struct EpisodeResult {
  int attempts = 0, successes = 0;
  int objects_initial = 0, objects_remaining = 0;
  Termination termination = Termination::no_prediction;
  std::vector<AttemptLog> log;
};

struct EpisodeConfig {
  FuseConfig fuse;
  std::vector<Camera> cameras;
  GripperModel gripper;
  OracleConfig oracle;
  int consecutive_failure_limit = 1;  // 1 single-object, 2 multi-object
  int max_attempts = 64;              // hard stop for degenerate loops
};

// Closed loop: render + fuse, plan, execute against the oracle, remove the
// grasped object on success; stop on cleared workspace, failed prediction,
// or the consecutive-failure limit.
inline EpisodeResult run_episode(SdfScene scene, const Planner& planner,
                                 const EpisodeConfig& cfg) {
  EpisodeResult res;
  res.objects_initial = int(scene.objects.size());
  int fails_in_row = 0;
  while (true) {
    if (scene.objects.empty()) {
      res.termination = Termination::cleared;
      break;
    }
    std::vector<DepthImage> views;
    views.reserve(cfg.cameras.size());
    for (const Camera& cam : cfg.cameras) views.push_back(render_depth(scene, cam));
    TsdfGrid grid = tsdf_fuse(views, cfg.fuse);

    auto sel = planner(grid, scene);
    if (!sel) {
      res.termination = Termination::no_prediction;
      break;
    }
    GraspOutcome out = grasp_oracle(scene, sel->pose, cfg.gripper, cfg.oracle.friction, cfg.oracle);
    ++res.attempts;
    res.log.push_back({res.attempts, sel->voxel, sel->pose.rotation.canonicalized(), sel->width,
                       sel->quality, out.success, out.failure_reason});
    if (out.success) {
      ++res.successes;
      fails_in_row = 0;
      if (out.object_index >= 0)
        scene.objects.erase(scene.objects.begin() + out.object_index);
    } else if (++fails_in_row >= cfg.consecutive_failure_limit) {
      res.termination = Termination::consecutive_failures;
      break;
    }
    if (res.attempts >= cfg.max_attempts) {
      res.termination = Termination::consecutive_failures;
      break;
    }
  }
  res.objects_remaining = int(scene.objects.size());
  return res;
}

// ---------------------------------------------------------------------------
// Aggregate metrics
// ---------------------------------------------------------------------------

struct EvalMetrics {
  std::optional<double> success_rate;  // empty when no grasps were attempted
  double declutter_rate = 0.0;
  std::int64_t successes = 0, attempts = 0, removed = 0, initial = 0;
};

inline EvalMetrics eval_metrics(const std::vector<EpisodeResult>& episodes) {
  if (episodes.empty()) throw std::invalid_argument("eval_metrics: need at least one episode");
  EvalMetrics m;
  for (const auto& e : episodes) {
    m.successes += e.successes;
    m.attempts += e.attempts;
    m.removed += e.objects_initial - e.objects_remaining;
    m.initial += e.objects_initial;
  }
  if (m.attempts > 0) m.success_rate = double(m.successes) / double(m.attempts);
  m.declutter_rate = m.initial > 0 ? double(m.removed) / double(m.initial) : 0.0;
  return m;
}

// ---------------------------------------------------------------------------
// Episode CSV log
// ---------------------------------------------------------------------------

inline void write_episode_csv(const std::vector<EpisodeResult>& episodes, const std::string& path) {
  std::ofstream f(path);
  if (!f) throw io_error(path, "cannot open for writing");
  f << "episode,attempt,voxel,qx qy qz qw,width,quality,success,reason\n";
  char buf[256];
  for (std::size_t e = 0; e < episodes.size(); ++e) {
    for (const auto& a : episodes[e].log) {
      std::snprintf(buf, sizeof buf, "%zu,%d,%zu,%.9g %.9g %.9g %.9g,%.9g,%.9g,%d,%s\n", e,
                    a.attempt, a.voxel, a.rotation.x, a.rotation.y, a.rotation.z, a.rotation.w,
                    a.width, a.quality, a.success ? 1 : 0,
                    a.reason ? failure_reason_name(*a.reason) : "");
      f << buf;
    }
  }
  if (!f) throw io_error(path, "write failed");
}

// ---------------------------------------------------------------------------
// OFF export of the gripper keypoint skeleton (thin ribbons along the wrist
// stem, the base crossbar, and both fingers).
// ---------------------------------------------------------------------------

inline void write_gripper_off(const Pose& pose, double width, const GripperModel& model,
                              const std::string& path) {
  auto kp = gripper_keypoints(pose, width, model);
  // segments: wrist->origin, base- -> base+, base->tip per finger
  const Vec3 origin = pose.translation;
  std::vector<std::pair<Vec3, Vec3>> segments = {
      {kp[0], origin}, {kp[1], kp[2]}, {kp[1], kp[3]}, {kp[2], kp[4]}};
  const Vec3 normal = rotate(pose.rotation, {0, 1, 0}) * 0.0015;

  std::ofstream f(path);
  if (!f) throw io_error(path, "cannot open for writing");
  f << "OFF\n" << segments.size() * 4 << " " << segments.size() * 2 << " 0\n";
  char buf[160];
  for (const auto& [a, b] : segments) {
    for (const Vec3& v : {a - normal, a + normal, b + normal, b - normal}) {
      std::snprintf(buf, sizeof buf, "%.6f %.6f %.6f\n", v.x, v.y, v.z);
      f << buf;
    }
  }
  for (std::size_t s = 0; s < segments.size(); ++s) {
    std::size_t b = 4 * s;
    f << "3 " << b << " " << b + 1 << " " << b + 2 << "\n";
    f << "3 " << b << " " << b + 2 << " " << b + 3 << "\n";
  }
  if (!f) throw io_error(path, "write failed");
}

}  // namespace vg
