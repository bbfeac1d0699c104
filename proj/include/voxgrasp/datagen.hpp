#pragma once

#include <cinttypes>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include "voxgrasp/common.hpp"
#include "voxgrasp/geometry.hpp"
#include "voxgrasp/scene.hpp"
#include "voxgrasp/volume.hpp"

namespace vg {

// ---------------------------------------------------------------------------
// Grasp labels and per-scene records
// ---------------------------------------------------------------------------

struct GraspLabel {
  Vec3 position;            // workspace coordinates, meters
  UnitQuaternion rotation;
  double width = 0.0;       // meters
  int quality = 0;          // binary at label time

  bool operator==(const GraspLabel& o) const {
    return position.x == o.position.x && position.y == o.position.y && position.z == o.position.z &&
           rotation.w == o.rotation.w && rotation.x == o.rotation.x && rotation.y == o.rotation.y &&
           rotation.z == o.rotation.z && width == o.width && quality == o.quality;
  }
};

struct SceneRecord {
  TsdfGrid tsdf;
  std::vector<GraspLabel> labels;
  std::uint32_t scene_index = 0;
  std::uint64_t seed = 0;
  bool quota_incomplete = false;  // label budget ran out before both quotas

  int positive_count() const {
    int n = 0;
    for (const auto& l : labels) n += l.quality;
    return n;
  }
  int negative_count() const { return int(labels.size()) - positive_count(); }
};

// ---------------------------------------------------------------------------
// Candidate sampling: pick observed surface voxels, offset the grasp origin
// along the normal, then enumerate the semicircle of roll angles.
// ---------------------------------------------------------------------------

struct GraspCandidate {
  Pose pose;
  double width = 0.0;
};

inline std::vector<GraspCandidate> sample_candidates_from_surface(
    const std::vector<SurfacePoint>& surface, int count, Rng& rng, const GripperModel& gripper,
    int orientations_per_point = 6) {
  std::vector<GraspCandidate> out;
  if (surface.empty() || count < 1) return out;
  out.reserve(std::size_t(count) * orientations_per_point);
  for (int c = 0; c < count; ++c) {
    const SurfacePoint& sp = surface[rng.uniform_int(surface.size())];
    double offset = rng.uniform(-0.5 * gripper.finger_depth, 0.5 * gripper.finger_depth);
    Vec3 origin = sp.point + sp.normal * offset;
    for (const auto& q : semicircle_orientations(sp.normal, orientations_per_point))
      out.push_back({Pose{q, origin}, gripper.max_width});
  }
  return out;
}

inline std::vector<GraspCandidate> sample_candidates(const TsdfGrid& grid, int count, Rng& rng,
                                                     const GripperModel& gripper = {},
                                                     double band = 0.2) {
  auto surface = surface_points_normals(grid, band);
  return sample_candidates_from_surface(surface, count, rng, gripper);
}

// ---------------------------------------------------------------------------
// TSDF pre-pruning: drop candidates whose keypoints collide at the grasp or
// retracted pre-grasp pose. Survivor order is preserved.
// ---------------------------------------------------------------------------

struct PruneResult {
  std::vector<GraspCandidate> kept;
  std::vector<GraspCandidate> pruned;
};

inline bool candidate_collides(const TsdfGrid& grid, const GraspCandidate& cand,
                               const GripperModel& gripper, double threshold = 0.0) {
  auto kps = gripper_keypoints(cand.pose, gripper.max_width, gripper);
  if (keypoints_collide(grid, kps, threshold)) return true;
  Pose pregrasp{cand.pose.rotation,
                cand.pose.translation - rotate(cand.pose.rotation, {0, 0, 1}) * gripper.finger_depth};
  auto pre_kps = gripper_keypoints(pregrasp, gripper.max_width, gripper);
  return keypoints_collide(grid, pre_kps, threshold);
}

inline PruneResult prune_candidates(const TsdfGrid& grid, const std::vector<GraspCandidate>& cands,
                                    const GripperModel& gripper, double threshold = 0.0) {
  PruneResult r;
  r.kept.reserve(cands.size());
  for (const auto& c : cands)
    (candidate_collides(grid, c, gripper, threshold) ? r.pruned : r.kept).push_back(c);
  return r;
}

// ---------------------------------------------------------------------------
// Scene labeling: sample -> prune -> oracle until the positive/negative
// quotas are met or the trial budget runs out. Pruned candidates count as
// collision negatives while the negative quota is open; positives store the
// oracle's achieved contact width.
// ---------------------------------------------------------------------------

struct LabelConfig {
  int positives = 8;
  int negatives = 64;
  int trial_budget = 10000;     // candidates considered
  int picks_per_round = 32;     // surface picks per sampling round
  double surface_band = 0.2;
  double collision_threshold = 0.0;
};

struct LabelStats {
  std::int64_t candidates = 0;
  std::int64_t pruned = 0;
  std::int64_t oracle_calls = 0;
};

inline SceneRecord label_scene(const SdfScene& scene, TsdfGrid grid, const LabelConfig& lc,
                               const OracleConfig& oc, Rng& rng, const GripperModel& gripper = {},
                               LabelStats* stats = nullptr) {
  if (lc.positives < 1 || lc.negatives < 1)
    throw std::invalid_argument("label quotas must be >= 1");
  SceneRecord rec;
  rec.tsdf = std::move(grid);
  auto surface = surface_points_normals(rec.tsdf, lc.surface_band);
  // candidates anchor on object surfaces, not the support plane
  std::erase_if(surface, [&](const SurfacePoint& sp) {
    return sp.point.z <= scene.table_height + rec.tsdf.voxel_size;
  });

  int pos = 0, neg = 0;
  std::int64_t trials = 0;
  while (!surface.empty() && (pos < lc.positives || neg < lc.negatives) &&
         trials < lc.trial_budget) {
    auto cands = sample_candidates_from_surface(surface, lc.picks_per_round, rng, gripper);
    trials += std::int64_t(cands.size());
    if (stats) stats->candidates += std::int64_t(cands.size());
    for (const auto& cand : cands) {
      if (!rec.tsdf.inside_workspace(cand.pose.translation)) continue;
      if (candidate_collides(rec.tsdf, cand, gripper, lc.collision_threshold)) {
        if (stats) ++stats->pruned;
        if (neg < lc.negatives) {
          rec.labels.push_back({cand.pose.translation, cand.pose.rotation.canonicalized(),
                                cand.width, 0});
          ++neg;
        }
        continue;
      }
      GraspOutcome outcome = grasp_oracle(scene, cand.pose, gripper, oc.friction, oc);
      if (stats) ++stats->oracle_calls;
      if (outcome.success) {
        if (pos < lc.positives) {
          rec.labels.push_back({cand.pose.translation, cand.pose.rotation.canonicalized(),
                                outcome.achieved_width, 1});
          ++pos;
        }
      } else if (neg < lc.negatives) {
        rec.labels.push_back({cand.pose.translation, cand.pose.rotation.canonicalized(),
                              cand.width, 0});
        ++neg;
      }
      if (pos >= lc.positives && neg >= lc.negatives) break;
    }
  }
  rec.quota_incomplete = pos < lc.positives || neg < lc.negatives;
  return rec;
}

// ---------------------------------------------------------------------------
// Labels file: magic "VGLB", u32 version, u32 count, then per label
// 3x f32 position, 4x f32 quaternion (w,x,y,z), f32 width, u8 quality,
// and a trailing u32 CRC-32. Little-endian.
// ---------------------------------------------------------------------------

inline constexpr char kLabelsMagic[4] = {'V', 'G', 'L', 'B'};
inline constexpr std::uint32_t kLabelsVersion = 1;

inline void write_labels(const std::vector<GraspLabel>& labels, const std::string& path) {
  BinaryWriter w(path);
  w.bytes(kLabelsMagic, 4);
  w.u32(kLabelsVersion);
  w.u32(std::uint32_t(labels.size()));
  for (const auto& l : labels) {
    w.f32(float(l.position.x));
    w.f32(float(l.position.y));
    w.f32(float(l.position.z));
    w.f32(float(l.rotation.w));
    w.f32(float(l.rotation.x));
    w.f32(float(l.rotation.y));
    w.f32(float(l.rotation.z));
    w.f32(float(l.width));
    w.u8(std::uint8_t(l.quality));
  }
  w.finish_crc();
}

inline std::vector<GraspLabel> read_labels(const std::string& path) {
  BinaryReader r(path);
  r.expect_magic(kLabelsMagic);
  r.expect_version(kLabelsVersion);
  std::uint32_t count = r.u32();
  std::vector<GraspLabel> labels;
  labels.reserve(count);
  for (std::uint32_t i = 0; i < count; ++i) {
    GraspLabel l;
    l.position.x = r.f32();
    l.position.y = r.f32();
    l.position.z = r.f32();
    float qw = r.f32(), qx = r.f32(), qy = r.f32(), qz = r.f32();
    l.rotation = UnitQuaternion(qw, qx, qy, qz);
    l.width = r.f32();
    l.quality = r.u8();
    labels.push_back(l);
  }
  r.verify_crc();
  return labels;
}

// ---------------------------------------------------------------------------
// Dataset directory: scene_%06d.tsdf + scene_%06d.labels + manifest.txt
// ---------------------------------------------------------------------------

inline std::string scene_basename(std::uint32_t index) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "scene_%06u", index);
  return buf;
}

inline void write_dataset(const std::vector<SceneRecord>& records, const std::string& dir) {
  std::filesystem::create_directories(dir);
  std::ofstream manifest(dir + "/manifest.txt");
  if (!manifest) throw io_error(dir + "/manifest.txt", "cannot open for writing");
  manifest << "voxgrasp-dataset 1\n";
  manifest << "scenes " << records.size() << "\n";
  for (const auto& rec : records) {
    std::string base = scene_basename(rec.scene_index);
    write_tsdf(rec.tsdf, dir + "/" + base + ".tsdf");
    write_labels(rec.labels, dir + "/" + base + ".labels");
    manifest << base << " seed=" << rec.seed << " positives=" << rec.positive_count()
             << " negatives=" << rec.negative_count()
             << " incomplete=" << (rec.quota_incomplete ? 1 : 0) << "\n";
  }
  if (!manifest) throw io_error(dir + "/manifest.txt", "write failed");
}

inline std::vector<SceneRecord> read_dataset(const std::string& dir) {
  std::string mpath = dir + "/manifest.txt";
  std::ifstream manifest(mpath);
  if (!manifest) throw io_error(mpath, "cannot open for reading");
  std::string tag;
  int version = 0;
  if (!(manifest >> tag >> version) || tag != "voxgrasp-dataset")
    throw io_error(mpath, "bad magic");
  if (version != 1) throw io_error(mpath, "version mismatch");
  std::string scenes_tag;
  std::size_t count = 0;
  if (!(manifest >> scenes_tag >> count) || scenes_tag != "scenes")
    throw io_error(mpath, "malformed manifest");

  std::vector<SceneRecord> records(count);
  std::vector<std::string> bases(count);
  for (std::size_t i = 0; i < count; ++i) {
    std::string base, kv;
    if (!(manifest >> base)) throw io_error(mpath, "truncated file");
    bases[i] = base;
    for (int f = 0; f < 4; ++f) {
      if (!(manifest >> kv)) throw io_error(mpath, "truncated file");
      auto eq = kv.find('=');
      if (eq == std::string::npos) throw io_error(mpath, "malformed manifest entry: " + kv);
      std::string key = kv.substr(0, eq), val = kv.substr(eq + 1);
      if (key == "seed") records[i].seed = std::stoull(val);
      if (key == "incomplete") records[i].quota_incomplete = val == "1";
    }
    if (base.rfind("scene_", 0) == 0)
      records[i].scene_index = std::uint32_t(std::stoul(base.substr(6)));
  }
  parallel_for(count, [&](std::size_t b, std::size_t e) {
    for (std::size_t i = b; i < e; ++i) {
      records[i].tsdf = read_tsdf(dir + "/" + bases[i] + ".tsdf");
      records[i].labels = read_labels(dir + "/" + bases[i] + ".labels");
    }
  });
  return records;
}

// Index-based split mirroring the 5000/100 train/validation convention:
// the validation tail holds round(count * 100/5100) scenes (at least one
// when there are at least two).
inline std::size_t validation_count(std::size_t total) {
  if (total < 2) return 0;
  std::size_t v = std::size_t(std::llround(double(total) * 100.0 / 5100.0));
  return std::clamp<std::size_t>(v, 1, total - 1);
}

}  // namespace vg
