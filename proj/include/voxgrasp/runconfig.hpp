#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "voxgrasp/network.hpp"
#include "voxgrasp/scene.hpp"
#include "voxgrasp/training.hpp"
#include "voxgrasp/volume.hpp"

namespace vg {

// ---------------------------------------------------------------------------
// One flat configuration mirrored by the CLI: defaults here are the
// full-scale protocol values; commands override via config file and flags.
// ---------------------------------------------------------------------------

struct RunConfig {
  // grid / workspace
  int grid_resolution = 80;
  double workspace_size = 0.4;
  double truncation = 0.0;  // 0 = 4 * voxel_size

  // gripper
  double gripper_max_width = 0.08;
  double gripper_finger_depth = 0.05;

  // scene generation
  double table_height = 0.05;
  int objects_per_scene = 10;
  double scale_lo = 0.65;
  double scale_hi = 1.7;
  bool compound_objects = true;

  // fusion camera ring
  int camera_count = 6;
  double camera_elevation_deg = 45.0;
  double camera_radius_scale = 1.5;
  int image_width = 320;
  int image_height = 240;
  double focal_length = 230.0;

  // grasp oracle
  double friction = 0.4;
  double keypoint_clearance = 0.002;

  // labeling quotas
  int label_positives = 8;
  int label_negatives = 64;
  int label_budget = 10000;

  // model
  int c1 = 32, c2 = 64, c3 = 128;
  int mos_parts = 2;
  int reduction = 4;

  // training
  int epochs = 100;
  int scenes_per_iter = 4;
  int train_positives = 8;
  int train_negatives = 16;
  double pos_bce_weight = 2.0;
  double neg_bce_weight = 1.0;
  double contrast_weight = 0.5;
  double width_loss_coeff = 0.1;
  double lr_init = 4e-5;
  double lr_max = 4e-4;
  double warmup_frac = 0.3;
  double final_lr_div = 25.0;
  int bank_capacity = 32768;
  int embed_dim = 128;
  int proj_hidden = 128;

  // evaluation
  double quality_threshold = 0.5;
  int failure_limit_single = 1;
  int failure_limit_multi = 2;

  std::uint64_t seed = 1;

  // ---- derived views ----

  FuseConfig fuse_config() const {
    FuseConfig f;
    f.resolution = grid_resolution;
    f.workspace_size = workspace_size;
    f.truncation = truncation;
    return f;
  }

  GripperModel gripper() const { return {gripper_max_width, gripper_finger_depth}; }

  SceneGenConfig scene_config() const {
    SceneGenConfig c;
    c.workspace_size = workspace_size;
    c.table_height = table_height;
    c.gripper_width = gripper_max_width;
    c.include_compound = compound_objects;
    return c;
  }

  OracleConfig oracle_config() const {
    OracleConfig c;
    c.friction = friction;
    c.keypoint_clearance = keypoint_clearance;
    return c;
  }

  CameraIntrinsics intrinsics() const {
    CameraIntrinsics in;
    in.width = image_width;
    in.height = image_height;
    in.fx = in.fy = focal_length;
    in.cx = (image_width - 1) / 2.0;
    in.cy = (image_height - 1) / 2.0;
    return in;
  }

  std::vector<Camera> camera_ring() const {
    return make_camera_ring(workspace_size, camera_count, camera_elevation_deg,
                            camera_radius_scale, intrinsics());
  }

  ModelConfig model_config(int resolution = 0) const {
    ModelConfig m;
    m.grid_resolution = resolution > 0 ? resolution : grid_resolution;
    m.c1 = c1;
    m.c2 = c2;
    m.c3 = c3;
    m.mos_parts = mos_parts;
    m.reduction = reduction;
    m.max_width = gripper_max_width;
    m.init_seed = seed;
    return m;
  }

  TrainConfig train_config() const {
    TrainConfig t;
    t.scenes_per_iter = scenes_per_iter;
    t.positives_per_scene = train_positives;
    t.negatives_per_scene = train_negatives;
    t.pos_bce_weight = pos_bce_weight;
    t.neg_bce_weight = neg_bce_weight;
    t.contrast_weight = contrast_weight;
    t.width_loss_coeff = width_loss_coeff;
    t.epochs = epochs;
    t.lr_init = lr_init;
    t.lr_max = lr_max;
    t.warmup_frac = warmup_frac;
    t.final_lr_div = final_lr_div;
    t.seed = seed;
    t.bank_capacity = bank_capacity;
    t.embed_dim = embed_dim;
    t.proj_hidden = proj_hidden;
    return t;
  }

  LabelConfig label_config() const {
    LabelConfig l;
    l.positives = label_positives;
    l.negatives = label_negatives;
    l.trial_budget = label_budget;
    return l;
  }
};

}  // namespace vg
