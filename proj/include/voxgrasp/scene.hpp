#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "voxgrasp/common.hpp"
#include "voxgrasp/geometry.hpp"
#include "voxgrasp/volume.hpp"

namespace vg {

// ---------------------------------------------------------------------------
// Signed distance primitives. Parameters are in meters; all primitives are
// centered at the local origin with z as the symmetry axis.
// ---------------------------------------------------------------------------

enum class PrimitiveKind { sphere, box, cylinder, capsule };

inline const char* primitive_kind_name(PrimitiveKind k) {
  switch (k) {
    case PrimitiveKind::sphere: return "sphere";
    case PrimitiveKind::box: return "box";
    case PrimitiveKind::cylinder: return "cylinder";
    case PrimitiveKind::capsule: return "capsule";
  }
  return "?";
}

inline PrimitiveKind primitive_kind_from_name(const std::string& s) {
  if (s == "sphere") return PrimitiveKind::sphere;
  if (s == "box") return PrimitiveKind::box;
  if (s == "cylinder") return PrimitiveKind::cylinder;
  if (s == "capsule") return PrimitiveKind::capsule;
  throw std::invalid_argument("unknown primitive kind: " + s);
}

// sphere: params[0]=radius. box: half extents in params[0..2].
// cylinder: radius, half height. capsule: radius, half length of the core segment.
inline double primitive_sdf(PrimitiveKind kind, const std::array<double, 4>& prm, const Vec3& p) {
  switch (kind) {
    case PrimitiveKind::sphere:
      return p.norm() - prm[0];
    case PrimitiveKind::box: {
      Vec3 d{std::abs(p.x) - prm[0], std::abs(p.y) - prm[1], std::abs(p.z) - prm[2]};
      double inside = std::min(std::max(d.x, std::max(d.y, d.z)), 0.0);
      Vec3 dp{std::max(d.x, 0.0), std::max(d.y, 0.0), std::max(d.z, 0.0)};
      return inside + dp.norm();
    }
    case PrimitiveKind::cylinder: {
      double dr = std::hypot(p.x, p.y) - prm[0];
      double dz = std::abs(p.z) - prm[1];
      double inside = std::min(std::max(dr, dz), 0.0);
      double ox = std::max(dr, 0.0), oz = std::max(dz, 0.0);
      return inside + std::hypot(ox, oz);
    }
    case PrimitiveKind::capsule: {
      double cz = std::clamp(p.z, -prm[1], prm[1]);
      return Vec3{p.x, p.y, p.z - cz}.norm() - prm[0];
    }
  }
  return 1e30;
}

inline double primitive_bounding_radius(PrimitiveKind kind, const std::array<double, 4>& prm) {
  switch (kind) {
    case PrimitiveKind::sphere: return prm[0];
    case PrimitiveKind::box: return Vec3{prm[0], prm[1], prm[2]}.norm();
    case PrimitiveKind::cylinder: return std::hypot(prm[0], prm[1]);
    case PrimitiveKind::capsule: return prm[0] + prm[1];
  }
  return 0.0;
}

// One rigid part of a scene object; `offset` is in the object's nominal
// (pre-scale) frame so compositions scale as a whole.
struct PrimitivePart {
  PrimitiveKind kind = PrimitiveKind::sphere;
  std::array<double, 4> params{};
  Vec3 offset;
};

// ---------------------------------------------------------------------------
// Scene object: a union of one or two primitive parts under a uniform scale
// and a rigid pose. Uniform scaling keeps the SDF exact.
// ---------------------------------------------------------------------------

struct SceneObject {
  std::vector<PrimitivePart> parts;
  Pose pose;
  double scale = 1.0;

  double sdf_local_scaled(const Vec3& q) const {
    double best = 1e30;
    for (const auto& part : parts) {
      Vec3 v = q / scale - part.offset;
      best = std::min(best, primitive_sdf(part.kind, part.params, v));
    }
    return best * scale;
  }

  double sdf(const Vec3& p) const { return sdf_local_scaled(pose.inverse().apply(p)); }

  double bounding_radius() const {
    double r = 0.0;
    for (const auto& part : parts)
      r = std::max(r, part.offset.norm() + primitive_bounding_radius(part.kind, part.params));
    return r * scale;
  }
};

// ---------------------------------------------------------------------------
// SdfScene: objects on a table half-space inside the workspace cube.
// ---------------------------------------------------------------------------

struct SdfScene {
  std::vector<SceneObject> objects;
  double table_height = 0.05;
  double workspace_size = 0.4;
  bool placement_truncated = false;

  double sdf(const Vec3& p) const {
    double best = p.z - table_height;
    for (const auto& o : objects) best = std::min(best, o.sdf(p));
    return best;
  }

  // Outward surface normal from central differences.
  Vec3 normal(const Vec3& p, double h = 1e-5) const {
    Vec3 g{sdf({p.x + h, p.y, p.z}) - sdf({p.x - h, p.y, p.z}),
           sdf({p.x, p.y + h, p.z}) - sdf({p.x, p.y - h, p.z}),
           sdf({p.x, p.y, p.z + h}) - sdf({p.x, p.y, p.z - h})};
    double n = g.norm();
    return n > 0.0 ? g / n : Vec3{0, 0, 1};
  }

  // Index of the object closest to p (table excluded), -1 when empty.
  int nearest_object(const Vec3& p) const {
    int best = -1;
    double bd = 1e30;
    for (std::size_t i = 0; i < objects.size(); ++i) {
      double d = std::abs(objects[i].sdf(p));
      if (d < bd) {
        bd = d;
        best = int(i);
      }
    }
    return best;
  }
};

// ---------------------------------------------------------------------------
// Surface sample points (object-local, scaled frame), used for settling and
// resting-height queries. Directions are a fixed spherical Fibonacci set so
// generation is deterministic.
// ---------------------------------------------------------------------------

inline std::vector<Vec3> object_surface_samples(const SceneObject& obj, int count = 96) {
  std::vector<Vec3> out;
  out.reserve(std::size_t(count));
  double r_max = obj.bounding_radius() * 1.01;
  const double golden = M_PI * (3.0 - std::sqrt(5.0));
  for (int i = 0; i < count; ++i) {
    double zc = 1.0 - 2.0 * (i + 0.5) / count;
    double rc = std::sqrt(std::max(0.0, 1.0 - zc * zc));
    double th = golden * i;
    Vec3 dir{rc * std::cos(th), rc * std::sin(th), zc};
    // coarse march out of the object, then bisect the crossing
    double lo = 0.0, hi = r_max;
    if (obj.sdf_local_scaled(dir * hi) <= 0.0) continue;  // should not happen
    double t = 0.0;
    bool found = false;
    const int kCoarse = 64;
    double prev = obj.sdf_local_scaled(Vec3{0, 0, 0});
    for (int s = 1; s <= kCoarse; ++s) {
      double tc = r_max * s / kCoarse;
      double f = obj.sdf_local_scaled(dir * tc);
      if (prev <= 0.0 && f > 0.0) {
        lo = r_max * (s - 1) / kCoarse;
        hi = tc;
        found = true;
        break;
      }
      prev = f;
    }
    if (!found) continue;
    for (int it = 0; it < 30; ++it) {
      t = 0.5 * (lo + hi);
      (obj.sdf_local_scaled(dir * t) <= 0.0 ? lo : hi) = t;
    }
    out.push_back(dir * t);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Procedural scene generation
// ---------------------------------------------------------------------------

enum class SceneKind { single, pile, packed };

inline SceneKind scene_kind_from_name(const std::string& s) {
  if (s == "single") return SceneKind::single;
  if (s == "pile") return SceneKind::pile;
  if (s == "packed") return SceneKind::packed;
  throw std::invalid_argument("unknown scene kind: " + s);
}

struct SceneGenConfig {
  double workspace_size = 0.4;
  double table_height = 0.05;
  double gripper_width = 0.08;  // primitives are sized relative to this
  bool include_compound = true; // union objects with a graspable protrusion
  int max_placement_rejections = 1000;
};

namespace detail {

inline UnitQuaternion random_quaternion(Rng& rng) {
  double u1 = rng.uniform(), u2 = rng.uniform(), u3 = rng.uniform();
  double a = std::sqrt(1.0 - u1), b = std::sqrt(u1);
  return UnitQuaternion(a * std::sin(2 * M_PI * u2), a * std::cos(2 * M_PI * u2),
                        b * std::sin(2 * M_PI * u3), b * std::cos(2 * M_PI * u3));
}

inline SceneObject random_object(Rng& rng, double scale, const SceneGenConfig& cfg) {
  const double w = cfg.gripper_width;
  SceneObject obj;
  obj.scale = scale;
  int kinds = cfg.include_compound ? 5 : 4;
  switch (rng.uniform_int(std::uint64_t(kinds))) {
    case 0:
      obj.parts.push_back({PrimitiveKind::sphere, {rng.uniform(0.30, 0.50) * w}, {}});
      break;
    case 1:
      obj.parts.push_back({PrimitiveKind::box,
                           {rng.uniform(0.25, 0.50) * w, rng.uniform(0.25, 0.50) * w,
                            rng.uniform(0.25, 0.50) * w},
                           {}});
      break;
    case 2:
      obj.parts.push_back(
          {PrimitiveKind::cylinder, {rng.uniform(0.25, 0.45) * w, rng.uniform(0.30, 0.60) * w}, {}});
      break;
    case 3:
      obj.parts.push_back(
          {PrimitiveKind::capsule, {rng.uniform(0.20, 0.35) * w, rng.uniform(0.25, 0.50) * w}, {}});
      break;
    default: {
      // wide body with a narrow stud on top: pinch-graspable even when the
      // body exceeds the gripper opening
      double hx = rng.uniform(0.50, 0.80) * w;
      double hy = rng.uniform(0.50, 0.80) * w;
      double hz = rng.uniform(0.20, 0.35) * w;
      double cr = rng.uniform(0.12, 0.20) * w;
      double cl = rng.uniform(0.25, 0.40) * w;
      obj.parts.push_back({PrimitiveKind::box, {hx, hy, hz}, {}});
      obj.parts.push_back({PrimitiveKind::capsule, {cr, cl}, Vec3{0, 0, hz + cl}});
      break;
    }
  }
  return obj;
}

struct PlacedObject {
  SceneObject obj;
  std::vector<Vec3> local_samples;

  double min_world_z() const {
    double mz = 1e30;
    for (const auto& s : local_samples) mz = std::min(mz, obj.pose.apply(s).z);
    return mz;
  }
};

// max penetration of a's surface samples into b (> 0 means overlap)
inline double penetration(const PlacedObject& a, const PlacedObject& b) {
  double pen = 0.0;
  for (const auto& s : a.local_samples) pen = std::max(pen, -b.obj.sdf(a.obj.pose.apply(s)));
  return pen;
}

inline double pair_overlap(const PlacedObject& a, const PlacedObject& b) {
  // skip the expensive sample scan when bounding spheres are disjoint
  double gap = (a.obj.pose.translation - b.obj.pose.translation).norm() -
               a.obj.bounding_radius() - b.obj.bounding_radius();
  if (gap > 0.0) return 0.0;
  return std::max(penetration(a, b), penetration(b, a));
}

inline void clamp_into_workspace(PlacedObject& p, double ws) {
  double r = p.obj.bounding_radius();
  Vec3& t = p.obj.pose.translation;
  t.x = std::clamp(t.x, r, ws - r);
  t.y = std::clamp(t.y, r, ws - r);
  t.z = std::clamp(t.z, r, ws - r);
}

// Iterative penetration resolution plus settling under "gravity", run until
// pairwise overlap is below 1 mm and nothing can descend further.
inline void settle(std::vector<PlacedObject>& placed, const SceneGenConfig& cfg) {
  const double kOverlapTol = 1e-3;
  const int kIters = 300;
  for (int iter = 0; iter < kIters; ++iter) {
    bool changed = false;
    for (std::size_t i = 0; i < placed.size(); ++i) {
      for (std::size_t j = i + 1; j < placed.size(); ++j) {
        double p = pair_overlap(placed[i], placed[j]);
        if (p > kOverlapTol) {
          Vec3 d = placed[i].obj.pose.translation - placed[j].obj.pose.translation;
          if (d.norm() < 1e-9) d = Vec3{1, 0, 0};
          d = d / d.norm();
          double shift = 0.5 * p + 2.5e-4;
          placed[i].obj.pose.translation += d * shift;
          placed[j].obj.pose.translation -= d * shift;
          clamp_into_workspace(placed[i], cfg.workspace_size);
          clamp_into_workspace(placed[j], cfg.workspace_size);
          changed = true;
        }
      }
    }
    for (auto& p : placed) {
      double below = cfg.table_height - p.min_world_z();
      if (below > 1e-4) {
        p.obj.pose.translation.z += below;
        clamp_into_workspace(p, cfg.workspace_size);
        changed = true;
      }
    }
    for (std::size_t i = 0; i < placed.size(); ++i) {
      double gap = placed[i].min_world_z() - cfg.table_height;
      if (gap > 1e-4) {
        double drop = std::min(gap, 0.004);
        placed[i].obj.pose.translation.z -= drop;
        bool bad = false;
        for (std::size_t j = 0; j < placed.size() && !bad; ++j)
          if (j != i && pair_overlap(placed[i], placed[j]) > 0.5 * kOverlapTol) bad = true;
        if (bad)
          placed[i].obj.pose.translation.z += drop;
        else
          changed = true;
      }
    }
    if (!changed) break;
  }
}

}  // namespace detail

inline SdfScene make_scene(SceneKind kind, int object_count, double scale_lo, double scale_hi,
                           std::uint64_t seed, const SceneGenConfig& cfg = {}) {
  if (object_count < 1) throw std::invalid_argument("object_count must be >= 1");
  if (!(scale_lo > 0.0 && scale_lo <= scale_hi))
    throw std::invalid_argument("scale range must satisfy 0 < lo <= hi");
  Rng rng(seed);
  SdfScene scene;
  scene.workspace_size = cfg.workspace_size;
  scene.table_height = cfg.table_height;

  const double ws = cfg.workspace_size;
  if (kind == SceneKind::single) object_count = 1;

  std::vector<detail::PlacedObject> placed;
  if (kind == SceneKind::single || kind == SceneKind::packed) {
    for (int i = 0; i < object_count; ++i) {
      detail::PlacedObject p;
      p.obj = detail::random_object(rng, rng.uniform(scale_lo, scale_hi), cfg);
      p.obj.pose.rotation =
          UnitQuaternion::from_axis_angle({0, 0, 1}, rng.uniform(0.0, 2 * M_PI)).canonicalized();
      p.local_samples = object_surface_samples(p.obj);
      double r = p.obj.bounding_radius();
      bool ok = false;
      for (int attempt = 0; attempt < cfg.max_placement_rejections; ++attempt) {
        Vec3 t;
        if (kind == SceneKind::single) {
          t = {0.5 * ws, 0.5 * ws, 0.0};
        } else {
          t = {rng.uniform(r + 0.01, ws - r - 0.01), rng.uniform(r + 0.01, ws - r - 0.01), 0.0};
        }
        p.obj.pose.translation = t;
        p.obj.pose.translation.z = cfg.table_height - p.min_world_z();
        bool overlap = false;
        for (const auto& q : placed)
          if (detail::pair_overlap(p, q) > 1e-3) {
            overlap = true;
            break;
          }
        if (!overlap) {
          ok = true;
          break;
        }
        if (kind == SceneKind::single) break;
      }
      if (!ok && kind != SceneKind::single) {
        scene.placement_truncated = true;
        break;
      }
      placed.push_back(std::move(p));
    }
  } else {  // pile: drop with random orientation, then settle
    for (int i = 0; i < object_count; ++i) {
      detail::PlacedObject p;
      p.obj = detail::random_object(rng, rng.uniform(scale_lo, scale_hi), cfg);
      p.obj.pose.rotation = detail::random_quaternion(rng).canonicalized();
      p.local_samples = object_surface_samples(p.obj);
      double r = p.obj.bounding_radius();
      double m = std::min(r + 0.02, 0.45 * ws);
      p.obj.pose.translation = {rng.uniform(m, ws - m), rng.uniform(m, ws - m),
                                cfg.table_height + r + 0.3 * r * i};
      detail::clamp_into_workspace(p, ws);
      placed.push_back(std::move(p));
    }
    detail::settle(placed, cfg);
  }

  for (auto& p : placed) scene.objects.push_back(std::move(p.obj));
  return scene;
}

// ---------------------------------------------------------------------------
// Sphere-traced depth rendering
// ---------------------------------------------------------------------------

struct CameraIntrinsics {
  int width = 320, height = 240;
  double fx = 230.0, fy = 230.0;
  double cx = 159.5, cy = 119.5;
};

struct Camera {
  CameraIntrinsics intrinsics;
  Pose pose;              // camera to workspace
  double far_depth = 2.0;  // z-depth recorded on miss
};

inline DepthImage render_depth(const SdfScene& scene, const Camera& camera) {
  if (scene.sdf(camera.pose.translation) <= 0.0)
    throw std::domain_error("render_depth: camera inside scene geometry");
  const auto& in = camera.intrinsics;
  DepthImage img;
  img.width = in.width;
  img.height = in.height;
  img.fx = in.fx;
  img.fy = in.fy;
  img.cx = in.cx;
  img.cy = in.cy;
  img.pose = camera.pose;
  img.depth.assign(std::size_t(in.width) * in.height, float(camera.far_depth));

  const Vec3 origin = camera.pose.translation;
  const double tol = 1e-4;
  const int max_steps = 256;
  parallel_for(std::size_t(in.height), [&](std::size_t v0, std::size_t v1) {
    for (std::size_t v = v0; v < v1; ++v) {
      for (int u = 0; u < in.width; ++u) {
        Vec3 dc{(u - in.cx) / in.fx, (double(v) - in.cy) / in.fy, 1.0};
        double inv_len = 1.0 / dc.norm();
        Vec3 dir = rotate(camera.pose.rotation, dc * inv_len);
        double dz = inv_len;  // z-depth per unit ray length
        double t_max = camera.far_depth / dz;
        double t = 0.0;
        for (int s = 0; s < max_steps && t < t_max; ++s) {
          double d = scene.sdf(origin + dir * t);
          if (d < tol) {
            img.at(u, int(v)) = float(t * dz);
            break;
          }
          t += d;
        }
      }
    }
  });
  return img;
}

// Evenly spaced azimuths on an elevated orbit ring around the workspace
// center, all looking at the center.
inline std::vector<Camera> make_camera_ring(double workspace_size, int count = 6,
                                            double elevation_deg = 45.0, double radius_scale = 1.5,
                                            const CameraIntrinsics& intr = {}) {
  Vec3 center{0.5 * workspace_size, 0.5 * workspace_size, 0.5 * workspace_size};
  double radius = radius_scale * workspace_size;
  double el = elevation_deg * M_PI / 180.0;
  std::vector<Camera> cams;
  for (int i = 0; i < count; ++i) {
    double az = 2.0 * M_PI * i / count;
    Vec3 pos = center + Vec3{std::cos(az) * std::cos(el), std::sin(az) * std::cos(el), std::sin(el)} * radius;
    Vec3 fwd = (center - pos).normalized();
    // camera axes: +z forward, +x right (horizontal), +y completes right-handed
    Vec3 xa = fwd.cross(Vec3{0, 0, 1}).normalized();
    Vec3 za = fwd;
    Vec3 ya = za.cross(xa);
    Camera cam;
    cam.intrinsics = intr;
    cam.pose.rotation = UnitQuaternion::from_matrix({xa.x, ya.x, za.x,  //
                                                     xa.y, ya.y, za.y,  //
                                                     xa.z, ya.z, za.z})
                            .canonicalized();
    cam.pose.translation = pos;
    cam.far_depth = radius + workspace_size;
    cams.push_back(cam);
  }
  return cams;
}

// ---------------------------------------------------------------------------
// Analytic grasp outcome: stands in for physics trials. Clauses, in order:
// opening check (object wider than the jaws), keypoint collision at the
// grasp and retracted pre-grasp poses, contact search by closing both
// fingers along the +-x axis, and a friction-cone test at both contacts.
// ---------------------------------------------------------------------------

enum class FailureReason { collision, no_contact, width_exceeded, friction_violated };

inline const char* failure_reason_name(FailureReason r) {
  switch (r) {
    case FailureReason::collision: return "collision";
    case FailureReason::no_contact: return "no_contact";
    case FailureReason::width_exceeded: return "width_exceeded";
    case FailureReason::friction_violated: return "friction_violated";
  }
  return "?";
}

struct GraspOutcome {
  bool success = false;
  std::optional<FailureReason> failure_reason;
  double achieved_width = 0.0;
  Vec3 contact1, contact2;
  int object_index = -1;
};

struct OracleConfig {
  double friction = 0.4;
  // keypoints must keep this analytic clearance; models finger thickness and
  // keeps TSDF pre-pruning conservative relative to the oracle
  double keypoint_clearance = 0.002;
  double pregrasp_retract = -1.0;  // < 0: use finger_depth
  int coarse_steps = 128;
  int bisect_iters = 40;
};

namespace detail {

// First zero crossing of the scene SDF marching from `start` along `dir`,
// up to `max_travel`. Requires sdf(start) > 0.
inline std::optional<double> first_contact(const SdfScene& scene, const Vec3& start, const Vec3& dir,
                                           double max_travel, int coarse_steps, int bisect_iters) {
  double prev_t = 0.0;
  double prev_f = scene.sdf(start);
  if (prev_f <= 0.0) return 0.0;
  for (int s = 1; s <= coarse_steps; ++s) {
    double t = max_travel * s / coarse_steps;
    double f = scene.sdf(start + dir * t);
    if (f <= 0.0) {
      double lo = prev_t, hi = t;
      for (int it = 0; it < bisect_iters; ++it) {
        double mid = 0.5 * (lo + hi);
        (scene.sdf(start + dir * mid) > 0.0 ? lo : hi) = mid;
      }
      return 0.5 * (lo + hi);
    }
    prev_t = t;
    prev_f = f;
  }
  return std::nullopt;
}

}  // namespace detail

inline GraspOutcome grasp_oracle(const SdfScene& scene, const Pose& pose, const GripperModel& model,
                                 double friction, const OracleConfig& cfg = {}) {
  if (!(friction > 0.0)) throw std::invalid_argument("friction coefficient must be > 0");
  GraspOutcome out;
  const Vec3 closing = rotate(pose.rotation, {1, 0, 0});
  const Vec3 approach = rotate(pose.rotation, {0, 0, 1});
  const Vec3 origin = pose.translation;
  const double half = 0.5 * model.max_width;

  auto fail = [&](FailureReason r) {
    out.success = false;
    out.failure_reason = r;
    return out;
  };

  // (1) jaws already overfilled: an open finger starts inside the geometry
  Vec3 s_pos = origin + closing * half;
  Vec3 s_neg = origin - closing * half;
  if (scene.sdf(s_pos) < 0.0 || scene.sdf(s_neg) < 0.0) return fail(FailureReason::width_exceeded);

  // (2) keypoint collision at the grasp and pre-grasp poses (open gripper);
  // keypoints outside the workspace cube are invalid
  double retract = cfg.pregrasp_retract >= 0.0 ? cfg.pregrasp_retract : model.finger_depth;
  Pose pregrasp{pose.rotation, origin - approach * retract};
  for (const Pose& p : {pose, pregrasp}) {
    for (const Vec3& kp : gripper_keypoints(p, model.max_width, model)) {
      if (scene.workspace_size > 0.0) {
        if (kp.x < 0 || kp.x > scene.workspace_size || kp.y < 0 || kp.y > scene.workspace_size ||
            kp.z < 0 || kp.z > scene.workspace_size)
          return fail(FailureReason::collision);
      }
      if (scene.sdf(kp) < cfg.keypoint_clearance) return fail(FailureReason::collision);
    }
  }

  // (3) close both fingers toward the origin
  auto c_pos = detail::first_contact(scene, s_pos, -closing, half, cfg.coarse_steps, cfg.bisect_iters);
  auto c_neg = detail::first_contact(scene, s_neg, closing, half, cfg.coarse_steps, cfg.bisect_iters);
  if (!c_pos || !c_neg) return fail(FailureReason::no_contact);
  out.contact1 = s_pos - closing * (*c_pos);
  out.contact2 = s_neg + closing * (*c_neg);
  out.achieved_width = (half - *c_pos) + (half - *c_neg);

  // (4) both contact normals must admit the closing direction inside the
  // friction cone: angle(closing axis, -surface normal) <= atan(mu)
  double cos_limit = 1.0 / std::sqrt(1.0 + friction * friction);
  Vec3 n1 = scene.normal(out.contact1);
  Vec3 n2 = scene.normal(out.contact2);
  if (closing.dot(n1) < cos_limit || (-closing).dot(n2) < cos_limit)
    return fail(FailureReason::friction_violated);

  out.success = true;
  if (!scene.objects.empty()) {
    int o1 = scene.nearest_object(out.contact1);
    int o2 = scene.nearest_object(out.contact2);
    double e1 = std::abs(scene.objects[std::size_t(o1)].sdf(out.contact1));
    double e2 = std::abs(scene.objects[std::size_t(o2)].sdf(out.contact2));
    out.object_index = e1 <= e2 ? o1 : o2;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Scene file: line-oriented text, one object per record; floats are written
// as hexadecimal literals so round-trips are exact.
// ---------------------------------------------------------------------------

namespace detail {
inline std::string hexf(double v) {
  char buf[48];
  std::snprintf(buf, sizeof buf, "%a", v);
  return buf;
}
inline double parse_f(const std::string& tok, const std::string& path) {
  char* end = nullptr;
  double v = std::strtod(tok.c_str(), &end);
  if (end == tok.c_str()) throw io_error(path, "malformed number: " + tok);
  return v;
}
}  // namespace detail

inline void write_scene(const SdfScene& scene, const std::string& path) {
  std::ofstream f(path);
  if (!f) throw io_error(path, "cannot open for writing");
  f << "voxgrasp-scene 1\n";
  f << "workspace " << detail::hexf(scene.workspace_size) << "\n";
  f << "table " << detail::hexf(scene.table_height) << "\n";
  f << "truncated " << (scene.placement_truncated ? 1 : 0) << "\n";
  f << "objects " << scene.objects.size() << "\n";
  for (const auto& o : scene.objects) {
    f << "object scale " << detail::hexf(o.scale) << " pose";
    const auto& q = o.pose.rotation;
    const auto& t = o.pose.translation;
    for (double v : {q.w, q.x, q.y, q.z, t.x, t.y, t.z}) f << " " << detail::hexf(v);
    f << " parts " << o.parts.size() << "\n";
    for (const auto& p : o.parts) {
      f << "  part " << primitive_kind_name(p.kind);
      for (double v : p.params) f << " " << detail::hexf(v);
      f << " offset " << detail::hexf(p.offset.x) << " " << detail::hexf(p.offset.y) << " "
        << detail::hexf(p.offset.z) << "\n";
    }
  }
  if (!f) throw io_error(path, "write failed");
}

inline SdfScene read_scene(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw io_error(path, "cannot open for reading");
  auto next = [&]() {
    std::string tok;
    if (!(f >> tok)) throw io_error(path, "truncated file");
    return tok;
  };
  auto expect = [&](const char* want) {
    std::string tok = next();
    if (tok != want) throw io_error(path, std::string("expected '") + want + "', found '" + tok + "'");
  };
  expect("voxgrasp-scene");
  if (next() != "1") throw io_error(path, "version mismatch");
  SdfScene scene;
  expect("workspace");
  scene.workspace_size = detail::parse_f(next(), path);
  expect("table");
  scene.table_height = detail::parse_f(next(), path);
  expect("truncated");
  scene.placement_truncated = next() == "1";
  expect("objects");
  std::size_t count = std::stoul(next());
  for (std::size_t i = 0; i < count; ++i) {
    expect("object");
    SceneObject o;
    expect("scale");
    o.scale = detail::parse_f(next(), path);
    expect("pose");
    double q[4], t[3];
    for (double& v : q) v = detail::parse_f(next(), path);
    for (double& v : t) v = detail::parse_f(next(), path);
    o.pose.rotation = UnitQuaternion(q[0], q[1], q[2], q[3]);
    o.pose.translation = {t[0], t[1], t[2]};
    expect("parts");
    std::size_t parts = std::stoul(next());
    for (std::size_t p = 0; p < parts; ++p) {
      expect("part");
      PrimitivePart part;
      part.kind = primitive_kind_from_name(next());
      for (double& v : part.params) v = detail::parse_f(next(), path);
      expect("offset");
      part.offset = {detail::parse_f(next(), path), detail::parse_f(next(), path),
                     detail::parse_f(next(), path)};
      o.parts.push_back(part);
    }
    scene.objects.push_back(std::move(o));
  }
  return scene;
}

}  // namespace vg
