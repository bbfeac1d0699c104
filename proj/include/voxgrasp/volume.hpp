#pragma once

#include <algorithm>
#include <cmath>
#include <span>
#include <string>
#include <vector>

#include "voxgrasp/common.hpp"
#include "voxgrasp/geometry.hpp"

namespace vg {

// ---------------------------------------------------------------------------
// Depth image with pinhole intrinsics. `depth` holds per-pixel z-depth in the
// camera frame, 0 = invalid. `pose` maps camera coordinates to workspace
// coordinates.
// ---------------------------------------------------------------------------

struct DepthImage {
  int width = 0, height = 0;
  std::vector<float> depth;
  double fx = 0, fy = 0, cx = 0, cy = 0;
  Pose pose;

  float at(int u, int v) const { return depth[std::size_t(v) * width + u]; }
  float& at(int u, int v) { return depth[std::size_t(v) * width + u]; }
};

// ---------------------------------------------------------------------------
// Truncated signed distance grid over the workspace cube [0, N*voxel_size]^3.
// Values are clamped to +-truncation then divided by truncation, so they lie
// in [-1, 1]. Weight counts the observing images; weight 0 reads as free
// space (+1). Voxel (i,j,k) is centered at ((i+0.5)*voxel_size, ...), with i
// the fastest-varying (x) index in memory.
// ---------------------------------------------------------------------------

struct TsdfGrid {
  int resolution = 0;
  double voxel_size = 0.0;
  double truncation = 0.0;
  std::vector<float> values;
  std::vector<float> weights;

  double workspace_size() const { return resolution * voxel_size; }
  std::size_t num_voxels() const {
    return std::size_t(resolution) * resolution * resolution;
  }
  std::size_t index(int i, int j, int k) const {
    return (std::size_t(k) * resolution + j) * resolution + i;
  }
  Vec3 voxel_center(int i, int j, int k) const {
    return {(i + 0.5) * voxel_size, (j + 0.5) * voxel_size, (k + 0.5) * voxel_size};
  }
  bool inside_workspace(const Vec3& p) const {
    double ws = workspace_size();
    return p.x >= 0 && p.x <= ws && p.y >= 0 && p.y <= ws && p.z >= 0 && p.z <= ws;
  }
};

struct FuseConfig {
  int resolution = 80;
  double workspace_size = 0.4;
  double truncation = 0.0;  // <= 0: use 4 * voxel_size
  // drop measurements from pixels straddling a depth discontinuity (their
  // depth belongs to whichever surface won the rounding, not to the ray)
  bool edge_filter = true;

  double voxel_size() const { return workspace_size / resolution; }
  double effective_truncation() const {
    return truncation > 0.0 ? truncation : 4.0 * voxel_size();
  }
};

// ---------------------------------------------------------------------------
// Projective TSDF fusion. Per voxel and image: sdf = depth at the voxel's
// projection minus the voxel's camera depth. Measurements inside the
// truncation band average (normalized by the truncation, weight 1 per
// observing image). Free-space measurements (sdf >= truncation) carry no
// surface information and are skipped. A voxel seen only behind surfaces
// (every measurement below -truncation, none free) is interior: it reads -1
// with the occluding view count as weight, which keeps solid objects solid
// for collision queries. Parallel over voxels; each voxel accumulates images
// in list order, so the result is identical for any thread count.
// ---------------------------------------------------------------------------

inline TsdfGrid tsdf_fuse(const std::vector<DepthImage>& images, const FuseConfig& config) {
  if (images.empty()) throw std::invalid_argument("tsdf_fuse: need at least one image");
  double tau = config.effective_truncation();
  if (tau < config.voxel_size())
    throw std::invalid_argument("tsdf_fuse: truncation must be >= voxel_size");

  TsdfGrid grid;
  grid.resolution = config.resolution;
  grid.voxel_size = config.voxel_size();
  grid.truncation = tau;
  grid.values.assign(grid.num_voxels(), 1.0f);
  grid.weights.assign(grid.num_voxels(), 0.0f);

  std::vector<Pose> world_to_cam(images.size());
  for (std::size_t m = 0; m < images.size(); ++m) world_to_cam[m] = images[m].pose.inverse();

  // per-pixel validity: depth present and locally continuous (3x3 spread
  // within the truncation band)
  std::vector<std::vector<std::uint8_t>> valid(images.size());
  for (std::size_t m = 0; m < images.size(); ++m) {
    const DepthImage& img = images[m];
    valid[m].assign(img.depth.size(), 1);
    if (!config.edge_filter) continue;
    parallel_for(std::size_t(img.height), [&](std::size_t v0, std::size_t v1) {
      for (std::size_t v = v0; v < v1; ++v) {
        for (int u = 0; u < img.width; ++u) {
          float d = img.at(u, int(v));
          if (d <= 0.0f) {
            valid[m][v * img.width + u] = 0;
            continue;
          }
          float lo = d, hi = d;
          for (int dv = -1; dv <= 1; ++dv)
            for (int du = -1; du <= 1; ++du) {
              int uu = u + du, vv = int(v) + dv;
              if (uu < 0 || uu >= img.width || vv < 0 || vv >= img.height) continue;
              float nd = img.at(uu, vv);
              if (nd <= 0.0f) continue;
              lo = std::min(lo, nd);
              hi = std::max(hi, nd);
            }
          if (double(hi) - double(lo) > tau) valid[m][v * img.width + u] = 0;
        }
      }
    });
  }

  const int n = grid.resolution;
  parallel_for(std::size_t(n), [&](std::size_t k0, std::size_t k1) {
    for (std::size_t k = k0; k < k1; ++k) {
      for (int j = 0; j < n; ++j) {
        for (int i = 0; i < n; ++i) {
          Vec3 center = grid.voxel_center(i, j, int(k));
          double band_sum = 0.0;
          int band = 0, deep = 0, free = 0;
          for (std::size_t m = 0; m < images.size(); ++m) {
            const DepthImage& img = images[m];
            Vec3 pc = world_to_cam[m].apply(center);
            if (pc.z <= 1e-9) continue;
            int u = int(std::lround(img.fx * pc.x / pc.z + img.cx));
            int v = int(std::lround(img.fy * pc.y / pc.z + img.cy));
            if (u < 0 || u >= img.width || v < 0 || v >= img.height) continue;
            if (!valid[m][std::size_t(v) * img.width + u]) continue;
            double sdf = double(img.at(u, v)) - pc.z;
            if (sdf <= -tau) {
              ++deep;
            } else if (sdf < tau) {
              band_sum += sdf / tau;
              ++band;
            } else {
              ++free;
            }
          }
          std::size_t idx = grid.index(i, j, int(k));
          if (band > 0) {
            grid.values[idx] = float(band_sum / band);
            grid.weights[idx] = float(band);
          } else if (deep > 0 && free == 0) {
            grid.values[idx] = -1.0f;
            grid.weights[idx] = float(deep);
          }
        }
      }
    }
  });
  return grid;
}

// ---------------------------------------------------------------------------
// Trilinear interpolation over voxel centers, clamped replication within the
// boundary half-voxel. Generic over channel count so feature volumes reuse
// it: data is channel-major with extent nx*ny*nz per channel, x fastest.
// ---------------------------------------------------------------------------

struct TrilinearWeights {
  int i0, i1, j0, j1, k0, k1;
  double fx, fy, fz;
};

inline TrilinearWeights trilinear_setup(const Vec3& p, double voxel_size, int nx, int ny, int nz) {
  auto axis = [&](double coord, int n, int& a0, int& a1, double& f) {
    double g = coord / voxel_size - 0.5;
    double fl = std::floor(g);
    f = g - fl;
    a0 = std::clamp(int(fl), 0, n - 1);
    a1 = std::clamp(int(fl) + 1, 0, n - 1);
  };
  TrilinearWeights w;
  axis(p.x, nx, w.i0, w.i1, w.fx);
  axis(p.y, ny, w.j0, w.j1, w.fy);
  axis(p.z, nz, w.k0, w.k1, w.fz);
  return w;
}

template <typename T>
T trilinear_sample_channel(const T* chan, const TrilinearWeights& w, int nx, int ny) {
  auto at = [&](int i, int j, int k) { return chan[(std::size_t(k) * ny + j) * nx + i]; };
  T c00 = at(w.i0, w.j0, w.k0) * T(1 - w.fx) + at(w.i1, w.j0, w.k0) * T(w.fx);
  T c10 = at(w.i0, w.j1, w.k0) * T(1 - w.fx) + at(w.i1, w.j1, w.k0) * T(w.fx);
  T c01 = at(w.i0, w.j0, w.k1) * T(1 - w.fx) + at(w.i1, w.j0, w.k1) * T(w.fx);
  T c11 = at(w.i0, w.j1, w.k1) * T(1 - w.fx) + at(w.i1, w.j1, w.k1) * T(w.fx);
  T c0 = c00 * T(1 - w.fy) + c10 * T(w.fy);
  T c1 = c01 * T(1 - w.fy) + c11 * T(w.fy);
  return c0 * T(1 - w.fz) + c1 * T(w.fz);
}

inline double trilinear_sample(const TsdfGrid& grid, const Vec3& p) {
  if (!grid.inside_workspace(p)) throw std::domain_error("trilinear_sample: point outside workspace");
  int n = grid.resolution;
  auto w = trilinear_setup(p, grid.voxel_size, n, n, n);
  // accumulate in double regardless of storage type
  auto at = [&](int i, int j, int k) { return double(grid.values[grid.index(i, j, k)]); };
  double c00 = at(w.i0, w.j0, w.k0) * (1 - w.fx) + at(w.i1, w.j0, w.k0) * w.fx;
  double c10 = at(w.i0, w.j1, w.k0) * (1 - w.fx) + at(w.i1, w.j1, w.k0) * w.fx;
  double c01 = at(w.i0, w.j0, w.k1) * (1 - w.fx) + at(w.i1, w.j0, w.k1) * w.fx;
  double c11 = at(w.i0, w.j1, w.k1) * (1 - w.fx) + at(w.i1, w.j1, w.k1) * w.fx;
  double c0 = c00 * (1 - w.fy) + c10 * w.fy;
  double c1 = c01 * (1 - w.fy) + c11 * w.fy;
  return c0 * (1 - w.fz) + c1 * w.fz;
}

// ---------------------------------------------------------------------------
// Observed near-surface voxels with outward normals from the central
// difference gradient (one-sided at grid borders). `band` is in normalized
// TSDF units. Voxels with a vanishing gradient are skipped.
// ---------------------------------------------------------------------------

struct SurfacePoint {
  Vec3 point;
  Vec3 normal;
};

inline std::vector<SurfacePoint> surface_points_normals(const TsdfGrid& grid, double band = 0.2) {
  if (!(band > 0.0)) throw std::invalid_argument("surface band must be > 0");
  const int n = grid.resolution;
  auto value = [&](int i, int j, int k) {
    return double(grid.values[grid.index(std::clamp(i, 0, n - 1), std::clamp(j, 0, n - 1),
                                         std::clamp(k, 0, n - 1))]);
  };
  std::vector<SurfacePoint> out;
  for (int k = 0; k < n; ++k)
    for (int j = 0; j < n; ++j)
      for (int i = 0; i < n; ++i) {
        std::size_t idx = grid.index(i, j, k);
        if (grid.weights[idx] <= 0.0f) continue;
        if (std::abs(double(grid.values[idx])) >= band) continue;
        Vec3 g{value(i + 1, j, k) - value(i - 1, j, k), value(i, j + 1, k) - value(i, j - 1, k),
               value(i, j, k + 1) - value(i, j, k - 1)};
        double gn = g.norm();
        if (gn < 1e-6) continue;
        out.push_back({grid.voxel_center(i, j, k), g / gn});
      }
  return out;
}

// ---------------------------------------------------------------------------
// True iff any keypoint reads below the collision threshold; points outside
// the workspace count as colliding.
// ---------------------------------------------------------------------------

inline bool keypoints_collide(const TsdfGrid& grid, std::span<const Vec3> keypoints,
                              double threshold = 0.0) {
  if (!(threshold > -1.0 && threshold < 1.0))
    throw std::invalid_argument("collision threshold must lie in (-1, 1)");
  for (const Vec3& p : keypoints) {
    if (!grid.inside_workspace(p)) return true;
    if (trilinear_sample(grid, p) < threshold) return true;
  }
  return false;
}

// ---------------------------------------------------------------------------
// TSDF file: magic "VGTS", u32 version, u32 N, f32 voxel_size, f32
// truncation, N^3 f32 values (x fastest), N^3 f32 weights, u32 CRC-32 of all
// preceding bytes. Little-endian.
// ---------------------------------------------------------------------------

inline constexpr char kTsdfMagic[4] = {'V', 'G', 'T', 'S'};
inline constexpr std::uint32_t kTsdfVersion = 1;

inline void write_tsdf(const TsdfGrid& grid, const std::string& path) {
  BinaryWriter w(path);
  w.bytes(kTsdfMagic, 4);
  w.u32(kTsdfVersion);
  w.u32(std::uint32_t(grid.resolution));
  w.f32(float(grid.voxel_size));
  w.f32(float(grid.truncation));
  w.f32s(grid.values.data(), grid.values.size());
  w.f32s(grid.weights.data(), grid.weights.size());
  w.finish_crc();
}

inline TsdfGrid read_tsdf(const std::string& path) {
  BinaryReader r(path);
  r.expect_magic(kTsdfMagic);
  r.expect_version(kTsdfVersion);
  TsdfGrid grid;
  grid.resolution = int(r.u32());
  if (grid.resolution <= 0 || grid.resolution > 4096) throw io_error(path, "implausible resolution");
  grid.voxel_size = r.f32();
  grid.truncation = r.f32();
  grid.values.resize(grid.num_voxels());
  grid.weights.resize(grid.num_voxels());
  r.f32s(grid.values.data(), grid.values.size());
  r.f32s(grid.weights.data(), grid.weights.size());
  r.verify_crc();
  return grid;
}

}  // namespace vg
