#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <cstdio>

#include "voxgrasp/scene.hpp"
#include "voxgrasp/volume.hpp"

using namespace vg;

namespace {

// analytic oracles, independent of the library's primitive SDFs
double sphere_sdf(const Vec3& p, const Vec3& c, double r) { return (p - c).norm() - r; }

double box_sdf(const Vec3& p, const Vec3& c, const Vec3& h) {
  double dx = std::abs(p.x - c.x) - h.x;
  double dy = std::abs(p.y - c.y) - h.y;
  double dz = std::abs(p.z - c.z) - h.z;
  double inside = std::min(std::max(dx, std::max(dy, dz)), 0.0);
  double ox = std::max(dx, 0.0), oy = std::max(dy, 0.0), oz = std::max(dz, 0.0);
  return inside + std::sqrt(ox * ox + oy * oy + oz * oz);
}

SdfScene bare_scene(double ws = 0.3) {
  SdfScene s;
  s.workspace_size = ws;
  s.table_height = -10.0;  // effectively no table
  return s;
}

SdfScene sphere_scene(double r, const Vec3& c, double ws = 0.3) {
  SdfScene s = bare_scene(ws);
  SceneObject o;
  o.parts.push_back({PrimitiveKind::sphere, {r}, {}});
  o.pose.translation = c;
  s.objects.push_back(o);
  return s;
}

SdfScene box_scene(const Vec3& h, const Vec3& c, double ws = 0.3) {
  SdfScene s = bare_scene(ws);
  SceneObject o;
  o.parts.push_back({PrimitiveKind::box, {h.x, h.y, h.z}, {}});
  o.pose.translation = c;
  s.objects.push_back(o);
  return s;
}

TsdfGrid fuse_scene(const SdfScene& scene, int n) {
  std::vector<DepthImage> views;
  for (const Camera& cam : make_camera_ring(scene.workspace_size))
    views.push_back(render_depth(scene, cam));
  FuseConfig fc;
  fc.resolution = n;
  fc.workspace_size = scene.workspace_size;
  return tsdf_fuse(views, fc);
}

}  // namespace

TEST_CASE("fusing an empty scene leaves every voxel free") {
  TsdfGrid grid = fuse_scene(bare_scene(), 32);
  for (float v : grid.values) CHECK(v == 1.0f);
}

TEST_CASE("fused sphere: interior, near-band value, sign fidelity") {
  // sphere resting on the table, as in data generation
  const double ws = 0.3, r = 0.05, table = 0.05;
  const Vec3 c{0.15, 0.15, table + r};
  SdfScene scene = sphere_scene(r, c, ws);
  scene.table_height = table;
  const int n = 64;
  TsdfGrid grid = fuse_scene(scene, n);
  const double tau = grid.truncation;
  REQUIRE(tau == Catch::Approx(4.0 * ws / n));

  // center voxel: seen only behind the surface from every view
  std::size_t center = grid.index(int(c.x / grid.voxel_size), int(c.y / grid.voxel_size),
                                  int(c.z / grid.voxel_size));
  CHECK(grid.values[center] == -1.0f);
  CHECK(grid.weights[center] > 0.0f);

  // voxel at r + tau/2 from the center along the first camera's viewing axis
  Vec3 toward_cam{std::cos(M_PI / 4), 0.0, std::sin(M_PI / 4)};
  Vec3 p = c + toward_cam * (r + 0.5 * tau);
  int vi = int(p.x / grid.voxel_size), vj = int(p.y / grid.voxel_size),
      vk = int(p.z / grid.voxel_size);
  Vec3 vc = grid.voxel_center(vi, vj, vk);
  double expected = std::clamp(sphere_sdf(vc, c, r) / tau, -1.0, 1.0);
  double fused = double(grid.values[grid.index(vi, vj, vk)]);
  CHECK(std::abs(fused - expected) <= grid.voxel_size / tau);

  // sign fidelity on surface-observed voxels
  int checked = 0, mismatched = 0;
  for (int k = 0; k < n; ++k)
    for (int j = 0; j < n; ++j)
      for (int i = 0; i < n; ++i) {
        std::size_t idx = grid.index(i, j, k);
        // surface-band observations only: occluded-interior and free voxels
        // read exactly +-1
        if (grid.weights[idx] < 2.0f || std::abs(grid.values[idx]) >= 1.0f) continue;
        Vec3 vcen = grid.voxel_center(i, j, k);
        double a = std::min(sphere_sdf(vcen, c, r), vcen.z - table);
        if (std::abs(a) <= grid.voxel_size) continue;
        ++checked;
        if ((a > 0) != (grid.values[idx] > 0)) ++mismatched;
      }
  CHECK(checked > 500);
  CHECK(mismatched == 0);
}

TEST_CASE("fused sphere normals point radially outward") {
  const double r = 0.05, table = 0.05;
  const Vec3 c{0.15, 0.15, table + r};
  SdfScene scene = sphere_scene(r, c);
  scene.table_height = table;
  TsdfGrid grid = fuse_scene(scene, 64);
  auto surface = surface_points_normals(grid, 0.2);
  REQUIRE(surface.size() > 200);
  double err_sum = 0;
  int counted = 0;
  for (const auto& sp : surface) {
    // sphere-band points only; skip table voxels and the contact region
    if (std::abs(sphere_sdf(sp.point, c, r)) > 2 * grid.voxel_size) continue;
    if (sp.point.z < table + 2 * grid.voxel_size) continue;
    Vec3 radial = (sp.point - c).normalized();
    double cosang = std::clamp(sp.normal.dot(radial), -1.0, 1.0);
    err_sum += std::acos(cosang);
    ++counted;
  }
  REQUIRE(counted > 100);
  double mean_deg = err_sum / double(counted) * 180.0 / M_PI;
  CHECK(mean_deg < 10.0);
}

TEST_CASE("fused box: face normals align with axes, interior collides") {
  const double table = 0.05;
  const Vec3 h{0.04, 0.05, 0.03};
  const Vec3 c{0.15, 0.15, table + h.z};
  SdfScene scene = box_scene(h, c);
  scene.table_height = table;
  const int n = 64;
  TsdfGrid grid = fuse_scene(scene, n);

  auto surface = surface_points_normals(grid, 0.2);
  REQUIRE(!surface.empty());
  int face_checked = 0;
  const double margin = 1.5 * grid.voxel_size;
  for (const auto& sp : surface) {
    Vec3 d = sp.point - c;
    // top-face interior points, well away from the edges
    if (std::abs(d.z - h.z) < grid.voxel_size && std::abs(d.x) < h.x - margin &&
        std::abs(d.y) < h.y - margin) {
      double ang = std::acos(std::clamp(sp.normal.dot({0, 0, 1}), -1.0, 1.0)) * 180.0 / M_PI;
      CHECK(ang < 5.0);
      ++face_checked;
    }
  }
  CHECK(face_checked > 10);

  // sign fidelity for the box
  int mismatched = 0, checked = 0;
  for (int k = 0; k < n; ++k)
    for (int j = 0; j < n; ++j)
      for (int i = 0; i < n; ++i) {
        std::size_t idx = grid.index(i, j, k);
        if (grid.weights[idx] < 2.0f || std::abs(grid.values[idx]) >= 1.0f) continue;
        Vec3 vcen = grid.voxel_center(i, j, k);
        double a = std::min(box_sdf(vcen, c, h), vcen.z - table);
        if (std::abs(a) <= grid.voxel_size) continue;
        ++checked;
        if ((a > 0) != (grid.values[idx] > 0)) ++mismatched;
      }
  CHECK(checked > 500);
  CHECK(mismatched == 0);

  // a fingertip at the box center reads occupied; far free space does not
  std::array<Vec3, 5> inside{c, c, c, c, c};
  CHECK(keypoints_collide(grid, inside));
  Vec3 far{0.08, 0.08, 0.27};
  std::array<Vec3, 5> free_pts{far, far, far, far, far};
  CHECK_FALSE(keypoints_collide(grid, free_pts));
  Vec3 outside{-0.01, 0.1, 0.1};
  std::array<Vec3, 5> with_outside{far, far, far, far, outside};
  CHECK(keypoints_collide(grid, with_outside));
}

TEST_CASE("tsdf_fuse is permutation-invariant in the image list") {
  SdfScene scene = sphere_scene(0.04, {0.14, 0.16, 0.15});
  std::vector<DepthImage> views;
  for (const Camera& cam : make_camera_ring(scene.workspace_size))
    views.push_back(render_depth(scene, cam));
  FuseConfig fc;
  fc.resolution = 32;
  fc.workspace_size = scene.workspace_size;
  TsdfGrid a = tsdf_fuse(views, fc);
  std::reverse(views.begin(), views.end());
  TsdfGrid b = tsdf_fuse(views, fc);
  for (std::size_t i = 0; i < a.values.size(); ++i) {
    CHECK(std::abs(a.values[i] - b.values[i]) < 1e-12);
    CHECK(a.weights[i] == b.weights[i]);
  }
}

TEST_CASE("tsdf_fuse precondition failures") {
  FuseConfig fc;
  CHECK_THROWS_AS(tsdf_fuse({}, fc), std::invalid_argument);
  fc.truncation = 1e-5;  // below voxel size
  SdfScene scene = bare_scene();
  auto views = std::vector<DepthImage>{render_depth(scene, make_camera_ring(0.3)[0])};
  CHECK_THROWS_AS(tsdf_fuse(views, fc), std::invalid_argument);
}

TEST_CASE("trilinear sampling: nodes, midpoints, oracle, linearity") {
  const int n = 8;
  TsdfGrid grid;
  grid.resolution = n;
  grid.voxel_size = 0.3 / n;
  grid.truncation = 4 * grid.voxel_size;
  grid.values.resize(grid.num_voxels());
  grid.weights.assign(grid.num_voxels(), 1.0f);
  Rng rng(5);
  for (auto& v : grid.values) v = float(rng.uniform(-1, 1));

  // a voxel center returns the stored value
  Vec3 vc = grid.voxel_center(3, 4, 2);
  CHECK(trilinear_sample(grid, vc) == Catch::Approx(double(grid.values[grid.index(3, 4, 2)])));

  // midpoint of two adjacent centers
  Vec3 mid = (grid.voxel_center(3, 4, 2) + grid.voxel_center(4, 4, 2)) * 0.5;
  double want =
      0.5 * (double(grid.values[grid.index(3, 4, 2)]) + double(grid.values[grid.index(4, 4, 2)]));
  CHECK(trilinear_sample(grid, mid) == Catch::Approx(want).margin(1e-12));

  // random interior points vs a direct 8-corner evaluation
  for (int t = 0; t < 100; ++t) {
    Vec3 p{rng.uniform(0.5 * grid.voxel_size, 0.3 - 0.5 * grid.voxel_size),
           rng.uniform(0.5 * grid.voxel_size, 0.3 - 0.5 * grid.voxel_size),
           rng.uniform(0.5 * grid.voxel_size, 0.3 - 0.5 * grid.voxel_size)};
    double gx = p.x / grid.voxel_size - 0.5, gy = p.y / grid.voxel_size - 0.5,
           gz = p.z / grid.voxel_size - 0.5;
    int i0 = int(std::floor(gx)), j0 = int(std::floor(gy)), k0 = int(std::floor(gz));
    double fx = gx - i0, fy = gy - j0, fz = gz - k0;
    double acc = 0;
    for (int dk = 0; dk < 2; ++dk)
      for (int dj = 0; dj < 2; ++dj)
        for (int di = 0; di < 2; ++di) {
          double w = (di ? fx : 1 - fx) * (dj ? fy : 1 - fy) * (dk ? fz : 1 - fz);
          acc += w * double(grid.values[grid.index(i0 + di, j0 + dj, k0 + dk)]);
        }
    CHECK(trilinear_sample(grid, p) == Catch::Approx(acc).margin(1e-12));
  }

  // linearity in the grid values
  TsdfGrid ga = grid, gb = grid;
  for (auto& v : gb.values) v = float(rng.uniform(-1, 1));
  TsdfGrid gmix = grid;
  const double alpha = 0.3, beta = -1.2;
  for (std::size_t i = 0; i < gmix.values.size(); ++i)
    gmix.values[i] = float(alpha * ga.values[i] + beta * gb.values[i]);
  for (int t = 0; t < 20; ++t) {
    Vec3 p{rng.uniform(0.0, 0.3), rng.uniform(0.0, 0.3), rng.uniform(0.0, 0.3)};
    double mixed = trilinear_sample(gmix, p);
    double parts = alpha * trilinear_sample(ga, p) + beta * trilinear_sample(gb, p);
    CHECK(mixed == Catch::Approx(parts).margin(1e-6));
  }

  CHECK_THROWS_AS(trilinear_sample(grid, Vec3{-0.01, 0.1, 0.1}), std::domain_error);
  CHECK_THROWS_AS(trilinear_sample(grid, Vec3{0.1, 0.1, 0.31}), std::domain_error);
}

TEST_CASE("surface extraction on an all-free grid is empty") {
  TsdfGrid grid;
  grid.resolution = 16;
  grid.voxel_size = 0.3 / 16;
  grid.truncation = 4 * grid.voxel_size;
  grid.values.assign(grid.num_voxels(), 1.0f);
  grid.weights.assign(grid.num_voxels(), 0.0f);
  CHECK(surface_points_normals(grid).empty());
  CHECK_THROWS_AS(surface_points_normals(grid, 0.0), std::invalid_argument);
}

TEST_CASE("TSDF file round-trip is bit-exact") {
  SdfScene scene = sphere_scene(0.04, {0.15, 0.15, 0.12});
  TsdfGrid grid = fuse_scene(scene, 32);
  std::string path = "test_volume_roundtrip.tsdf";
  write_tsdf(grid, path);
  TsdfGrid back = read_tsdf(path);
  CHECK(back.resolution == grid.resolution);
  CHECK(float(back.voxel_size) == float(grid.voxel_size));
  CHECK(back.values == grid.values);
  CHECK(back.weights == grid.weights);
  std::remove(path.c_str());
}
