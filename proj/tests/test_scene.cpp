#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "voxgrasp/scene.hpp"

using namespace vg;

namespace {

SdfScene single_sphere(double r, const Vec3& c, double ws = 0.3, double table = -10.0) {
  SdfScene s;
  s.workspace_size = ws;
  s.table_height = table;
  SceneObject o;
  o.parts.push_back({PrimitiveKind::sphere, {r}, {}});
  o.pose.translation = c;
  s.objects.push_back(o);
  return s;
}

std::string file_bytes(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  std::ostringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

// grasp frame with approach -z, closing +x, at the given origin
Pose top_down_grasp(const Vec3& origin) {
  auto q = semicircle_orientations({0, 0, 1}, 1).at(0);
  return Pose{q, origin};
}

}  // namespace

TEST_CASE("primitive SDFs: known values") {
  CHECK(primitive_sdf(PrimitiveKind::sphere, {0.05}, {0.1, 0, 0}) == Catch::Approx(0.05));
  CHECK(primitive_sdf(PrimitiveKind::sphere, {0.05}, {0, 0, 0}) == Catch::Approx(-0.05));
  CHECK(primitive_sdf(PrimitiveKind::box, {0.02, 0.03, 0.04}, {0.05, 0, 0}) == Catch::Approx(0.03));
  CHECK(primitive_sdf(PrimitiveKind::box, {0.02, 0.03, 0.04}, {0, 0, 0}) == Catch::Approx(-0.02));
  CHECK(primitive_sdf(PrimitiveKind::cylinder, {0.02, 0.05}, {0, 0, 0.08}) == Catch::Approx(0.03));
  CHECK(primitive_sdf(PrimitiveKind::capsule, {0.02, 0.03}, {0, 0, 0.06}) == Catch::Approx(0.01));
}

TEST_CASE("scaled and posed objects evaluate the SDF in the object frame") {
  SceneObject o;
  o.parts.push_back({PrimitiveKind::sphere, {0.05}, {}});
  o.scale = 2.0;
  o.pose.translation = {0.1, 0.2, 0.3};
  // scaled radius 0.1 about the translated center
  CHECK(o.sdf({0.1, 0.2, 0.3}) == Catch::Approx(-0.1));
  CHECK(o.sdf({0.25, 0.2, 0.3}) == Catch::Approx(0.05));
  CHECK(o.bounding_radius() == Catch::Approx(0.1));
}

TEST_CASE("make_scene: determinism, scale bounds, placement invariants") {
  SceneGenConfig cfg;
  cfg.workspace_size = 0.3;
  cfg.table_height = 0.05;

  SdfScene a = make_scene(SceneKind::pile, 6, 0.65, 1.7, 99, cfg);
  SdfScene b = make_scene(SceneKind::pile, 6, 0.65, 1.7, 99, cfg);
  write_scene(a, "scene_a.txt");
  write_scene(b, "scene_b.txt");
  CHECK(file_bytes("scene_a.txt") == file_bytes("scene_b.txt"));
  std::remove("scene_a.txt");
  std::remove("scene_b.txt");

  for (const auto& o : a.objects) {
    CHECK(o.scale >= 0.65);
    CHECK(o.scale <= 1.7);
    double r = o.bounding_radius();
    const Vec3& t = o.pose.translation;
    CHECK(t.x >= r - 1e-9);
    CHECK(t.x <= cfg.workspace_size - r + 1e-9);
    CHECK(t.y >= r - 1e-9);
    CHECK(t.z >= r - 1e-9);
  }

  // pile settling leaves pairwise overlap below 1 mm
  for (std::size_t i = 0; i < a.objects.size(); ++i) {
    auto samples_i = object_surface_samples(a.objects[i]);
    for (std::size_t j = 0; j < a.objects.size(); ++j) {
      if (i == j) continue;
      for (const auto& s : samples_i) {
        double pen = -a.objects[j].sdf(a.objects[i].pose.apply(s));
        CHECK(pen < 1e-3 + 1e-6);
      }
    }
  }
}

TEST_CASE("make_scene: single places one object at the table center") {
  SceneGenConfig cfg;
  cfg.workspace_size = 0.3;
  cfg.table_height = 0.05;
  SdfScene s = make_scene(SceneKind::single, 5, 0.8, 1.2, 3, cfg);
  REQUIRE(s.objects.size() == 1);
  CHECK(s.objects[0].pose.translation.x == Catch::Approx(0.15));
  CHECK(s.objects[0].pose.translation.y == Catch::Approx(0.15));
  // resting on the table: lowest surface sample near the table plane
  auto samples = object_surface_samples(s.objects[0]);
  double min_z = 1e30;
  for (const auto& p : samples) min_z = std::min(min_z, s.objects[0].pose.apply(p).z);
  CHECK(std::abs(min_z - cfg.table_height) < 2e-3);
}

TEST_CASE("make_scene: packed keeps objects upright and non-overlapping") {
  SceneGenConfig cfg;
  cfg.workspace_size = 0.3;
  cfg.table_height = 0.05;
  SdfScene s = make_scene(SceneKind::packed, 4, 0.7, 1.1, 17, cfg);
  CHECK(s.objects.size() >= 2);  // rejection may truncate, but not to nothing
  for (const auto& o : s.objects) {
    // upright: rotation maps +z to +z
    Vec3 up = rotate(o.pose.rotation, {0, 0, 1});
    CHECK(up.z == Catch::Approx(1.0).margin(1e-9));
  }
  CHECK_THROWS_AS(make_scene(SceneKind::pile, 0, 0.5, 1.0, 1, cfg), std::invalid_argument);
  CHECK_THROWS_AS(make_scene(SceneKind::pile, 3, 0.0, 1.0, 1, cfg), std::invalid_argument);
}

TEST_CASE("render_depth: empty scene hits the far plane everywhere") {
  SdfScene s;
  s.workspace_size = 0.3;
  s.table_height = -10.0;
  Camera cam = make_camera_ring(0.3)[0];
  DepthImage img = render_depth(s, cam);
  for (float d : img.depth) CHECK(d == float(cam.far_depth));
}

TEST_CASE("render_depth: center pixel of a head-on sphere matches ray-sphere intersection") {
  const double r = 0.04, range = 0.5;
  SdfScene s = single_sphere(r, {0.15, 0.15, 0.15});
  s.workspace_size = 0.4;  // keep the camera pose simple
  Camera cam;
  cam.intrinsics.cx = (cam.intrinsics.width - 1) / 2.0;
  cam.intrinsics.cy = (cam.intrinsics.height - 1) / 2.0;
  // camera above the sphere looking straight down
  cam.pose.rotation = UnitQuaternion::from_matrix({1, 0, 0, 0, -1, 0, 0, 0, -1});
  cam.pose.translation = {0.15, 0.15, 0.15 + range};
  cam.far_depth = 2.0;
  DepthImage img = render_depth(s, cam);
  // cx is halfway between pixels 159 and 160; both rays are ~half a pixel off axis
  double d0 = img.at(159, 119), d1 = img.at(160, 120);
  CHECK(std::abs(d0 - (range - r)) < 1e-3);
  CHECK(std::abs(d1 - (range - r)) < 1e-3);

  // moving the sphere toward the camera cannot increase any depth
  SdfScene closer = s;
  closer.objects[0].pose.translation.z += 0.05;
  DepthImage img2 = render_depth(closer, cam);
  for (std::size_t i = 0; i < img.depth.size(); ++i) CHECK(img2.depth[i] <= img.depth[i] + 1e-6);

  // camera inside geometry is rejected
  Camera inside = cam;
  inside.pose.translation = {0.15, 0.15, 0.15};
  CHECK_THROWS_AS(render_depth(s, inside), std::domain_error);
}

TEST_CASE("grasp oracle: diametral sphere grasp succeeds with the achieved width") {
  const double r = 0.03;
  const Vec3 c{0.15, 0.15, 0.15};
  SdfScene s = single_sphere(r, c);
  // grasp origin a little above the center so the wrist keeps its clearance
  double off = 0.008;
  Pose grasp = top_down_grasp(c + Vec3{0, 0, off});
  GripperModel gripper;
  GraspOutcome out = grasp_oracle(s, grasp, gripper, 0.4);
  REQUIRE(out.success);
  CHECK_FALSE(out.failure_reason.has_value());
  double chord = 2.0 * std::sqrt(r * r - off * off);
  CHECK(std::abs(out.achieved_width - chord) < 1e-4);
  CHECK(out.object_index == 0);

  // same geometry, small friction cone: contacts sit 9.6 degrees off axis
  GraspOutcome tight = grasp_oracle(s, grasp, gripper, 0.1);
  REQUIRE_FALSE(tight.success);
  CHECK(tight.failure_reason == FailureReason::friction_violated);
}

TEST_CASE("grasp oracle: oversized sphere reports width_exceeded") {
  const double r = 0.06;
  const Vec3 c{0.15, 0.15, 0.15};
  SdfScene s = single_sphere(r, c);
  Pose grasp = top_down_grasp(c + Vec3{0, 0, r - 0.025});
  GraspOutcome out = grasp_oracle(s, grasp, GripperModel{}, 0.4);
  REQUIRE_FALSE(out.success);
  CHECK(out.failure_reason == FailureReason::width_exceeded);
}

TEST_CASE("grasp oracle: fingertip dipping into a wide box reports collision") {
  SdfScene s;
  s.workspace_size = 0.3;
  s.table_height = -10.0;
  SceneObject box;
  box.parts.push_back({PrimitiveKind::box, {0.08, 0.02, 0.03}, {}});
  box.pose.translation = {0.15, 0.15, 0.1};
  s.objects.push_back(box);
  // closing line above the box top (free), fingertips reach into it
  Pose grasp = top_down_grasp({0.15, 0.15, 0.13 + 0.03});
  GraspOutcome out = grasp_oracle(s, grasp, GripperModel{}, 0.4);
  REQUIRE_FALSE(out.success);
  CHECK(out.failure_reason == FailureReason::collision);
}

TEST_CASE("grasp oracle: empty closing region reports no_contact") {
  SdfScene s = single_sphere(0.03, {0.15, 0.15, 0.1});
  Pose grasp = top_down_grasp({0.15, 0.15, 0.2});
  GraspOutcome out = grasp_oracle(s, grasp, GripperModel{}, 0.4);
  REQUIRE_FALSE(out.success);
  CHECK(out.failure_reason == FailureReason::no_contact);
  CHECK_THROWS_AS(grasp_oracle(s, grasp, GripperModel{}, 0.0), std::invalid_argument);
}

TEST_CASE("grasp oracle: keypoints leaving the workspace count as collision") {
  SdfScene s = single_sphere(0.03, {0.15, 0.15, 0.27});
  // grasping near the top face: the pre-grasp wrist leaves the cube
  Pose grasp = top_down_grasp({0.15, 0.15, 0.27});
  GraspOutcome out = grasp_oracle(s, grasp, GripperModel{}, 0.4);
  REQUIRE_FALSE(out.success);
  CHECK(out.failure_reason == FailureReason::collision);
}

TEST_CASE("grasp oracle is invariant under the gripper's pi-roll symmetry") {
  SceneGenConfig cfg;
  cfg.workspace_size = 0.3;
  cfg.table_height = 0.05;
  SdfScene scene = make_scene(SceneKind::pile, 5, 0.65, 1.0, 1234, cfg);
  GripperModel gripper;
  UnitQuaternion roll = UnitQuaternion::from_axis_angle({0, 0, 1}, M_PI);
  Rng rng(77);
  int successes = 0;
  // surface-anchored sweep so both branches of the outcome get exercised
  std::vector<Vec3> world_surface;
  for (const auto& o : scene.objects)
    for (const auto& s : object_surface_samples(o)) world_surface.push_back(o.pose.apply(s));
  for (int t = 0; t < 1500; ++t) {
    const Vec3& p = world_surface[rng.uniform_int(world_surface.size())];
    Vec3 n = scene.normal(p);
    Vec3 origin = p + n * rng.uniform(-0.025, 0.025);
    auto frames = semicircle_orientations(n, 6);
    Pose pose{frames[rng.uniform_int(frames.size())], origin};
    Pose rolled{pose.rotation * roll, origin};
    GraspOutcome a = grasp_oracle(scene, pose, gripper, 0.4);
    GraspOutcome b = grasp_oracle(scene, rolled, gripper, 0.4);
    CHECK(a.success == b.success);
    if (a.success) {
      ++successes;
      CHECK(std::abs(a.achieved_width - b.achieved_width) < 1e-9);
      CHECK(a.object_index == b.object_index);
    } else {
      CHECK(a.failure_reason == b.failure_reason);
    }
  }
  CHECK(successes > 0);  // the sweep must exercise the success path too
}

TEST_CASE("scene file round-trip is exact") {
  SceneGenConfig cfg;
  cfg.workspace_size = 0.3;
  SdfScene a = make_scene(SceneKind::pile, 4, 0.65, 1.7, 5, cfg);
  write_scene(a, "scene_rt.txt");
  SdfScene b = read_scene("scene_rt.txt");
  write_scene(b, "scene_rt2.txt");
  CHECK(file_bytes("scene_rt.txt") == file_bytes("scene_rt2.txt"));
  REQUIRE(b.objects.size() == a.objects.size());
  for (std::size_t i = 0; i < a.objects.size(); ++i) {
    CHECK(a.objects[i].scale == b.objects[i].scale);
    CHECK(a.objects[i].pose.translation.x == b.objects[i].pose.translation.x);
    CHECK(a.objects[i].pose.rotation.w == b.objects[i].pose.rotation.w);
  }
  std::remove("scene_rt.txt");
  std::remove("scene_rt2.txt");

  std::ofstream bad("scene_bad.txt");
  bad << "voxgrasp-scene 2\n";
  bad.close();
  CHECK_THROWS_AS(read_scene("scene_bad.txt"), io_error);
  std::remove("scene_bad.txt");
  CHECK_THROWS_AS(read_scene("scene_missing.txt"), io_error);
}
