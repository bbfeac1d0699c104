#include <catch2/catch_amalgamated.hpp>

#include <array>
#include <cmath>

#include "voxgrasp/geometry.hpp"

using namespace vg;

namespace {

// independent rotation-matrix oracle (Rodrigues form)
std::array<double, 9> rodrigues(const Vec3& axis, double angle) {
  Vec3 a = axis.normalized();
  double c = std::cos(angle), s = std::sin(angle), t = 1 - c;
  return {c + a.x * a.x * t,       a.x * a.y * t - a.z * s, a.x * a.z * t + a.y * s,
          a.x * a.y * t + a.z * s, c + a.y * a.y * t,       a.y * a.z * t - a.x * s,
          a.x * a.z * t - a.y * s, a.y * a.z * t + a.x * s, c + a.z * a.z * t};
}

Vec3 matvec(const std::array<double, 9>& m, const Vec3& v) {
  return {m[0] * v.x + m[1] * v.y + m[2] * v.z, m[3] * v.x + m[4] * v.y + m[5] * v.z,
          m[6] * v.x + m[7] * v.y + m[8] * v.z};
}

double dist(const Vec3& a, const Vec3& b) { return (a - b).norm(); }

}  // namespace

TEST_CASE("quaternion constructors normalize") {
  UnitQuaternion q(2.0, 0.0, 0.0, 0.0);
  CHECK(std::abs(q.w - 1.0) < 1e-12);
  UnitQuaternion r(1.0, 2.0, -3.0, 0.5);
  double n = r.w * r.w + r.x * r.x + r.y * r.y + r.z * r.z;
  CHECK(std::abs(n - 1.0) < 1e-9);
  CHECK_THROWS_AS(UnitQuaternion(0, 0, 0, 0), std::domain_error);
}

TEST_CASE("rotate: identity and half-turn") {
  Vec3 v{1, 2, 3};
  Vec3 r = rotate(UnitQuaternion::identity(), v);
  CHECK(dist(r, v) < 1e-12);

  UnitQuaternion pi_z = UnitQuaternion::from_axis_angle({0, 0, 1}, M_PI);
  Vec3 r2 = rotate(pi_z, {1, 0, 0});
  CHECK(dist(r2, {-1, 0, 0}) < 1e-12);
}

TEST_CASE("rotate matches the matrix oracle and preserves norms") {
  Rng rng(42);
  for (int i = 0; i < 200; ++i) {
    Vec3 axis{rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1)};
    if (axis.norm() < 1e-3) continue;
    double ang = rng.uniform(-M_PI, M_PI);
    Vec3 v{rng.uniform(-2, 2), rng.uniform(-2, 2), rng.uniform(-2, 2)};
    UnitQuaternion q = UnitQuaternion::from_axis_angle(axis, ang);
    Vec3 got = rotate(q, v);
    Vec3 want = matvec(rodrigues(axis, ang), v);
    CHECK(dist(got, want) < 1e-9);
    CHECK(std::abs(got.norm() - v.norm()) < 1e-9);
  }
}

TEST_CASE("canonicalization is idempotent and rotation-preserving") {
  Rng rng(7);
  for (int i = 0; i < 100; ++i) {
    UnitQuaternion q = UnitQuaternion::from_axis_angle(
        {rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(0.1, 1)}, rng.uniform(-M_PI, M_PI));
    if (rng.uniform() < 0.5) q = UnitQuaternion(-q.w, -q.x, -q.y, -q.z);
    UnitQuaternion c = q.canonicalized();
    CHECK(c.w >= 0.0);
    UnitQuaternion cc = c.canonicalized();
    CHECK(c.w == cc.w);
    CHECK(c.x == cc.x);
    Vec3 v{rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1)};
    CHECK(dist(rotate(q, v), rotate(c, v)) < 1e-12);
  }
  // sign ties resolve along x, then y, then z
  UnitQuaternion t(0.0, -1.0, 0.0, 0.0);
  CHECK(t.canonicalized().x == 1.0);
}

TEST_CASE("pose composition and inverse") {
  Rng rng(3);
  for (int i = 0; i < 50; ++i) {
    Pose p{UnitQuaternion::from_axis_angle({rng.uniform(-1, 1), rng.uniform(-1, 1), 1}, rng.uniform(-3, 3)),
           {rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1)}};
    Pose q{UnitQuaternion::from_axis_angle({1, rng.uniform(-1, 1), rng.uniform(-1, 1)}, rng.uniform(-3, 3)),
           {rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1)}};
    Vec3 v{rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1)};
    // associativity through application
    CHECK(dist((p * q).apply(v), p.apply(q.apply(v))) < 1e-9);
    Pose id = p * p.inverse();
    CHECK(dist(id.apply(v), v) < 1e-9);
  }
}

TEST_CASE("gripper keypoints: fixed layout") {
  GripperModel model;  // 0.08 / 0.05
  auto kp = gripper_keypoints(Pose::identity(), 0.08, model);
  CHECK(dist(kp[0], {0, 0, -0.025}) < 1e-12);  // wrist
  CHECK(dist(kp[1], {-0.04, 0, 0}) < 1e-12);   // bases
  CHECK(dist(kp[2], {0.04, 0, 0}) < 1e-12);
  CHECK(dist(kp[3], {-0.04, 0, 0.05}) < 1e-12);  // tips
  CHECK(dist(kp[4], {0.04, 0, 0.05}) < 1e-12);

  Pose shifted{UnitQuaternion::identity(), {0.1, 0, 0}};
  auto kp0 = gripper_keypoints(shifted, 0.0, model);
  CHECK(dist(kp0[3], {0.1, 0, 0.05}) < 1e-12);
  CHECK(dist(kp0[4], {0.1, 0, 0.05}) < 1e-12);

  CHECK_THROWS_AS(gripper_keypoints(Pose::identity(), 0.09, model), std::domain_error);
  CHECK_THROWS_AS(gripper_keypoints(Pose::identity(), -0.01, model), std::domain_error);
}

TEST_CASE("gripper keypoints: yaw pose equals rotate-then-translate") {
  GripperModel model;
  Pose pose{UnitQuaternion::from_axis_angle({0, 0, 1}, M_PI / 2), {0.05, 0.02, 0.1}};
  auto kp = gripper_keypoints(pose, 0.06, model);
  auto local = gripper_keypoints(Pose::identity(), 0.06, model);
  for (int i = 0; i < 5; ++i) {
    Vec3 want = rotate(pose.rotation, local[i]) + pose.translation;
    CHECK(dist(kp[i], want) < 1e-12);
  }
}

TEST_CASE("gripper keypoints are pose-equivariant") {
  GripperModel model;
  Rng rng(11);
  for (int i = 0; i < 30; ++i) {
    Pose p{UnitQuaternion::from_axis_angle({rng.uniform(-1, 1), 1, rng.uniform(-1, 1)}, rng.uniform(-3, 3)),
           {rng.uniform(-0.1, 0.1), rng.uniform(-0.1, 0.1), rng.uniform(-0.1, 0.1)}};
    Pose q{UnitQuaternion::from_axis_angle({1, rng.uniform(-1, 1), 0.3}, rng.uniform(-3, 3)),
           {rng.uniform(-0.1, 0.1), rng.uniform(-0.1, 0.1), rng.uniform(-0.1, 0.1)}};
    double w = rng.uniform(0.0, model.max_width);
    auto lhs = gripper_keypoints(p * q, w, model);
    auto inner = gripper_keypoints(q, w, model);
    for (int k = 0; k < 5; ++k) CHECK(dist(lhs[k], p.apply(inner[k])) < 1e-9);
  }
}

TEST_CASE("semicircle orientations: counts, rolls, approach axis") {
  Vec3 normal = Vec3{0.3, -0.2, 0.9}.normalized();
  auto frames = semicircle_orientations(normal, 6);
  REQUIRE(frames.size() == 6);

  // approach axis is -normal for every frame
  for (const auto& q : frames) {
    Vec3 approach = rotate(q, {0, 0, 1});
    CHECK(dist(approach, -normal) < 1e-9);
  }
  // roll angle of frame k relative to frame 0 is k*pi/6 about the approach axis
  for (std::size_t k = 0; k < frames.size(); ++k) {
    UnitQuaternion rel = frames[0].conjugate() * frames[k];
    double angle = 2.0 * std::atan2(std::abs(rel.z), std::abs(rel.w));
    CHECK(std::abs(angle - double(k) * M_PI / 6.0) < 1e-9);
    CHECK(std::abs(rel.x) < 1e-9);
    CHECK(std::abs(rel.y) < 1e-9);
  }
  // consecutive-frame roll spacing is exactly pi/count
  for (std::size_t k = 0; k + 1 < frames.size(); ++k) {
    UnitQuaternion rel = frames[k].conjugate() * frames[k + 1];
    double angle = 2.0 * std::atan2(std::abs(rel.z), std::abs(rel.w));
    CHECK(std::abs(angle - M_PI / 6.0) < 1e-9);
  }

  auto one = semicircle_orientations({0, 0, 1}, 1);
  REQUIRE(one.size() == 1);
  Vec3 closing = rotate(one[0], {1, 0, 0});
  CHECK(std::abs(closing.dot({0, 0, 1})) < 1e-9);  // closing perpendicular to normal

  CHECK_THROWS_AS(semicircle_orientations({0, 0, 0}, 6), std::domain_error);
  CHECK_THROWS_AS(semicircle_orientations({0, 0, 2}, 6), std::domain_error);
}

TEST_CASE("semicircle orientations: near-degenerate normal uses the fallback tangent") {
  auto frames = semicircle_orientations({1, 0, 0}, 4);
  REQUIRE(frames.size() == 4);
  for (const auto& q : frames) CHECK(dist(rotate(q, {0, 0, 1}), {-1, 0, 0}) < 1e-9);
}

TEST_CASE("extra pi roll maps to a gripper-equivalent grasp") {
  GripperModel model;
  Vec3 normal = Vec3{0.1, 0.4, 0.9}.normalized();
  auto frames = semicircle_orientations(normal, 6);
  Pose pose{frames[2], {0.1, 0.2, 0.15}};
  UnitQuaternion pi_roll = UnitQuaternion::from_axis_angle({0, 0, 1}, M_PI);
  Pose rolled{pose.rotation * pi_roll, pose.translation};

  CHECK(dist(rotate(rolled.rotation, {1, 0, 0}), -rotate(pose.rotation, {1, 0, 0})) < 1e-9);
  auto a = gripper_keypoints(pose, 0.06, model);
  auto b = gripper_keypoints(rolled, 0.06, model);
  CHECK(dist(a[0], b[0]) < 1e-9);  // wrist unchanged
  CHECK(dist(a[1], b[2]) < 1e-9);  // fingers swap
  CHECK(dist(a[2], b[1]) < 1e-9);
  CHECK(dist(a[3], b[4]) < 1e-9);
  CHECK(dist(a[4], b[3]) < 1e-9);
}
