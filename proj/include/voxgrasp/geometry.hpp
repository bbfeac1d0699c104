#pragma once

#include <array>
#include <cmath>
#include <stdexcept>
#include <vector>

#include "voxgrasp/common.hpp"

namespace vg {

// ---------------------------------------------------------------------------
// Vec3
// ---------------------------------------------------------------------------

struct Vec3 {
  double x = 0.0, y = 0.0, z = 0.0;

  Vec3() = default;
  Vec3(double x_, double y_, double z_) : x(x_), y(y_), z(z_) {}

  Vec3 operator+(const Vec3& o) const { return {x + o.x, y + o.y, z + o.z}; }
  Vec3 operator-(const Vec3& o) const { return {x - o.x, y - o.y, z - o.z}; }
  Vec3 operator*(double s) const { return {x * s, y * s, z * s}; }
  Vec3 operator/(double s) const { return {x / s, y / s, z / s}; }
  Vec3 operator-() const { return {-x, -y, -z}; }
  Vec3& operator+=(const Vec3& o) {
    x += o.x;
    y += o.y;
    z += o.z;
    return *this;
  }
  Vec3& operator-=(const Vec3& o) {
    x -= o.x;
    y -= o.y;
    z -= o.z;
    return *this;
  }

  double dot(const Vec3& o) const { return x * o.x + y * o.y + z * o.z; }
  Vec3 cross(const Vec3& o) const {
    return {y * o.z - z * o.y, z * o.x - x * o.z, x * o.y - y * o.x};
  }
  double norm() const { return std::sqrt(dot(*this)); }
  Vec3 normalized() const {
    double n = norm();
    if (n <= 0.0) throw std::domain_error("cannot normalize zero-length vector");
    return *this / n;
  }
};

inline Vec3 operator*(double s, const Vec3& v) { return v * s; }

// ---------------------------------------------------------------------------
// UnitQuaternion. Always normalized on construction; q and -q denote the same
// rotation and canonicalize() picks the w >= 0 representative (ties resolved
// by x, then y, then z >= 0).
// ---------------------------------------------------------------------------

struct UnitQuaternion {
  double w = 1.0, x = 0.0, y = 0.0, z = 0.0;

  UnitQuaternion() = default;
  UnitQuaternion(double w_, double x_, double y_, double z_) : w(w_), x(x_), y(y_), z(z_) {
    normalize();
  }

  static UnitQuaternion identity() { return {}; }

  static UnitQuaternion from_axis_angle(const Vec3& axis, double angle) {
    Vec3 a = axis.normalized();
    double h = 0.5 * angle, s = std::sin(h);
    return {std::cos(h), a.x * s, a.y * s, a.z * s};
  }

  // Shepperd's method; m is row-major.
  static UnitQuaternion from_matrix(const std::array<double, 9>& m) {
    double t = m[0] + m[4] + m[8];
    double w_, x_, y_, z_;
    if (t > 0.0) {
      double s = std::sqrt(t + 1.0) * 2.0;
      w_ = 0.25 * s;
      x_ = (m[7] - m[5]) / s;
      y_ = (m[2] - m[6]) / s;
      z_ = (m[3] - m[1]) / s;
    } else if (m[0] > m[4] && m[0] > m[8]) {
      double s = std::sqrt(1.0 + m[0] - m[4] - m[8]) * 2.0;
      w_ = (m[7] - m[5]) / s;
      x_ = 0.25 * s;
      y_ = (m[1] + m[3]) / s;
      z_ = (m[2] + m[6]) / s;
    } else if (m[4] > m[8]) {
      double s = std::sqrt(1.0 + m[4] - m[0] - m[8]) * 2.0;
      w_ = (m[2] - m[6]) / s;
      x_ = (m[1] + m[3]) / s;
      y_ = 0.25 * s;
      z_ = (m[5] + m[7]) / s;
    } else {
      double s = std::sqrt(1.0 + m[8] - m[0] - m[4]) * 2.0;
      w_ = (m[3] - m[1]) / s;
      x_ = (m[2] + m[6]) / s;
      y_ = (m[5] + m[7]) / s;
      z_ = 0.25 * s;
    }
    return {w_, x_, y_, z_};
  }

  std::array<double, 9> to_matrix() const {
    return {1 - 2 * (y * y + z * z), 2 * (x * y - w * z),     2 * (x * z + w * y),
            2 * (x * y + w * z),     1 - 2 * (x * x + z * z), 2 * (y * z - w * x),
            2 * (x * z - w * y),     2 * (y * z + w * x),     1 - 2 * (x * x + y * y)};
  }

  void normalize() {
    double n = std::sqrt(w * w + x * x + y * y + z * z);
    if (n <= 0.0) throw std::domain_error("cannot normalize zero quaternion");
    w /= n;
    x /= n;
    y /= n;
    z /= n;
  }

  UnitQuaternion canonicalized() const {
    UnitQuaternion q = *this;
    bool flip = q.w < 0.0 ||
                (q.w == 0.0 && (q.x < 0.0 || (q.x == 0.0 && (q.y < 0.0 || (q.y == 0.0 && q.z < 0.0)))));
    if (flip) {
      q.w = -q.w;
      q.x = -q.x;
      q.y = -q.y;
      q.z = -q.z;
    }
    return q;
  }

  UnitQuaternion conjugate() const { return {w, -x, -y, -z}; }
  UnitQuaternion inverse() const { return conjugate(); }

  UnitQuaternion operator*(const UnitQuaternion& o) const {
    return {w * o.w - x * o.x - y * o.y - z * o.z, w * o.x + x * o.w + y * o.z - z * o.y,
            w * o.y - x * o.z + y * o.w + z * o.x, w * o.z + x * o.y - y * o.x + z * o.w};
  }

  double dot(const UnitQuaternion& o) const { return w * o.w + x * o.x + y * o.y + z * o.z; }

  // Rotation angle in [0, pi].
  double angle() const {
    double v = std::sqrt(x * x + y * y + z * z);
    return 2.0 * std::atan2(v, std::abs(w));
  }
};

// R(q) * v
inline Vec3 rotate(const UnitQuaternion& q, const Vec3& v) {
  // v + 2 u x (u x v + w v), u = vector part
  Vec3 u{q.x, q.y, q.z};
  Vec3 t = u.cross(v) * 2.0;
  return v + t * q.w + u.cross(t);
}

// ---------------------------------------------------------------------------
// Pose: rotation then translation (world = R * local + t).
// ---------------------------------------------------------------------------

struct Pose {
  UnitQuaternion rotation;
  Vec3 translation;

  static Pose identity() { return {}; }

  Vec3 apply(const Vec3& p) const { return rotate(rotation, p) + translation; }

  Pose operator*(const Pose& o) const {
    return {rotation * o.rotation, rotate(rotation, o.translation) + translation};
  }

  Pose inverse() const {
    UnitQuaternion r = rotation.conjugate();
    return {r, rotate(r, -translation)};
  }
};

// ---------------------------------------------------------------------------
// Parallel gripper reduced to five keypoints in the grasp frame: wrist,
// two finger bases, two fingertips. Origin is the midpoint between the
// finger bases, +z the approach direction, +x the closing direction.
// ---------------------------------------------------------------------------

struct GripperModel {
  double max_width = 0.08;
  double finger_depth = 0.05;
  static constexpr int kKeypoints = 5;

  std::array<Vec3, 5> keypoints_local(double width) const {
    if (!(width >= 0.0 && width <= max_width))
      throw std::domain_error("gripper width out of [0, max_width]");
    double h = 0.5 * width;
    return {Vec3{0, 0, -0.5 * finger_depth}, Vec3{-h, 0, 0}, Vec3{h, 0, 0},
            Vec3{-h, 0, finger_depth}, Vec3{h, 0, finger_depth}};
  }
};

inline std::array<Vec3, 5> gripper_keypoints(const Pose& pose, double width,
                                             const GripperModel& model) {
  auto local = model.keypoints_local(width);
  std::array<Vec3, 5> out;
  for (int i = 0; i < 5; ++i) out[i] = pose.apply(local[i]);
  return out;
}

// ---------------------------------------------------------------------------
// Grasp frames with approach axis -normal and roll angles k*pi/count about
// the approach axis. The roll-zero closing direction is the projection of
// world +x onto the plane perpendicular to the normal (+y when the normal is
// nearly parallel to +x).
// ---------------------------------------------------------------------------

inline std::vector<UnitQuaternion> semicircle_orientations(const Vec3& normal, int count) {
  double n = normal.norm();
  if (n <= 0.0) throw std::domain_error("zero-length normal");
  if (std::abs(n - 1.0) > 1e-6) throw std::domain_error("normal must be unit length");
  if (count < 1) throw std::domain_error("count must be >= 1");

  Vec3 nn = normal / n;
  Vec3 approach = -nn;
  Vec3 ref = std::abs(nn.x) > 0.99 ? Vec3{0, 1, 0} : Vec3{1, 0, 0};
  Vec3 tangent = (ref - nn * ref.dot(nn)).normalized();

  std::vector<UnitQuaternion> out;
  out.reserve(std::size_t(count));
  for (int k = 0; k < count; ++k) {
    double theta = double(k) * M_PI / double(count);
    // tangent rotated about approach; tangent is perpendicular to approach
    Vec3 closing = tangent * std::cos(theta) + approach.cross(tangent) * std::sin(theta);
    Vec3 xa = closing, za = approach, ya = za.cross(xa);
    out.push_back(UnitQuaternion::from_matrix({xa.x, ya.x, za.x,  //
                                               xa.y, ya.y, za.y,  //
                                               xa.z, ya.z, za.z})
                      .canonicalized());
  }
  return out;
}

}  // namespace vg
