#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <stdexcept>

// Pinhole camera model. Convention: pose maps world to camera (x_cam = R x + t),
// +z looks forward, +y down the image, pixel origin at the top-left,
// (u,v) = (column,row). All geometry runs in double.

namespace mvu {

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;

struct Intrinsics {
  double fx = 0, fy = 0, cx = 0, cy = 0;
  int width = 0, height = 0;

  void validate() const {
    if (!(fx > 0) || !(fy > 0)) throw std::invalid_argument("intrinsics: focal lengths must be positive");
    if (!(cx >= 0 && cx < width) || !(cy >= 0 && cy < height))
      throw std::invalid_argument("intrinsics: principal point outside image");
  }
};

struct Pose {
  Mat3 rotation = Mat3::Identity();  // world-to-camera
  Vec3 translation = Vec3::Zero();

  void validate() const {
    const Mat3 rtr = rotation.transpose() * rotation;
    if ((rtr - Mat3::Identity()).cwiseAbs().maxCoeff() > 1e-6 ||
        std::abs(rotation.determinant() - 1.0) > 1e-6)
      throw std::invalid_argument("pose: rotation not orthonormal");
  }

  Vec3 camera_center() const { return -(rotation.transpose() * translation); }
};

struct Ray {
  Vec3 origin = Vec3::Zero();
  Vec3 direction = Vec3::UnitZ();  // unit norm
};

inline Ray pixel_to_ray(const Intrinsics& intr, const Pose& pose, double u, double v) {
  Ray r;
  r.origin = pose.camera_center();
  const Vec3 dir_cam((u - intr.cx) / intr.fx, (v - intr.cy) / intr.fy, 1.0);
  r.direction = (pose.rotation.transpose() * dir_cam).normalized();
  return r;
}

// Returns (u, v, camera-frame depth). Validity (depth > 0, in bounds) is the
// caller's concern, not an error.
struct Projection {
  double u = 0, v = 0, depth = 0;
};

inline Projection project(const Vec3& point, const Intrinsics& intr, const Pose& pose) {
  const Vec3 pc = pose.rotation * point + pose.translation;
  Projection p;
  p.depth = pc.z();
  if (pc.z() != 0.0) {
    p.u = intr.fx * pc.x() / pc.z() + intr.cx;
    p.v = intr.fy * pc.y() / pc.z() + intr.cy;
  }
  return p;
}

// World-to-camera pose for a camera at `eye` looking at `at`. `up_world` fixes
// the roll (+y in camera frame points opposite `up_world`).
inline Pose look_at(const Vec3& eye, const Vec3& at, const Vec3& up_world = Vec3(0, 0, 1)) {
  const Vec3 fwd = (at - eye).normalized();
  Vec3 right = fwd.cross(up_world);
  if (right.norm() < 1e-9) right = fwd.cross(Vec3(0, 1, 0));
  right.normalize();
  const Vec3 down = fwd.cross(right);  // +y down in image
  Pose pose;
  pose.rotation.row(0) = right.transpose();
  pose.rotation.row(1) = down.transpose();
  pose.rotation.row(2) = fwd.transpose();
  pose.translation = -(pose.rotation * eye);
  return pose;
}

}  // namespace mvu
