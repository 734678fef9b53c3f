#pragma once

#include <Eigen/Dense>
#include <Eigen/Geometry>

namespace foldboard {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Quat = Eigen::Quaterniond;
using Transform = Eigen::Isometry3d;

/// Pinhole camera. Camera frame looks along +z; pixel (0,0) is the top-left
/// corner, x right, y down.
struct CameraModel {
    Transform world_to_camera = Transform::Identity();
    double fx = 200.0;
    double fy = 200.0;
    double cx = 80.0;
    double cy = 60.0;
    int width = 160;
    int height = 120;

    /// False when the point is at or behind the image plane; pixel untouched.
    bool project(const Vec3& world, Vec2* pixel) const {
        const Vec3 pc = world_to_camera * world;
        if (pc.z() <= 1e-9) return false;
        if (pixel) {
            pixel->x() = fx * pc.x() / pc.z() + cx;
            pixel->y() = fy * pc.y() / pc.z() + cy;
        }
        return true;
    }

    bool in_image(const Vec2& pixel) const {
        return pixel.x() >= 0.0 && pixel.x() <= width - 1.0 &&
               pixel.y() >= 0.0 && pixel.y() <= height - 1.0;
    }

    static CameraModel look_at(const Vec3& eye, const Vec3& target, const Vec3& up,
                               double fx, double fy, int width, int height) {
        CameraModel cam;
        cam.fx = fx;
        cam.fy = fy;
        cam.width = width;
        cam.height = height;
        cam.cx = 0.5 * width;
        cam.cy = 0.5 * height;
        const Vec3 fwd = (target - eye).normalized();
        Vec3 right = fwd.cross(up);
        if (right.norm() < 1e-12) right = fwd.cross(Vec3::UnitX());
        right.normalize();
        const Vec3 down = fwd.cross(right);
        Eigen::Matrix3d r_cam_world;
        r_cam_world.row(0) = right.transpose();
        r_cam_world.row(1) = down.transpose();
        r_cam_world.row(2) = fwd.transpose();
        cam.world_to_camera.linear() = r_cam_world;
        cam.world_to_camera.translation() = -r_cam_world * eye;
        return cam;
    }
};

}  // namespace foldboard
