#pragma once

// Internal board-geometry helpers shared by the simulator core and renderer.

#include <array>
#include <cmath>

#include "foldboard/geometry.hpp"
#include "foldboard/sim.hpp"

namespace foldboard::sim::detail {

constexpr int kSectionCenter = 0;
constexpr int kSectionLeft = 1;
constexpr int kSectionRight = 2;
constexpr int kSectionMid = 3;

inline int task_section(FoldTask t) {
    switch (t) {
        case FoldTask::Left: return kSectionLeft;
        case FoldTask::Right: return kSectionRight;
        case FoldTask::Mid: return kSectionMid;
    }
    return kSectionLeft;
}

inline int task_flap_index(FoldTask t) { return static_cast<int>(t); }

inline double flap_reach(const EnvConfig& cfg, FoldTask t) {
    return t == FoldTask::Mid ? cfg.mid_flap_height : cfg.side_flap_width;
}

inline double lift_height(const EnvConfig& cfg, double theta) {
    return cfg.board_lift * 0.5 * (1.0 - std::cos(theta));
}

/// Section rectangle in unfolded board coordinates: {xmin, xmax, ymin, ymax}.
inline std::array<double, 4> section_rect(const EnvConfig& cfg, int section) {
    const double hw = cfg.center_width / 2.0;
    const double hh = cfg.center_height / 2.0;
    switch (section) {
        case kSectionCenter: return {-hw, hw, -hh, hh};
        case kSectionLeft: return {-hw - cfg.side_flap_width, -hw, -hh, hh};
        case kSectionRight: return {hw, hw + cfg.side_flap_width, -hh, hh};
        default: return {-hw, hw, -hh - cfg.mid_flap_height, -hh};
    }
}

inline Vec3 fold_point(const EnvConfig& cfg, int section, const Vec2& p,
                       const Eigen::Vector3d& angles) {
    const double hw = cfg.center_width / 2.0;
    const double hh = cfg.center_height / 2.0;
    switch (section) {
        case kSectionLeft: {
            const double theta = angles[0];
            const double d = -hw - p.x();
            return {-hw - d * std::cos(theta), p.y(),
                    d * std::sin(theta) + lift_height(cfg, theta)};
        }
        case kSectionRight: {
            const double theta = angles[1];
            const double d = p.x() - hw;
            return {hw + d * std::cos(theta), p.y(),
                    d * std::sin(theta) + lift_height(cfg, theta)};
        }
        case kSectionMid: {
            const double theta = angles[2];
            const double d = -hh - p.y();
            return {p.x(), -hh - d * std::cos(theta),
                    d * std::sin(theta) + lift_height(cfg, theta)};
        }
        default:
            return {p.x(), p.y(), 0.0};
    }
}

inline Vec3 section_normal(int section, const Eigen::Vector3d& angles) {
    switch (section) {
        case kSectionLeft: return {std::sin(angles[0]), 0.0, std::cos(angles[0])};
        case kSectionRight: return {-std::sin(angles[1]), 0.0, std::cos(angles[1])};
        case kSectionMid: return {0.0, std::sin(angles[2]), std::cos(angles[2])};
        default: return {0.0, 0.0, 1.0};
    }
}

}  // namespace foldboard::sim::detail
