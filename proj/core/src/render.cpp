#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <vector>

#include "board_geometry.hpp"
#include "foldboard/sim.hpp"

namespace foldboard::sim {

namespace {

using detail::fold_point;
using detail::section_normal;
using detail::section_rect;

struct Tri {
    Vec3 a, b, c;
    float color[3];
    std::uint8_t label;
};

const float kSectionColors[4][3] = {
    {0.80f, 0.20f, 0.20f},  // center
    {0.20f, 0.70f, 0.20f},  // left flap
    {0.20f, 0.40f, 0.90f},  // right flap
    {0.80f, 0.70f, 0.10f},  // mid flap
};
const float kClothColor[3] = {0.97f, 0.97f, 0.97f};
const float kEffectorColor[3] = {0.90f, 0.20f, 0.90f};
const float kBackground[3] = {0.08f, 0.08f, 0.10f};

void push_quad(std::vector<Tri>* tris, const Vec3& p0, const Vec3& p1, const Vec3& p2,
               const Vec3& p3, const float color[3], std::uint8_t label) {
    Tri t1{p0, p1, p2, {color[0], color[1], color[2]}, label};
    Tri t2{p0, p2, p3, {color[0], color[1], color[2]}, label};
    tris->push_back(t1);
    tris->push_back(t2);
}

std::vector<Tri> build_scene(const EnvConfig& cfg, const FoldEnvState& state) {
    std::vector<Tri> tris;

    for (int section = 0; section < 4; ++section) {
        const auto r = section_rect(cfg, section);
        const Vec2 corners[4] = {Vec2(r[0], r[2]), Vec2(r[1], r[2]), Vec2(r[1], r[3]),
                                 Vec2(r[0], r[3])};
        Vec3 world[4];
        for (int i = 0; i < 4; ++i)
            world[i] = fold_point(cfg, section, corners[i], state.flap_angles);
        push_quad(&tris, world[0], world[1], world[2], world[3], kSectionColors[section],
                  static_cast<std::uint8_t>(static_cast<int>(SceneLabel::CenterPanel) + section));
    }

    for (int section = 0; section < 4; ++section) {
        const auto& poly = state.cloth_extent[section];
        if (poly.size() < 3) continue;
        const Vec3 n = section_normal(section, state.flap_angles);
        Vec3 world[4];
        for (int i = 0; i < 4; ++i)
            world[i] = fold_point(cfg, section, poly[i], state.flap_angles) + cfg.cloth_offset * n;
        push_quad(&tris, world[0], world[1], world[2], world[3], kClothColor,
                  static_cast<std::uint8_t>(SceneLabel::Cloth));
    }

    // end-effector bottom disc as a triangle fan
    constexpr int kDiscSegments = 12;
    const Eigen::Matrix3d rot = state.ee_rotation.toRotationMatrix();
    const Vec3 center = state.ee_position;
    for (int i = 0; i < kDiscSegments; ++i) {
        const double a0 = 2.0 * M_PI * i / kDiscSegments;
        const double a1 = 2.0 * M_PI * (i + 1) / kDiscSegments;
        const Vec3 p0 = center + rot * Vec3(cfg.disc_radius * std::cos(a0),
                                            cfg.disc_radius * std::sin(a0), 0.0);
        const Vec3 p1 = center + rot * Vec3(cfg.disc_radius * std::cos(a1),
                                            cfg.disc_radius * std::sin(a1), 0.0);
        Tri t{center, p0, p1,
              {kEffectorColor[0], kEffectorColor[1], kEffectorColor[2]},
              static_cast<std::uint8_t>(SceneLabel::Effector)};
        tris.push_back(t);
    }
    return tris;
}

}  // namespace

RenderResult FoldEnv::render(const FoldEnvState& state, const CameraModel& view) const {
    Vec2 probe;
    if (!view.project(Vec3(0.0, -0.1, 0.0), &probe))
        throw std::invalid_argument("sim-camera-behind-scene");

    const int w = view.width;
    const int h = view.height;
    RenderResult out;
    out.frame = Image(w, h, 3);
    out.world = Image(w, h, 3, 0.0f);
    out.valid = Mask(w, h);
    out.labels.assign(static_cast<std::size_t>(w) * h,
                      static_cast<std::uint8_t>(SceneLabel::Background));
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x)
            for (int c = 0; c < 3; ++c) out.frame.at(x, y, c) = kBackground[c];

    std::vector<float> zbuf(static_cast<std::size_t>(w) * h,
                            std::numeric_limits<float>::infinity());

    const std::vector<Tri> scene = build_scene(config_, state);
    for (const Tri& tri : scene) {
        // camera-space depths and projections
        const Vec3 pc[3] = {view.world_to_camera * tri.a, view.world_to_camera * tri.b,
                            view.world_to_camera * tri.c};
        if (pc[0].z() <= 1e-6 || pc[1].z() <= 1e-6 || pc[2].z() <= 1e-6) continue;
        Vec2 px[3];
        for (int i = 0; i < 3; ++i) {
            px[i].x() = view.fx * pc[i].x() / pc[i].z() + view.cx;
            px[i].y() = view.fy * pc[i].y() / pc[i].z() + view.cy;
        }
        const double area = (px[1].x() - px[0].x()) * (px[2].y() - px[0].y()) -
                            (px[2].x() - px[0].x()) * (px[1].y() - px[0].y());
        if (std::abs(area) < 1e-12) continue;

        const int x_min = std::max(0, static_cast<int>(std::floor(
                                          std::min({px[0].x(), px[1].x(), px[2].x()}))));
        const int x_max = std::min(w - 1, static_cast<int>(std::ceil(
                                              std::max({px[0].x(), px[1].x(), px[2].x()}))));
        const int y_min = std::max(0, static_cast<int>(std::floor(
                                          std::min({px[0].y(), px[1].y(), px[2].y()}))));
        const int y_max = std::min(h - 1, static_cast<int>(std::ceil(
                                              std::max({px[0].y(), px[1].y(), px[2].y()}))));

        const Vec3 verts[3] = {tri.a, tri.b, tri.c};
        for (int y = y_min; y <= y_max; ++y) {
            for (int x = x_min; x <= x_max; ++x) {
                const double qx = x + 0.0;  // pixel centers at integer coordinates
                const double qy = y + 0.0;
                const double w0 = ((px[1].x() - qx) * (px[2].y() - qy) -
                                   (px[2].x() - qx) * (px[1].y() - qy)) /
                                  area;
                const double w1 = ((px[2].x() - qx) * (px[0].y() - qy) -
                                   (px[0].x() - qx) * (px[2].y() - qy)) /
                                  area;
                const double w2 = 1.0 - w0 - w1;
                if (w0 < 0.0 || w1 < 0.0 || w2 < 0.0) continue;

                // perspective-correct interpolation via 1/z
                const double inv_z =
                    w0 / pc[0].z() + w1 / pc[1].z() + w2 / pc[2].z();
                const double z = 1.0 / inv_z;
                const std::size_t idx = static_cast<std::size_t>(y) * w + x;
                if (z >= zbuf[idx]) continue;
                zbuf[idx] = static_cast<float>(z);

                Vec3 world = Vec3::Zero();
                for (int i = 0; i < 3; ++i)
                    world += (i == 0 ? w0 : i == 1 ? w1 : w2) / pc[i].z() * verts[i];
                world *= z;

                for (int c = 0; c < 3; ++c) out.frame.at(x, y, c) = tri.color[c];
                for (int c = 0; c < 3; ++c) out.world.at(x, y, c) = static_cast<float>(world[c]);
                out.valid.set(x, y, true);
                out.labels[idx] = tri.label;
            }
        }
    }
    return out;
}

}  // namespace foldboard::sim
