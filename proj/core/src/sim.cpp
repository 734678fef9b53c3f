#include "foldboard/sim.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "board_geometry.hpp"
#include "foldboard/rng.hpp"

namespace foldboard::sim {

using detail::flap_reach;
using detail::fold_point;
using detail::lift_height;
using detail::section_normal;
using detail::section_rect;
using detail::task_flap_index;
using detail::task_section;

const char* task_name(FoldTask t) {
    switch (t) {
        case FoldTask::Left: return "left";
        case FoldTask::Right: return "right";
        case FoldTask::Mid: return "mid";
    }
    return "left";
}

FoldTask task_from_name(const std::string& name) {
    if (name == "left") return FoldTask::Left;
    if (name == "right") return FoldTask::Right;
    if (name == "mid") return FoldTask::Mid;
    throw std::invalid_argument("sim-unknown-task: " + name);
}

const char* subprocess_name(SubProcess p) {
    switch (p) {
        case SubProcess::Approaching: return "approaching";
        case SubProcess::Lifting: return "lifting";
        case SubProcess::Rotating: return "rotating";
        case SubProcess::Pushing: return "pushing";
    }
    return "approaching";
}

void EnvConfig::validate() const {
    if (center_width <= 0 || center_height <= 0 || side_flap_width <= 0 || mid_flap_height <= 0)
        throw std::invalid_argument("sim-bad-board-dimensions");
    if (capture_radius <= 0) throw std::invalid_argument("sim-bad-capture-radius");
    if (home_height <= 0) throw std::invalid_argument("sim-bad-home-height");
    if (observation_noise_std < 0) throw std::invalid_argument("sim-bad-noise-std");
    if (n_joints < 1) throw std::invalid_argument("sim-bad-joint-count");
    if (image_width < 16 || image_height < 16) throw std::invalid_argument("sim-bad-image-size");
}

namespace {

Eigen::VectorXd mock_joint_angles(const EnvConfig& cfg, const Vec3& pos, const Quat& rot) {
    Eigen::VectorXd joints = Eigen::VectorXd::Zero(cfg.n_joints);
    for (int i = 0; i < std::min(3, cfg.n_joints); ++i) joints[i] = 2.0 * pos[i];
    const Eigen::AngleAxisd aa(rot);
    const Vec3 rotvec = aa.axis() * aa.angle();
    for (int i = 3; i < std::min(6, cfg.n_joints); ++i) joints[i] = rotvec[i - 3];
    return joints;
}

std::uint64_t step_noise_key(const FoldEnvState& state) {
    return state.noise_seed ^ (0x9E3779B97F4A7C15ULL * (static_cast<std::uint64_t>(state.step_count) + 1));
}

constexpr double kWorkspace[6] = {-0.9, 0.9, -1.0, 0.6, 0.0, 1.1};

}  // namespace

FoldEnv::FoldEnv(EnvConfig config) : config_(config) { config_.validate(); }

FoldEnvState FoldEnv::reset(FoldTask task, std::uint64_t seed) const {
    FoldEnvState s;
    s.task = task;
    s.flap_angles.setZero();
    s.ee_position = Vec3(0.0, 0.0, config_.home_height);
    s.ee_rotation = Quat::Identity();
    s.joint_angles = mock_joint_angles(config_, s.ee_position, s.ee_rotation);
    const double m = config_.cloth_margin;
    for (int section = 0; section < 4; ++section) {
        const auto r = section_rect(config_, section);
        s.cloth_extent[section] = {Vec2(r[0] + m, r[2] + m), Vec2(r[1] - m, r[2] + m),
                                   Vec2(r[1] - m, r[3] - m), Vec2(r[0] + m, r[3] - m)};
    }
    s.noise_seed = seed;
    s.step_count = 0;
    s.in_contact = false;
    return s;
}

void FoldEnv::flap_edge(const FoldEnvState& state, FoldTask flap, Vec3* e0, Vec3* e1) const {
    const auto r = section_rect(config_, task_section(flap));
    Vec2 p0, p1;
    if (flap == FoldTask::Left) {
        p0 = Vec2(r[0], r[2]);
        p1 = Vec2(r[0], r[3]);
    } else if (flap == FoldTask::Right) {
        p0 = Vec2(r[1], r[2]);
        p1 = Vec2(r[1], r[3]);
    } else {
        p0 = Vec2(r[0], r[2]);
        p1 = Vec2(r[1], r[2]);
    }
    *e0 = fold_point(config_, task_section(flap), p0, state.flap_angles);
    *e1 = fold_point(config_, task_section(flap), p1, state.flap_angles);
}

Vec3 FoldEnv::fold_tangent(const FoldEnvState& state, FoldTask flap) const {
    const double theta = state.flap_angles[task_flap_index(flap)];
    const double reach = flap_reach(config_, flap);
    const double dlift = config_.board_lift * 0.5 * std::sin(theta);
    Vec3 t;
    if (flap == FoldTask::Left)
        t = Vec3(reach * std::sin(theta), 0.0, reach * std::cos(theta) + dlift);
    else if (flap == FoldTask::Right)
        t = Vec3(-reach * std::sin(theta), 0.0, reach * std::cos(theta) + dlift);
    else
        t = Vec3(0.0, reach * std::sin(theta), reach * std::cos(theta) + dlift);
    return t.normalized();
}

std::vector<Vec3> FoldEnv::active_corners(const FoldEnvState& state) const {
    const int section = task_section(state.task);
    const auto r = section_rect(config_, section);
    std::vector<Vec2> board;
    if (state.task == FoldTask::Left)
        board = {Vec2(r[0], r[2]), Vec2(r[0], r[3]), Vec2(r[1], r[2]), Vec2(r[1], r[3])};
    else if (state.task == FoldTask::Right)
        board = {Vec2(r[1], r[2]), Vec2(r[1], r[3]), Vec2(r[0], r[2]), Vec2(r[0], r[3])};
    else
        board = {Vec2(r[0], r[2]), Vec2(r[1], r[2]), Vec2(r[0], r[3]), Vec2(r[1], r[3])};
    std::vector<Vec3> out;
    out.reserve(4);
    for (const auto& p : board) out.push_back(fold_point(config_, section, p, state.flap_angles));
    return out;
}

double FoldEnv::active_angle(const FoldEnvState& state) const {
    return state.flap_angles[task_flap_index(state.task)];
}

namespace {

double point_segment_distance3(const Vec3& p, const Vec3& a, const Vec3& b) {
    const Vec3 v = b - a;
    const double len2 = v.squaredNorm();
    double t = len2 > 0.0 ? (p - a).dot(v) / len2 : 0.0;
    t = std::clamp(t, 0.0, 1.0);
    return (p - (a + t * v)).norm();
}

}  // namespace

FoldEnvState FoldEnv::step(const FoldEnvState& state, const policy::ActionDelta& action) const {
    if (!action.dpos.allFinite() || !action.dq.allFinite())
        throw std::invalid_argument("sim-nonfinite-action");
    FoldEnvState next = state;
    next.step_count = state.step_count + 1;

    Vec3 pos = state.ee_position + action.dpos;
    pos.x() = std::clamp(pos.x(), kWorkspace[0], kWorkspace[1]);
    pos.y() = std::clamp(pos.y(), kWorkspace[2], kWorkspace[3]);
    pos.z() = std::clamp(pos.z(), kWorkspace[4], kWorkspace[5]);
    const Vec3 dpos = pos - state.ee_position;

    Quat rot = action.rotation() * state.ee_rotation;
    rot.normalize();

    next.ee_position = pos;
    next.ee_rotation = rot;
    next.joint_angles = mock_joint_angles(config_, pos, rot);

    // contact: disc near the active outer edge when the push begins, disc
    // face aligned with the fold tangent, displacement pushing along it
    Vec3 e0, e1;
    flap_edge(state, state.task, &e0, &e1);
    const double dist = point_segment_distance3(state.ee_position, e0, e1);
    const Vec3 tangent = fold_tangent(state, state.task);
    const Vec3 disc_normal = (state.ee_rotation * Vec3::UnitZ());
    const bool aligned = disc_normal.dot(tangent) >= config_.align_cos;
    next.in_contact = dist <= config_.capture_radius && aligned;
    if (next.in_contact) {
        const double progress = std::max(0.0, dpos.dot(tangent));
        const int fi = task_flap_index(state.task);
        next.flap_angles[fi] = std::clamp(
            state.flap_angles[fi] + progress / flap_reach(config_, state.task), 0.0, M_PI);
    }
    return next;
}

Observation FoldEnv::observe(const FoldEnvState& state) const {
    Rng rng(step_noise_key(state));
    const double sigma = config_.observation_noise_std;
    auto noisy = [&](const Vec3& p) {
        return Vec3(p.x() + rng.gaussian(0.0, sigma), p.y() + rng.gaussian(0.0, sigma),
                    p.z() + rng.gaussian(0.0, sigma));
    };

    const std::vector<Vec3> corners = active_corners(state);
    std::vector<Vec3> noisy_corners;
    noisy_corners.reserve(corners.size());
    for (const auto& c : corners) noisy_corners.push_back(noisy(c));
    const Vec3 noisy_ee = noisy(state.ee_position);

    Observation obs;
    obs.state.ee_position = noisy_ee;
    obs.state.joint_angles = state.joint_angles;
    for (const auto& c : noisy_corners) obs.state.anchors.emplace_back(c);

    stg::SpatioTemporalGraph g;
    g.time_index = state.step_count + 1;
    for (int i = 0; i < 4; ++i)
        g.vertices.push_back({i, stg::VertexKind::Board, noisy_corners[i]});
    g.vertices.push_back({4, stg::VertexKind::EndEffector, noisy_ee});
    const int section = task_section(state.task);
    for (int i = 0; i < 4; ++i) {
        const Vec3 c = fold_point(config_, section, state.cloth_extent[section][i],
                                  state.flap_angles) +
                       config_.cloth_offset * section_normal(section, state.flap_angles);
        g.vertices.push_back({5 + i, stg::VertexKind::Cloth, noisy(c)});
    }
    for (int i = 0; i < 4; ++i) g.edges.push_back({4, i, 1.0});
    g.edges.push_back({0, 1, 1.0});
    g.edges.push_back({1, 3, 1.0});
    g.edges.push_back({3, 2, 1.0});
    g.edges.push_back({2, 0, 1.0});
    obs.graph = std::move(g);
    return obs;
}

CameraModel FoldEnv::default_camera() const {
    return CameraModel::look_at(Vec3(0.05, -0.9, 0.85), Vec3(0.0, -0.1, 0.0), Vec3::UnitZ(),
                                170.0, 170.0, config_.image_width, config_.image_height);
}

CameraModel FoldEnv::camera_on_arc(double azimuth) const {
    const Vec3 target(0.0, -0.1, 0.0);
    const double radius = 0.9;
    const Vec3 eye = target + Vec3(radius * std::sin(azimuth), -radius * std::cos(azimuth), 0.85);
    return CameraModel::look_at(eye, target, Vec3::UnitZ(), 170.0, 170.0, config_.image_width,
                                config_.image_height);
}

void update_outcome(EpisodeOutcome* outcome, const FoldEnv& env, const FoldEnvState& state) {
    const double theta = env.active_angle(state);
    outcome->approached = outcome->approached || state.in_contact;
    outcome->lifted = outcome->lifted || theta >= env.config().lift_angle;
    outcome->rotated = outcome->rotated || theta >= env.config().rotate_angle;
    outcome->pushed = outcome->pushed || theta >= env.config().push_angle;
}

namespace {

Quat disc_orientation(const Vec3& tangent) {
    return Quat::FromTwoVectors(Vec3::UnitZ(), tangent);
}

}  // namespace

Demonstration scripted_expert(const FoldEnv& env, FoldTask task, std::uint64_t seed,
                              const ExpertOptions& opts) {
    const EnvConfig& cfg = env.config();
    const int per_phase = opts.steps_per_phase;
    const int horizon = 4 * per_phase;
    constexpr int kPressSteps = 3;

    Demonstration demo;
    demo.task = task;
    demo.seed = seed;
    demo.horizon = horizon;
    demo.env = cfg;
    demo.camera = env.default_camera();

    FoldEnvState state = env.reset(task, seed);

    auto record_state = [&](const FoldEnvState& s) {
        const Observation obs = env.observe(s);
        demo.graphs.push_back(obs.graph);
        demo.trajectory.states.push_back(policy::state_vector(obs.state));
        if (opts.render_frames) demo.frames.push_back(env.render(s, demo.camera).frame);
    };
    record_state(state);

    // pre-contact pose just beyond the outer edge of the flat flap
    Vec3 e0, e1;
    env.flap_edge(state, task, &e0, &e1);
    const Vec3 edge_mid0 = 0.5 * (e0 + e1);
    Vec3 outward;
    if (task == FoldTask::Left)
        outward = Vec3(-1.0, 0.0, 0.0);
    else if (task == FoldTask::Right)
        outward = Vec3(1.0, 0.0, 0.0);
    else
        outward = Vec3(0.0, -1.0, 0.0);
    const Vec3 approach_target = edge_mid0 + 0.006 * outward + Vec3(0.0, 0.0, 0.004);

    auto apply_towards = [&](const Vec3& pos_target, const Quat& rot_target) {
        const policy::ActionDelta a = policy::ActionDelta::between(
            state.ee_position, state.ee_rotation, pos_target, rot_target);
        state = env.step(state, a);
        demo.trajectory.actions.push_back(a.to_vector());
        demo.trajectory.costs.push_back(0.0);
        record_state(state);
    };

    const Vec3 home = state.ee_position;
    const Quat home_rot = state.ee_rotation;
    for (int i = 1; i <= per_phase; ++i) {
        const double f = static_cast<double>(i) / per_phase;
        apply_towards(home + f * (approach_target - home), home_rot);
    }

    // one continuous arc through lifting, rotating and pushing, tracked with
    // feedback on the actual hinge angle; the last steps press down so the
    // hinge clamps at pi
    const int arc_steps = 3 * per_phase - kPressSteps;
    const int fi = task_flap_index(task);
    const double reach = flap_reach(cfg, task);
    for (int i = 0; i < arc_steps; ++i) {
        const double theta = state.flap_angles[fi];
        const int remaining = arc_steps - i;
        const double dtheta = std::min(0.35, 1.2 * (M_PI - theta) / remaining);
        const double theta_cmd = std::min(M_PI, theta + dtheta);

        FoldEnvState ghost = state;
        ghost.flap_angles[fi] = theta_cmd;
        Vec3 g0, g1;
        env.flap_edge(ghost, task, &g0, &g1);
        const Vec3 u = (task == FoldTask::Left)
                           ? Vec3(-std::cos(theta_cmd), 0.0, std::sin(theta_cmd))
                           : (task == FoldTask::Right)
                                 ? Vec3(std::cos(theta_cmd), 0.0, std::sin(theta_cmd))
                                 : Vec3(0.0, -std::cos(theta_cmd), std::sin(theta_cmd));
        const Vec3 target = 0.5 * (g0 + g1) + 0.005 * u;
        apply_towards(target, disc_orientation(env.fold_tangent(ghost, task)));
        (void)reach;
    }
    for (int i = 0; i < kPressSteps; ++i)
        apply_towards(state.ee_position + Vec3(0.0, 0.0, -0.004), state.ee_rotation);

    demo.final_state = state;
    return demo;
}

Mask cloth_mask_from_frame(const Image& frame) { return image_to_mask(frame, 0.8f); }

int fold_state_label(FoldTask task) { return static_cast<int>(task) + 1; }

bool success_check(const Image& final_frame, const shape::ClothStateModel& model, FoldTask task) {
    const Mask mask = cloth_mask_from_frame(final_frame);
    const shape::Classification c = shape::classify_state(mask, model);
    return c.label == fold_state_label(task);
}

Mask RenderResult::cloth_mask() const {
    Mask m(frame.width(), frame.height());
    for (int y = 0; y < frame.height(); ++y)
        for (int x = 0; x < frame.width(); ++x)
            m.set(x, y, label_at(x, y) == SceneLabel::Cloth);
    return m;
}

}  // namespace foldboard::sim
