#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "foldboard/geometry.hpp"
#include "foldboard/image.hpp"
#include "foldboard/policy.hpp"
#include "foldboard/shape.hpp"
#include "foldboard/stg.hpp"

namespace foldboard::sim {

enum class FoldTask { Left, Right, Mid };
enum class SubProcess { Approaching, Lifting, Rotating, Pushing };

const char* task_name(FoldTask t);
FoldTask task_from_name(const std::string& name);
const char* subprocess_name(SubProcess p);

/// Scene geometry and simulation constants. The board lies in the z = 0
/// plane: a fixed center panel, left/right flaps hinged on its vertical
/// edges and a mid flap hinged on its bottom edge.
struct EnvConfig {
    double center_width = 0.30;
    double center_height = 0.60;
    double side_flap_width = 0.25;
    double mid_flap_height = 0.25;
    double board_lift = 0.008;      // folded flap rests this far above the center panel
    double cloth_offset = 0.0025;   // cloth sits this far above its section
    double cloth_margin = 0.02;     // cloth inset from section borders
    double home_height = 0.5;       // end-effector start, meters above the board
    double capture_radius = 0.015;  // disc-to-edge contact threshold
    double align_cos = 0.5;         // disc normal vs fold tangent, cos(60 deg)
    double disc_radius = 0.03;
    double observation_noise_std = 0.001;
    int n_joints = 6;
    int image_width = 160;
    int image_height = 120;
    // sub-process milestones on the active hinge angle
    double lift_angle = 0.25;
    double rotate_angle = M_PI / 2.0;
    double push_angle = M_PI - 0.05;

    void validate() const;
};

/// Ground-truth simulator state. Cloth polygons are stored in unfolded
/// board coordinates and fold rigidly with their section.
struct FoldEnvState {
    FoldTask task = FoldTask::Left;
    Eigen::Vector3d flap_angles = Eigen::Vector3d::Zero();  // left, right, mid in [0, pi]
    Vec3 ee_position = Vec3::Zero();
    Quat ee_rotation = Quat::Identity();
    Eigen::VectorXd joint_angles;
    std::array<std::vector<Vec2>, 4> cloth_extent;  // per section: center, left, right, mid
    std::uint64_t noise_seed = 0;
    int step_count = 0;
    bool in_contact = false;
};

/// What the vision stack would deliver: the state vectorization input plus
/// the spatiotemporal graph for the current frame, both with observation
/// noise applied.
struct Observation {
    policy::StateObservation state;
    stg::SpatioTemporalGraph graph;
};

enum class SceneLabel : std::uint8_t {
    Background = 0,
    CenterPanel,
    LeftFlap,
    RightFlap,
    MidFlap,
    Cloth,
    Effector,
};

struct RenderResult {
    Image frame;        // 3 channels
    Image world;        // 3 channels, world coordinates per pixel
    Mask valid;         // pixel covered by scene geometry
    std::vector<std::uint8_t> labels;

    SceneLabel label_at(int x, int y) const {
        return static_cast<SceneLabel>(labels[static_cast<std::size_t>(y) * frame.width() + x]);
    }
    /// Foreground mask of the visible cloth.
    Mask cloth_mask() const;
};

class FoldEnv {
public:
    explicit FoldEnv(EnvConfig config);

    const EnvConfig& config() const { return config_; }

    /// Flat flaps, cloth laid out centered, end-effector at the home
    /// position 50 cm above the board.
    FoldEnvState reset(FoldTask task, std::uint64_t seed) const;

    /// Integrates the pose delta (saturating at workspace bounds) and
    /// advances the active hinge when the disc pushes its outer edge along
    /// the fold direction. Pure: the input state is untouched.
    FoldEnvState step(const FoldEnvState& state, const policy::ActionDelta& action) const;

    /// Noisy vertex observations; deterministic for a given state.
    Observation observe(const FoldEnvState& state) const;

    RenderResult render(const FoldEnvState& state, const CameraModel& view) const;

    CameraModel default_camera() const;
    /// Cameras spread on an arc around the board, for multi-view data.
    CameraModel camera_on_arc(double azimuth) const;

    /// Outer-edge segment of a flap at its current angle.
    void flap_edge(const FoldEnvState& state, FoldTask flap, Vec3* e0, Vec3* e1) const;
    /// Direction the outer edge moves as the hinge angle grows.
    Vec3 fold_tangent(const FoldEnvState& state, FoldTask flap) const;
    /// Corners of the active flap (two outer, two hinge), anchor order.
    std::vector<Vec3> active_corners(const FoldEnvState& state) const;

    double active_angle(const FoldEnvState& state) const;

private:
    EnvConfig config_;
};

/// Cumulative milestones of one episode, in execution order.
struct EpisodeOutcome {
    bool approached = false;  // contact established
    bool lifted = false;      // hinge angle past lift_angle
    bool rotated = false;     // past rotate_angle
    bool pushed = false;      // past push_angle

    bool success() const { return approached && lifted && rotated && pushed; }
};

void update_outcome(EpisodeOutcome* outcome, const FoldEnv& env, const FoldEnvState& state);

/// One expert demonstration: frames and graphs for t = 0..T, actions and
/// per-step costs for t = 0..T-1.
struct Demonstration {
    FoldTask task = FoldTask::Left;
    std::uint64_t seed = 0;
    int horizon = 0;
    EnvConfig env;
    CameraModel camera;
    std::vector<Image> frames;
    std::vector<stg::SpatioTemporalGraph> graphs;
    policy::Trajectory trajectory;
    FoldEnvState final_state;
};

struct ExpertOptions {
    int steps_per_phase = 10;
    bool render_frames = true;
};

/// Waypoint controller executing Approaching, Lifting, Rotating, Pushing;
/// the active flap ends at angle pi.
Demonstration scripted_expert(const FoldEnv& env, FoldTask task, std::uint64_t seed,
                              const ExpertOptions& opts = {});

/// Visible-cloth foreground extracted from a rendered frame by luma
/// threshold; the cloth is the only near-white surface in the scene.
Mask cloth_mask_from_frame(const Image& frame);

/// Class labels used by the fold-state classifier.
int fold_state_label(FoldTask task);      // 1, 2, 3
constexpr int kFlatStateLabel = 0;

/// Classifies the final frame's cloth mask; success when the label matches
/// the task's folded class.
bool success_check(const Image& final_frame, const shape::ClothStateModel& model, FoldTask task);

}  // namespace foldboard::sim
