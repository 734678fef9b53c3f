#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "foldboard/geometry.hpp"
#include "foldboard/rng.hpp"
#include "foldboard/stg.hpp"

namespace foldboard::policy {

/// Relative pose alteration of the end-effector: position shift plus a
/// quaternion shift. The rotation is recovered as normalize(identity + dq)
/// and composed by Hamilton product, so the zero action is a no-op and small
/// components mean small rotations.
struct ActionDelta {
    Vec3 dpos = Vec3::Zero();
    Eigen::Vector4d dq = Eigen::Vector4d::Zero();  // (w, x, y, z) shift

    Quat rotation() const;
    ActionDelta inverse() const;
    Eigen::VectorXd to_vector() const;  // 7-dim (dx, dy, dz, dq1..dq4)
    static ActionDelta from_vector(const Eigen::VectorXd& v);
    /// Delta taking prev to cur: cur = rotation() * prev (renormalized).
    static ActionDelta between(const Vec3& pos_prev, const Quat& rot_prev, const Vec3& pos_cur,
                               const Quat& rot_cur);
};

constexpr int kActionDim = 7;

/// Simulator observation consumed by the state vectorization; an unresolved
/// anchor (neither detected nor inferred) is an error.
struct StateObservation {
    Vec3 ee_position = Vec3::Zero();
    Eigen::VectorXd joint_angles;
    std::vector<std::optional<Vec3>> anchors;
};

/// [ee position (3) | joint angles | anchor positions (3 each) |
///  ee-to-anchor distances (1 each)].
Eigen::VectorXd state_vector(const StateObservation& obs);

/// Time-varying linear-Gaussian controller: a_t ~ N(K_t s_t + k_t, Sigma_t).
struct TvlgPolicy {
    std::vector<Eigen::MatrixXd> gains;        // K_t, action_dim x state_dim
    std::vector<Eigen::VectorXd> biases;       // k_t
    std::vector<Eigen::MatrixXd> covariances;  // Sigma_t, SPD

    int horizon() const { return static_cast<int>(biases.size()); }
    int state_dim() const { return gains.empty() ? 0 : static_cast<int>(gains[0].cols()); }
    int action_dim() const { return biases.empty() ? 0 : static_cast<int>(biases[0].size()); }

    Eigen::VectorXd mean(const Eigen::VectorXd& s, int t) const;
    void validate() const;

    void save(const std::string& path) const;
    static TvlgPolicy load(const std::string& path);

    /// K = 0, k_t = the given open-loop actions, Sigma = stddev^2 I.
    static TvlgPolicy open_loop(const std::vector<Eigen::VectorXd>& actions, int state_dim,
                                double stddev);
};

Eigen::VectorXd sample_action(const TvlgPolicy& policy, const Eigen::VectorXd& s, int t,
                              Rng& rng);
Eigen::VectorXd sample_action(const TvlgPolicy& policy, const Eigen::VectorXd& s, int t,
                              std::uint64_t seed);

/// One rollout: states (horizon + 1 when the final state is kept), actions
/// and realized per-step costs.
struct Trajectory {
    std::vector<Eigen::VectorXd> states;
    std::vector<Eigen::VectorXd> actions;
    std::vector<double> costs;

    int horizon() const { return static_cast<int>(actions.size()); }
};

double trajectory_cost(const Trajectory& traj);

/// Graph dissimilarity at one aligned time step plus an action-magnitude
/// penalty.
double step_cost(const stg::SpatioTemporalGraph& gE, const stg::SpatioTemporalGraph& gR,
                 const stg::EdgeMask& mask, double action_penalty, const Eigen::VectorXd& action);

/// Per-step conditional s_{t+1} ~ N(A_t s_t + B_t a_t + c_t, W_t).
struct LinearGaussianDynamics {
    std::vector<Eigen::MatrixXd> A;
    std::vector<Eigen::MatrixXd> B;
    std::vector<Eigen::VectorXd> c;
    std::vector<Eigen::MatrixXd> W;

    int horizon() const { return static_cast<int>(A.size()); }
};

/// Mean-normalized ridge regression per time step; the intercept is not
/// penalized, so duplicated rollouts fit identically and constant targets
/// land entirely in c_t.
LinearGaussianDynamics fit_dynamics(const std::vector<Trajectory>& rollouts, double reg);

/// Quadratic expansion of a step cost in absolute (s, a) coordinates:
/// l(x) ~ 0.5 x^T H x + g^T x + const, x = [s; a].
struct QuadCost {
    Eigen::MatrixXd hessian;
    Eigen::VectorXd gradient;
};

using StepCostFn = std::function<double(const Eigen::VectorXd& s, const Eigen::VectorXd& a, int t)>;

/// Finite-difference quadratic expansion around a nominal point, eigenvalue
/// clamped to be positive definite, with Levenberg damping.
QuadCost quadratize_cost(const StepCostFn& cost, const Eigen::VectorXd& s_nom,
                         const Eigen::VectorXd& a_nom, int t, double damping = 1e-3,
                         double fd_step = 1e-4);

/// Riccati backward recursion on the fitted dynamics. step_costs has one
/// entry per action step and terminal is a state-only expansion for the
/// post-horizon state. Sigma_t is the inverse action-value Hessian block.
TvlgPolicy lqr_backward(const LinearGaussianDynamics& dyn,
                        const std::vector<QuadCost>& step_costs, const QuadCost& terminal);

/// Softmax weights over rollout cost-to-go values, shift invariant.
std::vector<double> pi2_weights(const std::vector<double>& cost_to_go, double temperature);

/// Model-free correction: per-step exponentiated-cost reweighting of rollout
/// actions into new biases. Gains and covariances are left untouched. When
/// every rollout carries identical costs and actions the policy is returned
/// unchanged.
TvlgPolicy pi2_update(const TvlgPolicy& policy, const std::vector<Trajectory>& rollouts,
                      double temperature);

struct PilqrOptions {
    double dynamics_reg = 1e-4;
    double temperature = 1.0;
    double mb_fraction = 0.5;  // convex mix of LQR and PI2 biases
    double damping = 1e-3;
    double min_stddev = 1e-4;  // clamp on the LQR covariance eigenvalues
    double max_stddev = 0.05;
};

/// One optimization step: LQR on fitted dynamics and the quadratized cost,
/// then a PI2 bias correction from the same rollouts, convex-mixed by
/// mb_fraction.
TvlgPolicy pilqr_step(const TvlgPolicy& policy, const std::vector<Trajectory>& rollouts,
                      const StepCostFn& cost, const PilqrOptions& opts);

/// Embedding-space reward: -alpha ||zE - zR||^2 - beta sqrt(gamma + ||zE - zR||^2).
double tcn_reward(const Eigen::VectorXd& ze, const Eigen::VectorXd& zr, double alpha, double beta,
                  double gamma);

}  // namespace foldboard::policy
