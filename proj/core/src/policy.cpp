#include "foldboard/policy.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "foldboard/serial.hpp"

namespace foldboard::policy {

Quat ActionDelta::rotation() const {
    Quat q(1.0 + dq[0], dq[1], dq[2], dq[3]);
    const double n = q.norm();
    if (n < 1e-12) return Quat::Identity();
    q.coeffs() /= n;
    return q;
}

ActionDelta ActionDelta::inverse() const {
    ActionDelta inv;
    inv.dpos = -dpos;
    const Quat r = rotation().conjugate();
    inv.dq << r.w() - 1.0, r.x(), r.y(), r.z();
    return inv;
}

Eigen::VectorXd ActionDelta::to_vector() const {
    Eigen::VectorXd v(kActionDim);
    v << dpos, dq;
    return v;
}

ActionDelta ActionDelta::from_vector(const Eigen::VectorXd& v) {
    if (v.size() != kActionDim) throw std::invalid_argument("policy-bad-action-dim");
    ActionDelta a;
    a.dpos = v.head<3>();
    a.dq = v.tail<4>();
    return a;
}

ActionDelta ActionDelta::between(const Vec3& pos_prev, const Quat& rot_prev, const Vec3& pos_cur,
                                 const Quat& rot_cur) {
    ActionDelta a;
    a.dpos = pos_cur - pos_prev;
    Quat d = rot_cur * rot_prev.conjugate();
    if (d.w() < 0.0) d.coeffs() = -d.coeffs();  // keep the short arc
    a.dq << d.w() - 1.0, d.x(), d.y(), d.z();
    return a;
}

Eigen::VectorXd state_vector(const StateObservation& obs) {
    for (std::size_t i = 0; i < obs.anchors.size(); ++i)
        if (!obs.anchors[i].has_value())
            throw std::invalid_argument("policy-unresolved-anchor: index=" + std::to_string(i));
    const int na = static_cast<int>(obs.anchors.size());
    const int nj = static_cast<int>(obs.joint_angles.size());
    Eigen::VectorXd s(3 + nj + 3 * na + na);
    s.head<3>() = obs.ee_position;
    s.segment(3, nj) = obs.joint_angles;
    for (int i = 0; i < na; ++i) s.segment(3 + nj + 3 * i, 3) = *obs.anchors[i];
    for (int i = 0; i < na; ++i)
        s[3 + nj + 3 * na + i] = (*obs.anchors[i] - obs.ee_position).norm();
    return s;
}

Eigen::VectorXd TvlgPolicy::mean(const Eigen::VectorXd& s, int t) const {
    return gains[t] * s + biases[t];
}

void TvlgPolicy::validate() const {
    if (gains.size() != biases.size() || gains.size() != covariances.size())
        throw std::invalid_argument("policy-inconsistent-horizon");
    for (std::size_t t = 0; t < gains.size(); ++t) {
        if (covariances[t].rows() != covariances[t].cols() ||
            covariances[t].rows() != biases[t].size())
            throw std::invalid_argument("policy-bad-covariance: t=" + std::to_string(t));
        Eigen::LLT<Eigen::MatrixXd> llt(covariances[t]);
        if (llt.info() != Eigen::Success)
            throw std::invalid_argument("policy-covariance-not-spd: t=" + std::to_string(t));
    }
}

TvlgPolicy TvlgPolicy::open_loop(const std::vector<Eigen::VectorXd>& actions, int state_dim,
                                 double stddev) {
    TvlgPolicy p;
    for (const auto& a : actions) {
        p.gains.push_back(Eigen::MatrixXd::Zero(a.size(), state_dim));
        p.biases.push_back(a);
        p.covariances.push_back(stddev * stddev *
                                Eigen::MatrixXd::Identity(a.size(), a.size()));
    }
    return p;
}

Eigen::VectorXd sample_action(const TvlgPolicy& policy, const Eigen::VectorXd& s, int t,
                              Rng& rng) {
    if (t < 0 || t >= policy.horizon())
        throw std::invalid_argument("policy-timestep-out-of-range: t=" + std::to_string(t));
    const Eigen::MatrixXd& sigma = policy.covariances[t];
    Eigen::LLT<Eigen::MatrixXd> llt(sigma);
    if (llt.info() != Eigen::Success)
        throw std::invalid_argument("policy-covariance-not-spd: t=" + std::to_string(t));
    Eigen::VectorXd z(sigma.rows());
    for (int i = 0; i < z.size(); ++i) z[i] = rng.gaussian();
    return policy.mean(s, t) + llt.matrixL() * z;
}

Eigen::VectorXd sample_action(const TvlgPolicy& policy, const Eigen::VectorXd& s, int t,
                              std::uint64_t seed) {
    Rng rng(seed);
    return sample_action(policy, s, t, rng);
}

double trajectory_cost(const Trajectory& traj) {
    double total = 0.0;
    for (double c : traj.costs) total += c;
    return total;
}

double step_cost(const stg::SpatioTemporalGraph& gE, const stg::SpatioTemporalGraph& gR,
                 const stg::EdgeMask& mask, double action_penalty,
                 const Eigen::VectorXd& action) {
    return stg::graph_dissimilarity(gE, gR, mask) + action_penalty * action.squaredNorm();
}

LinearGaussianDynamics fit_dynamics(const std::vector<Trajectory>& rollouts, double reg) {
    if (rollouts.empty()) throw std::invalid_argument("policy-no-rollouts");
    const int horizon = rollouts[0].horizon();
    for (const auto& r : rollouts)
        if (r.horizon() != horizon ||
            static_cast<int>(r.states.size()) != horizon + 1)
            throw std::invalid_argument("policy-ragged-rollouts");
    const int n = static_cast<int>(rollouts[0].states[0].size());
    const int m = static_cast<int>(rollouts[0].actions[0].size());
    const int p = n + m;
    const double count = static_cast<double>(rollouts.size());

    LinearGaussianDynamics dyn;
    for (int t = 0; t < horizon; ++t) {
        Eigen::VectorXd mean_x = Eigen::VectorXd::Zero(p);
        Eigen::VectorXd mean_y = Eigen::VectorXd::Zero(n);
        for (const auto& r : rollouts) {
            mean_x.head(n) += r.states[t];
            mean_x.tail(m) += r.actions[t];
            mean_y += r.states[t + 1];
        }
        mean_x /= count;
        mean_y /= count;

        Eigen::MatrixXd xtx = Eigen::MatrixXd::Zero(p, p);
        Eigen::MatrixXd xty = Eigen::MatrixXd::Zero(p, n);
        Eigen::VectorXd x(p);
        for (const auto& r : rollouts) {
            x.head(n) = r.states[t];
            x.tail(m) = r.actions[t];
            x -= mean_x;
            const Eigen::VectorXd y = r.states[t + 1] - mean_y;
            xtx += x * x.transpose();
            xty += x * y.transpose();
        }
        xtx /= count;
        xty /= count;
        xtx += reg * Eigen::MatrixXd::Identity(p, p);

        const Eigen::MatrixXd beta = xtx.ldlt().solve(xty);  // p x n
        if (!beta.allFinite())
            throw std::invalid_argument("policy-degenerate-dynamics-fit: t=" + std::to_string(t));
        Eigen::MatrixXd ab = beta.transpose();  // n x p
        dyn.A.push_back(ab.leftCols(n));
        dyn.B.push_back(ab.rightCols(m));
        dyn.c.push_back(mean_y - ab * mean_x);

        Eigen::MatrixXd w = Eigen::MatrixXd::Zero(n, n);
        for (const auto& r : rollouts) {
            x.head(n) = r.states[t];
            x.tail(m) = r.actions[t];
            const Eigen::VectorXd resid = r.states[t + 1] - (ab * x + dyn.c.back());
            w += resid * resid.transpose();
        }
        w /= count;
        w = 0.5 * (w + w.transpose());
        if (!w.allFinite())
            throw std::invalid_argument("policy-degenerate-noise-fit: t=" + std::to_string(t));
        dyn.W.push_back(std::move(w));
    }
    return dyn;
}

QuadCost quadratize_cost(const StepCostFn& cost, const Eigen::VectorXd& s_nom,
                         const Eigen::VectorXd& a_nom, int t, double damping, double fd_step) {
    const int n = static_cast<int>(s_nom.size());
    const int m = static_cast<int>(a_nom.size());
    const int p = n + m;
    const double h = fd_step;

    auto eval = [&](const Eigen::VectorXd& x) {
        return cost(x.head(n), x.tail(m), t);
    };
    Eigen::VectorXd x0(p);
    x0 << s_nom, a_nom;

    Eigen::VectorXd grad(p);
    for (int i = 0; i < p; ++i) {
        Eigen::VectorXd xp = x0, xm = x0;
        xp[i] += h;
        xm[i] -= h;
        grad[i] = (eval(xp) - eval(xm)) / (2.0 * h);
    }

    const double f0 = eval(x0);
    Eigen::MatrixXd hess(p, p);
    for (int i = 0; i < p; ++i) {
        for (int j = i; j < p; ++j) {
            if (i == j) {
                Eigen::VectorXd xp = x0, xm = x0;
                xp[i] += h;
                xm[i] -= h;
                hess(i, i) = (eval(xp) - 2.0 * f0 + eval(xm)) / (h * h);
            } else {
                Eigen::VectorXd xpp = x0, xpm = x0, xmp = x0, xmm = x0;
                xpp[i] += h; xpp[j] += h;
                xpm[i] += h; xpm[j] -= h;
                xmp[i] -= h; xmp[j] += h;
                xmm[i] -= h; xmm[j] -= h;
                hess(i, j) = (eval(xpp) - eval(xpm) - eval(xmp) + eval(xmm)) / (4.0 * h * h);
                hess(j, i) = hess(i, j);
            }
        }
    }

    // clamp to positive definite, then Levenberg damping
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(hess);
    Eigen::VectorXd evals = eig.eigenvalues().cwiseMax(0.0);
    hess = eig.eigenvectors() * evals.asDiagonal() * eig.eigenvectors().transpose();
    hess += damping * Eigen::MatrixXd::Identity(p, p);

    QuadCost q;
    q.hessian = 0.5 * (hess + hess.transpose());
    // expansion was around x0; shift to absolute coordinates
    q.gradient = grad - q.hessian * x0;
    return q;
}

TvlgPolicy lqr_backward(const LinearGaussianDynamics& dyn, const std::vector<QuadCost>& step_costs,
                        const QuadCost& terminal) {
    const int horizon = dyn.horizon();
    if (static_cast<int>(step_costs.size()) != horizon)
        throw std::invalid_argument("policy-cost-horizon-mismatch");
    if (horizon == 0) throw std::invalid_argument("policy-empty-horizon");
    const int n = static_cast<int>(dyn.A[0].rows());
    const int m = static_cast<int>(dyn.B[0].cols());

    Eigen::MatrixXd v_mat = terminal.hessian.size() > 0
                                ? terminal.hessian
                                : Eigen::MatrixXd::Zero(n, n);
    Eigen::VectorXd v_vec = terminal.gradient.size() > 0
                                ? terminal.gradient
                                : Eigen::VectorXd::Zero(n);

    TvlgPolicy policy;
    policy.gains.resize(horizon);
    policy.biases.resize(horizon);
    policy.covariances.resize(horizon);

    for (int t = horizon - 1; t >= 0; --t) {
        Eigen::MatrixXd fx(n, n + m);
        fx << dyn.A[t], dyn.B[t];

        Eigen::MatrixXd q_mat = step_costs[t].hessian + fx.transpose() * v_mat * fx;
        Eigen::VectorXd q_vec =
            step_costs[t].gradient + fx.transpose() * (v_vec + v_mat * dyn.c[t]);
        q_mat = 0.5 * (q_mat + q_mat.transpose());

        const Eigen::MatrixXd quu = q_mat.bottomRightCorner(m, m);
        const Eigen::MatrixXd qus = q_mat.bottomLeftCorner(m, n);
        const Eigen::VectorXd qu = q_vec.tail(m);

        Eigen::LLT<Eigen::MatrixXd> llt(quu);
        if (llt.info() != Eigen::Success)
            throw std::invalid_argument("policy-non-pd-hessian: t=" + std::to_string(t));

        policy.gains[t] = -llt.solve(qus);
        policy.biases[t] = -llt.solve(qu);
        policy.covariances[t] = llt.solve(Eigen::MatrixXd::Identity(m, m));
        policy.covariances[t] =
            0.5 * (policy.covariances[t] + policy.covariances[t].transpose());

        const Eigen::MatrixXd qss = q_mat.topLeftCorner(n, n);
        const Eigen::MatrixXd qsu = q_mat.topRightCorner(n, m);
        const Eigen::VectorXd qs = q_vec.head(n);
        const Eigen::MatrixXd& k_gain = policy.gains[t];
        const Eigen::VectorXd& k_bias = policy.biases[t];

        v_mat = qss + qsu * k_gain + k_gain.transpose() * qus + k_gain.transpose() * quu * k_gain;
        v_mat = 0.5 * (v_mat + v_mat.transpose());
        v_vec = qs + qsu * k_bias + k_gain.transpose() * (qu + quu * k_bias);
    }
    return policy;
}

std::vector<double> pi2_weights(const std::vector<double>& cost_to_go, double temperature) {
    if (cost_to_go.size() < 2) throw std::invalid_argument("policy-need-two-rollouts");
    if (!(temperature > 0.0)) throw std::invalid_argument("policy-bad-temperature");
    const double min_cost = *std::min_element(cost_to_go.begin(), cost_to_go.end());
    std::vector<double> w(cost_to_go.size());
    double sum = 0.0;
    for (std::size_t i = 0; i < w.size(); ++i) {
        w[i] = std::exp(-(cost_to_go[i] - min_cost) / temperature);
        sum += w[i];
    }
    for (auto& v : w) v /= sum;
    return w;
}

namespace {

bool rollouts_degenerate(const std::vector<Trajectory>& rollouts) {
    for (std::size_t i = 1; i < rollouts.size(); ++i) {
        for (int t = 0; t < rollouts[0].horizon(); ++t) {
            if (rollouts[i].costs[t] != rollouts[0].costs[t]) return false;
            if (rollouts[i].actions[t] != rollouts[0].actions[t]) return false;
        }
    }
    return true;
}

}  // namespace

TvlgPolicy pi2_update(const TvlgPolicy& policy, const std::vector<Trajectory>& rollouts,
                      double temperature) {
    if (rollouts.size() < 2) throw std::invalid_argument("policy-need-two-rollouts");
    if (!(temperature > 0.0)) throw std::invalid_argument("policy-bad-temperature");
    const int horizon = policy.horizon();
    for (const auto& r : rollouts)
        if (r.horizon() != horizon) throw std::invalid_argument("policy-ragged-rollouts");

    if (rollouts_degenerate(rollouts)) return policy;

    TvlgPolicy out = policy;
    std::vector<double> ctg(rollouts.size());
    for (int t = 0; t < horizon; ++t) {
        for (std::size_t i = 0; i < rollouts.size(); ++i) {
            double c = 0.0;
            for (int u = t; u < horizon; ++u) c += rollouts[i].costs[u];
            ctg[i] = c;
        }
        const std::vector<double> w = pi2_weights(ctg, temperature);
        Eigen::VectorXd k = Eigen::VectorXd::Zero(policy.action_dim());
        for (std::size_t i = 0; i < rollouts.size(); ++i) k += w[i] * rollouts[i].actions[t];
        out.biases[t] = k;
    }
    return out;
}

TvlgPolicy pilqr_step(const TvlgPolicy& policy, const std::vector<Trajectory>& rollouts,
                      const StepCostFn& cost, const PilqrOptions& opts) {
    if (rollouts.size() < 2) throw std::invalid_argument("policy-need-two-rollouts");
    if (!(opts.mb_fraction >= 0.0 && opts.mb_fraction <= 1.0))
        throw std::invalid_argument("policy-bad-mb-fraction");
    const int horizon = policy.horizon();

    const LinearGaussianDynamics dyn = fit_dynamics(rollouts, opts.dynamics_reg);

    // quadratize around the lowest-cost rollout
    std::size_t best = 0;
    for (std::size_t i = 1; i < rollouts.size(); ++i)
        if (trajectory_cost(rollouts[i]) < trajectory_cost(rollouts[best])) best = i;
    const Trajectory& nominal = rollouts[best];

    std::vector<QuadCost> step_costs;
    step_costs.reserve(horizon);
    for (int t = 0; t < horizon; ++t)
        step_costs.push_back(
            quadratize_cost(cost, nominal.states[t], nominal.actions[t], t, opts.damping));

    TvlgPolicy lqr = lqr_backward(dyn, step_costs, QuadCost{});

    // keep the exploration covariance inside sane bounds
    for (auto& sigma : lqr.covariances) {
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(sigma);
        Eigen::VectorXd evals = eig.eigenvalues()
                                    .cwiseMax(opts.min_stddev * opts.min_stddev)
                                    .cwiseMin(opts.max_stddev * opts.max_stddev);
        sigma = eig.eigenvectors() * evals.asDiagonal() * eig.eigenvectors().transpose();
        sigma = 0.5 * (sigma + sigma.transpose());
    }

    const TvlgPolicy pi2 = pi2_update(policy, rollouts, opts.temperature);

    TvlgPolicy out = lqr;
    for (int t = 0; t < horizon; ++t)
        out.biases[t] =
            opts.mb_fraction * lqr.biases[t] + (1.0 - opts.mb_fraction) * pi2.biases[t];
    return out;
}

double tcn_reward(const Eigen::VectorXd& ze, const Eigen::VectorXd& zr, double alpha, double beta,
                  double gamma) {
    if (ze.size() != zr.size()) throw std::invalid_argument("policy-embedding-dim-mismatch");
    if (!(gamma > 0.0)) throw std::invalid_argument("policy-bad-gamma");
    const double d2 = (ze - zr).squaredNorm();
    return -alpha * d2 - beta * std::sqrt(gamma + d2);
}

void TvlgPolicy::save(const std::string& path) const {
    TextModel m;
    m.type = "tvlg-policy";
    const int horizon_len = horizon();
    const int n = state_dim();
    const int a = action_dim();
    m.fields["horizon"] = {static_cast<double>(horizon_len)};
    m.fields["state_dim"] = {static_cast<double>(n)};
    m.fields["action_dim"] = {static_cast<double>(a)};
    std::vector<double> gains_flat, biases_flat, cov_flat;
    for (int t = 0; t < horizon_len; ++t) {
        for (int c = 0; c < n; ++c)
            for (int r = 0; r < a; ++r) gains_flat.push_back(gains[t](r, c));
        for (int r = 0; r < a; ++r) biases_flat.push_back(biases[t][r]);
        for (int c = 0; c < a; ++c)
            for (int r = 0; r < a; ++r) cov_flat.push_back(covariances[t](r, c));
    }
    m.fields["gains"] = std::move(gains_flat);
    m.fields["biases"] = std::move(biases_flat);
    m.fields["covariances"] = std::move(cov_flat);
    m.save(path);
}

TvlgPolicy TvlgPolicy::load(const std::string& path) {
    const TextModel m = TextModel::load(path);
    if (m.type != "tvlg-policy") throw std::runtime_error("model-wrong-type: " + m.type);
    const int horizon_len = static_cast<int>(m.scalar("horizon"));
    const int n = static_cast<int>(m.scalar("state_dim"));
    const int a = static_cast<int>(m.scalar("action_dim"));
    const auto& g = m.field("gains");
    const auto& b = m.field("biases");
    const auto& s = m.field("covariances");
    if (static_cast<int>(g.size()) != horizon_len * n * a ||
        static_cast<int>(b.size()) != horizon_len * a ||
        static_cast<int>(s.size()) != horizon_len * a * a)
        throw std::runtime_error("model-bad-policy-size");
    TvlgPolicy p;
    for (int t = 0; t < horizon_len; ++t) {
        p.gains.push_back(
            Eigen::Map<const Eigen::MatrixXd>(g.data() + static_cast<std::size_t>(t) * n * a, a, n));
        p.biases.push_back(
            Eigen::Map<const Eigen::VectorXd>(b.data() + static_cast<std::size_t>(t) * a, a));
        p.covariances.push_back(
            Eigen::Map<const Eigen::MatrixXd>(s.data() + static_cast<std::size_t>(t) * a * a, a, a));
    }
    return p;
}

}  // namespace foldboard::policy
