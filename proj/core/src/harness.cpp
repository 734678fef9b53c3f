#include "foldboard/harness.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

#include "foldboard/rng.hpp"
#include "foldboard/serial.hpp"
#include "foldboard/stg.hpp"

namespace foldboard::harness {

namespace fs = std::filesystem;
using nlohmann::json;

const char* reward_mode_name(RewardMode m) {
    switch (m) {
        case RewardMode::RefinedSTG: return "refined-stg";
        case RewardMode::PlainSTG: return "plain-stg";
        case RewardMode::EmbeddingBaseline: return "embedding-baseline";
    }
    return "refined-stg";
}

RewardMode reward_mode_from_name(const std::string& name) {
    if (name == "refined-stg") return RewardMode::RefinedSTG;
    if (name == "plain-stg") return RewardMode::PlainSTG;
    if (name == "embedding-baseline") return RewardMode::EmbeddingBaseline;
    throw std::invalid_argument("config-unknown-reward-mode: " + name);
}

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9E3779B97F4A7C15ULL;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
    return x ^ (x >> 31);
}

std::uint64_t mix(std::uint64_t a, std::uint64_t b) { return splitmix64(a ^ splitmix64(b)); }

std::uint64_t fnv1a(const std::string& s) {
    std::uint64_t h = 1469598103934665603ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ULL;
    }
    return h;
}

json camera_to_json(const CameraModel& cam) {
    json j;
    j["fx"] = cam.fx;
    j["fy"] = cam.fy;
    j["cx"] = cam.cx;
    j["cy"] = cam.cy;
    j["width"] = cam.width;
    j["height"] = cam.height;
    std::vector<double> m;
    for (int r = 0; r < 3; ++r)
        for (int c = 0; c < 4; ++c) m.push_back(cam.world_to_camera.matrix()(r, c));
    j["world_to_camera"] = m;
    return j;
}

CameraModel camera_from_json(const json& j) {
    CameraModel cam;
    cam.fx = j.at("fx").get<double>();
    cam.fy = j.at("fy").get<double>();
    cam.cx = j.at("cx").get<double>();
    cam.cy = j.at("cy").get<double>();
    cam.width = j.at("width").get<int>();
    cam.height = j.at("height").get<int>();
    const auto m = j.at("world_to_camera").get<std::vector<double>>();
    if (m.size() != 12) throw std::runtime_error("manifest-bad-camera");
    Eigen::Matrix4d mat = Eigen::Matrix4d::Identity();
    for (int r = 0; r < 3; ++r)
        for (int c = 0; c < 4; ++c) mat(r, c) = m[static_cast<std::size_t>(r) * 4 + c];
    cam.world_to_camera.matrix() = mat;
    return cam;
}

json env_to_json(const sim::EnvConfig& e) {
    json j;
    j["center_width"] = e.center_width;
    j["center_height"] = e.center_height;
    j["side_flap_width"] = e.side_flap_width;
    j["mid_flap_height"] = e.mid_flap_height;
    j["board_lift"] = e.board_lift;
    j["cloth_offset"] = e.cloth_offset;
    j["cloth_margin"] = e.cloth_margin;
    j["home_height"] = e.home_height;
    j["capture_radius"] = e.capture_radius;
    j["align_cos"] = e.align_cos;
    j["disc_radius"] = e.disc_radius;
    j["observation_noise_std"] = e.observation_noise_std;
    j["n_joints"] = e.n_joints;
    j["image_width"] = e.image_width;
    j["image_height"] = e.image_height;
    j["lift_angle"] = e.lift_angle;
    j["rotate_angle"] = e.rotate_angle;
    j["push_angle"] = e.push_angle;
    return j;
}

sim::EnvConfig env_from_json(const json& j) {
    sim::EnvConfig e;
    e.center_width = j.value("center_width", e.center_width);
    e.center_height = j.value("center_height", e.center_height);
    e.side_flap_width = j.value("side_flap_width", e.side_flap_width);
    e.mid_flap_height = j.value("mid_flap_height", e.mid_flap_height);
    e.board_lift = j.value("board_lift", e.board_lift);
    e.cloth_offset = j.value("cloth_offset", e.cloth_offset);
    e.cloth_margin = j.value("cloth_margin", e.cloth_margin);
    e.home_height = j.value("home_height", e.home_height);
    e.capture_radius = j.value("capture_radius", e.capture_radius);
    e.align_cos = j.value("align_cos", e.align_cos);
    e.disc_radius = j.value("disc_radius", e.disc_radius);
    e.observation_noise_std = j.value("observation_noise_std", e.observation_noise_std);
    e.n_joints = j.value("n_joints", e.n_joints);
    e.image_width = j.value("image_width", e.image_width);
    e.image_height = j.value("image_height", e.image_height);
    e.lift_angle = j.value("lift_angle", e.lift_angle);
    e.rotate_angle = j.value("rotate_angle", e.rotate_angle);
    e.push_angle = j.value("push_angle", e.push_angle);
    return e;
}

json config_to_json(const RunConfig& c) {
    json j;
    j["task"] = sim::task_name(c.task);
    j["seed"] = c.seed;
    j["mode"] = reward_mode_name(c.mode);
    j["iterations"] = c.iterations;
    j["rollouts"] = c.rollouts;
    j["action_penalty"] = c.action_penalty;
    j["init_bias_pos"] = c.init_bias_pos;
    j["init_bias_rot"] = c.init_bias_rot;
    j["explore_pos_std"] = c.explore_pos_std;
    j["explore_rot_std"] = c.explore_rot_std;
    j["mask_tau"] = c.mask_tau;
    j["pilqr"] = {{"dynamics_reg", c.pilqr.dynamics_reg},
                  {"temperature", c.pilqr.temperature},
                  {"mb_fraction", c.pilqr.mb_fraction},
                  {"damping", c.pilqr.damping},
                  {"min_stddev", c.pilqr.min_stddev},
                  {"max_stddev", c.pilqr.max_stddev}};
    j["saliency"] = {{"lambda", c.saliency.lambda},
                     {"epsilon", c.saliency.epsilon},
                     {"canny_low", c.saliency.canny_low},
                     {"canny_high", c.saliency.canny_high}};
    j["tcn_alpha"] = c.tcn_alpha;
    j["tcn_beta"] = c.tcn_beta;
    j["tcn_gamma"] = c.tcn_gamma;
    j["env"] = env_to_json(c.env);
    return j;
}

RunConfig config_from_json(const json& j) {
    RunConfig c;
    if (j.contains("task")) c.task = sim::task_from_name(j.at("task").get<std::string>());
    c.seed = j.value("seed", c.seed);
    if (j.contains("mode")) c.mode = reward_mode_from_name(j.at("mode").get<std::string>());
    c.iterations = j.value("iterations", c.iterations);
    c.rollouts = j.value("rollouts", c.rollouts);
    c.action_penalty = j.value("action_penalty", c.action_penalty);
    c.init_bias_pos = j.value("init_bias_pos", c.init_bias_pos);
    c.init_bias_rot = j.value("init_bias_rot", c.init_bias_rot);
    c.explore_pos_std = j.value("explore_pos_std", c.explore_pos_std);
    c.explore_rot_std = j.value("explore_rot_std", c.explore_rot_std);
    c.mask_tau = j.value("mask_tau", c.mask_tau);
    if (j.contains("pilqr")) {
        const auto& p = j.at("pilqr");
        c.pilqr.dynamics_reg = p.value("dynamics_reg", c.pilqr.dynamics_reg);
        c.pilqr.temperature = p.value("temperature", c.pilqr.temperature);
        c.pilqr.mb_fraction = p.value("mb_fraction", c.pilqr.mb_fraction);
        c.pilqr.damping = p.value("damping", c.pilqr.damping);
        c.pilqr.min_stddev = p.value("min_stddev", c.pilqr.min_stddev);
        c.pilqr.max_stddev = p.value("max_stddev", c.pilqr.max_stddev);
    }
    if (j.contains("saliency")) {
        const auto& s = j.at("saliency");
        c.saliency.lambda = s.value("lambda", c.saliency.lambda);
        c.saliency.epsilon = s.value("epsilon", c.saliency.epsilon);
        c.saliency.canny_low = s.value("canny_low", c.saliency.canny_low);
        c.saliency.canny_high = s.value("canny_high", c.saliency.canny_high);
    }
    c.tcn_alpha = j.value("tcn_alpha", c.tcn_alpha);
    c.tcn_beta = j.value("tcn_beta", c.tcn_beta);
    c.tcn_gamma = j.value("tcn_gamma", c.tcn_gamma);
    if (j.contains("env")) c.env = env_from_json(j.at("env"));
    return c;
}

}  // namespace

void RunConfig::validate() const {
    std::vector<std::string> problems;
    if (iterations < 0) problems.push_back("iterations must be >= 0");
    if (rollouts < 2) problems.push_back("rollouts must be >= 2");
    if (action_penalty < 0) problems.push_back("action_penalty must be >= 0");
    if (!(mask_tau > 0.0 && mask_tau <= 1.0)) problems.push_back("mask_tau must be in (0,1]");
    if (!(saliency.lambda > 0.0)) problems.push_back("saliency.lambda must be > 0");
    if (!(saliency.epsilon > 0.0 && saliency.epsilon < 1.0))
        problems.push_back("saliency.epsilon must be in (0,1)");
    if (!(saliency.canny_low < saliency.canny_high))
        problems.push_back("canny_low must be < canny_high");
    if (!(pilqr.temperature > 0.0)) problems.push_back("pilqr.temperature must be > 0");
    if (!(pilqr.mb_fraction >= 0.0 && pilqr.mb_fraction <= 1.0))
        problems.push_back("pilqr.mb_fraction must be in [0,1]");
    if (explore_pos_std <= 0.0 || explore_rot_std <= 0.0)
        problems.push_back("exploration stddevs must be > 0");
    if (!(tcn_gamma > 0.0)) problems.push_back("tcn_gamma must be > 0");
    try {
        env.validate();
    } catch (const std::exception& e) {
        problems.push_back(e.what());
    }
    if (!problems.empty()) {
        std::string msg = "config-invalid:";
        for (const auto& p : problems) msg += " [" + p + "]";
        throw std::invalid_argument(msg);
    }
}

std::string RunConfig::canonical_json() const { return config_to_json(*this).dump(); }

std::uint64_t RunConfig::hash() const { return fnv1a(canonical_json()); }

void RunConfig::save(const std::string& path) const {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("io-open-failed: " + path);
    out << config_to_json(*this).dump(2) << "\n";
}

RunConfig RunConfig::load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("io-open-failed: " + path);
    json j;
    in >> j;
    return config_from_json(j);
}

std::string RunReport::deterministic_signature() const {
    std::ostringstream out;
    out << "hash=" << config_hash << ";";
    for (const auto& it : iterations)
        out << it.iteration << "," << fmt_double(it.mean_cost) << "," << fmt_double(it.min_cost)
            << "," << it.success << ";";
    for (bool b : subprocess_success) out << b;
    out << ";" << final_success;
    return out.str();
}

void RunReport::save(const std::string& path) const {
    json j;
    j["config_hash"] = config_hash;
    json its = json::array();
    for (const auto& it : iterations)
        its.push_back({{"iteration", it.iteration},
                       {"mean_cost", it.mean_cost},
                       {"min_cost", it.min_cost},
                       {"success", it.success}});
    j["iterations"] = its;
    j["subprocess_success"] = {subprocess_success[0], subprocess_success[1],
                               subprocess_success[2], subprocess_success[3]};
    j["final_success"] = final_success;
    j["wall_clock_seconds"] = wall_clock_seconds;
    std::ofstream out(path);
    if (!out) throw std::runtime_error("io-open-failed: " + path);
    out << j.dump(2) << "\n";
}

RunReport RunReport::load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("io-open-failed: " + path);
    json j;
    in >> j;
    RunReport r;
    r.config_hash = j.at("config_hash").get<std::uint64_t>();
    for (const auto& it : j.at("iterations"))
        r.iterations.push_back({it.at("iteration").get<int>(), it.at("mean_cost").get<double>(),
                                it.at("min_cost").get<double>(), it.at("success").get<bool>()});
    const auto sp = j.at("subprocess_success");
    for (int i = 0; i < 4; ++i) r.subprocess_success[i] = sp.at(i).get<bool>();
    r.final_success = j.at("final_success").get<bool>();
    r.wall_clock_seconds = j.at("wall_clock_seconds").get<double>();
    return r;
}

void RunReport::save_metrics_csv(const std::string& path) const {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("io-open-failed: " + path);
    out << "iteration,mean_cost,min_cost,success\n";
    for (const auto& it : iterations)
        out << it.iteration << "," << fmt_double(it.mean_cost) << "," << fmt_double(it.min_cost)
            << "," << (it.success ? 1 : 0) << "\n";
}

void save_demonstration(const sim::Demonstration& demo, const std::string& dir) {
    fs::create_directories(fs::path(dir) / "frames");
    stg::save_sequence(demo.graphs, (fs::path(dir) / "graphs.stg").string());

    const auto& traj = demo.trajectory;
    const int T = traj.horizon();
    const int n = static_cast<int>(traj.states[0].size());
    const int m = T > 0 ? static_cast<int>(traj.actions[0].size()) : policy::kActionDim;
    std::ofstream out(fs::path(dir) / "trajectory.csv");
    if (!out) throw std::runtime_error("io-open-failed: " + dir + "/trajectory.csv");
    out << "t";
    for (int i = 0; i < n; ++i) out << ",s" << i;
    for (int i = 0; i < m; ++i) out << ",a" << i;
    out << ",cost\n";
    for (int t = 0; t <= T; ++t) {
        out << t;
        for (int i = 0; i < n; ++i) out << "," << fmt_double(traj.states[t][i]);
        for (int i = 0; i < m; ++i)
            out << "," << fmt_double(t < T ? traj.actions[t][i] : 0.0);
        out << "," << fmt_double(t < T ? traj.costs[t] : 0.0) << "\n";
    }
    out.close();

    for (std::size_t i = 0; i < demo.frames.size(); ++i) {
        char name[32];
        std::snprintf(name, sizeof(name), "frame_%04zu.ppm", i);
        save_image(demo.frames[i], (fs::path(dir) / "frames" / name).string());
    }

    json manifest;
    manifest["task"] = sim::task_name(demo.task);
    manifest["seed"] = demo.seed;
    manifest["horizon"] = demo.horizon;
    manifest["frame_count"] = demo.frames.size();
    manifest["camera"] = camera_to_json(demo.camera);
    manifest["env"] = env_to_json(demo.env);
    manifest["config_hash"] = fnv1a(env_to_json(demo.env).dump());
    std::ofstream mf(fs::path(dir) / "manifest.json");
    if (!mf) throw std::runtime_error("io-open-failed: " + dir + "/manifest.json");
    mf << manifest.dump(2) << "\n";
}

sim::Demonstration load_demonstration(const std::string& dir) {
    std::ifstream mf(fs::path(dir) / "manifest.json");
    if (!mf) throw std::runtime_error("io-open-failed: " + dir + "/manifest.json");
    json manifest;
    mf >> manifest;

    sim::Demonstration demo;
    demo.task = sim::task_from_name(manifest.at("task").get<std::string>());
    demo.seed = manifest.at("seed").get<std::uint64_t>();
    demo.horizon = manifest.at("horizon").get<int>();
    demo.camera = camera_from_json(manifest.at("camera"));
    if (manifest.contains("env")) demo.env = env_from_json(manifest.at("env"));

    demo.graphs = stg::load_sequence((fs::path(dir) / "graphs.stg").string());

    std::ifstream tf(fs::path(dir) / "trajectory.csv");
    if (!tf) throw std::runtime_error("io-open-failed: " + dir + "/trajectory.csv");
    std::string header;
    std::getline(tf, header);
    int n = 0, m = 0;
    {
        std::stringstream hs(header);
        std::string col;
        while (std::getline(hs, col, ',')) {
            if (col.size() > 1 && col[0] == 's') ++n;
            if (col.size() > 1 && col[0] == 'a') ++m;
        }
    }
    std::string line;
    std::vector<Eigen::VectorXd> states, actions;
    std::vector<double> costs;
    while (std::getline(tf, line)) {
        if (line.empty()) continue;
        std::stringstream ls(line);
        std::string cell;
        std::vector<double> row;
        while (std::getline(ls, cell, ',')) row.push_back(std::stod(cell));
        if (static_cast<int>(row.size()) != 1 + n + m + 1)
            throw std::runtime_error("demo-bad-trajectory-row");
        states.push_back(Eigen::Map<Eigen::VectorXd>(row.data() + 1, n));
        actions.push_back(Eigen::Map<Eigen::VectorXd>(row.data() + 1 + n, m));
        costs.push_back(row.back());
    }
    if (states.empty()) throw std::runtime_error("demo-empty-trajectory");
    // the final row is the terminal state with a zero action placeholder
    demo.trajectory.states = states;
    actions.pop_back();
    costs.pop_back();
    demo.trajectory.actions = std::move(actions);
    demo.trajectory.costs = std::move(costs);

    const std::size_t frame_count = manifest.at("frame_count").get<std::size_t>();
    for (std::size_t i = 0; i < frame_count; ++i) {
        char name[32];
        std::snprintf(name, sizeof(name), "frame_%04zu.ppm", i);
        demo.frames.push_back(load_image((fs::path(dir) / "frames" / name).string()));
    }
    return demo;
}

Eigen::VectorXd frame_embedding(const Image& frame) {
    const Mask mask = sim::cloth_mask_from_frame(frame);
    if (mask.count() == 0) return Eigen::VectorXd::Zero(shape::kStateFeatureDim);
    return shape::state_feature_vector(mask);
}

namespace {

using StepCostEvaluator = std::function<double(const sim::FoldEnvState& after,
                                               const stg::SpatioTemporalGraph& imit_graph,
                                               const Eigen::VectorXd& action, int t)>;

policy::Trajectory run_rollout(const sim::FoldEnv& env, const policy::TvlgPolicy& pol,
                               sim::FoldTask task, std::uint64_t seed,
                               const StepCostEvaluator& coster, sim::EpisodeOutcome* outcome,
                               sim::FoldEnvState* final_state) {
    policy::Trajectory traj;
    Rng action_rng(mix(seed, 0xAC710ULL));
    sim::FoldEnvState state = env.reset(task, seed);
    sim::Observation obs = env.observe(state);
    traj.states.push_back(policy::state_vector(obs.state));

    const int T = pol.horizon();
    for (int t = 0; t < T; ++t) {
        const Eigen::VectorXd a = policy::sample_action(pol, traj.states.back(), t, action_rng);
        state = env.step(state, policy::ActionDelta::from_vector(a));
        obs = env.observe(state);
        traj.states.push_back(policy::state_vector(obs.state));
        traj.actions.push_back(a);
        traj.costs.push_back(coster ? coster(state, obs.graph, a, t) : 0.0);
        if (outcome) update_outcome(outcome, env, state);
    }
    if (final_state) *final_state = state;
    return traj;
}

/// Eq-1 style cost evaluable both from graphs (rollout scoring) and from a
/// bare state vector (finite-difference quadratization).
struct GraphCostModel {
    std::vector<stg::SpatioTemporalGraph> demo_graphs;  // T+1
    std::vector<stg::EdgeMask> masks;                   // per action step
    double action_penalty = 0.0;
    int n_joints = 6;
    int n_anchors = 4;

    double from_graph(const stg::SpatioTemporalGraph& imit, const Eigen::VectorXd& action,
                      int t) const {
        return policy::step_cost(demo_graphs[t + 1], imit, masks[t], action_penalty, action);
    }

    policy::StepCostFn state_fn() const {
        // per-edge demo relative configurations, ee minus board corner
        struct Term {
            int anchor;
            double weight;
            Vec3 rel_demo;
        };
        std::vector<std::vector<Term>> terms(masks.size());
        for (std::size_t t = 0; t < masks.size(); ++t) {
            const auto& g = demo_graphs[t + 1];
            for (std::size_t e = 0; e < g.edges.size(); ++e) {
                if (!masks[t][e]) continue;
                const auto& edge = g.edges[e];
                const auto& vi = g.vertex(edge.i);
                const auto& vj = g.vertex(edge.j);
                if (vi.kind == stg::VertexKind::EndEffector &&
                    vj.kind == stg::VertexKind::Board) {
                    terms[t].push_back({vj.id, edge.weight, vi.position - vj.position});
                } else if (vi.kind == stg::VertexKind::Board &&
                           vj.kind == stg::VertexKind::EndEffector) {
                    terms[t].push_back({vi.id, edge.weight, vj.position - vi.position});
                }
            }
        }
        const int nj = n_joints;
        const double penalty = action_penalty;
        return [terms, nj, penalty](const Eigen::VectorXd& s, const Eigen::VectorXd& a, int t) {
            const Vec3 ee = s.head<3>();
            double total = penalty * a.squaredNorm();
            for (const auto& term : terms[static_cast<std::size_t>(t)]) {
                const Vec3 anchor = s.segment<3>(3 + nj + 3 * term.anchor);
                total += term.weight * (term.rel_demo - (ee - anchor)).norm();
            }
            return total;
        };
    }
};

}  // namespace

policy::Trajectory rollout_episode(const sim::FoldEnv& env, const policy::TvlgPolicy& pol,
                                   sim::FoldTask task, std::uint64_t seed,
                                   sim::EpisodeOutcome* outcome) {
    return run_rollout(env, pol, task, seed, nullptr, outcome, nullptr);
}

TrainResult run_training(const RunConfig& config, const sim::Demonstration& demo) {
    const auto t_start = std::chrono::steady_clock::now();
    config.validate();
    const sim::FoldEnv env(config.env);

    const int T = demo.trajectory.horizon();
    if (T <= 0) throw std::invalid_argument("harness-empty-demo");
    if (static_cast<int>(demo.graphs.size()) < T + 1)
        throw std::invalid_argument("harness-demo-missing-graphs");
    const int expected_state_dim = 3 + config.env.n_joints + 4 * 3 + 4;
    if (demo.trajectory.states[0].size() != expected_state_dim)
        throw std::invalid_argument("harness-demo-state-dim-mismatch");

    const bool needs_frames = config.mode != RewardMode::PlainSTG;
    if (needs_frames && static_cast<int>(demo.frames.size()) < T + 1)
        throw std::invalid_argument("harness-demo-missing-frames");

    // reward machinery per mode
    GraphCostModel graph_cost;
    std::vector<Eigen::VectorXd> demo_embeddings;
    if (config.mode != RewardMode::EmbeddingBaseline) {
        graph_cost.demo_graphs = demo.graphs;
        graph_cost.action_penalty = config.action_penalty;
        graph_cost.n_joints = config.env.n_joints;
        graph_cost.masks.resize(T);
        for (int t = 0; t < T; ++t) {
            if (config.mode == RewardMode::PlainSTG) {
                graph_cost.masks[t].assign(demo.graphs[t + 1].edges.size(), true);
            } else {
                const flow::FlowSaliencyResult r =
                    flow::run_flow_saliency(demo.frames[t], demo.frames[t + 1], config.saliency);
                graph_cost.masks[t] =
                    stg::build_edge_mask(demo.graphs[t + 1], r.score, demo.camera,
                                         config.saliency.epsilon, config.mask_tau);
            }
        }
    } else {
        demo_embeddings.reserve(T);
        for (int t = 0; t < T; ++t) demo_embeddings.push_back(frame_embedding(demo.frames[t + 1]));
    }

    StepCostEvaluator coster;
    policy::StepCostFn quad_fn;
    if (config.mode == RewardMode::EmbeddingBaseline) {
        const sim::FoldEnv* envp = &env;
        const RunConfig* cfg = &config;
        const auto* embeds = &demo_embeddings;
        const CameraModel cam = env.default_camera();
        coster = [envp, cfg, embeds, cam](const sim::FoldEnvState& after,
                                          const stg::SpatioTemporalGraph&,
                                          const Eigen::VectorXd& action, int t) {
            const Eigen::VectorXd z = frame_embedding(envp->render(after, cam).frame);
            return -policy::tcn_reward((*embeds)[static_cast<std::size_t>(t)], z, cfg->tcn_alpha,
                                       cfg->tcn_beta, cfg->tcn_gamma) +
                   cfg->action_penalty * action.squaredNorm();
        };
    } else {
        const GraphCostModel* gc = &graph_cost;
        coster = [gc](const sim::FoldEnvState&, const stg::SpatioTemporalGraph& imit,
                      const Eigen::VectorXd& action, int t) {
            return gc->from_graph(imit, action, t);
        };
        quad_fn = graph_cost.state_fn();
    }

    // initial policy: demonstration actions with a per-seed systematic bias
    Rng bias_rng(mix(config.seed, 0xB1A5ULL));
    Vec3 pos_bias(bias_rng.gaussian(0.0, config.init_bias_pos),
                  bias_rng.gaussian(0.0, config.init_bias_pos),
                  bias_rng.gaussian(0.0, config.init_bias_pos));
    Eigen::Vector4d rot_bias;
    for (int i = 0; i < 4; ++i) rot_bias[i] = bias_rng.gaussian(0.0, config.init_bias_rot);

    std::vector<Eigen::VectorXd> init_actions = demo.trajectory.actions;
    for (auto& a : init_actions) {
        a.head<3>() += pos_bias;
        a.tail<4>() += rot_bias;
    }
    policy::TvlgPolicy pol =
        policy::TvlgPolicy::open_loop(init_actions, expected_state_dim, 1.0);
    Eigen::VectorXd diag(policy::kActionDim);
    diag << config.explore_pos_std, config.explore_pos_std, config.explore_pos_std,
        config.explore_rot_std, config.explore_rot_std, config.explore_rot_std,
        config.explore_rot_std;
    for (auto& sigma : pol.covariances) sigma = diag.cwiseAbs2().asDiagonal();

    RunReport report;
    report.config_hash = config.hash();

    policy::PilqrOptions pilqr = config.pilqr;
    if (config.mode == RewardMode::EmbeddingBaseline) pilqr.mb_fraction = 0.0;

    for (int iter = 0; iter <= config.iterations; ++iter) {
        std::vector<policy::Trajectory> rollouts;
        rollouts.reserve(config.rollouts);
        bool any_success = false;
        double mean_cost = 0.0;
        double min_cost = std::numeric_limits<double>::infinity();
        for (int r = 0; r < config.rollouts; ++r) {
            sim::EpisodeOutcome outcome;
            const std::uint64_t rollout_seed = mix(config.seed, mix(iter + 1, r + 1));
            rollouts.push_back(
                run_rollout(env, pol, config.task, rollout_seed, coster, &outcome, nullptr));
            const double c = policy::trajectory_cost(rollouts.back());
            mean_cost += c;
            min_cost = std::min(min_cost, c);
            any_success = any_success || outcome.success();
        }
        mean_cost /= config.rollouts;
        report.iterations.push_back({iter, mean_cost, min_cost, any_success});

        if (iter == config.iterations) break;
        if (config.mode == RewardMode::EmbeddingBaseline) {
            pol = policy::pi2_update(pol, rollouts, pilqr.temperature);
        } else {
            pol = policy::pilqr_step(pol, rollouts, quad_fn, pilqr);
        }
    }

    // deterministic final evaluation run
    sim::EpisodeOutcome final_outcome;
    run_rollout(env, pol, config.task, mix(config.seed, 0xE7A1ULL), nullptr, &final_outcome,
                nullptr);
    report.subprocess_success = {final_outcome.approached, final_outcome.lifted,
                                 final_outcome.rotated, final_outcome.pushed};
    report.final_success = final_outcome.success();
    report.wall_clock_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();
    return {std::move(report), std::move(pol)};
}

std::string EvalReport::table() const {
    static const char* names[4] = {"approaching", "lifting", "rotating", "pushing"};
    std::ostringstream out;
    out << "process      success\n";
    for (int i = 0; i < 4; ++i)
        out << names[i] << std::string(13 - std::string(names[i]).size(), ' ') << succeeded[i]
            << "/" << attempted[i] << "\n";
    out << "summary      " << summary_successes << "/" << n_runs << "\n";
    if (classifier_successes >= 0)
        out << "classifier   " << classifier_successes << "/" << n_runs << "\n";
    return out.str();
}

void EvalReport::save(const std::string& path) const {
    json j;
    j["n_runs"] = n_runs;
    j["attempted"] = attempted;
    j["succeeded"] = succeeded;
    j["summary_successes"] = summary_successes;
    if (classifier_successes >= 0) j["classifier_successes"] = classifier_successes;
    std::ofstream out(path);
    if (!out) throw std::runtime_error("io-open-failed: " + path);
    out << j.dump(2) << "\n";
}

EvalReport run_evaluation(const policy::TvlgPolicy& pol, const RunConfig& config, int n_runs,
                          std::uint64_t seed, const shape::ClothStateModel* model) {
    if (n_runs < 1) throw std::invalid_argument("eval-bad-run-count");
    pol.validate();
    const sim::FoldEnv env(config.env);
    const int expected_state_dim = 3 + config.env.n_joints + 4 * 3 + 4;
    if (pol.state_dim() != expected_state_dim || pol.action_dim() != policy::kActionDim)
        throw std::invalid_argument("eval-policy-dimension-mismatch");

    EvalReport report;
    report.n_runs = n_runs;
    if (model) report.classifier_successes = 0;
    const CameraModel cam = env.default_camera();

    for (int r = 0; r < n_runs; ++r) {
        sim::EpisodeOutcome outcome;
        sim::FoldEnvState final_state;
        run_rollout(env, pol, config.task, seed + static_cast<std::uint64_t>(r), nullptr,
                    &outcome, &final_state);
        const bool stage[4] = {outcome.approached, outcome.approached && outcome.lifted,
                               outcome.approached && outcome.lifted && outcome.rotated,
                               outcome.success()};
        bool prev = true;
        for (int i = 0; i < 4; ++i) {
            if (prev) ++report.attempted[i];
            if (stage[i]) ++report.succeeded[i];
            prev = stage[i];
        }
        if (stage[3]) ++report.summary_successes;
        if (model) {
            const Image frame = env.render(final_state, cam).frame;
            if (sim::success_check(frame, *model, config.task)) ++report.classifier_successes;
        }
    }
    return report;
}

shape::ClothStateModel train_fold_state_model(const sim::FoldEnv& env, int views_per_class,
                                              std::uint64_t seed) {
    if (views_per_class < 1) throw std::invalid_argument("harness-bad-view-count");
    Rng rng(mix(seed, 0xC1A55ULL));
    std::vector<Eigen::VectorXd> features;
    std::vector<int> labels;
    for (int cls = 0; cls <= 3; ++cls) {
        for (int k = 0; k < views_per_class; ++k) {
            sim::FoldEnvState state = env.reset(sim::FoldTask::Left, seed + k);
            if (cls > 0) {
                state.task = static_cast<sim::FoldTask>(cls - 1);
                state.flap_angles[cls - 1] = M_PI - rng.uniform(0.0, 0.1);
            } else {
                state.flap_angles[rng.uniform_int(0, 2)] = rng.uniform(0.0, 0.1);
            }
            const CameraModel cam = env.camera_on_arc(rng.uniform(-0.45, 0.45));
            const Image frame = env.render(state, cam).frame;
            const Mask mask = sim::cloth_mask_from_frame(frame);
            if (mask.count() == 0) continue;
            features.push_back(shape::state_feature_vector(mask));
            labels.push_back(cls);
        }
    }
    return shape::train_classifier(features, labels, 60, 1e-4, 0.1, mix(seed, 0x5EEDULL));
}

DescriptorBenchResult train_descriptor_on_views(const sim::FoldEnv& env, int train_pairs,
                                                int eval_views, double pixel_tolerance,
                                                const corr::TrainOptions& opts) {
    const sim::FoldEnvState state = env.reset(sim::FoldTask::Left, 0);

    auto make_view = [&](double azimuth) {
        const CameraModel cam = env.camera_on_arc(azimuth);
        const sim::RenderResult r = env.render(state, cam);
        corr::CorrespondenceModel model;
        model.world = r.world;
        model.valid = r.valid;
        return std::make_tuple(cam, r.frame, model);
    };

    std::vector<corr::ViewPair> pairs;
    const double span = 0.9;
    for (int i = 0; i < train_pairs; ++i) {
        const double az_a = -span / 2 + span * i / std::max(1, train_pairs - 1);
        const double az_b = az_a + 0.18;
        auto [cam_a, frame_a, model_a] = make_view(az_a);
        auto [cam_b, frame_b, model_b] = make_view(az_b);
        pairs.push_back({frame_a, model_a, frame_b, model_b});
    }

    DescriptorBenchResult result;
    corr::Featurizer init = corr::Featurizer::identity_like(4, 16, opts.seed);
    result.featurizer = corr::train_descriptor(pairs, init, opts);

    // held-out views interleaved between the training azimuths
    const std::vector<Vec3> corners = env.active_corners(state);
    for (int i = 0; i < eval_views; ++i) {
        const double az_a = -span / 2 + 0.07 + span * i / std::max(1, eval_views);
        const double az_b = az_a + 0.22;
        auto [cam_a, frame_a, model_a] = make_view(az_a);
        auto [cam_b, frame_b, model_b] = make_view(az_b);
        const Image desc_a = corr::describe_image(frame_a, result.featurizer);
        const Image desc_b = corr::describe_image(frame_b, result.featurizer);
        for (const Vec3& corner : corners) {
            Vec2 pa, pb;
            if (!cam_a.project(corner, &pa) || !cam_b.project(corner, &pb)) continue;
            const int xa = static_cast<int>(std::lround(pa.x()));
            const int ya = static_cast<int>(std::lround(pa.y()));
            if (xa < 0 || xa >= desc_a.width() || ya < 0 || ya >= desc_a.height()) continue;
            if (!cam_b.in_image(pb)) continue;
            const corr::MatchResult m = corr::match_correspondence(desc_a, xa, ya, desc_b);
            ++result.queries;
            const double err = std::hypot(m.x - pb.x(), m.y - pb.y());
            if (err <= pixel_tolerance) ++result.hits;
        }
    }
    return result;
}

}  // namespace foldboard::harness
