#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "foldboard/corr.hpp"
#include "foldboard/flow.hpp"
#include "foldboard/policy.hpp"
#include "foldboard/shape.hpp"
#include "foldboard/sim.hpp"

namespace foldboard::harness {

/// Which per-step reward drives policy search. RefinedSTG gates Eq-style
/// graph edges by the demo's refined-flow score; PlainSTG keeps every edge;
/// EmbeddingBaseline scores frame-feature embeddings instead of graphs.
enum class RewardMode { RefinedSTG, PlainSTG, EmbeddingBaseline };

const char* reward_mode_name(RewardMode m);
RewardMode reward_mode_from_name(const std::string& name);

struct RunConfig {
    sim::FoldTask task = sim::FoldTask::Left;
    std::uint64_t seed = 0;
    RewardMode mode = RewardMode::RefinedSTG;
    int iterations = 12;
    int rollouts = 12;
    double action_penalty = 1e-3;

    // initial policy: demonstration actions plus a per-seed systematic bias
    double init_bias_pos = 0.02;
    double init_bias_rot = 0.0;
    double explore_pos_std = 0.004;
    double explore_rot_std = 0.002;

    // edge gating
    double mask_tau = 0.3;

    policy::PilqrOptions pilqr;
    flow::FlowSaliencyParams saliency;

    // embedding-baseline reward weights
    double tcn_alpha = 0.8;
    double tcn_beta = 0.001;
    double tcn_gamma = 1e-5;

    sim::EnvConfig env;

    /// Throws with every violated precondition listed in the message.
    void validate() const;
    std::string canonical_json() const;
    std::uint64_t hash() const;
    void save(const std::string& path) const;
    static RunConfig load(const std::string& path);
};

struct IterationMetrics {
    int iteration = 0;
    double mean_cost = 0.0;
    double min_cost = 0.0;
    bool success = false;  // any rollout completed all four sub-processes
};

struct RunReport {
    std::uint64_t config_hash = 0;
    std::vector<IterationMetrics> iterations;
    std::array<bool, 4> subprocess_success{};  // approaching..pushing
    bool final_success = false;
    double wall_clock_seconds = 0.0;

    /// Everything except wall clock, for reproducibility comparisons.
    std::string deterministic_signature() const;
    void save(const std::string& path) const;
    static RunReport load(const std::string& path);
    void save_metrics_csv(const std::string& path) const;
};

/// Demonstration persistence: manifest.json, graphs.stg, trajectory.csv and
/// frames/frame_NNNN.ppm under one directory.
void save_demonstration(const sim::Demonstration& demo, const std::string& dir);
sim::Demonstration load_demonstration(const std::string& dir);

/// Frame embedding used by the baseline reward: radial-bin and Hu features
/// of the visible cloth mask (a documented stand-in for a learned network).
Eigen::VectorXd frame_embedding(const Image& frame);

struct TrainResult {
    RunReport report;
    policy::TvlgPolicy policy;
};

TrainResult run_training(const RunConfig& config, const sim::Demonstration& demo);

struct EvalReport {
    int n_runs = 0;
    std::array<int, 4> attempted{};
    std::array<int, 4> succeeded{};
    int summary_successes = 0;
    int classifier_successes = -1;  // -1 when no model was supplied

    std::string table() const;
    void save(const std::string& path) const;
};

/// Runs the policy n_runs times from the home position with seeds
/// seed, seed+1, ... and reports sub-process successes in cascade form.
EvalReport run_evaluation(const policy::TvlgPolicy& pol, const RunConfig& config, int n_runs,
                          std::uint64_t seed, const shape::ClothStateModel* model = nullptr);

/// Renders flat and folded scenes from jittered viewpoints and trains the
/// fold-state classifier on their cloth-mask features. Classes: 0 flat,
/// 1 left, 2 right, 3 mid.
shape::ClothStateModel train_fold_state_model(const sim::FoldEnv& env, int views_per_class,
                                              std::uint64_t seed);

struct DescriptorBenchResult {
    corr::Featurizer featurizer;
    int queries = 0;
    int hits = 0;  // matches within the pixel tolerance
    double accuracy() const { return queries ? static_cast<double>(hits) / queries : 0.0; }
};

/// Trains the dense descriptor on synthetic view pairs from the simulator
/// and scores board-corner matching accuracy on held-out views.
DescriptorBenchResult train_descriptor_on_views(const sim::FoldEnv& env, int train_pairs,
                                                int eval_views, double pixel_tolerance,
                                                const corr::TrainOptions& opts);

/// One policy rollout in the simulator; outcome/trajectory views for tests
/// and the commands.
policy::Trajectory rollout_episode(const sim::FoldEnv& env, const policy::TvlgPolicy& pol,
                                   sim::FoldTask task, std::uint64_t seed,
                                   sim::EpisodeOutcome* outcome);

}  // namespace foldboard::harness
