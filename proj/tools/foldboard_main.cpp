// Command line front end: demonstration generation, policy training and
// evaluation, flow-saliency inspection, fold-state classification and dense
// descriptor training against the built-in folding-board simulator.

#include <CLI11.hpp>
#include <filesystem>
#include <iostream>

#include "foldboard/harness.hpp"

namespace fs = std::filesystem;
using namespace foldboard;

namespace {

harness::RunConfig load_config_or_default(const std::string& path) {
    if (path.empty()) return harness::RunConfig{};
    return harness::RunConfig::load(path);
}

int cmd_demo(const std::string& task, std::uint64_t seed, const std::string& out_dir,
             const std::string& config_path, int steps_per_phase, bool no_frames) {
    harness::RunConfig config = load_config_or_default(config_path);
    config.task = sim::task_from_name(task);
    config.seed = seed;
    config.validate();
    const sim::FoldEnv env(config.env);
    sim::ExpertOptions opts;
    opts.steps_per_phase = steps_per_phase;
    opts.render_frames = !no_frames;
    const sim::Demonstration demo = sim::scripted_expert(env, config.task, seed, opts);
    harness::save_demonstration(demo, out_dir);
    std::cout << "demo written to " << out_dir << " (horizon " << demo.horizon << ", final angle "
              << env.active_angle(demo.final_state) << ")\n";
    return 0;
}

int cmd_train(const std::string& demo_dir, const std::string& out_dir,
              const std::string& config_path, const CLI::App* sub) {
    harness::RunConfig config = load_config_or_default(config_path);

    // explicit command line flags win over the config file
    std::string task_str = sim::task_name(config.task);
    std::string mode_str = harness::reward_mode_name(config.mode);
    std::uint64_t seed = config.seed;
    int iterations = config.iterations;
    int rollouts = config.rollouts;
    double lambda = config.saliency.lambda;
    double epsilon = config.saliency.epsilon;
    double canny_low = config.saliency.canny_low;
    double canny_high = config.saliency.canny_high;

    if (sub->count("--task")) task_str = sub->get_option("--task")->as<std::string>();
    if (sub->count("--mode")) mode_str = sub->get_option("--mode")->as<std::string>();
    if (sub->count("--seed")) seed = sub->get_option("--seed")->as<std::uint64_t>();
    if (sub->count("--iterations")) iterations = sub->get_option("--iterations")->as<int>();
    if (sub->count("--rollouts")) rollouts = sub->get_option("--rollouts")->as<int>();
    if (sub->count("--lambda")) lambda = sub->get_option("--lambda")->as<double>();
    if (sub->count("--epsilon")) epsilon = sub->get_option("--epsilon")->as<double>();
    if (sub->count("--canny-low")) canny_low = sub->get_option("--canny-low")->as<double>();
    if (sub->count("--canny-high")) canny_high = sub->get_option("--canny-high")->as<double>();

    config.task = sim::task_from_name(task_str);
    config.mode = harness::reward_mode_from_name(mode_str);
    config.seed = seed;
    config.iterations = iterations;
    config.rollouts = rollouts;
    config.saliency.lambda = lambda;
    config.saliency.epsilon = epsilon;
    config.saliency.canny_low = canny_low;
    config.saliency.canny_high = canny_high;
    config.validate();

    const sim::Demonstration demo = harness::load_demonstration(demo_dir);
    if (demo.task != config.task)
        throw std::invalid_argument("train-demo-task-mismatch: demo is " +
                                    std::string(sim::task_name(demo.task)));

    const harness::TrainResult result = harness::run_training(config, demo);

    fs::create_directories(out_dir);
    result.policy.save((fs::path(out_dir) / "policy.txt").string());
    result.report.save((fs::path(out_dir) / "report.json").string());
    result.report.save_metrics_csv((fs::path(out_dir) / "metrics.csv").string());
    config.save((fs::path(out_dir) / "config.json").string());

    std::cout << "trained " << harness::reward_mode_name(config.mode) << " on "
              << sim::task_name(config.task) << ": initial mean cost "
              << result.report.iterations.front().mean_cost << ", final mean cost "
              << result.report.iterations.back().mean_cost
              << (result.report.final_success ? ", final run succeeded"
                                              : ", final run failed")
              << "\n";
    return 0;
}

int cmd_eval(const std::string& policy_path, const std::string& task, int runs,
             std::uint64_t seed, const std::string& config_path, const std::string& model_path,
             const std::string& out_path) {
    harness::RunConfig config = load_config_or_default(config_path);
    config.task = sim::task_from_name(task);
    config.validate();
    const policy::TvlgPolicy pol = policy::TvlgPolicy::load(policy_path);

    shape::ClothStateModel model;
    const shape::ClothStateModel* model_ptr = nullptr;
    if (!model_path.empty()) {
        model = shape::ClothStateModel::load(model_path);
        model_ptr = &model;
    }
    const harness::EvalReport report =
        harness::run_evaluation(pol, config, runs, seed, model_ptr);
    std::cout << report.table();
    if (!out_path.empty()) report.save(out_path);
    return 0;
}

int cmd_saliency(const std::string& prev_path, const std::string& curr_path,
                 const std::string& out_dir, double lambda, double epsilon, double canny_low,
                 double canny_high) {
    flow::FlowSaliencyParams params;
    params.lambda = lambda;
    params.epsilon = epsilon;
    params.canny_low = canny_low;
    params.canny_high = canny_high;

    const Image prev = load_image(prev_path);
    const Image curr = load_image(curr_path);
    const flow::FlowSaliencyResult r = flow::run_flow_saliency(prev, curr, params);

    fs::create_directories(out_dir);
    const fs::path dir(out_dir);
    save_raster(r.flow, (dir / "flow.fbrs").string());
    save_image(r.flow_hsv, (dir / "flow_hsv.ppm").string());
    save_image(r.saliency, (dir / "saliency.pgm").string());
    Image contour_img(r.contour.width, r.contour.height, 1);
    for (int y = 0; y < r.contour.height; ++y)
        for (int x = 0; x < r.contour.width; ++x)
            contour_img.at(x, y) = r.contour.at(x, y) ? 1.0f : 0.0f;
    save_image(contour_img, (dir / "contour.pgm").string());
    save_raster(r.refined.magnitude, (dir / "refined.fbrs").string());
    save_image(r.score, (dir / "score.pgm").string());
    Image seg_img(r.segmentation.width, r.segmentation.height, 1);
    for (int y = 0; y < r.segmentation.height; ++y)
        for (int x = 0; x < r.segmentation.width; ++x)
            seg_img.at(x, y) = r.segmentation.at(x, y) ? 1.0f : 0.0f;
    save_image(seg_img, (dir / "segmentation.pgm").string());
    std::cout << "saliency outputs written to " << out_dir << " (segmented "
              << r.segmentation.count() << " px)\n";
    return 0;
}

int cmd_classify_train(const std::string& out_path, int views, std::uint64_t seed,
                       const std::string& config_path) {
    harness::RunConfig config = load_config_or_default(config_path);
    config.validate();
    const sim::FoldEnv env(config.env);
    const shape::ClothStateModel model = harness::train_fold_state_model(env, views, seed);
    model.save(out_path);
    std::cout << "fold-state classifier written to " << out_path << " ("
              << model.classes.size() << " classes)\n";
    return 0;
}

int cmd_classify_predict(const std::string& model_path, const std::string& mask_path,
                         const std::string& frame_path) {
    const shape::ClothStateModel model = shape::ClothStateModel::load(model_path);
    Mask mask;
    if (!mask_path.empty()) {
        mask = image_to_mask(load_image(mask_path));
    } else if (!frame_path.empty()) {
        mask = sim::cloth_mask_from_frame(load_image(frame_path));
    } else {
        throw std::invalid_argument("classify-missing-input: give --mask or --frame");
    }
    const shape::Classification c = shape::classify_state(mask, model);
    std::cout << "label " << c.label << " margin " << c.margin << "\n";
    return 0;
}

int cmd_descriptor_train(const std::string& out_path, int pairs, int eval_views, int steps,
                         double lr, double xi, std::uint64_t seed,
                         const std::string& config_path) {
    harness::RunConfig config = load_config_or_default(config_path);
    config.validate();
    const sim::FoldEnv env(config.env);
    corr::TrainOptions opts;
    opts.steps = steps;
    opts.learning_rate = lr;
    opts.xi = xi;
    opts.seed = seed;
    const harness::DescriptorBenchResult result =
        harness::train_descriptor_on_views(env, pairs, eval_views, 3.0, opts);
    result.featurizer.save(out_path);
    std::cout << "descriptor written to " << out_path << "; corner matches " << result.hits
              << "/" << result.queries << "\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"folding-board visual imitation toolkit"};
    app.require_subcommand(1);

    std::string task = "left", config_path, out_dir = "out", demo_dir, policy_path, model_path;
    std::string prev_path, curr_path, mask_path, frame_path, out_path;
    std::uint64_t seed = 0;
    int steps_per_phase = 10, iterations = 12, rollouts = 12, runs = 8;
    int views = 8, pairs = 20, eval_views = 10, steps = 200;
    double lambda = 5.0, epsilon = 0.5, canny_low = 0.1, canny_high = 0.3;
    double lr = 0.5, xi = 0.5;
    std::string mode = "refined-stg";
    bool no_frames = false;

    auto* demo = app.add_subcommand("demo", "record a scripted expert demonstration");
    demo->add_option("--task", task, "left|right|mid");
    demo->add_option("--seed", seed);
    demo->add_option("--out", out_dir)->required();
    demo->add_option("--config", config_path);
    demo->add_option("--steps-per-phase", steps_per_phase);
    demo->add_flag("--no-frames", no_frames, "skip frame rendering");

    auto* train = app.add_subcommand("train", "optimize a folding policy from a demonstration");
    train->add_option("--demo", demo_dir)->required();
    train->add_option("--out", out_dir)->required();
    train->add_option("--config", config_path);
    train->add_option("--task", task);
    train->add_option("--mode", mode, "refined-stg|plain-stg|embedding-baseline");
    train->add_option("--seed", seed);
    train->add_option("--iterations", iterations);
    train->add_option("--rollouts", rollouts);
    train->add_option("--lambda", lambda);
    train->add_option("--epsilon", epsilon);
    train->add_option("--canny-low", canny_low);
    train->add_option("--canny-high", canny_high);

    auto* eval = app.add_subcommand("eval", "run a trained policy and report success rates");
    eval->add_option("--policy", policy_path)->required();
    eval->add_option("--task", task);
    eval->add_option("--runs", runs);
    eval->add_option("--seed", seed);
    eval->add_option("--config", config_path);
    eval->add_option("--model", model_path, "fold-state classifier for the final frame");
    eval->add_option("--out", out_path, "write the report as JSON");

    auto* saliency = app.add_subcommand("saliency", "run the refined-flow pipeline on two frames");
    saliency->add_option("--prev", prev_path)->required();
    saliency->add_option("--curr", curr_path)->required();
    saliency->add_option("--out", out_dir)->required();
    saliency->add_option("--lambda", lambda);
    saliency->add_option("--epsilon", epsilon);
    saliency->add_option("--canny-low", canny_low);
    saliency->add_option("--canny-high", canny_high);

    auto* classify = app.add_subcommand("classify", "fold-state classifier");
    auto* ctrain = classify->add_subcommand("train", "train on simulator renders");
    ctrain->add_option("--out", out_path)->required();
    ctrain->add_option("--views", views, "views per class");
    ctrain->add_option("--seed", seed);
    ctrain->add_option("--config", config_path);
    auto* cpredict = classify->add_subcommand("predict", "classify a mask or frame");
    cpredict->add_option("--model", model_path)->required();
    cpredict->add_option("--mask", mask_path);
    cpredict->add_option("--frame", frame_path);
    classify->require_subcommand(1);

    auto* dtrain = app.add_subcommand("descriptor-train",
                                      "train the dense correspondence descriptor");
    dtrain->add_option("--out", out_path)->required();
    dtrain->add_option("--pairs", pairs);
    dtrain->add_option("--eval-views", eval_views);
    dtrain->add_option("--steps", steps);
    dtrain->add_option("--lr", lr);
    dtrain->add_option("--xi", xi);
    dtrain->add_option("--seed", seed);
    dtrain->add_option("--config", config_path);

    CLI11_PARSE(app, argc, argv);

    try {
        if (demo->parsed())
            return cmd_demo(task, seed, out_dir, config_path, steps_per_phase, no_frames);
        if (train->parsed()) return cmd_train(demo_dir, out_dir, config_path, train);
        if (eval->parsed())
            return cmd_eval(policy_path, task, runs, seed, config_path, model_path, out_path);
        if (saliency->parsed())
            return cmd_saliency(prev_path, curr_path, out_dir, lambda, epsilon, canny_low,
                                canny_high);
        if (classify->parsed()) {
            if (ctrain->parsed()) return cmd_classify_train(out_path, views, seed, config_path);
            return cmd_classify_predict(model_path, mask_path, frame_path);
        }
        if (dtrain->parsed())
            return cmd_descriptor_train(out_path, pairs, eval_views, steps, lr, xi, seed,
                                        config_path);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
