#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "foldboard/image.hpp"

namespace foldboard::corr {

struct HarrisResult {
    std::vector<std::pair<int, int>> corners;  // (x, y), strongest first
    bool complete = false;                     // found the requested count
};

/// Harris corner response with 5-px non-max suppression; returns the top
/// `count` responses, strongest first. `complete` is false when fewer
/// responses clear the threshold.
HarrisResult harris_corners(const Image& frame, double k, int count);

/// Pixel-pair contrastive loss: squared distance for matches, squared hinge
/// at margin xi for non-matches.
double contrastive_loss(const Eigen::VectorXd& da, const Eigen::VectorXd& db, bool is_match,
                        double xi);

/// Loss plus the analytic gradient with respect to da (the gradient with
/// respect to db is its negation).
std::pair<double, Eigen::VectorXd> contrastive_loss_grad(const Eigen::VectorXd& da,
                                                         const Eigen::VectorXd& db,
                                                         bool is_match, double xi);

/// Per-pixel world coordinates with validity; pixels within merge_radius of
/// each other in world space count as the same correspondence.
struct CorrespondenceModel {
    Image world;  // 3 channels, meters
    Mask valid;

    void save(const std::string& path) const;  // invalid pixels become NaN
    static CorrespondenceModel load(const std::string& path);
};

struct ViewPair {
    Image frame_a;
    CorrespondenceModel model_a;
    Image frame_b;
    CorrespondenceModel model_b;
};

/// Zero-mean unit-norm intensity patch pushed through a learned linear
/// projection; stands in for a convolutional descriptor backbone.
struct Featurizer {
    int patch_radius = 4;
    Eigen::MatrixXd projection;  // descriptor_dim x patch_dim
    bool trained = false;

    int patch_dim() const { return (2 * patch_radius + 1) * (2 * patch_radius + 1); }
    int descriptor_dim() const { return static_cast<int>(projection.rows()); }

    static Featurizer identity_like(int patch_radius, int descriptor_dim,
                                    std::uint64_t seed = 3);
    Eigen::VectorXd patch_feature(const Image& gray, int x, int y) const;
    Eigen::VectorXd describe(const Image& frame, int x, int y) const;

    void save(const std::string& path) const;
    static Featurizer load(const std::string& path);
};

/// Dense descriptor map: descriptor_dim channels per pixel.
Image describe_image(const Image& frame, const Featurizer& featurizer);

struct TrainOptions {
    int steps = 200;
    double learning_rate = 0.5;
    double xi = 0.5;
    int positives_per_step = 64;
    int negatives_per_step = 192;
    double merge_radius = 0.002;  // meters
    std::uint64_t seed = 11;
};

/// Stochastic gradient on the contrastive loss over sampled positive and
/// negative pixel pairs; deterministic given the seed. Throws when no pair
/// shares a correspondence.
Featurizer train_descriptor(const std::vector<ViewPair>& pairs, Featurizer featurizer,
                            const TrainOptions& opts);

struct MatchResult {
    int x = 0;
    int y = 0;
    double distance = 0.0;
    bool degenerate = false;  // every target pixel tied
};

/// Nearest neighbor in descriptor space over every target pixel; ties break
/// to the lowest row, then the lowest column.
MatchResult match_correspondence(const Image& source_descriptors, int x, int y,
                                 const Image& target_descriptors);

}  // namespace foldboard::corr
