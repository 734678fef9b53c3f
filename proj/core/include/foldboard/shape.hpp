#pragma once

#include <Eigen/Dense>
#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "foldboard/image.hpp"

namespace foldboard::shape {

/// Centroid of the foreground pixels; throws on an empty mask.
std::pair<double, double> centroid(const Mask& mask);

/// Raw image moment m_pq = sum over foreground of x^p y^q.
double raw_moment(const Mask& mask, int p, int q);

/// Central moment mu_pq, translation invariant. Uses exact integer
/// accumulation when the magnitudes fit 128 bits, so lattice translations
/// and rotations reproduce bit-identical values.
double central_moment(const Mask& mask, int p, int q);

/// Scale-normalized moment eta_pq = mu_pq / mu_00^((p+q+2)/2); requires p+q >= 2.
double normalized_moment(const Mask& mask, int p, int q);

using HuVector = std::array<double, 7>;

/// The seven rotation/scale/translation invariant moment combinations.
HuVector hu_invariants(const Mask& mask);

/// Region descriptors over 12 radial bins about the centroid. Bin 0 starts
/// at angle 0 (east) and bins advance counterclockwise in (x, y).
struct RadialBinFeatures {
    static constexpr int kBins = 12;
    struct Bin {
        double critical_points = 0.0;  // corner count of the simplified bin contour
        double area = 0.0;             // pixel count
        double eccentricity = 0.0;     // from the second-moment ellipse
        double perimeter = 0.0;        // 4-neighbor boundary pixel count
        double orientation = 0.0;      // ellipse axis angle, radians
    };
    std::array<Bin, kBins> bins{};
};

RadialBinFeatures radial_bin_features(const Mask& mask);

/// 12 bins x 5 features followed by the 7 Hu invariants.
constexpr int kStateFeatureDim = RadialBinFeatures::kBins * 5 + 7;
Eigen::VectorXd state_feature_vector(const Mask& mask);

/// One-vs-rest linear max-margin classifier: score_c = w_c . x + b_c.
struct ClothStateModel {
    std::vector<int> classes;
    Eigen::MatrixXd weights;  // classes x dim
    Eigen::VectorXd biases;
    bool trained = false;

    int dim() const { return static_cast<int>(weights.cols()); }
    void save(const std::string& path) const;
    static ClothStateModel load(const std::string& path);
};

/// Hinge-loss subgradient training, one-vs-rest, deterministic given seed.
ClothStateModel train_classifier(const std::vector<Eigen::VectorXd>& features,
                                 const std::vector<int>& labels, int epochs, double reg,
                                 double learning_rate = 0.1, std::uint64_t seed = 17);

struct Classification {
    int label = 0;
    double margin = 0.0;  // top score minus runner-up
};

Classification classify(const Eigen::VectorXd& feature, const ClothStateModel& model);
Classification classify_state(const Mask& mask, const ClothStateModel& model);

}  // namespace foldboard::shape
