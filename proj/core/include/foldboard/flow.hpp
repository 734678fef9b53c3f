#pragma once

#include "foldboard/image.hpp"

namespace foldboard::flow {

/// Per-pixel displacement (u, v) in pixels/frame, stored as a 2-channel image.
using FlowField = Image;

/// Dense optical flow from prev to curr. Pyramidal Horn-Schunck with
/// coarse-to-fine warping; pluggable neural estimators are out of scope.
struct FlowEstimatorOptions {
    int pyramid_levels = 4;
    int warps_per_level = 3;
    int iterations_per_warp = 40;
    double smoothness = 0.8;  // Horn-Schunck alpha
};

FlowField dense_flow(const Image& prev, const Image& curr,
                     const FlowEstimatorOptions& opts = {});

/// Hue from flow angle, full saturation, value from magnitude normalized by
/// the 99th-percentile magnitude. Zero flow renders black.
Image flow_to_hsv(const FlowField& flow);

/// Canny edge detection on the HSV flow encoding, then a border flood fill;
/// the mask covers everything the motion edges enclose (edges included).
/// Thresholds are fractions of the maximum gradient magnitude.
Mask motion_contour(const FlowField& flow, double canny_low, double canny_high);

/// Spectral-residual static saliency, normalized to [0, 1]. Works at 64x64,
/// box filter 3x3, post-smoothing Gaussian sigma 2.5. Constant inputs map to
/// all zeros instead of amplifying numerical noise.
Image static_saliency(const Image& frame);

/// Static saliency retained only inside the motion contour.
struct RefinedFlowMap {
    Image magnitude;  // zero outside the contour
    Mask contour;
};

RefinedFlowMap refine_flow(const Image& saliency, const Mask& contour);

/// Motion saliency score 1 - exp(-lambda * magnitude) inside the contour,
/// exactly 0 outside.
Image saliency_score(const RefinedFlowMap& refined, double lambda);

/// Magnitude threshold that keeps score >= epsilon.
double segmentation_threshold(double lambda, double epsilon);

/// Keeps pixels whose refined magnitude reaches the segmentation threshold.
Mask segment(const RefinedFlowMap& refined, double lambda, double epsilon);

/// Canny edge map on a grayscale image; exposed for inspection and tests.
Mask canny_edges(const Image& gray, double low_fraction, double high_fraction);

struct FlowSaliencyParams {
    double lambda = 5.0;
    double epsilon = 0.5;
    double canny_low = 0.1;
    double canny_high = 0.3;
    FlowEstimatorOptions flow;
};

/// The full per-frame-pair pipeline, in stage order.
struct FlowSaliencyResult {
    FlowField flow;
    Image flow_hsv;
    Mask contour;
    Image saliency;
    RefinedFlowMap refined;
    Image score;
    Mask segmentation;
};

FlowSaliencyResult run_flow_saliency(const Image& prev, const Image& curr,
                                     const FlowSaliencyParams& params = {});

/// Shared raster helpers.
Image resize_bilinear(const Image& src, int width, int height);
Image gaussian_blur(const Image& src, double sigma);

}  // namespace foldboard::flow
