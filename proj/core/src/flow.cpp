#include "foldboard/flow.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <deque>
#include <stdexcept>
#include <vector>

#include <unsupported/Eigen/FFT>

namespace foldboard::flow {

Image resize_bilinear(const Image& src, int width, int height) {
    Image out(width, height, src.channels());
    const double sx = static_cast<double>(src.width()) / width;
    const double sy = static_cast<double>(src.height()) / height;
    for (int y = 0; y < height; ++y) {
        const double fy = std::min(static_cast<double>(src.height() - 1), (y + 0.5) * sy - 0.5);
        const int y0 = std::max(0, static_cast<int>(std::floor(fy)));
        const int y1 = std::min(src.height() - 1, y0 + 1);
        const double wy = fy - y0;
        for (int x = 0; x < width; ++x) {
            const double fx =
                std::min(static_cast<double>(src.width() - 1), (x + 0.5) * sx - 0.5);
            const int x0 = std::max(0, static_cast<int>(std::floor(fx)));
            const int x1 = std::min(src.width() - 1, x0 + 1);
            const double wx = fx - x0;
            for (int c = 0; c < src.channels(); ++c) {
                const double v = (1 - wy) * ((1 - wx) * src.at(x0, y0, c) + wx * src.at(x1, y0, c)) +
                                 wy * ((1 - wx) * src.at(x0, y1, c) + wx * src.at(x1, y1, c));
                out.at(x, y, c) = static_cast<float>(v);
            }
        }
    }
    return out;
}

Image gaussian_blur(const Image& src, double sigma) {
    if (sigma <= 0.0) return src;
    const int radius = std::max(1, static_cast<int>(std::ceil(3.0 * sigma)));
    std::vector<double> kernel(2 * radius + 1);
    double sum = 0.0;
    for (int k = -radius; k <= radius; ++k) {
        kernel[k + radius] = std::exp(-0.5 * k * k / (sigma * sigma));
        sum += kernel[k + radius];
    }
    for (auto& v : kernel) v /= sum;

    Image tmp(src.width(), src.height(), src.channels());
    for (int y = 0; y < src.height(); ++y)
        for (int x = 0; x < src.width(); ++x)
            for (int c = 0; c < src.channels(); ++c) {
                double acc = 0.0;
                for (int k = -radius; k <= radius; ++k) {
                    const int xx = std::clamp(x + k, 0, src.width() - 1);
                    acc += kernel[k + radius] * src.at(xx, y, c);
                }
                tmp.at(x, y, c) = static_cast<float>(acc);
            }
    Image out(src.width(), src.height(), src.channels());
    for (int y = 0; y < src.height(); ++y)
        for (int x = 0; x < src.width(); ++x)
            for (int c = 0; c < src.channels(); ++c) {
                double acc = 0.0;
                for (int k = -radius; k <= radius; ++k) {
                    const int yy = std::clamp(y + k, 0, src.height() - 1);
                    acc += kernel[k + radius] * tmp.at(x, yy, c);
                }
                out.at(x, y, c) = static_cast<float>(acc);
            }
    return out;
}

namespace {

Image downsample_half(const Image& src) {
    const Image blurred = gaussian_blur(src, 0.9);
    return resize_bilinear(blurred, std::max(1, src.width() / 2),
                           std::max(1, src.height() / 2));
}

float sample_bilinear(const Image& img, double x, double y, int c) {
    x = std::clamp(x, 0.0, static_cast<double>(img.width() - 1));
    y = std::clamp(y, 0.0, static_cast<double>(img.height() - 1));
    const int x0 = static_cast<int>(std::floor(x));
    const int y0 = static_cast<int>(std::floor(y));
    const int x1 = std::min(img.width() - 1, x0 + 1);
    const int y1 = std::min(img.height() - 1, y0 + 1);
    const double wx = x - x0;
    const double wy = y - y0;
    return static_cast<float>((1 - wy) * ((1 - wx) * img.at(x0, y0, c) + wx * img.at(x1, y0, c)) +
                              wy * ((1 - wx) * img.at(x0, y1, c) + wx * img.at(x1, y1, c)));
}

/// One Horn-Schunck solve at a fixed pyramid level, warping curr by the
/// current flow estimate before linearization.
void horn_schunck_level(const Image& prev, const Image& curr, Image* flow,
                        const FlowEstimatorOptions& opts) {
    const int w = prev.width();
    const int h = prev.height();
    const double alpha2 = opts.smoothness * opts.smoothness;

    for (int warp = 0; warp < opts.warps_per_level; ++warp) {
        Image warped(w, h, 1);
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x)
                warped.at(x, y) =
                    sample_bilinear(curr, x + flow->at(x, y, 0), y + flow->at(x, y, 1), 0);

        Image ix(w, h, 1), iy(w, h, 1), it(w, h, 1);
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x) {
                const int xm = std::max(0, x - 1), xp = std::min(w - 1, x + 1);
                const int ym = std::max(0, y - 1), yp = std::min(h - 1, y + 1);
                ix.at(x, y) = 0.25f * ((prev.at(xp, y) - prev.at(xm, y)) +
                                       (warped.at(xp, y) - warped.at(xm, y)));
                iy.at(x, y) = 0.25f * ((prev.at(x, yp) - prev.at(x, ym)) +
                                       (warped.at(x, yp) - warped.at(x, ym)));
                it.at(x, y) = warped.at(x, y) - prev.at(x, y);
            }

        Image du(w, h, 2, 0.0f);
        for (int iter = 0; iter < opts.iterations_per_warp; ++iter) {
            Image next(w, h, 2);
            for (int y = 0; y < h; ++y)
                for (int x = 0; x < w; ++x) {
                    const int xm = std::max(0, x - 1), xp = std::min(w - 1, x + 1);
                    const int ym = std::max(0, y - 1), yp = std::min(h - 1, y + 1);
                    const double ubar = 0.25 * (du.at(xm, y, 0) + du.at(xp, y, 0) +
                                                du.at(x, ym, 0) + du.at(x, yp, 0));
                    const double vbar = 0.25 * (du.at(xm, y, 1) + du.at(xp, y, 1) +
                                                du.at(x, ym, 1) + du.at(x, yp, 1));
                    const double gx = ix.at(x, y);
                    const double gy = iy.at(x, y);
                    const double gt = it.at(x, y);
                    const double common =
                        (gx * ubar + gy * vbar + gt) / (alpha2 + gx * gx + gy * gy);
                    next.at(x, y, 0) = static_cast<float>(ubar - gx * common);
                    next.at(x, y, 1) = static_cast<float>(vbar - gy * common);
                }
            du = std::move(next);
        }
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x) {
                flow->at(x, y, 0) += du.at(x, y, 0);
                flow->at(x, y, 1) += du.at(x, y, 1);
            }
    }
}

}  // namespace

FlowField dense_flow(const Image& prev, const Image& curr, const FlowEstimatorOptions& opts) {
    if (prev.width() != curr.width() || prev.height() != curr.height())
        throw std::invalid_argument("flow-dimension-mismatch");
    Image a = to_grayscale(prev);
    Image b = to_grayscale(curr);

    std::vector<Image> pyr_a{a}, pyr_b{b};
    for (int l = 1; l < opts.pyramid_levels; ++l) {
        if (pyr_a.back().width() < 16 || pyr_a.back().height() < 16) break;
        pyr_a.push_back(downsample_half(pyr_a.back()));
        pyr_b.push_back(downsample_half(pyr_b.back()));
    }

    Image flowfield(pyr_a.back().width(), pyr_a.back().height(), 2, 0.0f);
    for (int l = static_cast<int>(pyr_a.size()) - 1; l >= 0; --l) {
        if (l != static_cast<int>(pyr_a.size()) - 1) {
            Image up = resize_bilinear(flowfield, pyr_a[l].width(), pyr_a[l].height());
            const double sx = static_cast<double>(pyr_a[l].width()) / pyr_a[l + 1].width();
            const double sy = static_cast<double>(pyr_a[l].height()) / pyr_a[l + 1].height();
            for (int y = 0; y < up.height(); ++y)
                for (int x = 0; x < up.width(); ++x) {
                    up.at(x, y, 0) *= static_cast<float>(sx);
                    up.at(x, y, 1) *= static_cast<float>(sy);
                }
            flowfield = std::move(up);
        }
        horn_schunck_level(pyr_a[l], pyr_b[l], &flowfield, opts);
    }
    return flowfield;
}

namespace {

void hsv_to_rgb(double h, double s, double v, float* rgb) {
    const double hh = h * 6.0;
    const int i = std::min(5, static_cast<int>(hh));
    const double f = hh - i;
    const double p = v * (1.0 - s);
    const double q = v * (1.0 - s * f);
    const double t = v * (1.0 - s * (1.0 - f));
    double r = 0, g = 0, b = 0;
    switch (i) {
        case 0: r = v; g = t; b = p; break;
        case 1: r = q; g = v; b = p; break;
        case 2: r = p; g = v; b = t; break;
        case 3: r = p; g = q; b = v; break;
        case 4: r = t; g = p; b = v; break;
        default: r = v; g = p; b = q; break;
    }
    rgb[0] = static_cast<float>(r);
    rgb[1] = static_cast<float>(g);
    rgb[2] = static_cast<float>(b);
}

}  // namespace

Image flow_to_hsv(const FlowField& flowfield) {
    if (flowfield.channels() != 2) throw std::invalid_argument("flow-not-2-channel");
    std::vector<float> mags;
    mags.reserve(static_cast<std::size_t>(flowfield.width()) * flowfield.height());
    for (int y = 0; y < flowfield.height(); ++y)
        for (int x = 0; x < flowfield.width(); ++x)
            mags.push_back(std::hypot(flowfield.at(x, y, 0), flowfield.at(x, y, 1)));
    std::vector<float> sorted = mags;
    std::sort(sorted.begin(), sorted.end());
    const float p99 = sorted[static_cast<std::size_t>(0.99 * (sorted.size() - 1))];
    const float norm = p99 > 1e-9f ? p99 : 1.0f;

    Image out(flowfield.width(), flowfield.height(), 3);
    std::size_t i = 0;
    for (int y = 0; y < flowfield.height(); ++y)
        for (int x = 0; x < flowfield.width(); ++x, ++i) {
            double angle = std::atan2(flowfield.at(x, y, 1), flowfield.at(x, y, 0));
            if (angle < 0.0) angle += 2.0 * M_PI;
            const double value = std::min(1.0f, mags[i] / norm);
            hsv_to_rgb(angle / (2.0 * M_PI), 1.0, value, &out.at(x, y, 0));
        }
    return out;
}

Mask canny_edges(const Image& gray_in, double low_fraction, double high_fraction) {
    if (!(low_fraction < high_fraction))
        throw std::invalid_argument("flow-canny-thresholds: low must be < high");
    const Image gray = gaussian_blur(to_grayscale(gray_in), 1.4);
    const int w = gray.width();
    const int h = gray.height();

    Image gx(w, h, 1), gy(w, h, 1), mag(w, h, 1);
    float max_mag = 0.0f;
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            const int xm = std::max(0, x - 1), xp = std::min(w - 1, x + 1);
            const int ym = std::max(0, y - 1), yp = std::min(h - 1, y + 1);
            const float sx = (gray.at(xp, ym) + 2 * gray.at(xp, y) + gray.at(xp, yp)) -
                             (gray.at(xm, ym) + 2 * gray.at(xm, y) + gray.at(xm, yp));
            const float sy = (gray.at(xm, yp) + 2 * gray.at(x, yp) + gray.at(xp, yp)) -
                             (gray.at(xm, ym) + 2 * gray.at(x, ym) + gray.at(xp, ym));
            gx.at(x, y) = sx;
            gy.at(x, y) = sy;
            mag.at(x, y) = std::hypot(sx, sy);
            max_mag = std::max(max_mag, mag.at(x, y));
        }
    Mask edges(w, h);
    if (max_mag < 1e-6f) return edges;

    const float low = static_cast<float>(low_fraction) * max_mag;
    const float high = static_cast<float>(high_fraction) * max_mag;

    // non-maximum suppression along the quantized gradient direction
    Mask candidate(w, h);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            const float m = mag.at(x, y);
            if (m < low) continue;
            const double angle = std::atan2(gy.at(x, y), gx.at(x, y));
            const int sector = ((static_cast<int>(std::lround(angle / (M_PI / 4.0))) % 4) + 4) % 4;
            static const int ddx[4] = {1, 1, 0, -1};
            static const int ddy[4] = {0, 1, 1, 1};
            const int x1 = x + ddx[sector], y1 = y + ddy[sector];
            const int x2 = x - ddx[sector], y2 = y - ddy[sector];
            const float m1 = (x1 >= 0 && x1 < w && y1 >= 0 && y1 < h) ? mag.at(x1, y1) : 0.0f;
            const float m2 = (x2 >= 0 && x2 < w && y2 >= 0 && y2 < h) ? mag.at(x2, y2) : 0.0f;
            if (m >= m1 && m >= m2) candidate.set(x, y, true);
        }

    // hysteresis: strong pixels seed, weak pixels join when 8-connected
    std::deque<std::pair<int, int>> queue;
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x)
            if (candidate.at(x, y) && mag.at(x, y) >= high) {
                edges.set(x, y, true);
                queue.emplace_back(x, y);
            }
    while (!queue.empty()) {
        auto [x, y] = queue.front();
        queue.pop_front();
        for (int dy = -1; dy <= 1; ++dy)
            for (int dx = -1; dx <= 1; ++dx) {
                const int nx = x + dx, ny = y + dy;
                if (nx < 0 || nx >= w || ny < 0 || ny >= h) continue;
                if (candidate.at(nx, ny) && !edges.at(nx, ny)) {
                    edges.set(nx, ny, true);
                    queue.emplace_back(nx, ny);
                }
            }
    }
    return edges;
}

Mask motion_contour(const FlowField& flowfield, double canny_low, double canny_high) {
    const Image hsv = flow_to_hsv(flowfield);
    const Mask edges = canny_edges(to_grayscale(hsv), canny_low, canny_high);
    const int w = edges.width;
    const int h = edges.height;

    // flood the background from the border over non-edge pixels
    Mask background(w, h);
    std::deque<std::pair<int, int>> queue;
    auto seed = [&](int x, int y) {
        if (!edges.at(x, y) && !background.at(x, y)) {
            background.set(x, y, true);
            queue.emplace_back(x, y);
        }
    };
    for (int x = 0; x < w; ++x) {
        seed(x, 0);
        seed(x, h - 1);
    }
    for (int y = 0; y < h; ++y) {
        seed(0, y);
        seed(w - 1, y);
    }
    while (!queue.empty()) {
        auto [x, y] = queue.front();
        queue.pop_front();
        const int nx[4] = {x + 1, x - 1, x, x};
        const int ny[4] = {y, y, y + 1, y - 1};
        for (int k = 0; k < 4; ++k) {
            if (nx[k] < 0 || nx[k] >= w || ny[k] < 0 || ny[k] >= h) continue;
            if (!edges.at(nx[k], ny[k]) && !background.at(nx[k], ny[k])) {
                background.set(nx[k], ny[k], true);
                queue.emplace_back(nx[k], ny[k]);
            }
        }
    }
    Mask inside(w, h);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) inside.set(x, y, !background.at(x, y));
    return inside;
}

namespace {

constexpr int kSaliencyWorkingSize = 64;

using ComplexGrid = std::vector<std::complex<double>>;

void fft2d(ComplexGrid* grid, int w, int h, bool inverse) {
    Eigen::FFT<double> fft;
    std::vector<std::complex<double>> line(w), out(w);
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) line[x] = (*grid)[static_cast<std::size_t>(y) * w + x];
        if (inverse)
            fft.inv(out, line);
        else
            fft.fwd(out, line);
        for (int x = 0; x < w; ++x) (*grid)[static_cast<std::size_t>(y) * w + x] = out[x];
    }
    std::vector<std::complex<double>> col(h), outc(h);
    for (int x = 0; x < w; ++x) {
        for (int y = 0; y < h; ++y) col[y] = (*grid)[static_cast<std::size_t>(y) * w + x];
        if (inverse)
            fft.inv(outc, col);
        else
            fft.fwd(outc, col);
        for (int y = 0; y < h; ++y) (*grid)[static_cast<std::size_t>(y) * w + x] = outc[y];
    }
}

}  // namespace

Image static_saliency(const Image& frame) {
    if (frame.empty()) throw std::invalid_argument("flow-empty-frame");
    const Image gray = to_grayscale(frame);
    const Image small = resize_bilinear(gray, kSaliencyWorkingSize, kSaliencyWorkingSize);
    const int n = kSaliencyWorkingSize;

    ComplexGrid grid(static_cast<std::size_t>(n) * n);
    for (int y = 0; y < n; ++y)
        for (int x = 0; x < n; ++x)
            grid[static_cast<std::size_t>(y) * n + x] = {small.at(x, y), 0.0};
    fft2d(&grid, n, n, false);

    std::vector<double> log_amp(grid.size());
    std::vector<double> phase(grid.size());
    for (std::size_t i = 0; i < grid.size(); ++i) {
        log_amp[i] = std::log(std::abs(grid[i]) + 1e-9);
        phase[i] = std::arg(grid[i]);
    }

    // spectral residual: log amplitude minus its 3x3 box average
    std::vector<double> residual(grid.size());
    for (int y = 0; y < n; ++y)
        for (int x = 0; x < n; ++x) {
            double acc = 0.0;
            int cnt = 0;
            for (int dy = -1; dy <= 1; ++dy)
                for (int dx = -1; dx <= 1; ++dx) {
                    const int xx = x + dx, yy = y + dy;
                    if (xx < 0 || xx >= n || yy < 0 || yy >= n) continue;
                    acc += log_amp[static_cast<std::size_t>(yy) * n + xx];
                    ++cnt;
                }
            residual[static_cast<std::size_t>(y) * n + x] =
                log_amp[static_cast<std::size_t>(y) * n + x] - acc / cnt;
        }

    for (std::size_t i = 0; i < grid.size(); ++i)
        grid[i] = std::polar(std::exp(residual[i]), phase[i]);
    fft2d(&grid, n, n, true);

    Image sal(n, n, 1);
    for (int y = 0; y < n; ++y)
        for (int x = 0; x < n; ++x) {
            const double v = std::abs(grid[static_cast<std::size_t>(y) * n + x]);
            sal.at(x, y) = static_cast<float>(v * v);
        }
    sal = gaussian_blur(sal, 2.5);
    Image out = resize_bilinear(sal, gray.width(), gray.height());

    float max_v = 0.0f;
    for (float v : out.data()) max_v = std::max(max_v, v);
    if (max_v < 1e-12f) {
        std::fill(out.data().begin(), out.data().end(), 0.0f);
        return out;
    }
    for (float& v : out.data()) v = std::clamp(v / max_v, 0.0f, 1.0f);
    return out;
}

RefinedFlowMap refine_flow(const Image& saliency, const Mask& contour) {
    if (saliency.width() != contour.width || saliency.height() != contour.height)
        throw std::invalid_argument("flow-refine-dimension-mismatch");
    RefinedFlowMap out;
    out.contour = contour;
    out.magnitude = Image(saliency.width(), saliency.height(), 1, 0.0f);
    for (int y = 0; y < saliency.height(); ++y)
        for (int x = 0; x < saliency.width(); ++x)
            if (contour.at(x, y)) out.magnitude.at(x, y) = saliency.at(x, y);
    return out;
}

Image saliency_score(const RefinedFlowMap& refined, double lambda) {
    if (!(lambda > 0.0)) throw std::invalid_argument("flow-bad-lambda");
    Image score(refined.magnitude.width(), refined.magnitude.height(), 1, 0.0f);
    for (int y = 0; y < score.height(); ++y)
        for (int x = 0; x < score.width(); ++x)
            if (refined.contour.at(x, y))
                score.at(x, y) =
                    static_cast<float>(1.0 - std::exp(-lambda * refined.magnitude.at(x, y)));
    return score;
}

double segmentation_threshold(double lambda, double epsilon) {
    if (!(lambda > 0.0)) throw std::invalid_argument("flow-bad-lambda");
    if (!(epsilon > 0.0 && epsilon < 1.0)) throw std::invalid_argument("flow-bad-epsilon");
    return -std::log(1.0 - epsilon) / lambda;
}

Mask segment(const RefinedFlowMap& refined, double lambda, double epsilon) {
    const double threshold = segmentation_threshold(lambda, epsilon);
    Mask out(refined.magnitude.width(), refined.magnitude.height());
    for (int y = 0; y < out.height; ++y)
        for (int x = 0; x < out.width; ++x)
            out.set(x, y, refined.magnitude.at(x, y) >= threshold);
    return out;
}

FlowSaliencyResult run_flow_saliency(const Image& prev, const Image& curr,
                                     const FlowSaliencyParams& params) {
    FlowSaliencyResult r;
    r.flow = dense_flow(prev, curr, params.flow);
    r.flow_hsv = flow_to_hsv(r.flow);
    r.contour = motion_contour(r.flow, params.canny_low, params.canny_high);
    r.saliency = static_saliency(curr);
    r.refined = refine_flow(r.saliency, r.contour);
    r.score = saliency_score(r.refined, params.lambda);
    r.segmentation = segment(r.refined, params.lambda, params.epsilon);
    return r;
}

}  // namespace foldboard::flow
