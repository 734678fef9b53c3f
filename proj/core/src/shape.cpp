#include "foldboard/shape.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <stdexcept>

#include "foldboard/rng.hpp"
#include "foldboard/serial.hpp"

namespace foldboard::shape {

namespace {

using int128 = __int128;

std::int64_t int_raw_moment(const Mask& mask, int p, int q) {
    std::int64_t sum = 0;
    for (int y = 0; y < mask.height; ++y) {
        std::int64_t yq = 1;
        for (int k = 0; k < q; ++k) yq *= y;
        for (int x = 0; x < mask.width; ++x) {
            if (!mask.at(x, y)) continue;
            std::int64_t xp = 1;
            for (int k = 0; k < p; ++k) xp *= x;
            sum += xp * yq;
        }
    }
    return sum;
}

void require_nonempty(const Mask& mask) {
    if (mask.count() == 0) throw std::invalid_argument("shape-empty-mask");
}

int128 ipow128(int128 base, int e) {
    int128 r = 1;
    for (int k = 0; k < e; ++k) r *= base;
    return r;
}

/// True when (m00 * max_coord)^(p+q) * m00 stays clear of 128-bit overflow.
bool exact_path_fits(const Mask& mask, std::int64_t m00, int p, int q) {
    const double max_coord = std::max(mask.width, mask.height);
    const double bits = (p + q) * std::log2(std::max(2.0, static_cast<double>(m00) * max_coord)) +
                        std::log2(std::max<double>(2, m00));
    return bits < 120.0;
}

}  // namespace

std::pair<double, double> centroid(const Mask& mask) {
    require_nonempty(mask);
    const auto m00 = int_raw_moment(mask, 0, 0);
    const auto m10 = int_raw_moment(mask, 1, 0);
    const auto m01 = int_raw_moment(mask, 0, 1);
    return {static_cast<double>(m10) / m00, static_cast<double>(m01) / m00};
}

double raw_moment(const Mask& mask, int p, int q) {
    if (p < 0 || q < 0) throw std::invalid_argument("shape-negative-order");
    return static_cast<double>(int_raw_moment(mask, p, q));
}

double central_moment(const Mask& mask, int p, int q) {
    if (p < 0 || q < 0) throw std::invalid_argument("shape-negative-order");
    require_nonempty(mask);
    const std::int64_t m00 = int_raw_moment(mask, 0, 0);
    const std::int64_t m10 = int_raw_moment(mask, 1, 0);
    const std::int64_t m01 = int_raw_moment(mask, 0, 1);
    if (exact_path_fits(mask, m00, p, q)) {
        // Scaled sum (m00 x - m10)^p (m00 y - m01)^q = m00^(p+q) mu_pq, exact.
        int128 sum = 0;
        for (int y = 0; y < mask.height; ++y) {
            const int128 dy = static_cast<int128>(m00) * y - m01;
            const int128 dyq = ipow128(dy, q);
            for (int x = 0; x < mask.width; ++x) {
                if (!mask.at(x, y)) continue;
                const int128 dx = static_cast<int128>(m00) * x - m10;
                sum += ipow128(dx, p) * dyq;
            }
        }
        return static_cast<double>(sum) / static_cast<double>(ipow128(m00, p + q));
    }
    const double xbar = static_cast<double>(m10) / m00;
    const double ybar = static_cast<double>(m01) / m00;
    double sum = 0.0;
    for (int y = 0; y < mask.height; ++y)
        for (int x = 0; x < mask.width; ++x)
            if (mask.at(x, y))
                sum += std::pow(x - xbar, p) * std::pow(y - ybar, q);
    return sum;
}

double normalized_moment(const Mask& mask, int p, int q) {
    if (p + q < 2)
        throw std::invalid_argument("shape-order-too-low: p+q must be >= 2, got " +
                                    std::to_string(p + q));
    const double mu = central_moment(mask, p, q);
    const double mu00 = static_cast<double>(int_raw_moment(mask, 0, 0));
    const double gamma = (p + q + 2) / 2.0;
    return mu / std::pow(mu00, gamma);
}

HuVector hu_invariants(const Mask& mask) {
    require_nonempty(mask);
    const double n20 = normalized_moment(mask, 2, 0);
    const double n02 = normalized_moment(mask, 0, 2);
    const double n11 = normalized_moment(mask, 1, 1);
    const double n30 = normalized_moment(mask, 3, 0);
    const double n21 = normalized_moment(mask, 2, 1);
    const double n12 = normalized_moment(mask, 1, 2);
    const double n03 = normalized_moment(mask, 0, 3);

    const double a = n30 + n12;
    const double b = n21 + n03;
    const double c = n30 - 3.0 * n12;
    const double d = 3.0 * n21 - n03;

    HuVector phi;
    phi[0] = n20 + n02;
    phi[1] = (n20 - n02) * (n20 - n02) + 4.0 * n11 * n11;
    phi[2] = c * c + d * d;
    phi[3] = a * a + b * b;
    phi[4] = c * a * (a * a - 3.0 * b * b) + d * b * (3.0 * a * a - b * b);
    phi[5] = (n20 - n02) * (a * a - b * b) + 4.0 * n11 * a * b;
    phi[6] = d * a * (a * a - 3.0 * b * b) - c * b * (3.0 * a * a - b * b);
    return phi;
}

namespace {

struct PixelSet {
    std::vector<std::pair<int, int>> pixels;
};

/// Largest 4-connected component, pixels in scan order.
std::vector<std::pair<int, int>> largest_component(const Mask& bin) {
    std::vector<int> label(static_cast<std::size_t>(bin.width) * bin.height, -1);
    int n_labels = 0;
    std::vector<std::vector<std::pair<int, int>>> comps;
    for (int y = 0; y < bin.height; ++y) {
        for (int x = 0; x < bin.width; ++x) {
            if (!bin.at(x, y) || label[static_cast<std::size_t>(y) * bin.width + x] >= 0)
                continue;
            std::vector<std::pair<int, int>> comp;
            std::deque<std::pair<int, int>> queue{{x, y}};
            label[static_cast<std::size_t>(y) * bin.width + x] = n_labels;
            while (!queue.empty()) {
                auto [cx, cy] = queue.front();
                queue.pop_front();
                comp.emplace_back(cx, cy);
                const int nx[4] = {cx + 1, cx - 1, cx, cx};
                const int ny[4] = {cy, cy, cy + 1, cy - 1};
                for (int k = 0; k < 4; ++k) {
                    if (nx[k] < 0 || nx[k] >= bin.width || ny[k] < 0 || ny[k] >= bin.height)
                        continue;
                    auto& l = label[static_cast<std::size_t>(ny[k]) * bin.width + nx[k]];
                    if (l < 0 && bin.at(nx[k], ny[k])) {
                        l = n_labels;
                        queue.emplace_back(nx[k], ny[k]);
                    }
                }
            }
            comps.push_back(std::move(comp));
            ++n_labels;
        }
    }
    if (comps.empty()) return {};
    std::size_t best = 0;
    for (std::size_t i = 1; i < comps.size(); ++i)
        if (comps[i].size() > comps[best].size()) best = i;
    return comps[best];
}

/// Moore-neighbor boundary trace of a 4-connected component (closed contour).
std::vector<std::pair<int, int>> trace_contour(const Mask& bin,
                                               const std::vector<std::pair<int, int>>& comp) {
    if (comp.empty()) return {};
    if (comp.size() == 1) return {comp[0]};
    // start at the first component pixel in scan order; its west neighbor is background
    const auto start = comp[0];
    auto inside = [&](int x, int y) {
        return x >= 0 && x < bin.width && y >= 0 && y < bin.height && bin.at(x, y);
    };
    static const int dx8[8] = {1, 1, 0, -1, -1, -1, 0, 1};
    static const int dy8[8] = {0, 1, 1, 1, 0, -1, -1, -1};
    std::vector<std::pair<int, int>> contour;
    std::pair<int, int> cur = start;
    int backtrack = 4;  // came from the west
    const std::size_t guard = 4 * comp.size() + 16;
    do {
        contour.push_back(cur);
        int dir = (backtrack + 1) % 8;
        int found = -1;
        for (int k = 0; k < 8; ++k) {
            const int d = (dir + k) % 8;
            if (inside(cur.first + dx8[d], cur.second + dy8[d])) {
                found = d;
                break;
            }
        }
        if (found < 0) break;  // isolated pixel
        cur = {cur.first + dx8[found], cur.second + dy8[found]};
        backtrack = (found + 4) % 8;
        if (contour.size() > guard) break;
    } while (cur != start);
    return contour;
}

double point_segment_distance(const std::pair<int, int>& p, const std::pair<int, int>& a,
                              const std::pair<int, int>& b) {
    const double ax = a.first, ay = a.second, bx = b.first, by = b.second;
    const double px = p.first, py = p.second;
    const double vx = bx - ax, vy = by - ay;
    const double len2 = vx * vx + vy * vy;
    double t = len2 > 0.0 ? ((px - ax) * vx + (py - ay) * vy) / len2 : 0.0;
    t = std::clamp(t, 0.0, 1.0);
    const double dx = px - (ax + t * vx);
    const double dy = py - (ay + t * vy);
    return std::sqrt(dx * dx + dy * dy);
}

void douglas_peucker(const std::vector<std::pair<int, int>>& pts, std::size_t lo, std::size_t hi,
                     double tol, std::vector<bool>* keep) {
    if (hi <= lo + 1) return;
    double dmax = -1.0;
    std::size_t imax = lo;
    for (std::size_t i = lo + 1; i < hi; ++i) {
        const double d = point_segment_distance(pts[i], pts[lo], pts[hi]);
        if (d > dmax) {
            dmax = d;
            imax = i;
        }
    }
    if (dmax > tol) {
        (*keep)[imax] = true;
        douglas_peucker(pts, lo, imax, tol, keep);
        douglas_peucker(pts, imax, hi, tol, keep);
    }
}

/// Corner count of the closed contour polygon after simplification.
int count_critical_points(const std::vector<std::pair<int, int>>& contour, double tol) {
    if (contour.size() <= 2) return static_cast<int>(contour.size());
    // split the closed contour at the point farthest from contour[0]
    std::size_t far = 0;
    double best = -1.0;
    for (std::size_t i = 0; i < contour.size(); ++i) {
        const double dx = contour[i].first - contour[0].first;
        const double dy = contour[i].second - contour[0].second;
        const double d = dx * dx + dy * dy;
        if (d > best) {
            best = d;
            far = i;
        }
    }
    if (far == 0) return 1;
    std::vector<bool> keep(contour.size(), false);
    keep[0] = keep[far] = true;
    douglas_peucker(contour, 0, far, tol, &keep);
    // second chain wraps around; unroll it into a temporary
    std::vector<std::pair<int, int>> chain;
    for (std::size_t i = far; i < contour.size(); ++i) chain.push_back(contour[i]);
    chain.push_back(contour[0]);
    std::vector<bool> keep2(chain.size(), false);
    keep2.front() = keep2.back() = true;
    douglas_peucker(chain, 0, chain.size() - 1, tol, &keep2);
    int corners = 0;
    for (std::size_t i = 0; i < contour.size(); ++i) corners += keep[i] ? 1 : 0;
    for (std::size_t i = 1; i + 1 < chain.size(); ++i) corners += keep2[i] ? 1 : 0;
    return corners;
}

}  // namespace

RadialBinFeatures radial_bin_features(const Mask& mask) {
    require_nonempty(mask);
    const auto [cx, cy] = centroid(mask);
    constexpr double kBinWidth = M_PI / 6.0;

    std::array<Mask, RadialBinFeatures::kBins> bin_masks;
    for (auto& b : bin_masks) b = Mask(mask.width, mask.height);
    for (int y = 0; y < mask.height; ++y) {
        for (int x = 0; x < mask.width; ++x) {
            if (!mask.at(x, y)) continue;
            double angle = std::atan2(y - cy, x - cx);
            if (angle < 0.0) angle += 2.0 * M_PI;
            const int b = std::min(RadialBinFeatures::kBins - 1,
                                   static_cast<int>(angle / kBinWidth));
            bin_masks[b].set(x, y, true);
        }
    }

    RadialBinFeatures out;
    for (int b = 0; b < RadialBinFeatures::kBins; ++b) {
        const Mask& bm = bin_masks[b];
        auto& f = out.bins[b];
        const std::size_t area = bm.count();
        f.area = static_cast<double>(area);
        if (area == 0) continue;

        // second-moment ellipse of the bin about its own centroid
        const double mu20 = central_moment(bm, 2, 0);
        const double mu02 = central_moment(bm, 0, 2);
        const double mu11 = central_moment(bm, 1, 1);
        const double tr = mu20 + mu02;
        const double det = mu20 * mu02 - mu11 * mu11;
        const double disc = std::max(0.0, tr * tr / 4.0 - det);
        const double l1 = tr / 2.0 + std::sqrt(disc);
        const double l2 = tr / 2.0 - std::sqrt(disc);
        f.eccentricity = l1 > 1e-12 ? std::sqrt(std::max(0.0, 1.0 - l2 / l1)) : 0.0;
        f.orientation = 0.5 * std::atan2(2.0 * mu11, mu20 - mu02);

        int perimeter = 0;
        for (int y = 0; y < bm.height; ++y) {
            for (int x = 0; x < bm.width; ++x) {
                if (!bm.at(x, y)) continue;
                const bool boundary = x == 0 || x == bm.width - 1 || y == 0 ||
                                      y == bm.height - 1 || !bm.at(x - 1, y) ||
                                      !bm.at(x + 1, y) || !bm.at(x, y - 1) || !bm.at(x, y + 1);
                if (boundary) ++perimeter;
            }
        }
        f.perimeter = perimeter;

        const auto comp = largest_component(bm);
        const auto contour = trace_contour(bm, comp);
        f.critical_points = count_critical_points(contour, 2.0);
    }
    return out;
}

Eigen::VectorXd state_feature_vector(const Mask& mask) {
    const RadialBinFeatures rb = radial_bin_features(mask);
    const HuVector hu = hu_invariants(mask);
    Eigen::VectorXd v(kStateFeatureDim);
    int k = 0;
    for (const auto& bin : rb.bins) {
        v[k++] = bin.critical_points;
        v[k++] = bin.area;
        v[k++] = bin.eccentricity;
        v[k++] = bin.perimeter;
        v[k++] = bin.orientation;
    }
    for (double phi : hu) v[k++] = phi;
    return v;
}

ClothStateModel train_classifier(const std::vector<Eigen::VectorXd>& features,
                                 const std::vector<int>& labels, int epochs, double reg,
                                 double learning_rate, std::uint64_t seed) {
    if (features.size() != labels.size() || features.empty())
        throw std::invalid_argument("shape-bad-training-set");
    const int dim = static_cast<int>(features[0].size());
    for (const auto& f : features)
        if (f.size() != dim) throw std::invalid_argument("shape-feature-dim-mismatch");

    std::vector<int> classes(labels);
    std::sort(classes.begin(), classes.end());
    classes.erase(std::unique(classes.begin(), classes.end()), classes.end());
    if (classes.size() < 2) throw std::invalid_argument("shape-single-class");

    // standardize internally; the affine map is folded back into the
    // exported weights so the model stays a plain linear scorer
    Eigen::VectorXd mean = Eigen::VectorXd::Zero(dim);
    for (const auto& f : features) mean += f;
    mean /= static_cast<double>(features.size());
    Eigen::VectorXd scale = Eigen::VectorXd::Zero(dim);
    for (const auto& f : features) scale += (f - mean).cwiseAbs2();
    scale = (scale / static_cast<double>(features.size())).cwiseSqrt();
    for (int d = 0; d < dim; ++d)
        if (scale[d] < 1e-9) scale[d] = 1.0;

    std::vector<Eigen::VectorXd> zs;
    zs.reserve(features.size());
    for (const auto& f : features) zs.push_back((f - mean).cwiseQuotient(scale));

    ClothStateModel model;
    model.classes = classes;
    model.weights = Eigen::MatrixXd::Zero(static_cast<int>(classes.size()), dim);
    model.biases = Eigen::VectorXd::Zero(static_cast<int>(classes.size()));

    Rng rng(seed);
    std::vector<std::size_t> order(features.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

    for (std::size_t c = 0; c < classes.size(); ++c) {
        Eigen::VectorXd w = Eigen::VectorXd::Zero(dim);
        double b = 0.0;
        long step = 0;
        for (int epoch = 0; epoch < epochs; ++epoch) {
            // Fisher-Yates with the shared generator keeps runs reproducible
            for (std::size_t i = order.size(); i > 1; --i)
                std::swap(order[i - 1], order[rng.uniform_int(0, static_cast<int>(i) - 1)]);
            for (std::size_t i : order) {
                const double eta = learning_rate / (1.0 + 0.01 * step);
                ++step;
                const double y = labels[i] == classes[c] ? 1.0 : -1.0;
                const double margin = y * (w.dot(zs[i]) + b);
                w *= (1.0 - eta * reg);
                if (margin < 1.0) {
                    w += eta * y * zs[i];
                    b += eta * y;
                }
            }
        }
        // bake standardization into the raw-space weights
        const Eigen::VectorXd w_raw = w.cwiseQuotient(scale);
        model.weights.row(static_cast<int>(c)) = w_raw.transpose();
        model.biases[static_cast<int>(c)] = b - w_raw.dot(mean);
    }
    model.trained = true;
    return model;
}

Classification classify(const Eigen::VectorXd& feature, const ClothStateModel& model) {
    if (!model.trained) throw std::invalid_argument("shape-untrained-model");
    if (feature.size() != model.dim())
        throw std::invalid_argument("shape-feature-dim-mismatch");
    const Eigen::VectorXd scores = model.weights * feature + model.biases;
    int best = 0;
    for (int c = 1; c < scores.size(); ++c)
        if (scores[c] > scores[best]) best = c;
    double runner_up = -std::numeric_limits<double>::infinity();
    for (int c = 0; c < scores.size(); ++c)
        if (c != best) runner_up = std::max(runner_up, scores[c]);
    return {model.classes[static_cast<std::size_t>(best)], scores[best] - runner_up};
}

Classification classify_state(const Mask& mask, const ClothStateModel& model) {
    return classify(state_feature_vector(mask), model);
}

void ClothStateModel::save(const std::string& path) const {
    TextModel m;
    m.type = "cloth-state-classifier";
    m.fields["classes"] = std::vector<double>(classes.begin(), classes.end());
    m.fields["dim"] = {static_cast<double>(dim())};
    m.fields["trained"] = {trained ? 1.0 : 0.0};
    std::vector<double> w(weights.size());
    Eigen::Map<Eigen::MatrixXd>(w.data(), weights.rows(), weights.cols()) = weights;
    m.fields["weights"] = std::move(w);
    m.fields["biases"] = std::vector<double>(biases.data(), biases.data() + biases.size());
    m.save(path);
}

ClothStateModel ClothStateModel::load(const std::string& path) {
    const TextModel m = TextModel::load(path);
    if (m.type != "cloth-state-classifier")
        throw std::runtime_error("model-wrong-type: " + m.type);
    ClothStateModel out;
    for (double c : m.field("classes")) out.classes.push_back(static_cast<int>(c));
    const int dim = static_cast<int>(m.scalar("dim"));
    const auto& w = m.field("weights");
    const int rows = static_cast<int>(out.classes.size());
    if (static_cast<int>(w.size()) != rows * dim)
        throw std::runtime_error("model-bad-weight-size");
    out.weights = Eigen::Map<const Eigen::MatrixXd>(w.data(), rows, dim);
    const auto& b = m.field("biases");
    out.biases = Eigen::Map<const Eigen::VectorXd>(b.data(), static_cast<int>(b.size()));
    out.trained = m.scalar("trained") != 0.0;
    return out;
}

}  // namespace foldboard::shape
