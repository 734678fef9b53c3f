#include "foldboard/corr.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <unordered_map>

#include "foldboard/flow.hpp"
#include "foldboard/rng.hpp"
#include "foldboard/serial.hpp"

namespace foldboard::corr {

HarrisResult harris_corners(const Image& frame, double k, int count) {
    if (frame.empty()) throw std::invalid_argument("corr-empty-frame");
    if (count < 1) throw std::invalid_argument("corr-bad-count");
    const Image gray = flow::gaussian_blur(to_grayscale(frame), 1.0);
    const int w = gray.width();
    const int h = gray.height();

    Image ixx(w, h, 1), iyy(w, h, 1), ixy(w, h, 1);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            const int xm = std::max(0, x - 1), xp = std::min(w - 1, x + 1);
            const int ym = std::max(0, y - 1), yp = std::min(h - 1, y + 1);
            const float gx = (gray.at(xp, ym) + 2 * gray.at(xp, y) + gray.at(xp, yp)) -
                             (gray.at(xm, ym) + 2 * gray.at(xm, y) + gray.at(xm, yp));
            const float gy = (gray.at(xm, yp) + 2 * gray.at(x, yp) + gray.at(xp, yp)) -
                             (gray.at(xm, ym) + 2 * gray.at(x, ym) + gray.at(xp, ym));
            ixx.at(x, y) = gx * gx;
            iyy.at(x, y) = gy * gy;
            ixy.at(x, y) = gx * gy;
        }
    ixx = flow::gaussian_blur(ixx, 1.5);
    iyy = flow::gaussian_blur(iyy, 1.5);
    ixy = flow::gaussian_blur(ixy, 1.5);

    Image response(w, h, 1);
    float max_r = 0.0f;
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            const float a = ixx.at(x, y), b = iyy.at(x, y), c = ixy.at(x, y);
            const float det = a * b - c * c;
            const float tr = a + b;
            response.at(x, y) = det - static_cast<float>(k) * tr * tr;
            max_r = std::max(max_r, response.at(x, y));
        }

    HarrisResult result;
    if (max_r <= 0.0f) return result;
    const float threshold = 0.01f * max_r;

    struct Cand {
        float r;
        int x, y;
    };
    std::vector<Cand> cands;
    constexpr int kNms = 5;
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            const float r = response.at(x, y);
            if (r < threshold) continue;
            bool is_max = true;
            for (int dy = -kNms; dy <= kNms && is_max; ++dy)
                for (int dx = -kNms; dx <= kNms; ++dx) {
                    const int nx = x + dx, ny = y + dy;
                    if (nx < 0 || nx >= w || ny < 0 || ny >= h) continue;
                    const float rn = response.at(nx, ny);
                    if (rn > r || (rn == r && (ny < y || (ny == y && nx < x)))) {
                        is_max = false;
                        break;
                    }
                }
            if (is_max) cands.push_back({r, x, y});
        }
    std::sort(cands.begin(), cands.end(), [](const Cand& a, const Cand& b) {
        if (a.r != b.r) return a.r > b.r;
        if (a.y != b.y) return a.y < b.y;
        return a.x < b.x;
    });
    for (const auto& c : cands) {
        if (static_cast<int>(result.corners.size()) >= count) break;
        result.corners.emplace_back(c.x, c.y);
    }
    result.complete = static_cast<int>(result.corners.size()) == count;
    return result;
}

double contrastive_loss(const Eigen::VectorXd& da, const Eigen::VectorXd& db, bool is_match,
                        double xi) {
    return contrastive_loss_grad(da, db, is_match, xi).first;
}

std::pair<double, Eigen::VectorXd> contrastive_loss_grad(const Eigen::VectorXd& da,
                                                         const Eigen::VectorXd& db,
                                                         bool is_match, double xi) {
    if (da.size() != db.size()) throw std::invalid_argument("corr-descriptor-dim-mismatch");
    if (!(xi > 0.0)) throw std::invalid_argument("corr-bad-margin");
    const Eigen::VectorXd diff = da - db;
    if (is_match) {
        return {diff.squaredNorm(), 2.0 * diff};
    }
    const double dist = diff.norm();
    const double slack = xi - dist;
    if (slack <= 0.0) return {0.0, Eigen::VectorXd::Zero(da.size())};
    if (dist < 1e-12) {
        // hinge subgradient at the non-differentiable origin
        return {slack * slack, Eigen::VectorXd::Zero(da.size())};
    }
    return {slack * slack, (-2.0 * slack / dist) * diff};
}

Featurizer Featurizer::identity_like(int patch_radius, int descriptor_dim, std::uint64_t seed) {
    Featurizer f;
    f.patch_radius = patch_radius;
    const int pd = f.patch_dim();
    f.projection = Eigen::MatrixXd::Zero(descriptor_dim, pd);
    Rng rng(seed);
    for (int r = 0; r < descriptor_dim; ++r)
        for (int c = 0; c < pd; ++c)
            f.projection(r, c) = rng.gaussian() / std::sqrt(static_cast<double>(pd));
    return f;
}

Eigen::VectorXd Featurizer::patch_feature(const Image& gray, int x, int y) const {
    const int r = patch_radius;
    Eigen::VectorXd p(patch_dim());
    int i = 0;
    for (int dy = -r; dy <= r; ++dy)
        for (int dx = -r; dx <= r; ++dx) {
            const int xx = std::clamp(x + dx, 0, gray.width() - 1);
            const int yy = std::clamp(y + dy, 0, gray.height() - 1);
            p[i++] = gray.at(xx, yy);
        }
    p.array() -= p.mean();
    const double n = p.norm();
    if (n > 1e-9) p /= n;
    return p;
}

Eigen::VectorXd Featurizer::describe(const Image& frame, int x, int y) const {
    const Image gray = to_grayscale(frame);
    return projection * patch_feature(gray, x, y);
}

Image describe_image(const Image& frame, const Featurizer& featurizer) {
    const Image gray = to_grayscale(frame);
    const int d = featurizer.descriptor_dim();
    Image out(gray.width(), gray.height(), d);
    for (int y = 0; y < gray.height(); ++y)
        for (int x = 0; x < gray.width(); ++x) {
            const Eigen::VectorXd desc = featurizer.projection * featurizer.patch_feature(gray, x, y);
            for (int c = 0; c < d; ++c) out.at(x, y, c) = static_cast<float>(desc[c]);
        }
    return out;
}

namespace {

/// Spatial hash of valid world coordinates at merge_radius resolution.
struct WorldIndex {
    double cell = 0.002;
    std::unordered_map<std::uint64_t, std::vector<std::pair<int, int>>> grid;

    static std::uint64_t key(int ix, int iy, int iz) {
        const auto h = [](int v) { return static_cast<std::uint64_t>(v + (1 << 20)); };
        return (h(ix) << 42) ^ (h(iy) << 21) ^ h(iz);
    }

    void build(const CorrespondenceModel& m, double merge_radius) {
        cell = merge_radius;
        for (int y = 0; y < m.world.height(); ++y)
            for (int x = 0; x < m.world.width(); ++x) {
                if (!m.valid.at(x, y)) continue;
                const int ix = static_cast<int>(std::floor(m.world.at(x, y, 0) / cell));
                const int iy = static_cast<int>(std::floor(m.world.at(x, y, 1) / cell));
                const int iz = static_cast<int>(std::floor(m.world.at(x, y, 2) / cell));
                grid[key(ix, iy, iz)].emplace_back(x, y);
            }
    }

    /// Any pixel whose world point lies within merge_radius of w, or (-1,-1).
    std::pair<int, int> lookup(const CorrespondenceModel& m, float wx, float wy, float wz,
                               double merge_radius) const {
        const int ix = static_cast<int>(std::floor(wx / cell));
        const int iy = static_cast<int>(std::floor(wy / cell));
        const int iz = static_cast<int>(std::floor(wz / cell));
        std::pair<int, int> best{-1, -1};
        double best_d2 = merge_radius * merge_radius;
        for (int dz = -1; dz <= 1; ++dz)
            for (int dy = -1; dy <= 1; ++dy)
                for (int dx = -1; dx <= 1; ++dx) {
                    const auto it = grid.find(key(ix + dx, iy + dy, iz + dz));
                    if (it == grid.end()) continue;
                    for (const auto& [px, py] : it->second) {
                        const double ddx = m.world.at(px, py, 0) - wx;
                        const double ddy = m.world.at(px, py, 1) - wy;
                        const double ddz = m.world.at(px, py, 2) - wz;
                        const double d2 = ddx * ddx + ddy * ddy + ddz * ddz;
                        if (d2 <= best_d2) {
                            best_d2 = d2;
                            best = {px, py};
                        }
                    }
                }
        return best;
    }
};

bool same_world_point(const CorrespondenceModel& a, int xa, int ya, const CorrespondenceModel& b,
                      int xb, int yb, double merge_radius) {
    if (!a.valid.at(xa, ya) || !b.valid.at(xb, yb)) return false;
    const double dx = a.world.at(xa, ya, 0) - b.world.at(xb, yb, 0);
    const double dy = a.world.at(xa, ya, 1) - b.world.at(xb, yb, 1);
    const double dz = a.world.at(xa, ya, 2) - b.world.at(xb, yb, 2);
    return dx * dx + dy * dy + dz * dz <= merge_radius * merge_radius;
}

}  // namespace

Featurizer train_descriptor(const std::vector<ViewPair>& pairs, Featurizer featurizer,
                            const TrainOptions& opts) {
    if (pairs.empty()) throw std::invalid_argument("corr-no-training-pairs");
    if (opts.steps < 0) throw std::invalid_argument("corr-bad-steps");

    std::vector<Image> grays_a, grays_b;
    std::vector<WorldIndex> indexes;
    std::vector<std::vector<std::pair<int, int>>> valids_a;
    for (const auto& p : pairs) {
        grays_a.push_back(to_grayscale(p.frame_a));
        grays_b.push_back(to_grayscale(p.frame_b));
        WorldIndex idx;
        idx.build(p.model_b, opts.merge_radius);
        indexes.push_back(std::move(idx));
        std::vector<std::pair<int, int>> va;
        for (int y = 0; y < p.model_a.valid.height; ++y)
            for (int x = 0; x < p.model_a.valid.width; ++x)
                if (p.model_a.valid.at(x, y)) va.emplace_back(x, y);
        valids_a.push_back(std::move(va));
    }

    bool any_shared = false;
    for (std::size_t pi = 0; pi < pairs.size() && !any_shared; ++pi) {
        for (const auto& [x, y] : valids_a[pi]) {
            const auto m = indexes[pi].lookup(pairs[pi].model_b, pairs[pi].model_a.world.at(x, y, 0),
                                              pairs[pi].model_a.world.at(x, y, 1),
                                              pairs[pi].model_a.world.at(x, y, 2),
                                              opts.merge_radius);
            if (m.first >= 0) {
                any_shared = true;
                break;
            }
        }
    }
    if (!any_shared) throw std::invalid_argument("corr-no-shared-correspondences");

    Rng rng(opts.seed);
    for (int step = 0; step < opts.steps; ++step) {
        const std::size_t pi = static_cast<std::size_t>(step) % pairs.size();
        const ViewPair& pair = pairs[pi];
        const auto& va = valids_a[pi];
        if (va.empty()) continue;

        Eigen::MatrixXd grad = Eigen::MatrixXd::Zero(featurizer.projection.rows(),
                                                     featurizer.projection.cols());
        int used = 0;

        for (int s = 0; s < opts.positives_per_step; ++s) {
            const auto [xa, ya] = va[static_cast<std::size_t>(
                rng.uniform_int(0, static_cast<int>(va.size()) - 1))];
            const auto m = indexes[pi].lookup(pair.model_b, pair.model_a.world.at(xa, ya, 0),
                                              pair.model_a.world.at(xa, ya, 1),
                                              pair.model_a.world.at(xa, ya, 2),
                                              opts.merge_radius);
            if (m.first < 0) continue;
            const Eigen::VectorXd fa = featurizer.patch_feature(grays_a[pi], xa, ya);
            const Eigen::VectorXd fb = featurizer.patch_feature(grays_b[pi], m.first, m.second);
            const auto [loss, gda] =
                contrastive_loss_grad(featurizer.projection * fa, featurizer.projection * fb,
                                      true, opts.xi);
            grad += gda * fa.transpose() - gda * fb.transpose();
            ++used;
        }
        for (int s = 0; s < opts.negatives_per_step; ++s) {
            const auto [xa, ya] = va[static_cast<std::size_t>(
                rng.uniform_int(0, static_cast<int>(va.size()) - 1))];
            const int xb = rng.uniform_int(0, pair.frame_b.width() - 1);
            const int yb = rng.uniform_int(0, pair.frame_b.height() - 1);
            if (same_world_point(pair.model_a, xa, ya, pair.model_b, xb, yb, opts.merge_radius))
                continue;
            const Eigen::VectorXd fa = featurizer.patch_feature(grays_a[pi], xa, ya);
            const Eigen::VectorXd fb = featurizer.patch_feature(grays_b[pi], xb, yb);
            const auto [loss, gda] =
                contrastive_loss_grad(featurizer.projection * fa, featurizer.projection * fb,
                                      false, opts.xi);
            if (loss == 0.0) continue;
            grad += gda * fa.transpose() - gda * fb.transpose();
            ++used;
        }
        if (used > 0) featurizer.projection -= (opts.learning_rate / used) * grad;
    }
    if (opts.steps > 0) featurizer.trained = true;
    return featurizer;
}

MatchResult match_correspondence(const Image& source, int x, int y, const Image& target) {
    if (x < 0 || x >= source.width() || y < 0 || y >= source.height())
        throw std::invalid_argument("corr-query-out-of-bounds");
    if (source.channels() != target.channels())
        throw std::invalid_argument("corr-descriptor-dim-mismatch");
    const int d = source.channels();

    MatchResult best;
    double best_d2 = std::numeric_limits<double>::infinity();
    double worst_d2 = -1.0;
    for (int ty = 0; ty < target.height(); ++ty)
        for (int tx = 0; tx < target.width(); ++tx) {
            double d2 = 0.0;
            for (int c = 0; c < d; ++c) {
                const double diff = source.at(x, y, c) - target.at(tx, ty, c);
                d2 += diff * diff;
            }
            if (d2 < best_d2) {
                best_d2 = d2;
                best.x = tx;
                best.y = ty;
            }
            worst_d2 = std::max(worst_d2, d2);
        }
    best.distance = std::sqrt(best_d2);
    best.degenerate = worst_d2 - best_d2 <= 1e-18;
    return best;
}

void CorrespondenceModel::save(const std::string& path) const {
    Image out = world;
    const float nan = std::numeric_limits<float>::quiet_NaN();
    for (int y = 0; y < out.height(); ++y)
        for (int x = 0; x < out.width(); ++x)
            if (!valid.at(x, y))
                for (int c = 0; c < 3; ++c) out.at(x, y, c) = nan;
    save_raster(out, path);
}

CorrespondenceModel CorrespondenceModel::load(const std::string& path) {
    CorrespondenceModel m;
    m.world = load_raster(path);
    if (m.world.channels() != 3) throw std::runtime_error("corr-bad-world-map: " + path);
    m.valid = Mask(m.world.width(), m.world.height());
    for (int y = 0; y < m.world.height(); ++y)
        for (int x = 0; x < m.world.width(); ++x) {
            const bool ok = std::isfinite(m.world.at(x, y, 0)) &&
                            std::isfinite(m.world.at(x, y, 1)) &&
                            std::isfinite(m.world.at(x, y, 2));
            m.valid.set(x, y, ok);
        }
    return m;
}

void Featurizer::save(const std::string& path) const {
    TextModel m;
    m.type = "patch-featurizer";
    m.fields["patch_radius"] = {static_cast<double>(patch_radius)};
    m.fields["descriptor_dim"] = {static_cast<double>(descriptor_dim())};
    m.fields["trained"] = {trained ? 1.0 : 0.0};
    std::vector<double> p(projection.size());
    Eigen::Map<Eigen::MatrixXd>(p.data(), projection.rows(), projection.cols()) = projection;
    m.fields["projection"] = std::move(p);
    m.save(path);
}

Featurizer Featurizer::load(const std::string& path) {
    const TextModel m = TextModel::load(path);
    if (m.type != "patch-featurizer") throw std::runtime_error("model-wrong-type: " + m.type);
    Featurizer f;
    f.patch_radius = static_cast<int>(m.scalar("patch_radius"));
    const int d = static_cast<int>(m.scalar("descriptor_dim"));
    const auto& p = m.field("projection");
    if (static_cast<int>(p.size()) != d * f.patch_dim())
        throw std::runtime_error("model-bad-projection-size");
    f.projection = Eigen::Map<const Eigen::MatrixXd>(p.data(), d, f.patch_dim());
    f.trained = m.scalar("trained") != 0.0;
    return f;
}

}  // namespace foldboard::corr
