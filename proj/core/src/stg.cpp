#include "foldboard/stg.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>
#include <stdexcept>

#include "foldboard/serial.hpp"

namespace foldboard::stg {

const char* kind_name(VertexKind k) {
    switch (k) {
        case VertexKind::Board: return "board";
        case VertexKind::Cloth: return "cloth";
        case VertexKind::EndEffector: return "ee";
    }
    return "board";
}

VertexKind kind_from_name(const std::string& name) {
    if (name == "board") return VertexKind::Board;
    if (name == "cloth") return VertexKind::Cloth;
    if (name == "ee") return VertexKind::EndEffector;
    throw std::invalid_argument("stg-unknown-kind: " + name);
}

const Vertex* SpatioTemporalGraph::find(int id) const {
    for (const auto& v : vertices)
        if (v.id == id) return &v;
    return nullptr;
}

const Vertex& SpatioTemporalGraph::vertex(int id) const {
    const Vertex* v = find(id);
    if (!v) throw std::invalid_argument("stg-unknown-vertex: id=" + std::to_string(id));
    return *v;
}

void SpatioTemporalGraph::validate() const {
    std::set<int> ids;
    for (const auto& v : vertices) {
        if (!v.position.allFinite())
            throw std::invalid_argument("stg-nonfinite-vertex: id=" + std::to_string(v.id));
        if (!ids.insert(v.id).second)
            throw std::invalid_argument("stg-duplicate-vertex: id=" + std::to_string(v.id));
    }
    for (std::size_t e = 0; e < edges.size(); ++e) {
        const Edge& edge = edges[e];
        if (edge.i == edge.j)
            throw std::invalid_argument("stg-self-edge: index=" + std::to_string(e));
        if (!ids.count(edge.i) || !ids.count(edge.j))
            throw std::invalid_argument("stg-dangling-edge: index=" + std::to_string(e));
        if (!(edge.weight >= 0.0))
            throw std::invalid_argument("stg-negative-weight: index=" + std::to_string(e));
    }
}

Vec3 relative_config(const SpatioTemporalGraph& g, int i, int j) {
    return g.vertex(i).position - g.vertex(j).position;
}

void require_same_structure(const SpatioTemporalGraph& gE, const SpatioTemporalGraph& gR) {
    if (gE.vertices.size() != gR.vertices.size())
        throw std::invalid_argument("stg-structure-mismatch: vertex count " +
                                    std::to_string(gE.vertices.size()) + " vs " +
                                    std::to_string(gR.vertices.size()));
    if (gE.edges.size() != gR.edges.size())
        throw std::invalid_argument("stg-structure-mismatch: edge count " +
                                    std::to_string(gE.edges.size()) + " vs " +
                                    std::to_string(gR.edges.size()));
    for (std::size_t k = 0; k < gE.vertices.size(); ++k) {
        const Vertex& a = gE.vertices[k];
        const Vertex& b = gR.vertices[k];
        if (a.id != b.id || a.kind != b.kind)
            throw std::invalid_argument("stg-structure-mismatch: vertex " + std::to_string(k) +
                                        " (" + std::to_string(a.id) + "," + kind_name(a.kind) +
                                        ") vs (" + std::to_string(b.id) + "," +
                                        kind_name(b.kind) + ")");
    }
    for (std::size_t k = 0; k < gE.edges.size(); ++k) {
        if (gE.edges[k].i != gR.edges[k].i || gE.edges[k].j != gR.edges[k].j)
            throw std::invalid_argument(
                "stg-structure-mismatch: edge " + std::to_string(k) + " endpoints (" +
                std::to_string(gE.edges[k].i) + "," + std::to_string(gE.edges[k].j) + ") vs (" +
                std::to_string(gR.edges[k].i) + "," + std::to_string(gR.edges[k].j) + ")");
    }
}

namespace {

bool is_effector_board_pair(const SpatioTemporalGraph& g, const Edge& e) {
    const VertexKind ki = g.vertex(e.i).kind;
    const VertexKind kj = g.vertex(e.j).kind;
    return (ki == VertexKind::EndEffector && kj == VertexKind::Board) ||
           (ki == VertexKind::Board && kj == VertexKind::EndEffector);
}

}  // namespace

double graph_dissimilarity(const SpatioTemporalGraph& gE, const SpatioTemporalGraph& gR,
                           const EdgeMask& mask) {
    require_same_structure(gE, gR);
    if (mask.size() != gE.edges.size())
        throw std::invalid_argument("stg-mask-size-mismatch: " + std::to_string(mask.size()) +
                                    " vs " + std::to_string(gE.edges.size()));
    double total = 0.0;
    for (std::size_t k = 0; k < gE.edges.size(); ++k) {
        if (!mask[k]) continue;
        const Edge& e = gE.edges[k];
        if (!is_effector_board_pair(gE, e)) continue;
        const Vec3 relE = relative_config(gE, e.i, e.j);
        const Vec3 relR = relative_config(gR, e.i, e.j);
        total += e.weight * (relE - relR).norm();
    }
    return total;
}

EdgeGate edge_presence(const SpatioTemporalGraph& g, const Edge& edge, const Image& saliency,
                       const CameraModel& projector, double epsilon, double tau_f, int samples) {
    if (!(tau_f > 0.0 && tau_f <= 1.0))
        throw std::invalid_argument("stg-bad-tau: " + fmt_double(tau_f));
    if (samples < 2) throw std::invalid_argument("stg-bad-samples");
    const Vec3 a = g.vertex(edge.i).position;
    const Vec3 b = g.vertex(edge.j).position;
    int in_image = 0;
    int salient = 0;
    for (int s = 0; s < samples; ++s) {
        const double t = static_cast<double>(s) / (samples - 1);
        Vec2 px;
        if (!projector.project(a + t * (b - a), &px)) continue;
        const int xi = static_cast<int>(std::lround(px.x()));
        const int yi = static_cast<int>(std::lround(px.y()));
        if (xi < 0 || xi >= saliency.width() || yi < 0 || yi >= saliency.height()) continue;
        ++in_image;
        if (saliency.at(xi, yi) >= static_cast<float>(epsilon)) ++salient;
    }
    EdgeGate gate;
    if (in_image == 0) {
        gate.degenerate = true;
        return gate;
    }
    gate.preserved = static_cast<double>(salient) / in_image >= tau_f;
    return gate;
}

EdgeMask build_edge_mask(const SpatioTemporalGraph& g, const Image& saliency,
                         const CameraModel& projector, double epsilon, double tau_f,
                         int samples) {
    EdgeMask mask(g.edges.size(), false);
    for (std::size_t k = 0; k < g.edges.size(); ++k)
        mask[k] = edge_presence(g, g.edges[k], saliency, projector, epsilon, tau_f, samples)
                      .preserved;
    return mask;
}

Transform anchor_frame(const std::vector<Vertex>& anchors, const Vec3& surface_normal) {
    if (anchors.size() < 2)
        throw std::invalid_argument("stg-insufficient-anchors: need >= 2, got " +
                                    std::to_string(anchors.size()));
    const double nn = surface_normal.norm();
    if (nn < 1e-12) throw std::invalid_argument("stg-degenerate-normal");
    const Vec3 z = surface_normal / nn;
    const Vec3 origin = anchors[0].position;
    Vec3 x = anchors[1].position - origin;
    x -= x.dot(z) * z;
    if (x.norm() < 1e-12) throw std::invalid_argument("stg-degenerate-anchor-baseline");
    x.normalize();
    const Vec3 y = z.cross(x);
    Transform frame = Transform::Identity();
    frame.linear().col(0) = x;
    frame.linear().col(1) = y;
    frame.linear().col(2) = z;
    frame.translation() = origin;
    return frame;
}

Transform make_prior(const Transform& frame, const Vec3& world_point) {
    Transform prior = Transform::Identity();
    prior.translation() = frame.inverse() * world_point;
    return prior;
}

std::vector<Vertex> infer_hidden_vertices(const std::vector<Vertex>& anchors,
                                          const std::vector<HiddenVertexSpec>& priors,
                                          const Vec3& surface_normal) {
    const Transform frame = anchor_frame(anchors, surface_normal);
    std::vector<Vertex> out;
    out.reserve(priors.size());
    for (const auto& spec : priors) {
        Vertex v;
        v.id = spec.id;
        v.kind = spec.kind;
        v.position = (frame * spec.prior).translation();
        out.push_back(v);
    }
    return out;
}

std::vector<std::pair<SpatioTemporalGraph, SpatioTemporalGraph>> align_sequences(
    const std::vector<SpatioTemporalGraph>& demo, const std::vector<SpatioTemporalGraph>& imit) {
    if (demo.empty() || imit.empty())
        throw std::invalid_argument("stg-empty-sequence");
    const std::size_t n = demo.size();
    const std::size_t m = imit.size();
    std::vector<std::pair<SpatioTemporalGraph, SpatioTemporalGraph>> pairs;
    pairs.reserve(n);
    for (std::size_t k = 0; k < n; ++k) {
        const auto j = std::min<std::size_t>(
            m - 1, static_cast<std::size_t>(std::llround(static_cast<double>(k) * m / n)));
        SpatioTemporalGraph r = imit[j];
        r.time_index = demo[k].time_index;
        pairs.emplace_back(demo[k], std::move(r));
    }
    return pairs;
}

std::string graph_to_line(const SpatioTemporalGraph& g) {
    std::ostringstream out;
    out << "g " << g.time_index << " v " << g.vertices.size();
    for (const auto& v : g.vertices)
        out << " " << v.id << " " << kind_name(v.kind) << " " << fmt_double(v.position.x())
            << " " << fmt_double(v.position.y()) << " " << fmt_double(v.position.z());
    out << " e " << g.edges.size();
    for (const auto& e : g.edges)
        out << " " << e.i << " " << e.j << " " << fmt_double(e.weight);
    return out.str();
}

SpatioTemporalGraph graph_from_line(const std::string& line) {
    std::istringstream in(line);
    std::string tok;
    SpatioTemporalGraph g;
    std::size_t nv = 0;
    std::size_t ne = 0;
    if (!(in >> tok) || tok != "g" || !(in >> g.time_index) || !(in >> tok) || tok != "v" ||
        !(in >> nv))
        throw std::invalid_argument("stg-parse-error: bad header");
    g.vertices.resize(nv);
    for (auto& v : g.vertices) {
        std::string kind;
        if (!(in >> v.id >> kind >> v.position.x() >> v.position.y() >> v.position.z()))
            throw std::invalid_argument("stg-parse-error: vertex");
        v.kind = kind_from_name(kind);
    }
    if (!(in >> tok) || tok != "e" || !(in >> ne))
        throw std::invalid_argument("stg-parse-error: edge header");
    g.edges.resize(ne);
    for (auto& e : g.edges)
        if (!(in >> e.i >> e.j >> e.weight))
            throw std::invalid_argument("stg-parse-error: edge");
    return g;
}

void save_sequence(const std::vector<SpatioTemporalGraph>& seq, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("io-open-failed: " + path);
    for (const auto& g : seq) out << graph_to_line(g) << "\n";
    if (!out) throw std::runtime_error("io-write-failed: " + path);
}

std::vector<SpatioTemporalGraph> load_sequence(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("io-open-failed: " + path);
    std::vector<SpatioTemporalGraph> seq;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        seq.push_back(graph_from_line(line));
    }
    return seq;
}

}  // namespace foldboard::stg
