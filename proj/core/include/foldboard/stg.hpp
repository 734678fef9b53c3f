#pragma once

#include <string>
#include <utility>
#include <vector>

#include "foldboard/geometry.hpp"
#include "foldboard/image.hpp"

namespace foldboard::stg {

enum class VertexKind { Board, Cloth, EndEffector };

const char* kind_name(VertexKind k);
VertexKind kind_from_name(const std::string& name);

struct Vertex {
    int id = 0;
    VertexKind kind = VertexKind::Board;
    Vec3 position = Vec3::Zero();
};

/// Ordered endpoint pair (by vertex id) with a nonnegative weight.
struct Edge {
    int i = 0;
    int j = 0;
    double weight = 1.0;
};

/// Per-edge preservation flags under the current refined optical flow.
using EdgeMask = std::vector<bool>;

struct SpatioTemporalGraph {
    int time_index = 1;
    std::vector<Vertex> vertices;
    std::vector<Edge> edges;

    const Vertex* find(int id) const;
    const Vertex& vertex(int id) const;  // throws on unknown id
    /// Checks local invariants: unique finite vertices, edge endpoints
    /// distinct and resolvable, weights >= 0.
    void validate() const;
};

/// Relative spatial configuration between two vertices: position(i) - position(j).
Vec3 relative_config(const SpatioTemporalGraph& g, int i, int j);

/// Throws when the two graphs do not share vertex/edge cardinality, vertex
/// ids and kinds, and edge endpoint pairs; the message names the first
/// differing element.
void require_same_structure(const SpatioTemporalGraph& gE, const SpatioTemporalGraph& gR);

/// Structural dissimilarity between a demonstration graph and an imitation
/// graph at one time step: sum over preserved end-effector/board edges of
/// weight * || relative_config_E - relative_config_R ||.
double graph_dissimilarity(const SpatioTemporalGraph& gE, const SpatioTemporalGraph& gR,
                           const EdgeMask& mask);

struct EdgeGate {
    bool preserved = false;
    bool degenerate = false;  // projected fully outside the image
};

/// Samples `samples` equally spaced points along the 3-D edge segment,
/// projects them, and preserves the edge when at least tau_f of the in-image
/// samples land on saliency >= epsilon.
EdgeGate edge_presence(const SpatioTemporalGraph& g, const Edge& edge, const Image& saliency,
                       const CameraModel& projector, double epsilon, double tau_f,
                       int samples = 32);

/// edge_presence over every edge of the graph.
EdgeMask build_edge_mask(const SpatioTemporalGraph& g, const Image& saliency,
                         const CameraModel& projector, double epsilon, double tau_f,
                         int samples = 32);

/// Right-handed frame fixed by the anchor vertices and the surface normal:
/// origin at the first anchor, x towards the second anchor projected into
/// the plane orthogonal to the normal, z along the normal.
Transform anchor_frame(const std::vector<Vertex>& anchors, const Vec3& surface_normal);

/// Records, at the initial static scene, the rigid prior that reproduces
/// `world_point` when applied to the anchor frame.
Transform make_prior(const Transform& frame, const Vec3& world_point);

struct HiddenVertexSpec {
    int id = 0;
    VertexKind kind = VertexKind::Board;
    Transform prior = Transform::Identity();
};

/// Positions hidden vertices by applying their priors to the frame built
/// from the currently visible anchors.
std::vector<Vertex> infer_hidden_vertices(const std::vector<Vertex>& anchors,
                                          const std::vector<HiddenVertexSpec>& priors,
                                          const Vec3& surface_normal);

/// Resamples the imitation sequence to the demonstration length by nearest
/// index selection; each output pair carries the demonstration time_index.
std::vector<std::pair<SpatioTemporalGraph, SpatioTemporalGraph>> align_sequences(
    const std::vector<SpatioTemporalGraph>& demo,
    const std::vector<SpatioTemporalGraph>& imit);

/// Line format, one graph per line:
///   g <t> v <n> {<id> <kind> <x> <y> <z>} e <m> {<i> <j> <w>}
/// Doubles are printed with 17 significant digits so round-trips are
/// bit-exact.
std::string graph_to_line(const SpatioTemporalGraph& g);
SpatioTemporalGraph graph_from_line(const std::string& line);
void save_sequence(const std::vector<SpatioTemporalGraph>& seq, const std::string& path);
std::vector<SpatioTemporalGraph> load_sequence(const std::string& path);

}  // namespace foldboard::stg
