#ifndef TNCONV_CORE_GRAPH_HPP
#define TNCONV_CORE_GRAPH_HPP

#include <cstdint>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "labels.hpp"

namespace tnconv {

class GraphError : public std::runtime_error {
public:
    explicit GraphError(const std::string& msg) : std::runtime_error(msg) {}
};

enum class VertexKind {
    Parameter,
    Input,
    DummyVertical,    // spatial coupling on the h axis
    DummyHorizontal,  // w axis
    DummyDepth,       // d axis (3D)
};

const char* vertex_kind_name(VertexKind k);
VertexKind vertex_kind_from_name(const std::string& s);
bool is_dummy_kind(VertexKind k);

struct GraphVertex {
    LabelSet labels;
    VertexKind kind = VertexKind::Parameter;

    friend bool operator==(const GraphVertex&, const GraphVertex&) = default;
};

// Convolution geometry. Padding and stride are shared across axes.
struct ConvGeometry {
    std::vector<std::int64_t> spatial_in;  // H, W[, D]
    std::vector<std::int64_t> filter;      // I, J[, K], odd
    std::int64_t padding = 0;
    std::int64_t stride = 1;
    std::int64_t channels_in = 1;
    std::int64_t channels_out = 1;

    int spatial_dims() const { return static_cast<int>(spatial_in.size()); }
    // (H + 2P - I) / S + 1; throws if not a positive integer.
    std::vector<std::int64_t> spatial_out() const;
    void check() const;

    friend bool operator==(const ConvGeometry&, const ConvGeometry&) = default;
};

// Hypergraph model of a convolutional layer: labels, vertices, stage
// partition. Hyperedges are derived from vertex membership.
struct EinconvGraph {
    std::vector<std::string> outer;       // h', w'[, d'], c'
    std::vector<IndexLabel> inner;        // spatial, filter, c, ranks; with dims
    std::vector<GraphVertex> vertices;
    // Ordered partition of the non-input vertex indices. Activation flag f[t]
    // applies between stage t and t+1 (size = stages.size() - 1).
    std::vector<std::vector<int>> stages;
    std::vector<bool> activations;
    std::optional<ConvGeometry> geometry;

    std::int64_t dim_of(const std::string& label) const;  // throws if unknown
    bool has_label(const std::string& label) const;
    std::vector<std::string> rank_labels() const;
    int input_vertex() const;  // index, or -1
    int spatial_dims() const;  // 2 or 3, from the input vertex
    std::int64_t parameter_count() const;

    friend bool operator==(const EinconvGraph&, const EinconvGraph&) = default;
};

// e_r for every label: label -> sorted vertex indices containing it.
std::map<std::string, std::vector<int>> derive_hyperedges(const EinconvGraph& g);

// Per-axis filter chain recovered from the dummy vertices.
// One ChainLink per spatial factor, ordered from the input outward.
struct ChainLink {
    int vertex = -1;            // the dummy vertex
    std::string in_label;       // previous spatial label (input or mid)
    std::string out_label;      // next spatial label (mid or primed output)
    std::string filter_label;
};
struct AxisChain {
    std::string axis;  // "h", "w" or "d"
    std::vector<ChainLink> links;
};

// 1 + sum over links (I_m - 1); links without a filter label count as 1x1.
std::int64_t effective_filter(const EinconvGraph& g, const AxisChain& chain);

// Derives the chains; throws GraphError if the dummy structure is not a set
// of well-formed per-axis chains.
std::vector<AxisChain> derive_axis_chains(const EinconvGraph& g);

// Concrete geometry of one chain link. Size-preserving padding goes on every
// link but the last of an axis; the last link carries the stride and the
// remaining padding.
struct LinkGeometry {
    std::int64_t in_dim = 1, out_dim = 1, filt_dim = 1;
    std::int64_t stride = 1, pad = 0;
};

// Per axis, aligned with derive_axis_chains; requires graph geometry.
std::vector<std::vector<LinkGeometry>> derive_link_geometry(const EinconvGraph& g);

// Structural validation: returns a list of violations (empty = ok).
// Includes the filter-composition check against geometry when present.
std::vector<std::string> validate(const EinconvGraph& g);

// Canonical byte string: invariant under vertex order, label order within a
// vertex and consistent renaming of rank labels. Distinguished labels are
// kept fixed.
std::string canonical_form(const EinconvGraph& g);
std::uint64_t canonical_hash(const EinconvGraph& g);
std::string canonical_hash_hex(const EinconvGraph& g);

// JSON interchange (schema shared by CLI, enumeration output, checkpoints).
std::string graph_to_json(const EinconvGraph& g, bool pretty = false);
EinconvGraph graph_from_json(const std::string& text);

enum class NamedKind {
    Standard,
    DepthwiseSeparable,
    Bottleneck,
    InvertedBottleneck,
    Factoring,
    Flattened,
    Cp,
    LowRank,
    Standard3d,
    DepthwiseSeparable3d,
    TwoPlusOneD,
};

const char* named_kind_name(NamedKind k);
NamedKind named_kind_from_name(const std::string& s);
std::vector<NamedKind> all_named_kinds();
std::vector<NamedKind> named_kinds_2d_3x3();  // constructors expressible with a single 3x3 factor
std::vector<NamedKind> named_kinds_3d();

// Required rank argument names per kind, e.g. bottleneck -> {"a","b"}.
std::vector<std::string> named_kind_rank_args(NamedKind k);

// Builds the named decomposition for the given geometry. `ranks` must supply
// every rank argument the kind requires.
EinconvGraph make_named(NamedKind kind, const ConvGeometry& geom,
                        const std::map<std::string, std::int64_t>& ranks = {});

}  // namespace tnconv

#endif
