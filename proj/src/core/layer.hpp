#ifndef TNCONV_CORE_LAYER_HPP
#define TNCONV_CORE_LAYER_HPP

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "einsum.hpp"
#include "graph.hpp"

namespace tnconv {

// A graph with materialized parameter tensors and concrete dummy couplings.
struct LayerInstance {
    EinconvGraph graph;
    std::map<int, DenseTensor> params;   // parameter vertex index -> tensor
    std::map<int, DummySpec> dummies;    // dummy vertex index -> coupling

    const ConvGeometry& geometry() const { return *graph.geometry; }
};

// Uniform [-b, b] with b = sqrt(6 / fan_in); fan_in is the product of the
// vertex's contracted-label dims. Deterministic in (seed, vertex index).
LayerInstance init_params(const EinconvGraph& graph, const ConvGeometry& geometry,
                          std::uint64_t seed);
LayerInstance init_params(const EinconvGraph& graph_with_geometry, std::uint64_t seed);

// Saved intermediates of one staged forward pass, enough to backpropagate.
struct LayerTrace {
    struct Stage {
        ContractionExpr expr;
        std::vector<Operand> operands;     // operand 0 is the running intermediate
        std::vector<int> param_vertices;   // vertex id per operand (-1 for the intermediate)
        DenseTensor pre_activation;        // stage output before any ReLU
        bool relu_applied = false;
    };
    std::vector<Stage> stages;
};

// Staged forward pass. x carries (n, h, w[, d], c) in any axis order; the
// result is ordered (n, h', w'[, d'], c'). ReLU fires on the stage
// boundaries whose activation flag is set.
DenseTensor forward(const LayerInstance& layer, const DenseTensor& x,
                    LayerTrace* trace = nullptr);

struct LayerGrads {
    std::map<int, DenseTensor> by_vertex;  // parameter vertex index -> gradient
    DenseTensor input;                     // dL/dx, labels as the input was given
};

LayerGrads backward(const LayerInstance& layer, const LayerTrace& trace,
                    const DenseTensor& upstream);

// Literal nested-loop convolution (the reference semantics): kernel labelled
// (i, j[, k], c, c'), x as in forward; padding zero-extends, out-of-range
// taps contribute nothing.
DenseTensor direct_conv_oracle(const DenseTensor& x, const DenseTensor& kernel,
                               const ConvGeometry& geom);

struct LayerComplexity {
    std::int64_t param_count = 0;
    std::uint64_t flops = 0;  // planned forward at batch 1
};
LayerComplexity complexity(const LayerInstance& layer);

// Checkpoint: graph JSON line followed by one little-endian binary blob per
// parameter vertex (u32 vertex, u32 rank, u64 dims..., f64 values...).
void save_layer(const LayerInstance& layer, const std::string& path);
LayerInstance load_layer(const std::string& path);

}  // namespace tnconv

#endif
