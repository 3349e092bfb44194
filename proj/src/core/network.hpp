#ifndef TNCONV_CORE_NETWORK_HPP
#define TNCONV_CORE_NETWORK_HPP

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "layer.hpp"

namespace tnconv {

class NetworkError : public std::runtime_error {
public:
    explicit NetworkError(const std::string& msg) : std::runtime_error(msg) {}
};

enum class BlockKind { Einconv, MaxPool, GlobalAvgPool, FullyConnected, Relu, Softmax };

// Structure template for an einconv block; channels are filled in per
// position when the network is built.
struct EinconvTemplate {
    NamedKind kind = NamedKind::Standard;
    std::map<std::string, std::int64_t> ranks;
    std::vector<std::int64_t> filter = {3, 3};
    std::optional<EinconvGraph> graph;  // explicit structure; overrides kind
};

struct NetworkBlock {
    BlockKind kind = BlockKind::Einconv;
    std::int64_t arg = 0;  // out channels / pool factor / fc units
    EinconvTemplate einconv;
};

struct NetworkSpec {
    std::vector<NetworkBlock> blocks;

    // line-per-block text format, e.g.
    //   einconv standard 16
    //   einconv cp 16 gamma=8
    //   maxpool 2
    //   fc 10
    //   softmax
    static NetworkSpec parse(const std::string& text);
    std::string to_text() const;
};

// Rebuilds a graph's label dims for a new geometry: spatial and channel dims
// follow the geometry, rank dims are kept. The structure must be compatible
// (filter composition per axis equals the geometry's filter).
EinconvGraph reshape_graph_geometry(const EinconvGraph& g, const ConvGeometry& geom);

struct Network {
    NetworkSpec spec;
    std::vector<std::int64_t> input_shape;  // H, W, C
    int n_classes = 0;
    // trainable state, in block order
    std::vector<LayerInstance> layers;      // one per einconv block
    std::vector<DenseTensor> fc_weights;    // one per fc block, labels (u, m)

    // flat view over every trainable tensor, einconv vertices first
    std::vector<DenseTensor*> param_slots();
    std::vector<const DenseTensor*> param_slots() const;
    std::int64_t parameter_count() const;
    std::int64_t convolution_parameter_count() const;
};

Network build_network(const NetworkSpec& spec, const std::vector<std::int64_t>& input_shape,
                      std::uint64_t seed);

struct NetworkTrace {
    struct BlockState {
        DenseTensor input;            // as consumed by the block
        LayerTrace layer;             // einconv
        std::vector<std::int64_t> argmax;  // maxpool routing
        DenseTensor pre_activation;   // relu
        DenseTensor pre_flatten;      // fc: spatial tensor before flattening
        bool renamed_from_m = false;  // fc: input came from a previous fc
    };
    std::vector<BlockState> blocks;
};

// Forward to logits (the softmax block is fused into the loss).
DenseTensor network_forward(const Network& net, const DenseTensor& x,
                            NetworkTrace* trace = nullptr);

struct NetworkGrads {
    std::vector<DenseTensor> flat;  // aligned with param_slots()
    double loss = 0.0;
};

// Mean softmax cross-entropy over the batch plus gradients for every
// trainable tensor.
NetworkGrads network_loss_grads(const Network& net, const DenseTensor& x,
                                const std::vector<int>& labels);

// Network checkpoint: the spec text, per-layer graph JSON and every
// trainable tensor as little-endian doubles.
void save_network(const Network& net, const std::string& path);
Network load_network(const std::string& path);

double softmax_cross_entropy(const DenseTensor& logits, const std::vector<int>& labels,
                             DenseTensor* dlogits = nullptr);

// Window max over (h', w') by an integer factor; ties go to the first
// position in row-major window order. `argmax` records the routing for the
// backward pass.
DenseTensor maxpool_forward(const DenseTensor& x, std::int64_t factor,
                            std::vector<std::int64_t>* argmax);
DenseTensor maxpool_backward(const DenseTensor& grad, const DenseTensor& input_like,
                             const std::vector<std::int64_t>& argmax);

}  // namespace tnconv

#endif
