#ifndef TNCONV_CORE_TRAINER_HPP
#define TNCONV_CORE_TRAINER_HPP

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "network.hpp"

namespace tnconv {

class TrainerError : public std::runtime_error {
public:
    enum class Kind { Io, Config, Diverged };
    TrainerError(Kind k, const std::string& msg) : std::runtime_error(msg), kind(k) {}
    Kind kind;
};

struct Dataset {
    DenseTensor images;       // (n, h, w, c), values scaled to [0, 1]
    std::vector<int> labels;  // in [0, n_classes)
    int n_classes = 0;

    std::int64_t size() const { return images.rank() ? images.dim_of("n") : 0; }
    Dataset slice(std::int64_t from, std::int64_t count) const;
};

// IDX (big-endian) image/label pair, magics 0x803 / 0x801.
Dataset load_idx(const std::string& images_path, const std::string& labels_path);
void save_idx(const Dataset& data, const std::string& images_path,
              const std::string& labels_path);

enum class OptimizerKind { Sgd, MomentumSgd, Adam };
OptimizerKind optimizer_from_name(const std::string& s);
const char* optimizer_name(OptimizerKind k);

struct TrainConfig {
    OptimizerKind optimizer = OptimizerKind::Adam;
    double learning_rate = 2e-4;
    double weight_decay = 1e-6;
    std::int64_t batch_size = 16;
    std::int64_t epochs = 50;
    std::uint64_t seed = 1;
    std::int64_t lr_halve_every = 0;  // 0: constant learning rate

    void check() const;
};

// Minimal TOML subset: key = value pairs, [sections] ignored, # comments.
TrainConfig parse_train_config(const std::string& toml_text);

// First-order update rule over a flat view of the trainable tensors.
class Optimizer {
public:
    Optimizer(OptimizerKind kind, double weight_decay)
        : kind_(kind), weight_decay_(weight_decay) {}

    void init(const std::vector<DenseTensor*>& slots);
    void step(std::vector<DenseTensor*>& slots, const std::vector<DenseTensor>& grads,
              double lr);
    std::int64_t steps_taken() const { return step_count_; }

private:
    OptimizerKind kind_;
    double weight_decay_;
    std::int64_t step_count_ = 0;
    std::vector<std::vector<double>> m1_, m2_;
};

struct EpochStats {
    std::int64_t epoch = 0;
    double loss = 0;
    double train_acc = 0;
    double test_acc = 0;   // NaN when no test set
    double seconds = 0;
};

struct TrainResult {
    Network net;
    std::vector<EpochStats> history;
};

TrainResult train(const NetworkSpec& spec, const Dataset& train_data,
                  const std::optional<Dataset>& test_data, const TrainConfig& cfg);

double evaluate(const Network& net, const Dataset& data);

// Presets: "lenet-mini" (optionally "lenet-mini:<kind>[:k=v,...]") and
// "synth-linear". The einconv template applies to every einconv block.
NetworkSpec make_preset(const std::string& name);
// As above but with an explicit layer structure applied to every einconv.
NetworkSpec make_preset_with_graph(const std::string& name, const EinconvGraph& graph);

// Deterministic synthetic datasets for tests and smoke runs.
Dataset make_separable_dataset(std::int64_t n, std::uint64_t seed);
Dataset make_blob_dataset(std::int64_t n, std::int64_t side, int classes,
                          std::uint64_t seed);

}  // namespace tnconv

#endif
