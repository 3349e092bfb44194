#include "trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>
#include <numeric>
#include <sstream>

#include "rng.hpp"

namespace tnconv {

Dataset Dataset::slice(std::int64_t from, std::int64_t count) const {
    if (from < 0 || from + count > size()) throw TrainerError(TrainerError::Kind::Config, "slice out of range");
    const std::int64_t H = images.dim_of("h"), W = images.dim_of("w"), C = images.dim_of("c");
    Dataset out;
    out.n_classes = n_classes;
    out.images = DenseTensor({{"n", count}, {"h", H}, {"w", W}, {"c", C}});
    const auto src = images.permuted({"n", "h", "w", "c"});
    const std::int64_t stride = H * W * C;
    std::copy(src.data().begin() + from * stride, src.data().begin() + (from + count) * stride,
              out.images.data().begin());
    out.labels.assign(labels.begin() + from, labels.begin() + from + count);
    return out;
}

namespace {

std::uint32_t read_be32(std::istream& f) {
    unsigned char b[4];
    f.read(reinterpret_cast<char*>(b), 4);
    if (!f) throw TrainerError(TrainerError::Kind::Io, "truncated IDX file");
    return (std::uint32_t(b[0]) << 24) | (std::uint32_t(b[1]) << 16) |
           (std::uint32_t(b[2]) << 8) | std::uint32_t(b[3]);
}

void write_be32(std::ostream& f, std::uint32_t v) {
    unsigned char b[4] = {static_cast<unsigned char>(v >> 24),
                          static_cast<unsigned char>(v >> 16),
                          static_cast<unsigned char>(v >> 8), static_cast<unsigned char>(v)};
    f.write(reinterpret_cast<char*>(b), 4);
}

}  // namespace

Dataset load_idx(const std::string& images_path, const std::string& labels_path) {
    std::ifstream fi(images_path, std::ios::binary);
    if (!fi) throw TrainerError(TrainerError::Kind::Io, "cannot open " + images_path);
    if (read_be32(fi) != 0x00000803u)
        throw TrainerError(TrainerError::Kind::Io, "bad magic in " + images_path);
    const std::int64_t n = read_be32(fi), h = read_be32(fi), w = read_be32(fi);
    if (n < 0 || h < 1 || w < 1 || n > (1 << 24) || h > 4096 || w > 4096)
        throw TrainerError(TrainerError::Kind::Io, "IDX dimensions out of range");

    Dataset out;
    out.images = DenseTensor({{"n", n}, {"h", h}, {"w", w}, {"c", 1}});
    std::vector<unsigned char> buf(static_cast<std::size_t>(h * w));
    for (std::int64_t s = 0; s < n; ++s) {
        fi.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
        if (!fi) throw TrainerError(TrainerError::Kind::Io, "truncated " + images_path);
        double* dst = out.images.data().data() + s * h * w;
        for (std::size_t p = 0; p < buf.size(); ++p) dst[p] = buf[p] / 255.0;
    }

    std::ifstream fl(labels_path, std::ios::binary);
    if (!fl) throw TrainerError(TrainerError::Kind::Io, "cannot open " + labels_path);
    if (read_be32(fl) != 0x00000801u)
        throw TrainerError(TrainerError::Kind::Io, "bad magic in " + labels_path);
    const std::int64_t nl = read_be32(fl);
    if (nl != n)
        throw TrainerError(TrainerError::Kind::Io, "image and label counts disagree");
    std::vector<unsigned char> lab(static_cast<std::size_t>(nl));
    fl.read(reinterpret_cast<char*>(lab.data()), static_cast<std::streamsize>(lab.size()));
    if (!fl) throw TrainerError(TrainerError::Kind::Io, "truncated " + labels_path);
    int classes = 0;
    for (auto v : lab) {
        out.labels.push_back(v);
        classes = std::max(classes, int(v) + 1);
    }
    out.n_classes = classes;
    return out;
}

void save_idx(const Dataset& data, const std::string& images_path,
              const std::string& labels_path) {
    const auto imgs = data.images.permuted({"n", "h", "w", "c"});
    const std::int64_t n = imgs.dim_of("n"), h = imgs.dim_of("h"), w = imgs.dim_of("w");
    if (imgs.dim_of("c") != 1)
        throw TrainerError(TrainerError::Kind::Io, "IDX export supports single-channel only");
    std::ofstream fi(images_path, std::ios::binary);
    write_be32(fi, 0x00000803u);
    write_be32(fi, static_cast<std::uint32_t>(n));
    write_be32(fi, static_cast<std::uint32_t>(h));
    write_be32(fi, static_cast<std::uint32_t>(w));
    for (std::int64_t q = 0; q < imgs.size(); ++q) {
        const double v = std::clamp(imgs.data()[q], 0.0, 1.0);
        const unsigned char b = static_cast<unsigned char>(std::lround(v * 255.0));
        fi.write(reinterpret_cast<const char*>(&b), 1);
    }
    std::ofstream fl(labels_path, std::ios::binary);
    write_be32(fl, 0x00000801u);
    write_be32(fl, static_cast<std::uint32_t>(n));
    for (int v : data.labels) {
        const unsigned char b = static_cast<unsigned char>(v);
        fl.write(reinterpret_cast<const char*>(&b), 1);
    }
}

OptimizerKind optimizer_from_name(const std::string& s) {
    if (s == "sgd") return OptimizerKind::Sgd;
    if (s == "momentum-sgd" || s == "momentum_sgd") return OptimizerKind::MomentumSgd;
    if (s == "adam") return OptimizerKind::Adam;
    throw TrainerError(TrainerError::Kind::Config, "unknown optimizer: " + s);
}

const char* optimizer_name(OptimizerKind k) {
    switch (k) {
        case OptimizerKind::Sgd: return "sgd";
        case OptimizerKind::MomentumSgd: return "momentum-sgd";
        case OptimizerKind::Adam: return "adam";
    }
    return "?";
}

void TrainConfig::check() const {
    if (learning_rate < 0) throw TrainerError(TrainerError::Kind::Config, "negative learning rate");
    if (weight_decay < 0) throw TrainerError(TrainerError::Kind::Config, "negative weight decay");
    if (batch_size < 1) throw TrainerError(TrainerError::Kind::Config, "batch size must be positive");
    if (epochs < 0) throw TrainerError(TrainerError::Kind::Config, "negative epoch count");
}

TrainConfig parse_train_config(const std::string& toml_text) {
    TrainConfig cfg;
    std::istringstream in(toml_text);
    std::string line;
    while (std::getline(in, line)) {
        const auto hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        auto first = line.find_first_not_of(" \t\r");
        if (first == std::string::npos) continue;
        auto last = line.find_last_not_of(" \t\r");
        line = line.substr(first, last - first + 1);
        if (line.empty() || line[0] == '[') continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw TrainerError(TrainerError::Kind::Config, "bad config line: " + line);
        auto trim = [](std::string s) {
            const auto a = s.find_first_not_of(" \t\"");
            const auto b = s.find_last_not_of(" \t\"");
            return a == std::string::npos ? std::string() : s.substr(a, b - a + 1);
        };
        const std::string key = trim(line.substr(0, eq));
        const std::string val = trim(line.substr(eq + 1));
        try {
            if (key == "optimizer") cfg.optimizer = optimizer_from_name(val);
            else if (key == "learning_rate") cfg.learning_rate = std::stod(val);
            else if (key == "weight_decay") cfg.weight_decay = std::stod(val);
            else if (key == "batch_size") cfg.batch_size = std::stoll(val);
            else if (key == "epochs") cfg.epochs = std::stoll(val);
            else if (key == "seed") cfg.seed = std::stoull(val);
            else if (key == "lr_halve_every") cfg.lr_halve_every = std::stoll(val);
            else throw TrainerError(TrainerError::Kind::Config, "unknown config key: " + key);
        } catch (const std::invalid_argument&) {
            throw TrainerError(TrainerError::Kind::Config, "bad value for " + key + ": " + val);
        }
    }
    cfg.check();
    return cfg;
}

void Optimizer::init(const std::vector<DenseTensor*>& slots) {
    m1_.clear();
    m2_.clear();
    step_count_ = 0;
    for (const auto* t : slots) {
        m1_.emplace_back(t->size(), 0.0);
        m2_.emplace_back(t->size(), 0.0);
    }
}

void Optimizer::step(std::vector<DenseTensor*>& slots, const std::vector<DenseTensor>& grads,
                     double lr) {
    ++step_count_;
    for (std::size_t s = 0; s < slots.size(); ++s) {
        auto w = slots[s]->data();
        const auto g = grads[s].data();
        switch (kind_) {
            case OptimizerKind::Sgd:
                for (std::int64_t q = 0; q < slots[s]->size(); ++q)
                    w[q] -= lr * (g[q] + weight_decay_ * w[q]);
                break;
            case OptimizerKind::MomentumSgd:
                for (std::int64_t q = 0; q < slots[s]->size(); ++q) {
                    const double gq = g[q] + weight_decay_ * w[q];
                    m1_[s][q] = 0.9 * m1_[s][q] + gq;
                    w[q] -= lr * m1_[s][q];
                }
                break;
            case OptimizerKind::Adam: {
                const double b1 = 0.9, b2 = 0.999, eps = 1e-8;
                const double c1 = 1.0 - std::pow(b1, static_cast<double>(step_count_));
                const double c2 = 1.0 - std::pow(b2, static_cast<double>(step_count_));
                for (std::int64_t q = 0; q < slots[s]->size(); ++q) {
                    const double gq = g[q] + weight_decay_ * w[q];
                    m1_[s][q] = b1 * m1_[s][q] + (1 - b1) * gq;
                    m2_[s][q] = b2 * m2_[s][q] + (1 - b2) * gq * gq;
                    const double mh = m1_[s][q] / c1;
                    const double vh = m2_[s][q] / c2;
                    w[q] -= lr * mh / (std::sqrt(vh) + eps);
                }
                break;
            }
        }
    }
}

namespace {

DenseTensor gather_batch(const DenseTensor& images, const std::vector<std::int64_t>& idx,
                         std::vector<int>* batch_labels, const std::vector<int>& labels) {
    const std::int64_t H = images.dim_of("h"), W = images.dim_of("w"), C = images.dim_of("c");
    const std::int64_t stride = H * W * C;
    DenseTensor out({{"n", static_cast<std::int64_t>(idx.size())},
                     {"h", H},
                     {"w", W},
                     {"c", C}});
    for (std::size_t s = 0; s < idx.size(); ++s) {
        std::copy(images.data().begin() + idx[s] * stride,
                  images.data().begin() + (idx[s] + 1) * stride,
                  out.data().begin() + static_cast<std::int64_t>(s) * stride);
        if (batch_labels) batch_labels->push_back(labels[static_cast<std::size_t>(idx[s])]);
    }
    return out;
}

}  // namespace

double evaluate(const Network& net, const Dataset& data) {
    if (data.size() == 0) return 0.0;
    const std::int64_t chunk = 64;
    std::int64_t correct = 0;
    for (std::int64_t at = 0; at < data.size(); at += chunk) {
        const std::int64_t count = std::min<std::int64_t>(chunk, data.size() - at);
        std::vector<std::int64_t> idx(count);
        std::iota(idx.begin(), idx.end(), at);
        std::vector<int> batch_labels;
        DenseTensor x = gather_batch(data.images, idx, &batch_labels, data.labels);
        DenseTensor logits = network_forward(net, x).permuted({"n", "m"});
        const std::int64_t K = logits.dim_of("m");
        for (std::int64_t s = 0; s < count; ++s) {
            const double* row = logits.data().data() + s * K;
            std::int64_t best = 0;
            for (std::int64_t k = 1; k < K; ++k)
                if (row[k] > row[best]) best = k;
            if (best == batch_labels[static_cast<std::size_t>(s)]) ++correct;
        }
    }
    return static_cast<double>(correct) / static_cast<double>(data.size());
}

TrainResult train(const NetworkSpec& spec, const Dataset& train_data,
                  const std::optional<Dataset>& test_data, const TrainConfig& cfg) {
    cfg.check();
    if (train_data.size() == 0)
        throw TrainerError(TrainerError::Kind::Config, "empty training set");
    const std::int64_t H = train_data.images.dim_of("h");
    const std::int64_t W = train_data.images.dim_of("w");
    const std::int64_t C = train_data.images.dim_of("c");

    TrainResult result;
    result.net = build_network(spec, {H, W, C}, cfg.seed);
    if (result.net.n_classes < train_data.n_classes)
        throw TrainerError(TrainerError::Kind::Config,
                           "network has fewer classes than the dataset");

    auto slots = result.net.param_slots();
    Optimizer opt(cfg.optimizer, cfg.weight_decay);
    opt.init(slots);

    for (std::int64_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        const auto t0 = std::chrono::steady_clock::now();
        double lr_now = cfg.learning_rate;
        if (cfg.lr_halve_every > 0)
            lr_now *= std::pow(0.5, static_cast<double>(epoch / cfg.lr_halve_every));

        std::vector<std::int64_t> order(static_cast<std::size_t>(train_data.size()));
        std::iota(order.begin(), order.end(), 0);
        Rng rng(cfg.seed ^ (0x9e3779b97f4a7c15ull * (epoch + 1)));
        for (std::int64_t s = train_data.size() - 1; s > 0; --s)
            std::swap(order[static_cast<std::size_t>(s)],
                      order[static_cast<std::size_t>(rng.below(s + 1))]);

        double loss_sum = 0;
        std::int64_t batches = 0;
        for (std::int64_t at = 0; at < train_data.size(); at += cfg.batch_size) {
            const std::int64_t count =
                std::min<std::int64_t>(cfg.batch_size, train_data.size() - at);
            std::vector<std::int64_t> idx(order.begin() + at, order.begin() + at + count);
            std::vector<int> batch_labels;
            DenseTensor x = gather_batch(train_data.images, idx, &batch_labels,
                                         train_data.labels);
            auto grads = network_loss_grads(result.net, x, batch_labels);
            if (!std::isfinite(grads.loss))
                throw TrainerError(TrainerError::Kind::Diverged,
                                   "loss diverged at epoch " + std::to_string(epoch));
            loss_sum += grads.loss;
            ++batches;
            opt.step(slots, grads.flat, lr_now);
        }

        EpochStats st;
        st.epoch = epoch;
        st.loss = loss_sum / std::max<std::int64_t>(1, batches);
        st.train_acc = evaluate(result.net, train_data);
        st.test_acc = test_data.has_value() ? evaluate(result.net, *test_data)
                                            : std::numeric_limits<double>::quiet_NaN();
        st.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        result.history.push_back(st);
    }
    return result;
}

NetworkSpec make_preset(const std::string& name) {
    std::string base = name;
    std::string kind = "standard";
    std::string rank_args;
    const auto c1 = name.find(':');
    if (c1 != std::string::npos) {
        base = name.substr(0, c1);
        const auto c2 = name.find(':', c1 + 1);
        kind = name.substr(c1 + 1, c2 == std::string::npos ? std::string::npos : c2 - c1 - 1);
        if (c2 != std::string::npos) rank_args = name.substr(c2 + 1);
    }
    std::string ranks;
    if (!rank_args.empty()) {
        ranks = " " + rank_args;
        std::replace(ranks.begin(), ranks.end(), ',', ' ');
    }
    if (base == "lenet-mini") {
        return NetworkSpec::parse("einconv " + kind + " 16" + ranks +
                                  "\nmaxpool 2\neinconv " + kind + " 32" + ranks +
                                  "\nmaxpool 2\nfc 10\nsoftmax\n");
    }
    if (base == "synth-linear") {
        return NetworkSpec::parse("einconv standard 4 1x1\nfc 2\nsoftmax\n");
    }
    throw TrainerError(TrainerError::Kind::Config, "unknown preset: " + name);
}

NetworkSpec make_preset_with_graph(const std::string& name, const EinconvGraph& graph) {
    NetworkSpec spec = make_preset(name);
    for (auto& b : spec.blocks) {
        if (b.kind != BlockKind::Einconv) continue;
        b.einconv.graph = graph;
        std::vector<std::int64_t> filter;
        if (graph.geometry.has_value()) filter = graph.geometry->filter;
        if (!filter.empty()) b.einconv.filter = filter;
    }
    return spec;
}

Dataset make_separable_dataset(std::int64_t n, std::uint64_t seed) {
    // two classes of 8x8 images: class 0 bright in the top half, class 1 in
    // the bottom half; noise is small enough that the halves' mean
    // difference classifies every sample
    Rng rng(seed);
    Dataset out;
    out.n_classes = 2;
    out.images = DenseTensor({{"n", n}, {"h", 8}, {"w", 8}, {"c", 1}});
    for (std::int64_t s = 0; s < n; ++s) {
        const int label = static_cast<int>(s % 2);
        out.labels.push_back(label);
        double* img = out.images.data().data() + s * 64;
        for (int h = 0; h < 8; ++h)
            for (int w = 0; w < 8; ++w) {
                const bool bright = (label == 0) == (h < 4);
                img[h * 8 + w] =
                    std::clamp(bright ? 0.8 + 0.1 * rng.uniform() : 0.1 * rng.uniform(),
                               0.0, 1.0);
            }
    }
    return out;
}

Dataset make_blob_dataset(std::int64_t n, std::int64_t side, int classes,
                          std::uint64_t seed) {
    // each class lights a fixed block of the image; used as a stand-in
    // multi-class task for pipeline smoke tests
    Rng rng(seed);
    Dataset out;
    out.n_classes = classes;
    out.images = DenseTensor({{"n", n}, {"h", side}, {"w", side}, {"c", 1}});
    for (std::int64_t s = 0; s < n; ++s) {
        const int label = static_cast<int>(rng.below(classes));
        out.labels.push_back(label);
        double* img = out.images.data().data() + s * side * side;
        for (std::int64_t p = 0; p < side * side; ++p) img[p] = 0.05 * rng.uniform();
        const std::int64_t block = std::max<std::int64_t>(2, side / classes);
        const std::int64_t at = (label * block) % std::max<std::int64_t>(1, side - block);
        for (std::int64_t h = at; h < std::min(side, at + block); ++h)
            for (std::int64_t w = at; w < std::min(side, at + block); ++w)
                img[h * side + w] = std::clamp(0.7 + 0.3 * rng.uniform(), 0.0, 1.0);
    }
    return out;
}

}  // namespace tnconv
