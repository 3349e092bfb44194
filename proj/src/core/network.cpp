#include "network.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include "rng.hpp"

namespace tnconv {

namespace {

std::vector<std::string> split_ws(const std::string& line) {
    std::istringstream in(line);
    std::vector<std::string> out;
    std::string tok;
    while (in >> tok) out.push_back(tok);
    return out;
}

std::map<std::string, std::int64_t> parse_rank_args(const std::vector<std::string>& toks,
                                                    std::size_t from) {
    std::map<std::string, std::int64_t> out;
    for (std::size_t t = from; t < toks.size(); ++t) {
        const auto eq = toks[t].find('=');
        if (eq == std::string::npos)
            throw NetworkError("bad rank argument: " + toks[t]);
        out[toks[t].substr(0, eq)] = std::stoll(toks[t].substr(eq + 1));
    }
    return out;
}

}  // namespace

NetworkSpec NetworkSpec::parse(const std::string& text) {
    NetworkSpec spec;
    std::istringstream in(text);
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty() || line[0] == '#') continue;
        const auto toks = split_ws(line);
        if (toks.empty()) continue;
        NetworkBlock b;
        if (toks[0] == "einconv") {
            if (toks.size() < 3) throw NetworkError("einconv needs a kind and channel count");
            b.kind = BlockKind::Einconv;
            std::size_t rank_from = 3;
            if (toks[1].rfind('@', 0) == 0)
                throw NetworkError("graph files are attached by the caller, not in net text");
            b.einconv.kind = named_kind_from_name(toks[1]);
            b.arg = std::stoll(toks[2]);
            if (rank_from < toks.size() && toks[rank_from].find('=') == std::string::npos) {
                // optional filter spec like 1x1
                const auto& f = toks[rank_from];
                const auto x = f.find('x');
                if (x == std::string::npos) throw NetworkError("bad filter spec: " + f);
                b.einconv.filter = {std::stoll(f.substr(0, x)), std::stoll(f.substr(x + 1))};
                ++rank_from;
            }
            b.einconv.ranks = parse_rank_args(toks, rank_from);
        } else if (toks[0] == "maxpool") {
            if (toks.size() != 2) throw NetworkError("maxpool needs a factor");
            b.kind = BlockKind::MaxPool;
            b.arg = std::stoll(toks[1]);
        } else if (toks[0] == "gap") {
            b.kind = BlockKind::GlobalAvgPool;
        } else if (toks[0] == "fc") {
            if (toks.size() != 2) throw NetworkError("fc needs a unit count");
            b.kind = BlockKind::FullyConnected;
            b.arg = std::stoll(toks[1]);
        } else if (toks[0] == "relu") {
            b.kind = BlockKind::Relu;
        } else if (toks[0] == "softmax") {
            b.kind = BlockKind::Softmax;
        } else {
            throw NetworkError("unknown block: " + toks[0]);
        }
        spec.blocks.push_back(std::move(b));
    }
    if (spec.blocks.empty() || spec.blocks.back().kind != BlockKind::Softmax)
        throw NetworkError("network must end with softmax");
    return spec;
}

std::string NetworkSpec::to_text() const {
    std::ostringstream out;
    for (const auto& b : blocks) {
        switch (b.kind) {
            case BlockKind::Einconv: {
                out << "einconv " << named_kind_name(b.einconv.kind) << " " << b.arg;
                if (b.einconv.filter != std::vector<std::int64_t>{3, 3})
                    out << " " << b.einconv.filter[0] << "x" << b.einconv.filter[1];
                for (const auto& [k, v] : b.einconv.ranks) out << " " << k << "=" << v;
                out << "\n";
                break;
            }
            case BlockKind::MaxPool: out << "maxpool " << b.arg << "\n"; break;
            case BlockKind::GlobalAvgPool: out << "gap\n"; break;
            case BlockKind::FullyConnected: out << "fc " << b.arg << "\n"; break;
            case BlockKind::Relu: out << "relu\n"; break;
            case BlockKind::Softmax: out << "softmax\n"; break;
        }
    }
    return out.str();
}

EinconvGraph reshape_graph_geometry(const EinconvGraph& g, const ConvGeometry& geom) {
    geom.check();
    EinconvGraph out = g;
    out.geometry = geom;
    const int nd = geom.spatial_dims();
    if (g.spatial_dims() != nd) throw NetworkError("graph dimensionality mismatch");

    static const char* bases[3] = {"h", "w", "d"};
    for (auto& l : out.inner) {
        for (int a = 0; a < nd; ++a)
            if (l.name == bases[a]) l.dim = geom.spatial_in[a];
        if (l.name == "c") l.dim = geom.channels_in;
    }
    // mid-spatial dims follow from the link geometry; compute on a copy that
    // already has the right input dims
    const auto chains = derive_axis_chains(out);
    for (std::size_t a = 0; a < chains.size(); ++a) {
        std::int64_t eff = 1;
        for (const auto& link : chains[a].links)
            if (!link.filter_label.empty()) eff += out.dim_of(link.filter_label) - 1;
        if (eff != geom.filter[a])
            throw NetworkError("graph filter composition does not match the geometry");
        std::int64_t remaining = geom.padding;
        std::int64_t cur = geom.spatial_in[a];
        for (std::size_t m = 0; m < chains[a].links.size(); ++m) {
            const auto& link = chains[a].links[m];
            const std::int64_t fd =
                link.filter_label.empty() ? 1 : out.dim_of(link.filter_label);
            const bool last = m + 1 == chains[a].links.size();
            const std::int64_t pad =
                last ? remaining : std::min<std::int64_t>((fd - 1) / 2, remaining);
            remaining -= pad;
            const std::int64_t stride = last ? geom.stride : 1;
            const std::int64_t span = cur + 2 * pad - fd;
            if (span < 0 || span % stride != 0)
                throw NetworkError("geometry incompatible with the graph's chains");
            cur = span / stride + 1;
            if (!last)
                for (auto& l : out.inner)
                    if (l.name == link.out_label) l.dim = cur;
        }
    }
    const auto bad = validate(out);
    if (!bad.empty()) throw NetworkError("reshaped graph invalid: " + bad.front());
    return out;
}

std::vector<DenseTensor*> Network::param_slots() {
    std::vector<DenseTensor*> out;
    for (auto& layer : layers)
        for (auto& [v, t] : layer.params) out.push_back(&t);
    for (auto& w : fc_weights) out.push_back(&w);
    return out;
}

std::vector<const DenseTensor*> Network::param_slots() const {
    std::vector<const DenseTensor*> out;
    for (const auto& layer : layers)
        for (const auto& [v, t] : layer.params) out.push_back(&t);
    for (const auto& w : fc_weights) out.push_back(&w);
    return out;
}

std::int64_t Network::parameter_count() const {
    std::int64_t n = 0;
    for (const auto* t : param_slots()) n += t->size();
    return n;
}

std::int64_t Network::convolution_parameter_count() const {
    std::int64_t n = 0;
    for (const auto& layer : layers)
        for (const auto& [v, t] : layer.params) n += t.size();
    return n;
}

Network build_network(const NetworkSpec& spec, const std::vector<std::int64_t>& input_shape,
                      std::uint64_t seed) {
    if (input_shape.size() != 3) throw NetworkError("input shape must be H, W, C");
    Network net;
    net.spec = spec;
    net.input_shape = input_shape;

    std::int64_t H = input_shape[0], W = input_shape[1], C = input_shape[2];
    bool flattened = false;
    std::int64_t flat = 0;
    Rng base(seed);
    int block_index = 0;
    for (const auto& b : spec.blocks) {
        switch (b.kind) {
            case BlockKind::Einconv: {
                if (flattened) throw NetworkError("einconv after flattening");
                ConvGeometry geom;
                geom.spatial_in = {H, W};
                geom.filter = b.einconv.filter;
                geom.stride = 1;
                geom.padding = (std::max(b.einconv.filter[0], b.einconv.filter[1]) - 1) / 2;
                geom.channels_in = C;
                geom.channels_out = b.arg;
                EinconvGraph g = b.einconv.graph.has_value()
                                     ? reshape_graph_geometry(*b.einconv.graph, geom)
                                     : make_named(b.einconv.kind, geom, b.einconv.ranks);
                net.layers.push_back(init_params(g, base.fork(block_index)));
                const auto out_sp = geom.spatial_out();
                H = out_sp[0];
                W = out_sp[1];
                C = b.arg;
                break;
            }
            case BlockKind::MaxPool: {
                if (flattened) throw NetworkError("maxpool after flattening");
                if (b.arg < 1 || H % b.arg || W % b.arg)
                    throw NetworkError("pool factor must divide the spatial size");
                H /= b.arg;
                W /= b.arg;
                break;
            }
            case BlockKind::GlobalAvgPool: {
                if (flattened) throw NetworkError("gap after flattening");
                flattened = true;
                flat = C;
                break;
            }
            case BlockKind::FullyConnected: {
                const std::int64_t in = flattened ? flat : H * W * C;
                flattened = true;
                DenseTensor w({{"u", in}, {"m", b.arg}});
                Rng rng(base.fork(1000 + block_index));
                const double bound = std::sqrt(6.0 / static_cast<double>(in));
                for (auto& v : w.data()) v = rng.uniform(-bound, bound);
                net.fc_weights.push_back(std::move(w));
                flat = b.arg;
                break;
            }
            case BlockKind::Relu:
                break;
            case BlockKind::Softmax:
                net.n_classes = static_cast<int>(flattened ? flat : H * W * C);
                break;
        }
        ++block_index;
    }
    if (net.n_classes < 2) throw NetworkError("network must end in at least two classes");
    return net;
}

DenseTensor maxpool_forward(const DenseTensor& x, std::int64_t f,
                            std::vector<std::int64_t>* argmax) {
    DenseTensor xs = x.permuted({"n", "h'", "w'", "c'"});
    const std::int64_t N = xs.dim_of("n"), H = xs.dim_of("h'"), W = xs.dim_of("w'"),
                       C = xs.dim_of("c'");
    const std::int64_t Ho = H / f, Wo = W / f;
    DenseTensor out({{"n", N}, {"h'", Ho}, {"w'", Wo}, {"c'", C}});
    if (argmax) argmax->assign(static_cast<std::size_t>(N * Ho * Wo * C), 0);
    const auto in = xs.data();
    auto dst = out.data();
    std::int64_t o = 0;
    for (std::int64_t n = 0; n < N; ++n)
        for (std::int64_t ho = 0; ho < Ho; ++ho)
            for (std::int64_t wo = 0; wo < Wo; ++wo)
                for (std::int64_t c = 0; c < C; ++c, ++o) {
                    double best = 0;
                    std::int64_t best_off = -1;
                    for (std::int64_t dh = 0; dh < f; ++dh)
                        for (std::int64_t dw = 0; dw < f; ++dw) {
                            const std::int64_t off =
                                ((n * H + ho * f + dh) * W + wo * f + dw) * C + c;
                            if (best_off < 0 || in[off] > best) {
                                best = in[off];
                                best_off = off;
                            }
                        }
                    dst[o] = best;
                    if (argmax) (*argmax)[o] = best_off;
                }
    return out;
}

DenseTensor maxpool_backward(const DenseTensor& g, const DenseTensor& x_shape_ref,
                             const std::vector<std::int64_t>& argmax) {
    DenseTensor out(x_shape_ref.labels());  // zeros, same (n,h',w',c') order
    const auto src = g.permuted({"n", "h'", "w'", "c'"});
    auto dst = out.data();
    for (std::int64_t o = 0; o < src.size(); ++o) dst[argmax[o]] += src.data()[o];
    return out;
}

double softmax_cross_entropy(const DenseTensor& logits, const std::vector<int>& labels,
                             DenseTensor* dlogits) {
    DenseTensor z = logits.permuted({"n", "m"});
    const std::int64_t N = z.dim_of("n"), K = z.dim_of("m");
    if (static_cast<std::int64_t>(labels.size()) != N)
        throw NetworkError("label count does not match the batch");
    if (dlogits) *dlogits = DenseTensor(z.labels());
    double loss = 0;
    for (std::int64_t n = 0; n < N; ++n) {
        const double* row = z.data().data() + n * K;
        double mx = row[0];
        for (std::int64_t k = 1; k < K; ++k) mx = std::max(mx, row[k]);
        double denom = 0;
        for (std::int64_t k = 0; k < K; ++k) denom += std::exp(row[k] - mx);
        const int y = labels[static_cast<std::size_t>(n)];
        if (y < 0 || y >= K) throw NetworkError("label out of range");
        loss += -(row[y] - mx - std::log(denom));
        if (dlogits) {
            double* grow = dlogits->data().data() + n * K;
            for (std::int64_t k = 0; k < K; ++k)
                grow[k] = (std::exp(row[k] - mx) / denom - (k == y ? 1.0 : 0.0)) /
                          static_cast<double>(N);
        }
    }
    return loss / static_cast<double>(N);
}

DenseTensor network_forward(const Network& net, const DenseTensor& x, NetworkTrace* trace) {
    DenseTensor cur = x;  // (n, h, w, c)
    // running tensors use input-side names before each einconv and
    // output-side names after; renaming keeps the layer contracts simple
    auto rename_to_input = [](const DenseTensor& t) {
        std::vector<IndexLabel> ls;
        for (const auto& l : t.labels()) {
            std::string name = l.name;
            if (name == "h'") name = "h";
            if (name == "w'") name = "w";
            if (name == "c'") name = "c";
            ls.push_back({name, l.dim});
        }
        return DenseTensor(ls, std::vector<double>(t.data().begin(), t.data().end()));
    };

    std::size_t layer_at = 0, fc_at = 0;
    for (const auto& b : net.spec.blocks) {
        NetworkTrace::BlockState state;
        switch (b.kind) {
            case BlockKind::Einconv: {
                DenseTensor in = rename_to_input(cur);
                if (trace) state.input = in;
                cur = forward(net.layers[layer_at], in, trace ? &state.layer : nullptr);
                ++layer_at;
                break;
            }
            case BlockKind::MaxPool: {
                if (trace) state.input = cur;
                cur = maxpool_forward(cur, b.arg, trace ? &state.argmax : nullptr);
                break;
            }
            case BlockKind::GlobalAvgPool: {
                if (trace) state.input = cur;
                const std::int64_t HW = cur.dim_of("h'") * cur.dim_of("w'");
                DenseTensor summed = cur.summed_over(make_label_set({"h'", "w'"}));
                for (auto& v : summed.data()) v /= static_cast<double>(HW);
                // (n, c') -> (n, u)
                DenseTensor flat({{"n", summed.dim_of("n")}, {"u", summed.dim_of("c'")}});
                auto p = summed.permuted({"n", "c'"});
                std::copy(p.data().begin(), p.data().end(), flat.data().begin());
                cur = std::move(flat);
                break;
            }
            case BlockKind::FullyConnected: {
                if (cur.axis_of("m") >= 0) {
                    // previous fc output feeds the next as features
                    DenseTensor p = cur.permuted({"n", "m"});
                    DenseTensor flat({{"n", p.dim_of("n")}, {"u", p.dim_of("m")}});
                    std::copy(p.data().begin(), p.data().end(), flat.data().begin());
                    cur = std::move(flat);
                    state.renamed_from_m = true;
                } else if (cur.axis_of("u") < 0) {
                    // flatten spatial labels row-major, batch first
                    std::vector<std::string> order = {"n"};
                    for (const auto& l : cur.labels())
                        if (l.name != "n") order.push_back(l.name);
                    std::sort(order.begin() + 1, order.end(), label_less);
                    DenseTensor p = cur.permuted(order);
                    if (trace) state.pre_flatten = p;
                    DenseTensor flat({{"n", p.dim_of("n")},
                                      {"u", p.size() / p.dim_of("n")}});
                    std::copy(p.data().begin(), p.data().end(), flat.data().begin());
                    cur = std::move(flat);
                }
                if (trace) state.input = cur;
                const DenseTensor& w = net.fc_weights[fc_at];
                auto expr = ContractionExpr::from_operands({cur, w}, {"n", "m"});
                cur = contract(expr, {Operand(cur), Operand(w)});
                ++fc_at;
                break;
            }
            case BlockKind::Relu: {
                if (trace) state.pre_activation = cur;
                DenseTensor r = cur;
                for (auto& v : r.data()) v = v > 0 ? v : 0;
                cur = std::move(r);
                break;
            }
            case BlockKind::Softmax:
                break;  // fused into the loss
        }
        if (trace) trace->blocks.push_back(std::move(state));
    }
    return cur;  // logits (n, m)
}

NetworkGrads network_loss_grads(const Network& net, const DenseTensor& x,
                                const std::vector<int>& labels) {
    NetworkTrace trace;
    DenseTensor logits = network_forward(net, x, &trace);
    NetworkGrads out;
    DenseTensor g;
    out.loss = softmax_cross_entropy(logits, labels, &g);

    // gradient containers aligned with param_slots()
    std::map<std::size_t, std::map<int, DenseTensor>> einconv_grads;
    std::map<std::size_t, DenseTensor> fc_grads;

    std::size_t layer_at = net.layers.size();
    std::size_t fc_at = net.fc_weights.size();
    for (int bi = static_cast<int>(net.spec.blocks.size()) - 1; bi >= 0; --bi) {
        const auto& b = net.spec.blocks[bi];
        const auto& state = trace.blocks[static_cast<std::size_t>(bi)];
        switch (b.kind) {
            case BlockKind::Softmax:
                break;
            case BlockKind::Relu: {
                DenseTensor masked = g.permuted([&] {
                    std::vector<std::string> o;
                    for (const auto& l : state.pre_activation.labels()) o.push_back(l.name);
                    return o;
                }());
                for (std::int64_t q = 0; q < masked.size(); ++q)
                    if (state.pre_activation.data()[q] <= 0) masked.data()[q] = 0;
                g = std::move(masked);
                break;
            }
            case BlockKind::FullyConnected: {
                --fc_at;
                const DenseTensor& w = net.fc_weights[fc_at];
                auto expr = ContractionExpr::from_operands({state.input, w}, {"n", "m"});
                auto gs = grad_contract(expr, {Operand(state.input), Operand(w)},
                                        g.permuted({"n", "m"}));
                fc_grads.emplace(fc_at, std::move(gs[1]));
                g = gs[0].permuted({"n", "u"});
                if (state.pre_flatten.rank() > 0) {
                    // un-flatten to the spatial labels of the block below
                    DenseTensor back(state.pre_flatten.labels());
                    std::copy(g.data().begin(), g.data().end(), back.data().begin());
                    g = std::move(back);
                } else if (state.renamed_from_m) {
                    DenseTensor back({{"n", g.dim_of("n")}, {"m", g.dim_of("u")}});
                    std::copy(g.data().begin(), g.data().end(), back.data().begin());
                    g = std::move(back);
                }
                break;
            }
            case BlockKind::GlobalAvgPool: {
                const DenseTensor& in = state.input;  // (n, h', w', c')
                const std::int64_t HW = in.dim_of("h'") * in.dim_of("w'");
                DenseTensor gp = g.permuted({"n", "u"});
                DenseTensor back(in.permuted({"n", "h'", "w'", "c'"}).labels());
                const std::int64_t N = in.dim_of("n"), H = in.dim_of("h'"),
                                   W = in.dim_of("w'"), C = in.dim_of("c'");
                for (std::int64_t n = 0; n < N; ++n)
                    for (std::int64_t h = 0; h < H; ++h)
                        for (std::int64_t w2 = 0; w2 < W; ++w2)
                            for (std::int64_t c = 0; c < C; ++c)
                                back.data()[((n * H + h) * W + w2) * C + c] =
                                    gp.data()[n * C + c] / static_cast<double>(HW);
                g = std::move(back);
                break;
            }
            case BlockKind::MaxPool: {
                DenseTensor ref = state.input.permuted({"n", "h'", "w'", "c'"});
                g = maxpool_backward(g, ref, state.argmax);
                break;
            }
            case BlockKind::Einconv: {
                --layer_at;
                auto lg = backward(net.layers[layer_at], state.layer, g);
                einconv_grads.emplace(layer_at, std::move(lg.by_vertex));
                g = std::move(lg.input);
                // rename input-side labels to the upstream block's output side
                std::vector<IndexLabel> ls;
                for (const auto& l : g.labels()) {
                    std::string name = l.name;
                    if (name == "h") name = "h'";
                    if (name == "w") name = "w'";
                    if (name == "c") name = "c'";
                    ls.push_back({name, l.dim});
                }
                g = DenseTensor(ls, std::vector<double>(g.data().begin(), g.data().end()));
                break;
            }
        }
    }

    for (std::size_t li = 0; li < net.layers.size(); ++li)
        for (const auto& [v, t] : net.layers[li].params) {
            auto it = einconv_grads[li].find(v);
            out.flat.push_back(it != einconv_grads[li].end() ? it->second
                                                             : DenseTensor(t.labels()));
        }
    for (std::size_t fi = 0; fi < net.fc_weights.size(); ++fi)
        out.flat.push_back(std::move(fc_grads.at(fi)));
    return out;
}

}  // namespace tnconv

namespace tnconv {

namespace {

template <typename T>
void write_pod(std::ofstream& f, T v) {
    f.write(reinterpret_cast<const char*>(&v), sizeof v);
}

template <typename T>
T read_pod(std::ifstream& f) {
    T v{};
    f.read(reinterpret_cast<char*>(&v), sizeof v);
    if (!f) throw NetworkError("truncated network checkpoint");
    return v;
}

void write_tensor(std::ofstream& f, const DenseTensor& t) {
    write_pod<std::uint32_t>(f, static_cast<std::uint32_t>(t.rank()));
    for (const auto& l : t.labels()) write_pod<std::uint64_t>(f, l.dim);
    f.write(reinterpret_cast<const char*>(t.data().data()),
            static_cast<std::streamsize>(t.size() * sizeof(double)));
}

void read_tensor_into(std::ifstream& f, DenseTensor& t) {
    const auto rank = read_pod<std::uint32_t>(f);
    if (rank != static_cast<std::uint32_t>(t.rank()))
        throw NetworkError("network checkpoint rank mismatch");
    for (const auto& l : t.labels())
        if (read_pod<std::uint64_t>(f) != static_cast<std::uint64_t>(l.dim))
            throw NetworkError("network checkpoint dim mismatch");
    f.read(reinterpret_cast<char*>(t.data().data()),
           static_cast<std::streamsize>(t.size() * sizeof(double)));
    if (!f) throw NetworkError("truncated network checkpoint");
}

}  // namespace

void save_network(const Network& net, const std::string& path) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw NetworkError("cannot write " + path);
    f << "TNNET1\n";
    f << net.input_shape[0] << " " << net.input_shape[1] << " " << net.input_shape[2] << "\n";
    const std::string spec = net.spec.to_text();
    f << std::count(spec.begin(), spec.end(), '\n') << "\n" << spec;
    f << net.layers.size() << "\n";
    for (const auto& layer : net.layers) {
        f << graph_to_json(layer.graph) << "\n";
        write_pod<std::uint32_t>(f, static_cast<std::uint32_t>(layer.params.size()));
        for (const auto& [v, t] : layer.params) {
            write_pod<std::uint32_t>(f, static_cast<std::uint32_t>(v));
            write_tensor(f, t);
        }
    }
    write_pod<std::uint32_t>(f, static_cast<std::uint32_t>(net.fc_weights.size()));
    for (const auto& w : net.fc_weights) write_tensor(f, w);
    if (!f) throw NetworkError("failed writing " + path);
}

Network load_network(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw NetworkError("cannot read " + path);
    std::string magic;
    std::getline(f, magic);
    if (magic != "TNNET1") throw NetworkError("bad network checkpoint magic");
    std::vector<std::int64_t> shape(3);
    f >> shape[0] >> shape[1] >> shape[2];
    int spec_lines = 0;
    f >> spec_lines;
    f.ignore();
    std::string spec_text, line;
    for (int q = 0; q < spec_lines; ++q) {
        std::getline(f, line);
        spec_text += line + "\n";
    }
    NetworkSpec spec = NetworkSpec::parse(spec_text);
    std::size_t n_layers = 0;
    f >> n_layers;
    f.ignore();

    // rebuild each einconv block around its saved concrete graph
    std::vector<EinconvGraph> graphs;
    std::vector<std::map<int, DenseTensor>> params;
    for (std::size_t q = 0; q < n_layers; ++q) {
        std::getline(f, line);
        graphs.push_back(graph_from_json(line));
        const auto count = read_pod<std::uint32_t>(f);
        std::map<int, DenseTensor> layer_params;
        auto proto = init_params(graphs.back(), 0);
        for (std::uint32_t p = 0; p < count; ++p) {
            const auto v = read_pod<std::uint32_t>(f);
            auto it = proto.params.find(static_cast<int>(v));
            if (it == proto.params.end())
                throw NetworkError("checkpoint names a non-parameter vertex");
            read_tensor_into(f, it->second);
            layer_params.emplace(static_cast<int>(v), it->second);
        }
        params.push_back(std::move(layer_params));
    }

    std::size_t layer_at = 0;
    for (auto& b : spec.blocks)
        if (b.kind == BlockKind::Einconv && layer_at < graphs.size())
            b.einconv.graph = graphs[layer_at++];

    Network net = build_network(spec, shape, 0);
    for (std::size_t q = 0; q < net.layers.size(); ++q) net.layers[q].params = params[q];
    const auto n_fc = read_pod<std::uint32_t>(f);
    if (n_fc != net.fc_weights.size()) throw NetworkError("checkpoint fc count mismatch");
    for (auto& w : net.fc_weights) read_tensor_into(f, w);
    return net;
}

}  // namespace tnconv
