#include "layer.hpp"

#include <algorithm>
#include <cstring>
#include <fstream>
#include <set>

#include "rng.hpp"

namespace tnconv {

namespace {

std::vector<IndexLabel> vertex_labels_with_dims(const EinconvGraph& g, int v) {
    std::vector<IndexLabel> out;
    for (const auto& name : g.vertices[v].labels) out.push_back({name, g.dim_of(name)});
    return out;
}

std::map<int, DummySpec> build_dummies(const EinconvGraph& g) {
    const auto chains = derive_axis_chains(g);
    const auto geoms = derive_link_geometry(g);
    std::map<int, DummySpec> out;
    for (std::size_t a = 0; a < chains.size(); ++a) {
        for (std::size_t m = 0; m < chains[a].links.size(); ++m) {
            const auto& link = chains[a].links[m];
            const auto& lg = geoms[a][m];
            DummySpec d;
            d.in_label = link.in_label;
            d.out_label = link.out_label;
            d.filter_label = link.filter_label;
            d.in_dim = lg.in_dim;
            d.out_dim = lg.out_dim;
            d.filter_dim = lg.filt_dim;
            d.stride = lg.stride;
            d.pad = lg.pad;
            out.emplace(link.vertex, d);
        }
    }
    return out;
}

}  // namespace

LayerInstance init_params(const EinconvGraph& graph, const ConvGeometry& geometry,
                          std::uint64_t seed) {
    EinconvGraph g = graph;
    g.geometry = geometry;
    return init_params(g, seed);
}

LayerInstance init_params(const EinconvGraph& graph, std::uint64_t seed) {
    const auto bad = validate(graph);
    if (!bad.empty()) throw GraphError("invalid graph: " + bad.front());
    LayerInstance layer;
    layer.graph = graph;
    layer.dummies = build_dummies(graph);

    Rng base(seed);
    for (std::size_t v = 0; v < graph.vertices.size(); ++v) {
        if (graph.vertices[v].kind != VertexKind::Parameter) continue;
        const auto labels = vertex_labels_with_dims(graph, static_cast<int>(v));
        std::int64_t fan_in = 1;
        for (const auto& l : labels)
            if (!set_contains(make_label_set(graph.outer), l.name)) fan_in *= l.dim;
        const double bound = std::sqrt(6.0 / static_cast<double>(fan_in));
        Rng rng(base.fork(v));
        DenseTensor t(labels);
        for (auto& x : t.data()) x = rng.uniform(-bound, bound);
        layer.params.emplace(static_cast<int>(v), std::move(t));
    }
    return layer;
}

namespace {

struct StagePlan {
    std::vector<int> vertices;      // stage vertex ids, stable order
    std::vector<std::string> keep;  // output labels of the stage contraction
};

// Output labels per stage: batch + whatever later stages or the layer
// output still reference.
std::vector<StagePlan> stage_plans(const EinconvGraph& g) {
    std::vector<StagePlan> plans;
    const std::size_t S = g.stages.size();
    for (std::size_t s = 0; s < S; ++s) {
        StagePlan sp;
        sp.vertices = g.stages[s];
        std::sort(sp.vertices.begin(), sp.vertices.end());
        std::set<std::string> future;
        future.insert("n");
        for (const auto& o : g.outer) future.insert(o);
        for (std::size_t t = s + 1; t < S; ++t)
            for (int v : g.stages[t])
                for (const auto& l : g.vertices[v].labels) future.insert(l);
        // available = intermediate (anything) union stage labels; the caller
        // intersects with what is actually present
        sp.keep.assign(future.begin(), future.end());
        plans.push_back(std::move(sp));
    }
    return plans;
}

DenseTensor relu(const DenseTensor& t) {
    DenseTensor out = t;
    for (auto& v : out.data()) v = v > 0.0 ? v : 0.0;
    return out;
}

}  // namespace

DenseTensor forward(const LayerInstance& layer, const DenseTensor& x, LayerTrace* trace) {
    const EinconvGraph& g = layer.graph;
    const auto& geo = layer.geometry();
    const int nd = geo.spatial_dims();

    static const char* bases[3] = {"h", "w", "d"};
    std::vector<std::string> want = {"n"};
    for (int a = 0; a < nd; ++a) want.push_back(bases[a]);
    want.push_back("c");
    LabelSet want_set = make_label_set(want);
    LabelSet got = x.label_set();
    const bool batched = set_contains(got, "n");
    if (!batched) want_set = set_difference(want_set, make_label_set({"n"}));
    if (got != want_set)
        throw GraphError("input tensor labels do not match the layer input");
    for (int a = 0; a < nd; ++a)
        if (x.dim_of(bases[a]) != geo.spatial_in[a])
            throw GraphError("input spatial size mismatch");
    if (x.dim_of("c") != geo.channels_in) throw GraphError("input channel mismatch");

    const auto plans = stage_plans(g);
    DenseTensor running = x;
    for (std::size_t s = 0; s < plans.size(); ++s) {
        std::vector<Operand> ops;
        ops.push_back(Operand(running));
        std::vector<int> vertex_of = {-1};
        for (int v : plans[s].vertices) {
            if (auto it = layer.dummies.find(v); it != layer.dummies.end())
                ops.push_back(Operand(it->second));
            else
                ops.push_back(Operand(layer.params.at(v)));
            vertex_of.push_back(v);
        }
        LabelSet avail;
        for (const auto& op : ops) avail = set_union(avail, op.label_set());
        std::vector<std::string> keep;
        for (const auto& l : plans[s].keep)
            if (set_contains(avail, l)) keep.push_back(l);

        auto expr = ContractionExpr::from_operands(ops, keep);
        auto plan = plan_chain(expr, 0);
        DenseTensor z = contract(expr, ops, plan);

        const bool apply_relu =
            s + 1 < plans.size() && s < g.activations.size() && g.activations[s];
        if (trace) {
            LayerTrace::Stage st;
            st.expr = expr;
            st.operands = ops;
            st.param_vertices = vertex_of;
            st.pre_activation = z;
            st.relu_applied = apply_relu;
            trace->stages.push_back(std::move(st));
        }
        running = apply_relu ? relu(z) : std::move(z);
    }

    std::vector<std::string> out_order;
    if (batched) out_order.push_back("n");
    static const char* primes[3] = {"h'", "w'", "d'"};
    for (int a = 0; a < nd; ++a) out_order.push_back(primes[a]);
    out_order.push_back("c'");
    return running.permuted(out_order);
}

LayerGrads backward(const LayerInstance& layer, const LayerTrace& trace,
                    const DenseTensor& upstream) {
    (void)layer;
    LayerGrads grads;
    DenseTensor g = upstream;
    for (int s = static_cast<int>(trace.stages.size()) - 1; s >= 0; --s) {
        const auto& st = trace.stages[s];
        // align with the stage output order, then mask through the ReLU
        std::vector<std::string> order = st.expr.output;
        g = g.permuted(order);
        if (st.relu_applied) {
            DenseTensor masked = g;
            const auto z = st.pre_activation.permuted(order);
            for (std::int64_t o = 0; o < masked.size(); ++o)
                if (z.data()[o] <= 0.0) masked.data()[o] = 0.0;
            g = std::move(masked);
        }
        auto op_grads = grad_contract(st.expr, st.operands, g);
        for (std::size_t o = 1; o < st.operands.size(); ++o) {
            const int v = st.param_vertices[o];
            if (st.operands[o].is_dummy()) continue;
            auto it = grads.by_vertex.find(v);
            if (it == grads.by_vertex.end()) {
                grads.by_vertex.emplace(v, std::move(op_grads[o]));
            } else {
                auto& acc = it->second;
                auto aligned = op_grads[o];
                for (std::int64_t q = 0; q < acc.size(); ++q)
                    acc.data()[q] += aligned.data()[q];
            }
        }
        g = std::move(op_grads[0]);
    }
    grads.input = std::move(g);
    return grads;
}

DenseTensor direct_conv_oracle(const DenseTensor& x, const DenseTensor& kernel,
                               const ConvGeometry& geom) {
    geom.check();
    const int nd = geom.spatial_dims();
    static const char* bases[3] = {"h", "w", "d"};
    static const char* primes[3] = {"h'", "w'", "d'"};
    static const char* filts[3] = {"i", "j", "k"};

    const bool batched = x.axis_of("n") >= 0;
    const std::int64_t N = batched ? x.dim_of("n") : 1;
    std::vector<std::string> xorder;
    if (batched) xorder.push_back("n");
    for (int a = 0; a < nd; ++a) xorder.push_back(bases[a]);
    xorder.push_back("c");
    DenseTensor xs = x.permuted(xorder);

    std::vector<std::string> korder;
    for (int a = 0; a < nd; ++a)
        if (kernel.axis_of(filts[a]) >= 0) korder.push_back(filts[a]);
    korder.push_back("c");
    korder.push_back("c'");
    DenseTensor ks = kernel.permuted(korder);

    const auto out_sp = geom.spatial_out();
    std::vector<IndexLabel> out_labels;
    if (batched) out_labels.push_back({"n", N});
    for (int a = 0; a < nd; ++a) out_labels.push_back({primes[a], out_sp[a]});
    out_labels.push_back({"c'", geom.channels_out});
    DenseTensor out(out_labels);

    const std::int64_t C = geom.channels_in, Cp = geom.channels_out;
    std::vector<std::int64_t> F(3, 1), S(3, 1), O(3, 1);
    for (int a = 0; a < nd; ++a) {
        F[a] = kernel.axis_of(filts[a]) >= 0 ? kernel.dim_of(filts[a]) : 1;
        S[a] = geom.spatial_in[a];
        O[a] = out_sp[a];
    }

    std::vector<std::int64_t> xi(xs.rank()), oi(out.rank()), ki(ks.rank());
    for (std::int64_t n = 0; n < N; ++n)
        for (std::int64_t oh = 0; oh < O[0]; ++oh)
            for (std::int64_t ow = 0; ow < O[1]; ++ow)
                for (std::int64_t od = 0; od < O[2]; ++od)
                    for (std::int64_t cp = 0; cp < Cp; ++cp) {
                        double acc = 0.0;
                        for (std::int64_t fi = 0; fi < F[0]; ++fi)
                            for (std::int64_t fj = 0; fj < F[1]; ++fj)
                                for (std::int64_t fk = 0; fk < F[2]; ++fk) {
                                    const std::int64_t hh =
                                        oh * geom.stride + fi - geom.padding;
                                    const std::int64_t ww =
                                        ow * geom.stride + fj - geom.padding;
                                    const std::int64_t dd =
                                        od * geom.stride + fk - geom.padding;
                                    if (hh < 0 || hh >= S[0] || ww < 0 || ww >= S[1])
                                        continue;
                                    if (nd == 3 && (dd < 0 || dd >= S[2])) continue;
                                    for (std::int64_t c = 0; c < C; ++c) {
                                        int q = 0;
                                        if (batched) xi[q++] = n;
                                        xi[q++] = hh;
                                        xi[q++] = ww;
                                        if (nd == 3) xi[q++] = dd;
                                        xi[q++] = c;
                                        q = 0;
                                        std::vector<std::int64_t> kk;
                                        for (int a = 0; a < nd; ++a)
                                            if (kernel.axis_of(filts[a]) >= 0)
                                                kk.push_back(a == 0 ? fi
                                                             : a == 1 ? fj
                                                                      : fk);
                                        kk.push_back(c);
                                        kk.push_back(cp);
                                        acc += xs.at(xi) * ks.at(kk);
                                    }
                                }
                        int q = 0;
                        if (batched) oi[q++] = n;
                        oi[q++] = oh;
                        oi[q++] = ow;
                        if (nd == 3) oi[q++] = od;
                        oi[q++] = cp;
                        out.at(oi) = acc;
                    }
    return out;
}

LayerComplexity complexity(const LayerInstance& layer) {
    LayerComplexity out;
    out.param_count = layer.graph.parameter_count();

    const EinconvGraph& g = layer.graph;
    const auto& geo = layer.geometry();
    const int nd = geo.spatial_dims();
    static const char* bases[3] = {"h", "w", "d"};

    // symbolic batch-1 forward: only label sets matter
    LabelSet running = make_label_set([&] {
        std::vector<std::string> ls = {"n"};
        for (int a = 0; a < nd; ++a) ls.push_back(bases[a]);
        ls.push_back("c");
        return ls;
    }());

    const auto plans = stage_plans(g);
    for (const auto& sp : plans) {
        ContractionExpr expr;
        expr.operands.push_back(running);
        expr.is_dummy.push_back(false);
        expr.dims["n"] = 1;
        for (const auto& l : g.inner) expr.dims[l.name] = l.dim;
        for (const auto& o : g.outer) expr.dims[o] = g.dim_of(o);
        for (int v : sp.vertices) {
            LabelSet ls = g.vertices[v].labels;
            expr.operands.push_back(ls);
            expr.is_dummy.push_back(layer.dummies.count(v) > 0);
        }
        LabelSet avail;
        for (const auto& op : expr.operands) avail = set_union(avail, op);
        std::vector<std::string> keep;
        for (const auto& l : sp.keep)
            if (set_contains(avail, l)) keep.push_back(l);
        expr.output = keep;
        auto plan = plan_chain(expr, 0);
        out.flops += plan.est_flops;
        running = make_label_set(keep);
    }
    return out;
}

namespace {

template <typename T>
void write_pod(std::ofstream& f, T v) {
    f.write(reinterpret_cast<const char*>(&v), sizeof v);
}

template <typename T>
T read_pod(std::ifstream& f) {
    T v{};
    f.read(reinterpret_cast<char*>(&v), sizeof v);
    if (!f) throw GraphError("truncated checkpoint");
    return v;
}

}  // namespace

void save_layer(const LayerInstance& layer, const std::string& path) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw GraphError("cannot write " + path);
    f << "TNCKPT1\n" << graph_to_json(layer.graph) << "\n";
    for (const auto& [v, t] : layer.params) {
        write_pod<std::uint32_t>(f, static_cast<std::uint32_t>(v));
        write_pod<std::uint32_t>(f, static_cast<std::uint32_t>(t.rank()));
        for (const auto& l : t.labels()) write_pod<std::uint64_t>(f, l.dim);
        f.write(reinterpret_cast<const char*>(t.data().data()),
                static_cast<std::streamsize>(t.size() * sizeof(double)));
    }
    if (!f) throw GraphError("failed writing " + path);
}

LayerInstance load_layer(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw GraphError("cannot read " + path);
    std::string magic, json_line;
    std::getline(f, magic);
    if (magic != "TNCKPT1") throw GraphError("bad checkpoint magic");
    std::getline(f, json_line);
    EinconvGraph g = graph_from_json(json_line);
    LayerInstance layer = init_params(g, 0);
    std::size_t loaded = 0;
    while (loaded < layer.params.size()) {
        const auto v = read_pod<std::uint32_t>(f);
        const auto rank = read_pod<std::uint32_t>(f);
        auto it = layer.params.find(static_cast<int>(v));
        if (it == layer.params.end()) throw GraphError("checkpoint names a non-parameter vertex");
        DenseTensor& t = it->second;
        if (rank != static_cast<std::uint32_t>(t.rank()))
            throw GraphError("checkpoint rank mismatch");
        for (const auto& l : t.labels())
            if (read_pod<std::uint64_t>(f) != static_cast<std::uint64_t>(l.dim))
                throw GraphError("checkpoint dim mismatch");
        f.read(reinterpret_cast<char*>(t.data().data()),
               static_cast<std::streamsize>(t.size() * sizeof(double)));
        if (!f) throw GraphError("truncated checkpoint");
        ++loaded;
    }
    return layer;
}

}  // namespace tnconv
