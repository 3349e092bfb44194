#include "graph.hpp"

#include <algorithm>
#include <array>
#include <cstdio>
#include <functional>
#include <numeric>
#include <set>
#include <sstream>

#include <json.hpp>

namespace tnconv {

using ordered_json = nlohmann::ordered_json;

const char* vertex_kind_name(VertexKind k) {
    switch (k) {
        case VertexKind::Parameter: return "parameter";
        case VertexKind::Input: return "input";
        case VertexKind::DummyVertical: return "dummy-vertical";
        case VertexKind::DummyHorizontal: return "dummy-horizontal";
        case VertexKind::DummyDepth: return "dummy-depth";
    }
    return "?";
}

VertexKind vertex_kind_from_name(const std::string& s) {
    if (s == "parameter") return VertexKind::Parameter;
    if (s == "input") return VertexKind::Input;
    if (s == "dummy-vertical") return VertexKind::DummyVertical;
    if (s == "dummy-horizontal") return VertexKind::DummyHorizontal;
    if (s == "dummy-depth") return VertexKind::DummyDepth;
    throw GraphError("unknown vertex kind: " + s);
}

bool is_dummy_kind(VertexKind k) {
    return k == VertexKind::DummyVertical || k == VertexKind::DummyHorizontal ||
           k == VertexKind::DummyDepth;
}

std::vector<std::int64_t> ConvGeometry::spatial_out() const {
    std::vector<std::int64_t> out;
    for (std::size_t a = 0; a < spatial_in.size(); ++a) {
        const std::int64_t span = spatial_in[a] + 2 * padding - filter[a];
        if (span < 0 || span % stride != 0)
            throw GraphError("spatial output is not a positive integer on axis " +
                             std::to_string(a));
        out.push_back(span / stride + 1);
    }
    return out;
}

void ConvGeometry::check() const {
    if (spatial_in.size() != filter.size() || spatial_in.empty())
        throw GraphError("geometry: spatial_in and filter must have equal, nonzero length");
    if (spatial_in.size() != 2 && spatial_in.size() != 3)
        throw GraphError("geometry: only 2D and 3D convolutions are supported");
    for (auto f : filter)
        if (f < 1 || f % 2 == 0) throw GraphError("geometry: filter sizes must be odd");
    for (auto s : spatial_in)
        if (s < 1) throw GraphError("geometry: spatial sizes must be positive");
    if (stride < 1) throw GraphError("geometry: stride must be positive");
    if (padding < 0) throw GraphError("geometry: padding must be nonnegative");
    if (channels_in < 1 || channels_out < 1)
        throw GraphError("geometry: channel counts must be positive");
    (void)spatial_out();
}

std::int64_t EinconvGraph::dim_of(const std::string& label) const {
    for (const auto& l : inner)
        if (l.name == label) return l.dim;
    if (geometry.has_value()) {
        const auto& g = *geometry;
        if (label == "c'") return g.channels_out;
        static const std::array<const char*, 3> primes = {"h'", "w'", "d'"};
        const auto out = g.spatial_out();
        for (std::size_t a = 0; a < out.size(); ++a)
            if (label == primes[a]) return out[a];
    }
    throw GraphError("unknown label: " + label);
}

bool EinconvGraph::has_label(const std::string& label) const {
    for (const auto& l : inner)
        if (l.name == label) return true;
    return set_contains(make_label_set(outer), label);
}

std::vector<std::string> EinconvGraph::rank_labels() const {
    std::vector<std::string> out;
    for (const auto& l : inner)
        if (is_rank_label(l.name)) out.push_back(l.name);
    std::sort(out.begin(), out.end(), label_less);
    return out;
}

int EinconvGraph::input_vertex() const {
    for (std::size_t v = 0; v < vertices.size(); ++v)
        if (vertices[v].kind == VertexKind::Input) return static_cast<int>(v);
    return -1;
}

int EinconvGraph::spatial_dims() const {
    const int iv = input_vertex();
    if (iv < 0) throw GraphError("graph has no input vertex");
    return static_cast<int>(vertices[iv].labels.size()) - 1;  // minus channel label
}

std::int64_t EinconvGraph::parameter_count() const {
    std::int64_t total = 0;
    for (const auto& v : vertices) {
        if (v.kind != VertexKind::Parameter) continue;
        std::int64_t n = 1;
        for (const auto& l : v.labels) n *= dim_of(l);
        total += n;
    }
    return total;
}

std::map<std::string, std::vector<int>> derive_hyperedges(const EinconvGraph& g) {
    std::map<std::string, std::vector<int>> edges;
    for (const auto& l : g.inner) edges[l.name];
    for (const auto& o : g.outer) edges[o];
    for (std::size_t v = 0; v < g.vertices.size(); ++v)
        for (const auto& l : g.vertices[v].labels) edges[l].push_back(static_cast<int>(v));
    for (auto& [name, vs] : edges) {
        std::sort(vs.begin(), vs.end());
        vs.erase(std::unique(vs.begin(), vs.end()), vs.end());
    }
    return edges;
}

std::int64_t effective_filter(const EinconvGraph& g, const AxisChain& chain) {
    std::int64_t eff = 1;
    for (const auto& link : chain.links)
        if (!link.filter_label.empty()) eff += g.dim_of(link.filter_label) - 1;
    return eff;
}

namespace {

}  // namespace

std::vector<AxisChain> derive_axis_chains(const EinconvGraph& g) {
    const int iv = g.input_vertex();
    if (iv < 0) throw GraphError("graph has no input vertex");
    const int nd = g.spatial_dims();

    static const std::array<const char*, 3> bases = {"h", "w", "d"};
    static const std::array<const char*, 3> primes = {"h'", "w'", "d'"};
    static const std::array<VertexKind, 3> kinds = {
        VertexKind::DummyVertical, VertexKind::DummyHorizontal, VertexKind::DummyDepth};

    std::vector<AxisChain> chains;
    for (int a = 0; a < nd; ++a) {
        AxisChain chain;
        chain.axis = bases[a];
        std::string cur = bases[a];
        std::set<int> used;
        while (cur != primes[a]) {
            int found = -1;
            for (std::size_t v = 0; v < g.vertices.size(); ++v) {
                if (g.vertices[v].kind != kinds[a] || used.count(static_cast<int>(v)))
                    continue;
                if (set_contains(g.vertices[v].labels, cur)) {
                    found = static_cast<int>(v);
                    break;
                }
            }
            if (found < 0)
                throw GraphError("broken dummy chain on axis " + chain.axis +
                                 " at label " + cur);
            used.insert(found);
            const auto& labels = g.vertices[found].labels;
            ChainLink link;
            link.vertex = found;
            link.in_label = cur;
            for (const auto& l : labels) {
                if (l == cur) continue;
                if (is_filter_label(l)) {
                    if (!link.filter_label.empty())
                        throw GraphError("dummy vertex " + std::to_string(found) +
                                         " carries two filter labels");
                    link.filter_label = l;
                } else {
                    if (!link.out_label.empty())
                        throw GraphError("dummy vertex " + std::to_string(found) +
                                         " carries two chain labels besides " + cur);
                    link.out_label = l;
                }
            }
            if (link.out_label.empty())
                throw GraphError("dummy vertex " + std::to_string(found) +
                                 " has no outgoing spatial label");
            const std::size_t expect = link.filter_label.empty() ? 2 : 3;
            if (labels.size() != expect)
                throw GraphError("dummy vertex " + std::to_string(found) +
                                 " has unexpected labels");
            chain.links.push_back(link);
            cur = link.out_label;
            if (chain.links.size() > g.vertices.size())
                throw GraphError("dummy chain cycle on axis " + chain.axis);
        }
        // all dummies of this axis must be consumed by the chain
        for (std::size_t v = 0; v < g.vertices.size(); ++v)
            if (g.vertices[v].kind == kinds[a] && !used.count(static_cast<int>(v)))
                throw GraphError("dummy vertex " + std::to_string(v) +
                                 " is disconnected from axis " + chain.axis);
        chains.push_back(std::move(chain));
    }
    return chains;
}

std::vector<std::vector<LinkGeometry>> derive_link_geometry(const EinconvGraph& g) {
    if (!g.geometry.has_value()) throw GraphError("graph has no geometry");
    const auto& geo = *g.geometry;
    const auto chains = derive_axis_chains(g);
    std::vector<std::vector<LinkGeometry>> out;
    for (std::size_t a = 0; a < chains.size(); ++a) {
        std::vector<LinkGeometry> links;
        std::int64_t remaining = geo.padding;
        std::int64_t cur = geo.spatial_in[a];
        for (std::size_t m = 0; m < chains[a].links.size(); ++m) {
            const auto& link = chains[a].links[m];
            LinkGeometry lg;
            lg.in_dim = cur;
            lg.filt_dim = link.filter_label.empty() ? 1 : g.dim_of(link.filter_label);
            const bool last = m + 1 == chains[a].links.size();
            if (last) {
                lg.pad = remaining;
                lg.stride = geo.stride;
            } else {
                lg.pad = std::min<std::int64_t>((lg.filt_dim - 1) / 2, remaining);
                lg.stride = 1;
            }
            remaining -= lg.pad;
            const std::int64_t span = lg.in_dim + 2 * lg.pad - lg.filt_dim;
            if (span < 0 || span % lg.stride != 0)
                throw GraphError("chain link on axis " + chains[a].axis +
                                 " has no integer output size");
            lg.out_dim = span / lg.stride + 1;
            if (lg.out_dim != g.dim_of(link.out_label))
                throw GraphError("stored dim of " + link.out_label +
                                 " disagrees with the link geometry");
            cur = lg.out_dim;
            links.push_back(lg);
        }
        out.push_back(std::move(links));
    }
    return out;
}

std::vector<std::string> validate(const EinconvGraph& g) {
    std::vector<std::string> bad;
    auto complain = [&bad](const std::string& msg) { bad.push_back(msg); };

    // label tables
    std::set<std::string> inner_names, outer_names;
    for (const auto& l : g.inner) {
        if (l.dim < 1) complain("inner label " + l.name + " has dim < 1");
        if (!inner_names.insert(l.name).second)
            complain("duplicate inner label " + l.name);
    }
    for (const auto& o : g.outer) {
        if (!outer_names.insert(o).second) complain("duplicate outer label " + o);
        if (inner_names.count(o)) complain("label " + o + " is both inner and outer");
    }

    // vertices: declared labels, no self loops
    for (std::size_t v = 0; v < g.vertices.size(); ++v) {
        std::set<std::string> seen;
        for (const auto& l : g.vertices[v].labels) {
            if (!inner_names.count(l) && !outer_names.count(l))
                complain("vertex " + std::to_string(v) + " uses undeclared label " + l);
            if (!seen.insert(l).second)
                complain("self-loop: vertex " + std::to_string(v) + " repeats label " + l);
        }
    }

    // input vertex
    int n_input = 0;
    for (const auto& v : g.vertices)
        if (v.kind == VertexKind::Input) ++n_input;
    if (n_input != 1) {
        complain("graph must have exactly one input vertex");
        return bad;
    }
    const auto& input = g.vertices[g.input_vertex()];
    const int nd = static_cast<int>(input.labels.size()) - 1;
    if (nd == 2) {
        if (input.labels != make_label_set({"h", "w", "c"}))
            complain("2D input vertex must carry exactly {h, w, c}");
    } else if (nd == 3) {
        if (input.labels != make_label_set({"h", "w", "d", "c"}))
            complain("3D input vertex must carry exactly {h, w, d, c}");
    } else {
        complain("input vertex must carry 2 or 3 spatial labels plus c");
        return bad;
    }

    // every label used somewhere
    const auto edges = derive_hyperedges(g);
    for (const auto& [name, vs] : edges)
        if (vs.empty()) complain("label " + name + " appears in no vertex");

    // dummy chains and filter composition
    try {
        const auto chains = derive_axis_chains(g);
        std::vector<std::string> filter_labels;
        for (const auto& chain : chains)
            for (const auto& link : chain.links)
                if (!link.filter_label.empty()) filter_labels.push_back(link.filter_label);
        for (const auto& f : filter_labels) {
            std::int64_t d = 0;
            try {
                d = g.dim_of(f);
            } catch (const GraphError&) {
                continue;  // undeclared, already reported
            }
            if (d % 2 == 0) complain("filter label " + f + " has even dim");
            if (d == 1) complain("degenerate filter label " + f + " (dim 1)");
            int uses = 0;
            for (const auto& v : g.vertices)
                if (v.kind == VertexKind::Parameter && set_contains(v.labels, f)) ++uses;
            if (uses != 1)
                complain("filter label " + f + " must appear on exactly one parameter vertex, found " +
                         std::to_string(uses));
        }
        if (g.geometry.has_value()) {
            const auto& geo = *g.geometry;
            try {
                geo.check();
            } catch (const GraphError& e) {
                complain(e.what());
            }
            if (geo.spatial_dims() != nd)
                complain("geometry spatial dimensionality does not match the graph");
            for (std::size_t a = 0; a < chains.size() && a < geo.filter.size(); ++a) {
                const std::int64_t eff = effective_filter(g, chains[a]);
                if (eff != geo.filter[a])
                    complain("effective filter on axis " + chains[a].axis + " is " +
                             std::to_string(eff) + ", geometry says " +
                             std::to_string(geo.filter[a]));
            }
            static const std::array<const char*, 3> bases = {"h", "w", "d"};
            for (int a = 0; a < nd; ++a)
                if (inner_names.count(bases[a]) && g.dim_of(bases[a]) != geo.spatial_in[a])
                    complain(std::string("label ") + bases[a] + " dim does not match geometry");
            if (inner_names.count("c") && g.dim_of("c") != geo.channels_in)
                complain("label c dim does not match geometry channels_in");
        }
    } catch (const GraphError& e) {
        complain(e.what());
    }

    // parameter vertices never carry spatial labels
    for (std::size_t v = 0; v < g.vertices.size(); ++v) {
        if (g.vertices[v].kind != VertexKind::Parameter) continue;
        for (const auto& l : g.vertices[v].labels)
            if (is_spatial_label(l) || is_output_spatial_label(l))
                complain("parameter vertex " + std::to_string(v) + " carries spatial label " + l);
    }

    // stage partition covers the non-input vertices exactly once
    if (!g.stages.empty()) {
        std::set<int> staged;
        for (const auto& stage : g.stages) {
            if (stage.empty()) complain("empty stage");
            for (int v : stage) {
                if (v < 0 || v >= static_cast<int>(g.vertices.size()))
                    complain("stage references vertex " + std::to_string(v));
                else if (g.vertices[v].kind == VertexKind::Input)
                    complain("stage contains the input vertex");
                else if (!staged.insert(v).second)
                    complain("vertex " + std::to_string(v) + " appears in two stages");
            }
        }
        for (std::size_t v = 0; v < g.vertices.size(); ++v)
            if (g.vertices[v].kind != VertexKind::Input && !staged.count(static_cast<int>(v)))
                complain("vertex " + std::to_string(v) + " is missing from the stages");
        if (g.activations.size() + 1 != g.stages.size())
            complain("activation flag count must be #stages - 1");
    } else if (!g.activations.empty()) {
        complain("activation flags without stages");
    }

    return bad;
}

namespace {

std::string render_graph(const EinconvGraph& g,
                         const std::map<std::string, std::string>& rename) {
    auto mapped = [&rename](const std::string& l) {
        auto it = rename.find(l);
        return it == rename.end() ? l : it->second;
    };

    std::ostringstream out;
    std::vector<std::string> outer = g.outer;
    std::sort(outer.begin(), outer.end(), label_less);
    out << "O[";
    for (const auto& o : outer) out << o << ",";
    out << "]I[";
    std::vector<IndexLabel> inner;
    for (const auto& l : g.inner) inner.push_back({mapped(l.name), l.dim});
    std::sort(inner.begin(), inner.end(),
              [](const IndexLabel& a, const IndexLabel& b) { return label_less(a.name, b.name); });
    for (const auto& l : inner) out << l.name << "=" << l.dim << ",";
    out << "]";

    std::vector<std::pair<std::string, int>> rendered;  // (text, old index)
    for (std::size_t v = 0; v < g.vertices.size(); ++v) {
        std::vector<std::string> labels;
        for (const auto& l : g.vertices[v].labels) labels.push_back(mapped(l));
        std::sort(labels.begin(), labels.end(), label_less);
        std::string t = std::string(vertex_kind_name(g.vertices[v].kind)) + "{";
        for (const auto& l : labels) t += l + ",";
        t += "}";
        rendered.emplace_back(std::move(t), static_cast<int>(v));
    }
    std::stable_sort(rendered.begin(), rendered.end());
    std::vector<int> new_index(g.vertices.size());
    out << "V[";
    for (std::size_t n = 0; n < rendered.size(); ++n) {
        new_index[rendered[n].second] = static_cast<int>(n);
        out << rendered[n].first;
    }
    out << "]S[";
    for (const auto& stage : g.stages) {
        std::vector<int> s;
        for (int v : stage) s.push_back(new_index[v]);
        std::sort(s.begin(), s.end());
        out << "(";
        for (int v : s) out << v << ",";
        out << ")";
    }
    out << "]A[";
    for (bool f : g.activations) out << (f ? '1' : '0');
    out << "]";
    if (g.geometry.has_value()) {
        const auto& geo = *g.geometry;
        out << "G[";
        for (auto x : geo.spatial_in) out << x << ",";
        out << "|";
        for (auto x : geo.filter) out << x << ",";
        out << "|" << geo.padding << "|" << geo.stride << "|" << geo.channels_in << "|"
            << geo.channels_out << "]";
    }
    return out.str();
}

}  // namespace

std::string canonical_form(const EinconvGraph& g) {
    const auto ranks = g.rank_labels();
    if (ranks.empty()) return render_graph(g, {});

    // Group rank labels by a renaming-invariant signature so only permutations
    // within a group need to be tried.
    auto signature = [&g](const std::string& r) {
        std::vector<std::string> parts;
        for (const auto& v : g.vertices) {
            if (!set_contains(v.labels, r)) continue;
            std::string p = std::string(vertex_kind_name(v.kind)) + ":";
            int n_ranks = 0;
            std::vector<std::string> fixed;
            for (const auto& l : v.labels) {
                if (is_rank_label(l))
                    ++n_ranks;
                else
                    fixed.push_back(l);
            }
            std::sort(fixed.begin(), fixed.end(), label_less);
            for (const auto& l : fixed) p += l + ",";
            p += "#" + std::to_string(n_ranks);
            parts.push_back(p);
        }
        std::sort(parts.begin(), parts.end());
        std::string sig = std::to_string(g.dim_of(r)) + "|";
        for (const auto& p : parts) sig += p + ";";
        return sig;
    };

    std::vector<std::pair<std::string, std::string>> keyed;  // (signature, label)
    for (const auto& r : ranks) keyed.emplace_back(signature(r), r);
    std::stable_sort(keyed.begin(), keyed.end());

    std::vector<std::vector<std::string>> groups;
    for (const auto& [sig, r] : keyed) {
        if (groups.empty() || signature(groups.back().front()) != sig)
            groups.push_back({r});
        else
            groups.back().push_back(r);
    }

    std::uint64_t total_perms = 1;
    for (const auto& grp : groups) {
        std::uint64_t f = 1;
        for (std::size_t n = 2; n <= grp.size(); ++n) f *= n;
        total_perms *= f;
        if (total_perms > 100000) break;
    }

    std::string best;
    if (total_perms > 100000) {
        // degenerate symmetric case; fall back to the signature order
        std::map<std::string, std::string> rename;
        int next = 1;
        for (const auto& grp : groups)
            for (const auto& r : grp) rename[r] = "r" + std::to_string(next++);
        best = render_graph(g, rename);
    } else {
        std::vector<std::vector<std::string>> perms = {{}};
        for (auto grp : groups) {
            std::sort(grp.begin(), grp.end());
            std::vector<std::vector<std::string>> next;
            do {
                for (const auto& prefix : perms) {
                    auto ext = prefix;
                    ext.insert(ext.end(), grp.begin(), grp.end());
                    next.push_back(std::move(ext));
                }
            } while (std::next_permutation(grp.begin(), grp.end()));
            perms = std::move(next);
        }
        for (const auto& order : perms) {
            std::map<std::string, std::string> rename;
            for (std::size_t n = 0; n < order.size(); ++n)
                rename[order[n]] = "r" + std::to_string(n + 1);
            std::string s = render_graph(g, rename);
            if (best.empty() || s < best) best = std::move(s);
        }
    }
    return best;
}

std::uint64_t canonical_hash(const EinconvGraph& g) {
    const std::string s = canonical_form(g);
    std::uint64_t h = 1469598103934665603ull;
    for (unsigned char ch : s) {
        h ^= ch;
        h *= 1099511628211ull;
    }
    return h;
}

std::string canonical_hash_hex(const EinconvGraph& g) {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx",
                  static_cast<unsigned long long>(canonical_hash(g)));
    return buf;
}

std::string graph_to_json(const EinconvGraph& g, bool pretty) {
    ordered_json j;
    j["outer"] = g.outer;
    j["inner"] = ordered_json::array();
    for (const auto& l : g.inner) j["inner"].push_back({{"name", l.name}, {"dim", l.dim}});
    j["vertices"] = ordered_json::array();
    for (const auto& v : g.vertices)
        j["vertices"].push_back(
            {{"labels", v.labels}, {"kind", vertex_kind_name(v.kind)}});
    j["stages"] = g.stages;
    j["activations"] = g.activations;
    if (g.geometry.has_value()) {
        const auto& geo = *g.geometry;
        j["geometry"] = {{"spatial_in", geo.spatial_in}, {"filter", geo.filter},
                         {"padding", geo.padding},       {"stride", geo.stride},
                         {"channels_in", geo.channels_in},
                         {"channels_out", geo.channels_out}};
    } else {
        j["geometry"] = nullptr;
    }
    return pretty ? j.dump(2) : j.dump();
}

EinconvGraph graph_from_json(const std::string& text) {
    ordered_json j;
    try {
        j = ordered_json::parse(text);
    } catch (const std::exception& e) {
        throw GraphError(std::string("bad graph JSON: ") + e.what());
    }
    EinconvGraph g;
    try {
        for (const auto& o : j.at("outer")) g.outer.push_back(o.get<std::string>());
        for (const auto& l : j.at("inner"))
            g.inner.push_back({l.at("name").get<std::string>(), l.at("dim").get<std::int64_t>()});
        for (const auto& v : j.at("vertices")) {
            GraphVertex gv;
            std::vector<std::string> labels;
            for (const auto& l : v.at("labels")) labels.push_back(l.get<std::string>());
            std::sort(labels.begin(), labels.end(), label_less);  // keep duplicates
            gv.labels = std::move(labels);
            gv.kind = vertex_kind_from_name(v.at("kind").get<std::string>());
            g.vertices.push_back(std::move(gv));
        }
        if (j.contains("stages") && !j["stages"].is_null())
            for (const auto& s : j["stages"]) g.stages.push_back(s.get<std::vector<int>>());
        if (j.contains("activations") && !j["activations"].is_null())
            for (const auto& a : j["activations"]) g.activations.push_back(a.get<bool>());
        if (j.contains("geometry") && !j["geometry"].is_null()) {
            const auto& q = j["geometry"];
            ConvGeometry geo;
            geo.spatial_in = q.at("spatial_in").get<std::vector<std::int64_t>>();
            geo.filter = q.at("filter").get<std::vector<std::int64_t>>();
            geo.padding = q.at("padding").get<std::int64_t>();
            geo.stride = q.at("stride").get<std::int64_t>();
            geo.channels_in = q.at("channels_in").get<std::int64_t>();
            geo.channels_out = q.at("channels_out").get<std::int64_t>();
            g.geometry = geo;
        }
    } catch (const ordered_json::exception& e) {
        throw GraphError(std::string("bad graph JSON: ") + e.what());
    }
    if (g.stages.empty() && !g.vertices.empty()) {
        std::vector<int> all;
        for (std::size_t v = 0; v < g.vertices.size(); ++v)
            if (g.vertices[v].kind != VertexKind::Input) all.push_back(static_cast<int>(v));
        if (!all.empty()) g.stages.push_back(all);
    }
    return g;
}

const char* named_kind_name(NamedKind k) {
    switch (k) {
        case NamedKind::Standard: return "standard";
        case NamedKind::DepthwiseSeparable: return "depthwise_separable";
        case NamedKind::Bottleneck: return "bottleneck";
        case NamedKind::InvertedBottleneck: return "inverted_bottleneck";
        case NamedKind::Factoring: return "factoring";
        case NamedKind::Flattened: return "flattened";
        case NamedKind::Cp: return "cp";
        case NamedKind::LowRank: return "low_rank";
        case NamedKind::Standard3d: return "standard3d";
        case NamedKind::DepthwiseSeparable3d: return "depthwise_separable3d";
        case NamedKind::TwoPlusOneD: return "two_plus_one_d";
    }
    return "?";
}

NamedKind named_kind_from_name(const std::string& s) {
    for (NamedKind k : all_named_kinds())
        if (s == named_kind_name(k)) return k;
    throw GraphError("unknown layer kind: " + s);
}

std::vector<NamedKind> all_named_kinds() {
    return {NamedKind::Standard,           NamedKind::DepthwiseSeparable,
            NamedKind::Bottleneck,         NamedKind::InvertedBottleneck,
            NamedKind::Factoring,          NamedKind::Flattened,
            NamedKind::Cp,                 NamedKind::LowRank,
            NamedKind::Standard3d,         NamedKind::DepthwiseSeparable3d,
            NamedKind::TwoPlusOneD};
}

std::vector<NamedKind> named_kinds_2d_3x3() {
    return {NamedKind::Standard,   NamedKind::DepthwiseSeparable,
            NamedKind::Bottleneck, NamedKind::InvertedBottleneck,
            NamedKind::Flattened,  NamedKind::Cp,
            NamedKind::LowRank};
}

std::vector<NamedKind> named_kinds_3d() {
    return {NamedKind::Standard3d, NamedKind::DepthwiseSeparable3d, NamedKind::TwoPlusOneD};
}

std::vector<std::string> named_kind_rank_args(NamedKind k) {
    switch (k) {
        case NamedKind::Bottleneck: return {"a", "b"};
        case NamedKind::InvertedBottleneck: return {"m"};
        case NamedKind::Factoring: return {"m"};
        case NamedKind::Cp: return {"gamma"};
        case NamedKind::LowRank: return {"r"};
        case NamedKind::TwoPlusOneD: return {"m"};
        default: return {};
    }
}

namespace {

// Padding distribution for factored spatial chains: size-preserving padding
// (I_m - 1)/2 on every link but the last, remainder (and the stride) on the
// last link.
struct LinkGeom {
    std::int64_t in_dim, out_dim, filt_dim, stride, pad;
};

std::vector<LinkGeom> axis_link_geometry(std::int64_t spatial_in, std::int64_t padding,
                                         std::int64_t stride,
                                         const std::vector<std::int64_t>& factors) {
    std::vector<LinkGeom> out;
    std::int64_t remaining = padding;
    std::int64_t cur = spatial_in;
    for (std::size_t m = 0; m < factors.size(); ++m) {
        LinkGeom lg;
        lg.in_dim = cur;
        lg.filt_dim = factors[m];
        const bool last = m + 1 == factors.size();
        if (last) {
            lg.pad = remaining;
            lg.stride = stride;
        } else {
            lg.pad = std::min<std::int64_t>((factors[m] - 1) / 2, remaining);
            lg.stride = 1;
        }
        remaining -= lg.pad;
        const std::int64_t span = lg.in_dim + 2 * lg.pad - lg.filt_dim;
        if (span < 0 || span % lg.stride != 0)
            throw GraphError("factored geometry does not produce integer spatial sizes");
        lg.out_dim = span / lg.stride + 1;
        cur = lg.out_dim;
        out.push_back(lg);
    }
    return out;
}

struct BaseBuild {
    EinconvGraph g;
    // filter label of factor m on axis a, "" when the factor is size 1
    std::vector<std::vector<std::string>> filter_labels;
};

// Builds input vertex, dummy chains and the label tables for the given
// per-axis factor lists.
BaseBuild build_base(const ConvGeometry& geom,
                     const std::vector<std::vector<std::int64_t>>& factors) {
    geom.check();
    const int nd = geom.spatial_dims();
    static const std::array<const char*, 3> bases = {"h", "w", "d"};
    static const std::array<const char*, 3> primes = {"h'", "w'", "d'"};
    static const std::array<const char*, 3> filts = {"i", "j", "k"};
    static const std::array<VertexKind, 3> kinds = {
        VertexKind::DummyVertical, VertexKind::DummyHorizontal, VertexKind::DummyDepth};

    BaseBuild b;
    EinconvGraph& g = b.g;
    g.geometry = geom;
    for (int a = 0; a < nd; ++a) g.outer.push_back(primes[a]);
    g.outer.push_back("c'");

    for (int a = 0; a < nd; ++a) {
        std::int64_t eff = 1;
        for (auto f : factors[a]) eff += f - 1;
        if (eff != geom.filter[a])
            throw GraphError("factors do not compose to the requested filter size");
    }

    // input vertex
    GraphVertex input;
    std::vector<std::string> in_labels;
    for (int a = 0; a < nd; ++a) in_labels.push_back(bases[a]);
    in_labels.push_back("c");
    input.labels = make_label_set(in_labels);
    input.kind = VertexKind::Input;
    g.vertices.push_back(input);

    for (int a = 0; a < nd; ++a) {
        g.inner.push_back({bases[a], geom.spatial_in[a]});
        const auto links =
            axis_link_geometry(geom.spatial_in[a], geom.padding, geom.stride, factors[a]);
        std::string cur = bases[a];
        std::vector<std::string> axis_filters;
        for (std::size_t m = 0; m < links.size(); ++m) {
            const bool last = m + 1 == links.size();
            std::string next =
                last ? std::string(primes[a])
                     : std::string(bases[a]) + std::to_string(m + 1);
            std::string filt;
            if (links[m].filt_dim > 1) {
                filt = links.size() == 1 ? std::string(filts[a])
                                         : std::string(filts[a]) + std::to_string(m + 1);
                g.inner.push_back({filt, links[m].filt_dim});
            }
            if (!last) g.inner.push_back({next, links[m].out_dim});
            GraphVertex dummy;
            std::vector<std::string> dl = {cur, next};
            if (!filt.empty()) dl.push_back(filt);
            dummy.labels = make_label_set(dl);
            dummy.kind = kinds[a];
            g.vertices.push_back(dummy);
            axis_filters.push_back(filt);
            cur = next;
        }
        b.filter_labels.push_back(axis_filters);
    }
    g.inner.push_back({"c", geom.channels_in});
    return b;
}

void finish_graph(EinconvGraph& g) {
    std::vector<int> all;
    for (std::size_t v = 0; v < g.vertices.size(); ++v)
        if (g.vertices[v].kind != VertexKind::Input) all.push_back(static_cast<int>(v));
    g.stages = {all};
    g.activations.clear();
    const auto bad = validate(g);
    if (!bad.empty()) throw GraphError("constructed graph is invalid: " + bad.front());
}

std::int64_t need_rank(const std::map<std::string, std::int64_t>& ranks,
                       const std::string& name) {
    auto it = ranks.find(name);
    if (it == ranks.end()) throw GraphError("missing rank argument: " + name);
    if (it->second < 1) throw GraphError("rank argument " + name + " must be positive");
    return it->second;
}

void add_param(EinconvGraph& g, std::vector<std::string> labels) {
    GraphVertex v;
    v.labels = make_label_set(std::move(labels));
    v.kind = VertexKind::Parameter;
    g.vertices.push_back(std::move(v));
}

}  // namespace

EinconvGraph make_named(NamedKind kind, const ConvGeometry& geom,
                        const std::map<std::string, std::int64_t>& ranks) {
    const bool is3d = kind == NamedKind::Standard3d ||
                      kind == NamedKind::DepthwiseSeparable3d ||
                      kind == NamedKind::TwoPlusOneD;
    if (is3d && geom.spatial_dims() != 3)
        throw GraphError(std::string(named_kind_name(kind)) + " needs a 3D geometry");
    if (!is3d && geom.spatial_dims() != 2)
        throw GraphError(std::string(named_kind_name(kind)) + " needs a 2D geometry");

    std::vector<std::vector<std::int64_t>> factors;
    if (kind == NamedKind::Factoring) {
        for (auto f : geom.filter) {
            if (f < 5) throw GraphError("factoring needs filter size >= 5");
            factors.push_back({f - 2, 3});
        }
    } else {
        for (auto f : geom.filter) factors.push_back({f});
    }

    BaseBuild b = build_base(geom, factors);
    EinconvGraph& g = b.g;

    // filter labels of the single-factor kinds (possibly "" for 1x1)
    auto fl = [&b](int axis) { return b.filter_labels[axis][0]; };
    auto collect = [](std::initializer_list<std::string> ls) {
        std::vector<std::string> out;
        for (const auto& l : ls)
            if (!l.empty()) out.push_back(l);
        return out;
    };

    switch (kind) {
        case NamedKind::Standard: {
            auto ls = collect({fl(0), fl(1), "c", "c'"});
            add_param(g, ls);
            break;
        }
        case NamedKind::DepthwiseSeparable: {
            add_param(g, collect({fl(0), fl(1), "c"}));
            add_param(g, {"c", "c'"});
            break;
        }
        case NamedKind::Bottleneck: {
            g.inner.push_back({"r1", need_rank(ranks, "a")});
            g.inner.push_back({"r2", need_rank(ranks, "b")});
            add_param(g, {"c", "r1"});
            add_param(g, collect({fl(0), fl(1), "r1", "r2"}));
            add_param(g, {"c'", "r2"});
            break;
        }
        case NamedKind::InvertedBottleneck: {
            g.inner.push_back({"r1", need_rank(ranks, "m")});
            add_param(g, {"c", "r1"});
            add_param(g, collect({fl(0), fl(1), "r1"}));
            add_param(g, {"r1", "c'"});
            break;
        }
        case NamedKind::Factoring: {
            g.inner.push_back({"r1", need_rank(ranks, "m")});
            add_param(g, collect({b.filter_labels[0][0], b.filter_labels[1][0], "c", "r1"}));
            add_param(g, collect({b.filter_labels[0][1], b.filter_labels[1][1], "r1", "c'"}));
            break;
        }
        case NamedKind::Flattened: {
            add_param(g, collect({fl(0), "c'"}));
            add_param(g, collect({fl(1), "c'"}));
            add_param(g, {"c", "c'"});
            break;
        }
        case NamedKind::Cp: {
            g.inner.push_back({"r1", need_rank(ranks, "gamma")});
            add_param(g, collect({fl(0), "r1"}));
            add_param(g, collect({fl(1), "r1"}));
            add_param(g, {"c", "r1"});
            add_param(g, {"c'", "r1"});
            break;
        }
        case NamedKind::LowRank: {
            g.inner.push_back({"r1", need_rank(ranks, "r")});
            add_param(g, collect({fl(0), "c", "r1"}));
            add_param(g, collect({fl(1), "r1", "c'"}));
            break;
        }
        case NamedKind::Standard3d: {
            add_param(g, collect({fl(0), fl(1), fl(2), "c", "c'"}));
            break;
        }
        case NamedKind::DepthwiseSeparable3d: {
            add_param(g, collect({fl(0), fl(1), fl(2), "c"}));
            add_param(g, {"c", "c'"});
            break;
        }
        case NamedKind::TwoPlusOneD: {
            g.inner.push_back({"r1", need_rank(ranks, "m")});
            add_param(g, collect({fl(0), fl(1), "c", "r1"}));
            add_param(g, collect({fl(2), "r1", "c'"}));
            break;
        }
    }

    finish_graph(g);
    return g;
}

}  // namespace tnconv
