#include "enumeration.hpp"

#include <algorithm>
#include <atomic>
#include <future>
#include <set>

namespace tnconv {

namespace {

using Mask = std::uint32_t;

bool mask_subset(Mask a, Mask b) { return (a & ~b) == 0; }
bool comparable(Mask a, Mask b) { return mask_subset(a, b) || mask_subset(b, a); }

// All antichain families over the nonempty subsets listed in `universe`.
void antichain_families(const std::vector<Mask>& universe,
                        const std::function<void(const std::vector<Mask>&)>& yield) {
    std::vector<Mask> chosen;
    std::function<void(std::size_t)> rec = [&](std::size_t idx) {
        if (idx == universe.size()) {
            yield(chosen);
            return;
        }
        rec(idx + 1);
        for (Mask c : chosen)
            if (comparable(c, universe[idx])) return;
        chosen.push_back(universe[idx]);
        rec(idx + 1);
        chosen.pop_back();
    };
    rec(0);
}

// Set partitions of {0, ..., n-1} in a deterministic order.
std::vector<std::vector<std::vector<int>>> set_partitions(int n) {
    std::vector<std::vector<std::vector<int>>> out;
    std::vector<std::vector<int>> cur;
    std::function<void(int)> rec = [&](int e) {
        if (e == n) {
            out.push_back(cur);
            return;
        }
        for (std::size_t t = 0; t < cur.size(); ++t) {
            cur[t].push_back(e);
            rec(e + 1);
            cur[t].pop_back();
        }
        cur.push_back({e});
        rec(e + 1);
        cur.pop_back();
    };
    if (n == 0)
        out.push_back({});
    else
        rec(0);
    return out;
}

struct TaskSpec {
    std::vector<std::vector<std::int64_t>> factors;  // per axis
    int k_ranks = 0;
};

ConvGeometry reference_geometry(int spatial_dims, const std::vector<int>& filter,
                                const EnumOptions& opts) {
    ConvGeometry geo;
    int eff_max = 1;
    for (int f : filter) eff_max = std::max(eff_max, f);
    for (int a = 0; a < spatial_dims; ++a) {
        geo.spatial_in.push_back(opts.spatial_extent);
        geo.filter.push_back(filter[a]);
    }
    geo.stride = opts.stride;
    geo.padding = opts.padding >= 0 ? opts.padding : (eff_max - 1) / 2;
    geo.channels_in = opts.channels_in;
    geo.channels_out = opts.channels_out;
    geo.check();
    return geo;
}

// Enumerates one (factorization, rank count) cell into `found`.
void enumerate_cell(const ConvGeometry& geo, const TaskSpec& task, const EnumOptions& opts,
                    std::map<std::string, EinconvGraph>& found, std::uint64_t& candidates) {
    // Base skeleton is rebuilt through make-style construction: we reuse the
    // geometry plumbing by constructing the graph by hand here.
    const int nd = geo.spatial_dims();
    static const char* bases[3] = {"h", "w", "d"};
    static const char* primes[3] = {"h'", "w'", "d'"};
    static const char* filts[3] = {"i", "j", "k"};
    static const VertexKind kinds[3] = {VertexKind::DummyVertical, VertexKind::DummyHorizontal,
                                        VertexKind::DummyDepth};

    EinconvGraph base;
    base.geometry = geo;
    for (int a = 0; a < nd; ++a) base.outer.push_back(primes[a]);
    base.outer.push_back("c'");
    GraphVertex input;
    {
        std::vector<std::string> ls;
        for (int a = 0; a < nd; ++a) ls.push_back(bases[a]);
        ls.push_back("c");
        input.labels = make_label_set(ls);
        input.kind = VertexKind::Input;
    }
    base.vertices.push_back(input);

    std::vector<std::string> filter_labels;
    for (int a = 0; a < nd; ++a) {
        base.inner.push_back({bases[a], geo.spatial_in[a]});
        const auto& fs = task.factors[a];
        std::int64_t remaining_pad = geo.padding;
        std::int64_t cur_dim = geo.spatial_in[a];
        std::string cur = bases[a];
        for (std::size_t m = 0; m < fs.size(); ++m) {
            const bool last = m + 1 == fs.size();
            const std::int64_t pad =
                last ? remaining_pad : std::min<std::int64_t>((fs[m] - 1) / 2, remaining_pad);
            remaining_pad -= pad;
            const std::int64_t stride = last ? geo.stride : 1;
            const std::int64_t span = cur_dim + 2 * pad - fs[m];
            if (span < 0 || span % stride != 0)
                throw GraphError("reference geometry incompatible with factorization");
            const std::int64_t out_dim = span / stride + 1;
            std::string next = last ? std::string(primes[a])
                                    : std::string(bases[a]) + std::to_string(m + 1);
            std::string filt;
            if (fs[m] > 1) {
                filt = fs.size() == 1 ? std::string(filts[a])
                                      : std::string(filts[a]) + std::to_string(m + 1);
                base.inner.push_back({filt, fs[m]});
                filter_labels.push_back(filt);
            }
            if (!last) base.inner.push_back({next, out_dim});
            GraphVertex dummy;
            std::vector<std::string> dl = {cur, next};
            if (!filt.empty()) dl.push_back(filt);
            dummy.labels = make_label_set(dl);
            dummy.kind = kinds[a];
            base.vertices.push_back(dummy);
            cur = next;
            cur_dim = out_dim;
        }
    }
    base.inner.push_back({"c", geo.channels_in});

    const int k = task.k_ranks;
    const int nb = 2 + k;  // c, c', r1..rk
    std::vector<std::string> bnames = {"c", "c'"};
    for (int t = 1; t <= k; ++t) bnames.push_back("r" + std::to_string(t));

    std::vector<Mask> nonempty;
    for (Mask m = 1; m < (Mask(1) << nb); ++m) nonempty.push_back(m);

    const Mask c_bit = 1, cp_bit = 2;
    const int nf = static_cast<int>(filter_labels.size());
    const auto partitions = set_partitions(nf);

    for (const auto& partition : partitions) {
        const int ng = static_cast<int>(partition.size());
        // every decoration combo for the filter-carrying vertices
        std::vector<Mask> deco(ng, 0);
        std::function<void(int)> assign = [&](int gi) {
            if (gi < ng) {
                for (Mask d = 0; d < (Mask(1) << nb); ++d) {
                    deco[gi] = d;
                    assign(gi + 1);
                }
                return;
            }
            antichain_families(nonempty, [&](const std::vector<Mask>& pure) {
                if (++candidates > opts.candidate_cap)
                    throw BudgetError("candidate cap exceeded", candidates);

                // admissibility: bare filter singleton sits inside its dummy,
                // bare {c} sits inside the input vertex
                if (opts.rules.subset_against_fixed) {
                    for (int gi = 0; gi < ng; ++gi)
                        if (partition[gi].size() == 1 && deco[gi] == 0) return;
                    for (Mask p : pure)
                        if (p == c_bit) return;
                }
                // antichain between pure vertices and decorated filter vertices
                for (Mask p : pure)
                    for (int gi = 0; gi < ng; ++gi)
                        if (mask_subset(p, deco[gi])) return;

                Mask used = 0;
                for (int gi = 0; gi < ng; ++gi) used |= deco[gi];
                for (Mask p : pure) used |= p;
                if (!(used & cp_bit)) return;  // output channel unreachable
                if (opts.rules.require_channel_on_parameter && !(used & c_bit)) return;

                // rank supports: >= 2 vertices, pairwise distinct
                const int nv = ng + static_cast<int>(pure.size());
                std::vector<std::vector<int>> supports(k);
                for (int t = 0; t < k; ++t) {
                    const Mask bit = Mask(1) << (2 + t);
                    for (int v = 0; v < nv; ++v) {
                        const Mask m = v < ng ? deco[v] : pure[v - ng];
                        if (m & bit) supports[t].push_back(v);
                    }
                    if (supports[t].size() < 2) return;
                }
                for (int t = 0; t < k; ++t)
                    for (int u = t + 1; u < k; ++u)
                        if (supports[t] == supports[u]) return;

                EinconvGraph g = base;
                for (int t = 1; t <= k; ++t)
                    g.inner.push_back({"r" + std::to_string(t), opts.rank_dim});
                auto add_vertex = [&](const std::vector<int>& fidx, Mask m) {
                    GraphVertex v;
                    std::vector<std::string> ls;
                    for (int f : fidx) ls.push_back(filter_labels[f]);
                    for (int b = 0; b < nb; ++b)
                        if (m & (Mask(1) << b)) ls.push_back(bnames[b]);
                    v.labels = make_label_set(ls);
                    v.kind = VertexKind::Parameter;
                    g.vertices.push_back(v);
                };
                for (int gi = 0; gi < ng; ++gi) add_vertex(partition[gi], deco[gi]);
                for (Mask p : pure) add_vertex({}, p);
                std::vector<int> stage;
                for (std::size_t v = 1; v < g.vertices.size(); ++v)
                    stage.push_back(static_cast<int>(v));
                g.stages = {stage};

                const std::string canon = canonical_form(g);
                if (found.count(canon)) return;
                if (!validate(g).empty() || !is_nonredundant(g, opts.rules))
                    throw GraphError("enumeration produced an inadmissible graph: " +
                                     graph_to_json(g));
                found.emplace(canon, std::move(g));
            });
        };
        assign(0);
    }
}

}  // namespace

EnumerationResult enumerate_graphs(int spatial_dims, const std::vector<int>& filter,
                                   int max_rank_indices, const EnumOptions& opts) {
    if (spatial_dims != 2 && spatial_dims != 3)
        throw GraphError("spatial_dims must be 2 or 3");
    if (static_cast<int>(filter.size()) != spatial_dims)
        throw GraphError("filter must list one odd size per axis");
    if (max_rank_indices < 0) throw GraphError("max_rank_indices must be >= 0");

    const ConvGeometry geo = reference_geometry(spatial_dims, filter, opts);

    // cartesian product of the per-axis factorizations
    std::vector<std::vector<std::vector<int>>> per_axis;
    for (int f : filter) per_axis.push_back(filter_factorizations(f));
    std::vector<TaskSpec> tasks;
    std::vector<int> pick(spatial_dims, 0);
    for (;;) {
        for (int kk = 0; kk <= max_rank_indices; ++kk) {
            TaskSpec t;
            for (int a = 0; a < spatial_dims; ++a) {
                std::vector<std::int64_t> fs(per_axis[a][pick[a]].begin(),
                                             per_axis[a][pick[a]].end());
                t.factors.push_back(fs);
            }
            t.k_ranks = kk;
            tasks.push_back(std::move(t));
        }
        int a = spatial_dims - 1;
        while (a >= 0 && ++pick[a] == static_cast<int>(per_axis[a].size())) pick[a--] = 0;
        if (a < 0) break;
    }

    const std::uint64_t per_task_cap =
        std::max<std::uint64_t>(1, opts.candidate_cap / std::max<std::size_t>(1, tasks.size()));

    auto run_task = [&](const TaskSpec& task) {
        std::map<std::string, EinconvGraph> found;
        std::uint64_t candidates = 0;
        EnumOptions cell_opts = opts;
        cell_opts.candidate_cap = per_task_cap;
        enumerate_cell(geo, task, cell_opts, found, candidates);
        return std::make_pair(std::move(found), candidates);
    };

    std::map<std::string, EinconvGraph> all;
    std::uint64_t candidates = 0;
    if (opts.jobs > 1 && tasks.size() > 1) {
        std::vector<std::future<std::pair<std::map<std::string, EinconvGraph>, std::uint64_t>>>
            futs;
        for (const auto& t : tasks)
            futs.push_back(std::async(std::launch::async, run_task, t));
        for (auto& f : futs) {
            auto [found, cand] = f.get();
            candidates += cand;
            for (auto& [canon, g] : found) all.emplace(canon, std::move(g));
        }
    } else {
        for (const auto& t : tasks) {
            auto [found, cand] = run_task(t);
            candidates += cand;
            for (auto& [canon, g] : found) all.emplace(canon, std::move(g));
        }
    }

    EnumerationResult res;
    res.candidates = candidates;
    for (auto& [canon, g] : all) res.graphs.push_back(std::move(g));
    return res;
}

void enumerate_vertex_sets(const std::vector<std::string>& labels,
                           const std::function<bool(const std::vector<LabelSet>&)>& yield,
                           std::uint64_t cap) {
    const int n = static_cast<int>(labels.size());
    if (n > 20) throw BudgetError("label universe too large", 0);
    std::vector<Mask> nonempty;
    for (Mask m = 1; m < (Mask(1) << n); ++m) nonempty.push_back(m);
    const Mask full = (Mask(1) << n) - 1;

    std::uint64_t count = 0;
    bool stop = false;
    std::vector<Mask> chosen;
    std::function<void(std::size_t, Mask)> rec = [&](std::size_t idx, Mask covered) {
        if (stop) return;
        if (idx == nonempty.size()) {
            if (covered != full || chosen.empty()) return;
            if (++count > cap) throw BudgetError("vertex-set cap exceeded", count);
            std::vector<LabelSet> family;
            for (Mask m : chosen) {
                std::vector<std::string> ls;
                for (int b = 0; b < n; ++b)
                    if (m & (Mask(1) << b)) ls.push_back(labels[b]);
                family.push_back(make_label_set(ls));
            }
            if (!yield(family)) stop = true;
            return;
        }
        rec(idx + 1, covered);
        if (stop) return;
        for (Mask c : chosen)
            if (comparable(c, nonempty[idx])) return;
        chosen.push_back(nonempty[idx]);
        rec(idx + 1, covered | nonempty[idx]);
        chosen.pop_back();
    };
    rec(0, 0);
}

std::vector<SummaryRow> count_summary(const std::vector<EinconvGraph>& graphs) {
    std::map<std::tuple<int, int, std::int64_t>, std::uint64_t> acc;
    for (const auto& g : graphs) {
        const int nv = static_cast<int>(g.vertices.size());
        const int nr = static_cast<int>(g.rank_labels().size());
        acc[{nv, nr, g.parameter_count()}] += 1;
    }
    std::vector<SummaryRow> rows;
    for (const auto& [key, count] : acc) {
        SummaryRow r;
        std::tie(r.n_vertices, r.n_rank_indices, r.params) = key;
        r.count = count;
        rows.push_back(r);
    }
    return rows;
}

std::vector<VariantCount> enumeration_variant_report(int spatial_dims,
                                                     const std::vector<int>& filter,
                                                     int max_rank_indices,
                                                     const EnumOptions& opts) {
    std::vector<VariantCount> out;
    for (bool fixed : {true, false}) {
        for (bool chan : {true, false}) {
            EnumOptions o = opts;
            o.rules.subset_against_fixed = fixed;
            o.rules.require_channel_on_parameter = chan;
            VariantCount vc;
            vc.rules = o.rules;
            const auto res = enumerate_graphs(spatial_dims, filter, max_rank_indices, o);
            vc.total = res.graphs.size();
            for (const auto& g : res.graphs)
                vc.by_rank_indices[static_cast<int>(g.rank_labels().size())] += 1;
            out.push_back(std::move(vc));
        }
    }
    return out;
}

}  // namespace tnconv
