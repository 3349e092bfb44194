#include "reduction.hpp"

#include <algorithm>
#include <functional>
#include <map>
#include <set>

namespace tnconv {

const char* reduction_rule_name(ReductionRule r) {
    switch (r) {
        case ReductionRule::Rank1: return "rank1";
        case ReductionRule::SubsetVertex: return "subset_vertex";
        case ReductionRule::ParallelEdge: return "parallel_edge";
    }
    return "?";
}

namespace {

std::vector<int> rank_support(const EinconvGraph& g, const std::string& r) {
    std::vector<int> out;
    for (std::size_t v = 0; v < g.vertices.size(); ++v)
        if (set_contains(g.vertices[v].labels, r)) out.push_back(static_cast<int>(v));
    return out;
}

EinconvGraph drop_inner_label(EinconvGraph g, const std::string& name) {
    for (auto& v : g.vertices) {
        auto it = std::find(v.labels.begin(), v.labels.end(), name);
        if (it != v.labels.end()) v.labels.erase(it);
    }
    g.inner.erase(std::remove_if(g.inner.begin(), g.inner.end(),
                                 [&name](const IndexLabel& l) { return l.name == name; }),
                  g.inner.end());
    return g;
}

EinconvGraph drop_vertex(EinconvGraph g, int m) {
    g.vertices.erase(g.vertices.begin() + m);
    std::vector<std::vector<int>> stages;
    std::vector<bool> flags;
    bool carry = false;  // ORs the flags of boundaries swallowed by dropped stages
    for (std::size_t s = 0; s < g.stages.size(); ++s) {
        if (s > 0) carry = carry || (s - 1 < g.activations.size() && g.activations[s - 1]);
        std::vector<int> stage;
        for (int v : g.stages[s]) {
            if (v == m) continue;
            stage.push_back(v > m ? v - 1 : v);
        }
        if (stage.empty()) continue;
        if (!stages.empty()) flags.push_back(carry);
        stages.push_back(std::move(stage));
        carry = false;
    }
    g.stages = std::move(stages);
    g.activations = std::move(flags);
    return g;
}

struct RankTarget {
    std::string label;
    std::string why;
};

std::vector<RankTarget> rank1_targets(const EinconvGraph& g) {
    std::vector<RankTarget> out;
    for (const auto& r : g.rank_labels()) {
        if (g.dim_of(r) == 1)
            out.push_back({r, "dim 1"});
        else if (rank_support(g, r).size() <= 1)
            out.push_back({r, "singleton hyperedge"});
    }
    return out;
}

std::vector<std::pair<int, int>> subset_targets(const EinconvGraph& g) {
    std::vector<std::pair<int, int>> out;  // (removed m, absorbing n)
    const int M = static_cast<int>(g.vertices.size());
    int n_params = 0;
    for (const auto& v : g.vertices)
        if (v.kind == VertexKind::Parameter) ++n_params;
    for (int m = 0; m < M; ++m) {
        if (g.vertices[m].kind != VertexKind::Parameter) continue;
        if (g.vertices[m].labels.empty() && n_params >= 2) {
            // empty parameter: a scalar, absorbable into any other parameter
            for (int n = 0; n < M; ++n)
                if (n != m && g.vertices[n].kind == VertexKind::Parameter) {
                    out.emplace_back(m, n);
                    break;
                }
            continue;
        }
        for (int n = 0; n < M; ++n) {
            if (n == m || g.vertices[n].kind != VertexKind::Parameter) continue;
            if (is_subset(g.vertices[m].labels, g.vertices[n].labels))
                out.emplace_back(m, n);
        }
    }
    return out;
}

std::vector<std::pair<std::string, std::string>> parallel_targets(const EinconvGraph& g) {
    std::vector<std::pair<std::string, std::string>> out;
    const auto ranks = g.rank_labels();
    for (std::size_t a = 0; a < ranks.size(); ++a)
        for (std::size_t b = a + 1; b < ranks.size(); ++b) {
            const auto sa = rank_support(g, ranks[a]);
            if (sa.empty()) continue;
            if (sa == rank_support(g, ranks[b])) out.emplace_back(ranks[a], ranks[b]);
        }
    return out;
}

EinconvGraph apply_parallel(EinconvGraph g, const std::string& keep, const std::string& drop) {
    for (auto& l : g.inner)
        if (l.name == keep) l.dim *= g.dim_of(drop);
    return drop_inner_label(std::move(g), drop);
}

}  // namespace

EinconvGraph reduce_rank1(const EinconvGraph& g, ReductionStep* step) {
    const auto targets = rank1_targets(g);
    if (targets.empty()) return g;
    if (step) *step = {ReductionRule::Rank1, targets[0].label + " (" + targets[0].why + ")"};
    return drop_inner_label(g, targets[0].label);
}

EinconvGraph reduce_subset_vertex(const EinconvGraph& g, ReductionStep* step) {
    const auto targets = subset_targets(g);
    if (targets.empty()) return g;
    const auto [m, n] = targets[0];
    if (step)
        *step = {ReductionRule::SubsetVertex,
                 "vertex " + std::to_string(m) + " absorbed into vertex " + std::to_string(n)};
    return drop_vertex(g, m);
}

EinconvGraph merge_parallel_edges(const EinconvGraph& g, ReductionStep* step) {
    const auto targets = parallel_targets(g);
    if (targets.empty()) return g;
    const auto [a, b] = targets[0];
    if (step) *step = {ReductionRule::ParallelEdge, a + " and " + b + " merged"};
    return apply_parallel(g, a, b);
}

std::vector<std::pair<ReductionStep, EinconvGraph>> applicable_reductions(
    const EinconvGraph& g) {
    std::vector<std::pair<ReductionStep, EinconvGraph>> out;
    for (const auto& t : rank1_targets(g))
        out.push_back({{ReductionRule::Rank1, t.label + " (" + t.why + ")"},
                       drop_inner_label(g, t.label)});
    for (const auto& [a, b] : parallel_targets(g))
        out.push_back({{ReductionRule::ParallelEdge, a + " and " + b + " merged"},
                       apply_parallel(g, a, b)});
    for (const auto& [m, n] : subset_targets(g))
        out.push_back({{ReductionRule::SubsetVertex,
                        "vertex " + std::to_string(m) + " absorbed into vertex " +
                            std::to_string(n)},
                       drop_vertex(g, m)});
    return out;
}

ReductionTrace reduce_to_fixpoint(const EinconvGraph& g) {
    ReductionTrace trace;
    trace.result = g;
    bool changed = true;
    while (changed) {
        changed = false;
        for (;;) {
            ReductionStep step;
            EinconvGraph next = reduce_rank1(trace.result, &step);
            if (next == trace.result) break;
            trace.result = std::move(next);
            trace.steps.push_back(step);
            changed = true;
        }
        for (;;) {
            ReductionStep step;
            EinconvGraph next = merge_parallel_edges(trace.result, &step);
            if (next == trace.result) break;
            trace.result = std::move(next);
            trace.steps.push_back(step);
            changed = true;
        }
        for (;;) {
            ReductionStep step;
            EinconvGraph next = reduce_subset_vertex(trace.result, &step);
            if (next == trace.result) break;
            trace.result = std::move(next);
            trace.steps.push_back(step);
            changed = true;
        }
    }
    return trace;
}

std::vector<std::string> redundancy_reasons(const EinconvGraph& g, const RuleConfig& cfg) {
    std::vector<std::string> out;
    for (const auto& t : rank1_targets(g)) out.push_back("rank1: " + t.label + " (" + t.why + ")");
    for (const auto& [a, b] : parallel_targets(g))
        out.push_back("parallel_edge: " + a + "," + b);
    for (const auto& [m, n] : subset_targets(g))
        out.push_back("subset_vertex: " + std::to_string(m) + " in " + std::to_string(n));
    if (cfg.subset_against_fixed) {
        for (std::size_t m = 0; m < g.vertices.size(); ++m) {
            if (g.vertices[m].kind != VertexKind::Parameter) continue;
            for (std::size_t n = 0; n < g.vertices.size(); ++n) {
                if (n == m || g.vertices[n].kind == VertexKind::Parameter) continue;
                if (is_subset(g.vertices[m].labels, g.vertices[n].labels))
                    out.push_back("subset_of_fixed: " + std::to_string(m) + " in " +
                                  std::to_string(n));
            }
        }
    }
    if (cfg.require_channel_on_parameter) {
        bool ok = false;
        for (const auto& v : g.vertices)
            if (v.kind == VertexKind::Parameter && set_contains(v.labels, "c")) ok = true;
        if (!ok) out.push_back("input channel reaches no parameter vertex");
    }
    for (const auto& v : validate(g)) out.push_back("invalid: " + v);
    return out;
}

bool is_nonredundant(const EinconvGraph& g, const RuleConfig& cfg) {
    return redundancy_reasons(g, cfg).empty();
}

std::uint64_t partition_count(int n) {
    if (n < 0) return 0;
    std::vector<std::uint64_t> p(static_cast<std::size_t>(n) + 1, 0);
    p[0] = 1;
    for (int part = 1; part <= n; ++part)
        for (int m = part; m <= n; ++m) p[m] += p[m - part];
    return p[n];
}

std::vector<std::vector<int>> filter_factorizations(int filter_dim) {
    if (filter_dim < 1 || filter_dim % 2 == 0)
        throw GraphError("filter size must be odd and positive");
    if (filter_dim == 1) return {{1}};
    const int q = (filter_dim - 1) / 2;
    std::vector<std::vector<int>> out;
    std::vector<int> cur;
    std::function<void(int, int)> rec = [&](int left, int max_part) {
        if (left == 0) {
            std::vector<int> factors;
            for (int p : cur) factors.push_back(2 * p + 1);
            out.push_back(factors);
            return;
        }
        for (int p = std::min(left, max_part); p >= 1; --p) {
            cur.push_back(p);
            rec(left - p, p);
            cur.pop_back();
        }
    };
    rec(q, q);
    std::sort(out.begin(), out.end(), [](const auto& a, const auto& b) {
        if (a.size() != b.size()) return a.size() < b.size();
        return a > b;
    });
    return out;
}

}  // namespace tnconv
