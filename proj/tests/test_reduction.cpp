#include <doctest.h>

#include <functional>
#include <set>

#include "reduction.hpp"
#include "rng.hpp"
#include "support/als.hpp"

using namespace tnconv;
using tnconv::testing::als_fit_residual;
using tnconv::testing::sample_kernel;

namespace {

ConvGeometry small_geom(std::int64_t c = 2, std::int64_t cp = 2) {
    ConvGeometry g;
    g.spatial_in = {6, 6};
    g.filter = {3, 3};
    g.padding = 1;
    g.stride = 1;
    g.channels_in = c;
    g.channels_out = cp;
    return g;
}

// parameter-vertex surgery helpers for building redundant graphs
EinconvGraph with_params(std::vector<std::vector<std::string>> params,
                         std::vector<IndexLabel> ranks, std::int64_t c = 2,
                         std::int64_t cp = 2) {
    auto g = make_named(NamedKind::Standard, small_geom(c, cp));
    g.vertices.pop_back();  // drop the standard kernel
    g.stages.clear();
    for (auto& l : ranks) g.inner.push_back(l);
    for (auto& p : params)
        g.vertices.push_back({make_label_set(p), VertexKind::Parameter});
    std::vector<int> all;
    for (std::size_t v = 1; v < g.vertices.size(); ++v) all.push_back(static_cast<int>(v));
    g.stages = {all};
    g.activations.clear();
    return g;
}

}  // namespace

TEST_CASE("rank1 removes dim-1 and singleton rank indices") {
    SUBCASE("Tucker-2 with A=1 drops the first rank edge") {
        auto g = make_named(NamedKind::Bottleneck, small_geom(3, 3), {{"a", 1}, {"b", 2}});
        ReductionStep step;
        auto r = reduce_rank1(g, &step);
        CHECK(step.rule == ReductionRule::Rank1);
        CHECK(r.rank_labels().size() == 1);
        for (const auto& v : r.vertices)
            CHECK(!set_contains(v.labels, "r1"));
        // the kernel spaces before and after coincide (space preservation)
        for (std::uint64_t s = 0; s < 3; ++s) {
            CHECK(als_fit_residual(r, sample_kernel(g, 100 + s)) < 1e-6);
            CHECK(als_fit_residual(g, sample_kernel(r, 200 + s)) < 1e-6);
        }
    }
    SUBCASE("CP with rank 1 leaves only the outer labels") {
        auto g = make_named(NamedKind::Cp, small_geom(), {{"gamma", 1}});
        auto r = reduce_rank1(g);
        std::multiset<std::string> rendered;
        for (const auto& v : r.vertices)
            if (v.kind == VertexKind::Parameter) {
                std::string s;
                for (const auto& l : v.labels) s += l + ",";
                rendered.insert(s);
            }
        CHECK(rendered == std::multiset<std::string>{"i,", "j,", "c,", "c',"});
    }
    SUBCASE("singleton hyperedge is deleted") {
        auto g = with_params({{"i", "j", "c", "c'", "r1"}}, {{"r1", 2}});
        auto r = reduce_rank1(g);
        CHECK(r.rank_labels().empty());
        CHECK(reduce_rank1(r) == r);  // idempotent once nothing applies
    }
}

TEST_CASE("subset vertex absorption") {
    SUBCASE("strict subset is removed") {
        auto g = with_params({{"c", "r1"}, {"c", "r1", "c'"}}, {{"r1", 2}});
        ReductionStep step;
        auto r = reduce_subset_vertex(g, &step);
        CHECK(step.rule == ReductionRule::SubsetVertex);
        int params = 0;
        for (const auto& v : r.vertices)
            if (v.kind == VertexKind::Parameter) ++params;
        CHECK(params == 1);
    }
    SUBCASE("duplicate vertices: one removed") {
        auto g = with_params({{"c", "c'"}, {"c", "c'"}, {"i", "j", "c"}}, {});
        auto r = reduce_subset_vertex(g);
        int params = 0;
        for (const auto& v : r.vertices)
            if (v.kind == VertexKind::Parameter) ++params;
        CHECK(params == 2);
    }
    SUBCASE("depthwise separable is untouched") {
        auto g = make_named(NamedKind::DepthwiseSeparable, small_geom());
        CHECK(reduce_subset_vertex(g) == g);
        CHECK(is_nonredundant(g));
    }
}

TEST_CASE("parallel rank edges merge into one index with the product dim") {
    SUBCASE("two rank-2 edges on the same vertex pair") {
        auto g = with_params({{"i", "j", "c", "r1", "r2"}, {"r1", "r2", "c'"}},
                             {{"r1", 2}, {"r2", 2}});
        ReductionStep step;
        auto r = merge_parallel_edges(g, &step);
        CHECK(step.rule == ReductionRule::ParallelEdge);
        REQUIRE(r.rank_labels() == std::vector<std::string>{"r1"});
        CHECK(r.dim_of("r1") == 4);
    }
    SUBCASE("dims 2 and 1 in parallel: confluent with rank1 first") {
        auto g = with_params({{"i", "j", "c", "r1", "r2"}, {"r1", "r2", "c'"}},
                             {{"r1", 2}, {"r2", 1}});
        auto via_parallel = reduce_to_fixpoint(merge_parallel_edges(g)).result;
        auto via_rank1 = reduce_to_fixpoint(reduce_rank1(g)).result;
        CHECK(canonical_form(via_parallel) == canonical_form(via_rank1));
    }
    SUBCASE("Tucker-2's two rank edges have different supports") {
        auto g = make_named(NamedKind::Bottleneck, small_geom(), {{"a", 2}, {"b", 2}});
        CHECK(merge_parallel_edges(g) == g);
    }
}

TEST_CASE("partition counts") {
    CHECK(partition_count(0) == 1);
    CHECK(partition_count(1) == 1);
    CHECK(partition_count(4) == 5);
    // filter-size combinations for a 5x5 filter: pi(2) per axis
    CHECK(partition_count(2) * partition_count(2) == 4);
    CHECK(filter_factorizations(5).size() * filter_factorizations(5).size() == 4);
}

namespace {

// independent check: enumerate compositions of odd factors >= 3 and dedup as
// multisets
std::set<std::vector<int>> brute_factorizations(int filter) {
    std::set<std::vector<int>> out;
    std::vector<int> cur;
    std::function<void(int)> rec = [&](int left) {
        if (left == 0 && !cur.empty()) {
            auto sorted = cur;
            std::sort(sorted.rbegin(), sorted.rend());
            out.insert(sorted);
            return;
        }
        for (int f = 3; f - 1 <= left; f += 2) {
            cur.push_back(f);
            rec(left - (f - 1));
            cur.pop_back();
        }
    };
    rec(filter - 1);
    if (filter == 1) out.insert({1});
    return out;
}

}  // namespace

TEST_CASE("filter factorizations match the partition function and brute force") {
    CHECK(filter_factorizations(3) == std::vector<std::vector<int>>{{3}});
    CHECK(filter_factorizations(5) == std::vector<std::vector<int>>{{5}, {3, 3}});
    CHECK(filter_factorizations(7) ==
          std::vector<std::vector<int>>{{7}, {5, 3}, {3, 3, 3}});
    CHECK_THROWS_AS(filter_factorizations(4), GraphError);
    for (int f : {1, 3, 5, 7, 9, 11}) {
        const auto got = filter_factorizations(f);
        CHECK(got.size() == partition_count((f - 1) / 2));
        std::set<std::vector<int>> got_set(got.begin(), got.end());
        CHECK(got_set == brute_factorizations(f));
    }
}

TEST_CASE("nonredundancy of the named graphs and simple counterexamples") {
    for (NamedKind k : named_kinds_2d_3x3()) {
        std::map<std::string, std::int64_t> ranks;
        for (const auto& arg : named_kind_rank_args(k)) ranks[arg] = 2;
        auto g = make_named(k, small_geom(), ranks);
        CHECK(is_nonredundant(g));
        CHECK(applicable_reductions(g).empty());
    }
    SUBCASE("standard plus an isolated rank index") {
        auto g = with_params({{"i", "j", "c", "c'", "r1"}}, {{"r1", 2}});
        CHECK(!is_nonredundant(g));
    }
    SUBCASE("duplicated CP factor vertex") {
        auto g = with_params({{"i", "r1"}, {"j", "r1"}, {"c", "r1"}, {"c'", "r1"},
                              {"c'", "r1"}},
                             {{"r1", 2}});
        CHECK(!is_nonredundant(g));
    }
}

TEST_CASE("reduction terminates and the trace shrinks the graph") {
    auto g = with_params({{"i", "j", "c", "r1", "r2"},
                          {"r1", "r2", "c'"},
                          {"c'"},
                          {"c", "r1", "r2", "c'"}},
                         {{"r1", 2}, {"r2", 1}});
    auto trace = reduce_to_fixpoint(g);
    CHECK(!trace.steps.empty());
    CHECK(applicable_reductions(trace.result).empty());
    // lexicographic measure (|V|, |I|) decreased overall
    CHECK(trace.result.vertices.size() + trace.result.inner.size() <
          g.vertices.size() + g.inner.size());
}

TEST_CASE("property: random rule sequences halt and agree at desk scale") {
    // exhaustive rule orderings on a family of small graphs; every maximal
    // sequence must reach one canonical form
    Rng rng(5);
    std::vector<std::string> pool = {"i", "j", "c", "c'", "r1", "r2"};
    int tested = 0;
    while (tested < 60) {
        // random collection of <=3 parameter vertices, i and j used <= once
        std::vector<std::vector<std::string>> params;
        int used_i = 0, used_j = 0;
        const int nv = 1 + static_cast<int>(rng.below(3));
        for (int v = 0; v < nv; ++v) {
            std::vector<std::string> labels;
            for (const auto& l : pool) {
                if (rng.uniform() < 0.45) {
                    if (l == "i" && used_i) continue;
                    if (l == "j" && used_j) continue;
                    labels.push_back(l);
                    used_i += l == "i";
                    used_j += l == "j";
                }
            }
            if (!labels.empty()) params.push_back(labels);
        }
        if (params.empty()) continue;
        bool cp_used = false, iu = false, ju = false;
        for (const auto& p : params)
            for (const auto& l : p) {
                cp_used |= l == "c'";
                iu |= l == "i";
                ju |= l == "j";
            }
        if (!cp_used || !iu || !ju) continue;
        auto g = with_params(params, {{"r1", 1 + (std::int64_t)rng.below(2)},
                                      {"r2", 1 + (std::int64_t)rng.below(2)}});
        // prune unused rank labels so the graph is structurally sane
        for (const auto& r : {"r1", "r2"}) {
            bool used = false;
            for (const auto& v : g.vertices) used |= set_contains(v.labels, r);
            if (!used)
                g.inner.erase(std::remove_if(g.inner.begin(), g.inner.end(),
                                             [&](const IndexLabel& l) { return l.name == r; }),
                              g.inner.end());
        }
        ++tested;

        // breadth-first closure over every applicable rule order
        std::set<std::string> terminal;
        std::set<std::string> seen;
        std::vector<EinconvGraph> frontier = {g};
        seen.insert(canonical_form(g));
        int guard = 0;
        while (!frontier.empty() && ++guard < 3000) {
            EinconvGraph cur = frontier.back();
            frontier.pop_back();
            auto nexts = applicable_reductions(cur);
            if (nexts.empty()) {
                terminal.insert(canonical_form(cur));
                continue;
            }
            for (auto& [step, n] : nexts) {
                const std::string c = canonical_form(n);
                if (seen.insert(c).second) frontier.push_back(std::move(n));
            }
        }
        REQUIRE(guard < 3000);
        REQUIRE(terminal.size() == 1);
    }
}
