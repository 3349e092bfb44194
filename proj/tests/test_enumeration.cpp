#include <doctest.h>

#include <set>

#include "enumeration.hpp"

using namespace tnconv;

namespace {

EnumOptions small_opts() {
    EnumOptions o;
    o.spatial_extent = 8;
    o.channels_in = 4;
    o.channels_out = 4;
    return o;
}

}  // namespace

TEST_CASE("vertex-set stream yields the covering antichains") {
    auto collect = [](const std::vector<std::string>& labels) {
        std::vector<std::vector<LabelSet>> out;
        enumerate_vertex_sets(labels, [&out](const std::vector<LabelSet>& fam) {
            out.push_back(fam);
            return true;
        });
        return out;
    };

    SUBCASE("one label") {
        auto fams = collect({"a"});
        REQUIRE(fams.size() == 1);
        CHECK(fams[0] == std::vector<LabelSet>{make_label_set({"a"})});
    }
    SUBCASE("two labels: either joined or separated") {
        auto fams = collect({"a", "b"});
        std::set<std::size_t> sizes;
        for (const auto& f : fams) sizes.insert(f.size());
        CHECK(fams.size() == 2);
        CHECK(sizes == std::set<std::size_t>{1, 2});
    }
    SUBCASE("three labels match a brute-force antichain count") {
        // independent count: all families of distinct nonempty subsets of
        // {a,b,c} that cover every label and contain no subset pair
        int want = 0;
        for (unsigned fam = 1; fam < (1u << 7); ++fam) {
            unsigned covered = 0;
            bool anti = true;
            for (int s1 = 1; s1 <= 7 && anti; ++s1) {
                if (!(fam >> (s1 - 1) & 1)) continue;
                covered |= static_cast<unsigned>(s1);
                for (int s2 = 1; s2 <= 7; ++s2) {
                    if (s1 == s2 || !(fam >> (s2 - 1) & 1)) continue;
                    if ((s1 & s2) == s1) anti = false;
                }
            }
            if (anti && covered == 7) ++want;
        }
        CHECK(collect({"a", "b", "c"}).size() == static_cast<std::size_t>(want));
        CHECK(want == 9);
    }
    SUBCASE("the stream stops when the callback declines") {
        int seen = 0;
        enumerate_vertex_sets({"a", "b", "c"}, [&seen](const std::vector<LabelSet>&) {
            return ++seen < 3;
        });
        CHECK(seen == 3);
    }
    SUBCASE("cap overflow raises a budget error") {
        CHECK_THROWS_AS(
            enumerate_vertex_sets({"a", "b", "c"},
                                  [](const std::vector<LabelSet>&) { return true; }, 4),
            BudgetError);
    }
}

TEST_CASE("1x1 enumeration holds exactly the channel map") {
    auto res = enumerate_graphs(2, {1, 1}, 0, small_opts());
    REQUIRE(res.graphs.size() == 1);
    const auto& g = res.graphs[0];
    int params = 0;
    for (const auto& v : g.vertices)
        if (v.kind == VertexKind::Parameter) {
            ++params;
            CHECK(v.labels == make_label_set({"c", "c'"}));
        }
    CHECK(params == 1);
}

TEST_CASE("every enumerated graph is valid, nonredundant and unique") {
    auto res = enumerate_graphs(2, {3, 3}, 1, small_opts());
    std::set<std::string> canons;
    for (const auto& g : res.graphs) {
        CHECK(validate(g).empty());
        CHECK(is_nonredundant(g, small_opts().rules));
        CHECK(canons.insert(canonical_form(g)).second);
    }
    CHECK(res.graphs.size() > 100);  // the rank-1 budget space is sizable
}

TEST_CASE("budget monotonicity: smaller budgets embed into larger ones") {
    auto res1 = enumerate_graphs(2, {3, 3}, 1, small_opts());
    auto res2 = enumerate_graphs(2, {3, 3}, 2, small_opts());
    std::set<std::string> big;
    for (const auto& g : res2.graphs) big.insert(canonical_form(g));
    for (const auto& g : res1.graphs) CHECK(big.count(canonical_form(g)) == 1);
    CHECK(res2.graphs.size() > res1.graphs.size());
}

TEST_CASE("closure: the named 2D constructors appear in the enumeration") {
    EnumOptions opts = small_opts();
    auto res = enumerate_graphs(2, {3, 3}, 2, opts);
    std::set<std::string> canons;
    for (const auto& g : res.graphs) canons.insert(canonical_form(g));

    ConvGeometry geo;
    geo.spatial_in = {opts.spatial_extent, opts.spatial_extent};
    geo.filter = {3, 3};
    geo.padding = 1;
    geo.stride = 1;
    geo.channels_in = opts.channels_in;
    geo.channels_out = opts.channels_out;
    for (NamedKind k : named_kinds_2d_3x3()) {
        std::map<std::string, std::int64_t> ranks;
        for (const auto& arg : named_kind_rank_args(k)) ranks[arg] = opts.rank_dim;
        auto g = make_named(k, geo, ranks);
        INFO(named_kind_name(k));
        CHECK(canons.count(canonical_form(g)) == 1);
    }
}

TEST_CASE("multifactor filters enumerate their factorized chains") {
    EnumOptions opts = small_opts();
    opts.spatial_extent = 9;
    auto res = enumerate_graphs(2, {5, 5}, 1, opts);
    // both [5] and [3,3] chains are present on each axis
    bool saw_single = false, saw_chain = false;
    for (const auto& g : res.graphs) {
        int dummies = 0;
        for (const auto& v : g.vertices)
            if (is_dummy_kind(v.kind)) ++dummies;
        if (dummies == 2) saw_single = true;
        if (dummies == 4) saw_chain = true;
    }
    CHECK(saw_single);
    CHECK(saw_chain);
}

TEST_CASE("count summary aggregates deterministically") {
    auto res = enumerate_graphs(2, {3, 3}, 1, small_opts());
    auto rows = count_summary(res.graphs);
    std::uint64_t total = 0;
    for (const auto& r : rows) total += r.count;
    CHECK(total == res.graphs.size());
    CHECK(count_summary({}).empty());
    // grouped by rank-index count, the groups cover 0..1
    std::set<int> ks;
    for (const auto& r : rows) ks.insert(r.n_rank_indices);
    CHECK(ks == std::set<int>{0, 1});
}

TEST_CASE("candidate cap aborts with a budget error") {
    EnumOptions opts = small_opts();
    opts.candidate_cap = 10;
    CHECK_THROWS_AS(enumerate_graphs(2, {3, 3}, 2, opts), BudgetError);
}

TEST_CASE("parallel enumeration agrees with sequential") {
    EnumOptions seq = small_opts();
    EnumOptions par = small_opts();
    par.jobs = 2;
    auto a = enumerate_graphs(3, {3, 3, 3}, 1, seq);
    auto b = enumerate_graphs(3, {3, 3, 3}, 1, par);
    REQUIRE(a.graphs.size() == b.graphs.size());
    for (std::size_t q = 0; q < a.graphs.size(); ++q)
        CHECK(canonical_form(a.graphs[q]) == canonical_form(b.graphs[q]));
}

TEST_CASE("variant report covers the four rule interpretations") {
    auto report = enumeration_variant_report(2, {1, 1}, 0, small_opts());
    REQUIRE(report.size() == 4);
    // the strict interpretation leaves exactly the channel map
    bool strict_found = false;
    for (const auto& vc : report)
        if (vc.rules.subset_against_fixed && vc.rules.require_channel_on_parameter) {
            strict_found = true;
            CHECK(vc.total == 1);
        }
    CHECK(strict_found);
}
