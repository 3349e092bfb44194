#ifndef TNCONV_CORE_ENUMERATION_HPP
#define TNCONV_CORE_ENUMERATION_HPP

#include <cstdint>
#include <functional>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "graph.hpp"
#include "reduction.hpp"

namespace tnconv {

class BudgetError : public std::runtime_error {
public:
    BudgetError(const std::string& msg, std::uint64_t partial)
        : std::runtime_error(msg), partial_count(partial) {}
    std::uint64_t partial_count;
};

struct EnumOptions {
    std::int64_t rank_dim = 2;           // uniform inner dimension of rank indices
    std::uint64_t candidate_cap = 10'000'000;
    std::int64_t spatial_extent = 32;    // reference geometry, per axis
    std::int64_t channels_in = 16;
    std::int64_t channels_out = 16;
    std::int64_t stride = 1;
    std::int64_t padding = -1;           // -1: (effective filter - 1) / 2
    RuleConfig rules;
    int jobs = 1;
};

struct EnumerationResult {
    std::vector<EinconvGraph> graphs;    // sorted by canonical form
    std::uint64_t candidates = 0;        // raw candidates inspected
};

// All nonredundant decompositions for the given dimensionality, per-axis
// effective filter sizes and rank-index budget. Deduplicated by canonical
// form; every graph carries the reference geometry of `opts`.
EnumerationResult enumerate_graphs(int spatial_dims, const std::vector<int>& filter,
                                   int max_rank_indices, const EnumOptions& opts = {});

// Streams the antichain families over the power set of `labels` that cover
// every label (the subset-rule-feasible vertex candidates). The callback may
// return false to stop. Throws BudgetError past `cap` yields.
void enumerate_vertex_sets(const std::vector<std::string>& labels,
                           const std::function<bool(const std::vector<LabelSet>&)>& yield,
                           std::uint64_t cap = 10'000'000);

struct SummaryRow {
    int n_vertices = 0;
    int n_rank_indices = 0;
    std::int64_t params = 0;
    std::uint64_t count = 0;
};

// Deterministic aggregation by (#vertices, #rank indices, parameter count).
std::vector<SummaryRow> count_summary(const std::vector<EinconvGraph>& graphs);

struct VariantCount {
    RuleConfig rules;
    std::uint64_t total = 0;
    std::map<int, std::uint64_t> by_rank_indices;
};

// Re-runs the enumeration under every redundancy-rule interpretation; used to
// report count sensitivity when a reference tally is not reproduced.
std::vector<VariantCount> enumeration_variant_report(int spatial_dims,
                                                     const std::vector<int>& filter,
                                                     int max_rank_indices,
                                                     const EnumOptions& opts = {});

}  // namespace tnconv

#endif
