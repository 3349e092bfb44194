#ifndef TNCONV_CORE_REDUCTION_HPP
#define TNCONV_CORE_REDUCTION_HPP

#include <cstdint>
#include <string>
#include <vector>

#include "graph.hpp"

namespace tnconv {

// Interpretation knobs for the redundancy calculus. The defaults are the
// variant whose enumeration counts match the reference tallies; the variant
// report in the enumeration module sweeps the alternatives.
struct RuleConfig {
    // A parameter vertex whose labels are a subset of the input or a dummy
    // vertex counts as redundant (a structural admissibility rule used by
    // is_nonredundant and enumeration; the subset rewrite itself only ever
    // removes a parameter vertex absorbed into another parameter vertex).
    bool subset_against_fixed = true;
    // The input channel must reach at least one parameter vertex.
    bool require_channel_on_parameter = true;
};

enum class ReductionRule { Rank1, SubsetVertex, ParallelEdge };
const char* reduction_rule_name(ReductionRule r);

struct ReductionStep {
    ReductionRule rule;
    std::string detail;  // affected labels/vertices, human readable
};

struct ReductionTrace {
    std::vector<ReductionStep> steps;
    EinconvGraph result;
};

// Single applications (first applicable target in deterministic order);
// return the graph unchanged when nothing applies. `step` reports what fired.
EinconvGraph reduce_rank1(const EinconvGraph& g, ReductionStep* step = nullptr);
EinconvGraph reduce_subset_vertex(const EinconvGraph& g, ReductionStep* step = nullptr);
EinconvGraph merge_parallel_edges(const EinconvGraph& g, ReductionStep* step = nullptr);

// Every distinct single-step successor (all rules, all targets). Used by the
// confluence checks.
std::vector<std::pair<ReductionStep, EinconvGraph>> applicable_reductions(
    const EinconvGraph& g);

// Fixpoint loop: rank1, then parallel_edge, then subset_vertex, repeated.
ReductionTrace reduce_to_fixpoint(const EinconvGraph& g);

// No rewrite applies, the admissibility rules of `cfg` hold, and validate
// passes.
bool is_nonredundant(const EinconvGraph& g, const RuleConfig& cfg = {});
// As above but reports the reasons.
std::vector<std::string> redundancy_reasons(const EinconvGraph& g,
                                            const RuleConfig& cfg = {});

// Number of integer partitions of n.
std::uint64_t partition_count(int n);

// All multisets of odd factor sizes >= 3 composing to the given odd filter
// size (1 + sum (I_m - 1) = filter_dim), including the single-factor case.
// filter_dim == 1 yields {{1}}. Sorted, each multiset in decreasing order.
std::vector<std::vector<int>> filter_factorizations(int filter_dim);

}  // namespace tnconv

#endif
