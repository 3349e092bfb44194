#ifndef TNCONV_CORE_EINSUM_HPP
#define TNCONV_CORE_EINSUM_HPP

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "tensor.hpp"

namespace tnconv {

// Fixed binary tensor coupling one spatial axis of a convolution:
// value(in, out, filt) = 1 iff in == out * stride + filt - pad (0-based).
// filter_label may be empty (a 1x1 coupling; filt pinned to 0).
struct DummySpec {
    std::string in_label, out_label, filter_label;
    std::int64_t in_dim = 1, out_dim = 1, filter_dim = 1;
    std::int64_t stride = 1, pad = 0;

    std::vector<IndexLabel> labels() const;
    DenseTensor to_dense() const;
};

// Contraction operand: a dense tensor or a dummy coupling.
class Operand {
public:
    Operand(DenseTensor t) : value_(std::move(t)) {}
    Operand(DummySpec d) : value_(std::move(d)) {}

    bool is_dummy() const { return std::holds_alternative<DummySpec>(value_); }
    const DenseTensor& tensor() const { return std::get<DenseTensor>(value_); }
    const DummySpec& dummy() const { return std::get<DummySpec>(value_); }
    std::vector<IndexLabel> labels() const;
    LabelSet label_set() const;

private:
    std::variant<DenseTensor, DummySpec> value_;
};

// Symbolic contraction: operand label sets, output labels, dims. A label
// shared by several operands and absent from the output is summed once
// across all of them (hyperedge semantics).
struct ContractionExpr {
    std::vector<LabelSet> operands;
    std::vector<bool> is_dummy;  // empty means all dense
    std::vector<std::string> output;  // ordered
    std::map<std::string, std::int64_t> dims;

    void check() const;  // throws EinsumError on malformed expressions
    std::int64_t dim_of(const std::string& name) const;
    static ContractionExpr from_operands(const std::vector<Operand>& ops,
                                         std::vector<std::string> output);
};

// One pairwise contraction (b >= 0) or a trailing reduce (b == -1).
struct PlanStep {
    int a = -1, b = -1;
    LabelSet result;
};

struct ContractionPlan {
    std::vector<PlanStep> steps;
    std::uint64_t est_flops = 0;
};

// Greedy pairwise planner: smallest intermediate first, ties by operand
// index. Any valid expression admits a plan.
ContractionPlan plan_greedy(const ContractionExpr& expr);

// Chained planner: every step contracts the running slot (initially
// `chain_slot`) with one further operand, chosen greedily.
ContractionPlan plan_chain(const ContractionExpr& expr, int chain_slot);

// Recosts a plan: 2 * prod(dims of the union of step labels) per dense
// pairwise step; steps touching a binary dummy are index moves and cost 0.
std::uint64_t estimate_flops(const ContractionExpr& expr, const ContractionPlan& plan);

DenseTensor contract(const ContractionExpr& expr, const std::vector<Operand>& operands,
                     const ContractionPlan& plan);
DenseTensor contract(const ContractionExpr& expr, const std::vector<Operand>& operands);

// d<output, upstream>/d(operand m) for every operand; dummy operands get an
// empty tensor. Each gradient is itself a contraction of the upstream with
// the remaining operands.
std::vector<DenseTensor> grad_contract(const ContractionExpr& expr,
                                       const std::vector<Operand>& operands,
                                       const DenseTensor& upstream);

}  // namespace tnconv

#endif
