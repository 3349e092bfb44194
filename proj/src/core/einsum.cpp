#include "einsum.hpp"

#include <algorithm>
#include <set>

namespace tnconv {

std::vector<IndexLabel> DummySpec::labels() const {
    std::vector<IndexLabel> out = {{in_label, in_dim}, {out_label, out_dim}};
    if (!filter_label.empty()) out.push_back({filter_label, filter_dim});
    return out;
}

DenseTensor DummySpec::to_dense() const {
    DenseTensor t(labels());
    const std::int64_t nf = filter_label.empty() ? 1 : filter_dim;
    for (std::int64_t o = 0; o < out_dim; ++o) {
        for (std::int64_t f = 0; f < nf; ++f) {
            const std::int64_t in = o * stride + f - pad;
            if (in < 0 || in >= in_dim) continue;
            const std::int64_t off =
                filter_label.empty() ? in * out_dim + o : (in * out_dim + o) * filter_dim + f;
            t.data()[off] = 1.0;
        }
    }
    return t;
}

std::vector<IndexLabel> Operand::labels() const {
    return is_dummy() ? dummy().labels() : tensor().labels();
}

LabelSet Operand::label_set() const {
    std::vector<std::string> names;
    for (const auto& l : labels()) names.push_back(l.name);
    return make_label_set(std::move(names));
}

std::int64_t ContractionExpr::dim_of(const std::string& name) const {
    auto it = dims.find(name);
    if (it == dims.end()) throw EinsumError("expression has no dim for label " + name);
    return it->second;
}

void ContractionExpr::check() const {
    if (operands.empty()) throw EinsumError("expression needs at least one operand");
    if (!is_dummy.empty() && is_dummy.size() != operands.size())
        throw EinsumError("is_dummy length mismatch");
    std::set<std::string> all;
    for (const auto& op : operands) {
        for (const auto& l : op) {
            if (dim_of(l) < 1) throw EinsumError("bad dim for " + l);
            all.insert(l);
        }
    }
    std::set<std::string> outset;
    for (const auto& l : output) {
        if (!outset.insert(l).second) throw EinsumError("output repeats label " + l);
        if (!all.count(l)) throw EinsumError("output label " + l + " absent from all operands");
    }
}

ContractionExpr ContractionExpr::from_operands(const std::vector<Operand>& ops,
                                               std::vector<std::string> output) {
    ContractionExpr expr;
    expr.output = std::move(output);
    for (const auto& op : ops) {
        std::set<std::string> seen;
        for (const auto& l : op.labels()) {
            if (!seen.insert(l.name).second)
                throw EinsumError("operand repeats label " + l.name + " (self loop)");
            auto it = expr.dims.find(l.name);
            if (it == expr.dims.end())
                expr.dims[l.name] = l.dim;
            else if (it->second != l.dim)
                throw EinsumError("dim mismatch on shared label " + l.name);
        }
        expr.operands.push_back(op.label_set());
        expr.is_dummy.push_back(op.is_dummy());
    }
    expr.check();
    return expr;
}

namespace {

struct Slot {
    LabelSet labels;
    bool dummy = false;
    bool alive = true;
};

std::int64_t set_size(const ContractionExpr& expr, const LabelSet& s) {
    std::int64_t n = 1;
    for (const auto& l : s) n *= expr.dim_of(l);
    return n;
}

// labels of `candidate` that must survive a step combining slots a and b
LabelSet needed_labels(const ContractionExpr& expr, const std::vector<Slot>& slots,
                       const LabelSet& candidate, int a, int b) {
    LabelSet out_set = make_label_set(expr.output);
    std::vector<std::string> keep;
    for (const auto& l : candidate) {
        bool needed = set_contains(out_set, l);
        for (std::size_t s = 0; s < slots.size() && !needed; ++s)
            if (slots[s].alive && static_cast<int>(s) != a && static_cast<int>(s) != b &&
                set_contains(slots[s].labels, l))
                needed = true;
        if (needed) keep.push_back(l);
    }
    return make_label_set(std::move(keep));
}

ContractionPlan plan_impl(const ContractionExpr& expr, int chain_slot) {
    expr.check();
    ContractionPlan plan;
    std::vector<Slot> slots;
    for (std::size_t o = 0; o < expr.operands.size(); ++o)
        slots.push_back({expr.operands[o],
                         !expr.is_dummy.empty() && expr.is_dummy[o], true});

    int alive = static_cast<int>(slots.size());
    int chain = chain_slot;
    while (alive > 1) {
        std::int64_t best_size = -1;
        int best_a = -1, best_b = -1;
        LabelSet best_result;
        for (int a = 0; a < static_cast<int>(slots.size()); ++a) {
            if (!slots[a].alive) continue;
            if (chain >= 0 && a != chain) continue;
            for (int b = (chain >= 0 ? 0 : a + 1); b < static_cast<int>(slots.size()); ++b) {
                if (!slots[b].alive || b == a) continue;
                const LabelSet uni = set_union(slots[a].labels, slots[b].labels);
                const LabelSet result = needed_labels(expr, slots, uni, a, b);
                const std::int64_t size = set_size(expr, result);
                if (best_size < 0 || size < best_size) {
                    best_size = size;
                    best_a = a;
                    best_b = b;
                    best_result = result;
                }
            }
        }
        const bool free_step = slots[best_a].dummy || slots[best_b].dummy;
        if (!free_step) {
            const LabelSet uni = set_union(slots[best_a].labels, slots[best_b].labels);
            plan.est_flops += 2ull * static_cast<std::uint64_t>(set_size(expr, uni));
        }
        plan.steps.push_back({best_a, best_b, best_result});
        slots[best_a].alive = false;
        slots[best_b].alive = false;
        slots.push_back({best_result, false, true});
        if (chain >= 0) chain = static_cast<int>(slots.size()) - 1;
        --alive;
    }

    // trailing reduce when the surviving slot still carries extra labels
    int last = -1;
    for (int s = 0; s < static_cast<int>(slots.size()); ++s)
        if (slots[s].alive) last = s;
    const LabelSet out_set = make_label_set(expr.output);
    if (slots[last].labels != out_set) {
        if (!slots[last].dummy)
            plan.est_flops += 2ull * static_cast<std::uint64_t>(set_size(expr, slots[last].labels));
        plan.steps.push_back({last, -1, out_set});
    }
    return plan;
}

}  // namespace

ContractionPlan plan_greedy(const ContractionExpr& expr) { return plan_impl(expr, -1); }

ContractionPlan plan_chain(const ContractionExpr& expr, int chain_slot) {
    if (chain_slot < 0 || chain_slot >= static_cast<int>(expr.operands.size()))
        throw EinsumError("chain slot out of range");
    return plan_impl(expr, chain_slot);
}

std::uint64_t estimate_flops(const ContractionExpr& expr, const ContractionPlan& plan) {
    expr.check();
    std::vector<Slot> slots;
    for (std::size_t o = 0; o < expr.operands.size(); ++o)
        slots.push_back({expr.operands[o],
                         !expr.is_dummy.empty() && expr.is_dummy[o], true});
    std::uint64_t flops = 0;
    for (const auto& step : plan.steps) {
        if (step.a < 0 || step.a >= static_cast<int>(slots.size()) || !slots[step.a].alive)
            throw EinsumError("plan step references a dead slot");
        if (step.b < 0) {
            if (!slots[step.a].dummy)
                flops += 2ull * static_cast<std::uint64_t>(set_size(expr, slots[step.a].labels));
            slots[step.a].alive = false;
            slots.push_back({step.result, false, true});
            continue;
        }
        if (step.b >= static_cast<int>(slots.size()) || !slots[step.b].alive)
            throw EinsumError("plan step references a dead slot");
        if (!(slots[step.a].dummy || slots[step.b].dummy)) {
            const LabelSet uni = set_union(slots[step.a].labels, slots[step.b].labels);
            flops += 2ull * static_cast<std::uint64_t>(set_size(expr, uni));
        }
        slots[step.a].alive = false;
        slots[step.b].alive = false;
        slots.push_back({step.result, false, true});
    }
    return flops;
}

namespace {

// contiguous [batch, M, K] x [batch, K, N] -> [batch, M, N]
void batched_gemm(const double* a, const double* b, double* c, std::int64_t nbatch,
                  std::int64_t m, std::int64_t k, std::int64_t n) {
    for (std::int64_t bt = 0; bt < nbatch; ++bt) {
        const double* pa = a + bt * m * k;
        const double* pb = b + bt * k * n;
        double* pc = c + bt * m * n;
        for (std::int64_t i = 0; i < m; ++i) {
            double* crow = pc + i * n;
            for (std::int64_t kk = 0; kk < k; ++kk) {
                const double av = pa[i * k + kk];
                if (av == 0.0) continue;
                const double* brow = pb + kk * n;
                for (std::int64_t j = 0; j < n; ++j) crow[j] += av * brow[j];
            }
        }
    }
}

DenseTensor dense_pair(const ContractionExpr& expr, const DenseTensor& a0,
                       const DenseTensor& b0, const LabelSet& keep) {
    const LabelSet la0 = a0.label_set(), lb0 = b0.label_set();
    DenseTensor a = a0.summed_over(set_difference(set_difference(la0, keep), lb0));
    DenseTensor b = b0.summed_over(set_difference(set_difference(lb0, keep), la0));
    const LabelSet la = a.label_set(), lb = b.label_set();

    const LabelSet shared = set_intersect(la, lb);
    const LabelSet batch = set_intersect(shared, keep);
    const LabelSet sum = set_difference(shared, keep);
    const LabelSet mkeep = set_difference(la, shared);
    const LabelSet nkeep = set_difference(lb, shared);

    std::vector<std::string> a_order(batch.begin(), batch.end());
    a_order.insert(a_order.end(), mkeep.begin(), mkeep.end());
    a_order.insert(a_order.end(), sum.begin(), sum.end());
    std::vector<std::string> b_order(batch.begin(), batch.end());
    b_order.insert(b_order.end(), sum.begin(), sum.end());
    b_order.insert(b_order.end(), nkeep.begin(), nkeep.end());

    DenseTensor ap = a.permuted(a_order);
    DenseTensor bp = b.permuted(b_order);

    auto size_of = [&expr](const LabelSet& s) { return set_size(expr, s); };
    const std::int64_t nb = size_of(batch), m = size_of(mkeep), k = size_of(sum),
                       n = size_of(nkeep);

    std::vector<IndexLabel> out_labels;
    for (const auto& l : batch) out_labels.push_back({l, expr.dim_of(l)});
    for (const auto& l : mkeep) out_labels.push_back({l, expr.dim_of(l)});
    for (const auto& l : nkeep) out_labels.push_back({l, expr.dim_of(l)});
    DenseTensor out(out_labels);
    batched_gemm(ap.data().data(), bp.data().data(), out.data().data(), nb, m, k, n);
    return out;
}

DenseTensor dummy_pair(const ContractionExpr& expr, const DenseTensor& a0, const DummySpec& d,
                       const LabelSet& keep) {
    LabelSet dlabels;
    {
        std::vector<std::string> names = {d.in_label, d.out_label};
        if (!d.filter_label.empty()) names.push_back(d.filter_label);
        dlabels = make_label_set(std::move(names));
    }
    const LabelSet la0 = a0.label_set();
    DenseTensor a = a0.summed_over(set_difference(set_difference(la0, keep), dlabels));
    const LabelSet la = a.label_set();

    // dummy labels that are summed in this step, and the one we solve for
    const LabelSet summed_d = set_difference(dlabels, keep);
    std::string solved;
    if (set_contains(summed_d, d.in_label))
        solved = d.in_label;
    else if (!d.filter_label.empty() && set_contains(summed_d, d.filter_label))
        solved = d.filter_label;
    else if (set_contains(summed_d, d.out_label))
        solved = d.out_label;

    // iteration space: result labels plus free summed dummy labels
    std::vector<std::string> iter = keep;
    for (const auto& l : summed_d)
        if (l != solved) iter.push_back(l);

    std::vector<IndexLabel> out_labels;
    for (const auto& l : keep) out_labels.push_back({l, expr.dim_of(l)});
    DenseTensor out(out_labels);

    const int ni = static_cast<int>(iter.size());
    std::vector<std::int64_t> dims(ni);
    for (int t = 0; t < ni; ++t) dims[t] = expr.dim_of(iter[t]);

    // strides of the output in iteration coordinates (0 for free summed)
    std::vector<std::int64_t> out_strides(ni, 0);
    {
        std::vector<std::int64_t> s(keep.size(), 1);
        for (int t = static_cast<int>(keep.size()) - 2; t >= 0; --t)
            s[t] = s[t + 1] * expr.dim_of(keep[t + 1]);
        for (std::size_t t = 0; t < keep.size(); ++t) out_strides[t] = s[t];
    }
    // strides of A in iteration coordinates; solved label handled separately
    std::vector<std::int64_t> a_strides(ni, 0);
    std::int64_t a_solved_stride = 0;
    {
        const auto& als = a.labels();
        std::vector<std::int64_t> s(als.size(), 1);
        for (int t = static_cast<int>(als.size()) - 2; t >= 0; --t)
            s[t] = s[t + 1] * als[t + 1].dim;
        for (std::size_t t = 0; t < als.size(); ++t) {
            bool found = false;
            for (int u = 0; u < ni; ++u)
                if (iter[u] == als[t].name) {
                    a_strides[u] = s[t];
                    found = true;
                }
            if (!found) {
                if (als[t].name == solved)
                    a_solved_stride = s[t];
                else
                    throw EinsumError("dummy contraction lost label " + als[t].name);
            }
        }
    }

    // positions of the dummy's labels in iteration coordinates (-1 = solved)
    auto iter_pos = [&iter](const std::string& name) {
        for (std::size_t t = 0; t < iter.size(); ++t)
            if (iter[t] == name) return static_cast<int>(t);
        return -1;
    };
    const int pos_in = iter_pos(d.in_label);
    const int pos_out = iter_pos(d.out_label);
    const int pos_filt = d.filter_label.empty() ? -2 : iter_pos(d.filter_label);

    std::vector<std::int64_t> idx(ni, 0);
    std::int64_t total = 1;
    for (int t = 0; t < ni; ++t) total *= dims[t];

    const auto adata = a.data();
    auto odata = out.data();
    for (std::int64_t it = 0; it < total; ++it) {
        // coordinates of the dummy relation
        std::int64_t vin = pos_in >= 0 ? idx[pos_in] : -1;
        std::int64_t vout = pos_out >= 0 ? idx[pos_out] : -1;
        std::int64_t vfilt = pos_filt >= 0 ? idx[pos_filt] : (pos_filt == -2 ? 0 : -1);

        bool valid = true;
        std::int64_t solved_value = 0;
        if (solved == d.in_label) {
            vin = vout * d.stride + vfilt - d.pad;
            valid = vin >= 0 && vin < d.in_dim;
            solved_value = vin;
        } else if (!d.filter_label.empty() && solved == d.filter_label) {
            vfilt = vin - vout * d.stride + d.pad;
            valid = vfilt >= 0 && vfilt < d.filter_dim;
            solved_value = vfilt;
        } else if (solved == d.out_label) {
            const std::int64_t num = vin + d.pad - vfilt;
            valid = num % d.stride == 0;
            vout = num / d.stride;
            valid = valid && vout >= 0 && vout < d.out_dim;
            solved_value = vout;
        } else {
            valid = vin == vout * d.stride + vfilt - d.pad;
        }

        if (valid) {
            std::int64_t a_off = a_solved_stride * solved_value;
            std::int64_t o_off = 0;
            for (int t = 0; t < ni; ++t) {
                a_off += a_strides[t] * idx[t];
                o_off += out_strides[t] * idx[t];
            }
            odata[o_off] += adata[a_off];
        }

        for (int t = ni - 1; t >= 0; --t) {
            if (++idx[t] < dims[t]) break;
            idx[t] = 0;
        }
    }
    return out;
}

DenseTensor materialize(const Operand& op) {
    return op.is_dummy() ? op.dummy().to_dense() : op.tensor();
}

DenseTensor pair_contract(const ContractionExpr& expr, const Operand& a, const Operand& b,
                          const LabelSet& keep) {
    if (a.is_dummy() && b.is_dummy())
        return dummy_pair(expr, a.dummy().to_dense(), b.dummy(), keep);
    if (b.is_dummy()) return dummy_pair(expr, a.tensor(), b.dummy(), keep);
    if (a.is_dummy()) return dummy_pair(expr, b.tensor(), a.dummy(), keep);
    return dense_pair(expr, a.tensor(), b.tensor(), keep);
}

}  // namespace

DenseTensor contract(const ContractionExpr& expr, const std::vector<Operand>& operands,
                     const ContractionPlan& plan) {
    expr.check();
    if (operands.size() != expr.operands.size())
        throw EinsumError("operand count does not match expression");
    for (std::size_t o = 0; o < operands.size(); ++o) {
        if (operands[o].label_set() != expr.operands[o])
            throw EinsumError("operand " + std::to_string(o) + " labels do not match expression");
        for (const auto& l : operands[o].labels())
            if (l.dim != expr.dim_of(l.name))
                throw EinsumError("operand " + std::to_string(o) + " dim mismatch on " + l.name);
    }

    std::vector<Slot> slots;
    std::vector<Operand> values;
    for (std::size_t o = 0; o < operands.size(); ++o) {
        slots.push_back({expr.operands[o], operands[o].is_dummy(), true});
        values.push_back(operands[o]);
    }

    for (const auto& step : plan.steps) {
        auto check_slot = [&slots](int s) {
            if (s < 0 || s >= static_cast<int>(slots.size()) || !slots[s].alive)
                throw EinsumError("plan references a dead slot");
        };
        check_slot(step.a);
        if (step.b < 0) {
            if (!is_subset(step.result, slots[step.a].labels))
                throw EinsumError("reduce step introduces labels");
            const LabelSet needed =
                needed_labels(expr, slots, slots[step.a].labels, step.a, -1);
            if (!is_subset(needed, step.result))
                throw EinsumError("reduce step drops a needed label");
            DenseTensor t = materialize(values[step.a]);
            t = t.summed_over(set_difference(slots[step.a].labels, step.result));
            slots[step.a].alive = false;
            slots.push_back({step.result, false, true});
            values.push_back(Operand(std::move(t)));
            continue;
        }
        check_slot(step.b);
        const LabelSet uni = set_union(slots[step.a].labels, slots[step.b].labels);
        if (!is_subset(step.result, uni)) throw EinsumError("step result introduces labels");
        const LabelSet needed = needed_labels(expr, slots, uni, step.a, step.b);
        if (!is_subset(needed, step.result)) throw EinsumError("step drops a needed label");

        DenseTensor t = pair_contract(expr, values[step.a], values[step.b], step.result);
        slots[step.a].alive = false;
        slots[step.b].alive = false;
        slots.push_back({step.result, false, true});
        values.push_back(Operand(std::move(t)));
    }

    int last = -1;
    for (int s = 0; s < static_cast<int>(slots.size()); ++s)
        if (slots[s].alive) {
            if (last >= 0) throw EinsumError("plan leaves more than one operand");
            last = s;
        }
    DenseTensor t = materialize(values[last]);
    const LabelSet out_set = make_label_set(expr.output);
    if (slots[last].labels != out_set) {
        if (!is_subset(out_set, slots[last].labels))
            throw EinsumError("plan does not produce the output labels");
        t = t.summed_over(set_difference(slots[last].labels, out_set));
    }
    return t.permuted(expr.output);
}

DenseTensor contract(const ContractionExpr& expr, const std::vector<Operand>& operands) {
    return contract(expr, operands, plan_greedy(expr));
}

std::vector<DenseTensor> grad_contract(const ContractionExpr& expr,
                                       const std::vector<Operand>& operands,
                                       const DenseTensor& upstream) {
    expr.check();
    if (upstream.label_set() != make_label_set(expr.output))
        throw EinsumError("upstream labels must match the expression output");

    std::vector<DenseTensor> grads;
    for (std::size_t m = 0; m < operands.size(); ++m) {
        if (operands[m].is_dummy()) {
            grads.push_back(DenseTensor{});
            continue;
        }
        std::vector<Operand> rest;
        ContractionExpr sub;
        sub.dims = expr.dims;
        for (std::size_t o = 0; o < operands.size(); ++o) {
            if (o == m) continue;
            rest.push_back(operands[o]);
            sub.operands.push_back(expr.operands[o]);
            sub.is_dummy.push_back(!expr.is_dummy.empty() && expr.is_dummy[o]);
        }
        rest.push_back(Operand(upstream));
        sub.operands.push_back(upstream.label_set());
        sub.is_dummy.push_back(false);

        // reachable part of the operand's labels; the rest broadcasts
        LabelSet reach_all;
        for (const auto& s : sub.operands) reach_all = set_union(reach_all, s);
        std::vector<std::string> out;
        for (const auto& l : operands[m].labels())
            if (set_contains(reach_all, l.name)) out.push_back(l.name);
        sub.output = out;
        sub.check();

        DenseTensor g = contract(sub, rest);
        grads.push_back(g.broadcast_to(operands[m].labels()));
    }
    return grads;
}

}  // namespace tnconv
