#ifndef TNCONV_TESTS_ALS_HPP
#define TNCONV_TESTS_ALS_HPP

#include <cmath>
#include <vector>

#include "graph.hpp"
#include "rng.hpp"
#include "tensor.hpp"

namespace tnconv::testing {

// Kernel-space tooling for the reduction checks: the flattened kernel of a
// graph is the contraction of its parameter vertices onto the filter and
// channel labels; rank labels are summed.

inline std::vector<std::string> kernel_labels(const EinconvGraph& g) {
    std::vector<std::string> out;
    for (const auto& l : g.inner)
        if (is_filter_label(l.name) || l.name == "c") out.push_back(l.name);
    out.push_back("c'");
    return out;
}

inline std::vector<DenseTensor> random_factors(const EinconvGraph& g, Rng& rng) {
    std::vector<DenseTensor> out;
    for (const auto& v : g.vertices) {
        if (v.kind != VertexKind::Parameter) continue;
        std::vector<IndexLabel> ls;
        for (const auto& name : v.labels) ls.push_back({name, g.dim_of(name)});
        DenseTensor t(ls);
        for (auto& x : t.data()) x = rng.normal();
        out.push_back(std::move(t));
    }
    return out;
}

// Brute-force evaluation of the flattened kernel given factor tensors.
inline DenseTensor flatten_kernel(const EinconvGraph& g,
                                  const std::vector<DenseTensor>& factors) {
    const auto out_names = kernel_labels(g);
    std::vector<IndexLabel> out_labels;
    for (const auto& n : out_names) out_labels.push_back({n, g.dim_of(n)});
    DenseTensor out(out_labels);

    std::vector<std::string> all;
    for (const auto& t : factors)
        for (const auto& l : t.labels())
            if (std::find(all.begin(), all.end(), l.name) == all.end()) all.push_back(l.name);
    for (const auto& n : out_names)
        if (std::find(all.begin(), all.end(), n) == all.end()) all.push_back(n);

    std::vector<std::int64_t> dims;
    for (const auto& n : all) dims.push_back(g.dim_of(n));
    std::vector<std::int64_t> idx(all.size(), 0);
    for (;;) {
        double prod = 1.0;
        for (const auto& t : factors) {
            std::vector<std::int64_t> coord;
            for (const auto& l : t.labels())
                coord.push_back(idx[std::find(all.begin(), all.end(), l.name) - all.begin()]);
            prod *= t.at(coord);
        }
        std::vector<std::int64_t> ocoord;
        for (const auto& n : out_names)
            ocoord.push_back(idx[std::find(all.begin(), all.end(), n) - all.begin()]);
        out.at(ocoord) += prod;
        int t = static_cast<int>(all.size()) - 1;
        while (t >= 0 && ++idx[t] == dims[t]) idx[t--] = 0;
        if (t < 0) break;
    }
    return out;
}

inline DenseTensor sample_kernel(const EinconvGraph& g, std::uint64_t seed) {
    Rng rng(seed);
    return flatten_kernel(g, random_factors(g, rng));
}

namespace detail {

// solves (A^T A + ridge) x = A^T b in place; A is rows x cols, row major
inline std::vector<double> least_squares(const std::vector<double>& a, std::int64_t rows,
                                         std::int64_t cols, const std::vector<double>& b) {
    std::vector<double> ata(cols * cols, 0.0), atb(cols, 0.0);
    for (std::int64_t r = 0; r < rows; ++r) {
        for (std::int64_t i = 0; i < cols; ++i) {
            const double ai = a[r * cols + i];
            if (ai == 0.0) continue;
            atb[i] += ai * b[r];
            for (std::int64_t j = 0; j < cols; ++j) ata[i * cols + j] += ai * a[r * cols + j];
        }
    }
    for (std::int64_t i = 0; i < cols; ++i) ata[i * cols + i] += 1e-12;
    // gaussian elimination with partial pivoting
    std::vector<double> x = atb;
    for (std::int64_t p = 0; p < cols; ++p) {
        std::int64_t piv = p;
        for (std::int64_t r = p + 1; r < cols; ++r)
            if (std::fabs(ata[r * cols + p]) > std::fabs(ata[piv * cols + p])) piv = r;
        if (piv != p) {
            for (std::int64_t cidx = 0; cidx < cols; ++cidx)
                std::swap(ata[p * cols + cidx], ata[piv * cols + cidx]);
            std::swap(x[p], x[piv]);
        }
        const double d = ata[p * cols + p];
        for (std::int64_t r = p + 1; r < cols; ++r) {
            const double f = ata[r * cols + p] / d;
            if (f == 0.0) continue;
            for (std::int64_t cidx = p; cidx < cols; ++cidx)
                ata[r * cols + cidx] -= f * ata[p * cols + cidx];
            x[r] -= f * x[p];
        }
    }
    for (std::int64_t p = cols - 1; p >= 0; --p) {
        for (std::int64_t cidx = p + 1; cidx < cols; ++cidx)
            x[p] -= ata[p * cols + cidx] * x[cidx];
        x[p] /= ata[p * cols + p];
    }
    return x;
}

}  // namespace detail

// Relative fitting residual of `target` in the graph's kernel space via
// alternating least squares.
inline double als_fit_residual(const EinconvGraph& g, const DenseTensor& target,
                               int iters = 50, int restarts = 5, std::uint64_t seed = 7) {
    const auto out_names = kernel_labels(g);
    DenseTensor tgt = target.permuted(out_names);
    // the representable set is a cone: normalizing the target keeps the
    // fit well-scaled for the ridge regardless of how small it was drawn
    {
        double s = 0;
        for (double v : tgt.data()) s += v * v;
        const double norm = std::sqrt(std::max(s, 1e-300));
        for (auto& v : tgt.data()) v /= norm;
    }
    const double tgt_norm = 1.0;

    double best = 1e300;
    for (int restart = 0; restart < restarts; ++restart) {
        Rng rng(seed + 1000003ull * restart);
        auto factors = random_factors(g, rng);
        for (int iter = 0; iter < iters; ++iter) {
            for (std::size_t m = 0; m < factors.size(); ++m) {
                // design matrix: rows = kernel entries, cols = factor entries
                const std::int64_t rows = tgt.size(), cols = factors[m].size();
                std::vector<double> design(rows * cols, 0.0);
                auto others = factors;
                DenseTensor unit(factors[m].labels());
                for (std::int64_t col = 0; col < cols; ++col) {
                    for (auto& v : unit.data()) v = 0;
                    unit.data()[col] = 1.0;
                    others[m] = unit;
                    DenseTensor kcol = flatten_kernel(g, others);
                    for (std::int64_t row = 0; row < rows; ++row)
                        design[row * cols + col] = kcol.data()[row];
                }
                std::vector<double> rhs(tgt.data().begin(), tgt.data().end());
                auto sol = detail::least_squares(design, rows, cols, rhs);
                for (std::int64_t col = 0; col < cols; ++col)
                    factors[m].data()[col] = sol[col];
            }
            DenseTensor fit = flatten_kernel(g, factors);
            double err = 0;
            for (std::int64_t q = 0; q < fit.size(); ++q) {
                const double d = fit.data()[q] - tgt.data()[q];
                err += d * d;
            }
            const double rel = std::sqrt(err) / tgt_norm;
            best = std::min(best, rel);
            if (best < 1e-8) return best;
        }
    }
    return best;
}

}  // namespace tnconv::testing

#endif
