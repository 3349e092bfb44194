#include "tensor.hpp"

#include <algorithm>
#include <cmath>

namespace tnconv {

namespace {

std::int64_t product_of_dims(const std::vector<IndexLabel>& labels) {
    std::int64_t n = 1;
    for (const auto& l : labels) {
        if (l.dim < 1) throw EinsumError("label " + l.name + " has dim < 1");
        n *= l.dim;
    }
    return n;
}

}  // namespace

DenseTensor::DenseTensor(std::vector<IndexLabel> labels)
    : labels_(std::move(labels)), data_(product_of_dims(labels_), 0.0) {}

DenseTensor::DenseTensor(std::vector<IndexLabel> labels, std::vector<double> data)
    : labels_(std::move(labels)), data_(std::move(data)) {
    if (static_cast<std::int64_t>(data_.size()) != product_of_dims(labels_))
        throw EinsumError("data length does not match label dims");
}

DenseTensor DenseTensor::scalar(double value) {
    DenseTensor t;
    t.data_ = {value};
    return t;
}

LabelSet DenseTensor::label_set() const {
    std::vector<std::string> names;
    for (const auto& l : labels_) names.push_back(l.name);
    return make_label_set(std::move(names));
}

int DenseTensor::axis_of(const std::string& name) const {
    for (std::size_t a = 0; a < labels_.size(); ++a)
        if (labels_[a].name == name) return static_cast<int>(a);
    return -1;
}

std::int64_t DenseTensor::dim_of(const std::string& name) const {
    const int a = axis_of(name);
    if (a < 0) throw EinsumError("tensor has no label " + name);
    return labels_[a].dim;
}

std::vector<std::int64_t> DenseTensor::strides() const {
    std::vector<std::int64_t> s(labels_.size(), 1);
    for (int a = static_cast<int>(labels_.size()) - 2; a >= 0; --a)
        s[a] = s[a + 1] * labels_[a + 1].dim;
    return s;
}

double DenseTensor::at(const std::vector<std::int64_t>& idx) const {
    return const_cast<DenseTensor*>(this)->at(idx);
}

double& DenseTensor::at(const std::vector<std::int64_t>& idx) {
    if (idx.size() != labels_.size()) throw EinsumError("index rank mismatch");
    const auto s = strides();
    std::int64_t off = 0;
    for (std::size_t a = 0; a < idx.size(); ++a) {
        if (idx[a] < 0 || idx[a] >= labels_[a].dim) throw EinsumError("index out of range");
        off += idx[a] * s[a];
    }
    return data_[off];
}

DenseTensor DenseTensor::permuted(const std::vector<std::string>& order) const {
    if (order.size() != labels_.size()) throw EinsumError("permutation rank mismatch");
    std::vector<int> src_axis;
    std::vector<IndexLabel> new_labels;
    for (const auto& name : order) {
        const int a = axis_of(name);
        if (a < 0) throw EinsumError("permutation names unknown label " + name);
        src_axis.push_back(a);
        new_labels.push_back(labels_[a]);
    }

    const auto src_strides = strides();
    const int r = rank();
    DenseTensor out(new_labels);
    if (out.size() == 0) return out;

    // walk the output linearly, tracking the source offset with an odometer
    std::vector<std::int64_t> idx(r, 0);
    std::vector<std::int64_t> stride_for_out(r);
    std::vector<std::int64_t> dim_for_out(r);
    for (int a = 0; a < r; ++a) {
        stride_for_out[a] = src_strides[src_axis[a]];
        dim_for_out[a] = new_labels[a].dim;
    }
    std::int64_t src_off = 0;
    const std::int64_t n = out.size();
    for (std::int64_t o = 0; o < n; ++o) {
        out.data_[o] = data_[src_off];
        for (int a = r - 1; a >= 0; --a) {
            src_off += stride_for_out[a];
            if (++idx[a] < dim_for_out[a]) break;
            src_off -= stride_for_out[a] * dim_for_out[a];
            idx[a] = 0;
        }
    }
    return out;
}

DenseTensor DenseTensor::summed_over(const LabelSet& drop) const {
    std::vector<std::string> keep_first;
    std::vector<std::string> dropped;
    for (const auto& l : labels_) {
        if (set_contains(drop, l.name))
            dropped.push_back(l.name);
        else
            keep_first.push_back(l.name);
    }
    if (dropped.empty()) return *this;
    std::vector<std::string> order = keep_first;
    order.insert(order.end(), dropped.begin(), dropped.end());
    DenseTensor moved = permuted(order);

    std::vector<IndexLabel> out_labels;
    for (const auto& name : keep_first) out_labels.push_back({name, dim_of(name)});
    DenseTensor out(out_labels);
    const std::int64_t outer = out.size() ? out.size() : 1;
    const std::int64_t inner = moved.size() / outer;
    for (std::int64_t o = 0; o < outer; ++o) {
        double acc = 0.0;
        const double* p = moved.data_.data() + o * inner;
        for (std::int64_t i = 0; i < inner; ++i) acc += p[i];
        out.data_[o] = acc;
    }
    return out;
}

DenseTensor DenseTensor::broadcast_to(const std::vector<IndexLabel>& target) const {
    for (const auto& l : labels_) {
        bool found = false;
        for (const auto& t : target)
            if (t.name == l.name) {
                if (t.dim != l.dim) throw EinsumError("broadcast dim mismatch on " + l.name);
                found = true;
            }
        if (!found) throw EinsumError("broadcast drops label " + l.name);
    }
    // order target so existing labels come first (in their target-relative
    // order), then new labels; fill by replication, then permute back.
    std::vector<IndexLabel> existing, added;
    for (const auto& t : target)
        (axis_of(t.name) >= 0 ? existing : added).push_back(t);
    std::vector<std::string> order;
    for (const auto& l : existing) order.push_back(l.name);
    DenseTensor base = labels_.empty() ? *this : permuted(order);

    std::vector<IndexLabel> tmp_labels = existing;
    tmp_labels.insert(tmp_labels.end(), added.begin(), added.end());
    DenseTensor tmp(tmp_labels);
    const std::int64_t inner = tmp.size() / std::max<std::int64_t>(base.size(), 1);
    for (std::int64_t o = 0; o < base.size(); ++o)
        for (std::int64_t i = 0; i < inner; ++i) tmp.data_[o * inner + i] = base.data_[o];
    std::vector<std::string> final_order;
    for (const auto& t : target) final_order.push_back(t.name);
    return tmp.permuted(final_order);
}

bool DenseTensor::all_finite() const {
    for (double v : data_)
        if (!std::isfinite(v)) return false;
    return true;
}

double DenseTensor::max_abs() const {
    double m = 0.0;
    for (double v : data_) m = std::max(m, std::fabs(v));
    return m;
}

double max_rel_err(const DenseTensor& got, const DenseTensor& want) {
    if (got.label_set() != want.label_set()) throw EinsumError("comparing unlike tensors");
    std::vector<std::string> order;
    for (const auto& l : want.labels()) order.push_back(l.name);
    DenseTensor g = got.permuted(order);
    const double scale = std::max(1e-30, want.max_abs());
    double worst = 0.0;
    for (std::int64_t o = 0; o < g.size(); ++o)
        worst = std::max(worst, std::fabs(g.data()[o] - want.data()[o]) / scale);
    return worst;
}

}  // namespace tnconv
