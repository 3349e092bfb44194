#ifndef TNCONV_CORE_TENSOR_HPP
#define TNCONV_CORE_TENSOR_HPP

#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "labels.hpp"

namespace tnconv {

class EinsumError : public std::runtime_error {
public:
    explicit EinsumError(const std::string& msg) : std::runtime_error(msg) {}
};

// Dense labelled tensor, 64-bit floats, row-major over the label order.
class DenseTensor {
public:
    DenseTensor() = default;
    explicit DenseTensor(std::vector<IndexLabel> labels);  // zero filled
    DenseTensor(std::vector<IndexLabel> labels, std::vector<double> data);
    static DenseTensor scalar(double value);

    const std::vector<IndexLabel>& labels() const { return labels_; }
    LabelSet label_set() const;
    std::int64_t size() const { return static_cast<std::int64_t>(data_.size()); }
    int rank() const { return static_cast<int>(labels_.size()); }
    std::span<double> data() { return data_; }
    std::span<const double> data() const { return data_; }

    int axis_of(const std::string& name) const;       // -1 if absent
    std::int64_t dim_of(const std::string& name) const;

    double at(const std::vector<std::int64_t>& idx) const;
    double& at(const std::vector<std::int64_t>& idx);

    // Copy with axes rearranged to `order` (must be a permutation of labels).
    DenseTensor permuted(const std::vector<std::string>& order) const;
    // Sum out the given labels.
    DenseTensor summed_over(const LabelSet& drop) const;
    // Replicate across extra labels; existing labels keep their dims. The
    // result has exactly `target` labels in order.
    DenseTensor broadcast_to(const std::vector<IndexLabel>& target) const;

    bool all_finite() const;
    double max_abs() const;

private:
    std::vector<IndexLabel> labels_;
    std::vector<double> data_;

    std::vector<std::int64_t> strides() const;
};

double max_rel_err(const DenseTensor& got, const DenseTensor& want);

}  // namespace tnconv

#endif
