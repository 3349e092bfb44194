#ifndef TNCONV_CORE_LABELS_HPP
#define TNCONV_CORE_LABELS_HPP

#include <cstdint>
#include <string>
#include <vector>

namespace tnconv {

// An index label: a symbolic name plus its extent, e.g. ("c'", 64).
struct IndexLabel {
    std::string name;
    std::int64_t dim = 1;

    friend bool operator==(const IndexLabel&, const IndexLabel&) = default;
};

// Label name conventions:
//   spatial input/mid:  h, w, d and numbered mids h1, h2, ...
//   spatial output:     h', w', d'
//   filter:             i, j, k and numbered factors i1, i2, ...
//   channels:           c (input), c' (output)
//   rank indices:       r1, r2, ...
//   batch:              n (runtime only, never stored in graphs)

bool is_rank_label(const std::string& name);
bool is_output_spatial_label(const std::string& name);
bool is_filter_label(const std::string& name);
bool is_spatial_label(const std::string& name);  // input or mid spatial, not primed

// Total order used everywhere a deterministic label order is needed
// (canonical forms, vertex dumps). Distinguished labels sort before ranks.
int label_order_key_class(const std::string& name);
bool label_less(const std::string& a, const std::string& b);

// Sorted unique label set helpers (sets are kept as sorted vectors).
using LabelSet = std::vector<std::string>;

LabelSet make_label_set(std::vector<std::string> labels);
bool set_contains(const LabelSet& s, const std::string& x);
bool is_subset(const LabelSet& a, const LabelSet& b);  // a subseteq b
LabelSet set_union(const LabelSet& a, const LabelSet& b);
LabelSet set_intersect(const LabelSet& a, const LabelSet& b);
LabelSet set_difference(const LabelSet& a, const LabelSet& b);

}  // namespace tnconv

#endif
