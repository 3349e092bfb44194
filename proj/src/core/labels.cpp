#include "labels.hpp"

#include <algorithm>
#include <tuple>

namespace tnconv {

namespace {

// Splits "h12'" into base 'h', number 12, primed true.
struct ParsedLabel {
    char base = 0;
    int number = 0;
    bool primed = false;
};

ParsedLabel parse_label(const std::string& name) {
    ParsedLabel p;
    if (name.empty()) return p;
    p.base = name[0];
    std::size_t pos = 1;
    while (pos < name.size() && name[pos] >= '0' && name[pos] <= '9') {
        p.number = p.number * 10 + (name[pos] - '0');
        ++pos;
    }
    p.primed = pos < name.size() && name[pos] == '\'';
    return p;
}

int axis_of(char base) {
    switch (base) {
        case 'h': case 'i': return 0;
        case 'w': case 'j': return 1;
        case 'd': case 'k': return 2;
        default: return 3;
    }
}

}  // namespace

bool is_rank_label(const std::string& name) {
    ParsedLabel p = parse_label(name);
    return p.base == 'r' && p.number >= 1 && !p.primed;
}

bool is_output_spatial_label(const std::string& name) {
    ParsedLabel p = parse_label(name);
    return p.primed && (p.base == 'h' || p.base == 'w' || p.base == 'd');
}

bool is_filter_label(const std::string& name) {
    ParsedLabel p = parse_label(name);
    return !p.primed && (p.base == 'i' || p.base == 'j' || p.base == 'k');
}

bool is_spatial_label(const std::string& name) {
    ParsedLabel p = parse_label(name);
    return !p.primed && (p.base == 'h' || p.base == 'w' || p.base == 'd');
}

// Class order: batch, spatial-in/mid, spatial-out, filter, c, c', rank, other.
int label_order_key_class(const std::string& name) {
    if (name == "n") return 0;
    if (is_spatial_label(name)) return 1;
    if (is_output_spatial_label(name)) return 2;
    if (is_filter_label(name)) return 3;
    if (name == "c") return 4;
    if (name == "c'") return 5;
    if (is_rank_label(name)) return 6;
    return 7;
}

bool label_less(const std::string& a, const std::string& b) {
    ParsedLabel pa = parse_label(a);
    ParsedLabel pb = parse_label(b);
    auto key = [](const std::string& s, const ParsedLabel& p) {
        return std::make_tuple(label_order_key_class(s), axis_of(p.base), p.number, s);
    };
    return key(a, pa) < key(b, pb);
}

LabelSet make_label_set(std::vector<std::string> labels) {
    std::sort(labels.begin(), labels.end(), label_less);
    labels.erase(std::unique(labels.begin(), labels.end()), labels.end());
    return labels;
}

bool set_contains(const LabelSet& s, const std::string& x) {
    return std::find(s.begin(), s.end(), x) != s.end();
}

bool is_subset(const LabelSet& a, const LabelSet& b) {
    for (const auto& x : a)
        if (!set_contains(b, x)) return false;
    return true;
}

LabelSet set_union(const LabelSet& a, const LabelSet& b) {
    std::vector<std::string> out(a.begin(), a.end());
    out.insert(out.end(), b.begin(), b.end());
    return make_label_set(std::move(out));
}

LabelSet set_intersect(const LabelSet& a, const LabelSet& b) {
    std::vector<std::string> out;
    for (const auto& x : a)
        if (set_contains(b, x)) out.push_back(x);
    return make_label_set(std::move(out));
}

LabelSet set_difference(const LabelSet& a, const LabelSet& b) {
    std::vector<std::string> out;
    for (const auto& x : a)
        if (!set_contains(b, x)) out.push_back(x);
    return make_label_set(std::move(out));
}

}  // namespace tnconv
