#pragma once

#include <algorithm>
#include <charconv>
#include <compare>
#include <cstddef>
#include <functional>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace sglmb {

/// One step of a label's lineage: the scan at which the event happened and
/// the index that disambiguates simultaneous events.
struct LabelEvent {
    int time = 0;
    int index = 1;

    auto operator<=>(const LabelEvent&) const = default;
};

/// Track identity that carries its own ancestry.
///
/// The first event is the birth (time, index). Every spawn appends one
/// (time, index) pair to the parent's path, so a generation-g label has
/// g + 1 events and its ancestor is the label with the last event removed.
/// Ordering is lexicographic over the flattened integer sequence.
class Label {
public:
    Label() = default;

    [[nodiscard]] static Label birth(int time, int index) {
        if (time < 0) throw std::invalid_argument("label: birth time must be non-negative");
        if (index < 1) throw std::invalid_argument("label: index must be >= 1");
        Label l;
        l.flat_ = {time, index};
        return l;
    }

    [[nodiscard]] Label spawn(int time, int index) const {
        if (empty()) throw std::invalid_argument("label: cannot spawn from an empty label");
        if (index < 1) throw std::invalid_argument("label: index must be >= 1");
        if (time <= last_time()) {
            throw std::invalid_argument("label: spawn time " + std::to_string(time) +
                                        " must exceed parent's last time " +
                                        std::to_string(last_time()));
        }
        Label l = *this;
        l.flat_.push_back(time);
        l.flat_.push_back(index);
        return l;
    }

    [[nodiscard]] bool empty() const { return flat_.empty(); }
    [[nodiscard]] std::size_t length() const { return flat_.size() / 2; }
    [[nodiscard]] int generation() const { return static_cast<int>(length()) - 1; }

    [[nodiscard]] LabelEvent event(std::size_t i) const {
        return {flat_.at(2 * i), flat_.at(2 * i + 1)};
    }
    [[nodiscard]] std::vector<LabelEvent> path() const {
        std::vector<LabelEvent> out;
        out.reserve(length());
        for (std::size_t i = 0; i < length(); ++i) out.push_back(event(i));
        return out;
    }

    [[nodiscard]] int birth_time() const { return flat_.at(0); }
    [[nodiscard]] int last_time() const { return flat_.at(flat_.size() - 2); }
    [[nodiscard]] int last_index() const { return flat_.back(); }

    /// The parent label, or nullopt for birth labels.
    [[nodiscard]] std::optional<Label> ancestor() const {
        if (length() <= 1) return std::nullopt;
        Label l;
        l.flat_.assign(flat_.begin(), flat_.end() - 2);
        return l;
    }

    /// Generation-0 ancestor.
    [[nodiscard]] Label root() const {
        Label l;
        l.flat_.assign(flat_.begin(), flat_.begin() + std::min<std::ptrdiff_t>(2, flat_.size()));
        return l;
    }

    [[nodiscard]] bool is_ancestor_of(const Label& other) const {
        return length() < other.length() &&
               std::equal(flat_.begin(), flat_.end(), other.flat_.begin());
    }

    [[nodiscard]] std::span<const int> flat() const { return flat_; }

    /// Comma-joined flattened integers, e.g. "1,1,10,1,56,1".
    [[nodiscard]] std::string to_string() const {
        std::string s;
        for (std::size_t i = 0; i < flat_.size(); ++i) {
            if (i) s += ',';
            s += std::to_string(flat_[i]);
        }
        return s;
    }

    [[nodiscard]] static Label parse(std::string_view text) {
        std::vector<int> values;
        while (!text.empty()) {
            auto comma = text.find(',');
            auto token = text.substr(0, comma);
            while (!token.empty() && token.front() == ' ') token.remove_prefix(1);
            while (!token.empty() && token.back() == ' ') token.remove_suffix(1);
            int v = 0;
            auto [ptr, ec] = std::from_chars(token.data(), token.data() + token.size(), v);
            if (ec != std::errc{} || ptr != token.data() + token.size()) {
                throw std::invalid_argument("label: cannot parse '" + std::string(token) + "'");
            }
            values.push_back(v);
            if (comma == std::string_view::npos) break;
            text.remove_prefix(comma + 1);
        }
        if (values.size() < 2 || values.size() % 2 != 0) {
            throw std::invalid_argument("label: expected an even, non-zero number of fields");
        }
        Label l = birth(values[0], values[1]);
        for (std::size_t i = 2; i < values.size(); i += 2) l = l.spawn(values[i], values[i + 1]);
        return l;
    }

    auto operator<=>(const Label&) const = default;
    bool operator==(const Label&) const = default;

private:
    std::vector<int> flat_;
};

inline Label make_birth_label(int time, int index) { return Label::birth(time, index); }

inline Label make_spawn_label(const Label& parent, int time, int index) {
    return parent.spawn(time, index);
}

inline std::optional<Label> ancestor(const Label& label) { return label.ancestor(); }

/// Where a label sits relative to the scan being predicted to.
enum class LabelKind { surviving, birth, spawn };

/// Classifies a label at scan `next_time`: births and spawns carry
/// `next_time` in their last event, everything older is a survivor.
inline LabelKind classify(const Label& label, int next_time) {
    if (label.last_time() < next_time) return LabelKind::surviving;
    return label.generation() == 0 ? LabelKind::birth : LabelKind::spawn;
}

/// Spawn labels {(l, next_time, j) : j = 1..per_parent} for every parent,
/// in canonical order.
inline std::vector<Label> spawn_label_space(std::span<const Label> parents, int next_time,
                                            int per_parent) {
    if (per_parent < 0) throw std::invalid_argument("spawn_label_space: per_parent must be >= 0");
    std::vector<Label> out;
    out.reserve(parents.size() * static_cast<std::size_t>(per_parent));
    for (const auto& p : parents) {
        for (int j = 1; j <= per_parent; ++j) out.push_back(p.spawn(next_time, j));
    }
    std::sort(out.begin(), out.end());
    return out;
}

/// Label sets partitioned into survivors, births and spawns.
struct LabelSpacePartition {
    std::vector<Label> surviving;
    std::vector<Label> births;
    std::vector<Label> spawns;
};

inline LabelSpacePartition partition_labels(std::span<const Label> labels, int next_time) {
    LabelSpacePartition out;
    for (const auto& l : labels) {
        switch (classify(l, next_time)) {
            case LabelKind::surviving: out.surviving.push_back(l); break;
            case LabelKind::birth: out.births.push_back(l); break;
            case LabelKind::spawn: out.spawns.push_back(l); break;
        }
    }
    return out;
}

}  // namespace sglmb

template <>
struct std::hash<sglmb::Label> {
    std::size_t operator()(const sglmb::Label& l) const noexcept {
        std::size_t h = 0xcbf29ce484222325ULL;
        for (int v : l.flat()) {
            h ^= static_cast<std::size_t>(static_cast<unsigned>(v));
            h *= 0x100000001b3ULL;
        }
        return h;
    }
};
