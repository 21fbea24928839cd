#pragma once

// Global label taxonomy (a rooted tree) and per-sample local hierarchies.

#include <algorithm>
#include <cmath>
#include <deque>
#include <map>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "hiadv/common.hpp"
#include "hiadv/rng.hpp"

namespace hiadv {

using LabelId = int;

class LabelHierarchy {
public:
    // names[i] becomes label id i; parents[i] is the parent's name, empty for
    // the root. Exactly one root is required.
    static LabelHierarchy build(const std::vector<std::string>& names,
                                const std::vector<std::string>& parents) {
        if (names.size() != parents.size())
            throw TaxonomyError(TaxonomyFault::missing_root, "taxonomy: name/parent count mismatch");
        LabelHierarchy h;
        std::map<std::string, int> index;
        for (std::size_t i = 0; i < names.size(); ++i) {
            auto [it, fresh] = index.emplace(names[i], static_cast<int>(i));
            if (!fresh) {
                if (parents[it->second] == parents[i])
                    throw TaxonomyError(TaxonomyFault::duplicate_name,
                                        "taxonomy: duplicate label name '" + names[i] + "'");
                throw TaxonomyError(TaxonomyFault::multi_parent,
                                    "taxonomy: label '" + names[i] + "' listed with two parents");
            }
        }
        h.labels_ = names;
        h.parent_.assign(names.size(), -1);
        int root = -1;
        for (std::size_t i = 0; i < names.size(); ++i) {
            if (parents[i].empty()) {
                if (root >= 0)
                    throw TaxonomyError(TaxonomyFault::disconnected,
                                        "taxonomy: node '" + names[i] +
                                            "' is a second root, disconnected from '" +
                                            names[static_cast<std::size_t>(root)] + "'");
                root = static_cast<int>(i);
                continue;
            }
            auto it = index.find(parents[i]);
            if (it == index.end())
                throw TaxonomyError(TaxonomyFault::unknown_parent,
                                    "taxonomy: unknown parent '" + parents[i] + "' of '" +
                                        names[i] + "'");
            h.parent_[i] = it->second;
        }
        if (root < 0)
            throw TaxonomyError(TaxonomyFault::missing_root, "taxonomy: no root entry");
        h.root_ = root;
        h.finalize();
        return h;
    }

    // Taxonomy file: {"labels": [{"name": string, "parent": string|null}, ...]}
    static LabelHierarchy parse_taxonomy(const std::string& json_text) {
        nlohmann::json doc;
        try {
            doc = nlohmann::json::parse(json_text);
        } catch (const nlohmann::json::exception& e) {
            throw DataError(std::string("taxonomy: invalid JSON: ") + e.what());
        }
        if (!doc.is_object() || !doc.contains("labels") || !doc["labels"].is_array())
            throw DataError("taxonomy: expected an object with a 'labels' array");
        std::vector<std::string> names, parents;
        for (const auto& entry : doc["labels"]) {
            if (!entry.is_object() || !entry.contains("name") || !entry.contains("parent"))
                throw DataError("taxonomy: each label needs 'name' and 'parent'");
            names.push_back(entry["name"].get<std::string>());
            parents.push_back(entry["parent"].is_null() ? std::string()
                                                        : entry["parent"].get<std::string>());
        }
        return build(names, parents);
    }

    std::string to_json() const {
        nlohmann::json doc;
        doc["labels"] = nlohmann::json::array();
        for (std::size_t i = 0; i < labels_.size(); ++i) {
            nlohmann::json e;
            e["name"] = labels_[i];
            if (parent_[i] < 0) e["parent"] = nullptr;
            else e["parent"] = labels_[static_cast<std::size_t>(parent_[i])];
            doc["labels"].push_back(e);
        }
        return doc.dump(2) + "\n";
    }

    int size() const { return static_cast<int>(labels_.size()); }
    LabelId root() const { return root_; }
    const std::string& name(LabelId id) const { return labels_[check(id)]; }
    LabelId id_of(const std::string& name) const {
        for (std::size_t i = 0; i < labels_.size(); ++i)
            if (labels_[i] == name) return static_cast<LabelId>(i);
        return -1;
    }
    LabelId parent(LabelId id) const { return parent_[check(id)]; }
    const std::vector<LabelId>& children(LabelId id) const { return children_[check(id)]; }
    int depth(LabelId id) const { return depth_[check(id)]; }
    int max_depth() const { return max_depth_; }
    int spd(LabelId a, LabelId b) const { return spd_[check(a)][static_cast<std::size_t>(check(b))]; }
    const std::vector<std::vector<int>>& spd_matrix() const { return spd_; }

    std::vector<LabelId> non_root_ids() const {
        std::vector<LabelId> ids;
        ids.reserve(labels_.size() - 1);
        for (int i = 0; i < size(); ++i)
            if (i != root_) ids.push_back(i);
        return ids;
    }

    bool valid_id(LabelId id) const { return id >= 0 && id < size(); }

private:
    std::size_t check(LabelId id) const {
        if (!valid_id(id)) throw ValueError("hierarchy: unknown label id " + std::to_string(id));
        return static_cast<std::size_t>(id);
    }

    void finalize() {
        const int n = size();
        children_.assign(static_cast<std::size_t>(n), {});
        for (int i = 0; i < n; ++i)
            if (i != root_) children_[static_cast<std::size_t>(parent_[static_cast<std::size_t>(i)])].push_back(i);

        // Depth via walk to root; a chain longer than n nodes means a cycle.
        depth_.assign(static_cast<std::size_t>(n), -1);
        depth_[static_cast<std::size_t>(root_)] = 0;
        for (int i = 0; i < n; ++i) {
            int steps = 0;
            int cur = i;
            std::vector<int> chain;
            while (depth_[static_cast<std::size_t>(cur)] < 0) {
                chain.push_back(cur);
                cur = parent_[static_cast<std::size_t>(cur)];
                if (++steps > n)
                    throw TaxonomyError(TaxonomyFault::cycle,
                                        "taxonomy: cycle through '" + labels_[static_cast<std::size_t>(i)] + "'");
            }
            int d = depth_[static_cast<std::size_t>(cur)];
            for (auto it = chain.rbegin(); it != chain.rend(); ++it)
                depth_[static_cast<std::size_t>(*it)] = ++d;
        }
        max_depth_ = *std::max_element(depth_.begin(), depth_.end());

        // All-pairs hop counts: BFS from every node on the undirected tree.
        spd_.assign(static_cast<std::size_t>(n), std::vector<int>(static_cast<std::size_t>(n), -1));
        for (int s = 0; s < n; ++s) {
            auto& dist = spd_[static_cast<std::size_t>(s)];
            std::deque<int> queue{s};
            dist[static_cast<std::size_t>(s)] = 0;
            while (!queue.empty()) {
                const int u = queue.front();
                queue.pop_front();
                const int du = dist[static_cast<std::size_t>(u)];
                auto visit = [&](int v) {
                    if (v >= 0 && dist[static_cast<std::size_t>(v)] < 0) {
                        dist[static_cast<std::size_t>(v)] = du + 1;
                        queue.push_back(v);
                    }
                };
                visit(parent_[static_cast<std::size_t>(u)]);
                for (int c : children_[static_cast<std::size_t>(u)]) visit(c);
            }
        }
    }

    std::vector<std::string> labels_;
    std::vector<LabelId> parent_; // -1 for root
    LabelId root_ = 0;
    std::vector<int> depth_;
    int max_depth_ = 0;
    std::vector<std::vector<int>> children_;
    std::vector<std::vector<int>> spd_;
};

// Per-sample ground-truth label set; root excluded, kept sorted.
struct LocalHierarchy {
    std::vector<LabelId> members;

    static LocalHierarchy of(std::vector<LabelId> ids) {
        std::sort(ids.begin(), ids.end());
        ids.erase(std::unique(ids.begin(), ids.end()), ids.end());
        return {std::move(ids)};
    }

    bool contains(LabelId id) const {
        return std::binary_search(members.begin(), members.end(), id);
    }
    bool empty() const { return members.empty(); }
    std::size_t size() const { return members.size(); }
    bool operator==(const LocalHierarchy&) const = default;
};

enum class CorruptionMode { full, partial, none, wrong };

inline const char* to_string(CorruptionMode m) {
    switch (m) {
        case CorruptionMode::full: return "full";
        case CorruptionMode::partial: return "partial";
        case CorruptionMode::none: return "none";
        case CorruptionMode::wrong: return "wrong";
    }
    return "?";
}

inline CorruptionMode corruption_mode_from(const std::string& s) {
    if (s == "full") return CorruptionMode::full;
    if (s == "partial") return CorruptionMode::partial;
    if (s == "none") return CorruptionMode::none;
    if (s == "wrong") return CorruptionMode::wrong;
    throw ConfigError("unknown local-hierarchy mode '" + s + "'");
}

// Ancestor-closure is NOT guaranteed for partial/wrong.
struct CorruptedLocalHierarchy {
    std::vector<LabelId> members;
    CorruptionMode mode = CorruptionMode::full;
};

// Union of the inputs and all their strict ancestors, root excluded.
inline LocalHierarchy ancestor_closure(const LabelHierarchy& h,
                                       const std::vector<LabelId>& leaves) {
    std::set<LabelId> out;
    for (LabelId id : leaves) {
        if (!h.valid_id(id)) throw ValueError("ancestor_closure: unknown id " + std::to_string(id));
        int cur = id;
        while (cur != h.root()) {
            out.insert(cur);
            cur = h.parent(cur);
        }
    }
    return LocalHierarchy{{out.begin(), out.end()}};
}

// Splits an ancestor-closed set into root-to-end paths. Each path starts at
// the root id; ends are exactly the members with no child inside the set.
inline std::vector<std::vector<LabelId>> decompose_paths(const LabelHierarchy& h,
                                                         const LocalHierarchy& y) {
    for (LabelId id : y.members) {
        if (!h.valid_id(id) || id == h.root())
            throw ValueError("decompose_paths: invalid member " + std::to_string(id));
        const LabelId p = h.parent(id);
        if (p != h.root() && !y.contains(p))
            throw ValueError("decompose_paths: set is not ancestor-closed at label '" +
                             h.name(id) + "'");
    }
    std::vector<std::vector<LabelId>> paths;
    for (LabelId id : y.members) {
        bool has_child_in_set = false;
        for (LabelId c : h.children(id))
            if (y.contains(c)) {
                has_child_in_set = true;
                break;
            }
        if (has_child_in_set) continue;
        std::vector<LabelId> path;
        for (int cur = id; cur != h.root(); cur = h.parent(cur)) path.push_back(cur);
        path.push_back(h.root());
        std::reverse(path.begin(), path.end());
        paths.push_back(std::move(path));
    }
    return paths;
}

// full: identity. partial: uniformly drop round(fraction*|Y|) members.
// none: empty. wrong: |Y| labels sampled uniformly from the non-root labels.
// partial/wrong results are intentionally not re-closed under ancestors.
inline CorruptedLocalHierarchy corrupt(const LabelHierarchy& h, const LocalHierarchy& y,
                                       CorruptionMode mode, double fraction, Rng& rng) {
    CorruptedLocalHierarchy out;
    out.mode = mode;
    switch (mode) {
        case CorruptionMode::full:
            out.members = y.members;
            break;
        case CorruptionMode::none:
            break;
        case CorruptionMode::partial: {
            const int n = static_cast<int>(y.members.size());
            const int drop = static_cast<int>(std::lround(fraction * n));
            auto drop_idx = rng.sample_without_replacement(n, drop);
            std::vector<bool> dropped(static_cast<std::size_t>(n), false);
            for (int i : drop_idx) dropped[static_cast<std::size_t>(i)] = true;
            for (int i = 0; i < n; ++i)
                if (!dropped[static_cast<std::size_t>(i)])
                    out.members.push_back(y.members[static_cast<std::size_t>(i)]);
            break;
        }
        case CorruptionMode::wrong: {
            const auto pool = h.non_root_ids();
            auto picks = rng.sample_without_replacement(static_cast<int>(pool.size()),
                                                        static_cast<int>(y.members.size()));
            for (int i : picks) out.members.push_back(pool[static_cast<std::size_t>(i)]);
            std::sort(out.members.begin(), out.members.end());
            break;
        }
    }
    return out;
}

} // namespace hiadv
