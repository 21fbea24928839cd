#pragma once

// Micro/Macro-F1 over predicted label sets, with per-depth and
// per-frequency-cluster breakdowns.

#include <algorithm>
#include <cstdio>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "hiadv/common.hpp"
#include "hiadv/hierarchy.hpp"

namespace hiadv {

struct LabelStats {
    long long tp = 0, fp = 0, fn = 0;
    double precision = 0.0, recall = 0.0, f1 = 0.0;
    bool in_truth = false;       // label appears in some truth set
    bool counted_in_macro = false;
};

struct ClusterRow {
    std::string name;
    int label_count = 0;
    double macro_f1 = 0.0;
};

struct MetricReport {
    double micro_f1 = 0.0;
    double macro_f1 = 0.0;
    int macro_label_count = 0;
    std::vector<LabelStats> per_label;      // indexed by label id; root row unused
    std::vector<ClusterRow> per_depth;      // filled by cluster_report
    std::vector<ClusterRow> per_frequency;  // filled by cluster_report
};

namespace detail {
inline double f1_of(long long tp, long long fp, long long fn) {
    const long long denom = 2 * tp + fp + fn;
    return denom == 0 ? 0.0 : 2.0 * static_cast<double>(tp) / static_cast<double>(denom);
}
} // namespace detail

// Macro averaging convention: a label with TP=FP=FN=0 scores F1=0; it is
// excluded from the macro mean only when it never occurs in the truth sets of
// this split. The root label is never counted.
inline MetricReport micro_macro_f1(const std::vector<LocalHierarchy>& predictions,
                                   const std::vector<LocalHierarchy>& truths,
                                   const LabelHierarchy& h) {
    if (predictions.size() != truths.size())
        throw ValueError("micro_macro_f1: " + std::to_string(predictions.size()) +
                         " predictions vs " + std::to_string(truths.size()) + " truths");
    MetricReport r;
    r.per_label.assign(static_cast<std::size_t>(h.size()), LabelStats{});
    for (std::size_t k = 0; k < predictions.size(); ++k) {
        for (LabelId id : truths[k].members) {
            if (!h.valid_id(id)) throw ValueError("micro_macro_f1: unknown truth id");
            r.per_label[static_cast<std::size_t>(id)].in_truth = true;
            if (predictions[k].contains(id)) r.per_label[static_cast<std::size_t>(id)].tp++;
            else r.per_label[static_cast<std::size_t>(id)].fn++;
        }
        for (LabelId id : predictions[k].members) {
            if (!h.valid_id(id)) throw ValueError("micro_macro_f1: unknown prediction id");
            if (!truths[k].contains(id)) r.per_label[static_cast<std::size_t>(id)].fp++;
        }
    }
    long long tp = 0, fp = 0, fn = 0;
    double macro_sum = 0.0;
    int macro_n = 0;
    for (int id = 0; id < h.size(); ++id) {
        if (id == h.root()) continue;
        auto& s = r.per_label[static_cast<std::size_t>(id)];
        s.precision = (s.tp + s.fp) == 0 ? 0.0
                    : static_cast<double>(s.tp) / static_cast<double>(s.tp + s.fp);
        s.recall = (s.tp + s.fn) == 0 ? 0.0
                 : static_cast<double>(s.tp) / static_cast<double>(s.tp + s.fn);
        s.f1 = detail::f1_of(s.tp, s.fp, s.fn);
        tp += s.tp;
        fp += s.fp;
        fn += s.fn;
        const bool absent_everywhere = s.tp == 0 && s.fp == 0 && s.fn == 0;
        s.counted_in_macro = s.in_truth || !absent_everywhere;
        if (s.counted_in_macro) {
            macro_sum += s.f1;
            ++macro_n;
        }
    }
    r.micro_f1 = detail::f1_of(tp, fp, fn);
    r.macro_f1 = macro_n == 0 ? 0.0 : macro_sum / macro_n;
    r.macro_label_count = macro_n;
    return r;
}

// Adds per-depth and per-frequency-cluster Macro-F1 tables to `report`.
// Frequency clusters: the macro-counted labels sorted by (training count,
// label id) and split into five near-equal rank buckets, rarest first.
inline void cluster_report(MetricReport& report, const LabelHierarchy& h,
                           const std::vector<long long>& train_label_counts) {
    if (train_label_counts.size() != static_cast<std::size_t>(h.size()))
        throw ValueError("cluster_report: count table size mismatch");
    std::vector<int> counted;
    for (int id = 0; id < h.size(); ++id)
        if (id != h.root() && report.per_label[static_cast<std::size_t>(id)].counted_in_macro)
            counted.push_back(id);

    report.per_depth.clear();
    std::map<int, std::pair<double, int>> by_depth;
    for (int id : counted) {
        auto& slot = by_depth[h.depth(id)];
        slot.first += report.per_label[static_cast<std::size_t>(id)].f1;
        slot.second++;
    }
    for (const auto& [depth, agg] : by_depth)
        report.per_depth.push_back({"depth_" + std::to_string(depth), agg.second,
                                    agg.first / agg.second});

    report.per_frequency.clear();
    std::vector<int> order = counted;
    std::sort(order.begin(), order.end(), [&](int a, int b) {
        const auto ca = train_label_counts[static_cast<std::size_t>(a)];
        const auto cb = train_label_counts[static_cast<std::size_t>(b)];
        return ca != cb ? ca < cb : a < b;
    });
    static const char* bucket_names[5] = {"<20%", "20-40%", "40-60%", "60-80%", ">80%"};
    const int n = static_cast<int>(order.size());
    for (int b = 0; b < 5; ++b) {
        const int lo = b * n / 5;
        const int hi = (b + 1) * n / 5;
        ClusterRow row;
        row.name = bucket_names[b];
        row.label_count = hi - lo;
        double sum = 0.0;
        for (int i = lo; i < hi; ++i)
            sum += report.per_label[static_cast<std::size_t>(order[static_cast<std::size_t>(i)])].f1;
        row.macro_f1 = row.label_count == 0 ? 0.0 : sum / row.label_count;
        report.per_frequency.push_back(row);
    }
}

// ---- serialization ----

inline std::string format_double(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.10g", v);
    return buf;
}

inline std::string per_label_csv(const MetricReport& r, const LabelHierarchy& h) {
    std::string out = "label,depth,tp,fp,fn,precision,recall,f1,counted_in_macro\n";
    for (int id = 0; id < h.size(); ++id) {
        if (id == h.root()) continue;
        const auto& s = r.per_label[static_cast<std::size_t>(id)];
        out += h.name(id) + "," + std::to_string(h.depth(id)) + "," + std::to_string(s.tp) +
               "," + std::to_string(s.fp) + "," + std::to_string(s.fn) + "," +
               format_double(s.precision) + "," + format_double(s.recall) + "," +
               format_double(s.f1) + "," + (s.counted_in_macro ? "1" : "0") + "\n";
    }
    return out;
}

inline std::string cluster_csv(const std::vector<ClusterRow>& rows) {
    std::string out = "cluster,label_count,macro_f1\n";
    for (const auto& row : rows)
        out += row.name + "," + std::to_string(row.label_count) + "," +
               format_double(row.macro_f1) + "\n";
    return out;
}

inline nlohmann::json metric_summary_json(const MetricReport& r) {
    nlohmann::json j;
    j["micro_f1"] = r.micro_f1;
    j["macro_f1"] = r.macro_f1;
    j["macro_label_count"] = r.macro_label_count;
    if (!r.per_depth.empty()) {
        j["per_depth"] = nlohmann::json::object();
        for (const auto& row : r.per_depth) j["per_depth"][row.name] = row.macro_f1;
    }
    if (!r.per_frequency.empty()) {
        j["per_frequency"] = nlohmann::json::object();
        for (const auto& row : r.per_frequency) j["per_frequency"][row.name] = row.macro_f1;
    }
    return j;
}

} // namespace hiadv
