#pragma once

// Multi-label training losses. Scores are (1,|Y|) over the full label set;
// the root column is excluded from every loss term.

#include <string>
#include <vector>

#include "hiadv/common.hpp"
#include "hiadv/hierarchy.hpp"
#include "hiadv/tensor.hpp"

namespace hiadv {

enum class LossKind { zlpr, bce };

inline LossKind loss_kind_from(const std::string& s) {
    if (s == "zlpr") return LossKind::zlpr;
    if (s == "bce") return LossKind::bce;
    throw ConfigError("unknown loss kind '" + s + "'");
}

inline const char* to_string(LossKind k) { return k == LossKind::zlpr ? "zlpr" : "bce"; }

struct LossConfig {
    LossKind kind = LossKind::zlpr;
    double tau = 0.5; // inference threshold
};

namespace detail {
inline void check_scores(const char* op, const Tensor& scores, const LabelHierarchy& h) {
    if (scores.rows() != 1 || scores.cols() != h.size())
        throw ShapeError(std::string(op) + ": scores " + scores.shape().str() +
                         ", expected (1," + std::to_string(h.size()) + ")");
}
} // namespace detail

// log(1 + sum_{i in pos} e^{-s_i}) + log(1 + sum_{j in neg} e^{s_j})
// where pos = y and neg = all non-root labels outside y.
inline Tensor zlpr_loss(const Tensor& scores, const LabelHierarchy& h,
                        const LocalHierarchy& y) {
    detail::check_scores("zlpr_loss", scores, h);
    std::vector<int> neg;
    neg.reserve(static_cast<std::size_t>(h.size()) - 1 - y.members.size());
    for (LabelId id : h.non_root_ids())
        if (!y.contains(id)) neg.push_back(id);
    const std::vector<int> pos(y.members.begin(), y.members.end());

    const Tensor col = reshape(scores, h.size(), 1);
    const Tensor zero = Tensor::zeros(1, 1);
    auto term = [&](const std::vector<int>& ids, double sign) {
        if (ids.empty()) return Tensor::zeros(1, 1);
        Tensor picked = embedding_lookup(col, ids);
        if (sign < 0.0) picked = scale(picked, -1.0);
        return logsumexp(concat({zero, picked}, 0), kAll);
    };
    return add(term(pos, -1.0), term(neg, +1.0));
}

// Sigmoid cross-entropy with logits, averaged over the non-root labels.
// softplus(s) - y*s, with softplus evaluated as logsumexp([0, s]).
inline Tensor bce_loss(const Tensor& scores, const LabelHierarchy& h,
                       const LocalHierarchy& y) {
    detail::check_scores("bce_loss", scores, h);
    const auto ids = h.non_root_ids();
    const Tensor col = reshape(scores, h.size(), 1);
    const Tensor s = transpose(embedding_lookup(col, ids)); // (1, M)
    Tensor mask = Tensor::zeros(1, static_cast<int>(ids.size()));
    for (std::size_t i = 0; i < ids.size(); ++i)
        mask.values()[i] = y.contains(ids[i]) ? 1.0 : 0.0;
    const Tensor softplus = logsumexp(concat({Tensor::zeros(1, s.cols()), s}, 0), 0);
    return mean(sub(softplus, mul(mask, s)), kAll);
}

inline Tensor classification_loss(LossKind kind, const Tensor& scores,
                                  const LabelHierarchy& h, const LocalHierarchy& y,
                                  bool training) {
    if (training && y.empty())
        throw ValueError("classification loss: empty label set in training mode");
    return kind == LossKind::zlpr ? zlpr_loss(scores, h, y) : bce_loss(scores, h, y);
}

} // namespace hiadv
