#pragma once

#include <set>
#include <stdexcept>
#include <vector>

#include <json.hpp>

namespace entype {

using TypeIdSet = std::set<int>;

struct ScoreTriple {
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;
};

inline double f1_of(double p, double r) {
    const double s = p + r;
    return s == 0.0 ? 0.0 : 2.0 * p * r / s;
}

namespace detail {
inline void check_aligned(const std::vector<TypeIdSet>& pred, const std::vector<TypeIdSet>& gold) {
    if (pred.size() != gold.size())
        throw std::invalid_argument("metrics: prediction/gold length mismatch");
    if (pred.empty()) throw std::invalid_argument("metrics: empty instance list");
}

inline std::size_t intersection_size(const TypeIdSet& a, const TypeIdSet& b) {
    std::size_t n = 0;
    for (int t : a) n += b.count(t);
    return n;
}
}  // namespace detail

/// Strict: P = R = fraction of instances whose predicted set equals the
/// gold set exactly. Two empty sets are equal and count as a match.
inline ScoreTriple strict(const std::vector<TypeIdSet>& pred, const std::vector<TypeIdSet>& gold) {
    detail::check_aligned(pred, gold);
    std::size_t matches = 0;
    for (std::size_t i = 0; i < pred.size(); ++i)
        if (pred[i] == gold[i]) ++matches;
    const double v = static_cast<double>(matches) / static_cast<double>(pred.size());
    return {v, v, f1_of(v, v)};
}

/// Loose macro: per-instance overlap ratios averaged over instances.
/// A term with zero denominator contributes 1 if the other set is also
/// empty, else 0.
inline ScoreTriple loose_macro(const std::vector<TypeIdSet>& pred,
                               const std::vector<TypeIdSet>& gold) {
    detail::check_aligned(pred, gold);
    double p_sum = 0.0, r_sum = 0.0;
    for (std::size_t i = 0; i < pred.size(); ++i) {
        const double inter = static_cast<double>(detail::intersection_size(pred[i], gold[i]));
        if (pred[i].empty())
            p_sum += gold[i].empty() ? 1.0 : 0.0;
        else
            p_sum += inter / static_cast<double>(pred[i].size());
        if (gold[i].empty())
            r_sum += pred[i].empty() ? 1.0 : 0.0;
        else
            r_sum += inter / static_cast<double>(gold[i].size());
    }
    const double n = static_cast<double>(pred.size());
    const double p = p_sum / n, r = r_sum / n;
    return {p, r, f1_of(p, r)};
}

/// Loose micro: overlap counts pooled across instances. A pooled ratio
/// with denominator 0 is 1 (its numerator is necessarily 0).
inline ScoreTriple loose_micro(const std::vector<TypeIdSet>& pred,
                               const std::vector<TypeIdSet>& gold) {
    detail::check_aligned(pred, gold);
    std::size_t inter = 0, n_pred = 0, n_gold = 0;
    for (std::size_t i = 0; i < pred.size(); ++i) {
        inter += detail::intersection_size(pred[i], gold[i]);
        n_pred += pred[i].size();
        n_gold += gold[i].size();
    }
    const double p = n_pred == 0 ? 1.0 : static_cast<double>(inter) / static_cast<double>(n_pred);
    const double r = n_gold == 0 ? 1.0 : static_cast<double>(inter) / static_cast<double>(n_gold);
    return {p, r, f1_of(p, r)};
}

inline nlohmann::json score_json(const ScoreTriple& s) {
    return {{"p", s.precision}, {"r", s.recall}, {"f1", s.f1}};
}

/// Evaluation report consumed by the CLI and by downstream tooling.
inline nlohmann::json evaluation_report(const std::vector<TypeIdSet>& pred,
                                        const std::vector<TypeIdSet>& gold) {
    return {{"strict", score_json(strict(pred, gold))},
            {"loose_macro", score_json(loose_macro(pred, gold))},
            {"loose_micro", score_json(loose_micro(pred, gold))},
            {"n", pred.size()}};
}

}  // namespace entype
