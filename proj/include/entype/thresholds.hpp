#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "entype/classifier.hpp"
#include "entype/metrics.hpp"

namespace entype {

struct TuningReport {
    Vec thresholds;
    double dev_strict_before = 0.0;
    double dev_strict_after = 0.0;
    std::size_t passes = 0;
};

namespace detail {

// Candidate thresholds for one type: midpoints between consecutive sorted
// distinct probabilities of that column, plus 0.5.
inline Vec threshold_candidates(const std::vector<Vec>& probs, std::size_t t) {
    Vec col;
    col.reserve(probs.size());
    for (const auto& row : probs) col.push_back(row[t]);
    std::sort(col.begin(), col.end());
    col.erase(std::unique(col.begin(), col.end()), col.end());
    Vec cand;
    for (std::size_t i = 0; i + 1 < col.size(); ++i) cand.push_back(0.5 * (col[i] + col[i + 1]));
    cand.push_back(0.5);
    std::sort(cand.begin(), cand.end());
    cand.erase(std::unique(cand.begin(), cand.end()), cand.end());
    return cand;
}

inline std::size_t strict_matches(const std::vector<Vec>& probs,
                                  const std::vector<TypeIdSet>& gold, const Vec& thresholds,
                                  bool fallback) {
    std::size_t matches = 0;
    for (std::size_t i = 0; i < probs.size(); ++i)
        if (predict_types(probs[i], thresholds, fallback).predicted == gold[i]) ++matches;
    return matches;
}

// Per-instance state letting candidate thresholds for one or two free
// types be scored in O(1): everything else is frozen.
struct InstanceView {
    double p_t = 0.0, p_u = 0.0;
    bool gold_t = false, gold_u = false;
    std::size_t pred_others = 0;      // predicted types among the frozen ones
    std::size_t mismatch_others = 0;  // frozen types with pred != gold
    bool gold_is_argmax = false;      // gold set == {argmax_j p_j}
    bool gold_empty = false;
};

inline bool view_match(const InstanceView& v, bool pred_t, bool gold_t, bool pred_u, bool gold_u,
                       std::size_t n_free_pred, bool fallback) {
    if (v.pred_others + n_free_pred > 0)
        return v.mismatch_others == 0 && pred_t == gold_t && pred_u == gold_u;
    return fallback ? v.gold_is_argmax : v.gold_empty;
}

inline std::size_t matches_at(const std::vector<InstanceView>& views, double cand,
                              bool fallback) {
    std::size_t matches = 0;
    for (const auto& v : views) {
        const bool pred_t = v.p_t >= cand;
        if (view_match(v, pred_t, v.gold_t, true, true, pred_t ? 1 : 0, fallback)) ++matches;
    }
    return matches;
}

inline std::size_t matches_at_pair(const std::vector<InstanceView>& views, double cand_t,
                                   double cand_u, bool fallback) {
    std::size_t matches = 0;
    for (const auto& v : views) {
        const bool pred_t = v.p_t >= cand_t;
        const bool pred_u = v.p_u >= cand_u;
        const std::size_t n_free = (pred_t ? 1 : 0) + (pred_u ? 1 : 0);
        if (view_match(v, pred_t, v.gold_t, pred_u, v.gold_u, n_free, fallback)) ++matches;
    }
    return matches;
}

struct TuneState {
    const std::vector<Vec>& probs;
    const std::vector<TypeIdSet>& gold;
    bool fallback;
    std::vector<Vec> candidates;
    std::vector<std::size_t> order;  // descending support, then id
    std::vector<bool> gold_is_argmax, gold_empty;

    // Freeze everything except `t` (and optionally `u`).
    void build_views(const Vec& r, std::size_t t, std::size_t u,
                     std::vector<InstanceView>& views) const {
        const std::size_t n_types = probs[0].size();
        views.resize(probs.size());
        for (std::size_t i = 0; i < probs.size(); ++i) {
            InstanceView v;
            v.p_t = probs[i][t];
            v.gold_t = gold[i].count(static_cast<int>(t)) > 0;
            if (u != t) {
                v.p_u = probs[i][u];
                v.gold_u = gold[i].count(static_cast<int>(u)) > 0;
            } else {
                v.p_u = 1.0;  // pred_u true and gold_u true: neutral in view_match
                v.gold_u = true;
            }
            v.gold_is_argmax = gold_is_argmax[i];
            v.gold_empty = gold_empty[i];
            for (std::size_t j = 0; j < n_types; ++j) {
                if (j == t || j == u) continue;
                const bool pred_j = probs[i][j] >= r[j];
                if (pred_j) ++v.pred_others;
                if (pred_j != (gold[i].count(static_cast<int>(j)) > 0)) ++v.mismatch_others;
            }
            views[i] = v;
        }
    }
};

}  // namespace detail

/// Per-type thresholds maximizing dev strict F1. Types are swept in
/// descending gold-support order; each coordinate is searched exhaustively
/// over its candidates (midpoints of the observed column plus 0.5) with
/// ties resolved toward 0.5, then larger. When a full sweep brings no
/// improvement, pairs of types whose joint candidate grid is small are
/// searched exhaustively as well; single-coordinate moves cannot escape
/// every strict-F1 plateau, and for two-type problems the pair grid is the
/// whole search space. Stops after a fruitless pass or max_passes.
inline TuningReport tune_thresholds(const std::vector<Vec>& probs,
                                    const std::vector<TypeIdSet>& gold, bool fallback,
                                    std::size_t max_passes = 10,
                                    std::size_t pair_grid_budget = 4096) {
    if (probs.empty()) throw std::invalid_argument("tune_thresholds: empty dev set");
    const std::size_t n_types = probs[0].size();
    const std::size_t n = probs.size();
    if (gold.size() != n) throw std::invalid_argument("tune_thresholds: gold length mismatch");

    detail::TuneState st{probs, gold, fallback, {}, {}, {}, {}};
    st.candidates.resize(n_types);
    for (std::size_t t = 0; t < n_types; ++t)
        st.candidates[t] = detail::threshold_candidates(probs, t);

    std::vector<std::size_t> support(n_types, 0);
    for (const auto& g : gold)
        for (int t : g)
            if (t >= 0 && static_cast<std::size_t>(t) < n_types) ++support[t];
    st.order.resize(n_types);
    std::iota(st.order.begin(), st.order.end(), 0);
    std::stable_sort(st.order.begin(), st.order.end(),
                     [&](std::size_t a, std::size_t b) { return support[a] > support[b]; });

    st.gold_is_argmax.resize(n);
    st.gold_empty.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        std::size_t best = 0;
        for (std::size_t t = 1; t < n_types; ++t)
            if (probs[i][t] > probs[i][best]) best = t;
        st.gold_empty[i] = gold[i].empty();
        st.gold_is_argmax[i] = gold[i].size() == 1 && *gold[i].begin() == static_cast<int>(best);
    }

    TuningReport report;
    Vec r(n_types, 0.5);
    std::size_t best_matches = detail::strict_matches(probs, gold, r, fallback);
    report.dev_strict_before = static_cast<double>(best_matches) / static_cast<double>(n);

    std::vector<detail::InstanceView> views;
    for (std::size_t pass = 0; pass < max_passes; ++pass) {
        ++report.passes;
        bool improved = false;

        for (std::size_t t : st.order) {
            st.build_views(r, t, t, views);
            double best_cand = r[t];
            std::size_t best_cand_matches = detail::matches_at(views, r[t], fallback);
            for (double cand : st.candidates[t]) {
                const std::size_t m = detail::matches_at(views, cand, fallback);
                if (m > best_cand_matches) {
                    best_cand_matches = m;
                    best_cand = cand;
                } else if (m == best_cand_matches && cand != best_cand) {
                    const double d_new = std::abs(cand - 0.5);
                    const double d_old = std::abs(best_cand - 0.5);
                    if (d_new < d_old || (d_new == d_old && cand > best_cand)) best_cand = cand;
                }
            }
            r[t] = best_cand;
            if (best_cand_matches > best_matches) {
                best_matches = best_cand_matches;
                improved = true;
            }
        }

        if (!improved) {
            // plateau: exhaustive search over small pair grids
            for (std::size_t a = 0; a < n_types && !improved; ++a) {
                for (std::size_t b = a + 1; b < n_types && !improved; ++b) {
                    const std::size_t t = st.order[a], u = st.order[b];
                    if (st.candidates[t].size() * st.candidates[u].size() > pair_grid_budget)
                        continue;
                    st.build_views(r, t, u, views);
                    double best_t = r[t], best_u = r[u];
                    std::size_t pair_best = detail::matches_at_pair(views, r[t], r[u], fallback);
                    for (double ct : st.candidates[t]) {
                        for (double cu : st.candidates[u]) {
                            const std::size_t m = detail::matches_at_pair(views, ct, cu, fallback);
                            if (m > pair_best ||
                                (m == pair_best &&
                                 (ct != best_t || cu != best_u) &&
                                 std::abs(ct - 0.5) + std::abs(cu - 0.5) <
                                     std::abs(best_t - 0.5) + std::abs(best_u - 0.5))) {
                                pair_best = m;
                                best_t = ct;
                                best_u = cu;
                            }
                        }
                    }
                    if (pair_best > best_matches) {
                        r[t] = best_t;
                        r[u] = best_u;
                        best_matches = pair_best;
                        improved = true;
                    }
                }
            }
        }
        if (!improved) break;
    }

    // Recompute through the canonical prediction path; the incremental
    // bookkeeping above must agree with it.
    const std::size_t check = detail::strict_matches(probs, gold, r, fallback);
    report.thresholds = r;
    report.dev_strict_after = static_cast<double>(check) / static_cast<double>(n);
    if (check != best_matches)
        throw std::logic_error("tune_thresholds: incremental score diverged from predict_types");
    return report;
}

}  // namespace entype
