#pragma once

#include <cmath>
#include <limits>
#include <vector>

#include "entype/corpus.hpp"
#include "entype/metrics.hpp"
#include "entype/tensor.hpp"

namespace entype {

/// Per-type logistic probabilities p_t = sigmoid(w_t . phi). W holds one
/// type embedding per row. Outputs are clamped strictly inside (0, 1).
inline Vec type_probabilities(const Vec& phi, const Matrix& type_embeddings) {
    if (!all_finite(phi)) throw std::invalid_argument("type_probabilities: non-finite input");
    Vec p = matvec(type_embeddings, phi);
    const double hi = std::nextafter(1.0, 0.0);
    const double lo = std::numeric_limits<double>::min();
    for (double& z : p) {
        z = sigmoid(z);
        if (z >= 1.0) z = hi;
        if (z <= 0.0) z = lo;
    }
    return p;
}

/// Summed binary cross-entropy over types for one mention. Probabilities
/// are clamped to [eps, 1-eps] inside the logs; eps = 1e-12.
inline double nll_loss(const Vec& probabilities, const LabelVector& labels) {
    if (probabilities.size() != labels.size())
        throw std::invalid_argument("nll_loss: length mismatch");
    constexpr double eps = 1e-12;
    double loss = 0.0;
    for (std::size_t t = 0; t < probabilities.size(); ++t) {
        const double p = std::min(1.0 - eps, std::max(eps, probabilities[t]));
        loss -= labels[t] == 1.0 ? std::log(p) : std::log(1.0 - p);
    }
    return loss;
}

struct PredictionResult {
    Vec probabilities;
    TypeIdSet predicted;
    bool fallback_used = false;
};

/// Thresholded prediction: T = {t : p_t >= r_t}. When the set is empty and
/// the fallback is enabled, predict the argmax type (lowest id on ties).
inline PredictionResult predict_types(const Vec& probabilities, const Vec& thresholds,
                                      bool fallback) {
    if (probabilities.size() != thresholds.size())
        throw std::invalid_argument("predict_types: length mismatch");
    PredictionResult res;
    res.probabilities = probabilities;
    for (std::size_t t = 0; t < probabilities.size(); ++t)
        if (probabilities[t] >= thresholds[t]) res.predicted.insert(static_cast<int>(t));
    if (res.predicted.empty() && fallback && !probabilities.empty()) {
        std::size_t best = 0;
        for (std::size_t t = 1; t < probabilities.size(); ++t)
            if (probabilities[t] > probabilities[best]) best = t;
        res.predicted.insert(static_cast<int>(best));
        res.fallback_used = true;
    }
    return res;
}

}  // namespace entype
