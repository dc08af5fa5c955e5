#pragma once

#include <array>
#include <string>
#include <vector>

#include "entype/corpus.hpp"
#include "entype/embeddings.hpp"
#include "entype/tensor.hpp"

namespace entype {

/// One LSTM direction. Gate order inside the stacked 4H rows is fixed as
/// [input, forget, cell, output] in both compute and serialization.
struct LstmDirParams {
    Matrix w_x;   // [4H, d_in]
    Matrix w_h;   // [4H, H]
    Matrix bias;  // [4H, 1]

    std::size_t hidden() const { return w_h.cols; }
};

struct LstmLayerParams {
    LstmDirParams fwd;
    LstmDirParams bwd;
};

/// Stacked bidirectional LSTM. Layer l > 0 consumes the concatenated
/// [forward; backward] states of layer l-1, so its input size is 2*hidden.
struct BiLSTMEncoder {
    std::vector<LstmLayerParams> layers;
    std::size_t hidden = 0;  // per direction

    std::size_t output_dim() const { return 2 * hidden; }
};

struct AttentionParams {
    Matrix w_a;  // [2H, d_word]
};

/// Two-layer perceptron over the document vector:
/// g_d = relu(w_d1 * tanh(w_d2 * dm)). w_d2 is applied first.
struct DocMLPParams {
    Matrix w_d1;  // [d_out, hidden]
    Matrix w_d2;  // [hidden, d_doc]
};

struct FeatureVector {
    Vec f_e;  // entity average
    Vec g_s;  // attended sentence context
    Vec g_d;  // document feature

    Vec concat() const {
        Vec out;
        out.reserve(f_e.size() + g_s.size() + g_d.size());
        out.insert(out.end(), f_e.begin(), f_e.end());
        out.insert(out.end(), g_s.begin(), g_s.end());
        out.insert(out.end(), g_d.begin(), g_d.end());
        return out;
    }
};

/// Entity encoder: component-wise mean of the mention token embeddings.
inline Vec encode_entity(const std::vector<Vec>& token_vectors) {
    if (token_vectors.empty()) throw std::invalid_argument("encode_entity: empty mention");
    Vec mean(token_vectors[0].size(), 0.0);
    for (const auto& v : token_vectors) axpy(mean, v);
    for (double& x : mean) x /= static_cast<double>(token_vectors.size());
    return mean;
}

struct LstmCellState {
    Vec h;
    Vec c;
};

/// Per-step activations kept for backpropagation.
struct LstmStepCache {
    Vec gate_i, gate_f, gate_g, gate_o;  // post-activation
    Vec c, tanh_c, h;
};

inline LstmCellState lstm_cell(const Vec& x, const Vec& h_prev, const Vec& c_prev,
                               const LstmDirParams& p, LstmStepCache* cache = nullptr) {
    const std::size_t H = p.hidden();
    if (x.size() != p.w_x.cols || h_prev.size() != H || c_prev.size() != H)
        throw std::invalid_argument("lstm_cell: shape mismatch");
    Vec z = matvec(p.w_x, x);
    const Vec rec = matvec(p.w_h, h_prev);
    for (std::size_t k = 0; k < 4 * H; ++k) z[k] += rec[k] + p.bias.a[k];

    LstmCellState out{Vec(H), Vec(H)};
    if (cache) {
        cache->gate_i.resize(H);
        cache->gate_f.resize(H);
        cache->gate_g.resize(H);
        cache->gate_o.resize(H);
        cache->tanh_c.resize(H);
    }
    for (std::size_t k = 0; k < H; ++k) {
        const double i = sigmoid(z[k]);
        const double f = sigmoid(z[H + k]);
        const double g = std::tanh(z[2 * H + k]);
        const double o = sigmoid(z[3 * H + k]);
        const double c = f * c_prev[k] + i * g;
        const double tc = std::tanh(c);
        out.c[k] = c;
        out.h[k] = o * tc;
        if (cache) {
            cache->gate_i[k] = i;
            cache->gate_f[k] = f;
            cache->gate_g[k] = g;
            cache->gate_o[k] = o;
            cache->tanh_c[k] = tc;
        }
    }
    if (cache) {
        cache->c = out.c;
        cache->h = out.h;
    }
    return out;
}

/// Forward/backward activations for one bi-LSTM run over a sequence.
struct BiLstmCache {
    // [layer][direction][time]; direction 0 = left-to-right
    std::vector<std::array<std::vector<LstmStepCache>, 2>> steps;
    // per-layer input vectors, [layer][time]
    std::vector<std::vector<Vec>> inputs;
    std::vector<Vec> top;  // concatenated top-layer states
};

/// Run the stacked bi-LSTM. Initial states are zero in each direction of
/// each layer; returns the top layer's concatenated hidden states.
inline std::vector<Vec> bilstm_forward(const std::vector<Vec>& xs, const BiLSTMEncoder& enc,
                                       BiLstmCache* cache = nullptr) {
    if (xs.empty()) throw std::invalid_argument("bilstm_forward: empty sequence");
    const std::size_t n = xs.size();
    const std::size_t H = enc.hidden;
    if (cache) {
        cache->steps.assign(enc.layers.size(), {});
        cache->inputs.assign(enc.layers.size(), {});
    }
    std::vector<Vec> layer_in = xs;
    std::vector<Vec> layer_out;
    for (std::size_t l = 0; l < enc.layers.size(); ++l) {
        if (cache) cache->inputs[l] = layer_in;
        layer_out.assign(n, Vec(2 * H, 0.0));
        for (int dir = 0; dir < 2; ++dir) {
            const LstmDirParams& p = dir == 0 ? enc.layers[l].fwd : enc.layers[l].bwd;
            if (cache) cache->steps[l][dir].resize(n);
            Vec h(H, 0.0), c(H, 0.0);
            for (std::size_t s = 0; s < n; ++s) {
                const std::size_t t = dir == 0 ? s : n - 1 - s;
                LstmStepCache* sc = cache ? &cache->steps[l][dir][t] : nullptr;
                LstmCellState st = lstm_cell(layer_in[t], h, c, p, sc);
                h = std::move(st.h);
                c = std::move(st.c);
                const std::size_t off = dir == 0 ? 0 : H;
                for (std::size_t k = 0; k < H; ++k) layer_out[t][off + k] = h[k];
            }
        }
        layer_in = layer_out;
    }
    if (cache) cache->top = layer_in;
    return layer_in;
}

/// Raw alignment scores s_i = h_i^T W_a f_e.
inline Vec attention_scores(const std::vector<Vec>& hs, const Vec& f_e, const AttentionParams& p) {
    const Vec q = matvec(p.w_a, f_e);
    Vec s(hs.size());
    for (std::size_t i = 0; i < hs.size(); ++i) s[i] = dot(hs[i], q);
    return s;
}

inline Vec attention_weights(const std::vector<Vec>& hs, const Vec& f_e,
                             const AttentionParams& p) {
    return softmax(attention_scores(hs, f_e, p));
}

/// g_s = sum_i a_i h_i
inline Vec encode_sentence(const std::vector<Vec>& hs, const Vec& a) {
    if (hs.size() != a.size()) throw std::invalid_argument("encode_sentence: length mismatch");
    Vec g(hs[0].size(), 0.0);
    for (std::size_t i = 0; i < hs.size(); ++i) axpy(g, hs[i], a[i]);
    return g;
}

struct DocMLPCache {
    Vec input, tanh_u, z;
};

inline Vec encode_document(const Vec& dm_vec, const DocMLPParams& p, DocMLPCache* cache = nullptr) {
    Vec u = matvec(p.w_d2, dm_vec);
    for (double& x : u) x = std::tanh(x);
    Vec z = matvec(p.w_d1, u);
    Vec g(z.size());
    for (std::size_t k = 0; k < z.size(); ++k) g[k] = z[k] > 0.0 ? z[k] : 0.0;
    if (cache) {
        cache->input = dm_vec;
        cache->tanh_u = std::move(u);
        cache->z = std::move(z);
    }
    return g;
}

}  // namespace entype
