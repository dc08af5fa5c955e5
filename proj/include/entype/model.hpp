#pragma once

#include <array>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "entype/classifier.hpp"
#include "entype/corpus.hpp"
#include "entype/embeddings.hpp"
#include "entype/encoders.hpp"
#include "entype/tensor.hpp"

namespace entype {

struct TrainConfig {
    double learning_rate = 1e-3;
    double adam_beta1 = 0.9;
    double adam_beta2 = 0.999;
    double adam_eps = 1e-8;
    std::size_t batch_size = 200;
    double dropout_rate = 0.5;
    std::size_t max_epochs = 100;
    std::size_t patience = 5;
    std::uint64_t seed = 1;
    int window = 10;  // context tokens kept on each side of the mention; <0 = unlimited
    bool doc_context = true;
    bool fine_tune_embeddings = false;
    double init_range = 0.01;
    bool fallback = true;  // empty-prediction fallback to argmax

    // architecture
    std::size_t lstm_layers = 2;
    std::size_t hidden = 100;  // per direction; concatenated states are 2x this
    std::size_t doc_dim = 50;
    std::size_t doc_hidden = 70;

    void validate() const {
        if (batch_size < 1) throw std::invalid_argument("batch_size must be >= 1");
        if (dropout_rate < 0.0 || dropout_rate >= 1.0)
            throw std::invalid_argument("dropout_rate must be in [0, 1)");
        if (init_range <= 0.0) throw std::invalid_argument("init_range must be > 0");
        if (max_epochs < 1) throw std::invalid_argument("max_epochs must be >= 1");
        if (lstm_layers < 1) throw std::invalid_argument("lstm_layers must be >= 1");
        if (hidden < 1 || doc_dim < 1 || doc_hidden < 1)
            throw std::invalid_argument("hidden sizes must be >= 1");
    }
};

struct NamedTensor {
    std::string name;
    Matrix* tensor;
};

/// All learnable state plus the pieces needed to run the featurizer:
/// embedding tables, encoder parameters, type embeddings and thresholds.
struct Model {
    TypeOntology ontology;
    WordEmbeddingTable words;
    DocEmbeddingTable docs;  // may be empty
    BiLSTMEncoder lstm;
    AttentionParams attention;
    DocMLPParams doc_mlp;
    Matrix type_embeddings;  // [|T|, phi_dim], row t = w_t
    Vec thresholds;
    TrainConfig config;

    std::size_t phi_dim() const { return words.dim + lstm.output_dim() + doc_mlp.w_d1.rows; }

    /// Trainable tensors in fixed order; the names are the serialization
    /// identity used by checkpoints and gradient reports.
    std::vector<NamedTensor> trainable() {
        std::vector<NamedTensor> out;
        out.push_back({"type_embeddings", &type_embeddings});
        out.push_back({"attention.W_a", &attention.w_a});
        out.push_back({"doc_mlp.W_d1", &doc_mlp.w_d1});
        out.push_back({"doc_mlp.W_d2", &doc_mlp.w_d2});
        for (std::size_t l = 0; l < lstm.layers.size(); ++l) {
            const std::string base = "lstm.layer" + std::to_string(l);
            for (int dir = 0; dir < 2; ++dir) {
                LstmDirParams& p = dir == 0 ? lstm.layers[l].fwd : lstm.layers[l].bwd;
                const std::string d = dir == 0 ? ".fwd" : ".bwd";
                out.push_back({base + d + ".W_x", &p.w_x});
                out.push_back({base + d + ".W_h", &p.w_h});
                out.push_back({base + d + ".bias", &p.bias});
            }
        }
        if (config.fine_tune_embeddings) out.push_back({"word_table", &words.vectors});
        return out;
    }

    void check_shapes() const {
        const std::size_t H = config.hidden;
        if (lstm.layers.size() != config.lstm_layers || lstm.hidden != H)
            throw std::logic_error("model: LSTM stack does not match config");
        for (std::size_t l = 0; l < lstm.layers.size(); ++l) {
            const std::size_t d_in = l == 0 ? words.dim : 2 * H;
            for (const auto* p : {&lstm.layers[l].fwd, &lstm.layers[l].bwd}) {
                if (p->w_x.rows != 4 * H || p->w_x.cols != d_in || p->w_h.rows != 4 * H ||
                    p->w_h.cols != H || p->bias.rows != 4 * H || p->bias.cols != 1)
                    throw std::logic_error("model: LSTM layer shape mismatch");
            }
        }
        if (attention.w_a.rows != 2 * H || attention.w_a.cols != words.dim)
            throw std::logic_error("model: W_a shape mismatch");
        if (doc_mlp.w_d2.rows != config.doc_hidden || doc_mlp.w_d2.cols != config.doc_dim ||
            doc_mlp.w_d1.rows != config.doc_dim || doc_mlp.w_d1.cols != config.doc_hidden)
            throw std::logic_error("model: doc MLP shape mismatch");
        if (type_embeddings.rows != ontology.size() || type_embeddings.cols != phi_dim())
            throw std::logic_error("model: type embedding shape mismatch");
        if (thresholds.size() != ontology.size())
            throw std::logic_error("model: threshold length mismatch");
        if (docs.dim != 0 && docs.dim != config.doc_dim)
            throw std::logic_error("model: doc-vector table dimension mismatch");
    }
};

/// Fresh model with every trainable matrix drawn i.i.d. from
/// U(-init_range, init_range) using the seeded generator. Thresholds start
/// at 0.5 everywhere.
inline Model init_model(const TypeOntology& ontology, WordEmbeddingTable words,
                        DocEmbeddingTable docs, const TrainConfig& config) {
    if (ontology.size() == 0) throw std::invalid_argument("init_model: empty ontology");
    config.validate();
    Model m;
    m.ontology = ontology;
    m.words = std::move(words);
    m.docs = std::move(docs);
    m.config = config;

    const std::size_t H = config.hidden;
    m.lstm.hidden = H;
    m.lstm.layers.resize(config.lstm_layers);
    for (std::size_t l = 0; l < config.lstm_layers; ++l) {
        const std::size_t d_in = l == 0 ? m.words.dim : 2 * H;
        for (auto* p : {&m.lstm.layers[l].fwd, &m.lstm.layers[l].bwd}) {
            p->w_x = Matrix(4 * H, d_in);
            p->w_h = Matrix(4 * H, H);
            p->bias = Matrix(4 * H, 1);
        }
    }
    m.attention.w_a = Matrix(2 * H, m.words.dim);
    m.doc_mlp.w_d2 = Matrix(config.doc_hidden, config.doc_dim);
    m.doc_mlp.w_d1 = Matrix(config.doc_dim, config.doc_hidden);
    m.type_embeddings = Matrix(ontology.size(), m.words.dim + 2 * H + config.doc_dim);
    m.thresholds.assign(ontology.size(), 0.5);

    Rng rng(config.seed);
    for (auto& [name, tensor] : m.trainable()) {
        if (name == "word_table") continue;  // pretrained
        rng.fill_uniform(*tensor, config.init_range);
    }
    m.check_shapes();
    return m;
}

enum class RunMode { Train, Eval };

/// Everything the backward pass needs from one mention's forward pass.
struct MentionTrace {
    WindowedSentence window;
    std::vector<std::optional<std::size_t>> token_rows;
    std::vector<Vec> xs;
    Vec f_e;
    BiLstmCache lstm;
    Vec scores;
    Vec attn;
    Vec q;  // W_a f_e
    Vec g_s;
    Vec dm;
    bool has_doc = false;
    DocMLPCache doc;
    Vec g_d;
    std::array<Vec, 3> drop_mask;  // multiplier per component; empty = identity
    Vec phi;
    Vec probs;
};

namespace detail {
inline void apply_dropout(Vec& v, Vec& mask_out, double rate, RunMode mode, Rng* rng) {
    if (mode != RunMode::Train || rate <= 0.0) {
        mask_out.clear();
        return;
    }
    const double scale = 1.0 / (1.0 - rate);
    mask_out.resize(v.size());
    for (std::size_t i = 0; i < v.size(); ++i) {
        mask_out[i] = rng->bernoulli(rate) ? 0.0 : scale;
        v[i] *= mask_out[i];
    }
}
}  // namespace detail

/// Run the featurizer and classifier for one mention. In train mode,
/// inverted dropout is applied independently to f_e, g_s and g_d; eval
/// mode is deterministic.
inline void forward_mention(const Model& model, const Mention& mention, RunMode mode, Rng* rng,
                            MentionTrace& trace) {
    trace.window = context_window(mention, model.config.window);
    const std::size_t n = trace.window.tokens.size();
    trace.token_rows.resize(n);
    trace.xs.assign(n, Vec());
    for (std::size_t i = 0; i < n; ++i) {
        trace.token_rows[i] = model.words.resolve(trace.window.tokens[i]);
        if (trace.token_rows[i]) {
            const double* p = model.words.vectors.a.data() + *trace.token_rows[i] * model.words.dim;
            trace.xs[i].assign(p, p + model.words.dim);
        } else {
            trace.xs[i].assign(model.words.dim, 0.0);
        }
    }

    std::vector<Vec> span_vecs(trace.xs.begin() + static_cast<std::ptrdiff_t>(trace.window.start),
                               trace.xs.begin() + static_cast<std::ptrdiff_t>(trace.window.end));
    trace.f_e = encode_entity(span_vecs);

    bilstm_forward(trace.xs, model.lstm, &trace.lstm);
    trace.q = matvec(model.attention.w_a, trace.f_e);
    trace.scores.resize(n);
    for (std::size_t i = 0; i < n; ++i) trace.scores[i] = dot(trace.lstm.top[i], trace.q);
    trace.attn = softmax(trace.scores);
    trace.g_s = encode_sentence(trace.lstm.top, trace.attn);

    trace.dm.assign(model.config.doc_dim, 0.0);
    trace.has_doc = false;
    if (model.config.doc_context && mention.doc_id && model.docs.dim != 0) {
        if (auto v = model.docs.get(*mention.doc_id)) {
            trace.dm = std::move(*v);
            trace.has_doc = true;
        }
    }
    trace.g_d = encode_document(trace.dm, model.doc_mlp, &trace.doc);

    Vec f_e = trace.f_e, g_s = trace.g_s, g_d = trace.g_d;
    detail::apply_dropout(f_e, trace.drop_mask[0], model.config.dropout_rate, mode, rng);
    detail::apply_dropout(g_s, trace.drop_mask[1], model.config.dropout_rate, mode, rng);
    detail::apply_dropout(g_d, trace.drop_mask[2], model.config.dropout_rate, mode, rng);

    trace.phi.clear();
    trace.phi.reserve(f_e.size() + g_s.size() + g_d.size());
    trace.phi.insert(trace.phi.end(), f_e.begin(), f_e.end());
    trace.phi.insert(trace.phi.end(), g_s.begin(), g_s.end());
    trace.phi.insert(trace.phi.end(), g_d.begin(), g_d.end());

    trace.probs = type_probabilities(trace.phi, model.type_embeddings);
}

/// Eval-mode prediction for one mention.
inline PredictionResult predict_mention(const Model& model, const Mention& mention,
                                        const Vec* thresholds_override = nullptr,
                                        MentionTrace* trace_out = nullptr) {
    MentionTrace local;
    MentionTrace& trace = trace_out ? *trace_out : local;
    forward_mention(model, mention, RunMode::Eval, nullptr, trace);
    const Vec& r = thresholds_override ? *thresholds_override : model.thresholds;
    return predict_types(trace.probs, r, model.config.fallback);
}

}  // namespace entype
