#pragma once

#include <cstdio>
#include <functional>
#include <numeric>
#include <string>
#include <vector>

#include "entype/model.hpp"
#include "entype/thresholds.hpp"

namespace entype {

/// Gradient holder mirroring the model's trainable tensors.
struct Gradients {
    Matrix type_embeddings, w_a, w_d1, w_d2;
    std::vector<LstmLayerParams> lstm;
    Matrix word_table;
    bool has_word_table = false;

    static Gradients zeros_like(Model& model) {
        Gradients g;
        g.type_embeddings = Matrix(model.type_embeddings.rows, model.type_embeddings.cols);
        g.w_a = Matrix(model.attention.w_a.rows, model.attention.w_a.cols);
        g.w_d1 = Matrix(model.doc_mlp.w_d1.rows, model.doc_mlp.w_d1.cols);
        g.w_d2 = Matrix(model.doc_mlp.w_d2.rows, model.doc_mlp.w_d2.cols);
        g.lstm.resize(model.lstm.layers.size());
        for (std::size_t l = 0; l < g.lstm.size(); ++l) {
            for (int dir = 0; dir < 2; ++dir) {
                const LstmDirParams& p =
                    dir == 0 ? model.lstm.layers[l].fwd : model.lstm.layers[l].bwd;
                LstmDirParams& gp = dir == 0 ? g.lstm[l].fwd : g.lstm[l].bwd;
                gp.w_x = Matrix(p.w_x.rows, p.w_x.cols);
                gp.w_h = Matrix(p.w_h.rows, p.w_h.cols);
                gp.bias = Matrix(p.bias.rows, p.bias.cols);
            }
        }
        g.has_word_table = model.config.fine_tune_embeddings;
        if (g.has_word_table)
            g.word_table = Matrix(model.words.vectors.rows, model.words.vectors.cols);
        return g;
    }

    /// Same order and names as Model::trainable().
    std::vector<NamedTensor> aligned(Model& model) {
        std::vector<NamedTensor> out;
        out.push_back({"type_embeddings", &type_embeddings});
        out.push_back({"attention.W_a", &w_a});
        out.push_back({"doc_mlp.W_d1", &w_d1});
        out.push_back({"doc_mlp.W_d2", &w_d2});
        for (std::size_t l = 0; l < lstm.size(); ++l) {
            const std::string base = "lstm.layer" + std::to_string(l);
            for (int dir = 0; dir < 2; ++dir) {
                LstmDirParams& p = dir == 0 ? lstm[l].fwd : lstm[l].bwd;
                const std::string d = dir == 0 ? ".fwd" : ".bwd";
                out.push_back({base + d + ".W_x", &p.w_x});
                out.push_back({base + d + ".W_h", &p.w_h});
                out.push_back({base + d + ".bias", &p.bias});
            }
        }
        if (model.config.fine_tune_embeddings) out.push_back({"word_table", &word_table});
        return out;
    }
};

namespace detail {

// Backpropagate one direction of one LSTM layer. d_ext holds the incoming
// gradient on this direction's half of the layer output; d_input receives
// the gradient on the layer inputs.
inline void lstm_backward_dir(const LstmDirParams& p, const std::vector<Vec>& inputs,
                              const std::vector<LstmStepCache>& steps,
                              const std::vector<Vec>& d_ext, bool forward_dir,
                              LstmDirParams& grad, std::vector<Vec>& d_input) {
    const std::size_t n = inputs.size();
    const std::size_t H = p.hidden();
    Vec dh_carry(H, 0.0), dc_carry(H, 0.0);
    Vec dz(4 * H);
    for (std::size_t s = 0; s < n; ++s) {
        // reverse of processing order
        const std::size_t t = forward_dir ? n - 1 - s : s;
        const bool first_step = forward_dir ? t == 0 : t == n - 1;
        const LstmStepCache& sc = steps[t];
        const LstmStepCache* prev =
            first_step ? nullptr : &steps[forward_dir ? t - 1 : t + 1];
        for (std::size_t k = 0; k < H; ++k) {
            const double dh = d_ext[t][k] + dh_carry[k];
            const double tc = sc.tanh_c[k];
            const double o = sc.gate_o[k];
            const double dc = dc_carry[k] + dh * o * (1.0 - tc * tc);
            const double i = sc.gate_i[k];
            const double f = sc.gate_f[k];
            const double g = sc.gate_g[k];
            const double c_prev = prev ? prev->c[k] : 0.0;
            dz[k] = dc * g * i * (1.0 - i);
            dz[H + k] = dc * c_prev * f * (1.0 - f);
            dz[2 * H + k] = dc * i * (1.0 - g * g);
            dz[3 * H + k] = dh * tc * o * (1.0 - o);
            dc_carry[k] = dc * f;
        }
        add_outer(grad.w_x, dz, inputs[t]);
        if (prev) add_outer(grad.w_h, dz, prev->h);
        for (std::size_t k = 0; k < 4 * H; ++k) grad.bias.a[k] += dz[k];
        axpy(d_input[t], matvec_t(p.w_x, dz));
        dh_carry = matvec_t(p.w_h, dz);
    }
}

}  // namespace detail

/// Backward pass for one mention; accumulates scaled gradients.
inline void backward_mention(const Model& model, const MentionTrace& trace,
                             const LabelVector& labels, double scale, Gradients& grads) {
    const std::size_t n_types = model.ontology.size();
    const std::size_t d_word = model.words.dim;
    const std::size_t d_ctx = model.lstm.output_dim();
    const std::size_t n = trace.xs.size();

    // classifier: d loss / d logit = p - y
    Vec dlogit(n_types);
    for (std::size_t t = 0; t < n_types; ++t) dlogit[t] = (trace.probs[t] - labels[t]) * scale;
    add_outer(grads.type_embeddings, dlogit, trace.phi);
    Vec dphi = matvec_t(model.type_embeddings, dlogit);

    Vec d_fe(dphi.begin(), dphi.begin() + static_cast<std::ptrdiff_t>(d_word));
    Vec d_gs(dphi.begin() + static_cast<std::ptrdiff_t>(d_word),
             dphi.begin() + static_cast<std::ptrdiff_t>(d_word + d_ctx));
    Vec d_gd(dphi.begin() + static_cast<std::ptrdiff_t>(d_word + d_ctx), dphi.end());
    auto unmask = [](Vec& d, const Vec& mask) {
        if (mask.empty()) return;
        for (std::size_t i = 0; i < d.size(); ++i) d[i] *= mask[i];
    };
    unmask(d_fe, trace.drop_mask[0]);
    unmask(d_gs, trace.drop_mask[1]);
    unmask(d_gd, trace.drop_mask[2]);

    // document MLP: g_d = relu(W_d1 tanh(W_d2 dm))
    {
        Vec dz(trace.doc.z.size());
        for (std::size_t k = 0; k < dz.size(); ++k) dz[k] = trace.doc.z[k] > 0.0 ? d_gd[k] : 0.0;
        add_outer(grads.w_d1, dz, trace.doc.tanh_u);
        Vec du = matvec_t(model.doc_mlp.w_d1, dz);
        for (std::size_t k = 0; k < du.size(); ++k)
            du[k] *= 1.0 - trace.doc.tanh_u[k] * trace.doc.tanh_u[k];
        add_outer(grads.w_d2, du, trace.dm);
    }

    // attention + weighted sum
    std::vector<Vec> dh(n, Vec(d_ctx, 0.0));
    Vec da(n);
    for (std::size_t i = 0; i < n; ++i) {
        da[i] = dot(trace.lstm.top[i], d_gs);
        axpy(dh[i], d_gs, trace.attn[i]);
    }
    double a_dot_da = 0.0;
    for (std::size_t i = 0; i < n; ++i) a_dot_da += trace.attn[i] * da[i];
    Vec ds(n);
    for (std::size_t i = 0; i < n; ++i) ds[i] = trace.attn[i] * (da[i] - a_dot_da);
    Vec sum_ds_h(d_ctx, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        axpy(sum_ds_h, trace.lstm.top[i], ds[i]);
        axpy(dh[i], trace.q, ds[i]);
    }
    add_outer(grads.w_a, sum_ds_h, trace.f_e);
    axpy(d_fe, matvec_t(model.attention.w_a, sum_ds_h));

    // bi-LSTM stack, top layer down
    std::vector<Vec> d_out = dh;
    const std::size_t H = model.lstm.hidden;
    for (std::size_t li = model.lstm.layers.size(); li-- > 0;) {
        const std::size_t d_in = li == 0 ? d_word : d_ctx;
        std::vector<Vec> d_input(n, Vec(d_in, 0.0));
        for (int dir = 0; dir < 2; ++dir) {
            const std::size_t off = dir == 0 ? 0 : H;
            std::vector<Vec> d_ext(n, Vec(H, 0.0));
            for (std::size_t t = 0; t < n; ++t)
                for (std::size_t k = 0; k < H; ++k) d_ext[t][k] = d_out[t][off + k];
            const LstmDirParams& p =
                dir == 0 ? model.lstm.layers[li].fwd : model.lstm.layers[li].bwd;
            LstmDirParams& gp = dir == 0 ? grads.lstm[li].fwd : grads.lstm[li].bwd;
            detail::lstm_backward_dir(p, trace.lstm.inputs[li], trace.lstm.steps[li][dir], d_ext,
                                      dir == 0, gp, d_input);
        }
        d_out = std::move(d_input);
    }

    // word-vector gradients when fine-tuning: entity average + layer-0 inputs
    if (grads.has_word_table) {
        const std::size_t span_len = trace.window.end - trace.window.start;
        for (std::size_t i = 0; i < n; ++i) {
            if (!trace.token_rows[i]) continue;
            const std::size_t row = *trace.token_rows[i];
            double* wg = grads.word_table.a.data() + row * d_word;
            for (std::size_t k = 0; k < d_word; ++k) wg[k] += d_out[i][k];
            if (i >= trace.window.start && i < trace.window.end)
                for (std::size_t k = 0; k < d_word; ++k)
                    wg[k] += d_fe[k] / static_cast<double>(span_len);
        }
    }
}

/// Mean loss over a batch plus gradients for every trainable parameter.
/// Train mode applies inverted dropout to the three feature vectors; eval
/// mode is deterministic with dropout disabled.
inline std::pair<double, Gradients> forward_backward(const std::vector<Mention>& batch,
                                                     Model& model, RunMode mode, Rng* rng) {
    if (batch.empty()) throw std::invalid_argument("forward_backward: empty batch");
    Gradients grads = Gradients::zeros_like(model);
    const double scale = 1.0 / static_cast<double>(batch.size());
    double loss = 0.0;
    MentionTrace trace;
    for (const auto& mention : batch) {
        forward_mention(model, mention, mode, rng, trace);
        const LabelVector labels = label_vector(mention, model.ontology);
        loss += nll_loss(trace.probs, labels) * scale;
        backward_mention(model, trace, labels, scale, grads);
    }
    return {loss, std::move(grads)};
}

inline double batch_loss(const std::vector<Mention>& batch, const Model& model) {
    double loss = 0.0;
    MentionTrace trace;
    for (const auto& mention : batch) {
        forward_mention(model, mention, RunMode::Eval, nullptr, trace);
        loss += nll_loss(trace.probs, label_vector(mention, model.ontology));
    }
    return loss / static_cast<double>(batch.size());
}

namespace detail {

// Eval-mode batch loss evaluated in extended precision. The central
// differences in grad_check divide loss differences by 2e-5; at double
// rounding the quotient noise (~5e-11) swamps gradients near zero, so the
// oracle re-evaluates the same function with long double arithmetic.
inline long double mention_loss_precise(const Model& model, const Mention& mention) {
    using ld = long double;
    const WindowedSentence win = context_window(mention, model.config.window);
    const std::size_t n = win.tokens.size();
    const std::size_t d_word = model.words.dim;
    const std::size_t H = model.lstm.hidden;

    std::vector<std::vector<ld>> xs(n, std::vector<ld>(d_word, 0.0l));
    for (std::size_t i = 0; i < n; ++i)
        if (auto row = model.words.resolve(win.tokens[i])) {
            const double* p = model.words.vectors.a.data() + *row * d_word;
            for (std::size_t k = 0; k < d_word; ++k) xs[i][k] = p[k];
        }

    std::vector<ld> f_e(d_word, 0.0l);
    for (std::size_t i = win.start; i < win.end; ++i)
        for (std::size_t k = 0; k < d_word; ++k) f_e[k] += xs[i][k];
    for (auto& x : f_e) x /= static_cast<ld>(win.end - win.start);

    auto lstm_dir = [&](const LstmDirParams& p, const std::vector<std::vector<ld>>& in,
                        bool forward, std::vector<std::vector<ld>>& out, std::size_t off) {
        std::vector<ld> h(H, 0.0l), c(H, 0.0l), z(4 * H);
        for (std::size_t s = 0; s < n; ++s) {
            const std::size_t t = forward ? s : n - 1 - s;
            for (std::size_t r = 0; r < 4 * H; ++r) {
                ld acc = p.bias.a[r];
                const double* row = p.w_x.a.data() + r * p.w_x.cols;
                for (std::size_t k = 0; k < p.w_x.cols; ++k) acc += row[k] * in[t][k];
                const double* rrow = p.w_h.a.data() + r * H;
                for (std::size_t k = 0; k < H; ++k) acc += rrow[k] * h[k];
                z[r] = acc;
            }
            for (std::size_t k = 0; k < H; ++k) {
                const ld gi = 1.0l / (1.0l + std::exp(-z[k]));
                const ld gf = 1.0l / (1.0l + std::exp(-z[H + k]));
                const ld gg = std::tanh(z[2 * H + k]);
                const ld go = 1.0l / (1.0l + std::exp(-z[3 * H + k]));
                c[k] = gf * c[k] + gi * gg;
                h[k] = go * std::tanh(c[k]);
                out[t][off + k] = h[k];
            }
        }
    };

    std::vector<std::vector<ld>> layer_in = xs;
    for (std::size_t l = 0; l < model.lstm.layers.size(); ++l) {
        std::vector<std::vector<ld>> layer_out(n, std::vector<ld>(2 * H, 0.0l));
        lstm_dir(model.lstm.layers[l].fwd, layer_in, true, layer_out, 0);
        lstm_dir(model.lstm.layers[l].bwd, layer_in, false, layer_out, H);
        layer_in = std::move(layer_out);
    }

    std::vector<ld> q(2 * H, 0.0l);
    for (std::size_t r = 0; r < 2 * H; ++r) {
        const double* row = model.attention.w_a.a.data() + r * d_word;
        ld acc = 0.0l;
        for (std::size_t k = 0; k < d_word; ++k) acc += row[k] * f_e[k];
        q[r] = acc;
    }
    std::vector<ld> scores(n, 0.0l);
    ld mx = -HUGE_VALL;
    for (std::size_t i = 0; i < n; ++i) {
        ld acc = 0.0l;
        for (std::size_t k = 0; k < 2 * H; ++k) acc += layer_in[i][k] * q[k];
        scores[i] = acc;
        mx = std::max(mx, acc);
    }
    ld denom = 0.0l;
    for (auto& s : scores) {
        s = std::exp(s - mx);
        denom += s;
    }
    std::vector<ld> g_s(2 * H, 0.0l);
    for (std::size_t i = 0; i < n; ++i) {
        const ld a = scores[i] / denom;
        for (std::size_t k = 0; k < 2 * H; ++k) g_s[k] += a * layer_in[i][k];
    }

    const std::size_t d_doc = model.config.doc_dim;
    std::vector<ld> dm(d_doc, 0.0l);
    if (model.config.doc_context && mention.doc_id && model.docs.dim != 0)
        if (auto v = model.docs.get(*mention.doc_id))
            for (std::size_t k = 0; k < d_doc; ++k) dm[k] = (*v)[k];
    std::vector<ld> tanh_u(model.doc_mlp.w_d2.rows, 0.0l);
    for (std::size_t r = 0; r < model.doc_mlp.w_d2.rows; ++r) {
        const double* row = model.doc_mlp.w_d2.a.data() + r * d_doc;
        ld acc = 0.0l;
        for (std::size_t k = 0; k < d_doc; ++k) acc += row[k] * dm[k];
        tanh_u[r] = std::tanh(acc);
    }
    std::vector<ld> g_d(model.doc_mlp.w_d1.rows, 0.0l);
    for (std::size_t r = 0; r < model.doc_mlp.w_d1.rows; ++r) {
        const double* row = model.doc_mlp.w_d1.a.data() + r * model.doc_mlp.w_d1.cols;
        ld acc = 0.0l;
        for (std::size_t k = 0; k < model.doc_mlp.w_d1.cols; ++k) acc += row[k] * tanh_u[k];
        g_d[r] = acc > 0.0l ? acc : 0.0l;
    }

    std::vector<ld> phi;
    phi.reserve(d_word + 2 * H + g_d.size());
    phi.insert(phi.end(), f_e.begin(), f_e.end());
    phi.insert(phi.end(), g_s.begin(), g_s.end());
    phi.insert(phi.end(), g_d.begin(), g_d.end());

    const LabelVector y = label_vector(mention, model.ontology);
    constexpr ld eps = 1e-12l;
    ld loss = 0.0l;
    for (std::size_t t = 0; t < model.ontology.size(); ++t) {
        const double* row = model.type_embeddings.a.data() + t * model.type_embeddings.cols;
        ld z = 0.0l;
        for (std::size_t k = 0; k < phi.size(); ++k) z += row[k] * phi[k];
        ld p = z >= 0.0l ? 1.0l / (1.0l + std::exp(-z)) : std::exp(z) / (1.0l + std::exp(z));
        p = std::min(1.0l - eps, std::max(eps, p));
        loss -= y[t] == 1.0 ? std::log(p) : std::log(1.0l - p);
    }
    return loss;
}

inline long double batch_loss_precise(const std::vector<Mention>& batch, const Model& model) {
    long double loss = 0.0l;
    for (const auto& mention : batch) loss += mention_loss_precise(model, mention);
    return loss / static_cast<long double>(batch.size());
}

}  // namespace detail

struct AdamState {
    std::vector<Matrix> m, v;
    std::size_t t = 0;

    static AdamState make(Model& model) {
        AdamState s;
        for (auto& [name, tensor] : model.trainable()) {
            s.m.emplace_back(tensor->rows, tensor->cols);
            s.v.emplace_back(tensor->rows, tensor->cols);
        }
        return s;
    }
};

/// Standard bias-corrected Adam over all trainable tensors.
inline void adam_update(Model& model, Gradients& grads, AdamState& state) {
    auto params = model.trainable();
    auto gs = grads.aligned(model);
    if (params.size() != gs.size() || params.size() != state.m.size())
        throw std::logic_error("adam_update: tensor list mismatch");
    ++state.t;
    const TrainConfig& c = model.config;
    const double bc1 = 1.0 - std::pow(c.adam_beta1, static_cast<double>(state.t));
    const double bc2 = 1.0 - std::pow(c.adam_beta2, static_cast<double>(state.t));
    for (std::size_t i = 0; i < params.size(); ++i) {
        Matrix& p = *params[i].tensor;
        const Matrix& g = *gs[i].tensor;
        Matrix& m = state.m[i];
        Matrix& v = state.v[i];
        for (std::size_t k = 0; k < p.size(); ++k) {
            m.a[k] = c.adam_beta1 * m.a[k] + (1.0 - c.adam_beta1) * g.a[k];
            v.a[k] = c.adam_beta2 * v.a[k] + (1.0 - c.adam_beta2) * g.a[k] * g.a[k];
            const double m_hat = m.a[k] / bc1;
            const double v_hat = v.a[k] / bc2;
            p.a[k] -= c.learning_rate * m_hat / (std::sqrt(v_hat) + c.adam_eps);
        }
    }
}

struct GradCheckReport {
    double max_rel_error = 0.0;
    std::string worst_parameter;
    std::vector<std::pair<std::string, double>> per_tensor;
    bool passed = false;
};

/// Central-difference verification of the analytic gradients. Samples at
/// least `sample_per_tensor` coordinates from every tensor (all of them
/// for small tensors). The `corrupt` hook lets tests inject faults into
/// the analytic gradients before comparison.
inline GradCheckReport grad_check(
    Model& model, const std::vector<Mention>& batch, double step = 1e-5, double tolerance = 1e-4,
    std::size_t sample_per_tensor = 50, std::uint64_t seed = 7,
    const std::function<void(Gradients&, Model&)>& corrupt = nullptr) {
    auto [loss, grads] = forward_backward(batch, model, RunMode::Eval, nullptr);
    (void)loss;
    if (corrupt) corrupt(grads, model);
    auto params = model.trainable();
    auto gs = grads.aligned(model);
    Rng rng(seed);
    GradCheckReport report;
    for (std::size_t i = 0; i < params.size(); ++i) {
        Matrix& p = *params[i].tensor;
        const Matrix& g = *gs[i].tensor;
        std::vector<std::size_t> coords;
        if (p.size() <= sample_per_tensor) {
            coords.resize(p.size());
            std::iota(coords.begin(), coords.end(), 0);
        } else {
            for (std::size_t s = 0; s < sample_per_tensor; ++s) coords.push_back(rng.below(p.size()));
        }
        double tensor_max = 0.0;
        for (std::size_t k : coords) {
            const double saved = p.a[k];
            p.a[k] = saved + step;
            const long double up = detail::batch_loss_precise(batch, model);
            p.a[k] = saved - step;
            const long double down = detail::batch_loss_precise(batch, model);
            p.a[k] = saved;
            const double numeric = static_cast<double>((up - down) / (2.0l * step));
            const double analytic = g.a[k];
            const double rel = std::abs(analytic - numeric) /
                               std::max(1e-8, std::abs(analytic) + std::abs(numeric));
            tensor_max = std::max(tensor_max, rel);
        }
        report.per_tensor.emplace_back(params[i].name, tensor_max);
        if (tensor_max > report.max_rel_error) {
            report.max_rel_error = tensor_max;
            report.worst_parameter = params[i].name;
        }
    }
    report.passed = report.max_rel_error < tolerance;
    return report;
}

struct EvalResult {
    ScoreTriple strict_score, macro_score, micro_score;
    std::vector<TypeIdSet> predictions;
    std::vector<TypeIdSet> gold;
};

inline EvalResult evaluate_model(const Model& model, const std::vector<Mention>& mentions,
                                 const Vec* thresholds_override = nullptr) {
    EvalResult res;
    for (const auto& m : mentions) {
        res.predictions.push_back(predict_mention(model, m, thresholds_override).predicted);
        res.gold.push_back(m.gold);
    }
    res.strict_score = strict(res.predictions, res.gold);
    res.macro_score = loose_macro(res.predictions, res.gold);
    res.micro_score = loose_micro(res.predictions, res.gold);
    return res;
}

struct TrainResult {
    Model model;
    std::vector<std::string> log_lines;  // epoch, train_loss, dev strict/macro/micro
    std::size_t best_epoch = 0;
    double best_dev_strict = -1.0;
    double final_dev_strict = 0.0;
};

/// Epochs of seeded shuffled mini-batches with Adam updates. After each
/// epoch the dev split is scored at thresholds 0.5; the parameters with the
/// best dev strict F1 are retained. Stops at max_epochs or once
/// `patience` epochs pass without improvement.
inline TrainResult train_loop(const Dataset& ds, WordEmbeddingTable words, DocEmbeddingTable docs,
                              const TrainConfig& config,
                              const std::function<void(const std::string&)>& on_log = nullptr) {
    if (ds.train.empty()) throw std::invalid_argument("train_loop: empty train split");
    if (ds.dev.empty()) throw std::invalid_argument("train_loop: empty dev split");
    TrainResult result;
    result.model = init_model(ds.ontology, std::move(words), std::move(docs), config);
    Model& model = result.model;
    AdamState adam = AdamState::make(model);
    Rng rng(config.seed + 0x9e3779b97f4a7c15ull);

    const Vec half(model.ontology.size(), 0.5);
    std::vector<Matrix> best_params;
    std::size_t since_best = 0;

    std::vector<std::size_t> order(ds.train.size());
    std::iota(order.begin(), order.end(), 0);
    std::vector<Mention> batch;
    for (std::size_t epoch = 1; epoch <= config.max_epochs; ++epoch) {
        rng.shuffle(order);
        double epoch_loss = 0.0;
        std::size_t seen = 0;
        for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
            const std::size_t stop = std::min(order.size(), start + config.batch_size);
            batch.clear();
            for (std::size_t i = start; i < stop; ++i) batch.push_back(ds.train[order[i]]);
            auto [loss, grads] = forward_backward(batch, model, RunMode::Train, &rng);
            adam_update(model, grads, adam);
            epoch_loss += loss * static_cast<double>(batch.size());
            seen += batch.size();
        }
        epoch_loss /= static_cast<double>(seen);

        EvalResult dev = evaluate_model(model, ds.dev, &half);
        char line[160];
        std::snprintf(line, sizeof(line), "%zu\t%.6f\t%.6f\t%.6f\t%.6f", epoch, epoch_loss,
                      dev.strict_score.f1, dev.macro_score.f1, dev.micro_score.f1);
        result.log_lines.emplace_back(line);
        if (on_log) on_log(result.log_lines.back());

        result.final_dev_strict = dev.strict_score.f1;
        if (dev.strict_score.f1 > result.best_dev_strict) {
            result.best_dev_strict = dev.strict_score.f1;
            result.best_epoch = epoch;
            best_params.clear();
            for (auto& [name, tensor] : model.trainable()) best_params.push_back(*tensor);
            since_best = 0;
        } else {
            ++since_best;
        }
        if (since_best >= config.patience) break;
    }

    auto params = model.trainable();
    for (std::size_t i = 0; i < params.size(); ++i) *params[i].tensor = best_params[i];
    return result;
}

}  // namespace entype
