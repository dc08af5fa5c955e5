#pragma once

#include <algorithm>
#include <cctype>
#include <charconv>
#include <fstream>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "entype/corpus.hpp"
#include "entype/tensor.hpp"

namespace entype {

enum class OovPolicy { Zero, LowercaseThenZero };

/// Token -> vector table. Lookup is total: OOV tokens resolve to the
/// lowercase form when the policy allows, else to the zero vector.
class WordEmbeddingTable {
public:
    std::size_t dim = 0;
    OovPolicy policy = OovPolicy::LowercaseThenZero;
    bool trainable = false;
    std::size_t duplicate_count = 0;

    Matrix vectors;  // [vocab, dim]

    std::size_t vocab_size() const { return vocab_.size(); }
    const std::vector<std::string>& vocab() const { return vocab_; }

    std::size_t add(const std::string& token, const Vec& v) {
        auto it = index_.find(token);
        if (it != index_.end()) {
            ++duplicate_count;  // first occurrence wins
            return it->second;
        }
        const std::size_t row = vocab_.size();
        vocab_.push_back(token);
        index_.emplace(token, row);
        if (vectors.cols == 0) vectors.cols = dim;
        vectors.a.insert(vectors.a.end(), v.begin(), v.end());
        vectors.rows = vocab_.size();
        return row;
    }

    /// Row index after OOV policy resolution. nullopt means zero vector.
    std::optional<std::size_t> resolve(const std::string& token) const {
        auto it = index_.find(token);
        if (it != index_.end()) return it->second;
        if (policy == OovPolicy::LowercaseThenZero) {
            std::string lower = token;
            std::transform(lower.begin(), lower.end(), lower.begin(),
                           [](unsigned char c) { return std::tolower(c); });
            it = index_.find(lower);
            if (it != index_.end()) return it->second;
        }
        return std::nullopt;
    }

    Vec lookup(const std::string& token) const {
        auto row = resolve(token);
        Vec v(dim, 0.0);
        if (row) {
            const double* p = vectors.a.data() + *row * dim;
            std::copy(p, p + dim, v.begin());
        }
        return v;
    }

private:
    std::vector<std::string> vocab_;
    std::unordered_map<std::string, std::size_t> index_;
};

namespace detail {
inline bool parse_double(const std::string& field, double& out) {
    const char* b = field.data();
    const char* e = b + field.size();
    auto [p, ec] = std::from_chars(b, e, out);
    return ec == std::errc() && p == e;
}

inline std::vector<std::string> split_ws(const std::string& line) {
    std::vector<std::string> fields;
    std::size_t i = 0;
    while (i < line.size()) {
        while (i < line.size() && (line[i] == ' ' || line[i] == '\t')) ++i;
        std::size_t j = i;
        while (j < line.size() && line[j] != ' ' && line[j] != '\t') ++j;
        if (j > i) fields.push_back(line.substr(i, j - i));
        i = j;
    }
    return fields;
}
}  // namespace detail

/// Read a GloVe-style text file: "token v1 v2 ... vd". The dimension is
/// inferred from the first line (or validated against expected_dim).
inline WordEmbeddingTable load_word_vectors(const std::string& path,
                                            std::optional<std::size_t> expected_dim = {},
                                            OovPolicy policy = OovPolicy::LowercaseThenZero) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open word-vector file: " + path);
    WordEmbeddingTable table;
    table.policy = policy;
    std::string line;
    std::size_t lineno = 0;
    Vec v;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        auto fields = detail::split_ws(line);
        if (fields.size() < 2)
            throw std::runtime_error(path + ":" + std::to_string(lineno) + ": too few fields");
        if (table.dim == 0) {
            table.dim = fields.size() - 1;
            if (expected_dim && table.dim != *expected_dim)
                throw std::runtime_error(path + ":1: dimension " + std::to_string(table.dim) +
                                         " does not match expected " +
                                         std::to_string(*expected_dim));
        } else if (fields.size() - 1 != table.dim) {
            throw std::runtime_error(path + ":" + std::to_string(lineno) + ": expected " +
                                     std::to_string(table.dim) + " values, got " +
                                     std::to_string(fields.size() - 1));
        }
        v.resize(table.dim);
        for (std::size_t k = 0; k < table.dim; ++k) {
            if (!detail::parse_double(fields[k + 1], v[k]))
                throw std::runtime_error(path + ":" + std::to_string(lineno) +
                                         ": non-numeric field \"" + fields[k + 1] + "\"");
        }
        table.add(fields[0], v);
    }
    if (table.vocab_size() == 0) throw std::runtime_error("empty word-vector file: " + path);
    return table;
}

/// doc_id -> vector table. Unlike the word table, duplicate ids are an
/// error and there is no OOV fallback.
class DocEmbeddingTable {
public:
    std::size_t dim = 0;
    Matrix vectors;  // [docs, dim]

    std::size_t size() const { return ids_.size(); }
    const std::vector<std::string>& ids() const { return ids_; }

    void add(const std::string& doc_id, const Vec& v) {
        if (index_.count(doc_id)) throw std::runtime_error("duplicate doc_id \"" + doc_id + "\"");
        if (dim == 0) dim = v.size();
        if (v.size() != dim) throw std::runtime_error("doc vector dimension mismatch");
        index_.emplace(doc_id, ids_.size());
        ids_.push_back(doc_id);
        vectors.cols = dim;
        vectors.a.insert(vectors.a.end(), v.begin(), v.end());
        vectors.rows = ids_.size();
    }

    std::optional<Vec> get(const std::string& doc_id) const {
        if (dim == 0) throw std::runtime_error("doc-vector table is empty");
        auto it = index_.find(doc_id);
        if (it == index_.end()) return std::nullopt;
        Vec v(dim);
        const double* p = vectors.a.data() + it->second * dim;
        std::copy(p, p + dim, v.begin());
        return v;
    }

    bool contains(const std::string& doc_id) const { return index_.count(doc_id) > 0; }

private:
    std::vector<std::string> ids_;
    std::unordered_map<std::string, std::size_t> index_;
};

inline DocEmbeddingTable load_doc_vectors(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open doc-vector file: " + path);
    DocEmbeddingTable table;
    std::string line;
    std::size_t lineno = 0;
    std::size_t dim = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        auto fields = detail::split_ws(line);
        if (fields.size() < 2)
            throw std::runtime_error(path + ":" + std::to_string(lineno) + ": too few fields");
        if (dim == 0) dim = fields.size() - 1;
        if (fields.size() - 1 != dim)
            throw std::runtime_error(path + ":" + std::to_string(lineno) + ": expected " +
                                     std::to_string(dim) + " values, got " +
                                     std::to_string(fields.size() - 1));
        Vec v(dim);
        for (std::size_t k = 0; k < dim; ++k) {
            if (!detail::parse_double(fields[k + 1], v[k]))
                throw std::runtime_error(path + ":" + std::to_string(lineno) +
                                         ": non-numeric field \"" + fields[k + 1] + "\"");
        }
        try {
            table.add(fields[0], v);
        } catch (const std::exception& e) {
            throw std::runtime_error(path + ":" + std::to_string(lineno) + ": " + e.what());
        }
    }
    return table;
}

inline void save_doc_vectors(const DocEmbeddingTable& table, std::ostream& os) {
    os.precision(9);
    for (std::size_t i = 0; i < table.size(); ++i) {
        os << table.ids()[i];
        for (std::size_t k = 0; k < table.dim; ++k) os << " " << table.vectors.at(i, k);
        os << "\n";
    }
}

struct PVDMConfig {
    std::size_t d_doc = 50;
    std::size_t context_size = 5;  // tokens on each side of the center word
    std::size_t negative_samples = 5;
    std::size_t epochs = 20;
    double lr = 0.025;
    std::size_t min_count = 2;
    std::uint64_t seed = 1;
};

/// Distributed-memory paragraph vectors: a shared document vector is
/// averaged with the context-word input vectors and trained to predict the
/// center word with negative sampling.
struct PVDMModel {
    PVDMConfig config;
    std::vector<std::string> vocab;
    std::unordered_map<std::string, std::size_t> vocab_index;
    Matrix word_input;   // [vocab, d_doc]
    Matrix word_output;  // [vocab, d_doc]
    std::vector<std::string> doc_ids;
    Matrix doc_vectors;  // [docs, d_doc]
    std::vector<double> epoch_loss;

    // unigram^0.75 sampling table
    std::vector<std::size_t> negative_table;

    DocEmbeddingTable doc_table() const {
        DocEmbeddingTable t;
        for (std::size_t i = 0; i < doc_ids.size(); ++i) {
            Vec v(config.d_doc);
            const double* p = doc_vectors.a.data() + i * config.d_doc;
            std::copy(p, p + config.d_doc, v.begin());
            t.add(doc_ids[i], v);
        }
        return t;
    }
};

namespace detail {

struct PVDMTarget {
    std::size_t doc = 0;
    std::size_t center = 0;                // vocab id
    std::vector<std::size_t> context;      // vocab ids, may be empty
};

// One negative-sampling step on hidden vector h. Returns the loss and
// writes the gradient with respect to h. Output word vectors are updated
// only when word_output_mut is non-null.
inline double pvdm_step(const Matrix& word_output, Matrix* word_output_mut,
                        const std::vector<std::size_t>& neg_table, std::size_t n_neg,
                        const Vec& h, std::size_t center, Rng& rng, Vec& grad_h, double lr) {
    const std::size_t d = h.size();
    std::fill(grad_h.begin(), grad_h.end(), 0.0);
    double loss = 0.0;
    for (std::size_t s = 0; s < n_neg + 1; ++s) {
        std::size_t target;
        double label;
        if (s == 0) {
            target = center;
            label = 1.0;
        } else {
            target = neg_table[rng.below(neg_table.size())];
            if (target == center) continue;
            label = 0.0;
        }
        const double* u = word_output.a.data() + target * d;
        double z = 0.0;
        for (std::size_t k = 0; k < d; ++k) z += u[k] * h[k];
        const double p = sigmoid(z);
        loss -= label == 1.0 ? std::log(std::max(p, 1e-300))
                             : std::log(std::max(1.0 - p, 1e-300));
        const double g = p - label;
        double* u_mut =
            word_output_mut ? word_output_mut->a.data() + target * d : nullptr;
        for (std::size_t k = 0; k < d; ++k) {
            grad_h[k] += g * u[k];
            if (u_mut) u_mut[k] -= lr * g * h[k];
        }
    }
    return loss;
}

}  // namespace detail

inline PVDMModel train_pvdm(const std::vector<DocumentRecord>& documents, PVDMConfig config) {
    if (documents.empty()) throw std::runtime_error("train_pvdm: no documents");
    PVDMModel m;
    m.config = config;

    std::unordered_map<std::string, std::size_t> counts;
    for (const auto& doc : documents)
        for (const auto& tok : doc.tokens) ++counts[tok];
    for (const auto& doc : documents)
        for (const auto& tok : doc.tokens) {
            auto it = counts.find(tok);
            if (it->second >= config.min_count && !m.vocab_index.count(tok)) {
                m.vocab_index.emplace(tok, m.vocab.size());
                m.vocab.push_back(tok);
            }
        }
    if (m.vocab.empty())
        throw std::runtime_error("train_pvdm: vocabulary empty after min-count filter");

    const std::size_t d = config.d_doc;
    Rng rng(config.seed);
    m.word_input = Matrix(m.vocab.size(), d);
    m.word_output = Matrix(m.vocab.size(), d);  // zero init
    rng.fill_uniform(m.word_input, 0.5 / static_cast<double>(d));
    m.doc_vectors = Matrix(documents.size(), d);
    rng.fill_uniform(m.doc_vectors, 0.5 / static_cast<double>(d));
    for (const auto& doc : documents) m.doc_ids.push_back(doc.doc_id);

    // sampling table proportional to count^0.75
    {
        std::vector<double> weights(m.vocab.size());
        double total = 0.0;
        for (std::size_t i = 0; i < m.vocab.size(); ++i) {
            weights[i] = std::pow(static_cast<double>(counts[m.vocab[i]]), 0.75);
            total += weights[i];
        }
        const std::size_t table_size = std::max<std::size_t>(m.vocab.size() * 16, 1024);
        m.negative_table.reserve(table_size);
        double cum = 0.0;
        std::size_t w = 0;
        for (std::size_t i = 0; i < table_size; ++i) {
            const double frac = (static_cast<double>(i) + 0.5) / static_cast<double>(table_size);
            while (w + 1 < m.vocab.size() && cum + weights[w] < frac * total) cum += weights[w++];
            m.negative_table.push_back(w);
        }
    }

    std::vector<detail::PVDMTarget> targets;
    for (std::size_t di = 0; di < documents.size(); ++di) {
        const auto& toks = documents[di].tokens;
        for (std::size_t i = 0; i < toks.size(); ++i) {
            auto it = m.vocab_index.find(toks[i]);
            if (it == m.vocab_index.end()) continue;
            detail::PVDMTarget t;
            t.doc = di;
            t.center = it->second;
            const std::size_t lo = i > config.context_size ? i - config.context_size : 0;
            const std::size_t hi = std::min(toks.size(), i + config.context_size + 1);
            for (std::size_t j = lo; j < hi; ++j) {
                if (j == i) continue;
                auto jt = m.vocab_index.find(toks[j]);
                if (jt != m.vocab_index.end()) t.context.push_back(jt->second);
            }
            targets.push_back(std::move(t));
        }
    }
    if (targets.empty()) throw std::runtime_error("train_pvdm: no in-vocabulary center words");

    const double total_steps =
        static_cast<double>(config.epochs) * static_cast<double>(targets.size());
    std::size_t step = 0;
    Vec h(d), grad_h(d);
    for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
        double epoch_loss = 0.0;
        for (const auto& t : targets) {
            const double lr =
                config.lr * std::max(1e-4, 1.0 - static_cast<double>(step) / total_steps);
            ++step;
            const std::size_t fan_in = 1 + t.context.size();
            double* dv = m.doc_vectors.a.data() + t.doc * d;
            for (std::size_t k = 0; k < d; ++k) h[k] = dv[k];
            for (std::size_t c : t.context) {
                const double* wv = m.word_input.a.data() + c * d;
                for (std::size_t k = 0; k < d; ++k) h[k] += wv[k];
            }
            for (std::size_t k = 0; k < d; ++k) h[k] /= static_cast<double>(fan_in);

            epoch_loss += detail::pvdm_step(m.word_output, &m.word_output, m.negative_table,
                                            config.negative_samples, h, t.center, rng, grad_h,
                                            lr);

            const double scale = lr / static_cast<double>(fan_in);
            for (std::size_t k = 0; k < d; ++k) dv[k] -= scale * grad_h[k];
            for (std::size_t c : t.context) {
                double* wv = m.word_input.a.data() + c * d;
                for (std::size_t k = 0; k < d; ++k) wv[k] -= scale * grad_h[k];
            }
        }
        m.epoch_loss.push_back(epoch_loss / static_cast<double>(targets.size()));
    }
    return m;
}

/// Gradient-descent inference of a vector for an unseen document, word
/// matrices frozen. Deterministic under a fixed seed.
inline Vec infer_doc_vector(const PVDMModel& model, const std::vector<std::string>& tokens,
                            std::size_t steps = 50, std::uint64_t seed = 1,
                            bool* all_oov = nullptr) {
    const std::size_t d = model.config.d_doc;
    std::vector<std::size_t> ids;
    for (const auto& tok : tokens) {
        auto it = model.vocab_index.find(tok);
        if (it != model.vocab_index.end()) ids.push_back(it->second);
    }
    if (all_oov) *all_oov = ids.empty();
    if (ids.empty()) return Vec(d, 0.0);

    Rng rng(seed);
    Matrix dvm(1, d);
    rng.fill_uniform(dvm, 0.5 / static_cast<double>(d));
    Vec dv = dvm.a;

    const std::size_t ctx = model.config.context_size;
    Vec h(d), grad_h(d);
    const double total_steps = static_cast<double>(steps) * static_cast<double>(ids.size());
    std::size_t step = 0;
    for (std::size_t s = 0; s < steps; ++s) {
        for (std::size_t i = 0; i < ids.size(); ++i) {
            const double lr = model.config.lr *
                              std::max(1e-4, 1.0 - static_cast<double>(step) / total_steps);
            ++step;
            std::size_t fan_in = 1;
            for (std::size_t k = 0; k < d; ++k) h[k] = dv[k];
            const std::size_t lo = i > ctx ? i - ctx : 0;
            const std::size_t hi = std::min(ids.size(), i + ctx + 1);
            for (std::size_t j = lo; j < hi; ++j) {
                if (j == i) continue;
                const double* wv = model.word_input.a.data() + ids[j] * d;
                for (std::size_t k = 0; k < d; ++k) h[k] += wv[k];
                ++fan_in;
            }
            for (std::size_t k = 0; k < d; ++k) h[k] /= static_cast<double>(fan_in);
            detail::pvdm_step(model.word_output, nullptr, model.negative_table,
                              model.config.negative_samples, h, ids[i], rng, grad_h, lr);
            const double scale = lr / static_cast<double>(fan_in);
            for (std::size_t k = 0; k < d; ++k) dv[k] -= scale * grad_h[k];
        }
    }
    return dv;
}

}  // namespace entype
