#pragma once

// Shared fixtures and independent oracles for the test and acceptance
// suites. Oracles here must stay independent of the library code paths
// they check.

#include <algorithm>
#include <atomic>
#include <filesystem>
#include <fstream>
#include <functional>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <unistd.h>

#include "entype/corpus.hpp"
#include "entype/metrics.hpp"
#include "entype/model.hpp"
#include "entype/training.hpp"

namespace testsupport {

namespace fs = std::filesystem;

class TempDir {
public:
    explicit TempDir(const std::string& tag) {
        static std::atomic<unsigned> counter{0};
        path_ = fs::temp_directory_path() /
                ("entype_" + tag + "_" + std::to_string(::getpid()) + "_" +
                 std::to_string(counter++));
        fs::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        fs::remove_all(path_, ec);
    }
    fs::path operator/(const std::string& name) const { return path_ / name; }
    const fs::path& path() const { return path_; }

private:
    fs::path path_;
};

inline void write_file(const fs::path& path, const std::string& content) {
    std::ofstream out(path);
    out << content;
}

/// Random word-vector file covering the given tokens.
inline void write_word_vectors(const fs::path& path, const std::vector<std::string>& tokens,
                               std::size_t dim, unsigned seed, double scale = 1.0) {
    std::mt19937 gen(seed);
    std::uniform_real_distribution<double> dist(-scale, scale);
    std::ofstream out(path);
    out.precision(8);
    for (const auto& tok : tokens) {
        out << tok;
        for (std::size_t k = 0; k < dim; ++k) out << " " << dist(gen);
        out << "\n";
    }
}

// ---------------------------------------------------------------------
// synthetic datasets

/// Mentions whose head token alone determines the single gold type.
/// Sentences vary in filler tokens so the encoder sees some variety.
struct HeadTokenData {
    std::vector<std::string> vocab;
    std::string train_jsonl;
    std::size_t n_types = 0;
};

inline HeadTokenData make_head_token_data(std::size_t n_mentions, std::size_t n_types,
                                          unsigned seed) {
    std::mt19937 gen(seed);
    const std::vector<std::string> fillers = {"the",  "a",    "said", "report", "on",
                                              "near", "from", "old",  "new",    "big"};
    HeadTokenData data;
    data.n_types = n_types;
    for (std::size_t t = 0; t < n_types; ++t) data.vocab.push_back("head" + std::to_string(t));
    for (const auto& f : fillers) data.vocab.push_back(f);
    std::ostringstream out;
    for (std::size_t i = 0; i < n_mentions; ++i) {
        const std::size_t t = i % n_types;
        nlohmann::json j;
        std::vector<std::string> tokens;
        tokens.push_back(fillers[gen() % fillers.size()]);
        tokens.push_back(fillers[gen() % fillers.size()]);
        tokens.push_back("head" + std::to_string(t));
        tokens.push_back(fillers[gen() % fillers.size()]);
        tokens.push_back(fillers[gen() % fillers.size()]);
        j["tokens"] = tokens;
        j["mention"] = {{"start", 2}, {"end", 3}};
        j["types"] = {"/t" + std::to_string(t)};
        j["doc_id"] = nullptr;
        out << j.dump() << "\n";
    }
    data.train_jsonl = out.str();
    return data;
}

/// Two labels with identical sentence-level evidence; only the linked
/// document's token distribution tells them apart. Documents alternate
/// shared filler tokens with class-specific tokens so that local context
/// windows stay uninformative and the class signal lands in the document
/// vector.
struct DocContextData {
    std::string mentions_jsonl;  // one mention per document
    std::string dev_jsonl;
    std::string docs_jsonl;
    std::vector<std::string> vocab;
};

inline DocContextData make_doc_context_data(std::size_t docs_per_class, std::size_t doc_len,
                                            unsigned seed, std::size_t dev_stride = 3) {
    std::mt19937 gen(seed);
    DocContextData data;
    const std::vector<std::string> vocab_a = {"alpha", "apple", "anchor", "arrow", "amber"};
    const std::vector<std::string> vocab_b = {"bravo", "berry", "basket", "bolt", "bronze"};
    const std::vector<std::string> fillers = {"the", "of", "and", "to", "in"};
    const std::vector<std::string> sentence = {"the", "item", "was", "seen", "here"};
    data.vocab = {"the", "item", "was", "seen", "here"};
    data.vocab.insert(data.vocab.end(), vocab_a.begin(), vocab_a.end());
    data.vocab.insert(data.vocab.end(), vocab_b.begin(), vocab_b.end());

    std::ostringstream train, dev, docs;
    std::size_t idx = 0;  // every dev_stride-th mention goes to dev
    for (std::size_t cls = 0; cls < 2; ++cls) {
        const auto& voc = cls == 0 ? vocab_a : vocab_b;
        for (std::size_t d = 0; d < docs_per_class; ++d, ++idx) {
            const std::string doc_id = (cls == 0 ? "a" : "b") + std::to_string(d);
            nlohmann::json dj;
            dj["doc_id"] = doc_id;
            std::vector<std::string> dtoks;
            for (std::size_t k = 0; k < doc_len; ++k)
                dtoks.push_back(k % 2 == 0 ? fillers[gen() % fillers.size()]
                                           : voc[gen() % voc.size()]);
            dj["tokens"] = dtoks;
            docs << dj.dump() << "\n";

            nlohmann::json mj;
            mj["tokens"] = sentence;
            mj["mention"] = {{"start", 1}, {"end", 2}};
            mj["types"] = {cls == 0 ? "/a" : "/b"};
            mj["doc_id"] = doc_id;
            (idx % dev_stride == 0 ? dev : train) << mj.dump() << "\n";
        }
    }
    data.mentions_jsonl = train.str();
    data.dev_jsonl = dev.str();
    data.docs_jsonl = docs.str();
    return data;
}

// ---------------------------------------------------------------------
// toy model for gradient checks

struct ToyModelSpec {
    std::size_t n_types = 5;
    std::size_t d_word = 10;
    std::size_t hidden = 8;
    std::size_t d_doc = 6;
    std::size_t doc_hidden = 8;
    std::size_t layers = 2;
    double init_range = 0.1;  // large enough to keep fd noise well below the gradients
    std::uint64_t seed = 1;
    bool fine_tune = false;
    bool doc_context = true;
};

inline entype::Model make_toy_model(const ToyModelSpec& spec) {
    entype::TypeOntology onto;
    for (std::size_t t = 0; t < spec.n_types; ++t) onto.add("/t" + std::to_string(t));
    entype::WordEmbeddingTable words;
    words.dim = spec.d_word;
    entype::Rng wr(spec.seed * 131 + 7);
    entype::Matrix row(1, spec.d_word);
    for (int i = 0; i < 12; ++i) {
        wr.fill_uniform(row, 1.0);
        words.add("w" + std::to_string(i), row.a);
    }
    entype::DocEmbeddingTable docs;
    entype::Matrix drow(1, spec.d_doc);
    for (int i = 0; i < 3; ++i) {
        wr.fill_uniform(drow, 1.0);
        docs.add("d" + std::to_string(i), drow.a);
    }
    entype::TrainConfig cfg;
    cfg.hidden = spec.hidden;
    cfg.lstm_layers = spec.layers;
    cfg.doc_dim = spec.d_doc;
    cfg.doc_hidden = spec.doc_hidden;
    cfg.init_range = spec.init_range;
    cfg.seed = spec.seed;
    cfg.window = 4;
    cfg.fine_tune_embeddings = spec.fine_tune;
    cfg.doc_context = spec.doc_context;
    return entype::init_model(onto, std::move(words), std::move(docs), cfg);
}

/// Mentions over the toy vocabulary: mixed lengths, an OOV token, one
/// mention without a document link.
inline std::vector<entype::Mention> make_toy_batch(std::size_t n, unsigned seed,
                                                   std::size_t n_types) {
    std::mt19937 gen(seed);
    std::vector<entype::Mention> batch;
    for (std::size_t i = 0; i < n; ++i) {
        entype::Mention m;
        const std::size_t len = 3 + gen() % 5;
        for (std::size_t k = 0; k < len; ++k) {
            if (gen() % 7 == 0)
                m.tokens.push_back("oov" + std::to_string(gen() % 3));
            else
                m.tokens.push_back("w" + std::to_string(gen() % 12));
        }
        m.start = gen() % len;
        m.end = m.start + 1 + gen() % std::min<std::size_t>(2, len - m.start);
        m.gold.insert(static_cast<int>(gen() % n_types));
        if (gen() % 2 == 0) m.gold.insert(static_cast<int>(gen() % n_types));
        if (i % 3 != 2) m.doc_id = "d" + std::to_string(gen() % 3);
        batch.push_back(std::move(m));
    }
    return batch;
}

// ---------------------------------------------------------------------
// independent metric oracle (plain set arithmetic, rational where exact)

struct OracleScores {
    double strict_p, strict_r, strict_f1;
    double macro_p, macro_r, macro_f1;
    double micro_p, micro_r, micro_f1;
};

inline OracleScores metric_oracle(const std::vector<std::set<int>>& pred,
                                  const std::vector<std::set<int>>& gold) {
    const std::size_t n = pred.size();
    long long exact = 0;
    long long inter_total = 0, pred_total = 0, gold_total = 0;
    long double macro_p = 0.0l, macro_r = 0.0l;
    for (std::size_t i = 0; i < n; ++i) {
        std::vector<int> inter;
        std::set_intersection(pred[i].begin(), pred[i].end(), gold[i].begin(), gold[i].end(),
                              std::back_inserter(inter));
        const long long ov = static_cast<long long>(inter.size());
        if (pred[i] == gold[i]) ++exact;
        inter_total += ov;
        pred_total += static_cast<long long>(pred[i].size());
        gold_total += static_cast<long long>(gold[i].size());
        macro_p += pred[i].empty() ? (gold[i].empty() ? 1.0l : 0.0l)
                                   : static_cast<long double>(ov) / pred[i].size();
        macro_r += gold[i].empty() ? (pred[i].empty() ? 1.0l : 0.0l)
                                   : static_cast<long double>(ov) / gold[i].size();
    }
    OracleScores s{};
    s.strict_p = s.strict_r = static_cast<double>(exact) / static_cast<double>(n);
    s.strict_f1 = s.strict_p + s.strict_r == 0.0 ? 0.0 : s.strict_p;
    s.macro_p = static_cast<double>(macro_p / n);
    s.macro_r = static_cast<double>(macro_r / n);
    s.macro_f1 = s.macro_p + s.macro_r == 0.0
                     ? 0.0
                     : 2.0 * s.macro_p * s.macro_r / (s.macro_p + s.macro_r);
    s.micro_p = pred_total == 0 ? 1.0
                                : static_cast<double>(inter_total) / static_cast<double>(pred_total);
    s.micro_r = gold_total == 0 ? 1.0
                                : static_cast<double>(inter_total) / static_cast<double>(gold_total);
    s.micro_f1 = s.micro_p + s.micro_r == 0.0
                     ? 0.0
                     : 2.0 * s.micro_p * s.micro_r / (s.micro_p + s.micro_r);
    return s;
}

// ---------------------------------------------------------------------
// exhaustive joint threshold search (tiny problems only)

inline double strict_f1_at(const std::vector<entype::Vec>& probs,
                           const std::vector<entype::TypeIdSet>& gold, const entype::Vec& r,
                           bool fallback) {
    std::size_t matches = 0;
    for (std::size_t i = 0; i < probs.size(); ++i) {
        std::set<int> pred;
        for (std::size_t t = 0; t < r.size(); ++t)
            if (probs[i][t] >= r[t]) pred.insert(static_cast<int>(t));
        if (pred.empty() && fallback && !probs[i].empty()) {
            std::size_t best = 0;
            for (std::size_t t = 1; t < probs[i].size(); ++t)
                if (probs[i][t] > probs[i][best]) best = t;
            pred.insert(static_cast<int>(best));
        }
        if (pred == gold[i]) ++matches;
    }
    return static_cast<double>(matches) / static_cast<double>(probs.size());
}

/// Best strict F1 over the full candidate grid (midpoints plus 0.5 per
/// type). Exponential in the type count; callers keep |T| <= 2.
inline double joint_grid_optimum(const std::vector<entype::Vec>& probs,
                                 const std::vector<entype::TypeIdSet>& gold, bool fallback) {
    const std::size_t n_types = probs[0].size();
    std::vector<entype::Vec> cand(n_types);
    for (std::size_t t = 0; t < n_types; ++t) {
        entype::Vec col;
        for (const auto& row : probs) col.push_back(row[t]);
        std::sort(col.begin(), col.end());
        col.erase(std::unique(col.begin(), col.end()), col.end());
        for (std::size_t i = 0; i + 1 < col.size(); ++i)
            cand[t].push_back(0.5 * (col[i] + col[i + 1]));
        cand[t].push_back(0.5);
    }
    entype::Vec r(n_types, 0.5);
    double best = 0.0;
    std::function<void(std::size_t)> rec = [&](std::size_t t) {
        if (t == n_types) {
            best = std::max(best, strict_f1_at(probs, gold, r, fallback));
            return;
        }
        for (double c : cand[t]) {
            r[t] = c;
            rec(t + 1);
        }
    };
    rec(0);
    return best;
}

}  // namespace testsupport
