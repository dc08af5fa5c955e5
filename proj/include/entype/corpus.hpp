#pragma once

#include <algorithm>
#include <fstream>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "entype/metrics.hpp"

namespace entype {

/// Ordered set of type paths with dense ids. Ids are assigned in first-seen
/// order and are stable across save/load.
class TypeOntology {
public:
    int add(const std::string& path) {
        validate_path(path);
        auto it = index_.find(path);
        if (it != index_.end()) return it->second;
        const int id = static_cast<int>(types_.size());
        types_.push_back(path);
        index_.emplace(path, id);
        return id;
    }

    // -1 when the path is unknown
    int id_of(const std::string& path) const {
        auto it = index_.find(path);
        return it == index_.end() ? -1 : it->second;
    }

    const std::string& path_of(int id) const { return types_.at(static_cast<std::size_t>(id)); }
    std::size_t size() const { return types_.size(); }
    const std::vector<std::string>& types() const { return types_; }

    static void validate_path(const std::string& path) {
        if (path.empty() || path[0] != '/')
            throw std::invalid_argument("type path must begin with '/': \"" + path + "\"");
        if (path.size() == 1 || path.back() == '/' || path.find("//") != std::string::npos)
            throw std::invalid_argument("type path has empty segment: \"" + path + "\"");
    }

    /// FNV-1a over the newline-joined path list; identifies the ontology in
    /// checkpoints.
    std::string hash() const {
        std::uint64_t h = 1469598103934665603ull;
        auto mix = [&h](unsigned char c) {
            h ^= c;
            h *= 1099511628211ull;
        };
        for (const auto& t : types_) {
            for (unsigned char c : t) mix(c);
            mix('\n');
        }
        char buf[17];
        std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
        return buf;
    }

    void save(std::ostream& os) const {
        for (const auto& t : types_) os << t << "\n";
    }

    static TypeOntology load(std::istream& is) {
        TypeOntology onto;
        std::string line;
        while (std::getline(is, line)) {
            if (!line.empty() && line.back() == '\r') line.pop_back();
            if (!line.empty()) onto.add(line);
        }
        return onto;
    }

private:
    std::vector<std::string> types_;
    std::unordered_map<std::string, int> index_;
};

/// One training/eval instance: a sentence, a token span [start, end) naming
/// the entity, the gold type ids, and an optional document link.
struct Mention {
    std::vector<std::string> tokens;
    std::size_t start = 0;
    std::size_t end = 0;
    TypeIdSet gold;
    std::optional<std::string> doc_id;

    bool operator==(const Mention&) const = default;
};

struct DocumentRecord {
    std::string doc_id;
    std::vector<std::string> tokens;
};

using LabelVector = std::vector<double>;

/// How unseen type paths are treated while parsing mention records.
enum class TypePolicy {
    Grow,    // training: new paths extend the ontology; empty gold rejected
    Strict,  // dev/test strict mode: unknown paths are an error
    Drop,    // dev/test lenient mode: unknown paths dropped from the gold set
};

struct ParseStats {
    std::size_t unknown_types = 0;
};

inline Mention parse_mention_record(const std::string& line, TypeOntology& ontology,
                                    TypePolicy policy = TypePolicy::Grow,
                                    ParseStats* stats = nullptr) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
        throw std::runtime_error(std::string("malformed JSON: ") + e.what());
    }
    if (!j.is_object()) throw std::runtime_error("mention record is not a JSON object");
    if (!j.contains("tokens") || !j["tokens"].is_array())
        throw std::runtime_error("mention record missing \"tokens\" array");
    if (!j.contains("mention") || !j["mention"].is_object())
        throw std::runtime_error("mention record missing \"mention\" object");

    Mention m;
    for (const auto& t : j["tokens"]) {
        if (!t.is_string()) throw std::runtime_error("non-string token");
        m.tokens.push_back(t.get<std::string>());
    }
    if (m.tokens.empty()) throw std::runtime_error("mention record has empty token list");

    const auto& span = j["mention"];
    const long long start = span.value("start", -1ll);
    const long long end = span.value("end", -1ll);
    if (start < 0 || end <= start || static_cast<std::size_t>(end) > m.tokens.size())
        throw std::runtime_error("mention span [" + std::to_string(start) + ", " +
                                 std::to_string(end) + ") out of bounds for " +
                                 std::to_string(m.tokens.size()) + " tokens");
    m.start = static_cast<std::size_t>(start);
    m.end = static_cast<std::size_t>(end);

    if (j.contains("types")) {
        if (!j["types"].is_array()) throw std::runtime_error("\"types\" is not an array");
        for (const auto& t : j["types"]) {
            const std::string path = t.get<std::string>();
            if (policy == TypePolicy::Grow) {
                m.gold.insert(ontology.add(path));
            } else {
                const int id = ontology.id_of(path);
                if (id >= 0) {
                    m.gold.insert(id);
                } else if (policy == TypePolicy::Strict) {
                    throw std::runtime_error("unknown type path \"" + path + "\"");
                } else {
                    if (stats) ++stats->unknown_types;
                }
            }
        }
    }
    if (policy == TypePolicy::Grow && m.gold.empty())
        throw std::runtime_error("training mention has no gold types");

    if (j.contains("doc_id") && !j["doc_id"].is_null())
        m.doc_id = j["doc_id"].get<std::string>();
    return m;
}

inline std::string serialize_mention(const Mention& m, const TypeOntology& ontology) {
    nlohmann::json j;
    j["tokens"] = m.tokens;
    j["mention"] = {{"start", m.start}, {"end", m.end}};
    auto types = nlohmann::json::array();
    for (int id : m.gold) types.push_back(ontology.path_of(id));
    j["types"] = std::move(types);
    j["doc_id"] = m.doc_id ? nlohmann::json(*m.doc_id) : nlohmann::json(nullptr);
    return j.dump();
}

inline LabelVector label_vector(const Mention& m, const TypeOntology& ontology) {
    LabelVector bits(ontology.size(), 0.0);
    for (int id : m.gold) {
        if (id < 0 || static_cast<std::size_t>(id) >= ontology.size())
            throw std::out_of_range("gold type id " + std::to_string(id) + " outside ontology");
        bits[static_cast<std::size_t>(id)] = 1.0;
    }
    return bits;
}

struct WindowedSentence {
    std::vector<std::string> tokens;
    std::size_t start = 0;
    std::size_t end = 0;
};

/// Truncate the sentence to at most `window` tokens on each side of the
/// mention span. Mention tokens are always kept and the span is re-based.
/// window < 0 passes the sentence through unchanged.
inline WindowedSentence context_window(const Mention& m, int window) {
    WindowedSentence w;
    if (window < 0) {
        w.tokens = m.tokens;
        w.start = m.start;
        w.end = m.end;
        return w;
    }
    const std::size_t uw = static_cast<std::size_t>(window);
    const std::size_t lo = m.start > uw ? m.start - uw : 0;
    const std::size_t hi = std::min(m.tokens.size(), m.end + uw);
    w.tokens.assign(m.tokens.begin() + static_cast<std::ptrdiff_t>(lo),
                    m.tokens.begin() + static_cast<std::ptrdiff_t>(hi));
    w.start = m.start - lo;
    w.end = m.end - lo;
    return w;
}

struct Dataset {
    std::vector<Mention> train;
    std::vector<Mention> dev;
    std::vector<Mention> test;
    std::unordered_map<std::string, DocumentRecord> documents;
    std::vector<std::string> doc_order;  // insertion order, for deterministic iteration
    TypeOntology ontology;
};

struct LoadReport {
    std::size_t n_train = 0, n_dev = 0, n_test = 0, n_docs = 0;
    std::size_t unknown_dev_types = 0, unknown_test_types = 0;
    std::vector<std::string> warnings;
};

namespace detail {

inline std::vector<Mention> load_mention_file(const std::string& path, TypeOntology& onto,
                                              TypePolicy policy, std::size_t* unknown,
                                              const char* split, LoadReport& report) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open " + std::string(split) + " file: " + path);
    std::vector<Mention> out;
    std::string line;
    std::size_t lineno = 0;
    ParseStats stats;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        try {
            out.push_back(parse_mention_record(line, onto, policy, &stats));
        } catch (const std::exception& e) {
            throw std::runtime_error(path + ":" + std::to_string(lineno) + ": " + e.what());
        }
    }
    if (out.empty())
        report.warnings.push_back(std::string(split) + " split is empty: " + path);
    if (unknown) *unknown = stats.unknown_types;
    return out;
}

inline void load_documents(const std::string& path, Dataset& ds) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open documents file: " + path);
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(line);
        } catch (const nlohmann::json::exception& e) {
            throw std::runtime_error(path + ":" + std::to_string(lineno) +
                                     ": malformed JSON: " + e.what());
        }
        DocumentRecord doc;
        doc.doc_id = j.at("doc_id").get<std::string>();
        for (const auto& t : j.at("tokens")) doc.tokens.push_back(t.get<std::string>());
        if (doc.tokens.empty())
            throw std::runtime_error(path + ":" + std::to_string(lineno) +
                                     ": document has empty token list");
        if (ds.documents.count(doc.doc_id))
            throw std::runtime_error(path + ":" + std::to_string(lineno) +
                                     ": duplicate doc_id \"" + doc.doc_id + "\"");
        ds.doc_order.push_back(doc.doc_id);
        ds.documents.emplace(doc.doc_id, std::move(doc));
    }
}

}  // namespace detail

/// Build a Dataset from JSONL files. The ontology grows from the train
/// split; dev/test labels outside it are either rejected (strict) or
/// dropped from the gold sets with a count in the report.
inline Dataset load_dataset(const std::string& train_path, const std::string& dev_path,
                            const std::string& test_path, const std::string& docs_path,
                            bool strict_eval_types, LoadReport* report_out = nullptr) {
    Dataset ds;
    LoadReport report;
    const TypePolicy eval_policy = strict_eval_types ? TypePolicy::Strict : TypePolicy::Drop;
    ds.train = detail::load_mention_file(train_path, ds.ontology, TypePolicy::Grow, nullptr,
                                         "train", report);
    if (!dev_path.empty())
        ds.dev = detail::load_mention_file(dev_path, ds.ontology, eval_policy,
                                           &report.unknown_dev_types, "dev", report);
    if (!test_path.empty())
        ds.test = detail::load_mention_file(test_path, ds.ontology, eval_policy,
                                            &report.unknown_test_types, "test", report);
    if (!docs_path.empty()) {
        detail::load_documents(docs_path, ds);
        std::vector<std::string> dangling;
        auto check = [&](const std::vector<Mention>& split) {
            for (const auto& m : split)
                if (m.doc_id && !ds.documents.count(*m.doc_id)) dangling.push_back(*m.doc_id);
        };
        check(ds.train);
        check(ds.dev);
        check(ds.test);
        if (!dangling.empty()) {
            std::sort(dangling.begin(), dangling.end());
            dangling.erase(std::unique(dangling.begin(), dangling.end()), dangling.end());
            std::ostringstream msg;
            msg << dangling.size() << " doc_id(s) not found in " << docs_path << ":";
            for (std::size_t i = 0; i < std::min<std::size_t>(10, dangling.size()); ++i)
                msg << " " << dangling[i];
            throw std::runtime_error(msg.str());
        }
    }
    report.n_train = ds.train.size();
    report.n_dev = ds.dev.size();
    report.n_test = ds.test.size();
    report.n_docs = ds.documents.size();
    if (report_out) *report_out = report;
    return ds;
}

}  // namespace entype
