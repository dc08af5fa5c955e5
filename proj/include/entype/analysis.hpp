#pragma once

#include <algorithm>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "entype/corpus.hpp"
#include "entype/tensor.hpp"

namespace entype {

struct SimilarityRow {
    std::string type;
    std::vector<std::pair<std::string, double>> neighbors;  // cosine descending
    bool zero_norm = false;
};

/// For each type, the k nearest other types by cosine over the raw type
/// embeddings (rows of W). Zero-norm embeddings get an empty neighbor list.
inline std::vector<SimilarityRow> type_similarity(const Matrix& type_embeddings,
                                                  const TypeOntology& ontology, std::size_t k) {
    if (k == 0) throw std::invalid_argument("type_similarity: k must be >= 1");
    const std::size_t n = type_embeddings.rows;
    std::vector<double> norms(n);
    for (std::size_t t = 0; t < n; ++t) {
        double s = 0.0;
        for (std::size_t c = 0; c < type_embeddings.cols; ++c) {
            const double x = type_embeddings.at(t, c);
            s += x * x;
        }
        norms[t] = std::sqrt(s);
    }
    std::vector<SimilarityRow> rows;
    rows.reserve(n);
    for (std::size_t t = 0; t < n; ++t) {
        SimilarityRow row;
        row.type = ontology.path_of(static_cast<int>(t));
        if (norms[t] == 0.0) {
            row.zero_norm = true;
            rows.push_back(std::move(row));
            continue;
        }
        std::vector<std::pair<double, std::size_t>> scored;
        for (std::size_t u = 0; u < n; ++u) {
            if (u == t || norms[u] == 0.0) continue;
            double d = 0.0;
            for (std::size_t c = 0; c < type_embeddings.cols; ++c)
                d += type_embeddings.at(t, c) * type_embeddings.at(u, c);
            scored.emplace_back(d / (norms[t] * norms[u]), u);
        }
        std::stable_sort(scored.begin(), scored.end(), [](const auto& a, const auto& b) {
            return a.first > b.first || (a.first == b.first && a.second < b.second);
        });
        const std::size_t take = std::min(k, scored.size());
        for (std::size_t i = 0; i < take; ++i)
            row.neighbors.emplace_back(ontology.path_of(static_cast<int>(scored[i].second)),
                                       scored[i].first);
        rows.push_back(std::move(row));
    }
    return rows;
}

inline void write_similarity_tsv(const std::vector<SimilarityRow>& rows, std::ostream& os) {
    os.precision(6);
    os << std::fixed;
    for (const auto& row : rows)
        for (const auto& [neighbor, cosine] : row.neighbors)
            os << row.type << "\t" << neighbor << "\t" << cosine << "\n";
}

/// Attention weights captured from an eval-mode forward pass, for
/// qualitative inspection of what the sentence encoder focuses on.
struct AttentionTrace {
    std::vector<std::string> tokens;  // windowed sentence tokens
    Vec weights;
    std::size_t span_start = 0;
    std::size_t span_end = 0;
    std::vector<std::string> predicted;
    std::vector<std::string> gold;
};

inline nlohmann::json attention_trace_json(const AttentionTrace& trace) {
    return {{"tokens", trace.tokens},
            {"weights", trace.weights},
            {"mention", {{"start", trace.span_start}, {"end", trace.span_end}}},
            {"predicted", trace.predicted},
            {"gold", trace.gold}};
}

namespace detail {
inline std::string html_escape(const std::string& s) {
    std::string out;
    for (char c : s) {
        switch (c) {
            case '&': out += "&amp;"; break;
            case '<': out += "&lt;"; break;
            case '>': out += "&gt;"; break;
            case '"': out += "&quot;"; break;
            default: out += c;
        }
    }
    return out;
}
}  // namespace detail

/// Static HTML rendering: token opacity proportional to its attention
/// weight, mention tokens outlined.
inline void write_attention_html(const std::vector<AttentionTrace>& traces, std::ostream& os) {
    os << "<!DOCTYPE html>\n<html><head><meta charset=\"utf-8\">\n"
       << "<style>\n"
       << "body { font-family: sans-serif; margin: 2em; }\n"
       << ".sent { margin: 0.8em 0; line-height: 2; }\n"
       << ".tok { padding: 2px 4px; border-radius: 3px; }\n"
       << ".mention { outline: 2px solid #2a7; }\n"
       << ".meta { color: #555; font-size: 0.9em; }\n"
       << "</style></head><body>\n";
    for (const auto& trace : traces) {
        double max_w = 0.0;
        for (double w : trace.weights) max_w = std::max(max_w, w);
        os << "<div class=\"sent\">";
        for (std::size_t i = 0; i < trace.tokens.size(); ++i) {
            const double alpha = max_w > 0.0 ? trace.weights[i] / max_w : 0.0;
            const bool in_mention = i >= trace.span_start && i < trace.span_end;
            os << "<span class=\"tok" << (in_mention ? " mention" : "")
               << "\" style=\"background: rgba(120,120,220," << alpha << ")\" title=\""
               << trace.weights[i] << "\">" << detail::html_escape(trace.tokens[i])
               << "</span> ";
        }
        os << "<div class=\"meta\">predicted:";
        for (const auto& t : trace.predicted) os << " " << detail::html_escape(t);
        os << " | gold:";
        for (const auto& t : trace.gold) os << " " << detail::html_escape(t);
        os << "</div></div>\n";
    }
    os << "</body></html>\n";
}

}  // namespace entype
