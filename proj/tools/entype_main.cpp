// entype: fine-grained entity typing over mention-annotated JSONL corpora.
//
// Commands: train, evaluate, tune-thresholds, predict, embed-docs, analyze.
// Relative data paths are also looked up under $ENTYPE_DATA_DIR.

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "entype/analysis.hpp"
#include "entype/checkpoint.hpp"
#include "entype/corpus.hpp"
#include "entype/embeddings.hpp"
#include "entype/metrics.hpp"
#include "entype/model.hpp"
#include "entype/thresholds.hpp"
#include "entype/training.hpp"

namespace {

namespace fs = std::filesystem;
using nlohmann::json;

std::string resolve_path(const std::string& path) {
    if (path.empty() || fs::path(path).is_absolute() || fs::exists(path)) return path;
    if (const char* base = std::getenv("ENTYPE_DATA_DIR")) {
        const fs::path joined = fs::path(base) / path;
        if (fs::exists(joined)) return joined.string();
    }
    return path;
}

// Write through a temp file and rename so failures leave no partial output.
void atomic_write(const std::string& path, const std::function<void(std::ostream&)>& fn) {
    const std::string tmp = path + ".tmp";
    {
        std::ofstream out(tmp, std::ios::trunc);
        if (!out) throw std::runtime_error("cannot write " + path);
        fn(out);
        if (!out) throw std::runtime_error("short write on " + path);
    }
    fs::rename(tmp, path);
}

struct MentionRecord {
    entype::Mention mention;
    std::vector<std::string> raw_types;
};

std::vector<MentionRecord> read_mentions(const std::string& path, entype::TypeOntology& ontology,
                                         entype::TypePolicy policy, std::size_t* unknown = nullptr) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open mention file: " + path);
    std::vector<MentionRecord> out;
    std::string line;
    std::size_t lineno = 0;
    entype::ParseStats stats;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        try {
            MentionRecord rec;
            rec.mention = entype::parse_mention_record(line, ontology, policy, &stats);
            const json j = json::parse(line);
            if (j.contains("types"))
                for (const auto& t : j["types"]) rec.raw_types.push_back(t.get<std::string>());
            out.push_back(std::move(rec));
        } catch (const std::exception& e) {
            throw std::runtime_error(path + ":" + std::to_string(lineno) + ": " + e.what());
        }
    }
    if (unknown) *unknown = stats.unknown_types;
    return out;
}

std::vector<entype::DocumentRecord> read_documents(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open documents file: " + path);
    std::vector<entype::DocumentRecord> docs;
    std::unordered_map<std::string, bool> seen;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        try {
            const json j = json::parse(line);
            entype::DocumentRecord doc;
            doc.doc_id = j.at("doc_id").get<std::string>();
            for (const auto& t : j.at("tokens")) doc.tokens.push_back(t.get<std::string>());
            if (doc.tokens.empty()) throw std::runtime_error("document has empty token list");
            if (seen[doc.doc_id]) throw std::runtime_error("duplicate doc_id \"" + doc.doc_id + "\"");
            seen[doc.doc_id] = true;
            docs.push_back(std::move(doc));
        } catch (const std::exception& e) {
            throw std::runtime_error(path + ":" + std::to_string(lineno) + ": " + e.what());
        }
    }
    return docs;
}

entype::Vec parse_threshold_spec(const std::string& spec, const entype::Model& model) {
    if (spec == "tuned") return model.thresholds;
    if (spec.rfind("fixed:", 0) == 0) {
        const double r = std::stod(spec.substr(6));
        if (r <= 0.0 || r >= 1.0) throw std::runtime_error("fixed threshold must be in (0,1)");
        return entype::Vec(model.ontology.size(), r);
    }
    throw std::runtime_error("bad --thresholds value \"" + spec + "\" (use tuned or fixed:X)");
}

void dump_predictions(std::ostream& os, const entype::Model& model,
                      const std::vector<MentionRecord>& records,
                      const std::vector<entype::PredictionResult>& results) {
    for (std::size_t i = 0; i < records.size(); ++i) {
        json j;
        j["probabilities"] = results[i].probabilities;
        auto pred = json::array();
        for (int t : results[i].predicted) pred.push_back(model.ontology.path_of(t));
        j["predicted"] = std::move(pred);
        j["gold"] = records[i].raw_types;
        os << j.dump() << "\n";
    }
}

struct TrainArgs {
    std::string train_path, dev_path, test_path, docs_path, doc_vectors_path;
    std::string word_vectors_path, checkpoint_path, log_path, ontology_out;
    std::string oov = "lowercase";
    bool strict_types = false;
    std::size_t pvdm_epochs = 20, pvdm_context = 5, pvdm_negatives = 5, pvdm_min_count = 2;
    double pvdm_lr = 0.025;
    entype::TrainConfig config;
};

int cmd_train(const TrainArgs& args) {
    entype::LoadReport report;
    entype::Dataset ds =
        entype::load_dataset(resolve_path(args.train_path), resolve_path(args.dev_path),
                             resolve_path(args.test_path), resolve_path(args.docs_path),
                             args.strict_types, &report);
    for (const auto& w : report.warnings) std::cerr << "warning: " << w << "\n";
    if (report.unknown_dev_types + report.unknown_test_types > 0)
        std::cerr << "warning: dropped " << report.unknown_dev_types << " dev / "
                  << report.unknown_test_types << " test type labels outside the train ontology\n";
    std::cerr << "loaded " << report.n_train << " train / " << report.n_dev << " dev / "
              << report.n_test << " test mentions, " << report.n_docs << " documents, "
              << ds.ontology.size() << " types\n";

    const auto policy =
        args.oov == "zero" ? entype::OovPolicy::Zero : entype::OovPolicy::LowercaseThenZero;
    entype::WordEmbeddingTable words =
        entype::load_word_vectors(resolve_path(args.word_vectors_path), {}, policy);
    if (words.duplicate_count > 0)
        std::cerr << "warning: " << words.duplicate_count
                  << " duplicate tokens in word vectors (first occurrence kept)\n";

    entype::TrainConfig config = args.config;
    config.validate();

    entype::DocEmbeddingTable doc_table;
    if (!args.doc_vectors_path.empty()) {
        doc_table = entype::load_doc_vectors(resolve_path(args.doc_vectors_path));
        if (doc_table.dim != config.doc_dim)
            throw std::runtime_error("doc vectors have dim " + std::to_string(doc_table.dim) +
                                     ", expected " + std::to_string(config.doc_dim));
    } else if (config.doc_context && !ds.doc_order.empty()) {
        std::vector<entype::DocumentRecord> docs;
        for (const auto& id : ds.doc_order) docs.push_back(ds.documents.at(id));
        entype::PVDMConfig pc;
        pc.d_doc = config.doc_dim;
        pc.context_size = args.pvdm_context;
        pc.negative_samples = args.pvdm_negatives;
        pc.epochs = args.pvdm_epochs;
        pc.lr = args.pvdm_lr;
        pc.min_count = args.pvdm_min_count;
        pc.seed = config.seed;
        std::cerr << "training distributed-memory doc vectors on " << docs.size()
                  << " documents\n";
        doc_table = entype::train_pvdm(docs, pc).doc_table();
    }

    entype::TrainResult result = entype::train_loop(
        ds, std::move(words), std::move(doc_table), config,
        [](const std::string& line) { std::cerr << line << "\n"; });

    entype::save_checkpoint(result.model, args.checkpoint_path);
    const std::string log_path =
        args.log_path.empty() ? args.checkpoint_path + ".log.tsv" : args.log_path;
    atomic_write(log_path, [&](std::ostream& os) {
        os << "epoch\ttrain_loss\tdev_strict\tdev_macro\tdev_micro\n";
        for (const auto& line : result.log_lines) os << line << "\n";
    });
    if (!args.ontology_out.empty())
        atomic_write(args.ontology_out,
                     [&](std::ostream& os) { ds.ontology.save(os); });

    entype::EvalResult dev = entype::evaluate_model(result.model, ds.dev);
    json out = {{"best_epoch", result.best_epoch},
                {"dev", entype::evaluation_report(dev.predictions, dev.gold)},
                {"checkpoint", args.checkpoint_path},
                {"log", log_path}};
    if (!ds.test.empty()) {
        entype::EvalResult test = entype::evaluate_model(result.model, ds.test);
        out["test"] = entype::evaluation_report(test.predictions, test.gold);
    }
    std::cout << out.dump() << "\n";
    return 0;
}

int cmd_evaluate(const std::string& checkpoint, const std::string& data,
                 const std::string& thresholds_spec, const std::string& dump_path,
                 const std::string& doc_vectors_path, bool strict_types) {
    entype::Model model = entype::load_checkpoint(resolve_path(checkpoint));
    if (!doc_vectors_path.empty()) {
        model.docs = entype::load_doc_vectors(resolve_path(doc_vectors_path));
        if (model.docs.dim != model.config.doc_dim)
            throw std::runtime_error("doc vectors do not match model doc_dim");
    }
    std::size_t unknown = 0;
    auto records = read_mentions(resolve_path(data), model.ontology,
                                 strict_types ? entype::TypePolicy::Strict
                                              : entype::TypePolicy::Drop,
                                 &unknown);
    if (records.empty()) throw std::runtime_error("no mentions in " + data);
    if (unknown > 0)
        std::cerr << "warning: dropped " << unknown << " type labels outside the ontology\n";

    const entype::Vec thresholds = parse_threshold_spec(thresholds_spec, model);
    std::vector<entype::PredictionResult> results;
    std::vector<entype::TypeIdSet> preds, golds;
    for (const auto& rec : records) {
        results.push_back(entype::predict_mention(model, rec.mention, &thresholds));
        preds.push_back(results.back().predicted);
        golds.push_back(rec.mention.gold);
    }
    if (!dump_path.empty())
        atomic_write(dump_path,
                     [&](std::ostream& os) { dump_predictions(os, model, records, results); });
    std::cout << entype::evaluation_report(preds, golds).dump() << "\n";
    return 0;
}

int cmd_tune_thresholds(const std::string& checkpoint, const std::string& dev_path,
                        const std::string& export_path, std::size_t max_passes,
                        bool strict_types) {
    entype::Model model = entype::load_checkpoint(resolve_path(checkpoint));
    auto records = read_mentions(resolve_path(dev_path), model.ontology,
                                 strict_types ? entype::TypePolicy::Strict
                                              : entype::TypePolicy::Drop);
    if (records.empty()) throw std::runtime_error("empty dev set: " + dev_path);
    std::vector<entype::Vec> probs;
    std::vector<entype::TypeIdSet> gold;
    entype::MentionTrace trace;
    for (const auto& rec : records) {
        entype::forward_mention(model, rec.mention, entype::RunMode::Eval, nullptr, trace);
        probs.push_back(trace.probs);
        gold.push_back(rec.mention.gold);
    }
    entype::TuningReport report =
        entype::tune_thresholds(probs, gold, model.config.fallback, max_passes);
    model.thresholds = report.thresholds;
    entype::save_checkpoint(model, resolve_path(checkpoint));
    if (!export_path.empty())
        atomic_write(export_path, [&](std::ostream& os) {
            os.precision(17);
            for (std::size_t t = 0; t < report.thresholds.size(); ++t)
                os << model.ontology.path_of(static_cast<int>(t)) << " " << report.thresholds[t]
                   << "\n";
        });
    json out = {{"dev_strict_before", report.dev_strict_before},
                {"dev_strict_after", report.dev_strict_after},
                {"passes", report.passes}};
    std::cout << out.dump() << "\n";
    return 0;
}

int cmd_predict(const std::string& checkpoint, const std::string& input,
                const std::string& output) {
    entype::Model model = entype::load_checkpoint(resolve_path(checkpoint));
    auto records = read_mentions(resolve_path(input), model.ontology, entype::TypePolicy::Drop);
    std::vector<entype::PredictionResult> results;
    for (const auto& rec : records)
        results.push_back(entype::predict_mention(model, rec.mention));
    if (output.empty()) {
        dump_predictions(std::cout, model, records, results);
    } else {
        atomic_write(output,
                     [&](std::ostream& os) { dump_predictions(os, model, records, results); });
    }
    return 0;
}

int cmd_embed_docs(const std::string& docs_path, const std::string& output,
                   entype::PVDMConfig config) {
    auto docs = read_documents(resolve_path(docs_path));
    if (docs.empty()) throw std::runtime_error("document store is empty: " + docs_path);
    entype::PVDMModel model = entype::train_pvdm(docs, config);
    const entype::DocEmbeddingTable table = model.doc_table();
    atomic_write(output, [&](std::ostream& os) { entype::save_doc_vectors(table, os); });
    json out = {{"documents", docs.size()},
                {"vocabulary", model.vocab.size()},
                {"dim", config.d_doc},
                {"epochs", config.epochs}};
    if (!model.epoch_loss.empty()) {
        out["first_epoch_loss"] = model.epoch_loss.front();
        out["final_epoch_loss"] = model.epoch_loss.back();
    }
    std::cout << out.dump() << "\n";
    return 0;
}

int cmd_analyze_types(const std::string& checkpoint, std::size_t k, const std::string& output) {
    entype::Model model = entype::load_checkpoint(resolve_path(checkpoint));
    auto rows = entype::type_similarity(model.type_embeddings, model.ontology, k);
    for (const auto& row : rows)
        if (row.zero_norm)
            std::cerr << "warning: zero-norm embedding for " << row.type << "\n";
    if (output.empty()) {
        entype::write_similarity_tsv(rows, std::cout);
    } else {
        atomic_write(output, [&](std::ostream& os) { entype::write_similarity_tsv(rows, os); });
    }
    return 0;
}

int cmd_analyze_attention(const std::string& checkpoint, const std::string& input,
                          const std::string& output, const std::string& html_path) {
    entype::Model model = entype::load_checkpoint(resolve_path(checkpoint));
    auto records = read_mentions(resolve_path(input), model.ontology, entype::TypePolicy::Drop);
    std::vector<entype::AttentionTrace> traces;
    for (const auto& rec : records) {
        entype::MentionTrace mt;
        entype::PredictionResult res = entype::predict_mention(model, rec.mention, nullptr, &mt);
        entype::AttentionTrace trace;
        trace.tokens = mt.window.tokens;
        trace.weights = mt.attn;
        trace.span_start = mt.window.start;
        trace.span_end = mt.window.end;
        for (int t : res.predicted) trace.predicted.push_back(model.ontology.path_of(t));
        trace.gold = rec.raw_types;
        traces.push_back(std::move(trace));
    }
    auto write_jsonl = [&](std::ostream& os) {
        for (const auto& t : traces) os << entype::attention_trace_json(t).dump() << "\n";
    };
    if (output.empty()) {
        write_jsonl(std::cout);
    } else {
        atomic_write(output, write_jsonl);
    }
    if (!html_path.empty())
        atomic_write(html_path,
                     [&](std::ostream& os) { entype::write_attention_html(traces, os); });
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"entype: neural fine-grained entity typing"};
    app.require_subcommand(1);
    app.fallthrough();  // global flags may follow the subcommand
    app.set_config("--config", "", "Read options from a config file (flags win)");
    app.allow_config_extras(false);
    bool deterministic = false;
    app.add_flag("--deterministic", deterministic,
                 "Force single-threaded deterministic execution (this build always is)");

    TrainArgs train_args;
    auto* train = app.add_subcommand("train", "Train a typing model");
    train->add_option("--train", train_args.train_path, "Training mentions (JSONL)")->required();
    train->add_option("--dev", train_args.dev_path, "Dev mentions (JSONL)")->required();
    train->add_option("--test", train_args.test_path, "Optional test mentions (JSONL)");
    train->add_option("--docs", train_args.docs_path, "Document store (JSONL)");
    train->add_option("--doc-vectors", train_args.doc_vectors_path,
                      "Pretrained doc vectors (text); skips internal DM training");
    train->add_option("--word-vectors", train_args.word_vectors_path,
                      "Pretrained word vectors, GloVe text format")
        ->required();
    train->add_option("--checkpoint", train_args.checkpoint_path, "Output checkpoint path")
        ->required();
    train->add_option("--log", train_args.log_path, "Training log TSV (default <checkpoint>.log.tsv)");
    train->add_option("--save-ontology", train_args.ontology_out,
                      "Write the ontology as newline-separated type paths");
    train->add_option("--oov", train_args.oov, "OOV policy: lowercase | zero")
        ->check(CLI::IsMember({"lowercase", "zero"}));
    train->add_flag("--strict-types", train_args.strict_types,
                    "Reject dev/test type labels outside the train ontology");
    auto& tc = train_args.config;
    train->add_option("--lr", tc.learning_rate, "Adam learning rate");
    train->add_option("--batch-size", tc.batch_size, "Mini-batch size");
    train->add_option("--dropout", tc.dropout_rate, "Dropout rate on the three feature vectors");
    train->add_option("--epochs", tc.max_epochs, "Maximum training epochs");
    train->add_option("--patience", tc.patience, "Epochs without dev improvement before stopping");
    train->add_option("--seed", tc.seed, "Random seed");
    train->add_option("--window", tc.window, "Context window per side (-1 = whole sentence)");
    train->add_option("--hidden", tc.hidden, "LSTM hidden units per direction");
    train->add_option("--layers", tc.lstm_layers, "Stacked LSTM layers");
    train->add_option("--doc-dim", tc.doc_dim, "Document vector size");
    train->add_option("--doc-hidden", tc.doc_hidden, "Document MLP hidden size");
    train->add_option("--init-range", tc.init_range, "Uniform init range");
    train->add_flag("--no-doc-context,!--doc-context", tc.doc_context,
                    "Disable the document-level context feature")
        ->default_val(true);
    train->add_flag("--fine-tune-embeddings", tc.fine_tune_embeddings,
                    "Update word embeddings during training");
    train->add_flag("--no-fallback,!--fallback", tc.fallback,
                    "Disable the empty-prediction argmax fallback")
        ->default_val(true);
    train->add_option("--pvdm-epochs", train_args.pvdm_epochs, "DM training epochs");
    train->add_option("--pvdm-context", train_args.pvdm_context, "DM context window per side");
    train->add_option("--pvdm-negatives", train_args.pvdm_negatives, "DM negative samples");
    train->add_option("--pvdm-lr", train_args.pvdm_lr, "DM learning rate");
    train->add_option("--pvdm-min-count", train_args.pvdm_min_count, "DM vocabulary min count");

    std::string eval_checkpoint, eval_data, eval_thresholds = "tuned", eval_dump, eval_doc_vectors;
    bool eval_strict_types = false;
    auto* evaluate = app.add_subcommand(
        "evaluate",
        "Score a checkpoint with strict / loose-macro / loose-micro P/R/F1. "
        "Empty-set conventions: an instance term or pooled ratio with a 0 "
        "denominator scores 1 when the other side is empty too, else 0.");
    evaluate->add_option("--checkpoint", eval_checkpoint)->required();
    evaluate->add_option("--data", eval_data, "Mentions to score (JSONL)")->required();
    evaluate->add_option("--thresholds", eval_thresholds, "tuned | fixed:X");
    evaluate->add_option("--dump", eval_dump, "Write per-mention predictions (JSONL)");
    evaluate->add_option("--doc-vectors", eval_doc_vectors, "Replace the checkpoint doc vectors");
    evaluate->add_flag("--strict-types", eval_strict_types);

    std::string tune_checkpoint, tune_dev, tune_export;
    std::size_t tune_passes = 10;
    bool tune_strict_types = false;
    auto* tune = app.add_subcommand("tune-thresholds",
                                    "Fit per-type thresholds maximizing dev strict F1");
    tune->add_option("--checkpoint", tune_checkpoint)->required();
    tune->add_option("--dev", tune_dev, "Dev mentions (JSONL)")->required();
    tune->add_option("--export", tune_export, "Also write \"type-path threshold\" lines");
    tune->add_option("--passes", tune_passes, "Maximum coordinate sweeps");
    tune->add_flag("--strict-types", tune_strict_types);

    std::string pred_checkpoint, pred_input, pred_output;
    auto* predict = app.add_subcommand("predict", "Emit prediction JSONL for input mentions");
    predict->add_option("--checkpoint", pred_checkpoint)->required();
    predict->add_option("--input", pred_input, "Input mentions (JSONL; types optional)")
        ->required();
    predict->add_option("--output", pred_output, "Output path (default stdout)");

    std::string embed_docs_path, embed_output;
    entype::PVDMConfig embed_config;
    auto* embed = app.add_subcommand("embed-docs",
                                     "Train distributed-memory doc vectors and write them");
    embed->add_option("--docs", embed_docs_path, "Document store (JSONL)")->required();
    embed->add_option("--output", embed_output, "Output text file")->required();
    embed->add_option("--dim", embed_config.d_doc, "Vector size");
    embed->add_option("--context", embed_config.context_size, "Context window per side");
    embed->add_option("--negatives", embed_config.negative_samples, "Negative samples");
    embed->add_option("--epochs", embed_config.epochs, "Training epochs");
    embed->add_option("--lr", embed_config.lr, "Learning rate");
    embed->add_option("--min-count", embed_config.min_count, "Vocabulary min count");
    embed->add_option("--seed", embed_config.seed, "Random seed");

    std::string an_mode, an_checkpoint, an_input, an_output, an_html;
    std::size_t an_k = 5;
    auto* analyze = app.add_subcommand("analyze", "Model inspection reports");
    analyze->add_option("mode", an_mode, "types | attention")
        ->required()
        ->check(CLI::IsMember({"types", "attention"}));
    analyze->add_option("--checkpoint", an_checkpoint)->required();
    analyze->add_option("-k,--neighbors", an_k, "Neighbors per type (types mode)");
    analyze->add_option("--input", an_input, "Mentions to trace (attention mode)");
    analyze->add_option("--output", an_output, "Output path (default stdout)");
    analyze->add_option("--html", an_html, "Also render attention traces as HTML");

    CLI11_PARSE(app, argc, argv);
    (void)deterministic;  // execution is single-threaded either way

    try {
        if (*train) return cmd_train(train_args);
        if (*evaluate)
            return cmd_evaluate(eval_checkpoint, eval_data, eval_thresholds, eval_dump,
                                eval_doc_vectors, eval_strict_types);
        if (*tune)
            return cmd_tune_thresholds(tune_checkpoint, tune_dev, tune_export, tune_passes,
                                       tune_strict_types);
        if (*predict) return cmd_predict(pred_checkpoint, pred_input, pred_output);
        if (*embed) return cmd_embed_docs(embed_docs_path, embed_output, embed_config);
        if (*analyze) {
            if (an_mode == "types") return cmd_analyze_types(an_checkpoint, an_k, an_output);
            if (an_input.empty())
                throw std::runtime_error("analyze attention requires --input");
            return cmd_analyze_attention(an_checkpoint, an_input, an_output, an_html);
        }
    } catch (const std::exception& e) {
        std::cerr << "entype: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
