#pragma once

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "entype/model.hpp"

namespace entype {

// Container layout:
//   "ETYP" | u32 version | u64 header length | header JSON |
//   float32 LE tensor payloads in manifest order | u32 CRC32
// The header carries config, ontology (plus hash), thresholds at full
// precision, vocabularies and the tensor manifest.
inline constexpr std::uint32_t kCheckpointVersion = 1;

namespace detail {

inline std::uint32_t crc32(const unsigned char* data, std::size_t len,
                           std::uint32_t crc = 0xffffffffu) {
    static const auto table = [] {
        std::array<std::uint32_t, 256> t{};
        for (std::uint32_t i = 0; i < 256; ++i) {
            std::uint32_t c = i;
            for (int k = 0; k < 8; ++k) c = (c & 1) ? 0xedb88320u ^ (c >> 1) : c >> 1;
            t[i] = c;
        }
        return t;
    }();
    for (std::size_t i = 0; i < len; ++i) crc = table[(crc ^ data[i]) & 0xffu] ^ (crc >> 8);
    return crc;
}

inline void put_u32(std::string& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xffu));
}

inline void put_u64(std::string& out, std::uint64_t v) {
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xffu));
}

inline std::uint32_t get_u32(const unsigned char* p) {
    return static_cast<std::uint32_t>(p[0]) | static_cast<std::uint32_t>(p[1]) << 8 |
           static_cast<std::uint32_t>(p[2]) << 16 | static_cast<std::uint32_t>(p[3]) << 24;
}

inline std::uint64_t get_u64(const unsigned char* p) {
    std::uint64_t v = 0;
    for (int i = 7; i >= 0; --i) v = v << 8 | p[i];
    return v;
}

inline void put_tensor(std::string& out, const Matrix& m) {
    for (double x : m.a) {
        const float f = static_cast<float>(x);
        std::uint32_t bits;
        std::memcpy(&bits, &f, 4);
        put_u32(out, bits);
    }
}

inline nlohmann::json config_json(const TrainConfig& c) {
    return {{"learning_rate", c.learning_rate},
            {"adam_beta1", c.adam_beta1},
            {"adam_beta2", c.adam_beta2},
            {"adam_eps", c.adam_eps},
            {"batch_size", c.batch_size},
            {"dropout_rate", c.dropout_rate},
            {"max_epochs", c.max_epochs},
            {"patience", c.patience},
            {"seed", c.seed},
            {"window", c.window},
            {"doc_context", c.doc_context},
            {"fine_tune_embeddings", c.fine_tune_embeddings},
            {"init_range", c.init_range},
            {"fallback", c.fallback},
            {"lstm_layers", c.lstm_layers},
            {"hidden", c.hidden},
            {"doc_dim", c.doc_dim},
            {"doc_hidden", c.doc_hidden}};
}

inline TrainConfig config_from_json(const nlohmann::json& j) {
    TrainConfig c;
    c.learning_rate = j.at("learning_rate").get<double>();
    c.adam_beta1 = j.at("adam_beta1").get<double>();
    c.adam_beta2 = j.at("adam_beta2").get<double>();
    c.adam_eps = j.at("adam_eps").get<double>();
    c.batch_size = j.at("batch_size").get<std::size_t>();
    c.dropout_rate = j.at("dropout_rate").get<double>();
    c.max_epochs = j.at("max_epochs").get<std::size_t>();
    c.patience = j.at("patience").get<std::size_t>();
    c.seed = j.at("seed").get<std::uint64_t>();
    c.window = j.at("window").get<int>();
    c.doc_context = j.at("doc_context").get<bool>();
    c.fine_tune_embeddings = j.at("fine_tune_embeddings").get<bool>();
    c.init_range = j.at("init_range").get<double>();
    c.fallback = j.at("fallback").get<bool>();
    c.lstm_layers = j.at("lstm_layers").get<std::size_t>();
    c.hidden = j.at("hidden").get<std::size_t>();
    c.doc_dim = j.at("doc_dim").get<std::size_t>();
    c.doc_hidden = j.at("doc_hidden").get<std::size_t>();
    return c;
}

}  // namespace detail

/// Serialize the model (parameters, thresholds, config, ontology and both
/// embedding tables) and write it atomically.
inline void save_checkpoint(Model& model, const std::string& path) {
    nlohmann::json header;
    header["config"] = detail::config_json(model.config);
    header["ontology"] = model.ontology.types();
    header["ontology_hash"] = model.ontology.hash();
    header["thresholds"] = model.thresholds;
    header["word"] = {{"dim", model.words.dim},
                      {"lowercase_fallback", model.words.policy == OovPolicy::LowercaseThenZero},
                      {"vocab", model.words.vocab()}};
    header["docs"] = {{"dim", model.docs.dim}, {"ids", model.docs.ids()}};

    std::vector<NamedTensor> tensors = model.trainable();
    if (!model.config.fine_tune_embeddings)
        tensors.push_back({"word_table", &model.words.vectors});
    tensors.push_back({"doc_table", &model.docs.vectors});

    auto manifest = nlohmann::json::array();
    for (auto& [name, tensor] : tensors)
        manifest.push_back({{"name", name}, {"shape", {tensor->rows, tensor->cols}}});
    header["tensors"] = manifest;

    std::string blob = "ETYP";
    detail::put_u32(blob, kCheckpointVersion);
    const std::string header_str = header.dump();
    detail::put_u64(blob, header_str.size());
    blob += header_str;
    for (auto& [name, tensor] : tensors) detail::put_tensor(blob, *tensor);
    const std::uint32_t crc =
        detail::crc32(reinterpret_cast<const unsigned char*>(blob.data()), blob.size());
    detail::put_u32(blob, crc);

    const std::string tmp = path + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw std::runtime_error("cannot write checkpoint: " + tmp);
        out.write(blob.data(), static_cast<std::streamsize>(blob.size()));
        if (!out) throw std::runtime_error("short write on checkpoint: " + tmp);
    }
    std::filesystem::rename(tmp, path);
}

inline Model load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open checkpoint: " + path);
    std::string blob((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    const auto* bytes = reinterpret_cast<const unsigned char*>(blob.data());

    if (blob.size() < 20 || blob.compare(0, 4, "ETYP") != 0)
        throw std::runtime_error("not a checkpoint file: " + path);
    const std::uint32_t version = detail::get_u32(bytes + 4);
    if (version != kCheckpointVersion)
        throw std::runtime_error("unsupported checkpoint version " + std::to_string(version));
    const std::uint32_t stored_crc = detail::get_u32(bytes + blob.size() - 4);
    const std::uint32_t crc = detail::crc32(bytes, blob.size() - 4);
    if (crc != stored_crc)
        throw std::runtime_error("checkpoint checksum mismatch (corrupted or truncated): " + path);

    const std::uint64_t header_len = detail::get_u64(bytes + 8);
    if (16 + header_len + 4 > blob.size())
        throw std::runtime_error("checkpoint header overruns file: " + path);
    nlohmann::json header = nlohmann::json::parse(blob.substr(16, header_len));

    Model model;
    model.config = detail::config_from_json(header.at("config"));
    for (const auto& t : header.at("ontology")) model.ontology.add(t.get<std::string>());
    if (model.ontology.hash() != header.at("ontology_hash").get<std::string>())
        throw std::runtime_error("checkpoint ontology hash mismatch: " + path);
    model.thresholds = header.at("thresholds").get<Vec>();

    model.words.dim = header.at("word").at("dim").get<std::size_t>();
    model.words.policy = header.at("word").at("lowercase_fallback").get<bool>()
                             ? OovPolicy::LowercaseThenZero
                             : OovPolicy::Zero;
    model.words.trainable = model.config.fine_tune_embeddings;

    // materialize parameter shapes, then fill from the payload
    const std::size_t H = model.config.hidden;
    model.lstm.hidden = H;
    model.lstm.layers.resize(model.config.lstm_layers);
    for (std::size_t l = 0; l < model.config.lstm_layers; ++l) {
        const std::size_t d_in = l == 0 ? model.words.dim : 2 * H;
        for (auto* p : {&model.lstm.layers[l].fwd, &model.lstm.layers[l].bwd}) {
            p->w_x = Matrix(4 * H, d_in);
            p->w_h = Matrix(4 * H, H);
            p->bias = Matrix(4 * H, 1);
        }
    }
    model.attention.w_a = Matrix(2 * H, model.words.dim);
    model.doc_mlp.w_d2 = Matrix(model.config.doc_hidden, model.config.doc_dim);
    model.doc_mlp.w_d1 = Matrix(model.config.doc_dim, model.config.doc_hidden);
    model.type_embeddings =
        Matrix(model.ontology.size(), model.words.dim + 2 * H + model.config.doc_dim);

    std::vector<NamedTensor> tensors = model.trainable();
    Matrix word_matrix, doc_matrix;
    if (!model.config.fine_tune_embeddings) tensors.push_back({"word_table", &word_matrix});
    tensors.push_back({"doc_table", &doc_matrix});
    if (model.config.fine_tune_embeddings) {
        // word_table rows are only known from the header
        const std::size_t vocab = header.at("word").at("vocab").size();
        model.words.vectors = Matrix(vocab, model.words.dim);
    }
    doc_matrix = Matrix(header.at("docs").at("ids").size(),
                        header.at("docs").at("dim").get<std::size_t>());
    if (!model.config.fine_tune_embeddings)
        word_matrix = Matrix(header.at("word").at("vocab").size(), model.words.dim);

    const auto& manifest = header.at("tensors");
    if (manifest.size() != tensors.size())
        throw std::runtime_error("checkpoint tensor manifest mismatch: " + path);
    std::size_t offset = 16 + header_len;
    for (std::size_t i = 0; i < tensors.size(); ++i) {
        const auto& entry = manifest[i];
        if (entry.at("name").get<std::string>() != tensors[i].name)
            throw std::runtime_error("checkpoint tensor order mismatch at \"" +
                                     entry.at("name").get<std::string>() + "\"");
        const std::size_t rows = entry.at("shape")[0].get<std::size_t>();
        const std::size_t cols = entry.at("shape")[1].get<std::size_t>();
        Matrix& m = *tensors[i].tensor;
        if (rows != m.rows || cols != m.cols)
            throw std::runtime_error("checkpoint tensor \"" + tensors[i].name +
                                     "\" has unexpected shape");
        const std::size_t need = rows * cols * 4;
        if (offset + need + 4 > blob.size())
            throw std::runtime_error("checkpoint payload truncated: " + path);
        for (std::size_t k = 0; k < rows * cols; ++k) {
            const std::uint32_t bits = detail::get_u32(bytes + offset + 4 * k);
            float f;
            std::memcpy(&f, &bits, 4);
            m.a[k] = static_cast<double>(f);
        }
        offset += need;
    }
    if (offset + 4 != blob.size())
        throw std::runtime_error("checkpoint has trailing bytes: " + path);

    // rebuild the vocab-indexed tables around the raw matrices
    {
        WordEmbeddingTable words;
        words.dim = model.words.dim;
        words.policy = model.words.policy;
        words.trainable = model.words.trainable;
        const Matrix& src = model.config.fine_tune_embeddings ? model.words.vectors : word_matrix;
        Vec row(words.dim);
        std::size_t r = 0;
        for (const auto& tok : header.at("word").at("vocab")) {
            std::copy(src.a.begin() + static_cast<std::ptrdiff_t>(r * words.dim),
                      src.a.begin() + static_cast<std::ptrdiff_t>((r + 1) * words.dim),
                      row.begin());
            words.add(tok.get<std::string>(), row);
            ++r;
        }
        model.words = std::move(words);
    }
    {
        DocEmbeddingTable docs;
        const std::size_t d = doc_matrix.cols;
        Vec row(d);
        std::size_t r = 0;
        for (const auto& id : header.at("docs").at("ids")) {
            std::copy(doc_matrix.a.begin() + static_cast<std::ptrdiff_t>(r * d),
                      doc_matrix.a.begin() + static_cast<std::ptrdiff_t>((r + 1) * d), row.begin());
            docs.add(id.get<std::string>(), row);
            ++r;
        }
        model.docs = std::move(docs);
    }
    model.check_shapes();
    return model;
}

}  // namespace entype
