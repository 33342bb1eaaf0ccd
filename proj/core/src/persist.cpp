#include "geoadapt/persist.hpp"

#include <bit>
#include <cstring>
#include <fstream>

#include <nlohmann/json.hpp>

namespace geoadapt::persist {

using nlohmann::json;

static_assert(std::endian::native == std::endian::little,
              "checkpoint blobs are written as native little-endian float32");

namespace {

constexpr char kMagic[8] = {'G', 'E', 'O', 'A', 'D', 'P', 'T', '1'};

json config_to_json(const model::EncoderConfig& c) {
    return json{{"vocab_size", c.vocab_size}, {"n_layers", c.n_layers},
                {"d_model", c.d_model},       {"n_heads", c.n_heads},
                {"d_ff", c.d_ff},             {"max_len", c.max_len},
                {"dropout", c.dropout}};
}

model::EncoderConfig config_from_json(const json& j) {
    model::EncoderConfig c;
    c.vocab_size = j.at("vocab_size").get<size_t>();
    c.n_layers = j.at("n_layers").get<size_t>();
    c.d_model = j.at("d_model").get<size_t>();
    c.n_heads = j.at("n_heads").get<size_t>();
    c.d_ff = j.at("d_ff").get<size_t>();
    c.max_len = j.at("max_len").get<size_t>();
    c.dropout = j.at("dropout").get<double>();
    return c;
}

}  // namespace

void save_checkpoint(const model::ModelBundle<float>& m, const std::string& path) {
    json params = json::array();
    uint64_t offset = 0;
    for (const auto& [name, p] : m.store.entries()) {
        params.push_back({{"name", name},
                          {"shape", p.value.shape},
                          {"offset", offset},
                          {"count", p.value.size()}});
        offset += p.value.size() * sizeof(float);
    }
    json header{{"format_version", kCheckpointFormatVersion},
                {"model_config", config_to_json(m.config)},
                {"geo_classes", m.geo_classes},
                {"lang_classes", m.lang_classes},
                {"vocab", m.vocab.tokens()},
                {"params", params},
                {"meta",
                 {{"regime", m.meta.regime}, {"epoch", m.meta.epoch}, {"seed", m.meta.seed}}}};
    if (m.geo_stats)
        header["geo_stats"] = {{"mean_lon", m.geo_stats->mean_lon},
                               {"mean_lat", m.geo_stats->mean_lat},
                               {"std_lon", m.geo_stats->std_lon},
                               {"std_lat", m.geo_stats->std_lat}};

    std::string header_text = header.dump();
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot open '" + path + "' for writing");
    out.write(kMagic, sizeof(kMagic));
    uint64_t header_len = header_text.size();
    out.write(reinterpret_cast<const char*>(&header_len), sizeof(header_len));
    out.write(header_text.data(), static_cast<std::streamsize>(header_text.size()));
    for (const auto& [name, p] : m.store.entries())
        out.write(reinterpret_cast<const char*>(p.value.data.data()),
                  static_cast<std::streamsize>(p.value.size() * sizeof(float)));
    if (!out) throw Error("write to '" + path + "' failed");
}

model::ModelBundle<float> load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot open checkpoint '" + path + "'");

    char magic[8];
    if (!in.read(magic, sizeof(magic)))
        throw CheckpointTruncatedError("checkpoint '" + path + "': shorter than the magic");
    if (std::memcmp(magic, kMagic, sizeof(kMagic)) != 0)
        throw CheckpointVersionError("checkpoint '" + path + "': unrecognized magic");

    uint64_t header_len = 0;
    if (!in.read(reinterpret_cast<char*>(&header_len), sizeof(header_len)))
        throw CheckpointTruncatedError("checkpoint '" + path + "': missing header length");
    if (header_len > (1ull << 30))
        throw CheckpointTruncatedError("checkpoint '" + path + "': implausible header length");
    std::string header_text(header_len, '\0');
    if (!in.read(header_text.data(), static_cast<std::streamsize>(header_len)))
        throw CheckpointTruncatedError("checkpoint '" + path + "': truncated header");

    json header = json::parse(header_text, nullptr, false);
    if (header.is_discarded())
        throw CheckpointTruncatedError("checkpoint '" + path + "': header is not valid JSON");
    int version = header.value("format_version", -1);
    if (version != kCheckpointFormatVersion)
        throw CheckpointVersionError("checkpoint '" + path + "': format version " +
                                     std::to_string(version) + ", expected " +
                                     std::to_string(kCheckpointFormatVersion));

    model::ModelBundle<float> m;
    try {
        m.config = config_from_json(header.at("model_config"));
        m.geo_classes = header.at("geo_classes").get<size_t>();
        m.lang_classes = header.at("lang_classes").get<size_t>();
        m.vocab = text::Vocabulary::from_id_order(
            header.at("vocab").get<std::vector<std::string>>());
        const json& meta = header.at("meta");
        m.meta.regime = meta.at("regime").get<std::string>();
        m.meta.epoch = meta.at("epoch").get<size_t>();
        m.meta.seed = meta.at("seed").get<uint64_t>();
        if (header.contains("geo_stats")) {
            const json& gs = header["geo_stats"];
            cluster::CoordStats stats;
            stats.mean_lon = gs.at("mean_lon").get<double>();
            stats.mean_lat = gs.at("mean_lat").get<double>();
            stats.std_lon = gs.at("std_lon").get<double>();
            stats.std_lat = gs.at("std_lat").get<double>();
            m.geo_stats = stats;
        }

        for (const auto& pj : header.at("params")) {
            std::string name = pj.at("name").get<std::string>();
            std::vector<size_t> shape = pj.at("shape").get<std::vector<size_t>>();
            size_t count = pj.at("count").get<size_t>();
            if (nn::Tensor<float>::numel(shape) != count)
                throw CheckpointShapeError("checkpoint '" + path + "': parameter '" + name +
                                           "' count disagrees with its shape");
            nn::Tensor<float> value = nn::Tensor<float>::zeros(shape);
            if (!in.read(reinterpret_cast<char*>(value.data.data()),
                         static_cast<std::streamsize>(count * sizeof(float))))
                throw CheckpointTruncatedError("checkpoint '" + path +
                                               "': truncated blob for parameter '" + name + "'");
            m.store.create(name, std::move(value));
        }
    } catch (const json::exception& e) {
        throw CheckpointTruncatedError("checkpoint '" + path + "': malformed header (" +
                                       e.what() + ")");
    }

    // Cross-check against a freshly shaped model so a corrupted header
    // cannot produce a silently misshapen bundle.
    model::ModelBundle<float> reference = model::init_bundle<float>(
        m.config, m.vocab, m.geo_classes, m.lang_classes, /*seed=*/0);
    if (reference.store.size() != m.store.size())
        throw CheckpointShapeError("checkpoint '" + path + "': unexpected parameter count");
    for (const auto& [name, p] : reference.store.entries()) {
        if (!m.store.has(name))
            throw CheckpointShapeError("checkpoint '" + path + "': missing parameter '" + name +
                                       "'");
        if (m.store.at(name).value.shape != p.value.shape)
            throw CheckpointShapeError("checkpoint '" + path + "': parameter '" + name +
                                       "' has shape " + m.store.at(name).value.shape_str() +
                                       ", expected " + p.value.shape_str());
    }
    return m;
}

}  // namespace geoadapt::persist
