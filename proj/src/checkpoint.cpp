#include <fstream>
#include <sstream>

#include <json.hpp>

#include "openset/embedder.hpp"
#include "openset/error.hpp"

namespace openset {

namespace {

constexpr int kCheckpointVersion = 1;

} // namespace

std::string checkpoint_to_string(const EmbedderModel& model) {
    nlohmann::ordered_json doc;
    doc["version"] = kCheckpointVersion;
    doc["input_dim"] = model.input_dim();
    doc["embed_dim"] = model.embed_dim();
    doc["layers"] = nlohmann::ordered_json::array();
    for (const auto& layer : model.layers()) {
        nlohmann::ordered_json l;
        l["rows"] = layer.weights.rows;
        l["cols"] = layer.weights.cols;
        l["weights"] = layer.weights.data;
        l["bias"] = layer.bias;
        l["activation"] = std::string(to_string(layer.activation));
        doc["layers"].push_back(std::move(l));
    }
    return doc.dump(1) + "\n";
}

EmbedderModel checkpoint_from_string(const std::string& text) {
    try {
        const auto doc = nlohmann::json::parse(text);
        const int version = doc.at("version").get<int>();
        if (version != kCheckpointVersion) {
            throw Error(ErrorCode::invalid_data,
                        "unsupported checkpoint version " + std::to_string(version));
        }
        std::vector<Layer> layers;
        for (const auto& l : doc.at("layers")) {
            Layer layer;
            layer.weights.rows = l.at("rows").get<std::size_t>();
            layer.weights.cols = l.at("cols").get<std::size_t>();
            layer.weights.data = l.at("weights").get<std::vector<double>>();
            layer.bias = l.at("bias").get<std::vector<double>>();
            layer.activation = parse_activation(l.at("activation").get<std::string>());
            layers.push_back(std::move(layer));
        }
        EmbedderModel model(std::move(layers));
        if (model.input_dim() != doc.at("input_dim").get<std::size_t>() ||
            model.embed_dim() != doc.at("embed_dim").get<std::size_t>()) {
            throw Error(ErrorCode::dimension_mismatch,
                        "checkpoint header dims disagree with layer shapes");
        }
        return model;
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorCode::invalid_data, std::string("malformed checkpoint: ") + e.what());
    }
}

void save_checkpoint(const EmbedderModel& model, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error(ErrorCode::io, "cannot write checkpoint " + path.string());
    out << checkpoint_to_string(model);
}

EmbedderModel load_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorCode::io, "cannot open checkpoint " + path.string());
    std::ostringstream buf;
    buf << in.rdbuf();
    return checkpoint_from_string(buf.str());
}

} // namespace openset
