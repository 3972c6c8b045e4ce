#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "starn/train.hpp"

namespace starn {

using ad::Shape;
using ad::Tensor;
using nlohmann::json;

static_assert(std::endian::native == std::endian::little, "checkpoint payloads assume a little-endian host");

namespace {

struct Entry {
    std::string name;
    const Tensor<float>* tensor;
};

// Every tensor of a checkpoint in payload order.
std::vector<Entry> entries(const Checkpoint& c) {
    std::vector<Entry> out;
    for (std::size_t i = 0; i < c.params.size(); ++i) out.push_back({c.params.names[i], &c.params.values[i]});
    out.push_back({"buffer:bn1.running_mean", &c.buffers.bn1.running_mean});
    out.push_back({"buffer:bn1.running_var", &c.buffers.bn1.running_var});
    out.push_back({"buffer:bn2.running_mean", &c.buffers.bn2.running_mean});
    out.push_back({"buffer:bn2.running_var", &c.buffers.bn2.running_var});
    for (std::size_t i = 0; i < c.adam.m.size(); ++i) out.push_back({"adam.m:" + c.params.names[i], &c.adam.m[i]});
    for (std::size_t i = 0; i < c.adam.v.size(); ++i) out.push_back({"adam.v:" + c.params.names[i], &c.adam.v[i]});
    return out;
}

}  // namespace

std::string serialize_checkpoint(const Checkpoint& ckpt) {
    const auto list = entries(ckpt);
    json tensors = json::array();
    for (const auto& e : list) {
        tensors.push_back({{"name", e.name}, {"shape", e.tensor->shape()}, {"dtype", "float32"}});
    }
    json header{{"format", kCheckpointFormat},
                {"model_config", ckpt.model},
                {"train_config", ckpt.train},
                {"norm_stats", to_json(ckpt.stats)},
                {"weight_mask", ckpt.params.is_weight},
                {"tensors", tensors},
                {"rng_state", ckpt.rng_state},
                {"adam_step", ckpt.adam.step},
                {"epoch", ckpt.epoch},
                {"best_score", ckpt.best_score}};
    std::string out = header.dump();
    out.push_back('\n');
    for (const auto& e : list) {
        const auto* p = reinterpret_cast<const char*>(e.tensor->data());
        out.append(p, e.tensor->size() * sizeof(float));
    }
    return out;
}

Checkpoint deserialize_checkpoint(const std::string& bytes) {
    const auto nl = bytes.find('\n');
    if (nl == std::string::npos) throw DataError("checkpoint: missing header line");
    json header;
    try {
        header = json::parse(bytes.substr(0, nl));
    } catch (const json::exception& e) {
        throw DataError(std::string("checkpoint: malformed header: ") + e.what());
    }
    Checkpoint c;
    try {
        if (header.at("format").get<std::string>() != kCheckpointFormat) {
            throw DataError("checkpoint: unsupported format '" + header.at("format").get<std::string>() + "'");
        }
        c.model = header.at("model_config").get<ModelConfig>();
        c.train = header.at("train_config").get<TrainConfig>();
        c.stats = feature_stats_from_json(header.at("norm_stats"));
        c.rng_state = header.at("rng_state").get<std::string>();
        c.adam.step = header.at("adam_step").get<std::int64_t>();
        c.epoch = header.at("epoch").get<int>();
        c.best_score = header.at("best_score").get<double>();
        const auto mask = header.at("weight_mask").get<std::vector<bool>>();

        c.buffers = ModelBuffers<float>(c.model.hidden);
        std::size_t offset = nl + 1;
        const auto& tensors = header.at("tensors");
        std::vector<std::pair<std::string, Tensor<float>>> loaded;
        for (const auto& t : tensors) {
            const auto name = t.at("name").get<std::string>();
            if (t.at("dtype").get<std::string>() != "float32") throw DataError("checkpoint: unsupported dtype for " + name);
            Tensor<float> v(t.at("shape").get<Shape>());
            const std::size_t n = v.size() * sizeof(float);
            if (offset + n > bytes.size()) throw DataError("checkpoint: truncated payload at tensor " + name);
            std::memcpy(v.data(), bytes.data() + offset, n);
            offset += n;
            loaded.emplace_back(name, std::move(v));
        }
        if (offset != bytes.size()) throw DataError("checkpoint: trailing bytes after the last tensor");

        for (auto& [name, v] : loaded) {
            if (name.rfind("buffer:", 0) == 0) {
                const auto key = name.substr(7);
                if (key == "bn1.running_mean") c.buffers.bn1.running_mean = std::move(v);
                else if (key == "bn1.running_var") c.buffers.bn1.running_var = std::move(v);
                else if (key == "bn2.running_mean") c.buffers.bn2.running_mean = std::move(v);
                else if (key == "bn2.running_var") c.buffers.bn2.running_var = std::move(v);
                else throw DataError("checkpoint: unknown buffer " + name);
            } else if (name.rfind("adam.m:", 0) == 0) {
                c.adam.m.push_back(std::move(v));
            } else if (name.rfind("adam.v:", 0) == 0) {
                c.adam.v.push_back(std::move(v));
            } else {
                c.params.names.push_back(name);
                c.params.values.push_back(std::move(v));
            }
        }
        if (mask.size() != c.params.size()) throw DataError("checkpoint: weight mask does not match the parameters");
        c.params.is_weight = mask;
        const auto expected = init_params<float>(c.model, 0);
        if (expected.names != c.params.names) throw DataError("checkpoint: parameters do not match the model config");
        for (std::size_t i = 0; i < expected.size(); ++i) {
            if (expected.values[i].shape() != c.params.values[i].shape()) {
                throw DataError("checkpoint: wrong shape for " + c.params.names[i]);
            }
        }
    } catch (const json::exception& e) {
        throw DataError(std::string("checkpoint: malformed header: ") + e.what());
    }
    return c;
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write " + path.string());
    const auto bytes = serialize_checkpoint(ckpt);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return deserialize_checkpoint(ss.str());
}

}  // namespace starn
