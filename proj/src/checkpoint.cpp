#include <bit>
#include <cstring>
#include <fstream>

#include "json.hpp"
#include "vip/errors.hpp"
#include "vip/io_util.hpp"
#include "vip/model.hpp"

namespace vip {

namespace {

using nlohmann::json;

constexpr char kMagic[8] = {'V', 'I', 'P', 'M', 'D', 'L', '1', '\0'};

}  // namespace

std::string config_to_json(const VipConfig& c) {
    json j;
    j["resolution"] = c.resolution;
    j["proposal_height"] = c.proposal_height;
    j["conv_channels"] = c.conv_channels;
    j["cnn_channels"] = c.cnn_channels;
    j["kernel_size"] = c.kernel_size;
    j["pool_size"] = c.pool_size;
    j["lstm_dim"] = c.lstm_dim;
    j["ffn_hidden"] = c.ffn_hidden;
    j["handcrafted_dim"] = c.handcrafted_dim;
    j["lambda1"] = c.lambda1;
    j["lambda2"] = c.lambda2;
    j["lr"] = c.lr;
    j["batch_size"] = c.batch_size;
    j["max_epochs"] = c.max_epochs;
    j["patience"] = c.patience;
    j["seed"] = c.seed;
    j["variant"] = to_string(c.variant);
    j["snapshot_mode"] = to_string(c.snapshot_mode);
    j["proposal_feature"] = to_string(c.proposal_feature);
    j["adam_beta1"] = c.adam_beta1;
    j["adam_beta2"] = c.adam_beta2;
    j["adam_eps"] = c.adam_eps;
    j["regularize_biases"] = c.regularize_biases;
    j["feature_scaling"] = c.feature_scaling;
    j["include_zero_relevant"] = c.include_zero_relevant;
    j["threads"] = c.threads;
    return j.dump();
}

VipConfig config_from_json(const std::string& json_text) {
    json j;
    try {
        j = json::parse(json_text);
    } catch (const json::exception& e) {
        throw ConfigError(std::string("bad config JSON: ") + e.what());
    }
    if (!j.is_object()) throw ConfigError("config JSON must be an object");
    VipConfig c;
    for (const auto& [key, value] : j.items()) {
        try {
            if (key == "resolution") c.resolution = value.get<std::size_t>();
            else if (key == "proposal_height") c.proposal_height = value.get<std::size_t>();
            else if (key == "conv_channels") c.conv_channels = value.get<std::vector<std::size_t>>();
            else if (key == "cnn_channels") c.cnn_channels = value.get<std::vector<std::size_t>>();
            else if (key == "kernel_size") c.kernel_size = value.get<std::size_t>();
            else if (key == "pool_size") c.pool_size = value.get<std::size_t>();
            else if (key == "lstm_dim") c.lstm_dim = value.get<std::size_t>();
            else if (key == "ffn_hidden") c.ffn_hidden = value.get<std::size_t>();
            else if (key == "handcrafted_dim") c.handcrafted_dim = value.get<std::size_t>();
            else if (key == "lambda1") c.lambda1 = value.get<double>();
            else if (key == "lambda2") c.lambda2 = value.get<double>();
            else if (key == "lr") c.lr = value.get<double>();
            else if (key == "batch_size") c.batch_size = value.get<std::size_t>();
            else if (key == "max_epochs") c.max_epochs = value.get<std::size_t>();
            else if (key == "patience") c.patience = value.get<std::size_t>();
            else if (key == "seed") c.seed = value.get<std::uint64_t>();
            else if (key == "variant") c.variant = variant_from_string(value.get<std::string>());
            else if (key == "snapshot_mode")
                c.snapshot_mode = snapshot_mode_from_string(value.get<std::string>());
            else if (key == "proposal_feature")
                c.proposal_feature = proposal_feature_from_string(value.get<std::string>());
            else if (key == "adam_beta1") c.adam_beta1 = value.get<double>();
            else if (key == "adam_beta2") c.adam_beta2 = value.get<double>();
            else if (key == "adam_eps") c.adam_eps = value.get<double>();
            else if (key == "regularize_biases") c.regularize_biases = value.get<bool>();
            else if (key == "feature_scaling") c.feature_scaling = value.get<bool>();
            else if (key == "include_zero_relevant") c.include_zero_relevant = value.get<bool>();
            else if (key == "threads") c.threads = value.get<unsigned>();
            else throw ConfigError("unknown config key: " + key);
        } catch (const json::exception& e) {
            throw ConfigError("bad value for config key '" + key + "': " + e.what());
        }
    }
    c.validate();
    return c;
}

namespace {

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

void put_f64(std::vector<std::uint8_t>& out, double v) {
    const auto bits = std::bit_cast<std::uint64_t>(v);
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::uint8_t>(bits >> (8 * i)));
}

void put_named_tensor(std::vector<std::uint8_t>& out, const std::string& name, const Tensor& t) {
    put_u32(out, static_cast<std::uint32_t>(name.size()));
    out.insert(out.end(), name.begin(), name.end());
    put_u32(out, static_cast<std::uint32_t>(t.shape.size()));
    for (std::size_t d : t.shape) put_u32(out, static_cast<std::uint32_t>(d));
    for (double v : t.data) put_f64(out, v);
}

struct Reader {
    const std::vector<std::uint8_t>& bytes;
    std::size_t pos = 0;

    std::uint32_t u32() {
        if (bytes.size() - pos < 4) throw FormatError("truncated model file", pos);
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(bytes[pos + i]) << (8 * i);
        pos += 4;
        return v;
    }
    double f64() {
        if (bytes.size() - pos < 8) throw FormatError("truncated model file", pos);
        std::uint64_t v = 0;
        for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(bytes[pos + i]) << (8 * i);
        pos += 8;
        return std::bit_cast<double>(v);
    }
    std::string str() {
        const std::uint32_t n = u32();
        if (bytes.size() - pos < n) throw FormatError("truncated string in model file", pos);
        std::string s(bytes.begin() + static_cast<std::ptrdiff_t>(pos),
                      bytes.begin() + static_cast<std::ptrdiff_t>(pos + n));
        pos += n;
        return s;
    }
};

}  // namespace

std::vector<std::uint8_t> serialize_model(const VipModel& model) {
    std::vector<std::uint8_t> out;
    out.insert(out.end(), kMagic, kMagic + 8);
    const std::string cfg = config_to_json(model.config);
    put_u32(out, static_cast<std::uint32_t>(cfg.size()));
    out.insert(out.end(), cfg.begin(), cfg.end());
    std::uint32_t count = static_cast<std::uint32_t>(model.params.size());
    if (model.scaler) count += 2;
    put_u32(out, count);
    for (const auto& p : model.params.items) put_named_tensor(out, p.name, p.tensor);
    if (model.scaler) {
        put_named_tensor(out, "scaler.min", model.scaler->min);
        put_named_tensor(out, "scaler.max", model.scaler->max);
    }
    return out;
}

VipModel deserialize_model(const std::vector<std::uint8_t>& bytes) {
    if (bytes.size() < 8 || !std::equal(kMagic, kMagic + 8, bytes.begin()))
        throw FormatError("bad model magic", 0);
    Reader r{bytes, 8};
    VipModel model;
    model.config = config_from_json(r.str());
    model.params = param_skeleton(model.config);
    std::vector<bool> seen(model.params.size(), false);
    Tensor scaler_min, scaler_max;
    const std::uint32_t count = r.u32();
    for (std::uint32_t i = 0; i < count; ++i) {
        const std::string name = r.str();
        const std::uint32_t ndim = r.u32();
        std::vector<std::size_t> shape(ndim);
        for (auto& d : shape) d = r.u32();
        Tensor t(shape);
        for (auto& v : t.data) v = r.f64();
        if (name == "scaler.min") {
            scaler_min = std::move(t);
        } else if (name == "scaler.max") {
            scaler_max = std::move(t);
        } else {
            bool found = false;
            for (std::size_t p = 0; p < model.params.items.size(); ++p) {
                if (model.params.items[p].name != name) continue;
                if (model.params.items[p].tensor.shape != t.shape)
                    throw FormatError("tensor shape mismatch for " + name, r.pos);
                model.params.items[p].tensor = std::move(t);
                seen[p] = true;
                found = true;
                break;
            }
            if (!found) throw FormatError("unexpected tensor '" + name + "' in model file", r.pos);
        }
    }
    for (std::size_t p = 0; p < seen.size(); ++p)
        if (!seen[p])
            throw FormatError("model file is missing tensor " + model.params.items[p].name,
                              r.pos);
    if (scaler_min.size() > 0 || scaler_max.size() > 0) {
        if (scaler_min.size() != scaler_max.size() || scaler_min.size() == 0)
            throw FormatError("inconsistent scaler tensors", r.pos);
        model.scaler = FeatureScaler{std::move(scaler_min), std::move(scaler_max)};
    }
    if (r.pos != bytes.size()) throw FormatError("trailing bytes in model file", r.pos);
    return model;
}

void save_model_file(const VipModel& model, const std::string& path) {
    const auto bytes = serialize_model(model);
    atomic_write_file(path,
                      std::string_view(reinterpret_cast<const char*>(bytes.data()), bytes.size()));
}

VipModel load_model_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open model file: " + path);
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                    std::istreambuf_iterator<char>());
    return deserialize_model(bytes);
}

}  // namespace vip
