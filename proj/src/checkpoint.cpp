#include <bit>
#include <cstdint>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "posebench/nn.hpp"

namespace posebench::nn {

namespace {

using json = nlohmann::json;

constexpr char kMagic[4] = {'P', 'C', 'K', 'P'};
constexpr std::uint32_t kVersion = 1;

void put_u32(std::string& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) {
        out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
    }
}

void put_f64(std::string& out, double d) {
    const auto bits = std::bit_cast<std::uint64_t>(d);
    for (int i = 0; i < 8; ++i) {
        out.push_back(static_cast<char>((bits >> (8 * i)) & 0xFF));
    }
}

class ByteReader {
public:
    ByteReader(const std::string& bytes, const std::string& what)
        : bytes_(bytes), what_(what) {}

    std::uint32_t u32() {
        need(4);
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) {
            v |= static_cast<std::uint32_t>(static_cast<unsigned char>(bytes_[pos_ + static_cast<std::size_t>(i)]))
                 << (8 * i);
        }
        pos_ += 4;
        return v;
    }

    double f64() {
        need(8);
        std::uint64_t v = 0;
        for (int i = 0; i < 8; ++i) {
            v |= static_cast<std::uint64_t>(static_cast<unsigned char>(bytes_[pos_ + static_cast<std::size_t>(i)]))
                 << (8 * i);
        }
        pos_ += 8;
        return std::bit_cast<double>(v);
    }

    std::string take(std::size_t n) {
        need(n);
        std::string s = bytes_.substr(pos_, n);
        pos_ += n;
        return s;
    }

    bool exhausted() const { return pos_ == bytes_.size(); }

private:
    void need(std::size_t n) const {
        if (pos_ + n > bytes_.size()) {
            throw FormatError(what_ + ": truncated checkpoint");
        }
    }

    const std::string& bytes_;
    std::string what_;
    std::size_t pos_ = 0;
};

json arch_to_json(const ArchitectureConfig& arch) {
    return json{{"input_dim", arch.input_dim},
                {"encoder_hidden", arch.encoder_hidden},
                {"feature_dim", arch.feature_dim},
                {"predictor_hidden", arch.predictor_hidden},
                {"large_predictor", arch.large_predictor}};
}

ArchitectureConfig arch_from_json(const json& j) {
    ArchitectureConfig arch;
    arch.input_dim = j.at("input_dim").get<int>();
    arch.encoder_hidden = j.at("encoder_hidden").get<std::vector<int>>();
    arch.feature_dim = j.at("feature_dim").get<int>();
    arch.predictor_hidden = j.at("predictor_hidden").get<std::vector<int>>();
    arch.large_predictor = j.at("large_predictor").get<bool>();
    return arch;
}

} // namespace

void save_checkpoint(const ModelParams& params, const OptimizerConfig& optimizer,
                     const std::filesystem::path& path) {
    json tensors = json::array();
    for (std::size_t t = 0; t < params.tensors.size(); ++t) {
        tensors.push_back(json{{"name", params.names[t]}, {"shape", params.tensors[t].shape}});
    }
    const json header{{"arch", arch_to_json(params.arch)},
                      {"optimizer", json{{"learning_rate", optimizer.learning_rate},
                                         {"beta1", optimizer.beta1},
                                         {"beta2", optimizer.beta2},
                                         {"epsilon", optimizer.epsilon},
                                         {"decay_point", optimizer.decay_point}}},
                      {"step", params.step},
                      {"seed", params.seed},
                      {"tensors", tensors}};
    const std::string header_text = header.dump();

    std::string out;
    out.append(kMagic, 4);
    put_u32(out, kVersion);
    put_u32(out, static_cast<std::uint32_t>(header_text.size()));
    out.append(header_text);
    for (std::size_t t = 0; t < params.tensors.size(); ++t) {
        for (double v : params.tensors[t].values) put_f64(out, v);
        for (double v : params.adam_m[t].values) put_f64(out, v);
        for (double v : params.adam_v[t].values) put_f64(out, v);
    }

    std::ofstream file(path, std::ios::binary | std::ios::trunc);
    if (!file) {
        throw IoError("cannot open checkpoint for writing: " + path.string());
    }
    file.write(out.data(), static_cast<std::streamsize>(out.size()));
    if (!file) {
        throw IoError("failed writing checkpoint: " + path.string());
    }
}

Checkpoint load_checkpoint(const std::filesystem::path& path,
                           const ArchitectureConfig* expected) {
    std::ifstream file(path, std::ios::binary);
    if (!file) {
        throw IoError("cannot open checkpoint: " + path.string());
    }
    std::string bytes((std::istreambuf_iterator<char>(file)), std::istreambuf_iterator<char>());
    const std::string what = path.string();

    ByteReader reader(bytes, what);
    if (reader.take(4) != std::string(kMagic, 4)) {
        throw FormatError(what + ": bad checkpoint magic");
    }
    const std::uint32_t version = reader.u32();
    if (version != kVersion) {
        throw FormatError(what + ": unsupported checkpoint version " + std::to_string(version));
    }
    const std::uint32_t header_len = reader.u32();
    json header;
    try {
        header = json::parse(reader.take(header_len));
    } catch (const json::exception& e) {
        throw FormatError(what + ": bad checkpoint header: " + e.what());
    }

    Checkpoint ckpt;
    try {
        ckpt.params.arch = arch_from_json(header.at("arch"));
        const json& opt = header.at("optimizer");
        ckpt.optimizer.learning_rate = opt.at("learning_rate").get<double>();
        ckpt.optimizer.beta1 = opt.at("beta1").get<double>();
        ckpt.optimizer.beta2 = opt.at("beta2").get<double>();
        ckpt.optimizer.epsilon = opt.at("epsilon").get<double>();
        ckpt.optimizer.decay_point = opt.at("decay_point").get<double>();
        ckpt.params.step = header.at("step").get<std::int64_t>();
        ckpt.params.seed = header.at("seed").get<std::uint64_t>();
    } catch (const json::exception& e) {
        throw FormatError(what + ": bad checkpoint header: " + e.what());
    }
    if (expected != nullptr && !(ckpt.params.arch == *expected)) {
        throw ShapeMismatchError(what + ": checkpoint architecture does not match the request");
    }

    // Rebuild the canonical tensor layout, then demand the header agrees.
    ModelParams shell = init_params(ckpt.params.arch, ckpt.params.seed);
    const json& tensors = header.at("tensors");
    if (!tensors.is_array() || tensors.size() != shell.tensors.size()) {
        throw FormatError(what + ": checkpoint tensor list does not match the architecture");
    }
    for (std::size_t t = 0; t < shell.tensors.size(); ++t) {
        std::string name;
        std::vector<std::int64_t> shape;
        try {
            name = tensors[t].at("name").get<std::string>();
            shape = tensors[t].at("shape").get<std::vector<std::int64_t>>();
        } catch (const json::exception& e) {
            throw FormatError(what + ": bad checkpoint header: " + e.what());
        }
        if (name != shell.names[t] || shape != shell.tensors[t].shape) {
            throw ShapeMismatchError(what + ": tensor " + std::to_string(t) +
                                     " does not match the architecture layout");
        }
    }

    ckpt.params.names = shell.names;
    ckpt.params.tensors.resize(shell.tensors.size());
    ckpt.params.adam_m.resize(shell.tensors.size());
    ckpt.params.adam_v.resize(shell.tensors.size());
    for (std::size_t t = 0; t < shell.tensors.size(); ++t) {
        Tensor& dst = ckpt.params.tensors[t];
        dst.shape = shell.tensors[t].shape;
        dst.values.resize(shell.tensors[t].values.size());
        for (auto& v : dst.values) v = reader.f64();
        dst.alloc_grad();
        ckpt.params.adam_m[t].shape = dst.shape;
        ckpt.params.adam_m[t].values.resize(dst.values.size());
        for (auto& v : ckpt.params.adam_m[t].values) v = reader.f64();
        ckpt.params.adam_v[t].shape = dst.shape;
        ckpt.params.adam_v[t].values.resize(dst.values.size());
        for (auto& v : ckpt.params.adam_v[t].values) v = reader.f64();
    }
    if (!reader.exhausted()) {
        throw FormatError(what + ": trailing bytes after checkpoint payload");
    }
    return ckpt;
}

} // namespace posebench::nn
