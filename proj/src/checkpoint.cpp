#include "tiae/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>

#include "tiae/config.hpp"
#include "tiae/data_io.hpp"
#include "tiae/errors.hpp"

namespace tiae {

using nlohmann::json;

namespace {

constexpr char kMagic[8] = {'T', 'I', 'A', 'E', 'C', 'K', 'P', 'T'};

void put_u64(std::string& out, std::uint64_t v) {
    for (int i = 0; i < 8; ++i) {
        out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
    }
}

std::uint64_t get_u64(const std::uint8_t* p) {
    std::uint64_t v = 0;
    for (int i = 7; i >= 0; --i) {
        v = (v << 8) | p[i];
    }
    return v;
}

} // namespace

void save_checkpoint(const std::filesystem::path& path, const Model& model,
                     const CheckpointMeta& meta) {
    const auto names = model.parameter_names();
    const auto& params = model.parameters();
    json tensors = json::array();
    std::uint64_t offset = 0;
    for (std::size_t i = 0; i < params.size(); ++i) {
        const std::uint64_t bytes = params[i].numel() * sizeof(double);
        tensors.push_back(json{{"name", names[i]},
                               {"shape", params[i].shape()},
                               {"offset", offset},
                               {"bytes", bytes}});
        offset += bytes;
    }
    json header{{"format", "tiae-checkpoint"},
                {"version", 1},
                {"model", to_json(model.spec())},
                {"tensors", tensors},
                {"step", meta.step},
                {"config_hash", meta.config_hash}};
    if (meta.rng_state) {
        header["rng_state"] = *meta.rng_state;
    }
    const std::string text = header.dump();

    std::string out(kMagic, sizeof(kMagic));
    put_u64(out, text.size());
    out += text;
    out.reserve(out.size() + offset);
    for (const Tensor& t : params) {
        for (double v : t.data()) {
            put_u64(out, std::bit_cast<std::uint64_t>(v));
        }
    }
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) {
        throw std::runtime_error("cannot open " + path.string() + " for writing");
    }
    f.write(out.data(), static_cast<std::streamsize>(out.size()));
    if (!f) {
        throw std::runtime_error("write failed: " + path.string());
    }
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
    const auto bytes = read_file_bytes(path);
    const std::string where = path.string() + ": ";
    if (bytes.size() < 16 || std::memcmp(bytes.data(), kMagic, sizeof(kMagic)) != 0) {
        throw FormatError(where + "not a checkpoint (bad magic)");
    }
    const std::uint64_t header_len = get_u64(bytes.data() + 8);
    if (header_len > bytes.size() - 16) {
        throw FormatError(where + "truncated header");
    }
    json header;
    try {
        header = json::parse(bytes.begin() + 16, bytes.begin() + 16 + static_cast<std::ptrdiff_t>(header_len));
    } catch (const json::exception& e) {
        throw FormatError(where + "malformed header: " + e.what());
    }
    const std::uint8_t* payload = bytes.data() + 16 + header_len;
    const std::size_t payload_size = bytes.size() - 16 - header_len;

    try {
        if (header.at("format") != "tiae-checkpoint" || header.at("version") != 1) {
            throw FormatError(where + "unsupported format or version");
        }
        ModelSpec spec = model_spec_from_json(header.at("model"), "model");
        const auto expected = Model::parameter_shapes(spec);
        const json& tensors = header.at("tensors");
        if (tensors.size() != expected.size()) {
            throw FormatError(where + "tensor count does not match the model spec");
        }
        std::vector<Tensor> params;
        for (std::size_t i = 0; i < expected.size(); ++i) {
            const json& t = tensors[i];
            const Shape shape = t.at("shape").get<Shape>();
            const auto offset = t.at("offset").get<std::uint64_t>();
            const auto nbytes = t.at("bytes").get<std::uint64_t>();
            if (shape != expected[i] || nbytes != shape_numel(shape) * sizeof(double)) {
                throw FormatError(where + "tensor " + t.at("name").get<std::string>() +
                                  " has shape " + shape_to_string(shape) + ", expected " +
                                  shape_to_string(expected[i]));
            }
            if (offset > payload_size || nbytes > payload_size - offset) {
                throw FormatError(where + "truncated payload");
            }
            std::vector<double> values(shape_numel(shape));
            for (std::size_t k = 0; k < values.size(); ++k) {
                values[k] = std::bit_cast<double>(get_u64(payload + offset + 8 * k));
            }
            params.emplace_back(shape, std::move(values));
        }
        CheckpointMeta meta;
        meta.step = header.at("step").get<std::uint64_t>();
        meta.config_hash = header.at("config_hash").get<std::string>();
        if (header.contains("rng_state")) {
            meta.rng_state = header.at("rng_state").get<std::array<std::uint64_t, 4>>();
        }
        return Checkpoint{Model(std::move(spec), std::move(params)), std::move(meta)};
    } catch (const json::exception& e) {
        throw FormatError(where + "malformed header: " + e.what());
    } catch (const ConfigError& e) {
        throw FormatError(where + e.what());
    }
}

} // namespace tiae
