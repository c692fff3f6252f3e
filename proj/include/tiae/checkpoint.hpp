#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>

#include "tiae/model.hpp"

namespace tiae {

struct CheckpointMeta {
    std::uint64_t step = 0;
    std::string config_hash;
    std::optional<std::array<std::uint64_t, 4>> rng_state;

    bool operator==(const CheckpointMeta&) const = default;
};

struct Checkpoint {
    Model model;
    CheckpointMeta meta;
};

/// Layout: 8-byte magic "TIAECKPT", u64 little-endian header length, a JSON
/// header (model spec, per-tensor name/shape/offset/bytes, step, config hash,
/// PRNG state), then all parameters as little-endian f64 in header order.
void save_checkpoint(const std::filesystem::path& path, const Model& model,
                     const CheckpointMeta& meta);
/// Throws FormatError on a bad magic, malformed header, truncated payload or
/// tensor shapes that disagree with the stored spec.
Checkpoint load_checkpoint(const std::filesystem::path& path);

} // namespace tiae
