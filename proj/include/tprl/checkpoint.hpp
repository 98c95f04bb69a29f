#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "tprl/matrix.hpp"

namespace tprl {

// Binary checkpoint: magic "TPRL", u32 format version, section list, CRC32
// trailer over everything before it. Tensors are named, dimensioned with u32
// extents and stored as row-major little-endian doubles. Load rejects bad
// magic, unknown versions, truncation and checksum mismatches with distinct
// messages.
struct NamedTensor {
    std::string name;
    Matrix value;
};

struct CheckpointSection {
    std::string name;
    std::vector<NamedTensor> tensors;

    const Matrix* find(const std::string& tensor_name) const;
    // Throws IoError naming the tensor when missing.
    const Matrix& require(const std::string& tensor_name) const;
};

struct Checkpoint {
    std::vector<CheckpointSection> sections;

    CheckpointSection* find_section(const std::string& name);
    const CheckpointSection* find_section(const std::string& name) const;
    const CheckpointSection& require_section(const std::string& name) const;
};

inline constexpr std::uint32_t kCheckpointVersion = 1;

std::vector<std::uint8_t> serialize_checkpoint(const Checkpoint& ck);
Checkpoint deserialize_checkpoint(const std::vector<std::uint8_t>& bytes);

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ck);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace tprl
