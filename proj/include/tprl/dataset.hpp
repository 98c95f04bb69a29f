#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "tprl/demos.hpp"
#include "tprl/environment.hpp"

namespace tprl {

// Binary sample container, magic "TPRLDATA": header (version, token count,
// token width, query width), the sample records, an optional demos section
// and a CRC32 trailer. Demo label bits are packed LSB-first. Load rejects
// bad magic, unknown versions, truncation, inconsistent indices and checksum
// mismatches with distinct messages.
struct DataFile {
    std::size_t n_tokens = 0;
    std::size_t d_v = 0;
    std::size_t d_q = 0;
    std::vector<Sample> samples;
    std::vector<DemoTrajectory> demos;  // empty when the file carries none
};

inline constexpr std::uint32_t kDataVersion = 1;

std::vector<std::uint8_t> serialize_data(const DataFile& df);
DataFile deserialize_data(const std::vector<std::uint8_t>& bytes);

void save_data(const std::filesystem::path& path, const DataFile& df);
DataFile load_data(const std::filesystem::path& path);

}  // namespace tprl
