#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace tprl {

// CRC-32 (zlib polynomial, reflected). Used as the trailing payload checksum
// of every binary container this project writes.
std::uint32_t crc32(const std::uint8_t* data, std::size_t len, std::uint32_t seed = 0);

// Full round-trip double formatting (%.17g); every text artifact uses it so
// identical runs stay byte-identical.
std::string format_double(double v);

// Little-endian byte buffer helpers shared by the checkpoint and the data
// container. Readers throw IoError with a position hint when the buffer is
// truncated.
class ByteWriter {
public:
    void u32(std::uint32_t v);
    void u64(std::uint64_t v);
    void f64(double v);
    void str(const std::string& s);  // u32 length prefix + raw bytes
    void raw(const void* p, std::size_t n);

    const std::vector<std::uint8_t>& bytes() const { return buf_; }
    std::size_t size() const { return buf_.size(); }

private:
    std::vector<std::uint8_t> buf_;
};

class ByteReader {
public:
    ByteReader(const std::uint8_t* data, std::size_t len, std::string what)
        : data_(data), len_(len), what_(std::move(what)) {}

    std::uint32_t u32();
    std::uint64_t u64();
    double f64();
    std::string str();
    void raw(void* p, std::size_t n);

    std::size_t pos() const { return pos_; }
    std::size_t remaining() const { return len_ - pos_; }

private:
    void need(std::size_t n);

    const std::uint8_t* data_;
    std::size_t len_;
    std::size_t pos_ = 0;
    std::string what_;
};

// Writes bytes to a temp file in the target directory, then renames it over
// the destination. A crash mid-write never leaves a torn file behind.
void write_file_atomic(const std::filesystem::path& path, const std::vector<std::uint8_t>& bytes);
void write_file_atomic(const std::filesystem::path& path, const std::string& text);

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path);

}  // namespace tprl
