#include "tprl/checkpoint.hpp"

#include <cstring>

#include "tprl/error.hpp"
#include "tprl/io_util.hpp"

namespace tprl {

namespace {
constexpr char kMagic[4] = {'T', 'P', 'R', 'L'};
}

const Matrix* CheckpointSection::find(const std::string& tensor_name) const {
    for (const NamedTensor& t : tensors) {
        if (t.name == tensor_name) return &t.value;
    }
    return nullptr;
}

const Matrix& CheckpointSection::require(const std::string& tensor_name) const {
    const Matrix* m = find(tensor_name);
    if (!m) throw IoError("checkpoint section '" + name + "' is missing tensor '" + tensor_name + "'");
    return *m;
}

CheckpointSection* Checkpoint::find_section(const std::string& name) {
    for (CheckpointSection& s : sections) {
        if (s.name == name) return &s;
    }
    return nullptr;
}

const CheckpointSection* Checkpoint::find_section(const std::string& name) const {
    for (const CheckpointSection& s : sections) {
        if (s.name == name) return &s;
    }
    return nullptr;
}

const CheckpointSection& Checkpoint::require_section(const std::string& name) const {
    const CheckpointSection* s = find_section(name);
    if (!s) throw IoError("checkpoint is missing section '" + name + "'");
    return *s;
}

std::vector<std::uint8_t> serialize_checkpoint(const Checkpoint& ck) {
    ByteWriter w;
    w.raw(kMagic, 4);
    w.u32(kCheckpointVersion);
    w.u32(static_cast<std::uint32_t>(ck.sections.size()));
    for (const CheckpointSection& s : ck.sections) {
        w.str(s.name);
        w.u32(static_cast<std::uint32_t>(s.tensors.size()));
        for (const NamedTensor& t : s.tensors) {
            w.str(t.name);
            w.u32(2);  // every tensor in this project is rank 2
            w.u32(static_cast<std::uint32_t>(t.value.rows));
            w.u32(static_cast<std::uint32_t>(t.value.cols));
            for (double v : t.value.data) w.f64(v);
        }
    }
    std::vector<std::uint8_t> bytes = w.bytes();
    const std::uint32_t crc = crc32(bytes.data(), bytes.size());
    ByteWriter trailer;
    trailer.u32(crc);
    bytes.insert(bytes.end(), trailer.bytes().begin(), trailer.bytes().end());
    return bytes;
}

Checkpoint deserialize_checkpoint(const std::vector<std::uint8_t>& bytes) {
    // Error priority: bad magic, then structural truncation, then version,
    // then checksum. A flipped byte in tensor data parses fine and is caught
    // by the CRC; a flipped length field surfaces as truncation. Either way
    // a damaged file never loads silently.
    if (bytes.size() < 4 || std::memcmp(bytes.data(), kMagic, 4) != 0) {
        throw IoError("checkpoint: bad magic");
    }
    ByteReader r(bytes.data(), bytes.size(), "checkpoint: truncated");
    char magic[4];
    r.raw(magic, 4);
    const std::uint32_t version = r.u32();
    if (version != kCheckpointVersion) {
        throw IoError("checkpoint: unsupported format version " + std::to_string(version));
    }
    Checkpoint ck;
    const std::uint32_t nsec = r.u32();
    ck.sections.resize(nsec);
    for (std::uint32_t i = 0; i < nsec; ++i) {
        CheckpointSection& s = ck.sections[i];
        s.name = r.str();
        const std::uint32_t ntens = r.u32();
        s.tensors.resize(ntens);
        for (std::uint32_t j = 0; j < ntens; ++j) {
            NamedTensor& t = s.tensors[j];
            t.name = r.str();
            const std::uint32_t rank = r.u32();
            if (rank != 2) throw IoError("checkpoint: unsupported tensor rank for '" + t.name + "'");
            const std::uint32_t rows = r.u32();
            const std::uint32_t cols = r.u32();
            t.value = Matrix(rows, cols);
            for (double& v : t.value.data) v = r.f64();
        }
    }
    const std::size_t payload_len = r.pos();
    const std::uint32_t stored_crc = r.u32();
    if (r.remaining() != 0) throw IoError("checkpoint: trailing bytes after checksum");
    const std::uint32_t actual_crc = crc32(bytes.data(), payload_len);
    if (stored_crc != actual_crc) throw IoError("checkpoint: checksum mismatch (corrupt file)");
    return ck;
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ck) {
    write_file_atomic(path, serialize_checkpoint(ck));
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
    return deserialize_checkpoint(read_file_bytes(path));
}

}  // namespace tprl
