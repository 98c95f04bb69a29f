#include "tprl/dataset.hpp"

#include <algorithm>
#include <cstring>

#include "tprl/error.hpp"
#include "tprl/io_util.hpp"

namespace tprl {

namespace {

constexpr char kMagic[8] = {'T', 'P', 'R', 'L', 'D', 'A', 'T', 'A'};

void check_sample(const Sample& s, const DataFile& df, std::size_t idx) {
    const std::string where = "data container: sample " + std::to_string(idx);
    if (s.tokens.rows != df.n_tokens || s.tokens.cols != df.d_v) {
        throw IoError(where + " has tokens of the wrong shape");
    }
    if (s.query.size() != df.d_q) throw IoError(where + " has a query of the wrong width");
    std::uint32_t prev = 0;
    bool first = true;
    for (std::uint32_t r : s.relevant) {
        if (r >= df.n_tokens) throw IoError(where + " has a relevant index out of range");
        if (!first && r <= prev) throw IoError(where + " has an unsorted relevant set");
        prev = r;
        first = false;
    }
}

void check_demo(const DemoTrajectory& d, const DataFile& df, std::size_t idx) {
    const std::string where = "data container: demo " + std::to_string(idx);
    if (d.sample_index >= df.samples.size()) {
        throw IoError(where + " references a sample out of range");
    }
    for (const DemoStep& step : d.steps) {
        if (step.labels.size() != step.index_map.size()) {
            throw IoError(where + " has labels and index map of different lengths");
        }
        std::uint32_t prev = 0;
        bool first = true;
        for (std::uint32_t i : step.index_map) {
            if (i >= df.n_tokens) throw IoError(where + " has a token index out of range");
            if (!first && i <= prev) throw IoError(where + " has an unsorted index map");
            prev = i;
            first = false;
        }
    }
}

}  // namespace

std::vector<std::uint8_t> serialize_data(const DataFile& df) {
    ByteWriter w;
    w.raw(kMagic, sizeof(kMagic));
    w.u32(kDataVersion);
    w.u32(static_cast<std::uint32_t>(df.n_tokens));
    w.u32(static_cast<std::uint32_t>(df.d_v));
    w.u32(static_cast<std::uint32_t>(df.d_q));

    w.u64(df.samples.size());
    for (std::size_t si = 0; si < df.samples.size(); ++si) {
        const Sample& s = df.samples[si];
        check_sample(s, df, si);
        w.u64(s.seed);
        w.u32(static_cast<std::uint32_t>(s.relevant.size()));
        for (std::uint32_t r : s.relevant) w.u32(r);
        for (double v : s.tokens.data) w.f64(v);
        for (double v : s.query) w.f64(v);
    }

    w.u64(df.demos.size());
    for (std::size_t di = 0; di < df.demos.size(); ++di) {
        const DemoTrajectory& d = df.demos[di];
        check_demo(d, df, di);
        w.u32(d.sample_index);
        w.u32(static_cast<std::uint32_t>(d.steps.size()));
        for (const DemoStep& step : d.steps) {
            w.u32(static_cast<std::uint32_t>(step.index_map.size()));
            for (std::uint32_t i : step.index_map) w.u32(i);
            // Label bits packed LSB-first into bytes.
            std::vector<std::uint8_t> packed((step.labels.size() + 7) / 8, 0);
            for (std::size_t i = 0; i < step.labels.size(); ++i) {
                if (step.labels[i]) packed[i / 8] |= static_cast<std::uint8_t>(1u << (i % 8));
            }
            w.raw(packed.data(), packed.size());
        }
    }

    ByteWriter out;
    out.raw(w.bytes().data(), w.size());
    out.u32(crc32(w.bytes().data(), w.size()));
    return out.bytes();
}

DataFile deserialize_data(const std::vector<std::uint8_t>& bytes) {
    if (bytes.size() < sizeof(kMagic) || std::memcmp(bytes.data(), kMagic, sizeof(kMagic)) != 0) {
        throw IoError("data container: bad magic");
    }
    ByteReader r(bytes.data(), bytes.size(), "data container");
    char magic[8];
    r.raw(magic, sizeof(magic));

    DataFile df;
    const std::uint32_t version = r.u32();
    if (version != kDataVersion) {
        throw IoError("data container: unsupported format version " + std::to_string(version));
    }
    df.n_tokens = r.u32();
    df.d_v = r.u32();
    df.d_q = r.u32();

    const std::uint64_t n_samples = r.u64();
    df.samples.reserve(n_samples);
    for (std::uint64_t si = 0; si < n_samples; ++si) {
        Sample s;
        s.seed = r.u64();
        const std::uint32_t n_rel = r.u32();
        s.relevant.resize(n_rel);
        for (auto& v : s.relevant) v = r.u32();
        s.tokens = Matrix(df.n_tokens, df.d_v);
        for (double& v : s.tokens.data) v = r.f64();
        s.query.resize(df.d_q);
        for (double& v : s.query) v = r.f64();
        df.samples.push_back(std::move(s));
        check_sample(df.samples.back(), df, si);
    }

    const std::uint64_t n_demos = r.u64();
    df.demos.reserve(n_demos);
    for (std::uint64_t di = 0; di < n_demos; ++di) {
        DemoTrajectory d;
        d.sample_index = r.u32();
        const std::uint32_t n_steps = r.u32();
        d.steps.resize(n_steps);
        for (DemoStep& step : d.steps) {
            const std::uint32_t k = r.u32();
            step.index_map.resize(k);
            for (auto& v : step.index_map) v = r.u32();
            std::vector<std::uint8_t> packed((k + 7) / 8);
            r.raw(packed.data(), packed.size());
            step.labels.resize(k);
            for (std::uint32_t i = 0; i < k; ++i) {
                step.labels[i] = (packed[i / 8] >> (i % 8)) & 1u;
            }
        }
        df.demos.push_back(std::move(d));
        check_demo(df.demos.back(), df, di);
    }

    const std::uint32_t stored_crc = r.u32();
    if (r.remaining() != 0) throw IoError("data container: trailing bytes after checksum");
    const std::uint32_t actual_crc = crc32(bytes.data(), bytes.size() - 4);
    if (stored_crc != actual_crc) throw IoError("data container: checksum mismatch (corrupt file)");
    return df;
}

void save_data(const std::filesystem::path& path, const DataFile& df) {
    write_file_atomic(path, serialize_data(df));
}

DataFile load_data(const std::filesystem::path& path) {
    return deserialize_data(read_file_bytes(path));
}

}  // namespace tprl
