#include "covpred/neural/checkpoint.hpp"

#include <cstdint>
#include <cstring>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace covpred::neural {

namespace {

constexpr char kMagic[8] = {'C', 'V', 'P', 'C', 'K', 'P', 'T', '1'};

[[noreturn]] void fail(const std::filesystem::path& path, const std::string& why) {
    throw std::runtime_error("checkpoint " + path.string() + ": " + why);
}

template <typename T>
void write_pod(std::ostream& out, T v) {
    out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_pod(std::istream& in, const std::filesystem::path& path) {
    T v{};
    if (!in.read(reinterpret_cast<char*>(&v), sizeof(T))) fail(path, "truncated");
    return v;
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const ParamStore& store) {
    const std::filesystem::path tmp = path.string() + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) fail(tmp, "cannot open for writing");
        out.write(kMagic, sizeof(kMagic));
        write_pod<std::uint64_t>(out, store.size());
        store.for_each([&](const std::string& name, const Mat& m) {
            write_pod<std::uint32_t>(out, static_cast<std::uint32_t>(name.size()));
            out.write(name.data(), static_cast<std::streamsize>(name.size()));
            write_pod<std::uint64_t>(out, static_cast<std::uint64_t>(m.rows()));
            write_pod<std::uint64_t>(out, static_cast<std::uint64_t>(m.cols()));
            for (Eigen::Index r = 0; r < m.rows(); ++r)
                for (Eigen::Index c = 0; c < m.cols(); ++c)
                    write_pod<double>(out, m(r, c));
        });
        if (!out) fail(tmp, "write failed");
    }
    std::filesystem::rename(tmp, path);
}

ParamStore load_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) fail(path, "cannot open");
    char magic[8];
    if (!in.read(magic, sizeof(magic))) fail(path, "truncated header");
    if (std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) fail(path, "bad magic");

    const auto count = read_pod<std::uint64_t>(in, path);
    ParamStore store;
    for (std::uint64_t i = 0; i < count; ++i) {
        const auto name_len = read_pod<std::uint32_t>(in, path);
        if (name_len == 0 || name_len > 4096) fail(path, "implausible name length");
        std::string name(name_len, '\0');
        if (!in.read(name.data(), name_len)) fail(path, "truncated name");
        const auto rows = read_pod<std::uint64_t>(in, path);
        const auto cols = read_pod<std::uint64_t>(in, path);
        if (rows == 0 || cols == 0 || rows * cols > (1ull << 32))
            fail(path, "implausible tensor shape for '" + name + "'");
        Mat& m = store.create(name, static_cast<Eigen::Index>(rows),
                              static_cast<Eigen::Index>(cols));
        for (Eigen::Index r = 0; r < m.rows(); ++r)
            for (Eigen::Index c = 0; c < m.cols(); ++c)
                m(r, c) = read_pod<double>(in, path);
    }
    char extra;
    if (in.read(&extra, 1)) fail(path, "trailing bytes");
    return store;
}

}  // namespace covpred::neural
