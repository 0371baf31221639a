#include "propnet/io.hpp"

#include <bit>
#include <cstring>
#include <fstream>

#include <json.hpp>

namespace propnet::io {

namespace {

using nlohmann::json;
namespace fs = std::filesystem;

static_assert(std::endian::native == std::endian::little, "container I/O assumes a little-endian host");

fs::path with_suffix(const fs::path& stem, const std::string& suffix) {
    return fs::path(stem.string() + suffix);
}

void ensure_parent(const fs::path& path) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
}

void write_bytes(const fs::path& path, const void* data, std::size_t n) {
    ensure_parent(path);
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open " + path.string() + " for writing");
    out.write(static_cast<const char*>(data), static_cast<std::streamsize>(n));
    if (!out) throw IoError("short write to " + path.string());
}

std::vector<char> read_bytes(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path.string());
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_json(const fs::path& path, const json& j) {
    ensure_parent(path);
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw IoError("cannot open " + path.string() + " for writing");
    out << j.dump(2) << '\n';
}

json read_json(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open " + path.string());
    try {
        return json::parse(in);
    } catch (const json::exception& e) {
        throw IoError(path.string() + ": " + e.what());
    }
}

json spacing_json(const Spacing& s) { return json::array({s.z, s.y, s.x}); }

Spacing spacing_from(const json& j, const fs::path& where) {
    const auto& s = j.at("spacing_mm");
    if (s.size() == 3) return {s[0].get<double>(), s[1].get<double>(), s[2].get<double>()};
    if (s.size() == 2) return {1.0, s[0].get<double>(), s[1].get<double>()};
    throw IoError(where.string() + ": spacing_mm must have 2 or 3 entries");
}

std::array<int64_t, 3> shape3_from(const json& j, const fs::path& where) {
    const auto& s = j.at("shape");
    if (s.size() != 3) throw IoError(where.string() + ": shape must have 3 entries");
    std::array<int64_t, 3> out{s[0].get<int64_t>(), s[1].get<int64_t>(), s[2].get<int64_t>()};
    for (auto d : out) {
        if (d < 0) throw IoError(where.string() + ": negative dimension");
    }
    return out;
}

void expect_dtype(const json& j, const std::string& dtype, const fs::path& where) {
    if (j.at("dtype").get<std::string>() != dtype) {
        throw IoError(where.string() + ": expected dtype " + dtype);
    }
}

template <class T>
std::vector<T> payload(const fs::path& raw, std::size_t count) {
    const auto bytes = read_bytes(raw);
    if (bytes.size() != count * sizeof(T)) {
        throw IoError(raw.string() + ": expected " + std::to_string(count * sizeof(T)) + " bytes, found " +
                      std::to_string(bytes.size()));
    }
    std::vector<T> out(count);
    std::memcpy(out.data(), bytes.data(), bytes.size());
    return out;
}

void check_binary(const std::vector<uint8_t>& v, const fs::path& where) {
    for (auto b : v) {
        if (b > 1) throw IoError(where.string() + ": mask values must be 0 or 1");
    }
}

}  // namespace

fs::path strip_suffix(const fs::path& p) {
    const std::string s = p.string();
    for (const char* suffix : {".vol.raw", ".vol.json", ".mask.raw", ".mask.json", ".seed.raw", ".seed.json"}) {
        const std::string suf(suffix);
        if (s.size() > suf.size() && s.compare(s.size() - suf.size(), suf.size(), suf) == 0) {
            return fs::path(s.substr(0, s.size() - suf.size()));
        }
    }
    return p;
}

void write_volume(const fs::path& stem, const VolumeScan& vol) {
    const auto& g = vol.voxels;
    write_bytes(with_suffix(stem, ".vol.raw"), g.data.data(), g.data.size() * sizeof(float));
    write_json(with_suffix(stem, ".vol.json"),
               json{{"shape", g.shape}, {"spacing_mm", spacing_json(vol.spacing)}, {"dtype", "f32"}, {"id", vol.id}});
}

VolumeScan read_volume(const fs::path& stem_in) {
    const auto stem = strip_suffix(stem_in);
    const auto meta_path = with_suffix(stem, ".vol.json");
    const json meta = read_json(meta_path);
    VolumeScan vol;
    try {
        expect_dtype(meta, "f32", meta_path);
        vol.voxels.shape = shape3_from(meta, meta_path);
        vol.spacing = spacing_from(meta, meta_path);
        vol.id = meta.value("id", stem.filename().string());
    } catch (const json::exception& e) {
        throw IoError(meta_path.string() + ": " + e.what());
    }
    const auto& s = vol.voxels.shape;
    vol.voxels.data = payload<float>(with_suffix(stem, ".vol.raw"), static_cast<std::size_t>(s[0] * s[1] * s[2]));
    return vol;
}

void write_mask(const fs::path& stem, const MaskVolume& mask) {
    const auto& g = mask.voxels;
    write_bytes(with_suffix(stem, ".mask.raw"), g.data.data(), g.data.size());
    write_json(with_suffix(stem, ".mask.json"),
               json{{"shape", g.shape}, {"spacing_mm", spacing_json(mask.spacing)}, {"dtype", "u8"}});
}

MaskVolume read_mask(const fs::path& stem_in) {
    const auto stem = strip_suffix(stem_in);
    const auto meta_path = with_suffix(stem, ".mask.json");
    const json meta = read_json(meta_path);
    MaskVolume mask;
    try {
        expect_dtype(meta, "u8", meta_path);
        mask.voxels.shape = shape3_from(meta, meta_path);
        mask.spacing = spacing_from(meta, meta_path);
    } catch (const json::exception& e) {
        throw IoError(meta_path.string() + ": " + e.what());
    }
    const auto& s = mask.voxels.shape;
    const auto raw = with_suffix(stem, ".mask.raw");
    mask.voxels.data = payload<uint8_t>(raw, static_cast<std::size_t>(s[0] * s[1] * s[2]));
    check_binary(mask.voxels.data, raw);
    return mask;
}

void write_seed(const fs::path& stem, const SeedAnnotation& seed) {
    write_bytes(with_suffix(stem, ".seed.raw"), seed.mask.data.data(), seed.mask.data.size());
    write_json(with_suffix(stem, ".seed.json"),
               json{{"shape", {seed.mask.height, seed.mask.width}},
                    {"spacing_mm", spacing_json(seed.spacing)},
                    {"dtype", "u8"},
                    {"slice_index", seed.slice_index}});
}

SeedAnnotation read_seed(const fs::path& stem_in) {
    const auto stem = strip_suffix(stem_in);
    const auto meta_path = with_suffix(stem, ".seed.json");
    const json meta = read_json(meta_path);
    SeedAnnotation seed;
    try {
        expect_dtype(meta, "u8", meta_path);
        const auto& s = meta.at("shape");
        if (s.size() != 2) throw IoError(meta_path.string() + ": seed shape must have 2 entries");
        seed.mask = MaskSlice(s[0].get<int64_t>(), s[1].get<int64_t>());
        seed.slice_index = meta.at("slice_index").get<int64_t>();
        seed.spacing = spacing_from(meta, meta_path);
    } catch (const json::exception& e) {
        throw IoError(meta_path.string() + ": " + e.what());
    }
    const auto raw = with_suffix(stem, ".seed.raw");
    seed.mask.data = payload<uint8_t>(raw, seed.mask.size());
    check_binary(seed.mask.data, raw);
    return seed;
}

}  // namespace propnet::io
