#include "propnet/dataset.hpp"

#include <algorithm>
#include <fstream>

#include <json.hpp>

#include "propnet/io.hpp"

namespace propnet::data {

std::vector<Case> read_cases(const std::filesystem::path& dir) {
    if (!std::filesystem::is_directory(dir)) throw io::IoError("not a directory: " + dir.string());
    std::vector<std::string> ids;
    const std::string suffix = ".vol.json";
    for (const auto& entry : std::filesystem::directory_iterator(dir)) {
        const auto name = entry.path().filename().string();
        if (name.size() > suffix.size() && name.ends_with(suffix)) {
            ids.push_back(name.substr(0, name.size() - suffix.size()));
        }
    }
    std::sort(ids.begin(), ids.end());
    if (ids.empty()) throw io::IoError("no volumes found in " + dir.string());
    std::vector<Case> out;
    for (const auto& id : ids) {
        Case c;
        c.id = id;
        c.volume = io::read_volume(dir / id);
        c.mask = io::read_mask(dir / id);
        if (c.volume.voxels.shape != c.mask.voxels.shape) throw ShapeError("volume/mask shape mismatch for " + id);
        out.push_back(std::move(c));
    }
    return out;
}

std::vector<Case> generate_cases(const config::RunConfig& cfg, bool validation, int64_t count) {
    std::vector<Case> out;
    out.reserve(static_cast<std::size_t>(count));
    for (int64_t i = 0; i < count; ++i) {
        auto pc = cfg.data.phantom;
        pc.seed = config::phantom_seed(cfg, validation, i);
        auto [vol, mask] = synth_volume(pc);
        Case c;
        c.id = std::string(validation ? "val_" : "train_") + (i < 10 ? "00" : i < 100 ? "0" : "") + std::to_string(i);
        vol.id = c.id;
        c.volume = std::move(vol);
        c.mask = std::move(mask);
        out.push_back(std::move(c));
    }
    return out;
}

std::vector<Case> load_split(const config::RunConfig& cfg, bool validation) {
    const auto& dir = validation ? cfg.data.val_dir : cfg.data.train_dir;
    if (!dir.empty()) return read_cases(dir);
    return generate_cases(cfg, validation, validation ? cfg.data.val_count : cfg.data.train_count);
}

void write_cases(const std::filesystem::path& dir, const std::vector<Case>& cases) {
    std::filesystem::create_directories(dir);
    nlohmann::json manifest = nlohmann::json::array();
    for (const auto& c : cases) {
        io::write_volume(dir / c.id, c.volume);
        io::write_mask(dir / c.id, c.mask);
        const int64_t z = largest_slice(c.mask);
        io::write_seed(dir / c.id, {c.mask.voxels.slice(z), z, c.mask.spacing});
        manifest.push_back({{"id", c.id}, {"seed_slice", z}, {"tumor_voxels", c.mask.count()}});
    }
    std::ofstream(dir / "manifest.json") << manifest.dump(2) << "\n";
}

}  // namespace propnet::data
