#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>

#include "propnet/config.hpp"
#include "propnet/io.hpp"

using namespace propnet;
namespace fs = std::filesystem;

namespace {

fs::path write_temp(const std::string& name, const std::string& content) {
    const auto p = fs::temp_directory_path() / name;
    std::ofstream(p) << content;
    return p;
}

}  // namespace

TEST_CASE("empty file gives the defaults with a stable fingerprint") {
    const auto p = write_temp("propnet_empty.json", "");
    const auto a = config::parse_config(p, {}, false);
    const auto b = config::parse_config(std::nullopt, {}, false);
    CHECK(config::to_json(a) == config::to_json(b));
    CHECK(config::fingerprint(a) == config::fingerprint(b));
    CHECK(config::fingerprint(a).size() == 16);
    CHECK(a.train.epochs == 60);
    CHECK(a.data.train_count == 40);
}

TEST_CASE("override changes exactly one field") {
    const auto base = config::to_json(config::parse_config(std::nullopt, {}, false));
    const auto cfg = config::parse_config(std::nullopt, {"propagate.interval_mm=10"}, false);
    CHECK(cfg.propagate.interval_mm == 10.0);
    const auto patch = nlohmann::json::diff(base, config::to_json(cfg));
    REQUIRE(patch.size() == 1);
    CHECK(patch[0]["path"] == "/propagate/interval_mm");
}

TEST_CASE("key order does not change the fingerprint") {
    const auto p1 = write_temp("propnet_o1.json", R"({"seed": 5, "train": {"epochs": 3, "batch_size": 4}})");
    const auto p2 = write_temp("propnet_o2.json", R"({"train": {"batch_size": 4, "epochs": 3}, "seed": 5})");
    CHECK(config::fingerprint(config::parse_config(p1, {}, false)) ==
          config::fingerprint(config::parse_config(p2, {}, false)));
}

TEST_CASE("unknown keys and type mismatches name the key") {
    const auto p = write_temp("propnet_bad.json", R"({"train": {"epoch": 3}})");
    try {
        (void)config::parse_config(p, {}, false);
        FAIL("expected ConfigError");
    } catch (const ConfigError& e) {
        CHECK(std::string(e.what()).find("train.epoch") != std::string::npos);
    }
    const auto q = write_temp("propnet_type.json", R"({"train": {"epochs": "many"}})");
    try {
        (void)config::parse_config(q, {}, false);
        FAIL("expected ConfigError");
    } catch (const ConfigError& e) {
        CHECK(std::string(e.what()).find("train.epochs") != std::string::npos);
        CHECK(std::string(e.what()).find("integer") != std::string::npos);
    }
    CHECK_THROWS_AS((void)config::parse_config(std::nullopt, {"nosuch.key=1"}, false), ConfigError);
    CHECK_THROWS_AS((void)config::parse_config(std::nullopt, {"train.epochs=0"}, false), ConfigError);
}

TEST_CASE("canonical JSON round trips") {
    auto cfg = config::parse_config(std::nullopt, {"model.boundary_branch_enabled=false", "seed=9"}, false);
    const auto again = config::from_json(config::to_json(cfg));
    CHECK(config::to_json(again) == config::to_json(cfg));
    CHECK_FALSE(again.model.boundary_branch_enabled);
}

TEST_CASE("PROPNET_SEED overrides the seed") {
    ::setenv("PROPNET_SEED", "1234", 1);
    CHECK(config::parse_config(std::nullopt, {}, true).seed == 1234);
    CHECK(config::parse_config(std::nullopt, {}, false).seed != 1234);
    ::unsetenv("PROPNET_SEED");
}

TEST_CASE("volume, mask and seed files round trip") {
    const auto dir = fs::temp_directory_path() / "propnet_io_test";
    fs::remove_all(dir);
    VolumeScan v;
    v.voxels = Grid3<float>({2, 3, 4});
    for (std::size_t i = 0; i < v.voxels.data.size(); ++i) v.voxels.data[i] = static_cast<float>(i) * 0.5F;
    v.spacing = {5.0, 0.7, 0.7};
    v.id = "case7";
    io::write_volume(dir / "case7", v);
    const auto r = io::read_volume(dir / "case7.vol.raw");
    CHECK(r.voxels.data == v.voxels.data);
    CHECK(r.spacing.z == 5.0);
    CHECK(r.id == "case7");

    MaskVolume m{Grid3<uint8_t>({2, 3, 4}), v.spacing};
    m.voxels(1, 2, 3) = 1;
    io::write_mask(dir / "case7", m);
    CHECK(io::read_mask(dir / "case7").voxels.data == m.voxels.data);

    io::SeedAnnotation s{m.voxels.slice(1), 1, v.spacing};
    io::write_seed(dir / "case7", s);
    const auto rs = io::read_seed(dir / "case7.seed.json");
    CHECK(rs.slice_index == 1);
    CHECK(rs.mask.data == s.mask.data);
    CHECK_THROWS_AS((void)io::read_volume(dir / "missing"), io::IoError);
    fs::remove_all(dir);
}
