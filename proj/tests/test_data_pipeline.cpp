#include <doctest.h>

#include <set>

#include "oracles.hpp"
#include "propnet/data.hpp"
#include "propnet/phantom_geometry.hpp"

using namespace propnet;

TEST_CASE("phantom generation is deterministic and has one tumour run") {
    data::PhantomConfig cfg;
    cfg.seed = 11;
    auto [v1, m1] = data::synth_volume(cfg);
    auto [v2, m2] = data::synth_volume(cfg);
    CHECK(v1.voxels.data == v2.voxels.data);
    CHECK(m1.voxels.data == m2.voxels.data);
    CHECK(v1.voxels.shape == cfg.shape);

    const auto geo = data::phantom_geometry(cfg);
    const int64_t len = geo.tumor_last - geo.tumor_first + 1;
    CHECK(len >= cfg.tumor_slices[0]);
    CHECK(len <= cfg.tumor_slices[1]);
    for (int64_t z = 0; z < m1.voxels.depth(); ++z) {
        const bool inside = z >= geo.tumor_first && z <= geo.tumor_last;
        CHECK((m1.slice_area(z) > 0) == inside);
    }
    cfg.seed = 12;
    auto [v3, m3] = data::synth_volume(cfg);
    CHECK(v3.voxels.data != v1.voxels.data);
}

TEST_CASE("phantom intensities stay in the clamp range") {
    data::PhantomConfig cfg;
    auto [v, m] = data::synth_volume(cfg);
    for (float x : v.voxels.data) {
        CHECK(x >= -199.5F);
        CHECK(x <= 299.5F);
    }
}

TEST_CASE("invalid phantom config is rejected") {
    data::PhantomConfig cfg;
    cfg.tumor_slices = {20, 5};
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
}

TEST_CASE("window normalisation") {
    using data::NormalizeMode;
    CHECK(data::normalize_value(75.0F) == doctest::Approx(0.5));
    CHECK(data::normalize_value(-100.0F, NormalizeMode::zero) == doctest::Approx(0.2));
    CHECK(data::normalize_value(500.0F, NormalizeMode::zero) == doctest::Approx(0.2));
    CHECK(data::normalize_value(500.0F, NormalizeMode::clip) == doctest::Approx(1.0));
    CHECK(data::normalize_value(-500.0F, NormalizeMode::clip) == doctest::Approx(0.0));
}

TEST_CASE("in-plane resampling doubles the grid and keeps spacing exact") {
    data::PhantomConfig cfg;
    auto [v, m] = data::synth_volume(cfg);
    auto [rv, rm] = data::resample_xy(v, m, 0.6);
    CHECK(rv.voxels.height() == 192);
    CHECK(rv.voxels.width() == 192);
    CHECK(rv.spacing.y == 0.6);
    CHECK(rv.spacing.z == v.spacing.z);
    REQUIRE(rm.has_value());
    // nearest-neighbour mask upsampling by 2 quadruples the area
    CHECK(rm->count() == 4 * m.count());
}

TEST_CASE("crop and uncrop round trip") {
    data::PhantomConfig cfg;
    auto [v, m] = data::synth_volume(cfg);
    const int64_t z = data::largest_slice(m);
    const auto c = data::crop_around(v, m, z, 64);
    CHECK(c.volume.voxels.height() == 64);
    const auto back = data::uncrop_mask(c.mask, c.record);
    // The phantom tumour fits in the window, so nothing is lost.
    CHECK(back.voxels.data == m.voxels.data);
}

TEST_CASE("crop centre rounds halves toward negative infinity") {
    MaskSlice s(10, 10);
    s(2, 2) = 1;
    s(2, 3) = 1;  // centroid x = 2.5
    auto [cy, cx] = data::crop_center(s);
    CHECK(cy == 2);
    CHECK(cx == 2);
}

TEST_CASE("crop window may extend past the image and pads with zeros") {
    MaskSlice s(16, 16);
    s(0, 0) = 1;
    const auto rec = data::crop_window(s, 8);
    CHECK(rec.y0 == -4);
    MaskVolume mv{Grid3<uint8_t>({1, 16, 16}), {}};
    mv.voxels.set_slice(0, s);
    const auto cm = data::crop_mask(mv, rec);
    CHECK(cm.voxels(0, 4, 4) == 1);
    CHECK(data::uncrop_mask(cm, rec).voxels.data == mv.voxels.data);
}

TEST_CASE("training tasks: one support, four neighbours at gaps -2..2") {
    data::PhantomConfig cfg;
    auto [v, m] = data::synth_volume(cfg);
    std::mt19937_64 rng(3);
    for (int rep = 0; rep < 30; ++rep) {
        const auto tasks = data::sample_training_tasks(v, m, rng, 64);
        REQUIRE(tasks.size() == 4);
        std::set<int64_t> gaps;
        for (const auto& t : tasks) {
            CHECK(t.support_mask.height == 64);
            CHECK(count_foreground(t.support_mask) > 0);
            CHECK(t.slice_gap != 0);
            CHECK(std::abs(t.slice_gap) <= 2);
            gaps.insert(t.slice_gap);
            CHECK(t.support_index == tasks.front().support_index);
        }
        const int64_t sup = tasks.front().support_index;
        if (sup >= 2 && sup + 2 < v.voxels.depth()) CHECK(gaps.size() == 4);
    }
}

TEST_CASE("neighbours outside the volume mirror about the support") {
    data::PhantomConfig cfg;
    cfg.shape = {3, 96, 96};
    cfg.tumor_slices = {3, 3};
    auto [v, m] = data::synth_volume(cfg);
    std::mt19937_64 rng(5);
    for (int rep = 0; rep < 20; ++rep) {
        for (const auto& t : data::sample_training_tasks(v, m, rng)) {
            const int64_t q = t.support_index + t.slice_gap;
            CHECK(q >= 0);
            CHECK(q < 3);
            CHECK(q != t.support_index);
        }
    }
}

TEST_CASE("empty annotation cannot seed tasks") {
    data::PhantomConfig cfg;
    auto [v, m] = data::synth_volume(cfg);
    std::fill(m.voxels.data.begin(), m.voxels.data.end(), 0);
    std::mt19937_64 rng(1);
    CHECK_THROWS((void)data::sample_training_tasks(v, m, rng));
}
