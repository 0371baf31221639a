#include <doctest.h>

#include <atomic>

#include "oracles.hpp"
#include "propnet/data.hpp"
#include "propnet/propagator.hpp"

using namespace propnet;
using namespace propnet::propagate;

namespace {

/// Predicts the support mask with the later half of its foreground removed,
/// so the area halves at every jump.
class HalvingStub : public SlicePredictor {
public:
    mutable std::atomic<int> calls{0};
    std::vector<Image<float>> predict(const Image<float>&, const MaskSlice& support,
                                      std::span<const Image<float>> queries) const override {
        ++calls;
        const int64_t keep = count_foreground(support) / 2;
        Image<float> p(support.height, support.width);
        int64_t kept = 0;
        for (std::size_t i = 0; i < support.data.size() && kept < keep; ++i) {
            if (support.data[i] != 0) {
                p.data[i] = 1.0F;
                ++kept;
            }
        }
        return std::vector<Image<float>>(queries.size(), p);
    }
};

/// Thresholds the query intensity, ignoring the support.
class IntensityStub : public SlicePredictor {
public:
    std::vector<Image<float>> predict(const Image<float>&, const MaskSlice&,
                                      std::span<const Image<float>> queries) const override {
        std::vector<Image<float>> out;
        for (const auto& q : queries) {
            Image<float> p(q.height, q.width);
            for (std::size_t i = 0; i < q.data.size(); ++i) p.data[i] = q.data[i] > 0.5F ? 0.9F : 0.1F;
            out.push_back(p);
        }
        return out;
    }
};

VolumeScan blank(int64_t depth, int64_t hw, double sz) {
    VolumeScan v;
    v.voxels = Grid3<float>({depth, hw, hw});
    v.spacing = {sz, 1.0, 1.0};
    return v;
}

MaskSlice square(int64_t hw, int64_t side) {
    MaskSlice m(hw, hw);
    for (int64_t y = 0; y < side; ++y)
        for (int64_t x = 0; x < side; ++x) m(y, x) = 1;
    return m;
}

}  // namespace

TEST_CASE("interval and tau formulas") {
    CHECK(compute_interval(5.0) == 4);
    CHECK(compute_interval(5.0, 5.0) == 1);
    CHECK(compute_interval(30.0) == 1);
    CHECK(compute_interval(0.625, 20.0) == 32);
    MaskSlice m(20, 20);
    for (int i = 0; i < 200; ++i) m.data[static_cast<std::size_t>(i)] = 1;
    CHECK(compute_tau(m) == 10.0);
    CHECK_THROWS((void)compute_tau(MaskSlice(4, 4)));
    CHECK_THROWS((void)compute_interval(0.0));
}

TEST_CASE("halving stub stops after five jumps per front") {
    HalvingStub stub;
    const auto vol = blank(64, 20, 5.0);
    const auto seed = square(20, 16);  // area 256, tau 12.8
    PropagationConfig cfg;
    const auto r = propagate::propagate(stub, vol, 32, seed, cfg);
    REQUIRE(r.fronts.size() == 2);
    for (const auto& f : r.fronts) {
        CHECK(f.termination == Termination::area_below_tau);
        CHECK(f.steps.size() == 5);  // 128, 64, 32, 16, 8
        CHECK(f.steps.back().new_support_area == 8);
        for (const auto& s : f.steps) CHECK(s.query_indices.size() == 4);
    }
    CHECK(r.interval == 4);
    CHECK(r.fronts[0].steps[1].support_index == 28);
    CHECK(r.source_support[32] == 32);
    CHECK(r.source_support[31] == 32);
    CHECK(r.source_support[27] == 28);
    CHECK(r.source_support[11] == -1);
    CHECK(r.per_slice_area[32] == 256);
    CHECK(r.per_slice_area[36] == 128);
    CHECK(stub.calls == 10);
}

TEST_CASE("fronts stop at the volume edge with a partial jump") {
    IntensityStub stub;
    auto vol = blank(10, 8, 5.0);
    std::fill(vol.voxels.data.begin(), vol.voxels.data.end(), 1.0F);
    const auto seed = square(8, 8);
    PropagationConfig cfg;
    const auto r = propagate::propagate(stub, vol, 2, seed, cfg);
    CHECK(r.fronts[0].termination == Termination::volume_edge);
    CHECK(r.fronts[0].steps.size() == 1);
    CHECK(r.fronts[0].steps[0].query_indices == std::vector<int64_t>{1, 0});
    CHECK(r.fronts[1].termination == Termination::volume_edge);
    CHECK(r.fronts[1].steps.size() == 2);
    CHECK(r.fronts[1].steps[1].query_indices == std::vector<int64_t>{7, 8, 9});
    CHECK(r.mask3d.count() == 10 * 64);
}

TEST_CASE("iteration guard trips when configured low") {
    IntensityStub stub;
    auto vol = blank(40, 8, 5.0);
    std::fill(vol.voxels.data.begin(), vol.voxels.data.end(), 1.0F);
    PropagationConfig cfg;
    cfg.max_iterations = 2;
    const auto r = propagate::propagate(stub, vol, 20, square(8, 8), cfg);
    CHECK(r.fronts[1].termination == Termination::max_iterations);
    CHECK(r.fronts[1].steps.size() == 2);
}

TEST_CASE("seed slice keeps the human annotation verbatim") {
    IntensityStub stub;
    const auto vol = blank(12, 8, 5.0);  // stub predicts nothing
    MaskSlice seed(8, 8);
    seed(3, 3) = 1;
    seed(0, 7) = 1;
    PropagationConfig cfg;
    const auto r = propagate::propagate(stub, vol, 6, seed, cfg);
    CHECK(r.mask3d.voxels.slice(6).data == seed.data);
    CHECK(r.mask3d.count() == 2);
}

TEST_CASE("parallel and sequential propagation agree") {
    IntensityStub stub;
    data::PhantomConfig pc;
    auto [v, m] = data::synth_volume(pc);
    auto nv = data::normalize(v);
    const int64_t z = data::largest_slice(m);
    PropagationConfig cfg;
    cfg.parallel = true;
    const auto a = propagate::propagate(stub, nv, z, m.voxels.slice(z), cfg);
    cfg.parallel = false;
    const auto b = propagate::propagate(stub, nv, z, m.voxels.slice(z), cfg);
    CHECK(a.mask3d.voxels.data == b.mask3d.voxels.data);
    CHECK(a.trace_json()["fronts"] == b.trace_json()["fronts"]);
}

TEST_CASE("invalid inputs are rejected") {
    IntensityStub stub;
    const auto vol = blank(5, 8, 5.0);
    PropagationConfig cfg;
    CHECK_THROWS((void)propagate::propagate(stub, vol, 7, square(8, 2), cfg));
    CHECK_THROWS_AS((void)propagate::propagate(stub, vol, 2, square(6, 2), cfg), ShapeError);
    CHECK_THROWS((void)propagate::propagate(stub, vol, 2, MaskSlice(8, 8), cfg));
    cfg.interval_mm = 0;
    CHECK_THROWS_AS((void)propagate::propagate(stub, vol, 2, square(8, 2), cfg), ConfigError);
}

TEST_CASE("mcc filter matches flood-fill oracle") {
    std::mt19937_64 rng(21);
    for (int i = 0; i < 40; ++i) {
        const auto m = oracle::random_volume(rng, {6, 9, 9}, 0.12 + 0.01 * (i % 10));
        CHECK(mcc_filter(m, Connectivity::c26).voxels.data == oracle::largest_component(m, true).voxels.data);
        CHECK(mcc_filter(m, Connectivity::c6).voxels.data == oracle::largest_component(m, false).voxels.data);
    }
    MaskVolume empty{Grid3<uint8_t>({2, 2, 2}), {}};
    CHECK(mcc_filter(empty).count() == 0);
}

TEST_CASE("segment_volume returns a mask on the raw grid") {
    IntensityStub stub;
    data::PhantomConfig pc;
    auto [v, m] = data::synth_volume(pc);
    const int64_t z = data::largest_slice(m);
    const auto out = segment_volume(stub, v, z, m.voxels.slice(z), data::PreprocessConfig{}, PropagationConfig{});
    CHECK(out.mask.voxels.shape == v.voxels.shape);
    CHECK(out.mask.voxels.slice(z).data == m.voxels.slice(z).data);
    CHECK(out.crop.size == 64);
}
