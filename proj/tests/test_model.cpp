#include <doctest.h>

#include "oracles.hpp"
#include "propnet/nn/losses.hpp"
#include "propnet/nn/model.hpp"
#include "propnet/nn/predictor.hpp"
#include "propnet/objectives.hpp"

using namespace propnet;
using namespace propnet::model;

namespace {

NetworkConfig small() {
    NetworkConfig c;
    c.base_channels = 8;
    c.stage_blocks = {1, 1, 1, 1};
    return c;
}

struct Inputs {
    torch::Tensor si, sm, qi;
};

Inputs inputs(int64_t b, int64_t hw = 64) {
    torch::manual_seed(0);
    return {torch::randn({b, 1, hw, hw}), (torch::rand({b, 1, hw, hw}) > 0.7).to(torch::kFloat32),
            torch::randn({b, 1, hw, hw})};
}

}  // namespace

TEST_CASE("encoder strides and widths") {
    Encoder enc(2, NetworkConfig{});
    const auto f = enc(torch::zeros({2, 2, 64, 64}));
    REQUIRE(f.size() == 5);
    const int64_t sizes[5] = {32, 16, 8, 4, 2};
    const int64_t widths[5] = {16, 16, 32, 64, 128};
    for (std::size_t i = 0; i < 5; ++i) {
        CHECK(f[i].size(1) == widths[i]);
        CHECK(f[i].size(2) == sizes[i]);
    }
}

TEST_CASE("full network output shapes and ranges") {
    PropNet net(small());
    auto in = inputs(3);
    const auto out = net->forward(in.si, in.sm, in.qi);
    for (const auto& t : {out.propose.y_r, out.propose.y_b, out.propose.y_c}) {
        CHECK((t.sizes() == torch::IntArrayRef{3, 1, 64, 64}));
        CHECK(t.min().item<float>() >= 0.0F);
        CHECK(t.max().item<float>() <= 1.0F);
    }
    REQUIRE(out.refine.has_value());
    CHECK((out.refine->y_c.sizes() == torch::IntArrayRef{3, 1, 64, 64}));
    CHECK(out.propose.f_r.size(1) == 8);
}

TEST_CASE("a single support broadcasts over the queries") {
    PropNet net(small());
    net->eval();
    torch::NoGradGuard g;
    auto in = inputs(4);
    auto one_si = in.si.slice(0, 0, 1), one_sm = in.sm.slice(0, 0, 1);
    const auto a = net->predict(one_si, one_sm, in.qi, Head::refining_composite);
    const auto b = net->predict(one_si.expand({4, -1, -1, -1}).contiguous(), one_sm.expand({4, -1, -1, -1}).contiguous(),
                                in.qi, Head::refining_composite);
    CHECK(torch::allclose(a, b, 1e-5, 1e-6));
}

TEST_CASE("ablation switches change the architecture") {
    auto cfg = small();
    const auto full = parameter_count(*PropNet(cfg));
    cfg.boundary_branch_enabled = false;
    PropNet no_b(cfg);
    CHECK(parameter_count(*no_b) < full);
    auto in = inputs(2);
    const auto out = no_b->forward(in.si, in.sm, in.qi);
    CHECK_FALSE(out.propose.y_b.defined());
    cfg.refining_stage_enabled = false;
    PropNet no_r(cfg);
    CHECK_FALSE(no_r->forward(in.si, in.sm, in.qi).refine.has_value());
    CHECK_THROWS_AS((void)no_r->predict(in.si, in.sm, in.qi, Head::refining_composite), ConfigError);
    CHECK(default_head(cfg) == Head::proposing_composite);
    cfg = small();
    cfg.context_paths = 2;
    PropNet two(cfg);
    CHECK(two->proposing->encoder.ptr() != nullptr);
    CHECK(two->proposing->intra->path_count() == 2);
    CHECK(two->proposing->intra->path_layers(1).size() == 2);
}

TEST_CASE("every parameter tensor receives gradient") {
    PropNet net(small());
    auto in = inputs(4);
    const auto out = net->forward(in.si, in.sm, in.qi);
    const auto b = objectives::LossWeights{0.5, 1.0};
    auto br = losses::total_loss(out, in.sm, in.sm, b);
    br.total.backward();
    for (const auto& kv : net->named_parameters()) {
        INFO(kv.key());
        REQUIRE(kv.value().grad().defined());
        CHECK(kv.value().grad().abs().sum().item<double>() > 0.0);
    }
}

TEST_CASE("stop-gradient keeps refining loss out of the proposing stage") {
    auto cfg = small();
    cfg.stop_gradient = true;
    PropNet net(cfg);
    auto in = inputs(2);
    const auto out = net->forward(in.si, in.sm, in.qi);
    auto br = losses::total_loss(out, in.sm, in.sm, objectives::LossWeights{0.0, 1.0});
    br.total.backward();
    for (const auto& kv : net->proposing->named_parameters()) {
        const auto& g = kv.value().grad();
        CHECK((!g.defined() || g.abs().sum().item<double>() == 0.0));
    }
}

TEST_CASE("tensor dice matches the scalar objective and its analytic gradient") {
    torch::manual_seed(3);
    auto a = torch::rand({2, 1, 5, 5}, torch::kFloat64).requires_grad_(true);
    auto b = (torch::rand({2, 1, 5, 5}, torch::kFloat64) > 0.5).to(torch::kFloat64);
    auto h = (torch::rand({2, 1, 5, 5}, torch::kFloat64) > 0.4).to(torch::kFloat64);
    auto l = losses::soft_dice(a, b, h);
    l.backward();
    auto av = std::vector<double>(a.data_ptr<double>(), a.data_ptr<double>() + 50);
    auto bv = std::vector<double>(b.data_ptr<double>(), b.data_ptr<double>() + 50);
    std::vector<uint8_t> hv(50);
    for (int i = 0; i < 50; ++i) hv[static_cast<std::size_t>(i)] = h.data_ptr<double>()[i] > 0 ? 1 : 0;
    CHECK(l.item<double>() == doctest::Approx(objectives::soft_dice(av, bv, hv)).epsilon(1e-12));
    const auto g = objectives::soft_dice_grad(av, bv, hv);
    for (int i = 0; i < 50; ++i) CHECK(a.grad().data_ptr<double>()[i] == doctest::Approx(g[static_cast<std::size_t>(i)]));
}

TEST_CASE("tensor hard mask agrees with the sort oracle per image") {
    torch::manual_seed(4);
    auto a = torch::rand({3, 1, 7, 7});
    auto b = (torch::rand({3, 1, 7, 7}) > 0.5).to(torch::kFloat32);
    const auto m = losses::hard_pixel_mask(a, b);
    for (int64_t i = 0; i < 3; ++i) {
        std::vector<double> diff(49);
        for (int64_t k = 0; k < 49; ++k) {
            diff[static_cast<std::size_t>(k)] = std::abs(a[i][0].flatten()[k].item<float>() - b[i][0].flatten()[k].item<float>());
        }
        const auto expect = oracle::hard_mask(diff);
        for (int64_t k = 0; k < 49; ++k) CHECK((m[i][0].flatten()[k].item<float>() > 0) == (expect[static_cast<std::size_t>(k)] == 1));
    }
}

TEST_CASE("predictor adapter returns one map per query") {
    PropNet net(small());
    NetworkPredictor p(net, Head::proposing_composite);
    Image<float> img(64, 64, 0.1F);
    MaskSlice m(64, 64);
    m(10, 10) = 1;
    std::vector<Image<float>> qs(3, img);
    const auto out = p.predict(img, m, qs);
    CHECK(out.size() == 3);
    CHECK(out[0].height == 64);
    CHECK(out[0].data == out[2].data);
    CHECK(p.predict(img, m, {}).empty());
}
