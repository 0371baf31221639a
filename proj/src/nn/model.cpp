#include "propnet/nn/model.hpp"

#include <string>

namespace propnet::model {

namespace F = torch::nn::functional;

namespace {

torch::nn::Conv2d conv1x1(int64_t in, int64_t out, bool bias) {
    return torch::nn::Conv2d(torch::nn::Conv2dOptions(in, out, 1).bias(bias));
}

torch::Tensor leaky(const torch::Tensor& x, double slope) {
    return F::leaky_relu(x, F::LeakyReLUFuncOptions().negative_slope(slope));
}

}  // namespace

ConvBlockImpl::ConvBlockImpl(int64_t in, int64_t out, int64_t kernel, int64_t stride, int64_t dilation,
                             double slope_)
    : slope(slope_) {
    const int64_t pad = dilation * (kernel - 1) / 2;
    conv = register_module("conv", torch::nn::Conv2d(torch::nn::Conv2dOptions(in, out, kernel)
                                                         .stride(stride)
                                                         .padding(pad)
                                                         .dilation(dilation)
                                                         .bias(false)));
    bn = register_module("bn", torch::nn::BatchNorm2d(out));
}

torch::Tensor ConvBlockImpl::forward(const torch::Tensor& x) { return leaky(bn(conv(x)), slope); }

BasicBlockImpl::BasicBlockImpl(int64_t in, int64_t out, int64_t stride, double slope_) : slope(slope_) {
    first = register_module("first", ConvBlock(in, out, 3, stride, 1, slope));
    second = register_module(
        "second", torch::nn::Conv2d(torch::nn::Conv2dOptions(out, out, 3).padding(1).bias(false)));
    second_bn = register_module("second_bn", torch::nn::BatchNorm2d(out));
    if (stride != 1 || in != out) {
        shortcut = register_module(
            "shortcut",
            torch::nn::Sequential(torch::nn::Conv2d(torch::nn::Conv2dOptions(in, out, 1).stride(stride).bias(false)),
                                  torch::nn::BatchNorm2d(out)));
    }
}

torch::Tensor BasicBlockImpl::forward(const torch::Tensor& x) {
    auto y = second_bn(second(first(x)));
    auto id = shortcut ? shortcut->forward(x) : x;
    return leaky(y + id, slope);
}

EncoderImpl::EncoderImpl(int64_t in_channels, const NetworkConfig& cfg) {
    const int64_t c = cfg.base_channels;
    widths = {c, c, 2 * c, 4 * c, 8 * c};
    stem = register_module("stem", ConvBlock(in_channels, c, 7, 2, 1, cfg.leak_slope));
    pool = register_module("pool", torch::nn::MaxPool2d(torch::nn::MaxPool2dOptions(3).stride(2).padding(1)));
    int64_t in = c;
    for (int s = 0; s < 4; ++s) {
        const int64_t out = widths[static_cast<std::size_t>(s) + 1];
        torch::nn::Sequential seq;
        for (int64_t b = 0; b < cfg.stage_blocks[static_cast<std::size_t>(s)]; ++b) {
            const int64_t stride = (b == 0 && s > 0) ? 2 : 1;
            seq->push_back(BasicBlock(b == 0 ? in : out, out, stride, cfg.leak_slope));
        }
        stages[static_cast<std::size_t>(s)] = register_module("layer" + std::to_string(s + 1), seq);
        in = out;
    }
}

std::vector<torch::Tensor> EncoderImpl::forward(const torch::Tensor& x) {
    std::vector<torch::Tensor> out;
    out.reserve(5);
    auto e1 = stem(x);
    out.push_back(e1);
    auto h = stages[0]->forward(pool(e1));
    out.push_back(h);
    for (std::size_t s = 1; s < 4; ++s) {
        h = stages[s]->forward(h);
        out.push_back(h);
    }
    return out;
}

IntraContextImpl::IntraContextImpl(int64_t channels, const NetworkConfig& cfg) : psp_scales(cfg.psp_scales) {
    for (std::size_t i = 0; i < static_cast<std::size_t>(cfg.context_paths); ++i) {
        dilated.push_back(register_module("dilated" + std::to_string(i),
                                          ConvBlock(channels, channels, 3, 1, cfg.dilation_rates[i], cfg.leak_slope)));
    }
    for (int64_t k = 0; k < cfg.context_paths; ++k) {
        path_proj.push_back(register_module("path_proj" + std::to_string(k), conv1x1(channels, channels, true)));
    }
    const auto n = static_cast<int64_t>(psp_scales.size());
    const int64_t branch = std::max<int64_t>(1, channels / n);
    for (std::size_t i = 0; i < psp_scales.size(); ++i) {
        psp_proj.push_back(register_module("psp_proj" + std::to_string(i), conv1x1(channels, branch, true)));
    }
    psp_fuse = register_module("psp_fuse", ConvBlock(channels + branch * n, channels, 3, 1, 1, cfg.leak_slope));
}

std::vector<ConvBlock> IntraContextImpl::path_layers(int64_t k) const {
    std::vector<ConvBlock> out;
    for (int64_t i = 0; i <= k && i < static_cast<int64_t>(dilated.size()); ++i) {
        out.push_back(dilated[static_cast<std::size_t>(i)]);
    }
    return out;
}

torch::Tensor IntraContextImpl::forward(const torch::Tensor& x) {
    // Path k reuses the output of path k-1's last convolution, so the cascade is
    // computed once and each path reads off its own depth.
    auto fused = x;
    auto h = x;
    for (int64_t k = 0; k < path_count(); ++k) {
        h = dilated[static_cast<std::size_t>(k)](h);
        fused = fused + path_proj[static_cast<std::size_t>(k)](h);
    }
    const auto size = std::vector<int64_t>{x.size(2), x.size(3)};
    std::vector<torch::Tensor> parts{fused};
    for (std::size_t i = 0; i < psp_scales.size(); ++i) {
        auto p = F::adaptive_avg_pool2d(fused, F::AdaptiveAvgPool2dFuncOptions({psp_scales[i], psp_scales[i]}));
        p = psp_proj[i](p);
        parts.push_back(F::interpolate(
            p, F::InterpolateFuncOptions().size(size).mode(torch::kBilinear).align_corners(false)));
    }
    return psp_fuse(torch::cat(parts, 1));
}

InterContextImpl::InterContextImpl(int64_t channels, double slope) {
    first = register_module("first", ConvBlock(2 * channels, channels, 3, 1, 1, slope));
    second = register_module("second", ConvBlock(channels, channels, 3, 1, 1, slope));
}

torch::Tensor InterContextImpl::forward(const torch::Tensor& support, const torch::Tensor& query) {
    return second(first(torch::cat({support, query}, 1)));
}

UpBlockImpl::UpBlockImpl(int64_t in, int64_t out, double slope_) : slope(slope_) {
    const int64_t mid = std::max<int64_t>(1, in / 4);
    reduce = register_module("reduce", conv1x1(in, mid, true));
    up = register_module("up", torch::nn::ConvTranspose2d(
                                   torch::nn::ConvTranspose2dOptions(mid, mid, 2).stride(2).bias(false)));
    up_bn = register_module("up_bn", torch::nn::BatchNorm2d(mid));
    expand = register_module("expand", conv1x1(mid, out, true));
}

torch::Tensor UpBlockImpl::forward(const torch::Tensor& x) {
    return expand(leaky(up_bn(up(reduce(x))), slope));
}

DecoderImpl::DecoderImpl(const std::array<int64_t, 5>& ch, double slope) {
    // deep (E5 width) -> 16 -> 8 -> 4 -> 2 -> 1
    const std::array<int64_t, 5> outs{ch[3], ch[2], ch[1], ch[0], ch[0]};
    int64_t in = ch[4];
    for (std::size_t i = 0; i < outs.size(); ++i) {
        ups.push_back(register_module("up" + std::to_string(i), UpBlock(in, outs[i], slope)));
        in = outs[i];
    }
}

torch::Tensor DecoderImpl::forward(const torch::Tensor& deep, const std::vector<torch::Tensor>& skips) {
    // skips = encoder outputs E1..E5; E4..E1 are added after the first four ups.
    auto h = deep;
    for (std::size_t i = 0; i < ups.size(); ++i) {
        h = ups[i](h);
        if (i < 4) h = h + skips[3 - i];
    }
    return h;
}

PredictorImpl::PredictorImpl(int64_t channels) { proj = register_module("proj", conv1x1(channels, 1, true)); }

torch::Tensor PredictorImpl::logits(const torch::Tensor& f) { return proj(f); }

CompositeImpl::CompositeImpl(int64_t channels, bool with_boundary_, double slope) : with_boundary(with_boundary_) {
    fuse = register_module("fuse", ConvBlock(with_boundary ? 2 * channels : channels, channels, 3, 1, 1, slope));
    proj = register_module("proj", conv1x1(channels, 1, true));
}

torch::Tensor CompositeImpl::forward(const torch::Tensor& region, const torch::Tensor& boundary) {
    auto in = with_boundary ? torch::cat({region, boundary}, 1) : region;
    return torch::sigmoid(proj(fuse(in)));
}

StageImpl::StageImpl(int64_t in_channels, bool with_inter, const NetworkConfig& cfg) {
    encoder = register_module("encoder", Encoder(in_channels, cfg));
    const auto ch = encoder->channels();
    intra = register_module("intra", IntraContext(ch[4], cfg));
    if (with_inter) inter = register_module("inter", InterContext(ch[4], cfg.leak_slope));
    region_decoder = register_module("region_decoder", Decoder(ch, cfg.leak_slope));
    region_head = register_module("region_head", Predictor(ch[0]));
    if (cfg.boundary_branch_enabled) {
        boundary_decoder = register_module("boundary_decoder", Decoder(ch, cfg.leak_slope));
        boundary_head = register_module("boundary_head", Predictor(ch[0]));
    }
    composite = register_module("composite", Composite(ch[0], cfg.boundary_branch_enabled, cfg.leak_slope));
}

StageOutputs StageImpl::decode(const torch::Tensor& deep, const std::vector<torch::Tensor>& feats) {
    StageOutputs out;
    out.f_r = region_decoder(deep, feats);
    out.y_r = region_head(out.f_r);
    if (boundary_decoder) {
        out.f_b = boundary_decoder(deep, feats);
        out.y_b = boundary_head(out.f_b);
    }
    out.y_c = composite(out.f_r, out.f_b);
    return out;
}

StageOutputs StageImpl::propose(const torch::Tensor& support_input, const torch::Tensor& query_input) {
    const int64_t nq = query_input.size(0);
    const int64_t ns = support_input.size(0);
    // One encoder pass over support and query keeps batch-norm statistics
    // identical between training and inference.
    auto f = encoder(torch::cat({support_input, query_input}, 0));
    auto c = intra(f[4]);
    auto cs = c.narrow(0, 0, ns);
    auto cq = c.narrow(0, ns, nq);
    std::vector<torch::Tensor> fq;
    fq.reserve(f.size());
    for (const auto& t : f) fq.push_back(t.narrow(0, ns, nq));
    if (ns == 1 && nq > 1) cs = cs.expand({nq, -1, -1, -1});
    return decode(inter(cs, cq), fq);
}

StageOutputs StageImpl::refine(const torch::Tensor& input) {
    auto f = encoder(input);
    return decode(intra(f[4]), f);
}

PropNetImpl::PropNetImpl(NetworkConfig cfg) : cfg_(std::move(cfg)) {
    cfg_.validate();
    proposing = register_module("proposing", Stage(2, true, cfg_));
    if (cfg_.refining_stage_enabled) {
        refining = register_module("refining", Stage(3, false, cfg_));
        region_logit = register_module("region_logit", conv1x1(cfg_.base_channels, 1, true));
        boundary_logit = register_module("boundary_logit", conv1x1(cfg_.base_channels, 1, true));
    }
}

StageOutputs PropNetImpl::forward_propose(const torch::Tensor& support_image, const torch::Tensor& support_mask,
                                          const torch::Tensor& query_image) {
    if (support_image.dim() != 4 || query_image.dim() != 4 || support_mask.sizes() != support_image.sizes()) {
        throw ShapeError("PropNet: expected [B,1,H,W] support image/mask and query image");
    }
    const int64_t h = query_image.size(2), w = query_image.size(3);
    if (h % 32 != 0 || w % 32 != 0 || support_image.size(2) != h || support_image.size(3) != w) {
        throw ShapeError("PropNet: spatial size must match and be a multiple of 32");
    }
    auto support_in = torch::cat({support_image, support_mask}, 1);
    // The query carries an empty mask channel so both share the encoder.
    auto query_in = torch::cat({query_image, torch::zeros_like(query_image)}, 1);
    return proposing->propose(support_in, query_in);
}

StageOutputs PropNetImpl::forward_refine(const torch::Tensor& query_image, const torch::Tensor& f_r,
                                         const torch::Tensor& f_b) {
    auto r = cfg_.stop_gradient ? f_r.detach() : f_r;
    auto pr = region_logit(r);
    torch::Tensor pb;
    if (f_b.defined()) {
        pb = boundary_logit(cfg_.stop_gradient ? f_b.detach() : f_b);
    } else {
        pb = torch::zeros_like(pr);
    }
    return refining->refine(torch::cat({query_image, pr, pb}, 1));
}

NetworkOutputs PropNetImpl::forward(const torch::Tensor& support_image, const torch::Tensor& support_mask,
                                    const torch::Tensor& query_image) {
    NetworkOutputs out;
    out.propose = forward_propose(support_image, support_mask, query_image);
    if (refining) out.refine = forward_refine(query_image, out.propose.f_r, out.propose.f_b);
    return out;
}

torch::Tensor PropNetImpl::predict(const torch::Tensor& support_image, const torch::Tensor& support_mask,
                                   const torch::Tensor& query_image, Head head) {
    auto p = forward_propose(support_image, support_mask, query_image);
    switch (head) {
        case Head::proposing_region:
            return p.y_r;
        case Head::proposing_composite:
            return p.y_c;
        case Head::refining_composite:
            if (!refining) throw ConfigError("refining head requested but the refining stage is disabled");
            return forward_refine(query_image, p.f_r, p.f_b).y_c;
    }
    return p.y_c;
}

Head default_head(const NetworkConfig& cfg) {
    return cfg.refining_stage_enabled ? Head::refining_composite : Head::proposing_composite;
}

int64_t parameter_count(const torch::nn::Module& m) {
    int64_t n = 0;
    for (const auto& p : m.parameters()) n += p.numel();
    return n;
}

}  // namespace propnet::model
