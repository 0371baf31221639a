#include "propnet/nn/losses.hpp"

#include <algorithm>
#include <numeric>
#include <vector>

namespace propnet::losses {

namespace {

struct DiceFn : torch::autograd::Function<DiceFn> {
    static torch::Tensor forward(torch::autograd::AutogradContext* ctx, const torch::Tensor& pred,
                                 const torch::Tensor& target, const torch::Tensor& hard) {
        auto a = pred.to(torch::kFloat64);
        auto b = target.to(torch::kFloat64);
        auto m = hard.to(torch::kFloat64);
        auto overlap = (m * a * b).sum();
        auto total = (m * (a + b)).sum();
        ctx->save_for_backward({a, b, m, overlap, total});
        const double s = total.item<double>();
        if (s == 0.0) return torch::zeros({}, pred.options());
        return (1.0 - 2.0 * overlap / total).to(pred.scalar_type());
    }

    static torch::autograd::tensor_list backward(torch::autograd::AutogradContext* ctx,
                                                 torch::autograd::tensor_list grad_out) {
        auto saved = ctx->get_saved_variables();
        const auto& a = saved[0];
        const auto& b = saved[1];
        const auto& m = saved[2];
        const auto& overlap = saved[3];
        const auto& total = saved[4];
        torch::Tensor g;
        if (total.item<double>() == 0.0) {
            g = torch::zeros_like(a);
        } else {
            g = -2.0 * m * (b * total - overlap) / (total * total);
        }
        g = (g * grad_out[0].to(torch::kFloat64)).to(grad_out[0].scalar_type());
        return {g, torch::Tensor(), torch::Tensor()};
    }
};

}  // namespace

torch::Tensor soft_dice(const torch::Tensor& pred, const torch::Tensor& target, const torch::Tensor& hard) {
    if (pred.sizes() != target.sizes() || (hard.defined() && hard.sizes() != pred.sizes())) {
        throw ShapeError("soft_dice: shape mismatch");
    }
    return DiceFn::apply(pred, target, hard.defined() ? hard : torch::ones_like(pred));
}

torch::Tensor hard_pixel_mask(const torch::Tensor& a, const torch::Tensor& b) {
    if (a.sizes() != b.sizes() || a.dim() < 2) throw ShapeError("hard_pixel_mask: shape mismatch");
    torch::NoGradGuard guard;
    const int64_t batch = a.size(0);
    auto diff = (a.detach() - b.detach()).abs().reshape({batch, -1}).to(torch::kFloat64).contiguous();
    const int64_t n = diff.size(1);
    const int64_t k = (n + 2) / 3;
    auto out = torch::zeros({batch, n}, torch::kFloat32);
    auto acc = diff.accessor<double, 2>();
    auto dst = out.accessor<float, 2>();
    std::vector<int64_t> idx(static_cast<std::size_t>(n));
    for (int64_t i = 0; i < batch; ++i) {
        std::iota(idx.begin(), idx.end(), int64_t{0});
        std::partial_sort(idx.begin(), idx.begin() + k, idx.end(), [&](int64_t l, int64_t r) {
            if (acc[i][l] != acc[i][r]) return acc[i][l] > acc[i][r];
            return l < r;
        });
        for (int64_t j = 0; j < k; ++j) dst[i][idx[static_cast<std::size_t>(j)]] = 1.0F;
    }
    return out.reshape(a.sizes()).to(a.device());
}

LossBreakdown total_loss(const model::NetworkOutputs& out, const torch::Tensor& query_mask,
                         const torch::Tensor& boundary_mask, const objectives::LossWeights& w) {
    using W = objectives::LossWeights;
    LossBreakdown br;
    const auto& p = out.propose;
    auto lc = soft_dice(p.y_c, query_mask);
    auto lr = soft_dice(p.y_r, query_mask);
    auto stage1 = W::w_c * lc + W::w_r * lr;
    br.propose_c = lc.item<double>();
    br.propose_r = lr.item<double>();
    if (p.y_b.defined()) {
        auto lb = soft_dice(p.y_b, boundary_mask);
        stage1 = stage1 + W::w_b * lb;
        br.propose_b = lb.item<double>();
    }
    br.total = w.w * stage1;
    if (out.refine) {
        const auto& q = *out.refine;
        auto hard = hard_pixel_mask(p.y_c, query_mask);
        auto rc = soft_dice(q.y_c, query_mask, hard);
        auto rr = soft_dice(q.y_r, query_mask, hard);
        auto stage2 = W::w_c * rc + W::w_r * rr;
        br.refine_c = rc.item<double>();
        br.refine_r = rr.item<double>();
        if (q.y_b.defined()) {
            auto rb = soft_dice(q.y_b, boundary_mask, hard);
            stage2 = stage2 + W::w_b * rb;
            br.refine_b = rb.item<double>();
        }
        br.total = br.total + w.w_prime * stage2;
    }
    return br;
}

}  // namespace propnet::losses
