#pragma once

#include "propnet/nn/model.hpp"
#include "propnet/propagator.hpp"

namespace propnet::model {

[[nodiscard]] torch::Tensor to_tensor(const Image<float>& img);
[[nodiscard]] torch::Tensor to_tensor(const MaskSlice& mask);
/// [N,1,H,W] tensor from images of one shape.
[[nodiscard]] torch::Tensor stack_images(std::span<const Image<float>> images);

/// Adapts a trained network to the slice-propagation interface. The network is
/// switched to eval mode; every call runs without autograd.
class NetworkPredictor : public propagate::SlicePredictor {
public:
    NetworkPredictor(PropNet net, Head head);

    [[nodiscard]] std::vector<Image<float>> predict(const Image<float>& support_image, const MaskSlice& support_mask,
                                                    std::span<const Image<float>> queries) const override;

    [[nodiscard]] Head head() const { return head_; }

private:
    mutable PropNet net_;
    Head head_;
};

}  // namespace propnet::model
