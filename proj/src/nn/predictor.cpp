#include "propnet/nn/predictor.hpp"

#include <cstring>

namespace propnet::model {

torch::Tensor to_tensor(const Image<float>& img) {
    auto t = torch::empty({1, 1, img.height, img.width}, torch::kFloat32);
    std::memcpy(t.data_ptr<float>(), img.data.data(), img.data.size() * sizeof(float));
    return t;
}

torch::Tensor to_tensor(const MaskSlice& mask) {
    auto t = torch::empty({1, 1, mask.height, mask.width}, torch::kFloat32);
    auto* dst = t.data_ptr<float>();
    for (std::size_t i = 0; i < mask.data.size(); ++i) dst[i] = mask.data[i] != 0 ? 1.0F : 0.0F;
    return t;
}

torch::Tensor stack_images(std::span<const Image<float>> images) {
    if (images.empty()) throw ShapeError("stack_images: no images");
    const int64_t h = images.front().height, w = images.front().width;
    auto t = torch::empty({static_cast<int64_t>(images.size()), 1, h, w}, torch::kFloat32);
    auto* dst = t.data_ptr<float>();
    for (const auto& im : images) {
        if (im.height != h || im.width != w) throw ShapeError("stack_images: mixed shapes");
        std::memcpy(dst, im.data.data(), im.data.size() * sizeof(float));
        dst += im.data.size();
    }
    return t;
}

NetworkPredictor::NetworkPredictor(PropNet net, Head head) : net_(std::move(net)), head_(head) {
    if (head_ == Head::refining_composite && !net_->config().refining_stage_enabled) {
        throw ConfigError("refining head requested but the refining stage is disabled");
    }
    net_->eval();
}

std::vector<Image<float>> NetworkPredictor::predict(const Image<float>& support_image, const MaskSlice& support_mask,
                                                    std::span<const Image<float>> queries) const {
    if (queries.empty()) return {};
    if (!support_image.same_shape(support_mask)) throw ShapeError("predict: support image/mask shape mismatch");
    // The guard is thread-local, so it has to live inside the call.
    c10::InferenceMode guard;
    auto prob = net_->predict(to_tensor(support_image), to_tensor(support_mask), stack_images(queries), head_)
                    .contiguous();
    std::vector<Image<float>> out;
    out.reserve(queries.size());
    const auto* src = prob.data_ptr<float>();
    for (const auto& q : queries) {
        Image<float> im(q.height, q.width);
        std::memcpy(im.data.data(), src, im.data.size() * sizeof(float));
        src += im.data.size();
        out.push_back(std::move(im));
    }
    return out;
}

}  // namespace propnet::model
