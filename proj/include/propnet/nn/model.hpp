#pragma once

#include <optional>
#include <vector>

#include <torch/torch.h>

#include "propnet/model_config.hpp"

namespace propnet::model {

/// 3x3-style convolution followed by batch normalisation and leaky ReLU.
struct ConvBlockImpl : torch::nn::Module {
    ConvBlockImpl(int64_t in, int64_t out, int64_t kernel, int64_t stride, int64_t dilation, double slope);
    torch::Tensor forward(const torch::Tensor& x);

    torch::nn::Conv2d conv{nullptr};
    torch::nn::BatchNorm2d bn{nullptr};
    double slope;
};
TORCH_MODULE(ConvBlock);

struct BasicBlockImpl : torch::nn::Module {
    BasicBlockImpl(int64_t in, int64_t out, int64_t stride, double slope);
    torch::Tensor forward(const torch::Tensor& x);

    ConvBlock first{nullptr};
    torch::nn::Conv2d second{nullptr};
    torch::nn::BatchNorm2d second_bn{nullptr};
    torch::nn::Sequential shortcut{nullptr};
    double slope;
};
TORCH_MODULE(BasicBlock);

/// Residual encoder with the ResNet-34 stage layout. Returns the five stage
/// outputs at strides 2, 4, 8, 16, 32.
struct EncoderImpl : torch::nn::Module {
    EncoderImpl(int64_t in_channels, const NetworkConfig& cfg);
    std::vector<torch::Tensor> forward(const torch::Tensor& x);

    [[nodiscard]] std::array<int64_t, 5> channels() const { return widths; }

    ConvBlock stem{nullptr};
    torch::nn::MaxPool2d pool{nullptr};
    std::array<torch::nn::Sequential, 4> stages;
    std::array<int64_t, 5> widths{};
};
TORCH_MODULE(Encoder);

/// Multi-scale context on the stride-32 map: parallel dilated paths whose
/// equal-rate convolutions share parameters, fused by addition, then a
/// pyramid-pooling component projected back to the input width.
struct IntraContextImpl : torch::nn::Module {
    IntraContextImpl(int64_t channels, const NetworkConfig& cfg);
    torch::Tensor forward(const torch::Tensor& x);

    /// Convolutions traversed by path `k` (0-based); equal rates are the same module.
    [[nodiscard]] std::vector<ConvBlock> path_layers(int64_t k) const;
    [[nodiscard]] int64_t path_count() const { return static_cast<int64_t>(path_proj.size()); }

    std::vector<ConvBlock> dilated;  // one per active path
    std::vector<torch::nn::Conv2d> path_proj;
    std::vector<int64_t> psp_scales;
    std::vector<torch::nn::Conv2d> psp_proj;
    ConvBlock psp_fuse{nullptr};
};
TORCH_MODULE(IntraContext);

/// Two 3x3 blocks over the channel concatenation [f_s, f_q].
struct InterContextImpl : torch::nn::Module {
    InterContextImpl(int64_t channels, double slope);
    torch::Tensor forward(const torch::Tensor& support, const torch::Tensor& query);

    ConvBlock first{nullptr};
    ConvBlock second{nullptr};
};
TORCH_MODULE(InterContext);

/// 1x1 conv, 2x2 transposed conv (stride 2), 1x1 conv.
struct UpBlockImpl : torch::nn::Module {
    UpBlockImpl(int64_t in, int64_t out, double slope);
    torch::Tensor forward(const torch::Tensor& x);

    torch::nn::Conv2d reduce{nullptr};
    torch::nn::ConvTranspose2d up{nullptr};
    torch::nn::BatchNorm2d up_bn{nullptr};
    torch::nn::Conv2d expand{nullptr};
    double slope;
};
TORCH_MODULE(UpBlock);

/// Upsamples the stride-32 context map to stride 1, adding encoder skips at
/// strides 16, 8, 4, 2.
struct DecoderImpl : torch::nn::Module {
    DecoderImpl(const std::array<int64_t, 5>& encoder_channels, double slope);
    torch::Tensor forward(const torch::Tensor& deep, const std::vector<torch::Tensor>& skips);

    std::vector<UpBlock> ups;
};
TORCH_MODULE(Decoder);

/// 1x1 projection to one channel; `forward` applies the logistic function.
struct PredictorImpl : torch::nn::Module {
    explicit PredictorImpl(int64_t channels);
    torch::Tensor logits(const torch::Tensor& f);
    torch::Tensor forward(const torch::Tensor& f) { return torch::sigmoid(logits(f)); }

    torch::nn::Conv2d proj{nullptr};
};
TORCH_MODULE(Predictor);

/// Fuses region and boundary features into the composite prediction.
struct CompositeImpl : torch::nn::Module {
    CompositeImpl(int64_t channels, bool with_boundary, double slope);
    torch::Tensor forward(const torch::Tensor& region, const torch::Tensor& boundary);

    ConvBlock fuse{nullptr};
    torch::nn::Conv2d proj{nullptr};
    bool with_boundary;
};
TORCH_MODULE(Composite);

/// Per-stage predictions. Probability maps are [B,1,H,W]; y_b and f_b are
/// undefined when the boundary branch is disabled.
struct StageOutputs {
    torch::Tensor y_r;
    torch::Tensor y_b;
    torch::Tensor y_c;
    torch::Tensor f_r;
    torch::Tensor f_b;
};

/// Encoder, intra-slice context, optional inter-slice context, region and
/// boundary decoders, predictors and composite head.
struct StageImpl : torch::nn::Module {
    StageImpl(int64_t in_channels, bool with_inter, const NetworkConfig& cfg);

    /// Proposing pass; a support batch of 1 is broadcast over the queries.
    StageOutputs propose(const torch::Tensor& support_input, const torch::Tensor& query_input);
    /// Refining pass on a prepared 3-channel input.
    StageOutputs refine(const torch::Tensor& input);

    StageOutputs decode(const torch::Tensor& deep, const std::vector<torch::Tensor>& feats);

    Encoder encoder{nullptr};
    IntraContext intra{nullptr};
    InterContext inter{nullptr};
    Decoder region_decoder{nullptr};
    Decoder boundary_decoder{nullptr};
    Predictor region_head{nullptr};
    Predictor boundary_head{nullptr};
    Composite composite{nullptr};
};
TORCH_MODULE(Stage);

struct NetworkOutputs {
    StageOutputs propose;
    std::optional<StageOutputs> refine;
};

class PropNetImpl : public torch::nn::Module {
public:
    explicit PropNetImpl(NetworkConfig cfg);

    /// Images are [B,1,H,W]; the support mask is binary [B,1,H,W] (B may be 1).
    NetworkOutputs forward(const torch::Tensor& support_image, const torch::Tensor& support_mask,
                           const torch::Tensor& query_image);

    StageOutputs forward_propose(const torch::Tensor& support_image, const torch::Tensor& support_mask,
                                 const torch::Tensor& query_image);
    StageOutputs forward_refine(const torch::Tensor& query_image, const torch::Tensor& f_r,
                                const torch::Tensor& f_b);

    /// Selected probability map [B,1,H,W] for inference.
    torch::Tensor predict(const torch::Tensor& support_image, const torch::Tensor& support_mask,
                          const torch::Tensor& query_image, Head head);

    [[nodiscard]] const NetworkConfig& config() const { return cfg_; }

    Stage proposing{nullptr};
    Stage refining{nullptr};
    torch::nn::Conv2d region_logit{nullptr};
    torch::nn::Conv2d boundary_logit{nullptr};

private:
    NetworkConfig cfg_;
};
TORCH_MODULE(PropNet);

/// Default head for a configuration: refined composite when the refiner exists.
[[nodiscard]] Head default_head(const NetworkConfig& cfg);

[[nodiscard]] int64_t parameter_count(const torch::nn::Module& m);

}  // namespace propnet::model
