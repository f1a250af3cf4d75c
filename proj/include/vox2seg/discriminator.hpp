#ifndef VOX2SEG_DISCRIMINATOR_HPP
#define VOX2SEG_DISCRIMINATOR_HPP

#include <cstdint>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

#include "vox2seg/generator.hpp"
#include "vox2seg/nn.hpp"
#include "vox2seg/rng.hpp"
#include "vox2seg/tensor.hpp"

namespace vox2seg {

struct DiscriminatorConfig {
    std::int64_t image_channels = 4;
    std::int64_t seg_channels = 4;
    std::int64_t depth = 4;
    std::int64_t base_filters = 8;
    std::int64_t kernel = 4;
    double leaky_slope = 0.3;
    double norm_eps = 1e-5;

    static DiscriminatorConfig desk() { return {}; }
    static DiscriminatorConfig paper() {
        DiscriminatorConfig c;
        c.base_filters = 64;
        return c;
    }
};

/// Patch critic: scores (image, segmentation) pairs with a spatial grid of
/// raw realism scores, one per receptive-field patch. The encoder mirrors
/// the generator's; the head is a single stride-1 convolution to 1 channel
/// with no activation (least-squares criterion operates on raw scores).
template <typename T>
class Discriminator {
public:
    explicit Discriminator(const DiscriminatorConfig& cfg = {}) : cfg_(cfg) {
        const std::int64_t k = cfg.kernel;
        std::int64_t in_ch = cfg.image_channels + cfg.seg_channels;
        for (std::int64_t i = 0; i < cfg.depth; ++i) {
            const std::int64_t out_ch = cfg.base_filters << i;
            const std::string tag = "disc_enc" + std::to_string(i + 1);
            enc_conv_.emplace_back(std::make_unique<nn::Conv3d<T>>(tag, in_ch, out_ch, k, 2));
            enc_norm_.emplace_back(std::make_unique<nn::InstanceNorm3d<T>>(tag, out_ch, cfg.norm_eps));
            enc_act_.emplace_back(std::make_unique<nn::LeakyReLU<T>>(cfg.leaky_slope));
            in_ch = out_ch;
        }
        head_ = std::make_unique<nn::Conv3d<T>>("disc_head", in_ch, 1, k, 1);
    }

    void init(std::uint64_t seed) {
        RngStream rng(seed);
        for (auto& c : enc_conv_) c->init_he(rng);
        head_->init_he(rng);
    }

    /// Score a batch of (image, segmentation) pairs; output (N,1,X',Y',Z')
    /// with X' = X / 2^depth etc.
    Tensor<T> forward(const Tensor<T>& image, const Tensor<T>& seg, bool train = false) {
        if (image.rank() != 5 || seg.rank() != 5)
            throw std::invalid_argument("discriminator: expected (N,C,X,Y,Z) inputs");
        for (int a : {0, 2, 3, 4})
            if (image.dim(a) != seg.dim(a))
                throw std::invalid_argument("discriminator: image/segmentation shape mismatch");
        if (image.dim(1) != cfg_.image_channels || seg.dim(1) != cfg_.seg_channels)
            throw std::invalid_argument("discriminator: channel-count mismatch");
        Tensor<T> cat = nn::concat_channels<T>({&image, &seg});
        model_detail::check_divisible(cat.shape(), cfg_.depth, "discriminator");
        Tensor<T> cur = std::move(cat);
        for (std::size_t i = 0; i < enc_conv_.size(); ++i) {
            cur = enc_conv_[i]->forward(cur, train);
            cur = enc_norm_[i]->forward(cur, train);
            cur = enc_act_[i]->forward(cur, train);
        }
        Tensor<T> scores = head_->forward(cur, train);
        if (!train) release_activations();
        return scores;
    }

    /// Backpropagate dL/d(scores); accumulates parameter gradients and returns
    /// the gradient w.r.t. the concatenated input (channels: image then seg).
    Tensor<T> backward(const Tensor<T>& dscores) {
        Tensor<T> g = head_->backward(dscores);
        for (std::size_t i = enc_conv_.size(); i-- > 0;) {
            g = enc_act_[i]->backward(g);
            g = enc_norm_[i]->backward(g);
            g = enc_conv_[i]->backward(g);
        }
        return g;
    }

    /// Segmentation slice of a backward() result — the pathway that feeds the
    /// generator during adversarial training.
    Tensor<T> seg_grad(const Tensor<T>& dinput) const {
        return nn::slice_channels(dinput, cfg_.image_channels, cfg_.seg_channels);
    }

    std::vector<nn::Parameter<T>*> parameters() {
        std::vector<nn::Parameter<T>*> ps;
        for (std::size_t i = 0; i < enc_conv_.size(); ++i) {
            ps.push_back(&enc_conv_[i]->weight);
            ps.push_back(&enc_conv_[i]->bias);
            ps.push_back(&enc_norm_[i]->gamma);
            ps.push_back(&enc_norm_[i]->beta);
        }
        ps.push_back(&head_->weight);
        ps.push_back(&head_->bias);
        return ps;
    }

    std::int64_t count_parameters() {
        std::int64_t n = 0;
        for (const auto* p : parameters()) n += p->value.numel();
        return n;
    }

    void release_activations() {
        for (auto& c : enc_conv_) c->release_cache();
        for (auto& n : enc_norm_) n->release_cache();
        for (auto& a : enc_act_) a->release_cache();
        head_->release_cache();
    }

    const DiscriminatorConfig& config() const { return cfg_; }

private:
    DiscriminatorConfig cfg_;
    std::vector<std::unique_ptr<nn::Conv3d<T>>> enc_conv_;
    std::vector<std::unique_ptr<nn::InstanceNorm3d<T>>> enc_norm_;
    std::vector<std::unique_ptr<nn::LeakyReLU<T>>> enc_act_;
    std::unique_ptr<nn::Conv3d<T>> head_;
};

}  // namespace vox2seg

#endif  // VOX2SEG_DISCRIMINATOR_HPP
