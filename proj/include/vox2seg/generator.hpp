#ifndef VOX2SEG_GENERATOR_HPP
#define VOX2SEG_GENERATOR_HPP

#include <cstdint>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

#include "vox2seg/nn.hpp"
#include "vox2seg/rng.hpp"
#include "vox2seg/tensor.hpp"

namespace vox2seg {

struct GeneratorConfig {
    std::int64_t input_channels = 4;
    std::int64_t num_classes = 4;
    std::int64_t depth = 4;  // down-sampling blocks
    std::int64_t base_filters = 8;
    std::int64_t bottleneck_blocks = 4;
    std::int64_t kernel = 4;
    double leaky_slope = 0.3;
    double dropout = 0.2;
    double norm_eps = 1e-5;

    static GeneratorConfig desk() { return {}; }
    static GeneratorConfig paper() {
        GeneratorConfig c;
        c.base_filters = 64;
        return c;
    }
};

namespace model_detail {

inline void check_divisible(const Shape& s, std::int64_t depth, const char* what) {
    const std::int64_t div = std::int64_t{1} << depth;
    for (int a = 2; a < 5; ++a)
        if (s[static_cast<std::size_t>(a)] % div != 0)
            throw std::invalid_argument(std::string(what) + ": spatial size " +
                                        std::to_string(s[static_cast<std::size_t>(a)]) +
                                        " not divisible by " + std::to_string(div));
}

}  // namespace model_detail

/// Volume-to-volume segmentation network: a strided-convolution encoder, a
/// densely concatenated stride-1 bottleneck with dropout, and a transposed-
/// convolution decoder with encoder skips, ending in a per-voxel softmax over
/// classes. Fully convolutional: any input whose spatial extents divide by
/// 2^depth works, regardless of the size it was trained at.
template <typename T>
class Generator {
public:
    explicit Generator(const GeneratorConfig& cfg = {}) : cfg_(cfg) {
        if (cfg.base_filters < 1) throw std::invalid_argument("generator: base filters must be >= 1");
        const std::int64_t k = cfg.kernel;
        std::int64_t in_ch = cfg.input_channels;
        for (std::int64_t i = 0; i < cfg.depth; ++i) {
            const std::int64_t out_ch = cfg.base_filters << i;
            const std::string tag = "enc" + std::to_string(i + 1);
            enc_conv_.emplace_back(std::make_unique<nn::Conv3d<T>>(tag, in_ch, out_ch, k, 2));
            enc_norm_.emplace_back(std::make_unique<nn::InstanceNorm3d<T>>(tag, out_ch, cfg.norm_eps));
            enc_act_.emplace_back(std::make_unique<nn::LeakyReLU<T>>(cfg.leaky_slope));
            in_ch = out_ch;
        }
        const std::int64_t deep = cfg.base_filters << (cfg.depth - 1);
        for (std::int64_t j = 0; j < cfg.bottleneck_blocks; ++j) {
            const std::int64_t cat_ch = deep * (j + 1);  // encoder output + j previous blocks
            const std::string tag = "bot" + std::to_string(j + 1);
            bot_conv_.emplace_back(std::make_unique<nn::Conv3d<T>>(tag, cat_ch, deep, k, 1));
            bot_norm_.emplace_back(std::make_unique<nn::InstanceNorm3d<T>>(tag, deep, cfg.norm_eps));
            bot_act_.emplace_back(std::make_unique<nn::LeakyReLU<T>>(cfg.leaky_slope));
            bot_drop_.emplace_back(std::make_unique<nn::Dropout<T>>(cfg.dropout));
        }
        // decoder block k consumes concat(previous output, encoder skip); the
        // first spatial level's encoder output is not reused.
        std::int64_t prev_ch = deep;
        for (std::int64_t kblk = 0; kblk < cfg.depth - 1; ++kblk) {
            const std::int64_t skip_ch = cfg.base_filters << (cfg.depth - 1 - kblk);
            const std::int64_t out_ch = cfg.base_filters << (cfg.depth - 2 - kblk);
            const std::string tag = "dec" + std::to_string(kblk + 1);
            dec_conv_.emplace_back(
                std::make_unique<nn::ConvTranspose3d<T>>(tag, prev_ch + skip_ch, out_ch, k, 2));
            dec_norm_.emplace_back(std::make_unique<nn::InstanceNorm3d<T>>(tag, out_ch, cfg.norm_eps));
            dec_act_.emplace_back(std::make_unique<nn::LeakyReLU<T>>(0.0));
            prev_ch = out_ch;
        }
        out_conv_ = std::make_unique<nn::ConvTranspose3d<T>>("out", prev_ch, cfg.num_classes, k, 2);
    }

    void init(std::uint64_t seed) {
        RngStream rng(seed);
        for (auto& c : enc_conv_) c->init_he(rng);
        for (auto& c : bot_conv_) c->init_he(rng);
        for (auto& c : dec_conv_) c->init_he(rng);
        out_conv_->init_he(rng);
    }

    /// Forward pass; with train=true all activations needed by backward() are
    /// cached and dropout is active (rng required).
    Tensor<T> forward(const Tensor<T>& x, bool train = false, RngStream* rng = nullptr) {
        if (x.rank() != 5 || x.dim(1) != cfg_.input_channels)
            throw std::invalid_argument("generator: expected (N," +
                                        std::to_string(cfg_.input_channels) + ",X,Y,Z) input");
        model_detail::check_divisible(x.shape(), cfg_.depth, "generator");
        if (train && !rng) throw std::invalid_argument("generator: training forward needs an rng");

        enc_out_.clear();
        bot_out_.clear();
        const Tensor<T>* cur = &x;
        for (std::size_t i = 0; i < enc_conv_.size(); ++i) {
            Tensor<T> t = enc_conv_[i]->forward(*cur, train);
            t = enc_norm_[i]->forward(t, train);
            enc_out_.push_back(enc_act_[i]->forward(t, train));
            cur = &enc_out_.back();
        }
        for (std::size_t j = 0; j < bot_conv_.size(); ++j) {
            std::vector<const Tensor<T>*> parts{&enc_out_.back()};
            for (const auto& b : bot_out_) parts.push_back(&b);
            Tensor<T> cat = nn::concat_channels(parts);
            Tensor<T> t = bot_conv_[j]->forward(cat, train);
            t = bot_norm_[j]->forward(t, train);
            t = bot_act_[j]->forward(t, train);
            bot_out_.push_back(bot_drop_[j]->forward(t, train, rng));
        }
        dec_out_.clear();
        const Tensor<T>* prev = &bot_out_.back();
        for (std::size_t k = 0; k < dec_conv_.size(); ++k) {
            const Tensor<T>& skip = enc_out_[enc_out_.size() - 1 - k];
            Tensor<T> cat = nn::concat_channels<T>({prev, &skip});
            Tensor<T> t = dec_conv_[k]->forward(cat, train);
            t = dec_norm_[k]->forward(t, train);
            dec_out_.push_back(dec_act_[k]->forward(t, train));
            prev = &dec_out_.back();
        }
        Tensor<T> logits = out_conv_->forward(*prev, train);
        Tensor<T> probs = softmax_.forward(logits, train);
        if (!train) release_activations();
        return probs;
    }

    /// Backpropagate dL/d(probabilities); accumulates parameter gradients and
    /// returns dL/d(input).
    Tensor<T> backward(const Tensor<T>& dprobs) {
        Tensor<T> g = softmax_.backward(dprobs);
        g = out_conv_->backward(g);

        // decoder, reversed; split concat gradients into (previous, skip)
        std::vector<Tensor<T>> enc_grad;
        for (const auto& e : enc_out_) enc_grad.push_back(Tensor<T>::zeros_like(e));
        for (std::size_t k = dec_conv_.size(); k-- > 0;) {
            g = dec_act_[k]->backward(g);
            g = dec_norm_[k]->backward(g);
            Tensor<T> gcat = dec_conv_[k]->backward(g);
            const std::size_t skip_idx = enc_out_.size() - 1 - k;
            const std::int64_t prev_ch = gcat.dim(1) - enc_out_[skip_idx].dim(1);
            nn::add_channel_slice(enc_grad[skip_idx], gcat, prev_ch);
            g = nn::slice_channels(gcat, 0, prev_ch);
        }

        // bottleneck, reversed; dense concat fans gradients out to the
        // encoder output and every earlier block
        std::vector<Tensor<T>> bot_grad;
        for (const auto& b : bot_out_) bot_grad.push_back(Tensor<T>::zeros_like(b));
        nn::add_channel_slice(bot_grad.back(), g, 0);
        const std::int64_t deep = enc_out_.back().dim(1);
        for (std::size_t j = bot_conv_.size(); j-- > 0;) {
            Tensor<T> gj = bot_drop_[j]->backward(bot_grad[j]);
            gj = bot_act_[j]->backward(gj);
            gj = bot_norm_[j]->backward(gj);
            Tensor<T> gcat = bot_conv_[j]->backward(gj);
            nn::add_channel_slice(enc_grad.back(), gcat, 0);
            for (std::size_t i = 0; i < j; ++i)
                nn::add_channel_slice(bot_grad[i], gcat, deep * static_cast<std::int64_t>(i + 1));
        }

        // encoder, reversed; enc_grad[i] already holds all skip contributions
        Tensor<T> dx;
        for (std::size_t i = enc_conv_.size(); i-- > 0;) {
            Tensor<T> gi = enc_act_[i]->backward(enc_grad[i]);
            gi = enc_norm_[i]->backward(gi);
            gi = enc_conv_[i]->backward(gi);
            if (i > 0)
                nn::add_channel_slice(enc_grad[i - 1], gi, 0);
            else
                dx = std::move(gi);
        }
        return dx;
    }

    std::vector<nn::Parameter<T>*> parameters() {
        std::vector<nn::Parameter<T>*> ps;
        auto add = [&ps](auto& conv) {
            ps.push_back(&conv->weight);
            ps.push_back(&conv->bias);
        };
        auto add_norm = [&ps](auto& norm) {
            ps.push_back(&norm->gamma);
            ps.push_back(&norm->beta);
        };
        for (std::size_t i = 0; i < enc_conv_.size(); ++i) {
            add(enc_conv_[i]);
            add_norm(enc_norm_[i]);
        }
        for (std::size_t j = 0; j < bot_conv_.size(); ++j) {
            add(bot_conv_[j]);
            add_norm(bot_norm_[j]);
        }
        for (std::size_t k = 0; k < dec_conv_.size(); ++k) {
            add(dec_conv_[k]);
            add_norm(dec_norm_[k]);
        }
        add(out_conv_);
        return ps;
    }

    std::int64_t count_parameters() {
        std::int64_t n = 0;
        for (const auto* p : parameters()) n += p->value.numel();
        return n;
    }

    void release_activations() {
        enc_out_.clear();
        bot_out_.clear();
        dec_out_.clear();
        for (auto& c : enc_conv_) c->release_cache();
        for (auto& n : enc_norm_) n->release_cache();
        for (auto& a : enc_act_) a->release_cache();
        for (auto& c : bot_conv_) c->release_cache();
        for (auto& n : bot_norm_) n->release_cache();
        for (auto& a : bot_act_) a->release_cache();
        for (auto& d : bot_drop_) d->release_cache();
        for (auto& c : dec_conv_) c->release_cache();
        for (auto& n : dec_norm_) n->release_cache();
        for (auto& a : dec_act_) a->release_cache();
        out_conv_->release_cache();
        softmax_.release_cache();
    }

    const GeneratorConfig& config() const { return cfg_; }

private:
    GeneratorConfig cfg_;
    std::vector<std::unique_ptr<nn::Conv3d<T>>> enc_conv_;
    std::vector<std::unique_ptr<nn::InstanceNorm3d<T>>> enc_norm_;
    std::vector<std::unique_ptr<nn::LeakyReLU<T>>> enc_act_;
    std::vector<std::unique_ptr<nn::Conv3d<T>>> bot_conv_;
    std::vector<std::unique_ptr<nn::InstanceNorm3d<T>>> bot_norm_;
    std::vector<std::unique_ptr<nn::LeakyReLU<T>>> bot_act_;
    std::vector<std::unique_ptr<nn::Dropout<T>>> bot_drop_;
    std::vector<std::unique_ptr<nn::ConvTranspose3d<T>>> dec_conv_;
    std::vector<std::unique_ptr<nn::InstanceNorm3d<T>>> dec_norm_;
    std::vector<std::unique_ptr<nn::LeakyReLU<T>>> dec_act_;
    std::unique_ptr<nn::ConvTranspose3d<T>> out_conv_;
    nn::ChannelSoftmax<T> softmax_;

    std::vector<Tensor<T>> enc_out_, bot_out_, dec_out_;
};

}  // namespace vox2seg

#endif  // VOX2SEG_GENERATOR_HPP
