#pragma once

// Segmentation head: each frame's fused token is refined by a small
// transformer decoder over that frame's visual tokens, mapped to a mask
// embedding, and dotted against the pixel-feature map. Logits are upsampled
// bilinearly to the frame resolution.

#include "ssu/fusion.hpp"

namespace ssu::model {

template <typename S>
struct MaskLogits {
    std::vector<NodeP<S>> coarse;  // per frame, (pixel_h * pixel_w) x 1
    std::vector<NodeP<S>> full;    // per frame, (H * W) x 1
    int pixel_h = 0, pixel_w = 0;
    int height = 0, width = 0;
};

template <typename S>
struct MaskDecoderLayer {
    nn::AttentionBlock<S> self;
    nn::AttentionBlock<S> cross;
    nn::FeedForwardBlock<S> ffn;

    MaskDecoderLayer() = default;
    MaskDecoderLayer(ParamStore<S>& ps, Rng& rng, const std::string& name, int dim, int heads) {
        self = nn::AttentionBlock<S>(ps, rng, name + ".self", dim, heads);
        cross = nn::AttentionBlock<S>(ps, rng, name + ".cross", dim, heads);
        ffn = nn::FeedForwardBlock<S>(ps, rng, name + ".ffn", dim, 2 * dim);
    }
};

template <typename S>
struct MaskDecoder {
    std::vector<MaskDecoderLayer<S>> layers;
    nn::Linear<S> head_hidden, head_out;  // mask-embedding feed-forward
    int height = 64, width = 64;

    MaskDecoder() = default;
    MaskDecoder(ParamStore<S>& ps, Rng& rng, int dim, int dim_p, int heads, int n_layers,
                int height_, int width_)
        : height(height_), width(width_) {
        for (int l = 0; l < n_layers; ++l)
            layers.emplace_back(ps, rng, "mask.layer" + std::to_string(l), dim, heads);
        head_hidden = nn::Linear<S>(ps, rng, "mask.head1", dim, dim);
        head_out = nn::Linear<S>(ps, rng, "mask.head2", dim, dim_p);
    }

    // One sounding-region query per frame. memory[t] holds frame t's visual
    // tokens at the chosen pyramid level.
    MaskLogits<S> operator()(Tape<S>& t, ParamStore<S>& ps, NodeP<S> fused,
                             const std::vector<NodeP<S>>& memory,
                             const std::vector<NodeP<S>>& pixel, int pixel_h, int pixel_w) const {
        const Eigen::Index frames = fused->rows();
        if (frames != static_cast<Eigen::Index>(pixel.size()))
            throw ShapeError("decode_masks: fused row count != pixel map frame count");
        MaskLogits<S> out;
        out.pixel_h = pixel_h;
        out.pixel_w = pixel_w;
        out.height = height;
        out.width = width;
        for (Eigen::Index f = 0; f < frames; ++f) {
            NodeP<S> q = ad::slice_rows(fused, f, 1);
            for (const auto& layer : layers) {
                q = layer.self(t, ps, q, q);
                q = layer.cross(t, ps, q, memory[static_cast<std::size_t>(f)]);
                q = layer.ffn(t, ps, q);
            }
            NodeP<S> embed = head_out(t, ps, ad::relu(head_hidden(t, ps, q)));
            NodeP<S> px = pixel[static_cast<std::size_t>(f)];
            if (px->cols() != embed->cols())
                throw ShapeError("decode_masks: mask embedding dim != pixel feature dim");
            NodeP<S> logits = ad::matmul(px, ad::transpose(embed));
            out.coarse.push_back(logits);
            out.full.push_back(ad::upsample_bilinear(logits, pixel_h, pixel_w, height, width));
        }
        return out;
    }
};

// sigmoid(logit) >= threshold, inclusive at the boundary. Input is one
// frame's logit map as a (H*W) x 1 value matrix.
template <typename S>
Image8 binarize(const Mat<S>& logits, int height, int width, double threshold = 0.5) {
    Image8 mask(height, width, 1, 0);
    for (int y = 0; y < height; ++y)
        for (int x = 0; x < width; ++x) {
            double s = 1.0 / (1.0 + std::exp(-static_cast<double>(
                                 logits(static_cast<Eigen::Index>(y) * width + x, 0))));
            mask.at(y, x) = s >= threshold ? 1 : 0;
        }
    return mask;
}

}  // namespace ssu::model
