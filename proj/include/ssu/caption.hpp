#pragma once

// Sound-region description: mask-gated region tokens (MCM), the linguistics
// expert and router (MoHE), and the autoregressive caption decoder.

#include "ssu/data.hpp"
#include "ssu/fusion.hpp"

namespace ssu::model {

// Pixelwise product of a frame with a (soft or binary) mask; the mask
// broadcasts over the colour channels.
template <typename S>
NodeP<S> apply_mask(NodeP<S> frame, NodeP<S> mask) {
    if (frame->rows() != mask->rows() || mask->cols() != 1)
        throw ShapeError("apply_mask: frame/mask shape mismatch");
    return ad::cmul_colvec(frame, mask);
}

// Patch-embedding region encoder (the CLIP-visual stand-in): a single
// linear map over flattened patches of the masked frame.
template <typename S>
struct RegionEncoder {
    int patch = 16;
    int height = 64, width = 64;
    nn::Linear<S> embed;
    std::vector<int> patch_idx;

    RegionEncoder() = default;
    RegionEncoder(ParamStore<S>& ps, Rng& rng, int height_, int width_, int patch_, int dim)
        : patch(patch_), height(height_), width(width_) {
        if (height % patch != 0 || width % patch != 0)
            throw ConfigError("encode_region: frame size not divisible by region patch");
        embed = nn::Linear<S>(ps, rng, "region.embed",
                              static_cast<Eigen::Index>(patch) * patch * 3, dim);
        patch_idx = patch_gather_indices(height, width, patch);
    }

    int token_count() const { return (height / patch) * (width / patch); }

    NodeP<S> operator()(Tape<S>& t, ParamStore<S>& ps, NodeP<S> masked_frame) const {
        if (masked_frame->rows() != static_cast<Eigen::Index>(height) * width ||
            masked_frame->cols() != 3)
            throw ShapeError("encode_region: masked frame must be (H*W) x 3");
        NodeP<S> cols = ad::reshape(ad::gather_rows(masked_frame, patch_idx),
                                    token_count(), static_cast<Eigen::Index>(patch) * patch * 3);
        return embed(t, ps, cols);
    }
};

// 2-layer transformer encoder over the visual-text prompt, mean-pooled to a
// single vector (the LLaVA linguistics-expert stand-in).
template <typename S>
struct LinguisticsExpert {
    struct Layer {
        nn::AttentionBlock<S> self;
        nn::FeedForwardBlock<S> ffn;
    };
    std::vector<Layer> layers;

    LinguisticsExpert() = default;
    LinguisticsExpert(ParamStore<S>& ps, Rng& rng, int dim, int heads, int n_layers) {
        for (int l = 0; l < n_layers; ++l) {
            Layer layer;
            layer.self = nn::AttentionBlock<S>(ps, rng, "expert.l" + std::to_string(l) + ".self",
                                               dim, heads);
            layer.ffn = nn::FeedForwardBlock<S>(ps, rng, "expert.l" + std::to_string(l) + ".ffn",
                                                dim, 2 * dim);
            layers.push_back(layer);
        }
    }

    NodeP<S> operator()(Tape<S>& t, ParamStore<S>& ps, NodeP<S> prompt_tokens) const {
        if (prompt_tokens->rows() < 1) throw ShapeError("linguistics_expert: empty prompt");
        NodeP<S> x = prompt_tokens;
        for (const auto& layer : layers) {
            x = layer.self(t, ps, x, x);
            x = layer.ffn(t, ps, x);
        }
        return ad::mean_rows(x);
    }
};

template <typename S>
struct MoheResult {
    NodeP<S> mixed = nullptr;  // 1 x D
    NodeP<S> gate = nullptr;   // 1 x E, rows sum to 1
};

// Router-gated mixture over the expert bundle. The router reads the mean of
// the expert summaries concatenated with the decoder state.
template <typename S>
struct MoheRouter {
    nn::Linear<S> router;
    int experts = 2;

    MoheRouter() = default;
    MoheRouter(ParamStore<S>& ps, Rng& rng, int dim, int experts_) : experts(experts_) {
        if (experts < 2) throw ConfigError("model.experts: MoHE needs at least 2 experts");
        router = nn::Linear<S>(ps, rng, "mohe.router", 2 * dim, experts);
    }

    MoheResult<S> operator()(Tape<S>& t, ParamStore<S>& ps,
                             const std::vector<NodeP<S>>& expert_vecs,
                             NodeP<S> decoder_state) const {
        if (static_cast<int>(expert_vecs.size()) != experts)
            throw ShapeError("mohe_route: expert count mismatch");
        for (auto* e : expert_vecs)
            if (e->rows() != 1 || e->cols() != decoder_state->cols())
                throw ShapeError("mohe_route: expert dimension mismatch");
        NodeP<S> stacked = ad::concat_rows(expert_vecs);
        NodeP<S> pooled = ad::mean_rows(stacked);
        NodeP<S> gate_logits = router(t, ps, ad::concat_cols<S>({pooled, decoder_state}));
        MoheResult<S> out;
        out.gate = ad::softmax_rows(gate_logits);
        out.mixed = ad::matmul(out.gate, stacked);
        return out;
    }
};

template <typename S>
struct CaptionDecoderLayer {
    nn::AttentionBlock<S> self;
    nn::AttentionBlock<S> cross;
    nn::FeedForwardBlock<S> ffn;
};

// Autoregressive transformer decoder: causal self-attention over the token
// prefix, cross-attention over the per-frame conditioning memory, softmax
// over the vocabulary.
template <typename S>
struct CaptionDecoder {
    int embed_table = -1;  // vocab x D, shared with the RCC text branch
    std::vector<CaptionDecoderLayer<S>> layers;
    nn::Linear<S> out_head;
    int vocab_size = 0;
    int max_len = 24;
    int dim = 64;

    CaptionDecoder() = default;
    CaptionDecoder(ParamStore<S>& ps, Rng& rng, int vocab, int dim_, int heads, int n_layers,
                   int max_len_)
        : vocab_size(vocab), max_len(max_len_), dim(dim_) {
        embed_table = ps.add("caption.embed", nn::init_normal<S>(rng, vocab, dim));
        for (int l = 0; l < n_layers; ++l) {
            CaptionDecoderLayer<S> layer;
            std::string name = "caption.l" + std::to_string(l);
            layer.self = nn::AttentionBlock<S>(ps, rng, name + ".self", dim, heads);
            layer.cross = nn::AttentionBlock<S>(ps, rng, name + ".cross", dim, heads);
            layer.ffn = nn::FeedForwardBlock<S>(ps, rng, name + ".ffn", dim, 2 * dim);
            layers.push_back(layer);
        }
        out_head = nn::Linear<S>(ps, rng, "caption.out", dim, vocab);
    }

    NodeP<S> embed(Tape<S>& t, ParamStore<S>& ps, const std::vector<int>& tokens) const {
        NodeP<S> table = t.leaf(ps, embed_table);
        NodeP<S> e = ad::gather_rows(table, tokens);
        return ad::add(e, t.constant(nn::positional_encoding<S>(
                              static_cast<Eigen::Index>(tokens.size()), dim)));
    }

    // Hidden states for a teacher-forced prefix: L x D.
    NodeP<S> hidden(Tape<S>& t, ParamStore<S>& ps, const std::vector<int>& prefix,
                    NodeP<S> memory) const {
        if (prefix.empty() || prefix.front() != data::Vocabulary::kBos)
            throw ShapeError("decode_caption_step: prefix must begin with BOS");
        if (static_cast<int>(prefix.size()) > max_len)
            throw ShapeError("decode_caption_step: prefix longer than max_len");
        Mat<S> mask = nn::causal_mask<S>(static_cast<Eigen::Index>(prefix.size()));
        NodeP<S> x = embed(t, ps, prefix);
        for (const auto& layer : layers) {
            x = layer.self.mha.heads >= 1
                    ? layer.self.norm(t, ps, ad::add(x, layer.self.mha(t, ps, x, x, &mask)))
                    : x;
            x = layer.cross(t, ps, x, memory);
            x = layer.ffn(t, ps, x);
        }
        return x;
    }

    // Vocabulary logits at every prefix position: L x V.
    NodeP<S> logits(Tape<S>& t, ParamStore<S>& ps, const std::vector<int>& prefix,
                    NodeP<S> memory) const {
        return out_head(t, ps, hidden(t, ps, prefix, memory));
    }

    // Next-token distribution after the full prefix (the last row).
    NodeP<S> step_distribution(Tape<S>& t, ParamStore<S>& ps, const std::vector<int>& prefix,
                               NodeP<S> memory) const {
        NodeP<S> lg = logits(t, ps, prefix, memory);
        return ad::softmax_rows(ad::slice_rows(lg, lg->rows() - 1, 1));
    }
};

// Greedy argmax with ties broken toward the lowest token index.
template <typename S>
int argmax_token(const Mat<S>& dist_row) {
    int best = 0;
    for (Eigen::Index i = 1; i < dist_row.cols(); ++i)
        if (dist_row(0, i) > dist_row(0, best)) best = static_cast<int>(i);
    return best;
}

}  // namespace ssu::model
