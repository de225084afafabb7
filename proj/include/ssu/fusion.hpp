#pragma once

// Multi-modality integration: audio tokens query per-frame visual tokens
// through N stacked blocks of self-attention, cross-attention and a
// feed-forward, all post-norm residual. An optional pooled summary token
// gives every frame a view of the whole clip.

#include "ssu/encoders.hpp"

namespace ssu::model {

// Standalone self-attention sub-block: LN(x + MHA(x, x, x)).
template <typename S>
NodeP<S> self_attend(Tape<S>& t, ParamStore<S>& ps, const nn::AttentionBlock<S>& block,
                     NodeP<S> tokens) {
    return block(t, ps, tokens, tokens);
}

template <typename S>
struct FuserBlock {
    nn::AttentionBlock<S> audio_self;
    nn::AttentionBlock<S> visual_self;
    nn::AttentionBlock<S> cross;
    nn::FeedForwardBlock<S> ffn;

    FuserBlock() = default;
    FuserBlock(ParamStore<S>& ps, Rng& rng, const std::string& name, int dim, int heads) {
        audio_self = nn::AttentionBlock<S>(ps, rng, name + ".audio_self", dim, heads);
        visual_self = nn::AttentionBlock<S>(ps, rng, name + ".visual_self", dim, heads);
        cross = nn::AttentionBlock<S>(ps, rng, name + ".cross", dim, heads);
        ffn = nn::FeedForwardBlock<S>(ps, rng, name + ".ffn", dim, 2 * dim);
    }
};

template <typename S>
struct CrossModalFuser {
    int dim = 64;
    int heads = 2;
    bool summary_token = true;
    nn::Linear<S> audio_proj;
    std::vector<FuserBlock<S>> blocks;
    Mat<S> visual_pe;  // spatial encoding for the fusion-level grid

    CrossModalFuser() = default;
    CrossModalFuser(ParamStore<S>& ps, Rng& rng, int dim_in, int dim_, int heads_, int n_blocks,
                    int grid, bool summary)
        : dim(dim_), heads(heads_), summary_token(summary) {
        audio_proj = nn::Linear<S>(ps, rng, "fuse.audio_proj", dim_in, dim);
        for (int b = 0; b < n_blocks; ++b)
            blocks.emplace_back(ps, rng, "fuse.block" + std::to_string(b), dim, heads);
        visual_pe = nn::positional_encoding_2d<S>(grid, grid, dim);
    }

    // f_a: T x dim_in audio tokens; visual: per-frame token matrices at the
    // fusion level. Returns the fused T x dim stream.
    NodeP<S> operator()(Tape<S>& t, ParamStore<S>& ps, NodeP<S> f_a,
                        const std::vector<NodeP<S>>& visual) const {
        const Eigen::Index frames = f_a->rows();
        if (frames != static_cast<Eigen::Index>(visual.size()))
            throw ShapeError("cross_modal_fuse: audio rows (" + std::to_string(frames) +
                             ") != visual frame count (" + std::to_string(visual.size()) + ")");
        NodeP<S> x = audio_proj(t, ps, f_a);
        if (blocks.empty()) return x;  // N = 0 passthrough

        x = ad::add(x, t.constant(nn::positional_encoding<S>(frames, dim)));
        std::vector<NodeP<S>> v(visual.size());
        for (std::size_t i = 0; i < visual.size(); ++i) {
            if (visual[i]->cols() != dim || visual[i]->rows() != visual_pe.rows())
                throw ShapeError("cross_modal_fuse: visual token shape mismatch");
            v[i] = ad::add(visual[i], t.constant(visual_pe));
        }

        for (const FuserBlock<S>& blk : blocks) {
            x = self_attend(t, ps, blk.audio_self, x);
            for (auto& vt : v) vt = self_attend(t, ps, blk.visual_self, vt);
            NodeP<S> summary = nullptr;
            if (summary_token) summary = ad::mean_rows(ad::concat_rows(v));
            std::vector<NodeP<S>> rows;
            rows.reserve(static_cast<std::size_t>(frames));
            for (Eigen::Index f = 0; f < frames; ++f) {
                NodeP<S> q = ad::slice_rows(x, f, 1);
                NodeP<S> kv = v[static_cast<std::size_t>(f)];
                if (summary) kv = ad::concat_rows<S>({kv, summary});
                rows.push_back(blk.cross(t, ps, q, kv));
            }
            x = ad::concat_rows(rows);
            x = blk.ffn(t, ps, x);
        }
        return x;
    }
};

}  // namespace ssu::model
