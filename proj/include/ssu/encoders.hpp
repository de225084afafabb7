#pragma once

// Trainable encoder stand-ins: a per-frame temporal-conv audio encoder and a
// three-stage patch-merging pyramid video encoder. Neither mixes information
// across frames, and neither adds positional encodings (those are added by
// the fusion stack).

#include "ssu/mel.hpp"
#include "ssu/nn.hpp"

namespace ssu::model {

using ad::NodeP;
using ad::ParamStore;
using ad::Tape;

// One token per video frame, T x D_a.
template <typename S>
struct AudioTokens {
    NodeP<S> tokens = nullptr;
};

template <typename S>
struct VisualFeatures {
    // levels[l][t]: frame t's stage-(l+1) tokens, (grid_l)^2 x dim_v
    std::vector<std::vector<NodeP<S>>> levels;
    // pixel[t]: frame t's pixel-feature map, (H/4 * W/4) x dim_p
    std::vector<NodeP<S>> pixel;
    std::vector<int> grids;  // tokens per side at each level
    int pixel_h = 0, pixel_w = 0;

    int frame_count() const { return static_cast<int>(pixel.size()); }
};

// ---- audio -----------------------------------------------------------------

template <typename S>
struct AudioEncoder {
    int n_mels = 32;
    int kernel = 1;  // 1 keeps the encoder strictly per-frame
    nn::Linear<S> conv1, conv2, proj;

    AudioEncoder() = default;
    AudioEncoder(ParamStore<S>& ps, Rng& rng, int n_mels_, int hidden, int d_out, int kernel_ = 1)
        : n_mels(n_mels_), kernel(kernel_) {
        if (kernel % 2 != 1) throw ConfigError("model.audio_kernel: must be odd");
        conv1 = nn::Linear<S>(ps, rng, "audio.conv1", static_cast<Eigen::Index>(n_mels) * kernel,
                              hidden);
        conv2 = nn::Linear<S>(ps, rng, "audio.conv2", static_cast<Eigen::Index>(hidden) * kernel,
                              hidden);
        proj = nn::Linear<S>(ps, rng, "audio.proj", hidden, d_out);
    }

    // Stacks each row with its +-(kernel/2) neighbours (zero padded) so a
    // linear layer acts as a temporal convolution.
    NodeP<S> temporal_window(Tape<S>& t, NodeP<S> x) const {
        if (kernel == 1) return x;
        const Eigen::Index n = x->rows(), c = x->cols();
        std::vector<NodeP<S>> cols;
        for (int off = -(kernel / 2); off <= kernel / 2; ++off) {
            if (off == 0) {
                cols.push_back(x);
                continue;
            }
            Eigen::Index pad = std::abs(off);
            NodeP<S> zeros = t.constant(Mat<S>::Zero(pad, c));
            if (off < 0)
                cols.push_back(ad::concat_rows<S>({zeros, ad::slice_rows(x, 0, n - pad)}));
            else
                cols.push_back(ad::concat_rows<S>({ad::slice_rows(x, pad, n - pad), zeros}));
        }
        return ad::concat_cols(cols);
    }

    NodeP<S> operator()(Tape<S>& t, ParamStore<S>& ps, const audio::MelSpectrogram& spec) const {
        if (spec.n_mels != n_mels)
            throw ShapeError("encode_audio: spectrogram has " + std::to_string(spec.n_mels) +
                             " mel bins, encoder configured for " + std::to_string(n_mels));
        NodeP<S> x = t.constant(spec.values.template cast<S>());
        x = ad::relu(conv1(t, ps, temporal_window(t, x)));
        x = ad::relu(conv2(t, ps, temporal_window(t, x)));
        return proj(t, ps, x);
    }
};

// ---- video -----------------------------------------------------------------

// Converts one RGB frame to a (H*W) x 3 matrix scaled to [0, 1].
template <typename S>
Mat<S> frame_to_matrix(const Image8& frame) {
    Mat<S> m(static_cast<Eigen::Index>(frame.h) * frame.w, 3);
    for (int y = 0; y < frame.h; ++y)
        for (int x = 0; x < frame.w; ++x)
            for (int ch = 0; ch < 3; ++ch)
                m(static_cast<Eigen::Index>(y) * frame.w + x, ch) =
                    static_cast<S>(frame.at(y, x, ch)) / S(255);
    return m;
}

// Row indices that lay a (h x w) pixel matrix out as consecutive
// patch-major rows; combined with reshape this is im2col.
inline std::vector<int> patch_gather_indices(int h, int w, int patch) {
    std::vector<int> idx;
    idx.reserve(static_cast<std::size_t>(h) * w);
    for (int py = 0; py < h / patch; ++py)
        for (int px = 0; px < w / patch; ++px)
            for (int dy = 0; dy < patch; ++dy)
                for (int dx = 0; dx < patch; ++dx)
                    idx.push_back((py * patch + dy) * w + (px * patch + dx));
    return idx;
}

// Indices grouping a (g x g) token grid into 2x2 blocks of consecutive rows.
inline std::vector<int> merge_gather_indices(int g) {
    std::vector<int> idx;
    idx.reserve(static_cast<std::size_t>(g) * g);
    for (int y = 0; y < g / 2; ++y)
        for (int x = 0; x < g / 2; ++x) {
            idx.push_back((2 * y) * g + 2 * x);
            idx.push_back((2 * y) * g + 2 * x + 1);
            idx.push_back((2 * y + 1) * g + 2 * x);
            idx.push_back((2 * y + 1) * g + 2 * x + 1);
        }
    return idx;
}

// 2x2 mean-pooling matrix over a g x g token grid, used to shrink attention
// keys/values in the wide first stage (PVT-style spatial reduction).
template <typename S>
Mat<S> pool2x2_matrix(int g) {
    Mat<S> p = Mat<S>::Zero(static_cast<Eigen::Index>(g / 2) * (g / 2),
                            static_cast<Eigen::Index>(g) * g);
    for (int y = 0; y < g / 2; ++y)
        for (int x = 0; x < g / 2; ++x) {
            Eigen::Index row = static_cast<Eigen::Index>(y) * (g / 2) + x;
            p(row, (2 * y) * g + 2 * x) = S(0.25);
            p(row, (2 * y) * g + 2 * x + 1) = S(0.25);
            p(row, (2 * y + 1) * g + 2 * x) = S(0.25);
            p(row, (2 * y + 1) * g + 2 * x + 1) = S(0.25);
        }
    return p;
}

template <typename S>
struct VideoEncoder {
    static constexpr int kLevels = 3;

    int patch = 4;
    int height = 64, width = 64;
    std::array<int, kLevels> stage_dims{32, 64, 64};
    int dim_v = 64, dim_p = 64;
    int heads = 2;

    nn::Linear<S> patch_embed;
    std::array<nn::Linear<S>, 2> merges;
    std::array<nn::AttentionBlock<S>, kLevels> attn;
    std::array<nn::FeedForwardBlock<S>, kLevels> ffn;
    std::array<nn::Linear<S>, kLevels> level_proj;
    nn::Linear<S> pixel_proj;
    std::array<Mat<S>, kLevels> kv_pool;  // empty when the stage skips reduction
    std::vector<int> patch_idx;
    std::array<std::vector<int>, 2> merge_idx;

    VideoEncoder() = default;
    VideoEncoder(ParamStore<S>& ps, Rng& rng, int height_, int width_, int dim_v_, int dim_p_,
                 int heads_, std::array<int, kLevels> stage_dims_ = {32, 64, 64})
        : height(height_), width(width_), stage_dims(stage_dims_), dim_v(dim_v_), dim_p(dim_p_),
          heads(heads_) {
        const int div = patch * (1 << (kLevels - 1));
        if (height % div != 0 || width % div != 0)
            throw ConfigError("encode_video: frame size must be divisible by " +
                              std::to_string(div));
        if (height != width)
            throw ConfigError("encode_video: square frames expected");
        patch_embed = nn::Linear<S>(ps, rng, "video.patch_embed",
                                    static_cast<Eigen::Index>(patch) * patch * 3, stage_dims[0]);
        int g = height / patch;
        patch_idx = patch_gather_indices(height, width, patch);
        for (int l = 0; l < kLevels; ++l) {
            std::string name = "video.stage" + std::to_string(l + 1);
            attn[static_cast<std::size_t>(l)] =
                nn::AttentionBlock<S>(ps, rng, name + ".attn", stage_dims[static_cast<std::size_t>(l)], heads);
            ffn[static_cast<std::size_t>(l)] = nn::FeedForwardBlock<S>(
                ps, rng, name + ".ffn", stage_dims[static_cast<std::size_t>(l)],
                2 * stage_dims[static_cast<std::size_t>(l)]);
            level_proj[static_cast<std::size_t>(l)] =
                nn::Linear<S>(ps, rng, name + ".out", stage_dims[static_cast<std::size_t>(l)], dim_v);
            if (g >= 8) kv_pool[static_cast<std::size_t>(l)] = pool2x2_matrix<S>(g);
            if (l < kLevels - 1) {
                merge_idx[static_cast<std::size_t>(l)] = merge_gather_indices(g);
                merges[static_cast<std::size_t>(l)] = nn::Linear<S>(
                    ps, rng, name + ".merge", 4 * stage_dims[static_cast<std::size_t>(l)],
                    stage_dims[static_cast<std::size_t>(l) + 1]);
                g /= 2;
            }
        }
        pixel_proj = nn::Linear<S>(ps, rng, "video.pixel_proj", stage_dims[0], dim_p);
    }

    NodeP<S> run_stage(Tape<S>& t, ParamStore<S>& ps, int l, NodeP<S> tokens) const {
        NodeP<S> kv = tokens;
        const Mat<S>& pool = kv_pool[static_cast<std::size_t>(l)];
        if (pool.size() > 0) kv = ad::matmul(t.constant(pool), tokens);
        NodeP<S> x = attn[static_cast<std::size_t>(l)](t, ps, tokens, kv);
        return ffn[static_cast<std::size_t>(l)](t, ps, x);
    }

    VisualFeatures<S> operator()(Tape<S>& t, ParamStore<S>& ps,
                                 const std::vector<Image8>& frames) const {
        VisualFeatures<S> out;
        out.levels.resize(kLevels);
        out.pixel_h = height / patch;
        out.pixel_w = width / patch;
        int g = height / patch;
        for (int l = 0; l < kLevels; ++l) {
            out.grids.push_back(g);
            g /= 2;
        }
        for (const Image8& frame : frames) {
            if (frame.h != height || frame.w != width || frame.c != 3)
                throw ShapeError("encode_video: frame size mismatch with encoder config");
            NodeP<S> pixels = t.constant(frame_to_matrix<S>(frame));
            NodeP<S> cols = ad::reshape(ad::gather_rows(pixels, patch_idx),
                                        static_cast<Eigen::Index>(out.pixel_h) * out.pixel_w,
                                        static_cast<Eigen::Index>(patch) * patch * 3);
            NodeP<S> tokens = patch_embed(t, ps, cols);
            int grid = out.grids[0];
            for (int l = 0; l < kLevels; ++l) {
                tokens = run_stage(t, ps, l, tokens);
                out.levels[static_cast<std::size_t>(l)].push_back(
                    level_proj[static_cast<std::size_t>(l)](t, ps, tokens));
                if (l == 0) out.pixel.push_back(pixel_proj(t, ps, tokens));
                if (l < kLevels - 1) {
                    NodeP<S> grouped = ad::gather_rows(tokens, merge_idx[static_cast<std::size_t>(l)]);
                    NodeP<S> merged = ad::reshape(
                        grouped, static_cast<Eigen::Index>(grid / 2) * (grid / 2),
                        4 * static_cast<Eigen::Index>(stage_dims[static_cast<std::size_t>(l)]));
                    tokens = merges[static_cast<std::size_t>(l)](t, ps, merged);
                    grid /= 2;
                }
            }
        }
        return out;
    }
};

}  // namespace ssu::model
