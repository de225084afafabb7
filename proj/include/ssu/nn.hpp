#pragma once

// Layer building blocks on top of the autodiff tape: linear maps, layer
// norm, multi-head attention, post-norm transformer sub-blocks, sinusoidal
// positional encodings, weight init and the Adam optimizer.

#include "ssu/autodiff.hpp"

#include <cmath>
#include <string>
#include <vector>

namespace ssu::nn {

using ad::NodeP;
using ad::ParamStore;
using ad::Tape;

template <typename S>
Mat<S> init_normal(Rng& rng, Eigen::Index r, Eigen::Index c, double stddev = 0.02) {
    Mat<S> m(r, c);
    for (Eigen::Index i = 0; i < r; ++i)
        for (Eigen::Index j = 0; j < c; ++j) m(i, j) = static_cast<S>(rng.normal() * stddev);
    return m;
}

template <typename S>
struct Linear {
    int w = -1, b = -1;

    Linear() = default;
    Linear(ParamStore<S>& ps, Rng& rng, const std::string& name, Eigen::Index d_in,
           Eigen::Index d_out) {
        w = ps.add(name + ".w", init_normal<S>(rng, d_in, d_out));
        b = ps.add(name + ".b", Mat<S>::Zero(1, d_out));
    }

    NodeP<S> operator()(Tape<S>& t, ParamStore<S>& ps, NodeP<S> x) const {
        return ad::add_rowvec(ad::matmul(x, t.leaf(ps, w)), t.leaf(ps, b));
    }
};

template <typename S>
struct LayerNorm {
    int gamma = -1, beta = -1;

    LayerNorm() = default;
    LayerNorm(ParamStore<S>& ps, const std::string& name, Eigen::Index d) {
        gamma = ps.add(name + ".gamma", Mat<S>::Ones(1, d));
        beta = ps.add(name + ".beta", Mat<S>::Zero(1, d));
    }

    NodeP<S> operator()(Tape<S>& t, ParamStore<S>& ps, NodeP<S> x) const {
        return ad::layer_norm(x, t.leaf(ps, gamma), t.leaf(ps, beta));
    }
};

// Plain scaled dot-product attention: softmax(Q K^T * scale) V, with an
// optional additive mask on the score matrix (e.g. a causal mask).
template <typename S>
NodeP<S> attention(NodeP<S> q, NodeP<S> k, NodeP<S> v, S scale,
                   const Mat<S>* additive_mask = nullptr) {
    if (q->cols() != k->cols()) throw ShapeError("attention: query/key dim mismatch");
    if (k->rows() != v->rows()) throw ShapeError("attention: key/value count mismatch");
    NodeP<S> scores = ad::scale(ad::matmul(q, ad::transpose(k)), scale);
    if (additive_mask) {
        if (additive_mask->rows() != scores->rows() || additive_mask->cols() != scores->cols())
            throw ShapeError("attention: mask shape mismatch");
        scores = ad::add(scores, scores->tape->constant(*additive_mask));
    }
    return ad::matmul(ad::softmax_rows(scores), v);
}

// Multi-head attention with learned Q/K/V/output projections. Head count
// must divide the model dimension.
template <typename S>
struct MultiHeadAttention {
    Linear<S> wq, wk, wv, wo;
    int heads = 1;
    Eigen::Index dim = 0;

    MultiHeadAttention() = default;
    MultiHeadAttention(ParamStore<S>& ps, Rng& rng, const std::string& name, Eigen::Index d,
                       int h)
        : wq(ps, rng, name + ".q", d, d),
          wk(ps, rng, name + ".k", d, d),
          wv(ps, rng, name + ".v", d, d),
          wo(ps, rng, name + ".o", d, d),
          heads(h),
          dim(d) {
        if (d % h != 0) throw ConfigError("attention dim not divisible by head count");
    }

    NodeP<S> operator()(Tape<S>& t, ParamStore<S>& ps, NodeP<S> q_in, NodeP<S> kv_in,
                        const Mat<S>* additive_mask = nullptr) const {
        NodeP<S> q = wq(t, ps, q_in);
        NodeP<S> k = wk(t, ps, kv_in);
        NodeP<S> v = wv(t, ps, kv_in);
        const Eigen::Index dh = dim / heads;
        const S scale = S(1) / static_cast<S>(std::sqrt(static_cast<double>(dh)));
        std::vector<NodeP<S>> ctx;
        ctx.reserve(static_cast<std::size_t>(heads));
        for (int h = 0; h < heads; ++h) {
            NodeP<S> qh = ad::slice_cols(q, h * dh, dh);
            NodeP<S> kh = ad::slice_cols(k, h * dh, dh);
            NodeP<S> vh = ad::slice_cols(v, h * dh, dh);
            ctx.push_back(attention(qh, kh, vh, scale, additive_mask));
        }
        NodeP<S> cat = heads == 1 ? ctx[0] : ad::concat_cols(ctx);
        return wo(t, ps, cat);
    }
};

// Post-norm residual attention sub-block: LN(x + MHA(x, kv)).
template <typename S>
struct AttentionBlock {
    MultiHeadAttention<S> mha;
    LayerNorm<S> norm;

    AttentionBlock() = default;
    AttentionBlock(ParamStore<S>& ps, Rng& rng, const std::string& name, Eigen::Index d, int h)
        : mha(ps, rng, name + ".mha", d, h), norm(ps, name + ".ln", d) {}

    NodeP<S> operator()(Tape<S>& t, ParamStore<S>& ps, NodeP<S> x, NodeP<S> kv,
                        const Mat<S>* additive_mask = nullptr) const {
        return norm(t, ps, ad::add(x, mha(t, ps, x, kv, additive_mask)));
    }
};

// Post-norm residual feed-forward sub-block: LN(x + W2 relu(W1 x)).
template <typename S>
struct FeedForwardBlock {
    Linear<S> in, out;
    LayerNorm<S> norm;

    FeedForwardBlock() = default;
    FeedForwardBlock(ParamStore<S>& ps, Rng& rng, const std::string& name, Eigen::Index d,
                     Eigen::Index hidden) {
        in = Linear<S>(ps, rng, name + ".ff1", d, hidden);
        out = Linear<S>(ps, rng, name + ".ff2", hidden, d);
        norm = LayerNorm<S>(ps, name + ".ln", d);
    }

    NodeP<S> operator()(Tape<S>& t, ParamStore<S>& ps, NodeP<S> x) const {
        return norm(t, ps, ad::add(x, out(t, ps, ad::relu(in(t, ps, x)))));
    }
};

// Sinusoidal positional encoding over sequence positions, one row per step.
template <typename S>
Mat<S> positional_encoding(Eigen::Index n, Eigen::Index d) {
    Mat<S> pe(n, d);
    for (Eigen::Index pos = 0; pos < n; ++pos) {
        for (Eigen::Index i = 0; i < d; ++i) {
            double angle = static_cast<double>(pos) /
                           std::pow(10000.0, 2.0 * static_cast<double>(i / 2) / static_cast<double>(d));
            pe(pos, i) = static_cast<S>((i % 2 == 0) ? std::sin(angle) : std::cos(angle));
        }
    }
    return pe;
}

// 2-D positional encoding for an h x w token grid: first half of the
// channels encodes the row index, second half the column index.
template <typename S>
Mat<S> positional_encoding_2d(int h, int w, Eigen::Index d) {
    Eigen::Index half = d / 2;
    Mat<S> row_pe = positional_encoding<S>(h, half);
    Mat<S> col_pe = positional_encoding<S>(w, d - half);
    Mat<S> pe(static_cast<Eigen::Index>(h) * w, d);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            pe.block(static_cast<Eigen::Index>(y) * w + x, 0, 1, half) = row_pe.row(y);
            pe.block(static_cast<Eigen::Index>(y) * w + x, half, 1, d - half) = col_pe.row(x);
        }
    return pe;
}

// Upper-triangular -1e9 mask that blanks attention to future positions.
template <typename S>
Mat<S> causal_mask(Eigen::Index n) {
    Mat<S> m = Mat<S>::Zero(n, n);
    for (Eigen::Index i = 0; i < n; ++i)
        for (Eigen::Index j = i + 1; j < n; ++j) m(i, j) = S(-1e9);
    return m;
}

// ---- optimizer -----------------------------------------------------------

template <typename S>
struct GradMap {
    std::vector<Mat<S>> g;

    void ensure(const ParamStore<S>& ps) { g.resize(ps.size()); }

    void accumulate(const Tape<S>& tape) {
        for (const auto& [id, node] : tape.leaves()) {
            if (node->grad.size() == 0) continue;
            auto& slot = g[static_cast<std::size_t>(id)];
            if (slot.size() == 0)
                slot = node->grad;
            else
                slot += node->grad;
        }
    }

    void scale_all(S s) {
        for (auto& m : g)
            if (m.size() > 0) m *= s;
    }

    double global_norm() const {
        double sq = 0;
        for (const auto& m : g)
            if (m.size() > 0) sq += static_cast<double>(m.template cast<double>().squaredNorm());
        return std::sqrt(sq);
    }

    void clear() {
        for (auto& m : g) m.resize(0, 0);
    }
};

template <typename S>
class Adam {
  public:
    Adam(double lr, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8)
        : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {}

    // Applies one update; grads may have empty slots (parameters untouched
    // by the step), which are skipped.
    void step(ParamStore<S>& ps, GradMap<S>& grads, double clip_norm = 0.0) {
        ++t_;
        if (clip_norm > 0.0) {
            double gn = grads.global_norm();
            if (gn > clip_norm) grads.scale_all(static_cast<S>(clip_norm / gn));
        }
        const double bc1 = 1.0 - std::pow(beta1_, t_);
        const double bc2 = 1.0 - std::pow(beta2_, t_);
        for (std::size_t i = 0; i < ps.size(); ++i) {
            Mat<S>& g = grads.g[i];
            if (g.size() == 0) continue;
            auto& e = ps.at(static_cast<int>(i));
            if (e.m.size() == 0) {
                e.m = Mat<S>::Zero(e.value.rows(), e.value.cols());
                e.v = Mat<S>::Zero(e.value.rows(), e.value.cols());
            }
            e.m = static_cast<S>(beta1_) * e.m + static_cast<S>(1.0 - beta1_) * g;
            e.v = (static_cast<S>(beta2_) * e.v.array() +
                   static_cast<S>(1.0 - beta2_) * g.array().square())
                      .matrix();
            Eigen::Array<S, Eigen::Dynamic, Eigen::Dynamic> mhat = e.m.array() / static_cast<S>(bc1);
            Eigen::Array<S, Eigen::Dynamic, Eigen::Dynamic> vhat = e.v.array() / static_cast<S>(bc2);
            e.value.array() -= static_cast<S>(lr_) * mhat / (vhat.sqrt() + static_cast<S>(eps_));
        }
    }

    long step_count() const { return t_; }
    void set_step_count(long t) { t_ = t; }
    double learning_rate() const { return lr_; }

  private:
    double lr_, beta1_, beta2_, eps_;
    long t_ = 0;
};

}  // namespace ssu::nn
