#pragma once

// Reverse-mode automatic differentiation over dense row-major matrices.
// A Tape owns every Node it creates; creation order is a valid topological
// order, so backward() is a single reverse sweep. Gradients are allocated
// lazily: a node whose grad buffer is still empty received no contribution
// and is skipped during the sweep.

#include "ssu/common.hpp"

#include <deque>
#include <functional>
#include <memory>
#include <unordered_map>
#include <vector>

namespace ssu::ad {

template <typename S>
class Tape;

template <typename S>
struct Node {
    Mat<S> val;
    Mat<S> grad;  // empty until touched by backward
    std::function<void()> back;
    bool needs_grad = false;
    int param = -1;  // ParamStore slot for leaf parameters
    Tape<S>* tape = nullptr;

    Eigen::Index rows() const { return val.rows(); }
    Eigen::Index cols() const { return val.cols(); }

    // Accumulate into the (lazily sized) gradient buffer.
    template <typename Expr>
    void accum(const Expr& g) {
        if (grad.size() == 0) grad = Mat<S>::Zero(val.rows(), val.cols());
        grad += g;
    }
};

template <typename S>
using NodeP = Node<S>*;

// Parameter storage shared by all modules of a model. Values live here;
// tapes wrap them in leaf nodes without copying.
template <typename S>
class ParamStore {
  public:
    struct Entry {
        std::string name;
        Mat<S> value;
        Mat<S> m, v;  // Adam moments, sized on first optimizer step
    };

    int add(const std::string& name, Mat<S> value) {
        by_name_[name] = static_cast<int>(entries_.size());
        entries_.push_back(Entry{name, std::move(value), {}, {}});
        return static_cast<int>(entries_.size()) - 1;
    }

    Entry& at(int id) { return entries_[static_cast<std::size_t>(id)]; }
    const Entry& at(int id) const { return entries_[static_cast<std::size_t>(id)]; }

    int find(const std::string& name) const {
        auto it = by_name_.find(name);
        return it == by_name_.end() ? -1 : it->second;
    }

    std::size_t size() const { return entries_.size(); }

    std::size_t scalar_count() const {
        std::size_t n = 0;
        for (const auto& e : entries_) n += static_cast<std::size_t>(e.value.size());
        return n;
    }

  private:
    std::vector<Entry> entries_;
    std::unordered_map<std::string, int> by_name_;
};

template <typename S>
class Tape {
  public:
    NodeP<S> make(Mat<S> v, bool needs_grad) {
        nodes_.push_back(Node<S>{});
        Node<S>& n = nodes_.back();
        n.val = std::move(v);
        n.needs_grad = needs_grad;
        n.tape = this;
        return &n;
    }

    NodeP<S> constant(Mat<S> v) { return make(std::move(v), false); }

    NodeP<S> scalar(S v) {
        Mat<S> m(1, 1);
        m(0, 0) = v;
        return constant(std::move(m));
    }

    // Leaf carrying a stored parameter's value; memoized so each parameter
    // has at most one node per tape and its grad is the full accumulation.
    NodeP<S> leaf(ParamStore<S>& store, int id) {
        auto it = leaves_.find(id);
        if (it != leaves_.end()) return it->second;
        NodeP<S> n = make(store.at(id).value, true);
        n->param = id;
        leaves_[id] = n;
        return n;
    }

    const std::unordered_map<int, NodeP<S>>& leaves() const { return leaves_; }

    // Seeds d(root)/d(root) = 1 and sweeps the tape in reverse creation order.
    void backward(NodeP<S> root) {
        root->grad = Mat<S>::Ones(root->val.rows(), root->val.cols());
        for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) {
            Node<S>& n = *it;
            if (!n.needs_grad || n.grad.size() == 0 || !n.back) continue;
            n.back();
        }
    }

    std::size_t node_count() const { return nodes_.size(); }

  private:
    std::deque<Node<S>> nodes_;  // stable addresses
    std::unordered_map<int, NodeP<S>> leaves_;
};

namespace detail {

template <typename S>
NodeP<S> unary(NodeP<S> a, Mat<S> val, std::function<void(Node<S>&, Node<S>&)> back) {
    Tape<S>* t = a->tape;
    NodeP<S> out = t->make(std::move(val), a->needs_grad);
    if (out->needs_grad) {
        Node<S>* pa = a;
        Node<S>* po = out;
        out->back = [pa, po, back]() {
            if (pa->needs_grad) back(*po, *pa);
        };
    }
    return out;
}

template <typename S>
NodeP<S> binary(NodeP<S> a, NodeP<S> b, Mat<S> val,
                std::function<void(Node<S>&, Node<S>&, Node<S>&)> back) {
    Tape<S>* t = a->tape;
    NodeP<S> out = t->make(std::move(val), a->needs_grad || b->needs_grad);
    if (out->needs_grad) {
        Node<S>* pa = a;
        Node<S>* pb = b;
        Node<S>* po = out;
        out->back = [pa, pb, po, back]() { back(*po, *pa, *pb); };
    }
    return out;
}

inline void check(bool ok, const char* what) {
    if (!ok) throw ShapeError(what);
}

}  // namespace detail

// ---- arithmetic ----------------------------------------------------------

template <typename S>
NodeP<S> add(NodeP<S> a, NodeP<S> b) {
    detail::check(a->rows() == b->rows() && a->cols() == b->cols(), "add: shape mismatch");
    return detail::binary<S>(a, b, a->val + b->val, [](Node<S>& o, Node<S>& x, Node<S>& y) {
        if (x.needs_grad) x.accum(o.grad);
        if (y.needs_grad) y.accum(o.grad);
    });
}

// Adds a 1 x C row vector to every row of a.
template <typename S>
NodeP<S> add_rowvec(NodeP<S> a, NodeP<S> b) {
    detail::check(b->rows() == 1 && a->cols() == b->cols(), "add_rowvec: shape mismatch");
    Mat<S> v = a->val;
    v.rowwise() += b->val.row(0);
    return detail::binary<S>(a, b, std::move(v), [](Node<S>& o, Node<S>& x, Node<S>& y) {
        if (x.needs_grad) x.accum(o.grad);
        if (y.needs_grad) y.accum(o.grad.colwise().sum());
    });
}

template <typename S>
NodeP<S> sub(NodeP<S> a, NodeP<S> b) {
    detail::check(a->rows() == b->rows() && a->cols() == b->cols(), "sub: shape mismatch");
    return detail::binary<S>(a, b, a->val - b->val, [](Node<S>& o, Node<S>& x, Node<S>& y) {
        if (x.needs_grad) x.accum(o.grad);
        if (y.needs_grad) y.accum(-o.grad);
    });
}

template <typename S>
NodeP<S> matmul(NodeP<S> a, NodeP<S> b) {
    detail::check(a->cols() == b->rows(), "matmul: inner dimension mismatch");
    return detail::binary<S>(a, b, a->val * b->val, [](Node<S>& o, Node<S>& x, Node<S>& y) {
        if (x.needs_grad) x.accum(o.grad * y.val.transpose());
        if (y.needs_grad) y.accum(x.val.transpose() * o.grad);
    });
}

template <typename S>
NodeP<S> cmul(NodeP<S> a, NodeP<S> b) {
    detail::check(a->rows() == b->rows() && a->cols() == b->cols(), "cmul: shape mismatch");
    return detail::binary<S>(a, b, (a->val.array() * b->val.array()).matrix(),
                             [](Node<S>& o, Node<S>& x, Node<S>& y) {
                                 if (x.needs_grad) x.accum((o.grad.array() * y.val.array()).matrix());
                                 if (y.needs_grad) y.accum((o.grad.array() * x.val.array()).matrix());
                             });
}

// Elementwise division; for scalar (1x1) nodes this is plain scalar division.
template <typename S>
NodeP<S> cdiv(NodeP<S> a, NodeP<S> b) {
    detail::check(a->rows() == b->rows() && a->cols() == b->cols(), "cdiv: shape mismatch");
    return detail::binary<S>(a, b, (a->val.array() / b->val.array()).matrix(),
                             [](Node<S>& o, Node<S>& x, Node<S>& y) {
                                 if (x.needs_grad) x.accum((o.grad.array() / y.val.array()).matrix());
                                 if (y.needs_grad)
                                     y.accum((-o.grad.array() * x.val.array() / (y.val.array() * y.val.array())).matrix());
                             });
}

// Scales every column of a (n x c) by the matching entry of m (n x 1).
template <typename S>
NodeP<S> cmul_colvec(NodeP<S> a, NodeP<S> m) {
    detail::check(m->cols() == 1 && a->rows() == m->rows(), "cmul_colvec: shape mismatch");
    Mat<S> v = (a->val.array().colwise() * m->val.col(0).array()).matrix();
    return detail::binary<S>(a, m, std::move(v), [](Node<S>& o, Node<S>& x, Node<S>& y) {
        if (x.needs_grad) x.accum((o.grad.array().colwise() * y.val.col(0).array()).matrix());
        if (y.needs_grad) y.accum((o.grad.array() * x.val.array()).rowwise().sum().matrix());
    });
}

template <typename S>
NodeP<S> scale(NodeP<S> a, S s) {
    return detail::unary<S>(a, a->val * s, [s](Node<S>& o, Node<S>& x) { x.accum(o.grad * s); });
}

template <typename S>
NodeP<S> add_scalar(NodeP<S> a, S s) {
    return detail::unary<S>(a, (a->val.array() + s).matrix(),
                            [](Node<S>& o, Node<S>& x) { x.accum(o.grad); });
}

template <typename S>
NodeP<S> neg(NodeP<S> a) {
    return scale(a, S(-1));
}

template <typename S>
NodeP<S> transpose(NodeP<S> a) {
    return detail::unary<S>(a, a->val.transpose(),
                            [](Node<S>& o, Node<S>& x) { x.accum(o.grad.transpose()); });
}

// Row-major reinterpretation to (r x c); element count must match.
template <typename S>
NodeP<S> reshape(NodeP<S> a, Eigen::Index r, Eigen::Index c) {
    detail::check(a->val.size() == r * c, "reshape: element count mismatch");
    Mat<S> v = Eigen::Map<const Mat<S>>(a->val.data(), r, c);
    return detail::unary<S>(a, std::move(v), [](Node<S>& o, Node<S>& x) {
        x.accum(Eigen::Map<const Mat<S>>(o.grad.data(), x.val.rows(), x.val.cols()));
    });
}

// ---- nonlinearities ------------------------------------------------------

template <typename S>
NodeP<S> relu(NodeP<S> a) {
    return detail::unary<S>(a, a->val.cwiseMax(S(0)), [](Node<S>& o, Node<S>& x) {
        x.accum((o.grad.array() * (x.val.array() > S(0)).template cast<S>()).matrix());
    });
}

template <typename S>
NodeP<S> sigmoid(NodeP<S> a) {
    Mat<S> v = (S(1) / (S(1) + (-a->val.array()).exp())).matrix();
    return detail::unary<S>(a, std::move(v), [](Node<S>& o, Node<S>& x) {
        x.accum((o.grad.array() * o.val.array() * (S(1) - o.val.array())).matrix());
    });
}

template <typename S>
NodeP<S> exp(NodeP<S> a) {
    return detail::unary<S>(a, a->val.array().exp().matrix(), [](Node<S>& o, Node<S>& x) {
        x.accum((o.grad.array() * o.val.array()).matrix());
    });
}

template <typename S>
NodeP<S> log(NodeP<S> a) {
    return detail::unary<S>(a, a->val.array().log().matrix(), [](Node<S>& o, Node<S>& x) {
        x.accum((o.grad.array() / x.val.array()).matrix());
    });
}

// x^p elementwise for constant p; gradient is forced to zero when p == 0 so
// the p*x^(p-1) form cannot produce 0 * inf at x == 0.
template <typename S>
NodeP<S> pow_const(NodeP<S> a, S p) {
    Mat<S> v = a->val.array().pow(p).matrix();
    return detail::unary<S>(a, std::move(v), [p](Node<S>& o, Node<S>& x) {
        if (p == S(0)) return;
        x.accum((o.grad.array() * p * x.val.array().pow(p - S(1))).matrix());
    });
}

// ---- reductions ----------------------------------------------------------

template <typename S>
NodeP<S> sum_all(NodeP<S> a) {
    Mat<S> v(1, 1);
    v(0, 0) = a->val.sum();
    return detail::unary<S>(a, std::move(v), [](Node<S>& o, Node<S>& x) {
        x.accum(Mat<S>::Constant(x.val.rows(), x.val.cols(), o.grad(0, 0)));
    });
}

template <typename S>
NodeP<S> mean_all(NodeP<S> a) {
    S inv = S(1) / static_cast<S>(a->val.size());
    Mat<S> v(1, 1);
    v(0, 0) = a->val.sum() * inv;
    return detail::unary<S>(a, std::move(v), [inv](Node<S>& o, Node<S>& x) {
        x.accum(Mat<S>::Constant(x.val.rows(), x.val.cols(), o.grad(0, 0) * inv));
    });
}

// Mean over rows: (n x c) -> (1 x c).
template <typename S>
NodeP<S> mean_rows(NodeP<S> a) {
    S inv = S(1) / static_cast<S>(a->rows());
    Mat<S> v = a->val.colwise().mean();
    return detail::unary<S>(a, std::move(v), [inv](Node<S>& o, Node<S>& x) {
        x.accum((Mat<S>::Ones(x.val.rows(), 1) * o.grad) * inv);
    });
}

// Sum over columns: (n x c) -> (n x 1).
template <typename S>
NodeP<S> sum_cols(NodeP<S> a) {
    Mat<S> v = a->val.rowwise().sum();
    return detail::unary<S>(a, std::move(v), [](Node<S>& o, Node<S>& x) {
        x.accum(o.grad * Mat<S>::Ones(1, x.val.cols()));
    });
}

// ---- structure -----------------------------------------------------------

template <typename S>
NodeP<S> slice_rows(NodeP<S> a, Eigen::Index r0, Eigen::Index n) {
    detail::check(r0 >= 0 && r0 + n <= a->rows(), "slice_rows: out of range");
    Mat<S> v = a->val.middleRows(r0, n);
    return detail::unary<S>(a, std::move(v), [r0, n](Node<S>& o, Node<S>& x) {
        if (x.grad.size() == 0) x.grad = Mat<S>::Zero(x.val.rows(), x.val.cols());
        x.grad.middleRows(r0, n) += o.grad;
    });
}

template <typename S>
NodeP<S> slice_cols(NodeP<S> a, Eigen::Index c0, Eigen::Index n) {
    detail::check(c0 >= 0 && c0 + n <= a->cols(), "slice_cols: out of range");
    Mat<S> v = a->val.middleCols(c0, n);
    return detail::unary<S>(a, std::move(v), [c0, n](Node<S>& o, Node<S>& x) {
        if (x.grad.size() == 0) x.grad = Mat<S>::Zero(x.val.rows(), x.val.cols());
        x.grad.middleCols(c0, n) += o.grad;
    });
}

template <typename S>
NodeP<S> concat_rows(const std::vector<NodeP<S>>& parts) {
    detail::check(!parts.empty(), "concat_rows: empty list");
    Eigen::Index rows = 0, cols = parts[0]->cols();
    bool any_grad = false;
    for (auto* p : parts) {
        detail::check(p->cols() == cols, "concat_rows: column mismatch");
        rows += p->rows();
        any_grad = any_grad || p->needs_grad;
    }
    Mat<S> v(rows, cols);
    Eigen::Index r = 0;
    for (auto* p : parts) {
        v.middleRows(r, p->rows()) = p->val;
        r += p->rows();
    }
    Tape<S>* t = parts[0]->tape;
    NodeP<S> out = t->make(std::move(v), any_grad);
    if (any_grad) {
        std::vector<Node<S>*> ps(parts.begin(), parts.end());
        Node<S>* po = out;
        out->back = [ps, po]() {
            Eigen::Index r = 0;
            for (auto* p : ps) {
                if (p->needs_grad) p->accum(po->grad.middleRows(r, p->rows()));
                r += p->rows();
            }
        };
    }
    return out;
}

template <typename S>
NodeP<S> concat_cols(const std::vector<NodeP<S>>& parts) {
    detail::check(!parts.empty(), "concat_cols: empty list");
    Eigen::Index cols = 0, rows = parts[0]->rows();
    bool any_grad = false;
    for (auto* p : parts) {
        detail::check(p->rows() == rows, "concat_cols: row mismatch");
        cols += p->cols();
        any_grad = any_grad || p->needs_grad;
    }
    Mat<S> v(rows, cols);
    Eigen::Index c = 0;
    for (auto* p : parts) {
        v.middleCols(c, p->cols()) = p->val;
        c += p->cols();
    }
    Tape<S>* t = parts[0]->tape;
    NodeP<S> out = t->make(std::move(v), any_grad);
    if (any_grad) {
        std::vector<Node<S>*> ps(parts.begin(), parts.end());
        Node<S>* po = out;
        out->back = [ps, po]() {
            Eigen::Index c = 0;
            for (auto* p : ps) {
                if (p->needs_grad) p->accum(po->grad.middleCols(c, p->cols()));
                c += p->cols();
            }
        };
    }
    return out;
}

// out.row(i) = a.row(idx[i]); backward scatter-adds.
template <typename S>
NodeP<S> gather_rows(NodeP<S> a, std::vector<int> idx) {
    Mat<S> v(static_cast<Eigen::Index>(idx.size()), a->cols());
    for (std::size_t i = 0; i < idx.size(); ++i) {
        detail::check(idx[i] >= 0 && idx[i] < a->rows(), "gather_rows: index out of range");
        v.row(static_cast<Eigen::Index>(i)) = a->val.row(idx[i]);
    }
    return detail::unary<S>(a, std::move(v), [idx = std::move(idx)](Node<S>& o, Node<S>& x) {
        if (x.grad.size() == 0) x.grad = Mat<S>::Zero(x.val.rows(), x.val.cols());
        for (std::size_t i = 0; i < idx.size(); ++i)
            x.grad.row(idx[i]) += o.grad.row(static_cast<Eigen::Index>(i));
    });
}

// out(i, 0) = a(i, idx[i]); used to pick target-token probabilities.
template <typename S>
NodeP<S> pick_cols(NodeP<S> a, std::vector<int> idx) {
    detail::check(static_cast<Eigen::Index>(idx.size()) == a->rows(), "pick_cols: index count mismatch");
    Mat<S> v(a->rows(), 1);
    for (Eigen::Index i = 0; i < a->rows(); ++i) {
        detail::check(idx[static_cast<std::size_t>(i)] >= 0 && idx[static_cast<std::size_t>(i)] < a->cols(),
                      "pick_cols: index out of range");
        v(i, 0) = a->val(i, idx[static_cast<std::size_t>(i)]);
    }
    return detail::unary<S>(a, std::move(v), [idx = std::move(idx)](Node<S>& o, Node<S>& x) {
        if (x.grad.size() == 0) x.grad = Mat<S>::Zero(x.val.rows(), x.val.cols());
        for (Eigen::Index i = 0; i < x.val.rows(); ++i)
            x.grad(i, idx[static_cast<std::size_t>(i)]) += o.grad(i, 0);
    });
}

// ---- normalizations ------------------------------------------------------

template <typename S>
NodeP<S> softmax_rows(NodeP<S> a) {
    Mat<S> v(a->rows(), a->cols());
    for (Eigen::Index i = 0; i < a->rows(); ++i) {
        S mx = a->val.row(i).maxCoeff();
        Eigen::Array<S, 1, Eigen::Dynamic> e = (a->val.row(i).array() - mx).exp();
        v.row(i) = (e / e.sum()).matrix();
    }
    return detail::unary<S>(a, std::move(v), [](Node<S>& o, Node<S>& x) {
        Mat<S> g(x.val.rows(), x.val.cols());
        for (Eigen::Index i = 0; i < x.val.rows(); ++i) {
            S dot = (o.grad.row(i).array() * o.val.row(i).array()).sum();
            g.row(i) = (o.val.row(i).array() * (o.grad.row(i).array() - dot)).matrix();
        }
        x.accum(g);
    });
}

template <typename S>
NodeP<S> log_softmax_rows(NodeP<S> a) {
    Mat<S> v(a->rows(), a->cols());
    for (Eigen::Index i = 0; i < a->rows(); ++i) {
        S mx = a->val.row(i).maxCoeff();
        Eigen::Array<S, 1, Eigen::Dynamic> sh = a->val.row(i).array() - mx;
        S lse = std::log(sh.exp().sum());
        v.row(i) = (sh - lse).matrix();
    }
    return detail::unary<S>(a, std::move(v), [](Node<S>& o, Node<S>& x) {
        Mat<S> g(x.val.rows(), x.val.cols());
        for (Eigen::Index i = 0; i < x.val.rows(); ++i) {
            S gsum = o.grad.row(i).sum();
            g.row(i) = (o.grad.row(i).array() - o.val.row(i).array().exp() * gsum).matrix();
        }
        x.accum(g);
    });
}

// Row-wise layer normalization with affine parameters gamma, beta (1 x C).
template <typename S>
NodeP<S> layer_norm(NodeP<S> x, NodeP<S> gamma, NodeP<S> beta, S eps = S(1e-5)) {
    detail::check(gamma->rows() == 1 && gamma->cols() == x->cols(), "layer_norm: gamma shape");
    detail::check(beta->rows() == 1 && beta->cols() == x->cols(), "layer_norm: beta shape");
    const Eigen::Index n = x->rows(), c = x->cols();
    Mat<S> xhat(n, c);
    Mat<S> inv_std(n, 1);
    for (Eigen::Index i = 0; i < n; ++i) {
        S mu = x->val.row(i).mean();
        S var = (x->val.row(i).array() - mu).square().sum() / static_cast<S>(c);
        S is = S(1) / std::sqrt(var + eps);
        inv_std(i, 0) = is;
        xhat.row(i) = ((x->val.row(i).array() - mu) * is).matrix();
    }
    Mat<S> v = (xhat.array().rowwise() * gamma->val.row(0).array()).matrix();
    v.rowwise() += beta->val.row(0);

    Tape<S>* t = x->tape;
    bool ng = x->needs_grad || gamma->needs_grad || beta->needs_grad;
    NodeP<S> out = t->make(std::move(v), ng);
    if (ng) {
        Node<S>*px = x, *pg = gamma, *pb = beta, *po = out;
        auto xhat_s = std::make_shared<Mat<S>>(std::move(xhat));
        auto inv_s = std::make_shared<Mat<S>>(std::move(inv_std));
        out->back = [px, pg, pb, po, xhat_s, inv_s]() {
            const Mat<S>& xh = *xhat_s;
            const Eigen::Index n = xh.rows(), c = xh.cols();
            if (pb->needs_grad) pb->accum(po->grad.colwise().sum());
            if (pg->needs_grad) pg->accum((po->grad.array() * xh.array()).colwise().sum().matrix());
            if (px->needs_grad) {
                Mat<S> g(n, c);
                for (Eigen::Index i = 0; i < n; ++i) {
                    Eigen::Array<S, 1, Eigen::Dynamic> dy =
                        po->grad.row(i).array() * pg->val.row(0).array();
                    S m1 = dy.sum() / static_cast<S>(c);
                    S m2 = (dy * xh.row(i).array()).sum() / static_cast<S>(c);
                    g.row(i) = ((dy - m1 - xh.row(i).array() * m2) * (*inv_s)(i, 0)).matrix();
                }
                px->accum(g);
            }
        };
    }
    return out;
}

// y = x / max(||x||, eps) per row.
template <typename S>
NodeP<S> l2_normalize_rows(NodeP<S> a, S eps = S(1e-12)) {
    const Eigen::Index n = a->rows(), c = a->cols();
    Mat<S> v(n, c);
    Mat<S> norms(n, 1);
    for (Eigen::Index i = 0; i < n; ++i) {
        S nm = a->val.row(i).norm();
        norms(i, 0) = std::max(nm, eps);
        v.row(i) = a->val.row(i) / norms(i, 0);
    }
    auto norms_s = std::make_shared<Mat<S>>(std::move(norms));
    return detail::unary<S>(a, std::move(v), [norms_s](Node<S>& o, Node<S>& x) {
        Mat<S> g(x.val.rows(), x.val.cols());
        for (Eigen::Index i = 0; i < x.val.rows(); ++i) {
            S dot = (o.grad.row(i).array() * o.val.row(i).array()).sum();
            g.row(i) = ((o.grad.row(i).array() - o.val.row(i).array() * dot) / (*norms_s)(i, 0)).matrix();
        }
        x.accum(g);
    });
}

// Euclidean norm of each row: (n x c) -> (n x 1). Zero rows get zero
// gradient (the norm is not differentiable there).
template <typename S>
NodeP<S> l2_norm_rows(NodeP<S> a) {
    Mat<S> v(a->rows(), 1);
    for (Eigen::Index i = 0; i < a->rows(); ++i) v(i, 0) = a->val.row(i).norm();
    return detail::unary<S>(a, std::move(v), [](Node<S>& o, Node<S>& x) {
        Mat<S> g = Mat<S>::Zero(x.val.rows(), x.val.cols());
        for (Eigen::Index i = 0; i < x.val.rows(); ++i) {
            if (o.val(i, 0) > S(0)) g.row(i) = x.val.row(i) * (o.grad(i, 0) / o.val(i, 0));
        }
        x.accum(g);
    });
}

// ---- resampling ----------------------------------------------------------

// Bilinear upsampling of a (in_h*in_w) x c column-block image to
// (out_h*out_w) x c, pixel-center aligned (align_corners = false).
template <typename S>
NodeP<S> upsample_bilinear(NodeP<S> a, int in_h, int in_w, int out_h, int out_w) {
    detail::check(a->rows() == static_cast<Eigen::Index>(in_h) * in_w, "upsample_bilinear: row count");
    struct Tap {
        int src[4];
        S w[4];
    };
    auto taps = std::make_shared<std::vector<Tap>>();
    taps->resize(static_cast<std::size_t>(out_h) * out_w);
    const S sy = static_cast<S>(in_h) / static_cast<S>(out_h);
    const S sx = static_cast<S>(in_w) / static_cast<S>(out_w);
    for (int oy = 0; oy < out_h; ++oy) {
        S fy = (static_cast<S>(oy) + S(0.5)) * sy - S(0.5);
        int y0 = static_cast<int>(std::floor(fy));
        S wy = fy - static_cast<S>(y0);
        int y0c = std::min(std::max(y0, 0), in_h - 1);
        int y1c = std::min(std::max(y0 + 1, 0), in_h - 1);
        for (int ox = 0; ox < out_w; ++ox) {
            S fx = (static_cast<S>(ox) + S(0.5)) * sx - S(0.5);
            int x0 = static_cast<int>(std::floor(fx));
            S wx = fx - static_cast<S>(x0);
            int x0c = std::min(std::max(x0, 0), in_w - 1);
            int x1c = std::min(std::max(x0 + 1, 0), in_w - 1);
            Tap& tp = (*taps)[static_cast<std::size_t>(oy) * out_w + ox];
            tp.src[0] = y0c * in_w + x0c;
            tp.src[1] = y0c * in_w + x1c;
            tp.src[2] = y1c * in_w + x0c;
            tp.src[3] = y1c * in_w + x1c;
            tp.w[0] = (S(1) - wy) * (S(1) - wx);
            tp.w[1] = (S(1) - wy) * wx;
            tp.w[2] = wy * (S(1) - wx);
            tp.w[3] = wy * wx;
        }
    }
    Mat<S> v = Mat<S>::Zero(static_cast<Eigen::Index>(out_h) * out_w, a->cols());
    for (std::size_t i = 0; i < taps->size(); ++i) {
        const Tap& tp = (*taps)[i];
        for (int k = 0; k < 4; ++k)
            v.row(static_cast<Eigen::Index>(i)) += tp.w[k] * a->val.row(tp.src[k]);
    }
    return detail::unary<S>(a, std::move(v), [taps](Node<S>& o, Node<S>& x) {
        if (x.grad.size() == 0) x.grad = Mat<S>::Zero(x.val.rows(), x.val.cols());
        for (std::size_t i = 0; i < taps->size(); ++i) {
            const Tap& tp = (*taps)[i];
            for (int k = 0; k < 4; ++k)
                x.grad.row(tp.src[k]) += tp.w[k] * o.grad.row(static_cast<Eigen::Index>(i));
        }
    });
}

}  // namespace ssu::ad
