#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <string>
#include <vector>

#include "tensor.hpp"

namespace sas {

namespace kern {

// C[m x n] (+)= A[m x k] * B[k x n]
template <class T>
void mm_nn(const T* a, const T* b, T* c, std::size_t m, std::size_t k, std::size_t n, bool acc) {
    for (std::size_t i = 0; i < m; ++i) {
        T* crow = c + i * n;
        if (!acc) std::fill(crow, crow + n, T(0));
        const T* arow = a + i * k;
        for (std::size_t p = 0; p < k; ++p) {
            T s = arow[p];
            const T* brow = b + p * n;
            for (std::size_t j = 0; j < n; ++j) crow[j] += s * brow[j];
        }
    }
}

// C[m x n] (+)= A[m x k] * B[n x k]^T
template <class T>
void mm_nt(const T* a, const T* b, T* c, std::size_t m, std::size_t k, std::size_t n, bool acc) {
    for (std::size_t i = 0; i < m; ++i) {
        const T* arow = a + i * k;
        T* crow = c + i * n;
        for (std::size_t j = 0; j < n; ++j) {
            const T* brow = b + j * k;
            T s = 0;
            for (std::size_t p = 0; p < k; ++p) s += arow[p] * brow[p];
            crow[j] = acc ? crow[j] + s : s;
        }
    }
}

// C[k x n] (+)= A[m x k]^T * B[m x n]
template <class T>
void mm_tn(const T* a, const T* b, T* c, std::size_t m, std::size_t k, std::size_t n, bool acc) {
    if (!acc) std::fill(c, c + k * n, T(0));
    for (std::size_t i = 0; i < m; ++i) {
        const T* arow = a + i * k;
        const T* brow = b + i * n;
        for (std::size_t p = 0; p < k; ++p) {
            T s = arow[p];
            T* crow = c + p * n;
            for (std::size_t j = 0; j < n; ++j) crow[j] += s * brow[j];
        }
    }
}

}  // namespace kern

// Reverse-mode tape. Ops are recorded in construction order whenever an input
// requires a gradient; backward replays them in exact reverse order. A graph
// belongs to one worker and one forward pass; call clear() (or use a fresh
// graph) before reusing parameters in another pass.
template <class T>
class Graph {
  public:
    Graph() = default;
    Graph(const Graph&) = delete;
    Graph& operator=(const Graph&) = delete;

    std::size_t op_count() const { return tape_.size(); }

    void clear() {
        tape_.clear();
        backward_done_ = false;
    }

    // ---- ops ----

    Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b) {
        require_rank2(a, "matmul lhs");
        require_rank2(b, "matmul rhs");
        if (a.cols() != b.rows())
            throw DimensionError("matmul: inner extents differ: " + shape_str(a.shape()) +
                                 " vs " + shape_str(b.shape()));
        std::size_t m = a.rows(), k = a.cols(), n = b.cols();
        Tensor<T> out = Tensor<T>::zeros({m, n});
        kern::mm_nn(a.data(), b.data(), out.data(), m, k, n, false);
        if (wants_grad(a, b)) {
            record(out, [a, b, out, m, k, n] {
                const T* go = out.storage()->grad.data();
                if (a.requires_grad()) {
                    auto& ga = grad_buf(a);
                    kern::mm_nt(go, b.data(), ga.data(), m, n, k, true);  // dA = dC * B^T
                }
                if (b.requires_grad()) {
                    auto& gb = grad_buf(b);
                    kern::mm_tn(a.data(), go, gb.data(), m, k, n, true);  // dB = A^T * dC
                }
            });
        }
        return out;
    }

    // a * b^T with b stored row-major [n x k]; avoids materializing transposes.
    Tensor<T> matmul_nt(const Tensor<T>& a, const Tensor<T>& b) {
        require_rank2(a, "matmul_nt lhs");
        require_rank2(b, "matmul_nt rhs");
        if (a.cols() != b.cols())
            throw DimensionError("matmul_nt: inner extents differ: " + shape_str(a.shape()) +
                                 " vs " + shape_str(b.shape()));
        std::size_t m = a.rows(), k = a.cols(), n = b.rows();
        Tensor<T> out = Tensor<T>::zeros({m, n});
        kern::mm_nt(a.data(), b.data(), out.data(), m, k, n, false);
        if (wants_grad(a, b)) {
            record(out, [a, b, out, m, k, n] {
                const T* go = out.storage()->grad.data();
                if (a.requires_grad()) {
                    auto& ga = grad_buf(a);
                    kern::mm_nn(go, b.data(), ga.data(), m, n, k, true);  // dA = dC * B
                }
                if (b.requires_grad()) {
                    auto& gb = grad_buf(b);
                    kern::mm_tn(go, a.data(), gb.data(), m, n, k, true);  // dB = dC^T * A
                }
            });
        }
        return out;
    }

    // Elementwise sum; b may also be a vector broadcast over the rows of
    // matrix a, in which case its gradient sums over the broadcast axis.
    Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
        bool broadcast = b.rank() == 1 && a.rank() == 2 && b.numel() == a.cols();
        if (!broadcast && !a.same_shape(b))
            throw DimensionError("add: incompatible shapes " + shape_str(a.shape()) + " vs " +
                                 shape_str(b.shape()));
        Tensor<T> out = a.clone();
        out.set_requires_grad(false);
        if (broadcast) {
            std::size_t r = a.rows(), c = a.cols();
            T* o = out.data();
            const T* v = b.data();
            for (std::size_t i = 0; i < r; ++i)
                for (std::size_t j = 0; j < c; ++j) o[i * c + j] += v[j];
        } else {
            T* o = out.data();
            const T* v = b.data();
            for (std::size_t i = 0; i < out.numel(); ++i) o[i] += v[i];
        }
        if (wants_grad(a, b)) {
            record(out, [a, b, out, broadcast] {
                const auto& go = out.storage()->grad;
                if (a.requires_grad()) {
                    auto& ga = grad_buf(a);
                    for (std::size_t i = 0; i < go.size(); ++i) ga[i] += go[i];
                }
                if (b.requires_grad()) {
                    auto& gb = grad_buf(b);
                    if (broadcast) {
                        std::size_t c = b.numel();
                        for (std::size_t i = 0; i < go.size(); ++i) gb[i % c] += go[i];
                    } else {
                        for (std::size_t i = 0; i < go.size(); ++i) gb[i] += go[i];
                    }
                }
            });
        }
        return out;
    }

    Tensor<T> relu(const Tensor<T>& a) {
        Tensor<T> out = a.clone();
        out.set_requires_grad(false);
        for (std::size_t i = 0; i < out.numel(); ++i)
            if (out.data()[i] < T(0)) out.data()[i] = T(0);
        if (wants_grad(a)) {
            record(out, [a, out] {
                const auto& go = out.storage()->grad;
                auto& ga = grad_buf(a);
                const T* x = a.data();
                // subgradient at 0 is 0
                for (std::size_t i = 0; i < go.size(); ++i)
                    if (x[i] > T(0)) ga[i] += go[i];
            });
        }
        return out;
    }

    Tensor<T> gelu(const Tensor<T>& a) {
        Tensor<T> out = a.clone();
        out.set_requires_grad(false);
        T* o = out.data();
        for (std::size_t i = 0; i < out.numel(); ++i) {
            double x = static_cast<double>(o[i]);
            o[i] = static_cast<T>(0.5 * x * (1.0 + std::erf(x * 0.70710678118654752440)));
        }
        if (wants_grad(a)) {
            record(out, [a, out] {
                const auto& go = out.storage()->grad;
                auto& ga = grad_buf(a);
                const T* x = a.data();
                for (std::size_t i = 0; i < go.size(); ++i) {
                    double v = static_cast<double>(x[i]);
                    double cdf = 0.5 * (1.0 + std::erf(v * 0.70710678118654752440));
                    double pdf = 0.39894228040143267794 * std::exp(-0.5 * v * v);
                    ga[i] += go[i] * static_cast<T>(cdf + v * pdf);
                }
            });
        }
        return out;
    }

    // Row-wise layer norm with affine; full gradient through mean and
    // variance. x is [n x d], gamma/beta are [d].
    Tensor<T> layer_norm(const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta,
                         T eps) {
        require_rank2(x, "layer_norm input");
        std::size_t n = x.rows(), d = x.cols();
        if (gamma.numel() != d || beta.numel() != d)
            throw DimensionError("layer_norm: affine params " + shape_str(gamma.shape()) + "/" +
                                 shape_str(beta.shape()) + " do not match width " +
                                 std::to_string(d));
        Tensor<T> out = Tensor<T>::zeros({n, d});
        auto xhat = std::make_shared<std::vector<T>>(n * d);
        auto inv_std = std::make_shared<std::vector<T>>(n);
        const T* xp = x.data();
        const T* g = gamma.data();
        const T* bt = beta.data();
        T* o = out.data();
        for (std::size_t i = 0; i < n; ++i) {
            const T* row = xp + i * d;
            T mean = 0;
            for (std::size_t j = 0; j < d; ++j) mean += row[j];
            mean /= static_cast<T>(d);
            T var = 0;
            for (std::size_t j = 0; j < d; ++j) {
                T c = row[j] - mean;
                var += c * c;
            }
            var /= static_cast<T>(d);
            T istd = T(1) / std::sqrt(var + eps);
            (*inv_std)[i] = istd;
            for (std::size_t j = 0; j < d; ++j) {
                T h = (row[j] - mean) * istd;
                (*xhat)[i * d + j] = h;
                o[i * d + j] = h * g[j] + bt[j];
            }
        }
        if (wants_grad(x, gamma, beta)) {
            record(out, [x, gamma, beta, out, xhat, inv_std, n, d] {
                const T* go = out.storage()->grad.data();
                const T* h = xhat->data();
                if (gamma.requires_grad()) {
                    auto& gg = grad_buf(gamma);
                    for (std::size_t i = 0; i < n; ++i)
                        for (std::size_t j = 0; j < d; ++j) gg[j] += go[i * d + j] * h[i * d + j];
                }
                if (beta.requires_grad()) {
                    auto& gb = grad_buf(beta);
                    for (std::size_t i = 0; i < n; ++i)
                        for (std::size_t j = 0; j < d; ++j) gb[j] += go[i * d + j];
                }
                if (x.requires_grad()) {
                    auto& gx = grad_buf(x);
                    const T* g = gamma.data();
                    for (std::size_t i = 0; i < n; ++i) {
                        T sum_gy = 0, sum_gyh = 0;
                        for (std::size_t j = 0; j < d; ++j) {
                            T gy = go[i * d + j] * g[j];
                            sum_gy += gy;
                            sum_gyh += gy * h[i * d + j];
                        }
                        T istd = (*inv_std)[i];
                        T inv_d = T(1) / static_cast<T>(d);
                        for (std::size_t j = 0; j < d; ++j) {
                            T gy = go[i * d + j] * g[j];
                            gx[i * d + j] +=
                                istd * (gy - sum_gy * inv_d - h[i * d + j] * sum_gyh * inv_d);
                        }
                    }
                }
            });
        }
        return out;
    }

    // Mean over rows of -log softmax(logits)[target]; numerically stabilized
    // by max subtraction. Returns a scalar.
    Tensor<T> softmax_cross_entropy(const Tensor<T>& logits, const std::vector<int>& targets) {
        require_rank2(logits, "softmax_cross_entropy logits");
        std::size_t n = logits.rows(), k = logits.cols();
        if (targets.size() != n)
            throw DimensionError("softmax_cross_entropy: " + std::to_string(targets.size()) +
                                 " targets for " + std::to_string(n) + " rows");
        for (int t : targets)
            if (t < 0 || static_cast<std::size_t>(t) >= k)
                throw IndexError("softmax_cross_entropy: target " + std::to_string(t) +
                                 " out of range [0," + std::to_string(k) + ")");
        auto probs = std::make_shared<std::vector<T>>(n * k);
        const T* lp = logits.data();
        double loss = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            const T* row = lp + i * k;
            T mx = row[0];
            for (std::size_t j = 1; j < k; ++j) mx = std::max(mx, row[j]);
            double denom = 0.0;
            for (std::size_t j = 0; j < k; ++j)
                denom += std::exp(static_cast<double>(row[j] - mx));
            double log_denom = std::log(denom);
            for (std::size_t j = 0; j < k; ++j)
                (*probs)[i * k + j] =
                    static_cast<T>(std::exp(static_cast<double>(row[j] - mx)) / denom);
            loss -= static_cast<double>(row[targets[i]] - mx) - log_denom;
        }
        Tensor<T> out = Tensor<T>::scalar(static_cast<T>(loss / static_cast<double>(n)));
        if (wants_grad(logits)) {
            auto tg = std::make_shared<std::vector<int>>(targets);
            record(out, [logits, out, probs, tg, n, k] {
                T gl = out.storage()->grad[0];
                auto& g = grad_buf(logits);
                T inv_n = T(1) / static_cast<T>(n);
                for (std::size_t i = 0; i < n; ++i) {
                    for (std::size_t j = 0; j < k; ++j) {
                        T p = (*probs)[i * k + j];
                        if (static_cast<std::size_t>((*tg)[i]) == j) p -= T(1);
                        g[i * k + j] += gl * p * inv_n;
                    }
                }
            });
        }
        return out;
    }

    // Batched multi-head self-attention core. q/k/v are [B*n x d] with n
    // tokens per image; attention is confined to each image's n rows. Returns
    // the concatenated per-head context, [B*n x d] (before output projection).
    // If probs_out is given it receives the softmax matrix, [B*heads*n x n].
    Tensor<T> multihead_attention(const Tensor<T>& q, const Tensor<T>& k, const Tensor<T>& v,
                                  std::size_t tokens, std::size_t heads,
                                  Tensor<T>* probs_out = nullptr) {
        require_rank2(q, "attention q");
        if (!q.same_shape(k) || !q.same_shape(v))
            throw DimensionError("attention: q/k/v shapes differ: " + shape_str(q.shape()) +
                                 " " + shape_str(k.shape()) + " " + shape_str(v.shape()));
        std::size_t rows = q.rows(), d = q.cols();
        if (tokens == 0 || rows % tokens != 0)
            throw DimensionError("attention: row count " + std::to_string(rows) +
                                 " not a multiple of tokens per image " + std::to_string(tokens));
        if (heads == 0 || d % heads != 0)
            throw DimensionError("attention: width " + std::to_string(d) +
                                 " not divisible by heads " + std::to_string(heads));
        std::size_t batch = rows / tokens, dh = d / heads, n = tokens;
        T scale = static_cast<T>(1.0 / std::sqrt(static_cast<double>(dh)));
        auto probs = std::make_shared<std::vector<T>>(batch * heads * n * n);
        Tensor<T> out = Tensor<T>::zeros({rows, d});

        std::vector<T> qh(n * dh), kh(n * dh), vh(n * dh), scores(n * n), ctx(n * dh);
        for (std::size_t b = 0; b < batch; ++b) {
            for (std::size_t h = 0; h < heads; ++h) {
                gather_head(q.data(), qh.data(), b, h, n, d, dh);
                gather_head(k.data(), kh.data(), b, h, n, d, dh);
                gather_head(v.data(), vh.data(), b, h, n, d, dh);
                kern::mm_nt(qh.data(), kh.data(), scores.data(), n, dh, n, false);
                T* prob = probs->data() + (b * heads + h) * n * n;
                for (std::size_t i = 0; i < n; ++i) {
                    T* srow = scores.data() + i * n;
                    T mx = srow[0] * scale;
                    for (std::size_t j = 0; j < n; ++j) {
                        srow[j] *= scale;
                        mx = std::max(mx, srow[j]);
                    }
                    double denom = 0.0;
                    for (std::size_t j = 0; j < n; ++j)
                        denom += std::exp(static_cast<double>(srow[j] - mx));
                    for (std::size_t j = 0; j < n; ++j)
                        prob[i * n + j] =
                            static_cast<T>(std::exp(static_cast<double>(srow[j] - mx)) / denom);
                }
                kern::mm_nn(prob, vh.data(), ctx.data(), n, n, dh, false);
                scatter_head(ctx.data(), out.data(), b, h, n, d, dh, false);
            }
        }
        if (probs_out)
            *probs_out = Tensor<T>::from({batch * heads * n, n},
                                         std::vector<T>(probs->begin(), probs->end()));
        if (wants_grad(q, k, v)) {
            record(out, [q, k, v, out, probs, batch, heads, n, d, dh, scale] {
                const T* go = out.storage()->grad.data();
                std::vector<T> qh(n * dh), kh(n * dh), vh(n * dh), dctx(n * dh);
                std::vector<T> dp(n * n), ds(n * n), dq(n * dh), dk(n * dh), dv(n * dh);
                auto& gq = grad_buf(q);
                auto& gk = grad_buf(k);
                auto& gv = grad_buf(v);
                for (std::size_t b = 0; b < batch; ++b) {
                    for (std::size_t h = 0; h < heads; ++h) {
                        gather_head(q.data(), qh.data(), b, h, n, d, dh);
                        gather_head(k.data(), kh.data(), b, h, n, d, dh);
                        gather_head(v.data(), vh.data(), b, h, n, d, dh);
                        gather_head(go, dctx.data(), b, h, n, d, dh);
                        const T* prob = probs->data() + (b * heads + h) * n * n;
                        kern::mm_tn(prob, dctx.data(), dv.data(), n, n, dh, false);
                        kern::mm_nt(dctx.data(), vh.data(), dp.data(), n, dh, n, false);
                        for (std::size_t i = 0; i < n; ++i) {
                            T dot = 0;
                            for (std::size_t j = 0; j < n; ++j)
                                dot += dp[i * n + j] * prob[i * n + j];
                            for (std::size_t j = 0; j < n; ++j)
                                ds[i * n + j] = prob[i * n + j] * (dp[i * n + j] - dot) * scale;
                        }
                        kern::mm_nn(ds.data(), kh.data(), dq.data(), n, n, dh, false);
                        kern::mm_tn(ds.data(), qh.data(), dk.data(), n, n, dh, false);
                        if (q.requires_grad()) scatter_head_acc(dq.data(), gq.data(), b, h, n, d, dh);
                        if (k.requires_grad()) scatter_head_acc(dk.data(), gk.data(), b, h, n, d, dh);
                        if (v.requires_grad()) scatter_head_acc(dv.data(), gv.data(), b, h, n, d, dh);
                    }
                }
            });
        }
        return out;
    }

    // Insert one copy of token row `tok` before every group of `per_image`
    // rows: [B*p x d] -> [B*(p+1) x d].
    Tensor<T> prepend_token(const Tensor<T>& tokens, const Tensor<T>& tok, std::size_t per_image) {
        require_rank2(tokens, "prepend_token input");
        std::size_t d = tokens.cols();
        if (tok.numel() != d)
            throw DimensionError("prepend_token: token width " + shape_str(tok.shape()) +
                                 " does not match " + std::to_string(d));
        if (per_image == 0 || tokens.rows() % per_image != 0)
            throw DimensionError("prepend_token: rows not a multiple of per_image");
        std::size_t batch = tokens.rows() / per_image, np = per_image + 1;
        Tensor<T> out = Tensor<T>::zeros({batch * np, d});
        for (std::size_t b = 0; b < batch; ++b) {
            std::copy(tok.data(), tok.data() + d, out.data() + b * np * d);
            std::copy(tokens.data() + b * per_image * d, tokens.data() + (b + 1) * per_image * d,
                      out.data() + (b * np + 1) * d);
        }
        if (wants_grad(tokens, tok)) {
            record(out, [tokens, tok, out, per_image, batch, d] {
                std::size_t np = per_image + 1;
                const T* go = out.storage()->grad.data();
                if (tok.requires_grad()) {
                    auto& gt = grad_buf(tok);
                    for (std::size_t b = 0; b < batch; ++b)
                        for (std::size_t j = 0; j < d; ++j) gt[j] += go[b * np * d + j];
                }
                if (tokens.requires_grad()) {
                    auto& g = grad_buf(tokens);
                    for (std::size_t b = 0; b < batch; ++b)
                        for (std::size_t i = 0; i < per_image * d; ++i)
                            g[b * per_image * d + i] += go[(b * np + 1) * d + i];
                }
            });
        }
        return out;
    }

    // x is [B*n x d], pos is [n x d]; adds pos to every image block. The
    // positional gradient sums over the batch.
    Tensor<T> add_positional(const Tensor<T>& x, const Tensor<T>& pos, std::size_t per_image) {
        require_rank2(x, "add_positional input");
        if (pos.rank() != 2 || pos.rows() != per_image || pos.cols() != x.cols())
            throw DimensionError("add_positional: positional table " + shape_str(pos.shape()) +
                                 " does not match tokens " + shape_str(x.shape()));
        if (x.rows() % per_image != 0)
            throw DimensionError("add_positional: rows not a multiple of per_image");
        std::size_t batch = x.rows() / per_image, block = per_image * x.cols();
        Tensor<T> out = x.clone();
        out.set_requires_grad(false);
        for (std::size_t b = 0; b < batch; ++b)
            for (std::size_t i = 0; i < block; ++i) out.data()[b * block + i] += pos.data()[i];
        if (wants_grad(x, pos)) {
            record(out, [x, pos, out, batch, block] {
                const T* go = out.storage()->grad.data();
                if (x.requires_grad()) {
                    auto& gx = grad_buf(x);
                    for (std::size_t i = 0; i < batch * block; ++i) gx[i] += go[i];
                }
                if (pos.requires_grad()) {
                    auto& gp = grad_buf(pos);
                    for (std::size_t b = 0; b < batch; ++b)
                        for (std::size_t i = 0; i < block; ++i) gp[i] += go[b * block + i];
                }
            });
        }
        return out;
    }

    // Extract row `index` of every image block: [B*n x d] -> [B x d].
    Tensor<T> take_token(const Tensor<T>& x, std::size_t per_image, std::size_t index) {
        require_rank2(x, "take_token input");
        if (per_image == 0 || x.rows() % per_image != 0 || index >= per_image)
            throw DimensionError("take_token: bad per_image/index for " + shape_str(x.shape()));
        std::size_t batch = x.rows() / per_image, d = x.cols();
        Tensor<T> out = Tensor<T>::zeros({batch, d});
        for (std::size_t b = 0; b < batch; ++b)
            std::copy(x.data() + (b * per_image + index) * d, x.data() + (b * per_image + index + 1) * d,
                      out.data() + b * d);
        if (wants_grad(x)) {
            record(out, [x, out, per_image, index, batch, d] {
                const T* go = out.storage()->grad.data();
                auto& gx = grad_buf(x);
                for (std::size_t b = 0; b < batch; ++b)
                    for (std::size_t j = 0; j < d; ++j)
                        gx[(b * per_image + index) * d + j] += go[b * d + j];
            });
        }
        return out;
    }

    // Broadcast a vector to `rows` identical rows; gradient is the column sum.
    Tensor<T> tile_rows(const Tensor<T>& v, std::size_t rows) {
        std::size_t d = v.numel();
        Tensor<T> out = Tensor<T>::zeros({rows, d});
        for (std::size_t i = 0; i < rows; ++i)
            std::copy(v.data(), v.data() + d, out.data() + i * d);
        if (wants_grad(v)) {
            record(out, [v, out, rows, d] {
                const T* go = out.storage()->grad.data();
                auto& gv = grad_buf(v);
                for (std::size_t i = 0; i < rows; ++i)
                    for (std::size_t j = 0; j < d; ++j) gv[j] += go[i * d + j];
            });
        }
        return out;
    }

    Tensor<T> sum(const Tensor<T>& a) {
        double s = 0.0;
        for (std::size_t i = 0; i < a.numel(); ++i) s += static_cast<double>(a.data()[i]);
        Tensor<T> out = Tensor<T>::scalar(static_cast<T>(s));
        if (wants_grad(a)) {
            record(out, [a, out] {
                T g = out.storage()->grad[0];
                auto& ga = grad_buf(a);
                for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += g;
            });
        }
        return out;
    }

    // Populate d(loss)/d(t) for every requires_grad tensor reachable from
    // loss. Calling backward twice on the same graph is an error; clear()
    // first (training steps use a fresh graph per step).
    void backward(const Tensor<T>& loss) {
        if (!loss.defined() || !loss.is_scalar())
            throw ContractError("backward: loss must be a defined scalar tensor");
        if (backward_done_)
            throw ContractError("backward: already called on this graph; clear() before reuse");
        backward_done_ = true;
        auto s = loss.storage();
        if (s->grad.empty()) s->grad.assign(s->value.size(), T(0));
        s->grad[0] = T(1);
        for (auto it = tape_.rbegin(); it != tape_.rend(); ++it) (*it)();
    }

  private:
    std::vector<std::function<void()>> tape_;
    bool backward_done_ = false;

    template <class... Ts>
    static bool wants_grad(const Ts&... ts) {
        return (ts.requires_grad() || ...);
    }

    static void require_rank2(const Tensor<T>& t, const char* what) {
        if (!t.defined() || t.rank() != 2)
            throw DimensionError(std::string(what) + " must be a rank-2 tensor, got " +
                                 (t.defined() ? shape_str(t.shape()) : std::string("undefined")));
    }

    static std::vector<T>& grad_buf(const Tensor<T>& t) {
        auto s = t.storage();
        if (s->grad.empty()) s->grad.assign(s->value.size(), T(0));
        return s->grad;
    }

    static void gather_head(const T* src, T* dst, std::size_t b, std::size_t h, std::size_t n,
                            std::size_t d, std::size_t dh) {
        for (std::size_t i = 0; i < n; ++i)
            std::copy(src + (b * n + i) * d + h * dh, src + (b * n + i) * d + h * dh + dh,
                      dst + i * dh);
    }

    static void scatter_head(const T* src, T* dst, std::size_t b, std::size_t h, std::size_t n,
                             std::size_t d, std::size_t dh, bool acc) {
        for (std::size_t i = 0; i < n; ++i) {
            T* o = dst + (b * n + i) * d + h * dh;
            const T* s = src + i * dh;
            for (std::size_t j = 0; j < dh; ++j) o[j] = acc ? o[j] + s[j] : s[j];
        }
    }

    static void scatter_head_acc(const T* src, T* dst, std::size_t b, std::size_t h, std::size_t n,
                                 std::size_t d, std::size_t dh) {
        scatter_head(src, dst, b, h, n, d, dh, true);
    }

    // The closure owns everything its backward pass needs; output grads that
    // were never materialized mean the node did not influence the loss.
    template <class F>
    void record(const Tensor<T>& out, F&& fn) {
        const_cast<Tensor<T>&>(out).set_requires_grad(true);
        tape_.emplace_back([out, fn = std::forward<F>(fn)] {
            if (out.storage()->grad.empty()) return;
            fn();
        });
    }
};

using GraphF = Graph<float>;
using GraphD = Graph<double>;

}  // namespace sas
