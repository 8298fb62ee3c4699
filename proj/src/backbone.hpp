#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "graph.hpp"
#include "rng.hpp"
#include "tensor.hpp"

namespace sas {

struct BackboneConfig {
    std::size_t image_side = 16;
    std::size_t channels = 1;
    std::size_t patch = 4;
    std::size_t d = 32;   // embedding width
    std::size_t L = 12;   // block count
    std::size_t heads = 4;
    std::size_t mlp_ratio = 4;
    std::size_t num_classes_pretrain = 10;

    void validate() const {
        if (L < 1) throw ConfigError("backbone config: L must be >= 1");
        if (patch == 0 || image_side % patch != 0)
            throw ConfigError("backbone config: patch " + std::to_string(patch) +
                              " must divide image side " + std::to_string(image_side));
        if (heads == 0 || d % heads != 0)
            throw ConfigError("backbone config: heads " + std::to_string(heads) +
                              " must divide width " + std::to_string(d));
        if (channels < 1 || mlp_ratio < 1 || num_classes_pretrain < 1)
            throw ConfigError("backbone config: channels, mlp_ratio, classes must be >= 1");
    }

    std::size_t grid() const { return image_side / patch; }
    std::size_t patches() const { return grid() * grid(); }
    std::size_t tokens() const { return patches() + 1; }  // +1 class token
    std::size_t patch_dim() const { return channels * patch * patch; }
    std::size_t pixels() const { return channels * image_side * image_side; }

    bool operator==(const BackboneConfig&) const = default;
};

template <class T>
struct BlockParams {
    Tensor<T> ln1_gamma, ln1_beta;
    Tensor<T> wq, bq, wk, bk, wv, bv, wo, bo;  // [d x d] / [d]
    Tensor<T> ln2_gamma, ln2_beta;
    Tensor<T> w1, b1, w2, b2;  // FFN d -> mlp_ratio*d -> d
};

template <class T>
struct Backbone {
    BackboneConfig cfg;
    Tensor<T> patch_w;  // [patch_dim x d]
    Tensor<T> patch_b;  // [d]
    Tensor<T> cls;      // [1 x d]
    Tensor<T> pos;      // [tokens x d]
    std::vector<BlockParams<T>> blocks;
    Tensor<T> lnf_gamma, lnf_beta;
    bool frozen = false;

    template <class Fn>
    void for_each_param(Fn&& fn) {
        fn("backbone.patch_embed.w", patch_w);
        fn("backbone.patch_embed.b", patch_b);
        fn("backbone.cls", cls);
        fn("backbone.pos", pos);
        for (std::size_t i = 0; i < blocks.size(); ++i) {
            std::string p = "backbone.block" + std::to_string(i) + ".";
            auto& b = blocks[i];
            fn(p + "ln1.gamma", b.ln1_gamma);
            fn(p + "ln1.beta", b.ln1_beta);
            fn(p + "attn.wq", b.wq);
            fn(p + "attn.bq", b.bq);
            fn(p + "attn.wk", b.wk);
            fn(p + "attn.bk", b.bk);
            fn(p + "attn.wv", b.wv);
            fn(p + "attn.bv", b.bv);
            fn(p + "attn.wo", b.wo);
            fn(p + "attn.bo", b.bo);
            fn(p + "ln2.gamma", b.ln2_gamma);
            fn(p + "ln2.beta", b.ln2_beta);
            fn(p + "mlp.w1", b.w1);
            fn(p + "mlp.b1", b.b1);
            fn(p + "mlp.w2", b.w2);
            fn(p + "mlp.b2", b.b2);
        }
        fn("backbone.ln_f.gamma", lnf_gamma);
        fn("backbone.ln_f.beta", lnf_beta);
    }
};

// Classification head on the pooled class token; trainable in every variant.
template <class T>
struct Head {
    Tensor<T> w;  // [d x classes]
    Tensor<T> b;  // [classes]

    template <class Fn>
    void for_each_param(Fn&& fn) {
        fn("head.w", w);
        fn("head.b", b);
    }
};

constexpr double kLayerNormEps = 1e-5;

template <class T>
Backbone<T> init_backbone(const BackboneConfig& cfg, Rng& rng) {
    cfg.validate();
    const double ws = 0.02;  // ViT-style trunc-normal scale, plain normal here
    Backbone<T> bb;
    bb.cfg = cfg;
    bb.patch_w = Tensor<T>::random_normal({cfg.patch_dim(), cfg.d}, rng, ws);
    bb.patch_b = Tensor<T>::zeros({cfg.d});
    bb.cls = Tensor<T>::random_normal({1, cfg.d}, rng, ws);
    bb.pos = Tensor<T>::random_normal({cfg.tokens(), cfg.d}, rng, ws);
    bb.blocks.resize(cfg.L);
    for (auto& blk : bb.blocks) {
        blk.ln1_gamma = Tensor<T>::full({cfg.d}, T(1));
        blk.ln1_beta = Tensor<T>::zeros({cfg.d});
        blk.wq = Tensor<T>::random_normal({cfg.d, cfg.d}, rng, ws);
        blk.bq = Tensor<T>::zeros({cfg.d});
        blk.wk = Tensor<T>::random_normal({cfg.d, cfg.d}, rng, ws);
        blk.bk = Tensor<T>::zeros({cfg.d});
        blk.wv = Tensor<T>::random_normal({cfg.d, cfg.d}, rng, ws);
        blk.bv = Tensor<T>::zeros({cfg.d});
        blk.wo = Tensor<T>::random_normal({cfg.d, cfg.d}, rng, ws);
        blk.bo = Tensor<T>::zeros({cfg.d});
        blk.ln2_gamma = Tensor<T>::full({cfg.d}, T(1));
        blk.ln2_beta = Tensor<T>::zeros({cfg.d});
        blk.w1 = Tensor<T>::random_normal({cfg.d, cfg.mlp_ratio * cfg.d}, rng, ws);
        blk.b1 = Tensor<T>::zeros({cfg.mlp_ratio * cfg.d});
        blk.w2 = Tensor<T>::random_normal({cfg.mlp_ratio * cfg.d, cfg.d}, rng, ws);
        blk.b2 = Tensor<T>::zeros({cfg.d});
    }
    bb.lnf_gamma = Tensor<T>::full({cfg.d}, T(1));
    bb.lnf_beta = Tensor<T>::zeros({cfg.d});
    bb.for_each_param([](const std::string&, Tensor<T>& t) { t.set_requires_grad(true); });
    return bb;
}

template <class T>
Head<T> init_head(std::size_t d, std::size_t classes, Rng& rng) {
    Head<T> h;
    h.w = kaiming_normal<T>(rng, d, classes, d);
    h.b = Tensor<T>::zeros({classes});
    h.w.set_requires_grad(true);
    h.b.set_requires_grad(true);
    return h;
}

// Mark all backbone parameters non-trainable; the optimizer collects only
// requires_grad tensors, so a frozen backbone is bit-stable across steps.
template <class T>
void freeze_all(Backbone<T>& bb) {
    bb.for_each_param([](const std::string&, Tensor<T>& t) { t.set_requires_grad(false); });
    bb.frozen = true;
}

// FNV-1a over the raw value bytes of every parameter in canonical order.
template <class T>
std::uint64_t backbone_checksum(Backbone<T>& bb) {
    std::uint64_t h = 0xCBF29CE484222325ull;
    bb.for_each_param([&h](const std::string&, Tensor<T>& t) {
        const unsigned char* p = reinterpret_cast<const unsigned char*>(t.data());
        for (std::size_t i = 0; i < t.numel() * sizeof(T); ++i) {
            h ^= p[i];
            h *= 0x100000001B3ull;
        }
    });
    return h;
}

// Rearrange a batch of flat images [B x C*H*W] into per-patch rows
// [B*patches x patch_dim]. Pure data movement; images carry no gradient.
template <class T>
Tensor<T> patchify(const Tensor<T>& images, const BackboneConfig& cfg) {
    if (images.rank() != 2 || images.cols() != cfg.pixels())
        throw DimensionError("patchify: expected [B x " + std::to_string(cfg.pixels()) +
                             "] images, got " + shape_str(images.shape()));
    std::size_t batch = images.rows(), g = cfg.grid(), p = cfg.patch, side = cfg.image_side;
    Tensor<T> out = Tensor<T>::zeros({batch * cfg.patches(), cfg.patch_dim()});
    for (std::size_t b = 0; b < batch; ++b) {
        const T* img = images.data() + b * cfg.pixels();
        for (std::size_t gy = 0; gy < g; ++gy)
            for (std::size_t gx = 0; gx < g; ++gx) {
                T* row = out.data() + (b * cfg.patches() + gy * g + gx) * cfg.patch_dim();
                std::size_t idx = 0;
                for (std::size_t c = 0; c < cfg.channels; ++c)
                    for (std::size_t py = 0; py < p; ++py)
                        for (std::size_t px = 0; px < p; ++px)
                            row[idx++] = img[c * side * side + (gy * p + py) * side + gx * p + px];
            }
    }
    return out;
}

// Tokenize a batch: linear patch embedding, class token prepended,
// positional embeddings added. Returns [B*tokens x d]; this is z^1.
template <class T>
Tensor<T> patch_embed(Graph<T>& g, const Tensor<T>& images, const Backbone<T>& bb) {
    Tensor<T> patches = patchify(images, bb.cfg);
    Tensor<T> tok = g.add(g.matmul(patches, bb.patch_w), bb.patch_b);
    tok = g.prepend_token(tok, bb.cls, bb.cfg.patches());
    return g.add_positional(tok, bb.pos, bb.cfg.tokens());
}

template <class T>
struct BackboneActivations {
    Tensor<T> pooled;                    // [B x d] class token after final LN
    std::vector<Tensor<T>> block_inputs; // z^1..z^L, each [B*tokens x d]
};

// Per-block adjustment hook: receives the raw block input z^i and returns
// z~^i of the same shape; the backbone then runs B^i(z^i + z~^i).
template <class T>
using AdapterHook = std::function<Tensor<T>(Graph<T>&, const Tensor<T>&, std::size_t)>;

template <class T>
BackboneActivations<T> backbone_forward(Graph<T>& g, const Tensor<T>& tokens, Backbone<T>& bb,
                                        const AdapterHook<T>& hook = {}) {
    const auto& cfg = bb.cfg;
    if (tokens.rank() != 2 || tokens.cols() != cfg.d || tokens.rows() % cfg.tokens() != 0)
        throw DimensionError("backbone_forward: tokens " + shape_str(tokens.shape()) +
                             " do not match config (d=" + std::to_string(cfg.d) + ")");
    T eps = static_cast<T>(kLayerNormEps);
    BackboneActivations<T> acts;
    acts.block_inputs.reserve(cfg.L);
    Tensor<T> z = tokens;
    for (std::size_t i = 0; i < cfg.L; ++i) {
        acts.block_inputs.push_back(z);
        if (hook) {
            Tensor<T> adj = hook(g, z, i);
            if (!adj.defined() || !adj.same_shape(z))
                throw DimensionError("backbone_forward: hook output " +
                                     (adj.defined() ? shape_str(adj.shape()) : "undefined") +
                                     " does not match block input " + shape_str(z.shape()));
            z = g.add(z, adj);
        }
        auto& blk = bb.blocks[i];
        Tensor<T> u = g.layer_norm(z, blk.ln1_gamma, blk.ln1_beta, eps);
        Tensor<T> q = g.add(g.matmul(u, blk.wq), blk.bq);
        Tensor<T> k = g.add(g.matmul(u, blk.wk), blk.bk);
        Tensor<T> v = g.add(g.matmul(u, blk.wv), blk.bv);
        Tensor<T> att = g.multihead_attention(q, k, v, cfg.tokens(), cfg.heads);
        z = g.add(z, g.add(g.matmul(att, blk.wo), blk.bo));
        Tensor<T> w = g.layer_norm(z, blk.ln2_gamma, blk.ln2_beta, eps);
        Tensor<T> f = g.add(g.matmul(g.gelu(g.add(g.matmul(w, blk.w1), blk.b1)), blk.w2), blk.b2);
        z = g.add(z, f);
    }
    Tensor<T> y = g.layer_norm(z, bb.lnf_gamma, bb.lnf_beta, eps);
    acts.pooled = g.take_token(y, cfg.tokens(), 0);
    return acts;
}

template <class T>
Tensor<T> head_forward(Graph<T>& g, const Tensor<T>& pooled, const Head<T>& head) {
    return g.add(g.matmul(pooled, head.w), head.b);
}

}  // namespace sas
