#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "graph.hpp"
#include "rng.hpp"
#include "tensor.hpp"

namespace sas {

// Dimensions of the adapter stack: one shared bottleneck of width d_prime,
// M hypernetworks of rank r, and per-layer hypernet inputs of rank r_prime,
// all attached to a backbone of L blocks of width d.
struct SasConfig {
    std::size_t d = 0;
    std::size_t L = 0;
    std::size_t d_prime = 8;
    std::size_t r = 4;
    std::size_t r_prime = 8;
    std::size_t M = 1;

    void validate() const {
        if (d < 1 || L < 1) throw ConfigError("sas config: d and L must be >= 1");
        if (d_prime < 1 || r < 1 || r_prime < 1)
            throw ConfigError("sas config: d_prime, r, r_prime must be >= 1");
        if (M < 1 || M > L)
            throw ConfigError("sas config: M must satisfy 1 <= M <= L, got M=" +
                              std::to_string(M) + " L=" + std::to_string(L));
    }
};

// Trainable parameters introduced by the adapter: 2(d'd + Mrd + Lr'r).
inline std::uint64_t param_count(const SasConfig& c) {
    c.validate();
    return 2ull * (static_cast<std::uint64_t>(c.d_prime) * c.d +
                   static_cast<std::uint64_t>(c.M) * c.r * c.d +
                   static_cast<std::uint64_t>(c.L) * c.r_prime * c.r);
}

// Contiguous layer -> hypernet assignment. Every group covers L/M layers;
// when M does not divide L the first (L mod M) groups take one extra layer.
inline std::vector<std::size_t> assign_layers(std::size_t num_layers, std::size_t num_nets) {
    if (num_nets < 1 || num_nets > num_layers)
        throw ConfigError("assign_layers: need 1 <= M <= L, got M=" + std::to_string(num_nets) +
                          " L=" + std::to_string(num_layers));
    std::vector<std::size_t> assignment(num_layers);
    std::size_t base = num_layers / num_nets, extra = num_layers % num_nets;
    std::size_t layer = 0;
    for (std::size_t g = 0; g < num_nets; ++g) {
        std::size_t size = base + (g < extra ? 1 : 0);
        for (std::size_t i = 0; i < size; ++i) assignment[layer++] = g;
    }
    return assignment;
}

template <class T>
struct SharedModule {
    Tensor<T> w_down;  // [d' x d]
    Tensor<T> w_up;    // [d' x d]
};

template <class T>
struct HyperNet {
    Tensor<T> h_down;  // [r x d]
    Tensor<T> h_up;    // [r x d]
};

template <class T>
struct LayerInputs {
    Tensor<T> c_down;  // [r' x r]
    Tensor<T> c_up;    // [r' x r]
};

template <class T>
struct SasParams {
    SasConfig cfg;
    SharedModule<T> shared;
    std::vector<HyperNet<T>> nets;      // M entries
    std::vector<LayerInputs<T>> inputs; // L entries
    std::vector<std::size_t> assignment;

    template <class Fn>
    void for_each_param(Fn&& fn) {
        fn("sas.shared.w_down", shared.w_down);
        fn("sas.shared.w_up", shared.w_up);
        for (std::size_t m = 0; m < nets.size(); ++m) {
            fn("sas.hnet" + std::to_string(m) + ".h_down", nets[m].h_down);
            fn("sas.hnet" + std::to_string(m) + ".h_up", nets[m].h_up);
        }
        for (std::size_t l = 0; l < inputs.size(); ++l) {
            fn("sas.layer" + std::to_string(l) + ".c_down", inputs[l].c_down);
            fn("sas.layer" + std::to_string(l) + ".c_up", inputs[l].c_up);
        }
    }
};

// Zero-at-init initialization: Kaiming Normal down-projections, zero
// up-projections, constant 1e-5 hypernet inputs. The adapted model therefore
// reproduces the frozen model exactly until training moves the parameters.
// Draw order: shared w_down first, then each hypernet's h_down.
template <class T>
SasParams<T> init_sas(const SasConfig& cfg, Rng& rng) {
    cfg.validate();
    SasParams<T> p;
    p.cfg = cfg;
    p.shared.w_down = kaiming_normal<T>(rng, cfg.d_prime, cfg.d, cfg.d);
    p.shared.w_up = Tensor<T>::zeros({cfg.d_prime, cfg.d});
    p.nets.resize(cfg.M);
    for (auto& net : p.nets) {
        net.h_down = kaiming_normal<T>(rng, cfg.r, cfg.d, cfg.d);
        net.h_up = Tensor<T>::zeros({cfg.r, cfg.d});
    }
    p.inputs.resize(cfg.L);
    for (auto& in : p.inputs) {
        in.c_down = Tensor<T>::full({cfg.r_prime, cfg.r}, static_cast<T>(1e-5));
        in.c_up = Tensor<T>::full({cfg.r_prime, cfg.r}, static_cast<T>(1e-5));
    }
    p.assignment = assign_layers(cfg.L, cfg.M);
    p.for_each_param([](const std::string&, Tensor<T>& t) { t.set_requires_grad(true); });
    return p;
}

// F_sh(z) = sigma(z * W_down^T * W_up), sigma = GELU. One instance serves
// every layer. GELU keeps the zero-at-init identity exact (gelu(0) = 0) while
// still passing gradient through the zero pre-activation the W_up = 0 init
// produces; a ReLU with zero subgradient at 0 would pin W_up at zero forever.
template <class T>
Tensor<T> shared_forward(Graph<T>& g, const Tensor<T>& z, const SharedModule<T>& shared) {
    return g.gelu(g.matmul(g.matmul_nt(z, shared.w_down), shared.w_up));
}

// W = c * H: the hypernet maps a layer's trainable input to that layer's
// projection matrix.
template <class T>
Tensor<T> hypernet_generate(Graph<T>& g, const Tensor<T>& c, const Tensor<T>& h) {
    return g.matmul(c, h);
}

// G^i(z) = z * (W^i_down)^T * W^i_up with both projections generated from the
// layer's c-pair and its assigned hypernet. Purely linear; no activation.
template <class T>
Tensor<T> layer_specific_forward(Graph<T>& g, const Tensor<T>& z, std::size_t layer,
                                 SasParams<T>& params) {
    if (layer >= params.cfg.L)
        throw IndexError("layer_specific_forward: layer " + std::to_string(layer) +
                         " out of range [0," + std::to_string(params.cfg.L) + ")");
    const HyperNet<T>& net = params.nets[params.assignment[layer]];
    const LayerInputs<T>& in = params.inputs[layer];
    Tensor<T> w_down = hypernet_generate(g, in.c_down, net.h_down);  // [r' x d]
    Tensor<T> w_up = hypernet_generate(g, in.c_up, net.h_up);        // [r' x d]
    return g.matmul(g.matmul_nt(z, w_down), w_up);
}

// z~^i = F_sh(z^i) + G^i(z^i); the backbone adds this to its block input.
template <class T>
Tensor<T> adapt_output(Graph<T>& g, const Tensor<T>& z, std::size_t layer, SasParams<T>& params) {
    return g.add(shared_forward(g, z, params.shared), layer_specific_forward(g, z, layer, params));
}

}  // namespace sas
