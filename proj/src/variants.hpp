#pragma once

#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "adapter.hpp"
#include "backbone.hpp"

namespace sas {

// The ablation ladder. Every variant trains the head; the backbone is always
// frozen. The adapter column of the reported parameter counts excludes the
// head, so LinearProbe reports 0.
enum class VariantKind {
    LinearProbe,
    BiasOnly,
    SharedOnly,
    SharedPlusBias,
    FullSaS,
};

inline std::string variant_name(VariantKind k) {
    switch (k) {
        case VariantKind::LinearProbe: return "linear-probe";
        case VariantKind::BiasOnly: return "bias-only";
        case VariantKind::SharedOnly: return "shared-only";
        case VariantKind::SharedPlusBias: return "shared-bias";
        case VariantKind::FullSaS: return "full-sas";
    }
    throw ContractError("variant_name: bad enum value");
}

inline VariantKind parse_variant(const std::string& s) {
    if (s == "linear-probe") return VariantKind::LinearProbe;
    if (s == "bias-only") return VariantKind::BiasOnly;
    if (s == "shared-only") return VariantKind::SharedOnly;
    if (s == "shared-bias") return VariantKind::SharedPlusBias;
    if (s == "full-sas") return VariantKind::FullSaS;
    throw ConfigError("unknown variant '" + s +
                      "' (expected linear-probe|bias-only|shared-only|shared-bias|full-sas)");
}

// Adapter-side trainable count by arithmetic, head excluded.
inline std::uint64_t variant_adapter_count(VariantKind k, const SasConfig& cfg) {
    std::uint64_t ld = static_cast<std::uint64_t>(cfg.L) * cfg.d;
    std::uint64_t shared = 2ull * cfg.d_prime * cfg.d;
    switch (k) {
        case VariantKind::LinearProbe: return 0;
        case VariantKind::BiasOnly: return ld;
        case VariantKind::SharedOnly: return shared;
        case VariantKind::SharedPlusBias: return shared + ld;
        case VariantKind::FullSaS: return param_count(cfg);
    }
    throw ContractError("variant_adapter_count: bad enum value");
}

template <class T>
struct VariantModel {
    VariantKind kind = VariantKind::LinearProbe;
    std::shared_ptr<Backbone<T>> backbone;
    SasConfig sas_cfg;  // d/L mirror the backbone; rest used by the SaS kinds
    std::optional<SasParams<T>> sas;
    std::optional<SharedModule<T>> shared;
    std::vector<Tensor<T>> biases;  // one [d] vector per layer, zero at init
    Head<T> head;

    template <class Fn>
    void for_each_adapter_param(Fn&& fn) {
        if (shared) {
            fn("sas.shared.w_down", shared->w_down);
            fn("sas.shared.w_up", shared->w_up);
        }
        if (sas) sas->for_each_param(fn);
        for (std::size_t i = 0; i < biases.size(); ++i)
            fn("bias.layer" + std::to_string(i) + ".b", biases[i]);
    }

    template <class Fn>
    void for_each_param(Fn&& fn) {
        for_each_adapter_param(fn);
        head.for_each_param(fn);
    }

    // Adapter + head tensors in canonical order, for the optimizer and for
    // gradient checking.
    std::vector<Tensor<T>> trainable() {
        std::vector<Tensor<T>> out;
        for_each_param([&out](const std::string&, Tensor<T>& t) { out.push_back(t); });
        return out;
    }
};

// Head weights are drawn before any adapter parameters, so two variants built
// from the same seed start from identical heads (and, with zero-at-init
// adapters, identical logits).
template <class T>
VariantModel<T> build_variant(VariantKind kind, const SasConfig& sas_cfg,
                              std::shared_ptr<Backbone<T>> backbone, std::size_t classes,
                              Rng& rng) {
    if (!backbone) throw ContractError("build_variant: null backbone");
    if (!backbone->frozen) throw ContractError("build_variant: backbone must be frozen first");
    VariantModel<T> m;
    m.kind = kind;
    m.backbone = std::move(backbone);
    m.sas_cfg = sas_cfg;
    m.sas_cfg.d = m.backbone->cfg.d;
    m.sas_cfg.L = m.backbone->cfg.L;
    m.head = init_head<T>(m.backbone->cfg.d, classes, rng);

    auto make_biases = [&] {
        m.biases.reserve(m.sas_cfg.L);
        for (std::size_t i = 0; i < m.sas_cfg.L; ++i)
            m.biases.push_back(Tensor<T>::zeros({m.sas_cfg.d}).set_requires_grad(true));
    };
    auto make_shared = [&] {
        m.sas_cfg.validate();
        SharedModule<T> sh;
        sh.w_down = kaiming_normal<T>(rng, m.sas_cfg.d_prime, m.sas_cfg.d, m.sas_cfg.d);
        sh.w_up = Tensor<T>::zeros({m.sas_cfg.d_prime, m.sas_cfg.d});
        sh.w_down.set_requires_grad(true);
        sh.w_up.set_requires_grad(true);
        m.shared = std::move(sh);
    };

    switch (kind) {
        case VariantKind::LinearProbe: break;
        case VariantKind::BiasOnly: make_biases(); break;
        case VariantKind::SharedOnly: make_shared(); break;
        case VariantKind::SharedPlusBias:
            make_shared();
            make_biases();
            break;
        case VariantKind::FullSaS: m.sas = init_sas<T>(m.sas_cfg, rng); break;
    }
    return m;
}

template <class T>
AdapterHook<T> variant_hook(VariantModel<T>& m) {
    switch (m.kind) {
        case VariantKind::LinearProbe: return {};
        case VariantKind::BiasOnly:
            return [&m](Graph<T>& g, const Tensor<T>& z, std::size_t layer) {
                return g.tile_rows(m.biases[layer], z.rows());
            };
        case VariantKind::SharedOnly:
            return [&m](Graph<T>& g, const Tensor<T>& z, std::size_t) {
                return shared_forward(g, z, *m.shared);
            };
        case VariantKind::SharedPlusBias:
            return [&m](Graph<T>& g, const Tensor<T>& z, std::size_t layer) {
                return g.add(shared_forward(g, z, *m.shared),
                             g.tile_rows(m.biases[layer], z.rows()));
            };
        case VariantKind::FullSaS:
            return [&m](Graph<T>& g, const Tensor<T>& z, std::size_t layer) {
                return adapt_output(g, z, layer, *m.sas);
            };
    }
    throw ContractError("variant_hook: bad enum value");
}

template <class T>
Tensor<T> variant_forward(Graph<T>& g, VariantModel<T>& m, const Tensor<T>& images) {
    Tensor<T> tok = patch_embed(g, images, *m.backbone);
    auto acts = backbone_forward(g, tok, *m.backbone, variant_hook(m));
    return head_forward(g, acts.pooled, m.head);
}

// Exact enumeration of trainable scalars, split adapter vs head.
template <class T>
std::pair<std::uint64_t, std::uint64_t> trainable_params(VariantModel<T>& m) {
    std::uint64_t adapter = 0, head = 0;
    m.for_each_adapter_param([&adapter](const std::string&, Tensor<T>& t) {
        if (t.requires_grad()) adapter += t.numel();
    });
    m.head.for_each_param([&head](const std::string&, Tensor<T>& t) {
        if (t.requires_grad()) head += t.numel();
    });
    return {adapter, head};
}

}  // namespace sas
