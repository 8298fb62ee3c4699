#pragma once

#include <memory>
#include <string>

#include "checkpoint.hpp"
#include "variants.hpp"

namespace sas {

// Backbone-only checkpoints come out of pretraining; full model checkpoints
// carry the variant's adapter tensors and head under their own namespaces
// plus the config echo in the manifest meta.
void save_backbone(const std::string& path, Backbone<float>& bb);
std::shared_ptr<Backbone<float>> load_backbone(const std::string& path);

void save_model(const std::string& path, VariantModel<float>& model);
VariantModel<float> load_model(const std::string& path);

// Parameter-preserving precision change; traversal order is canonical on
// both sides.
template <class To, class From>
Backbone<To> cast_backbone(Backbone<From>& src) {
    Backbone<To> dst;
    dst.cfg = src.cfg;
    dst.frozen = src.frozen;
    dst.blocks.resize(src.cfg.L);
    std::vector<Tensor<From>*> sv;
    src.for_each_param([&sv](const std::string&, Tensor<From>& t) { sv.push_back(&t); });
    std::vector<Tensor<To>*> dv;
    dst.for_each_param([&dv](const std::string&, Tensor<To>& t) { dv.push_back(&t); });
    for (std::size_t i = 0; i < sv.size(); ++i) *dv[i] = sv[i]->template cast<To>();
    return dst;
}

template <class To, class From>
VariantModel<To> cast_variant(VariantModel<From>& src, std::shared_ptr<Backbone<To>> backbone) {
    VariantModel<To> dst;
    dst.kind = src.kind;
    dst.backbone = std::move(backbone);
    dst.sas_cfg = src.sas_cfg;
    if (src.shared)
        dst.shared = SharedModule<To>{src.shared->w_down.template cast<To>(),
                                      src.shared->w_up.template cast<To>()};
    if (src.sas) {
        SasParams<To> p;
        p.cfg = src.sas->cfg;
        p.shared.w_down = src.sas->shared.w_down.template cast<To>();
        p.shared.w_up = src.sas->shared.w_up.template cast<To>();
        for (auto& net : src.sas->nets)
            p.nets.push_back(
                HyperNet<To>{net.h_down.template cast<To>(), net.h_up.template cast<To>()});
        for (auto& in : src.sas->inputs)
            p.inputs.push_back(
                LayerInputs<To>{in.c_down.template cast<To>(), in.c_up.template cast<To>()});
        p.assignment = src.sas->assignment;
        dst.sas = std::move(p);
    }
    for (auto& b : src.biases) dst.biases.push_back(b.template cast<To>());
    dst.head.w = src.head.w.template cast<To>();
    dst.head.b = src.head.b.template cast<To>();
    return dst;
}

}  // namespace sas
