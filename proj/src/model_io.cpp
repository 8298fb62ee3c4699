#include "model_io.hpp"

#include <charconv>

namespace sas {

namespace {

std::uint64_t meta_u64(const Checkpoint& ckpt, const std::string& key) {
    auto v = ckpt.meta_get(key);
    if (!v) throw IoError("checkpoint is missing meta key '" + key + "'");
    std::uint64_t out = 0;
    auto res = std::from_chars(v->data(), v->data() + v->size(), out);
    if (res.ec != std::errc() || res.ptr != v->data() + v->size())
        throw IoError("checkpoint meta key '" + key + "' is not an integer: " + *v);
    return out;
}

void put_backbone_meta(Checkpoint& ckpt, const BackboneConfig& cfg) {
    ckpt.add_meta("backbone.image_side", std::to_string(cfg.image_side));
    ckpt.add_meta("backbone.channels", std::to_string(cfg.channels));
    ckpt.add_meta("backbone.patch", std::to_string(cfg.patch));
    ckpt.add_meta("backbone.d", std::to_string(cfg.d));
    ckpt.add_meta("backbone.L", std::to_string(cfg.L));
    ckpt.add_meta("backbone.heads", std::to_string(cfg.heads));
    ckpt.add_meta("backbone.mlp_ratio", std::to_string(cfg.mlp_ratio));
    ckpt.add_meta("backbone.pretrain_classes", std::to_string(cfg.num_classes_pretrain));
}

BackboneConfig backbone_meta(const Checkpoint& ckpt) {
    BackboneConfig cfg;
    cfg.image_side = meta_u64(ckpt, "backbone.image_side");
    cfg.channels = meta_u64(ckpt, "backbone.channels");
    cfg.patch = meta_u64(ckpt, "backbone.patch");
    cfg.d = meta_u64(ckpt, "backbone.d");
    cfg.L = meta_u64(ckpt, "backbone.L");
    cfg.heads = meta_u64(ckpt, "backbone.heads");
    cfg.mlp_ratio = meta_u64(ckpt, "backbone.mlp_ratio");
    cfg.num_classes_pretrain = meta_u64(ckpt, "backbone.pretrain_classes");
    return cfg;
}

template <class Model>
void add_params(Checkpoint& ckpt, Model& m) {
    m.for_each_param(
        [&ckpt](const std::string& name, TensorF& t) { ckpt.add(name, t.clone()); });
}

template <class Model>
void fill_params(const Checkpoint& ckpt, Model& m, const std::string& path) {
    m.for_each_param([&](const std::string& name, TensorF& t) {
        const TensorF* src = ckpt.find(name);
        if (!src) throw IoError("checkpoint " + path + " is missing tensor '" + name + "'");
        if (src->shape() != t.shape())
            throw IoError("checkpoint tensor '" + name + "' has shape " +
                          shape_str(src->shape()) + ", expected " + shape_str(t.shape()));
        bool rg = t.requires_grad();
        t = src->clone();
        t.set_requires_grad(rg);
    });
}

std::shared_ptr<Backbone<float>> backbone_from_ckpt(const Checkpoint& ckpt,
                                                    const std::string& path) {
    BackboneConfig cfg = backbone_meta(ckpt);
    Rng dummy(0);
    auto bb = std::make_shared<Backbone<float>>(init_backbone<float>(cfg, dummy));
    fill_params(ckpt, *bb, path);
    if (meta_u64(ckpt, "frozen") != 0) freeze_all(*bb);
    return bb;
}

}  // namespace

void save_backbone(const std::string& path, Backbone<float>& bb) {
    Checkpoint ckpt;
    ckpt.add_meta("kind", "backbone");
    put_backbone_meta(ckpt, bb.cfg);
    ckpt.add_meta("frozen", bb.frozen ? "1" : "0");
    add_params(ckpt, bb);
    save_checkpoint(path, ckpt);
}

std::shared_ptr<Backbone<float>> load_backbone(const std::string& path) {
    Checkpoint ckpt = load_checkpoint(path);
    auto kind = ckpt.meta_get("kind");
    if (!kind || (*kind != "backbone" && *kind != "model"))
        throw IoError("checkpoint " + path + " does not contain a backbone");
    return backbone_from_ckpt(ckpt, path);
}

void save_model(const std::string& path, VariantModel<float>& model) {
    Checkpoint ckpt;
    ckpt.add_meta("kind", "model");
    ckpt.add_meta("variant", variant_name(model.kind));
    put_backbone_meta(ckpt, model.backbone->cfg);
    ckpt.add_meta("frozen", model.backbone->frozen ? "1" : "0");
    ckpt.add_meta("sas.d_prime", std::to_string(model.sas_cfg.d_prime));
    ckpt.add_meta("sas.r", std::to_string(model.sas_cfg.r));
    ckpt.add_meta("sas.r_prime", std::to_string(model.sas_cfg.r_prime));
    ckpt.add_meta("sas.M", std::to_string(model.sas_cfg.M));
    ckpt.add_meta("classes", std::to_string(model.head.b.numel()));
    add_params(ckpt, *model.backbone);
    add_params(ckpt, model);
    save_checkpoint(path, ckpt);
}

VariantModel<float> load_model(const std::string& path) {
    Checkpoint ckpt = load_checkpoint(path);
    auto kind = ckpt.meta_get("kind");
    if (!kind || *kind != "model")
        throw IoError("checkpoint " + path + " does not contain a full model");
    auto variant = ckpt.meta_get("variant");
    if (!variant) throw IoError("checkpoint " + path + " is missing the variant meta key");

    auto bb = backbone_from_ckpt(ckpt, path);
    if (!bb->frozen) freeze_all(*bb);
    SasConfig sas_cfg;
    sas_cfg.d_prime = meta_u64(ckpt, "sas.d_prime");
    sas_cfg.r = meta_u64(ckpt, "sas.r");
    sas_cfg.r_prime = meta_u64(ckpt, "sas.r_prime");
    sas_cfg.M = meta_u64(ckpt, "sas.M");
    std::size_t classes = meta_u64(ckpt, "classes");

    Rng dummy(0);
    VariantModel<float> model =
        build_variant<float>(parse_variant(*variant), sas_cfg, bb, classes, dummy);
    fill_params(ckpt, model, path);
    return model;
}

}  // namespace sas
