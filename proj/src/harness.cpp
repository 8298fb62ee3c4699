#include "harness.hpp"

#include <chrono>

#include "gradcheck.hpp"
#include "model_io.hpp"
#include "train.hpp"

namespace sas {

namespace {

constexpr std::uint64_t kTrainSplit = 0x11u;
constexpr std::uint64_t kTestSplit = 0x22u;

void check_dataset_matches(const Dataset& ds, const BackboneConfig& bcfg, const char* which) {
    if (ds.pixels() != bcfg.pixels())
        throw DataError(std::string(which) + " dataset images (" + std::to_string(ds.pixels()) +
                        " px) do not match backbone input (" + std::to_string(bcfg.pixels()) +
                        " px)");
}

void check_backbone_matches(const Backbone<float>& bb, const RunConfig& cfg) {
    if (!(bb.cfg == cfg.backbone))
        throw ConfigError("backbone checkpoint config does not match the run config");
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

template <class T>
RunResult finetune_impl(const RunConfig& cfg, VariantKind kind,
                        std::shared_ptr<Backbone<T>> backbone, const DatasetPair& data,
                        VariantModel<T>* model_out) {
    auto t0 = std::chrono::steady_clock::now();
    VariantModel<T> model =
        finetune_train<T>(kind, cfg.sas, std::move(backbone), data.train, cfg.train);
    RunResult r;
    r.variant = variant_name(kind);
    auto [adapter, head] = trainable_params(model);
    (void)head;
    r.adapter_params = adapter;
    r.top1 = evaluate_top1(model, data.test);
    r.ppt = ppt_score(r.top1, r.adapter_params);
    r.seed = cfg.train.seed;
    r.config_hash = cfg.hash();
    r.wall_time = seconds_since(t0);
    if (model_out) *model_out = std::move(model);
    return r;
}

}  // namespace

DatasetPair load_downstream_data(const RunConfig& cfg) {
    DatasetPair out;
    if (cfg.data.source == "idx") {
        if (cfg.data.idx_train_images.empty() || cfg.data.idx_train_labels.empty() ||
            cfg.data.idx_test_images.empty() || cfg.data.idx_test_labels.empty())
            throw ConfigError("data.source=idx requires all four data.idx.* paths");
        out.train = load_idx(cfg.data.idx_train_images, cfg.data.idx_train_labels);
        out.test = load_idx(cfg.data.idx_test_images, cfg.data.idx_test_labels);
    } else {
        SyntheticSpec spec = cfg.data.synth;
        out.train = synth_generate(spec, Rng(cfg.data.seed).derive(kTrainSplit).seed());
        spec.per_class = cfg.data.test_per_class;
        out.test = synth_generate(spec, Rng(cfg.data.seed).derive(kTestSplit).seed());
    }
    if (cfg.data.few_shot_k > 0)
        out.train = few_shot_sample(out.train, cfg.data.few_shot_k,
                                    Rng(cfg.data.seed).derive(0x33u).seed());
    return out;
}

Dataset load_source_data(const RunConfig& cfg) {
    if (cfg.data.source != "synthetic")
        throw ConfigError("pretraining expects data.source=synthetic");
    SyntheticSpec spec = cfg.data.synth;
    if (!spec.shift.is_identity())
        throw ConfigError("pretraining data must be unshifted; clear the data.shift.* keys");
    return synth_generate(spec, Rng(cfg.data.seed).derive(kTrainSplit).seed());
}

PretrainReport run_pretrain(const RunConfig& cfg, const std::string& out_ckpt) {
    cfg.validate();
    if (cfg.backbone.num_classes_pretrain != cfg.data.synth.classes)
        throw ConfigError("backbone.pretrain_classes (" +
                          std::to_string(cfg.backbone.num_classes_pretrain) +
                          ") must equal data.classes (" +
                          std::to_string(cfg.data.synth.classes) + ") for pretraining");
    Dataset source = load_source_data(cfg);
    check_dataset_matches(source, cfg.backbone, "source");

    PretrainReport report;
    if (cfg.train.precision == "f64") {
        auto outcome = pretrain_toy<double>(cfg.backbone, source, cfg.train);
        report.final_train_acc = outcome.final_train_acc;
        report.steps = outcome.losses.size();
        Backbone<float> bb = cast_backbone<float>(*outcome.backbone);
        save_backbone(out_ckpt, bb);
    } else {
        auto outcome = pretrain_toy<float>(cfg.backbone, source, cfg.train);
        report.final_train_acc = outcome.final_train_acc;
        report.steps = outcome.losses.size();
        save_backbone(out_ckpt, *outcome.backbone);
    }
    return report;
}

RunResult finetune_once(const RunConfig& cfg, VariantKind kind,
                        std::shared_ptr<Backbone<float>> backbone, const DatasetPair& data) {
    check_dataset_matches(data.train, cfg.backbone, "train");
    check_dataset_matches(data.test, cfg.backbone, "test");
    if (cfg.train.precision == "f64") {
        auto bb64 = std::make_shared<Backbone<double>>(cast_backbone<double>(*backbone));
        return finetune_impl<double>(cfg, kind, bb64, data, nullptr);
    }
    return finetune_impl<float>(cfg, kind, std::move(backbone), data, nullptr);
}

RunResult run_finetune(const RunConfig& cfg, VariantKind kind, const std::string& backbone_ckpt,
                       const std::string& out_results,
                       const std::optional<std::string>& save_model_path) {
    cfg.validate();
    auto backbone = load_backbone(backbone_ckpt);
    if (!backbone->frozen) freeze_all(*backbone);
    check_backbone_matches(*backbone, cfg);
    DatasetPair data = load_downstream_data(cfg);
    check_dataset_matches(data.train, cfg.backbone, "train");
    check_dataset_matches(data.test, cfg.backbone, "test");

    RunResult result;
    if (cfg.train.precision == "f64") {
        auto bb64 = std::make_shared<Backbone<double>>(cast_backbone<double>(*backbone));
        VariantModel<double> model;
        result = finetune_impl<double>(cfg, kind, bb64, data, &model);
        if (save_model_path) {
            VariantModel<float> m32 = cast_variant<float>(model, backbone);
            save_model(*save_model_path, m32);
        }
    } else {
        VariantModel<float> model;
        result = finetune_impl<float>(cfg, kind, backbone, data, &model);
        if (save_model_path) save_model(*save_model_path, model);
    }
    emit_results({result}, out_results);
    return result;
}

double run_eval(const std::string& model_ckpt, const RunConfig& data_cfg) {
    data_cfg.validate();
    VariantModel<float> model = load_model(model_ckpt);
    DatasetPair data = load_downstream_data(data_cfg);
    check_dataset_matches(data.test, model.backbone->cfg, "test");
    return evaluate_top1(model, data.test);
}

std::vector<RunResult> run_ablate_m(const RunConfig& cfg, const std::vector<std::size_t>& m_list,
                                    const std::string& backbone_ckpt,
                                    const std::string& out_results) {
    cfg.validate();
    if (m_list.empty()) throw ConfigError("ablate-m: empty M list");
    auto backbone = load_backbone(backbone_ckpt);
    if (!backbone->frozen) freeze_all(*backbone);
    check_backbone_matches(*backbone, cfg);
    DatasetPair data = load_downstream_data(cfg);

    std::vector<RunResult> results;
    for (std::size_t m : m_list) {
        RunConfig run = cfg;
        run.sas.M = m;
        run.validate();
        results.push_back(finetune_once(run, VariantKind::FullSaS, backbone, data));
    }
    emit_results(results, out_results);
    return results;
}

RunConfig default_gradcheck_config() {
    RunConfig cfg;
    cfg.backbone = BackboneConfig{16, 1, 4, 16, 3, 4, 4, 3};
    cfg.sas = SasConfig{16, 3, 4, 2, 2, 2};
    cfg.train.seed = 0;
    cfg.train.precision = "f64";
    cfg.data.synth.classes = 3;
    return cfg;
}

GradcheckReport run_gradcheck(const RunConfig* cfg_or_null) {
    RunConfig cfg = cfg_or_null ? *cfg_or_null : default_gradcheck_config();
    cfg.backbone.validate();
    SasConfig sas_cfg = cfg.sas;
    sas_cfg.d = cfg.backbone.d;
    sas_cfg.L = cfg.backbone.L;
    sas_cfg.validate();

    Rng rng(cfg.train.seed);
    Rng init_rng = rng.derive(0x1u);
    auto backbone = std::make_shared<Backbone<double>>(init_backbone<double>(cfg.backbone, init_rng));
    freeze_all(*backbone);
    std::size_t classes = cfg.data.synth.classes;
    VariantModel<double> model =
        build_variant<double>(VariantKind::FullSaS, sas_cfg, backbone, classes, init_rng);

    // Move every trainable scalar off its init value; the zero up-projections
    // would otherwise zero out most adapter gradients and check nothing.
    Rng jitter = rng.derive(0x7u);
    std::vector<Tensor<double>> params = model.trainable();
    for (auto& p : params)
        for (std::size_t i = 0; i < p.numel(); ++i) p.at(i) += 0.05 * jitter.normal();

    const std::size_t batch = 2;
    Rng data_rng = rng.derive(0x9u);
    Tensor<double> images =
        Tensor<double>::random_normal({batch, cfg.backbone.pixels()}, data_rng, 1.0);
    std::vector<int> labels(batch);
    for (auto& l : labels) l = static_cast<int>(data_rng.below(classes));

    auto build_loss = [&](Graph<double>& g) {
        return g.softmax_cross_entropy(variant_forward(g, model, images), labels);
    };

    GradcheckReport report;
    for (auto& p : params) report.scalars_checked += p.numel();
    report.max_rel_err = finite_diff_check_params(build_loss, params);
    return report;
}

}  // namespace sas
