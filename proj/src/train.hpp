#pragma once

#include <cmath>
#include <memory>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "data.hpp"
#include "optim.hpp"
#include "runconfig.hpp"
#include "variants.hpp"

namespace sas {

// Mini-batch AdamW loop shared by pretraining and fine-tuning. forward_loss
// receives a fresh graph per step and must return the scalar batch loss.
// Throws NumericError with the step index if the loss goes non-finite.
template <class T, class ForwardLoss>
void run_training(std::vector<Tensor<T>> params, const Dataset& train, const TrainConfig& tc,
                  ForwardLoss&& forward_loss, std::vector<double>* loss_log = nullptr) {
    if (train.size() == 0) throw DataError("training dataset is empty");
    std::size_t batches_per_epoch = (train.size() + tc.batch_size - 1) / tc.batch_size;
    std::size_t total_steps = tc.epochs * batches_per_epoch;
    std::size_t warmup = static_cast<std::size_t>(
        std::llround(tc.warmup_frac * static_cast<double>(total_steps)));

    AdamW<T> opt(std::move(params), tc.beta1, tc.beta2, tc.weight_decay);
    Rng shuffle_rng = Rng(tc.seed).derive(0x5u);
    std::vector<std::size_t> order(train.size());
    std::iota(order.begin(), order.end(), std::size_t{0});

    std::size_t step = 0;
    for (std::size_t epoch = 0; epoch < tc.epochs; ++epoch) {
        for (std::size_t i = order.size(); i > 1; --i) {
            std::size_t j = static_cast<std::size_t>(shuffle_rng.below(i));
            std::swap(order[i - 1], order[j]);
        }
        for (std::size_t b = 0; b < batches_per_epoch; ++b) {
            std::size_t lo = b * tc.batch_size;
            std::size_t hi = std::min(lo + tc.batch_size, order.size());
            std::span<const std::size_t> idx(order.data() + lo, hi - lo);
            Tensor<T> images = make_batch<T>(train, idx);
            std::vector<int> labels = batch_labels(train, idx);
            Graph<T> g;
            Tensor<T> loss = forward_loss(g, images, labels);
            double lv = static_cast<double>(loss.at(0));
            if (!std::isfinite(lv))
                throw NumericError("training diverged: non-finite loss at step " +
                                   std::to_string(step));
            if (loss_log) loss_log->push_back(lv);
            g.backward(loss);
            opt.step(cosine_warmup_lr(step, total_steps, warmup, tc.lr));
            ++step;
        }
    }
}

// Top-1 accuracy (percent) of an arbitrary logits function over a dataset.
// Argmax ties break toward the lowest class index.
template <class T, class Forward>
double evaluate_top1_fn(Forward&& forward, const Dataset& ds, std::size_t eval_batch = 64) {
    if (ds.size() == 0) throw DataError("evaluate: empty dataset");
    std::size_t correct = 0;
    std::vector<std::size_t> idx(eval_batch);
    for (std::size_t lo = 0; lo < ds.size(); lo += eval_batch) {
        std::size_t hi = std::min(lo + eval_batch, ds.size());
        idx.resize(hi - lo);
        std::iota(idx.begin(), idx.end(), lo);
        Tensor<T> images = make_batch<T>(ds, idx);
        Graph<T> g;
        Tensor<T> logits = forward(g, images);
        std::size_t classes = logits.cols();
        for (std::size_t r = 0; r < logits.rows(); ++r) {
            std::size_t best = 0;
            for (std::size_t j = 1; j < classes; ++j)
                if (logits.at(r, j) > logits.at(r, best)) best = j;
            if (static_cast<int>(best) == ds.labels[lo + r]) ++correct;
        }
    }
    return 100.0 * static_cast<double>(correct) / static_cast<double>(ds.size());
}

template <class T>
double evaluate_top1(VariantModel<T>& model, const Dataset& ds, std::size_t eval_batch = 64) {
    return evaluate_top1_fn<T>(
        [&model](Graph<T>& g, const Tensor<T>& images) {
            return variant_forward(g, model, images);
        },
        ds, eval_batch);
}

template <class T>
struct PretrainOutcome {
    std::shared_ptr<Backbone<T>> backbone;  // frozen; pretrain head discarded
    double final_train_acc = 0.0;
    std::vector<double> losses;
};

// Manufactures the frozen "foundation" backbone by training on the unshifted
// source task, then freezing everything and dropping the pretrain head.
template <class T>
PretrainOutcome<T> pretrain_toy(const BackboneConfig& bcfg, const Dataset& source_train,
                                const TrainConfig& tc) {
    bcfg.validate();
    if (source_train.size() == 0) throw DataError("pretrain: empty dataset");
    if (source_train.pixels() != bcfg.pixels())
        throw ConfigError("pretrain: dataset images (" + std::to_string(source_train.pixels()) +
                          " px) do not match backbone input (" + std::to_string(bcfg.pixels()) +
                          " px)");
    Rng rng(tc.seed);
    Rng init_rng = rng.derive(0x1u);
    auto backbone = std::make_shared<Backbone<T>>(init_backbone<T>(bcfg, init_rng));
    Head<T> head = init_head<T>(bcfg.d, bcfg.num_classes_pretrain, init_rng);

    std::vector<Tensor<T>> params;
    backbone->for_each_param([&params](const std::string&, Tensor<T>& t) { params.push_back(t); });
    head.for_each_param([&params](const std::string&, Tensor<T>& t) { params.push_back(t); });

    PretrainOutcome<T> out;
    run_training<T>(
        params, source_train, tc,
        [&](Graph<T>& g, const Tensor<T>& images, const std::vector<int>& labels) {
            Tensor<T> tok = patch_embed(g, images, *backbone);
            auto acts = backbone_forward(g, tok, *backbone);
            Tensor<T> logits = head_forward(g, acts.pooled, head);
            return g.softmax_cross_entropy(logits, labels);
        },
        &out.losses);

    out.final_train_acc = evaluate_top1_fn<T>(
        [&](Graph<T>& g, const Tensor<T>& images) {
            Tensor<T> tok = patch_embed(g, images, *backbone);
            return head_forward(g, backbone_forward(g, tok, *backbone).pooled, head);
        },
        source_train);
    freeze_all(*backbone);
    out.backbone = std::move(backbone);
    return out;
}

// Trains one PETL variant on a frozen backbone. Only the variant's trainable
// set (adapter + head) enters the optimizer; the backbone is untouched.
template <class T>
VariantModel<T> finetune_train(VariantKind kind, const SasConfig& sas_cfg,
                               std::shared_ptr<Backbone<T>> backbone, const Dataset& train,
                               const TrainConfig& tc) {
    Rng rng(tc.seed);
    Rng init_rng = rng.derive(0x2u);
    VariantModel<T> model =
        build_variant<T>(kind, sas_cfg, std::move(backbone), train.num_classes, init_rng);
    if (tc.epochs > 0) {
        run_training<T>(model.trainable(), train, tc,
                        [&model](Graph<T>& g, const Tensor<T>& images,
                                 const std::vector<int>& labels) {
                            return g.softmax_cross_entropy(variant_forward(g, model, images),
                                                           labels);
                        });
    }
    return model;
}

}  // namespace sas
