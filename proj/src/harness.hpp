#pragma once

#include <optional>
#include <string>
#include <vector>

#include "metrics.hpp"
#include "runconfig.hpp"
#include "variants.hpp"

namespace sas {

// Command-level entry points behind the C API and the CLI. Each one loads or
// generates what it needs from a RunConfig, runs, and persists results in the
// documented formats.

struct DatasetPair {
    Dataset train;
    Dataset test;
};

// Downstream data per the config: synthetic generation (shift applied) or IDX
// files. Applies few_shot_k subsampling to the train split when requested.
DatasetPair load_downstream_data(const RunConfig& cfg);

// Source-task data for pretraining: same generator, shift forced to identity.
Dataset load_source_data(const RunConfig& cfg);

struct PretrainReport {
    double final_train_acc = 0.0;
    std::size_t steps = 0;
};

PretrainReport run_pretrain(const RunConfig& cfg, const std::string& out_ckpt);

RunResult run_finetune(const RunConfig& cfg, VariantKind kind, const std::string& backbone_ckpt,
                       const std::string& out_results,
                       const std::optional<std::string>& save_model_path = std::nullopt);

// Variant of run_finetune for callers that already hold the backbone and the
// data (keeps multi-run protocols off the disk round trip).
RunResult finetune_once(const RunConfig& cfg, VariantKind kind,
                        std::shared_ptr<Backbone<float>> backbone, const DatasetPair& data);

double run_eval(const std::string& model_ckpt, const RunConfig& data_cfg);

std::vector<RunResult> run_ablate_m(const RunConfig& cfg, const std::vector<std::size_t>& m_list,
                                    const std::string& backbone_ckpt,
                                    const std::string& out_results);

struct GradcheckReport {
    double max_rel_err = 0.0;
    std::size_t scalars_checked = 0;
};

// Full-model finite-difference verification in 64-bit mode on a small
// FullSaS configuration (the config's dimensions, batch 2). Trainable
// parameters are jittered off their init values first: the zero-at-init state
// zeroes most adapter gradients, which would make the comparison vacuous.
GradcheckReport run_gradcheck(const RunConfig* cfg_or_null);

RunConfig default_gradcheck_config();

}  // namespace sas
