// Command-line driver for the SaS library. Everything goes through the
// shared library's C interface; this file never touches the C++ internals.
#include <cinttypes>
#include <cstdio>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "sas/sas.h"

namespace {

constexpr size_t kErrLen = 1024;

int fail(sas_status status, const char* errbuf) {
    std::fprintf(stderr, "error (%s): %s\n", sas_status_name(status), errbuf);
    return static_cast<int>(status);
}

struct ConfigHandle {
    sas_run_config* cfg = nullptr;
    ~ConfigHandle() { sas_run_config_free(cfg); }
};

int open_config(const std::string& path, ConfigHandle& handle, char* errbuf) {
    sas_status st = sas_run_config_open(path.c_str(), &handle.cfg, errbuf, kErrLen);
    if (st != SAS_OK) return fail(st, errbuf);
    return 0;
}

std::vector<uint64_t> split_m_list(const std::string& s) {
    std::vector<uint64_t> out;
    size_t start = 0;
    while (start <= s.size()) {
        size_t comma = s.find(',', start);
        out.push_back(std::stoull(s.substr(start, comma - start)));
        if (comma == std::string::npos) break;
        start = comma + 1;
    }
    return out;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"SaS parameter-efficient transfer learning toolkit"};
    app.require_subcommand(1);
    char errbuf[kErrLen] = {0};

    // params: adapter parameter accounting, with an M sweep
    auto* params = app.add_subcommand("params", "Print adapter parameter counts for an M sweep");
    uint64_t p_d = 768, p_layers = 12, p_dprime = 8, p_rprime = 8, p_r = 4;
    std::string p_mlist = "1,3,4,6";
    params->add_option("--d", p_d, "Backbone width");
    params->add_option("--L", p_layers, "Backbone block count");
    params->add_option("--d-prime", p_dprime, "Shared bottleneck width");
    params->add_option("--r-prime", p_rprime, "Hypernet input rank");
    params->add_option("--r", p_r, "Hypernet rank");
    params->add_option("--m-list", p_mlist, "Comma-separated hypernet counts");
    params->callback([&]() {
        std::printf("d=%" PRIu64 " L=%" PRIu64 " d'=%" PRIu64 " r'=%" PRIu64 " r=%" PRIu64 "\n",
                    p_d, p_layers, p_dprime, p_rprime, p_r);
        std::printf("%-4s %-14s %s\n", "M", "params", "params(M)");
        for (uint64_t m : split_m_list(p_mlist)) {
            uint64_t count = sas_adapter_param_count(p_d, p_layers, p_dprime, p_rprime, p_r, m);
            if (count == 0) {
                std::fprintf(stderr, "error (config-error): invalid dimensions for M=%" PRIu64 "\n", m);
                std::exit(SAS_ERR_CONFIG);
            }
            std::printf("%-4" PRIu64 " %-14" PRIu64 " %.3f\n", m, count,
                        static_cast<double>(count) / 1e6);
        }
    });

    // ppt <acc> <params>
    auto* ppt = app.add_subcommand("ppt", "Performance-parameter trade-off score");
    double ppt_acc = 0.0;
    uint64_t ppt_params = 0;
    ppt->add_option("acc", ppt_acc, "Top-1 accuracy in percent")->required();
    ppt->add_option("params", ppt_params, "Adapter parameter count")->required();
    ppt->callback(
        [&]() { std::printf("%.6f\n", sas_ppt_score(ppt_acc, ppt_params)); });

    // gradcheck [--config <file>] [--tol <t>]
    auto* gradcheck = app.add_subcommand("gradcheck", "Finite-difference gradient verification");
    std::string gc_config;
    double gc_tol = 1e-4;
    gradcheck->add_option("--config", gc_config, "Run config (defaults to a built-in small one)");
    gradcheck->add_option("--tol", gc_tol, "Max relative error tolerance");
    gradcheck->callback([&]() {
        ConfigHandle handle;
        if (!gc_config.empty()) {
            int rc = open_config(gc_config, handle, errbuf);
            if (rc) std::exit(rc);
        }
        double err = 0.0;
        uint64_t checked = 0;
        sas_status st = sas_gradcheck(handle.cfg, &err, &checked, errbuf, kErrLen);
        if (st != SAS_OK) std::exit(fail(st, errbuf));
        bool ok = err < gc_tol;
        std::printf("checked %" PRIu64 " trainable scalars, max relative error %.3g (tol %.3g): %s\n",
                    checked, err, gc_tol, ok ? "OK" : "FAIL");
        if (!ok) std::exit(SAS_ERR_NUMERIC);
    });

    // pretrain --config <file> --out <ckpt>
    auto* pretrain = app.add_subcommand("pretrain", "Train and freeze the toy foundation backbone");
    std::string pt_config, pt_out;
    pretrain->add_option("--config", pt_config, "Run config file")->required();
    pretrain->add_option("--out", pt_out, "Output backbone checkpoint")->required();
    pretrain->callback([&]() {
        ConfigHandle handle;
        int rc = open_config(pt_config, handle, errbuf);
        if (rc) std::exit(rc);
        double acc = 0.0;
        sas_status st = sas_pretrain(handle.cfg, pt_out.c_str(), &acc, errbuf, kErrLen);
        if (st != SAS_OK) std::exit(fail(st, errbuf));
        std::printf("pretrained backbone saved to %s (source train top-1 %.2f%%)\n",
                    pt_out.c_str(), acc);
    });

    // finetune --variant <kind> --backbone <ckpt> --config <file> --out <results>
    auto* finetune = app.add_subcommand("finetune", "Fine-tune one PETL variant");
    std::string ft_variant, ft_backbone, ft_config, ft_out, ft_save;
    finetune->add_option("--variant", ft_variant,
                         "linear-probe|bias-only|shared-only|shared-bias|full-sas")
        ->required();
    finetune->add_option("--backbone", ft_backbone, "Frozen backbone checkpoint")->required();
    finetune->add_option("--config", ft_config, "Run config file")->required();
    finetune->add_option("--out", ft_out, "Results file (CSV; a .jsonl log lands next to it)")
        ->required();
    finetune->add_option("--save-model", ft_save, "Also save the fine-tuned model checkpoint");
    finetune->callback([&]() {
        ConfigHandle handle;
        int rc = open_config(ft_config, handle, errbuf);
        if (rc) std::exit(rc);
        sas_status st =
            sas_finetune(handle.cfg, ft_variant.c_str(), ft_backbone.c_str(), ft_out.c_str(),
                         ft_save.empty() ? nullptr : ft_save.c_str(), errbuf, kErrLen);
        if (st != SAS_OK) std::exit(fail(st, errbuf));
        std::printf("results written to %s\n", ft_out.c_str());
    });

    // eval --model <ckpt> --data <config>
    auto* eval = app.add_subcommand("eval", "Evaluate a saved model on a test split");
    std::string ev_model, ev_data;
    eval->add_option("--model", ev_model, "Model checkpoint")->required();
    eval->add_option("--data", ev_data, "Run config describing the data")->required();
    eval->callback([&]() {
        ConfigHandle handle;
        int rc = open_config(ev_data, handle, errbuf);
        if (rc) std::exit(rc);
        double top1 = 0.0;
        sas_status st = sas_eval(ev_model.c_str(), handle.cfg, &top1, errbuf, kErrLen);
        if (st != SAS_OK) std::exit(fail(st, errbuf));
        std::printf("top-1 %.2f%%\n", top1);
    });

    // ablate-m --m-list 1,3,4,6 --config <file> --backbone <ckpt> --out <results>
    auto* ablate = app.add_subcommand("ablate-m", "Full-sas fine-tuning sweep over M");
    std::string ab_mlist = "1,3,4,6", ab_config, ab_backbone, ab_out;
    ablate->add_option("--m-list", ab_mlist, "Comma-separated hypernet counts");
    ablate->add_option("--config", ab_config, "Run config file")->required();
    ablate->add_option("--backbone", ab_backbone, "Frozen backbone checkpoint")->required();
    ablate->add_option("--out", ab_out, "Results file")->required();
    ablate->callback([&]() {
        ConfigHandle handle;
        int rc = open_config(ab_config, handle, errbuf);
        if (rc) std::exit(rc);
        sas_status st = sas_ablate_m(handle.cfg, ab_mlist.c_str(), ab_backbone.c_str(),
                                     ab_out.c_str(), errbuf, kErrLen);
        if (st != SAS_OK) std::exit(fail(st, errbuf));
        std::printf("results written to %s\n", ab_out.c_str());
    });

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int rc = app.exit(e);
        return rc == 0 ? 0 : SAS_ERR_CONFIG;
    }
    return 0;
}
