#include "sas/sas.h"

#include <cstring>
#include <new>
#include <string>

#include "harness.hpp"

using namespace sas;

struct sas_run_config {
    RunConfig cfg;
};

namespace {

void put_error(char* errbuf, size_t errbuf_len, const std::string& msg) {
    if (!errbuf || errbuf_len == 0) return;
    size_t n = std::min(msg.size(), errbuf_len - 1);
    std::memcpy(errbuf, msg.data(), n);
    errbuf[n] = '\0';
}

sas_status status_for(const Error& e) {
    switch (e.kind()) {
        case ErrorKind::Config: return SAS_ERR_CONFIG;
        case ErrorKind::Data: return SAS_ERR_DATA;
        case ErrorKind::Io: return SAS_ERR_DATA;
        default: return SAS_ERR_NUMERIC;
    }
}

template <class Fn>
sas_status guarded(char* errbuf, size_t errbuf_len, Fn&& fn) {
    try {
        fn();
        return SAS_OK;
    } catch (const Error& e) {
        put_error(errbuf, errbuf_len, e.what());
        return status_for(e);
    } catch (const std::exception& e) {
        put_error(errbuf, errbuf_len, e.what());
        return SAS_ERR_NUMERIC;
    }
}

std::vector<std::size_t> parse_m_list(const char* m_list) {
    if (!m_list || !*m_list) throw ConfigError("empty M list");
    std::vector<std::size_t> out;
    std::string s(m_list);
    std::size_t start = 0;
    while (start <= s.size()) {
        std::size_t comma = s.find(',', start);
        std::string item = s.substr(start, comma - start);
        try {
            std::size_t used = 0;
            unsigned long v = std::stoul(item, &used);
            if (used != item.size() || v == 0) throw std::invalid_argument(item);
            out.push_back(static_cast<std::size_t>(v));
        } catch (const std::exception&) {
            throw ConfigError("bad M list entry '" + item + "' (expected positive integers)");
        }
        if (comma == std::string::npos) break;
        start = comma + 1;
    }
    return out;
}

}  // namespace

extern "C" {

const char* sas_version(void) { return "0.1.0"; }

const char* sas_status_name(sas_status status) {
    switch (status) {
        case SAS_OK: return "ok";
        case SAS_ERR_CONFIG: return "config-error";
        case SAS_ERR_DATA: return "data-error";
        case SAS_ERR_NUMERIC: return "numeric-error";
    }
    return "unknown";
}

uint64_t sas_adapter_param_count(uint64_t d, uint64_t num_layers, uint64_t d_prime,
                                 uint64_t r_prime, uint64_t r, uint64_t m) {
    try {
        SasConfig cfg;
        cfg.d = d;
        cfg.L = num_layers;
        cfg.d_prime = d_prime;
        cfg.r_prime = r_prime;
        cfg.r = r;
        cfg.M = m;
        return param_count(cfg);
    } catch (const std::exception&) {
        return 0;
    }
}

double sas_ppt_score(double top1_percent, uint64_t adapter_params) {
    return ppt_score(top1_percent, adapter_params);
}

sas_status sas_run_config_open(const char* path, sas_run_config** out, char* errbuf,
                               size_t errbuf_len) {
    if (!path || !out) {
        put_error(errbuf, errbuf_len, "null argument");
        return SAS_ERR_CONFIG;
    }
    *out = nullptr;
    return guarded(errbuf, errbuf_len, [&] {
        auto handle = new sas_run_config{parse_config_file(path)};
        *out = handle;
    });
}

void sas_run_config_free(sas_run_config* cfg) { delete cfg; }

sas_status sas_run_config_hash(const sas_run_config* cfg, char* out, size_t out_len) {
    if (!cfg || !out || out_len < 17) return SAS_ERR_CONFIG;
    std::string h = cfg->cfg.hash();
    std::memcpy(out, h.data(), 16);
    out[16] = '\0';
    return SAS_OK;
}

sas_status sas_pretrain(const sas_run_config* cfg, const char* out_ckpt, double* final_train_acc,
                        char* errbuf, size_t errbuf_len) {
    if (!cfg || !out_ckpt) {
        put_error(errbuf, errbuf_len, "null argument");
        return SAS_ERR_CONFIG;
    }
    return guarded(errbuf, errbuf_len, [&] {
        PretrainReport report = run_pretrain(cfg->cfg, out_ckpt);
        if (final_train_acc) *final_train_acc = report.final_train_acc;
    });
}

sas_status sas_finetune(const sas_run_config* cfg, const char* variant, const char* backbone_ckpt,
                        const char* out_results, const char* save_model_or_null, char* errbuf,
                        size_t errbuf_len) {
    if (!cfg || !variant || !backbone_ckpt || !out_results) {
        put_error(errbuf, errbuf_len, "null argument");
        return SAS_ERR_CONFIG;
    }
    return guarded(errbuf, errbuf_len, [&] {
        std::optional<std::string> save;
        if (save_model_or_null) save = save_model_or_null;
        run_finetune(cfg->cfg, parse_variant(variant), backbone_ckpt, out_results, save);
    });
}

sas_status sas_eval(const char* model_ckpt, const sas_run_config* cfg, double* top1, char* errbuf,
                    size_t errbuf_len) {
    if (!model_ckpt || !cfg || !top1) {
        put_error(errbuf, errbuf_len, "null argument");
        return SAS_ERR_CONFIG;
    }
    return guarded(errbuf, errbuf_len, [&] { *top1 = run_eval(model_ckpt, cfg->cfg); });
}

sas_status sas_ablate_m(const sas_run_config* cfg, const char* m_list, const char* backbone_ckpt,
                        const char* out_results, char* errbuf, size_t errbuf_len) {
    if (!cfg || !backbone_ckpt || !out_results) {
        put_error(errbuf, errbuf_len, "null argument");
        return SAS_ERR_CONFIG;
    }
    return guarded(errbuf, errbuf_len, [&] {
        run_ablate_m(cfg->cfg, parse_m_list(m_list), backbone_ckpt, out_results);
    });
}

sas_status sas_gradcheck(const sas_run_config* cfg_or_null, double* max_rel_err,
                         uint64_t* scalars_checked, char* errbuf, size_t errbuf_len) {
    return guarded(errbuf, errbuf_len, [&] {
        GradcheckReport report = run_gradcheck(cfg_or_null ? &cfg_or_null->cfg : nullptr);
        if (max_rel_err) *max_rel_err = report.max_rel_err;
        if (scalars_checked) *scalars_checked = report.scalars_checked;
    });
}

}  // extern "C"
