#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <unistd.h>

#include <cmath>
#include <cstdio>
#include <fstream>
#include <string>

#include "sas/sas.h"

namespace {

std::string tmp_path(const std::string& name) {
    return "/tmp/sas_capi_" + std::to_string(::getpid()) + "_" + name;
}

void write_file(const std::string& path, const std::string& text) {
    std::ofstream out(path, std::ios::trunc);
    REQUIRE(out);
    out << text;
}

// small end-to-end config: tiny backbone, tiny data, a few epochs
std::string smoke_config() {
    return "sas_config_version 1\n"
           "backbone.image_side 16\n"
           "backbone.patch 4\n"
           "backbone.d 16\n"
           "backbone.L 2\n"
           "backbone.heads 4\n"
           "backbone.mlp_ratio 2\n"
           "backbone.pretrain_classes 3\n"
           "sas.d_prime 2\n"
           "sas.r 2\n"
           "sas.r_prime 2\n"
           "sas.M 2\n"
           "train.lr 0.002\n"
           "train.beta1 0.9\n"
           "train.beta2 0.999\n"
           "train.weight_decay 0.0001\n"
           "train.warmup_frac 0.1\n"
           "train.epochs 4\n"
           "train.batch_size 16\n"
           "train.seed 0\n"
           "train.precision f32\n"
           "data.classes 3\n"
           "data.per_class 12\n"
           "data.test_per_class 12\n"
           "data.noise 0.2\n";
}

struct Handle {
    sas_run_config* cfg = nullptr;
    ~Handle() { sas_run_config_free(cfg); }
};

}  // namespace

TEST_CASE("version and status names") {
    CHECK(std::string(sas_version()) == "0.1.0");
    CHECK(std::string(sas_status_name(SAS_OK)) == "ok");
    CHECK(std::string(sas_status_name(SAS_ERR_CONFIG)) == "config-error");
    CHECK(std::string(sas_status_name(SAS_ERR_DATA)) == "data-error");
    CHECK(std::string(sas_status_name(SAS_ERR_NUMERIC)) == "numeric-error");
}

TEST_CASE("param count sweep through the C surface") {
    CHECK(sas_adapter_param_count(768, 12, 8, 8, 4, 1) == 19200);
    CHECK(sas_adapter_param_count(768, 12, 8, 8, 4, 3) == 31488);
    CHECK(sas_adapter_param_count(768, 12, 8, 8, 4, 4) == 37632);
    CHECK(sas_adapter_param_count(768, 12, 8, 8, 4, 6) == 49920);
    CHECK(sas_adapter_param_count(768, 12, 8, 8, 4, 13) == 0);  // M > L
    CHECK(sas_adapter_param_count(768, 12, 0, 8, 4, 1) == 0);
}

TEST_CASE("ppt through the C surface") {
    CHECK(sas_ppt_score(52.94, 0) == doctest::Approx(0.5294));
    CHECK(std::abs(sas_ppt_score(75.20, 50000) - 0.750) < 0.002);
}

TEST_CASE("config open failures carry messages and config status") {
    Handle h;
    char err[256] = {0};
    sas_status st = sas_run_config_open("/tmp/definitely_missing.cfg", &h.cfg, err, sizeof err);
    CHECK(st == SAS_ERR_CONFIG);
    CHECK(std::string(err).find("cannot open") != std::string::npos);
    CHECK(h.cfg == nullptr);

    std::string bad = tmp_path("bad.cfg");
    write_file(bad, "sas_config_version 1\nbogus.key 7\n");
    st = sas_run_config_open(bad.c_str(), &h.cfg, err, sizeof err);
    CHECK(st == SAS_ERR_CONFIG);
    CHECK(std::string(err).find("bogus.key") != std::string::npos);
    std::remove(bad.c_str());

    // tiny error buffer must stay terminated
    std::string missing_train = tmp_path("mt.cfg");
    write_file(missing_train, "sas_config_version 1\n");
    char small_err[8] = {0};
    st = sas_run_config_open(missing_train.c_str(), &h.cfg, small_err, sizeof small_err);
    CHECK(st == SAS_ERR_CONFIG);
    CHECK(small_err[7] == '\0');
    std::remove(missing_train.c_str());
}

TEST_CASE("gradcheck with the built-in small config") {
    double err = 0.0;
    uint64_t checked = 0;
    char errbuf[256] = {0};
    sas_status st = sas_gradcheck(nullptr, &err, &checked, errbuf, sizeof errbuf);
    REQUIRE(st == SAS_OK);
    CHECK(err < 1e-4);
    CHECK(checked > 200);
}

TEST_CASE("pipeline smoke: pretrain, finetune, eval, ablate") {
    std::string cfg_path = tmp_path("smoke.cfg");
    write_file(cfg_path, smoke_config());
    Handle h;
    char err[512] = {0};
    REQUIRE(sas_run_config_open(cfg_path.c_str(), &h.cfg, err, sizeof err) == SAS_OK);

    char hash[17] = {0};
    REQUIRE(sas_run_config_hash(h.cfg, hash, sizeof hash) == SAS_OK);
    CHECK(std::string(hash).size() == 16);

    std::string ckpt = tmp_path("backbone.ckpt");
    double acc = 0.0;
    REQUIRE(sas_pretrain(h.cfg, ckpt.c_str(), &acc, err, sizeof err) == SAS_OK);
    CHECK(acc > 30.0);  // trained at all; tiny budget

    std::string results = tmp_path("results.csv");
    std::string model = tmp_path("model.ckpt");
    REQUIRE(sas_finetune(h.cfg, "full-sas", ckpt.c_str(), results.c_str(), model.c_str(), err,
                         sizeof err) == SAS_OK);
    {
        std::ifstream in(results);
        REQUIRE(in);
        std::string header;
        std::getline(in, header);
        CHECK(header == "variant,adapter_params,top1,ppt,seed,config_hash,wall_time");
        std::string row;
        REQUIRE(std::getline(in, row));
        CHECK(row.find("full-sas") == 0);
        CHECK(row.find(hash) != std::string::npos);
    }

    double top1 = 0.0;
    REQUIRE(sas_eval(model.c_str(), h.cfg, &top1, err, sizeof err) == SAS_OK);
    CHECK(top1 >= 0.0);
    CHECK(top1 <= 100.0);

    std::string ablate = tmp_path("ablate.csv");
    REQUIRE(sas_ablate_m(h.cfg, "1,2", ckpt.c_str(), ablate.c_str(), err, sizeof err) == SAS_OK);
    {
        std::ifstream in(ablate);
        std::string line;
        int rows = 0;
        std::getline(in, line);  // header
        while (std::getline(in, line))
            if (!line.empty()) ++rows;
        CHECK(rows == 2);
    }

    // unknown variant and bad m-list are config errors
    CHECK(sas_finetune(h.cfg, "lora", ckpt.c_str(), results.c_str(), nullptr, err, sizeof err) ==
          SAS_ERR_CONFIG);
    CHECK(sas_ablate_m(h.cfg, "1,x", ckpt.c_str(), ablate.c_str(), err, sizeof err) ==
          SAS_ERR_CONFIG);
    // missing backbone checkpoint is a data-side failure
    CHECK(sas_finetune(h.cfg, "full-sas", "/tmp/missing.ckpt", results.c_str(), nullptr, err,
                       sizeof err) == SAS_ERR_DATA);

    for (const auto& p : {cfg_path, ckpt, results, model, ablate,
                          results.substr(0, results.size() - 4) + ".jsonl",
                          ablate.substr(0, ablate.size() - 4) + ".jsonl"})
        std::remove(p.c_str());
}
