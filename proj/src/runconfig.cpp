#include "runconfig.hpp"

#include <charconv>
#include <fstream>
#include <functional>
#include <map>
#include <set>
#include <sstream>

#include "metrics.hpp"

namespace sas {

namespace {

constexpr const char* kVersionKey = "sas_config_version";
constexpr const char* kVersion = "1";

std::uint64_t to_u64(const std::string& key, const std::string& v) {
    std::uint64_t out = 0;
    auto res = std::from_chars(v.data(), v.data() + v.size(), out);
    if (res.ec != std::errc() || res.ptr != v.data() + v.size())
        throw ConfigError("config key '" + key + "': expected unsigned integer, got '" + v + "'");
    return out;
}

double to_f64(const std::string& key, const std::string& v) {
    double out = 0;
    auto res = std::from_chars(v.data(), v.data() + v.size(), out);
    if (res.ec != std::errc() || res.ptr != v.data() + v.size())
        throw ConfigError("config key '" + key + "': expected number, got '" + v + "'");
    return out;
}

std::vector<std::size_t> to_index_list(const std::string& key, const std::string& v) {
    std::vector<std::size_t> out;
    std::size_t start = 0;
    while (start <= v.size()) {
        std::size_t comma = v.find(',', start);
        std::string item = v.substr(start, comma - start);
        out.push_back(static_cast<std::size_t>(to_u64(key, item)));
        if (comma == std::string::npos) break;
        start = comma + 1;
    }
    return out;
}

}  // namespace

void RunConfig::validate() const {
    backbone.validate();
    SasConfig synced = sas;
    synced.d = backbone.d;
    synced.L = backbone.L;
    synced.validate();
    if (train.precision != "f32" && train.precision != "f64")
        throw ConfigError("train.precision must be f32 or f64, got '" + train.precision + "'");
    if (train.batch_size < 1) throw ConfigError("train.batch_size must be >= 1");
    if (train.warmup_frac < 0.0 || train.warmup_frac > 1.0)
        throw ConfigError("train.warmup_frac must lie in [0,1]");
    if (!(train.lr > 0.0)) throw ConfigError("train.lr must be positive");
    if (data.source != "synthetic" && data.source != "idx")
        throw ConfigError("data.source must be synthetic or idx, got '" + data.source + "'");
    if (data.source == "synthetic") {
        if (data.synth.classes < 2) throw ConfigError("data.classes must be >= 2");
        data.synth.shift.validate(data.synth.classes);
    }
}

std::string RunConfig::canonical() const {
    std::ostringstream os;
    os << kVersionKey << '=' << kVersion << ';';
    os << "backbone.image_side=" << backbone.image_side << ';';
    os << "backbone.channels=" << backbone.channels << ';';
    os << "backbone.patch=" << backbone.patch << ';';
    os << "backbone.d=" << backbone.d << ';';
    os << "backbone.L=" << backbone.L << ';';
    os << "backbone.heads=" << backbone.heads << ';';
    os << "backbone.mlp_ratio=" << backbone.mlp_ratio << ';';
    os << "backbone.pretrain_classes=" << backbone.num_classes_pretrain << ';';
    os << "sas.d_prime=" << sas.d_prime << ';';
    os << "sas.r=" << sas.r << ';';
    os << "sas.r_prime=" << sas.r_prime << ';';
    os << "sas.M=" << sas.M << ';';
    os << "train.lr=" << format_double(train.lr) << ';';
    os << "train.beta1=" << format_double(train.beta1) << ';';
    os << "train.beta2=" << format_double(train.beta2) << ';';
    os << "train.weight_decay=" << format_double(train.weight_decay) << ';';
    os << "train.warmup_frac=" << format_double(train.warmup_frac) << ';';
    os << "train.epochs=" << train.epochs << ';';
    os << "train.batch_size=" << train.batch_size << ';';
    os << "train.seed=" << train.seed << ';';
    os << "train.precision=" << train.precision << ';';
    os << "data.source=" << data.source << ';';
    os << "data.classes=" << data.synth.classes << ';';
    os << "data.per_class=" << data.synth.per_class << ';';
    os << "data.test_per_class=" << data.test_per_class << ';';
    os << "data.image_side=" << data.synth.image_side << ';';
    os << "data.channels=" << data.synth.channels << ';';
    os << "data.noise=" << format_double(data.synth.noise) << ';';
    os << "data.task_seed=" << data.synth.task_seed << ';';
    os << "data.seed=" << data.seed << ';';
    os << "data.few_shot_k=" << data.few_shot_k << ';';
    os << "data.shift.mean=" << format_double(data.synth.shift.mean_shift) << ';';
    os << "data.shift.contrast=" << format_double(data.synth.shift.contrast_scale) << ';';
    os << "data.shift.permutation=";
    if (data.synth.shift.label_permutation) {
        const auto& perm = *data.synth.shift.label_permutation;
        for (std::size_t i = 0; i < perm.size(); ++i) {
            if (i) os << ',';
            os << perm[i];
        }
    } else {
        os << "none";
    }
    os << ';';
    os << "data.idx.train_images=" << data.idx_train_images << ';';
    os << "data.idx.train_labels=" << data.idx_train_labels << ';';
    os << "data.idx.test_images=" << data.idx_test_images << ';';
    os << "data.idx.test_labels=" << data.idx_test_labels << ';';
    return os.str();
}

std::string RunConfig::hash() const { return hash_hex(canonical()); }

RunConfig parse_config_text(const std::string& text, const std::string& origin) {
    RunConfig cfg;
    using Setter = std::function<void(const std::string&, const std::string&)>;
    std::map<std::string, Setter> schema;
    auto u64_field = [](std::size_t& dst) {
        return [&dst](const std::string& k, const std::string& v) {
            dst = static_cast<std::size_t>(to_u64(k, v));
        };
    };
    auto seed_field = [](std::uint64_t& dst) {
        return [&dst](const std::string& k, const std::string& v) { dst = to_u64(k, v); };
    };
    auto f64_field = [](double& dst) {
        return [&dst](const std::string& k, const std::string& v) { dst = to_f64(k, v); };
    };
    auto str_field = [](std::string& dst) {
        return [&dst](const std::string&, const std::string& v) { dst = v; };
    };

    schema["backbone.image_side"] = u64_field(cfg.backbone.image_side);
    schema["backbone.channels"] = u64_field(cfg.backbone.channels);
    schema["backbone.patch"] = u64_field(cfg.backbone.patch);
    schema["backbone.d"] = u64_field(cfg.backbone.d);
    schema["backbone.L"] = u64_field(cfg.backbone.L);
    schema["backbone.heads"] = u64_field(cfg.backbone.heads);
    schema["backbone.mlp_ratio"] = u64_field(cfg.backbone.mlp_ratio);
    schema["backbone.pretrain_classes"] = u64_field(cfg.backbone.num_classes_pretrain);
    schema["sas.d_prime"] = u64_field(cfg.sas.d_prime);
    schema["sas.r"] = u64_field(cfg.sas.r);
    schema["sas.r_prime"] = u64_field(cfg.sas.r_prime);
    schema["sas.M"] = u64_field(cfg.sas.M);
    schema["train.lr"] = f64_field(cfg.train.lr);
    schema["train.beta1"] = f64_field(cfg.train.beta1);
    schema["train.beta2"] = f64_field(cfg.train.beta2);
    schema["train.weight_decay"] = f64_field(cfg.train.weight_decay);
    schema["train.warmup_frac"] = f64_field(cfg.train.warmup_frac);
    schema["train.epochs"] = u64_field(cfg.train.epochs);
    schema["train.batch_size"] = u64_field(cfg.train.batch_size);
    schema["train.seed"] = seed_field(cfg.train.seed);
    schema["train.precision"] = str_field(cfg.train.precision);
    schema["data.source"] = str_field(cfg.data.source);
    schema["data.classes"] = u64_field(cfg.data.synth.classes);
    schema["data.per_class"] = u64_field(cfg.data.synth.per_class);
    schema["data.test_per_class"] = u64_field(cfg.data.test_per_class);
    schema["data.image_side"] = u64_field(cfg.data.synth.image_side);
    schema["data.channels"] = u64_field(cfg.data.synth.channels);
    schema["data.noise"] = f64_field(cfg.data.synth.noise);
    schema["data.task_seed"] = seed_field(cfg.data.synth.task_seed);
    schema["data.seed"] = seed_field(cfg.data.seed);
    schema["data.few_shot_k"] = u64_field(cfg.data.few_shot_k);
    schema["data.shift.mean"] = f64_field(cfg.data.synth.shift.mean_shift);
    schema["data.shift.contrast"] = f64_field(cfg.data.synth.shift.contrast_scale);
    schema["data.shift.permutation"] = [&cfg](const std::string& k, const std::string& v) {
        if (v == "none")
            cfg.data.synth.shift.label_permutation.reset();
        else
            cfg.data.synth.shift.label_permutation = to_index_list(k, v);
    };
    schema["data.idx.train_images"] = str_field(cfg.data.idx_train_images);
    schema["data.idx.train_labels"] = str_field(cfg.data.idx_train_labels);
    schema["data.idx.test_images"] = str_field(cfg.data.idx_test_images);
    schema["data.idx.test_labels"] = str_field(cfg.data.idx_test_labels);

    const std::set<std::string> required = {
        "train.lr",           "train.beta1",      "train.beta2",
        "train.weight_decay", "train.warmup_frac", "train.epochs",
        "train.batch_size",   "train.seed",       "train.precision",
    };

    std::set<std::string> seen;
    bool version_seen = false;
    std::istringstream in(text);
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        std::size_t hash_pos = line.find('#');
        if (hash_pos != std::string::npos) line.erase(hash_pos);
        std::istringstream ls(line);
        std::string key, value;
        if (!(ls >> key)) continue;
        if (!(ls >> value))
            throw ConfigError(origin + ":" + std::to_string(lineno) + ": key '" + key +
                              "' has no value");
        std::string extra;
        if (ls >> extra)
            throw ConfigError(origin + ":" + std::to_string(lineno) + ": trailing content '" +
                              extra + "' after value");
        if (key == kVersionKey) {
            if (value != kVersion)
                throw ConfigError(origin + ": unsupported config version '" + value +
                                  "' (expected " + kVersion + ")");
            version_seen = true;
            continue;
        }
        auto it = schema.find(key);
        if (it == schema.end())
            throw ConfigError(origin + ":" + std::to_string(lineno) + ": unknown config key '" +
                              key + "'");
        if (!seen.insert(key).second)
            throw ConfigError(origin + ":" + std::to_string(lineno) + ": duplicate config key '" +
                              key + "'");
        it->second(key, value);
    }
    if (!version_seen)
        throw ConfigError(origin + ": missing required key '" + std::string(kVersionKey) + "'");
    for (const auto& key : required)
        if (!seen.count(key))
            throw ConfigError(origin + ": missing required key '" + key + "'");

    cfg.sas.d = cfg.backbone.d;
    cfg.sas.L = cfg.backbone.L;
    cfg.validate();
    return cfg;
}

RunConfig parse_config_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file: " + path);
    std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return parse_config_text(text, path);
}

std::string write_config_text(const RunConfig& cfg) {
    std::string canon = cfg.canonical();
    std::ostringstream os;
    // canonical() is key=value;... ; re-emit as the line format parse expects
    std::size_t start = 0;
    while (start < canon.size()) {
        std::size_t semi = canon.find(';', start);
        std::string item = canon.substr(start, semi - start);
        std::size_t eq = item.find('=');
        std::string key = item.substr(0, eq);
        std::string value = item.substr(eq + 1);
        if (!value.empty()) os << key << ' ' << value << '\n';
        start = semi + 1;
    }
    return os.str();
}

}  // namespace sas
