#pragma once

#include <cstdint>
#include <string>

#include "adapter.hpp"
#include "backbone.hpp"
#include "data.hpp"

namespace sas {

struct TrainConfig {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double weight_decay = 1e-4;
    double warmup_frac = 0.1;  // fraction of total steps spent in linear warmup
    std::size_t epochs = 100;
    std::size_t batch_size = 32;
    std::uint64_t seed = 0;
    std::string precision = "f32";  // f32 | f64
};

struct DataConfig {
    std::string source = "synthetic";  // synthetic | idx
    SyntheticSpec synth;
    std::size_t test_per_class = 50;
    std::uint64_t seed = 1;       // sampling seed; train/test derive from it
    std::size_t few_shot_k = 0;   // 0 = use the full training split
    std::string idx_train_images, idx_train_labels, idx_test_images, idx_test_labels;
};

// One parsed experiment description; every CLI run is driven by one of these.
struct RunConfig {
    BackboneConfig backbone;
    SasConfig sas;  // d and L mirror the backbone
    TrainConfig train;
    DataConfig data;

    void validate() const;
    std::string canonical() const;  // deterministic key=value serialization
    std::string hash() const;       // 16-hex FNV-1a of canonical()
};

// Versioned key-value text: one `key value` pair per line, `#` comments.
// Unknown keys and missing required keys are config errors. All train.* keys
// are required; everything else falls back to the documented defaults.
RunConfig parse_config_text(const std::string& text, const std::string& origin);
RunConfig parse_config_file(const std::string& path);

std::string write_config_text(const RunConfig& cfg);

}  // namespace sas
