#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "tensor.hpp"

namespace sas {

// Affine input shift plus optional label permutation applied to a generated
// dataset; stands in for the pretrain/downstream distribution mismatch. The
// identity spec reproduces the source distribution exactly.
struct ShiftSpec {
    double mean_shift = 0.0;
    double contrast_scale = 1.0;
    std::optional<std::vector<std::size_t>> label_permutation;

    bool is_identity() const {
        return mean_shift == 0.0 && contrast_scale == 1.0 && !label_permutation;
    }
    void validate(std::size_t classes) const;
};

// Gaussian class-template images: class c is a fixed template (drawn from
// task_seed) plus per-sample pixel noise. Every other knob shifts the
// downstream distribution away from the source.
struct SyntheticSpec {
    std::size_t classes = 10;
    std::size_t per_class = 20;
    std::size_t image_side = 16;
    std::size_t channels = 1;
    double noise = 0.3;
    std::uint64_t task_seed = 7;
    ShiftSpec shift;
};

struct Dataset {
    std::size_t image_side = 0;
    std::size_t channels = 1;
    std::size_t num_classes = 0;
    std::vector<std::vector<float>> images;  // each channels*side*side, row-major
    std::vector<int> labels;

    std::size_t size() const { return images.size(); }
    std::size_t pixels() const { return channels * image_side * image_side; }
};

// Deterministic in (spec, sample_seed): templates come from spec.task_seed,
// per-sample noise from sample_seed.
Dataset synth_generate(const SyntheticSpec& spec, std::uint64_t sample_seed);

// IDX (MNIST-style) ingestion; pixel values scaled to [0,1].
Dataset load_idx(const std::string& images_path, const std::string& labels_path);

// Exactly k examples per class, sampled without replacement.
Dataset few_shot_sample(const Dataset& ds, std::size_t k, std::uint64_t seed);

template <class T>
Tensor<T> make_batch(const Dataset& ds, std::span<const std::size_t> idx) {
    std::vector<T> data;
    data.reserve(idx.size() * ds.pixels());
    for (std::size_t i : idx)
        for (float v : ds.images.at(i)) data.push_back(static_cast<T>(v));
    return Tensor<T>::from({idx.size(), ds.pixels()}, std::move(data));
}

inline std::vector<int> batch_labels(const Dataset& ds, std::span<const std::size_t> idx) {
    std::vector<int> out;
    out.reserve(idx.size());
    for (std::size_t i : idx) out.push_back(ds.labels.at(i));
    return out;
}

}  // namespace sas
