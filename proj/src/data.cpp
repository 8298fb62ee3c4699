#include "data.hpp"

#include <algorithm>
#include <fstream>

#include "rng.hpp"

namespace sas {

void ShiftSpec::validate(std::size_t classes) const {
    if (!label_permutation) return;
    const auto& perm = *label_permutation;
    if (perm.size() != classes)
        throw ConfigError("shift permutation has " + std::to_string(perm.size()) +
                          " entries for " + std::to_string(classes) + " classes");
    std::vector<bool> seen(classes, false);
    for (std::size_t p : perm) {
        if (p >= classes || seen[p])
            throw ConfigError("shift permutation is not a permutation of 0.." +
                              std::to_string(classes - 1));
        seen[p] = true;
    }
}

Dataset synth_generate(const SyntheticSpec& spec, std::uint64_t sample_seed) {
    if (spec.classes < 1 || spec.per_class < 1 || spec.image_side < 1 || spec.channels < 1)
        throw ConfigError("synthetic spec: classes, per_class, image_side, channels must be >= 1");
    spec.shift.validate(spec.classes);

    std::size_t pix = spec.channels * spec.image_side * spec.image_side;
    Rng template_rng(spec.task_seed);
    std::vector<std::vector<double>> templates(spec.classes, std::vector<double>(pix));
    for (auto& t : templates)
        for (auto& v : t) v = template_rng.normal();

    Rng noise_rng(sample_seed);
    Dataset ds;
    ds.image_side = spec.image_side;
    ds.channels = spec.channels;
    ds.num_classes = spec.classes;
    ds.images.reserve(spec.classes * spec.per_class);
    ds.labels.reserve(spec.classes * spec.per_class);
    for (std::size_t c = 0; c < spec.classes; ++c) {
        int label = spec.shift.label_permutation
                        ? static_cast<int>((*spec.shift.label_permutation)[c])
                        : static_cast<int>(c);
        for (std::size_t e = 0; e < spec.per_class; ++e) {
            std::vector<float> img(pix);
            for (std::size_t p = 0; p < pix; ++p) {
                double x = templates[c][p] + spec.noise * noise_rng.normal();
                img[p] = static_cast<float>(spec.shift.contrast_scale * x + spec.shift.mean_shift);
            }
            ds.images.push_back(std::move(img));
            ds.labels.push_back(label);
        }
    }
    return ds;
}

namespace {

std::uint32_t read_u32_be(std::ifstream& in, const std::string& path) {
    unsigned char b[4];
    in.read(reinterpret_cast<char*>(b), 4);
    if (!in) throw DataError("idx file truncated while reading header: " + path);
    return (static_cast<std::uint32_t>(b[0]) << 24) | (static_cast<std::uint32_t>(b[1]) << 16) |
           (static_cast<std::uint32_t>(b[2]) << 8) | static_cast<std::uint32_t>(b[3]);
}

}  // namespace

Dataset load_idx(const std::string& images_path, const std::string& labels_path) {
    std::ifstream img(images_path, std::ios::binary);
    if (!img) throw DataError("cannot open idx image file: " + images_path);
    std::ifstream lab(labels_path, std::ios::binary);
    if (!lab) throw DataError("cannot open idx label file: " + labels_path);

    std::uint32_t img_magic = read_u32_be(img, images_path);
    if (img_magic != 0x00000803u)
        throw DataError("bad idx image magic in " + images_path + " (expected 0x00000803)");
    std::uint32_t n_images = read_u32_be(img, images_path);
    std::uint32_t rows = read_u32_be(img, images_path);
    std::uint32_t cols = read_u32_be(img, images_path);

    std::uint32_t lab_magic = read_u32_be(lab, labels_path);
    if (lab_magic != 0x00000801u)
        throw DataError("bad idx label magic in " + labels_path + " (expected 0x00000801)");
    std::uint32_t n_labels = read_u32_be(lab, labels_path);

    if (n_images != n_labels)
        throw DataError("idx image/label count mismatch: " + std::to_string(n_images) +
                        " images vs " + std::to_string(n_labels) + " labels");
    if (rows != cols) throw DataError("idx loader expects square images, got " +
                                      std::to_string(rows) + "x" + std::to_string(cols));

    Dataset ds;
    ds.image_side = rows;
    ds.channels = 1;
    ds.images.reserve(n_images);
    ds.labels.reserve(n_images);
    std::size_t pix = static_cast<std::size_t>(rows) * cols;
    std::vector<unsigned char> buf(pix);
    int max_label = -1;
    for (std::uint32_t i = 0; i < n_images; ++i) {
        img.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(pix));
        if (!img) throw DataError("idx image file truncated at image " + std::to_string(i) +
                                  ": " + images_path);
        std::vector<float> pixels(pix);
        for (std::size_t p = 0; p < pix; ++p) pixels[p] = static_cast<float>(buf[p]) / 255.0f;
        unsigned char l;
        lab.read(reinterpret_cast<char*>(&l), 1);
        if (!lab) throw DataError("idx label file truncated at label " + std::to_string(i) +
                                  ": " + labels_path);
        ds.images.push_back(std::move(pixels));
        ds.labels.push_back(static_cast<int>(l));
        max_label = std::max(max_label, static_cast<int>(l));
    }
    ds.num_classes = static_cast<std::size_t>(max_label + 1);
    return ds;
}

Dataset few_shot_sample(const Dataset& ds, std::size_t k, std::uint64_t seed) {
    if (k < 1) throw ConfigError("few_shot_sample: k must be >= 1");
    std::vector<std::vector<std::size_t>> buckets(ds.num_classes);
    for (std::size_t i = 0; i < ds.size(); ++i)
        buckets.at(static_cast<std::size_t>(ds.labels[i])).push_back(i);

    Rng rng(seed);
    Dataset out;
    out.image_side = ds.image_side;
    out.channels = ds.channels;
    out.num_classes = ds.num_classes;
    for (std::size_t c = 0; c < buckets.size(); ++c) {
        auto& bucket = buckets[c];
        if (bucket.size() < k)
            throw DataError("few_shot_sample: class " + std::to_string(c) + " has only " +
                            std::to_string(bucket.size()) + " examples, need " +
                            std::to_string(k));
        // partial Fisher-Yates, take the first k
        for (std::size_t i = 0; i < k; ++i) {
            std::size_t j = i + static_cast<std::size_t>(rng.below(bucket.size() - i));
            std::swap(bucket[i], bucket[j]);
        }
        for (std::size_t i = 0; i < k; ++i) {
            out.images.push_back(ds.images[bucket[i]]);
            out.labels.push_back(ds.labels[bucket[i]]);
        }
    }
    return out;
}

}  // namespace sas
