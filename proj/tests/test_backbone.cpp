#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <unistd.h>

#include <cstdio>
#include <fstream>

#include "gradcheck.hpp"
#include "model_io.hpp"
#include "optim.hpp"
#include "train.hpp"

using namespace sas;

namespace {

BackboneConfig desk_cfg() { return BackboneConfig{16, 1, 4, 32, 12, 4, 4, 10}; }

BackboneConfig tiny_cfg(std::size_t layers) { return BackboneConfig{16, 1, 4, 32, layers, 4, 4, 3}; }

std::string tmp_path(const std::string& name) {
    return "/tmp/sas_test_" + std::to_string(::getpid()) + "_" + name;
}

std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    REQUIRE(in);
    return std::string((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
}

}  // namespace

TEST_CASE("patch_embed shape arithmetic: 16x16, patch 4, d 32 -> 17x32") {
    Rng rng(1);
    auto bb = init_backbone<float>(desk_cfg(), rng);
    Graph<float> g;
    auto img = TensorF::zeros({1, 256});
    auto tok = patch_embed(g, img, bb);
    CHECK(tok.rows() == 17);
    CHECK(tok.cols() == 32);

    auto batch = TensorF::zeros({3, 256});
    auto tok3 = patch_embed(g, batch, bb);
    CHECK(tok3.rows() == 3 * 17);

    CHECK_THROWS_AS(patch_embed(g, TensorF::zeros({1, 100}), bb), DimensionError);
}

TEST_CASE("patch_embed of a zero image is bias + positional + class token only") {
    Rng rng(2);
    auto bb = init_backbone<float>(desk_cfg(), rng);
    Graph<float> g;
    auto tok = patch_embed(g, TensorF::zeros({1, 256}), bb);
    // class token row
    for (std::size_t j = 0; j < 32; ++j)
        CHECK(tok.at(0, j) == bb.cls.at(0, j) + bb.pos.at(0, j));
    // patch rows: zero patches through the linear map leave only the bias
    for (std::size_t i = 1; i < 17; ++i)
        for (std::size_t j = 0; j < 32; ++j)
            CHECK(tok.at(i, j) == bb.patch_b.at(j) + bb.pos.at(i, j));
}

TEST_CASE("two random images differ in every non-class token") {
    Rng rng(3);
    auto bb = init_backbone<float>(desk_cfg(), rng);
    Graph<float> g;
    Rng ir(4);
    auto a = TensorF::random_normal({1, 256}, ir, 1.0);
    auto b = TensorF::random_normal({1, 256}, ir, 1.0);
    auto ta = patch_embed(g, a, bb);
    auto tb = patch_embed(g, b, bb);
    for (std::size_t i = 1; i < 17; ++i) {
        bool differs = false;
        for (std::size_t j = 0; j < 32; ++j)
            if (ta.at(i, j) != tb.at(i, j)) differs = true;
        CHECK(differs);
    }
    // class token rows agree (same token, same positional entry)
    for (std::size_t j = 0; j < 32; ++j) CHECK(ta.at(0, j) == tb.at(0, j));
}

TEST_CASE("zero-adapter hook reproduces the plain forward bit-exactly") {
    Rng rng(5);
    auto bb = init_backbone<float>(tiny_cfg(4), rng);
    Graph<float> g;
    Rng ir(6);
    auto img = TensorF::random_normal({2, 256}, ir, 1.0);
    auto tok = patch_embed(g, img, bb);

    auto plain = backbone_forward(g, tok, bb);
    AdapterHook<float> zero_hook = [](Graph<float>& gg, const Tensor<float>& z, std::size_t) {
        (void)gg;
        return TensorF::zeros(z.shape());
    };
    auto hooked = backbone_forward(g, tok, bb, zero_hook);
    for (std::size_t i = 0; i < plain.pooled.numel(); ++i)
        CHECK(plain.pooled.at(i) == hooked.pooled.at(i));

    CHECK(plain.block_inputs.size() == 4);
    for (const auto& z : plain.block_inputs) {
        CHECK(z.rows() == 2 * 17);
        CHECK(z.cols() == 32);
    }

    AdapterHook<float> bad_hook = [](Graph<float>&, const Tensor<float>&, std::size_t) {
        return TensorF::zeros({1, 1});
    };
    CHECK_THROWS_AS(backbone_forward(g, tok, bb, bad_hook), DimensionError);
}

TEST_CASE("L=1 backbone equals a single block application") {
    Rng rng(7);
    auto one = init_backbone<float>(tiny_cfg(1), rng);
    Graph<float> g;
    Rng ir(8);
    auto img = TensorF::random_normal({1, 256}, ir, 1.0);
    auto tok = patch_embed(g, img, one);
    auto acts = backbone_forward(g, tok, one);
    CHECK(acts.block_inputs.size() == 1);
    // z^1 is the embedded input itself
    for (std::size_t i = 0; i < tok.numel(); ++i) CHECK(acts.block_inputs[0].at(i) == tok.at(i));
}

TEST_CASE("attention softmax rows sum to one") {
    Rng rng(9);
    Graph<float> g;
    auto q = TensorF::random_normal({2 * 5, 8}, rng, 1.0);
    auto k = TensorF::random_normal({2 * 5, 8}, rng, 1.0);
    auto v = TensorF::random_normal({2 * 5, 8}, rng, 1.0);
    TensorF probs;
    g.multihead_attention(q, k, v, 5, 2, &probs);
    CHECK(probs.rows() == 2 * 2 * 5);
    CHECK(probs.cols() == 5);
    for (std::size_t i = 0; i < probs.rows(); ++i) {
        double row = 0;
        for (std::size_t j = 0; j < probs.cols(); ++j) row += probs.at(i, j);
        CHECK(std::abs(row - 1.0) < 1e-6);
    }
}

TEST_CASE("freeze contract: checksum stable across optimizer steps, head still trains") {
    Rng rng(10);
    auto bb = std::make_shared<Backbone<float>>(init_backbone<float>(tiny_cfg(2), rng));
    freeze_all(*bb);
    std::uint64_t before = backbone_checksum(*bb);

    auto head = init_head<float>(32, 3, rng);
    CHECK(head.w.requires_grad());

    std::vector<TensorF> trainable{head.w, head.b};
    AdamW<float> opt(trainable, 0.9, 0.999, 0.0);
    Rng ir(11);
    for (int step = 0; step < 10; ++step) {
        Graph<float> g;
        auto img = TensorF::random_normal({4, 256}, ir, 1.0);
        auto tok = patch_embed(g, img, *bb);
        auto acts = backbone_forward(g, tok, *bb);
        auto logits = head_forward(g, acts.pooled, head);
        auto loss = g.softmax_cross_entropy(logits, {0, 1, 2, 0});
        g.backward(loss);
        // frozen parameters never materialize gradients
        bb->for_each_param(
            [](const std::string&, TensorF& t) { CHECK_FALSE(t.has_grad()); });
        CHECK(head.w.has_grad());
        opt.step(1e-3);
    }
    CHECK(backbone_checksum(*bb) == before);
}

TEST_CASE("checkpoint round trip is byte-identical and bit-exact") {
    Rng rng(12);
    auto bb = init_backbone<float>(tiny_cfg(2), rng);
    freeze_all(bb);
    std::string p1 = tmp_path("ckpt1"), p2 = tmp_path("ckpt2");
    save_backbone(p1, bb);
    auto loaded = load_backbone(p1);
    save_backbone(p2, *loaded);
    CHECK(read_file(p1) == read_file(p2));
    CHECK(loaded->frozen);
    CHECK(backbone_checksum(*loaded) == backbone_checksum(bb));

    // forward(loaded) == forward(original) bit-exact
    Graph<float> g;
    Rng ir(13);
    auto img = TensorF::random_normal({2, 256}, ir, 1.0);
    auto t1 = patch_embed(g, img, bb);
    auto t2 = patch_embed(g, img, *loaded);
    auto a1 = backbone_forward(g, t1, bb);
    auto a2 = backbone_forward(g, t2, *loaded);
    for (std::size_t i = 0; i < a1.pooled.numel(); ++i)
        CHECK(a1.pooled.at(i) == a2.pooled.at(i));

    std::remove(p1.c_str());
    std::remove(p2.c_str());
}

TEST_CASE("checkpoint corruption cases raise distinct errors") {
    Rng rng(14);
    auto bb = init_backbone<float>(tiny_cfg(1), rng);
    std::string path = tmp_path("ckpt_corrupt");
    save_backbone(path, bb);
    std::string bytes = read_file(path);

    SUBCASE("missing file") {
        try {
            load_checkpoint("/tmp/definitely_missing_sas_ckpt");
            FAIL("expected IoError");
        } catch (const IoError& e) {
            CHECK(std::string(e.what()).find("not found") != std::string::npos);
        }
    }
    SUBCASE("truncated blob -> length mismatch") {
        std::ofstream out(path, std::ios::binary | std::ios::trunc);
        out.write(bytes.data(), static_cast<std::streamsize>(bytes.size() - 10));
        out.close();
        try {
            load_checkpoint(path);
            FAIL("expected IoError");
        } catch (const IoError& e) {
            CHECK(std::string(e.what()).find("length mismatch") != std::string::npos);
        }
    }
    SUBCASE("version mismatch") {
        std::string altered = bytes;
        std::size_t pos = altered.find("v1");
        altered.replace(pos, 2, "v9");
        std::ofstream out(path, std::ios::binary | std::ios::trunc);
        out.write(altered.data(), static_cast<std::streamsize>(altered.size()));
        out.close();
        try {
            load_checkpoint(path);
            FAIL("expected IoError");
        } catch (const IoError& e) {
            CHECK(std::string(e.what()).find("version") != std::string::npos);
        }
    }
    SUBCASE("wrong magic") {
        std::string altered = "nonsense" + bytes;
        std::ofstream out(path, std::ios::binary | std::ios::trunc);
        out.write(altered.data(), static_cast<std::streamsize>(altered.size()));
        out.close();
        CHECK_THROWS_AS(load_checkpoint(path), IoError);
    }
    std::remove(path.c_str());
}

TEST_CASE("backbone gradients flow during pretraining") {
    // every parameter group gets a finite-difference pass on a tiny config
    BackboneConfig cfg{8, 1, 4, 8, 1, 2, 2, 2};
    Rng rng(15);
    auto bb = init_backbone<double>(cfg, rng);
    auto head = init_head<double>(cfg.d, 2, rng);
    Rng ir(16);
    auto img = Tensor<double>::random_normal({2, cfg.pixels()}, ir, 1.0);
    std::vector<int> labels{0, 1};

    auto build = [&](Graph<double>& g) {
        auto tok = patch_embed(g, img, bb);
        auto acts = backbone_forward(g, tok, bb);
        auto logits = head_forward(g, acts.pooled, head);
        return g.softmax_cross_entropy(logits, labels);
    };
    std::vector<TensorD> params;
    bb.for_each_param([&params](const std::string&, TensorD& t) { params.push_back(t); });
    head.for_each_param([&params](const std::string&, TensorD& t) { params.push_back(t); });
    CHECK(finite_diff_check_params(build, params) < 1e-4);
}
