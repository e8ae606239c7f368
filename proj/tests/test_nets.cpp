#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "revt/nets.hpp"
#include "revt/rng.hpp"

using namespace revt;

namespace {

Tensor random_input(int b, int h, int w, uint64_t seed) {
    RngStream rng(seed, 0);
    Tensor x = Tensor::zeros({b, 3, h, w});
    for (int64_t i = 0; i < x.numel(); ++i)
        x.data()[i] = static_cast<float>(rng.uniform_range(-1, 1));
    return x;
}

// independent walk of the architecture config
int64_t expected_mini_mit_params(const MiniMiTConfig& c) {
    int64_t total = 0;
    int in_c = 3;
    for (const StageConfig& s : c.stages) {
        const int64_t C = s.dim, E = static_cast<int64_t>(s.dim) * s.ffn_expand;
        total += C * in_c * s.pe_kernel * s.pe_kernel + C;  // patch embed conv
        total += 2 * C;                                     // patch embed norm
        for (int b = 0; b < s.depth; ++b) {
            total += 2 * C;              // attn pre-norm
            total += 4 * (C * C + C);    // q, k, v, o
            if (s.sr_ratio > 1) total += C * C * s.sr_ratio * s.sr_ratio + C + 2 * C;
            total += 2 * C;              // ffn pre-norm
            total += C * E + E;          // fc1
            total += E * 9 + E;          // depthwise 3x3
            total += E * C + C;          // fc2
        }
        total += 2 * C;  // stage-final norm
        in_c = s.dim;
    }
    const int64_t D = c.decoder_dim;
    for (const StageConfig& s : c.stages) total += static_cast<int64_t>(s.dim) * D + D;
    total += D * (D * static_cast<int64_t>(c.stages.size())) + D;  // fuse 1x1
    total += static_cast<int64_t>(c.classes) * D + c.classes;      // classifier
    return total;
}

}  // namespace

TEST_CASE("build determinism and seed separation") {
    const MiniMiTConfig cfg = MiniMiTConfig::tiny();
    SegModel a = build_mini_mit(cfg, 100, 200);
    SegModel b = build_mini_mit(cfg, 100, 200);
    const auto ba = save_checkpoint(a.params, json::object());
    const auto bb = save_checkpoint(b.params, json::object());
    REQUIRE(ba == bb);

    SECTION("equal encoder seed, different decoder seed") {
        SegModel c = build_mini_mit(cfg, 100, 201);
        bool decoder_differs = false;
        for (const auto& [path, e] : a.params) {
            const auto& ec = c.params.at(path);
            if (e.part == Part::Encoder) {
                REQUIRE(e.tensor.values() == ec.tensor.values());
            } else if (e.tensor.values() != ec.tensor.values()) {
                decoder_differs = true;
            }
        }
        REQUIRE(decoder_differs);
    }
}

TEST_CASE("every parameter is tagged and parts partition the tree") {
    for (int kind = 0; kind < 3; ++kind) {
        NetConfig cfg;
        if (kind == 0) cfg = NetConfig::mini_mit(MiniMiTConfig::tiny());
        if (kind == 1) cfg = NetConfig::conv_net(ConvConfig{});
        if (kind == 2) cfg = NetConfig::linear_net(LinearConfig{});
        SegModel m = build_model(cfg, 1, 2);
        const auto enc = select(m.params, Selector::encoder());
        const auto dec = select(m.params, Selector::decoder());
        REQUIRE(enc.size() + dec.size() == m.params.size());
        REQUIRE(!enc.empty());
        REQUIRE(!dec.empty());
        // layer kinds partition as well
        size_t total = 0;
        for (LayerKind lk : {LayerKind::Conv, LayerKind::Fc, LayerKind::Norm, LayerKind::Other}) {
            Selector s;
            s.layer = lk;
            total += select(m.params, s).size();
        }
        REQUIRE(total == m.params.size());
    }
}

TEST_CASE("param_count matches the architecture walk") {
    const MiniMiTConfig cfg = MiniMiTConfig::desk_default(5);
    SegModel m = build_mini_mit(cfg, 3, 4);
    REQUIRE(param_count(m.params) == expected_mini_mit_params(cfg));
}

TEST_CASE("encoder feature shapes at 64x64 with the default config") {
    SegModel m = build_mini_mit(MiniMiTConfig::desk_default(5), 1, 2);
    const Tensor x = random_input(1, 64, 64, 7);
    const auto feats = forward_encoder(m, x);
    REQUIRE(feats.size() == 4);
    const int want[4] = {16, 8, 4, 2};
    for (int i = 0; i < 4; ++i) {
        REQUIRE(feats[static_cast<size_t>(i)].dim(2) == want[i]);
        REQUIRE(feats[static_cast<size_t>(i)].dim(3) == want[i]);
    }
    SECTION("indivisible input dims raise") {
        REQUIRE_THROWS_AS(forward_encoder(m, random_input(1, 48, 48, 3)), DimensionError);
    }
}

TEST_CASE("degenerate attention over a single key returns the values") {
    RngStream rng(5, 0);
    Tensor q = Tensor::zeros({1, 1, 1, 8});
    Tensor k = Tensor::zeros({1, 1, 1, 8});
    Tensor v = Tensor::zeros({1, 1, 1, 8});
    for (int i = 0; i < 8; ++i) {
        q.data()[i] = static_cast<float>(rng.uniform_range(-1, 1));
        k.data()[i] = static_cast<float>(rng.uniform_range(-1, 1));
        v.data()[i] = static_cast<float>(rng.uniform_range(-1, 1));
    }
    const Tensor out = attention_core(q, k, v, 0.353f);
    for (int i = 0; i < 8; ++i) REQUIRE(out.data()[i] == Catch::Approx(v.data()[i]));
}

TEST_CASE("batch permutation only permutes outputs") {
    SegModel m = build_mini_mit(MiniMiTConfig::tiny(4), 11, 12);
    const Tensor x1 = random_input(1, 16, 16, 1);
    const Tensor x2 = random_input(1, 16, 16, 2);

    auto stack2 = [](const Tensor& a, const Tensor& b) {
        Tensor out = Tensor::zeros({2, 3, a.dim(2), a.dim(3)});
        std::copy(a.data(), a.data() + a.numel(), out.data());
        std::copy(b.data(), b.data() + b.numel(), out.data() + a.numel());
        return out;
    };
    const Tensor y12 = forward(m, stack2(x1, x2));
    const Tensor y21 = forward(m, stack2(x2, x1));
    const int64_t half = y12.numel() / 2;
    for (int64_t i = 0; i < half; ++i) {
        REQUIRE(y12.data()[i] == y21.data()[half + i]);
        REQUIRE(y12.data()[half + i] == y21.data()[i]);
    }
}

TEST_CASE("decoder posteriors") {
    SegModel m = build_mini_mit(MiniMiTConfig::tiny(4), 21, 22);
    const Tensor x = random_input(2, 16, 16, 9);
    const Tensor y = forward(m, x);
    REQUIRE(y.shape() == std::vector<int>{2, 4, 16, 16});

    SECTION("per-pixel distributions sum to one") {
        const int64_t plane = 16 * 16;
        for (int b = 0; b < 2; ++b)
            for (int64_t i = 0; i < plane; ++i) {
                double acc = 0.0;
                for (int c = 0; c < 4; ++c) acc += y.data()[(b * 4 + c) * plane + i];
                REQUIRE(std::abs(acc - 1.0) <= 1e-6);
            }
    }
    SECTION("zeroed classifier gives uniform posteriors") {
        SegModel z = build_mini_mit(MiniMiTConfig::tiny(4), 21, 22);
        std::fill(z.params.tensor("decoder.cls.weight").values().begin(),
                  z.params.tensor("decoder.cls.weight").values().end(), 0.0f);
        std::fill(z.params.tensor("decoder.cls.bias").values().begin(),
                  z.params.tensor("decoder.cls.bias").values().end(), 0.0f);
        const Tensor u = forward(z, x);
        for (int64_t i = 0; i < u.numel(); ++i)
            REQUIRE(u.data()[i] == Catch::Approx(0.25).margin(1e-6));
    }
    SECTION("argmax map agrees with an independent per-pixel pass") {
        const auto m_map = argmax_map(y);
        const int64_t plane = 16 * 16;
        for (int b = 0; b < 2; ++b)
            for (int64_t i = 0; i < plane; ++i) {
                int best = 0;
                float bv = -1.0f;
                for (int c = 0; c < 4; ++c) {
                    const float v = y.data()[(b * 4 + c) * plane + i];
                    if (v > bv) {
                        bv = v;
                        best = c;
                    }
                }
                REQUIRE(m_map[static_cast<size_t>(b * plane + i)] == best);
            }
    }
}

TEST_CASE("conv model forwards and tags") {
    SegModel m = build_conv_model(ConvConfig{}, 31, 32);
    const Tensor x = random_input(1, 32, 32, 4);
    const Tensor y = forward(m, x);
    REQUIRE(y.shape() == std::vector<int>{1, 5, 32, 32});

    Selector conv_blocks;
    conv_blocks.block = Block::ConvBlock;
    const auto cb = select(m.params, conv_blocks);
    REQUIRE(!cb.empty());
    for (const auto& p : cb) REQUIRE(m.params.at(p).part == Part::Encoder);

    SegModel m2 = build_conv_model(ConvConfig{}, 31, 32);
    REQUIRE(save_checkpoint(m.params, json::object()) ==
            save_checkpoint(m2.params, json::object()));
}

TEST_CASE("linear degenerate encoder is constructible and forwards") {
    SegModel m = build_model(NetConfig::linear_net(LinearConfig{}), 41, 42);
    const Tensor x = random_input(1, 32, 32, 5);
    const auto feats = forward_encoder(m, x);
    REQUIRE(feats.size() == 1);
    REQUIRE(feats[0].dim(2) == 8);
    const Tensor y = forward(m, x);
    REQUIRE(y.shape() == std::vector<int>{1, 5, 32, 32});
}

TEST_CASE("net config json round trip") {
    for (int kind = 0; kind < 3; ++kind) {
        NetConfig cfg;
        if (kind == 0) cfg = NetConfig::mini_mit(MiniMiTConfig::desk_default(7));
        if (kind == 1) cfg = NetConfig::conv_net(ConvConfig{});
        if (kind == 2) cfg = NetConfig::linear_net(LinearConfig{});
        const NetConfig back = NetConfig::from_json(cfg.to_json());
        REQUIRE(back.to_json() == cfg.to_json());
    }
}

TEST_CASE("forward pass counters") {
    SegModel m = build_mini_mit(MiniMiTConfig::tiny(3), 51, 52);
    const Tensor x = random_input(1, 8, 8, 6);
    reset_pass_counts();
    (void)forward(m, x);
    REQUIRE(encoder_pass_count() == 1);
    REQUIRE(decoder_pass_count() == 1);
    (void)forward(m, x);
    REQUIRE(encoder_pass_count() == 2);
}
