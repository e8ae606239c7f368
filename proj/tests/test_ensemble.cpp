#include <catch2/catch_amalgamated.hpp>

#include "revt/ensemble.hpp"
#include "revt/rng.hpp"

using namespace revt;

namespace {

Tensor random_input(int h, int w, uint64_t seed) {
    RngStream rng(seed, 0);
    Tensor x = Tensor::zeros({1, 3, h, w});
    for (int64_t i = 0; i < x.numel(); ++i)
        x.data()[i] = static_cast<float>(rng.uniform_range(-1, 1));
    return x;
}

// a model whose posterior is a constant distribution everywhere: zero
// classifier weight, bias = log(p)
SegModel constant_model(const NetConfig& cfg, const std::vector<float>& probs, uint64_t seed) {
    SegModel m = build_model(cfg, seed, seed + 1);
    Tensor& w = m.params.tensor("decoder.cls.weight");
    std::fill(w.values().begin(), w.values().end(), 0.0f);
    Tensor& b = m.params.tensor("decoder.cls.bias");
    // -1000 underflows the f32 softmax to an exact zero probability
    for (size_t i = 0; i < probs.size(); ++i)
        b.data()[static_cast<int64_t>(i)] = probs[i] > 0 ? std::log(probs[i]) : -1000.0f;
    return m;
}

}  // namespace

TEST_CASE("posterior mean") {
    const NetConfig cfg = NetConfig::linear_net(LinearConfig{.dim = 8, .stride = 4,
                                                             .decoder_dim = 16, .classes = 2});
    const Tensor x = random_input(16, 16, 3);

    SECTION("single member returns its own output") {
        SegModel m = build_model(cfg, 1, 2);
        const Tensor solo = forward(m, x);
        const Tensor ens = posterior_mean({&m}, x);
        REQUIRE(solo.values() == ens.values());
    }
    SECTION("identical members equal one member") {
        SegModel m = build_model(cfg, 1, 2);
        const Tensor solo = forward(m, x);
        const Tensor ens = posterior_mean({&m, &m, &m}, x);
        for (int64_t i = 0; i < solo.numel(); ++i)
            REQUIRE(ens.data()[i] == Catch::Approx(solo.data()[i]).margin(1e-6));
    }
    SECTION("toy posteriors average to the arithmetic mean") {
        SegModel a = constant_model(cfg, {0.8f, 0.2f}, 10);
        SegModel b = constant_model(cfg, {0.4f, 0.6f}, 20);
        const Tensor ens = posterior_mean({&a, &b}, x);
        const int64_t plane = 16 * 16;
        for (int64_t i = 0; i < plane; ++i) {
            REQUIRE(ens.data()[i] == Catch::Approx(0.6).margin(1e-5));
            REQUIRE(ens.data()[plane + i] == Catch::Approx(0.4).margin(1e-5));
        }
    }
    SECTION("rows still sum to one") {
        SegModel a = build_model(cfg, 5, 6);
        SegModel b = build_model(cfg, 7, 8);
        const Tensor ens = posterior_mean({&a, &b}, x);
        const int64_t plane = 16 * 16;
        for (int64_t i = 0; i < plane; ++i) {
            double acc = 0.0;
            for (int c = 0; c < 2; ++c) acc += ens.data()[c * plane + i];
            REQUIRE(std::abs(acc - 1.0) <= 1e-6);
        }
    }
}

TEST_CASE("posterior product") {
    const NetConfig cfg = NetConfig::linear_net(LinearConfig{.dim = 8, .stride = 4,
                                                             .decoder_dim = 16, .classes = 2});
    const Tensor x = random_input(16, 16, 4);

    SECTION("hand-computed two-member product") {
        SegModel a = constant_model(cfg, {0.8f, 0.2f}, 10);
        SegModel b = constant_model(cfg, {0.4f, 0.6f}, 20);
        const Tensor prod = posterior_product({&a, &b}, x);
        const int64_t plane = 16 * 16;
        for (int64_t i = 0; i < plane; ++i) {
            REQUIRE(prod.data()[i] == Catch::Approx(8.0 / 11.0).margin(1e-5));
            REQUIRE(prod.data()[plane + i] == Catch::Approx(3.0 / 11.0).margin(1e-5));
        }
    }
    SECTION("identical members sharpen but keep the argmax") {
        SegModel m = build_model(cfg, 31, 32);
        const Tensor solo = forward(m, x);
        const Tensor prod = posterior_product({&m, &m, &m}, x);
        REQUIRE(argmax_map(solo) == argmax_map(prod));
    }
    SECTION("a uniform member leaves the argmax to the other") {
        SegModel a = build_model(cfg, 41, 42);
        SegModel u = constant_model(cfg, {0.5f, 0.5f}, 50);
        const Tensor prod = posterior_product({&a, &u}, x);
        REQUIRE(argmax_map(prod) == argmax_map(forward(a, x)));
    }
    SECTION("all-zero product rows fall back to uniform") {
        // members concentrated on complementary classes with hard zeros
        SegModel a = constant_model(cfg, {1.0f, 0.0f}, 60);
        SegModel b = constant_model(cfg, {0.0f, 1.0f}, 70);
        int64_t zero_rows = 0;
        const Tensor prod = posterior_product({&a, &b}, x, &zero_rows);
        REQUIRE(zero_rows == 16 * 16);
        for (int64_t i = 0; i < prod.numel(); ++i)
            REQUIRE(prod.data()[i] == Catch::Approx(0.5));
    }
    SECTION("argmax invariant under positive rescaling of one member") {
        // scaling a posterior per pixel cancels in the renormalization; an
        // equivalent check: product argmax equals argmax of log-sums
        SegModel a = build_model(cfg, 81, 82);
        SegModel b = build_model(cfg, 91, 92);
        const Tensor prod = posterior_product({&a, &b}, x);
        const Tensor ya = forward(a, x), yb = forward(b, x);
        const int64_t plane = 16 * 16;
        for (int64_t i = 0; i < plane; ++i) {
            const double s0 = std::log(static_cast<double>(ya.data()[i])) +
                              std::log(static_cast<double>(yb.data()[i]));
            const double s1 = std::log(static_cast<double>(ya.data()[plane + i])) +
                              std::log(static_cast<double>(yb.data()[plane + i]));
            const int want = s1 > s0 ? 1 : 0;
            REQUIRE(argmax_map(prod)[static_cast<size_t>(i)] == want);
        }
    }
}

TEST_CASE("encoder feature mean") {
    const NetConfig cfg = NetConfig::mini_mit(MiniMiTConfig::tiny(3));
    const Tensor x = random_input(16, 16, 5);
    SegModel m1 = build_model(cfg, 1, 2);
    SegModel m2 = build_model(cfg, 3, 4);
    SegModel m3 = build_model(cfg, 5, 6);
    const std::vector<const SegModel*> models = {&m1, &m2, &m3};

    SECTION("identical members equal the single model exactly") {
        const Tensor solo = forward(m1, x);
        const Tensor ens = encoder_feature_mean({&m1, &m1, &m1}, x, 1);
        for (int64_t i = 0; i < solo.numel(); ++i)
            REQUIRE(ens.data()[i] == Catch::Approx(solo.data()[i]).margin(1e-6));
    }
    SECTION("mean feature shapes match the per-model shapes") {
        const auto feats = forward_encoder(m1, x);
        const auto zbar = mean_encoder_features(models, x);
        REQUIRE(zbar.size() == feats.size());
        for (size_t i = 0; i < feats.size(); ++i) REQUIRE(zbar[i].shape() == feats[i].shape());
    }
    SECTION("all-decoder variant returns one output per member") {
        const auto outs = encoder_feature_mean_all(models, x);
        REQUIRE(outs.size() == 3);
        for (const Tensor& y : outs) REQUIRE(y.shape() == std::vector<int>{1, 3, 16, 16});
    }
    SECTION("bad decoder index throws") {
        REQUIRE_THROWS_AS(encoder_feature_mean(models, x, 0), UsageError);
        REQUIRE_THROWS_AS(encoder_feature_mean(models, x, 4), UsageError);
    }
}

TEST_CASE("inference cost bookkeeping: one encoder pass vs M") {
    const NetConfig cfg = NetConfig::mini_mit(MiniMiTConfig::tiny(3));
    const Tensor x = random_input(16, 16, 6);
    SegModel m1 = build_model(cfg, 1, 2);
    SegModel m2 = build_model(cfg, 3, 4);
    SegModel m3 = build_model(cfg, 5, 6);
    const std::vector<const SegModel*> models = {&m1, &m2, &m3};

    reset_pass_counts();
    (void)forward(m1, x);  // the re-parameterized model costs one pass
    REQUIRE(encoder_pass_count() == 1);

    reset_pass_counts();
    (void)posterior_mean(models, x);
    REQUIRE(encoder_pass_count() == 3);

    reset_pass_counts();
    (void)posterior_product(models, x);
    REQUIRE(encoder_pass_count() == 3);

    reset_pass_counts();
    (void)encoder_feature_mean(models, x, 1);
    REQUIRE(encoder_pass_count() == 3);
}
