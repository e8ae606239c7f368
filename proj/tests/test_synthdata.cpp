#include <catch2/catch_amalgamated.hpp>

#include <cstdio>
#include <filesystem>
#include <map>

#include "revt/synthdata.hpp"

using namespace revt;

TEST_CASE("generation is deterministic in (spec, n, seed)") {
    const DomainSpec spec = source_domain_spec(5, 32);
    const auto a = gen_domain(spec, 4, 123);
    const auto b = gen_domain(spec, 4, 123);
    REQUIRE(a.size() == b.size());
    for (size_t i = 0; i < a.size(); ++i) {
        REQUIRE(a[i].image.data == b[i].image.data);
        REQUIRE(a[i].labels.data == b[i].labels.data);
    }
    const auto c = gen_domain(spec, 4, 124);
    REQUIRE(a[0].image.data != c[0].image.data);
}

TEST_CASE("two-class spec only produces labels 0 and 1") {
    DomainSpec spec = source_domain_spec(2, 32);
    for (const auto& s : gen_domain(spec, 6, 9)) {
        for (uint8_t v : s.labels.data) REQUIRE((v == 0 || v == 1));
    }
}

TEST_CASE("rendering-only domain shift preserves labels and class histograms") {
    DomainSpec src = source_domain_spec(5, 48);
    DomainSpec tgt = src;
    tgt.name = "shifted";
    tgt.gamma = 1.5f;

    const auto a = gen_domain(src, 8, 42);
    const auto b = gen_domain(tgt, 8, 42);
    for (size_t i = 0; i < a.size(); ++i) {
        REQUIRE(a[i].labels.data == b[i].labels.data);
        std::map<int, int> ha, hb;
        for (uint8_t v : a[i].labels.data) ++ha[v];
        for (uint8_t v : b[i].labels.data) ++hb[v];
        REQUIRE(ha == hb);
    }
    // images must actually differ under the shift
    REQUIRE(a[0].image.data != b[0].image.data);
}

TEST_CASE("the default domains differ in rendering but pair on labels") {
    const auto src = gen_domain(source_domain_spec(5, 32), 3, 7);
    const auto photo = gen_domain(target_photo_spec(5, 32), 3, 7);
    const auto tex = gen_domain(target_tex_spec(5, 32), 3, 7);
    for (size_t i = 0; i < src.size(); ++i) {
        REQUIRE(src[i].labels.data == photo[i].labels.data);
        REQUIRE(src[i].labels.data == tex[i].labels.data);
    }
}

TEST_CASE("split cases") {
    const auto samples = gen_domain(source_domain_spec(3, 16), 10, 5);

    SECTION("all train") {
        const Splits s = split(samples, {1.0, 0.0, 0.0});
        REQUIRE(s.train.size() == 10);
        REQUIRE(s.dev.empty());
        REQUIRE(s.test.empty());
    }
    SECTION("floor then remainder to test*") {
        const Splits s = split(samples, {0.5, 0.25, 0.25});
        REQUIRE(s.train.size() == 5);
        REQUIRE(s.dev.size() == 2);
        REQUIRE(s.test.size() == 3);
    }
    SECTION("union of splits equals the input multiset") {
        const Splits s = split(samples, {0.4, 0.3, 0.3});
        std::multiset<std::vector<uint8_t>> in, out;
        for (const auto& x : samples) in.insert(x.image.data);
        for (const auto& x : s.train) out.insert(x.image.data);
        for (const auto& x : s.dev) out.insert(x.image.data);
        for (const auto& x : s.test) out.insert(x.image.data);
        REQUIRE(in == out);
    }
    SECTION("bad fractions throw") {
        REQUIRE_THROWS_AS(split(samples, {0.5, 0.2, 0.2}), UsageError);
    }
}

TEST_CASE("dataset dump round trips") {
    const auto samples = gen_domain(source_domain_spec(5, 24), 5, 77);
    const std::string path =
        (std::filesystem::temp_directory_path() / "revt_split_test.bin").string();
    write_split_file(path, samples);
    const auto loaded = read_split_file(path, "source");
    REQUIRE(loaded.size() == samples.size());
    for (size_t i = 0; i < samples.size(); ++i) {
        REQUIRE(loaded[i].image.data == samples[i].image.data);
        REQUIRE(loaded[i].labels.data == samples[i].labels.data);
        REQUIRE(loaded[i].domain == "source");
    }
    std::remove(path.c_str());
}

TEST_CASE("invalid specs are rejected") {
    DomainSpec bad = source_domain_spec();
    bad.classes = 1;
    REQUIRE_THROWS_AS(gen_domain(bad, 1, 0), ConfigError);
    REQUIRE_THROWS_AS(gen_domain(source_domain_spec(), 0, 0), UsageError);
}
