#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include "revt/common.hpp"
#include "revt/image.hpp"
#include "revt/rng.hpp"

namespace revt {

inline constexpr uint8_t kIgnoreLabel = 255;

// One domain of the synthetic benchmark: shared shape grammar, per-domain
// palette, texture, and photometric rendering. Identical (spec, seed) pairs
// produce byte-identical datasets; two specs that differ only in rendering
// parameters produce identical label maps for the same seed.
struct DomainSpec {
    std::string name = "domain";
    int classes = 5;  // S
    int height = 64, width = 64;

    std::vector<std::array<float, 3>> palette_mean;  // unit-range rgb per class
    float palette_jitter = 0.04f;                    // per-sample class color jitter

    float noise_amp = 0.03f;    // per-pixel value noise
    float stripe_freq = 0.0f;   // cycles per pixel of luminance stripes
    float stripe_amp = 0.0f;

    float gamma = 1.0f;              // photometric shift
    float hue_rotation_deg = 0.0f;
    float brightness_offset = 0.0f;  // unit-range offset

    int min_shapes = 4, max_shapes = 9;   // shape grammar ranges
    int min_size = 8, max_size = 26;

    void validate() const {
        if (classes < 2 || classes >= 255) throw ConfigError("DomainSpec: need 2 <= S < 255");
        if (height < 8 || width < 8) throw ConfigError("DomainSpec: image too small");
        if (!(std::isfinite(gamma) && std::isfinite(hue_rotation_deg) &&
              std::isfinite(brightness_offset)))
            throw ConfigError("DomainSpec: non-finite photometric shift");
        if (min_shapes < 0 || max_shapes < min_shapes || min_size < 1 || max_size < min_size)
            throw ConfigError("DomainSpec: bad shape grammar ranges");
    }
};

inline std::vector<std::array<float, 3>> default_palette(int classes) {
    std::vector<std::array<float, 3>> p(static_cast<size_t>(classes));
    p[0] = {0.45f, 0.62f, 0.85f};  // sky
    if (classes > 1) p[1] = {0.38f, 0.42f, 0.30f};  // ground
    for (int c = 2; c < classes; ++c) {
        float r, g, b;
        hsv_to_rgb(std::fmod(40.0f + 360.0f * (c - 2) / std::max(1, classes - 2), 360.0f), 0.55f,
                   0.72f, r, g, b);
        p[static_cast<size_t>(c)] = {r, g, b};
    }
    return p;
}

struct SegSample {
    ImageU8 image;
    LabelMap labels;
    std::string domain;
};

namespace detail {

struct Shape {
    int kind;  // 0 rect, 1 circle, 2 band
    int cx, cy, a, b;
    bool vertical;
    uint8_t cls;
};

inline void paint(LabelMap& lab, const Shape& s) {
    switch (s.kind) {
        case 0:
            for (int y = std::max(0, s.cy - s.b); y <= std::min(lab.h - 1, s.cy + s.b); ++y)
                for (int x = std::max(0, s.cx - s.a); x <= std::min(lab.w - 1, s.cx + s.a); ++x)
                    lab.at(y, x) = s.cls;
            break;
        case 1: {
            const int r2 = s.a * s.a;
            for (int y = std::max(0, s.cy - s.a); y <= std::min(lab.h - 1, s.cy + s.a); ++y)
                for (int x = std::max(0, s.cx - s.a); x <= std::min(lab.w - 1, s.cx + s.a); ++x)
                    if ((y - s.cy) * (y - s.cy) + (x - s.cx) * (x - s.cx) <= r2)
                        lab.at(y, x) = s.cls;
            break;
        }
        default:
            if (s.vertical) {
                for (int y = 0; y < lab.h; ++y)
                    for (int x = std::max(0, s.cx - s.a); x <= std::min(lab.w - 1, s.cx + s.a); ++x)
                        lab.at(y, x) = s.cls;
            } else {
                for (int y = std::max(0, s.cy - s.a); y <= std::min(lab.h - 1, s.cy + s.a); ++y)
                    for (int x = 0; x < lab.w; ++x) lab.at(y, x) = s.cls;
            }
            break;
    }
}

}  // namespace detail

// Generate one sample. Geometry draws come from a stream that depends only on
// (seed, index) and the shape-grammar fields, so label maps pair up across
// domains that differ in rendering only.
inline SegSample gen_sample(const DomainSpec& spec, uint64_t seed, uint64_t index) {
    const auto palette =
        spec.palette_mean.empty() ? default_palette(spec.classes) : spec.palette_mean;
    if (static_cast<int>(palette.size()) != spec.classes)
        throw ConfigError("palette size must equal class count");

    RngStream geom(seed, mix_seed(0x67656F6DULL, index));
    RngStream render(seed, mix_seed(0x72656E64ULL, index));

    const int h = spec.height, w = spec.width;
    SegSample out;
    out.domain = spec.name;
    out.labels = LabelMap(h, w, 0);

    // ground plane below a horizon line
    const int horizon = static_cast<int>(std::lround(h * geom.uniform_range(0.40, 0.70)));
    for (int y = horizon; y < h; ++y)
        for (int x = 0; x < w; ++x) out.labels.at(y, x) = spec.classes > 1 ? 1 : 0;

    const int nshapes = geom.uniform_int(spec.min_shapes, spec.max_shapes);
    for (int i = 0; i < nshapes; ++i) {
        detail::Shape s;
        s.kind = geom.uniform_int(0, 2);
        s.cls = static_cast<uint8_t>(geom.uniform_int(1, spec.classes - 1));
        s.cx = geom.uniform_int(0, w - 1);
        s.cy = geom.uniform_int(0, h - 1);
        s.a = geom.uniform_int(spec.min_size / 2, spec.max_size / 2);
        s.b = geom.uniform_int(spec.min_size / 2, spec.max_size / 2);
        s.vertical = geom.bernoulli(0.5);
        if (s.kind == 2) s.a = std::max(1, s.a / 2);  // thinner bands
        detail::paint(out.labels, s);
    }

    // rendering: per-sample class colors, stripes, noise, photometric shift
    std::vector<std::array<float, 3>> color(static_cast<size_t>(spec.classes));
    for (int c = 0; c < spec.classes; ++c)
        for (int k = 0; k < 3; ++k)
            color[static_cast<size_t>(c)][static_cast<size_t>(k)] =
                std::clamp(palette[static_cast<size_t>(c)][static_cast<size_t>(k)] +
                               spec.palette_jitter * static_cast<float>(render.normal()),
                           0.0f, 1.0f);
    const float phase = static_cast<float>(render.uniform_range(0.0, 6.283185307179586));

    out.image = ImageU8(h, w);
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            const uint8_t cls = out.labels.at(y, x);
            const float stripe =
                spec.stripe_amp > 0.0f
                    ? 1.0f + spec.stripe_amp *
                                 std::sin(6.2831853f * spec.stripe_freq * (x + 0.4f * y) + phase)
                    : 1.0f;
            const float noise = spec.noise_amp * static_cast<float>(render.uniform_range(-1, 1));
            for (int c = 0; c < 3; ++c) {
                float v = color[cls][static_cast<size_t>(c)] * stripe + noise;
                v = std::clamp(v + spec.brightness_offset, 0.0f, 1.0f);
                v = std::pow(v, spec.gamma);
                out.image.at(y, x, c) = quantize_u8(v * 255.0f);
            }
            if (spec.hue_rotation_deg != 0.0f) {
                float r = out.image.at(y, x, 0) / 255.0f;
                float g = out.image.at(y, x, 1) / 255.0f;
                float b = out.image.at(y, x, 2) / 255.0f;
                float hh, ss, vv;
                rgb_to_hsv(r, g, b, hh, ss, vv);
                hh = std::fmod(hh + spec.hue_rotation_deg + 360.0f, 360.0f);
                hsv_to_rgb(hh, ss, vv, r, g, b);
                out.image.at(y, x, 0) = quantize_u8(r * 255.0f);
                out.image.at(y, x, 1) = quantize_u8(g * 255.0f);
                out.image.at(y, x, 2) = quantize_u8(b * 255.0f);
            }
        }
    }
    return out;
}

inline std::vector<SegSample> gen_domain(const DomainSpec& spec, int n, uint64_t seed) {
    if (n < 1) throw UsageError("gen_domain: need n >= 1");
    spec.validate();
    std::vector<SegSample> out;
    out.reserve(static_cast<size_t>(n));
    for (int i = 0; i < n; ++i) out.push_back(gen_sample(spec, seed, static_cast<uint64_t>(i)));
    return out;
}

// floor for train and dev, remainder goes to test*
struct Splits {
    std::vector<SegSample> train, dev, test;
};

inline Splits split(const std::vector<SegSample>& samples, std::array<double, 3> fractions) {
    const double total = fractions[0] + fractions[1] + fractions[2];
    if (std::abs(total - 1.0) > 1e-9) throw UsageError("split: fractions must sum to 1");
    const size_t n = samples.size();
    const size_t n_train = static_cast<size_t>(fractions[0] * static_cast<double>(n));
    const size_t n_dev = static_cast<size_t>(fractions[1] * static_cast<double>(n));
    Splits s;
    s.train.assign(samples.begin(), samples.begin() + static_cast<long>(n_train));
    s.dev.assign(samples.begin() + static_cast<long>(n_train),
                 samples.begin() + static_cast<long>(n_train + n_dev));
    s.test.assign(samples.begin() + static_cast<long>(n_train + n_dev), samples.end());
    return s;
}

// Dataset dump: [u32 n][per sample: u16 H, u16 W, raw u8 RGB, raw u8 labels]
inline void write_split_file(const std::string& path, const std::vector<SegSample>& samples) {
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw UsageError("cannot open dataset file for writing: " + path);
    const uint32_t n = static_cast<uint32_t>(samples.size());
    f.write(reinterpret_cast<const char*>(&n), 4);
    for (const SegSample& s : samples) {
        const uint16_t hw[2] = {static_cast<uint16_t>(s.image.h),
                                static_cast<uint16_t>(s.image.w)};
        f.write(reinterpret_cast<const char*>(hw), 4);
        f.write(reinterpret_cast<const char*>(s.image.data.data()),
                static_cast<long>(s.image.data.size()));
        f.write(reinterpret_cast<const char*>(s.labels.data.data()),
                static_cast<long>(s.labels.data.size()));
    }
    if (!f) throw UsageError("failed writing dataset file: " + path);
}

inline std::vector<SegSample> read_split_file(const std::string& path,
                                              const std::string& domain = "") {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw UsageError("cannot open dataset file: " + path);
    uint32_t n = 0;
    f.read(reinterpret_cast<char*>(&n), 4);
    if (!f) throw FormatError("dataset file truncated in header: " + path);
    std::vector<SegSample> out(n);
    for (uint32_t i = 0; i < n; ++i) {
        uint16_t hw[2];
        f.read(reinterpret_cast<char*>(hw), 4);
        if (!f) throw FormatError("dataset file truncated at sample header: " + path);
        SegSample& s = out[i];
        s.domain = domain;
        s.image = ImageU8(hw[0], hw[1]);
        s.labels = LabelMap(hw[0], hw[1]);
        f.read(reinterpret_cast<char*>(s.image.data.data()),
               static_cast<long>(s.image.data.size()));
        f.read(reinterpret_cast<char*>(s.labels.data.data()),
               static_cast<long>(s.labels.data.size()));
        if (!f) throw FormatError("dataset file truncated in sample body: " + path);
    }
    return out;
}

// Desk-scale defaults: one source domain, one photometric-shift target and
// one texture-shift target.
inline DomainSpec source_domain_spec(int classes = 5, int hw = 64) {
    DomainSpec d;
    d.name = "source";
    d.classes = classes;
    d.height = d.width = hw;
    return d;
}

inline DomainSpec target_photo_spec(int classes = 5, int hw = 64) {
    DomainSpec d = source_domain_spec(classes, hw);
    d.name = "target_photo";
    d.gamma = 1.8f;
    d.hue_rotation_deg = 60.0f;
    d.brightness_offset = 0.15f;
    return d;
}

inline DomainSpec target_tex_spec(int classes = 5, int hw = 64) {
    DomainSpec d = source_domain_spec(classes, hw);
    d.name = "target_tex";
    d.noise_amp = 0.18f;
    d.stripe_freq = 0.45f;
    d.stripe_amp = 0.35f;
    return d;
}

}  // namespace revt
