#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <vector>

#include "revt/common.hpp"

namespace revt {

// Interleaved 8-bit RGB image.
struct ImageU8 {
    int h = 0, w = 0;
    std::vector<uint8_t> data;  // h*w*3

    ImageU8() = default;
    ImageU8(int height, int width, uint8_t fill = 0)
        : h(height), w(width), data(static_cast<size_t>(height) * width * 3, fill) {}

    uint8_t& at(int y, int x, int c) {
        return data[(static_cast<size_t>(y) * w + x) * 3 + static_cast<size_t>(c)];
    }
    uint8_t at(int y, int x, int c) const {
        return data[(static_cast<size_t>(y) * w + x) * 3 + static_cast<size_t>(c)];
    }
};

struct LabelMap {
    int h = 0, w = 0;
    std::vector<uint8_t> data;  // h*w

    LabelMap() = default;
    LabelMap(int height, int width, uint8_t fill = 0)
        : h(height), w(width), data(static_cast<size_t>(height) * width, fill) {}

    uint8_t& at(int y, int x) { return data[static_cast<size_t>(y) * w + x]; }
    uint8_t at(int y, int x) const { return data[static_cast<size_t>(y) * w + x]; }
};

// Float image on the same interleaved layout; value scale is caller-defined.
struct ImageF32 {
    int h = 0, w = 0;
    std::vector<float> data;

    ImageF32() = default;
    ImageF32(int height, int width, float fill = 0.0f)
        : h(height), w(width), data(static_cast<size_t>(height) * width * 3, fill) {}

    float& at(int y, int x, int c) {
        return data[(static_cast<size_t>(y) * w + x) * 3 + static_cast<size_t>(c)];
    }
    float at(int y, int x, int c) const {
        return data[(static_cast<size_t>(y) * w + x) * 3 + static_cast<size_t>(c)];
    }
};

inline ImageF32 to_f32(const ImageU8& img) {
    ImageF32 out(img.h, img.w);
    for (size_t i = 0; i < img.data.size(); ++i) out.data[i] = static_cast<float>(img.data[i]);
    return out;
}

inline uint8_t quantize_u8(float v) {
    const float c = std::min(255.0f, std::max(0.0f, v));
    return static_cast<uint8_t>(std::lround(c));
}

inline ImageU8 to_u8(const ImageF32& img) {
    ImageU8 out(img.h, img.w);
    for (size_t i = 0; i < img.data.size(); ++i) out.data[i] = quantize_u8(img.data[i]);
    return out;
}

// --- HSV conversions on unit-range rgb; h in [0, 360), s and v in [0, 1] ---

inline void rgb_to_hsv(float r, float g, float b, float& h, float& s, float& v) {
    const float mx = std::max({r, g, b});
    const float mn = std::min({r, g, b});
    const float d = mx - mn;
    v = mx;
    s = mx > 0.0f ? d / mx : 0.0f;
    if (d <= 0.0f) {
        h = 0.0f;
        return;
    }
    if (mx == r)
        h = 60.0f * std::fmod((g - b) / d, 6.0f);
    else if (mx == g)
        h = 60.0f * ((b - r) / d + 2.0f);
    else
        h = 60.0f * ((r - g) / d + 4.0f);
    if (h < 0.0f) h += 360.0f;
}

inline void hsv_to_rgb(float h, float s, float v, float& r, float& g, float& b) {
    const float c = v * s;
    const float hp = h / 60.0f;
    const float x = c * (1.0f - std::abs(std::fmod(hp, 2.0f) - 1.0f));
    float r1 = 0, g1 = 0, b1 = 0;
    if (hp < 1)      { r1 = c; g1 = x; }
    else if (hp < 2) { r1 = x; g1 = c; }
    else if (hp < 3) { g1 = c; b1 = x; }
    else if (hp < 4) { g1 = x; b1 = c; }
    else if (hp < 5) { r1 = x; b1 = c; }
    else             { r1 = c; b1 = x; }
    const float m = v - c;
    r = r1 + m;
    g = g1 + m;
    b = b1 + m;
}

// --- resize primitives, half-pixel centers ---

inline ImageU8 resize_bilinear(const ImageU8& img, int oh, int ow) {
    if (oh < 1 || ow < 1) throw DimensionError("resize: bad target size");
    ImageU8 out(oh, ow);
    const double sy = static_cast<double>(img.h) / oh;
    const double sx = static_cast<double>(img.w) / ow;
    for (int oy = 0; oy < oh; ++oy) {
        double fy = (oy + 0.5) * sy - 0.5;
        fy = std::clamp(fy, 0.0, static_cast<double>(img.h - 1));
        const int y0 = static_cast<int>(fy);
        const int y1 = std::min(y0 + 1, img.h - 1);
        const float wy = static_cast<float>(fy - y0);
        for (int ox = 0; ox < ow; ++ox) {
            double fx = (ox + 0.5) * sx - 0.5;
            fx = std::clamp(fx, 0.0, static_cast<double>(img.w - 1));
            const int x0 = static_cast<int>(fx);
            const int x1 = std::min(x0 + 1, img.w - 1);
            const float wx = static_cast<float>(fx - x0);
            for (int c = 0; c < 3; ++c) {
                const float v = (1 - wy) * ((1 - wx) * img.at(y0, x0, c) + wx * img.at(y0, x1, c)) +
                                wy * ((1 - wx) * img.at(y1, x0, c) + wx * img.at(y1, x1, c));
                out.at(oy, ox, c) = quantize_u8(v);
            }
        }
    }
    return out;
}

inline LabelMap resize_nearest(const LabelMap& lab, int oh, int ow) {
    if (oh < 1 || ow < 1) throw DimensionError("resize: bad target size");
    LabelMap out(oh, ow);
    const double sy = static_cast<double>(lab.h) / oh;
    const double sx = static_cast<double>(lab.w) / ow;
    for (int oy = 0; oy < oh; ++oy) {
        int y = static_cast<int>(std::lround((oy + 0.5) * sy - 0.5));
        y = std::clamp(y, 0, lab.h - 1);
        for (int ox = 0; ox < ow; ++ox) {
            int x = static_cast<int>(std::lround((ox + 0.5) * sx - 0.5));
            x = std::clamp(x, 0, lab.w - 1);
            out.at(oy, ox) = lab.at(y, x);
        }
    }
    return out;
}

}  // namespace revt
