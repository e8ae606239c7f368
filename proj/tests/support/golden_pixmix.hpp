#pragma once

// Frozen PixMix* trace fixture: input image, mixer-set seed, rng seed, the
// recorded mixing decisions and the expected output bytes. Captured once from
// an instrumented run and checked against the mixing pseudo-code by hand.

#include <cstdint>

#include "revt/augment.hpp"

namespace golden {

inline revt::ImageU8 ramp_image_6x6() {
    revt::ImageU8 img(6, 6);
    for (int y = 0; y < 6; ++y)
        for (int x = 0; x < 6; ++x)
            for (int c = 0; c < 3; ++c)
                img.at(y, x, c) = static_cast<uint8_t>((37 * y + 11 * x + 73 * c) % 256);
    return img;
}

inline constexpr uint64_t kMixerSeed = 999;
inline constexpr uint64_t kTraceSeed = 2;           // 3 rounds, both sources, both ops
inline constexpr uint64_t kIdentitySeed = 13;       // identity branch, zero rounds
inline constexpr uint64_t kPhotoIdentitySeed = 24;  // photo_aug: every gate off

inline constexpr uint8_t kTraceBytes[108] = {
    99,  118, 161, 112, 118, 164, 112, 120, 166, 108, 119, 164, 104, 118, 163, 102, 117, 162,
    138, 128, 164, 136, 127, 165, 133, 128, 166, 128, 128, 167, 124, 128, 168, 121, 128, 169,
    152, 135, 134, 150, 135, 132, 146, 136, 165, 143, 137, 167, 140, 137, 147, 136, 137, 151,
    162, 140, 102, 161, 140, 108, 158, 140, 109, 155, 142, 108, 152, 144, 108, 148, 144, 106,
    166, 113, 130, 167, 111, 128, 167, 144, 127, 165, 146, 126, 163, 132, 126, 158, 132, 125,
    168, 94,  143, 168, 97,  140, 168, 96,  138, 168, 96,  138, 168, 94,  139, 166, 90,  138};

}  // namespace golden
