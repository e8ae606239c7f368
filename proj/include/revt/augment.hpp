#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "revt/common.hpp"
#include "revt/image.hpp"
#include "revt/rng.hpp"
#include "revt/synthdata.hpp"
#include "revt/tensor.hpp"

namespace revt {

// ---------------------------------------------------------------------------
// Photometric primitives. All operate on float images in 0..255 scale so the
// gated pipeline can defer clamping and quantization to the end.
// ---------------------------------------------------------------------------

inline void photo_brightness(ImageF32& img, float delta) {
    for (float& v : img.data) v += delta;
}

inline void photo_contrast(ImageF32& img, float factor) {
    for (float& v : img.data) v *= factor;
}

// saturation scale and hue rotation act in HSV space
inline void photo_saturation_hue(ImageF32& img, bool do_sat, float sat_factor, bool do_hue,
                                 float hue_delta_deg) {
    if (!do_sat && !do_hue) return;
    for (int y = 0; y < img.h; ++y) {
        for (int x = 0; x < img.w; ++x) {
            float r = std::clamp(img.at(y, x, 0), 0.0f, 255.0f) / 255.0f;
            float g = std::clamp(img.at(y, x, 1), 0.0f, 255.0f) / 255.0f;
            float b = std::clamp(img.at(y, x, 2), 0.0f, 255.0f) / 255.0f;
            float h, s, v;
            rgb_to_hsv(r, g, b, h, s, v);
            if (do_sat) s = std::clamp(s * sat_factor, 0.0f, 1.0f);
            if (do_hue) h = std::fmod(h + hue_delta_deg + 720.0f, 360.0f);
            hsv_to_rgb(h, s, v, r, g, b);
            img.at(y, x, 0) = r * 255.0f;
            img.at(y, x, 1) = g * 255.0f;
            img.at(y, x, 2) = b * 255.0f;
        }
    }
}

inline void photo_channel_swap(ImageF32& img, int perm_index) {
    static constexpr int kPerms[6][3] = {{0, 1, 2}, {0, 2, 1}, {1, 0, 2},
                                         {1, 2, 0}, {2, 0, 1}, {2, 1, 0}};
    const int* p = kPerms[perm_index % 6];
    for (int y = 0; y < img.h; ++y)
        for (int x = 0; x < img.w; ++x) {
            const float r = img.at(y, x, 0), g = img.at(y, x, 1), b = img.at(y, x, 2);
            const float src[3] = {r, g, b};
            img.at(y, x, 0) = src[p[0]];
            img.at(y, x, 1) = src[p[1]];
            img.at(y, x, 2) = src[p[2]];
        }
}

struct PhotoAugParams {
    float p = 0.5f;              // per-stage gate probability
    float brightness_delta = 32.0f;
    float contrast_lo = 0.5f, contrast_hi = 1.5f;
    float saturation_lo = 0.5f, saturation_hi = 1.5f;
    float hue_delta_deg = 18.0f;
};

// Sequential photometric augmentation. Contrast sits at position 2 (mode 1)
// or second to last (mode 2), chosen uniformly per image. Draw order is part
// of the determinism contract:
//   mode, brightness gate [delta], contrast gate [factor] (mode 1),
//   saturation gate [factor], hue gate [delta],
//   contrast gate [factor] (mode 2), swap gate [permutation].
inline ImageU8 photo_aug(const ImageU8& img, RngStream& rng,
                         const PhotoAugParams& prm = PhotoAugParams{}) {
    const int mode = rng.uniform() < 0.5 ? 1 : 2;

    bool applied_any = false;
    ImageF32 f = to_f32(img);

    if (rng.bernoulli(prm.p)) {
        photo_brightness(f, static_cast<float>(
                                rng.uniform_range(-prm.brightness_delta, prm.brightness_delta)));
        applied_any = true;
    }
    if (mode == 1 && rng.bernoulli(prm.p)) {
        photo_contrast(f, static_cast<float>(rng.uniform_range(prm.contrast_lo, prm.contrast_hi)));
        applied_any = true;
    }
    const bool do_sat = rng.bernoulli(prm.p);
    const float sat =
        do_sat ? static_cast<float>(rng.uniform_range(prm.saturation_lo, prm.saturation_hi)) : 1.0f;
    const bool do_hue = rng.bernoulli(prm.p);
    const float hue =
        do_hue ? static_cast<float>(rng.uniform_range(-prm.hue_delta_deg, prm.hue_delta_deg)) : 0.0f;
    if (do_sat || do_hue) {
        photo_saturation_hue(f, do_sat, sat, do_hue, hue);
        applied_any = true;
    }
    if (mode == 2 && rng.bernoulli(prm.p)) {
        photo_contrast(f, static_cast<float>(rng.uniform_range(prm.contrast_lo, prm.contrast_hi)));
        applied_any = true;
    }
    if (rng.bernoulli(prm.p)) {
        photo_channel_swap(f, rng.uniform_int(0, 5));
        applied_any = true;
    }

    if (!applied_any) return img;  // bitwise identity when every gate is off
    return to_u8(f);
}

// ---------------------------------------------------------------------------
// Bilateral filter: spatial and color Gaussians, neighborhood truncated at
// the borders, weights renormalized per pixel.
// ---------------------------------------------------------------------------

inline ImageF32 bilateral_filter_core(const ImageU8& img, int kernel_size, float sigma_s,
                                      float sigma_c) {
    if (kernel_size < 1 || kernel_size % 2 == 0)
        throw UsageError("bilateral filter kernel must be odd and >= 1");
    const int r = (kernel_size - 1) / 2;
    ImageF32 out(img.h, img.w);
    const double inv2ss = 1.0 / (2.0 * static_cast<double>(sigma_s) * sigma_s);
    const double inv2sc = 1.0 / (2.0 * static_cast<double>(sigma_c) * sigma_c);
    for (int y = 0; y < img.h; ++y) {
        for (int x = 0; x < img.w; ++x) {
            const double ci[3] = {static_cast<double>(img.at(y, x, 0)),
                                  static_cast<double>(img.at(y, x, 1)),
                                  static_cast<double>(img.at(y, x, 2))};
            double acc[3] = {0, 0, 0};
            double w = 0.0;
            for (int dy = -r; dy <= r; ++dy) {
                const int ny = y + dy;
                if (ny < 0 || ny >= img.h) continue;
                for (int dx = -r; dx <= r; ++dx) {
                    const int nx = x + dx;
                    if (nx < 0 || nx >= img.w) continue;
                    const double cj[3] = {static_cast<double>(img.at(ny, nx, 0)),
                                          static_cast<double>(img.at(ny, nx, 1)),
                                          static_cast<double>(img.at(ny, nx, 2))};
                    const double d2_sp = static_cast<double>(dy) * dy + static_cast<double>(dx) * dx;
                    const double d2_col = (ci[0] - cj[0]) * (ci[0] - cj[0]) +
                                          (ci[1] - cj[1]) * (ci[1] - cj[1]) +
                                          (ci[2] - cj[2]) * (ci[2] - cj[2]);
                    const double wij = std::exp(-d2_sp * inv2ss) * std::exp(-d2_col * inv2sc);
                    acc[0] += wij * cj[0];
                    acc[1] += wij * cj[1];
                    acc[2] += wij * cj[2];
                    w += wij;
                }
            }
            out.at(y, x, 0) = static_cast<float>(acc[0] / w);
            out.at(y, x, 1) = static_cast<float>(acc[1] / w);
            out.at(y, x, 2) = static_cast<float>(acc[2] / w);
        }
    }
    return out;
}

struct BilateralParams {
    float sigma_s = 75.0f;
    float sigma_c = 75.0f;
    int kernel_min = 1, kernel_max = 15;  // odd values, drawn uniformly per image
    float p = 0.5f;
};

inline ImageU8 bilateral_filter(const ImageU8& img, RngStream& rng,
                                const BilateralParams& prm = BilateralParams{}) {
    if (!rng.bernoulli(prm.p)) return img;
    const int n_odd = (prm.kernel_max - prm.kernel_min) / 2 + 1;
    const int k = prm.kernel_min + 2 * rng.uniform_int(0, n_odd - 1);
    if (k == 1) return img;  // neighborhood is the pixel itself
    return to_u8(bilateral_filter_core(img, k, prm.sigma_s, prm.sigma_c));
}

// ---------------------------------------------------------------------------
// Mixer set: procedural plasma/fBm noise images in [0, 1], the desk-scale
// stand-in for an external fractal corpus.
// ---------------------------------------------------------------------------

struct MixerSet {
    int h = 0, w = 0;
    std::vector<std::vector<float>> images;  // each h*w*3, values in [0, 1]

    static MixerSet generate(int count, int h, int w, uint64_t seed) {
        if (count < 1) throw UsageError("mixer set needs at least one image");
        MixerSet set;
        set.h = h;
        set.w = w;
        set.images.reserve(static_cast<size_t>(count));
        for (int m = 0; m < count; ++m) {
            std::vector<float> img(static_cast<size_t>(h) * w * 3);
            for (int c = 0; c < 3; ++c) {
                const uint64_t salt = mix_seed(seed, static_cast<uint64_t>(m), 101 + c);
                for (int y = 0; y < h; ++y)
                    for (int x = 0; x < w; ++x)
                        img[(static_cast<size_t>(y) * w + x) * 3 + static_cast<size_t>(c)] =
                            fbm(salt, x, y);
            }
            set.images.push_back(std::move(img));
        }
        return set;
    }

private:
    static float lattice(uint64_t salt, int xi, int yi) {
        const uint64_t hsh = splitmix64(salt ^ splitmix64(static_cast<uint64_t>(xi) * 0x9E3779B1u ^
                                                          (static_cast<uint64_t>(yi) << 32)));
        return static_cast<float>(hsh >> 40) / static_cast<float>(1 << 24);
    }

    static float value_noise(uint64_t salt, float x, float y) {
        const int xi = static_cast<int>(std::floor(x)), yi = static_cast<int>(std::floor(y));
        const float fx = x - xi, fy = y - yi;
        const float sx = fx * fx * (3 - 2 * fx), sy = fy * fy * (3 - 2 * fy);
        const float v00 = lattice(salt, xi, yi), v10 = lattice(salt, xi + 1, yi);
        const float v01 = lattice(salt, xi, yi + 1), v11 = lattice(salt, xi + 1, yi + 1);
        return (v00 * (1 - sx) + v10 * sx) * (1 - sy) + (v01 * (1 - sx) + v11 * sx) * sy;
    }

    static float fbm(uint64_t salt, int x, int y) {
        float amp = 0.5f, freq = 1.0f / 16.0f, total = 0.0f, norm = 0.0f;
        for (int o = 0; o < 4; ++o) {
            total += amp * value_noise(mix_seed(salt, static_cast<uint64_t>(o)), x * freq, y * freq);
            norm += amp;
            amp *= 0.5f;
            freq *= 2.0f;
        }
        return total / norm;
    }
};

// ---------------------------------------------------------------------------
// PixMix* mixing ops on unit-range float buffers.
// ---------------------------------------------------------------------------

inline void pixmix_add(std::vector<float>& a, const std::vector<float>& b, float wa, float wb) {
    for (size_t i = 0; i < a.size(); ++i)
        a[i] = std::clamp(wa * a[i] + wb * b[i], 0.0f, 1.0f);
}

inline void pixmix_multiply(std::vector<float>& a, const std::vector<float>& b, float wa,
                            float wb) {
    for (size_t i = 0; i < a.size(); ++i)
        a[i] = std::clamp(std::pow(2.0f * a[i], wa) * std::pow(2.0f * b[i], wb) / 2.0f, 0.0f,
                          1.0f);
}

struct PixmixTrace {
    bool x0_augmented = false;
    int rounds = 0;
    struct Round {
        bool src_augmented = false;
        int mixer_index = -1;
        bool op_add = false;
        float wa = 0, wb = 0;
    };
    std::vector<Round> round_detail;
};

struct PixmixParams {
    int max_rounds = 3;     // K
    float beta = 3.0f;      // Beta(beta, beta) mixing weights
};

namespace detail {
inline std::vector<float> image_unit(const ImageU8& img) {
    std::vector<float> v(img.data.size());
    for (size_t i = 0; i < v.size(); ++i) v[i] = img.data[i] / 255.0f;
    return v;
}

// the PixMix* restriction: inner augment is baseline PhotoAug + RandomFlip
inline std::vector<float> pixmix_inner_augment(const ImageU8& img, RngStream& rng) {
    ImageU8 a = photo_aug(img, rng);
    if (rng.bernoulli(0.5)) {
        ImageU8 flipped(a.h, a.w);
        for (int y = 0; y < a.h; ++y)
            for (int x = 0; x < a.w; ++x)
                for (int c = 0; c < 3; ++c) flipped.at(y, x, c) = a.at(y, a.w - 1 - x, c);
        a = std::move(flipped);
    }
    return image_unit(a);
}
}  // namespace detail

// Mixing loop over unit-range images: start from augment(x) or x, then up to
// K rounds each mixing in augment(x) or a mixer image with add/multiply and
// Beta-distributed weights. Draw order: x0 gate [augment draws], round count,
// then per round: source gate [augment draws | mixer index], op gate, wa, wb.
inline ImageU8 pixmix_star(const ImageU8& img, const MixerSet& mixers, RngStream& rng,
                           const PixmixParams& prm = PixmixParams{},
                           PixmixTrace* trace = nullptr) {
    if (mixers.images.empty()) throw UsageError("pixmix: empty mixer set");
    if (mixers.h != img.h || mixers.w != img.w)
        throw DimensionError("pixmix: mixer size does not match image");
    if (prm.beta <= 0.0f || std::floor(prm.beta) != prm.beta)
        throw UsageError("pixmix: beta must be a positive integer shape");

    const bool x0_aug = rng.bernoulli(0.5);
    std::vector<float> x = x0_aug ? detail::pixmix_inner_augment(img, rng)
                                  : detail::image_unit(img);
    const int rounds = rng.uniform_int(0, prm.max_rounds);
    if (trace) {
        trace->x0_augmented = x0_aug;
        trace->rounds = rounds;
        trace->round_detail.clear();
    }
    const int beta_i = static_cast<int>(prm.beta);
    for (int k = 0; k < rounds; ++k) {
        PixmixTrace::Round rd;
        rd.src_augmented = rng.bernoulli(0.5);
        std::vector<float> mix;
        if (rd.src_augmented) {
            mix = detail::pixmix_inner_augment(img, rng);
        } else {
            rd.mixer_index = rng.uniform_int(0, static_cast<int>(mixers.images.size()) - 1);
            mix = mixers.images[static_cast<size_t>(rd.mixer_index)];
        }
        rd.op_add = rng.bernoulli(0.5);
        rd.wa = static_cast<float>(rng.beta_int(beta_i, beta_i));
        rd.wb = static_cast<float>(rng.beta_int(beta_i, beta_i));
        if (rd.op_add)
            pixmix_add(x, mix, rd.wa, rd.wb);
        else
            pixmix_multiply(x, mix, rd.wa, rd.wb);
        if (trace) trace->round_detail.push_back(rd);
    }

    ImageU8 out(img.h, img.w);
    for (size_t i = 0; i < x.size(); ++i) out.data[i] = quantize_u8(x[i] * 255.0f);
    return out;
}

// ---------------------------------------------------------------------------
// Geometric stages
// ---------------------------------------------------------------------------

// Uniformly sampled crop, rejected while any class occupies more than
// max_class_fraction of the crop; the 10th draw is accepted regardless.
inline void random_crop(ImageU8& img, LabelMap& labels, int crop_h, int crop_w,
                        float max_class_fraction, RngStream& rng) {
    if (crop_h > img.h || crop_w > img.w)
        throw DimensionError("random_crop: crop larger than image");
    if (max_class_fraction <= 0.0f || max_class_fraction > 1.0f)
        throw UsageError("random_crop: class fraction must be in (0, 1]");

    int y0 = 0, x0 = 0;
    for (int attempt = 0; attempt < 10; ++attempt) {
        y0 = rng.uniform_int(0, img.h - crop_h);
        x0 = rng.uniform_int(0, img.w - crop_w);
        std::array<int, 256> counts{};
        for (int y = 0; y < crop_h; ++y)
            for (int x = 0; x < crop_w; ++x) ++counts[labels.at(y0 + y, x0 + x)];
        const int total = crop_h * crop_w;
        bool ok = true;
        for (int c = 0; c < 255; ++c)
            if (static_cast<float>(counts[static_cast<size_t>(c)]) >
                max_class_fraction * static_cast<float>(total)) {
                ok = false;
                break;
            }
        if (ok) break;
    }

    ImageU8 ci(crop_h, crop_w);
    LabelMap cl(crop_h, crop_w);
    for (int y = 0; y < crop_h; ++y)
        for (int x = 0; x < crop_w; ++x) {
            cl.at(y, x) = labels.at(y0 + y, x0 + x);
            for (int c = 0; c < 3; ++c) ci.at(y, x, c) = img.at(y0 + y, x0 + x, c);
        }
    img = std::move(ci);
    labels = std::move(cl);
}

inline void flip_horizontal(ImageU8& img, LabelMap& labels) {
    ImageU8 fi(img.h, img.w);
    LabelMap fl(labels.h, labels.w);
    for (int y = 0; y < img.h; ++y)
        for (int x = 0; x < img.w; ++x) {
            fl.at(y, x) = labels.at(y, img.w - 1 - x);
            for (int c = 0; c < 3; ++c) fi.at(y, x, c) = img.at(y, img.w - 1 - x, c);
        }
    img = std::move(fi);
    labels = std::move(fl);
}

inline bool random_flip(ImageU8& img, LabelMap& labels, float p, RngStream& rng) {
    if (!rng.bernoulli(p)) return false;
    flip_horizontal(img, labels);
    return true;
}

// Aspect-preserving resize: as large as possible inside (target_h, target_w).
inline void resize_fit(ImageU8& img, LabelMap& labels, int target_h, int target_w) {
    const double s = std::min(static_cast<double>(target_h) / img.h,
                              static_cast<double>(target_w) / img.w);
    const int oh = std::max(1, static_cast<int>(std::lround(img.h * s)));
    const int ow = std::max(1, static_cast<int>(std::lround(img.w * s)));
    if (oh == img.h && ow == img.w) return;
    img = resize_bilinear(img, oh, ow);
    labels = resize_nearest(labels, oh, ow);
}

// (x/255 - mean) / std per channel, CHW float tensor
inline Tensor normalize(const ImageU8& img, const std::array<float, 3>& mean,
                        const std::array<float, 3>& stddev) {
    Tensor t = Tensor::zeros({3, img.h, img.w});
    for (int c = 0; c < 3; ++c) {
        const float m = mean[static_cast<size_t>(c)];
        const float inv = 1.0f / stddev[static_cast<size_t>(c)];
        for (int y = 0; y < img.h; ++y)
            for (int x = 0; x < img.w; ++x)
                t.data()[(static_cast<int64_t>(c) * img.h + y) * img.w + x] =
                    (img.at(y, x, c) / 255.0f - m) * inv;
    }
    return t;
}

// ---------------------------------------------------------------------------
// Policies: the six base-model augmentation recipes. Stage order follows the
// training pipeline: resize, crop, bilateral filter, flip, PhotoAug or
// PixMix*, normalize.
// ---------------------------------------------------------------------------

struct AugPolicy {
    std::string id = "a1";
    int resize_h = 64, resize_w = 64;
    int crop_h = 32, crop_w = 32;
    float crop_max_class_fraction = 0.75f;  // rho
    bool use_bilateral = false;
    bool use_flip = true;
    bool use_photoaug = true;
    bool use_pixmix = false;
    float flip_p = 0.5f;
    PhotoAugParams photo;
    BilateralParams bilateral;
    PixmixParams pixmix;
    std::array<float, 3> norm_mean{0.5f, 0.5f, 0.5f};
    std::array<float, 3> norm_std{0.25f, 0.25f, 0.25f};

    static AugPolicy preset(const std::string& id, int resize_hw = 64, int crop_hw = 32) {
        AugPolicy p;
        p.id = id;
        p.resize_h = p.resize_w = resize_hw;
        p.crop_h = p.crop_w = crop_hw;
        if (id == "a1") {
        } else if (id == "a2") {
            p.use_photoaug = false;
        } else if (id == "a3") {
            p.use_photoaug = false;
            p.use_flip = false;
        } else if (id == "a4") {
            p.use_photoaug = false;
            p.use_pixmix = true;
        } else if (id == "a5") {
            p.use_bilateral = true;
        } else if (id == "a6") {
            p.use_photoaug = false;
            p.use_pixmix = true;
            p.use_bilateral = true;
        } else {
            throw ConfigError("unknown augmentation policy id: " + id);
        }
        return p;
    }
};

struct AugResult {
    ImageU8 image;   // after all image-space stages, before normalize
    LabelMap labels;
    Tensor input;    // normalized CHW tensor
    std::vector<std::string> stages;  // which stages ran (instrumentation)
};

// Per-stage sub-streams are forked from the sample stream so removing one
// stage never shifts the draws of another.
inline AugResult apply_policy(const AugPolicy& policy, const SegSample& sample,
                              const MixerSet* mixers, RngStream rng) {
    AugResult r;
    r.image = sample.image;
    r.labels = sample.labels;

    RngStream crop_rng = rng.fork(1), bf_rng = rng.fork(2), flip_rng = rng.fork(3),
              photo_rng = rng.fork(4), pixmix_rng = rng.fork(5);

    resize_fit(r.image, r.labels, policy.resize_h, policy.resize_w);
    r.stages.push_back("resize");

    random_crop(r.image, r.labels, policy.crop_h, policy.crop_w,
                policy.crop_max_class_fraction, crop_rng);
    r.stages.push_back("crop");

    if (policy.use_bilateral) {
        r.image = bilateral_filter(r.image, bf_rng, policy.bilateral);
        r.stages.push_back("bilateral");
    }
    if (policy.use_flip) {
        random_flip(r.image, r.labels, policy.flip_p, flip_rng);
        r.stages.push_back("flip");
    }
    if (policy.use_pixmix) {
        if (!mixers) throw UsageError("policy needs a mixer set for PixMix*");
        r.image = pixmix_star(r.image, *mixers, pixmix_rng, policy.pixmix);
        r.stages.push_back("pixmix");
    } else if (policy.use_photoaug) {
        r.image = photo_aug(r.image, photo_rng, policy.photo);
        r.stages.push_back("photoaug");
    }

    r.input = normalize(r.image, policy.norm_mean, policy.norm_std);
    r.stages.push_back("normalize");
    return r;
}

}  // namespace revt
