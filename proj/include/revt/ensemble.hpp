#pragma once

#include <iostream>
#include <vector>

#include "revt/common.hpp"
#include "revt/nets.hpp"
#include "revt/tensor.hpp"

namespace revt {

namespace detail {
inline void check_members(const std::vector<const SegModel*>& models) {
    if (models.empty()) throw UsageError("ensemble: need at least one member");
    for (const SegModel* m : models)
        if (m == nullptr) throw UsageError("ensemble: null member");
}
}  // namespace detail

// y = (1/M) sum_m F_m(x)
inline Tensor posterior_mean(const std::vector<const SegModel*>& models, const Tensor& x) {
    detail::check_members(models);
    std::vector<double> acc;
    std::vector<int> shape;
    for (const SegModel* m : models) {
        const Tensor y = forward(*m, x);
        if (acc.empty()) {
            acc.assign(static_cast<size_t>(y.numel()), 0.0);
            shape = y.shape();
        }
        for (int64_t i = 0; i < y.numel(); ++i) acc[static_cast<size_t>(i)] += y.data()[i];
    }
    Tensor out = Tensor::zeros(shape);
    const double inv = 1.0 / static_cast<double>(models.size());
    for (size_t i = 0; i < acc.size(); ++i) out.data()[i] = static_cast<float>(acc[i] * inv);
    return out;
}

// per-pixel elementwise product of the member posteriors, renormalized per
// pixel; an all-zero product row falls back to uniform (counted, logged)
inline Tensor posterior_product(const std::vector<const SegModel*>& models, const Tensor& x,
                                int64_t* zero_rows_out = nullptr) {
    detail::check_members(models);
    std::vector<double> acc;
    std::vector<int> shape;
    for (const SegModel* m : models) {
        const Tensor y = forward(*m, x);
        if (acc.empty()) {
            acc.assign(static_cast<size_t>(y.numel()), 1.0);
            shape = y.shape();
        }
        for (int64_t i = 0; i < y.numel(); ++i) acc[static_cast<size_t>(i)] *= y.data()[i];
    }
    const int b = shape[0], s = shape[1], h = shape[2], w = shape[3];
    const int64_t plane = static_cast<int64_t>(h) * w;
    Tensor out = Tensor::zeros(shape);
    int64_t zero_rows = 0;
    for (int bi = 0; bi < b; ++bi) {
        for (int64_t i = 0; i < plane; ++i) {
            double total = 0.0;
            for (int c = 0; c < s; ++c)
                total += acc[static_cast<size_t>((static_cast<int64_t>(bi) * s + c) * plane + i)];
            if (total <= 0.0) {
                ++zero_rows;
                for (int c = 0; c < s; ++c)
                    out.data()[(static_cast<int64_t>(bi) * s + c) * plane + i] =
                        1.0f / static_cast<float>(s);
            } else {
                for (int c = 0; c < s; ++c)
                    out.data()[(static_cast<int64_t>(bi) * s + c) * plane + i] =
                        static_cast<float>(
                            acc[static_cast<size_t>((static_cast<int64_t>(bi) * s + c) * plane +
                                                    i)] /
                            total);
            }
        }
    }
    if (zero_rows_out) *zero_rows_out = zero_rows;
    if (zero_rows > 0 && !zero_rows_out)
        std::cerr << "posterior_product: " << zero_rows
                  << " all-zero pixel rows fell back to uniform\n";
    return out;
}

// z-bar = (1/M) sum_m E_m(x) per scale
inline std::vector<Tensor> mean_encoder_features(const std::vector<const SegModel*>& models,
                                                 const Tensor& x) {
    detail::check_members(models);
    std::vector<std::vector<double>> acc;
    std::vector<std::vector<int>> shapes;
    for (const SegModel* m : models) {
        const std::vector<Tensor> feats = forward_encoder(*m, x);
        if (acc.empty()) {
            acc.resize(feats.size());
            shapes.resize(feats.size());
            for (size_t s = 0; s < feats.size(); ++s) {
                acc[s].assign(static_cast<size_t>(feats[s].numel()), 0.0);
                shapes[s] = feats[s].shape();
            }
        }
        for (size_t s = 0; s < feats.size(); ++s) {
            if (feats[s].shape() != shapes[s])
                throw DimensionError("encoder feature shapes differ across members");
            for (int64_t i = 0; i < feats[s].numel(); ++i)
                acc[s][static_cast<size_t>(i)] += feats[s].data()[i];
        }
    }
    const double inv = 1.0 / static_cast<double>(models.size());
    std::vector<Tensor> mean_feats;
    for (size_t s = 0; s < acc.size(); ++s) {
        Tensor t = Tensor::zeros(shapes[s]);
        for (size_t i = 0; i < acc[s].size(); ++i)
            t.data()[i] = static_cast<float>(acc[s][i] * inv);
        mean_feats.push_back(t);
    }
    return mean_feats;
}

// Averaged encoder features pushed through the decoder of member m''
// (1-based).
inline Tensor encoder_feature_mean(const std::vector<const SegModel*>& models, const Tensor& x,
                                   int decoder_index) {
    detail::check_members(models);
    if (decoder_index < 1 || decoder_index > static_cast<int>(models.size()))
        throw UsageError("encoder_feature_mean: decoder index out of range");
    const std::vector<Tensor> zbar = mean_encoder_features(models, x);
    const SegModel& dec = *models[static_cast<size_t>(decoder_index - 1)];
    return softmax(forward_decoder_logits(dec, zbar, x.dim(2), x.dim(3)), 1);
}

// All-decoder variant: one output per associated decoder.
inline std::vector<Tensor> encoder_feature_mean_all(const std::vector<const SegModel*>& models,
                                                    const Tensor& x) {
    detail::check_members(models);
    const std::vector<Tensor> zbar = mean_encoder_features(models, x);
    std::vector<Tensor> outs;
    outs.reserve(models.size());
    for (const SegModel* m : models)
        outs.push_back(softmax(forward_decoder_logits(*m, zbar, x.dim(2), x.dim(3)), 1));
    return outs;
}

}  // namespace revt
