#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <functional>
#include <numeric>
#include <string>
#include <vector>

#include "revt/common.hpp"
#include "revt/nets.hpp"
#include "revt/params.hpp"

namespace revt {

// ---------------------------------------------------------------------------
// MergeSpec: which checkpoints enter the average, with what weights, over
// which parameter subset; everything outside the subset is donated unchanged
// by checkpoint m' (1-based donor index).
// ---------------------------------------------------------------------------

struct MergeSpec {
    std::vector<const ParamTree*> checkpoints;
    std::vector<double> weights;  // empty means uniform 1/M
    Selector selector = Selector::encoder();
    int donor = 1;  // m'

    std::vector<double> effective_weights() const {
        if (!weights.empty()) return weights;
        return std::vector<double>(checkpoints.size(),
                                   1.0 / static_cast<double>(checkpoints.size()));
    }

    void validate() const {
        if (checkpoints.empty()) throw UsageError("merge: need at least one checkpoint");
        for (const ParamTree* t : checkpoints)
            if (t == nullptr || t->empty()) throw UsageError("merge: null or empty checkpoint");
        const auto w = effective_weights();
        if (w.size() != checkpoints.size())
            throw UsageError("merge: weight count does not match checkpoints");
        double total = 0.0;
        for (double v : w) {
            if (v < 0.0) throw UsageError("merge: weights must be non-negative");
            total += v;
        }
        if (std::abs(total - 1.0) > 1e-9) throw UsageError("merge: weights must sum to 1");
        if (donor < 1 || donor > static_cast<int>(checkpoints.size()))
            throw UsageError("merge: donor index out of range");
        std::string path;
        for (size_t m = 1; m < checkpoints.size(); ++m)
            if (!checkpoints[0]->same_structure(*checkpoints[m], &path))
                throw MergeError("checkpoint structure mismatch at " + path);
    }
};

namespace detail {

inline uint64_t fnv1a64(const void* data, size_t n, uint64_t h = 0xcbf29ce484222325ULL) {
    const uint8_t* p = static_cast<const uint8_t*>(data);
    for (size_t i = 0; i < n; ++i) {
        h ^= p[i];
        h *= 0x100000001b3ULL;
    }
    return h;
}

inline uint64_t tree_content_hash(const ParamTree& t) {
    uint64_t h = 0xcbf29ce484222325ULL;
    for (const auto& [path, e] : t) {
        h = fnv1a64(path.data(), path.size(), h);
        h = fnv1a64(e.tensor.data(), static_cast<size_t>(e.tensor.numel()) * 4, h);
    }
    return h;
}

inline int tree_payload_compare(const ParamTree& a, const ParamTree& b) {
    auto ia = a.begin();
    auto ib = b.begin();
    for (; ia != a.end() && ib != b.end(); ++ia, ++ib) {
        const auto& va = ia->second.tensor.values();
        const auto& vb = ib->second.tensor.values();
        const int c = std::memcmp(va.data(), vb.data(),
                                  std::min(va.size(), vb.size()) * sizeof(float));
        if (c != 0) return c;
        if (va.size() != vb.size()) return va.size() < vb.size() ? -1 : 1;
    }
    return 0;
}

// Canonical accumulation order: content-sorted so permuting the
// (checkpoint, weight) pairs cannot change the floating-point sum.
inline std::vector<size_t> canonical_order(const MergeSpec& spec,
                                           const std::vector<double>& w) {
    std::vector<uint64_t> hashes(spec.checkpoints.size());
    for (size_t m = 0; m < spec.checkpoints.size(); ++m)
        hashes[m] = tree_content_hash(*spec.checkpoints[m]);
    std::vector<size_t> order(spec.checkpoints.size());
    std::iota(order.begin(), order.end(), size_t{0});
    std::sort(order.begin(), order.end(), [&](size_t a, size_t b) {
        if (hashes[a] != hashes[b]) return hashes[a] < hashes[b];
        if (w[a] != w[b]) return w[a] < w[b];
        return tree_payload_compare(*spec.checkpoints[a], *spec.checkpoints[b]) < 0;
    });
    return order;
}

}  // namespace detail

// Selected paths become the weighted elementwise average (f64 accumulation in
// canonical order, cast to f32); everything else is copied from the donor.
inline ParamTree average_params(const MergeSpec& spec) {
    spec.validate();
    const auto w = spec.effective_weights();
    const auto order = detail::canonical_order(spec, w);
    const ParamTree& donor = *spec.checkpoints[static_cast<size_t>(spec.donor - 1)];

    ParamTree out;
    for (const auto& [path, ref] : *spec.checkpoints[0]) {
        if (spec.selector.matches(path, ref)) {
            Tensor merged = Tensor::zeros(ref.tensor.shape());
            const int64_t n = merged.numel();
            std::vector<double> acc(static_cast<size_t>(n), 0.0);
            for (size_t oi : order) {
                const double wm = w[oi];
                const Tensor& src = spec.checkpoints[oi]->at(path).tensor;
                for (int64_t i = 0; i < n; ++i)
                    acc[static_cast<size_t>(i)] += wm * static_cast<double>(src.data()[i]);
            }
            for (int64_t i = 0; i < n; ++i)
                merged.data()[i] = static_cast<float>(acc[static_cast<size_t>(i)]);
            out.put(path, merged, ref.part, ref.block, ref.layer);
        } else {
            out.put(path, donor.at(path).tensor.clone(), ref.part, ref.block, ref.layer);
        }
    }
    return out;
}

// theta_diamond assembly: averaged encoder plus the donor decoder.
inline SegModel assemble_revt(const MergeSpec& spec, const NetConfig& config) {
    const Selector& s = spec.selector;
    if (!(s.part && *s.part == Part::Encoder && !s.block && !s.layer && !s.path_glob &&
          !s.negate && !s.match_none))
        throw UsageError("assemble_revt requires the encoder-only selector");
    SegModel model;
    model.config = config;
    model.params = average_params(spec);
    return model;
}

enum class PartMode { EncoderOnly, DecoderOnly, Full, None };

inline PartMode part_mode_from_string(const std::string& s) {
    if (s == "encoder_only") return PartMode::EncoderOnly;
    if (s == "decoder_only") return PartMode::DecoderOnly;
    if (s == "full") return PartMode::Full;
    if (s == "none") return PartMode::None;
    throw ConfigError("unknown merge mode: " + s);
}

inline MergeSpec part_mode(MergeSpec spec, PartMode mode) {
    switch (mode) {
        case PartMode::EncoderOnly: spec.selector = Selector::encoder(); break;
        case PartMode::DecoderOnly: spec.selector = Selector::decoder(); break;
        case PartMode::Full: spec.selector = Selector::all(); break;
        case PartMode::None: spec.selector = Selector::none(); break;
    }
    return spec;
}

enum class BlockMode { PatchEmbed, Attention, MixFFN, ConvLayers, FcLayers };

inline BlockMode block_mode_from_string(const std::string& s) {
    if (s == "patch_embed") return BlockMode::PatchEmbed;
    if (s == "attention") return BlockMode::Attention;
    if (s == "mixffn") return BlockMode::MixFFN;
    if (s == "conv") return BlockMode::ConvLayers;
    if (s == "fc") return BlockMode::FcLayers;
    throw ConfigError("unknown block mode: " + s);
}

// Restrict the average to one block or layer kind inside the encoder.
inline MergeSpec block_mode(MergeSpec spec, BlockMode mode) {
    Selector s = Selector::encoder();
    switch (mode) {
        case BlockMode::PatchEmbed: s.block = Block::PatchEmbed; break;
        case BlockMode::Attention: s.block = Block::Attention; break;
        case BlockMode::MixFFN: s.block = Block::MixFFN; break;
        case BlockMode::ConvLayers: s.layer = LayerKind::Conv; break;
        case BlockMode::FcLayers: s.layer = LayerKind::Fc; break;
    }
    spec.selector = s;
    return spec;
}

// ---------------------------------------------------------------------------
// Weight sweep over the M=3 simplex grid
// ---------------------------------------------------------------------------

struct SweepEntry {
    std::array<double, 3> weights;
    double score;
};

inline std::vector<SweepEntry> sweep_weights(
    const std::vector<const ParamTree*>& checkpoints, double grid_step, const Selector& selector,
    const std::function<double(const ParamTree&)>& eval_fn, int donor = 1) {
    if (checkpoints.size() != 3) throw UsageError("sweep_weights expects exactly three models");
    if (grid_step <= 0.0 || grid_step > 1.0) throw UsageError("sweep: bad grid step");
    const double g_real = 1.0 / grid_step;
    const int g = static_cast<int>(std::lround(g_real));
    if (std::abs(g_real - g) > 1e-9) throw UsageError("sweep: grid step must divide 1");

    std::vector<std::array<double, 3>> points;
    bool has_uniform = false;
    for (int i = 0; i <= g; ++i)
        for (int j = 0; j <= g - i; ++j) {
            const int k = g - i - j;
            points.push_back({static_cast<double>(i) / g, static_cast<double>(j) / g,
                              static_cast<double>(k) / g});
            if (i == j && j == k) has_uniform = true;
        }
    if (!has_uniform) points.push_back({1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0});

    std::vector<SweepEntry> table;
    table.reserve(points.size());
    for (const auto& p : points) {
        MergeSpec spec;
        spec.checkpoints = checkpoints;
        spec.weights = {p[0], p[1], p[2]};
        spec.selector = selector;
        spec.donor = donor;
        table.push_back({p, eval_fn(average_params(spec))});
    }
    std::sort(table.begin(), table.end(), [](const SweepEntry& a, const SweepEntry& b) {
        if (a.score != b.score) return a.score > b.score;
        return a.weights > b.weights;
    });
    return table;
}

}  // namespace revt
