#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "revt/common.hpp"
#include "revt/params.hpp"
#include "revt/rng.hpp"
#include "revt/tensor.hpp"

namespace revt {

// ---------------------------------------------------------------------------
// Configurations
// ---------------------------------------------------------------------------

struct StageConfig {
    int dim = 16;
    int depth = 1;
    int heads = 1;
    int sr_ratio = 1;       // spatial reduction of keys/values
    int pe_kernel = 3, pe_stride = 2, pe_pad = 1;
    float xi = 0.0f;        // attention scaling; 0 means 1/sqrt(head_dim)
    int ffn_expand = 4;
};

struct MiniMiTConfig {
    std::vector<StageConfig> stages;
    int decoder_dim = 64;
    int classes = 5;

    void validate() const {
        if (stages.empty()) throw ConfigError("MiniMiT needs at least one stage");
        if (classes < 2) throw ConfigError("need at least two classes");
        for (const StageConfig& s : stages) {
            if (s.dim < 1 || s.depth < 0 || s.heads < 1 || s.sr_ratio < 1)
                throw ConfigError("bad stage dims");
            if (s.dim % s.heads != 0) throw ConfigError("stage dim not divisible by heads");
            if (s.pe_stride < 2) throw ConfigError("patch embed stride must shrink the grid");
            if (s.xi < 0.0f) throw ConfigError("attention scaling must be positive");
        }
    }

    int total_stride() const {
        int s = 1;
        for (const StageConfig& st : stages) s *= st.pe_stride;
        return s;
    }

    static MiniMiTConfig desk_default(int classes = 5) {
        MiniMiTConfig c;
        c.classes = classes;
        c.stages = {{16, 1, 1, 8, 7, 4, 3, 0.0f, 4},
                    {32, 1, 2, 4, 3, 2, 1, 0.0f, 4},
                    {64, 2, 4, 2, 3, 2, 1, 0.0f, 4},
                    {128, 1, 8, 1, 3, 2, 1, 0.0f, 4}};
        return c;
    }

    // two stages, total stride 8: small enough for finite-difference sweeps
    static MiniMiTConfig tiny(int classes = 3) {
        MiniMiTConfig c;
        c.classes = classes;
        c.decoder_dim = 16;
        c.stages = {{8, 1, 1, 2, 7, 4, 3, 0.0f, 2}, {16, 1, 2, 1, 3, 2, 1, 0.0f, 2}};
        return c;
    }
};

struct ConvConfig {
    std::vector<int> channels = {16, 32, 64, 128};  // one block per entry, stride 2 each
    int decoder_dim = 64;
    int classes = 5;

    void validate() const {
        if (channels.size() < 2) throw ConfigError("conv model needs at least two blocks");
        if (classes < 2) throw ConfigError("need at least two classes");
        for (int c : channels)
            if (c < 1) throw ConfigError("bad channel count");
    }
    int total_stride() const { return 1 << static_cast<int>(channels.size()); }
};

// Degenerate encoder: a single strided conv, no norm, no activation. The
// encoder output is affine in the parameters, so parameter averaging equals
// output averaging exactly.
struct LinearConfig {
    int dim = 16;
    int stride = 4;
    int decoder_dim = 32;
    int classes = 5;

    void validate() const {
        if (dim < 1 || stride < 1 || classes < 2) throw ConfigError("bad linear config");
    }
    int total_stride() const { return stride; }
};

enum class NetKind { MiniMiT, Conv, Linear };

inline const char* to_string(NetKind k) {
    switch (k) {
        case NetKind::MiniMiT: return "mini_mit";
        case NetKind::Conv: return "conv";
        default: return "linear";
    }
}

struct NetConfig {
    NetKind kind = NetKind::MiniMiT;
    MiniMiTConfig mit;
    ConvConfig conv;
    LinearConfig linear;

    int classes() const {
        switch (kind) {
            case NetKind::MiniMiT: return mit.classes;
            case NetKind::Conv: return conv.classes;
            default: return linear.classes;
        }
    }
    int total_stride() const {
        switch (kind) {
            case NetKind::MiniMiT: return mit.total_stride();
            case NetKind::Conv: return conv.total_stride();
            default: return linear.total_stride();
        }
    }
    void validate() const {
        switch (kind) {
            case NetKind::MiniMiT: mit.validate(); break;
            case NetKind::Conv: conv.validate(); break;
            default: linear.validate(); break;
        }
    }

    json to_json() const {
        json j;
        j["kind"] = to_string(kind);
        switch (kind) {
            case NetKind::MiniMiT: {
                j["classes"] = mit.classes;
                j["decoder_dim"] = mit.decoder_dim;
                json stages = json::array();
                for (const StageConfig& s : mit.stages)
                    stages.push_back({{"dim", s.dim},
                                      {"depth", s.depth},
                                      {"heads", s.heads},
                                      {"sr_ratio", s.sr_ratio},
                                      {"pe_kernel", s.pe_kernel},
                                      {"pe_stride", s.pe_stride},
                                      {"pe_pad", s.pe_pad},
                                      {"xi", s.xi},
                                      {"ffn_expand", s.ffn_expand}});
                j["stages"] = stages;
                break;
            }
            case NetKind::Conv:
                j["classes"] = conv.classes;
                j["decoder_dim"] = conv.decoder_dim;
                j["channels"] = conv.channels;
                break;
            default:
                j["classes"] = linear.classes;
                j["decoder_dim"] = linear.decoder_dim;
                j["dim"] = linear.dim;
                j["stride"] = linear.stride;
                break;
        }
        return j;
    }

    static NetConfig from_json(const json& j) {
        NetConfig c;
        const std::string kind = j.at("kind").get<std::string>();
        if (kind == "mini_mit") {
            c.kind = NetKind::MiniMiT;
            c.mit.classes = j.at("classes").get<int>();
            c.mit.decoder_dim = j.at("decoder_dim").get<int>();
            c.mit.stages.clear();
            for (const auto& s : j.at("stages")) {
                StageConfig st;
                st.dim = s.at("dim").get<int>();
                st.depth = s.at("depth").get<int>();
                st.heads = s.at("heads").get<int>();
                st.sr_ratio = s.at("sr_ratio").get<int>();
                st.pe_kernel = s.at("pe_kernel").get<int>();
                st.pe_stride = s.at("pe_stride").get<int>();
                st.pe_pad = s.at("pe_pad").get<int>();
                st.xi = s.at("xi").get<float>();
                st.ffn_expand = s.at("ffn_expand").get<int>();
                c.mit.stages.push_back(st);
            }
        } else if (kind == "conv") {
            c.kind = NetKind::Conv;
            c.conv.classes = j.at("classes").get<int>();
            c.conv.decoder_dim = j.at("decoder_dim").get<int>();
            c.conv.channels = j.at("channels").get<std::vector<int>>();
        } else if (kind == "linear") {
            c.kind = NetKind::Linear;
            c.linear.classes = j.at("classes").get<int>();
            c.linear.decoder_dim = j.at("decoder_dim").get<int>();
            c.linear.dim = j.at("dim").get<int>();
            c.linear.stride = j.at("stride").get<int>();
        } else {
            throw FormatError("unknown network kind: " + kind);
        }
        c.validate();
        return c;
    }

    static NetConfig mini_mit(MiniMiTConfig m) {
        NetConfig c;
        c.kind = NetKind::MiniMiT;
        c.mit = std::move(m);
        return c;
    }
    static NetConfig conv_net(ConvConfig cc) {
        NetConfig c;
        c.kind = NetKind::Conv;
        c.conv = std::move(cc);
        return c;
    }
    static NetConfig linear_net(LinearConfig lc) {
        NetConfig c;
        c.kind = NetKind::Linear;
        c.linear = std::move(lc);
        return c;
    }
};

struct SegModel {
    NetConfig config;
    ParamTree params;
};

// ---------------------------------------------------------------------------
// Inference-cost bookkeeping: encoder/decoder pass counters per thread.
// ---------------------------------------------------------------------------

inline int64_t& encoder_pass_count() {
    thread_local int64_t c = 0;
    return c;
}
inline int64_t& decoder_pass_count() {
    thread_local int64_t c = 0;
    return c;
}
inline void reset_pass_counts() {
    encoder_pass_count() = 0;
    decoder_pass_count() = 0;
}

// ---------------------------------------------------------------------------
// Construction helpers
// ---------------------------------------------------------------------------

namespace detail {

struct ParamBuilder {
    ParamTree& tree;
    RngStream& enc_rng;
    RngStream& dec_rng;

    RngStream& rng_for(Part p) { return p == Part::Encoder ? enc_rng : dec_rng; }

    Tensor kaiming(std::vector<int> shape, int fan_in, Part part, Block block, LayerKind layer,
                   const std::string& path) {
        Tensor t = Tensor::zeros(std::move(shape), true);
        const float std_dev = std::sqrt(2.0f / static_cast<float>(fan_in));
        RngStream& rng = rng_for(part);
        for (int64_t i = 0; i < t.numel(); ++i)
            t.data()[i] = std_dev * static_cast<float>(rng.normal());
        tree.put(path, t, part, block, layer);
        return t;
    }

    Tensor zeros(std::vector<int> shape, Part part, Block block, LayerKind layer,
                 const std::string& path) {
        Tensor t = Tensor::zeros(std::move(shape), true);
        tree.put(path, t, part, block, layer);
        return t;
    }

    Tensor ones(std::vector<int> shape, Part part, Block block, LayerKind layer,
                const std::string& path) {
        Tensor t = Tensor::full(std::move(shape), 1.0f, true);
        tree.put(path, t, part, block, layer);
        return t;
    }

    void conv(const std::string& path, int out_c, int in_c_per_group, int k, Part part,
              Block block) {
        kaiming({out_c, in_c_per_group, k, k}, in_c_per_group * k * k, part, block,
                LayerKind::Conv, path + ".weight");
        zeros({out_c}, part, block, LayerKind::Conv, path + ".bias");
    }

    // classifier head: small normal init so initial posteriors are near uniform
    void head_conv(const std::string& path, int out_c, int in_c, Part part, Block block) {
        Tensor t = Tensor::zeros({out_c, in_c, 1, 1}, true);
        RngStream& rng = rng_for(part);
        for (int64_t i = 0; i < t.numel(); ++i)
            t.data()[i] = 0.01f * static_cast<float>(rng.normal());
        tree.put(path + ".weight", t, part, block, LayerKind::Conv);
        zeros({out_c}, part, block, LayerKind::Conv, path + ".bias");
    }

    void fc(const std::string& path, int in_f, int out_f, Part part, Block block) {
        kaiming({in_f, out_f}, in_f, part, block, LayerKind::Fc, path + ".weight");
        zeros({out_f}, part, block, LayerKind::Fc, path + ".bias");
    }

    void norm(const std::string& path, int dim, Part part, Block block) {
        ones({dim}, part, block, LayerKind::Norm, path + ".gamma");
        zeros({dim}, part, block, LayerKind::Norm, path + ".beta");
    }
};

}  // namespace detail

inline SegModel build_model(const NetConfig& config, uint64_t encoder_seed,
                            uint64_t decoder_seed) {
    config.validate();
    SegModel model;
    model.config = config;
    RngStream enc_rng(encoder_seed, 0xE0C0DE);
    RngStream dec_rng(decoder_seed, 0xDEC0DE);
    detail::ParamBuilder b{model.params, enc_rng, dec_rng};

    switch (config.kind) {
        case NetKind::MiniMiT: {
            int in_c = 3;
            for (size_t si = 0; si < config.mit.stages.size(); ++si) {
                const StageConfig& st = config.mit.stages[si];
                const std::string sp = "encoder.s" + std::to_string(si + 1);
                b.conv(sp + ".pe.conv", st.dim, in_c, st.pe_kernel, Part::Encoder,
                       Block::PatchEmbed);
                b.norm(sp + ".pe.norm", st.dim, Part::Encoder, Block::PatchEmbed);
                for (int bi = 0; bi < st.depth; ++bi) {
                    const std::string bp = sp + ".b" + std::to_string(bi);
                    b.norm(bp + ".attn.norm", st.dim, Part::Encoder, Block::Attention);
                    b.fc(bp + ".attn.q", st.dim, st.dim, Part::Encoder, Block::Attention);
                    b.fc(bp + ".attn.k", st.dim, st.dim, Part::Encoder, Block::Attention);
                    b.fc(bp + ".attn.v", st.dim, st.dim, Part::Encoder, Block::Attention);
                    b.fc(bp + ".attn.o", st.dim, st.dim, Part::Encoder, Block::Attention);
                    if (st.sr_ratio > 1) {
                        b.conv(bp + ".attn.sr", st.dim, st.dim, st.sr_ratio, Part::Encoder,
                               Block::Attention);
                        b.norm(bp + ".attn.srnorm", st.dim, Part::Encoder, Block::Attention);
                    }
                    const int e = st.dim * st.ffn_expand;
                    b.norm(bp + ".ffn.norm", st.dim, Part::Encoder, Block::MixFFN);
                    b.fc(bp + ".ffn.fc1", st.dim, e, Part::Encoder, Block::MixFFN);
                    b.kaiming({e, 1, 3, 3}, 9, Part::Encoder, Block::MixFFN, LayerKind::Conv,
                              bp + ".ffn.dw.weight");
                    b.zeros({e}, Part::Encoder, Block::MixFFN, LayerKind::Conv,
                            bp + ".ffn.dw.bias");
                    b.fc(bp + ".ffn.fc2", e, st.dim, Part::Encoder, Block::MixFFN);
                }
                b.norm(sp + ".norm", st.dim, Part::Encoder, Block::Other);
                in_c = st.dim;
            }
            const int d = config.mit.decoder_dim;
            for (size_t si = 0; si < config.mit.stages.size(); ++si)
                b.fc("decoder.proj" + std::to_string(si + 1), config.mit.stages[si].dim, d,
                     Part::Decoder, Block::Head);
            b.conv("decoder.fuse", d, d * static_cast<int>(config.mit.stages.size()), 1,
                   Part::Decoder, Block::Head);
            b.head_conv("decoder.cls", config.mit.classes, d, Part::Decoder, Block::Head);
            break;
        }
        case NetKind::Conv: {
            int in_c = 3;
            for (size_t bi = 0; bi < config.conv.channels.size(); ++bi) {
                const int c = config.conv.channels[bi];
                const std::string bp = "encoder.b" + std::to_string(bi + 1);
                b.conv(bp + ".conv", c, in_c, 3, Part::Encoder, Block::ConvBlock);
                b.norm(bp + ".norm", c, Part::Encoder, Block::ConvBlock);
                in_c = c;
            }
            const int d = config.conv.decoder_dim;
            b.conv("decoder.reduce", d, config.conv.channels.back(), 1, Part::Decoder,
                   Block::Head);
            b.conv("decoder.skip", d / 2, config.conv.channels[1], 1, Part::Decoder, Block::Head);
            b.conv("decoder.fuse", d, d + d / 2, 3, Part::Decoder, Block::Head);
            b.head_conv("decoder.cls", config.conv.classes, d, Part::Decoder, Block::Head);
            break;
        }
        case NetKind::Linear: {
            b.conv("encoder.proj", config.linear.dim, 3, config.linear.stride, Part::Encoder,
                   Block::PatchEmbed);
            const int d = config.linear.decoder_dim;
            b.fc("decoder.proj1", config.linear.dim, d, Part::Decoder, Block::Head);
            b.conv("decoder.fuse", d, d, 1, Part::Decoder, Block::Head);
            b.head_conv("decoder.cls", config.linear.classes, d, Part::Decoder, Block::Head);
            break;
        }
    }
    return model;
}

inline SegModel build_mini_mit(const MiniMiTConfig& cfg, uint64_t encoder_seed,
                               uint64_t decoder_seed) {
    return build_model(NetConfig::mini_mit(cfg), encoder_seed, decoder_seed);
}

inline SegModel build_conv_model(const ConvConfig& cfg, uint64_t encoder_seed,
                                 uint64_t decoder_seed) {
    return build_model(NetConfig::conv_net(cfg), encoder_seed, decoder_seed);
}

// ---------------------------------------------------------------------------
// Forward passes
// ---------------------------------------------------------------------------

namespace detail {

inline Tensor linear_layer(const Tensor& x, const ParamTree& p, const std::string& path) {
    return add(matmul(x, p.tensor(path + ".weight")), p.tensor(path + ".bias"));
}

inline Tensor layernorm_at(const Tensor& x, const ParamTree& p, const std::string& path) {
    return layernorm(x, p.tensor(path + ".gamma"), p.tensor(path + ".beta"));
}

inline Tensor tokens_from_spatial(const Tensor& x) {
    // [B,C,H,W] -> [B,HW,C]
    const int bsz = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
    return transpose(reshape(x, {bsz, c, h * w}), 1, 2);
}

inline Tensor spatial_from_tokens(const Tensor& t, int h, int w) {
    // [B,N,C] -> [B,C,H,W]
    const int bsz = t.dim(0), c = t.dim(2);
    return reshape(transpose(t, 1, 2), {bsz, c, h, w});
}

inline Tensor heads_split(const Tensor& t, int heads) {
    // [B,N,C] -> [B,h,N,d]
    const int bsz = t.dim(0), n = t.dim(1), c = t.dim(2);
    return transpose(reshape(t, {bsz, n, heads, c / heads}), 1, 2);
}

inline Tensor heads_merge(const Tensor& t) {
    // [B,h,N,d] -> [B,N,C]
    const int bsz = t.dim(0), h = t.dim(1), n = t.dim(2), d = t.dim(3);
    return reshape(transpose(t, 1, 2), {bsz, n, h * d});
}

}  // namespace detail

// q:[B,h,N,d] k,v:[B,h,n,d] -> [B,h,N,d]
inline Tensor attention_core(const Tensor& q, const Tensor& k, const Tensor& v, float xi) {
    Tensor att = scale(matmul(q, transpose(k, 2, 3)), xi);
    att = softmax(att, 3);
    return matmul(att, v);
}

inline std::vector<Tensor> forward_encoder(const SegModel& model, const Tensor& x) {
    if (x.rank() != 4 || x.dim(1) != 3)
        throw DimensionError("encoder expects input of shape [B,3,H,W]");
    const int stride = model.config.total_stride();
    if (x.dim(2) % stride != 0 || x.dim(3) % stride != 0)
        throw DimensionError("input spatial dims must be divisible by the total stride " +
                             std::to_string(stride));
    ++encoder_pass_count();
    const ParamTree& p = model.params;
    std::vector<Tensor> feats;

    switch (model.config.kind) {
        case NetKind::MiniMiT: {
            Tensor cur = x;
            for (size_t si = 0; si < model.config.mit.stages.size(); ++si) {
                const StageConfig& st = model.config.mit.stages[si];
                const std::string sp = "encoder.s" + std::to_string(si + 1);
                Tensor sp_feat = conv2d(cur, p.tensor(sp + ".pe.conv.weight"),
                                        p.tensor(sp + ".pe.conv.bias"), st.pe_stride, st.pe_pad);
                const int h = sp_feat.dim(2), w = sp_feat.dim(3);
                Tensor t = detail::tokens_from_spatial(sp_feat);
                t = detail::layernorm_at(t, p, sp + ".pe.norm");

                const float xi = st.xi > 0.0f
                                     ? st.xi
                                     : 1.0f / std::sqrt(static_cast<float>(st.dim / st.heads));
                for (int bi = 0; bi < st.depth; ++bi) {
                    const std::string bp = sp + ".b" + std::to_string(bi);
                    // efficient self-attention with spatially reduced keys/values
                    Tensor tn = detail::layernorm_at(t, p, bp + ".attn.norm");
                    Tensor q = detail::linear_layer(tn, p, bp + ".attn.q");
                    Tensor kv = tn;
                    if (st.sr_ratio > 1) {
                        Tensor sp2 = detail::spatial_from_tokens(tn, h, w);
                        sp2 = conv2d(sp2, p.tensor(bp + ".attn.sr.weight"),
                                     p.tensor(bp + ".attn.sr.bias"), st.sr_ratio, 0);
                        kv = detail::tokens_from_spatial(sp2);
                        kv = detail::layernorm_at(kv, p, bp + ".attn.srnorm");
                    }
                    Tensor kk = detail::linear_layer(kv, p, bp + ".attn.k");
                    Tensor vv = detail::linear_layer(kv, p, bp + ".attn.v");
                    Tensor att = attention_core(detail::heads_split(q, st.heads),
                                                detail::heads_split(kk, st.heads),
                                                detail::heads_split(vv, st.heads), xi);
                    Tensor out = detail::linear_layer(detail::heads_merge(att), p, bp + ".attn.o");
                    t = add(t, out);

                    // Mix-FFN: fc -> depthwise 3x3 -> gelu -> fc
                    Tensor fn = detail::layernorm_at(t, p, bp + ".ffn.norm");
                    Tensor f = detail::linear_layer(fn, p, bp + ".ffn.fc1");
                    const int e = st.dim * st.ffn_expand;
                    Tensor fsp = detail::spatial_from_tokens(f, h, w);
                    fsp = conv2d(fsp, p.tensor(bp + ".ffn.dw.weight"),
                                 p.tensor(bp + ".ffn.dw.bias"), 1, 1, e);
                    f = detail::tokens_from_spatial(fsp);
                    f = gelu(f);
                    f = detail::linear_layer(f, p, bp + ".ffn.fc2");
                    t = add(t, f);
                }
                t = detail::layernorm_at(t, p, sp + ".norm");
                cur = detail::spatial_from_tokens(t, h, w);
                feats.push_back(cur);
            }
            break;
        }
        case NetKind::Conv: {
            Tensor cur = x;
            for (size_t bi = 0; bi < model.config.conv.channels.size(); ++bi) {
                const std::string bp = "encoder.b" + std::to_string(bi + 1);
                cur = conv2d(cur, p.tensor(bp + ".conv.weight"), p.tensor(bp + ".conv.bias"), 2,
                             1);
                const int h = cur.dim(2), w = cur.dim(3);
                Tensor t = detail::tokens_from_spatial(cur);
                t = detail::layernorm_at(t, p, bp + ".norm");
                cur = relu(detail::spatial_from_tokens(t, h, w));
                feats.push_back(cur);
            }
            break;
        }
        case NetKind::Linear: {
            feats.push_back(conv2d(x, p.tensor("encoder.proj.weight"),
                                   p.tensor("encoder.proj.bias"), model.config.linear.stride, 0));
            break;
        }
    }
    return feats;
}

inline Tensor forward_decoder_logits(const SegModel& model, const std::vector<Tensor>& feats,
                                     int out_h, int out_w) {
    ++decoder_pass_count();
    const ParamTree& p = model.params;

    switch (model.config.kind) {
        case NetKind::Conv: {
            // one early skip (stride 4) merged into the upsampled deep feature
            const Tensor& deep = feats.back();
            Tensor d = relu(conv2d(deep, p.tensor("decoder.reduce.weight"),
                                   p.tensor("decoder.reduce.bias"), 1, 0));
            const Tensor& early = feats[1];
            d = upsample_bilinear(d, early.dim(2), early.dim(3));
            Tensor s = relu(conv2d(early, p.tensor("decoder.skip.weight"),
                                   p.tensor("decoder.skip.bias"), 1, 0));
            Tensor f = concat({d, s}, 1);
            f = relu(conv2d(f, p.tensor("decoder.fuse.weight"), p.tensor("decoder.fuse.bias"), 1,
                            1));
            Tensor logits =
                conv2d(f, p.tensor("decoder.cls.weight"), p.tensor("decoder.cls.bias"), 1, 0);
            return upsample_bilinear(logits, out_h, out_w);
        }
        case NetKind::MiniMiT:
        case NetKind::Linear: {
            // all-scale fusion: project each scale, upsample to the finest
            // grid, concat, fuse, classify
            const int grid_h = feats[0].dim(2), grid_w = feats[0].dim(3);
            std::vector<Tensor> proj;
            for (size_t i = 0; i < feats.size(); ++i) {
                Tensor t = detail::tokens_from_spatial(feats[i]);
                t = detail::linear_layer(t, p, "decoder.proj" + std::to_string(i + 1));
                Tensor sp = detail::spatial_from_tokens(t, feats[i].dim(2), feats[i].dim(3));
                if (sp.dim(2) != grid_h || sp.dim(3) != grid_w)
                    sp = upsample_bilinear(sp, grid_h, grid_w);
                proj.push_back(sp);
            }
            Tensor f = proj.size() == 1 ? proj[0] : concat(proj, 1);
            f = relu(conv2d(f, p.tensor("decoder.fuse.weight"), p.tensor("decoder.fuse.bias"), 1,
                            0));
            Tensor logits =
                conv2d(f, p.tensor("decoder.cls.weight"), p.tensor("decoder.cls.bias"), 1, 0);
            return upsample_bilinear(logits, out_h, out_w);
        }
    }
    throw ConfigError("unreachable network kind");
}

inline Tensor forward_logits(const SegModel& model, const Tensor& x) {
    const std::vector<Tensor> feats = forward_encoder(model, x);
    return forward_decoder_logits(model, feats, x.dim(2), x.dim(3));
}

// posteriors [B,S,H,W]; per-pixel distributions over classes
inline Tensor forward(const SegModel& model, const Tensor& x) {
    return softmax(forward_logits(model, x), 1);
}

// per-pixel argmax over the class dim of [B,S,H,W]
inline std::vector<uint8_t> argmax_map(const Tensor& scores) {
    if (scores.rank() != 4) throw DimensionError("argmax_map expects [B,S,H,W]");
    const int bsz = scores.dim(0), s = scores.dim(1), h = scores.dim(2), w = scores.dim(3);
    std::vector<uint8_t> out(static_cast<size_t>(bsz) * h * w);
    const int64_t plane = static_cast<int64_t>(h) * w;
    for (int b = 0; b < bsz; ++b)
        for (int64_t i = 0; i < plane; ++i) {
            const float* base = scores.data() + (static_cast<int64_t>(b) * s) * plane + i;
            int best = 0;
            float bv = base[0];
            for (int c = 1; c < s; ++c) {
                const float v = base[c * plane];
                if (v > bv) {
                    bv = v;
                    best = c;
                }
            }
            out[static_cast<size_t>(b) * plane + static_cast<size_t>(i)] =
                static_cast<uint8_t>(best);
        }
    return out;
}

}  // namespace revt
