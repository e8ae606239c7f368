#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "revt/common.hpp"
#include "revt/tensor.hpp"

namespace revt {

using json = nlohmann::json;

enum class Part : uint8_t { Encoder, Decoder };
enum class Block : uint8_t { PatchEmbed, Attention, MixFFN, ConvBlock, Head, Other };
enum class LayerKind : uint8_t { Conv, Fc, Norm, Other };

inline const char* to_string(Part p) { return p == Part::Encoder ? "encoder" : "decoder"; }
inline const char* to_string(Block b) {
    switch (b) {
        case Block::PatchEmbed: return "patch_embed";
        case Block::Attention: return "attention";
        case Block::MixFFN: return "mixffn";
        case Block::ConvBlock: return "conv_block";
        case Block::Head: return "head";
        default: return "other";
    }
}
inline const char* to_string(LayerKind l) {
    switch (l) {
        case LayerKind::Conv: return "conv";
        case LayerKind::Fc: return "fc";
        case LayerKind::Norm: return "norm";
        default: return "other";
    }
}

inline Part part_from_string(const std::string& s) {
    if (s == "encoder") return Part::Encoder;
    if (s == "decoder") return Part::Decoder;
    throw FormatError("unknown part tag: " + s);
}
inline Block block_from_string(const std::string& s) {
    if (s == "patch_embed") return Block::PatchEmbed;
    if (s == "attention") return Block::Attention;
    if (s == "mixffn") return Block::MixFFN;
    if (s == "conv_block") return Block::ConvBlock;
    if (s == "head") return Block::Head;
    if (s == "other") return Block::Other;
    throw FormatError("unknown block tag: " + s);
}
inline LayerKind layer_from_string(const std::string& s) {
    if (s == "conv") return LayerKind::Conv;
    if (s == "fc") return LayerKind::Fc;
    if (s == "norm") return LayerKind::Norm;
    if (s == "other") return LayerKind::Other;
    throw FormatError("unknown layer tag: " + s);
}

struct ParamEntry {
    Tensor tensor;
    Part part = Part::Encoder;
    Block block = Block::Other;
    LayerKind layer = LayerKind::Other;
};

// Ordered parameter tree; iteration is lexicographic by path.
class ParamTree {
public:
    using Map = std::map<std::string, ParamEntry>;

    void put(const std::string& path, Tensor t, Part part, Block block, LayerKind layer) {
        if (entries_.count(path)) throw UsageError("duplicate parameter path: " + path);
        entries_[path] = ParamEntry{std::move(t), part, block, layer};
    }

    bool has(const std::string& path) const { return entries_.count(path) != 0; }

    ParamEntry& at(const std::string& path) {
        auto it = entries_.find(path);
        if (it == entries_.end()) throw UsageError("no parameter at path: " + path);
        return it->second;
    }
    const ParamEntry& at(const std::string& path) const {
        auto it = entries_.find(path);
        if (it == entries_.end()) throw UsageError("no parameter at path: " + path);
        return it->second;
    }

    Tensor& tensor(const std::string& path) { return at(path).tensor; }
    const Tensor& tensor(const std::string& path) const { return at(path).tensor; }

    size_t size() const { return entries_.size(); }
    bool empty() const { return entries_.empty(); }

    Map::iterator begin() { return entries_.begin(); }
    Map::iterator end() { return entries_.end(); }
    Map::const_iterator begin() const { return entries_.begin(); }
    Map::const_iterator end() const { return entries_.end(); }

    std::vector<std::string> paths() const {
        std::vector<std::string> out;
        out.reserve(entries_.size());
        for (const auto& [p, e] : entries_) out.push_back(p);
        return out;
    }

    // Deep copy including tensors.
    ParamTree clone() const {
        ParamTree t;
        for (const auto& [p, e] : entries_)
            t.entries_[p] = ParamEntry{e.tensor.clone(), e.part, e.block, e.layer};
        return t;
    }

    bool same_structure(const ParamTree& o, std::string* first_mismatch = nullptr) const {
        auto a = entries_.begin();
        auto b = o.entries_.begin();
        while (a != entries_.end() && b != o.entries_.end()) {
            if (a->first != b->first || a->second.tensor.shape() != b->second.tensor.shape() ||
                a->second.part != b->second.part || a->second.block != b->second.block ||
                a->second.layer != b->second.layer) {
                if (first_mismatch) *first_mismatch = a->first;
                return false;
            }
            ++a;
            ++b;
        }
        if (a != entries_.end() || b != o.entries_.end()) {
            if (first_mismatch)
                *first_mismatch = a != entries_.end() ? a->first : b->first;
            return false;
        }
        return true;
    }

private:
    Map entries_;
};

inline int64_t param_count(const ParamTree& tree) {
    int64_t n = 0;
    for (const auto& [p, e] : tree) n += e.tensor.numel();
    return n;
}

// ---------------------------------------------------------------------------
// Selector: predicate over (part, block, layer, path glob). Selection depends
// only on tags and the path string.
// ---------------------------------------------------------------------------

namespace detail {
inline bool glob_match(const char* pat, const char* str) {
    // '*' matches any run of characters
    const char *star = nullptr, *ss = nullptr;
    while (*str) {
        if (*pat == *str) {
            ++pat;
            ++str;
        } else if (*pat == '*') {
            star = pat++;
            ss = str;
        } else if (star) {
            pat = star + 1;
            str = ++ss;
        } else {
            return false;
        }
    }
    while (*pat == '*') ++pat;
    return *pat == '\0';
}
}  // namespace detail

struct Selector {
    std::optional<Part> part;
    std::optional<Block> block;
    std::optional<LayerKind> layer;
    std::optional<std::string> path_glob;
    bool negate = false;
    bool match_none = false;  // "none" selector, before negation

    bool matches(const std::string& path, const ParamEntry& e) const {
        bool m = !match_none;
        if (m && part && e.part != *part) m = false;
        if (m && block && e.block != *block) m = false;
        if (m && layer && e.layer != *layer) m = false;
        if (m && path_glob && !detail::glob_match(path_glob->c_str(), path.c_str())) m = false;
        return negate ? !m : m;
    }

    Selector complement() const {
        Selector s = *this;
        s.negate = !s.negate;
        return s;
    }

    std::string describe() const {
        std::string body;
        if (match_none) {
            body = "none";
        } else {
            auto emit = [&body](const std::string& term) {
                if (!body.empty()) body += " && ";
                body += term;
            };
            if (part) emit(std::string("part==") + to_string(*part));
            if (block) emit(std::string("block==") + to_string(*block));
            if (layer) emit(std::string("layer==") + to_string(*layer));
            if (path_glob) emit("path~=" + *path_glob);
            if (body.empty()) body = "all";
        }
        return negate ? "!(" + body + ")" : body;
    }

    static Selector all() { return Selector{}; }
    static Selector none() {
        Selector s;
        s.match_none = true;
        return s;
    }
    static Selector by_part(Part p) {
        Selector s;
        s.part = p;
        return s;
    }
    static Selector encoder() { return by_part(Part::Encoder); }
    static Selector decoder() { return by_part(Part::Decoder); }
};

inline std::set<std::string> select(const ParamTree& tree, const Selector& sel) {
    std::set<std::string> out;
    for (const auto& [path, e] : tree)
        if (sel.matches(path, e)) out.insert(path);
    return out;
}

// ---------------------------------------------------------------------------
// Checkpoint serialization
//   [8-byte magic "RVTCKPT1"][u32 meta_len][meta JSON][u32 index_len]
//   [index JSON][payload of raw little-endian f32]
// ---------------------------------------------------------------------------

static_assert(std::endian::native == std::endian::little,
              "checkpoint code assumes a little-endian host");

inline constexpr char kCkptMagic[8] = {'R', 'V', 'T', 'C', 'K', 'P', 'T', '1'};

struct Checkpoint {
    ParamTree tree;
    json meta;
};

namespace detail {
inline void put_u32(std::vector<uint8_t>& out, uint32_t v) {
    const size_t n = out.size();
    out.resize(n + 4);
    std::memcpy(out.data() + n, &v, 4);
}
inline uint32_t get_u32(const std::vector<uint8_t>& in, size_t off) {
    if (off + 4 > in.size()) throw FormatError("checkpoint truncated in header");
    uint32_t v;
    std::memcpy(&v, in.data() + off, 4);
    return v;
}
}  // namespace detail

inline std::vector<uint8_t> save_checkpoint(const ParamTree& tree, const json& meta) {
    if (tree.empty()) throw UsageError("refusing to save an empty parameter tree");

    json index = json::array();
    uint64_t offset = 0;
    for (const auto& [path, e] : tree) {
        const uint64_t nbytes = static_cast<uint64_t>(e.tensor.numel()) * 4;
        index.push_back({{"path", path},
                         {"part", to_string(e.part)},
                         {"block", to_string(e.block)},
                         {"layer", to_string(e.layer)},
                         {"shape", e.tensor.shape()},
                         {"offset", offset},
                         {"nbytes", nbytes}});
        offset += nbytes;
    }

    const std::string meta_s = meta.dump();
    const std::string index_s = index.dump();

    std::vector<uint8_t> out;
    out.reserve(8 + 8 + meta_s.size() + index_s.size() + offset);
    out.insert(out.end(), kCkptMagic, kCkptMagic + 8);
    detail::put_u32(out, static_cast<uint32_t>(meta_s.size()));
    out.insert(out.end(), meta_s.begin(), meta_s.end());
    detail::put_u32(out, static_cast<uint32_t>(index_s.size()));
    out.insert(out.end(), index_s.begin(), index_s.end());
    for (const auto& [path, e] : tree) {
        const size_t n = out.size();
        const size_t nbytes = static_cast<size_t>(e.tensor.numel()) * 4;
        out.resize(n + nbytes);
        std::memcpy(out.data() + n, e.tensor.data(), nbytes);
    }
    return out;
}

// Load a checkpoint; with a selector, only matching entries are materialized
// (reads are index-directed, cost scales with selected bytes).
inline Checkpoint load_checkpoint(const std::vector<uint8_t>& bytes,
                                  const Selector* only = nullptr) {
    if (bytes.size() < 8) throw FormatError("checkpoint shorter than magic");
    if (std::memcmp(bytes.data(), kCkptMagic, 7) != 0)
        throw FormatError("bad checkpoint magic");
    if (bytes[7] != kCkptMagic[7])
        throw FormatError(std::string("unsupported checkpoint version '") +
                          static_cast<char>(bytes[7]) + "'");

    size_t off = 8;
    const uint32_t meta_len = detail::get_u32(bytes, off);
    off += 4;
    if (off + meta_len > bytes.size()) throw FormatError("checkpoint truncated in meta block");
    json meta;
    try {
        meta = json::parse(bytes.begin() + static_cast<long>(off),
                           bytes.begin() + static_cast<long>(off + meta_len));
    } catch (const json::exception& e) {
        throw FormatError(std::string("bad meta JSON: ") + e.what());
    }
    off += meta_len;

    const uint32_t index_len = detail::get_u32(bytes, off);
    off += 4;
    if (off + index_len > bytes.size()) throw FormatError("checkpoint truncated in index block");
    json index;
    try {
        index = json::parse(bytes.begin() + static_cast<long>(off),
                            bytes.begin() + static_cast<long>(off + index_len));
    } catch (const json::exception& e) {
        throw FormatError(std::string("bad index JSON: ") + e.what());
    }
    off += index_len;
    const size_t payload_off = off;
    const size_t payload_size = bytes.size() - payload_off;

    Checkpoint ck;
    ck.meta = std::move(meta);
    uint64_t expect_off = 0;
    for (const auto& row : index) {
        const std::string path = row.at("path").get<std::string>();
        const uint64_t entry_off = row.at("offset").get<uint64_t>();
        const uint64_t nbytes = row.at("nbytes").get<uint64_t>();
        if (entry_off != expect_off)
            throw FormatError("index offsets overlap or leave gaps at " + path);
        expect_off = entry_off + nbytes;
        if (entry_off + nbytes > payload_size)
            throw FormatError("checkpoint payload truncated at " + path);

        ParamEntry e;
        e.part = part_from_string(row.at("part").get<std::string>());
        e.block = block_from_string(row.at("block").get<std::string>());
        e.layer = layer_from_string(row.at("layer").get<std::string>());
        const std::vector<int> shape = row.at("shape").get<std::vector<int>>();
        if (Tensor::numel_of(shape) * 4 != static_cast<int64_t>(nbytes))
            throw FormatError("index shape disagrees with byte count at " + path);
        if (only && !only->matches(path, e)) continue;
        std::vector<float> data(static_cast<size_t>(nbytes / 4));
        std::memcpy(data.data(), bytes.data() + payload_off + entry_off, nbytes);
        e.tensor = Tensor::from(shape, std::move(data));
        ck.tree.put(path, e.tensor, e.part, e.block, e.layer);
    }
    if (expect_off != payload_size)
        throw FormatError("checkpoint payload size disagrees with index");
    return ck;
}

inline void write_checkpoint_file(const std::string& path, const ParamTree& tree,
                                  const json& meta) {
    const std::vector<uint8_t> bytes = save_checkpoint(tree, meta);
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw UsageError("cannot open checkpoint file for writing: " + path);
    f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<long>(bytes.size()));
    if (!f) throw UsageError("failed writing checkpoint file: " + path);
}

inline Checkpoint read_checkpoint_file(const std::string& path, const Selector* only = nullptr) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw UsageError("cannot open checkpoint file: " + path);
    std::vector<uint8_t> bytes((std::istreambuf_iterator<char>(f)),
                               std::istreambuf_iterator<char>());
    return load_checkpoint(bytes, only);
}

}  // namespace revt
