#pragma once

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <functional>
#include <memory>
#include <sstream>
#include <string>
#include <unordered_set>
#include <vector>

#include "revt/common.hpp"

namespace revt {

// ---------------------------------------------------------------------------
// Tensor: dense row-major f32 n-d array. Copies share the underlying buffer
// (shallow handle); ops never mutate their inputs, so shared buffers stay
// consistent. Gradients live next to the values and are populated by
// backward() when the tensor took part in a taped forward pass.
// ---------------------------------------------------------------------------

class Tensor {
public:
    struct Impl {
        std::vector<int> shape;
        std::vector<float> value;
        std::vector<float> grad;
        bool requires_grad = false;
    };

    Tensor() : p_(std::make_shared<Impl>()) {}

    static Tensor zeros(std::vector<int> shape, bool requires_grad = false) {
        Tensor t;
        t.p_->shape = std::move(shape);
        t.p_->value.assign(static_cast<size_t>(numel_of(t.p_->shape)), 0.0f);
        t.p_->requires_grad = requires_grad;
        return t;
    }

    static Tensor full(std::vector<int> shape, float v, bool requires_grad = false) {
        Tensor t = zeros(std::move(shape), requires_grad);
        std::fill(t.p_->value.begin(), t.p_->value.end(), v);
        return t;
    }

    static Tensor from(std::vector<int> shape, std::vector<float> data, bool requires_grad = false) {
        if (numel_of(shape) != static_cast<int64_t>(data.size()))
            throw DimensionError("tensor data size does not match shape");
        Tensor t;
        t.p_->shape = std::move(shape);
        t.p_->value = std::move(data);
        t.p_->requires_grad = requires_grad;
        return t;
    }

    static Tensor scalar(float v, bool requires_grad = false) {
        return from({1}, {v}, requires_grad);
    }

    const std::vector<int>& shape() const { return p_->shape; }
    int dim(int i) const { return p_->shape[static_cast<size_t>(i)]; }
    int rank() const { return static_cast<int>(p_->shape.size()); }
    int64_t numel() const { return numel_of(p_->shape); }

    float* data() { return p_->value.data(); }
    const float* data() const { return p_->value.data(); }
    std::vector<float>& values() { return p_->value; }
    const std::vector<float>& values() const { return p_->value; }

    bool requires_grad() const { return p_->requires_grad; }
    void set_requires_grad(bool rg) { p_->requires_grad = rg; }

    bool has_grad() const { return !p_->grad.empty(); }
    std::vector<float>& grad() {
        if (p_->grad.size() != p_->value.size()) p_->grad.assign(p_->value.size(), 0.0f);
        return p_->grad;
    }
    const std::vector<float>& grad() const { return p_->grad; }
    void zero_grad() { p_->grad.assign(p_->value.size(), 0.0f); }

    float item() const {
        if (numel() != 1) throw UsageError("item() requires a scalar tensor");
        return p_->value[0];
    }

    // Deep copy: fresh buffer, no tape connection.
    Tensor clone() const {
        Tensor t;
        t.p_->shape = p_->shape;
        t.p_->value = p_->value;
        t.p_->requires_grad = p_->requires_grad;
        return t;
    }

    bool same_impl(const Tensor& o) const { return p_ == o.p_; }
    std::shared_ptr<Impl> impl() const { return p_; }

    static int64_t numel_of(const std::vector<int>& shape) {
        int64_t n = 1;
        for (int d : shape) n *= d;
        return n;
    }

private:
    std::shared_ptr<Impl> p_;
};

inline std::string shape_str(const std::vector<int>& s) {
    std::ostringstream os;
    os << "[";
    for (size_t i = 0; i < s.size(); ++i) os << (i ? "x" : "") << s[i];
    os << "]";
    return os.str();
}

// ---------------------------------------------------------------------------
// Tape: ordered record of backward closures. Nodes are appended in forward
// order (topological by construction) and replayed in reverse by backward().
// One tape per thread; ops record onto the active tape only.
// ---------------------------------------------------------------------------

class Tape {
public:
    void record(std::function<void()> backward_fn) {
        nodes_.push_back(std::move(backward_fn));
    }

    // Zero the grad buffer the first time a tensor appears on this tape.
    void touch(const std::shared_ptr<Tensor::Impl>& impl) {
        if (seen_.insert(impl.get()).second)
            impl->grad.assign(impl->value.size(), 0.0f);
    }

    bool empty() const { return nodes_.empty(); }
    size_t size() const { return nodes_.size(); }

    void run_backward() {
        for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) (*it)();
    }

    void clear() {
        nodes_.clear();
        seen_.clear();
    }

private:
    std::vector<std::function<void()>> nodes_;
    std::unordered_set<Tensor::Impl*> seen_;
};

namespace detail {
inline Tape*& current_tape() {
    thread_local Tape* tape = nullptr;
    return tape;
}
}  // namespace detail

struct TapeScope {
    explicit TapeScope(Tape& tape) {
        prev_ = detail::current_tape();
        detail::current_tape() = &tape;
    }
    ~TapeScope() { detail::current_tape() = prev_; }
    TapeScope(const TapeScope&) = delete;
    TapeScope& operator=(const TapeScope&) = delete;

private:
    Tape* prev_;
};

namespace detail {

inline void check_finite(const char* op, const std::vector<float>& v) {
    uint32_t bad = 0;
    for (float f : v) {
        const uint32_t b = std::bit_cast<uint32_t>(f);
        bad |= static_cast<uint32_t>((b & 0x7F800000u) == 0x7F800000u);
    }
    if (bad) throw NumericError(std::string("non-finite values in output of ") + op);
}

// Returns the active tape if the result should be recorded, else nullptr.
inline Tape* recording_tape(bool output_requires_grad) {
    Tape* t = current_tape();
    return (t != nullptr && output_requires_grad) ? t : nullptr;
}

// --- raw matmul kernels on row-major buffers (accumulating) ---

// C[M,N] += A[M,K] * B[K,N]
inline void mm_nn(const float* a, const float* b, float* c, int m, int k, int n) {
    for (int i = 0; i < m; ++i) {
        const float* arow = a + static_cast<size_t>(i) * k;
        float* crow = c + static_cast<size_t>(i) * n;
        for (int p = 0; p < k; ++p) {
            const float av = arow[p];
            const float* brow = b + static_cast<size_t>(p) * n;
            for (int j = 0; j < n; ++j) crow[j] += av * brow[j];
        }
    }
}

// C[M,K] += A[M,N] * B[K,N]^T   (i.e. C += A * B^T)
inline void mm_nt(const float* a, const float* b, float* c, int m, int n, int k) {
    for (int i = 0; i < m; ++i) {
        const float* arow = a + static_cast<size_t>(i) * n;
        float* crow = c + static_cast<size_t>(i) * k;
        for (int p = 0; p < k; ++p) {
            const float* brow = b + static_cast<size_t>(p) * n;
            float acc = 0.0f;
            for (int j = 0; j < n; ++j) acc += arow[j] * brow[j];
            crow[p] += acc;
        }
    }
}

// C[K,N] += A[M,K]^T * B[M,N]
inline void mm_tn(const float* a, const float* b, float* c, int m, int k, int n) {
    for (int i = 0; i < m; ++i) {
        const float* arow = a + static_cast<size_t>(i) * k;
        const float* brow = b + static_cast<size_t>(i) * n;
        for (int p = 0; p < k; ++p) {
            const float av = arow[p];
            float* crow = c + static_cast<size_t>(p) * n;
            for (int j = 0; j < n; ++j) crow[j] += av * brow[j];
        }
    }
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Elementwise and shape ops
// ---------------------------------------------------------------------------

// add: identical shapes, or b is rank-1 matching a's trailing dim (bias add).
inline Tensor add(const Tensor& a, const Tensor& b) {
    const bool bias_add = b.rank() == 1 && a.rank() >= 1 &&
                          a.shape().back() == b.dim(0) && a.shape() != b.shape();
    if (!bias_add && a.shape() != b.shape())
        throw DimensionError("add: shapes " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));

    Tensor y = Tensor::zeros(a.shape());
    const int64_t n = a.numel();
    if (bias_add) {
        const int d = b.dim(0);
        for (int64_t i = 0; i < n; ++i) y.data()[i] = a.data()[i] + b.data()[i % d];
    } else {
        for (int64_t i = 0; i < n; ++i) y.data()[i] = a.data()[i] + b.data()[i];
    }
    detail::check_finite("add", y.values());

    const bool rg = a.requires_grad() || b.requires_grad();
    y.set_requires_grad(rg);
    if (Tape* tape = detail::recording_tape(rg)) {
        auto ai = a.impl(), bi = b.impl(), yi = y.impl();
        tape->touch(yi);
        if (a.requires_grad()) tape->touch(ai);
        if (b.requires_grad()) tape->touch(bi);
        const bool arg = a.requires_grad(), brg = b.requires_grad();
        tape->record([ai, bi, yi, n, bias_add, arg, brg] {
            if (arg)
                for (int64_t i = 0; i < n; ++i) ai->grad[i] += yi->grad[i];
            if (brg) {
                if (bias_add) {
                    const int d = bi->shape[0];
                    for (int64_t i = 0; i < n; ++i) bi->grad[i % d] += yi->grad[i];
                } else {
                    for (int64_t i = 0; i < n; ++i) bi->grad[i] += yi->grad[i];
                }
            }
        });
    }
    return y;
}

inline Tensor mul(const Tensor& a, const Tensor& b) {
    if (a.shape() != b.shape())
        throw DimensionError("mul: shapes " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
    Tensor y = Tensor::zeros(a.shape());
    const int64_t n = a.numel();
    for (int64_t i = 0; i < n; ++i) y.data()[i] = a.data()[i] * b.data()[i];
    detail::check_finite("mul", y.values());

    const bool rg = a.requires_grad() || b.requires_grad();
    y.set_requires_grad(rg);
    if (Tape* tape = detail::recording_tape(rg)) {
        auto ai = a.impl(), bi = b.impl(), yi = y.impl();
        tape->touch(yi);
        if (a.requires_grad()) tape->touch(ai);
        if (b.requires_grad()) tape->touch(bi);
        const bool arg = a.requires_grad(), brg = b.requires_grad();
        tape->record([ai, bi, yi, n, arg, brg] {
            if (arg)
                for (int64_t i = 0; i < n; ++i) ai->grad[i] += yi->grad[i] * bi->value[i];
            if (brg)
                for (int64_t i = 0; i < n; ++i) bi->grad[i] += yi->grad[i] * ai->value[i];
        });
    }
    return y;
}

inline Tensor scale(const Tensor& a, float s) {
    Tensor y = Tensor::zeros(a.shape());
    const int64_t n = a.numel();
    for (int64_t i = 0; i < n; ++i) y.data()[i] = a.data()[i] * s;
    detail::check_finite("scale", y.values());
    y.set_requires_grad(a.requires_grad());
    if (Tape* tape = detail::recording_tape(y.requires_grad())) {
        auto ai = a.impl(), yi = y.impl();
        tape->touch(yi);
        tape->touch(ai);
        tape->record([ai, yi, n, s] {
            for (int64_t i = 0; i < n; ++i) ai->grad[i] += s * yi->grad[i];
        });
    }
    return y;
}

inline Tensor relu(const Tensor& a) {
    Tensor y = Tensor::zeros(a.shape());
    const int64_t n = a.numel();
    for (int64_t i = 0; i < n; ++i) y.data()[i] = a.data()[i] > 0.0f ? a.data()[i] : 0.0f;
    detail::check_finite("relu", y.values());
    y.set_requires_grad(a.requires_grad());
    if (Tape* tape = detail::recording_tape(y.requires_grad())) {
        auto ai = a.impl(), yi = y.impl();
        tape->touch(yi);
        tape->touch(ai);
        tape->record([ai, yi, n] {
            for (int64_t i = 0; i < n; ++i)
                if (ai->value[i] > 0.0f) ai->grad[i] += yi->grad[i];
        });
    }
    return y;
}

inline Tensor gelu(const Tensor& a) {
    Tensor y = Tensor::zeros(a.shape());
    const int64_t n = a.numel();
    constexpr float kInvSqrt2 = 0.70710678118654752f;
    for (int64_t i = 0; i < n; ++i) {
        const float x = a.data()[i];
        y.data()[i] = 0.5f * x * (1.0f + std::erf(x * kInvSqrt2));
    }
    detail::check_finite("gelu", y.values());
    y.set_requires_grad(a.requires_grad());
    if (Tape* tape = detail::recording_tape(y.requires_grad())) {
        auto ai = a.impl(), yi = y.impl();
        tape->touch(yi);
        tape->touch(ai);
        tape->record([ai, yi, n] {
            constexpr float kInvSqrt2pi = 0.39894228040143268f;
            for (int64_t i = 0; i < n; ++i) {
                const float x = ai->value[i];
                const float cdf = 0.5f * (1.0f + std::erf(x * 0.70710678118654752f));
                const float pdf = kInvSqrt2pi * std::exp(-0.5f * x * x);
                ai->grad[i] += yi->grad[i] * (cdf + x * pdf);
            }
        });
    }
    return y;
}

inline Tensor reshape(const Tensor& a, std::vector<int> shape) {
    if (Tensor::numel_of(shape) != a.numel())
        throw DimensionError("reshape: element count mismatch " + shape_str(a.shape()) +
                             " -> " + shape_str(shape));
    Tensor y = Tensor::from(std::move(shape), a.values());
    y.set_requires_grad(a.requires_grad());
    if (Tape* tape = detail::recording_tape(y.requires_grad())) {
        auto ai = a.impl(), yi = y.impl();
        tape->touch(yi);
        tape->touch(ai);
        const int64_t n = a.numel();
        tape->record([ai, yi, n] {
            for (int64_t i = 0; i < n; ++i) ai->grad[i] += yi->grad[i];
        });
    }
    return y;
}

namespace detail {
// dst[..swapped..] = src[..]; accumulate adds instead of assigning.
inline void permute2_raw(const float* src, float* dst, const std::vector<int>& shape,
                         int d0, int d1, bool accumulate) {
    const int r = static_cast<int>(shape.size());
    std::vector<int64_t> in_stride(static_cast<size_t>(r), 1);
    for (int i = r - 2; i >= 0; --i)
        in_stride[static_cast<size_t>(i)] =
            in_stride[static_cast<size_t>(i + 1)] * shape[static_cast<size_t>(i + 1)];
    std::vector<int> out_shape = shape;
    std::swap(out_shape[static_cast<size_t>(d0)], out_shape[static_cast<size_t>(d1)]);
    std::vector<int64_t> out_stride(static_cast<size_t>(r), 1);
    for (int i = r - 2; i >= 0; --i)
        out_stride[static_cast<size_t>(i)] =
            out_stride[static_cast<size_t>(i + 1)] * out_shape[static_cast<size_t>(i + 1)];
    // out axis i reads input axis perm[i]
    std::vector<int> perm(static_cast<size_t>(r));
    for (int i = 0; i < r; ++i) perm[static_cast<size_t>(i)] = i;
    std::swap(perm[static_cast<size_t>(d0)], perm[static_cast<size_t>(d1)]);

    const int64_t total = Tensor::numel_of(shape);
    std::vector<int> idx(static_cast<size_t>(r), 0);
    for (int64_t lin = 0; lin < total; ++lin) {
        // idx enumerates the output index
        int64_t src_off = 0;
        for (int i = 0; i < r; ++i)
            src_off += idx[static_cast<size_t>(i)] * in_stride[static_cast<size_t>(perm[static_cast<size_t>(i)])];
        if (accumulate)
            dst[lin] += src[src_off];
        else
            dst[lin] = src[src_off];
        for (int i = r - 1; i >= 0; --i) {
            if (++idx[static_cast<size_t>(i)] < out_shape[static_cast<size_t>(i)]) break;
            idx[static_cast<size_t>(i)] = 0;
        }
    }
}
}  // namespace detail

inline Tensor transpose(const Tensor& a, int d0, int d1) {
    const int r = a.rank();
    if (d0 < 0 || d1 < 0 || d0 >= r || d1 >= r)
        throw DimensionError("transpose: axis out of range");
    std::vector<int> out_shape = a.shape();
    std::swap(out_shape[static_cast<size_t>(d0)], out_shape[static_cast<size_t>(d1)]);
    Tensor y = Tensor::zeros(out_shape);
    detail::permute2_raw(a.data(), y.data(), a.shape(), d0, d1, false);
    y.set_requires_grad(a.requires_grad());
    if (Tape* tape = detail::recording_tape(y.requires_grad())) {
        auto ai = a.impl(), yi = y.impl();
        tape->touch(yi);
        tape->touch(ai);
        auto yshape = out_shape;
        tape->record([ai, yi, yshape, d0, d1] {
            detail::permute2_raw(yi->grad.data(), ai->grad.data(), yshape, d0, d1, true);
        });
    }
    return y;
}

inline Tensor concat(const std::vector<Tensor>& parts, int dim) {
    if (parts.empty()) throw UsageError("concat: empty input list");
    const int r = parts[0].rank();
    if (dim < 0 || dim >= r) throw DimensionError("concat: axis out of range");
    std::vector<int> out_shape = parts[0].shape();
    int cat = 0;
    for (const Tensor& p : parts) {
        if (p.rank() != r) throw DimensionError("concat: rank mismatch");
        for (int i = 0; i < r; ++i)
            if (i != dim && p.dim(i) != out_shape[static_cast<size_t>(i)])
                throw DimensionError("concat: shape mismatch on non-concat axis");
        cat += p.dim(dim);
    }
    out_shape[static_cast<size_t>(dim)] = cat;

    int64_t outer = 1, inner = 1;
    for (int i = 0; i < dim; ++i) outer *= out_shape[static_cast<size_t>(i)];
    for (int i = dim + 1; i < r; ++i) inner *= out_shape[static_cast<size_t>(i)];

    Tensor y = Tensor::zeros(out_shape);
    bool rg = false;
    {
        int64_t off = 0;
        for (const Tensor& p : parts) {
            const int64_t chunk = p.dim(dim) * inner;
            for (int64_t o = 0; o < outer; ++o)
                std::memcpy(y.data() + o * cat * inner + off, p.data() + o * chunk,
                            static_cast<size_t>(chunk) * sizeof(float));
            off += chunk;
            rg = rg || p.requires_grad();
        }
    }
    y.set_requires_grad(rg);
    if (Tape* tape = detail::recording_tape(rg)) {
        auto yi = y.impl();
        tape->touch(yi);
        std::vector<std::shared_ptr<Tensor::Impl>> impls;
        std::vector<int64_t> chunks;
        std::vector<char> wants;
        for (const Tensor& p : parts) {
            if (p.requires_grad()) tape->touch(p.impl());
            impls.push_back(p.impl());
            chunks.push_back(p.dim(dim) * inner);
            wants.push_back(p.requires_grad() ? 1 : 0);
        }
        const int64_t cat_inner = static_cast<int64_t>(cat) * inner;
        tape->record([yi, impls, chunks, wants, outer, cat_inner] {
            int64_t off = 0;
            for (size_t pi = 0; pi < impls.size(); ++pi) {
                if (wants[pi]) {
                    for (int64_t o = 0; o < outer; ++o) {
                        const float* g = yi->grad.data() + o * cat_inner + off;
                        float* dst = impls[pi]->grad.data() + o * chunks[pi];
                        for (int64_t i = 0; i < chunks[pi]; ++i) dst[i] += g[i];
                    }
                }
                off += chunks[pi];
            }
        });
    }
    return y;
}

// ---------------------------------------------------------------------------
// Reductions (f64 accumulators, fixed index order)
// ---------------------------------------------------------------------------

inline Tensor sum(const Tensor& a) {
    double acc = 0.0;
    for (int64_t i = 0; i < a.numel(); ++i) acc += a.data()[i];
    Tensor y = Tensor::scalar(static_cast<float>(acc));
    detail::check_finite("sum", y.values());
    y.set_requires_grad(a.requires_grad());
    if (Tape* tape = detail::recording_tape(y.requires_grad())) {
        auto ai = a.impl(), yi = y.impl();
        tape->touch(yi);
        tape->touch(ai);
        const int64_t n = a.numel();
        tape->record([ai, yi, n] {
            const float g = yi->grad[0];
            for (int64_t i = 0; i < n; ++i) ai->grad[i] += g;
        });
    }
    return y;
}

inline Tensor mean(const Tensor& a) {
    if (a.numel() == 0) throw UsageError("mean of empty tensor");
    double acc = 0.0;
    for (int64_t i = 0; i < a.numel(); ++i) acc += a.data()[i];
    const double inv_n = 1.0 / static_cast<double>(a.numel());
    Tensor y = Tensor::scalar(static_cast<float>(acc * inv_n));
    detail::check_finite("mean", y.values());
    y.set_requires_grad(a.requires_grad());
    if (Tape* tape = detail::recording_tape(y.requires_grad())) {
        auto ai = a.impl(), yi = y.impl();
        tape->touch(yi);
        tape->touch(ai);
        const int64_t n = a.numel();
        tape->record([ai, yi, n, inv_n] {
            const float g = static_cast<float>(yi->grad[0] * inv_n);
            for (int64_t i = 0; i < n; ++i) ai->grad[i] += g;
        });
    }
    return y;
}

// ---------------------------------------------------------------------------
// softmax over a given axis, stabilized by max subtraction
// ---------------------------------------------------------------------------

inline Tensor softmax(const Tensor& a, int axis) {
    const int r = a.rank();
    if (axis < 0 || axis >= r) throw DimensionError("softmax: axis out of range");
    const int d = a.dim(axis);
    int64_t outer = 1, inner = 1;
    for (int i = 0; i < axis; ++i) outer *= a.dim(i);
    for (int i = axis + 1; i < r; ++i) inner *= a.dim(i);

    Tensor y = Tensor::zeros(a.shape());
    for (int64_t o = 0; o < outer; ++o) {
        for (int64_t in = 0; in < inner; ++in) {
            const int64_t base = o * d * inner + in;
            float mx = a.data()[base];
            for (int j = 1; j < d; ++j) mx = std::max(mx, a.data()[base + j * inner]);
            double denom = 0.0;
            for (int j = 0; j < d; ++j) {
                const float e = std::exp(a.data()[base + j * inner] - mx);
                y.data()[base + j * inner] = e;
                denom += e;
            }
            const float inv = static_cast<float>(1.0 / denom);
            for (int j = 0; j < d; ++j) y.data()[base + j * inner] *= inv;
        }
    }
    detail::check_finite("softmax", y.values());
    y.set_requires_grad(a.requires_grad());
    if (Tape* tape = detail::recording_tape(y.requires_grad())) {
        auto ai = a.impl(), yi = y.impl();
        tape->touch(yi);
        tape->touch(ai);
        tape->record([ai, yi, outer, inner, d] {
            for (int64_t o = 0; o < outer; ++o) {
                for (int64_t in = 0; in < inner; ++in) {
                    const int64_t base = o * d * inner + in;
                    double dot = 0.0;
                    for (int j = 0; j < d; ++j)
                        dot += static_cast<double>(yi->grad[base + j * inner]) * yi->value[base + j * inner];
                    for (int j = 0; j < d; ++j) {
                        const int64_t k = base + j * inner;
                        ai->grad[k] += yi->value[k] * (yi->grad[k] - static_cast<float>(dot));
                    }
                }
            }
        });
    }
    return y;
}

// ---------------------------------------------------------------------------
// layernorm over the last dim: y = gamma * (x - mu) / sqrt(var + eps) + beta
// ---------------------------------------------------------------------------

inline Tensor layernorm(const Tensor& a, const Tensor& gamma, const Tensor& beta,
                        float eps = 1e-5f) {
    const int d = a.shape().back();
    if (gamma.rank() != 1 || gamma.dim(0) != d || beta.rank() != 1 || beta.dim(0) != d)
        throw DimensionError("layernorm: affine params must be rank-1 of the last dim");
    const int64_t rows = a.numel() / d;

    Tensor y = Tensor::zeros(a.shape());
    auto xhat = std::make_shared<std::vector<float>>(static_cast<size_t>(a.numel()));
    auto inv_std = std::make_shared<std::vector<float>>(static_cast<size_t>(rows));
    for (int64_t rI = 0; rI < rows; ++rI) {
        const float* x = a.data() + rI * d;
        double mu = 0.0;
        for (int j = 0; j < d; ++j) mu += x[j];
        mu /= d;
        double var = 0.0;
        for (int j = 0; j < d; ++j) {
            const double dv = x[j] - mu;
            var += dv * dv;
        }
        var /= d;
        const float istd = static_cast<float>(1.0 / std::sqrt(var + eps));
        (*inv_std)[static_cast<size_t>(rI)] = istd;
        for (int j = 0; j < d; ++j) {
            const float xh = (x[j] - static_cast<float>(mu)) * istd;
            (*xhat)[static_cast<size_t>(rI * d + j)] = xh;
            y.data()[rI * d + j] = gamma.data()[j] * xh + beta.data()[j];
        }
    }
    detail::check_finite("layernorm", y.values());

    const bool rg = a.requires_grad() || gamma.requires_grad() || beta.requires_grad();
    y.set_requires_grad(rg);
    if (Tape* tape = detail::recording_tape(rg)) {
        auto ai = a.impl(), gi = gamma.impl(), bi = beta.impl(), yi = y.impl();
        tape->touch(yi);
        if (a.requires_grad()) tape->touch(ai);
        if (gamma.requires_grad()) tape->touch(gi);
        if (beta.requires_grad()) tape->touch(bi);
        const bool arg = a.requires_grad(), grg = gamma.requires_grad(), brg = beta.requires_grad();
        tape->record([ai, gi, bi, yi, xhat, inv_std, rows, d, arg, grg, brg] {
            for (int64_t rI = 0; rI < rows; ++rI) {
                const float* dy = yi->grad.data() + rI * d;
                const float* xh = xhat->data() + rI * d;
                if (grg || brg) {
                    for (int j = 0; j < d; ++j) {
                        if (grg) gi->grad[static_cast<size_t>(j)] += dy[j] * xh[j];
                        if (brg) bi->grad[static_cast<size_t>(j)] += dy[j];
                    }
                }
                if (arg) {
                    double m1 = 0.0, m2 = 0.0;
                    for (int j = 0; j < d; ++j) {
                        const double dxh = static_cast<double>(dy[j]) * gi->value[static_cast<size_t>(j)];
                        m1 += dxh;
                        m2 += dxh * xh[j];
                    }
                    m1 /= d;
                    m2 /= d;
                    const float istd = (*inv_std)[static_cast<size_t>(rI)];
                    for (int j = 0; j < d; ++j) {
                        const double dxh = static_cast<double>(dy[j]) * gi->value[static_cast<size_t>(j)];
                        ai->grad[rI * d + j] += static_cast<float>((dxh - m1 - xh[j] * m2) * istd);
                    }
                }
            }
        });
    }
    return y;
}

// ---------------------------------------------------------------------------
// matmul: 2-d x 2-d, batched (equal leading dims), or n-d x 2-d
// ---------------------------------------------------------------------------

inline Tensor matmul(const Tensor& a, const Tensor& b) {
    const int ra = a.rank(), rb = b.rank();
    if (ra < 2 || rb < 2) throw DimensionError("matmul: operands must have rank >= 2");

    int64_t batch = 1;
    int m, k, k2, n;
    std::vector<int> out_shape;

    if (rb == 2 && ra >= 2) {
        // flatten leading dims of a
        m = 1;
        for (int i = 0; i + 1 < ra; ++i) m *= a.dim(i);
        k = a.shape().back();
        k2 = b.dim(0);
        n = b.dim(1);
        out_shape.assign(a.shape().begin(), a.shape().end() - 1);
        out_shape.push_back(n);
    } else if (ra == rb) {
        for (int i = 0; i + 2 < ra; ++i) {
            if (a.dim(i) != b.dim(i)) throw DimensionError("matmul: batch dims differ");
            batch *= a.dim(i);
        }
        m = a.dim(ra - 2);
        k = a.dim(ra - 1);
        k2 = b.dim(rb - 2);
        n = b.dim(rb - 1);
        out_shape.assign(a.shape().begin(), a.shape().end() - 2);
        out_shape.push_back(m);
        out_shape.push_back(n);
    } else {
        throw DimensionError("matmul: unsupported rank combination");
    }
    if (k != k2)
        throw DimensionError("matmul: inner dims disagree " + shape_str(a.shape()) + " x " +
                             shape_str(b.shape()));

    Tensor y = Tensor::zeros(out_shape);
    const int64_t a_step = static_cast<int64_t>(m) * k;
    const int64_t b_step = (rb == 2 && ra >= 2) ? 0 : static_cast<int64_t>(k) * n;
    const int64_t y_step = static_cast<int64_t>(m) * n;
    for (int64_t bt = 0; bt < batch; ++bt)
        detail::mm_nn(a.data() + bt * a_step, b.data() + bt * b_step, y.data() + bt * y_step, m, k, n);
    detail::check_finite("matmul", y.values());

    const bool rg = a.requires_grad() || b.requires_grad();
    y.set_requires_grad(rg);
    if (Tape* tape = detail::recording_tape(rg)) {
        auto ai = a.impl(), bi = b.impl(), yi = y.impl();
        tape->touch(yi);
        if (a.requires_grad()) tape->touch(ai);
        if (b.requires_grad()) tape->touch(bi);
        const bool arg = a.requires_grad(), brg = b.requires_grad();
        tape->record([ai, bi, yi, batch, a_step, b_step, y_step, m, k, n, arg, brg] {
            for (int64_t bt = 0; bt < batch; ++bt) {
                const float* av = ai->value.data() + bt * a_step;
                const float* bv = bi->value.data() + bt * b_step;
                const float* dy = yi->grad.data() + bt * y_step;
                if (arg)  // dA += dY * B^T
                    detail::mm_nt(dy, bv, ai->grad.data() + bt * a_step, m, n, k);
                if (brg)  // dB += A^T * dY
                    detail::mm_tn(av, dy, bi->grad.data() + bt * b_step, m, k, n);
            }
        });
    }
    return y;
}

// ---------------------------------------------------------------------------
// conv2d: cross-correlation, NCHW, grouped, optional bias
// ---------------------------------------------------------------------------

namespace detail {
inline void im2col(const float* x, int c, int h, int w, int kh, int kw, int stride, int pad,
                   int oh, int ow, float* cols) {
    // cols is [c*kh*kw, oh*ow]
    int64_t row = 0;
    for (int ci = 0; ci < c; ++ci) {
        for (int ki = 0; ki < kh; ++ki) {
            for (int kj = 0; kj < kw; ++kj, ++row) {
                float* dst = cols + row * oh * ow;
                for (int oy = 0; oy < oh; ++oy) {
                    const int iy = oy * stride - pad + ki;
                    for (int ox = 0; ox < ow; ++ox) {
                        const int ix = ox * stride - pad + kj;
                        dst[oy * ow + ox] =
                            (iy >= 0 && iy < h && ix >= 0 && ix < w)
                                ? x[(static_cast<int64_t>(ci) * h + iy) * w + ix]
                                : 0.0f;
                    }
                }
            }
        }
    }
}

inline void col2im_accum(const float* cols, int c, int h, int w, int kh, int kw, int stride,
                         int pad, int oh, int ow, float* dx) {
    int64_t row = 0;
    for (int ci = 0; ci < c; ++ci) {
        for (int ki = 0; ki < kh; ++ki) {
            for (int kj = 0; kj < kw; ++kj, ++row) {
                const float* src = cols + row * oh * ow;
                for (int oy = 0; oy < oh; ++oy) {
                    const int iy = oy * stride - pad + ki;
                    if (iy < 0 || iy >= h) continue;
                    for (int ox = 0; ox < ow; ++ox) {
                        const int ix = ox * stride - pad + kj;
                        if (ix < 0 || ix >= w) continue;
                        dx[(static_cast<int64_t>(ci) * h + iy) * w + ix] += src[oy * ow + ox];
                    }
                }
            }
        }
    }
}

// direct 9-tap depthwise 3x3, stride 1, pad 1
inline void dw3x3_forward(const float* x, const float* w, const float* bias, float* y, int b,
                          int c, int h, int wd) {
    const int64_t plane = static_cast<int64_t>(h) * wd;
    for (int bi = 0; bi < b; ++bi) {
        for (int ci = 0; ci < c; ++ci) {
            const float* xp = x + (static_cast<int64_t>(bi) * c + ci) * plane;
            float* yp = y + (static_cast<int64_t>(bi) * c + ci) * plane;
            const float* wp = w + static_cast<int64_t>(ci) * 9;
            const float bv = bias ? bias[ci] : 0.0f;
            for (int oy = 0; oy < h; ++oy) {
                for (int ox = 0; ox < wd; ++ox) {
                    float acc = bv;
                    for (int ki = 0; ki < 3; ++ki) {
                        const int iy = oy - 1 + ki;
                        if (iy < 0 || iy >= h) continue;
                        const float* xrow = xp + static_cast<int64_t>(iy) * wd;
                        for (int kj = 0; kj < 3; ++kj) {
                            const int ix = ox - 1 + kj;
                            if (ix < 0 || ix >= wd) continue;
                            acc += wp[ki * 3 + kj] * xrow[ix];
                        }
                    }
                    yp[static_cast<int64_t>(oy) * wd + ox] = acc;
                }
            }
        }
    }
}

inline void dw3x3_backward(const float* x, const float* w, const float* dy, float* dx, float* dw,
                           float* db, int b, int c, int h, int wd) {
    const int64_t plane = static_cast<int64_t>(h) * wd;
    for (int bi = 0; bi < b; ++bi) {
        for (int ci = 0; ci < c; ++ci) {
            const float* xp = x + (static_cast<int64_t>(bi) * c + ci) * plane;
            const float* dyp = dy + (static_cast<int64_t>(bi) * c + ci) * plane;
            const float* wp = w + static_cast<int64_t>(ci) * 9;
            float* dxp = dx ? dx + (static_cast<int64_t>(bi) * c + ci) * plane : nullptr;
            float* dwp = dw ? dw + static_cast<int64_t>(ci) * 9 : nullptr;
            double dbacc = 0.0;
            for (int oy = 0; oy < h; ++oy) {
                for (int ox = 0; ox < wd; ++ox) {
                    const float g = dyp[static_cast<int64_t>(oy) * wd + ox];
                    dbacc += g;
                    for (int ki = 0; ki < 3; ++ki) {
                        const int iy = oy - 1 + ki;
                        if (iy < 0 || iy >= h) continue;
                        for (int kj = 0; kj < 3; ++kj) {
                            const int ix = ox - 1 + kj;
                            if (ix < 0 || ix >= wd) continue;
                            const int64_t xoff = static_cast<int64_t>(iy) * wd + ix;
                            if (dwp) dwp[ki * 3 + kj] += g * xp[xoff];
                            if (dxp) dxp[xoff] += g * wp[ki * 3 + kj];
                        }
                    }
                }
            }
            if (db) db[ci] += static_cast<float>(dbacc);
        }
    }
}
}  // namespace detail

inline Tensor conv2d(const Tensor& x, const Tensor& w, const Tensor* bias, int stride, int pad,
                     int groups = 1) {
    if (x.rank() != 4 || w.rank() != 4) throw DimensionError("conv2d: x and w must be rank 4");
    const int b = x.dim(0), c = x.dim(1), h = x.dim(2), wd = x.dim(3);
    const int o = w.dim(0), cg = w.dim(1), kh = w.dim(2), kw = w.dim(3);
    if (groups < 1 || c % groups != 0 || o % groups != 0)
        throw DimensionError("conv2d: channels not divisible by groups");
    if (cg != c / groups)
        throw DimensionError("conv2d: kernel input channels disagree with x/groups");
    if (stride < 1) throw DimensionError("conv2d: stride must be >= 1");
    const int oh = (h + 2 * pad - kh) / stride + 1;
    const int ow = (wd + 2 * pad - kw) / stride + 1;
    if (h + 2 * pad < kh || wd + 2 * pad < kw || oh < 1 || ow < 1)
        throw DimensionError("conv2d: kernel does not fit padded input");
    if (bias && (bias->rank() != 1 || bias->dim(0) != o))
        throw DimensionError("conv2d: bias must be rank-1 of out channels");

    const int og = o / groups;
    const int64_t col_rows = static_cast<int64_t>(cg) * kh * kw;
    const int64_t spatial = static_cast<int64_t>(oh) * ow;

    const bool dw3x3 = groups == c && o == c && kh == 3 && kw == 3 && stride == 1 && pad == 1;
    const bool conv1x1 = groups == 1 && kh == 1 && kw == 1 && stride == 1 && pad == 0;

    Tensor y = Tensor::zeros({b, o, oh, ow});
    if (dw3x3) {
        detail::dw3x3_forward(x.data(), w.data(), bias ? bias->data() : nullptr, y.data(), b, c,
                              h, wd);
    } else if (conv1x1) {
        for (int bi_ = 0; bi_ < b; ++bi_)
            detail::mm_nn(w.data(), x.data() + static_cast<int64_t>(bi_) * c * spatial,
                          y.data() + static_cast<int64_t>(bi_) * o * spatial, o, c,
                          static_cast<int>(spatial));
        if (bias)
            for (int bi_ = 0; bi_ < b; ++bi_)
                for (int co = 0; co < o; ++co) {
                    float* yrow = y.data() + (static_cast<int64_t>(bi_) * o + co) * spatial;
                    const float bv = bias->data()[co];
                    for (int64_t i = 0; i < spatial; ++i) yrow[i] += bv;
                }
    } else {
        std::vector<float> cols(static_cast<size_t>(col_rows * spatial));
        for (int bi_ = 0; bi_ < b; ++bi_) {
            for (int g = 0; g < groups; ++g) {
                const float* xg = x.data() + (static_cast<int64_t>(bi_) * c + g * cg) * h * wd;
                detail::im2col(xg, cg, h, wd, kh, kw, stride, pad, oh, ow, cols.data());
                const float* wg = w.data() + static_cast<int64_t>(g) * og * col_rows;
                float* yg = y.data() + (static_cast<int64_t>(bi_) * o + g * og) * spatial;
                detail::mm_nn(wg, cols.data(), yg, og, static_cast<int>(col_rows),
                              static_cast<int>(spatial));
            }
        }
        if (bias) {
            for (int bi_ = 0; bi_ < b; ++bi_)
                for (int co = 0; co < o; ++co) {
                    float* yrow = y.data() + (static_cast<int64_t>(bi_) * o + co) * spatial;
                    const float bv = bias->data()[co];
                    for (int64_t i = 0; i < spatial; ++i) yrow[i] += bv;
                }
        }
    }
    detail::check_finite("conv2d", y.values());

    const bool rg = x.requires_grad() || w.requires_grad() || (bias && bias->requires_grad());
    y.set_requires_grad(rg);
    if (Tape* tape = detail::recording_tape(rg)) {
        auto xi = x.impl(), wi = w.impl(), yi = y.impl();
        std::shared_ptr<Tensor::Impl> bi2 = bias ? bias->impl() : nullptr;
        tape->touch(yi);
        if (x.requires_grad()) tape->touch(xi);
        if (w.requires_grad()) tape->touch(wi);
        if (bi2 && bias->requires_grad()) tape->touch(bi2);
        const bool xrg = x.requires_grad(), wrg = w.requires_grad();
        const bool brg = bias && bias->requires_grad();
        tape->record([xi, wi, bi2, yi, b, c, h, wd, o, cg, og, kh, kw, stride, pad, groups, oh,
                      ow, col_rows, spatial, xrg, wrg, brg, dw3x3, conv1x1] {
            if (dw3x3) {
                detail::dw3x3_backward(xi->value.data(), wi->value.data(), yi->grad.data(),
                                       xrg ? xi->grad.data() : nullptr,
                                       wrg ? wi->grad.data() : nullptr,
                                       brg ? bi2->grad.data() : nullptr, b, c, h, wd);
                return;
            }
            if (conv1x1) {
                for (int bi_ = 0; bi_ < b; ++bi_) {
                    const float* xg = xi->value.data() + static_cast<int64_t>(bi_) * c * spatial;
                    const float* dyg = yi->grad.data() + static_cast<int64_t>(bi_) * o * spatial;
                    if (wrg)  // dW += dY * X^T
                        detail::mm_nt(dyg, xg, wi->grad.data(), o, static_cast<int>(spatial), c);
                    if (xrg)  // dX += W^T * dY
                        detail::mm_tn(wi->value.data(), dyg,
                                      xi->grad.data() + static_cast<int64_t>(bi_) * c * spatial,
                                      o, c, static_cast<int>(spatial));
                    if (brg) {
                        for (int co = 0; co < o; ++co) {
                            double acc = 0.0;
                            for (int64_t i = 0; i < spatial; ++i) acc += dyg[co * spatial + i];
                            bi2->grad[static_cast<size_t>(co)] += static_cast<float>(acc);
                        }
                    }
                }
                return;
            }
            std::vector<float> cols(static_cast<size_t>(col_rows * spatial));
            std::vector<float> dcols(static_cast<size_t>(col_rows * spatial));
            for (int bi_ = 0; bi_ < b; ++bi_) {
                for (int g = 0; g < groups; ++g) {
                    const float* xg =
                        xi->value.data() + (static_cast<int64_t>(bi_) * c + g * cg) * h * wd;
                    const float* dyg =
                        yi->grad.data() + (static_cast<int64_t>(bi_) * o + g * og) * spatial;
                    const float* wg = wi->value.data() + static_cast<int64_t>(g) * og * col_rows;
                    if (wrg) {
                        detail::im2col(xg, cg, h, wd, kh, kw, stride, pad, oh, ow, cols.data());
                        // dW += dY * cols^T
                        detail::mm_nt(dyg, cols.data(),
                                      wi->grad.data() + static_cast<int64_t>(g) * og * col_rows,
                                      og, static_cast<int>(spatial), static_cast<int>(col_rows));
                    }
                    if (xrg) {
                        std::fill(dcols.begin(), dcols.end(), 0.0f);
                        // dcols = W^T * dY
                        detail::mm_tn(wg, dyg, dcols.data(), og, static_cast<int>(col_rows),
                                      static_cast<int>(spatial));
                        detail::col2im_accum(
                            dcols.data(), cg, h, wd, kh, kw, stride, pad, oh, ow,
                            xi->grad.data() + (static_cast<int64_t>(bi_) * c + g * cg) * h * wd);
                    }
                }
                if (brg) {
                    const float* dyb = yi->grad.data() + static_cast<int64_t>(bi_) * o * spatial;
                    for (int co = 0; co < o; ++co) {
                        double acc = 0.0;
                        for (int64_t i = 0; i < spatial; ++i) acc += dyb[co * spatial + i];
                        bi2->grad[static_cast<size_t>(co)] += static_cast<float>(acc);
                    }
                }
            }
        });
    }
    return y;
}

inline Tensor conv2d(const Tensor& x, const Tensor& w, const Tensor& bias, int stride, int pad,
                     int groups = 1) {
    return conv2d(x, w, &bias, stride, pad, groups);
}

inline Tensor conv2d(const Tensor& x, const Tensor& w, int stride, int pad, int groups = 1) {
    return conv2d(x, w, nullptr, stride, pad, groups);
}

// ---------------------------------------------------------------------------
// bilinear upsampling, NCHW, half-pixel centers
// ---------------------------------------------------------------------------

inline Tensor upsample_bilinear(const Tensor& x, int oh, int ow) {
    if (x.rank() != 4) throw DimensionError("upsample_bilinear: x must be rank 4");
    if (oh < 1 || ow < 1) throw DimensionError("upsample_bilinear: bad target size");
    const int b = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);

    struct Tap {
        int i0, i1;
        float f;
    };
    auto make_taps = [](int in, int out) {
        std::vector<Tap> taps(static_cast<size_t>(out));
        const double scl = static_cast<double>(in) / out;
        for (int i = 0; i < out; ++i) {
            double s = (i + 0.5) * scl - 0.5;
            if (s < 0.0) s = 0.0;
            if (s > in - 1) s = in - 1;
            const int i0 = static_cast<int>(s);
            taps[static_cast<size_t>(i)] = {i0, std::min(i0 + 1, in - 1),
                                            static_cast<float>(s - i0)};
        }
        return taps;
    };
    const auto ty = make_taps(h, oh);
    const auto tx = make_taps(w, ow);

    Tensor y = Tensor::zeros({b, c, oh, ow});
    for (int bi_ = 0; bi_ < b; ++bi_) {
        for (int ci = 0; ci < c; ++ci) {
            const float* src = x.data() + (static_cast<int64_t>(bi_) * c + ci) * h * w;
            float* dst = y.data() + (static_cast<int64_t>(bi_) * c + ci) * oh * ow;
            for (int oy = 0; oy < oh; ++oy) {
                const Tap& a = ty[static_cast<size_t>(oy)];
                for (int ox = 0; ox < ow; ++ox) {
                    const Tap& d = tx[static_cast<size_t>(ox)];
                    const float v00 = src[a.i0 * w + d.i0], v01 = src[a.i0 * w + d.i1];
                    const float v10 = src[a.i1 * w + d.i0], v11 = src[a.i1 * w + d.i1];
                    dst[oy * ow + ox] = (1 - a.f) * ((1 - d.f) * v00 + d.f * v01) +
                                        a.f * ((1 - d.f) * v10 + d.f * v11);
                }
            }
        }
    }
    detail::check_finite("upsample_bilinear", y.values());
    y.set_requires_grad(x.requires_grad());
    if (Tape* tape = detail::recording_tape(y.requires_grad())) {
        auto xi = x.impl(), yi = y.impl();
        tape->touch(yi);
        tape->touch(xi);
        tape->record([xi, yi, b, c, h, w, oh, ow, ty, tx] {
            for (int bi_ = 0; bi_ < b; ++bi_) {
                for (int ci = 0; ci < c; ++ci) {
                    float* dx = xi->grad.data() + (static_cast<int64_t>(bi_) * c + ci) * h * w;
                    const float* dy = yi->grad.data() + (static_cast<int64_t>(bi_) * c + ci) * oh * ow;
                    for (int oy = 0; oy < oh; ++oy) {
                        const Tap& a = ty[static_cast<size_t>(oy)];
                        for (int ox = 0; ox < ow; ++ox) {
                            const Tap& d = tx[static_cast<size_t>(ox)];
                            const float g = dy[oy * ow + ox];
                            dx[a.i0 * w + d.i0] += (1 - a.f) * (1 - d.f) * g;
                            dx[a.i0 * w + d.i1] += (1 - a.f) * d.f * g;
                            dx[a.i1 * w + d.i0] += a.f * (1 - d.f) * g;
                            dx[a.i1 * w + d.i1] += a.f * d.f * g;
                        }
                    }
                }
            }
        });
    }
    return y;
}

// ---------------------------------------------------------------------------
// cross entropy on logits rows, mean over non-ignored rows
// ---------------------------------------------------------------------------

inline Tensor cross_entropy(const Tensor& logits, const std::vector<uint8_t>& labels,
                            int ignore_label = 255) {
    if (logits.rank() != 2) throw DimensionError("cross_entropy: logits must be [N, S]");
    const int n = logits.dim(0), s = logits.dim(1);
    if (static_cast<size_t>(n) != labels.size())
        throw DimensionError("cross_entropy: label count mismatch");
    for (int i = 0; i < n; ++i)
        if (labels[static_cast<size_t>(i)] != ignore_label && labels[static_cast<size_t>(i)] >= s)
            throw UsageError("cross_entropy: label out of class range");

    auto lse = std::make_shared<std::vector<float>>(static_cast<size_t>(n));
    double total = 0.0;
    int64_t valid = 0;
    for (int i = 0; i < n; ++i) {
        const float* row = logits.data() + static_cast<int64_t>(i) * s;
        float mx = row[0];
        for (int j = 1; j < s; ++j) mx = std::max(mx, row[j]);
        double acc = 0.0;
        for (int j = 0; j < s; ++j) acc += std::exp(static_cast<double>(row[j]) - mx);
        const float l = mx + static_cast<float>(std::log(acc));
        (*lse)[static_cast<size_t>(i)] = l;
        if (labels[static_cast<size_t>(i)] != ignore_label) {
            total += static_cast<double>(l) - row[labels[static_cast<size_t>(i)]];
            ++valid;
        }
    }
    if (valid == 0) throw UsageError("cross_entropy: all labels ignored");
    Tensor y = Tensor::scalar(static_cast<float>(total / static_cast<double>(valid)));
    detail::check_finite("cross_entropy", y.values());
    y.set_requires_grad(logits.requires_grad());
    if (Tape* tape = detail::recording_tape(y.requires_grad())) {
        auto li = logits.impl(), yi = y.impl();
        tape->touch(yi);
        tape->touch(li);
        auto labs = std::make_shared<std::vector<uint8_t>>(labels);
        tape->record([li, yi, lse, labs, n, s, ignore_label, valid] {
            const float g = yi->grad[0] / static_cast<float>(valid);
            for (int i = 0; i < n; ++i) {
                const uint8_t lab = (*labs)[static_cast<size_t>(i)];
                if (lab == ignore_label) continue;
                const float* row = li->value.data() + static_cast<int64_t>(i) * s;
                float* drow = li->grad.data() + static_cast<int64_t>(i) * s;
                const float l = (*lse)[static_cast<size_t>(i)];
                for (int j = 0; j < s; ++j) {
                    const float p = std::exp(row[j] - l);
                    drow[j] += g * (p - (j == lab ? 1.0f : 0.0f));
                }
            }
        });
    }
    return y;
}

// ---------------------------------------------------------------------------
// backward: seed dLoss/dLoss = 1 and replay the tape in reverse
// ---------------------------------------------------------------------------

inline void backward(Tensor& loss) {
    Tape* tape = detail::current_tape();
    if (tape == nullptr || tape->empty())
        throw UsageError("backward: no active non-empty tape");
    if (loss.numel() != 1) throw UsageError("backward: loss must be a scalar");
    loss.grad().assign(1, 1.0f);
    tape->run_backward();
    tape->clear();
}

}  // namespace revt
