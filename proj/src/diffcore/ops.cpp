#include "fsv/diffcore/ops.hpp"

#include <algorithm>
#include <cmath>
#include <initializer_list>
#include <numeric>
#include <sstream>
#include <string>

#include "gemm.hpp"

namespace fsv::dc {

std::size_t numel(const Shape& shape) {
    return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

std::string to_string(const Shape& shape) {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) os << 'x';
        os << shape[i];
    }
    os << ']';
    return os.str();
}

namespace {

template <class T>
using NodePtr = std::shared_ptr<TensorNode<T>>;

template <class T>
BasicTape<T>* recording_tape(std::initializer_list<const BasicTensor<T>*> inputs) {
    auto* tape = BasicTape<T>::active();
    if (tape == nullptr) return nullptr;
    for (const auto* t : inputs) {
        if (t->defined() && t->requires_grad()) return tape;
    }
    return nullptr;
}

template <class T>
void check_finite(const BasicTensor<T>& out, const char* op) {
    for (T v : out.data()) {
        if (!std::isfinite(v)) throw NumericError(std::string(op) + " produced a non-finite value");
    }
}

template <class T>
T* grad_buffer(TensorNode<T>& node) {
    if (node.grad.size() != node.data.size()) node.grad.assign(node.data.size(), T(0));
    return node.grad.data();
}

template <class T>
bool wants_grad(const NodePtr<T>& node) {
    return node && node->requires_grad;
}

template <class T>
void require_defined(const BasicTensor<T>& t, const char* op) {
    if (!t.defined()) throw ShapeError(std::string(op) + ": undefined tensor argument");
}

template <class T>
void finish(BasicTape<T>* tape, const char* op, std::vector<const TensorNode<T>*> inputs,
            BasicTensor<T>& out, std::function<void()> backward) {
    check_finite(out, op);
    if (tape == nullptr) return;
    out.set_requires_grad(true);
    tape->record(op, inputs, *out.node(), std::move(backward));
}

// Broadcast factor of `b` over `a`: 1 for equal shapes, otherwise the
// product of the leading dimensions of `a` that `b` lacks.
template <class T>
std::size_t broadcast_reps(const BasicTensor<T>& a, const BasicTensor<T>& b, const char* op) {
    const auto& sa = a.shape();
    const auto& sb = b.shape();
    if (sb.size() <= sa.size() && std::equal(sb.rbegin(), sb.rend(), sa.rbegin())) {
        return a.numel() / b.numel();
    }
    throw ShapeError(std::string(op) + ": shapes " + to_string(sa) + " and " + to_string(sb) +
                     " are not broadcast-compatible");
}

template <class T>
BasicTensor<T> add_impl(const BasicTensor<T>& a, const BasicTensor<T>& b, T sign, const char* op) {
    require_defined(a, op);
    require_defined(b, op);
    const std::size_t reps = broadcast_reps(a, b, op);
    const std::size_t bn = b.numel();
    BasicTensor<T> out(a.shape());
    auto o = out.mutable_data();
    auto ad = a.data();
    auto bd = b.data();
    for (std::size_t r = 0; r < reps; ++r) {
        for (std::size_t j = 0; j < bn; ++j) o[r * bn + j] = ad[r * bn + j] + sign * bd[j];
    }
    auto* tape = recording_tape({&a, &b});
    NodePtr<T> an = a.node(), bnode = b.node(), on = out.node();
    finish(tape, op, {an.get(), bnode.get()}, out, [an, bnode, on, reps, bn, sign] {
        if (on->grad.empty()) return;
        const T* g = on->grad.data();
        if (wants_grad(an)) {
            T* ga = grad_buffer(*an);
            for (std::size_t i = 0; i < reps * bn; ++i) ga[i] += g[i];
        }
        if (wants_grad(bnode)) {
            T* gb = grad_buffer(*bnode);
            for (std::size_t r = 0; r < reps; ++r) {
                for (std::size_t j = 0; j < bn; ++j) gb[j] += sign * g[r * bn + j];
            }
        }
    });
    return out;
}

// Element-wise op with derivative expressed through input x and output y.
template <class T, class Fwd, class Deriv>
BasicTensor<T> unary(const BasicTensor<T>& x, const char* op, Fwd fwd, Deriv deriv) {
    require_defined(x, op);
    BasicTensor<T> out(x.shape());
    auto o = out.mutable_data();
    auto xd = x.data();
    for (std::size_t i = 0; i < o.size(); ++i) o[i] = fwd(xd[i]);
    auto* tape = recording_tape({&x});
    NodePtr<T> xn = x.node(), on = out.node();
    finish(tape, op, {xn.get()}, out, [xn, on, deriv] {
        if (on->grad.empty() || !wants_grad(xn)) return;
        T* gx = grad_buffer(*xn);
        const T* g = on->grad.data();
        for (std::size_t i = 0; i < on->data.size(); ++i) gx[i] += g[i] * deriv(xn->data[i], on->data[i]);
    });
    return out;
}

// Splits `shape` into (outer, extent, inner) around `axis`.
struct AxisSplit {
    std::size_t outer = 1;
    std::size_t extent = 1;
    std::size_t inner = 1;
};

AxisSplit split_axis(const Shape& shape, std::size_t axis) {
    AxisSplit s;
    for (std::size_t i = 0; i < axis; ++i) s.outer *= shape[i];
    s.extent = shape[axis];
    for (std::size_t i = axis + 1; i < shape.size(); ++i) s.inner *= shape[i];
    return s;
}

template <class T>
void im2col2d(const T* x, std::size_t c, std::size_t h, std::size_t w, Pair k, Pair stride, Pair pad,
              std::size_t ho, std::size_t wo, T* cols, std::size_t col_stride, std::size_t col_offset) {
    for (std::size_t ci = 0; ci < c; ++ci) {
        for (std::size_t ki = 0; ki < k.h; ++ki) {
            for (std::size_t kj = 0; kj < k.w; ++kj) {
                T* row = cols + ((ci * k.h + ki) * k.w + kj) * col_stride + col_offset;
                for (std::size_t oy = 0; oy < ho; ++oy) {
                    const auto iy = static_cast<std::ptrdiff_t>(oy * stride.h + ki) -
                                    static_cast<std::ptrdiff_t>(pad.h);
                    T* dst = row + oy * wo;
                    if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(h)) {
                        std::fill(dst, dst + wo, T(0));
                        continue;
                    }
                    const T* src = x + (ci * h + static_cast<std::size_t>(iy)) * w;
                    for (std::size_t ox = 0; ox < wo; ++ox) {
                        const auto ix = static_cast<std::ptrdiff_t>(ox * stride.w + kj) -
                                        static_cast<std::ptrdiff_t>(pad.w);
                        dst[ox] = (ix < 0 || ix >= static_cast<std::ptrdiff_t>(w))
                                      ? T(0)
                                      : src[static_cast<std::size_t>(ix)];
                    }
                }
            }
        }
    }
}

template <class T>
void col2im2d(const T* cols, std::size_t c, std::size_t h, std::size_t w, Pair k, Pair stride,
              Pair pad, std::size_t ho, std::size_t wo, T* x, std::size_t col_stride,
              std::size_t col_offset) {
    for (std::size_t ci = 0; ci < c; ++ci) {
        for (std::size_t ki = 0; ki < k.h; ++ki) {
            for (std::size_t kj = 0; kj < k.w; ++kj) {
                const T* row = cols + ((ci * k.h + ki) * k.w + kj) * col_stride + col_offset;
                for (std::size_t oy = 0; oy < ho; ++oy) {
                    const auto iy = static_cast<std::ptrdiff_t>(oy * stride.h + ki) -
                                    static_cast<std::ptrdiff_t>(pad.h);
                    if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(h)) continue;
                    T* dst = x + (ci * h + static_cast<std::size_t>(iy)) * w;
                    for (std::size_t ox = 0; ox < wo; ++ox) {
                        const auto ix = static_cast<std::ptrdiff_t>(ox * stride.w + kj) -
                                        static_cast<std::ptrdiff_t>(pad.w);
                        if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(w)) continue;
                        dst[static_cast<std::size_t>(ix)] += row[oy * wo + ox];
                    }
                }
            }
        }
    }
}

template <class T>
void im2col3d(const T* x, std::size_t c, std::size_t t, std::size_t h, std::size_t w, Triple k,
              Triple stride, Triple pad, std::size_t to, std::size_t ho, std::size_t wo, T* cols) {
    const std::size_t ncol = to * ho * wo;
    for (std::size_t ci = 0; ci < c; ++ci) {
        for (std::size_t kt = 0; kt < k.t; ++kt) {
            for (std::size_t ki = 0; ki < k.h; ++ki) {
                for (std::size_t kj = 0; kj < k.w; ++kj) {
                    T* row = cols + (((ci * k.t + kt) * k.h + ki) * k.w + kj) * ncol;
                    for (std::size_t ot = 0; ot < to; ++ot) {
                        const auto it = static_cast<std::ptrdiff_t>(ot * stride.t + kt) -
                                        static_cast<std::ptrdiff_t>(pad.t);
                        for (std::size_t oy = 0; oy < ho; ++oy) {
                            const auto iy = static_cast<std::ptrdiff_t>(oy * stride.h + ki) -
                                            static_cast<std::ptrdiff_t>(pad.h);
                            T* dst = row + (ot * ho + oy) * wo;
                            const bool outside = it < 0 || it >= static_cast<std::ptrdiff_t>(t) || iy < 0 ||
                                                 iy >= static_cast<std::ptrdiff_t>(h);
                            for (std::size_t ox = 0; ox < wo; ++ox) {
                                const auto ix = static_cast<std::ptrdiff_t>(ox * stride.w + kj) -
                                                static_cast<std::ptrdiff_t>(pad.w);
                                dst[ox] = (outside || ix < 0 || ix >= static_cast<std::ptrdiff_t>(w))
                                              ? T(0)
                                              : x[((ci * t + static_cast<std::size_t>(it)) * h +
                                                   static_cast<std::size_t>(iy)) *
                                                      w +
                                                  static_cast<std::size_t>(ix)];
                            }
                        }
                    }
                }
            }
        }
    }
}

template <class T>
void col2im3d(const T* cols, std::size_t c, std::size_t t, std::size_t h, std::size_t w, Triple k,
              Triple stride, Triple pad, std::size_t to, std::size_t ho, std::size_t wo, T* x) {
    const std::size_t ncol = to * ho * wo;
    for (std::size_t ci = 0; ci < c; ++ci) {
        for (std::size_t kt = 0; kt < k.t; ++kt) {
            for (std::size_t ki = 0; ki < k.h; ++ki) {
                for (std::size_t kj = 0; kj < k.w; ++kj) {
                    const T* row = cols + (((ci * k.t + kt) * k.h + ki) * k.w + kj) * ncol;
                    for (std::size_t ot = 0; ot < to; ++ot) {
                        const auto it = static_cast<std::ptrdiff_t>(ot * stride.t + kt) -
                                        static_cast<std::ptrdiff_t>(pad.t);
                        if (it < 0 || it >= static_cast<std::ptrdiff_t>(t)) continue;
                        for (std::size_t oy = 0; oy < ho; ++oy) {
                            const auto iy = static_cast<std::ptrdiff_t>(oy * stride.h + ki) -
                                            static_cast<std::ptrdiff_t>(pad.h);
                            if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(h)) continue;
                            for (std::size_t ox = 0; ox < wo; ++ox) {
                                const auto ix = static_cast<std::ptrdiff_t>(ox * stride.w + kj) -
                                                static_cast<std::ptrdiff_t>(pad.w);
                                if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(w)) continue;
                                x[((ci * t + static_cast<std::size_t>(it)) * h + static_cast<std::size_t>(iy)) * w +
                                  static_cast<std::size_t>(ix)] += row[(ot * ho + oy) * wo + ox];
                            }
                        }
                    }
                }
            }
        }
    }
}

std::size_t conv_extent(std::size_t in, std::size_t pad, std::size_t k, std::size_t stride,
                        const char* op) {
    if (stride == 0) throw ShapeError(std::string(op) + ": stride must be positive");
    if (k > in + 2 * pad) throw ShapeError(std::string(op) + ": kernel larger than padded input");
    return (in + 2 * pad - k) / stride + 1;
}

std::pair<std::size_t, std::size_t> adaptive_bin(std::size_t i, std::size_t in, std::size_t out) {
    const std::size_t begin = (i * in) / out;
    const std::size_t end = ((i + 1) * in + out - 1) / out;
    return {begin, end};
}

}  // namespace

template <class T>
BasicTensor<T> matmul(const BasicTensor<T>& a, const BasicTensor<T>& b) {
    require_defined(a, "matmul");
    require_defined(b, "matmul");
    if (a.ndim() != 2 || b.ndim() != 2 || a.dim(1) != b.dim(0)) {
        throw ShapeError("matmul: cannot multiply " + to_string(a.shape()) + " by " + to_string(b.shape()));
    }
    const std::size_t m = a.dim(0), p = a.dim(1), n = b.dim(1);
    BasicTensor<T> out(Shape{m, n});
    detail::gemm(false, false, m, n, p, a.data().data(), b.data().data(), out.mutable_data().data(), false);
    auto* tape = recording_tape({&a, &b});
    NodePtr<T> an = a.node(), bn = b.node(), on = out.node();
    finish(tape, "matmul", {an.get(), bn.get()}, out, [an, bn, on, m, n, p] {
        if (on->grad.empty()) return;
        const T* g = on->grad.data();
        if (wants_grad(an)) detail::gemm(false, true, m, p, n, g, bn->data.data(), grad_buffer(*an), true);
        if (wants_grad(bn)) detail::gemm(true, false, p, n, m, an->data.data(), g, grad_buffer(*bn), true);
    });
    return out;
}

template <class T>
BasicTensor<T> add(const BasicTensor<T>& a, const BasicTensor<T>& b) {
    return add_impl(a, b, T(1), "add");
}

template <class T>
BasicTensor<T> sub(const BasicTensor<T>& a, const BasicTensor<T>& b) {
    return add_impl(a, b, T(-1), "sub");
}

template <class T>
BasicTensor<T> mul(const BasicTensor<T>& a, const BasicTensor<T>& b) {
    require_defined(a, "mul");
    require_defined(b, "mul");
    if (a.shape() != b.shape()) {
        throw ShapeError("mul: shape mismatch " + to_string(a.shape()) + " vs " + to_string(b.shape()));
    }
    BasicTensor<T> out(a.shape());
    auto o = out.mutable_data();
    for (std::size_t i = 0; i < o.size(); ++i) o[i] = a[i] * b[i];
    auto* tape = recording_tape({&a, &b});
    NodePtr<T> an = a.node(), bn = b.node(), on = out.node();
    finish(tape, "mul", {an.get(), bn.get()}, out, [an, bn, on] {
        if (on->grad.empty()) return;
        const T* g = on->grad.data();
        const std::size_t n = on->data.size();
        if (wants_grad(an)) {
            T* ga = grad_buffer(*an);
            for (std::size_t i = 0; i < n; ++i) ga[i] += g[i] * bn->data[i];
        }
        if (wants_grad(bn)) {
            T* gb = grad_buffer(*bn);
            for (std::size_t i = 0; i < n; ++i) gb[i] += g[i] * an->data[i];
        }
    });
    return out;
}

template <class T>
BasicTensor<T> scale(const BasicTensor<T>& x, T factor) {
    return unary(
        x, "scale", [factor](T v) { return v * factor; }, [factor](T, T) { return factor; });
}

template <class T>
BasicTensor<T> square(const BasicTensor<T>& x) {
    return unary(
        x, "square", [](T v) { return v * v; }, [](T v, T) { return T(2) * v; });
}

template <class T>
BasicTensor<T> relu(const BasicTensor<T>& x) {
    return unary(
        x, "relu", [](T v) { return v > T(0) ? v : T(0); }, [](T v, T) { return v > T(0) ? T(1) : T(0); });
}

template <class T>
BasicTensor<T> sigmoid(const BasicTensor<T>& x) {
    return unary(
        x, "sigmoid",
        [](T v) {
            // Split by sign so exp never overflows.
            if (v >= T(0)) return T(1) / (T(1) + std::exp(-v));
            const T e = std::exp(v);
            return e / (T(1) + e);
        },
        [](T, T y) { return y * (T(1) - y); });
}

template <class T>
BasicTensor<T> tanh(const BasicTensor<T>& x) {
    return unary(
        x, "tanh", [](T v) { return std::tanh(v); }, [](T, T y) { return T(1) - y * y; });
}

template <class T>
BasicTensor<T> sum(const BasicTensor<T>& x) {
    require_defined(x, "sum");
    T total = T(0);
    for (T v : x.data()) total += v;
    auto out = BasicTensor<T>::scalar(total);
    auto* tape = recording_tape({&x});
    NodePtr<T> xn = x.node(), on = out.node();
    finish(tape, "sum", {xn.get()}, out, [xn, on] {
        if (on->grad.empty() || !wants_grad(xn)) return;
        T* gx = grad_buffer(*xn);
        const T g = on->grad[0];
        for (std::size_t i = 0; i < xn->data.size(); ++i) gx[i] += g;
    });
    return out;
}

template <class T>
BasicTensor<T> mean(const BasicTensor<T>& x, std::size_t axis) {
    require_defined(x, "mean");
    if (axis >= x.ndim()) throw ShapeError("mean: axis out of range for " + to_string(x.shape()));
    const AxisSplit s = split_axis(x.shape(), axis);
    Shape out_shape = x.shape();
    out_shape.erase(out_shape.begin() + static_cast<std::ptrdiff_t>(axis));
    if (out_shape.empty()) out_shape = {1};
    BasicTensor<T> out(out_shape);
    auto o = out.mutable_data();
    auto xd = x.data();
    const T inv = T(1) / static_cast<T>(s.extent);
    for (std::size_t a = 0; a < s.outer; ++a) {
        for (std::size_t e = 0; e < s.extent; ++e) {
            const T* src = xd.data() + (a * s.extent + e) * s.inner;
            T* dst = o.data() + a * s.inner;
            for (std::size_t i = 0; i < s.inner; ++i) dst[i] += src[i];
        }
    }
    for (auto& v : o) v *= inv;
    auto* tape = recording_tape({&x});
    NodePtr<T> xn = x.node(), on = out.node();
    finish(tape, "mean", {xn.get()}, out, [xn, on, s, inv] {
        if (on->grad.empty() || !wants_grad(xn)) return;
        T* gx = grad_buffer(*xn);
        const T* g = on->grad.data();
        for (std::size_t a = 0; a < s.outer; ++a) {
            for (std::size_t e = 0; e < s.extent; ++e) {
                T* dst = gx + (a * s.extent + e) * s.inner;
                for (std::size_t i = 0; i < s.inner; ++i) dst[i] += g[a * s.inner + i] * inv;
            }
        }
    });
    return out;
}

template <class T>
BasicTensor<T> reshape(const BasicTensor<T>& x, Shape shape) {
    require_defined(x, "reshape");
    if (numel(shape) != x.numel()) {
        throw ShapeError("reshape: cannot view " + to_string(x.shape()) + " as " + to_string(shape));
    }
    BasicTensor<T> out(std::move(shape), std::vector<T>(x.data().begin(), x.data().end()));
    auto* tape = recording_tape({&x});
    NodePtr<T> xn = x.node(), on = out.node();
    finish(tape, "reshape", {xn.get()}, out, [xn, on] {
        if (on->grad.empty() || !wants_grad(xn)) return;
        T* gx = grad_buffer(*xn);
        for (std::size_t i = 0; i < on->grad.size(); ++i) gx[i] += on->grad[i];
    });
    return out;
}

template <class T>
BasicTensor<T> concat(const std::vector<BasicTensor<T>>& parts, std::size_t axis) {
    if (parts.empty()) throw ShapeError("concat: no inputs");
    for (const auto& p : parts) require_defined(p, "concat");
    const Shape& first = parts.front().shape();
    if (axis >= first.size()) throw ShapeError("concat: axis out of range for " + to_string(first));
    std::size_t total = 0;
    for (const auto& p : parts) {
        const Shape& s = p.shape();
        bool ok = s.size() == first.size();
        for (std::size_t i = 0; ok && i < s.size(); ++i) ok = (i == axis) || s[i] == first[i];
        if (!ok) throw ShapeError("concat: incompatible shapes " + to_string(first) + " and " + to_string(s));
        total += s[axis];
    }
    Shape out_shape = first;
    out_shape[axis] = total;
    const AxisSplit os = split_axis(out_shape, axis);
    BasicTensor<T> out(out_shape);
    auto o = out.mutable_data();
    std::vector<std::size_t> offsets;
    std::size_t offset = 0;
    for (const auto& p : parts) {
        offsets.push_back(offset);
        const std::size_t ext = p.dim(axis);
        auto pd = p.data();
        for (std::size_t a = 0; a < os.outer; ++a) {
            std::copy_n(pd.data() + a * ext * os.inner, ext * os.inner,
                        o.data() + (a * os.extent + offset) * os.inner);
        }
        offset += ext;
    }
    auto* tape = BasicTape<T>::active();
    bool any = false;
    for (const auto& p : parts) any = any || p.requires_grad();
    if (!any) tape = nullptr;
    std::vector<NodePtr<T>> nodes;
    std::vector<const TensorNode<T>*> raw;
    for (const auto& p : parts) {
        nodes.push_back(p.node());
        raw.push_back(p.node().get());
    }
    NodePtr<T> on = out.node();
    finish(tape, "concat", raw, out, [nodes, offsets, on, os, axis] {
        if (on->grad.empty()) return;
        for (std::size_t k = 0; k < nodes.size(); ++k) {
            if (!wants_grad(nodes[k])) continue;
            const std::size_t ext = nodes[k]->shape[axis];
            T* gp = grad_buffer(*nodes[k]);
            for (std::size_t a = 0; a < os.outer; ++a) {
                const T* src = on->grad.data() + (a * os.extent + offsets[k]) * os.inner;
                T* dst = gp + a * ext * os.inner;
                for (std::size_t i = 0; i < ext * os.inner; ++i) dst[i] += src[i];
            }
        }
    });
    return out;
}

template <class T>
BasicTensor<T> slice(const BasicTensor<T>& x, std::size_t axis, std::size_t begin, std::size_t end) {
    require_defined(x, "slice");
    if (axis >= x.ndim() || begin >= end || end > x.dim(axis)) {
        throw ShapeError("slice: invalid range [" + std::to_string(begin) + "," + std::to_string(end) +
                         ") on axis " + std::to_string(axis) + " of " + to_string(x.shape()));
    }
    const AxisSplit s = split_axis(x.shape(), axis);
    const std::size_t ext = end - begin;
    Shape out_shape = x.shape();
    out_shape[axis] = ext;
    BasicTensor<T> out(out_shape);
    auto o = out.mutable_data();
    auto xd = x.data();
    for (std::size_t a = 0; a < s.outer; ++a) {
        std::copy_n(xd.data() + (a * s.extent + begin) * s.inner, ext * s.inner, o.data() + a * ext * s.inner);
    }
    auto* tape = recording_tape({&x});
    NodePtr<T> xn = x.node(), on = out.node();
    finish(tape, "slice", {xn.get()}, out, [xn, on, s, begin, ext] {
        if (on->grad.empty() || !wants_grad(xn)) return;
        T* gx = grad_buffer(*xn);
        for (std::size_t a = 0; a < s.outer; ++a) {
            const T* src = on->grad.data() + a * ext * s.inner;
            T* dst = gx + (a * s.extent + begin) * s.inner;
            for (std::size_t i = 0; i < ext * s.inner; ++i) dst[i] += src[i];
        }
    });
    return out;
}

template <class T>
BasicTensor<T> transpose01(const BasicTensor<T>& x) {
    require_defined(x, "transpose01");
    if (x.ndim() < 2) throw ShapeError("transpose01: needs at least 2 dimensions");
    const std::size_t A = x.dim(0), B = x.dim(1), R = x.numel() / (A * B);
    Shape out_shape = x.shape();
    std::swap(out_shape[0], out_shape[1]);
    BasicTensor<T> out(out_shape);
    auto o = out.mutable_data();
    auto xd = x.data();
    for (std::size_t a = 0; a < A; ++a) {
        for (std::size_t b = 0; b < B; ++b) std::copy_n(xd.data() + (a * B + b) * R, R, o.data() + (b * A + a) * R);
    }
    auto* tape = recording_tape({&x});
    NodePtr<T> xn = x.node(), on = out.node();
    finish(tape, "transpose01", {xn.get()}, out, [xn, on, A, B, R] {
        if (on->grad.empty() || !wants_grad(xn)) return;
        T* gx = grad_buffer(*xn);
        for (std::size_t a = 0; a < A; ++a) {
            for (std::size_t b = 0; b < B; ++b) {
                const T* src = on->grad.data() + (b * A + a) * R;
                T* dst = gx + (a * B + b) * R;
                for (std::size_t r = 0; r < R; ++r) dst[r] += src[r];
            }
        }
    });
    return out;
}

template <class T>
BasicTensor<T> squared_distance(const BasicTensor<T>& a, const BasicTensor<T>& b) {
    require_defined(a, "squared_distance");
    require_defined(b, "squared_distance");
    if (a.numel() != b.numel()) {
        throw ShapeError("squared_distance: dimension mismatch " + to_string(a.shape()) + " vs " +
                         to_string(b.shape()));
    }
    T total = T(0);
    for (std::size_t i = 0; i < a.numel(); ++i) {
        const T d = a[i] - b[i];
        total += d * d;
    }
    auto out = BasicTensor<T>::scalar(total);
    auto* tape = recording_tape({&a, &b});
    NodePtr<T> an = a.node(), bn = b.node(), on = out.node();
    finish(tape, "squared_distance", {an.get(), bn.get()}, out, [an, bn, on] {
        if (on->grad.empty()) return;
        const T g = on->grad[0];
        const std::size_t n = an->data.size();
        T* ga = wants_grad(an) ? grad_buffer(*an) : nullptr;
        T* gb = wants_grad(bn) ? grad_buffer(*bn) : nullptr;
        for (std::size_t i = 0; i < n; ++i) {
            const T d = T(2) * g * (an->data[i] - bn->data[i]);
            if (ga) ga[i] += d;
            if (gb) gb[i] -= d;
        }
    });
    return out;
}

template <class T>
BasicTensor<T> conv2d(const BasicTensor<T>& input, const BasicTensor<T>& kernel, const BasicTensor<T>& bias,
                      Pair stride, Pair padding) {
    require_defined(input, "conv2d");
    require_defined(kernel, "conv2d");
    const bool batched = input.ndim() == 4;
    if ((input.ndim() != 3 && !batched) || kernel.ndim() != 4) {
        throw ShapeError("conv2d: expected [C,H,W] or [B,C,H,W] input and [O,C,kh,kw] kernel, got " +
                         to_string(input.shape()) + " and " + to_string(kernel.shape()));
    }
    const std::size_t B = batched ? input.dim(0) : 1;
    const std::size_t C = input.dim(batched ? 1 : 0);
    const std::size_t H = input.dim(batched ? 2 : 1);
    const std::size_t W = input.dim(batched ? 3 : 2);
    const std::size_t O = kernel.dim(0);
    const Pair k{kernel.dim(2), kernel.dim(3)};
    if (kernel.dim(1) != C) {
        throw ShapeError("conv2d: kernel expects " + std::to_string(kernel.dim(1)) + " input channels, got " +
                         std::to_string(C));
    }
    if (bias.defined() && bias.numel() != O) throw ShapeError("conv2d: bias length must equal output channels");
    const std::size_t Ho = conv_extent(H, padding.h, k.h, stride.h, "conv2d");
    const std::size_t Wo = conv_extent(W, padding.w, k.w, stride.w, "conv2d");
    const std::size_t P = Ho * Wo;
    const std::size_t CK = C * k.h * k.w;
    const std::size_t ncol = B * P;

    auto cols = std::make_shared<std::vector<T>>(CK * ncol);
    for (std::size_t b = 0; b < B; ++b) {
        im2col2d(input.data().data() + b * C * H * W, C, H, W, k, stride, padding, Ho, Wo, cols->data(), ncol,
                 b * P);
    }
    std::vector<T> prod(O * ncol);
    detail::gemm(false, false, O, ncol, CK, kernel.data().data(), cols->data(), prod.data(), false);

    Shape out_shape = batched ? Shape{B, O, Ho, Wo} : Shape{O, Ho, Wo};
    BasicTensor<T> out(out_shape);
    auto o = out.mutable_data();
    for (std::size_t b = 0; b < B; ++b) {
        for (std::size_t oc = 0; oc < O; ++oc) {
            const T bv = bias.defined() ? bias[oc] : T(0);
            const T* src = prod.data() + oc * ncol + b * P;
            T* dst = o.data() + (b * O + oc) * P;
            for (std::size_t p = 0; p < P; ++p) dst[p] = src[p] + bv;
        }
    }

    auto* tape = recording_tape({&input, &kernel, &bias});
    NodePtr<T> xn = input.node(), kn = kernel.node(), bn = bias.node(), on = out.node();
    std::vector<const TensorNode<T>*> raw{xn.get(), kn.get()};
    if (bn) raw.push_back(bn.get());
    finish(tape, "conv2d", raw, out, [=] {
        if (on->grad.empty()) return;
        // Gather the output grad into GEMM layout [O x B*P].
        std::vector<T> g(O * ncol);
        for (std::size_t b = 0; b < B; ++b) {
            for (std::size_t oc = 0; oc < O; ++oc) {
                std::copy_n(on->grad.data() + (b * O + oc) * P, P, g.data() + oc * ncol + b * P);
            }
        }
        if (wants_grad(bn)) {
            T* gb = grad_buffer(*bn);
            for (std::size_t oc = 0; oc < O; ++oc) {
                T acc = T(0);
                for (std::size_t j = 0; j < ncol; ++j) acc += g[oc * ncol + j];
                gb[oc] += acc;
            }
        }
        if (wants_grad(kn)) detail::gemm(false, true, O, CK, ncol, g.data(), cols->data(), grad_buffer(*kn), true);
        if (wants_grad(xn)) {
            std::vector<T> gcols(CK * ncol);
            detail::gemm(true, false, CK, ncol, O, kn->data.data(), g.data(), gcols.data(), false);
            T* gx = grad_buffer(*xn);
            for (std::size_t b = 0; b < B; ++b) {
                col2im2d(gcols.data(), C, H, W, k, stride, padding, Ho, Wo, gx + b * C * H * W, ncol, b * P);
            }
        }
    });
    return out;
}

template <class T>
BasicTensor<T> conv3d(const BasicTensor<T>& input, const BasicTensor<T>& kernel, const BasicTensor<T>& bias,
                      Triple stride, Triple padding) {
    require_defined(input, "conv3d");
    require_defined(kernel, "conv3d");
    if (input.ndim() != 4 || kernel.ndim() != 5 || kernel.dim(1) != input.dim(0)) {
        throw ShapeError("conv3d: expected [C,T,H,W] input and [O,C,kt,kh,kw] kernel, got " +
                         to_string(input.shape()) + " and " + to_string(kernel.shape()));
    }
    const std::size_t C = input.dim(0), Tn = input.dim(1), H = input.dim(2), W = input.dim(3);
    const std::size_t O = kernel.dim(0);
    const Triple k{kernel.dim(2), kernel.dim(3), kernel.dim(4)};
    if (bias.defined() && bias.numel() != O) throw ShapeError("conv3d: bias length must equal output channels");
    const std::size_t To = conv_extent(Tn, padding.t, k.t, stride.t, "conv3d");
    const std::size_t Ho = conv_extent(H, padding.h, k.h, stride.h, "conv3d");
    const std::size_t Wo = conv_extent(W, padding.w, k.w, stride.w, "conv3d");
    const std::size_t ncol = To * Ho * Wo;
    const std::size_t CK = C * k.t * k.h * k.w;

    auto cols = std::make_shared<std::vector<T>>(CK * ncol);
    im2col3d(input.data().data(), C, Tn, H, W, k, stride, padding, To, Ho, Wo, cols->data());
    BasicTensor<T> out(Shape{O, To, Ho, Wo});
    auto o = out.mutable_data();
    detail::gemm(false, false, O, ncol, CK, kernel.data().data(), cols->data(), o.data(), false);
    if (bias.defined()) {
        for (std::size_t oc = 0; oc < O; ++oc) {
            for (std::size_t j = 0; j < ncol; ++j) o[oc * ncol + j] += bias[oc];
        }
    }

    auto* tape = recording_tape({&input, &kernel, &bias});
    NodePtr<T> xn = input.node(), kn = kernel.node(), bn = bias.node(), on = out.node();
    std::vector<const TensorNode<T>*> raw{xn.get(), kn.get()};
    if (bn) raw.push_back(bn.get());
    finish(tape, "conv3d", raw, out, [=] {
        if (on->grad.empty()) return;
        const T* g = on->grad.data();
        if (wants_grad(bn)) {
            T* gb = grad_buffer(*bn);
            for (std::size_t oc = 0; oc < O; ++oc) {
                T acc = T(0);
                for (std::size_t j = 0; j < ncol; ++j) acc += g[oc * ncol + j];
                gb[oc] += acc;
            }
        }
        if (wants_grad(kn)) detail::gemm(false, true, O, CK, ncol, g, cols->data(), grad_buffer(*kn), true);
        if (wants_grad(xn)) {
            std::vector<T> gcols(CK * ncol);
            detail::gemm(true, false, CK, ncol, O, kn->data.data(), g, gcols.data(), false);
            col2im3d(gcols.data(), C, Tn, H, W, k, stride, padding, To, Ho, Wo, grad_buffer(*xn));
        }
    });
    return out;
}

template <class T>
BasicTensor<T> avg_pool2d(const BasicTensor<T>& x, Pair window, Pair stride) {
    require_defined(x, "avg_pool2d");
    if (x.ndim() < 2) throw ShapeError("avg_pool2d: needs at least 2 dimensions");
    const std::size_t H = x.dim(x.ndim() - 2), W = x.dim(x.ndim() - 1);
    const std::size_t Ho = conv_extent(H, 0, window.h, stride.h, "avg_pool2d");
    const std::size_t Wo = conv_extent(W, 0, window.w, stride.w, "avg_pool2d");
    const std::size_t L = x.numel() / (H * W);
    Shape out_shape = x.shape();
    out_shape[out_shape.size() - 2] = Ho;
    out_shape[out_shape.size() - 1] = Wo;
    BasicTensor<T> out(out_shape);
    auto o = out.mutable_data();
    auto xd = x.data();
    const T inv = T(1) / static_cast<T>(window.h * window.w);
    for (std::size_t l = 0; l < L; ++l) {
        for (std::size_t oy = 0; oy < Ho; ++oy) {
            for (std::size_t ox = 0; ox < Wo; ++ox) {
                T acc = T(0);
                for (std::size_t i = 0; i < window.h; ++i) {
                    for (std::size_t j = 0; j < window.w; ++j) {
                        acc += xd[(l * H + oy * stride.h + i) * W + ox * stride.w + j];
                    }
                }
                o[(l * Ho + oy) * Wo + ox] = acc * inv;
            }
        }
    }
    auto* tape = recording_tape({&x});
    NodePtr<T> xn = x.node(), on = out.node();
    finish(tape, "avg_pool2d", {xn.get()}, out, [=] {
        if (on->grad.empty() || !wants_grad(xn)) return;
        T* gx = grad_buffer(*xn);
        for (std::size_t l = 0; l < L; ++l) {
            for (std::size_t oy = 0; oy < Ho; ++oy) {
                for (std::size_t ox = 0; ox < Wo; ++ox) {
                    const T g = on->grad[(l * Ho + oy) * Wo + ox] * inv;
                    for (std::size_t i = 0; i < window.h; ++i) {
                        for (std::size_t j = 0; j < window.w; ++j) {
                            gx[(l * H + oy * stride.h + i) * W + ox * stride.w + j] += g;
                        }
                    }
                }
            }
        }
    });
    return out;
}

template <class T>
BasicTensor<T> adaptive_avg_pool2d(const BasicTensor<T>& x, Pair target) {
    require_defined(x, "adaptive_avg_pool2d");
    if (x.ndim() < 2) throw ShapeError("adaptive_avg_pool2d: needs at least 2 dimensions");
    const std::size_t H = x.dim(x.ndim() - 2), W = x.dim(x.ndim() - 1);
    if (target.h == 0 || target.w == 0 || target.h > H || target.w > W) {
        throw ShapeError("adaptive_avg_pool2d: target " + std::to_string(target.h) + "x" +
                         std::to_string(target.w) + " exceeds input " + std::to_string(H) + "x" +
                         std::to_string(W));
    }
    const std::size_t Ho = target.h, Wo = target.w;
    const std::size_t L = x.numel() / (H * W);
    Shape out_shape = x.shape();
    out_shape[out_shape.size() - 2] = Ho;
    out_shape[out_shape.size() - 1] = Wo;
    BasicTensor<T> out(out_shape);
    auto o = out.mutable_data();
    auto xd = x.data();
    for (std::size_t l = 0; l < L; ++l) {
        for (std::size_t oy = 0; oy < Ho; ++oy) {
            const auto [y0, y1] = adaptive_bin(oy, H, Ho);
            for (std::size_t ox = 0; ox < Wo; ++ox) {
                const auto [x0, x1] = adaptive_bin(ox, W, Wo);
                T acc = T(0);
                for (std::size_t i = y0; i < y1; ++i) {
                    for (std::size_t j = x0; j < x1; ++j) acc += xd[(l * H + i) * W + j];
                }
                o[(l * Ho + oy) * Wo + ox] = acc / static_cast<T>((y1 - y0) * (x1 - x0));
            }
        }
    }
    auto* tape = recording_tape({&x});
    NodePtr<T> xn = x.node(), on = out.node();
    finish(tape, "adaptive_avg_pool2d", {xn.get()}, out, [=] {
        if (on->grad.empty() || !wants_grad(xn)) return;
        T* gx = grad_buffer(*xn);
        for (std::size_t l = 0; l < L; ++l) {
            for (std::size_t oy = 0; oy < Ho; ++oy) {
                const auto [y0, y1] = adaptive_bin(oy, H, Ho);
                for (std::size_t ox = 0; ox < Wo; ++ox) {
                    const auto [x0, x1] = adaptive_bin(ox, W, Wo);
                    const T g = on->grad[(l * Ho + oy) * Wo + ox] / static_cast<T>((y1 - y0) * (x1 - x0));
                    for (std::size_t i = y0; i < y1; ++i) {
                        for (std::size_t j = x0; j < x1; ++j) gx[(l * H + i) * W + j] += g;
                    }
                }
            }
        }
    });
    return out;
}

template <class T>
std::vector<T> softmax(std::span<const T> logits) {
    std::vector<T> p(logits.begin(), logits.end());
    if (p.empty()) return p;
    const T mx = *std::max_element(p.begin(), p.end());
    T total = T(0);
    for (auto& v : p) {
        v = std::exp(v - mx);
        total += v;
    }
    for (auto& v : p) v /= total;
    return p;
}

template <class T>
BasicTensor<T> softmax_cross_entropy(const BasicTensor<T>& logits, std::size_t label) {
    require_defined(logits, "softmax_cross_entropy");
    const std::size_t n = logits.numel();
    if (label >= n) {
        throw ShapeError("softmax_cross_entropy: label " + std::to_string(label) + " out of range for " +
                         std::to_string(n) + " classes");
    }
    auto ld = logits.data();
    const T mx = *std::max_element(ld.begin(), ld.end());
    T total = T(0);
    for (T v : ld) total += std::exp(v - mx);
    const T loss = std::log(total) + mx - ld[label];
    auto out = BasicTensor<T>::scalar(loss);
    auto* tape = recording_tape({&logits});
    NodePtr<T> ln = logits.node(), on = out.node();
    finish(tape, "softmax_cross_entropy", {ln.get()}, out, [ln, on, label] {
        if (on->grad.empty() || !wants_grad(ln)) return;
        const T g = on->grad[0];
        auto p = softmax<T>(ln->data);
        T* gl = grad_buffer(*ln);
        for (std::size_t i = 0; i < p.size(); ++i) gl[i] += g * (p[i] - (i == label ? T(1) : T(0)));
    });
    return out;
}

template <class T>
BasicTensor<T> select0(const BasicTensor<T>& x, std::size_t index) {
    require_defined(x, "select0");
    Shape rest(x.shape().begin() + 1, x.shape().end());
    if (rest.empty()) rest = {1};
    return reshape(slice(x, 0, index, index + 1), rest);
}

template <class T>
BasicTensor<T> stack(const std::vector<BasicTensor<T>>& parts) {
    if (parts.empty()) throw ShapeError("stack: no inputs");
    std::vector<BasicTensor<T>> views;
    views.reserve(parts.size());
    for (const auto& p : parts) {
        require_defined(p, "stack");
        Shape s = p.shape();
        s.insert(s.begin(), 1);
        views.push_back(reshape(p, s));
    }
    return concat(views, 0);
}

template <class T>
BasicTensor<T> custom_unary(const BasicTensor<T>& x, std::vector<T> forward_values, const char* name,
                            std::function<void(std::span<const T>, std::span<const T>, std::span<T>)> backward) {
    require_defined(x, name);
    BasicTensor<T> out(x.shape(), std::move(forward_values));
    auto* tape = recording_tape({&x});
    NodePtr<T> xn = x.node(), on = out.node();
    finish(tape, name, {xn.get()}, out, [xn, on, backward] {
        if (on->grad.empty() || !wants_grad(xn)) return;
        backward(xn->data, on->grad, std::span<T>(grad_buffer(*xn), xn->data.size()));
    });
    return out;
}

#define FSV_INSTANTIATE_OPS(T)                                                                            \
    template BasicTensor<T> matmul(const BasicTensor<T>&, const BasicTensor<T>&);                         \
    template BasicTensor<T> add(const BasicTensor<T>&, const BasicTensor<T>&);                            \
    template BasicTensor<T> sub(const BasicTensor<T>&, const BasicTensor<T>&);                            \
    template BasicTensor<T> mul(const BasicTensor<T>&, const BasicTensor<T>&);                            \
    template BasicTensor<T> scale(const BasicTensor<T>&, T);                                              \
    template BasicTensor<T> square(const BasicTensor<T>&);                                                \
    template BasicTensor<T> relu(const BasicTensor<T>&);                                                  \
    template BasicTensor<T> sigmoid(const BasicTensor<T>&);                                               \
    template BasicTensor<T> tanh(const BasicTensor<T>&);                                                  \
    template BasicTensor<T> sum(const BasicTensor<T>&);                                                   \
    template BasicTensor<T> mean(const BasicTensor<T>&, std::size_t);                                     \
    template BasicTensor<T> reshape(const BasicTensor<T>&, Shape);                                        \
    template BasicTensor<T> concat(const std::vector<BasicTensor<T>>&, std::size_t);                      \
    template BasicTensor<T> slice(const BasicTensor<T>&, std::size_t, std::size_t, std::size_t);          \
    template BasicTensor<T> transpose01(const BasicTensor<T>&);                                           \
    template BasicTensor<T> squared_distance(const BasicTensor<T>&, const BasicTensor<T>&);               \
    template BasicTensor<T> conv2d(const BasicTensor<T>&, const BasicTensor<T>&, const BasicTensor<T>&,   \
                                   Pair, Pair);                                                           \
    template BasicTensor<T> conv3d(const BasicTensor<T>&, const BasicTensor<T>&, const BasicTensor<T>&,   \
                                   Triple, Triple);                                                       \
    template BasicTensor<T> avg_pool2d(const BasicTensor<T>&, Pair, Pair);                                \
    template BasicTensor<T> adaptive_avg_pool2d(const BasicTensor<T>&, Pair);                             \
    template BasicTensor<T> softmax_cross_entropy(const BasicTensor<T>&, std::size_t);                    \
    template std::vector<T> softmax(std::span<const T>);                                                  \
    template BasicTensor<T> select0(const BasicTensor<T>&, std::size_t);                                  \
    template BasicTensor<T> stack(const std::vector<BasicTensor<T>>&);                                    \
    template BasicTensor<T> custom_unary(const BasicTensor<T>&, std::vector<T>, const char*,              \
                                         std::function<void(std::span<const T>, std::span<const T>,       \
                                                            std::span<T>)>);

FSV_INSTANTIATE_OPS(float)
FSV_INSTANTIATE_OPS(double)

}  // namespace fsv::dc
