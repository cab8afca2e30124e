#pragma once

#include <cstddef>
#include <vector>

#include "fsv/diffcore/tensor.hpp"

// Differentiable operations. Each op validates shapes (ShapeError), checks
// that its forward result is finite (NumericError) and, when an input
// requires grad and a tape is active, records its backward rule.
namespace fsv::dc {

struct Pair {
    std::size_t h = 1;
    std::size_t w = 1;
};

struct Triple {
    std::size_t t = 1;
    std::size_t h = 1;
    std::size_t w = 1;
};

/// [m x p] * [p x n] -> [m x n]
template <class T>
BasicTensor<T> matmul(const BasicTensor<T>& a, const BasicTensor<T>& b);

/// Element-wise sum. `b` may also match a suffix of `a`'s shape, in which
/// case it is broadcast over the leading dimensions (row bias).
template <class T>
BasicTensor<T> add(const BasicTensor<T>& a, const BasicTensor<T>& b);

template <class T>
BasicTensor<T> sub(const BasicTensor<T>& a, const BasicTensor<T>& b);

/// Element-wise (Hadamard) product of equal shapes.
template <class T>
BasicTensor<T> mul(const BasicTensor<T>& a, const BasicTensor<T>& b);

template <class T>
BasicTensor<T> scale(const BasicTensor<T>& x, T factor);

template <class T>
BasicTensor<T> square(const BasicTensor<T>& x);

template <class T>
BasicTensor<T> relu(const BasicTensor<T>& x);

template <class T>
BasicTensor<T> sigmoid(const BasicTensor<T>& x);

template <class T>
BasicTensor<T> tanh(const BasicTensor<T>& x);

/// Sum of all elements, shape {1}.
template <class T>
BasicTensor<T> sum(const BasicTensor<T>& x);

/// Arithmetic mean along `axis`; the axis is removed (a 1-d input yields {1}).
template <class T>
BasicTensor<T> mean(const BasicTensor<T>& x, std::size_t axis);

template <class T>
BasicTensor<T> reshape(const BasicTensor<T>& x, Shape shape);

/// Concatenation along `axis`; all other dimensions must agree.
template <class T>
BasicTensor<T> concat(const std::vector<BasicTensor<T>>& parts, std::size_t axis);

/// Half-open range [begin, end) along `axis`; the axis is kept.
template <class T>
BasicTensor<T> slice(const BasicTensor<T>& x, std::size_t axis, std::size_t begin, std::size_t end);

/// Swaps the two leading axes: [A x B x ...] -> [B x A x ...].
template <class T>
BasicTensor<T> transpose01(const BasicTensor<T>& x);

/// Sum over all elements of (a - b)^2, shape {1}.
template <class T>
BasicTensor<T> squared_distance(const BasicTensor<T>& a, const BasicTensor<T>& b);

/// 2-d cross-correlation. input [C x H x W] or batched [B x C x H x W];
/// kernel [O x C x kh x kw]; optional bias [O].
template <class T>
BasicTensor<T> conv2d(const BasicTensor<T>& input, const BasicTensor<T>& kernel,
                      const BasicTensor<T>& bias, Pair stride = {1, 1}, Pair padding = {0, 0});

/// 3-d cross-correlation. input [C x T x H x W]; kernel [O x C x kt x kh x kw];
/// optional bias [O].
template <class T>
BasicTensor<T> conv3d(const BasicTensor<T>& input, const BasicTensor<T>& kernel,
                      const BasicTensor<T>& bias, Triple stride = {1, 1, 1},
                      Triple padding = {1, 1, 1});

/// Mean over sliding windows of the two trailing axes (no padding).
template <class T>
BasicTensor<T> avg_pool2d(const BasicTensor<T>& x, Pair window, Pair stride);

/// Partitions each trailing spatial axis into `out` near-equal contiguous
/// bins, bin i covering [floor(i*H/out), ceil((i+1)*H/out)).
template <class T>
BasicTensor<T> adaptive_avg_pool2d(const BasicTensor<T>& x, Pair out);

/// -log softmax(logits)[label], computed with max-subtraction.
template <class T>
BasicTensor<T> softmax_cross_entropy(const BasicTensor<T>& logits, std::size_t label);

/// Plain softmax of a value vector (not recorded).
template <class T>
std::vector<T> softmax(std::span<const T> logits);

/// x[index] along the leading axis with that axis removed.
template <class T>
BasicTensor<T> select0(const BasicTensor<T>& x, std::size_t index);

/// Stacks equally shaped tensors along a new leading axis.
template <class T>
BasicTensor<T> stack(const std::vector<BasicTensor<T>>& parts);

/// Applies `backward` as the gradient rule of an identity-shaped op computed
/// by the caller. Used for user-defined operations in tests and tools.
template <class T>
BasicTensor<T> custom_unary(const BasicTensor<T>& x, std::vector<T> forward_values, const char* name,
                            std::function<void(std::span<const T> x, std::span<const T> grad_out,
                                               std::span<T> grad_in)>
                                backward);

}  // namespace fsv::dc
