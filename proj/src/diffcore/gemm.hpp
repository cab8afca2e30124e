#pragma once

#include <cstddef>

#include <Eigen/Core>

namespace fsv::dc::detail {

/// C[m x n] (+)= op(A) * op(B), all row-major. op(A) is [m x k]; when
/// `trans_a` is set A is stored as [k x m]. Likewise for B.
template <class T>
void gemm(bool trans_a, bool trans_b, std::size_t m, std::size_t n, std::size_t k, const T* a,
          const T* b, T* c, bool accumulate) {
    using Mat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
    using CMap = Eigen::Map<const Mat>;
    const auto M = static_cast<Eigen::Index>(m);
    const auto N = static_cast<Eigen::Index>(n);
    const auto K = static_cast<Eigen::Index>(k);
    Eigen::Map<Mat> C(c, M, N);
    if (!accumulate) C.setZero();
    if (!trans_a && !trans_b) {
        C.noalias() += CMap(a, M, K) * CMap(b, K, N);
    } else if (trans_a && !trans_b) {
        C.noalias() += CMap(a, K, M).transpose() * CMap(b, K, N);
    } else if (!trans_a && trans_b) {
        C.noalias() += CMap(a, M, K) * CMap(b, N, K).transpose();
    } else {
        C.noalias() += CMap(a, K, M).transpose() * CMap(b, N, K).transpose();
    }
}

}  // namespace fsv::dc::detail
