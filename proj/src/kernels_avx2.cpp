// Copyright 2026 The treebon Authors
// SPDX-License-Identifier: Apache-2.0

// Built with -mavx2 only; never reached unless the CPU reports AVX2.

#include <immintrin.h>

#include "kernels_impl.hpp"

namespace treebon::kernels::detail {

void weighted_diff_avx2(const double* a, const double* r, const double* w, double* out, std::size_t n) {
    std::size_t i = 0;
    if (r == nullptr) {
        for (; i + 4 <= n; i += 4) {
            _mm256_storeu_pd(out + i, _mm256_mul_pd(_mm256_loadu_pd(w + i), _mm256_loadu_pd(a + i)));
        }
        for (; i < n; ++i) out[i] = w[i] * a[i];
        return;
    }
    for (; i + 4 <= n; i += 4) {
        const __m256d d = _mm256_sub_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(r + i));
        _mm256_storeu_pd(out + i, _mm256_mul_pd(_mm256_loadu_pd(w + i), d));
    }
    for (; i < n; ++i) out[i] = w[i] * (a[i] - r[i]);
}

std::size_t argmax_avx2(const double* x, std::size_t n) {
    if (n < 8) return argmax_scalar(x, n);

    // Each lane keeps its first strict maximum; lane indices are exact in double.
    __m256d best = _mm256_loadu_pd(x);
    __m256d best_idx = _mm256_setr_pd(0.0, 1.0, 2.0, 3.0);
    __m256d idx = best_idx;
    const __m256d step = _mm256_set1_pd(4.0);
    std::size_t i = 4;
    for (; i + 4 <= n; i += 4) {
        idx = _mm256_add_pd(idx, step);
        const __m256d v = _mm256_loadu_pd(x + i);
        const __m256d gt = _mm256_cmp_pd(v, best, _CMP_GT_OQ);
        best = _mm256_blendv_pd(best, v, gt);
        best_idx = _mm256_blendv_pd(best_idx, idx, gt);
    }

    alignas(32) double vals[4];
    alignas(32) double ids[4];
    _mm256_store_pd(vals, best);
    _mm256_store_pd(ids, best_idx);
    std::size_t arg = static_cast<std::size_t>(ids[0]);
    double top = vals[0];
    for (int lane = 1; lane < 4; ++lane) {
        const auto lane_idx = static_cast<std::size_t>(ids[lane]);
        if (vals[lane] > top || (vals[lane] == top && lane_idx < arg)) {
            top = vals[lane];
            arg = lane_idx;
        }
    }
    for (; i < n; ++i) {
        if (x[i] > top) {
            top = x[i];
            arg = i;
        }
    }
    return arg;
}

std::size_t count_token_avx2(const std::int32_t* x, std::size_t n, std::int32_t token) {
    const __m256i t = _mm256_set1_epi32(token);
    std::size_t c = 0;
    std::size_t i = 0;
    for (; i + 8 <= n; i += 8) {
        const __m256i v = _mm256_loadu_si256(reinterpret_cast<const __m256i*>(x + i));
        const int mask = _mm256_movemask_ps(_mm256_castsi256_ps(_mm256_cmpeq_epi32(v, t)));
        c += static_cast<std::size_t>(__builtin_popcount(static_cast<unsigned>(mask)));
    }
    for (; i < n; ++i) c += x[i] == token;
    return c;
}

}  // namespace treebon::kernels::detail
