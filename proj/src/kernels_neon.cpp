// Copyright 2026 The treebon Authors
// SPDX-License-Identifier: Apache-2.0

#include <arm_neon.h>

#include "kernels_impl.hpp"

namespace treebon::kernels::detail {

void weighted_diff_neon(const double* a, const double* r, const double* w, double* out, std::size_t n) {
    std::size_t i = 0;
    if (r == nullptr) {
        for (; i + 2 <= n; i += 2) vst1q_f64(out + i, vmulq_f64(vld1q_f64(w + i), vld1q_f64(a + i)));
        for (; i < n; ++i) out[i] = w[i] * a[i];
        return;
    }
    for (; i + 2 <= n; i += 2) {
        const float64x2_t d = vsubq_f64(vld1q_f64(a + i), vld1q_f64(r + i));
        vst1q_f64(out + i, vmulq_f64(vld1q_f64(w + i), d));
    }
    for (; i < n; ++i) out[i] = w[i] * (a[i] - r[i]);
}

std::size_t argmax_neon(const double* x, std::size_t n) {
    if (n < 4) return argmax_scalar(x, n);

    float64x2_t best = vld1q_f64(x);
    const double first_idx[2] = {0.0, 1.0};
    float64x2_t best_idx = vld1q_f64(first_idx);
    float64x2_t idx = best_idx;
    const float64x2_t step = vdupq_n_f64(2.0);
    std::size_t i = 2;
    for (; i + 2 <= n; i += 2) {
        idx = vaddq_f64(idx, step);
        const float64x2_t v = vld1q_f64(x + i);
        const uint64x2_t gt = vcgtq_f64(v, best);
        best = vbslq_f64(gt, v, best);
        best_idx = vbslq_f64(gt, idx, best_idx);
    }

    double top = vgetq_lane_f64(best, 0);
    auto arg = static_cast<std::size_t>(vgetq_lane_f64(best_idx, 0));
    const double v1 = vgetq_lane_f64(best, 1);
    const auto i1 = static_cast<std::size_t>(vgetq_lane_f64(best_idx, 1));
    if (v1 > top || (v1 == top && i1 < arg)) {
        top = v1;
        arg = i1;
    }
    for (; i < n; ++i) {
        if (x[i] > top) {
            top = x[i];
            arg = i;
        }
    }
    return arg;
}

std::size_t count_token_neon(const std::int32_t* x, std::size_t n, std::int32_t token) {
    const int32x4_t t = vdupq_n_s32(token);
    std::size_t c = 0;
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        // Matching lanes are all-ones; shift to 1 and add across.
        const uint32x4_t eq = vceqq_s32(vld1q_s32(x + i), t);
        c += vaddvq_u32(vshrq_n_u32(eq, 31));
    }
    for (; i < n; ++i) c += x[i] == token;
    return c;
}

}  // namespace treebon::kernels::detail
