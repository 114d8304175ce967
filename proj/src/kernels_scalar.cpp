// Copyright 2026 The treebon Authors
// SPDX-License-Identifier: Apache-2.0

#include "kernels_impl.hpp"

namespace treebon::kernels::detail {

void weighted_diff_scalar(const double* a, const double* r, const double* w, double* out, std::size_t n) {
    if (r == nullptr) {
        for (std::size_t i = 0; i < n; ++i) out[i] = w[i] * a[i];
        return;
    }
    for (std::size_t i = 0; i < n; ++i) out[i] = w[i] * (a[i] - r[i]);
}

std::size_t argmax_scalar(const double* x, std::size_t n) {
    std::size_t best = 0;
    for (std::size_t i = 1; i < n; ++i) {
        if (x[i] > x[best]) best = i;
    }
    return best;
}

std::size_t count_token_scalar(const std::int32_t* x, std::size_t n, std::int32_t token) {
    std::size_t c = 0;
    for (std::size_t i = 0; i < n; ++i) c += x[i] == token;
    return c;
}

}  // namespace treebon::kernels::detail
