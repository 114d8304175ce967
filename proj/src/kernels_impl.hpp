// Copyright 2026 The treebon Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>

namespace treebon::kernels::detail {

void weighted_diff_scalar(const double* a, const double* r, const double* w, double* out, std::size_t n);
std::size_t argmax_scalar(const double* x, std::size_t n);
std::size_t count_token_scalar(const std::int32_t* x, std::size_t n, std::int32_t token);

#if defined(TREEBON_HAVE_AVX2)
void weighted_diff_avx2(const double* a, const double* r, const double* w, double* out, std::size_t n);
std::size_t argmax_avx2(const double* x, std::size_t n);
std::size_t count_token_avx2(const std::int32_t* x, std::size_t n, std::int32_t token);
#endif

#if defined(TREEBON_HAVE_NEON)
void weighted_diff_neon(const double* a, const double* r, const double* w, double* out, std::size_t n);
std::size_t argmax_neon(const double* x, std::size_t n);
std::size_t count_token_neon(const std::int32_t* x, std::size_t n, std::int32_t token);
#endif

}  // namespace treebon::kernels::detail
