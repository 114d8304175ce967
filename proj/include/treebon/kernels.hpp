// Copyright 2026 The treebon Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

// Data-parallel inner loops used by the reward scorers and selection.
//
// Every kernel has a scalar reference and optional AVX2 / NEON variants chosen
// at runtime. Variants must agree bit-for-bit with the scalar path, so only
// element-wise maps and exact scans live here; order-sensitive reductions
// (sums) stay sequential in reward.cpp.

#include <cstddef>
#include <cstdint>
#include <span>
#include <string_view>
#include <vector>

namespace treebon::kernels {

enum class Isa { scalar, avx2, neon };

std::string_view isa_name(Isa isa) noexcept;

struct KernelTable {
    Isa isa;
    // out[i] = w[i] * (a[i] - r[i]); r == nullptr means out[i] = w[i] * a[i].
    void (*weighted_diff)(const double* a, const double* r, const double* w, double* out, std::size_t n);
    // First index of the maximum. n > 0, no NaNs.
    std::size_t (*argmax)(const double* x, std::size_t n);
    std::size_t (*count_token)(const std::int32_t* x, std::size_t n, std::int32_t token);
};

const KernelTable& scalar_table() noexcept;
/// nullptr when not compiled in or unsupported by this CPU.
const KernelTable* avx2_table() noexcept;
const KernelTable* neon_table() noexcept;

/// Variants usable on this machine, scalar first.
std::vector<const KernelTable*> available_tables();

/// Best available variant; TREEBON_KERNELS=scalar|avx2|neon overrides.
const KernelTable& active() noexcept;

void weighted_diff(std::span<const double> a, std::span<const double> r, std::span<const double> w,
                   std::span<double> out);
std::size_t argmax(std::span<const double> x);
std::size_t count_token(std::span<const std::int32_t> x, std::int32_t token);

}  // namespace treebon::kernels
