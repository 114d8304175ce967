// Copyright 2026 The treebon Authors
// SPDX-License-Identifier: Apache-2.0

#include "treebon/kernels.hpp"

#include <cassert>
#include <cstdlib>
#include <string>

#include "kernels_impl.hpp"
#include "treebon/error.hpp"

namespace treebon::kernels {

std::string_view isa_name(Isa isa) noexcept {
    switch (isa) {
        case Isa::scalar: return "scalar";
        case Isa::avx2: return "avx2";
        case Isa::neon: return "neon";
    }
    return "unknown";
}

const KernelTable& scalar_table() noexcept {
    static const KernelTable table{Isa::scalar, detail::weighted_diff_scalar, detail::argmax_scalar,
                                   detail::count_token_scalar};
    return table;
}

const KernelTable* avx2_table() noexcept {
#if defined(TREEBON_HAVE_AVX2)
    static const KernelTable table{Isa::avx2, detail::weighted_diff_avx2, detail::argmax_avx2,
                                   detail::count_token_avx2};
    static const bool supported = __builtin_cpu_supports("avx2");
    return supported ? &table : nullptr;
#else
    return nullptr;
#endif
}

const KernelTable* neon_table() noexcept {
#if defined(TREEBON_HAVE_NEON)
    static const KernelTable table{Isa::neon, detail::weighted_diff_neon, detail::argmax_neon,
                                   detail::count_token_neon};
    return &table;
#else
    return nullptr;
#endif
}

std::vector<const KernelTable*> available_tables() {
    std::vector<const KernelTable*> out{&scalar_table()};
    if (const auto* t = avx2_table()) out.push_back(t);
    if (const auto* t = neon_table()) out.push_back(t);
    return out;
}

namespace {

const KernelTable& select_table() noexcept {
    if (const char* forced = std::getenv("TREEBON_KERNELS")) {
        const std::string_view want(forced);
        for (const auto* t : available_tables()) {
            if (isa_name(t->isa) == want) return *t;
        }
        return scalar_table();
    }
    if (const auto* t = avx2_table()) return *t;
    if (const auto* t = neon_table()) return *t;
    return scalar_table();
}

}  // namespace

const KernelTable& active() noexcept {
    static const KernelTable& table = select_table();
    return table;
}

void weighted_diff(std::span<const double> a, std::span<const double> r, std::span<const double> w,
                   std::span<double> out) {
    if (w.size() != a.size() || out.size() != a.size() || (!r.empty() && r.size() != a.size())) {
        throw Error("weighted_diff: length mismatch");
    }
    active().weighted_diff(a.data(), r.empty() ? nullptr : r.data(), w.data(), out.data(), a.size());
}

std::size_t argmax(std::span<const double> x) {
    if (x.empty()) throw Error("argmax of empty range");
    return active().argmax(x.data(), x.size());
}

std::size_t count_token(std::span<const std::int32_t> x, std::int32_t token) {
    return active().count_token(x.data(), x.size(), token);
}

}  // namespace treebon::kernels
