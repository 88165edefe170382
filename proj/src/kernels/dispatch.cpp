#include <atomic>

#include "scopekit/kernels/kernels.hpp"

namespace scopekit::kernels {

#if defined(SCOPEKIT_HAVE_AVX2)
const KernelTable& avx2KernelTable();
#endif

namespace {

bool cpuHasAvx2() {
#if defined(SCOPEKIT_HAVE_AVX2) && (defined(__GNUC__) || defined(__clang__))
    __builtin_cpu_init();
    return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
    return false;
#endif
}

const KernelTable& bestAvailable() {
    if (const auto* t = avx2Kernels()) return *t;
    return scalarKernels();
}

std::atomic<const KernelTable*> g_override{nullptr};

}  // namespace

const KernelTable* avx2Kernels() {
#if defined(SCOPEKIT_HAVE_AVX2)
    static const bool supported = cpuHasAvx2();
    return supported ? &avx2KernelTable() : nullptr;
#else
    return nullptr;
#endif
}

const KernelTable& active() {
    if (const auto* forced = g_override.load(std::memory_order_acquire)) return *forced;
    static const KernelTable& best = bestAvailable();
    return best;
}

bool selectBackend(Backend backend) {
    const KernelTable* table = backend == Backend::Scalar ? &scalarKernels() : avx2Kernels();
    if (table == nullptr) return false;
    g_override.store(table, std::memory_order_release);
    return true;
}

void resetBackend() { g_override.store(nullptr, std::memory_order_release); }

}  // namespace scopekit::kernels
