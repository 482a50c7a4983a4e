#include "estan/kernels.hpp"

#include <cstdlib>
#include <cstring>
#include <string>

#include "estan/error.hpp"

namespace estan::kernels {

namespace {

const KernelOps* g_active = nullptr;

const KernelOps* detect() {
    const char* want = std::getenv("ESTAN_KERNELS");
#if defined(__x86_64__) || defined(_M_X64)
    if (want != nullptr && std::strcmp(want, "scalar") == 0) return &scalar::kOps;
    if (want != nullptr && std::strcmp(want, "avx2") == 0) {
        if (!avx2_supported())
            throw ValueError("ESTAN_KERNELS=avx2 requested but CPU lacks AVX2");
        return &avx2::kOps;
    }
    if (want != nullptr && std::strcmp(want, "auto") != 0)
        throw ValueError(std::string("unknown ESTAN_KERNELS value: ") + want);
    return avx2_supported() ? &avx2::kOps : &scalar::kOps;
#else
    if (want != nullptr && std::strcmp(want, "scalar") != 0 &&
        std::strcmp(want, "auto") != 0)
        throw ValueError(std::string("unsupported ESTAN_KERNELS value: ") + want);
    return &scalar::kOps;
#endif
}

}  // namespace

bool avx2_supported() {
#if defined(__x86_64__) || defined(_M_X64)
    return __builtin_cpu_supports("avx2") != 0;
#else
    return false;
#endif
}

const KernelOps& ops() {
    if (g_active == nullptr) g_active = detect();
    return *g_active;
}

void force_backend(const char* name) {
    if (std::strcmp(name, "scalar") == 0) {
        g_active = &scalar::kOps;
        return;
    }
#if defined(__x86_64__) || defined(_M_X64)
    if (std::strcmp(name, "avx2") == 0) {
        if (!avx2_supported()) throw ValueError("CPU lacks AVX2");
        g_active = &avx2::kOps;
        return;
    }
#endif
    if (std::strcmp(name, "auto") == 0) {
        g_active = detect();
        return;
    }
    throw ValueError(std::string("unknown kernel backend: ") + name);
}

}  // namespace estan::kernels
