#pragma once

#include <cstdint>
#include <new>
#include <stdexcept>
#include <string>
#include <vector>

namespace vseg {

// All numerics run in double precision. The models trained here are small
// enough that the memory cost is irrelevant, and it keeps finite-difference
// gradient verification far away from round-off noise.
using real = double;

// Buffers handed to the linear-algebra kernels are kept at a fixed 64-byte
// alignment. SIMD kernels order their partial sums by where the pointer sits
// relative to a packet boundary, so letting the allocator pick addresses makes
// results depend on allocation history; pinning the alignment makes every
// forward/backward pass bit-reproducible.
template <typename T>
struct AlignedAllocator {
    using value_type = T;
    static constexpr std::align_val_t kAlign{64};

    AlignedAllocator() = default;
    template <typename U>
    AlignedAllocator(const AlignedAllocator<U>&) {}

    T* allocate(std::size_t n) {
        return static_cast<T*>(::operator new(n * sizeof(T), kAlign));
    }
    void deallocate(T* p, std::size_t) noexcept { ::operator delete(p, kAlign); }

    template <typename U>
    bool operator==(const AlignedAllocator<U>&) const {
        return true;
    }
    template <typename U>
    bool operator!=(const AlignedAllocator<U>&) const {
        return false;
    }
};

using RealVec = std::vector<real, AlignedAllocator<real>>;

struct VsegError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct ShapeError : VsegError {
    using VsegError::VsegError;
};

struct ConfigError : VsegError {
    using VsegError::VsegError;
};

struct IoError : VsegError {
    using VsegError::VsegError;
};

struct CheckpointError : VsegError {
    using VsegError::VsegError;
};

[[noreturn]] inline void fail(const std::string& msg) { throw VsegError(msg); }

template <typename E>
[[noreturn]] inline void fail(const std::string& msg) {
    throw E(msg);
}

inline void check(bool cond, const std::string& msg) {
    if (!cond) throw VsegError(msg);
}

inline void check_shape(bool cond, const std::string& msg) {
    if (!cond) throw ShapeError(msg);
}

}  // namespace vseg
