#pragma once

#include <cstddef>
#include <initializer_list>
#include <new>
#include <span>
#include <string>
#include <vector>

namespace sthdr {

using Real = double;
using Shape = std::vector<int>;

// Storage starts on a cache line. Vectorized reductions peel a prefix that
// depends on the start address, so a fixed alignment keeps sums bit-stable
// from run to run (needed for bit-identical resume).
template <class T, std::size_t Align = 64>
struct AlignedAllocator {
    using value_type = T;
    template <class U>
    struct rebind {
        using other = AlignedAllocator<U, Align>;
    };
    AlignedAllocator() noexcept = default;
    template <class U>
    AlignedAllocator(const AlignedAllocator<U, Align>&) noexcept {}
    T* allocate(std::size_t n) { return static_cast<T*>(::operator new(n * sizeof(T), std::align_val_t{Align})); }
    void deallocate(T* p, std::size_t) noexcept { ::operator delete(p, std::align_val_t{Align}); }
    template <class U>
    bool operator==(const AlignedAllocator<U, Align>&) const noexcept { return true; }
};

using Buffer = std::vector<Real, AlignedAllocator<Real>>;

std::string to_string(const Shape& shape);
std::size_t shape_numel(const Shape& shape);

// Dense row-major tensor. Image-like tensors use the C×H×W layout.
class Tensor {
public:
    Tensor() = default;
    explicit Tensor(Shape shape, Real fill = Real(0));
    Tensor(Shape shape, std::vector<Real> data);

    static Tensor chw(int c, int h, int w, Real fill = Real(0)) { return Tensor({c, h, w}, fill); }
    static Tensor scalar(Real v) { return Tensor({1}, v); }

    const Shape& shape() const noexcept { return shape_; }
    int rank() const noexcept { return static_cast<int>(shape_.size()); }
    int dim(int i) const { return shape_.at(static_cast<std::size_t>(i)); }
    std::size_t size() const noexcept { return data_.size(); }
    bool empty() const noexcept { return data_.empty(); }

    // C×H×W accessors; valid only for rank-3 tensors.
    int channels() const { return dim(0); }
    int height() const { return dim(1); }
    int width() const { return dim(2); }
    std::size_t plane() const { return static_cast<std::size_t>(dim(1)) * static_cast<std::size_t>(dim(2)); }

    Real& at(int c, int y, int x) { return data_[(static_cast<std::size_t>(c) * dim(1) + y) * dim(2) + x]; }
    Real at(int c, int y, int x) const { return data_[(static_cast<std::size_t>(c) * dim(1) + y) * dim(2) + x]; }

    Real& operator[](std::size_t i) { return data_[i]; }
    Real operator[](std::size_t i) const { return data_[i]; }

    std::span<Real> data() noexcept { return data_; }
    std::span<const Real> data() const noexcept { return data_; }
    Real* ptr() noexcept { return data_.data(); }
    const Real* ptr() const noexcept { return data_.data(); }

    Real item() const;
    void fill(Real v);
    Tensor reshaped(Shape shape) const;

    bool same_shape(const Tensor& other) const noexcept { return shape_ == other.shape_; }
    friend bool operator==(const Tensor& a, const Tensor& b) = default;

private:
    Shape shape_;
    Buffer data_;
};

void require_chw(const Tensor& t, const char* what);
void require_same_shape(const Tensor& a, const Tensor& b, const char* what);

Real max_abs_diff(const Tensor& a, const Tensor& b);
bool all_finite(const Tensor& t);

// Channel slice [begin, end) of a C×H×W tensor.
Tensor slice_channels(const Tensor& t, int begin, int end);
Tensor concat_channels(std::initializer_list<const Tensor*> parts);

} // namespace sthdr
