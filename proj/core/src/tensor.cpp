#include "sthdr/tensor.hpp"

#include "sthdr/errors.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <numeric>

namespace sthdr {

std::string to_string(const Shape& shape) {
    std::string out = "[";
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) out += "x";
        out += std::to_string(shape[i]);
    }
    return out + "]";
}

std::size_t shape_numel(const Shape& shape) {
    std::size_t n = 1;
    for (int d : shape) {
        if (d < 0) throw ShapeError("negative dimension in shape " + to_string(shape));
        n *= static_cast<std::size_t>(d);
    }
    return n;
}

Tensor::Tensor(Shape shape, Real fill) : shape_(std::move(shape)), data_(shape_numel(shape_), fill) {}

Tensor::Tensor(Shape shape, std::vector<Real> data) : shape_(std::move(shape)), data_(data.begin(), data.end()) {
    if (data_.size() != shape_numel(shape_))
        throw ShapeError("data size " + std::to_string(data_.size()) + " does not match shape " + to_string(shape_));
}

Real Tensor::item() const {
    if (data_.size() != 1) throw ShapeError("item() on tensor of shape " + to_string(shape_));
    return data_[0];
}

void Tensor::fill(Real v) { std::fill(data_.begin(), data_.end(), v); }

Tensor Tensor::reshaped(Shape shape) const {
    if (shape_numel(shape) != data_.size())
        throw ShapeError("cannot reshape " + to_string(shape_) + " to " + to_string(shape));
    Tensor out = *this;
    out.shape_ = std::move(shape);
    return out;
}

void require_chw(const Tensor& t, const char* what) {
    if (t.rank() != 3) throw ShapeError(std::string(what) + ": expected C×H×W tensor, got " + to_string(t.shape()));
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* what) {
    if (!a.same_shape(b))
        throw ShapeError(std::string(what) + ": shape mismatch " + to_string(a.shape()) + " vs " + to_string(b.shape()));
}

Real max_abs_diff(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "max_abs_diff");
    Real m = 0;
    for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
    return m;
}

bool all_finite(const Tensor& t) {
    return std::all_of(t.data().begin(), t.data().end(), [](Real v) { return std::isfinite(v); });
}

Tensor slice_channels(const Tensor& t, int begin, int end) {
    require_chw(t, "slice_channels");
    if (begin < 0 || end > t.channels() || begin >= end)
        throw ShapeError("slice_channels: bad range [" + std::to_string(begin) + "," + std::to_string(end) +
                         ") for " + to_string(t.shape()));
    Tensor out = Tensor::chw(end - begin, t.height(), t.width());
    std::memcpy(out.ptr(), t.ptr() + static_cast<std::size_t>(begin) * t.plane(), out.size() * sizeof(Real));
    return out;
}

Tensor concat_channels(std::initializer_list<const Tensor*> parts) {
    int c = 0;
    const Tensor* first = *parts.begin();
    for (const Tensor* p : parts) {
        require_chw(*p, "concat_channels");
        if (p->height() != first->height() || p->width() != first->width())
            throw ShapeError("concat_channels: spatial mismatch " + to_string(p->shape()) + " vs " +
                             to_string(first->shape()));
        c += p->channels();
    }
    Tensor out = Tensor::chw(c, first->height(), first->width());
    Real* dst = out.ptr();
    for (const Tensor* p : parts) {
        std::memcpy(dst, p->ptr(), p->size() * sizeof(Real));
        dst += p->size();
    }
    return out;
}

} // namespace sthdr
