#pragma once

#include <cstring>
#include <initializer_list>
#include <memory>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "sabr/error.hpp"

namespace sabr {

using Shape = std::vector<int>;

inline size_t numel(const Shape& s) {
    size_t n = 1;
    for (int d : s) n *= static_cast<size_t>(d);
    return n;
}

inline std::string shape_str(const Shape& s) {
    std::ostringstream os;
    os << '[';
    for (size_t i = 0; i < s.size(); ++i) os << (i ? "x" : "") << s[i];
    os << ']';
    return os.str();
}

// Dense tensor: shape plus a contiguous row-major buffer. The buffer is
// shared, so copies are shallow; all ops allocate fresh outputs and never
// write through an input, which keeps shared views safe.
template <typename T>
class Tensor {
public:
    Tensor() = default;

    explicit Tensor(Shape shape) : shape_(std::move(shape)), size_(numel(shape_)) {
        for (int d : shape_)
            if (d < 0) throw ShapeError("negative extent in shape " + shape_str(shape_));
        data_ = std::shared_ptr<T[]>(new T[size_]());
    }

    Tensor(Shape shape, std::initializer_list<T> vals) : Tensor(std::move(shape)) {
        if (vals.size() != size_) throw ShapeError("initializer size does not match " + shape_str(shape_));
        std::copy(vals.begin(), vals.end(), data_.get());
    }

    static Tensor full(Shape shape, T v) {
        Tensor t(std::move(shape));
        std::fill(t.data(), t.data() + t.size(), v);
        return t;
    }

    static Tensor zeros_like(const Tensor& o) { return Tensor(o.shape()); }

    const Shape& shape() const { return shape_; }
    size_t size() const { return size_; }
    bool empty() const { return size_ == 0; }
    int dim(int i) const { return shape_[static_cast<size_t>(i)]; }
    int rank() const { return static_cast<int>(shape_.size()); }

    T* data() { return data_.get(); }
    const T* data() const { return data_.get(); }

    T& operator[](size_t i) { return data_[i]; }
    const T& operator[](size_t i) const { return data_[i]; }

    T& at(std::initializer_list<int> idx) { return data_[flat(idx)]; }
    const T& at(std::initializer_list<int> idx) const { return data_[flat(idx)]; }

    // Deep copy.
    Tensor clone() const {
        Tensor t(shape_);
        std::memcpy(t.data(), data(), size_ * sizeof(T));
        return t;
    }

    // Same buffer, new shape (element count must match).
    Tensor reshaped(Shape s) const {
        if (numel(s) != size_)
            throw ShapeError("reshape " + shape_str(shape_) + " -> " + shape_str(s) + " changes element count");
        Tensor t;
        t.shape_ = std::move(s);
        t.size_ = size_;
        t.data_ = data_;
        return t;
    }

    template <typename U>
    Tensor<U> cast() const {
        Tensor<U> t(shape_);
        for (size_t i = 0; i < size_; ++i) t.data()[i] = static_cast<U>(data_[i]);
        return t;
    }

private:
    size_t flat(std::initializer_list<int> idx) const {
        size_t off = 0, stride = 1;
        const int* id = idx.begin();
        for (int k = static_cast<int>(shape_.size()) - 1; k >= 0; --k) {
            off += static_cast<size_t>(id[k]) * stride;
            stride *= static_cast<size_t>(shape_[static_cast<size_t>(k)]);
        }
        return off;
    }

    Shape shape_;
    size_t size_ = 0;
    std::shared_ptr<T[]> data_;
};

template <typename T>
void require_same_shape(const Tensor<T>& a, const Tensor<T>& b, const char* what) {
    if (a.shape() != b.shape())
        throw ShapeError(std::string(what) + ": shapes " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
}

}  // namespace sabr
