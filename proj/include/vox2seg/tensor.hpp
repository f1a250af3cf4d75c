#ifndef VOX2SEG_TENSOR_HPP
#define VOX2SEG_TENSOR_HPP

#include <array>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <vector>

namespace vox2seg {

using Shape = std::vector<std::int64_t>;
using Vec3i = std::array<std::int64_t, 3>;

inline std::string shape_str(const Shape& s) {
    std::ostringstream os;
    os << "(";
    for (std::size_t i = 0; i < s.size(); ++i) os << (i ? "," : "") << s[i];
    os << ")";
    return os.str();
}

// validates before the product so a negative dimension can't turn into a
// huge unsigned allocation size
inline std::int64_t shape_numel(const Shape& s) {
    std::int64_t n = 1;
    for (auto d : s) {
        if (d < 0) throw std::invalid_argument("Tensor: negative dimension in " + shape_str(s));
        n *= d;
    }
    return n;
}

/// Dense row-major N-d array. The last axis is contiguous; volumes use
/// (C,X,Y,Z) or (N,C,X,Y,Z) with Z fastest.
template <typename T>
class Tensor {
public:
    Tensor() = default;
    explicit Tensor(Shape shape, T fill = T{})
        : shape_(std::move(shape)), data_(static_cast<std::size_t>(shape_numel(shape_)), fill) {}

    static Tensor zeros_like(const Tensor& other) { return Tensor(other.shape_); }

    const Shape& shape() const { return shape_; }
    std::int64_t rank() const { return static_cast<std::int64_t>(shape_.size()); }
    std::int64_t dim(std::int64_t i) const { return shape_[static_cast<std::size_t>(i)]; }
    std::int64_t numel() const { return static_cast<std::int64_t>(data_.size()); }
    bool empty() const { return data_.empty(); }

    T* data() { return data_.data(); }
    const T* data() const { return data_.data(); }
    std::vector<T>& storage() { return data_; }
    const std::vector<T>& storage() const { return data_; }

    T& operator[](std::int64_t i) { return data_[static_cast<std::size_t>(i)]; }
    const T& operator[](std::int64_t i) const { return data_[static_cast<std::size_t>(i)]; }

    T& at3(std::int64_t x, std::int64_t y, std::int64_t z) {
        return data_[static_cast<std::size_t>((x * shape_[1] + y) * shape_[2] + z)];
    }
    const T& at3(std::int64_t x, std::int64_t y, std::int64_t z) const {
        return data_[static_cast<std::size_t>((x * shape_[1] + y) * shape_[2] + z)];
    }
    T& at4(std::int64_t c, std::int64_t x, std::int64_t y, std::int64_t z) {
        return data_[static_cast<std::size_t>(((c * shape_[1] + x) * shape_[2] + y) * shape_[3] + z)];
    }
    const T& at4(std::int64_t c, std::int64_t x, std::int64_t y, std::int64_t z) const {
        return data_[static_cast<std::size_t>(((c * shape_[1] + x) * shape_[2] + y) * shape_[3] + z)];
    }
    T& at5(std::int64_t n, std::int64_t c, std::int64_t x, std::int64_t y, std::int64_t z) {
        return data_[static_cast<std::size_t>(
            (((n * shape_[1] + c) * shape_[2] + x) * shape_[3] + y) * shape_[4] + z)];
    }
    const T& at5(std::int64_t n, std::int64_t c, std::int64_t x, std::int64_t y, std::int64_t z) const {
        return data_[static_cast<std::size_t>(
            (((n * shape_[1] + c) * shape_[2] + x) * shape_[3] + y) * shape_[4] + z)];
    }

    void fill(T v) { std::fill(data_.begin(), data_.end(), v); }

    bool same_shape(const Tensor& o) const { return shape_ == o.shape_; }

    /// Reinterpret as a new shape with the same element count.
    Tensor reshaped(Shape s) const {
        if (shape_numel(s) != numel())
            throw std::invalid_argument("Tensor::reshaped: element count mismatch " + shape_str(shape_) +
                                        " -> " + shape_str(s));
        Tensor out;
        out.shape_ = std::move(s);
        out.data_ = data_;
        return out;
    }

    bool all_finite() const {
        for (const T& v : data_)
            if (!std::isfinite(static_cast<double>(v))) return false;
        return true;
    }

private:
    Shape shape_;
    std::vector<T> data_;
};

template <typename T>
void check_same_shape(const Tensor<T>& a, const Tensor<T>& b, const char* what) {
    if (!a.same_shape(b))
        throw std::invalid_argument(std::string(what) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                                    shape_str(b.shape()));
}

}  // namespace vox2seg

#endif  // VOX2SEG_TENSOR_HPP
