#include "suplid/tensor.hpp"

#include <cstring>
#include <sstream>

namespace suplid {

std::string_view dtype_name(DType dtype) {
    switch (dtype) {
        case DType::f32: return "f32";
        case DType::u8: return "u8";
        case DType::u16: return "u16";
        case DType::i32: return "i32";
    }
    return "?";
}

std::size_t dtype_size(DType dtype) {
    switch (dtype) {
        case DType::f32: return 4;
        case DType::u8: return 1;
        case DType::u16: return 2;
        case DType::i32: return 4;
    }
    throw ValidationError("unknown dtype");
}

namespace {

std::size_t product(const Shape& shape) {
    std::size_t n = 1;
    for (auto d : shape) n *= d;
    return n;
}

void check_shape(const Shape& shape) {
    if (shape.empty() || shape.size() > kMaxTensorDims)
        throw ValidationError("tensor rank must be 1.." + std::to_string(kMaxTensorDims) + ", got " +
                              std::to_string(shape.size()));
    for (auto d : shape) {
        if (d == 0) throw ValidationError("tensor dimensions must be >= 1, got " + shape_string(shape));
    }
}

}  // namespace

Tensor::Tensor() : shape_{1}, storage_(std::vector<float>(1, 0.0f)) {}

Tensor::Tensor(DType dtype, Shape shape) : shape_(std::move(shape)) {
    check_shape(shape_);
    const std::size_t n = product(shape_);
    switch (dtype) {
        case DType::f32: storage_ = std::vector<float>(n, 0.0f); break;
        case DType::u8: storage_ = std::vector<std::uint8_t>(n, 0); break;
        case DType::u16: storage_ = std::vector<std::uint16_t>(n, 0); break;
        case DType::i32: storage_ = std::vector<std::int32_t>(n, 0); break;
    }
}

DType Tensor::dtype() const {
    return std::visit([](const auto& v) { return dtype_of<typename std::decay_t<decltype(v)>::value_type>(); },
                      storage_);
}

std::size_t Tensor::size() const {
    return std::visit([](const auto& v) { return v.size(); }, storage_);
}

std::span<const std::byte> Tensor::bytes() const {
    return std::visit([](const auto& v) { return std::as_bytes(std::span(v)); }, storage_);
}

void Tensor::validate() const {
    check_shape(shape_);
    if (product(shape_) != size())
        throw ValidationError("tensor shape " + shape_string(shape_) + " does not match " +
                              std::to_string(size()) + " elements");
}

void Tensor::expect(DType dtype, const Shape& expected, std::string_view what) const {
    bool ok = this->dtype() == dtype && shape_.size() == expected.size();
    for (std::size_t i = 0; ok && i < expected.size(); ++i) {
        if (expected[i] != 0 && expected[i] != shape_[i]) ok = false;
    }
    if (!ok) {
        std::ostringstream msg;
        msg << what << ": expected " << dtype_name(dtype) << " with " << expected.size() << " dims";
        msg << ", got " << dtype_name(this->dtype()) << ' ' << shape_string(shape_);
        throw ValidationError(msg.str());
    }
}

std::string Tensor::wrong_dtype_message(DType requested) const {
    return "tensor holds " + std::string(dtype_name(dtype())) + ", requested " + std::string(dtype_name(requested));
}

bool bitwise_equal(const Tensor& a, const Tensor& b) {
    if (a.dtype() != b.dtype() || a.shape() != b.shape()) return false;
    const auto x = a.bytes();
    const auto y = b.bytes();
    return x.size() == y.size() && std::memcmp(x.data(), y.data(), x.size()) == 0;
}

std::string shape_string(const Shape& shape) {
    std::string s = "[";
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) s += ",";
        s += std::to_string(shape[i]);
    }
    return s + "]";
}

}  // namespace suplid
