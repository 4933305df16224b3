#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string_view>
#include <variant>
#include <vector>

#include "suplid/error.hpp"

namespace suplid {

enum class DType : std::uint8_t { f32 = 1, u8 = 2, u16 = 3, i32 = 4 };

std::string_view dtype_name(DType dtype);
std::size_t dtype_size(DType dtype);

template <typename T>
constexpr DType dtype_of();
template <> constexpr DType dtype_of<float>() { return DType::f32; }
template <> constexpr DType dtype_of<std::uint8_t>() { return DType::u8; }
template <> constexpr DType dtype_of<std::uint16_t>() { return DType::u16; }
template <> constexpr DType dtype_of<std::int32_t>() { return DType::i32; }

using Shape = std::vector<std::size_t>;

inline constexpr std::size_t kMaxTensorDims = 4;

// Dense row-major array, last axis fastest. Shape has 1..4 dims, each >= 1.
class Tensor {
public:
    using Storage = std::variant<std::vector<float>, std::vector<std::uint8_t>,
                                 std::vector<std::uint16_t>, std::vector<std::int32_t>>;

    Tensor();

    // Zero-filled tensor.
    Tensor(DType dtype, Shape shape);

    template <typename T>
    Tensor(Shape shape, std::vector<T> values) : shape_(std::move(shape)), storage_(std::move(values)) {
        validate();
    }

    template <typename T>
    static Tensor zeros(Shape shape) {
        return Tensor(dtype_of<T>(), std::move(shape));
    }

    DType dtype() const;
    const Shape& shape() const { return shape_; }
    std::size_t ndim() const { return shape_.size(); }
    std::size_t dim(std::size_t axis) const { return shape_.at(axis); }
    std::size_t size() const;
    std::size_t byte_size() const { return size() * dtype_size(dtype()); }

    template <typename T>
    std::span<const T> data() const {
        const auto* v = std::get_if<std::vector<T>>(&storage_);
        if (!v) throw ValidationError(wrong_dtype_message(dtype_of<T>()));
        return *v;
    }

    template <typename T>
    std::span<T> data() {
        auto* v = std::get_if<std::vector<T>>(&storage_);
        if (!v) throw ValidationError(wrong_dtype_message(dtype_of<T>()));
        return *v;
    }

    // Raw element bytes in host order.
    std::span<const std::byte> bytes() const;

    // Throws ValidationError unless dtype and rank/shape match. A zero entry in
    // `expected` accepts any extent on that axis.
    void expect(DType dtype, const Shape& expected, std::string_view what) const;

private:
    void validate() const;
    std::string wrong_dtype_message(DType requested) const;

    Shape shape_;
    Storage storage_;
};

// Same dtype, same shape, identical element bytes.
bool bitwise_equal(const Tensor& a, const Tensor& b);

std::string shape_string(const Shape& shape);

}  // namespace suplid
