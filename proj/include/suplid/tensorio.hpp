#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <string_view>

#include "suplid/tensor.hpp"

namespace suplid::io {

// SLTF layout, all multi-byte fields little-endian:
//   0..3  "SLTF"
//   4..5  version (u16) = 1
//   6     dtype code (u8): 1=f32 2=u8 3=u16 4=i32
//   7     ndim (u8), 1..4
//   8..   ndim x u32 dimension sizes
//   then the row-major payload, last axis fastest
inline constexpr std::string_view kTensorMagic = "SLTF";
inline constexpr std::uint16_t kTensorVersion = 1;

std::size_t write_tensor(const Tensor& tensor, std::ostream& out);
Tensor read_tensor(std::istream& in);

// Binary P6 (u8 [H, W, 3]) and P5 (u8 [H, W]), maxval 255.
Tensor read_ppm(std::istream& in);
Tensor read_pgm(std::istream& in);
std::size_t write_ppm(const Tensor& rgb, std::ostream& out);
std::size_t write_pgm(const Tensor& gray, std::ostream& out);

// Path helpers. Writes go to a temporary sibling and are renamed into place.
Tensor load_tensor(const std::filesystem::path& path);
void save_tensor(const Tensor& tensor, const std::filesystem::path& path);
Tensor load_image(const std::filesystem::path& path);  // .ppm
// .pgm or .slt (u8 [H, W]).
Tensor load_mask(const std::filesystem::path& path);
void save_ppm(const Tensor& rgb, const std::filesystem::path& path);
void save_pgm(const Tensor& gray, const std::filesystem::path& path);

std::string read_file(const std::filesystem::path& path);
void write_file_atomic(const std::filesystem::path& path, std::string_view contents);

}  // namespace suplid::io
