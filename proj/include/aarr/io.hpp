#pragma once

// .aarr binary array files.
//
// Layout (little-endian):
//   0   magic "AARR"
//   4   u32 version (1)
//   8   u8 dtype (0=f32, 1=f64, 2=u8, 3=u32), u8 reserved x3
//   12  u32 ndim
//   16  ndim x u32 extents
//   ..  payload, row-major

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "aarr/tensor.hpp"

namespace aarr::io {

inline constexpr std::uint32_t kFormatVersion = 1;
inline constexpr std::uint32_t kMaxDims = 8;

enum class DType : std::uint8_t { f32 = 0, f64 = 1, u8 = 2, u32 = 3 };

std::size_t dtype_size(DType dtype);

/// Malformed or unreadable file; offset is the byte position of the problem.
class FormatError : public std::runtime_error {
public:
    FormatError(const std::string& what, std::size_t offset);
    std::size_t offset() const noexcept { return offset_; }

private:
    std::size_t offset_;
};

/// A decoded array before conversion to a typed container.
struct RawArray {
    DType dtype = DType::f64;
    Shape shape;
    std::vector<std::byte> payload;
};

std::vector<std::byte> encode(const RawArray& array);
RawArray decode(std::span<const std::byte> bytes);

std::vector<std::byte> read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, std::span<const std::byte> bytes);

RawArray to_raw(const Tensor& t, DType dtype = DType::f64);
Tensor to_tensor(const RawArray& raw);

void write_tensor(const std::filesystem::path& path, const Tensor& t, DType dtype = DType::f64);
Tensor read_tensor(const std::filesystem::path& path);

void write_u8(const std::filesystem::path& path, std::span<const std::uint8_t> values);
std::vector<std::uint8_t> read_u8(const std::filesystem::path& path);

void write_u32(const std::filesystem::path& path, std::span<const std::uint32_t> values);
std::vector<std::uint32_t> read_u32(const std::filesystem::path& path);

}  // namespace aarr::io
