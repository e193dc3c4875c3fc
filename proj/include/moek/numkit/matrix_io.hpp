#pragma once

#include "moek/numkit/matrix.hpp"

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

namespace moek::numkit {

// Binary matrix interchange format:
//
//   offset  size  field
//        0     4  magic "MOEK"
//        4     4  rows   (u32 little-endian)
//        8     4  cols   (u32 little-endian)
//       12     4  dtype  (u32 little-endian, 0 = float32, 1 = float64)
//       16     *  rows * cols values, row-major, little-endian IEEE-754
enum class Dtype : std::uint32_t { float32 = 0, float64 = 1 };

inline constexpr std::size_t kMatrixHeaderBytes = 16;

std::size_t encoded_size(std::size_t rows, std::size_t cols, Dtype dtype);

std::vector<std::byte> encode_matrix(const Matrix& m, Dtype dtype);
Matrix decode_matrix(std::span<const std::byte> bytes);

/// Writes m to path. Throws IoError if the file cannot be written.
void write_matrix(const std::filesystem::path& path, const Matrix& m, Dtype dtype = Dtype::float64);

/// Reads a matrix file. Throws IoError when the file is missing or unreadable
/// and ParseError when the contents are malformed.
Matrix read_matrix(const std::filesystem::path& path);

} // namespace moek::numkit
