#pragma once

#include "moek/quant/quantizer.hpp"

#include <cstddef>
#include <span>
#include <string_view>
#include <vector>

namespace moek::quant {

/// Where an expert's weights will live. CPU copies are dequantized once to
/// float32; GPU copies keep the integer codes.
enum class DeviceTarget { cpu_fp, gpu_int };

std::string_view to_string(DeviceTarget t);
DeviceTarget parse_target(std::string_view s);

struct PackedExpert
{
    DeviceTarget target = DeviceTarget::gpu_int;
    std::vector<std::byte> bytes;

    std::size_t byte_size() const noexcept { return bytes.size(); }
};

// gpu_int layout (little-endian):
//   "MOEQ" | u32 rows | u32 cols | u32 bits | u32 granularity | u32 groups
//   groups x (f64 scale, i32 zero_point)
//   ceil(rows * cols * bits / 8) bytes of codes, bit-packed LSB first
// cpu_fp layout: the float32 binary matrix format of the dequantized weights.
inline constexpr std::size_t kPackedIntHeaderBytes = 24;
inline constexpr std::size_t kPackedIntGroupBytes = 12;

/// Size precision_pack would produce, for feeding the transfer-cost model.
std::size_t packed_size(std::size_t rows, std::size_t cols, int bits, std::size_t groups, DeviceTarget target);

PackedExpert precision_pack(const QuantizedMatrix& q, DeviceTarget target);

/// Inverse of precision_pack for gpu_int payloads. Throws ParseError.
QuantizedMatrix unpack_int(const PackedExpert& p);

/// Float weights carried by a cpu_fp payload. Throws ParseError.
Matrix unpack_fp(const PackedExpert& p);

} // namespace moek::quant
