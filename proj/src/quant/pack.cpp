#include "moek/quant/pack.hpp"

#include "moek/error.hpp"
#include "moek/numkit/matrix_io.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <string>

namespace moek::quant {

namespace {

constexpr char kMagic[4] = {'M', 'O', 'E', 'Q'};

void put(std::vector<std::byte>& out, std::uint64_t v, int width)
{
    for (int i = 0; i < width; ++i)
        out.push_back(static_cast<std::byte>((v >> (8 * i)) & 0xffu));
}

std::uint64_t get(std::span<const std::byte> in, std::size_t at, int width)
{
    std::uint64_t v = 0;
    for (int i = 0; i < width; ++i)
        v |= static_cast<std::uint64_t>(in[at + i]) << (8 * i);
    return v;
}

std::size_t code_bytes(std::size_t count, int bits) { return (count * static_cast<std::size_t>(bits) + 7) / 8; }

} // namespace

std::string_view to_string(DeviceTarget t) { return t == DeviceTarget::cpu_fp ? "cpu_fp" : "gpu_int"; }

DeviceTarget parse_target(std::string_view s)
{
    if (s == "cpu_fp" || s == "cpu")
        return DeviceTarget::cpu_fp;
    if (s == "gpu_int" || s == "gpu")
        return DeviceTarget::gpu_int;
    throw ConfigError("unknown device target '" + std::string(s) + "' (expected cpu_fp or gpu_int)");
}

std::size_t packed_size(std::size_t rows, std::size_t cols, int bits, std::size_t groups, DeviceTarget target)
{
    if (target == DeviceTarget::cpu_fp)
        return numkit::encoded_size(rows, cols, numkit::Dtype::float32);
    return kPackedIntHeaderBytes + groups * kPackedIntGroupBytes + code_bytes(rows * cols, bits);
}

PackedExpert precision_pack(const QuantizedMatrix& q, DeviceTarget target)
{
    q.validate();
    PackedExpert out;
    out.target = target;
    if (target == DeviceTarget::cpu_fp) {
        out.bytes = numkit::encode_matrix(dequantize(q), numkit::Dtype::float32);
        return out;
    }

    auto& b = out.bytes;
    b.reserve(packed_size(q.rows, q.cols, q.bits, q.params.size(), target));
    for (char c : kMagic)
        b.push_back(static_cast<std::byte>(c));
    put(b, q.rows, 4);
    put(b, q.cols, 4);
    put(b, static_cast<std::uint64_t>(q.bits), 4);
    put(b, static_cast<std::uint64_t>(q.granularity), 4);
    put(b, q.params.size(), 4);
    for (const auto& p : q.params) {
        put(b, std::bit_cast<std::uint64_t>(p.scale), 8);
        put(b, static_cast<std::uint32_t>(p.zero_point), 4);
    }
    const std::size_t start = b.size();
    b.resize(start + code_bytes(q.codes.size(), q.bits), std::byte{0});
    std::size_t bit = 0;
    for (std::uint8_t code : q.codes) {
        for (int k = 0; k < q.bits; ++k, ++bit)
            if (code & (1u << k))
                b[start + bit / 8] |= static_cast<std::byte>(1u << (bit % 8));
    }
    return out;
}

QuantizedMatrix unpack_int(const PackedExpert& p)
{
    if (p.target != DeviceTarget::gpu_int)
        throw ParseError("unpack_int: payload is not gpu_int");
    std::span<const std::byte> in = p.bytes;
    if (in.size() < kPackedIntHeaderBytes || std::memcmp(in.data(), kMagic, 4) != 0)
        throw ParseError("packed expert has a bad header");

    QuantizedMatrix q;
    q.rows = get(in, 4, 4);
    q.cols = get(in, 8, 4);
    q.bits = static_cast<int>(get(in, 12, 4));
    const auto gran = get(in, 16, 4);
    if (gran > static_cast<std::uint64_t>(Granularity::per_column))
        throw ParseError("packed expert has unknown granularity " + std::to_string(gran));
    q.granularity = static_cast<Granularity>(gran);
    const std::size_t groups = get(in, 20, 4);
    if (q.bits < 2 || q.bits > 8)
        throw ParseError("packed expert has invalid bit width " + std::to_string(q.bits));
    if (in.size() != packed_size(q.rows, q.cols, q.bits, groups, DeviceTarget::gpu_int))
        throw ParseError("packed expert size does not match its header");

    std::size_t at = kPackedIntHeaderBytes;
    for (std::size_t g = 0; g < groups; ++g) {
        QuantParams prm;
        prm.scale = std::bit_cast<double>(get(in, at, 8));
        prm.zero_point = static_cast<std::int32_t>(static_cast<std::uint32_t>(get(in, at + 8, 4)));
        q.params.push_back(prm);
        at += kPackedIntGroupBytes;
    }
    q.codes.assign(q.rows * q.cols, 0);
    std::size_t bit = 0;
    for (auto& code : q.codes) {
        unsigned v = 0;
        for (int k = 0; k < q.bits; ++k, ++bit)
            if (std::to_integer<unsigned>(in[at + bit / 8]) & (1u << (bit % 8)))
                v |= 1u << k;
        code = static_cast<std::uint8_t>(v);
    }
    try {
        q.validate();
    } catch (const DomainError& e) {
        throw ParseError(std::string("packed expert: ") + e.what());
    }
    return q;
}

Matrix unpack_fp(const PackedExpert& p)
{
    if (p.target != DeviceTarget::cpu_fp)
        throw ParseError("unpack_fp: payload is not cpu_fp");
    return numkit::decode_matrix(p.bytes);
}

} // namespace moek::quant
