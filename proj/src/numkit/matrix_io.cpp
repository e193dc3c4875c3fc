#include "moek/numkit/matrix_io.hpp"

#include "moek/error.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <limits>
#include <string>

namespace moek::numkit {

namespace {

constexpr char kMagic[4] = {'M', 'O', 'E', 'K'};

void put_u32(std::vector<std::byte>& out, std::uint32_t v)
{
    for (int i = 0; i < 4; ++i)
        out.push_back(static_cast<std::byte>((v >> (8 * i)) & 0xffu));
}

void put_u64(std::vector<std::byte>& out, std::uint64_t v)
{
    for (int i = 0; i < 8; ++i)
        out.push_back(static_cast<std::byte>((v >> (8 * i)) & 0xffu));
}

std::uint32_t get_u32(std::span<const std::byte> in, std::size_t at)
{
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i)
        v |= static_cast<std::uint32_t>(in[at + i]) << (8 * i);
    return v;
}

std::uint64_t get_u64(std::span<const std::byte> in, std::size_t at)
{
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i)
        v |= static_cast<std::uint64_t>(in[at + i]) << (8 * i);
    return v;
}

std::size_t element_bytes(Dtype dtype) { return dtype == Dtype::float32 ? 4 : 8; }

} // namespace

std::size_t encoded_size(std::size_t rows, std::size_t cols, Dtype dtype)
{
    return kMatrixHeaderBytes + rows * cols * element_bytes(dtype);
}

std::vector<std::byte> encode_matrix(const Matrix& m, Dtype dtype)
{
    constexpr auto u32max = std::numeric_limits<std::uint32_t>::max();
    if (m.rows() > u32max || m.cols() > u32max)
        throw ShapeError("matrix too large for the binary format");

    std::vector<std::byte> out;
    out.reserve(encoded_size(m.rows(), m.cols(), dtype));
    for (char c : kMagic)
        out.push_back(static_cast<std::byte>(c));
    put_u32(out, static_cast<std::uint32_t>(m.rows()));
    put_u32(out, static_cast<std::uint32_t>(m.cols()));
    put_u32(out, static_cast<std::uint32_t>(dtype));
    for (double v : m.data()) {
        if (dtype == Dtype::float32)
            put_u32(out, std::bit_cast<std::uint32_t>(static_cast<float>(v)));
        else
            put_u64(out, std::bit_cast<std::uint64_t>(v));
    }
    return out;
}

Matrix decode_matrix(std::span<const std::byte> bytes)
{
    if (bytes.size() < kMatrixHeaderBytes)
        throw ParseError("matrix file truncated: " + std::to_string(bytes.size()) + " bytes, header needs 16");
    if (std::memcmp(bytes.data(), kMagic, 4) != 0)
        throw ParseError("matrix file has bad magic (expected \"MOEK\")");
    const std::size_t rows = get_u32(bytes, 4);
    const std::size_t cols = get_u32(bytes, 8);
    const std::uint32_t tag = get_u32(bytes, 12);
    if (tag > 1)
        throw ParseError("matrix file has unknown dtype tag " + std::to_string(tag));
    const auto dtype = static_cast<Dtype>(tag);
    const std::size_t expected = encoded_size(rows, cols, dtype);
    if (bytes.size() != expected)
        throw ParseError("matrix file is " + std::to_string(bytes.size()) + " bytes, header implies " +
                         std::to_string(expected));

    std::vector<double> data(rows * cols);
    std::size_t at = kMatrixHeaderBytes;
    for (double& v : data) {
        if (dtype == Dtype::float32) {
            v = std::bit_cast<float>(get_u32(bytes, at));
            at += 4;
        } else {
            v = std::bit_cast<double>(get_u64(bytes, at));
            at += 8;
        }
        if (!std::isfinite(v))
            throw ParseError("matrix file contains a non-finite value");
    }
    return Matrix(rows, cols, std::move(data));
}

void write_matrix(const std::filesystem::path& path, const Matrix& m, Dtype dtype)
{
    const auto bytes = encode_matrix(m, dtype);
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out)
        throw IoError("cannot open " + path.string() + " for writing");
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out)
        throw IoError("failed writing " + path.string());
}

Matrix read_matrix(const std::filesystem::path& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw IoError("cannot open " + path.string());
    std::vector<char> raw((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    try {
        return decode_matrix(std::as_bytes(std::span(raw)));
    } catch (const ParseError& e) {
        throw ParseError(path.string() + ": " + e.what());
    }
}

} // namespace moek::numkit
