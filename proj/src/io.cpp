#include "aarr/io.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <limits>

namespace aarr::io {

FormatError::FormatError(const std::string& what, std::size_t offset)
    : std::runtime_error(what + " (at byte " + std::to_string(offset) + ")"), offset_(offset) {}

std::size_t dtype_size(DType dtype) {
    switch (dtype) {
        case DType::f32: return 4;
        case DType::f64: return 8;
        case DType::u8: return 1;
        case DType::u32: return 4;
    }
    throw FormatError("unknown dtype", 8);
}

namespace {

constexpr char kMagic[4] = {'A', 'A', 'R', 'R'};
constexpr std::size_t kFixedHeader = 16;

void put_u32(std::vector<std::byte>& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::byte>((v >> (8 * i)) & 0xFFu));
}

void put_u64(std::vector<std::byte>& out, std::uint64_t v) {
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::byte>((v >> (8 * i)) & 0xFFu));
}

std::uint32_t get_u32(std::span<const std::byte> b, std::size_t at) {
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b[at + i]) << (8 * i);
    return v;
}

std::uint64_t get_u64(std::span<const std::byte> b, std::size_t at) {
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[at + i]) << (8 * i);
    return v;
}

void check_shape(const RawArray& a) {
    if (a.shape.empty() || a.shape.size() > kMaxDims) throw std::invalid_argument("aarr: bad ndim");
    if (shape_numel(a.shape) * dtype_size(a.dtype) != a.payload.size()) {
        throw std::invalid_argument("aarr: payload size does not match shape " + shape_str(a.shape));
    }
}

}  // namespace

std::vector<std::byte> encode(const RawArray& array) {
    check_shape(array);
    std::vector<std::byte> out;
    out.reserve(kFixedHeader + 4 * array.shape.size() + array.payload.size());
    for (char c : kMagic) out.push_back(static_cast<std::byte>(c));
    put_u32(out, kFormatVersion);
    out.push_back(static_cast<std::byte>(array.dtype));
    out.insert(out.end(), 3, std::byte{0});
    put_u32(out, static_cast<std::uint32_t>(array.shape.size()));
    for (auto e : array.shape) {
        if (e > std::numeric_limits<std::uint32_t>::max()) throw std::invalid_argument("aarr: extent too large");
        put_u32(out, static_cast<std::uint32_t>(e));
    }
    out.insert(out.end(), array.payload.begin(), array.payload.end());
    return out;
}

RawArray decode(std::span<const std::byte> bytes) {
    if (bytes.size() < kFixedHeader) throw FormatError("truncated header", bytes.size());
    if (std::memcmp(bytes.data(), kMagic, 4) != 0) throw FormatError("bad magic", 0);
    const std::uint32_t version = get_u32(bytes, 4);
    if (version != kFormatVersion) throw FormatError("unsupported version " + std::to_string(version), 4);
    const auto code = static_cast<std::uint8_t>(bytes[8]);
    if (code > 3) throw FormatError("unknown dtype code " + std::to_string(code), 8);
    RawArray out;
    out.dtype = static_cast<DType>(code);
    const std::uint32_t ndim = get_u32(bytes, 12);
    if (ndim == 0 || ndim > kMaxDims) throw FormatError("bad ndim " + std::to_string(ndim), 12);
    const std::size_t header = kFixedHeader + 4 * static_cast<std::size_t>(ndim);
    if (bytes.size() < header) throw FormatError("truncated extents", bytes.size());

    // Extents and their product must fit the payload size computation.
    std::size_t count = 1;
    for (std::uint32_t d = 0; d < ndim; ++d) {
        const std::size_t at = kFixedHeader + 4 * d;
        const std::uint32_t e = get_u32(bytes, at);
        if (e == 0) throw FormatError("zero extent", at);
        const std::size_t limit = std::numeric_limits<std::size_t>::max() / dtype_size(out.dtype);
        if (count > limit / e) throw FormatError("dimension overflow", at);
        count *= e;
        out.shape.push_back(e);
    }
    const std::size_t need = count * dtype_size(out.dtype);
    if (bytes.size() - header < need) {
        throw FormatError("truncated payload: need " + std::to_string(need) + " bytes, have " +
                              std::to_string(bytes.size() - header),
                          bytes.size());
    }
    if (bytes.size() - header > need) throw FormatError("trailing bytes after payload", header + need);
    out.payload.assign(bytes.begin() + static_cast<std::ptrdiff_t>(header), bytes.end());
    return out;
}

std::vector<std::byte> read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw FormatError("cannot open " + path.string(), 0);
    in.seekg(0, std::ios::end);
    const auto size = static_cast<std::size_t>(in.tellg());
    in.seekg(0);
    std::vector<std::byte> buf(size);
    in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(size));
    if (!in) throw FormatError("short read on " + path.string(), static_cast<std::size_t>(in.gcount()));
    return buf;
}

void write_file(const std::filesystem::path& path, std::span<const std::byte> bytes) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw FormatError("cannot create " + path.string(), 0);
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw FormatError("write failed on " + path.string(), 0);
}

RawArray to_raw(const Tensor& t, DType dtype) {
    RawArray raw;
    raw.dtype = dtype;
    raw.shape = t.shape();
    std::vector<std::byte>& p = raw.payload;
    p.reserve(t.numel() * dtype_size(dtype));
    switch (dtype) {
        case DType::f64:
            for (double x : t.data()) put_u64(p, std::bit_cast<std::uint64_t>(x));
            break;
        case DType::f32:
            for (double x : t.data()) put_u32(p, std::bit_cast<std::uint32_t>(static_cast<float>(x)));
            break;
        default: throw std::invalid_argument("to_raw: tensors are stored as f32 or f64");
    }
    return raw;
}

Tensor to_tensor(const RawArray& raw) {
    const std::size_t n = shape_numel(raw.shape);
    std::vector<double> data(n);
    std::span<const std::byte> p = raw.payload;
    switch (raw.dtype) {
        case DType::f64:
            for (std::size_t i = 0; i < n; ++i) data[i] = std::bit_cast<double>(get_u64(p, 8 * i));
            break;
        case DType::f32:
            for (std::size_t i = 0; i < n; ++i) data[i] = std::bit_cast<float>(get_u32(p, 4 * i));
            break;
        case DType::u8:
            for (std::size_t i = 0; i < n; ++i) data[i] = static_cast<double>(p[i]);
            break;
        case DType::u32:
            for (std::size_t i = 0; i < n; ++i) data[i] = get_u32(p, 4 * i);
            break;
    }
    return Tensor(raw.shape, std::move(data));
}

void write_tensor(const std::filesystem::path& path, const Tensor& t, DType dtype) {
    write_file(path, encode(to_raw(t, dtype)));
}

Tensor read_tensor(const std::filesystem::path& path) { return to_tensor(decode(read_file(path))); }

void write_u8(const std::filesystem::path& path, std::span<const std::uint8_t> values) {
    RawArray raw{DType::u8, {values.size()}, {}};
    for (auto v : values) raw.payload.push_back(static_cast<std::byte>(v));
    write_file(path, encode(raw));
}

std::vector<std::uint8_t> read_u8(const std::filesystem::path& path) {
    RawArray raw = decode(read_file(path));
    if (raw.dtype != DType::u8) throw FormatError(path.string() + ": expected u8 array", 8);
    std::vector<std::uint8_t> out(raw.payload.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = static_cast<std::uint8_t>(raw.payload[i]);
    return out;
}

void write_u32(const std::filesystem::path& path, std::span<const std::uint32_t> values) {
    RawArray raw{DType::u32, {values.size()}, {}};
    for (auto v : values) put_u32(raw.payload, v);
    write_file(path, encode(raw));
}

std::vector<std::uint32_t> read_u32(const std::filesystem::path& path) {
    RawArray raw = decode(read_file(path));
    if (raw.dtype != DType::u32) throw FormatError(path.string() + ": expected u32 array", 8);
    std::vector<std::uint32_t> out(shape_numel(raw.shape));
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = get_u32(raw.payload, 4 * i);
    return out;
}

}  // namespace aarr::io
