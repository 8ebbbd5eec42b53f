#include "featrestore/binio.hpp"

#include <zlib.h>

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

namespace featrestore {

static_assert(std::endian::native == std::endian::little, "little-endian host required");

std::uint32_t crc32(std::span<const std::uint8_t> bytes) {
    uLong c = ::crc32(0L, Z_NULL, 0);
    return static_cast<std::uint32_t>(::crc32(c, bytes.data(), static_cast<uInt>(bytes.size())));
}

namespace {

template <class T>
void put(std::vector<std::uint8_t>& buf, T v) {
    std::uint8_t raw[sizeof(T)];
    std::memcpy(raw, &v, sizeof(T));
    buf.insert(buf.end(), raw, raw + sizeof(T));
}

}  // namespace

void ByteWriter::u16(std::uint16_t v) { put(buf_, v); }
void ByteWriter::u32(std::uint32_t v) { put(buf_, v); }
void ByteWriter::u64(std::uint64_t v) { put(buf_, v); }
void ByteWriter::f32(float v) { put(buf_, v); }
void ByteWriter::f64(double v) { put(buf_, v); }

void ByteWriter::str(const std::string& s) {
    u32(static_cast<std::uint32_t>(s.size()));
    buf_.insert(buf_.end(), s.begin(), s.end());
}

void ByteReader::need(std::size_t n) {
    if (remaining() < n) {
        throw FormatError(context_ + ": truncated (needed " + std::to_string(n) + " bytes at offset " +
                          std::to_string(pos_) + ")");
    }
}

namespace {

template <class T>
T get(std::span<const std::uint8_t> data, std::size_t& pos) {
    T v;
    std::memcpy(&v, data.data() + pos, sizeof(T));
    pos += sizeof(T);
    return v;
}

}  // namespace

std::uint8_t ByteReader::u8() { need(1); return data_[pos_++]; }
std::uint16_t ByteReader::u16() { need(2); return get<std::uint16_t>(data_, pos_); }
std::uint32_t ByteReader::u32() { need(4); return get<std::uint32_t>(data_, pos_); }
std::uint64_t ByteReader::u64() { need(8); return get<std::uint64_t>(data_, pos_); }
float ByteReader::f32() { need(4); return get<float>(data_, pos_); }
double ByteReader::f64() { need(8); return get<double>(data_, pos_); }

std::span<const std::uint8_t> ByteReader::bytes(std::size_t n) {
    need(n);
    auto s = data_.subspan(pos_, n);
    pos_ += n;
    return s;
}

std::string ByteReader::str() {
    const std::uint32_t n = u32();
    auto b = bytes(n);
    return std::string(b.begin(), b.end());
}

void write_section(ByteWriter& out, const std::string& name, const std::vector<std::uint8_t>& payload) {
    out.str(name);
    out.u64(payload.size());
    out.bytes(payload);
    out.u32(crc32(payload));
}

std::vector<std::uint8_t> read_section(ByteReader& in, const std::string& expected_name) {
    const std::string name = in.str();
    if (name != expected_name) {
        throw FormatError("expected section '" + expected_name + "', found '" + name + "'");
    }
    const std::uint64_t len = in.u64();
    if (len > in.remaining()) {
        throw FormatError("section '" + name + "': truncated payload");
    }
    auto payload = in.bytes(static_cast<std::size_t>(len));
    const std::uint32_t stored = in.u32();
    if (stored != crc32(payload)) {
        throw FormatError("section '" + name + "': CRC mismatch");
    }
    return {payload.begin(), payload.end()};
}

std::vector<std::uint8_t> read_file(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) {
        throw std::runtime_error("cannot open " + path);
    }
    return {std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>()};
}

void write_file(const std::string& path, const std::vector<std::uint8_t>& bytes) {
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) {
        throw std::runtime_error("cannot write " + path);
    }
    f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!f) {
        throw std::runtime_error("write failed for " + path);
    }
}

}  // namespace featrestore
