#pragma once

// Little-endian byte buffers and CRC-checked, length-prefixed sections.

#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace featrestore {

class FormatError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

std::uint32_t crc32(std::span<const std::uint8_t> bytes);

class ByteWriter {
public:
    void u8(std::uint8_t v) { buf_.push_back(v); }
    void u16(std::uint16_t v);
    void u32(std::uint32_t v);
    void u64(std::uint64_t v);
    void f32(float v);
    void f64(double v);
    void bytes(std::span<const std::uint8_t> b) { buf_.insert(buf_.end(), b.begin(), b.end()); }
    void str(const std::string& s);  ///< u32 length + bytes

    const std::vector<std::uint8_t>& data() const { return buf_; }
    std::vector<std::uint8_t> take() { return std::move(buf_); }

private:
    std::vector<std::uint8_t> buf_;
};

class ByteReader {
public:
    ByteReader(std::span<const std::uint8_t> data, std::string context)
        : data_(data), context_(std::move(context)) {}

    std::uint8_t u8();
    std::uint16_t u16();
    std::uint32_t u32();
    std::uint64_t u64();
    float f32();
    double f64();
    std::span<const std::uint8_t> bytes(std::size_t n);
    std::string str();

    std::size_t remaining() const { return data_.size() - pos_; }
    std::size_t position() const { return pos_; }

private:
    void need(std::size_t n);

    std::span<const std::uint8_t> data_;
    std::size_t pos_ = 0;
    std::string context_;
};

/// Section layout: name (u32 len + bytes), payload length u64, payload, CRC32
/// of the payload.
void write_section(ByteWriter& out, const std::string& name, const std::vector<std::uint8_t>& payload);
/// Reads the next section, requiring the given name; verifies the CRC.
std::vector<std::uint8_t> read_section(ByteReader& in, const std::string& expected_name);

std::vector<std::uint8_t> read_file(const std::string& path);
void write_file(const std::string& path, const std::vector<std::uint8_t>& bytes);

}  // namespace featrestore
