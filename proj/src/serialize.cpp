#include "s3c/serialize.hpp"

#include <cstring>
#include <istream>
#include <ostream>

namespace s3c {

namespace {

template <typename T>
std::uint64_t to_bits(T value) {
    static_assert(sizeof(T) <= 8);
    if constexpr (std::is_floating_point_v<T>) {
        std::conditional_t<sizeof(T) == 4, std::uint32_t, std::uint64_t> bits;
        std::memcpy(&bits, &value, sizeof(T));
        return bits;
    } else {
        return static_cast<std::uint64_t>(value);
    }
}

}  // namespace

void BinaryWriter::bytes(const void* data, std::size_t size) {
    out_.write(static_cast<const char*>(data), static_cast<std::streamsize>(size));
    offset_ += size;
}

void BinaryWriter::u8(std::uint8_t value) { bytes(&value, 1); }

void BinaryWriter::u16(std::uint16_t value) {
    unsigned char buf[2] = {static_cast<unsigned char>(value & 0xff),
                            static_cast<unsigned char>(value >> 8)};
    bytes(buf, 2);
}

void BinaryWriter::u32(std::uint32_t value) {
    unsigned char buf[4];
    for (int i = 0; i < 4; ++i) buf[i] = static_cast<unsigned char>(value >> (8 * i));
    bytes(buf, 4);
}

void BinaryWriter::u64(std::uint64_t value) {
    unsigned char buf[8];
    for (int i = 0; i < 8; ++i) buf[i] = static_cast<unsigned char>(value >> (8 * i));
    bytes(buf, 8);
}

void BinaryWriter::f32(float value) { u32(static_cast<std::uint32_t>(to_bits(value))); }

void BinaryWriter::f64(double value) { u64(to_bits(value)); }

void BinaryReader::bytes(void* data, std::size_t size) {
    in_.read(static_cast<char*>(data), static_cast<std::streamsize>(size));
    if (static_cast<std::size_t>(in_.gcount()) != size) {
        fail("truncated file");
    }
    offset_ += size;
}

std::uint8_t BinaryReader::u8() {
    std::uint8_t value;
    bytes(&value, 1);
    return value;
}

std::uint16_t BinaryReader::u16() {
    unsigned char buf[2];
    bytes(buf, 2);
    return static_cast<std::uint16_t>(buf[0] | (buf[1] << 8));
}

std::uint32_t BinaryReader::u32() {
    unsigned char buf[4];
    bytes(buf, 4);
    std::uint32_t value = 0;
    for (int i = 3; i >= 0; --i) value = (value << 8) | buf[i];
    return value;
}

std::uint64_t BinaryReader::u64() {
    unsigned char buf[8];
    bytes(buf, 8);
    std::uint64_t value = 0;
    for (int i = 7; i >= 0; --i) value = (value << 8) | buf[i];
    return value;
}

float BinaryReader::f32() {
    const std::uint32_t bits = u32();
    float value;
    std::memcpy(&value, &bits, 4);
    return value;
}

double BinaryReader::f64() {
    const std::uint64_t bits = u64();
    double value;
    std::memcpy(&value, &bits, 8);
    return value;
}

void BinaryReader::expect_magic(const char (&magic)[5]) {
    char buf[4];
    const std::size_t at = offset_;
    bytes(buf, 4);
    if (std::memcmp(buf, magic, 4) != 0) {
        throw FormatError(std::string("bad magic, expected \"") + magic + "\"", at);
    }
}

void BinaryReader::expect_end() {
    in_.peek();
    if (!in_.eof()) {
        fail("trailing bytes after payload");
    }
}

void BinaryReader::fail(const std::string& what) const {
    throw FormatError(what, offset_);
}

}  // namespace s3c
