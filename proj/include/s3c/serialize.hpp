#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>

#include "s3c/errors.hpp"

namespace s3c {

// Little-endian binary encoding shared by the dataset, checkpoint and
// prototype file formats. Offsets are tracked so FormatError can report
// where a malformed file went wrong.

class BinaryWriter {
public:
    explicit BinaryWriter(std::ostream& out) : out_(out) {}

    void bytes(const void* data, std::size_t size);
    void u8(std::uint8_t value);
    void u16(std::uint16_t value);
    void u32(std::uint32_t value);
    void u64(std::uint64_t value);
    void f32(float value);
    void f64(double value);

    std::size_t offset() const { return offset_; }

private:
    std::ostream& out_;
    std::size_t offset_ = 0;
};

class BinaryReader {
public:
    explicit BinaryReader(std::istream& in) : in_(in) {}

    void bytes(void* data, std::size_t size);
    std::uint8_t u8();
    std::uint16_t u16();
    std::uint32_t u32();
    std::uint64_t u64();
    float f32();
    double f64();

    /// Reads 4 bytes and fails unless they match the expected tag.
    void expect_magic(const char (&magic)[5]);
    /// Fails unless the stream is exhausted (trailing garbage check).
    void expect_end();

    std::size_t offset() const { return offset_; }
    [[noreturn]] void fail(const std::string& what) const;

private:
    std::istream& in_;
    std::size_t offset_ = 0;
};

}  // namespace s3c
