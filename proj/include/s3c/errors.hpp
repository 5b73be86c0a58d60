#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace s3c {

class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class ZeroVectorError : public Error {
public:
    ZeroVectorError() : Error("vector has (near-)zero Euclidean norm") {}
    explicit ZeroVectorError(const std::string& what) : Error(what) {}
};

class ShapeMismatchError : public Error {
public:
    using Error::Error;
};

// I/O format violation; carries the byte offset at which it was detected.
class FormatError : public Error {
public:
    FormatError(const std::string& what, std::size_t offset)
        : Error(what + " (byte offset " + std::to_string(offset) + ")"), offset_(offset) {}
    std::size_t offset() const { return offset_; }

private:
    std::size_t offset_ = 0;
};

class NonSquareError : public Error {
public:
    using Error::Error;
};

class InsufficientClassesError : public Error {
public:
    using Error::Error;
};

class EmptyClassError : public Error {
public:
    using Error::Error;
};

class DuplicateClassError : public Error {
public:
    using Error::Error;
};

class UnknownClassError : public Error {
public:
    using Error::Error;
};

class MissingEmbeddingError : public Error {
public:
    using Error::Error;
};

class MissingPrototypesError : public Error {
public:
    using Error::Error;
};

class UnitMismatchError : public Error {
public:
    using Error::Error;
};

class StaleCacheError : public Error {
public:
    using Error::Error;
};

class ConfigError : public Error {
public:
    using Error::Error;
};

class MissingMetricsError : public Error {
public:
    using Error::Error;
};

}  // namespace s3c
