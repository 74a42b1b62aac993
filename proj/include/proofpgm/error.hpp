#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace proofpgm {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ParseError : public Error {
 public:
  ParseError(const std::string& what, std::size_t offset)
      : Error(what + " at byte " + std::to_string(offset)), offset_(offset) {}
  std::size_t offset() const noexcept { return offset_; }

 private:
  std::size_t offset_;
};

class StratificationError : public Error {
  using Error::Error;
};
class DimensionMismatch : public Error {
  using Error::Error;
};
class IndexOutOfRange : public Error {
  using Error::Error;
};
class TooLarge : public Error {
  using Error::Error;
};
class EmptyTheory : public Error {
  using Error::Error;
};
class MissingGold : public Error {
  using Error::Error;
};
class EmptyDataset : public Error {
  using Error::Error;
};
class ResampleExhausted : public Error {
  using Error::Error;
};
class IoError : public Error {
  using Error::Error;
};
class LengthMismatch : public Error {
  using Error::Error;
};
class IdMismatch : public Error {
  using Error::Error;
};

class SchemaError : public Error {
 public:
  SchemaError(const std::string& what, std::size_t line)
      : Error("line " + std::to_string(line) + ": " + what), line_(line) {}
  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

}  // namespace proofpgm
