#pragma once

#include <stdexcept>
#include <string>

namespace ibnn {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

#define IBNN_DEFINE_ERROR(Name)          \
  class Name : public Error {            \
   public:                               \
    using Error::Error;                  \
  };

IBNN_DEFINE_ERROR(DimensionMismatch)
IBNN_DEFINE_ERROR(NotSymmetric)
IBNN_DEFINE_ERROR(NotPositiveDefinite)
IBNN_DEFINE_ERROR(NonConvergence)
IBNN_DEFINE_ERROR(NonFiniteLoss)
IBNN_DEFINE_ERROR(UnsupportedPosterior)
IBNN_DEFINE_ERROR(ArchitectureUnsupported)
IBNN_DEFINE_ERROR(RegionAssumptionViolated)
IBNN_DEFINE_ERROR(EmptyRegion)
IBNN_DEFINE_ERROR(MissingValue)
IBNN_DEFINE_ERROR(ConfigError)
IBNN_DEFINE_ERROR(FormatError)

#undef IBNN_DEFINE_ERROR

/// CSV parse failure; `row` and `column` are 1-based data positions
/// (the header row is not counted).
class ParseError : public Error {
 public:
  ParseError(const std::string& what, std::size_t row, std::size_t column)
      : Error(what), row_(row), column_(column) {}

  std::size_t row() const { return row_; }
  std::size_t column() const { return column_; }

 private:
  std::size_t row_;
  std::size_t column_;
};

}  // namespace ibnn
