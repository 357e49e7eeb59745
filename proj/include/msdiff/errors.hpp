#pragma once

#include <stdexcept>
#include <string>

namespace msdiff {

// Every failure the library reports derives from Error so callers can catch
// the whole family at once; the concrete type names the violated condition.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

#define MSDIFF_DECLARE_ERROR(Name)       \
  class Name : public Error {            \
   public:                               \
    using Error::Error;                  \
  }

MSDIFF_DECLARE_ERROR(DimensionMismatch);
MSDIFF_DECLARE_ERROR(InvalidDiffusionMatrix);
MSDIFF_DECLARE_ERROR(InvalidComposition);
MSDIFF_DECLARE_ERROR(InconsistentGradient);
MSDIFF_DECLARE_ERROR(SingularComposition);
MSDIFF_DECLARE_ERROR(DeltaOutOfRange);
MSDIFF_DECLARE_ERROR(DeltaNonpositive);
MSDIFF_DECLARE_ERROR(GridMismatch);
MSDIFF_DECLARE_ERROR(MeshMismatch);
MSDIFF_DECLARE_ERROR(EpsilonTooSmallForGrid);
MSDIFF_DECLARE_ERROR(CflViolation);
MSDIFF_DECLARE_ERROR(PositivityFailure);
MSDIFF_DECLARE_ERROR(FormatError);

#undef MSDIFF_DECLARE_ERROR

// Config errors carry the 1-based source line they refer to (0 = unknown).
class ParseError : public Error {
 public:
  ParseError(const std::string& what, int line)
      : Error("line " + std::to_string(line) + ": " + what), line_(line) {}
  int line() const { return line_; }

 private:
  int line_;
};

class ValidationError : public Error {
 public:
  ValidationError(std::string invariant, const std::string& what, int line)
      : Error("line " + std::to_string(line) + ": [" + invariant + "] " + what),
        invariant_(std::move(invariant)),
        line_(line) {}
  const std::string& invariant() const { return invariant_; }
  int line() const { return line_; }

 private:
  std::string invariant_;
  int line_;
};

}  // namespace msdiff
