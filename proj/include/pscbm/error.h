#ifndef PSCBM_ERROR_H_
#define PSCBM_ERROR_H_

#include <cstdint>
#include <stdexcept>
#include <string>

namespace pscbm {

enum class ErrorCode {
  kInvalidArgument,  // bad config or precondition violation
  kFormat,           // malformed input file contents
  kIo,               // file missing or unreadable/unwritable
  kNumeric,          // non-finite values during computation
  kRuntime,          // any other failure while running a stage
};

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(what), code_(code) {}

  ErrorCode code() const { return code_; }

 private:
  ErrorCode code_;
};

enum class LoadErrorKind {
  kBadMagic,
  kBadVersion,
  kZeroDimension,
  kTruncated,
  kNonFinite,
  kTrailingBytes,
};

// Raised by the EMB1 reader. offset() is the byte position of the problem.
class LoadError : public Error {
 public:
  LoadError(LoadErrorKind kind, std::uint64_t offset, const std::string& what)
      : Error(ErrorCode::kFormat, what), kind_(kind), offset_(offset) {}

  LoadErrorKind kind() const { return kind_; }
  std::uint64_t offset() const { return offset_; }

 private:
  LoadErrorKind kind_;
  std::uint64_t offset_;
};

inline Error invalid_argument(const std::string& what) {
  return Error(ErrorCode::kInvalidArgument, what);
}

}  // namespace pscbm

#endif  // PSCBM_ERROR_H_
