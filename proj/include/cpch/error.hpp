#pragma once

#include <stdexcept>
#include <string>

namespace cpch {

// Mirrors cpch_status in cpch.h; values are part of the C ABI.
enum class ErrorCode : int {
  kInvalidArgument = 1,
  kSingularInput = 2,
  kUnsupportedSurface = 3,
  kDomainTooSmall = 4,
  kOutOfDomain = 5,
  kMissingNeighbor = 6,
  kStencilOutOfBand = 7,
  kDimensionMismatch = 8,
  kFactorizationFailed = 9,
  kNotConverged = 10,
  kDiverged = 11,
  kConfig = 12,
  kIo = 13,
};

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace cpch
