#pragma once

#include <stdexcept>
#include <string>

namespace lfi {

/// Base of every error raised by the toolkit. `name()` is the stable identifier
/// printed by the CLI on standard error.
class Error : public std::runtime_error {
 public:
  Error(std::string name, const std::string& what)
      : std::runtime_error(what), name_(std::move(name)) {}

  const std::string& name() const noexcept { return name_; }

  /// Numeric failures (divergence, exhausted budgets) map to a distinct exit code.
  virtual bool numeric() const noexcept { return false; }

 private:
  std::string name_;
};

class NumericError : public Error {
 public:
  using Error::Error;
  bool numeric() const noexcept override { return true; }
};

#define LFI_DEFINE_ERROR(Type, Base)                                   \
  class Type : public Base {                                           \
   public:                                                             \
    explicit Type(const std::string& what) : Base(#Type, what) {}      \
  };

LFI_DEFINE_ERROR(InvalidArgument, Error)
LFI_DEFINE_ERROR(DimensionMismatch, Error)
LFI_DEFINE_ERROR(ConfigError, Error)
LFI_DEFINE_ERROR(IoError, Error)
LFI_DEFINE_ERROR(ParseError, Error)
LFI_DEFINE_ERROR(EmptyDataset, Error)
LFI_DEFINE_ERROR(EmptyCandidates, Error)
LFI_DEFINE_ERROR(OutsideSupport, Error)
LFI_DEFINE_ERROR(UnsupportedShape, Error)
LFI_DEFINE_ERROR(Degenerate, NumericError)
LFI_DEFINE_ERROR(DivisionByZero, NumericError)
LFI_DEFINE_ERROR(RetryBudgetExceeded, NumericError)
LFI_DEFINE_ERROR(Timeout, NumericError)
LFI_DEFINE_ERROR(PropensityOverflow, NumericError)
LFI_DEFINE_ERROR(SingularDesign, NumericError)
LFI_DEFINE_ERROR(BudgetExceeded, NumericError)

#undef LFI_DEFINE_ERROR

}  // namespace lfi
