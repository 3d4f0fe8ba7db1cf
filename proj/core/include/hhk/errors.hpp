#pragma once

#include <stdexcept>
#include <string>

namespace hhk {

/// Base of every error raised by the library. `kind()` is a stable,
/// machine-readable tag used in CLI error records.
class Error : public std::runtime_error {
 public:
  Error(std::string kind, const std::string& what)
      : std::runtime_error(what), kind_(std::move(kind)) {}
  const std::string& kind() const noexcept { return kind_; }

 private:
  std::string kind_;
};

#define HHK_DEFINE_ERROR(Name)                                        \
  class Name : public Error {                                         \
   public:                                                            \
    explicit Name(const std::string& what) : Error(#Name, what) {}    \
  }

HHK_DEFINE_ERROR(NonPositiveDefinite);
HHK_DEFINE_ERROR(DimensionMismatch);
HHK_DEFINE_ERROR(DomainError);
HHK_DEFINE_ERROR(InvalidTree);
HHK_DEFINE_ERROR(DegenerateHyperplane);
HHK_DEFINE_ERROR(InvalidWitness);
HHK_DEFINE_ERROR(ChainDiverged);
HHK_DEFINE_ERROR(AllRestartsFailed);
HHK_DEFINE_ERROR(QuadratureNotConverged);
HHK_DEFINE_ERROR(EmptyPool);
HHK_DEFINE_ERROR(LengthMismatch);
HHK_DEFINE_ERROR(ParseError);
HHK_DEFINE_ERROR(DegenerateColumn);
HHK_DEFINE_ERROR(ConfigError);

#undef HHK_DEFINE_ERROR

}  // namespace hhk
