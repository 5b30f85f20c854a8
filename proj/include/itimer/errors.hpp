#pragma once

#include <stdexcept>
#include <string>

namespace itimer {

// Base for every error the library raises. `exit_code` maps onto the CLI
// convention: 1 usage/config, 2 numerical abort, 3 IO.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& what, int exit_code = 1)
      : std::runtime_error(what), exit_code_(exit_code) {}
  int exit_code() const noexcept { return exit_code_; }

 private:
  int exit_code_;
};

#define ITIMER_DEFINE_ERROR(Name, code)                                  \
  class Name : public Error {                                           \
   public:                                                              \
    explicit Name(const std::string& what) : Error(what, code) {}       \
  }

ITIMER_DEFINE_ERROR(ParseError, 1);
ITIMER_DEFINE_ERROR(ConflictError, 1);
ITIMER_DEFINE_ERROR(ValidationError, 1);
ITIMER_DEFINE_ERROR(ConfigError, 1);
ITIMER_DEFINE_ERROR(SplitError, 1);
ITIMER_DEFINE_ERROR(ShapeError, 1);
ITIMER_DEFINE_ERROR(DomainError, 1);
ITIMER_DEFINE_ERROR(ContractError, 1);
ITIMER_DEFINE_ERROR(StatsError, 1);
ITIMER_DEFINE_ERROR(TaskError, 1);
ITIMER_DEFINE_ERROR(MetricError, 1);
ITIMER_DEFINE_ERROR(NumericalAbort, 2);
ITIMER_DEFINE_ERROR(IoError, 3);
ITIMER_DEFINE_ERROR(IntegrityError, 3);
ITIMER_DEFINE_ERROR(VersionError, 3);

#undef ITIMER_DEFINE_ERROR

}  // namespace itimer
