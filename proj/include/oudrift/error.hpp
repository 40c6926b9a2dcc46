#pragma once

#include <stdexcept>
#include <string>

namespace oudrift {

// Base of every error the library raises. `kind()` is a stable short name
// used by the CLI when it reports a failing check.
class Error : public std::runtime_error {
public:
  Error(std::string kind, const std::string& what)
      : std::runtime_error(kind + ": " + what), kind_(std::move(kind)) {}

  const std::string& kind() const noexcept { return kind_; }

private:
  std::string kind_;
};

#define OUDRIFT_DEFINE_ERROR(Name)                                             \
  class Name : public Error {                                                  \
  public:                                                                      \
    explicit Name(const std::string& what) : Error(#Name, what) {}             \
  }

OUDRIFT_DEFINE_ERROR(InvalidParams);
OUDRIFT_DEFINE_ERROR(InvalidPath);
OUDRIFT_DEFINE_ERROR(DegenerateDenominator);
OUDRIFT_DEFINE_ERROR(MissingInnovations);
OUDRIFT_DEFINE_ERROR(TooLarge);
OUDRIFT_DEFINE_ERROR(EmptySample);
OUDRIFT_DEFINE_ERROR(NonFiniteValue);
OUDRIFT_DEFINE_ERROR(TooSmall);
OUDRIFT_DEFINE_ERROR(InsufficientCells);
OUDRIFT_DEFINE_ERROR(NonPositiveValue);
OUDRIFT_DEFINE_ERROR(ScheduleError);
OUDRIFT_DEFINE_ERROR(TooManyDegeneratePaths);
OUDRIFT_DEFINE_ERROR(ConfigError);
OUDRIFT_DEFINE_ERROR(CsvError);

#undef OUDRIFT_DEFINE_ERROR

} // namespace oudrift
