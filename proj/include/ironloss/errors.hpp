#pragma once

#include <functional>
#include <stdexcept>
#include <string>
#include <string_view>

namespace ironloss {

/// Base class of every error raised by the library. `kind()` is a short
/// machine-readable tag used by the CLI error records.
class Error : public std::runtime_error {
public:
    Error(std::string kind, const std::string& what)
        : std::runtime_error(what), kind_(std::move(kind)) {}
    const std::string& kind() const noexcept { return kind_; }

private:
    std::string kind_;
};

#define IRONLOSS_DEFINE_ERROR(Name, tag)                                     \
    class Name : public Error {                                              \
    public:                                                                  \
        explicit Name(const std::string& what) : Error(tag, what) {}         \
    };

IRONLOSS_DEFINE_ERROR(GeometryError, "geometry")
IRONLOSS_DEFINE_ERROR(LocationError, "location")
IRONLOSS_DEFINE_ERROR(AssemblyError, "assembly")
IRONLOSS_DEFINE_ERROR(DefinitenessError, "definiteness")
IRONLOSS_DEFINE_ERROR(DimensionError, "dimension")
IRONLOSS_DEFINE_ERROR(GuardError, "guard")
IRONLOSS_DEFINE_ERROR(DesignInfeasibleError, "design_infeasible")
IRONLOSS_DEFINE_ERROR(DataError, "data")
IRONLOSS_DEFINE_ERROR(ConfigError, "config")
IRONLOSS_DEFINE_ERROR(IoError, "io")

#undef IRONLOSS_DEFINE_ERROR

/// Non-fatal diagnostics. The default handler writes to stderr; tests and the
/// harness may install their own.
using WarningHandler = std::function<void(std::string_view)>;

WarningHandler set_warning_handler(WarningHandler handler);
void warn(std::string_view message);

}  // namespace ironloss
