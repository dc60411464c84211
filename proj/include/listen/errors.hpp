#pragma once

#include <stdexcept>
#include <string>

namespace listen {

// Every error carries the CLI exit code it maps to.
class Error : public std::runtime_error {
public:
    Error(const std::string& what, int exit_code) : std::runtime_error(what), exit_code_(exit_code) {}
    int exit_code() const noexcept { return exit_code_; }

private:
    int exit_code_;
};

inline constexpr int kExitConfig = 2;
inline constexpr int kExitData = 3;
inline constexpr int kExitNumerical = 4;

#define LISTEN_DEFINE_ERROR(Name, code)                                     \
    class Name : public Error {                                             \
    public:                                                                 \
        explicit Name(const std::string& what) : Error(what, code) {}       \
    };

LISTEN_DEFINE_ERROR(ArgumentError, kExitConfig)
LISTEN_DEFINE_ERROR(ConfigError, kExitConfig)
LISTEN_DEFINE_ERROR(LookupError, kExitData)
LISTEN_DEFINE_ERROR(DataError, kExitData)
LISTEN_DEFINE_ERROR(FormatError, kExitData)
LISTEN_DEFINE_ERROR(InputError, kExitData)
LISTEN_DEFINE_ERROR(ShapeError, kExitNumerical)
LISTEN_DEFINE_ERROR(EmptyInputError, kExitData)
LISTEN_DEFINE_ERROR(LengthError, kExitData)
LISTEN_DEFINE_ERROR(KindError, kExitConfig)
LISTEN_DEFINE_ERROR(InsufficientNegativesError, kExitConfig)
LISTEN_DEFINE_ERROR(EmptyResponseError, kExitData)
LISTEN_DEFINE_ERROR(NumericalError, kExitNumerical)

#undef LISTEN_DEFINE_ERROR

// Raised by text-generation clients; keeps the prompt so callers can retry.
class GenerationError : public Error {
public:
    GenerationError(const std::string& what, std::string prompt)
        : Error(what, kExitData), prompt_(std::move(prompt)) {}
    const std::string& prompt() const noexcept { return prompt_; }

private:
    std::string prompt_;
};

}  // namespace listen
