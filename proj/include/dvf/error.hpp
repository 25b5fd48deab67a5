#pragma once

#include <stdexcept>
#include <string>

namespace dvf {

/// Error categories, used by the CLI to map failures onto exit codes.
enum class errc {
    config,               // mismatched primes, bad arguments
    parse,                // malformed input document or expression
    non_prime_p,
    duplicate_variable,
    unramified_after_laurent,
    not_eisenstein,
    not_unramified_separable,
    not_a_unit,
    window_overflow,
    precision_exhausted,
    family_mismatch,
    p_le_two,
};

class Error : public std::runtime_error {
public:
    Error(errc kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
    errc kind() const { return kind_; }

private:
    errc kind_;
};

struct ConfigError : Error {
    explicit ConfigError(const std::string& w) : Error(errc::config, w) {}
};

struct ParseError : Error {
    ParseError(int line, int column, const std::string& w)
        : Error(errc::parse,
                "line " + std::to_string(line) + ", column " + std::to_string(column) + ": " + w),
          line(line), column(column) {}
    int line;
    int column;
};

struct NotAUnit : Error {
    explicit NotAUnit(const std::string& w) : Error(errc::not_a_unit, w) {}
};

struct WindowOverflow : Error {
    explicit WindowOverflow(const std::string& w) : Error(errc::window_overflow, w) {}
};

struct PrecisionExhausted : Error {
    explicit PrecisionExhausted(const std::string& w) : Error(errc::precision_exhausted, w) {}
};

struct FamilyMismatch : Error {
    explicit FamilyMismatch(const std::string& w) : Error(errc::family_mismatch, w) {}
};

} // namespace dvf
