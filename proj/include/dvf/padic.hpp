#pragma once

#include <algorithm>
#include <cstdint>
#include <string>

#include <boost/multiprecision/cpp_int.hpp>

#include "dvf/error.hpp"

namespace dvf {

using BigInt = boost::multiprecision::cpp_int;

/// Outcome of a valuation query. Truncated representations cannot certify an
/// exact zero, so an all-zero value yields a lower bound instead of a number.
struct Valuation {
    bool exact;
    long long v; // the valuation if exact, otherwise a certified lower bound

    static Valuation exactly(long long v) { return {true, v}; }
    static Valuation at_least(long long b) { return {false, b}; }

    long long lower_bound() const { return v; }

    /// Gauss combination: the valuation of a sum of terms with these two
    /// valuations. Exact wins whenever it cannot be undercut by the bound.
    static Valuation min_of(const Valuation& a, const Valuation& b) {
        if (a.exact && b.exact) return exactly(std::min(a.v, b.v));
        if (a.exact) return a.v <= b.v ? a : at_least(b.v);
        if (b.exact) return b.v <= a.v ? b : at_least(a.v);
        return at_least(std::min(a.v, b.v));
    }

    Valuation scaled(long long n) const { return {exact, v * n}; }
    Valuation shifted(long long d) const { return {exact, v + d}; }

    bool operator==(const Valuation& o) const { return exact == o.exact && v == o.v; }
};

inline BigInt pow_big(const BigInt& base, std::uint32_t exp) {
    BigInt r = 1, b = base;
    while (exp) {
        if (exp & 1u) r *= b;
        b *= b;
        exp >>= 1;
    }
    return r;
}

/// An element of Z_p known modulo p^N. The modulus exponent N (the absolute
/// precision) is tracked per value and never silently increases.
class PAdicInt {
public:
    PAdicInt(std::uint64_t p, BigInt value, std::uint32_t precision)
        : p_(p), precision_(precision) {
        if (p < 2) throw ConfigError("prime must be >= 2");
        BigInt m = modulus();
        digits_ = value % m;
        if (digits_ < 0) digits_ += m;
    }

    static PAdicInt zero(std::uint64_t p, std::uint32_t precision) {
        return PAdicInt(p, 0, precision);
    }
    static PAdicInt one(std::uint64_t p, std::uint32_t precision) {
        return PAdicInt(p, 1, precision);
    }

    std::uint64_t prime() const { return p_; }
    std::uint32_t precision() const { return precision_; }
    const BigInt& digits() const { return digits_; }
    BigInt modulus() const { return pow_big(BigInt(p_), precision_); }

    bool represented_zero() const { return digits_ == 0; }

    PAdicInt add(const PAdicInt& o) const {
        check_same(o);
        return PAdicInt(p_, digits_ + o.digits_, std::min(precision_, o.precision_));
    }
    PAdicInt sub(const PAdicInt& o) const {
        check_same(o);
        return PAdicInt(p_, digits_ - o.digits_, std::min(precision_, o.precision_));
    }
    PAdicInt neg() const { return PAdicInt(p_, -digits_, precision_); }
    PAdicInt mul(const PAdicInt& o) const {
        check_same(o);
        return PAdicInt(p_, digits_ * o.digits_, std::min(precision_, o.precision_));
    }

    /// Truncate to a smaller precision. Extending would fabricate digits.
    PAdicInt truncated(std::uint32_t n) const {
        if (n >= precision_) return *this;
        return PAdicInt(p_, digits_, n);
    }

    Valuation valuation() const {
        if (digits_ == 0) return Valuation::at_least(precision_);
        BigInt d = digits_;
        long long v = 0;
        while (d % p_ == 0) {
            d /= p_;
            ++v;
        }
        return Valuation::exactly(v);
    }

    /// Inverse modulo p^N; input must be a unit (valuation exactly 0).
    PAdicInt invert() const {
        if (digits_ % p_ == 0)
            throw NotAUnit("cannot invert: valuation is not zero at precision " +
                           std::to_string(precision_));
        BigInt m = modulus();
        BigInt g, x, y;
        ext_gcd(digits_, m, g, x, y);
        // g == 1 since digits is coprime to p
        return PAdicInt(p_, x, precision_);
    }

    /// Exact division in Z_p: requires v(divisor) exact and v(*this) >= v(divisor).
    /// The quotient loses v(divisor) digits of absolute precision.
    PAdicInt divide_exact(const PAdicInt& o) const {
        check_same(o);
        Valuation vo = o.valuation();
        if (!vo.exact)
            throw PrecisionExhausted("division by a value indistinguishable from zero");
        std::uint32_t k = static_cast<std::uint32_t>(vo.v);
        BigInt pk = pow_big(BigInt(p_), k);
        if (digits_ % pk != 0)
            throw ConfigError("exact division impossible: dividend valuation too small");
        std::uint32_t n = std::min(precision_, o.precision_) - k;
        PAdicInt num(p_, digits_ / pk, n);
        PAdicInt den(p_, o.digits_ / pk, n);
        return num.mul(den.invert());
    }

    bool operator==(const PAdicInt& o) const {
        return p_ == o.p_ && precision_ == o.precision_ && digits_ == o.digits_;
    }

    /// Small symmetric representative, for rendering only.
    std::string to_string() const {
        BigInt m = modulus();
        if (digits_ > m / 2) return std::string("-") + BigInt(m - digits_).str();
        return digits_.str();
    }

private:
    void check_same(const PAdicInt& o) const {
        if (p_ != o.p_)
            throw ConfigError("mismatched primes: " + std::to_string(p_) + " vs " +
                              std::to_string(o.p_));
    }

    static void ext_gcd(const BigInt& a, const BigInt& b, BigInt& g, BigInt& x, BigInt& y) {
        if (b == 0) {
            g = a;
            x = 1;
            y = 0;
            return;
        }
        BigInt x1, y1;
        ext_gcd(b, a % b, g, x1, y1);
        x = y1;
        y = x1 - (a / b) * y1;
    }

    std::uint64_t p_;
    BigInt digits_;
    std::uint32_t precision_;
};

inline bool is_prime_u64(std::uint64_t n) {
    if (n < 2) return false;
    for (std::uint64_t d = 2; d * d <= n; ++d)
        if (n % d == 0) return false;
    return true;
}

} // namespace dvf
