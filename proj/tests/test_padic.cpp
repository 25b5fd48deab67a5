#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <random>

#include "dvf/padic.hpp"

using namespace dvf;

TEST_CASE("ring operations carry the minimum precision") {
    PAdicInt a(3, 5, 4), b(3, 4, 4);
    PAdicInt s = a.add(b);
    CHECK(s.digits() == 9);
    CHECK(s.precision() == 4);
    CHECK(s.valuation() == Valuation::exactly(2));

    PAdicInt z = PAdicInt(3, 1, 4).mul(PAdicInt::zero(3, 4));
    CHECK(z.represented_zero());
    CHECK(z.valuation() == Valuation::at_least(4));

    PAdicInt p5(5, 5, 3);
    CHECK(p5.mul(p5).valuation() == Valuation::exactly(2));

    PAdicInt lo(3, 7, 2);
    CHECK(a.add(lo).precision() == 2);
    CHECK(a.mul(lo).precision() == 2);
}

TEST_CASE("mismatched primes are a configuration error") {
    PAdicInt a(3, 1, 4), b(5, 1, 4);
    CHECK_THROWS_AS(a.add(b), ConfigError);
    CHECK_THROWS_AS(a.mul(b), ConfigError);
}

TEST_CASE("valuation of known digits") {
    CHECK(PAdicInt(3, 18, 6).valuation() == Valuation::exactly(2));
    CHECK(PAdicInt(3, 0, 6).valuation() == Valuation::at_least(6));
    CHECK(PAdicInt(7, 1, 1).valuation() == Valuation::exactly(0));
}

TEST_CASE("unit inversion") {
    PAdicInt a(3, 2, 4);
    PAdicInt inv = a.invert();
    CHECK(inv.digits() == 41); // 2 * 41 = 82 = 81 + 1
    CHECK(a.mul(inv).digits() == 1);

    CHECK(PAdicInt(5, 1, 3).invert().digits() == 1);
    CHECK_THROWS_AS(PAdicInt(3, 3, 4).invert(), NotAUnit);
}

TEST_CASE("double inversion is the identity on random units") {
    std::mt19937 rng(20260810);
    for (int trial = 0; trial < 200; ++trial) {
        std::uint64_t p = trial % 2 ? 3 : 5;
        BigInt m = pow_big(BigInt(p), 12);
        BigInt v = BigInt(rng()) % m;
        if (v % p == 0) v += 1;
        PAdicInt u(p, v, 12);
        CHECK(u.invert().invert() == u);
    }
}

TEST_CASE("valuation is additive and ultrametric on random samples") {
    std::mt19937 rng(7);
    for (int trial = 0; trial < 300; ++trial) {
        BigInt m = pow_big(BigInt(3), 20);
        PAdicInt a(3, BigInt(rng()) % m, 20), b(3, BigInt(rng()) % m, 20);
        Valuation va = a.valuation(), vb = b.valuation();
        Valuation vab = a.mul(b).valuation();
        if (va.exact && vb.exact && va.v + vb.v < 20) {
            CHECK(vab == Valuation::exactly(va.v + vb.v));
        }
        Valuation vs = a.add(b).valuation();
        long long lo = std::min(va.lower_bound(), vb.lower_bound());
        CHECK(vs.lower_bound() >= lo);
        if (va.exact && vb.exact && va.v != vb.v) {
            CHECK(vs == Valuation::exactly(std::min(va.v, vb.v)));
        }
    }
}

TEST_CASE("ring axioms hold exactly mod p^N on random samples") {
    std::mt19937 rng(99);
    BigInt m = pow_big(BigInt(5), 10);
    for (int trial = 0; trial < 200; ++trial) {
        PAdicInt a(5, BigInt(rng()) % m, 10), b(5, BigInt(rng()) % m, 10),
            c(5, BigInt(rng()) % m, 10);
        CHECK(a.mul(b.mul(c)) == a.mul(b).mul(c));
        CHECK(a.mul(b.add(c)) == a.mul(b).add(a.mul(c)));
        CHECK(a.add(b) == b.add(a));
    }
}

TEST_CASE("exact division peels the divisor valuation off the precision") {
    PAdicInt a(3, 18, 6), b(3, 3, 6);
    PAdicInt q = a.divide_exact(b);
    CHECK(q.digits() == 6);
    CHECK(q.precision() == 5);
    CHECK_THROWS_AS(PAdicInt(3, 1, 6).divide_exact(b), ConfigError);
    CHECK_THROWS_AS(a.divide_exact(PAdicInt::zero(3, 6)), PrecisionExhausted);
}
