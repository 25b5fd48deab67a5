#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <random>

#include "dvf/tower.hpp"

using namespace dvf;

namespace {

TowerSpec example2_spec(std::uint64_t p, std::uint32_t prec = 64) {
    TowerSpec s;
    s.p = p;
    s.precision = prec;
    s.steps.push_back({StepKind::laurent, "t", "", {-32, 32}});
    s.steps.push_back({StepKind::eisenstein, "pi",
                       "X^" + std::to_string(p) + " - " + std::to_string(p) + "*t",
                       {}});
    return s;
}

TowerSpec sqrt3_spec() {
    TowerSpec s;
    s.p = 3;
    s.precision = 64;
    s.steps.push_back({StepKind::eisenstein, "pi", "X^2 - 3", {}});
    return s;
}

bool is_exact_zero(const Tower& tw, const Elem& x) {
    return tw.represented_zero(x) && !tw.has_markers(x);
}

} // namespace

TEST_CASE("ramification index and valuations in the pi^p = pt tower") {
    Tower tw = Tower::build(example2_spec(3));
    CHECK(tw.ramification_index() == 3);

    Elem three = tw.from_int(3, tw.top());
    CHECK(tw.valuation(three) == Valuation::exactly(3));
    CHECK(tw.valuation(tw.generator(0)) == Valuation::exactly(0)); // t
    CHECK(tw.valuation(tw.generator(1)) == Valuation::exactly(1)); // pi

    // v(pi^2 + 3) = min(2, 3) = 2
    Elem x = tw.add(tw.pow(tw.generator(1), 2, tw.top()), three, tw.top());
    CHECK(tw.valuation(x) == Valuation::exactly(2));

    CHECK(tw.valuation(tw.one(tw.top())) == Valuation::exactly(0));
}

TEST_CASE("ramification index equals v_K(p) across towers") {
    {
        Tower tw = Tower::build(TowerSpec{3, 64, {}});
        CHECK(tw.ramification_index() == 1);
        CHECK(tw.valuation(tw.from_int(3, tw.top())) == Valuation::exactly(1));
    }
    {
        TowerSpec s = sqrt3_spec();
        s.steps.push_back({StepKind::laurent, "t", "", {-32, 32}});
        Tower tw = Tower::build(s);
        CHECK(tw.ramification_index() == 2);
        CHECK(tw.valuation(tw.from_int(3, tw.top())) == Valuation::exactly(2));
    }
}

TEST_CASE("residue fields") {
    {
        Tower tw = Tower::build(example2_spec(3));
        ResidueFieldDesc d = tw.residue_field();
        CHECK(d.q == 3);
        CHECK(d.laurent_vars == std::vector<std::string>{"t"});
    }
    {
        Tower tw = Tower::build(TowerSpec{3, 64, {}});
        ResidueFieldDesc d = tw.residue_field();
        CHECK(d.q == 3);
        CHECK(d.laurent_vars.empty());
    }
    {
        TowerSpec s;
        s.p = 3;
        s.precision = 64;
        s.steps.push_back({StepKind::unramified, "a", "X^2 - X - 1", {}});
        s.steps.push_back({StepKind::laurent, "t", "", {-32, 32}});
        Tower tw = Tower::build(s);
        ResidueFieldDesc d = tw.residue_field();
        CHECK(d.q == 9);
        CHECK(d.laurent_vars == std::vector<std::string>{"t"});
    }
}

TEST_CASE("tower validation errors") {
    {
        TowerSpec s;
        s.p = 3;
        s.precision = 64;
        s.steps.push_back({StepKind::eisenstein, "pi", "X^3 - 9", {}});
        CHECK_THROWS_WITH_AS(Tower::build(s), doctest::Contains("valuation 2"), Error);
    }
    {
        TowerSpec s;
        s.p = 3;
        s.precision = 64;
        s.steps.push_back({StepKind::laurent, "t", "", {-32, 32}});
        s.steps.push_back({StepKind::unramified, "a", "X^2 - X - 1", {}});
        try {
            Tower::build(s);
            CHECK(false);
        } catch (const Error& e) {
            CHECK(e.kind() == errc::unramified_after_laurent);
        }
    }
    {
        TowerSpec s;
        s.p = 4;
        s.precision = 64;
        try {
            Tower::build(s);
            CHECK(false);
        } catch (const Error& e) {
            CHECK(e.kind() == errc::non_prime_p);
        }
    }
    {
        TowerSpec s;
        s.p = 3;
        s.precision = 64;
        s.steps.push_back({StepKind::laurent, "t", "", {-32, 32}});
        s.steps.push_back({StepKind::laurent, "t", "", {-32, 32}});
        try {
            Tower::build(s);
            CHECK(false);
        } catch (const Error& e) {
            CHECK(e.kind() == errc::duplicate_variable);
        }
    }
    {
        // reduction X^2 + 2X + 1 = (X+1)^2 is not separable
        TowerSpec s;
        s.p = 3;
        s.precision = 64;
        s.steps.push_back({StepKind::unramified, "a", "X^2 + 2*X + 1", {}});
        try {
            Tower::build(s);
            CHECK(false);
        } catch (const Error& e) {
            CHECK(e.kind() == errc::not_unramified_separable);
        }
    }
    {
        // X^2 - 1 splits: irreducibility must fail
        TowerSpec s;
        s.p = 7;
        s.precision = 64;
        s.steps.push_back({StepKind::unramified, "a", "X^2 - 1", {}});
        CHECK_THROWS_AS(Tower::build(s), Error);
    }
}

TEST_CASE("polynomial parsing errors") {
    Tower tw = Tower::build(TowerSpec{3, 64, {}});
    CHECK_THROWS_AS(tw.parse_poly("X^2 - y", tw.top()), ParseError);
    CHECK_THROWS_AS(tw.parse_poly("X^2 + * 3", tw.top()), ParseError);
    ElemPoly f = tw.parse_poly("X^2 - 3", tw.top());
    CHECK(f.degree() == 2);
    CHECK(tw.valuation(f.c[0]) == Valuation::exactly(1));
}

TEST_CASE("element arithmetic in the pi^3 = 3t tower") {
    Tower tw = Tower::build(example2_spec(3));
    int L = tw.top();
    Elem pi = tw.generator(1), t = tw.generator(0);

    // pi * pi^2 reduces by the minimal polynomial to 3t
    Elem lhs = tw.mul(pi, tw.mul(pi, pi, L), L);
    Elem want = tw.scale(tw.from_int(3, L), t, L, L);
    CHECK(is_exact_zero(tw, tw.sub(lhs, want, L)));

    // t * t^-1 = 1
    Elem tinv = tw.invert_unit(t, L);
    CHECK(is_exact_zero(tw, tw.sub(tw.mul(t, tinv, L), tw.one(L), L)));

    // (1 + t)(1 - t) = 1 - t^2
    Elem one = tw.one(L);
    Elem a = tw.add(one, t, L), b = tw.sub(one, t, L);
    Elem prod = tw.mul(a, b, L);
    Elem expect = tw.sub(one, tw.mul(t, t, L), L);
    CHECK(is_exact_zero(tw, tw.sub(prod, expect, L)));
}

TEST_CASE("substituting the generator into its minimal polynomial yields zero") {
    for (auto spec : {example2_spec(3), example2_spec(5), sqrt3_spec()}) {
        Tower tw = Tower::build(spec);
        int L = tw.top();
        int si = tw.num_steps() - 1;
        const auto& st = tw.step(si);
        Elem gen = tw.generator(si);
        Elem acc = tw.pow(gen, static_cast<unsigned>(st.degree), L);
        for (int j = 0; j < st.degree; ++j) {
            Elem cj = tw.promote(st.min_poly[static_cast<std::size_t>(j)], si, L);
            acc = tw.add(acc, tw.mul(cj, tw.pow(gen, static_cast<unsigned>(j), L), L), L);
        }
        CHECK(tw.represented_zero(acc));
        CHECK(tw.valuation(acc).lower_bound() >= tw.ambient_certainty(L) - 1);
    }
}

TEST_CASE("unit inversion round trip in towers") {
    Tower tw = Tower::build(example2_spec(3));
    int L = tw.top();
    Elem pi = tw.generator(1), t = tw.generator(0);

    // u = 1 + pi + 2t
    Elem u = tw.add(tw.add(tw.one(L), pi, L), tw.scale_by_int(t, 2, L), L);
    Elem ui = tw.invert_unit(u, L);
    CHECK(is_exact_zero(tw, tw.sub(tw.mul(u, ui, L), tw.one(L), L)));

    CHECK_THROWS_AS(tw.invert_unit(pi, L), NotAUnit);
}

TEST_CASE("exact division in towers") {
    Tower tw = Tower::build(example2_spec(3));
    int L = tw.top();
    Elem pi = tw.generator(1), t = tw.generator(0);

    // (3t * pi) / pi^3 = 1 since pi^3 = 3t... rather: pi^4 / pi = pi^3 = 3t
    Elem pi4 = tw.pow(pi, 4, L);
    Elem q = tw.divide_exact(pi4, pi, L);
    Elem want = tw.scale(tw.from_int(3, L), t, L, L);
    CHECK(tw.represented_zero(tw.sub(q, want, L)));

    // 3 / pi = pi^2 * t^-1
    Elem three = tw.from_int(3, L);
    Elem q2 = tw.divide_exact(three, pi, L);
    Elem want2 = tw.mul(tw.pow(pi, 2, L), tw.invert_unit(t, L), L);
    CHECK(tw.represented_zero(tw.sub(q2, want2, L)));

    CHECK_THROWS_AS(tw.divide_exact(tw.one(L), pi, L), ConfigError);
}

TEST_CASE("random product valuations are additive") {
    std::mt19937 rng(42);
    Tower tw = Tower::build(example2_spec(3));
    int L = tw.top();
    auto random_elem = [&]() {
        Elem acc = tw.zero(L);
        for (int i = 0; i < 3; ++i) {
            long long c = static_cast<long long>(rng() % 17) - 8;
            int a = static_cast<int>(rng() % 3);
            int b = static_cast<int>(rng() % 5) - 2;
            Elem m = tw.from_int(c, L);
            m = tw.mul(m, tw.pow(tw.generator(1), static_cast<unsigned>(a), L), L);
            Elem tp = b >= 0 ? tw.pow(tw.generator(0), static_cast<unsigned>(b), L)
                             : tw.invert_unit(tw.pow(tw.generator(0), static_cast<unsigned>(-b), L), L);
            acc = tw.add(acc, tw.mul(m, tp, L), L);
        }
        return acc;
    };
    int checked = 0;
    for (int trial = 0; trial < 60; ++trial) {
        Elem x = random_elem(), y = random_elem();
        Valuation vx = tw.valuation(x), vy = tw.valuation(y);
        if (!vx.exact || !vy.exact) continue;
        Valuation vxy = tw.valuation(tw.mul(x, y, L));
        CHECK(vxy == Valuation::exactly(vx.v + vy.v));
        Valuation vs = tw.valuation(tw.add(x, y, L));
        CHECK(vs.lower_bound() >= std::min(vx.v, vy.v));
        if (vx.v != vy.v) CHECK(vs == Valuation::exactly(std::min(vx.v, vy.v)));
        ++checked;
    }
    CHECK(checked > 40);
}

TEST_CASE("window truncation is tracked, not silent") {
    TowerSpec s;
    s.p = 3;
    s.precision = 8;
    s.steps.push_back({StepKind::laurent, "t", "", {-3, 3}});
    Tower tw = Tower::build(s);
    int L = tw.top();
    Elem t = tw.generator(0);
    Elem u = tw.add(tw.one(L), t, L); // 1 + t
    Elem sq = tw.mul(u, u, L);
    Elem p4 = tw.mul(sq, sq, L); // degree 4 > window hi = 3
    CHECK(tw.has_markers(p4));
    CHECK(tw.valuation(p4).exact == false);

    // the inverse of 1 + t has an infinite unit-coefficient tail: saturated
    Elem ui = tw.invert_unit(u, L);
    CHECK(tw.has_markers(ui));
    Elem diff = tw.sub(tw.mul(u, ui, L), tw.one(L), L);
    CHECK(tw.represented_zero(diff));
}

TEST_CASE("reduction to the residue tower") {
    Tower tw = Tower::build(example2_spec(3));
    int L = tw.top();
    const Tower& rt = tw.residue();
    CHECK(rt.precision() == 1);
    CHECK(rt.num_steps() == 1); // only the laurent step survives

    Elem r1 = tw.reduce(tw.generator(1), L); // pi reduces to 0
    CHECK(rt.represented_zero(r1));
    Elem r2 = tw.reduce(tw.generator(0), L); // t reduces to t-bar
    CHECK(!rt.represented_zero(r2));
    Elem r3 = tw.reduce(tw.from_int(3, L), L);
    CHECK(rt.represented_zero(r3));
    Elem r4 = tw.reduce(tw.from_int(4, L), L);
    CHECK(!rt.represented_zero(r4));
}

TEST_CASE("rendering is deterministic and readable") {
    Tower tw = Tower::build(example2_spec(3));
    int L = tw.top();
    Elem x = tw.sub(tw.generator(0), tw.pow(tw.generator(1), 2, L), L);
    CHECK(tw.render(x, L) == "t - pi^2");
    CHECK(tw.render(tw.from_int(-3, L), L) == "-3");
    CHECK(tw.render(tw.zero(L), L) == "0");
}
