#pragma once

#include <algorithm>
#include <cctype>
#include <limits>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "dvf/error.hpp"
#include "dvf/padic.hpp"

namespace dvf {

enum class StepKind { unramified, laurent, eisenstein };

struct Window {
    int lo = -32;
    int hi = 32;
};

/// One declared tower step, before validation.
struct StepSpec {
    StepKind kind;
    std::string var;
    std::string poly_text; // unramified / eisenstein
    Window window;         // laurent
};

/// Declarative description of the field K as a tower over Q_p.
struct TowerSpec {
    std::uint64_t p = 0;
    std::uint32_t precision = 64;
    std::vector<StepSpec> steps;
};

struct ResidueFieldDesc {
    BigInt q; // cardinality of the finite coefficient field
    std::vector<std::string> laurent_vars;
};

// ---------------------------------------------------------------------------
// Elements
//
// An element mirrors the tower: the base layer is a PAdicInt; a Laurent layer
// is a finite exponent->coefficient map plus saturation markers; an algebraic
// layer (unramified or Eisenstein of degree n) is a coefficient vector of
// length n over the layer below.
// ---------------------------------------------------------------------------

struct Elem;

/// Saturation marker for one side of a Laurent window: every coefficient at
/// exponent >= start (hi side) or <= start (lo side) is unknown, with a
/// certified valuation floor for the unknown data.
struct SatMarker {
    int start;
    long long floor;
};

struct LaurentVal {
    std::map<int, Elem> coeffs;
    std::optional<SatMarker> sat_lo, sat_hi;
};

struct AlgVal {
    std::vector<Elem> coeffs; // length = step degree, coefficient of gen^j
};

struct Elem {
    std::variant<PAdicInt, LaurentVal, AlgVal> node;

    const PAdicInt& base() const { return std::get<PAdicInt>(node); }
    const LaurentVal& laurent() const { return std::get<LaurentVal>(node); }
    LaurentVal& laurent() { return std::get<LaurentVal>(node); }
    const AlgVal& alg() const { return std::get<AlgVal>(node); }
    AlgVal& alg() { return std::get<AlgVal>(node); }
};

/// Dense polynomial over tower elements; c[i] is the coefficient of X^i.
struct ElemPoly {
    std::vector<Elem> c;
    int degree() const { return static_cast<int>(c.size()) - 1; }
};

namespace detail {
constexpr long long kNoBound = std::numeric_limits<long long>::max();
struct RenderTerm;
}

// ---------------------------------------------------------------------------
// Tower
// ---------------------------------------------------------------------------

class Tower {
public:
    struct Step {
        StepKind kind;
        std::string var;
        Window window;              // laurent
        std::vector<Elem> min_poly; // algebraic: c_0..c_{n-1} of the monic poly,
                                    // elements of the layer below this step
        int degree = 0;             // algebraic
    };

    /// Validate a spec and construct the tower (and its residue tower).
    static Tower build(const TowerSpec& spec) { return Tower(spec, /*validate=*/true); }

    std::uint64_t p() const { return spec_.p; }
    std::uint32_t precision() const { return spec_.precision; }
    const TowerSpec& spec() const { return spec_; }
    int num_steps() const { return static_cast<int>(steps_.size()); }
    int top() const { return num_steps(); }
    const Step& step(int i) const { return steps_[static_cast<std::size_t>(i)]; }

    /// e = v_K(p), the product of the Eisenstein step degrees.
    long long ramification_index() const {
        long long e = 1;
        for (const auto& s : steps_)
            if (s.kind == StepKind::eisenstein) e *= s.degree;
        return e;
    }

    ResidueFieldDesc residue_field() const {
        ResidueFieldDesc d;
        d.q = 1;
        d.q = pow_big(BigInt(spec_.p), residue_degree());
        for (const auto& s : steps_)
            if (s.kind == StepKind::laurent) d.laurent_vars.push_back(s.var);
        return d;
    }

    std::uint32_t residue_degree() const {
        std::uint32_t f = 1;
        for (const auto& s : steps_)
            if (s.kind == StepKind::unramified) f *= static_cast<std::uint32_t>(s.degree);
        return f;
    }

    bool is_residue_tower() const { return is_residue_; }
    const Tower& residue() const { return is_residue_ ? *this : *residue_; }

    /// Residue layer corresponding to a main-tower layer (Eisenstein steps
    /// collapse).
    int residue_layer_of(int layer) const {
        int r = 0;
        for (int i = 0; i < layer; ++i)
            if (steps_[static_cast<std::size_t>(i)].kind != StepKind::eisenstein) ++r;
        return r;
    }

    // -- element constructors ------------------------------------------------

    Elem zero(int layer) const {
        if (layer == 0) return Elem{PAdicInt::zero(spec_.p, spec_.precision)};
        const Step& s = step(layer - 1);
        if (s.kind == StepKind::laurent) return Elem{LaurentVal{}};
        AlgVal a;
        a.coeffs.assign(static_cast<std::size_t>(s.degree), zero(layer - 1));
        return Elem{a};
    }

    Elem one(int layer) const { return from_int(1, layer); }

    Elem from_int(const BigInt& v, int layer) const {
        return promote(Elem{PAdicInt(spec_.p, v, spec_.precision)}, 0, layer);
    }

    Elem from_base(const PAdicInt& v, int layer) const { return promote(Elem{v}, 0, layer); }

    /// The generator of a step (t for Laurent, the adjoined root otherwise),
    /// promoted to the requested layer (default: the full tower).
    Elem generator(int step_index, int to_layer = -1) const {
        if (to_layer < 0) to_layer = top();
        const Step& s = step(step_index);
        if (s.kind == StepKind::laurent) {
            LaurentVal lv;
            lv.coeffs.emplace(1, one(step_index));
            return promote(Elem{lv}, step_index + 1, to_layer);
        }
        AlgVal a;
        a.coeffs.assign(static_cast<std::size_t>(s.degree), zero(step_index));
        if (s.degree == 1) {
            // degree-1 step: the generator equals -c_0
            a.coeffs[0] = neg(s.min_poly[0], step_index);
        } else {
            a.coeffs[1] = one(step_index);
        }
        return promote(Elem{a}, step_index + 1, to_layer);
    }

    int step_of_var(const std::string& var) const {
        for (int i = 0; i < num_steps(); ++i)
            if (steps_[static_cast<std::size_t>(i)].var == var) return i;
        return -1;
    }

    Elem promote(Elem x, int from_layer, int to_layer) const {
        for (int l = from_layer; l < to_layer; ++l) {
            const Step& s = step(l);
            if (s.kind == StepKind::laurent) {
                LaurentVal lv;
                if (!represented_zero(x)) lv.coeffs.emplace(0, std::move(x));
                x = Elem{lv};
            } else {
                AlgVal a;
                a.coeffs.assign(static_cast<std::size_t>(s.degree), zero(l));
                a.coeffs[0] = std::move(x);
                x = Elem{a};
            }
        }
        return x;
    }

    // -- ring operations -----------------------------------------------------

    Elem add(const Elem& a, const Elem& b, int layer) const {
        if (layer == 0) return Elem{a.base().add(b.base())};
        const Step& s = step(layer - 1);
        if (s.kind == StepKind::laurent) {
            const LaurentVal &la = a.laurent(), &lb = b.laurent();
            LaurentVal r;
            r.sat_lo = combine_markers_lo(la.sat_lo, lb.sat_lo);
            r.sat_hi = combine_markers_hi(la.sat_hi, lb.sat_hi);
            for (const auto& [i, c] : la.coeffs)
                if (in_known_range(r, i)) r.coeffs.emplace(i, c);
            for (const auto& [i, c] : lb.coeffs) {
                if (!in_known_range(r, i)) continue;
                auto it = r.coeffs.find(i);
                if (it == r.coeffs.end())
                    r.coeffs.emplace(i, c);
                else
                    it->second = add(it->second, c, layer - 1);
            }
            normalize_laurent(r, layer);
            return Elem{r};
        }
        const AlgVal &aa = a.alg(), &ab = b.alg();
        AlgVal r;
        r.coeffs.reserve(aa.coeffs.size());
        for (std::size_t j = 0; j < aa.coeffs.size(); ++j)
            r.coeffs.push_back(add(aa.coeffs[j], ab.coeffs[j], layer - 1));
        return Elem{r};
    }

    Elem neg(const Elem& a, int layer) const {
        if (layer == 0) return Elem{a.base().neg()};
        const Step& s = step(layer - 1);
        if (s.kind == StepKind::laurent) {
            LaurentVal r = a.laurent();
            for (auto& [i, c] : r.coeffs) c = neg(c, layer - 1);
            return Elem{r};
        }
        AlgVal r = a.alg();
        for (auto& c : r.coeffs) c = neg(c, layer - 1);
        return Elem{r};
    }

    Elem sub(const Elem& a, const Elem& b, int layer) const { return add(a, neg(b, layer), layer); }

    Elem mul(const Elem& a, const Elem& b, int layer) const {
        if (layer == 0) return Elem{a.base().mul(b.base())};
        const Step& s = step(layer - 1);
        if (s.kind == StepKind::laurent) return mul_laurent(a, b, layer);
        return mul_algebraic(a, b, layer);
    }

    /// Multiply by an element of a lower layer (coefficient-wise).
    Elem scale(const Elem& a, const Elem& g, int layer, int g_layer) const {
        if (g_layer == layer) return mul(a, g, layer);
        if (layer == 0) return Elem{a.base().mul(g.base())};
        const Step& s = step(layer - 1);
        if (s.kind == StepKind::laurent) {
            const LaurentVal& la = a.laurent();
            LaurentVal r;
            long long lg = valuation_at(g, g_layer).lower_bound();
            if (la.sat_lo) r.sat_lo = SatMarker{la.sat_lo->start, la.sat_lo->floor + lg};
            if (la.sat_hi) r.sat_hi = SatMarker{la.sat_hi->start, la.sat_hi->floor + lg};
            for (const auto& [i, c] : la.coeffs)
                r.coeffs.emplace(i, scale(c, g, layer - 1, g_layer));
            normalize_laurent(r, layer);
            return Elem{r};
        }
        AlgVal r = a.alg();
        for (auto& c : r.coeffs) c = scale(c, g, layer - 1, g_layer);
        return Elem{r};
    }

    Elem pow(Elem base, unsigned long long e, int layer) const {
        Elem r = one(layer);
        while (e) {
            if (e & 1ull) r = mul(r, base, layer);
            e >>= 1;
            if (e) base = mul(base, base, layer);
        }
        return r;
    }

    Elem scale_by_int(const Elem& a, long long k, int layer) const {
        return scale(a, Elem{PAdicInt(spec_.p, k, spec_.precision)}, layer, 0);
    }

    // -- valuation and precision ----------------------------------------------

    /// Normalized valuation at a layer: the uniformizer of the subtower up to
    /// `layer` has valuation 1.
    Valuation valuation_at(const Elem& x, int layer) const {
        if (layer == 0) return x.base().valuation();
        const Step& s = step(layer - 1);
        if (s.kind == StepKind::laurent) {
            const LaurentVal& l = x.laurent();
            std::optional<Valuation> acc;
            for (const auto& [i, c] : l.coeffs) acc = acc_min(acc, valuation_at(c, layer - 1));
            if (l.sat_lo) acc = acc_min(acc, Valuation::at_least(l.sat_lo->floor));
            if (l.sat_hi) acc = acc_min(acc, Valuation::at_least(l.sat_hi->floor));
            if (!acc) return Valuation::at_least(ambient_certainty(layer - 1));
            return *acc;
        }
        const AlgVal& a = x.alg();
        long long n = s.degree;
        std::optional<Valuation> acc;
        bool eis = s.kind == StepKind::eisenstein;
        for (std::size_t j = 0; j < a.coeffs.size(); ++j) {
            Valuation vc = valuation_at(a.coeffs[j], layer - 1);
            if (eis)
                vc = vc.scaled(n).shifted(static_cast<long long>(j));
            acc = acc_min(acc, vc);
        }
        return *acc;
    }

    Valuation valuation(const Elem& x) const { return valuation_at(x, top()); }

    /// Certified valuation bound of an all-zero element at a layer.
    long long ambient_certainty(int layer) const {
        long long c = spec_.precision;
        for (int i = 0; i < layer; ++i)
            if (steps_[static_cast<std::size_t>(i)].kind == StepKind::eisenstein)
                c *= steps_[static_cast<std::size_t>(i)].degree;
        return c;
    }

    /// Certified bound below which this particular value is unknown.
    long long certainty(const Elem& x, int layer) const {
        if (layer == 0) return x.base().precision();
        const Step& s = step(layer - 1);
        if (s.kind == StepKind::laurent) {
            const LaurentVal& l = x.laurent();
            long long c = ambient_certainty(layer - 1);
            for (const auto& [i, cf] : l.coeffs) c = std::min(c, certainty(cf, layer - 1));
            if (l.sat_lo) c = std::min(c, l.sat_lo->floor);
            if (l.sat_hi) c = std::min(c, l.sat_hi->floor);
            return c;
        }
        const AlgVal& a = x.alg();
        long long n = s.degree;
        long long c = detail::kNoBound;
        bool eis = s.kind == StepKind::eisenstein;
        for (std::size_t j = 0; j < a.coeffs.size(); ++j) {
            long long cj = certainty(a.coeffs[j], layer - 1);
            c = std::min(c, eis ? n * cj + static_cast<long long>(j) : cj);
        }
        return c;
    }

    bool represented_zero(const Elem& x) const {
        if (std::holds_alternative<PAdicInt>(x.node)) return x.base().represented_zero();
        if (std::holds_alternative<LaurentVal>(x.node)) {
            for (const auto& [i, c] : x.laurent().coeffs)
                if (!represented_zero(c)) return false;
            return true;
        }
        for (const auto& c : x.alg().coeffs)
            if (!represented_zero(c)) return false;
        return true;
    }

    bool has_markers(const Elem& x) const {
        if (std::holds_alternative<PAdicInt>(x.node)) return false;
        if (std::holds_alternative<LaurentVal>(x.node)) {
            const LaurentVal& l = x.laurent();
            if (l.sat_lo || l.sat_hi) return true;
            for (const auto& [i, c] : l.coeffs)
                if (has_markers(c)) return true;
            return false;
        }
        for (const auto& c : x.alg().coeffs)
            if (has_markers(c)) return true;
        return false;
    }

    /// Forget knowledge of x below valuation `bound` (layer units).
    Elem truncate_certainty(const Elem& x, long long bound, int layer) const {
        if (bound <= 0)
            throw WindowOverflow("coefficient depends on discarded data of unit scale");
        if (layer == 0) {
            std::uint32_t n = static_cast<std::uint32_t>(
                std::min<long long>(bound, x.base().precision()));
            return Elem{x.base().truncated(n)};
        }
        const Step& s = step(layer - 1);
        if (s.kind == StepKind::laurent) {
            LaurentVal r = x.laurent();
            for (auto& [i, c] : r.coeffs) c = truncate_certainty(c, bound, layer - 1);
            // absent coefficients were exact zeros; now only zero up to `bound`
            if (!r.sat_lo || r.sat_lo->floor > bound)
                r.sat_lo = SatMarker{r.sat_lo ? r.sat_lo->start : s.window.lo - 1, bound};
            if (!r.sat_hi || r.sat_hi->floor > bound)
                r.sat_hi = SatMarker{r.sat_hi ? r.sat_hi->start : s.window.hi + 1, bound};
            return Elem{r};
        }
        AlgVal r = x.alg();
        long long n = s.degree;
        bool eis = s.kind == StepKind::eisenstein;
        for (std::size_t j = 0; j < r.coeffs.size(); ++j) {
            long long bj = eis ? ceil_div(bound - static_cast<long long>(j), n) : bound;
            if (bj > 0) r.coeffs[j] = truncate_certainty(r.coeffs[j], bj, layer - 1);
        }
        return Elem{r};
    }

    // -- division ------------------------------------------------------------

    /// Inverse of a unit (valuation exactly 0). Requires a marker-free input.
    Elem invert_unit(const Elem& u, int layer) const {
        if (has_markers(u))
            throw PrecisionExhausted("cannot invert a window-saturated element");
        Valuation v = valuation_at(u, layer);
        if (!v.exact || v.v != 0)
            throw NotAUnit("inversion requires valuation exactly 0");
        return invert_unit_impl(u, layer);
    }

    /// Exact division x / y in the ring of integers; requires v(x) >= v(y).
    Elem divide_exact(const Elem& x, const Elem& y, int layer) const {
        Valuation vy = valuation_at(y, layer);
        if (!vy.exact)
            throw PrecisionExhausted("division by a value indistinguishable from zero");
        Valuation vx = valuation_at(x, layer);
        if (vx.lower_bound() < vy.v) {
            if (vx.exact) throw ConfigError("exact division impossible: valuation too small");
            throw PrecisionExhausted("cannot certify divisibility at working precision");
        }
        if (represented_zero(x) && !has_markers(x)) {
            long long c = certainty(x, layer) - vy.v;
            Elem z = zero(layer);
            return c >= ambient_certainty(layer) ? z
                                                 : truncate_certainty(z, std::max<long long>(c, 1), layer);
        }
        Elem xs = x, ys = y;
        for (long long k = 0; k < vy.v; ++k) {
            xs = divide_by_uniformizer(xs, layer);
            ys = divide_by_uniformizer(ys, layer);
        }
        return mul(xs, invert_unit(ys, layer), layer);
    }

    /// Divide by the uniformizer of the subtower up to `layer`; v(x) >= 1
    /// must already be certified by the caller.
    Elem divide_by_uniformizer(const Elem& x, int layer) const {
        int le = last_eisenstein_step(layer);
        return div_uni(x, layer, le);
    }

    // -- residue field -------------------------------------------------------

    /// Image in the residue tower (Eisenstein layers collapse, base reduces
    /// mod p). Input must be integral.
    Elem reduce(const Elem& x, int layer) const {
        if (is_residue_) return x;
        if (layer == 0) {
            if (x.base().precision() < 1)
                throw PrecisionExhausted("no digits left to reduce modulo the maximal ideal");
            return Elem{x.base().truncated(1)};
        }
        const Step& s = step(layer - 1);
        if (s.kind == StepKind::eisenstein) return reduce(x.alg().coeffs[0], layer - 1);
        if (s.kind == StepKind::laurent) {
            const LaurentVal& l = x.laurent();
            LaurentVal r;
            if (l.sat_lo && l.sat_lo->floor < 1) r.sat_lo = SatMarker{l.sat_lo->start, 0};
            if (l.sat_hi && l.sat_hi->floor < 1) r.sat_hi = SatMarker{l.sat_hi->start, 0};
            for (const auto& [i, c] : l.coeffs) {
                Elem rc = reduce(c, layer - 1);
                if (!residue().represented_zero(rc)) r.coeffs.emplace(i, std::move(rc));
            }
            return Elem{r};
        }
        const AlgVal& a = x.alg();
        AlgVal r;
        r.coeffs.reserve(a.coeffs.size());
        for (const auto& c : a.coeffs) r.coeffs.push_back(reduce(c, layer - 1));
        return Elem{r};
    }

    /// Naive lift of a residue element back into the tower.
    Elem lift(const Elem& r, int rlayer, int layer) const {
        if (is_residue_) return r;
        if (layer == 0) return Elem{PAdicInt(spec_.p, r.base().digits(), spec_.precision)};
        const Step& s = step(layer - 1);
        if (s.kind == StepKind::eisenstein) {
            AlgVal a;
            a.coeffs.assign(static_cast<std::size_t>(s.degree), zero(layer - 1));
            a.coeffs[0] = lift(r, rlayer, layer - 1);
            return Elem{a};
        }
        if (s.kind == StepKind::laurent) {
            const LaurentVal& l = r.laurent();
            LaurentVal out;
            if (l.sat_lo) out.sat_lo = SatMarker{l.sat_lo->start, 0};
            if (l.sat_hi) out.sat_hi = SatMarker{l.sat_hi->start, 0};
            for (const auto& [i, c] : l.coeffs) out.coeffs.emplace(i, lift(c, rlayer - 1, layer - 1));
            return Elem{out};
        }
        const AlgVal& a = r.alg();
        AlgVal out;
        out.coeffs.reserve(a.coeffs.size());
        for (const auto& c : a.coeffs) out.coeffs.push_back(lift(c, rlayer - 1, layer - 1));
        return Elem{out};
    }

    /// Inverse in the residue tower (a field). Marker-free nonzero input.
    Elem residue_invert(const Elem& u, int rlayer) const {
        const Tower& rt = residue();
        if (&rt != this) return rt.residue_invert(u, rlayer);
        if (has_markers(u)) throw PrecisionExhausted("saturated residue element");
        if (rlayer == 0) return Elem{u.base().invert()};
        const Step& s = step(rlayer - 1);
        if (s.kind == StepKind::laurent) return residue_laurent_invert(u, rlayer);
        // finite field of size q = p^f: inverse is u^(q-2)
        BigInt q = pow_big(BigInt(spec_.p), finite_field_degree(rlayer));
        return residue_pow(u, q - 2, rlayer);
    }

    Elem residue_pow(Elem base_el, BigInt e, int rlayer) const {
        const Tower& rt = residue();
        if (&rt != this) return rt.residue_pow(base_el, e, rlayer);
        Elem r = one(rlayer);
        while (e > 0) {
            if ((e & 1) != 0) r = mul(r, base_el, rlayer);
            e >>= 1;
            if (e > 0) base_el = mul(base_el, base_el, rlayer);
        }
        return r;
    }

    /// p^f = size of the finite field built by layers 0..rlayer of the
    /// residue tower (valid while no Laurent step occurs below).
    std::uint32_t finite_field_degree(int rlayer) const {
        std::uint32_t f = 1;
        for (int i = 0; i < rlayer; ++i) {
            const Step& s = steps_[static_cast<std::size_t>(i)];
            if (s.kind == StepKind::unramified) f *= static_cast<std::uint32_t>(s.degree);
        }
        return f;
    }

    // -- polynomial parsing ----------------------------------------------------

    /// Parse an expression in X over the subtower of the first `layer` steps.
    /// Grammar: integers, declared variables, X, + - * ^, parentheses.
    ElemPoly parse_poly(const std::string& text, int layer, int err_line = 0,
                        int err_col = 0) const;

    std::string render(const Elem& x, int layer) const;

private:
    Tower(const TowerSpec& spec, bool validate, bool as_residue = false);

    void validate_and_add_step(const StepSpec& ss, bool validate);
    void validate_unramified(const Step& st, int layer) const;
    void rebuild_residue();
    void collect_terms(const Elem& x, int layer,
                       std::vector<std::pair<std::string, int>>& powers,
                       std::vector<detail::RenderTerm>& out) const;

    int last_eisenstein_step(int layer) const {
        for (int i = layer - 1; i >= 0; --i)
            if (steps_[static_cast<std::size_t>(i)].kind == StepKind::eisenstein) return i;
        return -1;
    }

    static long long ceil_div(long long a, long long n) {
        return a >= 0 ? (a + n - 1) / n : a / n;
    }

    static std::optional<Valuation> acc_min(const std::optional<Valuation>& a, const Valuation& b) {
        if (!a) return b;
        return Valuation::min_of(*a, b);
    }

    static std::optional<SatMarker> combine_markers_lo(const std::optional<SatMarker>& a,
                                                       const std::optional<SatMarker>& b) {
        if (!a) return b;
        if (!b) return a;
        return SatMarker{std::max(a->start, b->start), std::min(a->floor, b->floor)};
    }
    static std::optional<SatMarker> combine_markers_hi(const std::optional<SatMarker>& a,
                                                       const std::optional<SatMarker>& b) {
        if (!a) return b;
        if (!b) return a;
        return SatMarker{std::min(a->start, b->start), std::min(a->floor, b->floor)};
    }

    static bool in_known_range(const LaurentVal& l, int i) {
        if (l.sat_lo && i <= l.sat_lo->start) return false;
        if (l.sat_hi && i >= l.sat_hi->start) return false;
        return true;
    }

    /// Drop coefficients that are zero at full ambient certainty.
    void normalize_laurent(LaurentVal& l, int layer) const {
        long long amb = ambient_certainty(layer - 1);
        for (auto it = l.coeffs.begin(); it != l.coeffs.end();) {
            if (represented_zero(it->second) && !has_markers(it->second) &&
                certainty(it->second, layer - 1) >= amb)
                it = l.coeffs.erase(it);
            else
                ++it;
        }
    }

    Elem mul_algebraic(const Elem& a, const Elem& b, int layer) const {
        const Step& s = step(layer - 1);
        std::size_t n = static_cast<std::size_t>(s.degree);
        const auto& ac = a.alg().coeffs;
        const auto& bc = b.alg().coeffs;
        std::vector<Elem> conv(2 * n - 1, zero(layer - 1));
        for (std::size_t i = 0; i < n; ++i) {
            if (represented_zero(ac[i]) && !has_markers(ac[i])) continue;
            for (std::size_t j = 0; j < n; ++j) {
                if (represented_zero(bc[j]) && !has_markers(bc[j])) continue;
                conv[i + j] = add(conv[i + j], mul(ac[i], bc[j], layer - 1), layer - 1);
            }
        }
        // reduce by the monic minimal polynomial: X^n = -(c_0 + ... + c_{n-1}X^{n-1})
        for (std::size_t d = 2 * n - 2; d >= n && d < conv.size(); --d) {
            if (!(represented_zero(conv[d]) && !has_markers(conv[d]))) {
                for (std::size_t j = 0; j < n; ++j) {
                    Elem t = mul(conv[d], s.min_poly[j], layer - 1);
                    conv[d - n + j] = sub(conv[d - n + j], t, layer - 1);
                }
            }
            if (d == n) break;
        }
        AlgVal r;
        r.coeffs.assign(conv.begin(), conv.begin() + static_cast<long>(n));
        return Elem{r};
    }

    Elem mul_laurent(const Elem& a, const Elem& b, int layer) const;

    Elem invert_unit_impl(const Elem& u, int layer) const;
    Elem residue_laurent_invert(const Elem& u, int rlayer) const;
    Elem div_uni(const Elem& x, int layer, int eis_step) const;

    // Newton must have converged on every represented digit.
    void check_inverse(const Elem& u, const Elem& inv, int layer) const {
        Elem diff = sub(mul(u, inv, layer), one(layer), layer);
        if (!represented_zero(diff))
            throw PrecisionExhausted("unit inversion did not converge at working precision");
    }

    unsigned newton_rounds(int layer) const {
        long long target = ambient_certainty(layer);
        unsigned k = 1;
        while ((1ll << k) < target + 1 && k < 62) ++k;
        return k + 1;
    }

    TowerSpec spec_;
    std::vector<Step> steps_;
    std::shared_ptr<const Tower> residue_;
    bool is_residue_ = false;
};

// ---------------------------------------------------------------------------
// Laurent multiplication with window truncation
// ---------------------------------------------------------------------------

inline Elem Tower::mul_laurent(const Elem& ea, const Elem& eb, int layer) const {
    const Step& s = step(layer - 1);
    const Window& w = s.window;
    const LaurentVal& a = ea.laurent();
    const LaurentVal& b = eb.laurent();

    auto coeff_lb = [&](const std::pair<const int, Elem>& kv) {
        return valuation_at(kv.second, layer - 1).lower_bound();
    };
    auto overall_lb = [&](const LaurentVal& l) {
        long long m = ambient_certainty(layer - 1);
        for (const auto& kv : l.coeffs) m = std::min(m, coeff_lb(kv));
        if (l.sat_lo) m = std::min(m, l.sat_lo->floor);
        if (l.sat_hi) m = std::min(m, l.sat_hi->floor);
        return m;
    };

    // Uncertainty at result exponent k contributed by one operand's unknown
    // range times the other operand's known coefficients.
    auto tail_bound = [&](const std::optional<SatMarker>& m, bool m_is_hi, const LaurentVal& o,
                          int k) -> long long {
        if (!m) return detail::kNoBound;
        long long best = detail::kNoBound;
        for (const auto& kv : o.coeffs) {
            int j = kv.first;
            int i = k - j;
            bool hits = m_is_hi ? i >= m->start : i <= m->start;
            if (hits) best = std::min(best, m->floor + coeff_lb(kv));
        }
        return best;
    };

    // Unknown x unknown landing anywhere (opposite-side marker pairs).
    long long cross = detail::kNoBound;
    if (a.sat_hi && b.sat_lo) cross = std::min(cross, a.sat_hi->floor + b.sat_lo->floor);
    if (a.sat_lo && b.sat_hi) cross = std::min(cross, a.sat_lo->floor + b.sat_hi->floor);
    if (cross <= 0) throw WindowOverflow("product of oppositely saturated elements");

    auto uncertainty_hi_side = [&](int k) -> long long {
        long long u = detail::kNoBound;
        u = std::min(u, tail_bound(a.sat_hi, true, b, k));
        u = std::min(u, tail_bound(b.sat_hi, true, a, k));
        if (a.sat_hi && b.sat_hi && k >= a.sat_hi->start + b.sat_hi->start)
            u = std::min(u, a.sat_hi->floor + b.sat_hi->floor);
        return u;
    };
    auto uncertainty_lo_side = [&](int k) -> long long {
        long long u = detail::kNoBound;
        u = std::min(u, tail_bound(a.sat_lo, false, b, k));
        u = std::min(u, tail_bound(b.sat_lo, false, a, k));
        if (a.sat_lo && b.sat_lo && k <= a.sat_lo->start + b.sat_lo->start)
            u = std::min(u, a.sat_lo->floor + b.sat_lo->floor);
        return u;
    };

    LaurentVal r;
    if (a.coeffs.empty() && !a.sat_lo && !a.sat_hi) return Elem{LaurentVal{}};
    if (b.coeffs.empty() && !b.sat_lo && !b.sat_hi) return Elem{LaurentVal{}};

    long long discard_floor_lo = detail::kNoBound, discard_floor_hi = detail::kNoBound;
    int lo_start = w.lo - 1, hi_start = w.hi + 1;

    std::map<int, Elem> known;
    if (!a.coeffs.empty() && !b.coeffs.empty()) {
        int klo = a.coeffs.begin()->first + b.coeffs.begin()->first;
        int khi = a.coeffs.rbegin()->first + b.coeffs.rbegin()->first;
        for (int k = klo; k <= khi; ++k) {
            Elem ck = zero(layer - 1);
            bool any = false;
            for (const auto& [i, ca] : a.coeffs) {
                auto it = b.coeffs.find(k - i);
                if (it == b.coeffs.end()) continue;
                ck = add(ck, mul(ca, it->second, layer - 1), layer - 1);
                any = true;
            }
            if (!any || (represented_zero(ck) && !has_markers(ck) &&
                         certainty(ck, layer - 1) >= ambient_certainty(layer - 1)))
                continue;
            if (k < w.lo)
                discard_floor_lo = std::min(discard_floor_lo, valuation_at(ck, layer - 1).lower_bound());
            else if (k > w.hi)
                discard_floor_hi = std::min(discard_floor_hi, valuation_at(ck, layer - 1).lower_bound());
            else
                known.emplace(k, std::move(ck));
        }
    }

    // fold per-exponent uncertainty into the window
    for (int k = w.lo; k <= w.hi; ++k) {
        long long uh = uncertainty_hi_side(k);
        long long ul = uncertainty_lo_side(k);
        if (uh <= 0) hi_start = std::min(hi_start, k);
        if (ul <= 0) lo_start = std::max(lo_start, k);
        if (uh <= 0 || ul <= 0) continue;
        long long u = std::min({uh, ul, cross});
        if (u == detail::kNoBound) continue;
        auto it = known.find(k);
        if (it != known.end())
            it->second = truncate_certainty(it->second, u, layer - 1);
        else
            known.emplace(k, truncate_certainty(zero(layer - 1), u, layer - 1));
    }
    if (hi_start <= w.lo || lo_start >= w.hi)
        throw WindowOverflow("laurent window lost all certified coefficients");

    // assemble markers
    long long tail_hi = detail::kNoBound, tail_lo = detail::kNoBound;
    {
        long long la = overall_lb(a), lb2 = overall_lb(b);
        if (a.sat_hi) tail_hi = std::min(tail_hi, a.sat_hi->floor + lb2);
        if (b.sat_hi) tail_hi = std::min(tail_hi, la + b.sat_hi->floor);
        if (a.sat_lo) tail_lo = std::min(tail_lo, a.sat_lo->floor + lb2);
        if (b.sat_lo) tail_lo = std::min(tail_lo, la + b.sat_lo->floor);
    }
    long long fl_hi = std::min({discard_floor_hi, tail_hi, cross});
    long long fl_lo = std::min({discard_floor_lo, tail_lo, cross});
    if (hi_start <= w.hi)
        r.sat_hi = SatMarker{hi_start, 0};
    else if (fl_hi != detail::kNoBound)
        r.sat_hi = SatMarker{w.hi + 1, std::max<long long>(fl_hi, 0)};
    if (lo_start >= w.lo)
        r.sat_lo = SatMarker{lo_start, 0};
    else if (fl_lo != detail::kNoBound)
        r.sat_lo = SatMarker{w.lo - 1, std::max<long long>(fl_lo, 0)};

    for (auto& [k, c] : known)
        if (in_known_range(r, k)) r.coeffs.emplace(k, std::move(c));
    normalize_laurent(r, layer);
    return Elem{r};
}

// ---------------------------------------------------------------------------
// Inversion and division
// ---------------------------------------------------------------------------

inline Elem Tower::invert_unit_impl(const Elem& u, int layer) const {
    if (layer == 0) return Elem{u.base().invert()};
    const Step& s = step(layer - 1);

    if (s.kind == StepKind::eisenstein) {
        // u = a_0 (1 + h) with a_0 a unit of the layer below and v(h) >= 1
        const AlgVal& a = u.alg();
        Elem a0inv = invert_unit(a.coeffs[0], layer - 1);
        AlgVal hv;
        hv.coeffs.assign(static_cast<std::size_t>(s.degree), zero(layer - 1));
        for (std::size_t j = 1; j < a.coeffs.size(); ++j)
            hv.coeffs[j] = mul(a.coeffs[j], a0inv, layer - 1);
        Elem h{hv};
        Elem x = one(layer);
        Elem one_plus_h = add(one(layer), h, layer);
        unsigned rounds = newton_rounds(layer);
        for (unsigned i = 0; i < rounds; ++i) {
            Elem t = sub(from_int(2, layer), mul(one_plus_h, x, layer), layer);
            x = mul(x, t, layer);
        }
        Elem res = scale(x, a0inv, layer, layer - 1);
        check_inverse(u, res, layer);
        return res;
    }

    // unramified or laurent: Newton with a residue-field seed
    Elem ru = reduce(u, layer);
    int rlayer = residue_layer_of(layer);
    Elem seed_res = residue().residue_invert(ru, rlayer);
    Elem x = lift(seed_res, rlayer, layer);
    unsigned rounds = newton_rounds(layer);
    for (unsigned i = 0; i < rounds; ++i) {
        Elem t = sub(from_int(2, layer), mul(u, x, layer), layer);
        x = mul(x, t, layer);
    }
    check_inverse(u, x, layer);
    return x;
}

inline Elem Tower::residue_laurent_invert(const Elem& u, int rlayer) const {
    const Step& s = step(rlayer - 1);
    const LaurentVal& l = u.laurent();
    int m = 0;
    const Elem* lead = nullptr;
    for (const auto& [i, c] : l.coeffs) {
        if (!represented_zero(c)) {
            m = i;
            lead = &c;
            break;
        }
    }
    if (!lead) throw NotAUnit("zero residue element has no inverse");
    Elem cinv = residue_invert(*lead, rlayer - 1);
    // w = u * t^-m * lead^-1 = 1 + r with supp(r) >= 1; invert by the series
    // recurrence s_j = -sum_{i>=1} r_i s_{j-i}
    std::map<int, Elem> rmap;
    for (const auto& [i, c] : l.coeffs) {
        if (i <= m) continue;
        Elem t = mul(c, cinv, rlayer - 1);
        if (!represented_zero(t)) rmap.emplace(i - m, std::move(t));
    }
    int jmax = s.window.hi + m; // result exponent j - m must reach window.hi
    std::vector<Elem> sj;
    sj.push_back(one(rlayer - 1));
    for (int j = 1; j <= jmax; ++j) {
        Elem acc = zero(rlayer - 1);
        for (const auto& [i, ri] : rmap) {
            if (i > j) break;
            acc = add(acc, mul(ri, sj[static_cast<std::size_t>(j - i)], rlayer - 1), rlayer - 1);
        }
        sj.push_back(neg(acc, rlayer - 1));
    }
    LaurentVal out;
    bool tail_possible = !rmap.empty();
    for (int j = 0; j <= jmax; ++j) {
        int k = j - m;
        if (k < s.window.lo) {
            continue; // cannot happen for m <= 0; for m > 0 handled by marker
        }
        if (k > s.window.hi) break;
        Elem c = mul(sj[static_cast<std::size_t>(j)], cinv, rlayer - 1);
        if (!represented_zero(c)) out.coeffs.emplace(k, std::move(c));
    }
    if (-m < s.window.lo) out.sat_lo = SatMarker{s.window.lo - 1, 0};
    if (tail_possible) out.sat_hi = SatMarker{s.window.hi + 1, 0};
    return Elem{out};
}

inline Elem Tower::div_uni(const Elem& x, int layer, int eis_step) const {
    if (eis_step < 0) {
        // no Eisenstein step: the uniformizer is p itself
        if (layer == 0) {
            const PAdicInt& b = x.base();
            if (b.precision() < 1)
                throw PrecisionExhausted("no precision left to divide by p");
            if (b.digits() % b.prime() != 0)
                throw ConfigError("element not divisible by p");
            return Elem{PAdicInt(b.prime(), b.digits() / b.prime(), b.precision() - 1)};
        }
        const Step& s = step(layer - 1);
        if (s.kind == StepKind::laurent) {
            const LaurentVal& l = x.laurent();
            LaurentVal r;
            auto shift_marker = [](const std::optional<SatMarker>& mk) -> std::optional<SatMarker> {
                if (!mk) return std::nullopt;
                if (mk->floor < 1)
                    throw PrecisionExhausted("cannot divide saturated tail of unit scale");
                return SatMarker{mk->start, mk->floor - 1};
            };
            r.sat_lo = shift_marker(l.sat_lo);
            r.sat_hi = shift_marker(l.sat_hi);
            for (const auto& [i, c] : l.coeffs) r.coeffs.emplace(i, div_uni(c, layer - 1, -1));
            return Elem{r};
        }
        AlgVal r = x.alg();
        for (auto& c : r.coeffs) c = div_uni(c, layer - 1, -1);
        return Elem{r};
    }

    int eis_layer = eis_step + 1;
    if (layer > eis_layer) {
        const Step& s = step(layer - 1);
        if (s.kind == StepKind::laurent) {
            const LaurentVal& l = x.laurent();
            LaurentVal r;
            auto shift_marker = [](const std::optional<SatMarker>& mk) -> std::optional<SatMarker> {
                if (!mk) return std::nullopt;
                if (mk->floor < 1)
                    throw PrecisionExhausted("cannot divide saturated tail of unit scale");
                return SatMarker{mk->start, mk->floor - 1};
            };
            r.sat_lo = shift_marker(l.sat_lo);
            r.sat_hi = shift_marker(l.sat_hi);
            for (const auto& [i, c] : l.coeffs)
                r.coeffs.emplace(i, div_uni(c, layer - 1, eis_step));
            return Elem{r};
        }
        AlgVal r = x.alg();
        for (auto& c : r.coeffs) c = div_uni(c, layer - 1, eis_step);
        return Elem{r};
    }

    // layer == eis_layer: x = sum a_j pi^j, divide by pi using
    // pi^{-1} = -pi^{n-1} / (c_0 (1 + w)),  w = sum_{j>=1} (c_j/c_0) pi^j
    const Step& s = step(eis_step);
    const AlgVal& a = x.alg();
    std::size_t n = static_cast<std::size_t>(s.degree);
    Elem shifted = zero(layer);
    {
        AlgVal sh;
        sh.coeffs.assign(n, zero(layer - 1));
        for (std::size_t j = 1; j < n; ++j) sh.coeffs[j - 1] = a.coeffs[j];
        shifted = Elem{sh};
    }
    if (represented_zero(a.coeffs[0]) && !has_markers(a.coeffs[0])) {
        // a_0 contributes only below its certainty; keep the quotient honest
        long long c0cert = certainty(a.coeffs[0], layer - 1);
        long long amb = ambient_certainty(layer - 1);
        if (c0cert >= amb) return shifted;
        long long bound = static_cast<long long>(n) * c0cert - 1;
        Elem t = truncate_certainty(zero(layer), std::max<long long>(bound, 1), layer);
        return add(shifted, t, layer);
    }
    Elem sq = divide_exact(a.coeffs[0], s.min_poly[0], layer - 1); // a_0 / c_0
    AlgVal wv;
    wv.coeffs.assign(n, zero(layer - 1));
    for (std::size_t j = 1; j < n; ++j)
        wv.coeffs[j] = divide_exact(s.min_poly[j], s.min_poly[0], layer - 1);
    Elem one_plus_w = add(one(layer), Elem{wv}, layer);
    Elem inv = invert_unit(one_plus_w, layer);
    Elem pin1 = zero(layer);
    {
        AlgVal pv;
        pv.coeffs.assign(n, zero(layer - 1));
        pv.coeffs[n - 1] = one(layer - 1);
        pin1 = Elem{pv};
    }
    Elem corr = neg(mul(mul(promote(sq, layer - 1, layer), pin1, layer), inv, layer), layer);
    return add(shifted, corr, layer);
}

// ---------------------------------------------------------------------------
// Construction and validation
// ---------------------------------------------------------------------------

inline Tower::Tower(const TowerSpec& spec, bool validate, bool as_residue) {
    spec_.p = spec.p;
    spec_.precision = spec.precision;
    is_residue_ = as_residue;
    if (validate) {
        if (!is_prime_u64(spec.p))
            throw Error(errc::non_prime_p, "p = " + std::to_string(spec.p) + " is not prime");
        if (spec.precision < 1) throw ConfigError("precision must be at least 1");
    }
    for (const auto& ss : spec.steps) validate_and_add_step(ss, validate);
}

inline void Tower::validate_and_add_step(const StepSpec& ss, bool validate) {
    int layer = num_steps();
    if (validate) {
        if (ss.var.empty() || ss.var == "X")
            throw Error(errc::parse, "invalid variable name '" + ss.var + "'");
        if (step_of_var(ss.var) >= 0)
            throw Error(errc::duplicate_variable, "variable '" + ss.var + "' declared twice");
        if (ss.kind == StepKind::unramified) {
            for (const auto& prev : steps_)
                if (prev.kind != StepKind::unramified)
                    throw Error(errc::unramified_after_laurent,
                                "unramified step '" + ss.var +
                                    "' must precede all laurent and eisenstein steps");
        }
    }

    Step st;
    st.kind = ss.kind;
    st.var = ss.var;
    st.window = ss.window;

    if (ss.kind == StepKind::laurent) {
        if (validate && (ss.window.lo > 0 || ss.window.hi < 1 || ss.window.lo >= ss.window.hi))
            throw ConfigError("laurent window must contain exponents 0 and 1");
        spec_.steps.push_back(ss);
        steps_.push_back(std::move(st));
        if (!is_residue_) rebuild_residue();
        return;
    }

    ElemPoly f = parse_poly(ss.poly_text, layer);
    int n = f.degree();
    if (n < 1) throw Error(errc::parse, "polynomial for '" + ss.var + "' must have degree >= 1");
    {
        Elem lead_diff = sub(f.c[static_cast<std::size_t>(n)], one(layer), layer);
        if (!represented_zero(lead_diff) || has_markers(lead_diff))
            throw Error(errc::parse, "polynomial for '" + ss.var + "' must be monic");
    }
    st.degree = n;
    st.min_poly.assign(f.c.begin(), f.c.begin() + n);

    if (validate && ss.kind == StepKind::eisenstein) {
        for (int j = 1; j < n; ++j) {
            Valuation v = valuation_at(st.min_poly[static_cast<std::size_t>(j)], layer);
            if (v.lower_bound() < 1)
                throw Error(errc::not_eisenstein,
                            "coefficient of X^" + std::to_string(j) + " in '" + ss.var +
                                "' has valuation < 1");
        }
        Valuation v0 = valuation_at(st.min_poly[0], layer);
        if (v0.exact) {
            if (v0.v != 1)
                throw Error(errc::not_eisenstein, "constant term of '" + ss.var +
                                                      "' has valuation " + std::to_string(v0.v) +
                                                      ", expected exactly 1");
        } else {
            if (v0.lower_bound() > 1)
                throw Error(errc::not_eisenstein,
                            "constant term of '" + ss.var + "' has valuation >= " +
                                std::to_string(v0.lower_bound()) + ", expected exactly 1");
            throw PrecisionExhausted("cannot certify the Eisenstein constant-term valuation of '" +
                                     ss.var + "' at working precision");
        }
    }
    if (validate && ss.kind == StepKind::unramified) validate_unramified(st, layer);

    spec_.steps.push_back(ss);
    steps_.push_back(std::move(st));
    if (!is_residue_) rebuild_residue();
}

inline void Tower::rebuild_residue() {
    TowerSpec rs;
    rs.p = spec_.p;
    rs.precision = 1;
    for (const auto& ss : spec_.steps)
        if (ss.kind != StepKind::eisenstein) rs.steps.push_back(ss);
    residue_ = std::shared_ptr<const Tower>(new Tower(rs, /*validate=*/false, /*as_residue=*/true));
}

// ---------------------------------------------------------------------------
// Finite-field checks for unramified steps
// ---------------------------------------------------------------------------

namespace detail {

/// Dense polynomial arithmetic over residue-tower elements at a fixed layer.
struct RPoly {
    std::vector<Elem> c;
};

inline RPoly rp_trim(const Tower& t, RPoly a) {
    while (!a.c.empty() && t.represented_zero(a.c.back())) a.c.pop_back();
    return a;
}

inline int rp_deg(const RPoly& a) { return static_cast<int>(a.c.size()) - 1; }

inline RPoly rp_sub(const Tower& t, int l, const RPoly& a, const RPoly& b) {
    RPoly r;
    std::size_t n = std::max(a.c.size(), b.c.size());
    r.c.assign(n, t.zero(l));
    for (std::size_t i = 0; i < a.c.size(); ++i) r.c[i] = a.c[i];
    for (std::size_t i = 0; i < b.c.size(); ++i) r.c[i] = t.sub(r.c[i], b.c[i], l);
    return rp_trim(t, r);
}

inline RPoly rp_mul(const Tower& t, int l, const RPoly& a, const RPoly& b) {
    if (a.c.empty() || b.c.empty()) return {};
    RPoly r;
    r.c.assign(a.c.size() + b.c.size() - 1, t.zero(l));
    for (std::size_t i = 0; i < a.c.size(); ++i)
        for (std::size_t j = 0; j < b.c.size(); ++j)
            r.c[i + j] = t.add(r.c[i + j], t.mul(a.c[i], b.c[j], l), l);
    return rp_trim(t, r);
}

inline RPoly rp_mod(const Tower& t, int l, RPoly a, const RPoly& m) {
    Elem lead_inv = t.residue_invert(m.c.back(), l);
    while (rp_deg(a) >= rp_deg(m)) {
        int shift = rp_deg(a) - rp_deg(m);
        Elem q = t.mul(a.c.back(), lead_inv, l);
        for (std::size_t i = 0; i < m.c.size(); ++i) {
            std::size_t k = static_cast<std::size_t>(shift) + i;
            a.c[k] = t.sub(a.c[k], t.mul(q, m.c[i], l), l);
        }
        a = rp_trim(t, a);
        if (a.c.empty()) break;
    }
    return a;
}

inline RPoly rp_gcd(const Tower& t, int l, RPoly a, RPoly b) {
    a = rp_trim(t, a);
    b = rp_trim(t, b);
    while (!b.c.empty()) {
        RPoly r = rp_mod(t, l, a, b);
        a = b;
        b = r;
    }
    return a;
}

inline RPoly rp_powmod_x(const Tower& t, int l, BigInt e, const RPoly& m) {
    RPoly base;
    base.c = {t.zero(l), t.one(l)};
    base = rp_mod(t, l, base, m);
    RPoly r;
    r.c = {t.one(l)};
    while (e > 0) {
        if ((e & 1) != 0) r = rp_mod(t, l, rp_mul(t, l, r, base), m);
        e >>= 1;
        if (e > 0) base = rp_mod(t, l, rp_mul(t, l, base, base), m);
    }
    return r;
}

inline RPoly rp_derivative(const Tower& t, int l, const RPoly& a) {
    RPoly r;
    for (std::size_t i = 1; i < a.c.size(); ++i)
        r.c.push_back(t.scale_by_int(a.c[i], static_cast<long long>(i), l));
    return rp_trim(t, r);
}

} // namespace detail

inline void Tower::validate_unramified(const Step& st, int layer) const {
    const Tower& rt = residue();
    int rl = residue_layer_of(layer);
    detail::RPoly f;
    for (const auto& c : st.min_poly) {
        Valuation v = valuation_at(c, layer);
        if (v.lower_bound() < 0)
            throw Error(errc::not_unramified_separable,
                        "unramified polynomial for '" + st.var + "' has a non-integral coefficient");
        f.c.push_back(reduce(c, layer));
    }
    f.c.push_back(rt.one(rl));
    int n = st.degree;

    // separability: gcd(fbar, fbar') = 1
    detail::RPoly fp = detail::rp_derivative(rt, rl, f);
    detail::RPoly g = detail::rp_gcd(rt, rl, f, fp);
    if (detail::rp_deg(g) != 0)
        throw Error(errc::not_unramified_separable,
                    "reduction of the polynomial for '" + st.var + "' is not separable");

    // irreducibility over F_q (Rabin): x^(q^n) = x mod fbar, and
    // gcd(x^(q^(n/r)) - x, fbar) = 1 for every prime r | n
    BigInt q = pow_big(BigInt(spec_.p), finite_field_degree(rl));
    detail::RPoly x;
    x.c = {rt.zero(rl), rt.one(rl)};
    {
        BigInt e = 1;
        for (int i = 0; i < n; ++i) e *= q;
        detail::RPoly xq = detail::rp_powmod_x(rt, rl, e, f);
        detail::RPoly d = detail::rp_sub(rt, rl, xq, x);
        if (!d.c.empty())
            throw Error(errc::not_unramified_separable,
                        "reduction of the polynomial for '" + st.var + "' is not irreducible");
    }
    for (int r = 2; r <= n; ++r) {
        if (n % r != 0) continue;
        bool is_prime_r = true;
        for (int d = 2; d * d <= r; ++d)
            if (r % d == 0) is_prime_r = false;
        if (!is_prime_r) continue;
        BigInt e = 1;
        for (int i = 0; i < n / r; ++i) e *= q;
        detail::RPoly xq = detail::rp_powmod_x(rt, rl, e, f);
        detail::RPoly d = detail::rp_sub(rt, rl, xq, x);
        detail::RPoly gg = detail::rp_gcd(rt, rl, f, d);
        if (detail::rp_deg(gg) != 0)
            throw Error(errc::not_unramified_separable,
                        "reduction of the polynomial for '" + st.var + "' is not irreducible");
    }
}

// ---------------------------------------------------------------------------
// Polynomial expression parsing
// ---------------------------------------------------------------------------

namespace detail {

struct PolyToken {
    enum Kind { integer, ident, x_var, plus, minus, star, caret, lparen, rparen, end } kind;
    std::string text;
    int col;
};

inline std::vector<PolyToken> poly_lex(const std::string& s, int line, int col0) {
    std::vector<PolyToken> out;
    std::size_t i = 0;
    while (i < s.size()) {
        char ch = s[i];
        int col = col0 + static_cast<int>(i);
        if (std::isspace(static_cast<unsigned char>(ch))) {
            ++i;
            continue;
        }
        if (std::isdigit(static_cast<unsigned char>(ch))) {
            std::size_t j = i;
            while (j < s.size() && std::isdigit(static_cast<unsigned char>(s[j]))) ++j;
            out.push_back({PolyToken::integer, s.substr(i, j - i), col});
            i = j;
            continue;
        }
        if (std::isalpha(static_cast<unsigned char>(ch)) || ch == '_') {
            std::size_t j = i;
            while (j < s.size() &&
                   (std::isalnum(static_cast<unsigned char>(s[j])) || s[j] == '_'))
                ++j;
            std::string id = s.substr(i, j - i);
            out.push_back({id == "X" ? PolyToken::x_var : PolyToken::ident, id, col});
            i = j;
            continue;
        }
        switch (ch) {
        case '+': out.push_back({PolyToken::plus, "+", col}); break;
        case '-': out.push_back({PolyToken::minus, "-", col}); break;
        case '*': out.push_back({PolyToken::star, "*", col}); break;
        case '^': out.push_back({PolyToken::caret, "^", col}); break;
        case '(': out.push_back({PolyToken::lparen, "(", col}); break;
        case ')': out.push_back({PolyToken::rparen, ")", col}); break;
        default:
            throw ParseError(line, col, std::string("unexpected character '") + ch +
                                              "' in polynomial");
        }
        ++i;
    }
    out.push_back({PolyToken::end, "", col0 + static_cast<int>(s.size())});
    return out;
}

struct PolyParser {
    const Tower& tower;
    int layer;
    const std::vector<PolyToken>& toks;
    std::size_t pos = 0;
    int line;

    const PolyToken& peek() const { return toks[pos]; }
    PolyToken take() { return toks[pos++]; }

    [[noreturn]] void fail(const std::string& msg) const {
        throw ParseError(line, peek().col, msg);
    }

    ElemPoly constant(Elem e) const { return ElemPoly{{std::move(e)}}; }

    ElemPoly add(const ElemPoly& a, const ElemPoly& b) const {
        ElemPoly r;
        std::size_t n = std::max(a.c.size(), b.c.size());
        r.c.assign(n, tower.zero(layer));
        for (std::size_t i = 0; i < a.c.size(); ++i) r.c[i] = a.c[i];
        for (std::size_t i = 0; i < b.c.size(); ++i) r.c[i] = tower.add(r.c[i], b.c[i], layer);
        trim(r);
        return r;
    }

    ElemPoly negate(ElemPoly a) const {
        for (auto& e : a.c) e = tower.neg(e, layer);
        return a;
    }

    ElemPoly mul(const ElemPoly& a, const ElemPoly& b) const {
        if (a.c.empty() || b.c.empty()) return {};
        ElemPoly r;
        r.c.assign(a.c.size() + b.c.size() - 1, tower.zero(layer));
        for (std::size_t i = 0; i < a.c.size(); ++i)
            for (std::size_t j = 0; j < b.c.size(); ++j)
                r.c[i + j] = tower.add(r.c[i + j], tower.mul(a.c[i], b.c[j], layer), layer);
        trim(r);
        return r;
    }

    void trim(ElemPoly& a) const {
        while (a.c.size() > 1 && tower.represented_zero(a.c.back()) &&
               !tower.has_markers(a.c.back()))
            a.c.pop_back();
    }

    ElemPoly parse_expr() {
        bool neg_first = false;
        while (peek().kind == PolyToken::minus || peek().kind == PolyToken::plus) {
            if (take().kind == PolyToken::minus) neg_first = !neg_first;
        }
        ElemPoly acc = parse_term();
        if (neg_first) acc = negate(acc);
        while (peek().kind == PolyToken::plus || peek().kind == PolyToken::minus) {
            bool m = take().kind == PolyToken::minus;
            ElemPoly t = parse_term();
            acc = add(acc, m ? negate(t) : t);
        }
        return acc;
    }

    ElemPoly parse_term() {
        ElemPoly acc = parse_power();
        while (peek().kind == PolyToken::star) {
            take();
            acc = mul(acc, parse_power());
        }
        return acc;
    }

    ElemPoly parse_power() {
        ElemPoly base = parse_atom();
        if (peek().kind == PolyToken::caret) {
            take();
            if (peek().kind != PolyToken::integer) fail("expected a nonnegative integer exponent");
            unsigned long long e = std::stoull(take().text);
            ElemPoly r = constant(tower.one(layer));
            ElemPoly b = base;
            while (e) {
                if (e & 1ull) r = mul(r, b);
                e >>= 1;
                if (e) b = mul(b, b);
            }
            return r;
        }
        return base;
    }

    ElemPoly parse_atom() {
        const PolyToken& t = peek();
        switch (t.kind) {
        case PolyToken::integer: {
            BigInt v(take().text);
            return constant(tower.from_int(v, layer));
        }
        case PolyToken::ident: {
            int si = tower.step_of_var(t.text);
            if (si < 0 || si >= layer) fail("unknown identifier '" + t.text + "'");
            take();
            return constant(tower.generator(si, layer));
        }
        case PolyToken::x_var: {
            take();
            ElemPoly r;
            r.c = {tower.zero(layer), tower.one(layer)};
            return r;
        }
        case PolyToken::lparen: {
            take();
            ElemPoly r = parse_expr();
            if (peek().kind != PolyToken::rparen) fail("expected ')'");
            take();
            return r;
        }
        case PolyToken::minus: {
            take();
            return negate(parse_atom());
        }
        default:
            fail("malformed expression");
        }
    }
};

} // namespace detail

inline ElemPoly Tower::parse_poly(const std::string& text, int layer, int err_line,
                                  int err_col) const {
    auto toks = detail::poly_lex(text, err_line, err_col);
    detail::PolyParser p{*this, layer, toks, 0, err_line};
    ElemPoly r = p.parse_expr();
    if (p.peek().kind != detail::PolyToken::end) p.fail("malformed expression");
    if (r.c.empty()) r.c.push_back(zero(layer));
    return r;
}

// ---------------------------------------------------------------------------
// Rendering
// ---------------------------------------------------------------------------

namespace detail {
struct RenderTerm {
    PAdicInt coeff;
    std::vector<std::pair<std::string, int>> powers;
};
} // namespace detail

inline std::string Tower::render(const Elem& x, int layer) const {
    std::vector<detail::RenderTerm> terms;
    std::vector<std::pair<std::string, int>> powers;
    collect_terms(x, layer, powers, terms);
    if (terms.empty()) return "0";
    std::string out;
    for (std::size_t i = 0; i < terms.size(); ++i) {
        std::string c = terms[i].coeff.to_string();
        bool negative = !c.empty() && c[0] == '-';
        std::string mag = negative ? c.substr(1) : c;
        std::string body;
        if (mag != "1" || terms[i].powers.empty()) body = mag;
        for (const auto& [var, e] : terms[i].powers) {
            if (!body.empty()) body += "*";
            body += var;
            if (e != 1) body += "^" + std::to_string(e);
        }
        if (i == 0)
            out += negative ? "-" + body : body;
        else
            out += (negative ? " - " : " + ") + body;
    }
    return out;
}

inline void Tower::collect_terms(const Elem& x, int layer,
                                 std::vector<std::pair<std::string, int>>& powers,
                                 std::vector<detail::RenderTerm>& out) const {
    if (layer == 0) {
        if (!x.base().represented_zero()) out.push_back({x.base(), powers});
        return;
    }
    const Step& s = step(layer - 1);
    if (s.kind == StepKind::laurent) {
        for (const auto& [i, c] : x.laurent().coeffs) {
            if (i != 0) powers.emplace_back(s.var, i);
            collect_terms(c, layer - 1, powers, out);
            if (i != 0) powers.pop_back();
        }
        return;
    }
    const AlgVal& a = x.alg();
    for (std::size_t j = 0; j < a.coeffs.size(); ++j) {
        if (j != 0) powers.emplace_back(s.var, static_cast<int>(j));
        collect_terms(a.coeffs[j], layer - 1, powers, out);
        if (j != 0) powers.pop_back();
    }
}

} // namespace dvf
