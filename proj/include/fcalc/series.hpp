#pragma once

#include "fcalc/rational.hpp"

#include <json.hpp>

#include <cstdint>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <variant>
#include <vector>

namespace fcalc {

struct SeriesError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

enum class Var : std::uint8_t { x0, x1, x2, y0, y1, y2, z, z0, z1, z2 };
inline constexpr int kNumVars = 10;

const char* var_name(Var v);
std::optional<Var> parse_var(std::string_view name);

// Laurent polynomial in z1, z2 with rational coefficients.  Any z0 power is
// rewritten through z0 = z1 - z2 on construction.
class ParamPoly {
  public:
    using Key = std::pair<int, int>; // (exp z1, exp z2)

    ParamPoly() = default;
    explicit ParamPoly(const Rational& c);
    static ParamPoly monomial(const Rational& c, int e1, int e2);
    static ParamPoly z0_power(int e); // e >= 0
    static ParamPoly z1() { return monomial(1, 1, 0); }
    static ParamPoly z2() { return monomial(1, 0, 1); }

    bool is_zero() const { return terms_.empty(); }
    const std::map<Key, Rational>& terms() const { return terms_; }
    void add_term(const Key& k, const Rational& c);

    ParamPoly& operator+=(const ParamPoly& o);
    ParamPoly& operator-=(const ParamPoly& o);
    ParamPoly& operator*=(const Rational& c);
    friend ParamPoly operator+(ParamPoly a, const ParamPoly& b) { return a += b; }
    friend ParamPoly operator-(ParamPoly a, const ParamPoly& b) { return a -= b; }
    friend ParamPoly operator*(const ParamPoly& a, const ParamPoly& b);
    friend ParamPoly operator*(ParamPoly a, const Rational& c) { return a *= c; }
    ParamPoly operator-() const;
    bool operator==(const ParamPoly& o) const { return terms_ == o.terms_; }

    cplx eval(cplx z1, cplx z2) const;
    std::string str() const;

  private:
    std::map<Key, Rational> terms_;
};

enum class CoeffTag { ExactRational, ParamPoly, ComplexFloat };
const char* tag_name(CoeffTag t);

class Coefficient {
  public:
    Coefficient() : v_(Rational(0)) {}
    Coefficient(Rational q) : v_(canon(std::move(q))) {}
    Coefficient(int q) : v_(Rational(q)) {}
    Coefficient(ParamPoly p) : v_(std::move(p)) {}
    Coefficient(cplx c) : v_(c) {}

    static Coefficient zero(CoeffTag t);
    static Coefficient one(CoeffTag t);

    CoeffTag tag() const { return static_cast<CoeffTag>(v_.index()); }
    bool is_zero() const;

    const Rational& rational() const;
    const ParamPoly& param() const;
    cplx complex() const;
    // exact tags convert; ParamPoly needs numeric parameter values
    cplx to_complex(std::optional<std::pair<cplx, cplx>> params = std::nullopt) const;

    Coefficient& operator+=(const Coefficient& o);
    Coefficient& operator-=(const Coefficient& o);
    Coefficient& operator*=(const Coefficient& o);
    friend Coefficient operator+(Coefficient a, const Coefficient& b) { return a += b; }
    friend Coefficient operator-(Coefficient a, const Coefficient& b) { return a -= b; }
    friend Coefficient operator*(Coefficient a, const Coefficient& b) { return a *= b; }
    Coefficient operator-() const;
    bool operator==(const Coefficient& o) const { return v_ == o.v_; }

    std::string str() const;

  private:
    static Rational canon(Rational q) {
        q.canonicalize();
        return q;
    }
    void require_same(const Coefficient& o) const;
    std::variant<Rational, ParamPoly, cplx> v_;
};

struct VarPower {
    Var var;
    Rational exp;
    unsigned log = 0;
    bool operator==(const VarPower& o) const { return var == o.var && exp == o.exp && log == o.log; }
};

class Monomial {
  public:
    Monomial() = default;
    Monomial(std::initializer_list<VarPower> f);

    Rational exp(Var v) const;
    unsigned logpow(Var v) const;
    void set(Var v, const Rational& e, unsigned log = 0);
    bool has(Var v) const;
    Monomial without(Var v) const;
    const std::vector<VarPower>& factors() const { return f_; }
    bool empty() const { return f_.empty(); }

    friend Monomial operator*(const Monomial& a, const Monomial& b);
    bool operator==(const Monomial& o) const { return f_ == o.f_; }
    bool operator<(const Monomial& o) const;
    std::string str() const;

  private:
    std::vector<VarPower> f_; // sorted by var, no (0,0) entries
};

struct Window {
    Rational lo, hi;
    unsigned max_log = 0;
    bool operator==(const Window& o) const { return lo == o.lo && hi == o.hi && max_log == o.max_log; }
};

// Per-variable exponent windows.  A variable absent from the frame is pinned
// to exponent 0 without logs.
class Frame {
  public:
    Frame() = default;
    Frame& set(Var v, Rational lo, Rational hi, unsigned max_log = 0);
    // window [-r, r] for every listed variable
    static Frame box(std::initializer_list<Var> vars, long r, unsigned max_log = 0);

    Window window(Var v) const;
    bool has(Var v) const { return w_.count(v) != 0; }
    const std::map<Var, Window>& windows() const { return w_; }
    bool contains(const Monomial& m) const;
    bool empty() const;

    Frame intersect(const Frame& o) const;
    Frame minkowski(const Frame& o) const;
    Frame without(Var v) const;
    bool operator==(const Frame& o) const { return w_ == o.w_; }

  private:
    std::map<Var, Window> w_;
};

class FormalSeries {
  public:
    using Terms = std::map<Monomial, Coefficient>;

    FormalSeries(CoeffTag tag, Frame frame) : tag_(tag), frame_(std::move(frame)) {}

    CoeffTag tag() const { return tag_; }
    const Frame& frame() const { return frame_; }
    const Terms& terms() const { return terms_; }
    size_t size() const { return terms_.size(); }

    // accumulates; silently drops monomials outside the frame
    void add_term(const Monomial& m, const Coefficient& c);
    // strict variant used by constructors that must not lose data
    void add_term_checked(const Monomial& m, const Coefficient& c);

    bool operator==(const FormalSeries& o) const {
        return tag_ == o.tag_ && frame_ == o.frame_ && terms_ == o.terms_;
    }

  private:
    CoeffTag tag_;
    Frame frame_;
    Terms terms_;
};

FormalSeries series_add(const FormalSeries& a, const FormalSeries& b);
FormalSeries series_neg(const FormalSeries& a);
FormalSeries series_scale(const FormalSeries& a, const Coefficient& c);
// default result frame is the Minkowski sum of the two frames
FormalSeries series_mul(const FormalSeries& a, const FormalSeries& b,
                        const std::optional<Frame>& within = std::nullopt);
Coefficient coeff_at(const FormalSeries& s, const Monomial& m);
FormalSeries residue(const FormalSeries& s, Var v);
FormalSeries formal_derivative(const FormalSeries& s, Var v);

struct AffineForm {
    Coefficient a;
    Var u;
    Coefficient b;
    Var w;
};
// Sum_{k>=0} C(n,k) (a u)^{n-k} (b w)^k, truncated to the frame.  Powers of a
// and b with non-integer exponent are only defined for coefficient 1.
FormalSeries binomial_expand(const AffineForm& base, const Rational& n, Var direction, const Frame& frame);

nlohmann::json to_json(const FormalSeries& s);
FormalSeries series_from_json(const nlohmann::json& j);
std::string serialize(const FormalSeries& s);
FormalSeries deserialize(const std::string& text);

} // namespace fcalc
