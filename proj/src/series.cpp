#include "fcalc/series.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace fcalc {

namespace {
constexpr const char* kVarNames[kNumVars] = {"x0", "x1", "x2", "y0", "y1", "y2", "z", "z0", "z1", "z2"};

cplx int_pow(cplx z, int e) {
    if (e < 0) return 1.0 / int_pow(z, -e);
    cplx r = 1.0;
    while (e) {
        if (e & 1) r *= z;
        z *= z;
        e >>= 1;
    }
    return r;
}
} // namespace

const char* var_name(Var v) { return kVarNames[static_cast<int>(v)]; }

std::optional<Var> parse_var(std::string_view name) {
    for (int i = 0; i < kNumVars; ++i)
        if (name == kVarNames[i]) return static_cast<Var>(i);
    return std::nullopt;
}

// ---- ParamPoly ----

ParamPoly::ParamPoly(const Rational& c) { add_term({0, 0}, c); }

ParamPoly ParamPoly::monomial(const Rational& c, int e1, int e2) {
    ParamPoly p;
    p.add_term({e1, e2}, c);
    return p;
}

ParamPoly ParamPoly::z0_power(int e) {
    if (e < 0) throw SeriesError("negative power of z0 is not a Laurent polynomial in z1, z2");
    ParamPoly p;
    for (int j = 0; j <= e; ++j) {
        Rational c = binom(Rational(e), j);
        if ((e - j) % 2) c = -c;
        p.add_term({j, e - j}, c);
    }
    return p;
}

void ParamPoly::add_term(const Key& k, const Rational& c0) {
    Rational c = c0;
    c.canonicalize();
    if (c == 0) return;
    auto it = terms_.find(k);
    if (it == terms_.end()) {
        terms_.emplace(k, c);
        return;
    }
    it->second += c;
    if (it->second == 0) terms_.erase(it);
}

ParamPoly& ParamPoly::operator+=(const ParamPoly& o) {
    for (const auto& [k, c] : o.terms_) add_term(k, c);
    return *this;
}

ParamPoly& ParamPoly::operator-=(const ParamPoly& o) {
    for (const auto& [k, c] : o.terms_) add_term(k, -c);
    return *this;
}

ParamPoly& ParamPoly::operator*=(const Rational& c) {
    if (c == 0) {
        terms_.clear();
        return *this;
    }
    for (auto& [k, v] : terms_) v *= c;
    return *this;
}

ParamPoly operator*(const ParamPoly& a, const ParamPoly& b) {
    ParamPoly r;
    for (const auto& [ka, ca] : a.terms_)
        for (const auto& [kb, cb] : b.terms_) r.add_term({ka.first + kb.first, ka.second + kb.second}, ca * cb);
    return r;
}

ParamPoly ParamPoly::operator-() const {
    ParamPoly r = *this;
    for (auto& [k, v] : r.terms_) v = -v;
    return r;
}

cplx ParamPoly::eval(cplx z1, cplx z2) const {
    cplx s = 0.0;
    for (const auto& [k, c] : terms_) s += to_double(c) * int_pow(z1, k.first) * int_pow(z2, k.second);
    return s;
}

std::string ParamPoly::str() const {
    if (terms_.empty()) return "0";
    std::ostringstream os;
    bool first = true;
    for (const auto& [k, c] : terms_) {
        if (!first) os << " + ";
        first = false;
        os << to_string(c);
        if (k.first) os << "*z1^" << k.first;
        if (k.second) os << "*z2^" << k.second;
    }
    return os.str();
}

// ---- Coefficient ----

const char* tag_name(CoeffTag t) {
    switch (t) {
    case CoeffTag::ExactRational: return "exact";
    case CoeffTag::ParamPoly: return "param";
    case CoeffTag::ComplexFloat: return "complex";
    }
    return "?";
}

Coefficient Coefficient::zero(CoeffTag t) {
    switch (t) {
    case CoeffTag::ExactRational: return Coefficient(Rational(0));
    case CoeffTag::ParamPoly: return Coefficient(ParamPoly());
    case CoeffTag::ComplexFloat: return Coefficient(cplx(0.0));
    }
    return {};
}

Coefficient Coefficient::one(CoeffTag t) {
    switch (t) {
    case CoeffTag::ExactRational: return Coefficient(Rational(1));
    case CoeffTag::ParamPoly: return Coefficient(ParamPoly(Rational(1)));
    case CoeffTag::ComplexFloat: return Coefficient(cplx(1.0));
    }
    return {};
}

bool Coefficient::is_zero() const {
    switch (tag()) {
    case CoeffTag::ExactRational: return std::get<0>(v_) == 0;
    case CoeffTag::ParamPoly: return std::get<1>(v_).is_zero();
    case CoeffTag::ComplexFloat: return std::get<2>(v_) == cplx(0.0);
    }
    return false;
}

const Rational& Coefficient::rational() const {
    if (tag() != CoeffTag::ExactRational) throw SeriesError("coefficient is not exact rational");
    return std::get<0>(v_);
}

const ParamPoly& Coefficient::param() const {
    if (tag() != CoeffTag::ParamPoly) throw SeriesError("coefficient is not a parameter polynomial");
    return std::get<1>(v_);
}

cplx Coefficient::complex() const {
    if (tag() != CoeffTag::ComplexFloat) throw SeriesError("coefficient is not complex");
    return std::get<2>(v_);
}

cplx Coefficient::to_complex(std::optional<std::pair<cplx, cplx>> params) const {
    switch (tag()) {
    case CoeffTag::ExactRational: return to_double(std::get<0>(v_));
    case CoeffTag::ComplexFloat: return std::get<2>(v_);
    case CoeffTag::ParamPoly:
        if (!params) throw SeriesError("parameter values required to evaluate a parameter polynomial");
        return std::get<1>(v_).eval(params->first, params->second);
    }
    return 0.0;
}

void Coefficient::require_same(const Coefficient& o) const {
    if (tag() != o.tag())
        throw SeriesError(std::string("coefficient tag mismatch: ") + tag_name(tag()) + " vs " + tag_name(o.tag()));
}

Coefficient& Coefficient::operator+=(const Coefficient& o) {
    require_same(o);
    std::visit(
        [&](auto& a) {
            using T = std::decay_t<decltype(a)>;
            a += std::get<T>(o.v_);
        },
        v_);
    return *this;
}

Coefficient& Coefficient::operator-=(const Coefficient& o) {
    require_same(o);
    std::visit(
        [&](auto& a) {
            using T = std::decay_t<decltype(a)>;
            a -= std::get<T>(o.v_);
        },
        v_);
    return *this;
}

Coefficient& Coefficient::operator*=(const Coefficient& o) {
    require_same(o);
    std::visit(
        [&](auto& a) {
            using T = std::decay_t<decltype(a)>;
            a = a * std::get<T>(o.v_);
        },
        v_);
    return *this;
}

Coefficient Coefficient::operator-() const {
    return std::visit([](const auto& a) { return Coefficient(-a); }, v_);
}

std::string Coefficient::str() const {
    switch (tag()) {
    case CoeffTag::ExactRational: return to_string(std::get<0>(v_));
    case CoeffTag::ParamPoly: return std::get<1>(v_).str();
    case CoeffTag::ComplexFloat: return format_complex(std::get<2>(v_));
    }
    return "?";
}

// ---- Monomial ----

Monomial::Monomial(std::initializer_list<VarPower> f) {
    for (const auto& p : f) set(p.var, p.exp, p.log);
}

Rational Monomial::exp(Var v) const {
    for (const auto& p : f_)
        if (p.var == v) return p.exp;
    return 0;
}

unsigned Monomial::logpow(Var v) const {
    for (const auto& p : f_)
        if (p.var == v) return p.log;
    return 0;
}

bool Monomial::has(Var v) const {
    return std::any_of(f_.begin(), f_.end(), [v](const VarPower& p) { return p.var == v; });
}

void Monomial::set(Var v, const Rational& e, unsigned log) {
    auto it = std::lower_bound(f_.begin(), f_.end(), v, [](const VarPower& p, Var x) { return p.var < x; });
    bool trivial = (e == 0 && log == 0);
    if (it != f_.end() && it->var == v) {
        if (trivial)
            f_.erase(it);
        else {
            it->exp = e;
            it->log = log;
        }
    } else if (!trivial) {
        f_.insert(it, VarPower{v, e, log});
    }
}

Monomial Monomial::without(Var v) const {
    Monomial m = *this;
    m.set(v, 0, 0);
    return m;
}

Monomial operator*(const Monomial& a, const Monomial& b) {
    Monomial r = a;
    for (const auto& p : b.f_) r.set(p.var, r.exp(p.var) + p.exp, r.logpow(p.var) + p.log);
    return r;
}

bool Monomial::operator<(const Monomial& o) const {
    size_t n = std::min(f_.size(), o.f_.size());
    for (size_t i = 0; i < n; ++i) {
        const auto& a = f_[i];
        const auto& b = o.f_[i];
        if (a.var != b.var) return a.var < b.var;
        if (a.exp != b.exp) return a.exp < b.exp;
        if (a.log != b.log) return a.log < b.log;
    }
    return f_.size() < o.f_.size();
}

std::string Monomial::str() const {
    if (f_.empty()) return "1";
    std::string s;
    for (const auto& p : f_) {
        if (!s.empty()) s += "*";
        s += var_name(p.var);
        if (p.exp != 1) s += "^(" + to_string(p.exp) + ")";
        if (p.log) s += "*log(" + std::string(var_name(p.var)) + ")^" + std::to_string(p.log);
    }
    return s;
}

// ---- Frame ----

Frame& Frame::set(Var v, Rational lo, Rational hi, unsigned max_log) {
    w_[v] = Window{std::move(lo), std::move(hi), max_log};
    return *this;
}

Frame Frame::box(std::initializer_list<Var> vars, long r, unsigned max_log) {
    Frame f;
    for (Var v : vars) f.set(v, Rational(-r), Rational(r), max_log);
    return f;
}

Window Frame::window(Var v) const {
    auto it = w_.find(v);
    if (it == w_.end()) return Window{0, 0, 0};
    return it->second;
}

bool Frame::contains(const Monomial& m) const {
    for (const auto& p : m.factors())
        if (!w_.count(p.var)) return false;
    for (const auto& [v, w] : w_) {
        Rational e = m.exp(v);
        if (e < w.lo || e > w.hi || m.logpow(v) > w.max_log) return false;
    }
    return true;
}

bool Frame::empty() const {
    return std::any_of(w_.begin(), w_.end(), [](const auto& kv) { return kv.second.lo > kv.second.hi; });
}

Frame Frame::intersect(const Frame& o) const {
    Frame r;
    std::map<Var, bool> vars;
    for (const auto& kv : w_) vars[kv.first] = true;
    for (const auto& kv : o.w_) vars[kv.first] = true;
    for (const auto& kv : vars) {
        Window a = window(kv.first), b = o.window(kv.first);
        r.set(kv.first, std::max(a.lo, b.lo), std::min(a.hi, b.hi), std::min(a.max_log, b.max_log));
    }
    return r;
}

Frame Frame::minkowski(const Frame& o) const {
    Frame r;
    std::map<Var, bool> vars;
    for (const auto& kv : w_) vars[kv.first] = true;
    for (const auto& kv : o.w_) vars[kv.first] = true;
    for (const auto& kv : vars) {
        Window a = window(kv.first), b = o.window(kv.first);
        r.set(kv.first, a.lo + b.lo, a.hi + b.hi, a.max_log + b.max_log);
    }
    return r;
}

Frame Frame::without(Var v) const {
    Frame r = *this;
    r.w_.erase(v);
    return r;
}

// ---- FormalSeries ----

void FormalSeries::add_term(const Monomial& m, const Coefficient& c) {
    if (c.tag() != tag_)
        throw SeriesError(std::string("coefficient tag mismatch: ") + tag_name(c.tag()) + " vs " + tag_name(tag_));
    if (!frame_.contains(m)) return;
    auto it = terms_.find(m);
    if (it == terms_.end()) {
        if (!c.is_zero()) terms_.emplace(m, c);
        return;
    }
    it->second += c;
    if (it->second.is_zero()) terms_.erase(it);
}

void FormalSeries::add_term_checked(const Monomial& m, const Coefficient& c) {
    if (!frame_.contains(m)) throw SeriesError("monomial " + m.str() + " lies outside the frame");
    add_term(m, c);
}

FormalSeries series_add(const FormalSeries& a, const FormalSeries& b) {
    if (a.tag() != b.tag()) throw SeriesError("series_add: coefficient tag mismatch");
    Frame f = a.frame().intersect(b.frame());
    if (f.empty()) throw SeriesError("series_add: empty frame intersection");
    FormalSeries r(a.tag(), f);
    for (const auto& [m, c] : a.terms()) r.add_term(m, c);
    for (const auto& [m, c] : b.terms()) r.add_term(m, c);
    return r;
}

FormalSeries series_neg(const FormalSeries& a) {
    FormalSeries r(a.tag(), a.frame());
    for (const auto& [m, c] : a.terms()) r.add_term(m, -c);
    return r;
}

FormalSeries series_scale(const FormalSeries& a, const Coefficient& c) {
    FormalSeries r(a.tag(), a.frame());
    for (const auto& [m, v] : a.terms()) r.add_term(m, v * c);
    return r;
}

FormalSeries series_mul(const FormalSeries& a, const FormalSeries& b, const std::optional<Frame>& within) {
    if (a.tag() != b.tag()) throw SeriesError("series_mul: coefficient tag mismatch");
    Frame f = a.frame().minkowski(b.frame());
    if (within) f = f.intersect(*within);
    if (f.empty()) throw SeriesError("series_mul: empty product frame");
    FormalSeries r(a.tag(), f);
    for (const auto& [ma, ca] : a.terms())
        for (const auto& [mb, cb] : b.terms()) r.add_term(ma * mb, ca * cb);
    return r;
}

Coefficient coeff_at(const FormalSeries& s, const Monomial& m) {
    if (!s.frame().contains(m)) throw SeriesError("coeff_at: monomial " + m.str() + " outside frame");
    auto it = s.terms().find(m);
    return it == s.terms().end() ? Coefficient::zero(s.tag()) : it->second;
}

FormalSeries residue(const FormalSeries& s, Var v) {
    Window w = s.frame().window(v);
    if (!s.frame().has(v) || w.lo > -1 || w.hi < -1)
        throw SeriesError(std::string("residue: frame of ") + var_name(v) + " does not include exponent -1");
    FormalSeries r(s.tag(), s.frame().without(v));
    for (const auto& [m, c] : s.terms()) {
        if (m.exp(v) != -1) continue;
        if (m.logpow(v) > 0)
            throw SeriesError(std::string("residue: log-bearing ") + var_name(v) + "^-1 term " + m.str());
        r.add_term(m.without(v), c);
    }
    return r;
}

FormalSeries formal_derivative(const FormalSeries& s, Var v) {
    Frame f = s.frame();
    if (f.has(v)) {
        Window w = f.window(v);
        f.set(v, w.lo - 1, w.hi - 1, w.max_log);
    }
    FormalSeries r(s.tag(), f);
    for (const auto& [m, c] : s.terms()) {
        Rational a = m.exp(v);
        unsigned b = m.logpow(v);
        if (a != 0) {
            Monomial d = m;
            d.set(v, a - 1, b);
            Coefficient k = c;
            if (s.tag() == CoeffTag::ComplexFloat)
                k *= Coefficient(cplx(to_double(a)));
            else if (s.tag() == CoeffTag::ParamPoly)
                k *= Coefficient(ParamPoly(a));
            else
                k *= Coefficient(a);
            r.add_term(d, k);
        }
        if (b > 0) {
            Monomial d = m;
            d.set(v, a - 1, b - 1);
            Coefficient k = c;
            Rational bb(b);
            if (s.tag() == CoeffTag::ComplexFloat)
                k *= Coefficient(cplx(double(b)));
            else if (s.tag() == CoeffTag::ParamPoly)
                k *= Coefficient(ParamPoly(bb));
            else
                k *= Coefficient(bb);
            r.add_term(d, k);
        }
    }
    return r;
}

namespace {

Coefficient lift(const Rational& q, CoeffTag t) {
    switch (t) {
    case CoeffTag::ExactRational: return Coefficient(q);
    case CoeffTag::ParamPoly: return Coefficient(ParamPoly(q));
    case CoeffTag::ComplexFloat: return Coefficient(cplx(to_double(q)));
    }
    return {};
}

Coefficient coeff_pow(const Coefficient& c, const Rational& e) {
    Coefficient one = Coefficient::one(c.tag());
    if (c == one) return one;
    if (!is_integer(e)) throw SeriesError("binomial_expand: non-integer power of a coefficient other than 1");
    long n = to_long(e);
    if (n < 0) {
        if (c.tag() == CoeffTag::ExactRational) {
            if (c.rational() == 0) throw SeriesError("binomial_expand: zero coefficient");
            Rational inv = 1 / c.rational();
            return coeff_pow(Coefficient(inv), Rational(-n));
        }
        if (c.tag() == CoeffTag::ComplexFloat) return Coefficient(std::pow(c.complex(), double(n)));
        throw SeriesError("binomial_expand: negative power of a parameter polynomial");
    }
    Coefficient r = one;
    for (long i = 0; i < n; ++i) r *= c;
    return r;
}

} // namespace

FormalSeries binomial_expand(const AffineForm& base, const Rational& n, Var direction, const Frame& frame) {
    if (base.a.is_zero() || base.b.is_zero()) throw SeriesError("binomial_expand: zero coefficient");
    if (base.a.tag() != base.b.tag()) throw SeriesError("binomial_expand: coefficient tag mismatch");
    if (direction != base.u && direction != base.w)
        throw SeriesError("binomial_expand: direction must be one of the two summands");
    CoeffTag t = base.a.tag();
    // normalize so that w receives the nonnegative powers
    Coefficient ca = base.a, cb = base.b;
    Var u = base.u, w = base.w;
    if (direction == base.u) {
        std::swap(ca, cb);
        std::swap(u, w);
    }
    if (!frame.has(w)) throw SeriesError(std::string("binomial_expand: frame lacks ") + var_name(w));
    Window ww = frame.window(w);
    FormalSeries r(t, frame);
    bool finite = n >= 0 && is_integer(n);
    mpz_class fl;
    mpz_fdiv_q(fl.get_mpz_t(), ww.hi.get_num_mpz_t(), ww.hi.get_den_mpz_t());
    long kmax = fl.get_si();
    if (finite) kmax = std::min(kmax, to_long(n));
    for (long k = 0; k <= kmax; ++k) {
        Rational c = binom(n, static_cast<unsigned>(k));
        if (c == 0) continue;
        Monomial m;
        m.set(u, n - k);
        m.set(w, k);
        if (!frame.contains(m)) continue;
        Coefficient coef = lift(c, t) * coeff_pow(ca, n - k) * coeff_pow(cb, Rational(k));
        r.add_term(m, coef);
    }
    return r;
}

// ---- serialization ----

namespace {

nlohmann::json coeff_json(const Coefficient& c) {
    switch (c.tag()) {
    case CoeffTag::ExactRational: return to_string(c.rational());
    case CoeffTag::ComplexFloat: return {{"re", c.complex().real()}, {"im", c.complex().imag()}};
    case CoeffTag::ParamPoly: {
        nlohmann::json arr = nlohmann::json::array();
        for (const auto& [k, q] : c.param().terms()) arr.push_back({{"z1", k.first}, {"z2", k.second}, {"c", to_string(q)}});
        return arr;
    }
    }
    return nullptr;
}

Coefficient coeff_from_json(const nlohmann::json& j, CoeffTag t) {
    switch (t) {
    case CoeffTag::ExactRational: return Coefficient(parse_rational(j.get<std::string>()));
    case CoeffTag::ComplexFloat: return Coefficient(cplx(j.at("re").get<double>(), j.at("im").get<double>()));
    case CoeffTag::ParamPoly: {
        ParamPoly p;
        for (const auto& e : j) p.add_term({e.at("z1").get<int>(), e.at("z2").get<int>()}, parse_rational(e.at("c").get<std::string>()));
        return Coefficient(p);
    }
    }
    return {};
}

Var var_from_json(const std::string& name) {
    auto v = parse_var(name);
    if (!v) throw SeriesError("unknown variable " + name);
    return *v;
}

} // namespace

nlohmann::json to_json(const FormalSeries& s) {
    nlohmann::json j;
    j["tag"] = tag_name(s.tag());
    nlohmann::json fr = nlohmann::json::object();
    for (const auto& [v, w] : s.frame().windows())
        fr[var_name(v)] = {{"lo", to_string(w.lo)}, {"hi", to_string(w.hi)}, {"max_log", w.max_log}};
    j["frame"] = fr;
    nlohmann::json terms = nlohmann::json::array();
    for (const auto& [m, c] : s.terms()) {
        nlohmann::json exps = nlohmann::json::object(), logs = nlohmann::json::object();
        for (const auto& p : m.factors()) {
            if (p.exp != 0) exps[var_name(p.var)] = to_string(p.exp);
            if (p.log) logs[var_name(p.var)] = p.log;
        }
        terms.push_back({{"exps", exps}, {"logs", logs}, {"coeff", coeff_json(c)}});
    }
    j["terms"] = terms;
    return j;
}

FormalSeries series_from_json(const nlohmann::json& j) {
    std::string tn = j.at("tag").get<std::string>();
    CoeffTag t;
    if (tn == "exact")
        t = CoeffTag::ExactRational;
    else if (tn == "param")
        t = CoeffTag::ParamPoly;
    else if (tn == "complex")
        t = CoeffTag::ComplexFloat;
    else
        throw SeriesError("unknown coefficient tag " + tn);
    Frame f;
    for (const auto& [name, w] : j.at("frame").items())
        f.set(var_from_json(name), parse_rational(w.at("lo").get<std::string>()), parse_rational(w.at("hi").get<std::string>()),
              w.value("max_log", 0u));
    FormalSeries s(t, f);
    for (const auto& term : j.at("terms")) {
        Monomial m;
        std::map<Var, std::pair<Rational, unsigned>> acc;
        if (term.contains("exps"))
            for (const auto& [name, e] : term.at("exps").items()) acc[var_from_json(name)].first = parse_rational(e.get<std::string>());
        if (term.contains("logs"))
            for (const auto& [name, l] : term.at("logs").items()) acc[var_from_json(name)].second = l.get<unsigned>();
        for (const auto& [v, el] : acc) m.set(v, el.first, el.second);
        s.add_term_checked(m, coeff_from_json(term.at("coeff"), t));
    }
    return s;
}

std::string serialize(const FormalSeries& s) { return to_json(s).dump(); }

FormalSeries deserialize(const std::string& text) { return series_from_json(nlohmann::json::parse(text)); }

} // namespace fcalc
