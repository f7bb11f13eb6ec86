#include "fcalc/heis.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <set>
#include <sstream>
#include <stdexcept>

namespace fcalc::heis {

namespace {

const double kPi = std::acos(-1.0);

BranchedPoint bp(cplx z, int p = 0) { return {z, p}; }

std::string fmt(cplx z) { return format_complex(z); }

std::string sci(double d) {
    std::ostringstream o;
    o << d;
    return o.str();
}

SumOptions tight() {
    SumOptions o;
    o.tol = 1e-13;
    return o;
}

int max_part(const FockVector& v) {
    int m = 0;
    for (const auto& [p, c] : v.terms)
        if (!p.empty()) m = std::max(m, p.front());
    return m;
}

int min_weight(const FockVector& v) {
    int m = -1;
    for (const auto& [p, c] : v.terms) m = (m < 0) ? weight(p) : std::min(m, weight(p));
    return std::max(m, 0);
}

void note_sum(Report& r, const char* what, const SumResult& s) {
    if (!s.converged())
        r.notes.push_back(std::string(what) + ": " + verdict_name(s.report.status) + " after " +
                          std::to_string(s.levels) + " levels");
}

void track(Report& r, double dev, const std::string& where) {
    ++r.compared;
    if (dev > r.max_deviation || r.worst.empty()) {
        if (dev >= r.max_deviation) {
            r.max_deviation = dev;
            r.worst = where;
        }
    }
}

long rfloor(const Rational& q) {
    mpz_class r;
    mpz_fdiv_q(r.get_mpz_t(), q.get_num_mpz_t(), q.get_den_mpz_t());
    return r.get_si();
}
long rceil(const Rational& q) { return -rfloor(-q); }

cplx cpow_int(cplx z, long n) {
    cplx r = 1.0, b = n >= 0 ? z : 1.0 / z;
    for (long k = std::abs(n); k > 0; --k) r *= b;
    return r;
}

} // namespace

const char* kind_name(Kind k) { return k == Kind::Product ? "product" : "iterate"; }
const char* voa_name(VoaVec v) { return v == VoaVec::Vacuum ? "vacuum" : "h(-1)1"; }

// ---- Omega equations ----

Report check_i2p(const Triple& t, const Insertion& ins, cplx z2, cplx z0, double tol) {
    Report rep;
    rep.name = "i2p";
    auto lhs = sum_iterate(t, ins, bp(z0), bp(z2), tight());
    note_sum(rep, "iterate", lhs);
    Rotation rot = rotate_point_traced(bp(z2), -1);
    Triple tp = t.permuted(2, 0, 1);
    NilC phase = nil_exp(to_complex((t.c[0] + t.c[1]) * t.c[2]) * cplx(0.0, kPi));
    auto bras = exp_L_dual_terms(ins.bra, t.c4());
    cplx rhs = 0.0;
    bool ok = lhs.converged();
    for (size_t m = 0; m < bras.size(); ++m) {
        Insertion in2{ins.w3, ins.w1, ins.w2, bras[m]};
        auto r = sum_product(tp, in2, rot.pt, bp(z0), tight(), phase);
        note_sum(rep, "product", r);
        ok = ok && r.converged();
        rhs += std::pow(z2, double(m)) * r.value;
    }
    track(rep, rel_dev(lhs.value, rhs), "(z2,z0)=(" + fmt(z2) + "," + fmt(z0) + ")");
    rep.notes.push_back("casework: " + rot.casework);
    rep.notes.push_back("iterate " + fmt(lhs.value) + ", transformed product " + fmt(rhs));
    rep.pass = ok && rep.max_deviation <= tol;
    return rep;
}

Report check_p2i(const Triple& t, const Insertion& ins, cplx z1, cplx z2, double tol) {
    Report rep;
    rep.name = "p2i";
    auto lhs = sum_product(t, ins, bp(z1), bp(z2), tight());
    note_sum(rep, "product", lhs);
    Rotation rot = rotate_point_traced(bp(z1), 1);
    Triple tp = t.permuted(1, 2, 0);
    NilC phase = nil_exp(to_complex(t.c[0] * (t.c[1] + t.c[2])) * cplx(0.0, -kPi));
    auto bras = exp_L_dual_terms(ins.bra, t.c4());
    cplx rhs = 0.0;
    bool ok = lhs.converged();
    for (size_t m = 0; m < bras.size(); ++m) {
        Insertion in2{ins.w2, ins.w3, ins.w1, bras[m]};
        auto r = sum_iterate(tp, in2, bp(z2), rot.pt, tight(), phase);
        note_sum(rep, "iterate", r);
        ok = ok && r.converged();
        rhs += std::pow(z1, double(m)) * r.value;
    }
    track(rep, rel_dev(lhs.value, rhs), "(z1,z2)=(" + fmt(z1) + "," + fmt(z2) + ")");
    rep.notes.push_back("casework: " + rot.casework);
    rep.notes.push_back("product " + fmt(lhs.value) + ", transformed iterate " + fmt(rhs));
    rep.pass = ok && rep.max_deviation <= tol;
    return rep;
}

namespace {
void compare_series(Report& rep, const FormalSeries& a, const FormalSeries& b, const std::string& label) {
    double scale = 1.0;
    for (const auto& [m, c] : a.terms()) scale = std::max(scale, std::abs(c.to_complex()));
    auto one = [&](const Monomial& m) {
        double d = std::abs(coeff_at(a, m).to_complex() - coeff_at(b, m).to_complex()) / scale;
        track(rep, d, label + " " + m.str());
    };
    for (const auto& [m, c] : a.terms()) one(m);
    for (const auto& [m, c] : b.terms())
        if (!a.terms().count(m)) one(m);
}
} // namespace

Report check_omega_inverse(const Nil& ca, const Nil& cb, const FockVector& bra, const FockVector& a,
                           const FockVector& b, double tol) {
    Report rep;
    rep.name = "omega";
    IntwOpSpec Y = standard_op(ca, cb);
    compare_series(rep, intw_series(Y, bra, a, b), intw_series(omega_transform(omega_transform(Y, -1), 0), bra, a, b),
                   "O0.O-1");
    compare_series(rep, intw_series(Y, bra, a, b), intw_series(omega_transform(omega_transform(Y, 0), -1), bra, a, b),
                   "O-1.O0");
    for (int r : {0, -1}) {
        IntwOpSpec o = omega_transform(Y, r);
        compare_series(rep, intw_series(o, bra, b, a), intw_series_realized(o, bra, b, a),
                       "realized r=" + std::to_string(r));
    }
    rep.pass = rep.max_deviation <= tol;
    return rep;
}

// ---- composite Jacobi ----

namespace {

using Corr = std::function<FormalSeries(const Insertion&)>;

// a multiplier in (xv, ya, yb): sum_n xv^{-n-1} corr(insertion with h(n) applied to one slot)
struct GSpec {
    int slot;   // 0..2 for w1..w3, 3 for the bra
    Var xv;
};

Monomial renamed(const Monomial& m, Var a_from, Var a_to, Var b_from, Var b_to) {
    Monomial r;
    for (const auto& f : m.factors()) {
        Var v = f.var == a_from ? a_to : (f.var == b_from ? b_to : f.var);
        r.set(v, f.exp, f.log);
    }
    return r;
}

Insertion with_slot(const Insertion& ins, int slot, const FockVector& v) {
    Insertion r = ins;
    if (slot == 0) r.w1 = v;
    else if (slot == 1) r.w2 = v;
    else if (slot == 2) r.w3 = v;
    else r.bra = v;
    return r;
}

const FockVector& slot_of(const Insertion& ins, int slot) {
    return slot == 0 ? ins.w1 : slot == 1 ? ins.w2 : slot == 2 ? ins.w3 : ins.bra;
}

Nil slot_charge(const Triple& t, int slot) { return slot < 3 ? t.c[slot] : t.c4(); }

FockVector h_slot(int n, const Triple& t, const Insertion& ins, int slot) {
    if (slot == 3) return apply_h_dual(n, ins.bra, t.c4());
    return apply_h(n, slot_of(ins, slot), t.c[slot]);
}

// x-exponent window of a multiplier: the known side comes from the mode
// truncation, the other side is the working window
std::pair<long, long> g_window(VoaVec v, const Insertion& ins, int slot, long W) {
    if (v == VoaVec::Vacuum) return {0, 0};
    if (slot == 3) return {-W, max_part(ins.bra) - 1};
    return {-max_part(slot_of(ins, slot)) - 1, W};
}

} // namespace

namespace {

struct JacobiSetup {
    Kind kind;
    VoaVec v;
    Triple t;
    Insertion ins;
};

std::vector<DeltaKernel> lhs_kernels(Kind k, bool formal) {
    Var a = formal ? Var::y1 : Var::z1, b = formal ? Var::y2 : Var::z2, c = formal ? Var::y0 : Var::z0;
    if (k == Kind::Product) return {dlt(Var::x1, plus(Var::x0), minus(a)), dlt(Var::x2, plus(Var::x0), minus(b))};
    return {dlt(Var::x2, plus(Var::x0), minus(b)), dlt(Var::x1, plus(Var::x2), minus(c))};
}

std::vector<DeltaKernel> rhs_kernels(Kind k, int term, bool formal) {
    Var a = formal ? Var::y1 : Var::z1, b = formal ? Var::y2 : Var::z2, c = formal ? Var::y0 : Var::z0;
    if (k == Kind::Product) {
        if (term == 0) return {dlt(a, plus(Var::x0), minus(Var::x1)), dlt(Var::x2, plus(Var::x0), minus(b))};
        if (term == 1) return {dlt(Var::x1, minus(a), plus(Var::x0)), dlt(b, plus(Var::x0), minus(Var::x2))};
        return {dlt(Var::x1, minus(a), plus(Var::x0)), dlt(Var::x2, minus(b), plus(Var::x0))};
    }
    if (term == 0) return {dlt(b, plus(Var::x0), minus(Var::x2)), dlt(c, plus(Var::x2), minus(Var::x1))};
    if (term == 1) return {dlt(b, plus(Var::x0), minus(Var::x2)), dlt(Var::x1, minus(c), plus(Var::x2))};
    return {dlt(Var::x2, minus(b), plus(Var::x0)), dlt(Var::x1, plus(Var::x2), minus(c))};
}

// slot whose h(n) enters each side, and the variable carrying the modes
GSpec g_spec(int term) {
    if (term < 0) return {3, Var::x0};
    if (term == 0) return {0, Var::x1};
    if (term == 1) return {1, Var::x2};
    return {2, Var::x0};
}

// formal multiplier: correlator series in the y variables
Multiplier formal_multiplier(const JacobiSetup& s, int term, long xw, long yw) {
    GSpec g = g_spec(term);
    bool prod = s.kind == Kind::Product;
    Var ya = prod ? Var::y1 : Var::y0, yb = Var::y2;
    Var xa = prod ? Var::x1 : Var::x0, xb = Var::x2;
    auto [lo, hi] = g_window(s.v, s.ins, g.slot, xw);
    const Triple& t = s.t;
    Nil Ea = prod ? t.c[0] * (t.c[1] + t.c[2]) : t.c[0] * t.c[1];
    Nil Eb = prod ? t.c[1] * t.c[2] : (t.c[0] + t.c[1]) * t.c[2];
    unsigned D = unsigned(t.shape.max_degree());
    Frame f;
    f.set(g.xv, lo, hi, 0);
    f.set(ya, -yw, yw, D);
    f.set(yb, -yw, yw, D);
    Multiplier m{FormalSeries(CoeffTag::ExactRational, f), {}, false};
    for (long e = lo; e <= hi; ++e) {
        Insertion in = s.ins;
        if (s.v == VoaVec::H1) {
            long n = -e - 1;
            in = with_slot(s.ins, g.slot, h_slot(int(n), t, s.ins, g.slot));
        }
        if (slot_of(in, g.slot).is_zero()) continue;
        long levels;
        if (prod) {
            // y2 = Eb + j, j <= L - wt2 - wt3; y1 = Ea + wt4 - wt1 - n
            long l1 = yw - rfloor((Eb.scalar())) + in.w2.max_weight() + in.w3.max_weight() + 1;
            long l2 = rceil((Ea.scalar())) + in.bra.max_weight() + yw + 1;
            levels = std::max({l1, l2, 0L});
        } else {
            long l1 = yw - rfloor((Ea.scalar())) + in.w1.max_weight() + in.w2.max_weight() + 1;
            long l2 = rceil((Eb.scalar())) + in.bra.max_weight() + yw + 1;
            levels = std::max({l1, l2, 0L});
        }
        FormalSeries c = prod ? product_correlator(t, in, levels) : iterate_correlator(t, in, levels);
        for (const auto& [mon, co] : c.terms()) {
            Monomial r = prod ? renamed(mon, xa, ya, xb, yb) : renamed(mon, xa, ya, xb, yb);
            Coefficient cc = co;
            if (s.v == VoaVec::H1 && g.slot == 3) cc = co; // Y_4(v, x0) = sum h(n) x0^{-n-1}
            Monomial full = r;
            full.set(g.xv, e, 0);
            m.series.add_term(full, cc);
        }
    }
    // exact bounds
    m.exact[g.xv] = SupportBound{Rational(lo), std::nullopt};
    if (g.slot == 3) m.exact[g.xv] = SupportBound{std::nullopt, Rational(hi)};
    if (s.v == VoaVec::Vacuum) m.exact[g.xv] = SupportBound{Rational(0), Rational(0)};
    bool fixed1 = s.v == VoaVec::Vacuum;
    if (prod) {
        // y2 >= Eb - wt2 - wt3 when w2, w3 fixed; y1 <= Ea + wt4 - wt1 when bra, w1 fixed
        if (fixed1 || g.slot == 0 || g.slot == 3)
            m.exact[yb].lo = Eb.scalar() - s.ins.w2.max_weight() - s.ins.w3.max_weight();
        if (fixed1 || g.slot != 3)
            m.exact[ya].hi = Ea.scalar() + s.ins.bra.max_weight() - (g.slot == 0 ? 0 : min_weight(s.ins.w1));
    } else {
        if (fixed1 || g.slot == 2 || g.slot == 3)
            m.exact[ya].lo = Ea.scalar() - s.ins.w1.max_weight() - s.ins.w2.max_weight();
        if (fixed1 || g.slot != 3)
            m.exact[yb].hi = Eb.scalar() + s.ins.bra.max_weight() - (g.slot == 2 ? 0 : min_weight(s.ins.w3));
    }
    if (s.v == VoaVec::H1 && g.slot == 3) m.exact[g.xv].lo.reset();
    return m;
}

// numeric multiplier in the mode variable only
Multiplier numeric_multiplier(const JacobiSetup& s, int term, long xw, cplx za, cplx zb, Report& rep, bool& ok) {
    GSpec g = g_spec(term);
    auto [lo, hi] = g_window(s.v, s.ins, g.slot, xw);
    Frame f;
    f.set(g.xv, lo, hi, 0);
    Multiplier m{FormalSeries(CoeffTag::ComplexFloat, f), {}, false};
    for (long e = lo; e <= hi; ++e) {
        Insertion in = s.ins;
        if (s.v == VoaVec::H1) in = with_slot(s.ins, g.slot, h_slot(int(-e - 1), s.t, s.ins, g.slot));
        if (slot_of(in, g.slot).is_zero()) continue;
        SumResult r = s.kind == Kind::Product ? sum_product(s.t, in, bp(za), bp(zb), tight())
                                              : sum_iterate(s.t, in, bp(zb), bp(za), tight());
        if (!r.converged()) {
            ok = false;
            note_sum(rep, "multiplier", r);
        }
        Monomial mon;
        mon.set(g.xv, e, 0);
        if (r.value != 0.0) m.series.add_term(mon, r.value);
    }
    if (s.v == VoaVec::Vacuum) m.exact[g.xv] = SupportBound{Rational(0), Rational(0)};
    else if (g.slot == 3) m.exact[g.xv] = SupportBound{std::nullopt, Rational(hi)};
    else m.exact[g.xv] = SupportBound{Rational(lo), std::nullopt};
    return m;
}

} // namespace

Report check_composite_jacobi_formal(Kind kind, VoaVec v, const Triple& t, const Insertion& ins,
                                     const JacobiOptions& opt) {
    Report rep;
    rep.name = std::string("jacobi-formal-") + kind_name(kind) + "-" + voa_name(v);
    JacobiSetup s{kind, v, t, ins};
    bool prod = kind == Kind::Product;
    long F = opt.frame;
    unsigned D = unsigned(t.shape.max_degree());
    Frame frame;
    frame.set(Var::x0, -F, F).set(Var::x1, -F, F).set(Var::x2, -F, F);
    frame.set(prod ? Var::y1 : Var::y0, -F, F, D).set(Var::y2, -F, F, D);
    long xw = std::max<long>(opt.cutoff, 3 * F + 4), yw = 6 * F + 10;
    for (int attempt = 0; attempt < 4; ++attempt, xw *= 2, yw *= 2) {
        try {
            DeltaExpr L{lhs_kernels(kind, true), formal_multiplier(s, -1, xw, yw)};
            Expansion lhs = expand_delta(L, frame, ParamEnv::symbolic());
            FormalSeries rhs(lhs.series.tag(), frame);
            for (int term = 0; term < 3; ++term) {
                DeltaExpr R{rhs_kernels(kind, term, true), formal_multiplier(s, term, xw, yw)};
                rhs = series_add(rhs, expand_delta(R, frame, ParamEnv::symbolic()).series);
            }
            size_t bad = 0;
            auto one = [&](const Monomial& m) {
                Coefficient a = coeff_at(lhs.series, m), b = coeff_at(rhs, m);
                bool eq = a == b;
                ++rep.compared;
                if (!eq) {
                    ++bad;
                    if (rep.worst.empty()) rep.worst = m.str() + ": " + a.str() + " vs " + b.str();
                    rep.max_deviation = 1.0;
                }
            };
            for (const auto& [m, c] : lhs.series.terms()) one(m);
            for (const auto& [m, c] : rhs.terms())
                if (!lhs.series.terms().count(m)) one(m);
            rep.notes.push_back("lhs terms " + std::to_string(lhs.series.size()) + ", rhs terms " +
                                std::to_string(rhs.size()) + ", mismatches " + std::to_string(bad));
            rep.pass = bad == 0 && lhs.series.size() > 0;
            return rep;
        } catch (const FrameInsufficient& e) {
            rep.notes.push_back(std::string("widening multiplier windows: ") + e.what());
        }
    }
    rep.pass = false;
    rep.notes.push_back("multiplier windows insufficient");
    return rep;
}

Report check_composite_jacobi_numeric(Kind kind, VoaVec v, const Triple& t, const Insertion& ins, cplx za, cplx zb,
                                      const JacobiOptions& opt) {
    Report rep;
    rep.name = std::string("jacobi-numeric-") + kind_name(kind) + "-" + voa_name(v);
    bool prod = kind == Kind::Product;
    if (prod ? !(std::abs(za) > std::abs(zb) && std::abs(zb) > 0) : !(std::abs(za) > std::abs(zb) && std::abs(zb) > 0))
        throw DomainViolation(prod ? "|z1|>|z2|>0 violated" : "|z2|>|z0|>0 violated");
    JacobiSetup s{kind, v, t, ins};
    long F = opt.frame;
    Frame frame = Frame::box({Var::x0, Var::x1, Var::x2}, F);
    ParamEnv env = prod ? ParamEnv::numeric(za, zb) : ParamEnv::numeric(za + zb, za);
    ExtractOptions eo;
    eo.probe.tol = 1e-12;
    eo.probe.max_terms = 4000;
    long xw = std::max<long>(opt.cutoff, 3 * F + 4);
    for (int attempt = 0; attempt < 4; ++attempt, xw *= 2) {
        try {
            bool ok = true;
            DeltaExpr L{lhs_kernels(kind, false), numeric_multiplier(s, -1, xw, za, zb, rep, ok)};
            Expansion lhs = expand_delta(L, frame, env, eo);
            std::vector<Expansion> rhs;
            for (int term = 0; term < 3; ++term) {
                DeltaExpr R{rhs_kernels(kind, term, false), numeric_multiplier(s, term, xw, za, zb, rep, ok)};
                rhs.push_back(expand_delta(R, frame, env, eo));
            }
            size_t unconverged = 0;
            auto count = [&](const Expansion& e) {
                for (const auto& [m, r] : e.reports)
                    if (!r.converged()) ++unconverged;
            };
            count(lhs);
            for (const auto& e : rhs) count(e);
            double scale = 1.0;
            for (const auto& [m, c] : lhs.series.terms()) scale = std::max(scale, std::abs(c.to_complex()));
            std::set<Monomial> keys;
            for (const auto& [m, c] : lhs.series.terms()) keys.insert(m);
            for (const auto& e : rhs)
                for (const auto& [m, c] : e.series.terms()) keys.insert(m);
            for (const auto& m : keys) {
                cplx a = coeff_at(lhs.series, m).to_complex(), b = 0.0;
                for (const auto& e : rhs) b += coeff_at(e.series, m).to_complex();
                track(rep, std::abs(a - b) / scale, m.str());
            }
            rep.notes.push_back("monomials " + std::to_string(keys.size()) + ", unconverged probes " +
                                std::to_string(unconverged));
            rep.pass = ok && unconverged == 0 && rep.max_deviation <= opt.tol && !keys.empty();
            return rep;
        } catch (const FrameInsufficient& e) {
            rep.notes.push_back(std::string("widening multiplier window: ") + e.what());
        }
    }
    rep.pass = false;
    return rep;
}

// ---- sl(2) ----

Report check_sl2(Kind kind, int j, const Triple& t, const Insertion& ins, cplx za, cplx zb, double tol) {
    if (j < -1 || j > 1) throw std::invalid_argument("sl2: j must be -1, 0 or 1");
    Report rep;
    rep.name = std::string("sl2-") + kind_name(kind) + " j=" + std::to_string(j);
    bool prod = kind == Kind::Product;
    if (!(std::abs(za) > std::abs(zb) && std::abs(zb) > 0))
        throw DomainViolation(prod ? "|z1|>|z2|>0 violated" : "|z2|>|z0|>0 violated");
    bool ok = true;
    auto F = [&](const Insertion& in) {
        if (in.w1.is_zero() || in.w2.is_zero() || in.w3.is_zero() || in.bra.is_zero()) return cplx(0.0);
        SumResult r = prod ? sum_product(t, in, bp(za), bp(zb), tight()) : sum_iterate(t, in, bp(zb), bp(za), tight());
        if (!r.converged()) {
            ok = false;
            note_sum(rep, "sum", r);
        }
        return r.value;
    };
    cplx z1 = prod ? za : za + zb, z2 = prod ? zb : za;
    Insertion L = ins;
    L.bra = apply_L_dual(j, ins.bra, t.c4());
    cplx lhs = F(L);
    cplx rhs = 0.0;
    for (int i = 0; i <= j + 1; ++i) {
        double b = binom(Rational(j + 1), unsigned(i)).get_d();
        Insertion a = ins;
        a.w1 = apply_L(j - i, ins.w1, t.c[0]);
        rhs += b * std::pow(z1, double(i)) * F(a);
        Insertion c = ins;
        c.w2 = apply_L(j - i, ins.w2, t.c[1]);
        rhs += b * std::pow(z2, double(i)) * F(c);
    }
    Insertion c3 = ins;
    c3.w3 = apply_L(j, ins.w3, t.c[2]);
    rhs += F(c3);
    track(rep, rel_dev(lhs, rhs), "bracket");
    rep.notes.push_back("lhs " + fmt(lhs) + ", rhs " + fmt(rhs));
    double fd_dev = 0.0;
    if (j == -1 && prod && ins.w1.is_highest_weight() && ins.w2.is_highest_weight() && ins.w3.is_highest_weight() &&
        ins.bra.is_highest_weight()) {
        // L(-1) on w1, w2 against central differences of the closed form
        ClosedForm cf = closed_form_correlator(t, ins);
        double h = 1e-4;
        cplx d1 = (cf.product_chart(bp(za + h), bp(zb)) - cf.product_chart(bp(za - h), bp(zb))) / (2 * h);
        cplx d2 = (cf.product_chart(bp(za), bp(zb + h)) - cf.product_chart(bp(za), bp(zb - h))) / (2 * h);
        Insertion a = ins, c = ins;
        a.w1 = apply_L(-1, ins.w1, t.c[0]);
        c.w2 = apply_L(-1, ins.w2, t.c[1]);
        cplx f1 = F(a), f2 = F(c);
        fd_dev = std::max(std::abs(f1 - d1) / std::max(1.0, std::abs(d1)), std::abs(f2 - d2) / std::max(1.0, std::abs(d2)));
        { std::ostringstream o; o << "finite-difference deviation " << fd_dev; rep.notes.push_back(o.str()); }
    }
    rep.pass = ok && rep.max_deviation <= tol && fd_dev <= 1e-6;
    return rep;
}

// ---- functionals ----

namespace {
std::string key_of(const FockVector& a, const FockVector& b, const FockVector& c) {
    return a.str() + "|" + b.str() + "|" + c.str();
}

// value of a functional given on basis triples, extended multilinearly
cplx multilinear(const NilShape& s, const FockVector& w1, const FockVector& w2, const FockVector& w3,
                 const std::function<cplx(const Partition&, const Partition&, const Partition&, std::array<int, 3>)>& f) {
    cplx sum = 0.0;
    for (const auto& [P1, a1] : w1.terms)
        for (const auto& [P2, a2] : w2.terms)
            for (const auto& [P3, a3] : w3.terms) {
                Nil a = a1 * a2 * a3;
                for (int i = 0; i < s.K[0]; ++i)
                    for (int j = 0; j < s.K[1]; ++j)
                        for (int k = 0; k < s.K[2]; ++k) {
                            const Rational& c = a.at(i, j, k);
                            if (c == 0) continue;
                            sum += to_double(c) * f(P1, P2, P3, {i, j, k});
                        }
            }
    return sum;
}
} // namespace

TripleFunctional TripleFunctional::from_product(const Triple& t, const FockVector& bra, cplx z1, cplx z2, int p,
                                                int q) {
    TripleFunctional f;
    f.t_ = t;
    f.z1_ = z1;
    f.z2_ = z2;
    f.p_ = p;
    f.q_ = q;
    f.kind_ = "product";
    f.bra_top_ = max_part(bra);
    f.cache_ = std::make_shared<std::map<std::string, cplx>>();
    f.eval_ = [t, bra, z1, z2, p, q](const FockVector& a, const FockVector& b, const FockVector& c) {
        SumResult r = sum_product(t, {a, b, c, bra}, bp(z1, p), bp(z2, q), tight());
        return r.value;
    };
    return f;
}

TripleFunctional TripleFunctional::random(const Triple& t, std::uint64_t seed, int cutoff) {
    TripleFunctional f;
    f.t_ = t;
    f.kind_ = "random";
    f.cache_ = std::make_shared<std::map<std::string, cplx>>();
    NilShape s = t.shape;
    f.eval_ = [s, seed, cutoff](const FockVector& a, const FockVector& b, const FockVector& c) {
        return multilinear(s, a, b, c, [&](const Partition& P1, const Partition& P2, const Partition& P3,
                                           std::array<int, 3> J) -> cplx {
            if (weight(P1) + weight(P2) + weight(P3) > cutoff) return 0.0;
            std::string k = partition_str(P1) + "|" + partition_str(P2) + "|" + partition_str(P3) + "|" +
                            std::to_string(J[0]) + std::to_string(J[1]) + std::to_string(J[2]);
            std::mt19937_64 g(seed ^ std::hash<std::string>{}(k));
            std::normal_distribution<double> nd;
            return cplx(nd(g), nd(g));
        });
    };
    return f;
}

TripleFunctional TripleFunctional::zero(const Triple& t) {
    TripleFunctional f;
    f.t_ = t;
    f.kind_ = "zero";
    f.cache_ = std::make_shared<std::map<std::string, cplx>>();
    f.eval_ = [](const FockVector&, const FockVector&, const FockVector&) { return cplx(0.0); };
    return f;
}

cplx TripleFunctional::operator()(const FockVector& a, const FockVector& b, const FockVector& c) const {
    if (a.is_zero() || b.is_zero() || c.is_zero()) return 0.0;
    std::string k = key_of(a, b, c);
    auto it = cache_->find(k);
    if (it != cache_->end()) return it->second;
    cplx v = eval_(a, b, c);
    cache_->emplace(k, v);
    return v;
}

cplx L_prime_action(int j, const TripleFunctional& lam, const FockVector& w1, const FockVector& w2,
                    const FockVector& w3) {
    if (j < -1 || j > 1) throw std::invalid_argument("L': j must be -1, 0 or 1");
    const Triple& t = lam.triple();
    cplx s = 0.0;
    for (int i = 0; i <= 1 - j; ++i) {
        double b = binom(Rational(1 - j), unsigned(i)).get_d();
        s += b * cpow_int(lam.z1(), i) * lam(apply_L(-j - i, w1, t.c[0]), w2, w3);
        s += b * cpow_int(lam.z2(), i) * lam(w1, apply_L(-j - i, w2, t.c[1]), w3);
    }
    s += lam(w1, w2, apply_L(-j, w3, t.c[2]));
    return s;
}

// ---- tau ----

namespace {

Multiplier constant_multiplier(cplx c) {
    Multiplier m{FormalSeries(CoeffTag::ComplexFloat, Frame{}), {}, true};
    if (c != 0.0) m.series.add_term(Monomial{}, c);
    return m;
}

// -x0^{-2} sum_n xv^{-n-1} lam(.. h(n) w ..) for slot 0 or 1
Multiplier slot_multiplier(const TripleFunctional& lam, int slot, const FockVector& w1, const FockVector& w2,
                           const FockVector& w3, long W) {
    const Triple& t = lam.triple();
    Var xv = slot == 0 ? Var::x1 : Var::x2;
    const FockVector& w = slot == 0 ? w1 : w2;
    long lo = -max_part(w) - 1;
    Frame f;
    f.set(Var::x0, -2, -2).set(xv, lo, W);
    Multiplier m{FormalSeries(CoeffTag::ComplexFloat, f), {}, false};
    for (long e = lo; e <= W; ++e) {
        FockVector hw = apply_h(int(-e - 1), w, t.c[slot]);
        cplx v = slot == 0 ? lam(hw, w2, w3) : lam(w1, hw, w3);
        if (v == 0.0) continue;
        Monomial mon;
        mon.set(Var::x0, -2);
        mon.set(xv, e);
        m.series.add_term(mon, -v);
    }
    m.exact[Var::x0] = SupportBound{Rational(-2), Rational(-2)};
    m.exact[xv] = SupportBound{Rational(lo), std::nullopt};
    return m;
}

// -sum_n x0^{n-1} lam(w1, w2, h(n) w3)
Multiplier slot3_multiplier(const TripleFunctional& lam, const FockVector& w1, const FockVector& w2,
                            const FockVector& w3, long W) {
    const Triple& t = lam.triple();
    long hi = max_part(w3) - 1;
    Frame f;
    f.set(Var::x0, -W, hi);
    Multiplier m{FormalSeries(CoeffTag::ComplexFloat, f), {}, false};
    for (long e = -W; e <= hi; ++e) {
        cplx v = lam(w1, w2, apply_h(int(e + 1), w3, t.c[2]));
        if (v == 0.0) continue;
        Monomial mon;
        mon.set(Var::x0, e);
        m.series.add_term(mon, -v);
    }
    m.exact[Var::x0] = SupportBound{std::nullopt, Rational(hi)};
    return m;
}

ExtractOptions tau_extract() {
    ExtractOptions eo;
    eo.probe.tol = 1e-12;
    eo.probe.max_terms = 4000;
    return eo;
}

FormalSeries tau_action_w(VoaVec v, const TripleFunctional& lam, const FockVector& w1, const FockVector& w2,
                          const FockVector& w3, const Frame& frame, long W, size_t* unconverged) {
    ParamEnv env = ParamEnv::numeric(lam.z1(), lam.z2());
    std::vector<DeltaExpr> ex;
    DeltaKernel k1a = dlti(Var::x0, plus(Var::z1), plus(Var::x1)), k1b = dlt(Var::x2, plus(Var::z0), plus(Var::x1));
    DeltaKernel k2a = dlti(Var::x0, plus(Var::z2), plus(Var::x2)), k2b = dlt(Var::x1, minus(Var::z0), plus(Var::x2));
    DeltaKernel k3a = dlt(Var::x1, minus(Var::z1), plus_inv(Var::x0)),
                k3b = dlt(Var::x2, minus(Var::z2), plus_inv(Var::x0));
    if (v == VoaVec::Vacuum) {
        cplx c = lam(w1, w2, w3);
        ex.push_back({{k1a, k1b}, constant_multiplier(c)});
        ex.push_back({{k2a, k2b}, constant_multiplier(c)});
        ex.push_back({{k3a, k3b}, constant_multiplier(c)});
    } else {
        ex.push_back({{k1a, k1b}, slot_multiplier(lam, 0, w1, w2, w3, W)});
        ex.push_back({{k2a, k2b}, slot_multiplier(lam, 1, w1, w2, w3, W)});
        ex.push_back({{k3a, k3b}, slot3_multiplier(lam, w1, w2, w3, W)});
    }
    FormalSeries out(CoeffTag::ComplexFloat, frame);
    for (const auto& e : ex) {
        Expansion r = expand_delta(e, frame, env, tau_extract());
        if (unconverged)
            for (const auto& [m, rep] : r.reports)
                if (!rep.converged()) ++*unconverged;
        out = series_add(out, r.series);
    }
    return out;
}

template <class Fn>
auto with_widening(Fn fn, long W0) {
    long W = W0;
    for (int attempt = 0;; ++attempt, W *= 2) {
        try {
            return fn(W);
        } catch (const FrameInsufficient&) {
            if (attempt >= 3) throw;
        }
    }
}

} // namespace

FormalSeries tau_action(VoaVec v, const TripleFunctional& lam, const FockVector& w1, const FockVector& w2,
                        const FockVector& w3, const Frame& frame) {
    long F = 0;
    for (const auto& [var, w] : frame.windows()) F = std::max(F, std::max(std::abs(rfloor((w.lo))), std::abs(rceil((w.hi)))));
    return with_widening([&](long W) { return tau_action_w(v, lam, w1, w2, w3, frame, W, nullptr); }, 3 * F + 6);
}

FormalSeries y_prime_action(VoaVec v, const TripleFunctional& lam, const FockVector& w1, const FockVector& w2,
                            const FockVector& w3, long lo, long hi) {
    Frame f;
    f.set(Var::x0, lo, hi);
    FormalSeries out(CoeffTag::ComplexFloat, f);
    if (v == VoaVec::Vacuum) {
        cplx c = lam(w1, w2, w3);
        if (c != 0.0) out.add_term(Monomial{}, c);
        return out;
    }
    const Triple& t = lam.triple();
    for (long e = lo; e <= hi; ++e) {
        long n = e + 1;
        cplx s = 0.0;
        for (int m = 0; m <= max_part(w1); ++m) {
            FockVector h = apply_h(m, w1, t.c[0]);
            if (h.is_zero()) continue;
            s += binom(Rational(n), unsigned(m)).get_d() * cpow_int(lam.z1(), n - m) * lam(h, w2, w3);
        }
        for (int m = 0; m <= max_part(w2); ++m) {
            FockVector h = apply_h(m, w2, t.c[1]);
            if (h.is_zero()) continue;
            s += binom(Rational(n), unsigned(m)).get_d() * cpow_int(lam.z2(), n - m) * lam(w1, h, w3);
        }
        s += lam(w1, w2, apply_h(int(n), w3, t.c[2]));
        Monomial mon;
        mon.set(Var::x0, e);
        if (s != 0.0) out.add_term(mon, -s);
    }
    return out;
}

namespace {

struct DeltaSide {
    FormalSeries series;
    size_t unconverged = 0;
};

DeltaSide delta_times(const std::vector<DeltaKernel>& k, const Multiplier& g, const Frame& frame, cplx z1, cplx z2) {
    Expansion r = expand_delta(DeltaExpr{k, g}, frame, ParamEnv::numeric(z1, z2), tau_extract());
    DeltaSide d{r.series, 0};
    for (const auto& [m, rep] : r.reports)
        if (!rep.converged()) ++d.unconverged;
    return d;
}

Multiplier x0_multiplier(const FormalSeries& g, std::optional<long> lo) {
    Multiplier m{g, {}, false};
    if (lo) m.exact[Var::x0] = SupportBound{Rational(*lo), std::nullopt};
    return m;
}

void compare_into(Report& rep, const FormalSeries& a, const FormalSeries& b, const std::string& label) {
    double scale = 1.0;
    for (const auto& [m, c] : a.terms()) scale = std::max(scale, std::abs(c.to_complex()));
    std::set<Monomial> keys;
    for (const auto& [m, c] : a.terms()) keys.insert(m);
    for (const auto& [m, c] : b.terms()) keys.insert(m);
    for (const auto& m : keys)
        track(rep, std::abs(coeff_at(a, m).to_complex() - coeff_at(b, m).to_complex()) / scale, label + " " + m.str());
}

} // namespace

Report check_Pz1z2_compatibility(const TripleFunctional& lam, VoaVec v, const FockVector& w1, const FockVector& w2,
                                 const FockVector& w3, const CompatOptions& opt) {
    Report rep;
    rep.name = std::string("compatibility-") + voa_name(v) + "-" + lam.kind();
    long F = opt.frame;
    Frame frame = Frame::box({Var::x0, Var::x1, Var::x2}, F);
    long B = lam.lower_truncation();
    cplx z1 = lam.z1(), z2 = lam.z2();
    size_t unconv = 0;

    // (a) lower truncation: coefficients just below B vanish
    double trunc = 0.0, scale = 1.0;
    {
        FormalSeries below = y_prime_action(v, lam, w1, w2, w3, B - opt.probe_depth, B - 1);
        FormalSeries above = y_prime_action(v, lam, w1, w2, w3, B, B + 4);
        for (const auto& [m, c] : above.terms()) scale = std::max(scale, std::abs(c.to_complex()));
        for (const auto& [m, c] : below.terms()) trunc = std::max(trunc, std::abs(c.to_complex()) / scale);
    }
    bool trunc_ok = v == VoaVec::Vacuum || trunc <= opt.tol;
    rep.notes.push_back("lower truncation deviation " + sci(trunc));

    Report b;
    Report res;
    try {
    with_widening(
        [&](long W) {
            b = Report{};
            res = Report{};
            unconv = 0;
            FormalSeries lhs = tau_action_w(v, lam, w1, w2, w3, frame, W, &unconv);
            FormalSeries G = y_prime_action(v, lam, w1, w2, w3, v == VoaVec::Vacuum ? 0 : B, W);
            Multiplier g = x0_multiplier(G, v == VoaVec::Vacuum ? std::optional<long>() : std::optional<long>(B));
            if (v == VoaVec::Vacuum) g.complete = true;
            DeltaSide rhs = delta_times({dlt(Var::x1, plus_inv(Var::x0), minus(Var::z1)),
                                         dlt(Var::x2, plus_inv(Var::x0), minus(Var::z2))},
                                        g, frame, z1, z2);
            unconv += rhs.unconverged;
            compare_into(b, lhs, rhs.series, "cpb");
            // Res_{x1}
            FormalSeries lres = residue(lhs, Var::x1);
            DeltaSide rr = delta_times({dlt(Var::x2, plus_inv(Var::x0), minus(Var::z2))}, g, frame.without(Var::x1), z1, z2);
            unconv += rr.unconverged;
            compare_into(res, lres, rr.series, "res");
            return 0;
        },
        3 * F + 6);
    } catch (const SeriesError& e) {
        // a functional outside the image of an intertwining map may give divergent kernel sums
        rep.notes.push_back(std::string("expansion failed: ") + e.what());
        rep.worst = e.what();
        rep.max_deviation = std::numeric_limits<double>::infinity();
        rep.pass = false;
        return rep;
    }
    rep.compared = b.compared + res.compared;
    rep.max_deviation = std::max(b.max_deviation, res.max_deviation);
    rep.worst = b.max_deviation >= res.max_deviation ? b.worst : res.worst;
    rep.notes.push_back("cpb deviation " + sci(b.max_deviation) + " at " + b.worst);
    rep.notes.push_back("residue deviation " + sci(res.max_deviation) + " at " + res.worst);
    rep.notes.push_back("unconverged probes " + std::to_string(unconv));
    rep.pass = trunc_ok && unconv == 0 && b.max_deviation <= opt.tol && res.max_deviation <= opt.tol;
    return rep;
}

Report check_tau_intertwining(VoaVec v, const Triple& t, const FockVector& bra, const FockVector& w1,
                              const FockVector& w2, const FockVector& w3, cplx z1, cplx z2, const CompatOptions& opt) {
    Report rep;
    rep.name = std::string("tau-intertwining-") + voa_name(v);
    auto lam = TripleFunctional::from_product(t, bra, z1, z2);
    long F = opt.frame;
    Frame frame = Frame::box({Var::x0, Var::x1, Var::x2}, F);
    long B = -max_part(bra) - 1;
    size_t unconv = 0;
    with_widening(
        [&](long W) {
            rep.compared = 0;
            rep.max_deviation = 0;
            unconv = 0;
            FormalSeries lhs = tau_action_w(v, lam, w1, w2, w3, frame, W, &unconv);
            // (Y'_4(v, x0) w4') o F
            Frame f;
            Multiplier g = constant_multiplier(lam(w1, w2, w3));
            if (v == VoaVec::H1) {
                f.set(Var::x0, B, W);
                FormalSeries G(CoeffTag::ComplexFloat, f);
                for (long e = B; e <= W; ++e) {
                    FockVector hb = apply_h_dual(int(e + 1), bra, t.c4());
                    if (hb.is_zero()) continue;
                    SumResult r = sum_product(t, {w1, w2, w3, hb}, bp(z1), bp(z2), tight());
                    if (!r.converged()) ++unconv;
                    Monomial mon;
                    mon.set(Var::x0, e);
                    if (r.value != 0.0) G.add_term(mon, -r.value);
                }
                g = x0_multiplier(G, B);
            }
            DeltaSide rhs = delta_times({dlt(Var::x1, plus_inv(Var::x0), minus(Var::z1)),
                                         dlt(Var::x2, plus_inv(Var::x0), minus(Var::z2))},
                                        g, frame, z1, z2);
            unconv += rhs.unconverged;
            compare_into(rep, rhs.series, lhs, "Psi");
            return 0;
        },
        3 * F + 6);
    rep.notes.push_back("unconverged probes " + std::to_string(unconv));
    rep.pass = unconv == 0 && rep.max_deviation <= opt.tol;
    return rep;
}

// ---- vanishing propagation ----

namespace {

std::vector<std::array<int, 3>> monomials(const NilShape& s) {
    std::vector<std::array<int, 3>> r;
    for (int i = 0; i < s.K[0]; ++i)
        for (int j = 0; j < s.K[1]; ++j)
            for (int k = 0; k < s.K[2]; ++k) r.push_back({i, j, k});
    return r;
}

cplx eval_x0(const FormalSeries& s, cplx z) {
    cplx v = 0.0;
    Assignment a{{Var::x0, bp(z)}};
    for (const auto& [m, c] : s.terms()) v += c.to_complex() * monomial_value(m, a);
    return v;
}

// pi_q Y(a, z) b as A-valued (complex) coefficients of the basis states
std::map<Partition, NilC> inner_component(const Nil& ca, const Nil& cb, const FockVector& a, const FockVector& b,
                                          int q, cplx z) {
    std::map<Partition, NilC> out;
    const NilShape& s = ca.shape();
    Nil E = ca * cb;
    cplx lz = log_branch(bp(z));
    IntwOpSpec Y = standard_op(ca, cb);
    for (const auto& [Pa, xa] : a.terms)
        for (const auto& [Pb, xb] : b.terms) {
            FockVector pa, pb;
            pa.add(Pa, xa);
            pb.add(Pb, xb);
            Rational alpha = E.scalar() + (q - weight(Pa) - weight(Pb));
            cplx zp = std::exp(to_double(alpha) * lz);
            for (int t = 0; t <= s.max_degree(); ++t) {
                FockVector v = intw_mode_coeff(Y, pa, pb, alpha, unsigned(t), q);
                for (const auto& [B, x] : v.terms) {
                    NilC c = to_complex(x) * (zp * std::pow(lz, double(t)));
                    auto it = out.find(B);
                    if (it == out.end()) out.emplace(B, c);
                    else it->second += c;
                }
            }
        }
    return out;
}

} // namespace

Report vanishing_propagation_check(Kind kind, VanishingCase vc, const Triple& t, const Insertion& ins,
                                   const std::vector<std::pair<cplx, cplx>>& points, double tol) {
    Report rep;
    rep.name = std::string("vanishing-") + kind_name(kind) + "-" +
               (vc == VanishingCase::Identical ? "identical" : vc == VanishingCase::Omega ? "omega" : "control");
    bool prod = kind == Kind::Product;
    const NilShape& s = t.shape;
    // outer operator and its rewritten twin
    Nil arg = prod ? t.c[0] : t.c[0] + t.c[1];
    Nil on = prod ? t.c[1] + t.c[2] : t.c[2];
    IntwOpSpec Y = standard_op(arg, on);
    IntwOpSpec Y2 = Y;
    if (vc == VanishingCase::Omega) Y2 = omega_transform(omega_transform(Y, -1), 0);
    if (vc == VanishingCase::Control) Y2 = omega_transform(omega_transform(Y, 0), 0);
    const int Q = 6;
    double worst_full = 0.0;
    for (const auto& [za, zb] : points) {
        // product: (z1, z2); iterate: (z2, z0)
        cplx zouter = za, zinner = zb;
        cplx full = 0.0;
        SumResult ref = prod ? sum_product(t, ins, bp(za), bp(zb), tight()) : sum_iterate(t, ins, bp(zb), bp(za), tight());
        double sc = std::max(1.0, std::abs(ref.value));
        for (int q = 0; q <= Q; ++q) {
            auto comp = prod ? inner_component(t.c[1], t.c[2], ins.w2, ins.w3, q, zinner)
                             : inner_component(t.c[0], t.c[1], ins.w1, ins.w2, q, zinner);
            // split the bra by weight: the pi_p components
            std::map<int, FockVector> bra_by_p;
            for (const auto& [P4, d] : ins.bra.terms) bra_by_p[weight(P4)].add(P4, d);
            for (const auto& [p, brap] : bra_by_p) {
                cplx val = 0.0;
                for (const auto& [B, c] : comp)
                    for (const auto& J : monomials(s)) {
                        cplx cj = c.at(J[0], J[1], J[2]);
                        if (cj == 0.0) continue;
                        Nil e(s);
                        e.at(J[0], J[1], J[2]) = 1;
                        FockVector m;
                        m.add(B, e);
                        FormalSeries f1 = prod ? intw_series(Y, brap, ins.w1, m) : intw_series(Y, brap, m, ins.w3);
                        FormalSeries f2 = prod ? intw_series(Y2, brap, ins.w1, m) : intw_series(Y2, brap, m, ins.w3);
                        val += cj * (eval_x0(f1, zouter) - eval_x0(f2, zouter));
                    }
                full += val;
                track(rep, std::abs(val) / sc,
                      "point (" + fmt(za) + "," + fmt(zb) + ") p=" + std::to_string(p) + " q=" + std::to_string(q));
            }
        }
        worst_full = std::max(worst_full, std::abs(full) / sc);
    }
    bool pre = worst_full <= tol;
    rep.notes.push_back("full pairing deviation " + sci(worst_full));
    if (!pre) rep.notes.push_back("precondition unmet: the full pairing is not zero");
    rep.pass = pre && rep.max_deviation <= tol;
    return rep;
}

// ---- properties ----

Report analyticity_check(const Triple& t, const Insertion& ins, cplx z1, cplx z2, double step, double tol) {
    Report rep;
    rep.name = "analyticity";
    auto F = [&](cplx w2) { return sum_product(t, ins, bp(z1), bp(w2), tight()); };
    auto a = F(z2 + step), b = F(z2 - step);
    cplx fd = (a.value - b.value) / (2 * step);
    Insertion d = ins;
    d.w2 = apply_L(-1, ins.w2, t.c[1]);
    auto ex = sum_product(t, d, bp(z1), bp(z2), tight());
    double dev = std::abs(fd - ex.value) / std::max(std::abs(ex.value), 1e-300);
    track(rep, dev, "(" + fmt(z1) + "," + fmt(z2) + ")");
    rep.notes.push_back("fd " + fmt(fd) + ", L(-1) insertion " + fmt(ex.value));
    rep.pass = a.converged() && b.converged() && ex.converged() && dev <= tol;
    return rep;
}

Report reorder_check(const Triple& t, const Insertion& ins, cplx z1, cplx z2, double tol) {
    Report rep;
    rep.name = "reorder";
    SumResult w = sum_product(t, ins, bp(z1), bp(z2), tight());
    FormalSeries s = product_correlator(t, ins, std::max<long>(2 * w.levels, 48));
    Assignment a{{Var::x1, bp(z1)}, {Var::x2, bp(z2)}};
    ProbeOptions po{1e-13, 8, 1000000, false, true};
    auto r1 = abs_convergence_probe(specialize(s, a, Schedule{ScheduleKind::Weight, Var::x2}).generator(), po);
    auto r2 = abs_convergence_probe(specialize(s, a, Schedule{ScheduleKind::Degree, Var::x2}).generator(), po);
    track(rep, rel_dev(r1.value, r2.value), "(" + fmt(z1) + "," + fmt(z2) + ")");
    rep.notes.push_back(std::string("weight ") + verdict_name(r1.status) + " " + fmt(r1.value) + ", degree " +
                        verdict_name(r2.status) + " " + fmt(r2.value));
    rep.pass = r1.converged() && r2.converged() && rep.max_deviation <= tol;
    return rep;
}

Report branch_adjacency_check(const Triple& t, const Insertion& ins, cplx z1, cplx z2, double tol) {
    Report rep;
    rep.name = "branch-adjacency";
    // every x1 exponent is E1 + integer, every x2 exponent E2 + integer
    Nil E1 = t.c[0] * (t.c[1] + t.c[2]), E2 = t.c[1] * t.c[2];
    if (!(E1.nil_part().is_zero() && E2.nil_part().is_zero()))
        throw std::invalid_argument("branch adjacency: log-free correlator required");
    auto base = sum_product(t, ins, bp(z1), bp(z2), tight());
    auto p1 = sum_product(t, ins, bp(z1, 1), bp(z2), tight());
    auto q1 = sum_product(t, ins, bp(z1), bp(z2, 1), tight());
    cplx ph1 = std::exp(cplx(0, 2 * kPi * to_double(E1.scalar())));
    cplx ph2 = std::exp(cplx(0, 2 * kPi * to_double(E2.scalar())));
    track(rep, rel_dev(p1.value, ph1 * base.value), "p -> p+1");
    track(rep, rel_dev(q1.value, ph2 * base.value), "q -> q+1");
    rep.notes.push_back("phases " + fmt(ph1) + ", " + fmt(ph2));
    rep.pass = base.converged() && p1.converged() && q1.converged() && rep.max_deviation <= tol;
    return rep;
}

} // namespace fcalc::heis
