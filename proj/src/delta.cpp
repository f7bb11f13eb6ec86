#include "fcalc/delta.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <functional>
#include <memory>
#include <numeric>
#include <set>
#include <sstream>

namespace fcalc {

namespace {

int vi(Var v) { return static_cast<int>(v); }

std::string summand_str(const Summand& s, bool first) {
    std::string out;
    if (s.sign < 0) out += first ? "-" : " - ";
    else if (!first) out += " + ";
    out += var_name(s.sym);
    if (s.power != 1) out += "^" + std::to_string(s.power);
    return out;
}

// which z-parameter a non-formal symbol stands for: 0 -> z0, 1 -> z1, 2 -> z2
int param_slot(Var v) {
    switch (v) {
    case Var::z0:
    case Var::y0: return 0;
    case Var::z1:
    case Var::y1: return 1;
    case Var::z2:
    case Var::y2: return 2;
    default: break;
    }
    throw std::invalid_argument(std::string("delta: symbol ") + var_name(v) + " is neither formal nor a parameter");
}

cplx ipow(cplx z, long e) {
    if (e < 0) return 1.0 / ipow(z, -e);
    cplx r = 1.0;
    while (e) {
        if (e & 1) r *= z;
        z *= z;
        e >>= 1;
    }
    return r;
}

Rational binom_exact(long n, long k) {
    mpz_class r, nn(n);
    mpz_bin_ui(r.get_mpz_t(), nn.get_mpz_t(), static_cast<unsigned long>(k));
    return Rational(r);
}

double binom_num(long n, long k) {
    double r = 1.0;
    for (long j = 0; j < k; ++j) r = r * double(n - j) / double(j + 1);
    return r;
}

long floor_q(const Rational& q) {
    mpz_class f;
    mpz_fdiv_q(f.get_mpz_t(), q.get_num_mpz_t(), q.get_den_mpz_t());
    return f.get_si();
}
long ceil_q(const Rational& q) {
    mpz_class f;
    mpz_cdiv_q(f.get_mpz_t(), q.get_num_mpz_t(), q.get_den_mpz_t());
    return f.get_si();
}

void for_each_composition(size_t q, long D, std::vector<long>& k, const std::function<void()>& f, size_t i = 0) {
    if (q == 0) {
        if (D == 0) f();
        return;
    }
    if (i + 1 == q) {
        k[i] = D;
        f();
        return;
    }
    for (long a = 0; a <= D; ++a) {
        k[i] = a;
        for_each_composition(q, D - a, k, f, i + 1);
    }
}

// Linear bookkeeping for the exponents of one expression:
//   exp_X = sum_i A[X][i] n_i + sum_d B[X][d] k_d + C[X]
class Extractor {
  public:
    Extractor(const DeltaExpr& e, const Frame& formal, const ParamEnv& env, const ExtractOptions& opt)
        : e_(e), env_(env), opt_(opt) {
        r_ = e.factors.size();
        for (size_t i = 0; i < r_; ++i)
            for (size_t d = 0; d < e.factors[i].dir.size(); ++d) slots_.push_back({i, d});
        q_ = slots_.size();
        for (auto& a : A_) a.assign(r_, 0);
        for (auto& b : B_) b.assign(q_, 0);
        C_.fill(0);

        for (const auto& [v, w] : formal.windows()) formal_.push_back(v);
        is_formal_.fill(false);
        for (Var v : formal_) is_formal_[vi(v)] = true;
        is_g_.fill(false);
        if (e.multiplier) {
            for (const auto& [v, w] : e.multiplier->series.frame().windows()) {
                if (!is_formal_[vi(v)])
                    throw std::invalid_argument(std::string("delta: multiplier variable ") + var_name(v) +
                                                " is not a formal variable of the frame");
                is_g_[vi(v)] = true;
            }
        }

        for (size_t i = 0; i < r_; ++i) {
            const auto& k = e.factors[i];
            auto touch = [&](Var v) { return is_formal_[vi(v)]; };
            if (touch(k.outer)) {
                int s = k.inverted ? 1 : -1;
                A_[vi(k.outer)][i] += s;
                C_[vi(k.outer)] += s;
            } else {
                param_slot(k.outer);
            }
            if (touch(k.base.sym)) {
                A_[vi(k.base.sym)][i] += k.base.power;
                for (size_t d = 0; d < q_; ++d)
                    if (slots_[d].first == i) B_[vi(k.base.sym)][d] -= k.base.power;
            } else {
                param_slot(k.base.sym);
            }
            for (size_t d = 0; d < q_; ++d) {
                if (slots_[d].first != i) continue;
                const auto& s = k.dir[slots_[d].second];
                if (touch(s.sym)) B_[vi(s.sym)][d] += s.power;
                else param_slot(s.sym);
            }
        }
        choose_pivots();
    }

    CoefficientResult coefficient(const Monomial& target) const;

  private:
    struct Pivot {
        Var var;
        bool g;
    };

    bool g_window(Var v, Rational& lo, Rational& hi) const {
        const auto& m = *e_.multiplier;
        bool have_lo = false, have_hi = false;
        if (m.complete) {
            auto w = m.series.frame().window(v);
            lo = w.lo, hi = w.hi;
            have_lo = have_hi = true;
        }
        auto it = m.exact.find(v);
        if (it != m.exact.end()) {
            if (it->second.lo && (!have_lo || *it->second.lo > lo)) lo = *it->second.lo, have_lo = true;
            if (it->second.hi && (!have_hi || *it->second.hi < hi)) hi = *it->second.hi, have_hi = true;
        }
        return have_lo && have_hi;
    }

    void choose_pivots() {
        std::vector<std::vector<Rational>> basis;
        std::vector<size_t> lead;
        auto try_row = [&](Var v, bool g) {
            if (pivots_.size() == r_) return;
            std::vector<Rational> row(r_);
            for (size_t i = 0; i < r_; ++i) row[i] = A_[vi(v)][i];
            for (size_t b = 0; b < basis.size(); ++b) {
                if (row[lead[b]] == 0) continue;
                Rational f = row[lead[b]] / basis[b][lead[b]];
                for (size_t i = 0; i < r_; ++i) row[i] -= f * basis[b][i];
            }
            auto nz = std::find_if(row.begin(), row.end(), [](const Rational& x) { return x != 0; });
            if (nz == row.end()) return;
            basis.push_back(row);
            lead.push_back(size_t(nz - row.begin()));
            pivots_.push_back({v, g});
        };
        for (Var v : formal_)
            if (!is_g_[vi(v)]) try_row(v, false);
        for (Var v : formal_) {
            if (!is_g_[vi(v)]) continue;
            Rational lo, hi;
            if (g_window(v, lo, hi)) try_row(v, true);
        }
        if (pivots_.size() < r_)
            throw NotFinitelyDetermined("delta: kernel summation index not fixed by the target monomial");

        // invert the pivot block, scaled to an integer matrix
        std::vector<std::vector<Rational>> m(r_, std::vector<Rational>(2 * r_));
        for (size_t j = 0; j < r_; ++j) {
            for (size_t i = 0; i < r_; ++i) m[j][i] = A_[vi(pivots_[j].var)][i];
            m[j][r_ + j] = 1;
        }
        for (size_t c = 0; c < r_; ++c) {
            size_t p = c;
            while (m[p][c] == 0) ++p;
            std::swap(m[p], m[c]);
            Rational inv = 1 / m[c][c];
            for (auto& x : m[c]) x *= inv;
            for (size_t rr = 0; rr < r_; ++rr) {
                if (rr == c || m[rr][c] == 0) continue;
                Rational f = m[rr][c];
                for (size_t i = 0; i < 2 * r_; ++i) m[rr][i] -= f * m[c][i];
            }
        }
        mpz_class den = 1;
        for (size_t i = 0; i < r_; ++i)
            for (size_t j = 0; j < r_; ++j) mpz_lcm(den.get_mpz_t(), den.get_mpz_t(), m[i][r_ + j].get_den_mpz_t());
        den_ = den.get_si();
        M_.assign(r_, std::vector<long>(r_));
        for (size_t i = 0; i < r_; ++i)
            for (size_t j = 0; j < r_; ++j) {
                Rational s = m[i][r_ + j] * Rational(den);
                M_[i][j] = s.get_num().get_si();
            }
    }

    const DeltaExpr& e_;
    ParamEnv env_;
    ExtractOptions opt_;
    size_t r_ = 0, q_ = 0;
    std::vector<std::pair<size_t, size_t>> slots_;
    std::array<std::vector<long>, kNumVars> A_, B_;
    std::array<long, kNumVars> C_;
    std::vector<Var> formal_;
    std::array<bool, kNumVars> is_formal_, is_g_;
    std::vector<Pivot> pivots_;
    std::vector<std::vector<long>> M_;
    long den_ = 1;
};

CoefficientResult Extractor::coefficient(const Monomial& target) const {
    CoefficientResult res;
    bool exact = env_.tag != CoeffTag::ComplexFloat;
    res.value = Coefficient::zero(exact ? CoeffTag::ParamPoly : CoeffTag::ComplexFloat);

    for (const auto& f : target.factors())
        if (!is_formal_[vi(f.var)]) throw std::invalid_argument("delta: target monomial outside the formal variables");

    // structural zeros in the kernel-only variables
    std::array<long, kNumVars> t{};
    long size = 0;
    for (Var v : formal_) {
        Rational ex = target.exp(v);
        size += std::abs(floor_q(ex));
        if (is_g_[vi(v)]) continue;
        if (!is_integer(ex) || target.logpow(v) != 0) {
            if (exact) return res;
            res.report = ConvergenceReport{Verdict::Converged, 0.0, 0.0, 0.0, 0, "structural zero"};
            return res;
        }
        t[vi(v)] = to_long(ex);
    }

    // enumeration ranges for multiplier pivots: g = t - m, m integer
    std::vector<std::pair<long, long>> mrange(pivots_.size(), {0, 0});
    for (size_t j = 0; j < pivots_.size(); ++j) {
        if (!pivots_[j].g) continue;
        Rational lo, hi;
        g_window(pivots_[j].var, lo, hi);
        Rational tx = target.exp(pivots_[j].var);
        mrange[j] = {ceil_q(tx - hi), floor_q(tx - lo)};
        if (mrange[j].first > mrange[j].second) {
            if (!exact) res.report = ConvergenceReport{Verdict::Converged, 0.0, 0.0, 0.0, 0, "structural zero"};
            return res;
        }
    }

    std::vector<long> k(q_), n(r_), rhs(r_), m(pivots_.size());
    const Multiplier* mult = e_.multiplier ? &*e_.multiplier : nullptr;
    cplx zval[3] = {env_.z1 - env_.z2, env_.z1, env_.z2};

    // evaluates all terms at depth D; returns number of live terms
    auto depth = [&](long D, Coefficient& acc, cplx& cacc) -> size_t {
        size_t live = 0;
        std::function<void(size_t)> over_m;
        auto one = [&]() {
            // solve for n
            for (size_t j = 0; j < r_; ++j) {
                int v = vi(pivots_[j].var);
                long s = C_[v];
                for (size_t d = 0; d < q_; ++d) s += B_[v][d] * k[d];
                rhs[j] = (pivots_[j].g ? m[j] : t[v]) - s;
            }
            for (size_t i = 0; i < r_; ++i) {
                long s = 0;
                for (size_t j = 0; j < r_; ++j) s += M_[i][j] * rhs[j];
                if (s % den_ != 0) return;
                n[i] = s / den_;
            }
            // consistency of the kernel-only rows, and multiplier exponents
            Monomial gm;
            for (Var v : formal_) {
                int x = vi(v);
                long s = C_[x];
                for (size_t i = 0; i < r_; ++i) s += A_[x][i] * n[i];
                for (size_t d = 0; d < q_; ++d) s += B_[x][d] * k[d];
                if (!is_g_[x]) {
                    if (s != t[x]) return;
                    continue;
                }
                Rational g = target.exp(v) - s;
                auto it = mult->exact.find(v);
                if (it != mult->exact.end()) {
                    if (it->second.lo && g < *it->second.lo) return;
                    if (it->second.hi && g > *it->second.hi) return;
                }
                gm.set(v, g, target.logpow(v));
            }
            // kernel binomials
            std::vector<long> K(r_, 0);
            for (size_t d = 0; d < q_; ++d) K[slots_[d].first] += k[d];
            for (size_t i = 0; i < r_; ++i)
                if (n[i] >= 0 && K[i] > n[i]) return;

            Coefficient gval;
            if (mult) {
                const auto& ser = mult->series;
                auto it = ser.terms().find(gm);
                if (it != ser.terms().end()) gval = it->second;
                else if (!mult->complete && !ser.frame().contains(gm))
                    throw FrameInsufficient("delta: multiplier needed at " + gm.str() + " outside its frame");
                else return;
            }
            ++live;

            long zexp[3] = {0, 0, 0};
            int sign = 1;
            Rational c = 1;
            double cd = 1.0;
            for (size_t i = 0; i < r_; ++i) {
                const auto& ker = e_.factors[i];
                long outer_e = ker.inverted ? n[i] + 1 : -(n[i] + 1);
                if (!is_formal_[vi(ker.outer)]) zexp[param_slot(ker.outer)] += outer_e;
                long be = n[i] - K[i];
                if (ker.base.sign < 0 && (be & 1)) sign = -sign;
                if (!is_formal_[vi(ker.base.sym)]) zexp[param_slot(ker.base.sym)] += ker.base.power * be;
                if (exact) c *= binom_exact(n[i], K[i]);
                else cd *= binom_num(n[i], K[i]);
                long used = 0;
                for (size_t d = 0; d < q_; ++d) {
                    if (slots_[d].first != i) continue;
                    const auto& s = ker.dir[slots_[d].second];
                    if (s.sign < 0 && (k[d] & 1)) sign = -sign;
                    if (!is_formal_[vi(s.sym)]) zexp[param_slot(s.sym)] += s.power * k[d];
                    // multinomial split of K[i] among the dir summands
                    if (used > 0) {
                        if (exact) c *= binom_exact(used + k[d], k[d]);
                        else cd *= binom_num(used + k[d], k[d]);
                    }
                    used += k[d];
                }
            }
            if (exact) {
                if (zexp[0] < 0)
                    throw NotFinitelyDetermined("delta: negative power of z0 is not a polynomial in z1, z2");
                ParamPoly p = ParamPoly::monomial(c * sign, int(zexp[1]), int(zexp[2]));
                if (zexp[0] > 0) p = p * ParamPoly::z0_power(int(zexp[0]));
                Coefficient term(p);
                if (mult) {
                    if (gval.tag() == CoeffTag::ExactRational) term *= Coefficient(ParamPoly(gval.rational()));
                    else term *= gval;
                }
                acc += term;
            } else {
                cplx v = cd * double(sign);
                for (int s = 0; s < 3; ++s)
                    if (zexp[s]) v *= ipow(zval[s], zexp[s]);
                if (mult) v *= gval.to_complex(std::make_pair(env_.z1, env_.z2));
                cacc += v;
            }
        };
        over_m = [&](size_t j) {
            if (j == pivots_.size()) {
                one();
                return;
            }
            if (!pivots_[j].g) {
                over_m(j + 1);
                return;
            }
            for (long x = mrange[j].first; x <= mrange[j].second; ++x) {
                m[j] = x;
                over_m(j + 1);
            }
        };
        for_each_composition(q_, D, k, [&]() { over_m(0); });
        return live;
    };

    long start_bound = 2 * size + 2 * long(opt_.lookahead) + 8;
    if (exact) {
        Coefficient acc = Coefficient::zero(CoeffTag::ParamPoly);
        cplx dummy = 0.0;
        long last = -1;
        for (long D = 0;; ++D) {
            size_t l = depth(D, acc, dummy);
            if (l) {
                last = D;
                res.live_terms += l;
            }
            if (last < 0 && D > start_bound) break;
            if (last >= 0 && D - last > long(opt_.lookahead)) break;
            if (D > long(opt_.max_depth))
                throw NotFinitelyDetermined("delta: coefficient of " + target.str() +
                                            " is not finitely determined within depth " +
                                            std::to_string(opt_.max_depth));
        }
        res.value = acc;
        return res;
    }

    auto state = std::make_shared<std::pair<long, long>>(0, -1); // next D, last live D
    size_t live_total = 0;
    TermGen gen = [&, state]() -> std::optional<cplx> {
        Coefficient unused;
        for (;;) {
            long D = state->first++;
            cplx c = 0.0;
            size_t l = depth(D, unused, c);
            if (l) {
                state->second = D;
                live_total += l;
                return c;
            }
            if (state->second < 0 && D > start_bound) return std::nullopt;
            if (state->second >= 0 && D - state->second > long(opt_.lookahead)) return std::nullopt;
        }
    };
    auto rep = abs_convergence_probe(gen, opt_.probe);
    res.value = Coefficient(rep.value);
    res.report = rep;
    res.live_terms = live_total;
    return res;
}

std::vector<Monomial> frame_targets(const DeltaExpr& e, const Frame& frame) {
    // per variable: candidate (exponent, logpow) values
    std::vector<std::pair<Var, std::vector<std::pair<Rational, unsigned>>>> axes;
    for (const auto& [v, w] : frame.windows()) {
        std::set<std::pair<Rational, unsigned>> residues;
        bool g = e.multiplier && e.multiplier->series.frame().has(v);
        if (g) {
            for (const auto& [mono, c] : e.multiplier->series.terms()) {
                Rational ex = mono.exp(v);
                residues.insert({ex - floor_q(ex), mono.logpow(v)});
            }
        }
        if (residues.empty()) residues.insert({Rational(0), 0u});
        std::vector<std::pair<Rational, unsigned>> vals;
        for (const auto& [frac, lp] : residues) {
            if (lp > w.max_log) continue;
            for (long a = ceil_q(w.lo - frac); a <= floor_q(w.hi - frac); ++a) vals.push_back({frac + a, lp});
        }
        axes.push_back({v, vals});
    }
    std::vector<Monomial> out{Monomial{}};
    for (const auto& [v, vals] : axes) {
        std::vector<Monomial> next;
        for (const auto& m : out)
            for (const auto& [ex, lp] : vals) {
                Monomial mm = m;
                mm.set(v, ex, lp);
                next.push_back(mm);
            }
        out.swap(next);
    }
    return out;
}

} // namespace

std::string DeltaKernel::str() const {
    std::string num = summand_str(base, true);
    for (const auto& d : dir) num += summand_str(d, false);
    std::string o = var_name(outer);
    if (inverted) return o + " delta((" + num + ")/" + o + "^-1)";
    return o + "^-1 delta((" + num + ")/" + o + ")";
}

std::string DeltaExpr::str() const {
    std::string out;
    for (size_t i = 0; i < factors.size(); ++i) out += (i ? " * " : "") + factors[i].str();
    if (multiplier) out += " * G";
    return out;
}

CoefficientResult extract_coefficient(const DeltaExpr& e, const Frame& formal, const Monomial& target,
                                      const ParamEnv& env, const ExtractOptions& opt) {
    Extractor x(e, formal, env, opt);
    return x.coefficient(target);
}

Expansion expand_delta(const DeltaExpr& e, const Frame& frame, const ParamEnv& env, const ExtractOptions& opt) {
    if (e.factors.size() > 3) throw std::invalid_argument("delta: at most three kernels");
    Extractor x(e, frame, env, opt);
    CoeffTag tag = env.tag == CoeffTag::ComplexFloat ? CoeffTag::ComplexFloat : CoeffTag::ParamPoly;
    Expansion out{FormalSeries(tag, frame), {}};
    for (const auto& m : frame_targets(e, frame)) {
        auto r = x.coefficient(m);
        if (r.report) {
            if (r.report->status == Verdict::Diverged)
                throw SeriesError("delta: coefficient of " + m.str() + " diverges");
            out.reports[m] = *r.report;
        }
        if (!r.value.is_zero()) out.series.add_term(m, r.value);
    }
    return out;
}

DeltaKernel substitute_kernel(const DeltaKernel& f, const DeltaKernel& locus) {
    if (locus.inverted || f.base.sym != locus.outer || f.base.power != 1)
        throw std::invalid_argument("substitute_kernel: base of f must be the outer variable of the locus");
    DeltaKernel out = f;
    out.base = locus.base;
    out.base.sign *= f.base.sign;
    out.dir.clear();
    for (auto s : locus.dir) {
        s.sign *= f.base.sign;
        out.dir.push_back(s);
    }
    for (const auto& s : f.dir) out.dir.push_back(s);
    return out;
}

FormalSeries delta_substitute(const FormalSeries& f, const DeltaExpr& e, Var replace, const Frame& frame,
                              const ParamEnv& env) {
    if (e.factors.size() != 1 || e.multiplier)
        throw std::invalid_argument("delta_substitute: expression must be a single kernel");
    const DeltaKernel& k = e.factors[0];
    if (k.inverted) throw std::invalid_argument("delta_substitute: inverted kernels are not supported");
    for (const auto& [v, w] : f.frame().windows())
        if (v != k.outer && v != k.base.sym &&
            std::none_of(k.dir.begin(), k.dir.end(), [&](const Summand& s) { return s.sym == v; }))
            throw std::invalid_argument(std::string("delta_substitute: f depends on ") + var_name(v) +
                                        ", which the kernel does not mention");

    auto lift = [&](const Coefficient& c) -> Coefficient {
        if (env.tag == CoeffTag::ComplexFloat) return Coefficient(c.to_complex(std::make_pair(env.z1, env.z2)));
        if (c.tag() == CoeffTag::ExactRational) return Coefficient(ParamPoly(c.rational()));
        return c;
    };
    CoeffTag tag = env.tag == CoeffTag::ComplexFloat ? CoeffTag::ComplexFloat : CoeffTag::ParamPoly;

    // the numerator as a finite series: formal summands are variables, the
    // others are parameter factors
    auto summand_series = [&](const Summand& s, Frame fr) {
        FormalSeries out(tag, fr);
        Coefficient c = lift(Coefficient(s.sign));
        Monomial m;
        if (frame.has(s.sym)) {
            m.set(s.sym, s.power);
        } else {
            int slot = param_slot(s.sym);
            if (tag == CoeffTag::ComplexFloat) {
                cplx zv[3] = {env.z1 - env.z2, env.z1, env.z2};
                c *= Coefficient(ipow(zv[slot], s.power));
            } else {
                if (slot == 0 && s.power < 0) throw NotFinitelyDetermined("delta_substitute: z0^-1");
                ParamPoly p = slot == 0 ? ParamPoly::z0_power(1) : slot == 1 ? ParamPoly::z1() : ParamPoly::z2();
                if (s.power < 0) p = ParamPoly::monomial(1, slot == 1 ? -1 : 0, slot == 2 ? -1 : 0);
                c *= Coefficient(p);
            }
        }
        out.add_term_checked(m, c);
        return out;
    };

    FormalSeries g(tag, Frame{});
    Frame gframe;
    std::vector<std::pair<Monomial, Coefficient>> terms;
    for (const auto& [mono, c] : f.terms()) {
        Rational a = mono.exp(replace);
        if (mono.logpow(replace) != 0) throw std::invalid_argument("delta_substitute: log of the replaced variable");
        Monomial rest = mono.without(replace);
        if (replace == k.outer) {
            if (k.dir.empty()) {
                if (k.base.sign < 0 && !is_integer(a))
                    throw std::invalid_argument("delta_substitute: non-integer power of a negated variable");
                Monomial b;
                b.set(k.base.sym, a * k.base.power);
                Coefficient s = lift(c);
                if (k.base.sign < 0 && (to_long(a) & 1)) s = -s;
                terms.push_back({rest * b, s});
                continue;
            }
            if (!is_integer(a) || a < 0)
                throw NotFinitelyDetermined("delta_substitute: shifted locus needs a polynomial in " +
                                            std::string(var_name(replace)));
            long p = to_long(a);
            Frame wide;
            std::vector<Summand> all{k.base};
            for (const auto& s : k.dir) all.push_back(s);
            for (const auto& s : all)
                if (frame.has(s.sym)) wide.set(s.sym, -p, p);
            FormalSeries num(tag, wide);
            for (const auto& s : all) num = series_add(num, summand_series(s, wide));
            FormalSeries pw(tag, wide);
            pw.add_term_checked(Monomial{}, Coefficient::one(tag));
            for (long i = 0; i < p; ++i) pw = series_mul(pw, num, wide);
            for (const auto& [pm, pc] : pw.terms()) terms.push_back({rest * pm, lift(c) * pc});
        } else if (replace == k.base.sym && k.dir.empty()) {
            // sign base^power = outer
            if (k.base.sign < 0 && !is_integer(a))
                throw std::invalid_argument("delta_substitute: non-integer power of a negated variable");
            Monomial b;
            b.set(k.outer, a * k.base.power);
            Coefficient s = lift(c);
            if (k.base.sign < 0 && (to_long(a) & 1)) s = -s;
            terms.push_back({rest * b, s});
        } else {
            throw std::invalid_argument("delta_substitute: can only replace the outer variable or an unshifted base");
        }
    }
    // frame of the substituted series: the hull of its terms
    std::map<Var, std::pair<Rational, Rational>> hull;
    for (const auto& [m, c] : terms)
        for (const auto& fac : m.factors()) {
            auto it = hull.find(fac.var);
            if (it == hull.end()) hull[fac.var] = {fac.exp, fac.exp};
            else {
                it->second.first = std::min(it->second.first, fac.exp);
                it->second.second = std::max(it->second.second, fac.exp);
            }
        }
    for (const auto& [m, c] : terms)
        for (const auto& [v, lh] : hull)
            if (!m.has(v)) {
                hull[v].first = std::min(hull[v].first, Rational(0));
                hull[v].second = std::max(hull[v].second, Rational(0));
            }
    for (const auto& [v, lh] : hull) gframe.set(v, lh.first, lh.second);
    FormalSeries gs(tag, gframe);
    for (const auto& [m, c] : terms) gs.add_term_checked(m, c);

    DeltaExpr prod{e.factors, Multiplier{gs, {}, true}};
    // every multiplier variable must be formal in the result frame
    Frame fr = frame;
    for (const auto& [v, w] : gframe.windows())
        if (!fr.has(v)) throw std::invalid_argument("delta_substitute: result frame lacks " + std::string(var_name(v)));
    return expand_delta(prod, fr, env).series;
}

const char* delta_id_name(DeltaId id) {
    switch (id) {
    case DeltaId::L1: return "l1";
    case DeltaId::L2a: return "l2a";
    case DeltaId::L2b: return "l2b";
    case DeltaId::L3: return "l3";
    case DeltaId::L4: return "l4";
    }
    return "?";
}

std::optional<DeltaId> parse_delta_id(std::string_view s) {
    for (DeltaId id : {DeltaId::L1, DeltaId::L2a, DeltaId::L2b, DeltaId::L3, DeltaId::L4})
        if (s == delta_id_name(id)) return id;
    return std::nullopt;
}

std::pair<DeltaExpr, DeltaExpr> delta_identity(DeltaId id) {
    using V = Var;
    switch (id) {
    case DeltaId::L1:
        return {{{dlt(V::x1, plus(V::x0), minus(V::z1)), dlt(V::x2, plus(V::x0), minus(V::z2))}, {}},
                {{dlt(V::x2, plus(V::x0), minus(V::z2)), dlt(V::x1, plus(V::x2), minus(V::z0))}, {}}};
    case DeltaId::L2a:
        return {{{dlt(V::z1, plus(V::x0), minus(V::x1)), dlt(V::x2, plus(V::x0), minus(V::z2))}, {}},
                {{dlt(V::x0, plus(V::z1), plus(V::x1)), dlt(V::x2, plus(V::z0), plus(V::x1))}, {}}};
    case DeltaId::L2b:
        return {{{dlt(V::z2, plus(V::x0), minus(V::x2)), dlt(V::z0, plus(V::x2), minus(V::x1))}, {}},
                {{dlt(V::x0, plus(V::z1), plus(V::x1)), dlt(V::x2, plus(V::z0), plus(V::x1))}, {}}};
    case DeltaId::L3:
        return {{{dlt(V::x1, minus(V::z1), plus(V::x0)), dlt(V::z2, plus(V::x0), minus(V::x2))}, {}},
                {{dlt(V::x0, plus(V::z2), plus(V::x2)), dlt(V::x1, minus(V::z0), plus(V::x2))}, {}}};
    case DeltaId::L4:
        return {{{dlt(V::x2, minus(V::z2), plus(V::x0)), dlt(V::x1, plus(V::x2), minus(V::z0))}, {}},
                {{dlt(V::x1, minus(V::z1), plus(V::x0)), dlt(V::x2, minus(V::z2), plus(V::x0))}, {}}};
    }
    throw std::invalid_argument("delta_identity: unknown id");
}

void check_delta_domain(DeltaId id, cplx z1, cplx z2) {
    constexpr double guard = 1e-12;
    double a1 = std::abs(z1), a2 = std::abs(z2), a0 = std::abs(z1 - z2);
    auto need = [](bool ok, const char* what) {
        if (!ok) throw DomainViolation(what);
    };
    switch (id) {
    case DeltaId::L1: return;
    case DeltaId::L2a: need(a1 > a2 + guard, "|z1|>|z2| violated"); return;
    case DeltaId::L3:
        need(a1 > a2 + guard, "|z1|>|z2| violated");
        need(a2 > guard, "|z2|>0 violated");
        return;
    case DeltaId::L2b:
        need(a2 > a0 + guard, "|z2|>|z0| violated");
        need(a0 > guard, "|z0|>0 violated");
        return;
    case DeltaId::L4: need(a2 > a0 + guard, "|z2|>|z0| violated"); return;
    }
}

nlohmann::json VerificationReport::to_json() const {
    nlohmann::json j;
    j["id"] = id;
    j["mode"] = mode;
    j["pass"] = pass;
    j["monomials"] = monomials;
    j["lhs_verdicts"] = {{"converged", lhs_converged}, {"diverged", lhs_diverged}, {"inconclusive", lhs_inconclusive}};
    if (std::isfinite(max_deviation)) j["max_deviation"] = max_deviation;
    else j["max_deviation"] = "inf";
    j["worst_monomial"] = worst_monomial;
    if (point) j["point"] = {{"z1", format_complex(point->first)}, {"z2", format_complex(point->second)}};
    j["notes"] = notes;
    return j;
}

VerificationReport verify_delta_identity(DeltaId id, VerifyMode mode, const VerifyOptions& opt,
                                         std::optional<std::pair<cplx, cplx>> z) {
    VerificationReport rep;
    rep.id = delta_id_name(id);
    rep.mode = mode == VerifyMode::Formal ? "formal" : "numeric";
    auto [lhs, rhs] = delta_identity(id);
    Frame frame = Frame::box({Var::x0, Var::x1, Var::x2}, opt.frame);
    rep.notes.push_back("lhs: " + lhs.str());
    rep.notes.push_back("rhs: " + rhs.str());

    if (mode == VerifyMode::Formal) {
        if (id != DeltaId::L1)
            throw DomainViolation(std::string("formal mode is only available for l1; ") + rep.id +
                                  " needs numeric points in its domain");
        auto l = expand_delta(lhs, frame, ParamEnv::symbolic(), opt.extract).series;
        auto r = expand_delta(rhs, frame, ParamEnv::symbolic(), opt.extract).series;
        std::set<Monomial> all;
        for (const auto& [m, c] : l.terms()) all.insert(m);
        for (const auto& [m, c] : r.terms()) all.insert(m);
        size_t bad = 0;
        for (const auto& m : all) {
            Coefficient a = coeff_at(l, m), b = coeff_at(r, m);
            if (!(a == b)) {
                if (!bad) rep.worst_monomial = m.str();
                ++bad;
            }
        }
        rep.monomials = all.size();
        rep.lhs_converged = all.size();
        rep.max_deviation = bad ? 1.0 : 0.0;
        rep.pass = bad == 0;
        rep.notes.push_back("exact comparison in Q[z1,z2]; " + std::to_string(bad) + " mismatched monomials");
        return rep;
    }

    if (!z) throw std::invalid_argument("verify_delta_identity: numeric mode needs (z1, z2)");
    rep.point = z;
    if (!opt.outside_domain) check_delta_domain(id, z->first, z->second);
    else {
        try {
            check_delta_domain(id, z->first, z->second);
        } catch (const DomainViolation& d) {
            rep.notes.push_back(std::string("outside the domain: ") + d.what());
        }
    }
    ParamEnv env = ParamEnv::numeric(z->first, z->second);
    ExtractOptions xo = opt.extract;
    xo.probe.tol = opt.tol;
    Extractor lx(lhs, frame, env, xo), rx(rhs, frame, env, xo);
    bool all_ok = true;
    for (const auto& m : frame_targets(lhs, frame)) {
        auto a = lx.coefficient(m);
        auto b = rx.coefficient(m);
        ++rep.monomials;
        switch (a.report->status) {
        case Verdict::Converged: ++rep.lhs_converged; break;
        case Verdict::Diverged: ++rep.lhs_diverged; break;
        case Verdict::Inconclusive: ++rep.lhs_inconclusive; break;
        }
        if (!a.report->converged() || !b.report->converged()) {
            all_ok = false;
            if (rep.worst_monomial.empty() || rep.max_deviation < INFINITY) {
                rep.worst_monomial = m.str() + " (" + verdict_name(a.report->status) + ")";
                rep.max_deviation = INFINITY;
            }
            continue;
        }
        // relative once coefficients exceed 1
        double dev = std::abs(a.value.complex() - b.value.complex()) / std::max(1.0, std::abs(b.value.complex()));
        if (dev > rep.max_deviation) {
            rep.max_deviation = dev;
            rep.worst_monomial = m.str();
        }
    }
    rep.pass = all_ok && rep.max_deviation <= opt.tol;
    return rep;
}

} // namespace fcalc
