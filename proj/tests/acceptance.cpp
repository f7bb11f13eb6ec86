// One PASS/FAIL line per acceptance criterion.  Tolerances are fixed here.

#include "fcalc/convlab.hpp"
#include "fcalc/delta.hpp"
#include "fcalc/heis.hpp"

#include <chrono>
#include <cmath>
#include <functional>
#include <iostream>
#include <random>
#include <set>
#include <sstream>

using namespace fcalc;
using namespace fcalc::heis;

namespace {

constexpr double kTolDelta = 1e-9;
constexpr double kTolOracle = 1e-10;
constexpr double kTolOracleLog = 1e-9;
constexpr size_t kOracleTerms = 60;
constexpr double kTolEquiv = 1e-8;
constexpr double kTolOmega = 1e-8;
constexpr double kTolJacobi = 1e-8;
constexpr double kTolSl2 = 1e-8;
constexpr double kTolCompat = 1e-8;
constexpr double kTolRecover = 1e-8;
constexpr double kTolDouble = 1e-9;
constexpr double kTolDeriv = 1e-5;
constexpr double kTolReorder = 1e-9;
constexpr double kTolVanish = 1e-9;
constexpr double kTolAnalytic = 1e-6;
constexpr double kTolBranch = 1e-10;

struct Outcome {
    bool pass = true;
    std::ostringstream detail;
    void need(bool ok, const std::string& what) {
        if (!ok) {
            if (pass) detail << "first failure: " << what << "; ";
            pass = false;
        }
    }
};

Triple triple(Rational a, Rational b, Rational c, std::array<Rational, 3> nu = {0, 0, 0},
              std::array<int, 3> K = {1, 1, 1}) {
    ChargeSpec cs;
    cs.lambda = {a, b, c};
    cs.nu = nu;
    cs.K = K;
    return cs.triple();
}

BranchedPoint pt(cplx z) { return {z, 0}; }

void note(Outcome& o, const Report& r) {
    o.need(r.pass, r.name + " (" + std::to_string(r.max_deviation) + " at " + r.worst + ")");
}

// 1. L1 exact in Q[z1, z2], frame 6
void crit1(Outcome& o) {
    VerifyOptions opt;
    opt.frame = 6;
    auto r = verify_delta_identity(DeltaId::L1, VerifyMode::Formal, opt);
    o.need(r.pass && r.max_deviation == 0.0, "l1 formal");
    o.detail << r.monomials << " monomials compared exactly";
}

// 2. L2a/L2b/L3/L4 at 5 points inside, 3 outside
void crit2(Outcome& o) {
    std::vector<std::pair<cplx, cplx>> in12{{2, 1}, {cplx(1.5, 1.5), cplx(0, 1)}, {-3, cplx(1, 1)}, {cplx(0, 2), -1},
                                            {2.5, cplx(0.5, -1)}};
    std::vector<std::pair<cplx, cplx>> in20{{1.25, 1}, {cplx(1.5, 1.2), cplx(1, 1)}, {-1.5, -2},
                                            {cplx(0, 2.5), cplx(0, 2)}, {cplx(1.3, -0.2), 1}};
    std::vector<std::pair<cplx, cplx>> out12{{1, 2}, {0.5, cplx(0, 1)}, {-1, 1.5}};
    std::vector<std::pair<cplx, cplx>> out20{{3, 1}, {-1, 1}, {cplx(0, 2), 0.5}};
    VerifyOptions opt;
    opt.frame = 4;
    opt.tol = kTolDelta;
    double worst = 0;
    size_t mons = 0;
    for (DeltaId id : {DeltaId::L2a, DeltaId::L2b, DeltaId::L3, DeltaId::L4}) {
        bool z0side = id == DeltaId::L2b || id == DeltaId::L4;
        for (auto p : z0side ? in20 : in12) {
            auto r = verify_delta_identity(id, VerifyMode::Numeric, opt, p);
            o.need(r.pass && r.lhs_diverged == 0 && r.lhs_inconclusive == 0,
                   std::string(delta_id_name(id)) + " at (" + format_complex(p.first) + "," + format_complex(p.second) + ")");
            worst = std::max(worst, r.max_deviation);
            mons += r.monomials;
        }
        VerifyOptions outside = opt;
        outside.outside_domain = true;
        for (auto p : z0side ? out20 : out12) {
            auto r = verify_delta_identity(id, VerifyMode::Numeric, outside, p);
            o.need(r.lhs_diverged + r.lhs_inconclusive > 0,
                   std::string(delta_id_name(id)) + " outside at (" + format_complex(p.first) + "," +
                       format_complex(p.second) + ") all converged");
        }
    }
    o.detail << mons << " in-domain monomials, max deviation " << worst;
}

// 3. closed-form oracle within 60 summed terms; log-deformed variant
void crit3(Outcome& o) {
    Triple t = triple(1, -1, 2);
    Insertion ins = highest_weight(t);
    cplx z1 = 2, z2 = 0.5;
    long L = 0;
    FormalSeries s = product_correlator(t, ins, L);
    while (true) {
        FormalSeries n = product_correlator(t, ins, L + 1);
        if (n.size() > kOracleTerms) break;
        s = n;
        ++L;
    }
    cplx v = specialize(s, {{Var::x1, pt(z1)}, {Var::x2, pt(z2)}}).total();
    cplx cf = closed_form_correlator(t, ins).product_chart(pt(z1), pt(z2));
    double e = std::abs(v - cf) / std::abs(cf);
    o.need(s.size() <= kOracleTerms && e <= kTolOracle, "hw oracle");

    Triple tl = triple(1, -1, 2, {1, 0, 0}, {2, 1, 1});
    double el = 0;
    for (auto J : {std::array<int, 3>{0, 0, 0}, std::array<int, 3>{1, 0, 0}}) {
        Insertion il = highest_weight(tl);
        il.bra = dual_hw(tl.shape, J);
        auto r = sum_product(tl, il, pt(z1), pt(z2));
        cplx c = closed_form_correlator(tl, il).product_chart(pt(z1), pt(z2));
        el = std::max(el, std::abs(r.value - c) / std::max(1.0, std::abs(c)));
        o.need(r.converged(), "log-deformed sum converged");
    }
    o.need(el <= kTolOracleLog, "log-deformed oracle");
    o.detail << s.size() << " terms, rel err " << e << "; log-deformed rel err " << el;
}

// 4. product at (1.2, 1) equals iterate at (0.2, 1)
void crit4(Outcome& o) {
    std::vector<Triple> ts{triple(1, -1, 2), triple(Rational(1, 2), Rational(-1, 2), 1),
                           triple(Rational(1, 3), Rational(2, 3), -1), triple(Rational(3, 2), Rational(1, 4), Rational(-2, 3)),
                           triple(Rational(1, 2), Rational(-1, 3), Rational(2, 3), {1, 1, 0}, {2, 2, 1})};
    double worst = 0;
    for (const auto& t : ts) {
        Insertion ins = t.shape.K[0] > 1 ? descendant_insertion(t) : highest_weight(t);
        auto p = sum_product(t, ins, pt(1.2), pt(1.0));
        auto i = sum_iterate(t, ins, pt(0.2), pt(1.0));
        double d = rel_dev(p.value, i.value);
        worst = std::max(worst, d);
        o.need(p.converged() && i.converged() && d <= kTolEquiv, "triple " + nil_str(t.c[0]));
    }
    o.detail << ts.size() << " triples, max deviation " << worst;
}

// 5. the two skew-symmetry equations, 3 points each
void crit5(Outcome& o) {
    Triple t = triple(Rational(1, 2), Rational(-1, 3), Rational(2, 3));
    Insertion ins = descendant_insertion(t);
    double worst = 0;
    bool lower_i = false, lower_p = false;
    for (auto [z2, z0] : std::vector<std::pair<cplx, cplx>>{{-2, 1}, {2, 0.5}, {cplx(0, 1.5), -0.5}}) {
        Report r = check_i2p(t, ins, z2, z0, kTolOmega);
        note(o, r);
        worst = std::max(worst, r.max_deviation);
        lower_i = lower_i || r.notes.front().find("pi<=arg<2pi") != std::string::npos;
    }
    for (auto [z1, z2] : std::vector<std::pair<cplx, cplx>>{{1.5, 1}, {-2, 1}, {cplx(0.5, -2), cplx(1, -0.5)}}) {
        Report r = check_p2i(t, ins, z1, z2, kTolOmega);
        note(o, r);
        worst = std::max(worst, r.max_deviation);
        lower_p = lower_p || r.notes.front().find("pi<=arg<2pi") != std::string::npos;
    }
    o.need(lower_i && lower_p, "branch casework with pi <= arg < 2pi exercised");
    o.detail << "6 points, max deviation " << worst;
}

// 6. composite Jacobi, formal at frame 3 and numeric
void crit6(Outcome& o) {
    Triple t = triple(1, -1, 1);
    JacobiOptions f;
    f.frame = 3;
    f.cutoff = 6;
    size_t compared = 0;
    for (Kind k : {Kind::Product, Kind::Iterate}) {
        Report r = check_composite_jacobi_formal(k, VoaVec::H1, t, highest_weight(t), f);
        note(o, r);
        compared += r.compared;
    }
    Triple u = triple(Rational(1, 2), Rational(-1, 3), Rational(2, 3));
    JacobiOptions n;
    n.frame = 3;
    n.tol = kTolJacobi;
    Report p = check_composite_jacobi_numeric(Kind::Product, VoaVec::H1, u, descendant_insertion(u), 2, 1, n);
    Report i = check_composite_jacobi_numeric(Kind::Iterate, VoaVec::H1, u, descendant_insertion(u), 1, 0.25, n);
    note(o, p);
    note(o, i);
    o.detail << "formal: " << compared << " monomials exact; numeric max deviation "
             << std::max(p.max_deviation, i.max_deviation);
}

// 7. sl(2) brackets
void crit7(Outcome& o) {
    Triple t = triple(Rational(1, 2), Rational(-1, 3), Rational(2, 3), {1, 1, 0}, {2, 2, 1});
    Insertion ins = descendant_insertion(t);
    double worst = 0;
    for (int j = -1; j <= 1; ++j) {
        for (Kind k : {Kind::Product, Kind::Iterate}) {
            Report r = k == Kind::Product ? check_sl2(k, j, t, ins, 2, 1, kTolSl2) : check_sl2(k, j, t, ins, 1, 0.25, kTolSl2);
            note(o, r);
            worst = std::max(worst, r.max_deviation);
        }
        auto lam = TripleFunctional::from_product(t, ins.bra, 2, 1);
        cplx a = L_prime_action(j, lam, ins.w1, ins.w2, ins.w3);
        cplx b = sum_product(t, {ins.w1, ins.w2, ins.w3, apply_L_dual(-j, ins.bra, t.c4())}, pt(2), pt(1)).value;
        o.need(rel_dev(a, b) <= kTolSl2, "L' action j=" + std::to_string(j));
        worst = std::max(worst, rel_dev(a, b));
    }
    Report fd = check_sl2(Kind::Product, -1, t, highest_weight(t), 2, cplx(0.5, 0.5), kTolSl2);
    note(o, fd);
    o.detail << "max deviation " << worst << "; " << fd.notes.back();
}

// 8. compatibility of w4' o F and the random-functional control
void crit8(Outcome& o) {
    Triple t = triple(Rational(1, 2), Rational(-1, 3), Rational(2, 3));
    Insertion ins = descendant_insertion(t);
    CompatOptions c;
    c.tol = kTolCompat;
    auto lam = TripleFunctional::from_product(t, ins.bra, 2, 1);
    Report r = check_Pz1z2_compatibility(lam, VoaVec::H1, ins.w1, ins.w2, ins.w3, c);
    Report v = check_Pz1z2_compatibility(lam, VoaVec::Vacuum, ins.w1, ins.w2, ins.w3, c);
    note(o, r);
    note(o, v);
    for (auto vv : {VoaVec::Vacuum, VoaVec::H1}) note(o, check_tau_intertwining(vv, t, ins.bra, ins.w1, ins.w2, ins.w3, 2, 1, c));
    Report bad = check_Pz1z2_compatibility(TripleFunctional::random(t, 2024), VoaVec::H1, ins.w1, ins.w2, ins.w3, c);
    o.need(!bad.pass, "random functional passed");
    o.detail << "max deviation " << r.max_deviation << "; random control flagged " << bad.worst;
}

// 9. unique-expansion recovery
void crit9(Outcome& o) {
    std::mt19937_64 rng(9001);
    std::uniform_int_distribution<int> num(-8, 8), cnt(1, 12), lg(0, 3);
    std::normal_distribution<double> nd;
    double worst = 0, cond = 0;
    for (int trial = 0; trial < 50; ++trial) {
        std::set<std::pair<Rational, unsigned>> picked;
        int target = cnt(rng);
        while (int(picked.size()) < target) picked.insert({Rational(num(rng), 4), unsigned(lg(rng))});
        Support S(picked.begin(), picked.end());
        std::map<std::pair<Rational, unsigned>, cplx> truth;
        for (const auto& s : S) truth[s] = cplx(nd(rng), nd(rng));
        std::vector<std::pair<BranchedPoint, cplx>> samples, zeros;
        for (const auto& p : default_sample_points(S.size())) {
            cplx v = 0.0;
            for (const auto& [k, c] : truth) v += c * branch_power(p, k.first, k.second);
            samples.push_back({p, v});
            zeros.push_back({p, 0.0});
        }
        auto r = unique_expansion_recover(samples, S);
        worst = std::max(worst, r.residual);
        cond = std::max(cond, r.condition_estimate);
        o.need(r.residual <= kTolRecover, "residual trial " + std::to_string(trial));
        auto z = unique_expansion_recover(zeros, S);
        for (const auto& [k, c] : z.coefficients) o.need(std::abs(c) <= kTolRecover, "zero-sample trial");
    }
    o.detail << "50 trials, max residual " << worst << ", max condition estimate " << cond;
}

// 10. double against iterated sums, derivative probe
void crit10(Outcome& o) {
    auto suite = generated_suite();
    o.need(suite.size() == 20, "suite size");
    double gap = 0;
    for (const auto& s : suite) {
        auto r = double_vs_iterated(s.coeffs, s.pt, kTolDouble);
        o.need(r.verdicts_agree, s.name + " verdicts");
        if (r.iterated.converged() && r.flat.converged()) {
            o.need(r.max_value_gap <= kTolDouble, s.name + " values");
            gap = std::max(gap, r.max_value_gap);
        }
    }
    PowerSeriesData ex{0, Rational(1, 2), [](long k) { return cplx(1.0 / std::tgamma(k + 1.0)); }, 200};
    auto d = termwise_derivative_probe(ex, {cplx(0.9, 0.3), 0}, kTolDouble);
    o.need(d.pass && d.fd_checked && d.fd_rel_err <= kTolDeriv, "derivative probe");
    o.detail << "20 series, max value gap " << gap << "; derivative FD rel err " << d.fd_rel_err;
}

// 11. two summation schedules on log-deformed correlators
void crit11(Outcome& o) {
    Triple t = triple(Rational(1, 2), Rational(-1, 3), Rational(2, 3), {1, 1, 0}, {2, 2, 1});
    Insertion ins = descendant_insertion(t);
    double worst = 0;
    for (auto [z1, z2] : std::vector<std::pair<cplx, cplx>>{{2, 1}, {cplx(0, 2), cplx(0.5, 0.5)}, {-1.5, 0.4}}) {
        Report r = reorder_check(t, ins, z1, z2, kTolReorder);
        note(o, r);
        worst = std::max(worst, r.max_deviation);
    }
    o.detail << "3 points, max deviation " << worst;
}

// 12. vanishing propagation, product and iterate
void crit12(Outcome& o) {
    Triple t = triple(Rational(1, 2), Rational(-1, 3), Rational(2, 3));
    Insertion ins = descendant_insertion(t);
    std::vector<std::pair<cplx, cplx>> prod{{2, 1}, {1.5, cplx(0, 1)}, {3, -1}, {cplx(-2, 1), 0.5}, {cplx(0, -2), 1}};
    std::vector<std::pair<cplx, cplx>> iter{{1, 0.25}, {2, cplx(0.5, 0.5)}, {cplx(0, 1), 0.5}, {-2, 1}, {cplx(1, -1), -0.3}};
    double worst = 0;
    size_t n = 0;
    for (Kind k : {Kind::Product, Kind::Iterate}) {
        Report r = vanishing_propagation_check(k, VanishingCase::Omega, t, ins, k == Kind::Product ? prod : iter, kTolVanish);
        note(o, r);
        worst = std::max(worst, r.max_deviation);
        n += r.compared;
        Report id = vanishing_propagation_check(k, VanishingCase::Identical, t, ins, k == Kind::Product ? prod : iter, kTolVanish);
        note(o, id);
        Report c = vanishing_propagation_check(k, VanishingCase::Control, t, ins, k == Kind::Product ? prod : iter, kTolVanish);
        o.need(!c.pass, "control construction passed");
    }
    o.detail << n << " (p,q) components, max " << worst;
}

// 13. analyticity surrogate and branch adjacency
void crit13(Outcome& o) {
    Triple t = triple(Rational(1, 2), Rational(-1, 3), Rational(2, 3), {1, 0, 0}, {2, 1, 1});
    Insertion ins = descendant_insertion(t);
    double worst = 0;
    for (auto [z1, z2] : std::vector<std::pair<cplx, cplx>>{
             {2, cplx(0, 1)}, {2, -0.5}, {cplx(1.5, 1), cplx(-0.5, 0.5)}, {cplx(0, -3), cplx(1, -1)}, {-2.5, cplx(-1, -0.7)}}) {
        Report r = analyticity_check(t, ins, z1, z2, 1e-4, kTolAnalytic);
        note(o, r);
        worst = std::max(worst, r.max_deviation);
    }
    Triple u = triple(Rational(1, 2), Rational(-1, 2), 1);
    Report b = branch_adjacency_check(u, highest_weight(u), 2, 1, kTolBranch);
    Triple w = triple(1, -1, 2);
    Report c = branch_adjacency_check(w, highest_weight(w), 2, cplx(0, 1), kTolBranch);
    note(o, b);
    note(o, c);
    o.detail << "FD max rel err " << worst << "; branch phase deviation " << std::max(b.max_deviation, c.max_deviation);
}

} // namespace

int main() {
    std::vector<std::pair<int, std::function<void(Outcome&)>>> crits{
        {1, crit1}, {2, crit2}, {3, crit3},   {4, crit4},   {5, crit5},   {6, crit6},  {7, crit7},
        {8, crit8}, {9, crit9}, {10, crit10}, {11, crit11}, {12, crit12}, {13, crit13}};
    int failed = 0;
    for (auto& [n, f] : crits) {
        Outcome o;
        auto t0 = std::chrono::steady_clock::now();
        try {
            f(o);
        } catch (const std::exception& e) {
            o.need(false, std::string("exception: ") + e.what());
        }
        double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        std::cout << (o.pass ? "PASS" : "FAIL") << " criterion " << n << ": " << o.detail.str() << " [" << secs
                  << " s]" << std::endl;
        failed += !o.pass;
    }
    return failed ? 1 : 0;
}
