#include <doctest.h>

#include "fcalc/branch.hpp"

#include <cmath>
#include <numbers>
#include <random>

using namespace fcalc;
using std::numbers::pi;

namespace {
Monomial mono(std::initializer_list<std::pair<Var, long>> es) {
    Monomial m;
    for (auto [v, e] : es) m.set(v, Rational(e));
    return m;
}
bool close(cplx a, cplx b, double tol) { return std::abs(a - b) <= tol; }
} // namespace

TEST_CASE("log_branch conventions") {
    CHECK(close(log_branch({cplx(0, 1), 0}), cplx(0, pi / 2), 1e-15));
    CHECK(close(log_branch({cplx(-1, 0), -1}), cplx(0, -pi), 1e-15));
    CHECK(close(branch_power({cplx(4, 0), 0}, Rational(1, 2), 0), cplx(2, 0), 1e-15));
    CHECK(close(log_branch({cplx(1, -1e-300), 0}), cplx(0, 2 * pi), 1e-12));
    CHECK_THROWS(log_branch({cplx(0, 0), 0}));
}

TEST_CASE("rotate_point casework") {
    auto r = rotate_point_traced({cplx(1, 0), 0}, -1);
    CHECK(r.pt.z == cplx(-1, 0));
    CHECK(close(log_branch(r.pt), cplx(0, -pi), 1e-15));
    CHECK(r.casework.rfind("0<=arg<pi", 0) == 0);

    BranchedPoint q{2.0 * std::exp(cplx(0, 1.5 * pi)), 0};
    auto s = rotate_point_traced(q, -1);
    CHECK(s.pt.p == 0);
    CHECK(close(log_branch(s.pt), cplx(std::log(2.0), pi / 2), 1e-14));
    CHECK(s.casework.rfind("pi<=arg<2pi", 0) == 0);

    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> u(-3, 3);
    for (int i = 0; i < 500; ++i) {
        BranchedPoint pt{cplx(u(rng), u(rng)), int(u(rng))};
        for (int h : {1, -1}) {
            auto rp = rotate_point(pt, h);
            CHECK(close(log_branch(rp), log_branch(pt) + cplx(0, h * pi), 1e-12));
            auto back = rotate_point(rp, -h);
            CHECK(back.z == pt.z);
            CHECK(back.p == pt.p);
        }
    }
}

TEST_CASE("branch index properties") {
    std::mt19937_64 rng(17);
    std::uniform_real_distribution<double> u(-5, 5);
    for (int i = 0; i < 500; ++i) {
        cplx z(u(rng), u(rng));
        int p = int(u(rng));
        CHECK(close(std::exp(log_branch({z, p})), z, 1e-12 * std::max(1.0, std::abs(z))));
        // exact up to the rounding of arg + 2 pi p
        CHECK(close(log_branch({z, p + 1}) - log_branch({z, p}), cplx(0, 2 * pi), 64e-16));
    }
}

TEST_CASE("specialize: partial sums by weight") {
    FormalSeries s(CoeffTag::ExactRational, Frame::box({Var::z}, 3));
    s.add_term(Monomial{}, Coefficient(1));
    s.add_term(mono({{Var::z, 1}}), Coefficient(1));
    s.add_term(mono({{Var::z, 2}}), Coefficient(1));
    auto st = specialize(s, {{Var::z, {cplx(0.5, 0), 0}}}, {ScheduleKind::Weight, Var::z});
    auto ps = st.partial_sums();
    REQUIRE(ps.size() == 3);
    CHECK(close(ps[0], 1.0, 1e-15));
    CHECK(close(ps[1], 1.5, 1e-15));
    CHECK(close(ps[2], 1.75, 1e-15));
    CHECK(st.positive_real_point());

    FormalSeries l(CoeffTag::ExactRational, Frame::box({Var::z}, 1, 1));
    l.add_term(Monomial{{Var::z, Rational(1, 2), 1}}, Coefficient(1));
    CHECK(close(specialize(l, {{Var::z, {cplx(4, 0), 0}}}).total(), 2 * std::log(4.0), 1e-14));

    FormalSeries e(CoeffTag::ExactRational, Frame::box({Var::z}, 1));
    CHECK(specialize(e, {{Var::z, {cplx(2, 0), 0}}}).groups().empty());
}

TEST_CASE("specialize: geometric kernel sums to (z1 - z2)^-1") {
    Frame f;
    f.set(Var::x1, -41, -1).set(Var::x2, 0, 40);
    FormalSeries s(CoeffTag::ExactRational, f);
    for (long k = 0; k <= 40; ++k) s.add_term(mono({{Var::x1, -1 - k}, {Var::x2, k}}), Coefficient(1));
    auto st = specialize(s, {{Var::x1, {cplx(2, 0), 0}}, {Var::x2, {cplx(1, 0), 0}}}, {ScheduleKind::Weight, Var::x2});
    CHECK(std::abs(st.total() - 1.0) <= 1e-10);
    CHECK(st.groups().size() == 41);
}

TEST_CASE("specialize is linear and integer series are branch independent") {
    std::mt19937_64 rng(8);
    std::uniform_int_distribution<long> e(-3, 3), c(-5, 5);
    Frame f = Frame::box({Var::x1, Var::x2}, 3);
    for (int t = 0; t < 30; ++t) {
        FormalSeries a(CoeffTag::ExactRational, f), b(CoeffTag::ExactRational, f);
        for (int i = 0; i < 10; ++i) {
            a.add_term(mono({{Var::x1, e(rng)}, {Var::x2, e(rng)}}), Coefficient(Rational(c(rng))));
            b.add_term(mono({{Var::x1, e(rng)}, {Var::x2, e(rng)}}), Coefficient(Rational(c(rng))));
        }
        Assignment asg{{Var::x1, {cplx(1.3, 0.4), 0}}, {Var::x2, {cplx(-0.7, -0.2), 0}}};
        Schedule sch{ScheduleKind::Weight, Var::x2};
        auto sa = specialize(a, asg, sch), sb = specialize(b, asg, sch), sab = specialize(series_add(a, b), asg, sch);
        std::map<Rational, cplx> merged;
        for (const auto& g : sa.groups()) merged[g.key] += g.sum;
        for (const auto& g : sb.groups()) merged[g.key] += g.sum;
        for (const auto& g : sab.groups()) CHECK(close(g.sum, merged[g.key], 1e-12));
        for (int p : {-1, 1}) {
            Assignment q = asg;
            q[Var::x1].p = p;
            q[Var::x2].p = -p;
            CHECK(close(specialize(a, q, sch).total(), sa.total(), 1e-10));
        }
    }
}
