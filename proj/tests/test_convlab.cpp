#include <doctest.h>

#include "fcalc/convlab.hpp"

#include <cmath>
#include <random>
#include <set>

using namespace fcalc;

namespace {
TermGen seq(std::function<cplx(long)> f, long limit = -1) {
    auto k = std::make_shared<long>(0);
    return [f, k, limit]() -> std::optional<cplx> {
        if (limit >= 0 && *k >= limit) return std::nullopt;
        return f((*k)++);
    };
}
} // namespace

TEST_CASE("probe: geometric, growing, sub-geometric") {
    auto g = abs_convergence_probe(seq([](long k) { return cplx(std::pow(0.5, double(k))); }), {1e-9, 8, 10000});
    CHECK(g.status == Verdict::Converged);
    CHECK(std::abs(g.value - 2.0) <= 1e-9);
    CHECK(g.tail_estimate < 1e-9);
    CHECK(std::abs(g.ratio_estimate - 0.5) < 1e-6);

    auto d = abs_convergence_probe(seq([](long k) { return cplx(std::pow(2.0, double(k))); }), {1e-9, 8, 10000});
    CHECK(d.status == Verdict::Diverged);

    auto h = abs_convergence_probe(seq([](long k) { return cplx(1.0 / ((k + 1.0) * (k + 1.0))); }), {1e-9, 8, 10000});
    CHECK(h.status == Verdict::Inconclusive);
    CHECK(h.terms_used == 10000);
    CHECK(h.notes.find("sub-geometric") != std::string::npos);

    CHECK_THROWS(abs_convergence_probe(seq([](long) { return cplx(1.0); }), {1e-9, 3, 100}));
}

TEST_CASE("probe: finite streams") {
    auto f = abs_convergence_probe(seq([](long k) { return cplx(double(k + 1)); }, 3), {1e-9, 8, 100, true});
    CHECK(f.status == Verdict::Converged);
    CHECK(f.value == cplx(6.0));
    auto t = abs_convergence_probe(seq([](long k) { return cplx(std::pow(0.9, double(k))); }, 20), {1e-9, 8, 100, false});
    CHECK(t.status == Verdict::Inconclusive);
}

TEST_CASE("probe monotonicity in the tolerance") {
    std::mt19937_64 rng(1);
    std::uniform_real_distribution<double> u(0.05, 0.9);
    for (int i = 0; i < 50; ++i) {
        double r = u(rng);
        cplx ph = std::polar(1.0, u(rng) * 7);
        auto gen = [&] { return seq([r, ph](long k) { return std::pow(r * ph, double(k)) * (1.0 + 0.1 * std::sin(double(k))); }); };
        for (double t : {1e-12, 1e-9, 1e-6}) {
            auto a = abs_convergence_probe(gen(), {t, 8, 10000});
            if (!a.converged()) continue;
            for (double t2 : {t * 10, t * 1000}) {
                auto b = abs_convergence_probe(gen(), {t2, 8, 10000});
                CHECK(b.converged());
                CHECK(b.value == a.value);
            }
        }
    }
}

TEST_CASE("double vs iterated: finite and geometric") {
    LogCoeffs fin;
    for (int k = 0; k < 10; ++k)
        for (unsigned b = 0; b < 2; ++b) fin[{Rational(k), b}] = (k == 3 || k == 5) ? cplx(1.0 + b) : cplx(0.0);
    auto rf = double_vs_iterated(fin, {cplx(0.7, 0.2), 0}, 1e-9);
    CHECK(rf.verdicts_agree);
    CHECK(rf.pass);

    LogCoeffs geo;
    const double r = 0.5;
    cplx z(0.8, 0.6);
    for (int k = 0; k < 100; ++k) geo[{Rational(k), 0}] = std::pow(r, double(k));
    auto rg = double_vs_iterated(geo, {z, 0}, 1e-10);
    CHECK(rg.pass);
    CHECK(std::abs(rg.iterated.value - 1.0 / (1.0 - r * z)) <= 1e-10);

    LogCoeffs tiny;
    tiny[{Rational(0), 0}] = 1.0;
    CHECK_THROWS(double_vs_iterated(tiny, {z, 0}, 1e-9));
}

TEST_CASE("double vs iterated: generated suite of 20") {
    auto suite = generated_suite();
    REQUIRE(suite.size() == 20);
    for (const auto& s : suite) {
        auto r = double_vs_iterated(s.coeffs, s.pt, 1e-9);
        INFO(s.name);
        CHECK(r.verdicts_agree);
        if (s.expect_converge) {
            CHECK(r.iterated.converged());
            CHECK(r.max_value_gap <= 1e-9);
            CHECK(std::abs(r.iterated.value - s.closed_form) <= 1e-9 * std::max(1.0, std::abs(s.closed_form)));
        } else {
            CHECK(r.iterated.status == Verdict::Diverged);
        }
    }
}

TEST_CASE("term-wise derivative probe") {
    PowerSeriesData geo{0, 1, [](long) { return cplx(1.0); }, 400};
    auto r = termwise_derivative_probe(geo, {cplx(0.5, 0), 0}, 1e-9);
    CHECK(r.pass);
    CHECK(std::abs(r.at_pt.value - 4.0) <= 1e-9);

    PowerSeriesData ex{0, Rational(1, 2), [](long k) { return cplx(1.0 / std::tgamma(k + 1.0)); }, 200};
    auto e = termwise_derivative_probe(ex, {cplx(0.9, 0), 0}, 1e-9);
    CHECK(e.pass);
    CHECK(e.fd_rel_err <= 1e-5);

    PowerSeriesData fac{0, 1, [](long k) { return cplx(std::tgamma(k + 1.0)); }, 150};
    CHECK_THROWS_AS(termwise_derivative_probe(fac, {cplx(0.5, 0), 0}, 1e-9), std::domain_error);
}

TEST_CASE("unique expansion recovery") {
    Support S{{Rational(1, 2), 0}, {Rational(1, 2), 1}};
    std::vector<std::pair<BranchedPoint, cplx>> samples;
    for (int j = 0; j < 8; ++j) {
        BranchedPoint p{std::polar(2.0, 2 * M_PI * (j + 0.5) / 8), 0};
        samples.push_back({p, 2.0 * branch_power(p, Rational(1, 2), 0) - 3.0 * branch_power(p, Rational(1, 2), 1)});
    }
    auto r = unique_expansion_recover(samples, S);
    CHECK(r.residual <= 1e-10);
    CHECK(std::abs(r.coefficients.at({Rational(1, 2), 0}) - 2.0) <= 1e-10);
    CHECK(std::abs(r.coefficients.at({Rational(1, 2), 1}) + 3.0) <= 1e-10);

    Support S6{{0, 0}, {1, 0}, {Rational(1, 3), 1}, {-1, 0}, {Rational(-1, 2), 2}, {2, 1}};
    std::vector<std::pair<BranchedPoint, cplx>> zeros;
    for (const auto& p : default_sample_points(S6.size())) zeros.push_back({p, 0.0});
    auto z = unique_expansion_recover(zeros, S6);
    for (const auto& [k, c] : z.coefficients) CHECK(std::abs(c) <= 1e-10);
    CHECK(z.condition_estimate < 1e12);

    Support dup{{Rational(1, 2), 0}, {Rational(1, 2), 0}};
    CHECK_THROWS_AS(unique_expansion_recover(samples, dup), RankError);
}

TEST_CASE("recovery composed with forward evaluation, 50 random trials") {
    std::mt19937_64 rng(4242);
    std::uniform_int_distribution<int> num(-8, 8), cnt(1, 12), lg(0, 3);
    std::normal_distribution<double> nd;
    for (int t = 0; t < 50; ++t) {
        std::set<std::pair<Rational, unsigned>> picked;
        int target = cnt(rng);
        while (int(picked.size()) < target) picked.insert({Rational(num(rng), 4), unsigned(lg(rng))});
        Support S(picked.begin(), picked.end());
        std::map<std::pair<Rational, unsigned>, cplx> truth;
        for (auto& s : S) truth[s] = cplx(nd(rng), nd(rng));
        std::vector<std::pair<BranchedPoint, cplx>> samples;
        for (const auto& p : default_sample_points(S.size())) {
            cplx v = 0.0;
            for (auto& [k, c] : truth) v += c * branch_power(p, k.first, k.second);
            samples.push_back({p, v});
        }
        auto r = unique_expansion_recover(samples, S);
        CHECK(r.residual <= 1e-8);
        for (auto& [k, c] : truth) CHECK(std::abs(r.coefficients.at(k) - c) <= 1e-8 * std::max(1.0, std::abs(c)));
    }
}
