#include "fcalc/convlab.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <memory>
#include <numbers>
#include <set>

namespace fcalc {

const char* verdict_name(Verdict v) {
    switch (v) {
    case Verdict::Converged: return "converged";
    case Verdict::Diverged: return "diverged";
    case Verdict::Inconclusive: return "inconclusive";
    }
    return "?";
}

namespace {

struct Fit {
    double r = 0.0;
    double last = 0.0; // fitted magnitude at the last index (or the last term if larger)
};

Fit fit_window(const std::vector<double>& mags, size_t window) {
    size_t n = mags.size();
    size_t from = n - window;
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    int cnt = 0;
    for (size_t i = from; i < n; ++i) {
        if (mags[i] <= 0 || !std::isfinite(mags[i])) continue;
        double x = double(i - from), y = std::log(mags[i]);
        sx += x;
        sy += y;
        sxx += x * x;
        sxy += x * y;
        ++cnt;
    }
    Fit f;
    if (cnt < 2) {
        f.r = 0.0;
        f.last = cnt ? mags.back() : 0.0;
        return f;
    }
    double den = cnt * sxx - sx * sx;
    double slope = (cnt * sxy - sx * sy) / den;
    double icpt = (sy - slope * sx) / cnt;
    f.r = std::exp(slope);
    f.last = std::max(mags.back(), std::exp(icpt + slope * double(window - 1)));
    return f;
}

bool growing(const std::vector<double>& mags, size_t window, size_t stride) {
    // block maxima must increase strictly across the window
    size_t n = mags.size();
    size_t blocks = window / stride;
    if (blocks < 2) return false;
    double prev = -1;
    for (size_t b = 0; b < blocks; ++b) {
        double m = 0;
        for (size_t i = 0; i < stride; ++i) m = std::max(m, mags[n - window + b * stride + i]);
        if (b > 0 && !(m > prev)) return false;
        prev = m;
    }
    return true;
}

} // namespace

static ConvergenceReport abs_convergence_probe_strided(const TermGen& gen, const ProbeOptions& opt, size_t stride) {
    if (opt.window < 4) throw std::invalid_argument("abs_convergence_probe: window must be >= 4");
    ConvergenceReport rep;
    std::vector<double> mags;
    cplx sum = 0.0;
    double maxterm = 0.0;
    Fit fit;
    bool have_fit = false, ended = false, diverged = false, settled = false;
    while (mags.size() < opt.max_terms) {
        auto t = gen();
        if (!t) {
            ended = true;
            break;
        }
        sum += *t;
        double m = std::abs(*t);
        mags.push_back(m);
        if (!std::isfinite(m) || !std::isfinite(std::abs(sum))) {
            diverged = true;
            break;
        }
        maxterm = std::max(maxterm, m);
        if (mags.size() < opt.window) continue;
        fit = fit_window(mags, opt.window);
        have_fit = true;
        if (fit.r < 0.95) {
            double bound = fit.last * fit.r / (1 - fit.r);
            if (bound <= 1e-16 * std::max(std::abs(sum), maxterm)) {
                settled = true;
                break;
            }
        }
        if (fit.r > 1.05 && growing(mags, opt.window, stride) && mags.size() >= 3 * opt.window) {
            // growth must persist over three windows without slowing down; a
            // falling ratio is a polynomial prefactor in front of a geometric tail
            std::vector<double> h1(mags.begin(), mags.end() - long(opt.window));
            std::vector<double> h2(mags.begin(), mags.end() - 2 * long(opt.window));
            double r1 = fit_window(h1, opt.window).r, r2 = fit_window(h2, opt.window).r;
            if (r1 > 1.05 && r2 > 1.05 && r1 <= 1.02 * fit.r && r2 <= 1.02 * r1) {
                diverged = true;
                break;
            }
        }
    }
    rep.value = sum;
    rep.terms_used = mags.size();
    rep.ratio_estimate = have_fit ? fit.r : 0.0;
    double bound = (have_fit && fit.r < 1) ? fit.last * fit.r / (1 - fit.r) : INFINITY;
    if (diverged) {
        rep.status = Verdict::Diverged;
        rep.tail_estimate = INFINITY;
        rep.notes = "magnitudes grow over the window";
        return rep;
    }
    if (ended && opt.complete) {
        rep.status = Verdict::Converged;
        rep.tail_estimate = 0.0;
        rep.notes = "finite sum";
        return rep;
    }
    if (!have_fit) {
        rep.status = Verdict::Inconclusive;
        rep.tail_estimate = INFINITY;
        rep.notes = "stream shorter than the diagnostic window";
        return rep;
    }
    rep.tail_estimate = bound;
    double tol = opt.relative ? opt.tol * std::max(1.0, std::abs(sum)) : opt.tol;
    if (fit.r < 0.95 && bound < tol) {
        rep.status = Verdict::Converged;
        rep.notes = settled ? "geometric tail below rounding" : "geometric tail below tolerance";
        return rep;
    }
    rep.status = Verdict::Inconclusive;
    if (fit.r >= 0.95 && fit.r <= 1.05)
        rep.notes = "sub-geometric behaviour: fitted ratio near 1";
    else if (fit.r < 0.95)
        rep.notes = ended ? "stream exhausted before the tail fell below tolerance" : "tail above tolerance at max_terms";
    else
        rep.notes = "growing but not monotone over the window";
    return rep;
}

ConvergenceReport abs_convergence_probe(const TermGen& gen, const ProbeOptions& opt) {
    return abs_convergence_probe_strided(gen, opt, 1);
}

ConvergenceReport probe_terms(const std::vector<cplx>& terms, const ProbeOptions& opt) {
    size_t i = 0;
    return abs_convergence_probe([&]() -> std::optional<cplx> {
        if (i >= terms.size()) return std::nullopt;
        return terms[i++];
    }, opt);
}

namespace {
TermGen vector_gen(std::shared_ptr<std::vector<cplx>> v) {
    auto i = std::make_shared<size_t>(0);
    return [v, i]() -> std::optional<cplx> {
        if (*i >= v->size()) return std::nullopt;
        return (*v)[(*i)++];
    };
}
} // namespace

DoubleIteratedReport double_vs_iterated(const LogCoeffs& a, const BranchedPoint& pt, double tol, size_t window) {
    std::set<Rational> alphas;
    unsigned maxb = 0;
    for (const auto& [k, c] : a) {
        alphas.insert(k.first);
        maxb = std::max(maxb, k.second);
    }
    if (alphas.size() < window) throw std::invalid_argument("double_vs_iterated: frame too small for the diagnostic window");
    cplx l = log_branch(pt);
    auto flat = std::make_shared<std::vector<cplx>>();
    auto iter = std::make_shared<std::vector<cplx>>();
    std::vector<std::shared_ptr<std::vector<cplx>>> per(maxb + 1);
    for (auto& p : per) p = std::make_shared<std::vector<cplx>>();
    auto it = a.begin();
    for (const auto& al : alphas) {
        cplx za = std::exp(to_double(al) * l);
        cplx inner = 0.0;
        for (; it != a.end() && it->first.first == al; ++it) {
            unsigned b = it->first.second;
            cplx lb = std::pow(l, double(b));
            cplx t = it->second * za * lb;
            flat->push_back(t);
            inner += t;
            per[b]->push_back(it->second * za);
        }
        iter->push_back(inner);
    }
    DoubleIteratedReport rep;
    ProbeOptions po{tol, window, 100000, false};
    ProbeOptions pflat = po;
    size_t stride = maxb + 1;
    pflat.window = window * stride;
    rep.flat = abs_convergence_probe_strided(vector_gen(flat), pflat, stride);
    rep.iterated = abs_convergence_probe(vector_gen(iter), po);
    bool all_conv = true, any_div = false;
    for (unsigned b = 0; b <= maxb; ++b) {
        if (per[b]->empty()) continue;
        ConvergenceReport r = per[b]->size() >= window ? abs_convergence_probe(vector_gen(per[b]), po)
                                                       : ConvergenceReport{Verdict::Inconclusive, 0.0, INFINITY, 0, 0, "too few terms"};
        all_conv = all_conv && r.converged();
        any_div = any_div || r.status == Verdict::Diverged;
        rep.per_log_recombined += r.value * std::pow(l, double(b));
        rep.per_log.push_back(r);
    }
    Verdict per_v = all_conv ? Verdict::Converged : (any_div ? Verdict::Diverged : Verdict::Inconclusive);
    rep.verdicts_agree = rep.flat.status == rep.iterated.status && rep.iterated.status == per_v;
    if (rep.verdicts_agree && per_v == Verdict::Converged) {
        rep.max_value_gap = std::max({std::abs(rep.flat.value - rep.iterated.value),
                                      std::abs(rep.flat.value - rep.per_log_recombined),
                                      std::abs(rep.iterated.value - rep.per_log_recombined)});
    }
    rep.pass = rep.verdicts_agree && rep.max_value_gap <= tol;
    return rep;
}

std::vector<SuiteSeries> generated_suite() {
    std::vector<SuiteSeries> out;
    const double rs[10] = {0.5, 0.3, 0.7, 0.25, 0.6, 0.45, 0.8, 0.35, 0.55, 0.4};
    const cplx zs[10] = {{0.9, 0.3}, {1.5, -0.5}, {-0.6, 0.4}, {2.0, 1.0}, {0.3, -1.2},
                         {-1.1, -0.7}, {0.2, 0.9}, {1.9, 0.0}, {-0.8, 0.8}, {0.0, -1.6}};
    const Rational shifts[10] = {0, Rational(1, 2), Rational(-1, 3), 0, Rational(1, 4), Rational(2, 3), 0, Rational(-1, 2), 1, Rational(3, 4)};
    for (int i = 0; i < 10; ++i) {
        SuiteSeries s;
        s.name = "geometric-" + std::to_string(i);
        s.pt = {zs[i], (i % 3) - 1};
        s.expect_converge = true;
        unsigned N = i % 3;
        cplx l = log_branch(s.pt);
        cplx lpoly = 0.0;
        for (unsigned b = 0; b <= N; ++b) lpoly += (1.0 / (b + 1.0)) * std::pow(l, double(b));
        for (int k = 0; k < 120; ++k) {
            Rational al = shifts[i] + k;
            double ra = std::pow(rs[i], to_double(al));
            for (unsigned b = 0; b <= N; ++b) s.coeffs[{al, b}] = ra / (b + 1.0);
        }
        double s0 = to_double(shifts[i]);
        s.closed_form = lpoly * std::pow(rs[i], s0) * std::exp(s0 * l) / (1.0 - rs[i] * std::exp(l));
        out.push_back(std::move(s));
    }
    for (int i = 0; i < 10; ++i) {
        SuiteSeries s;
        s.name = "factorial-" + std::to_string(i);
        s.pt = {zs[i] * 0.5, 0};
        s.expect_converge = false;
        unsigned N = i % 3;
        double fact = 1.0;
        for (int k = 0; k < 80; ++k) {
            if (k > 0) fact *= k;
            for (unsigned b = 0; b <= N; ++b) s.coeffs[{shifts[i] + k, b}] = fact * (b + 1.0);
        }
        out.push_back(std::move(s));
    }
    return out;
}

DerivativeReport termwise_derivative_probe(const PowerSeriesData& s, const BranchedPoint& pt, double tol, double radial_delta) {
    auto terms = [&](const BranchedPoint& q, bool deriv) {
        auto v = std::make_shared<std::vector<cplx>>();
        for (long k = 0; k <= s.max_index; ++k) {
            Rational al = s.start + s.step * k;
            cplx c = s.coeff(k);
            if (deriv) {
                if (al == 0) continue;
                v->push_back(c * to_double(al) * branch_power(q, al - 1, 0));
            } else {
                v->push_back(c * branch_power(q, al, 0));
            }
        }
        return v;
    };
    ProbeOptions po{tol, 8, size_t(s.max_index + 1), false};
    DerivativeReport rep;
    rep.base = abs_convergence_probe(vector_gen(terms(pt, false)), po);
    if (!rep.base.converged())
        throw std::domain_error(std::string("termwise_derivative_probe: base series ") + verdict_name(rep.base.status) + " at the point");
    BranchedPoint in{pt.z * (1 - radial_delta), pt.p}, out{pt.z * (1 + radial_delta), pt.p};
    rep.at_pt = abs_convergence_probe(vector_gen(terms(pt, true)), po);
    rep.inner = abs_convergence_probe(vector_gen(terms(in, true)), po);
    rep.outer = abs_convergence_probe(vector_gen(terms(out, true)), po);
    if (rep.at_pt.converged()) {
        const double h = 1e-4;
        BranchedPoint a{pt.z * (1 + h), pt.p}, b{pt.z * (1 - h), pt.p};
        auto fa = abs_convergence_probe(vector_gen(terms(a, false)), po);
        auto fb = abs_convergence_probe(vector_gen(terms(b, false)), po);
        if (fa.converged() && fb.converged()) {
            cplx fd = (fa.value - fb.value) / (2.0 * h * pt.z);
            rep.fd_rel_err = std::abs(fd - rep.at_pt.value) / std::max(std::abs(rep.at_pt.value), 1e-300);
            rep.fd_checked = true;
        }
    }
    rep.pass = rep.at_pt.converged() && rep.inner.converged() && rep.outer.converged() && rep.fd_checked && rep.fd_rel_err <= 1e-5;
    return rep;
}

std::vector<BranchedPoint> default_sample_points(size_t support_size, double r1, double r2) {
    size_t total = std::max<size_t>(2 * support_size, 2);
    size_t n1 = total / 2, n2 = total - n1;
    std::vector<BranchedPoint> pts;
    for (size_t j = 0; j < n1; ++j)
        pts.push_back({std::polar(r1, 2 * std::numbers::pi * (j + 0.5) / n1), 0});
    for (size_t j = 0; j < n2; ++j)
        pts.push_back({std::polar(r2, 2 * std::numbers::pi * (j + 0.25) / n2), 0});
    return pts;
}

RecoveryResult unique_expansion_recover(const std::vector<std::pair<BranchedPoint, cplx>>& samples, const Support& S,
                                        double max_condition) {
    if (S.empty()) throw std::invalid_argument("unique_expansion_recover: empty support");
    if (samples.size() < S.size()) throw std::invalid_argument("unique_expansion_recover: fewer samples than unknowns");
    for (size_t i = 0; i < samples.size(); ++i)
        for (size_t j = i + 1; j < samples.size(); ++j)
            if (samples[i].first.z == samples[j].first.z && samples[i].first.p == samples[j].first.p)
                throw std::invalid_argument("unique_expansion_recover: repeated sample point");
    const Eigen::Index m = Eigen::Index(samples.size()), n = Eigen::Index(S.size());
    Eigen::MatrixXcd A(m, n);
    Eigen::VectorXcd b(m);
    for (Eigen::Index i = 0; i < m; ++i) {
        b(i) = samples[size_t(i)].second;
        for (Eigen::Index j = 0; j < n; ++j) A(i, j) = branch_power(samples[size_t(i)].first, S[size_t(j)].first, S[size_t(j)].second);
    }
    Eigen::VectorXd scale(n);
    Eigen::MatrixXcd As = A;
    for (Eigen::Index j = 0; j < n; ++j) {
        double c = A.col(j).norm();
        scale(j) = c > 0 ? 1.0 / c : 1.0;
        As.col(j) *= scale(j);
    }
    Eigen::JacobiSVD<Eigen::MatrixXcd> svd(As, Eigen::ComputeThinU | Eigen::ComputeThinV);
    const auto& sv = svd.singularValues();
    double smin = sv(n - 1);
    double cond = smin > 0 ? sv(0) / smin : INFINITY;
    if (!(cond <= max_condition)) throw RankError("unique_expansion_recover: rank-deficient system", cond);
    Eigen::VectorXcd x = svd.solve(b);
    for (Eigen::Index j = 0; j < n; ++j) x(j) *= scale(j);
    RecoveryResult r;
    r.condition_estimate = cond;
    Eigen::VectorXcd res = A * x - b;
    r.residual = res.size() ? res.cwiseAbs().maxCoeff() : 0.0;
    for (Eigen::Index j = 0; j < n; ++j) r.coefficients[S[size_t(j)]] += x(j);
    return r;
}

} // namespace fcalc
