#pragma once

#include "fcalc/branch.hpp"

#include <functional>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace fcalc {

enum class Verdict { Converged, Diverged, Inconclusive };
const char* verdict_name(Verdict v);

struct ConvergenceReport {
    Verdict status = Verdict::Inconclusive;
    cplx value = 0.0;
    double tail_estimate = 0.0;
    double ratio_estimate = 0.0;
    size_t terms_used = 0;
    std::string notes;
    bool converged() const { return status == Verdict::Converged; }
};

using TermGen = std::function<std::optional<cplx>()>;

struct ProbeOptions {
    double tol = 1e-9;
    size_t window = 8;
    size_t max_terms = 10000;
    // a stream that ends is the whole series (finite sum), not a truncation
    bool complete = false;
    // tolerance scaled by max(1, |value|)
    bool relative = false;
};

// The stopping rule does not look at tol, so a pass at tol is a pass at any
// larger tolerance with the same value.
ConvergenceReport abs_convergence_probe(const TermGen& gen, const ProbeOptions& opt = {});
ConvergenceReport probe_terms(const std::vector<cplx>& terms, const ProbeOptions& opt = {});

struct RankError : std::runtime_error {
    double condition;
    RankError(const std::string& what, double cond) : std::runtime_error(what), condition(cond) {}
};

// ---- double vs iterated sums ----

using LogCoeffs = std::map<std::pair<Rational, unsigned>, cplx>; // (alpha, beta) -> a

struct DoubleIteratedReport {
    ConvergenceReport flat;            // double sum in (alpha, beta) order
    ConvergenceReport iterated;        // sum over alpha of the finite beta sums
    std::vector<ConvergenceReport> per_log; // sum over alpha of a_{alpha,beta} z^alpha, one per beta
    cplx per_log_recombined = 0.0;
    bool verdicts_agree = false;
    double max_value_gap = 0.0; // among converged results
    bool pass = false;
};

DoubleIteratedReport double_vs_iterated(const LogCoeffs& a, const BranchedPoint& pt, double tol,
                                        size_t window = 8);

struct SuiteSeries {
    std::string name;
    LogCoeffs coeffs;
    BranchedPoint pt;
    bool expect_converge;
    cplx closed_form; // meaningful when expect_converge
};
// 10 geometric (convergent) and 10 factorial (divergent) families
std::vector<SuiteSeries> generated_suite();

// ---- term-wise derivative ----

struct PowerSeriesData {
    Rational start = 0;
    Rational step = 1;
    std::function<cplx(long)> coeff; // coefficient of z^{start + k step}
    long max_index = 400;
};

struct DerivativeReport {
    ConvergenceReport base;
    ConvergenceReport at_pt, inner, outer;
    double fd_rel_err = 0.0;
    bool fd_checked = false;
    bool pass = false;
};

DerivativeReport termwise_derivative_probe(const PowerSeriesData& s, const BranchedPoint& pt, double tol,
                                           double radial_delta = 0.05);

// ---- unique expansion recovery ----

using Support = std::vector<std::pair<Rational, unsigned>>;

struct RecoveryResult {
    std::map<std::pair<Rational, unsigned>, cplx> coefficients;
    double residual = 0.0;
    double condition_estimate = 0.0;
};

std::vector<BranchedPoint> default_sample_points(size_t support_size, double r1 = 0.5, double r2 = 2.5);
RecoveryResult unique_expansion_recover(const std::vector<std::pair<BranchedPoint, cplx>>& samples, const Support& S,
                                        double max_condition = 1e12);

} // namespace fcalc
