#pragma once

#include "fcalc/convlab.hpp"
#include "fcalc/series.hpp"

#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace fcalc {

struct NotFinitelyDetermined : SeriesError {
    using SeriesError::SeriesError;
};
struct FrameInsufficient : SeriesError {
    using SeriesError::SeriesError;
};
struct DomainViolation : std::domain_error {
    using std::domain_error::domain_error;
};

// sign * sym^power, power = +-1
struct Summand {
    Var sym;
    int sign = 1;
    int power = 1;
};

// outer^{-1} delta((base + dir...)/outer), or outer * delta((...)/outer^{-1})
// when inverted.  The dir summands receive nonnegative powers.
struct DeltaKernel {
    Var outer;
    bool inverted = false;
    Summand base;
    std::vector<Summand> dir;
    std::string str() const;
};

inline Summand plus(Var v) { return {v, 1, 1}; }
inline Summand minus(Var v) { return {v, -1, 1}; }
inline Summand plus_inv(Var v) { return {v, 1, -1}; }
inline Summand minus_inv(Var v) { return {v, -1, -1}; }

inline DeltaKernel dlt(Var outer, Summand base, Summand dir) { return {outer, false, base, {dir}}; }
inline DeltaKernel dlti(Var outer, Summand base, Summand dir) { return {outer, true, base, {dir}}; }

// Known support of a multiplier series.  Outside an exact bound the
// coefficient is zero; inside the bounds but outside the series frame it is
// unknown.  A complete multiplier stores every nonzero term.
struct SupportBound {
    std::optional<Rational> lo, hi;
};
struct Multiplier {
    FormalSeries series;
    std::map<Var, SupportBound> exact;
    bool complete = false;
};

struct DeltaExpr {
    std::vector<DeltaKernel> factors;
    std::optional<Multiplier> multiplier;
    std::string str() const;
};

// How symbols that are not formal variables evaluate.  Symbolic mode maps
// z1,y1 -> z1 and z2,y2 -> z2 in ParamPoly, with z0 = y0 = z1 - z2; numeric mode
// uses the supplied values.
struct ParamEnv {
    CoeffTag tag = CoeffTag::ParamPoly;
    cplx z1 = 0.0, z2 = 0.0;
    static ParamEnv symbolic() { return {}; }
    static ParamEnv numeric(cplx z1, cplx z2) { return {CoeffTag::ComplexFloat, z1, z2}; }
};

struct ExtractOptions {
    size_t lookahead = 16;    // depths without a live term before a finite sum is declared closed
    size_t max_depth = 400;   // symbolic mode gives up beyond this
    ProbeOptions probe{1e-9, 8, 600, true, true};
};

struct CoefficientResult {
    Coefficient value;
    std::optional<ConvergenceReport> report; // numeric mode
    size_t live_terms = 0;
};

// Coefficient of one monomial of the formal variables (those of `formal`).
CoefficientResult extract_coefficient(const DeltaExpr& e, const Frame& formal, const Monomial& target,
                                      const ParamEnv& env, const ExtractOptions& opt = {});

struct Expansion {
    FormalSeries series;
    std::map<Monomial, ConvergenceReport> reports;
};
Expansion expand_delta(const DeltaExpr& e, const Frame& frame, const ParamEnv& env, const ExtractOptions& opt = {});

// f * kernel with f rewritten on the locus of the kernel: `replace` is either
// the outer variable (replaced by the numerator, f polynomial in it unless the
// kernel is unshifted) or the base of an unshifted kernel.
FormalSeries delta_substitute(const FormalSeries& f, const DeltaExpr& e, Var replace, const Frame& frame,
                              const ParamEnv& env = ParamEnv::symbolic());
// Substitutes the locus of `locus` (outer = numerator) into the base of `f`.
DeltaKernel substitute_kernel(const DeltaKernel& f, const DeltaKernel& locus);

enum class DeltaId { L1, L2a, L2b, L3, L4 };
const char* delta_id_name(DeltaId id);
std::optional<DeltaId> parse_delta_id(std::string_view s);
std::pair<DeltaExpr, DeltaExpr> delta_identity(DeltaId id);

// throws DomainViolation naming the violated inequality
void check_delta_domain(DeltaId id, cplx z1, cplx z2);

enum class VerifyMode { Formal, Numeric };

struct VerificationReport {
    std::string id;
    std::string mode;
    bool pass = false;
    size_t monomials = 0;
    size_t lhs_converged = 0, lhs_diverged = 0, lhs_inconclusive = 0;
    double max_deviation = 0.0;
    std::string worst_monomial;
    std::optional<std::pair<cplx, cplx>> point;
    std::vector<std::string> notes;
    nlohmann::json to_json() const;
};

struct VerifyOptions {
    long frame = 4;
    double tol = 1e-9;
    // run the probes at a point outside the domain instead of refusing it
    bool outside_domain = false;
    ExtractOptions extract;
};

VerificationReport verify_delta_identity(DeltaId id, VerifyMode mode, const VerifyOptions& opt,
                                         std::optional<std::pair<cplx, cplx>> z = std::nullopt);

} // namespace fcalc
