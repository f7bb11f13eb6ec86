#include "fcalc/branch.hpp"

#include <cmath>
#include <memory>
#include <numbers>

namespace fcalc {

namespace {
constexpr double kTwoPi = 2.0 * std::numbers::pi;
}

double canonical_arg(cplx z) {
    double a = std::atan2(z.imag(), z.real());
    if (a < 0) a += kTwoPi;
    if (a >= kTwoPi) a = std::nextafter(kTwoPi, 0.0); // tiny negative imaginary part
    return a;
}

cplx log_branch(const BranchedPoint& pt) {
    if (pt.z == cplx(0.0)) throw std::domain_error("log_branch: z = 0");
    return {std::log(std::abs(pt.z)), canonical_arg(pt.z) + kTwoPi * pt.p};
}

cplx branch_power(const BranchedPoint& pt, const Rational& alpha, unsigned beta) {
    cplx l = log_branch(pt);
    cplx v = alpha == 0 ? cplx(1.0) : std::exp(to_double(alpha) * l);
    for (unsigned i = 0; i < beta; ++i) v *= l;
    return v;
}

Rotation rotate_point_traced(const BranchedPoint& pt, int half_turns) {
    if (half_turns != 1 && half_turns != -1) throw std::invalid_argument("rotate_point: half_turns must be +-1");
    if (pt.z == cplx(0.0)) throw std::domain_error("rotate_point: z = 0");
    double a = canonical_arg(pt.z);
    Rotation r;
    r.pt.z = -pt.z;
    bool upper = a < std::numbers::pi;
    if (half_turns == -1) {
        // 0 <= arg < pi: arg(-z) = arg + pi, the lost pi i is taken from p
        r.pt.p = upper ? pt.p - 1 : pt.p;
        r.casework = upper ? "0<=arg<pi: p'=p-1" : "pi<=arg<2pi: log(-z)=log z - pi i, p'=p";
    } else {
        r.pt.p = upper ? pt.p : pt.p + 1;
        r.casework = upper ? "0<=arg<pi: log(-z)=log z + pi i, p'=p" : "pi<=arg<2pi: p'=p+1";
    }
    // rounding near the real axis can put arg(-z) on the other side of the cut
    double expect = upper ? a + std::numbers::pi : a - std::numbers::pi;
    double got = canonical_arg(r.pt.z);
    if (got - expect > std::numbers::pi) r.pt.p -= 1;
    if (expect - got > std::numbers::pi) r.pt.p += 1;
    return r;
}

BranchedPoint rotate_point(const BranchedPoint& pt, int half_turns) { return rotate_point_traced(pt, half_turns).pt; }

std::vector<cplx> EvalStream::partial_sums() const {
    std::vector<cplx> out;
    cplx s = 0.0;
    for (const auto& g : groups_) {
        s += g.sum;
        out.push_back(s);
    }
    return out;
}

cplx EvalStream::total() const {
    cplx s = 0.0;
    for (const auto& g : groups_) s += g.sum;
    return s;
}

std::function<std::optional<cplx>()> EvalStream::generator() const {
    auto idx = std::make_shared<size_t>(0);
    auto groups = std::make_shared<std::vector<EvalGroup>>(groups_);
    return [idx, groups]() -> std::optional<cplx> {
        if (*idx >= groups->size()) return std::nullopt;
        return (*groups)[(*idx)++].sum;
    };
}

cplx monomial_value(const Monomial& m, const Assignment& a) {
    cplx v = 1.0;
    for (const auto& f : m.factors()) {
        auto it = a.find(f.var);
        if (it == a.end()) throw std::invalid_argument(std::string("specialize: no point assigned to ") + var_name(f.var));
        v *= branch_power(it->second, f.exp, f.log);
    }
    return v;
}

EvalStream specialize(const FormalSeries& s, const Assignment& a, const Schedule& schedule,
                      std::optional<std::pair<cplx, cplx>> params) {
    bool on_cut = false;
    for (const auto& [v, pt] : a)
        if (pt.z.imag() == 0.0 && pt.z.real() > 0) on_cut = true;
    std::map<Rational, EvalGroup> groups;
    for (const auto& [m, c] : s.terms()) {
        Rational key;
        if (schedule.kind == ScheduleKind::Weight) {
            key = m.exp(schedule.weight_var);
        } else {
            for (const auto& f : m.factors()) key += abs(f.exp);
        }
        cplx t = c.to_complex(params) * monomial_value(m, a);
        auto& g = groups[key];
        g.key = key;
        g.sum += t;
        g.abs_sum += std::abs(t);
        g.nterms++;
    }
    std::vector<EvalGroup> out;
    out.reserve(groups.size());
    for (auto& kv : groups) out.push_back(kv.second);
    return EvalStream(std::move(out), on_cut);
}

} // namespace fcalc
