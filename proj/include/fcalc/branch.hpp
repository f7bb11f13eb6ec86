#pragma once

#include "fcalc/series.hpp"

#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace fcalc {

struct BranchedPoint {
    cplx z;
    int p = 0;
};

double canonical_arg(cplx z); // in [0, 2pi)
cplx log_branch(const BranchedPoint& pt);
// e^{alpha l_p(z)} (l_p(z))^beta
cplx branch_power(const BranchedPoint& pt, const Rational& alpha, unsigned beta);

struct Rotation {
    BranchedPoint pt;
    std::string casework; // which branch of the casework fired
};
// z -> e^{+-pi i} z with l_{p'}(z') = l_p(z) +- pi i
Rotation rotate_point_traced(const BranchedPoint& pt, int half_turns);
BranchedPoint rotate_point(const BranchedPoint& pt, int half_turns);

using Assignment = std::map<Var, BranchedPoint>;

enum class ScheduleKind { Weight, Degree };
struct Schedule {
    ScheduleKind kind = ScheduleKind::Weight;
    Var weight_var = Var::x2;
};

struct EvalGroup {
    Rational key;
    cplx sum;
    double abs_sum = 0; // sum of |term| in the group
    size_t nterms = 0;
};

// Values of a specialized series, one group per schedule key, ascending.
class EvalStream {
  public:
    EvalStream() = default;
    explicit EvalStream(std::vector<EvalGroup> g, bool on_cut) : groups_(std::move(g)), on_cut_(on_cut) {}

    const std::vector<EvalGroup>& groups() const { return groups_; }
    std::vector<cplx> partial_sums() const;
    cplx total() const;
    bool positive_real_point() const { return on_cut_; }
    // generator over group values, for the convergence probe
    std::function<std::optional<cplx>()> generator() const;

  private:
    std::vector<EvalGroup> groups_;
    bool on_cut_ = false;
};

cplx monomial_value(const Monomial& m, const Assignment& a);
EvalStream specialize(const FormalSeries& s, const Assignment& a, const Schedule& schedule = {},
                      std::optional<std::pair<cplx, cplx>> params = std::nullopt);

} // namespace fcalc
