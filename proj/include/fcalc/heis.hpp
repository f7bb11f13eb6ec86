#pragma once

#include "fcalc/branch.hpp"
#include "fcalc/convlab.hpp"
#include "fcalc/delta.hpp"
#include "fcalc/series.hpp"

#include <json.hpp>

#include <array>
#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace fcalc::heis {

// ---- nilpotent coefficients: Q[e1,e2,e3]/(e_i^{K_i}) ----

struct NilShape {
    std::array<int, 3> K{1, 1, 1};
    size_t size() const { return size_t(K[0]) * K[1] * K[2]; }
    int max_degree() const { return K[0] + K[1] + K[2] - 3; }
    bool operator==(const NilShape& o) const { return K == o.K; }
};

template <class T>
class NilT {
  public:
    NilT() : a_(1, T(0)) {}
    explicit NilT(const NilShape& s, T c = T(0)) : s_(s), a_(s.size(), T(0)) { a_[0] = c; }
    static NilT eps(const NilShape& s, int slot, T c) {
        NilT r(s);
        if (s.K[slot] > 1) r.at(slot == 0, slot == 1, slot == 2) = c;
        return r;
    }

    const NilShape& shape() const { return s_; }
    const std::vector<T>& data() const { return a_; }
    T& operator[](size_t i) { return a_[i]; }
    size_t index(int i, int j, int k) const { return (size_t(i) * s_.K[1] + j) * s_.K[2] + k; }
    T& at(int i, int j, int k) { return a_[index(i, j, k)]; }
    const T& at(int i, int j, int k) const { return a_[index(i, j, k)]; }
    const T& scalar() const { return a_[0]; }
    NilT nil_part() const {
        NilT r = *this;
        r.a_[0] = T(0);
        return r;
    }
    bool is_zero() const {
        for (const auto& x : a_)
            if (x != T(0)) return false;
        return true;
    }
    // highest total degree with a nonzero coefficient, -1 for zero
    int degree() const;

    NilT& operator+=(const NilT& o);
    NilT& operator-=(const NilT& o);
    NilT& operator*=(const T& c) {
        for (auto& x : a_) x *= c;
        return *this;
    }
    friend NilT operator+(NilT a, const NilT& b) { return a += b; }
    friend NilT operator-(NilT a, const NilT& b) { return a -= b; }
    friend NilT operator*(NilT a, const T& c) { return a *= c; }
    friend NilT operator*(const NilT& a, const NilT& b) { return a.mul(b); }
    NilT operator-() const {
        NilT r = *this;
        for (auto& x : r.a_) x = -x;
        return r;
    }
    bool operator==(const NilT& o) const { return s_ == o.s_ && a_ == o.a_; }

    NilT mul(const NilT& o) const;
    // adjoint of multiplication by c under sum_J a_J b_J
    NilT transpose_mul(const NilT& c) const;
    // sum_J a_J d_J
    T pair(const NilT& d) const;

  private:
    void same(const NilT& o) const;
    NilShape s_;
    std::vector<T> a_;
};

using Nil = NilT<Rational>;
using NilC = NilT<cplx>;

NilC to_complex(const Nil& a);
// exp(a) for a = s + N, N nilpotent
NilC nil_exp(const NilC& a);
std::string nil_str(const Nil& a);

// ---- Fock space ----

using Partition = std::vector<int>; // oscillator modes h(-n_1)...h(-n_k), n_1 >= n_2 >= ...

int weight(const Partition& p);
Rational shapovalov_norm(const Partition& p);
std::vector<Partition> partitions_of(int n);
std::string partition_str(const Partition& p);

// A vector of a Fock module.  Coefficients live in the nil algebra: a ket of
// W_i uses powers of e_i (the Jordan index), a bra stores the dual coefficients.
struct FockVector {
    std::map<Partition, Nil> terms;

    static FockVector hw(const Nil& coeff) { return FockVector{{{Partition{}, coeff}}}; }
    FockVector& add(const Partition& p, const Nil& c);
    bool is_zero() const;
    int max_weight() const;
    bool is_highest_weight() const;
    FockVector scaled(const Nil& c) const;
    std::string str() const;
};
FockVector operator+(const FockVector& a, const FockVector& b);

// h(n) on a ket of a module with charge c (h(0) = c)
FockVector apply_h(int n, const FockVector& v, const Nil& charge);
// the transpose of h(n) acting on a bra
FockVector apply_h_dual(int n, const FockVector& bra, const Nil& charge);
// Virasoro L(n), n in {-1, 0, 1}, and its transpose on bras
FockVector apply_L(int n, const FockVector& v, const Nil& charge);
FockVector apply_L_dual(int n, const FockVector& bra, const Nil& charge);
// <bra, ket>
Rational pairing(const FockVector& bra, const FockVector& ket);

struct FockModule {
    Rational lambda = 0;
    int slot = -1; // which e_i carries the Jordan block, -1 for none
    Rational nu = 0;
    int K = 1;
    int weight_cutoff = 8;
    Nil charge(const NilShape& s) const;
    // basis: oscillator monomials up to the cutoff, times Jordan index
    std::vector<std::pair<Partition, int>> basis() const;
};

// Charges of the three insertions.  The bra module carries lambda4, which must
// equal the sum for a nonzero correlator; its nilpotent part is the sum.
struct Triple {
    NilShape shape;
    std::array<Nil, 3> c;
    Rational lambda4 = 0;
    Nil c4() const { return c[0] + c[1] + c[2]; }
    bool conserved() const { return lambda4 == c[0].scalar() + c[1].scalar() + c[2].scalar(); }
    Triple permuted(int a, int b, int d) const { return {shape, {c[a], c[b], c[d]}, lambda4}; }
};

struct ChargeSpec {
    std::array<Rational, 3> lambda{0, 0, 0};
    std::array<Rational, 3> nu{0, 0, 0};
    std::array<int, 3> K{1, 1, 1};
    std::optional<Rational> lambda4;
    Triple triple() const;
};

struct Insertion {
    FockVector w1, w2, w3, bra;
};
// all highest weight, bra dual to the top e-monomial
Insertion highest_weight(const Triple& t);
// bra dual to a chosen e-monomial
FockVector dual_hw(const NilShape& s, std::array<int, 3> index);
// highest_weight plus low descendants in every slot, with nilpotent parts where the shape has them
Insertion descendant_insertion(const Triple& t);

// ---- correlators ----

// <bra, Y1(w1, x1) pi_n(Y2(w2, x2) w3)> summed over intermediate weights n <= levels
FormalSeries product_correlator(const Triple& t, const Insertion& ins, long levels,
                                const std::optional<NilC>& prefactor = std::nullopt);
// <bra, Y^1(pi_n(Y^2(w1, x0) w2), x2) w3> summed over n <= levels
FormalSeries iterate_correlator(const Triple& t, const Insertion& ins, long levels,
                                const std::optional<NilC>& prefactor = std::nullopt);
// the same series assembled from explicit intermediate basis states
FormalSeries product_by_states(const Triple& t, const Insertion& ins, long levels);
FormalSeries iterate_by_states(const Triple& t, const Insertion& ins, long levels);

struct SumResult {
    cplx value = 0.0;
    ConvergenceReport report;
    long levels = 0;
    bool converged() const { return report.converged(); }
};
struct SumOptions {
    double tol = 1e-12; // relative tail target
    long start_levels = 24;
    long max_levels = 480;
};
SumResult sum_product(const Triple& t, const Insertion& ins, BranchedPoint z1, BranchedPoint z2,
                      const SumOptions& opt = {}, const std::optional<NilC>& prefactor = std::nullopt);
SumResult sum_iterate(const Triple& t, const Insertion& ins, BranchedPoint z0, BranchedPoint z2,
                      const SumOptions& opt = {}, const std::optional<NilC>& prefactor = std::nullopt);

// z1^a z2^b (z1 - z2)^c with a = c1 c3, b = c2 c3, c = c1 c2 for highest-weight insertions
struct ClosedForm {
    Nil a, b, c;
    Nil coeff; // product of the ket coefficients
    FockVector bra;
    bool zero = false;
    // |z1| > |z2|: (z1 - z2)^c = z1^c (1 - z2/z1)^c with the principal binomial
    cplx product_chart(BranchedPoint z1, BranchedPoint z2) const;
    // |z2| > |z0|: z1 = z2 + z0, (z2 + z0)^a = z2^a (1 + z0/z2)^a
    cplx iterate_chart(BranchedPoint z0, BranchedPoint z2) const;
};
ClosedForm closed_form_correlator(const Triple& t, const Insertion& ins);

// ---- intertwining operators and the skew transforms ----

struct IntwOpSpec {
    Nil arg; // charge of the argument module
    Nil on;  // charge of the module acted on
    std::vector<int> omega; // transforms applied to the standard operator, in order
    Nil target() const { return arg + on; }
};
IntwOpSpec standard_op(const Nil& arg, const Nil& on);
// Omega_r(Y)(b, x) a = e^{x L(-1)} Y(a, e^{(2r+1) pi i} x) b
IntwOpSpec omega_transform(const IntwOpSpec& op, int r);
// e^{pi i sum (2r+1) arg on}: the transformed operator is this phase times the
// standard operator of the swapped type
NilC omega_phase(const IntwOpSpec& op);

// coefficient of x^exponent (log x)^logpow in Y(a, x) b, standard operator
FockVector intw_mode_coeff(const IntwOpSpec& op, const FockVector& a, const FockVector& b, const Rational& exponent,
                           unsigned logpow, int cutoff = 8);
// <bra, op(a, x) b> as a series in x, evaluated through the definitions of the
// transforms (complex coefficients)
FormalSeries intw_series(const IntwOpSpec& op, const FockVector& bra, const FockVector& a, const FockVector& b);
// the same, through the realized form omega_phase * standard
FormalSeries intw_series_realized(const IntwOpSpec& op, const FockVector& bra, const FockVector& a,
                                  const FockVector& b);

// ---- reports ----

struct Report {
    std::string name;
    bool pass = false;
    double max_deviation = 0.0;
    std::string worst;
    size_t compared = 0;
    std::vector<std::string> notes;
    nlohmann::json to_json() const;
};

double rel_dev(cplx a, cplx b);

// e^{z L'(1)} w' = e^{z L(-1)^T} w' as (z^m / m!) coefficients times exact bras
std::vector<FockVector> exp_L_dual_terms(const FockVector& bra, const Nil& charge, int max_terms = 64);

struct OmegaCase {
    cplx za, zb; // (z2, z0) for i2p, (z1, z2) for p2i
};
// (i2p): iterate at (z0, z2) = product of Omega_0(Y^1) at e^{-pi i} z2 and Y^2 at z0
Report check_i2p(const Triple& t, const Insertion& ins, cplx z2, cplx z0, double tol = 1e-8);
// (p2i): product at (z1, z2) = iterate of Omega_{-1}(Y_1) at e^{pi i} z1 and Y_2 at z2
Report check_p2i(const Triple& t, const Insertion& ins, cplx z1, cplx z2, double tol = 1e-8);
// Omega_0(Omega_{-1}(Y)) = Y and Omega_r(Y) = phase * standard, on 3-point series
Report check_omega_inverse(const Nil& ca, const Nil& cb, const FockVector& bra, const FockVector& a,
                           const FockVector& b, double tol = 1e-9);

// ---- composite Jacobi identity ----

enum class Kind { Product, Iterate };
enum class VoaVec { Vacuum, H1 }; // the vacuum and h(-1)1
const char* kind_name(Kind k);
const char* voa_name(VoaVec v);

struct JacobiOptions {
    long frame = 3;     // |exponent| window for the formal variables
    long cutoff = 6;    // weight cutoff for inserted modes
    double tol = 1e-8;
};
// formal: identity in x0, x1, x2 and the y-variables, exact in Q (nil-free charges)
Report check_composite_jacobi_formal(Kind kind, VoaVec v, const Triple& t, const Insertion& ins,
                                     const JacobiOptions& opt = {});
// numeric: (z1, z2) for the product, z = (z2, z0) for the iterate
Report check_composite_jacobi_numeric(Kind kind, VoaVec v, const Triple& t, const Insertion& ins, cplx za, cplx zb,
                                      const JacobiOptions& opt = {});

// ---- sl(2) ----

// kind Product: (za, zb) = (z1, z2); Iterate: (za, zb) = (z2, z0)
Report check_sl2(Kind kind, int j, const Triple& t, const Insertion& ins, cplx za, cplx zb, double tol = 1e-8);

// ---- functionals on W1 x W2 x W3 ----

class TripleFunctional {
  public:
    using Basis = std::pair<Partition, int>; // oscillator monomial, Jordan index
    using Eval = std::function<cplx(const FockVector&, const FockVector&, const FockVector&)>;

    // w4' o F for the product F at (z1, z2)
    static TripleFunctional from_product(const Triple& t, const FockVector& bra, cplx z1, cplx z2, int p = 0,
                                         int q = 0);
    // pseudo-random values on basis triples of total weight <= cutoff
    static TripleFunctional random(const Triple& t, std::uint64_t seed, int cutoff = 8);
    static TripleFunctional zero(const Triple& t);

    cplx operator()(const FockVector& w1, const FockVector& w2, const FockVector& w3) const;
    const Triple& triple() const { return t_; }
    cplx z1() const { return z1_; }
    cplx z2() const { return z2_; }
    const std::string& kind() const { return kind_; }
    // x0-exponent below which Y'(v, x0) lambda must vanish
    long lower_truncation() const { return -bra_top_ - 1; }

  private:
    Triple t_;
    cplx z1_ = 0.0, z2_ = 0.0;
    int p_ = 0, q_ = 0;
    int bra_top_ = 0;
    std::string kind_;
    Eval eval_;
    std::shared_ptr<std::map<std::string, cplx>> cache_;
};

// generating-function form of tau_{P(z1,z2)} applied to the kernel product
// times Y_t(v, x0): a series in x0, x1, x2 (complex)
FormalSeries tau_action(VoaVec v, const TripleFunctional& lam, const FockVector& w1, const FockVector& w2,
                        const FockVector& w3, const Frame& frame);
// Y'_{P(z1,z2)}(v, x0) lambda evaluated on (w1, w2, w3), exponents of x0 in [lo, hi]
FormalSeries y_prime_action(VoaVec v, const TripleFunctional& lam, const FockVector& w1, const FockVector& w2,
                            const FockVector& w3, long lo, long hi);

struct CompatOptions {
    long frame = 2;
    long probe_depth = 10; // how far below the frame the lower truncation is probed
    double tol = 1e-8;
};
Report check_Pz1z2_compatibility(const TripleFunctional& lam, VoaVec v, const FockVector& w1, const FockVector& w2,
                                 const FockVector& w3, const CompatOptions& opt = {});
// (zz:Psi): tau applied to w4' o F equals (tau_{W4'} w4') o F
Report check_tau_intertwining(VoaVec v, const Triple& t, const FockVector& bra, const FockVector& w1,
                              const FockVector& w2, const FockVector& w3, cplx z1, cplx z2,
                              const CompatOptions& opt = {});

// (L'_{P(z1,z2)}(j) lambda)(w1 x w2 x w3)
cplx L_prime_action(int j, const TripleFunctional& lam, const FockVector& w1, const FockVector& w2,
                    const FockVector& w3);

// ---- vanishing propagation ----

enum class VanishingCase { Identical, Omega, Control };
Report vanishing_propagation_check(Kind kind, VanishingCase c, const Triple& t, const Insertion& ins,
                                   const std::vector<std::pair<cplx, cplx>>& points, double tol = 1e-9);

// ---- properties ----

// central difference in z2 of the summed product against the L(-1) insertion on w2
Report analyticity_check(const Triple& t, const Insertion& ins, cplx z1, cplx z2, double step = 1e-4,
                         double tol = 1e-6);
// weight schedule against total-degree schedule on the product series
Report reorder_check(const Triple& t, const Insertion& ins, cplx z1, cplx z2, double tol = 1e-9);
// single monomial at branch q and q+1: ratio e^{2 pi i alpha}
Report branch_adjacency_check(const Triple& t, const Insertion& ins, cplx z1, cplx z2, double tol = 1e-10);

unsigned max_log_power(const FormalSeries& s);

} // namespace fcalc::heis
