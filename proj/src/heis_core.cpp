#include "fcalc/heis.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>
#include <tuple>

namespace fcalc::heis {

// ---- nil algebra ----

template <class T>
void NilT<T>::same(const NilT& o) const {
    if (!(s_ == o.s_)) throw std::invalid_argument("nil shapes differ");
}

template <class T>
int NilT<T>::degree() const {
    int d = -1;
    for (int i = 0; i < s_.K[0]; ++i)
        for (int j = 0; j < s_.K[1]; ++j)
            for (int k = 0; k < s_.K[2]; ++k)
                if (at(i, j, k) != T(0)) d = std::max(d, i + j + k);
    return d;
}

template <class T>
NilT<T>& NilT<T>::operator+=(const NilT& o) {
    same(o);
    for (size_t i = 0; i < a_.size(); ++i) a_[i] += o.a_[i];
    return *this;
}

template <class T>
NilT<T>& NilT<T>::operator-=(const NilT& o) {
    same(o);
    for (size_t i = 0; i < a_.size(); ++i) a_[i] -= o.a_[i];
    return *this;
}

template <class T>
NilT<T> NilT<T>::mul(const NilT& o) const {
    same(o);
    NilT r(s_);
    const auto& K = s_.K;
    if (a_.size() == 1) {
        r.a_[0] = a_[0] * o.a_[0];
        return r;
    }
    for (int i1 = 0; i1 < K[0]; ++i1)
        for (int j1 = 0; j1 < K[1]; ++j1)
            for (int k1 = 0; k1 < K[2]; ++k1) {
                const T& u = at(i1, j1, k1);
                if (u == T(0)) continue;
                for (int i2 = 0; i1 + i2 < K[0]; ++i2)
                    for (int j2 = 0; j1 + j2 < K[1]; ++j2)
                        for (int k2 = 0; k1 + k2 < K[2]; ++k2) {
                            const T& v = o.at(i2, j2, k2);
                            if (v == T(0)) continue;
                            r.at(i1 + i2, j1 + j2, k1 + k2) += u * v;
                        }
            }
    return r;
}

template <class T>
NilT<T> NilT<T>::transpose_mul(const NilT& c) const {
    same(c);
    NilT r(s_);
    const auto& K = s_.K;
    // r_J' = sum_J this_J c_{J - J'}
    for (int i = 0; i < K[0]; ++i)
        for (int j = 0; j < K[1]; ++j)
            for (int k = 0; k < K[2]; ++k) {
                const T& u = at(i, j, k);
                if (u == T(0)) continue;
                for (int i2 = 0; i2 <= i; ++i2)
                    for (int j2 = 0; j2 <= j; ++j2)
                        for (int k2 = 0; k2 <= k; ++k2) {
                            const T& v = c.at(i - i2, j - j2, k - k2);
                            if (v == T(0)) continue;
                            r.at(i2, j2, k2) += u * v;
                        }
            }
    return r;
}

template <class T>
T NilT<T>::pair(const NilT& d) const {
    same(d);
    T s(0);
    for (size_t i = 0; i < a_.size(); ++i)
        if (a_[i] != T(0) && d.a_[i] != T(0)) s += a_[i] * d.a_[i];
    return s;
}

template class NilT<Rational>;
template class NilT<cplx>;

NilC to_complex(const Nil& a) {
    NilC r(a.shape());
    for (size_t i = 0; i < a.data().size(); ++i)
        r[i] = to_double(a.data()[i]);
    return r;
}

NilC nil_exp(const NilC& a) {
    NilC n = a.nil_part();
    NilC sum(a.shape(), 1.0), p(a.shape(), 1.0);
    for (int t = 1; t <= a.shape().max_degree(); ++t) {
        p = p * n;
        p *= 1.0 / t;
        sum += p;
    }
    return sum * std::exp(a.scalar());
}

std::string nil_str(const Nil& a) {
    std::ostringstream os;
    bool first = true;
    const auto& K = a.shape().K;
    for (int i = 0; i < K[0]; ++i)
        for (int j = 0; j < K[1]; ++j)
            for (int k = 0; k < K[2]; ++k) {
                const Rational& c = a.at(i, j, k);
                if (c == 0) continue;
                if (!first) os << " + ";
                first = false;
                os << to_string(c);
                if (i) os << "*e1^" << i;
                if (j) os << "*e2^" << j;
                if (k) os << "*e3^" << k;
            }
    if (first) os << "0";
    return os.str();
}

// ---- partitions and Fock vectors ----

int weight(const Partition& p) {
    int w = 0;
    for (int x : p) w += x;
    return w;
}

Rational shapovalov_norm(const Partition& p) {
    mpz_class r = 1;
    size_t i = 0;
    while (i < p.size()) {
        size_t j = i;
        while (j < p.size() && p[j] == p[i]) ++j;
        long m = long(j - i);
        for (long t = 0; t < m; ++t) r *= p[i];
        mpz_class f;
        mpz_fac_ui(f.get_mpz_t(), (unsigned long)m);
        r *= f;
        i = j;
    }
    return Rational(r);
}

static void parts_rec(int n, int maxp, Partition& cur, std::vector<Partition>& out) {
    if (n == 0) {
        out.push_back(cur);
        return;
    }
    for (int k = std::min(n, maxp); k >= 1; --k) {
        cur.push_back(k);
        parts_rec(n - k, k, cur, out);
        cur.pop_back();
    }
}

std::vector<Partition> partitions_of(int n) {
    std::vector<Partition> out;
    Partition cur;
    parts_rec(n, n, cur, out);
    return out;
}

std::string partition_str(const Partition& p) {
    if (p.empty()) return "1";
    std::ostringstream os;
    for (size_t i = 0; i < p.size(); ++i) os << (i ? " " : "") << "h(-" << p[i] << ")";
    return os.str();
}

FockVector& FockVector::add(const Partition& p, const Nil& c) {
    if (c.is_zero()) return *this;
    auto it = terms.find(p);
    if (it == terms.end()) {
        terms.emplace(p, c);
        return *this;
    }
    it->second += c;
    if (it->second.is_zero()) terms.erase(it);
    return *this;
}

bool FockVector::is_zero() const {
    for (const auto& [p, c] : terms)
        if (!c.is_zero()) return false;
    return true;
}

int FockVector::max_weight() const {
    int w = 0;
    for (const auto& [p, c] : terms) w = std::max(w, weight(p));
    return w;
}

bool FockVector::is_highest_weight() const {
    for (const auto& [p, c] : terms)
        if (!p.empty() && !c.is_zero()) return false;
    return true;
}

FockVector FockVector::scaled(const Nil& c) const {
    FockVector r;
    for (const auto& [p, x] : terms) r.add(p, x * c);
    return r;
}

std::string FockVector::str() const {
    if (terms.empty()) return "0";
    std::ostringstream os;
    bool first = true;
    for (const auto& [p, c] : terms) {
        os << (first ? "" : " + ") << "(" << nil_str(c) << ")" << partition_str(p);
        first = false;
    }
    return os.str();
}

FockVector operator+(const FockVector& a, const FockVector& b) {
    FockVector r = a;
    for (const auto& [p, c] : b.terms) r.add(p, c);
    return r;
}

namespace {

Partition with_part(Partition p, int n) {
    p.insert(std::upper_bound(p.begin(), p.end(), n, std::greater<int>()), n);
    return p;
}

// h(k) P for k >= 1: k * m_k * (P minus one k)
std::optional<std::pair<long, Partition>> annihilate(int k, const Partition& p) {
    auto it = std::find(p.begin(), p.end(), k);
    if (it == p.end()) return std::nullopt;
    long m = std::count(p.begin(), p.end(), k);
    Partition q = p;
    q.erase(q.begin() + (it - p.begin()));
    return std::make_pair(long(k) * m, q);
}

using ZeroMode = std::function<Nil(const Nil&)>;

FockVector h_impl(int n, const FockVector& v, const ZeroMode& zero) {
    FockVector r;
    for (const auto& [p, c] : v.terms) {
        if (n < 0) r.add(with_part(p, -n), c);
        else if (n == 0) r.add(p, zero(c));
        else if (auto a = annihilate(n, p)) r.add(a->second, c * Rational(a->first));
    }
    return r;
}

FockVector L_impl(int n, const FockVector& v, const ZeroMode& zero) {
    if (n < -1 || n > 1) throw std::invalid_argument("L(n) implemented for n in {-1, 0, 1}");
    int M = v.max_weight() + 2;
    FockVector r;
    auto h = [&](int k, const FockVector& x) { return h_impl(k, x, zero); };
    if (n == -1) {
        r = h(-1, h(0, v));
        for (int m = 1; m <= M; ++m) r = r + h(-m - 1, h(m, v));
    } else if (n == 0) {
        FockVector z = h(0, h(0, v));
        r = z.scaled(Nil(v.terms.empty() ? NilShape{} : v.terms.begin()->second.shape(), Rational(1, 2)));
        for (int m = 1; m <= M; ++m) r = r + h(-m, h(m, v));
    } else {
        r = h(0, h(1, v));
        for (int m = 1; m <= M; ++m) r = r + h(-m, h(m + 1, v));
    }
    return r;
}

} // namespace

FockVector apply_h(int n, const FockVector& v, const Nil& charge) {
    return h_impl(n, v, [&](const Nil& c) { return c * charge; });
}

FockVector apply_h_dual(int n, const FockVector& bra, const Nil& charge) {
    return h_impl(-n, bra, [&](const Nil& c) { return c.transpose_mul(charge); });
}

FockVector apply_L(int n, const FockVector& v, const Nil& charge) {
    return L_impl(n, v, [&](const Nil& c) { return c * charge; });
}

FockVector apply_L_dual(int n, const FockVector& bra, const Nil& charge) {
    return L_impl(-n, bra, [&](const Nil& c) { return c.transpose_mul(charge); });
}

Rational pairing(const FockVector& bra, const FockVector& ket) {
    Rational s = 0;
    for (const auto& [p, c] : bra.terms) {
        auto it = ket.terms.find(p);
        if (it == ket.terms.end()) continue;
        s += shapovalov_norm(p) * c.pair(it->second);
    }
    return s;
}

Nil FockModule::charge(const NilShape& s) const {
    Nil c(s, lambda);
    if (slot >= 0) c += Nil::eps(s, slot, nu);
    return c;
}

std::vector<std::pair<Partition, int>> FockModule::basis() const {
    std::vector<std::pair<Partition, int>> out;
    for (int w = 0; w <= weight_cutoff; ++w)
        for (const auto& p : partitions_of(w))
            for (int j = 0; j < K; ++j) out.emplace_back(p, j);
    return out;
}

Triple ChargeSpec::triple() const {
    Triple t;
    t.shape.K = K;
    for (int i = 0; i < 3; ++i) {
        if (K[i] < 1 || K[i] > 3) throw std::invalid_argument("nilrank must be in 1..3");
        t.c[i] = Nil(t.shape, lambda[i]);
        if (K[i] > 1) t.c[i] += Nil::eps(t.shape, i, nu[i]);
    }
    t.lambda4 = lambda4 ? *lambda4 : lambda[0] + lambda[1] + lambda[2];
    return t;
}

FockVector dual_hw(const NilShape& s, std::array<int, 3> index) {
    Nil d(s);
    d.at(index[0], index[1], index[2]) = 1;
    return FockVector::hw(d);
}

Insertion highest_weight(const Triple& t) {
    Nil one(t.shape, 1);
    return {FockVector::hw(one), FockVector::hw(one), FockVector::hw(one),
            dual_hw(t.shape, {t.shape.K[0] - 1, t.shape.K[1] - 1, t.shape.K[2] - 1})};
}

Insertion descendant_insertion(const Triple& t) {
    Insertion ins = highest_weight(t);
    const NilShape& s = t.shape;
    ins.w1.add({1}, Nil(s, 2));
    ins.w1.add({}, Nil::eps(s, 0, 1));
    ins.w2.add({2}, Nil(s, -1));
    ins.w2.add({1, 1}, Nil::eps(s, 1, Rational(1, 2)));
    ins.w3.add({1}, Nil(s, 1));
    ins.bra.add({1}, Nil(s, Rational(1, 3)));
    ins.bra.add({2}, dual_hw(s, {0, 0, 0}).terms.begin()->second);
    return ins;
}

// ---- mode recursions ----

namespace {

// coefficients indexed by integer offsets (first variable, second variable)
using Ser = std::map<std::pair<long, long>, Nil>;

bool is_scalar(const Nil& c) {
    const auto& d = c.data();
    for (size_t i = 1; i < d.size(); ++i)
        if (d[i] != 0) return false;
    return true;
}

// out += coef * x^(d1, d2) * in, keeping offsets of the capped index <= cap
void add_shift(Ser& out, const Ser& in, long d1, long d2, const Nil& coef, long cap, int capidx) {
    if (coef.is_zero()) return;
    bool sc = is_scalar(coef);
    for (const auto& [k, v] : in) {
        std::pair<long, long> key{k.first + d1, k.second + d2};
        if ((capidx == 0 ? key.first : key.second) > cap) continue;
        Nil x = sc ? v * coef.scalar() : v * coef;
        auto it = out.find(key);
        if (it == out.end()) out.emplace(key, std::move(x));
        else it->second += x;
    }
}

Rational binom_int(long n, long k) { return binom(Rational(n), (unsigned)k); }

std::vector<int> zero_and_parts(const Partition& p) {
    std::vector<int> r{0};
    for (int x : p)
        if (r.back() != x) r.push_back(x);
    std::sort(r.begin(), r.end());
    r.erase(std::unique(r.begin(), r.end()), r.end());
    return r;
}

// h(k) P with h(0) = charge
std::optional<std::pair<Nil, Partition>> h_on(int k, const Partition& p, const Nil& charge) {
    if (k == 0) return std::make_pair(charge, p);
    auto a = annihilate(k, p);
    if (!a) return std::nullopt;
    return std::make_pair(Nil(charge.shape(), Rational(a->first)), a->second);
}

std::pair<int, Partition> pop(const Partition& p) { return {p.front(), Partition(p.begin() + 1, p.end())}; }

// <P4| Y1(P1, x1) Y2(P2, x2) |P3>, offsets relative to x1^{c1(c2+c3)} x2^{c2 c3};
// the x2 offset is the level of the intermediate state minus wt2 + wt3.
class ProductEngine {
  public:
    ProductEngine(const NilShape& s, const Nil& c1, const Nil& c2, const Nil& c3) : s_(s), c1_(c1), c2_(c2), c3_(c3) {}

    const Ser& R(const Partition& P4, const Partition& P1, const Partition& P2, const Partition& P3, long jmax) {
        auto key = std::make_tuple(P4, P1, P2, P3, jmax);
        auto it = memo_.find(key);
        if (it != memo_.end()) return it->second;
        Ser r = compute(P4, P1, P2, P3, jmax);
        return memo_.emplace(key, std::move(r)).first->second;
    }

  private:
    Nil one() const { return Nil(s_, 1); }
    Nil sc(const Rational& q) const { return Nil(s_, q); }

    Ser compute(const Partition& P4, const Partition& P1, const Partition& P2, const Partition& P3, long jmax) {
        Ser r;
        const Partition E;
        if (jmax < -(weight(P2) + weight(P3))) return r;
        if (!P4.empty()) {
            auto [a, P4r] = pop(P4);
            for (int k = 0; k <= a; ++k) {
                Rational b = binom_int(a, k);
                if (auto h = h_on(k, P1, c1_))
                    add_shift(r, R(P4r, h->second, P2, P3, jmax), a - k, 0, h->first * b, jmax, 1);
                if (auto h = h_on(k, P2, c2_))
                    add_shift(r, R(P4r, P1, h->second, P3, jmax - (a - k)), 0, a - k, h->first * b, jmax, 1);
            }
            if (auto h = annihilate(a, P3)) add_shift(r, R(P4r, P1, P2, h->second, jmax), 0, 0, sc(h->first), jmax, 1);
            return r;
        }
        if (!P3.empty()) {
            auto [b, P3r] = pop(P3);
            for (int k : zero_and_parts(P1))
                if (auto h = h_on(k, P1, c1_))
                    add_shift(r, R(E, h->second, P2, P3r, jmax), -b - k, 0, h->first * (-binom_int(-b, k)), jmax, 1);
            for (int k : zero_and_parts(P2))
                if (auto h = h_on(k, P2, c2_))
                    add_shift(r, R(E, P1, h->second, P3r, jmax + b + k), 0, -b - k, h->first * (-binom_int(-b, k)),
                              jmax, 1);
            return r;
        }
        if (!P1.empty()) {
            auto [b, P1r] = pop(P1);
            long w2 = weight(P2);
            long sign_b = (b % 2) ? -1 : 1;
            for (long k = 0; k <= jmax + w2; ++k) {
                // -C(-b,k) (-1)^{b+k} = -(-1)^b C(b+k-1, k)
                Rational f = -sign_b * binom_int(b + k - 1, k);
                for (int l : zero_and_parts(P2)) {
                    if (l > k) break;
                    auto h = h_on(l, P2, c2_);
                    if (!h) continue;
                    long sub = jmax - (k - l);
                    if (sub < -(w2 - l)) continue;
                    add_shift(r, R(E, P1r, h->second, E, sub), -b - k, k - l, h->first * (f * binom_int(k, l)), jmax,
                              1);
                }
                if (k == 0) add_shift(r, R(E, P1r, P2, E, jmax), -b, 0, c3_ * f, jmax, 1);
            }
            return r;
        }
        if (!P2.empty()) {
            auto [b, P2r] = pop(P2);
            long sign_b = (b % 2) ? -1 : 1;
            add_shift(r, R(E, E, P2r, E, jmax + b), 0, -b, c3_ * Rational(-sign_b), jmax, 1);
            long w = weight(P2r);
            for (long k = 0; k <= jmax + w; ++k) {
                // -c1 C(-b,k) (-1)^k = -c1 C(b+k-1,k)
                add_shift(r, R(E, E, P2r, E, jmax - k), -b - k, k, c1_ * (-binom_int(b + k - 1, k)), jmax, 1);
            }
            return r;
        }
        // sum_j C(c1 c2, j) (-1)^j x1^{-j} x2^{j}
        Nil alpha = c1_ * c2_;
        Nil bj = one();
        for (long j = 0; j <= jmax; ++j) {
            r.emplace(std::make_pair(-j, j), (j % 2) ? -bj : bj);
            bj = bj * (alpha - sc(j));
            bj *= Rational(1, j + 1);
        }
        return r;
    }

    NilShape s_;
    Nil c1_, c2_, c3_;
    std::map<std::tuple<Partition, Partition, Partition, Partition, long>, Ser> memo_;
};

// <P4| Y^1(h(-Q) pi(Y^2(P1, x0) P2), x2) |P3>, offsets relative to
// x0^{c1 c2} x2^{(c1+c2) c3}; the x0 offset is the level minus wt1 + wt2.
class IterateEngine {
  public:
    IterateEngine(const NilShape& s, const Nil& c1, const Nil& c2, const Nil& c3) : s_(s), c1_(c1), c2_(c2), c3_(c3) {}

    const Ser& I(const Partition& P4, const Partition& Q, const Partition& P1, const Partition& P2,
                 const Partition& P3, long jmax) {
        auto key = std::make_tuple(P4, Q, P1, P2, P3, jmax);
        auto it = memo_.find(key);
        if (it != memo_.end()) return it->second;
        Ser r = compute(P4, Q, P1, P2, P3, jmax);
        return memo_.emplace(key, std::move(r)).first->second;
    }

  private:
    Nil sc(const Rational& q) const { return Nil(s_, q); }

    // the h(k) action on the intermediate Y^2(P1, x0) P2, k >= 0
    void hk_middle(Ser& r, int k, const Partition& P4, const Partition& P1, const Partition& P2,
                   const Partition& P3, long d2, const Rational& f, long jmax) {
        long w12 = weight(P1) + weight(P2);
        for (int l : zero_and_parts(P1)) {
            if (l > k) break;
            auto h = h_on(l, P1, c1_);
            if (!h) continue;
            long sub = jmax - (k - l);
            if (sub < -(w12 - l)) continue;
            add_shift(r, I(P4, {}, h->second, P2, P3, sub), k - l, d2, h->first * (f * binom_int(k, l)), jmax, 0);
        }
        if (auto h = h_on(k, P2, c2_)) add_shift(r, I(P4, {}, P1, h->second, P3, jmax), 0, d2, h->first * f, jmax, 0);
    }

    Ser compute(const Partition& P4, const Partition& Q, const Partition& P1, const Partition& P2,
                const Partition& P3, long jmax) {
        Ser r;
        const Partition E;
        long w12 = weight(P1) + weight(P2);
        if (jmax < -w12) return r;
        if (!Q.empty()) {
            auto [q, Qr] = pop(Q);
            long sign_q = (q % 2) ? -1 : 1;
            for (int m : zero_and_parts(P4)) {
                long j = m - q;
                if (m == 0 || j < 0) continue;
                auto a = annihilate(m, P4);
                // C(-q,j)(-1)^j = C(q+j-1, j)
                add_shift(r, I(a->second, Qr, P1, P2, P3, jmax), 0, j, sc(binom_int(q + j - 1, j) * a->first), jmax,
                          0);
            }
            for (int j : zero_and_parts(P3)) {
                auto h = h_on(j, P3, c3_);
                if (!h) continue;
                // -C(-q,j)(-1)^{q+j} = -(-1)^q C(q+j-1, j)
                add_shift(r, I(P4, Qr, P1, P2, h->second, jmax), 0, -q - j,
                          h->first * Rational(-sign_q * binom_int(q + j - 1, j)), jmax, 0);
            }
            return r;
        }
        if (!P4.empty()) {
            auto [a, P4r] = pop(P4);
            for (int k = 0; k <= a; ++k) hk_middle(r, k, P4r, P1, P2, P3, a - k, binom_int(a, k), jmax);
            if (auto h = annihilate(a, P3)) add_shift(r, I(P4r, E, P1, P2, h->second, jmax), 0, 0, sc(h->first), jmax, 0);
            return r;
        }
        if (!P3.empty()) {
            auto [b, P3r] = pop(P3);
            for (long k = 0; k <= jmax + w12; ++k) hk_middle(r, int(k), E, P1, P2, P3r, -b - k, -binom_int(-b, k), jmax);
            return r;
        }
        if (!P1.empty()) {
            auto [b, P1r] = pop(P1);
            long sign_b = (b % 2) ? -1 : 1;
            for (long k = 0; k <= jmax + w12 - b; ++k)
                add_shift(r, I(E, Partition{int(b + k)}, P1r, P2, E, jmax - k), k, 0, sc(binom_int(b + k - 1, k)), jmax,
                          0);
            for (int k : zero_and_parts(P2)) {
                auto h = h_on(k, P2, c2_);
                if (!h) continue;
                add_shift(r, I(E, E, P1r, h->second, E, jmax + b + k), -b - k, 0,
                          h->first * Rational(-sign_b * binom_int(b + k - 1, k)), jmax, 0);
            }
            return r;
        }
        if (!P2.empty()) {
            auto [b, P2r] = pop(P2);
            add_shift(r, I(E, Partition{b}, E, P2r, E, jmax), 0, 0, sc(1), jmax, 0);
            add_shift(r, I(E, E, E, P2r, E, jmax + b), -b, 0, -c1_, jmax, 0);
            return r;
        }
        // sum_k C(c1 c3, k) x0^k x2^{-k}
        Nil alpha = c1_ * c3_;
        Nil bk = sc(1);
        for (long k = 0; k <= jmax; ++k) {
            r.emplace(std::make_pair(k, -k), bk);
            bk = bk * (alpha - sc(k));
            bk *= Rational(1, k + 1);
        }
        return r;
    }

    NilShape s_;
    Nil c1_, c2_, c3_;
    std::map<std::tuple<Partition, Partition, Partition, Partition, Partition, long>, Ser> memo_;
};

// <P4, Y(P, x) P3> for charges c (argument) and d (acted on): offsets of x
// relative to x^{c d}
class ThreeEngine {
  public:
    ThreeEngine(const NilShape& s, const Nil& c, const Nil& d) : s_(s), c_(c), d_(d) {}

    const Nil& T(const Partition& P4, const Partition& P, const Partition& P3) {
        auto key = std::make_tuple(P4, P, P3);
        auto it = memo_.find(key);
        if (it != memo_.end()) return it->second;
        Nil r = compute(P4, P, P3);
        return memo_.emplace(key, std::move(r)).first->second;
    }

  private:
    Nil compute(const Partition& P4, const Partition& P, const Partition& P3) {
        Nil r(s_);
        if (!P4.empty()) {
            auto [a, P4r] = pop(P4);
            for (int k = 0; k <= a; ++k)
                if (auto h = h_on(k, P, c_)) r += T(P4r, h->second, P3) * h->first * binom_int(a, k);
            if (auto h = annihilate(a, P3)) r += T(P4r, P, h->second) * Rational(h->first);
            return r;
        }
        if (!P3.empty()) {
            auto [b, P3r] = pop(P3);
            for (int k : zero_and_parts(P))
                if (auto h = h_on(k, P, c_)) r -= T({}, h->second, P3r) * h->first * binom_int(-b, k);
            return r;
        }
        if (!P.empty()) {
            auto [b, Pr] = pop(P);
            long sign_b = (b % 2) ? -1 : 1;
            return T({}, Pr, {}) * d_ * Rational(-sign_b);
        }
        return Nil(s_, 1);
    }

    NilShape s_;
    Nil c_, d_;
    std::map<std::tuple<Partition, Partition, Partition>, Nil> memo_;
};

// ---- conversion to formal series ----

struct NSer {
    Var v1, v2;
    Nil e1, e2; // base exponents
    Ser terms;
    Nil dual;
};

void hull(std::map<Var, std::pair<Rational, Rational>>& h, Var v, const Rational& e) {
    auto it = h.find(v);
    if (it == h.end()) h.emplace(v, std::make_pair(e, e));
    else {
        if (e < it->second.first) it->second.first = e;
        if (e > it->second.second) it->second.second = e;
    }
}

FormalSeries to_formal(const std::vector<NSer>& parts, const NilShape& s, const std::optional<NilC>& prefactor,
                       Var v1, Var v2) {
    int D = s.max_degree();
    std::map<Var, std::pair<Rational, Rational>> h;
    std::vector<std::pair<Monomial, Coefficient>> out;
    for (const auto& ns : parts) {
        Rational s1 = ns.e1.scalar(), s2 = ns.e2.scalar();
        Nil n1 = ns.e1.nil_part(), n2 = ns.e2.nil_part();
        // N^t / t!
        std::vector<Nil> p1{Nil(s, 1)}, p2{Nil(s, 1)};
        for (int t = 1; t <= D; ++t) {
            p1.push_back(p1.back() * n1 * Rational(1, t));
            p2.push_back(p2.back() * n2 * Rational(1, t));
        }
        std::optional<NilC> dualc;
        if (prefactor) dualc = to_complex(ns.dual).transpose_mul(*prefactor);
        for (const auto& [k, X] : ns.terms) {
            if (X.is_zero()) continue;
            Rational a1 = s1 + k.first, a2 = s2 + k.second;
            for (int t1 = 0; t1 <= D; ++t1) {
                if (p1[t1].is_zero()) break;
                Nil Y1 = X * p1[t1];
                if (Y1.is_zero()) continue;
                for (int t2 = 0; t1 + t2 <= D; ++t2) {
                    if (p2[t2].is_zero()) break;
                    Nil Y = Y1 * p2[t2];
                    if (Y.is_zero()) continue;
                    Coefficient c;
                    if (prefactor) {
                        cplx v = to_complex(Y).pair(*dualc);
                        if (v == 0.0) continue;
                        c = v;
                    } else {
                        Rational v = Y.pair(ns.dual);
                        if (v == 0) continue;
                        c = v;
                    }
                    Monomial m;
                    m.set(v1, a1, t1);
                    if (v2 != v1) m.set(v2, a2, t2);
                    out.emplace_back(m, c);
                    hull(h, v1, a1);
                    if (v2 != v1) hull(h, v2, a2);
                }
            }
        }
    }
    Frame f;
    std::vector<Var> vs{v1};
    if (v2 != v1) vs.push_back(v2);
    for (Var v : vs) {
        auto it = h.find(v);
        if (it == h.end()) f.set(v, 0, 0, D);
        else f.set(v, it->second.first, it->second.second, D);
    }
    FormalSeries r(prefactor ? CoeffTag::ComplexFloat : CoeffTag::ExactRational, f);
    for (auto& [m, c] : out) r.add_term(m, c);
    return r;
}

void require_shape(const Triple& t, const Insertion& ins) {
    for (const FockVector* v : {&ins.w1, &ins.w2, &ins.w3, &ins.bra})
        for (const auto& [p, c] : v->terms)
            if (!(c.shape() == t.shape)) throw std::invalid_argument("insertion coefficient shape mismatch");
}

} // namespace

FormalSeries product_correlator(const Triple& t, const Insertion& ins, long levels, const std::optional<NilC>& pre) {
    require_shape(t, ins);
    std::vector<NSer> parts;
    if (t.conserved()) {
        ProductEngine eng(t.shape, t.c[0], t.c[1], t.c[2]);
        Nil E1 = t.c[0] * (t.c[1] + t.c[2]), E2 = t.c[1] * t.c[2];
        for (const auto& [P4, d] : ins.bra.terms) {
            NSer ns{Var::x1, Var::x2, E1, E2, {}, d};
            for (const auto& [P1, a1] : ins.w1.terms)
                for (const auto& [P2, a2] : ins.w2.terms)
                    for (const auto& [P3, a3] : ins.w3.terms) {
                        long jmax = levels - weight(P2) - weight(P3);
                        add_shift(ns.terms, eng.R(P4, P1, P2, P3, jmax), 0, 0, a1 * a2 * a3, jmax, 1);
                    }
            parts.push_back(std::move(ns));
        }
    }
    return to_formal(parts, t.shape, pre, Var::x1, Var::x2);
}

FormalSeries iterate_correlator(const Triple& t, const Insertion& ins, long levels, const std::optional<NilC>& pre) {
    require_shape(t, ins);
    std::vector<NSer> parts;
    if (t.conserved()) {
        IterateEngine eng(t.shape, t.c[0], t.c[1], t.c[2]);
        Nil E0 = t.c[0] * t.c[1], E2 = (t.c[0] + t.c[1]) * t.c[2];
        for (const auto& [P4, d] : ins.bra.terms) {
            NSer ns{Var::x0, Var::x2, E0, E2, {}, d};
            for (const auto& [P1, a1] : ins.w1.terms)
                for (const auto& [P2, a2] : ins.w2.terms)
                    for (const auto& [P3, a3] : ins.w3.terms) {
                        long jmax = levels - weight(P1) - weight(P2);
                        add_shift(ns.terms, eng.I(P4, {}, P1, P2, P3, jmax), 0, 0, a1 * a2 * a3, jmax, 0);
                    }
            parts.push_back(std::move(ns));
        }
    }
    return to_formal(parts, t.shape, pre, Var::x0, Var::x2);
}

FormalSeries product_by_states(const Triple& t, const Insertion& ins, long levels) {
    require_shape(t, ins);
    std::vector<NSer> parts;
    if (t.conserved()) {
        Nil c23 = t.c[1] + t.c[2];
        ThreeEngine outer(t.shape, t.c[0], c23), inner(t.shape, t.c[1], t.c[2]);
        Nil E1 = t.c[0] * c23, E2 = t.c[1] * t.c[2];
        for (const auto& [P4, d] : ins.bra.terms) {
            NSer ns{Var::x1, Var::x2, E1, E2, {}, d};
            for (long n = 0; n <= levels; ++n)
                for (const auto& B : partitions_of(int(n))) {
                    Rational inv = 1 / shapovalov_norm(B);
                    for (const auto& [P1, a1] : ins.w1.terms)
                        for (const auto& [P2, a2] : ins.w2.terms)
                            for (const auto& [P3, a3] : ins.w3.terms) {
                                Nil x = outer.T(P4, P1, B) * inner.T(B, P2, P3) * (a1 * a2 * a3) * inv;
                                if (x.is_zero()) continue;
                                std::pair<long, long> key{weight(P4) - weight(P1) - n, n - weight(P2) - weight(P3)};
                                auto it = ns.terms.find(key);
                                if (it == ns.terms.end()) ns.terms.emplace(key, x);
                                else it->second += x;
                            }
                }
            parts.push_back(std::move(ns));
        }
    }
    return to_formal(parts, t.shape, std::nullopt, Var::x1, Var::x2);
}

FormalSeries iterate_by_states(const Triple& t, const Insertion& ins, long levels) {
    require_shape(t, ins);
    std::vector<NSer> parts;
    if (t.conserved()) {
        Nil c12 = t.c[0] + t.c[1];
        ThreeEngine outer(t.shape, c12, t.c[2]), inner(t.shape, t.c[0], t.c[1]);
        Nil E0 = t.c[0] * t.c[1], E2 = c12 * t.c[2];
        for (const auto& [P4, d] : ins.bra.terms) {
            NSer ns{Var::x0, Var::x2, E0, E2, {}, d};
            for (long n = 0; n <= levels; ++n)
                for (const auto& B : partitions_of(int(n))) {
                    Rational inv = 1 / shapovalov_norm(B);
                    for (const auto& [P1, a1] : ins.w1.terms)
                        for (const auto& [P2, a2] : ins.w2.terms)
                            for (const auto& [P3, a3] : ins.w3.terms) {
                                Nil x = outer.T(P4, B, P3) * inner.T(B, P1, P2) * (a1 * a2 * a3) * inv;
                                if (x.is_zero()) continue;
                                std::pair<long, long> key{n - weight(P1) - weight(P2), weight(P4) - n - weight(P3)};
                                auto it = ns.terms.find(key);
                                if (it == ns.terms.end()) ns.terms.emplace(key, x);
                                else it->second += x;
                            }
                }
            parts.push_back(std::move(ns));
        }
    }
    return to_formal(parts, t.shape, std::nullopt, Var::x0, Var::x2);
}

// ---- intertwining operators ----

IntwOpSpec standard_op(const Nil& arg, const Nil& on) { return {arg, on, {}}; }

IntwOpSpec omega_transform(const IntwOpSpec& op, int r) {
    IntwOpSpec o{op.on, op.arg, op.omega};
    o.omega.push_back(r);
    return o;
}

NilC omega_phase(const IntwOpSpec& op) {
    long s = 0;
    for (int r : op.omega) s += 2 * r + 1;
    const double pi = std::acos(-1.0);
    return nil_exp(to_complex(op.arg * op.on) * cplx(0.0, pi * double(s)));
}

std::vector<FockVector> exp_L_dual_terms(const FockVector& bra, const Nil& charge, int max_terms) {
    std::vector<FockVector> out{bra};
    for (int m = 1; m < max_terms; ++m) {
        FockVector n = apply_L_dual(-1, out.back(), charge);
        if (n.is_zero()) break;
        out.push_back(n.scaled(Nil(charge.shape(), Rational(1, m))));
    }
    return out;
}

FockVector intw_mode_coeff(const IntwOpSpec& op, const FockVector& a, const FockVector& b, const Rational& exponent,
                           unsigned logpow, int cutoff) {
    if (!op.omega.empty()) throw std::invalid_argument("intw_mode_coeff: standard operators only");
    const NilShape& s = op.arg.shape();
    Nil E = op.arg * op.on;
    Rational k = exponent - E.scalar();
    FockVector r;
    if (!is_integer(k)) return r;
    Nil Np(s, 1), N = E.nil_part();
    for (unsigned t = 1; t <= logpow; ++t) Np = Np * N * Rational(1, t);
    if (Np.is_zero()) return r;
    ThreeEngine eng(s, op.arg, op.on);
    for (const auto& [Pa, ca] : a.terms)
        for (const auto& [Pb, cb] : b.terms) {
            long w4 = to_long(k) + weight(Pa) + weight(Pb);
            if (w4 < 0) continue;
            if (w4 > cutoff) throw std::out_of_range("intw_mode_coeff: weight " + std::to_string(w4) + " beyond cutoff");
            for (const auto& P4 : partitions_of(int(w4))) {
                Nil x = eng.T(P4, Pa, Pb) * ca * cb * Np * (1 / shapovalov_norm(P4));
                r.add(P4, x);
            }
        }
    return r;
}

namespace {

FormalSeries standard_series(const Nil& arg, const Nil& on, const FockVector& bra, const FockVector& a,
                             const FockVector& b, const NilC& pre) {
    const NilShape& s = arg.shape();
    ThreeEngine eng(s, arg, on);
    std::vector<NSer> parts;
    Nil E = arg * on;
    for (const auto& [P4, d] : bra.terms) {
        NSer ns{Var::x0, Var::x0, E, Nil(s), {}, d};
        for (const auto& [Pa, ca] : a.terms)
            for (const auto& [Pb, cb] : b.terms) {
                Nil x = eng.T(P4, Pa, Pb) * ca * cb;
                if (x.is_zero()) continue;
                std::pair<long, long> key{weight(P4) - weight(Pa) - weight(Pb), 0};
                auto it = ns.terms.find(key);
                if (it == ns.terms.end()) ns.terms.emplace(key, x);
                else it->second += x;
            }
        parts.push_back(std::move(ns));
    }
    return to_formal(parts, s, pre, Var::x0, Var::x0);
}

FormalSeries from_terms(const std::map<Monomial, cplx>& acc, unsigned max_log) {
    Frame f;
    bool any = false;
    Rational lo = 0, hi = 0;
    for (const auto& [m, c] : acc) {
        Rational e = m.exp(Var::x0);
        if (!any || e < lo) lo = e;
        if (!any || e > hi) hi = e;
        any = true;
    }
    f.set(Var::x0, lo, hi, max_log);
    FormalSeries r(CoeffTag::ComplexFloat, f);
    for (const auto& [m, c] : acc)
        if (c != 0.0) r.add_term(m, c);
    return r;
}

} // namespace

FormalSeries intw_series(const IntwOpSpec& op, const FockVector& bra, const FockVector& a, const FockVector& b) {
    const NilShape& s = op.arg.shape();
    if (op.omega.empty()) return standard_series(op.arg, op.on, bra, a, b, NilC(s, 1.0));
    IntwOpSpec inner{op.on, op.arg, std::vector<int>(op.omega.begin(), op.omega.end() - 1)};
    const double pi = std::acos(-1.0);
    double theta = (2 * op.omega.back() + 1) * pi;
    cplx it(0.0, theta);
    std::map<Monomial, cplx> acc;
    unsigned max_log = unsigned(s.max_degree());
    auto bras = exp_L_dual_terms(bra, op.target());
    for (size_t m = 0; m < bras.size(); ++m) {
        FormalSeries in = intw_series(inner, bras[m], b, a);
        for (const auto& [mon, c] : in.terms()) {
            Rational al = mon.exp(Var::x0);
            unsigned t = mon.logpow(Var::x0);
            cplx base = c.to_complex() * std::exp(it * to_double(al));
            // (log x + i theta)^t
            for (unsigned q = 0; q <= t; ++q) {
                cplx v = base * double(binom(Rational(t), q).get_d()) * std::pow(it, double(t - q));
                Monomial out;
                out.set(Var::x0, al + long(m), q);
                acc[out] += v;
            }
        }
    }
    return from_terms(acc, max_log);
}

FormalSeries intw_series_realized(const IntwOpSpec& op, const FockVector& bra, const FockVector& a,
                                  const FockVector& b) {
    return standard_series(op.arg, op.on, bra, a, b, omega_phase(op));
}

// ---- numeric sums ----

namespace {

SumResult sum_adaptive(const std::function<FormalSeries(long)>& build, const Assignment& a, Var weight_var,
                       const SumOptions& opt) {
    SumResult res;
    std::optional<FormalSeries::Terms> prev;
    for (long L = opt.start_levels;; L = std::min(2 * L, opt.max_levels)) {
        FormalSeries s = build(L);
        EvalStream st = specialize(s, a, Schedule{ScheduleKind::Weight, weight_var});
        if (prev && *prev == s.terms()) {
            // more levels add nothing: a finite series
            res.report = abs_convergence_probe(st.generator(), ProbeOptions{opt.tol, 8, 1000000, true, true});
            res.value = res.report.value;
            res.levels = L;
            res.report.notes = "finite series";
            return res;
        }
        prev = s.terms();
        ProbeOptions po{opt.tol, 8, 1000000, false, true};
        res.report = abs_convergence_probe(st.generator(), po);
        res.value = res.report.value;
        res.levels = L;
        if (s.size() == 0) {
            res.report.status = Verdict::Converged;
            res.report.notes = "zero series";
            return res;
        }
        if (res.report.converged() || res.report.status == Verdict::Diverged || L >= opt.max_levels) return res;
    }
}

} // namespace

SumResult sum_product(const Triple& t, const Insertion& ins, BranchedPoint z1, BranchedPoint z2, const SumOptions& opt,
                      const std::optional<NilC>& pre) {
    return sum_adaptive([&](long L) { return product_correlator(t, ins, L, pre); }, {{Var::x1, z1}, {Var::x2, z2}},
                        Var::x2, opt);
}

SumResult sum_iterate(const Triple& t, const Insertion& ins, BranchedPoint z0, BranchedPoint z2, const SumOptions& opt,
                      const std::optional<NilC>& pre) {
    return sum_adaptive([&](long L) { return iterate_correlator(t, ins, L, pre); }, {{Var::x0, z0}, {Var::x2, z2}},
                        Var::x0, opt);
}

// ---- closed form ----

ClosedForm closed_form_correlator(const Triple& t, const Insertion& ins) {
    for (const FockVector* v : {&ins.w1, &ins.w2, &ins.w3, &ins.bra})
        if (!v->is_highest_weight()) throw std::invalid_argument("closed form needs highest-weight insertions");
    ClosedForm f;
    f.a = t.c[0] * t.c[2];
    f.b = t.c[1] * t.c[2];
    f.c = t.c[0] * t.c[1];
    f.bra = ins.bra;
    auto coef = [&](const FockVector& v) { return v.terms.empty() ? Nil(t.shape) : v.terms.begin()->second; };
    f.coeff = coef(ins.w1) * coef(ins.w2) * coef(ins.w3);
    f.zero = !t.conserved() || ins.bra.terms.empty();
    return f;
}

namespace {
cplx apply_dual(const ClosedForm& f, const NilC& expo) {
    if (f.zero) return 0.0;
    NilC x = to_complex(f.coeff) * nil_exp(expo);
    return x.pair(to_complex(f.bra.terms.begin()->second));
}
} // namespace

cplx ClosedForm::product_chart(BranchedPoint z1, BranchedPoint z2) const {
    cplx l1 = log_branch(z1), l2 = log_branch(z2);
    cplx lb = std::log(1.0 - z2.z / z1.z);
    NilC e = to_complex(a) * l1 + to_complex(b) * l2 + to_complex(c) * (l1 + lb);
    return apply_dual(*this, e);
}

cplx ClosedForm::iterate_chart(BranchedPoint z0, BranchedPoint z2) const {
    cplx l0 = log_branch(z0), l2 = log_branch(z2);
    cplx lb = std::log(1.0 + z0.z / z2.z);
    NilC e = to_complex(c) * l0 + to_complex(a) * (l2 + lb) + to_complex(b) * l2;
    return apply_dual(*this, e);
}

unsigned max_log_power(const FormalSeries& s) {
    unsigned m = 0;
    for (const auto& [mon, c] : s.terms())
        for (const auto& f : mon.factors()) m = std::max(m, f.log);
    return m;
}

double rel_dev(cplx a, cplx b) { return std::abs(a - b) / std::max(1.0, std::max(std::abs(a), std::abs(b))); }

nlohmann::json Report::to_json() const {
    nlohmann::json j;
    j["name"] = name;
    j["pass"] = pass;
    if (std::isfinite(max_deviation)) j["max_deviation"] = max_deviation;
    else j["max_deviation"] = "inf";
    j["worst"] = worst;
    j["compared"] = compared;
    j["notes"] = notes;
    return j;
}

} // namespace fcalc::heis
