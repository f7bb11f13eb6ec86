#pragma once

#include <gmpxx.h>

#include <complex>
#include <string>
#include <string_view>

namespace fcalc {

// mpq_class keeps values canonical as long as every constructor path calls
// canonicalize(); parse_rational does that.
using Rational = mpq_class;
using cplx = std::complex<double>;

Rational parse_rational(std::string_view text);
std::string to_string(const Rational& q);

bool is_integer(const Rational& q);
long to_long(const Rational& q); // throws if not an integer or out of range
double to_double(const Rational& q);

// generalized binomial C(n,k) = n(n-1)...(n-k+1)/k!
Rational binom(const Rational& n, unsigned k);
double binom_d(double n, unsigned k);

// "a+bi", "a-bi", "a", "bi", "-i" ...
cplx parse_complex(std::string_view text);
std::string format_complex(cplx z);

} // namespace fcalc
