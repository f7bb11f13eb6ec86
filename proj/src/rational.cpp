#include "fcalc/rational.hpp"

#include <cctype>
#include <cmath>
#include <cstdio>
#include <limits>
#include <stdexcept>

namespace fcalc {

Rational parse_rational(std::string_view text) {
    std::string s(text);
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.pop_back();
    size_t b = 0;
    while (b < s.size() && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
    s = s.substr(b);
    if (s.empty()) throw std::invalid_argument("empty rational");
    if (s[0] == '+') s = s.substr(1);
    auto slash = s.find('/');
    auto digits = [](const std::string& t) {
        size_t i = (!t.empty() && t[0] == '-') ? 1 : 0;
        if (i == t.size()) return false;
        for (; i < t.size(); ++i)
            if (!std::isdigit(static_cast<unsigned char>(t[i]))) return false;
        return true;
    };
    std::string num = s.substr(0, slash);
    std::string den = slash == std::string::npos ? "1" : s.substr(slash + 1);
    if (!digits(num) || !digits(den) || den[0] == '-')
        throw std::invalid_argument("bad rational: " + std::string(text));
    mpz_class zn(num), zd(den);
    if (zd == 0) throw std::invalid_argument("zero denominator");
    Rational q(zn, zd);
    q.canonicalize();
    return q;
}

std::string to_string(const Rational& q) {
    if (q.get_den() == 1) return q.get_num().get_str();
    return q.get_num().get_str() + "/" + q.get_den().get_str();
}

bool is_integer(const Rational& q) { return q.get_den() == 1; }

long to_long(const Rational& q) {
    if (!is_integer(q)) throw std::domain_error("not an integer: " + to_string(q));
    if (!q.get_num().fits_slong_p()) throw std::overflow_error("integer too large");
    return q.get_num().get_si();
}

double to_double(const Rational& q) { return q.get_d(); }

Rational binom(const Rational& n, unsigned k) {
    Rational r(1);
    for (unsigned j = 0; j < k; ++j) {
        r *= (n - j);
        r /= (j + 1);
    }
    return r;
}

double binom_d(double n, unsigned k) {
    double r = 1.0;
    for (unsigned j = 0; j < k; ++j) r = r * (n - j) / (j + 1);
    return r;
}

cplx parse_complex(std::string_view text) {
    std::string s;
    for (char c : text)
        if (!std::isspace(static_cast<unsigned char>(c))) s.push_back(c);
    if (s.empty()) throw std::invalid_argument("empty complex literal");
    auto num = [&](const std::string& t) -> double {
        if (t.empty() || t == "+") return 1.0;
        if (t == "-") return -1.0;
        size_t used = 0;
        double v = std::stod(t, &used);
        if (used != t.size()) throw std::invalid_argument("bad complex literal: " + s);
        return v;
    };
    try {
        if (s.back() != 'i') return {num(s), 0.0};
        std::string body = s.substr(0, s.size() - 1);
        // split at the last sign that is not part of an exponent
        size_t split = std::string::npos;
        for (size_t i = body.size(); i-- > 1;) {
            if ((body[i] == '+' || body[i] == '-') && body[i - 1] != 'e' && body[i - 1] != 'E') {
                split = i;
                break;
            }
        }
        if (split == std::string::npos) return {0.0, num(body)};
        return {num(body.substr(0, split)), num(body.substr(split))};
    } catch (const std::invalid_argument&) {
        throw std::invalid_argument("bad complex literal: " + std::string(text));
    } catch (const std::out_of_range&) {
        throw std::invalid_argument("bad complex literal: " + std::string(text));
    }
}

std::string format_complex(cplx z) {
    char buf[96];
    double im = z.imag();
    std::snprintf(buf, sizeof buf, "%.17g%s%.17gi", z.real(), (std::signbit(im) ? "-" : "+"), std::fabs(im));
    return buf;
}

} // namespace fcalc
