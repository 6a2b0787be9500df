#include "availprop/mathutil.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

namespace availprop::math {

double log_binomial(double n, double k)
{
    if (k < 0 || k > n)
        throw std::invalid_argument("log_binomial: require 0 <= k <= n");
    return std::lgamma(n + 1.0) - std::lgamma(k + 1.0) - std::lgamma(n - k + 1.0);
}

namespace {

// Continued-fraction evaluation for the incomplete beta (Lentz's method).
double beta_cf(double a, double b, double x)
{
    const double eps = std::numeric_limits<double>::epsilon();
    const double fpmin = std::numeric_limits<double>::min() / eps;
    const double qab = a + b;
    const double qap = a + 1.0;
    const double qam = a - 1.0;
    double c = 1.0;
    double d = 1.0 - qab * x / qap;
    if (std::fabs(d) < fpmin) d = fpmin;
    d = 1.0 / d;
    double h = d;
    for (int m = 1; m <= 300; ++m) {
        const int m2 = 2 * m;
        double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if (std::fabs(d) < fpmin) d = fpmin;
        c = 1.0 + aa / c;
        if (std::fabs(c) < fpmin) c = fpmin;
        d = 1.0 / d;
        h *= d * c;
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if (std::fabs(d) < fpmin) d = fpmin;
        c = 1.0 + aa / c;
        if (std::fabs(c) < fpmin) c = fpmin;
        d = 1.0 / d;
        const double del = d * c;
        h *= del;
        if (std::fabs(del - 1.0) < 10.0 * eps) break;
    }
    return h;
}

} // namespace

double incomplete_beta(double a, double b, double x)
{
    if (a <= 0 || b <= 0)
        throw std::invalid_argument("incomplete_beta: a, b must be positive");
    if (x < 0.0 || x > 1.0)
        throw std::invalid_argument("incomplete_beta: x must lie in [0,1]");
    if (x == 0.0) return 0.0;
    if (x == 1.0) return 1.0;
    const double ln_front = std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b)
        + a * std::log(x) + b * std::log1p(-x);
    const double front = std::exp(ln_front);
    // The continued fraction converges fast for x < (a+1)/(a+b+2);
    // otherwise use the symmetry I_x(a,b) = 1 - I_{1-x}(b,a).
    if (x < (a + 1.0) / (a + b + 2.0))
        return front * beta_cf(a, b, x) / a;
    return 1.0 - front * beta_cf(b, a, 1.0 - x) / b;
}

double t_two_sided_pvalue(double t, double df)
{
    if (df <= 0)
        throw std::invalid_argument("t_two_sided_pvalue: df must be positive");
    if (!std::isfinite(t)) return 0.0;
    return incomplete_beta(df / 2.0, 0.5, df / (df + t * t));
}

double t_quantile(double prob, double df)
{
    if (prob <= 0.0 || prob >= 1.0)
        throw std::invalid_argument("t_quantile: prob must lie in (0,1)");
    if (df <= 0)
        throw std::invalid_argument("t_quantile: df must be positive");
    if (prob == 0.5) return 0.0;
    // CDF(t) = 1 - I_{df/(df+t^2)}(df/2, 1/2) / 2 for t >= 0; bisect on |t|.
    const double p_tail = prob > 0.5 ? 2.0 * (1.0 - prob) : 2.0 * prob;
    double lo = 0.0, hi = 1.0;
    while (incomplete_beta(df / 2.0, 0.5, df / (df + hi * hi)) > p_tail)
        hi *= 2.0;
    for (int it = 0; it < 200; ++it) {
        const double mid = 0.5 * (lo + hi);
        if (incomplete_beta(df / 2.0, 0.5, df / (df + mid * mid)) > p_tail)
            lo = mid;
        else
            hi = mid;
    }
    const double q = 0.5 * (lo + hi);
    return prob > 0.5 ? q : -q;
}

std::uint64_t fnv1a64(std::string_view data, std::uint64_t seed)
{
    std::uint64_t h = seed;
    for (unsigned char c : data) {
        h ^= c;
        h *= 0x100000001b3ull;
    }
    return h;
}

std::uint64_t splitmix64(std::uint64_t x)
{
    x += 0x9e3779b97f4a7c15ull;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
    return x ^ (x >> 31);
}

} // namespace availprop::math
