#include "availprop/wls.hpp"

#include "availprop/mathutil.hpp"

#include <cmath>
#include <map>
#include <stdexcept>

namespace availprop {

WlsFit wls_fit(std::span<const double> u, std::span<const double> v,
               std::span<const double> w)
{
    if (u.size() != v.size() || u.size() != w.size())
        throw std::invalid_argument("wls_fit: input lengths differ");
    std::map<std::pair<double, double>, double> merged;
    for (size_t i = 0; i < u.size(); ++i) {
        if (!(w[i] > 0.0))
            throw std::invalid_argument("wls_fit: weights must be positive");
        merged[{u[i], v[i]}] += w[i];
    }
    const long long n = (long long)merged.size();
    if (n < 3)
        throw std::invalid_argument("wls_fit: need at least 3 distinct points");

    double Sw = 0, Su = 0, Sv = 0, Suu = 0, Suv = 0;
    for (const auto& [uv, wi] : merged) {
        Sw += wi;
        Su += wi * uv.first;
        Sv += wi * uv.second;
        Suu += wi * uv.first * uv.first;
        Suv += wi * uv.first * uv.second;
    }
    const double det = Sw * Suu - Su * Su;
    if (!(det > 0.0) || det <= 1e-14 * Sw * Suu)
        throw std::invalid_argument("wls_fit: degenerate abscissae (all u equal?)");

    WlsFit fit;
    fit.n = n;
    fit.beta1 = (Sw * Suv - Su * Sv) / det;
    fit.beta0 = (Sv - fit.beta1 * Su) / Sw;

    const double vbar = Sv / Sw;
    double rss = 0.0, tss = 0.0;
    for (const auto& [uv, wi] : merged) {
        const double e = uv.second - (fit.beta1 * uv.first + fit.beta0);
        rss += wi * e * e;
        tss += wi * (uv.second - vbar) * (uv.second - vbar);
    }
    const double df = double(n - 2);
    const double sigma2 = rss / df;
    fit.se1 = std::sqrt(sigma2 * Sw / det);

    const double t = fit.se1 > 0.0 ? fit.beta1 / fit.se1 : 0.0;
    fit.p_value = fit.se1 > 0.0 ? math::t_two_sided_pvalue(t, df) : 0.0;

    const double r2 = tss > 0.0 ? 1.0 - rss / tss : 1.0;
    fit.adj_r2 = 1.0 - (1.0 - r2) * double(n - 1) / df;

    const double tq = math::t_quantile(0.975, df);
    fit.ci95_low = fit.beta1 - tq * fit.se1;
    fit.ci95_high = fit.beta1 + tq * fit.se1;
    return fit;
}

std::vector<double> sample_size_weights(std::span<const double> sample_sizes)
{
    double total = 0.0;
    for (double s : sample_sizes) {
        if (!(s > 0.0))
            throw std::invalid_argument("sample_size_weights: sample sizes must be positive");
        total += s;
    }
    if (sample_sizes.empty())
        throw std::invalid_argument("sample_size_weights: empty input");
    std::vector<double> out(sample_sizes.size());
    for (size_t i = 0; i < out.size(); ++i) out[i] = sample_sizes[i] / total;
    return out;
}

double lambda_variance_weight(double f, double phi, double var_f, double var_phi)
{
    if (!(phi > 0.0))
        throw std::invalid_argument("lambda_variance_weight: phi must be positive");
    if (var_f < 0.0 || var_phi < 0.0)
        throw std::invalid_argument("lambda_variance_weight: variances must be nonnegative");
    const double dldf = 1.0 / phi;
    const double dldphi = f / (phi * phi);
    const double var_lambda = dldf * dldf * var_f + dldphi * dldphi * var_phi;
    if (var_lambda <= 0.0)
        throw std::domain_error("lambda_variance_weight: both variances zero, weight infinite");
    return 1.0 / var_lambda;
}

std::string significance_stars(double p_value)
{
    if (p_value < 0.01) return "***";
    if (p_value < 0.05) return "**";
    if (p_value < 0.10) return "*";
    return "";
}

} // namespace availprop
