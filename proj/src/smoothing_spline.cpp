#include "availprop/smoothing_spline.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <stdexcept>

namespace availprop {

namespace {

// Symmetric banded matrix with bandwidth 2, stored by diagonal.
struct Banded {
    size_t n = 0;
    std::vector<double> d0, d1, d2; // main, first, second superdiagonal

    explicit Banded(size_t n_) : n(n_), d0(n_, 0.0), d1(n_ ? n_ - 1 : 0, 0.0),
                                 d2(n_ > 1 ? n_ - 2 : 0, 0.0) {}
};

// In-place Cholesky factorization B = L L^T for the banded layout.
Banded cholesky(const Banded& b)
{
    Banded L(b.n);
    for (size_t j = 0; j < b.n; ++j) {
        double s = b.d0[j];
        if (j >= 1) s -= L.d1[j - 1] * L.d1[j - 1];
        if (j >= 2) s -= L.d2[j - 2] * L.d2[j - 2];
        if (s <= 0.0)
            throw std::runtime_error("smoothing spline: penalized system not positive definite");
        L.d0[j] = std::sqrt(s);
        if (j + 1 < b.n) {
            double t = b.d1[j];
            if (j >= 1) t -= L.d1[j - 1] * L.d2[j - 1];
            L.d1[j] = t / L.d0[j];
        }
        if (j + 2 < b.n) L.d2[j] = b.d2[j] / L.d0[j];
    }
    return L;
}

std::vector<double> solve_cholesky(const Banded& L, std::vector<double> rhs)
{
    const size_t n = L.n;
    for (size_t i = 0; i < n; ++i) { // forward: L z = rhs
        double s = rhs[i];
        if (i >= 1) s -= L.d1[i - 1] * rhs[i - 1];
        if (i >= 2) s -= L.d2[i - 2] * rhs[i - 2];
        rhs[i] = s / L.d0[i];
    }
    for (size_t ii = n; ii-- > 0;) { // backward: L^T x = z
        double s = rhs[ii];
        if (ii + 1 < n) s -= L.d1[ii] * rhs[ii + 1];
        if (ii + 2 < n) s -= L.d2[ii] * rhs[ii + 2];
        rhs[ii] = s / L.d0[ii];
    }
    return rhs;
}

struct MergedData {
    std::vector<double> x, y, w;
};

MergedData merge_duplicates(std::span<const double> u, std::span<const double> v,
                            std::span<const double> w)
{
    if (u.size() != v.size() || u.size() != w.size())
        throw std::invalid_argument("fit_spline: input lengths differ");
    std::map<double, std::pair<double, double>> acc; // x -> (sum w, sum w*y)
    for (size_t i = 0; i < u.size(); ++i) {
        if (!(w[i] > 0.0))
            throw std::invalid_argument("fit_spline: weights must be positive");
        auto& [sw, swy] = acc[u[i]];
        sw += w[i];
        swy += w[i] * v[i];
    }
    MergedData m;
    for (const auto& [x, p] : acc) {
        m.x.push_back(x);
        m.y.push_back(p.second / p.first);
        m.w.push_back(p.first);
    }
    return m;
}

struct Solution {
    std::vector<double> g;     // fitted values
    std::vector<double> gamma; // interior second derivatives
    double rss = 0.0;
    double trace_s = 0.0;
};

// Solves (T + eta Q^T W^-1 Q) gamma = Q^T y, then g = y - eta W^-1 Q gamma.
Solution solve_penalized(const MergedData& m, double eta, bool want_trace)
{
    const size_t n = m.x.size();
    const size_t ni = n - 2; // interior knots
    std::vector<double> h(n - 1);
    for (size_t i = 0; i + 1 < n; ++i) {
        h[i] = m.x[i + 1] - m.x[i];
        if (!(h[i] > 0.0))
            throw std::logic_error("fit_spline: knots not strictly increasing");
    }

    // Q column j (interior point j+1) has rows j, j+1, j+2 with entries
    // 1/h_j, -(1/h_j + 1/h_{j+1}), 1/h_{j+1}.
    auto q_entry = [&](size_t row, size_t col) -> double {
        if (row == col) return 1.0 / h[col];
        if (row == col + 1) return -(1.0 / h[col] + 1.0 / h[col + 1]);
        if (row == col + 2) return 1.0 / h[col + 1];
        return 0.0;
    };

    Banded B(ni);
    for (size_t j = 0; j < ni; ++j) {
        B.d0[j] = (h[j] + h[j + 1]) / 3.0;
        if (j + 1 < ni) B.d1[j] = h[j + 1] / 6.0;
    }
    // add eta * Q^T W^-1 Q (pentadiagonal)
    for (size_t j = 0; j < ni; ++j) {
        for (size_t k = j; k < std::min(j + 3, ni); ++k) {
            double s = 0.0;
            const size_t row_lo = std::max(j, k);
            for (size_t row = row_lo; row <= j + 2; ++row)
                s += q_entry(row, j) * q_entry(row, k) / m.w[row];
            if (k == j) B.d0[j] += eta * s;
            else if (k == j + 1) B.d1[j] += eta * s;
            else B.d2[j] += eta * s;
        }
    }

    std::vector<double> rhs(ni);
    for (size_t j = 0; j < ni; ++j)
        rhs[j] = (m.y[j + 2] - m.y[j + 1]) / h[j + 1] - (m.y[j + 1] - m.y[j]) / h[j];

    const Banded L = cholesky(B);
    const std::vector<double> gamma = solve_cholesky(L, rhs);

    Solution sol;
    sol.gamma = gamma;
    sol.g = m.y;
    // g = y - eta W^-1 Q gamma
    std::vector<double> qg(n, 0.0);
    for (size_t j = 0; j < ni; ++j) {
        qg[j] += q_entry(j, j) * gamma[j];
        qg[j + 1] += q_entry(j + 1, j) * gamma[j];
        qg[j + 2] += q_entry(j + 2, j) * gamma[j];
    }
    for (size_t i = 0; i < n; ++i) sol.g[i] = m.y[i] - eta / m.w[i] * qg[i];

    for (size_t i = 0; i < n; ++i) {
        const double e = m.y[i] - sol.g[i];
        sol.rss += m.w[i] * e * e;
    }

    if (want_trace) {
        // tr S = n - eta * sum_i (1/w_i) q_i^T B^-1 q_i with q_i row i of Q.
        double acc = 0.0;
        for (size_t i = 0; i < n; ++i) {
            std::vector<double> qi(ni, 0.0);
            bool any = false;
            for (size_t j = (i >= 2 ? i - 2 : 0); j < std::min(i + 1, ni); ++j) {
                const double e = q_entry(i, j);
                if (e != 0.0) {
                    qi[j] = e;
                    any = true;
                }
            }
            if (!any) continue;
            const std::vector<double> x = solve_cholesky(L, qi);
            double dot = 0.0;
            for (size_t j = (i >= 2 ? i - 2 : 0); j < std::min(i + 1, ni); ++j)
                dot += qi[j] * x[j];
            acc += dot / m.w[i];
        }
        sol.trace_s = double(n) - eta * acc;
    }
    return sol;
}

} // namespace

SplineFit fit_spline(std::span<const double> u, std::span<const double> v,
                     std::span<const double> w, std::optional<double> eta)
{
    const MergedData m = merge_duplicates(u, v, w);
    const size_t n = m.x.size();
    if (n < 4)
        throw std::invalid_argument("fit_spline: need at least 4 distinct abscissae");
    if (eta && !(*eta >= 0.0))
        throw std::invalid_argument("fit_spline: eta must be nonnegative");

    double chosen_eta;
    if (eta) {
        chosen_eta = *eta;
    } else {
        // data-scale normalizer: geometric middle between the finest and the
        // whole-span curvature scales
        double mean_w = 0.0;
        for (double wi : m.w) mean_w += wi;
        mean_w /= double(n);
        const double range = m.x.back() - m.x.front();
        const double hbar = range / double(n - 1);
        const double eta0 = mean_w * std::pow(hbar * range, 1.5);
        double best_gcv = std::numeric_limits<double>::infinity();
        double best_eta = eta0;
        for (int k = 0; k < 61; ++k) {
            const double cand = eta0 * std::pow(10.0, -6.0 + 12.0 * k / 60.0);
            const Solution s = solve_penalized(m, cand, true);
            const double denom = double(n) - s.trace_s;
            if (denom <= 0.0) continue;
            const double gcv = double(n) * s.rss / (denom * denom);
            if (gcv < best_gcv) {
                best_gcv = gcv;
                best_eta = cand;
            }
        }
        chosen_eta = best_eta;
    }

    const Solution s = solve_penalized(m, chosen_eta, true);

    SplineFit fit;
    fit.knots = m.x;
    fit.values = s.g;
    fit.second_derivs.assign(n, 0.0);
    for (size_t j = 0; j < n - 2; ++j) fit.second_derivs[j + 1] = s.gamma[j];
    fit.eta = chosen_eta;
    const double denom = double(n) - s.trace_s;
    fit.gcv_score = denom > 0.0 ? double(n) * s.rss / (denom * denom)
                                : std::numeric_limits<double>::infinity();
    fit.effective_df = s.trace_s;
    return fit;
}

SplineFit::Piece SplineFit::piece_coefficients(std::size_t i) const
{
    if (i + 1 >= knots.size())
        throw std::out_of_range("piece_coefficients: piece index out of range");
    const double h = knots[i + 1] - knots[i];
    const double gi = values[i], gj = values[i + 1];
    const double si = second_derivs[i], sj = second_derivs[i + 1];
    Piece p;
    p.a = gi;
    p.c = si / 2.0;
    p.d = (sj - si) / (6.0 * h);
    p.b = (gj - gi) / h - h * (2.0 * si + sj) / 6.0;
    return p;
}

namespace {

size_t locate(const std::vector<double>& knots, double x)
{
    const auto it = std::upper_bound(knots.begin(), knots.end(), x);
    size_t i = it == knots.begin() ? 0 : size_t(it - knots.begin()) - 1;
    return std::min(i, knots.size() - 2);
}

} // namespace

double SplineFit::evaluate(double x, bool* extrapolated) const
{
    const bool outside = x < knots.front() || x > knots.back();
    if (extrapolated) *extrapolated = outside;
    if (x < knots.front()) {
        const Piece p = piece_coefficients(0);
        return values.front() + p.b * (x - knots.front());
    }
    if (x > knots.back()) {
        const size_t last = knots.size() - 2;
        const Piece p = piece_coefficients(last);
        const double h = knots[last + 1] - knots[last];
        const double slope = p.b + 2.0 * p.c * h + 3.0 * p.d * h * h;
        return values.back() + slope * (x - knots.back());
    }
    const size_t i = locate(knots, x);
    const Piece p = piece_coefficients(i);
    const double t = x - knots[i];
    return p.a + t * (p.b + t * (p.c + t * p.d));
}

double SplineFit::derivative(double x) const
{
    if (x < knots.front()) return piece(*this, 0).b;
    if (x > knots.back()) {
        const size_t last = knots.size() - 2;
        const Piece p = piece_coefficients(last);
        const double h = knots[last + 1] - knots[last];
        return p.b + 2.0 * p.c * h + 3.0 * p.d * h * h;
    }
    const size_t i = locate(knots, x);
    const Piece p = piece_coefficients(i);
    const double t = x - knots[i];
    return p.b + 2.0 * p.c * t + 3.0 * p.d * t * t;
}

} // namespace availprop
