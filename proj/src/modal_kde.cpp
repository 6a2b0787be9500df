#include "availprop/modal_kde.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace availprop {

namespace {

constexpr double kTwoPi = 6.283185307179586;
// Kernel cutoff in Mahalanobis units; truncates per-point contributions at
// relative exp(-kCutoff^2/2) ~ 1.3e-14.
constexpr double kCutoff = 8.0;

// Weighted data covariance (weights normalized to sum 1, no dof correction);
// the kernel covariance is bandwidth_factor^2 times this, matching the
// covariance-scaled Gaussian KDE the availability/interaction curves are
// analyzed with.
struct KernelShape {
    double h_uu, h_vv, h_uv; // kernel covariance
    double inv_a, inv_b, inv_c; // inverse: [[a, b], [b, c]]
    double norm;                // 1 / (2 pi sqrt(det H))
    double sum_w, n_eff;
    std::vector<double> wn;
};

KernelShape kernel_shape(std::span<const double> u, std::span<const double> v,
                         std::span<const double> w, double bandwidth_factor)
{
    if (u.size() != v.size() || u.size() != w.size())
        throw std::invalid_argument("weighted_kde_grid: input lengths differ");
    if (u.size() < 2)
        throw std::invalid_argument("weighted_kde_grid: need at least 2 points");
    if (!(bandwidth_factor > 0.0))
        throw std::invalid_argument("weighted_kde_grid: bandwidth factor must be positive");

    KernelShape ks;
    ks.sum_w = 0.0;
    double sum_w2 = 0.0;
    for (double wi : w) {
        if (!(wi > 0.0))
            throw std::invalid_argument("weighted_kde_grid: weights must be positive");
        ks.sum_w += wi;
        sum_w2 += wi * wi;
    }
    ks.n_eff = ks.sum_w * ks.sum_w / sum_w2;
    ks.wn.resize(w.size());
    for (size_t i = 0; i < w.size(); ++i) ks.wn[i] = w[i] / ks.sum_w;

    double mu = 0.0, mv = 0.0;
    for (size_t i = 0; i < u.size(); ++i) {
        mu += ks.wn[i] * u[i];
        mv += ks.wn[i] * v[i];
    }
    double suu = 0.0, svv = 0.0, suv = 0.0;
    for (size_t i = 0; i < u.size(); ++i) {
        const double du = u[i] - mu, dv = v[i] - mv;
        suu += ks.wn[i] * du * du;
        svv += ks.wn[i] * dv * dv;
        suv += ks.wn[i] * du * dv;
    }
    const double f2 = bandwidth_factor * bandwidth_factor;
    ks.h_uu = f2 * suu;
    ks.h_vv = f2 * svv;
    ks.h_uv = f2 * suv;
    if (!(ks.h_uu > 0.0) || !(ks.h_vv > 0.0))
        throw std::invalid_argument(
            "weighted_kde_grid: degenerate data (all points identical along one dimension)");
    double det = ks.h_uu * ks.h_vv - ks.h_uv * ks.h_uv;
    if (det <= 1e-12 * ks.h_uu * ks.h_vv) {
        // numerically collinear scatter: drop the cross term
        ks.h_uv = 0.0;
        det = ks.h_uu * ks.h_vv;
    }
    ks.inv_a = ks.h_vv / det;
    ks.inv_b = -ks.h_uv / det;
    ks.inv_c = ks.h_uu / det;
    ks.norm = 1.0 / (kTwoPi * std::sqrt(det));
    return ks;
}

} // namespace

double silverman_factor_2d(double n_eff)
{
    if (!(n_eff > 0.0))
        throw std::invalid_argument("silverman_factor_2d: n_eff must be positive");
    return std::pow(n_eff, -1.0 / 6.0);
}

double kde_density_at(std::span<const double> u, std::span<const double> v,
                      std::span<const double> w, double bandwidth_factor,
                      double x, double y)
{
    const KernelShape ks = kernel_shape(u, v, w, bandwidth_factor);
    double acc = 0.0;
    for (size_t g = 0; g < u.size(); ++g) {
        const double du = x - u[g];
        const double dv = y - v[g];
        const double m2 = ks.inv_a * du * du + 2.0 * ks.inv_b * du * dv + ks.inv_c * dv * dv;
        acc += ks.wn[g] * std::exp(-0.5 * m2);
    }
    return acc * ks.norm;
}

DensityGrid weighted_kde_grid(std::span<const double> u, std::span<const double> v,
                              std::span<const double> w, double bandwidth_factor,
                              int n_u, int n_v, std::optional<GridBounds> bounds)
{
    if (n_u < 1 || n_v < 1)
        throw std::invalid_argument("weighted_kde_grid: grid dimensions must be positive");
    const KernelShape ks = kernel_shape(u, v, w, bandwidth_factor);

    GridBounds b;
    if (bounds) {
        b = *bounds;
    } else {
        b.u_min = *std::min_element(u.begin(), u.end());
        b.u_max = *std::max_element(u.begin(), u.end());
        b.v_min = *std::min_element(v.begin(), v.end());
        b.v_max = *std::max_element(v.begin(), v.end());
    }
    if (!(b.u_max > b.u_min) || !(b.v_max > b.v_min))
        throw std::invalid_argument("weighted_kde_grid: degenerate bounds");

    DensityGrid grid;
    grid.du = (b.u_max - b.u_min) / double(n_u);
    grid.dv = (b.v_max - b.v_min) / double(n_v);
    grid.u_axis.resize(size_t(n_u));
    grid.v_axis.resize(size_t(n_v));
    for (int i = 0; i < n_u; ++i) grid.u_axis[size_t(i)] = b.u_min + (i + 1) * grid.du;
    for (int j = 0; j < n_v; ++j) grid.v_axis[size_t(j)] = b.v_min + (j + 1) * grid.dv;

    grid.bandwidth_factor = bandwidth_factor;
    grid.kernel_scale_u = std::sqrt(ks.h_uu);
    grid.kernel_scale_v = std::sqrt(ks.h_vv);
    grid.kernel_correlation = ks.h_uv / (grid.kernel_scale_u * grid.kernel_scale_v);
    grid.n_eff = ks.n_eff;
    grid.silverman_reference = silverman_factor_2d(ks.n_eff);

    // Per point, the exponent splits along v as
    //   m2(du, dv) = inv_c (dv - mu)^2 + (inv_a - inv_b^2/inv_c) du^2,
    // with mu = -(inv_b/inv_c) du, so each column contributes a 1-d Gaussian
    // section in v evaluated by a two-term multiply recurrence.
    grid.density = Eigen::MatrixXd::Zero(n_u, n_v);
    const double shear = -ks.inv_b / ks.inv_c;
    const double ridge_coef = ks.inv_a - ks.inv_b * ks.inv_b / ks.inv_c; // > 0
    const double u_reach = kCutoff / std::sqrt(ridge_coef);
    const double v_reach = kCutoff / std::sqrt(ks.inv_c);
    const double step2 = std::exp(-ks.inv_c * grid.dv * grid.dv);

    for (size_t g = 0; g < u.size(); ++g) {
        const double wg = ks.wn[g] * ks.norm;
        const int i_lo = std::max(0, int(std::ceil((u[g] - u_reach - grid.u_axis[0]) / grid.du)));
        const int i_hi = std::min(n_u - 1,
                                  int(std::floor((u[g] + u_reach - grid.u_axis[0]) / grid.du)));
        for (int i = i_lo; i <= i_hi; ++i) {
            const double du = grid.u_axis[size_t(i)] - u[g];
            const double column_factor = wg * std::exp(-0.5 * ridge_coef * du * du);
            const double center = v[g] + shear * du;
            const int j_lo =
                std::max(0, int(std::ceil((center - v_reach - grid.v_axis[0]) / grid.dv)));
            const int j_hi = std::min(
                n_v - 1, int(std::floor((center + v_reach - grid.v_axis[0]) / grid.dv)));
            if (j_lo > j_hi) continue;
            // anchor at j_lo, then G_{j+1} = G_j * r_j with r_{j+1} = r_j * step2
            const double dv0 = grid.v_axis[size_t(j_lo)] - center;
            double gval = column_factor * std::exp(-0.5 * ks.inv_c * dv0 * dv0);
            double ratio = std::exp(-ks.inv_c * grid.dv * (dv0 + 0.5 * grid.dv));
            for (int j = j_lo; j <= j_hi; ++j) {
                grid.density(i, j) += gval;
                gval *= ratio;
                ratio *= step2;
            }
        }
    }

    grid.marginal.resize(size_t(n_u));
    grid.mode_index.assign(size_t(n_u), -1);
    for (int i = 0; i < n_u; ++i) {
        grid.marginal[size_t(i)] = grid.density.row(i).sum();
        if (grid.marginal[size_t(i)] > 0.0) {
            int best = 0;
            for (int j = 1; j < n_v; ++j)
                if (grid.density(i, j) > grid.density(i, best)) best = j;
            grid.mode_index[size_t(i)] = best;
        }
    }
    return grid;
}

double DensityGrid::conditional(int i, int j) const
{
    const double m = marginal[size_t(i)];
    if (m <= 0.0)
        throw std::domain_error("conditional: empty column " + std::to_string(i));
    return density(i, j) / m;
}

ModalCurve modal_regression(const DensityGrid& grid)
{
    ModalCurve curve;
    for (size_t i = 0; i < grid.u_axis.size(); ++i) {
        const int j = grid.mode_index[i];
        if (j < 0) {
            curve.skipped_columns.push_back(int(i));
            continue;
        }
        curve.u.push_back(grid.u_axis[i]);
        curve.v.push_back(grid.v_axis[size_t(j)]);
    }
    return curve;
}

Eigen::MatrixXd normalized_heatmap(const DensityGrid& grid)
{
    Eigen::MatrixXd out = Eigen::MatrixXd::Zero(grid.density.rows(), grid.density.cols());
    for (Eigen::Index i = 0; i < grid.density.rows(); ++i) {
        const int j = grid.mode_index[size_t(i)];
        if (j < 0) continue;
        const double peak = grid.density(i, j);
        if (peak <= 0.0) continue;
        out.row(i) = grid.density.row(i) / peak;
    }
    return out;
}

double trapezoid_average(std::span<const double> u, std::span<const double> v)
{
    if (u.size() != v.size() || u.size() < 2)
        throw std::invalid_argument("trapezoid_average: need at least 2 samples");
    double integral = 0.0;
    for (size_t i = 0; i + 1 < u.size(); ++i)
        integral += 0.5 * (v[i] + v[i + 1]) * (u[i + 1] - u[i]);
    const double span = u.back() - u.front();
    if (!(span > 0.0))
        throw std::invalid_argument("trapezoid_average: abscissae must be increasing");
    return integral / span;
}

std::map<std::string, ModalCurve> scaled_collapse(const std::map<std::string, ModalCurve>& curves)
{
    if (curves.empty())
        throw std::invalid_argument("scaled_collapse: no curves");
    const auto& ref = curves.begin()->second.u;
    std::map<std::string, ModalCurve> out;
    for (const auto& [name, curve] : curves) {
        if (curve.u != ref)
            throw std::invalid_argument("scaled_collapse: curves do not share a u-grid");
        const double avg = trapezoid_average(curve.u, curve.v);
        if (avg == 0.0)
            throw std::domain_error("scaled_collapse: zero curve average for " + name);
        ModalCurve scaled = curve;
        for (double& y : scaled.v) y /= avg;
        out[name] = std::move(scaled);
    }
    return out;
}

} // namespace availprop
