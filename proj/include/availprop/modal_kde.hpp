#pragma once

#include <Eigen/Dense>

#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace availprop {

struct GridBounds {
    double u_min, u_max, v_min, v_max;
};

// Discretized weighted 2-D Gaussian KDE. The kernel covariance is
// bandwidth_factor^2 times the weighted data covariance (the scaling used
// by covariance-aware Gaussian KDE implementations), so the per-dimension
// kernel scales are bandwidth_factor times the weighted standard
// deviations and the kernel inherits the data correlation.
// Tile coordinates follow u_i = u_min + i*du for i = 1..n_u with
// du = (u_max - u_min)/n_u (and the same along v), so the axes run from
// u_min + du to u_max inclusive. density(i,j) holds rho(u_i, v_j) with
// i, j zero-based into the axes.
struct DensityGrid {
    std::vector<double> u_axis;
    std::vector<double> v_axis;
    double du = 0.0, dv = 0.0;
    Eigen::MatrixXd density;            // n_u rows (u) by n_v cols (v)
    std::vector<double> marginal;       // rho_i = sum_j rho_{i,j}
    std::vector<int> mode_index;        // j*(i); -1 flags an empty column
    double bandwidth_factor = 0.0;
    double kernel_scale_u = 0.0;        // bandwidth_factor * weighted std
    double kernel_scale_v = 0.0;
    double kernel_correlation = 0.0;    // weighted data correlation
    double silverman_reference = 0.0;   // n_eff^(-1/6), 2-D Gaussian-kernel rule
    double n_eff = 0.0;                 // (sum w)^2 / sum w^2

    // rho(v_j | u_i) = rho_{i,j} / rho_i; columns sum to 1 where defined.
    double conditional(int i, int j) const;
};

// silverman_factor for a 2-D Gaussian KDE with effective sample size n_eff.
double silverman_factor_2d(double n_eff);

// Exact kernel-sum density at an arbitrary point (test oracle and
// off-grid queries share this path with the grid evaluation).
double kde_density_at(std::span<const double> u, std::span<const double> v,
                      std::span<const double> w, double bandwidth_factor,
                      double x, double y);

DensityGrid weighted_kde_grid(std::span<const double> u, std::span<const double> v,
                              std::span<const double> w, double bandwidth_factor,
                              int n_u, int n_v,
                              std::optional<GridBounds> bounds = std::nullopt);

// Per-column conditional argmax; ties break toward the lowest j. Columns
// with zero marginal are skipped and recorded.
struct ModalCurve {
    std::vector<double> u;
    std::vector<double> v;
    std::vector<int> skipped_columns;
};

ModalCurve modal_regression(const DensityGrid& grid);

// Each column scaled by its modal density: 1 exactly at (i, j*(i)),
// everything else in [0,1]. Zero-density columns stay zero.
Eigen::MatrixXd normalized_heatmap(const DensityGrid& grid);

// Divides each curve by its trapezoidal-rule average over the shared
// u-grid. Curves must share identical u vectors.
std::map<std::string, ModalCurve> scaled_collapse(const std::map<std::string, ModalCurve>& curves);

double trapezoid_average(std::span<const double> u, std::span<const double> v);

} // namespace availprop
