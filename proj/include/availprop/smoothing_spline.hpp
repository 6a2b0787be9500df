#pragma once

#include <optional>
#include <span>
#include <vector>

namespace availprop {

// Weighted natural cubic smoothing spline: minimizes
//   sum_g w_g (v_g - f(u_g))^2 + eta * int (f'')^2
// over natural cubic splines with knots at the distinct abscissae
// (Reinsch construction). Duplicate-u observations are merged by weighted
// averaging before solving. When eta is not given, it is selected by
// generalized cross-validation, GCV(eta) = n * RSS_w / (n - tr S)^2,
// minimized over a 61-point log grid spanning 1e-6..1e6 times a
// data-scale normalizer.
struct SplineFit {
    std::vector<double> knots;          // sorted distinct u
    std::vector<double> values;         // smoothed values at the knots
    std::vector<double> second_derivs;  // natural boundary: zero at both ends
    double eta = 0.0;
    double gcv_score = 0.0;
    double effective_df = 0.0;          // trace of the smoother matrix

    // Cubic coefficients of piece i on [knots[i], knots[i+1]]:
    // f(x) = a + b t + c t^2 + d t^3 with t = x - knots[i].
    struct Piece {
        double a, b, c, d;
    };
    Piece piece_coefficients(std::size_t i) const;

    // Piecewise-cubic evaluation; linear extrapolation outside the knot
    // span, reported through *extrapolated when requested.
    double evaluate(double u, bool* extrapolated = nullptr) const;
    double derivative(double u) const;
};

SplineFit fit_spline(std::span<const double> u, std::span<const double> v,
                     std::span<const double> w,
                     std::optional<double> eta = std::nullopt);

} // namespace availprop
