#include "availprop/availability.hpp"
#include "availprop/diagnostics.hpp"
#include "availprop/estimators.hpp"
#include "availprop/modal_kde.hpp"
#include "availprop/raking.hpp"
#include "availprop/smoothing_spline.hpp"
#include "availprop/survey_model.hpp"
#include "availprop/wls.hpp"

#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

namespace py = pybind11;
using namespace availprop;

namespace {

// Array-level estimator fronts: the python surface works on plain vectors
// instead of Respondent records.
double py_interaction_rate(const std::vector<double>& w, const std::vector<int>& a)
{
    if (w.size() != a.size()) throw std::invalid_argument("length mismatch");
    double num = 0.0, den = 0.0;
    for (size_t i = 0; i < w.size(); ++i) {
        num += w[i] * a[i];
        den += w[i];
    }
    if (den <= 0.0) throw std::invalid_argument("zero total weight");
    return num / den;
}

double py_duration(const std::vector<double>& w, const std::vector<int>& a,
                   const std::vector<double>& t)
{
    if (w.size() != a.size() || w.size() != t.size())
        throw std::invalid_argument("length mismatch");
    double num = 0.0, den = 0.0;
    for (size_t i = 0; i < w.size(); ++i) {
        num += w[i] * t[i] * a[i];
        den += w[i] * a[i];
    }
    if (den <= 0.0) throw std::invalid_argument("no interactors");
    return num / den;
}

double py_availability_rate(const std::vector<double>& w, const std::vector<int>& bins, int k,
                            const BinnedFit& fit)
{
    if (w.size() != bins.size()) throw std::invalid_argument("length mismatch");
    double num = 0.0, den = 0.0;
    for (size_t i = 0; i < w.size(); ++i) {
        num += w[i] * fit.prob_at_least(bins[i], k);
        den += w[i];
    }
    if (den <= 0.0) throw std::invalid_argument("zero total weight");
    return num / den;
}

double py_call_statistic(const std::vector<double>& w, const std::vector<double>& e,
                         const std::vector<int>& a)
{
    if (w.size() != e.size() || w.size() != a.size())
        throw std::invalid_argument("length mismatch");
    double num = 0.0, den = 0.0;
    for (size_t i = 0; i < w.size(); ++i) {
        num += w[i] * e[i] * a[i];
        den += w[i] * e[i];
    }
    if (den <= 0.0) throw std::invalid_argument("no calls");
    return num / den;
}

// Raking with per-item category labels: items[i][d] is item i's value on
// dimension d; dims names the dimensions in that order.
py::dict py_rake(const std::vector<std::vector<std::string>>& items,
                 const std::vector<double>& weights, const std::vector<std::string>& dims,
                 const std::vector<std::vector<std::pair<std::vector<std::string>,
                                                         std::map<std::string, double>>>>& stages,
                 double tolerance, long long max_iterations)
{
    if (items.size() != weights.size()) throw std::invalid_argument("length mismatch");
    std::vector<RakingItem> raking_items;
    for (size_t i = 0; i < items.size(); ++i) {
        if (items[i].size() != dims.size())
            throw std::invalid_argument("item categories must match dims");
        RakingItem item;
        item.weight = weights[i];
        for (size_t d = 0; d < dims.size(); ++d) item.categories[dims[d]] = items[i][d];
        raking_items.push_back(std::move(item));
    }
    RakingSpec spec;
    spec.tolerance = tolerance;
    spec.max_iterations = max_iterations;
    for (const auto& stage_axes : stages) {
        RakingStage stage;
        for (const auto& [axis_dims, targets] : stage_axes)
            stage.axes.push_back({axis_dims, targets});
        spec.stages.push_back(std::move(stage));
    }
    const RakingResult result = rake(raking_items, spec);
    py::dict out;
    out["weights"] = result.weights;
    out["converged"] = result.converged;
    py::list stage_list;
    for (const auto& s : result.stages) {
        py::dict d;
        d["iterations"] = s.iterations;
        d["max_rel_error"] = s.max_rel_error;
        d["converged"] = s.converged;
        stage_list.append(d);
    }
    out["stages"] = stage_list;
    out["warnings"] = result.warnings;
    return out;
}

} // namespace

PYBIND11_MODULE(_availprop, m)
{
    m.doc() = "Availability/propensity decomposition of survey interaction rates";

    // generative model
    m.def("joint_probability", &joint_probability, py::arg("a"), py::arg("b"),
          py::arg("kappa"), py::arg("phi"));
    m.def("count_pmf", &count_pmf, py::arg("y"), py::arg("s"), py::arg("kappa"),
          py::arg("phi"));

    // estimators
    m.def("interaction_rate", &py_interaction_rate, py::arg("weights"), py::arg("flags"));
    m.def("availability_rate", &py_availability_rate, py::arg("weights"), py::arg("bins"),
          py::arg("k"), py::arg("fit"));
    m.def("effective_propensity", &effective_propensity, py::arg("f"), py::arg("phi"));
    m.def("duration", &py_duration, py::arg("weights"), py::arg("flags"), py::arg("hours"));
    m.def("mle_success_rate", &mle_success_rate, py::arg("y"), py::arg("s"));
    m.def("national_average_propensity",
          [](const std::vector<double>& v, const std::vector<double>& s) {
              return national_average_propensity(v, s);
          },
          py::arg("values"), py::arg("sample_sizes"));

    // availability model
    py::class_<NegBinomial>(m, "NegBinomial")
        .def_readonly("r", &NegBinomial::r)
        .def_readonly("q", &NegBinomial::q)
        .def("pmf", &NegBinomial::pmf)
        .def("cdf", &NegBinomial::cdf);
    py::class_<BinnedFit>(m, "BinnedFit")
        .def_readonly("nb", &BinnedFit::nb)
        .def_readonly("bin_proportions", &BinnedFit::bin_proportions)
        .def_readonly("objective", &BinnedFit::objective)
        .def_readonly("tail_cap", &BinnedFit::tail_cap)
        .def("prob_at_least", &BinnedFit::prob_at_least, py::arg("bin_index"), py::arg("k"))
        .def("bin_mass", &BinnedFit::bin_mass, py::arg("bin_index"));
    m.def("fit_binned_nb", &fit_binned_nb, py::arg("bin_proportions"),
          py::arg("tail_cap") = 200);

    // weighted least squares
    py::class_<WlsFit>(m, "WlsFit")
        .def_readonly("beta1", &WlsFit::beta1)
        .def_readonly("beta0", &WlsFit::beta0)
        .def_readonly("se1", &WlsFit::se1)
        .def_readonly("p_value", &WlsFit::p_value)
        .def_readonly("adj_r2", &WlsFit::adj_r2)
        .def_readonly("ci95_low", &WlsFit::ci95_low)
        .def_readonly("ci95_high", &WlsFit::ci95_high)
        .def_readonly("n", &WlsFit::n);
    m.def("wls_fit",
          [](const std::vector<double>& u, const std::vector<double>& v,
             const std::vector<double>& w) { return wls_fit(u, v, w); },
          py::arg("u"), py::arg("v"), py::arg("w"));
    m.def("sample_size_weights",
          [](const std::vector<double>& s) { return sample_size_weights(s); },
          py::arg("sample_sizes"));
    m.def("lambda_variance_weight", &lambda_variance_weight, py::arg("f"), py::arg("phi"),
          py::arg("var_f"), py::arg("var_phi"));
    m.def("significance_stars", &significance_stars, py::arg("p_value"));

    // smoothing spline
    py::class_<SplineFit>(m, "SplineFit")
        .def_readonly("knots", &SplineFit::knots)
        .def_readonly("values", &SplineFit::values)
        .def_readonly("eta", &SplineFit::eta)
        .def_readonly("gcv_score", &SplineFit::gcv_score)
        .def_readonly("effective_df", &SplineFit::effective_df)
        .def("__call__",
             [](const SplineFit& fit, double x) { return fit.evaluate(x); })
        .def("derivative", &SplineFit::derivative);
    m.def("fit_spline",
          [](const std::vector<double>& u, const std::vector<double>& v,
             const std::vector<double>& w, py::object eta) {
              std::optional<double> e;
              if (!eta.is_none()) e = eta.cast<double>();
              return fit_spline(u, v, w, e);
          },
          py::arg("u"), py::arg("v"), py::arg("w"), py::arg("eta") = py::none());

    // modal KDE
    py::class_<GridBounds>(m, "GridBounds")
        .def(py::init<double, double, double, double>(), py::arg("u_min"), py::arg("u_max"),
             py::arg("v_min"), py::arg("v_max"));
    py::class_<DensityGrid>(m, "DensityGrid")
        .def_readonly("u_axis", &DensityGrid::u_axis)
        .def_readonly("v_axis", &DensityGrid::v_axis)
        .def_readonly("density", &DensityGrid::density)
        .def_readonly("marginal", &DensityGrid::marginal)
        .def_readonly("mode_index", &DensityGrid::mode_index)
        .def_readonly("bandwidth_factor", &DensityGrid::bandwidth_factor)
        .def_readonly("silverman_reference", &DensityGrid::silverman_reference)
        .def_readonly("n_eff", &DensityGrid::n_eff)
        .def("conditional", &DensityGrid::conditional, py::arg("i"), py::arg("j"));
    py::class_<ModalCurve>(m, "ModalCurve")
        .def_readonly("u", &ModalCurve::u)
        .def_readonly("v", &ModalCurve::v)
        .def_readonly("skipped_columns", &ModalCurve::skipped_columns);
    m.def("weighted_kde_grid",
          [](const std::vector<double>& u, const std::vector<double>& v,
             const std::vector<double>& w, double bandwidth, int n_u, int n_v,
             py::object bounds) {
              std::optional<GridBounds> b;
              if (!bounds.is_none()) b = bounds.cast<GridBounds>();
              return weighted_kde_grid(u, v, w, bandwidth, n_u, n_v, b);
          },
          py::arg("u"), py::arg("v"), py::arg("w"), py::arg("bandwidth"), py::arg("n_u"),
          py::arg("n_v"), py::arg("bounds") = py::none());
    m.def("modal_regression", &modal_regression, py::arg("grid"));
    m.def("normalized_heatmap", &normalized_heatmap, py::arg("grid"));
    m.def("scaled_collapse", &scaled_collapse, py::arg("curves"));
    m.def("silverman_factor_2d", &silverman_factor_2d, py::arg("n_eff"));
    m.def("kde_density_at",
          [](const std::vector<double>& u, const std::vector<double>& v,
             const std::vector<double>& w, double bandwidth, double x, double y) {
              return kde_density_at(u, v, w, bandwidth, x, y);
          },
          py::arg("u"), py::arg("v"), py::arg("w"), py::arg("bandwidth"), py::arg("x"),
          py::arg("y"));

    // diagnostics
    m.def("call_statistic", &py_call_statistic, py::arg("weights"), py::arg("calls"),
          py::arg("flags"));
    m.def("weighted_zscore", &weighted_zscore, py::arg("v_g"), py::arg("u_g"), py::arg("grid"),
          py::arg("w_g"), py::arg("sum_w"));

    // raking
    m.def("rake", &py_rake, py::arg("items"), py::arg("weights"), py::arg("dims"),
          py::arg("stages"), py::arg("tolerance") = 1e-6, py::arg("max_iterations") = 1000);
}
