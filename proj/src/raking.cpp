#include "availprop/raking.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <set>

namespace availprop {

namespace {

std::string cell_key(const RakingItem& item, const RakingAxis& axis)
{
    std::string key;
    for (size_t d = 0; d < axis.dims.size(); ++d) {
        auto it = item.categories.find(axis.dims[d]);
        if (it == item.categories.end())
            throw std::invalid_argument("rake: item not classified on dimension '" +
                                        axis.dims[d] + "'");
        if (d) key += '|';
        key += it->second;
    }
    return key;
}

double axis_total(const RakingAxis& axis)
{
    double t = 0.0;
    for (const auto& [cell, target] : axis.targets) {
        if (target < 0.0)
            throw std::invalid_argument("rake: negative target for cell " + cell);
        t += target;
    }
    return t;
}

} // namespace

void RakingSpec::validate() const
{
    if (!(tolerance > 0.0))
        throw std::invalid_argument("RakingSpec: tolerance must be positive");
    if (max_iterations <= 0)
        throw std::invalid_argument("RakingSpec: max_iterations must be positive");
    for (size_t s = 0; s < stages.size(); ++s) {
        if (stages[s].axes.empty())
            throw std::invalid_argument("RakingSpec: stage " + std::to_string(s) + " has no axes");
        const double first = axis_total(stages[s].axes.front());
        for (const auto& axis : stages[s].axes) {
            const double t = axis_total(axis);
            const double scale = std::max(std::fabs(first), std::fabs(t));
            if (scale > 0.0 && std::fabs(t - first) > tolerance * scale)
                throw std::invalid_argument("RakingSpec: inconsistent grand totals within stage " +
                                            std::to_string(s));
        }
    }
}

namespace {

// Per-axis working view: cell index per item plus per-cell target.
struct AxisView {
    std::vector<int> item_cell;           // -1 once a cell is dropped
    std::vector<double> targets;
    std::vector<std::string> cell_names;
};

AxisView build_axis_view(const std::vector<RakingItem>& items, const RakingAxis& axis,
                         int stage_idx, int axis_idx, std::vector<std::string>& warnings)
{
    AxisView view;
    std::map<std::string, int> index;
    std::map<std::string, double> achieved;
    view.item_cell.resize(items.size());
    for (size_t i = 0; i < items.size(); ++i) {
        const std::string key = cell_key(items[i], axis);
        achieved[key] += items[i].weight;
        auto [it, fresh] = index.try_emplace(key, int(view.cell_names.size()));
        if (fresh) view.cell_names.push_back(key);
        view.item_cell[i] = it->second;
    }
    view.targets.resize(view.cell_names.size());
    for (size_t c = 0; c < view.cell_names.size(); ++c) {
        auto it = axis.targets.find(view.cell_names[c]);
        const double target = it == axis.targets.end() ? 0.0 : it->second;
        if (target <= 0.0)
            throw StructuralZeroError("rake: occupied cell '" + view.cell_names[c] +
                                      "' (stage " + std::to_string(stage_idx) + ", axis " +
                                      std::to_string(axis_idx) + ") has no target population");
        view.targets[c] = target;
    }
    // target cells with no respondents: warn, drop from the adjustment
    for (const auto& [cell, target] : axis.targets) {
        if (target > 0.0 && !achieved.count(cell))
            warnings.push_back("stage " + std::to_string(stage_idx) + " axis " +
                               std::to_string(axis_idx) + ": target cell '" + cell +
                               "' has no respondents; dropped from adjustment");
    }
    return view;
}

double max_relative_error(const std::vector<double>& weights, const AxisView& view)
{
    std::vector<double> achieved(view.targets.size(), 0.0);
    for (size_t i = 0; i < weights.size(); ++i)
        achieved[size_t(view.item_cell[i])] += weights[i];
    double err = 0.0;
    for (size_t c = 0; c < view.targets.size(); ++c)
        err = std::max(err, std::fabs(achieved[c] - view.targets[c]) / view.targets[c]);
    return err;
}

} // namespace

RakingResult rake(const std::vector<RakingItem>& items, const RakingSpec& spec)
{
    spec.validate();
    if (items.empty())
        throw std::invalid_argument("rake: no items");
    RakingResult result;
    result.weights.reserve(items.size());
    for (const auto& item : items) {
        if (!(item.weight > 0.0))
            throw std::invalid_argument("rake: initial weights must be positive");
        result.weights.push_back(item.weight);
    }

    result.converged = true;
    for (size_t s = 0; s < spec.stages.size(); ++s) {
        const auto& stage = spec.stages[s];
        std::vector<AxisView> views;
        views.reserve(stage.axes.size());
        for (size_t a = 0; a < stage.axes.size(); ++a)
            views.push_back(build_axis_view(items, stage.axes[a], int(s), int(a), result.warnings));

        StageReport report;
        for (long long iter = 1; iter <= spec.max_iterations; ++iter) {
            for (const auto& view : views) {
                std::vector<double> achieved(view.targets.size(), 0.0);
                for (size_t i = 0; i < result.weights.size(); ++i)
                    achieved[size_t(view.item_cell[i])] += result.weights[i];
                for (size_t i = 0; i < result.weights.size(); ++i) {
                    const size_t c = size_t(view.item_cell[i]);
                    result.weights[i] *= view.targets[c] / achieved[c];
                }
            }
            report.iterations = iter;
            report.max_rel_error = 0.0;
            for (const auto& view : views)
                report.max_rel_error = std::max(report.max_rel_error,
                                                max_relative_error(result.weights, view));
            if (report.max_rel_error < spec.tolerance) {
                report.converged = true;
                break;
            }
        }
        if (!report.converged) result.converged = false;
        result.stages.push_back(report);
    }
    return result;
}

MarginalReport marginal_report(const std::vector<RakingItem>& items, const RakingSpec& spec)
{
    MarginalReport report;
    for (const auto& item : items) report.total_weight += item.weight;
    for (size_t s = 0; s < spec.stages.size(); ++s) {
        for (size_t a = 0; a < spec.stages[s].axes.size(); ++a) {
            const auto& axis = spec.stages[s].axes[a];
            std::map<std::string, double> achieved;
            for (const auto& item : items) achieved[cell_key(item, axis)] += item.weight;
            std::set<std::string> cells;
            for (const auto& [c, t] : axis.targets) cells.insert(c);
            for (const auto& [c, v] : achieved) cells.insert(c);
            for (const auto& cell : cells) {
                MarginalRow row;
                row.stage = int(s);
                row.axis = int(a);
                row.cell = cell;
                auto ia = achieved.find(cell);
                row.achieved = ia == achieved.end() ? 0.0 : ia->second;
                auto it = axis.targets.find(cell);
                row.target = it == axis.targets.end() ? 0.0 : it->second;
                row.rel_error = row.target > 0.0
                                    ? std::fabs(row.achieved - row.target) / row.target
                                    : (row.achieved > 0.0 ? std::numeric_limits<double>::infinity()
                                                          : 0.0);
                report.rows.push_back(std::move(row));
            }
        }
    }
    return report;
}

} // namespace availprop
