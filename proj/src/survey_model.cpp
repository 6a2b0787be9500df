#include "availprop/survey_model.hpp"

#include "availprop/mathutil.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <random>
#include <stdexcept>

namespace availprop {

namespace {

void check_unit_interval(double x, const char* name)
{
    if (!(x >= 0.0 && x <= 1.0))
        throw std::invalid_argument(std::string(name) + " must lie in [0,1]");
}

double uniform01(std::mt19937_64& eng)
{
    // 53-bit mantissa; identical across platforms for a given engine state.
    return double(eng() >> 11) * 0x1.0p-53;
}

} // namespace

double joint_probability(int a, int b, double kappa, double phi)
{
    if ((a != 0 && a != 1) || (b != 0 && b != 1))
        throw std::invalid_argument("joint_probability: a, b must be 0 or 1");
    check_unit_interval(kappa, "kappa");
    check_unit_interval(phi, "phi");
    const double pa_given_b1 = a == 1 ? kappa : 1.0 - kappa;
    return pa_given_b1 * phi * (b == 1 ? 1.0 : 0.0) +
           (a == 0 ? 1.0 : 0.0) * (1.0 - phi) * (b == 0 ? 1.0 : 0.0);
}

double count_pmf(long long y, long long s, double kappa, double phi)
{
    if (s < 0 || y < 0 || y > s)
        throw std::invalid_argument("count_pmf: require 0 <= y <= s");
    check_unit_interval(kappa, "kappa");
    check_unit_interval(phi, "phi");
    const double rate = kappa * phi;
    if (rate == 0.0) return y == 0 ? 1.0 : 0.0;
    if (rate == 1.0) return y == s ? 1.0 : 0.0;
    if (s <= 50) {
        double pmf = std::exp(math::log_binomial(double(s), double(y)));
        pmf *= std::pow(rate, double(y)) * std::pow(1.0 - rate, double(s - y));
        return pmf;
    }
    const double log_pmf = math::log_binomial(double(s), double(y)) +
                           double(y) * std::log(rate) + double(s - y) * std::log1p(-rate);
    return std::exp(log_pmf);
}

void ModelParams::validate() const
{
    if (cells.empty())
        throw std::invalid_argument("ModelParams: empty strata map");
    for (const auto& c : cells) {
        if (c.sample_size <= 0)
            throw std::invalid_argument("ModelParams: sample_size must be positive");
        if (c.weight <= 0.0)
            throw std::invalid_argument("ModelParams: weight must be positive");
        check_unit_interval(c.phi, "phi");
        for (const auto& [alpha, k] : c.kappa)
            check_unit_interval(k, "kappa");
    }
}

std::uint64_t cell_subseed(std::uint64_t seed, const std::string& location_id,
                           const Stratum& stratum)
{
    const std::uint64_t h = math::splitmix64(seed ^ math::fnv1a64(location_id));
    return math::splitmix64(h ^ math::fnv1a64(stratum.key()));
}

namespace {

// Fixed two-week diary window starting Monday 2019-01-07.
struct DiaryDate {
    int year, month, day;
};

DiaryDate diary_window_date(int offset)
{
    return DiaryDate{2019, 1, 7 + offset};
}

std::string format_date(const DiaryDate& d)
{
    char buf[11];
    std::snprintf(buf, sizeof buf, "%04d-%02d-%02d", d.year, d.month, d.day);
    return buf;
}

} // namespace

std::vector<Respondent> generate_survey(const ModelParams& params, std::uint64_t seed,
                                        const EmissionOptions& opts)
{
    params.validate();

    std::vector<const CellParams*> order;
    order.reserve(params.cells.size());
    for (const auto& c : params.cells) {
        for (const auto& [alpha, k] : c.kappa) {
            if (alpha.activity == "any" || alpha.activity == "social" || alpha.activity == "care")
                throw std::invalid_argument(
                    "generate_survey: kappa keys must be base activity codes, got " + alpha.activity);
        }
        order.push_back(&c);
    }
    std::sort(order.begin(), order.end(), [](const CellParams* a, const CellParams* b) {
        if (a->location_id != b->location_id) return a->location_id < b->location_id;
        return a->stratum < b->stratum;
    });

    std::vector<Respondent> out;
    for (const CellParams* cell : order) {
        std::mt19937_64 eng(cell_subseed(seed, cell->location_id, cell->stratum));
        for (long long i = 0; i < cell->sample_size; ++i) {
            Respondent r;
            r.id = cell->location_id + "-" + cell->stratum.key() + "-" + std::to_string(i);
            r.location_id = cell->location_id;
            r.stratum = cell->stratum;
            r.weight = cell->weight;

            const int b = uniform01(eng) < cell->phi ? 1 : 0;
            r.availability_bin = b ? 1 : 0; // smallest nonzero bin "1-5" vs "0"

            const DiaryDate date = diary_window_date(int(eng() % 14));
            r.diary_date = format_date(date);
            r.diary_day = day_type_from_date(date.year, date.month, date.day);

            for (const auto& [alpha, kappa] : cell->kappa) {
                // exact-day entry wins over the DayType::any entry for the same code
                if (alpha.day_type != DayType::any && alpha.day_type != r.diary_day) {
                    if (cell->kappa.count({alpha.activity, DayType::any}) == 0 &&
                        r.interactions.count(alpha.activity) == 0)
                        r.interactions[alpha.activity] = 0;
                    continue;
                }
                if (alpha.day_type == DayType::any &&
                    cell->kappa.count({alpha.activity, r.diary_day}) > 0)
                    continue;
                const int a = (b == 1 && uniform01(eng) < kappa) ? 1 : 0;
                r.interactions[alpha.activity] = a;
                if (a == 1) {
                    const double span = opts.duration_max_hours - opts.duration_min_hours;
                    r.durations[alpha.activity] = opts.duration_min_hours + span * uniform01(eng);
                }
            }
            r.nonfamily_interaction = uniform01(eng) < opts.nonfamily_rate ? 1 : 0;
            r.calls = 1 + (long long)(eng() % (std::uint64_t)opts.max_calls);
            out.push_back(std::move(r));
        }
    }
    return out;
}

} // namespace availprop
