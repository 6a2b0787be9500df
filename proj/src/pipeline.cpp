#include "availprop/pipeline.hpp"

#include "availprop/csv.hpp"
#include "availprop/mathutil.hpp"
#include "availprop/modal_kde.hpp"
#include "availprop/smoothing_spline.hpp"
#include "availprop/wls.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <set>
#include <sstream>

namespace fs = std::filesystem;
using nlohmann::json;

namespace availprop {

std::string to_string(Stage s)
{
    switch (s) {
        case Stage::calibrate: return "calibrate";
        case Stage::estimate: return "estimate";
        case Stage::trend: return "trend";
        case Stage::diagnose: return "diagnose";
        case Stage::rank: return "rank";
    }
    throw std::logic_error("unreachable stage");
}

// ---------------------------------------------------------------------------
// configuration

namespace {

// Canonical form covers everything that changes results; output_dir and
// force do not, so runs into different directories share a hash.
json config_to_json(const PipelineConfig& c)
{
    json j;
    j["atus_csv"] = c.atus_csv;
    j["psts_csv"] = c.psts_csv;
    j["units_csv"] = c.units_csv;
    j["crosswalk_csv"] = c.crosswalk_csv;
    j["population_csv"] = c.population_csv;
    j["raking_spec"] = c.raking_spec;
    j["k_values"] = c.k_values;
    j["alphas"] = c.alpha_labels;
    j["social_codes"] = c.social_codes;
    j["care_codes"] = c.care_codes;
    j["filter_small_cities"] = c.filter_small_cities;
    j["min_respondents_atus"] = c.min_respondents_atus;
    j["min_respondents_psts"] = c.min_respondents_psts;
    j["bandwidth"] = c.bandwidth;
    j["n_u"] = c.n_u;
    j["n_v"] = c.n_v;
    j["nb_tail_cap"] = c.nb_tail_cap;
    j["psi_bins"] = c.psi_bins;
    j["grid_export_max_dim"] = c.grid_export_max_dim;
    j["durations_in_minutes"] = c.durations_in_minutes;
    j["seed"] = c.seed;
    return j;
}

template <typename T>
void read_field(const json& j, const char* key, T& out)
{
    if (j.contains(key)) out = j.at(key).get<T>();
}

} // namespace

PipelineConfig PipelineConfig::from_json_file(const std::string& path)
{
    std::ifstream in(path);
    if (!in)
        throw ValidationError("cannot open config file " + path);
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw ValidationError("config " + path + ": " + e.what());
    }
    PipelineConfig c;
    read_field(j, "atus_csv", c.atus_csv);
    read_field(j, "psts_csv", c.psts_csv);
    read_field(j, "units_csv", c.units_csv);
    read_field(j, "crosswalk_csv", c.crosswalk_csv);
    read_field(j, "population_csv", c.population_csv);
    read_field(j, "raking_spec", c.raking_spec);
    read_field(j, "k_values", c.k_values);
    read_field(j, "alphas", c.alpha_labels);
    read_field(j, "social_codes", c.social_codes);
    read_field(j, "care_codes", c.care_codes);
    read_field(j, "filter_small_cities", c.filter_small_cities);
    read_field(j, "min_respondents_atus", c.min_respondents_atus);
    read_field(j, "min_respondents_psts", c.min_respondents_psts);
    read_field(j, "bandwidth", c.bandwidth);
    read_field(j, "n_u", c.n_u);
    read_field(j, "n_v", c.n_v);
    read_field(j, "nb_tail_cap", c.nb_tail_cap);
    read_field(j, "psi_bins", c.psi_bins);
    read_field(j, "grid_export_max_dim", c.grid_export_max_dim);
    read_field(j, "durations_in_minutes", c.durations_in_minutes);
    read_field(j, "seed", c.seed);
    read_field(j, "output_dir", c.output_dir);
    for (int k : c.k_values)
        if (k < 1) throw ValidationError("config: k values must be >= 1");
    if (c.min_respondents_atus < 0 || c.min_respondents_psts < 0)
        throw ValidationError("config: thresholds must be nonnegative");
    return c;
}

std::string PipelineConfig::canonical_json() const
{
    return config_to_json(*this).dump(2);
}

std::string PipelineConfig::config_hash() const
{
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx",
                  (unsigned long long)math::fnv1a64(canonical_json()));
    return buf;
}

AlphaRegistry PipelineConfig::make_registry() const
{
    return AlphaRegistry(std::set<std::string>(social_codes.begin(), social_codes.end()),
                         std::set<std::string>(care_codes.begin(), care_codes.end()));
}

std::vector<ActivityDay> PipelineConfig::alphas() const
{
    std::vector<ActivityDay> out;
    for (const auto& label : alpha_labels) out.push_back(alpha_from_label(label));
    return out;
}

// ---------------------------------------------------------------------------
// ingestion

namespace {

std::map<std::string, std::string> read_crosswalk(const std::string& path)
{
    std::map<std::string, std::string> fips_to_cbsa;
    if (path.empty()) return fips_to_cbsa;
    const CsvTable t = read_csv(path);
    const int cf = t.column("fips"), cc = t.column("cbsa");
    if (cf < 0 || cc < 0)
        throw ValidationError(path + ": crosswalk needs columns fips,cbsa");
    for (const auto& row : t.rows) fips_to_cbsa[row[size_t(cf)]] = row[size_t(cc)];
    return fips_to_cbsa;
}

std::map<std::string, Location> read_population(const std::string& path)
{
    const CsvTable t = read_csv(path);
    const int cc = t.column("cbsa"), cp = t.column("population");
    const int cn = t.column("name");
    if (cc < 0 || cp < 0)
        throw ValidationError(path + ": population table needs columns cbsa,population");
    std::map<std::string, Location> out;
    for (const auto& row : t.rows) {
        Location loc;
        loc.id = row[size_t(cc)];
        loc.name = cn >= 0 ? row[size_t(cn)] : "";
        try {
            loc.population = std::stoll(row[size_t(cp)]);
        } catch (...) {
            throw ValidationError(path + ": bad population for cbsa " + loc.id);
        }
        if (loc.population < 1)
            throw ValidationError(path + ": population must be >= 1 for cbsa " + loc.id);
        out[loc.id] = loc;
    }
    return out;
}

struct RowError {
    std::string reason;
};

// Resolves a row's CBSA through the direct column or the fips crosswalk.
std::string resolve_cbsa(const std::vector<std::string>& row, int col_cbsa, int col_fips,
                         const std::map<std::string, std::string>& crosswalk)
{
    if (col_cbsa >= 0 && !row[size_t(col_cbsa)].empty()) return row[size_t(col_cbsa)];
    if (col_fips >= 0) {
        const std::string& fips = row[size_t(col_fips)];
        if (fips.empty()) throw RowError{"missing fips"};
        auto it = crosswalk.find(fips);
        if (it == crosswalk.end()) throw RowError{"unmapped fips " + fips};
        if (it->second.empty()) throw RowError{"unidentified cbsa for fips " + fips};
        return it->second;
    }
    throw RowError{"missing cbsa"};
}

double parse_double(const std::string& s, const char* what)
{
    try {
        size_t pos = 0;
        const double v = std::stod(s, &pos);
        if (pos != s.size()) throw std::invalid_argument(s);
        return v;
    } catch (...) {
        throw RowError{std::string("bad ") + what + " '" + s + "'"};
    }
}

long long parse_int(const std::string& s, const char* what)
{
    try {
        size_t pos = 0;
        const long long v = std::stoll(s, &pos);
        if (pos != s.size()) throw std::invalid_argument(s);
        return v;
    } catch (...) {
        throw RowError{std::string("bad ") + what + " '" + s + "'"};
    }
}

DayType parse_diary_date(const std::string& s)
{
    if (s.size() != 10 || s[4] != '-' || s[7] != '-')
        throw RowError{"bad diary_date '" + s + "'"};
    try {
        const int y = std::stoi(s.substr(0, 4));
        const int m = std::stoi(s.substr(5, 2));
        const int d = std::stoi(s.substr(8, 2));
        return day_type_from_date(y, m, d);
    } catch (const RowError&) {
        throw;
    } catch (...) {
        throw RowError{"bad diary_date '" + s + "'"};
    }
}

struct RespondentColumns {
    int id = -1, cbsa = -1, fips = -1, weight = -1, diary_date = -1, calls = -1;
    int avail_bin = -1, a_nonfam = -1, tags = -1;
    std::vector<std::pair<std::string, int>> stratum; // name (without c_) -> column
    std::vector<std::pair<std::string, int>> a_cols;  // code -> column
    std::vector<std::pair<std::string, int>> t_cols;
};

RespondentColumns map_respondent_columns(const CsvTable& t, const std::string& path)
{
    RespondentColumns c;
    c.id = t.column("id");
    c.cbsa = t.column("cbsa");
    c.fips = t.column("fips");
    c.weight = t.column("weight");
    c.diary_date = t.column("diary_date");
    c.calls = t.column("calls");
    c.avail_bin = t.column("avail_bin");
    c.a_nonfam = t.column("a_nonfam");
    c.tags = t.column("tags");
    for (size_t i = 0; i < t.header.size(); ++i) {
        const std::string& h = t.header[i];
        if (h.rfind("c_", 0) == 0)
            c.stratum.emplace_back(h.substr(2), int(i));
        else if (h.size() == 3 && h[0] == 'a' && std::isdigit((unsigned char)h[1]) &&
                 std::isdigit((unsigned char)h[2]))
            c.a_cols.emplace_back(h.substr(1), int(i));
        else if (h.size() == 3 && h[0] == 't' && std::isdigit((unsigned char)h[1]) &&
                 std::isdigit((unsigned char)h[2]))
            c.t_cols.emplace_back(h.substr(1), int(i));
    }
    if (c.id < 0 || c.weight < 0)
        throw ValidationError(path + ": respondent file needs columns id,weight");
    if (c.cbsa < 0 && c.fips < 0)
        throw ValidationError(path + ": respondent file needs a cbsa or fips column");
    return c;
}

std::vector<std::string> split_tags(const std::string& s)
{
    std::vector<std::string> out;
    std::string cur;
    for (char ch : s) {
        if (ch == ';') {
            if (!cur.empty()) out.push_back(cur);
            cur.clear();
        } else {
            cur += ch;
        }
    }
    if (!cur.empty()) out.push_back(cur);
    return out;
}

void ingest_respondents(const std::string& path, const std::string& label, bool is_atus,
                        const std::map<std::string, std::string>& crosswalk,
                        const std::map<std::string, Location>& population,
                        const PipelineConfig& config, Dataset& data)
{
    const CsvTable t = read_csv(path);
    const RespondentColumns cols = map_respondent_columns(t, path);

    if (is_atus) {
        data.atus_schema.names.clear();
        data.atus_schema.categories.clear();
        for (const auto& [name, col] : cols.stratum) {
            data.atus_schema.names.push_back(name);
            data.atus_schema.categories.emplace_back();
        }
    }

    long long accepted = 0;
    for (size_t r = 0; r < t.rows.size(); ++r) {
        const auto& row = t.rows[r];
        const size_t lineno = r + 2; // header is line 1
        try {
            if (row.size() != t.header.size()) throw RowError{"wrong field count"};
            Respondent resp;
            resp.id = row[size_t(cols.id)];
            if (resp.id.empty()) throw RowError{"missing id"};
            const std::string cbsa = resolve_cbsa(row, cols.cbsa, cols.fips, crosswalk);
            auto pit = population.find(cbsa);
            if (pit == population.end())
                throw RowError{"cbsa " + cbsa + " missing from population table"};
            resp.location_id = cbsa;
            resp.weight = parse_double(row[size_t(cols.weight)], "weight");
            if (resp.weight < 0.0) throw RowError{"negative weight"};

            if (cols.diary_date >= 0 && !row[size_t(cols.diary_date)].empty()) {
                resp.diary_date = row[size_t(cols.diary_date)];
                resp.diary_day = parse_diary_date(*resp.diary_date);
            } else if (!cols.a_cols.empty()) {
                throw RowError{"missing diary_date"};
            }
            if (cols.calls >= 0 && !row[size_t(cols.calls)].empty()) {
                const long long e = parse_int(row[size_t(cols.calls)], "calls");
                if (e < 0) throw RowError{"negative calls"};
                resp.calls = e;
            }
            if (cols.avail_bin >= 0 && !row[size_t(cols.avail_bin)].empty()) {
                try {
                    resp.availability_bin = availability_bin_from_string(row[size_t(cols.avail_bin)]);
                } catch (const std::exception& e) {
                    throw RowError{e.what()};
                }
            }
            if (cols.a_nonfam >= 0 && !row[size_t(cols.a_nonfam)].empty()) {
                const long long v = parse_int(row[size_t(cols.a_nonfam)], "a_nonfam");
                if (v != 0 && v != 1) throw RowError{"a_nonfam must be 0 or 1"};
                resp.nonfamily_interaction = int(v);
            }
            if (cols.tags >= 0) resp.tags = split_tags(row[size_t(cols.tags)]);

            for (const auto& [name, col] : cols.stratum)
                resp.stratum.values.push_back(row[size_t(col)]);

            for (const auto& [code, col] : cols.a_cols) {
                const std::string& s = row[size_t(col)];
                if (s.empty()) continue;
                const long long v = parse_int(s, "interaction flag");
                if (v != 0 && v != 1) throw RowError{"interaction flag must be 0 or 1"};
                resp.interactions[code] = int(v);
            }
            for (const auto& [code, col] : cols.t_cols) {
                const std::string& s = row[size_t(col)];
                if (s.empty()) continue;
                double hours = parse_double(s, "duration");
                if (config.durations_in_minutes) hours /= 60.0;
                if (hours != 0.0) resp.durations[code] = hours;
            }
            try {
                resp.validate();
            } catch (const std::exception& e) {
                throw RowError{e.what()};
            }

            auto& city = data.cities[cbsa];
            city.location = pit->second;
            if (is_atus) {
                for (size_t d = 0; d < cols.stratum.size(); ++d) {
                    auto& cats = data.atus_schema.categories[d];
                    const std::string& val = resp.stratum.values[d];
                    if (std::find(cats.begin(), cats.end(), val) == cats.end())
                        cats.push_back(val);
                }
                city.atus.push_back(std::move(resp));
            } else {
                city.psts.push_back(std::move(resp));
            }
            ++accepted;
        } catch (const RowError& e) {
            data.report.rejects.push_back({label, lineno, e.reason});
        }
    }
    if (is_atus) {
        data.report.atus_total = (long long)t.rows.size();
        data.report.atus_accepted = accepted;
        for (auto& cats : data.atus_schema.categories) std::sort(cats.begin(), cats.end());
    } else {
        data.report.psts_total = (long long)t.rows.size();
        data.report.psts_accepted = accepted;
    }
}

void ingest_units(const std::string& path, const std::map<std::string, std::string>& crosswalk,
                  const std::map<std::string, Location>& population, Dataset& data)
{
    const CsvTable t = read_csv(path);
    const int cc = t.column("cbsa"), cf = t.column("fips");
    const int cchar = t.column("characteristic"), cresp = t.column("responded");
    if (cchar < 0 || cresp < 0)
        throw ValidationError(path + ": units file needs columns characteristic,responded");
    if (cc < 0 && cf < 0)
        throw ValidationError(path + ": units file needs a cbsa or fips column");
    long long accepted = 0;
    for (size_t r = 0; r < t.rows.size(); ++r) {
        const auto& row = t.rows[r];
        try {
            if (row.size() != t.header.size()) throw RowError{"wrong field count"};
            const std::string cbsa = resolve_cbsa(row, cc, cf, crosswalk);
            auto pit = population.find(cbsa);
            if (pit == population.end())
                throw RowError{"cbsa " + cbsa + " missing from population table"};
            const long long responded = parse_int(row[size_t(cresp)], "responded");
            if (responded != 0 && responded != 1) throw RowError{"responded must be 0 or 1"};
            SamplingUnit unit{cbsa, row[size_t(cchar)], int(responded)};
            if (unit.characteristic.empty()) throw RowError{"missing characteristic"};
            auto& city = data.cities[cbsa];
            city.location = pit->second;
            city.units.push_back(std::move(unit));
            ++accepted;
        } catch (const RowError& e) {
            data.report.rejects.push_back({"units", r + 2, e.reason});
        }
    }
    data.report.units_total = (long long)t.rows.size();
    data.report.units_accepted = accepted;
}

} // namespace

Dataset ingest(const PipelineConfig& config)
{
    if (config.atus_csv.empty() || config.psts_csv.empty() || config.population_csv.empty())
        throw ValidationError("config: atus_csv, psts_csv and population_csv are required");
    Dataset data;
    const auto crosswalk = read_crosswalk(config.crosswalk_csv);
    const auto population = read_population(config.population_csv);
    ingest_respondents(config.atus_csv, "atus", true, crosswalk, population, config, data);
    ingest_respondents(config.psts_csv, "psts", false, crosswalk, population, config, data);
    if (!config.units_csv.empty())
        ingest_units(config.units_csv, crosswalk, population, data);
    return data;
}

// ---------------------------------------------------------------------------
// estimates

const Series* EstimateSet::find(const std::string& metric, const std::string& alpha_label,
                                int k) const
{
    for (const auto& s : series)
        if (s.metric == metric && s.alpha_label == alpha_label && s.k == k) return &s;
    return nullptr;
}

EstimateSet compute_estimates(const Dataset& data, const PipelineConfig& config)
{
    const AlphaRegistry registry = config.make_registry();
    EstimateSet est;

    for (const auto& [cbsa, city] : data.cities) {
        if (city.atus.empty() || city.psts.empty()) continue;
        if (config.filter_small_cities &&
            ((long long)city.atus.size() < config.min_respondents_atus ||
             (long long)city.psts.size() < config.min_respondents_psts))
            continue;
        est.cities.push_back(cbsa);
    }
    if (est.cities.empty())
        throw ValidationError("estimate: no city present in both surveys after filtering");

    // Pooled weighted bin proportions drive one national availability fit.
    std::vector<double> bin_weights(kAvailabilityBinCount, 0.0);
    double bin_total = 0.0;
    for (const auto& cbsa : est.cities) {
        for (const auto& r : data.cities.at(cbsa).psts) {
            if (!r.availability_bin)
                throw ValidationError("estimate: psts respondent " + r.id +
                                      " carries no avail_bin");
            bin_weights[size_t(*r.availability_bin)] += r.weight;
            bin_total += r.weight;
        }
    }
    if (bin_total <= 0.0)
        throw ValidationError("estimate: zero total psts weight");
    for (double& b : bin_weights) b /= bin_total;
    est.availability_fit = fit_binned_nb(bin_weights, config.nb_tail_cap);

    const size_t n_city = est.cities.size();
    std::vector<double> p(n_city), s_atus(n_city), s_psts(n_city);
    for (size_t i = 0; i < n_city; ++i) {
        const CityData& city = data.cities.at(est.cities[i]);
        p[i] = city.location.log_population();
        s_atus[i] = double(city.atus.size());
        s_psts[i] = double(city.psts.size());
    }
    const std::vector<double> w_atus = sample_size_weights(s_atus);
    const std::vector<double> w_psts = sample_size_weights(s_psts);

    // phi(g,k)
    std::map<int, std::vector<double>> phi_by_k;
    for (int k : config.k_values) {
        Series s;
        s.metric = "phi";
        s.k = k;
        for (size_t i = 0; i < n_city; ++i) {
            const CityData& city = data.cities.at(est.cities[i]);
            s.cities.push_back(est.cities[i]);
            s.u.push_back(p[i]);
            s.v.push_back(availability_rate(city.psts, k, est.availability_fit));
            s.w.push_back(w_psts[i]);
            s.n.push_back((long long)city.psts.size());
            s.sum_a += (long long)city.psts.size();
        }
        phi_by_k[k] = s.v;
        est.series.push_back(std::move(s));
    }

    // f(g,alpha), lambda(g,alpha,k), t(g,alpha)
    for (const ActivityDay& alpha : config.alphas()) {
        Series f_series;
        f_series.metric = "f";
        f_series.alpha_label = alpha.label();
        std::vector<long long> interactors(n_city, 0);
        for (size_t i = 0; i < n_city; ++i) {
            const CityData& city = data.cities.at(est.cities[i]);
            long long count = 0;
            for (const auto& r : city.atus) count += r.interacts(alpha, registry);
            interactors[i] = count;
            f_series.cities.push_back(est.cities[i]);
            f_series.u.push_back(p[i]);
            f_series.v.push_back(interaction_rate(city.atus, alpha, registry));
            f_series.w.push_back(w_atus[i]);
            f_series.n.push_back((long long)city.atus.size());
            f_series.sum_a += count;
        }

        for (int k : config.k_values) {
            Series l;
            l.metric = "lambda";
            l.alpha_label = alpha.label();
            l.k = k;
            l.sum_a = f_series.sum_a;
            const auto& phis = phi_by_k.at(k);
            for (size_t i = 0; i < n_city; ++i) {
                if (!(phis[i] > 0.0)) {
                    est.notes.push_back("lambda " + alpha.label() + " k=" + std::to_string(k) +
                                        ": city " + est.cities[i] + " excluded (phi = 0)");
                    continue;
                }
                l.cities.push_back(est.cities[i]);
                l.u.push_back(p[i]);
                l.v.push_back(effective_propensity(f_series.v[i], phis[i]));
                l.w.push_back(lambda_variance_weight(f_series.v[i], phis[i], 1.0 / s_atus[i],
                                                     1.0 / s_psts[i]));
                l.n.push_back((long long)(s_atus[i] + s_psts[i]));
            }
            est.series.push_back(std::move(l));
        }

        Series t_series;
        t_series.metric = "t";
        t_series.alpha_label = alpha.label();
        for (size_t i = 0; i < n_city; ++i) {
            if (interactors[i] == 0) {
                est.notes.push_back("t " + alpha.label() + ": city " + est.cities[i] +
                                    " excluded (no interactors)");
                continue;
            }
            const CityData& city = data.cities.at(est.cities[i]);
            t_series.cities.push_back(est.cities[i]);
            t_series.u.push_back(p[i]);
            t_series.v.push_back(duration(city.atus, alpha, registry));
            t_series.w.push_back(w_atus[i]);
            t_series.n.push_back(interactors[i]);
            t_series.sum_a += interactors[i];
        }
        est.series.push_back(std::move(f_series));
        est.series.push_back(std::move(t_series));
    }

    // r(g, alpha_o) when the non-family channel is present
    bool have_nonfam = true;
    for (const auto& cbsa : est.cities)
        for (const auto& r : data.cities.at(cbsa).atus)
            if (!r.nonfamily_interaction) {
                have_nonfam = false;
                break;
            }
    if (have_nonfam) {
        Series rs;
        rs.metric = "r";
        rs.alpha_label = alpha_any().label();
        for (size_t i = 0; i < n_city; ++i) {
            const CityData& city = data.cities.at(est.cities[i]);
            double ratio;
            try {
                ratio = family_nonfamily_ratio(city.atus, alpha_any(), registry);
            } catch (const std::domain_error&) {
                est.notes.push_back("r: city " + est.cities[i] +
                                    " excluded (zero non-family rate)");
                continue;
            }
            rs.cities.push_back(est.cities[i]);
            rs.u.push_back(p[i]);
            rs.v.push_back(ratio);
            rs.w.push_back(w_atus[i]);
            rs.n.push_back((long long)city.atus.size());
        }
        est.series.push_back(std::move(rs));
    } else {
        est.notes.push_back("r: skipped, non-family flags absent");
    }
    return est;
}

// ---------------------------------------------------------------------------
// raking adapter

namespace {

struct LoadedRakingSpec {
    RakingSpec shape;   // dims/tolerance/max_iterations; targets filled per scope
    bool per_location = false;
    // stage -> axis -> (location ("" when global) -> cell targets)
    std::vector<std::vector<std::map<std::string, std::map<std::string, double>>>> targets;
};

LoadedRakingSpec load_raking_spec(const std::string& path)
{
    std::ifstream in(path);
    if (!in)
        throw ValidationError("cannot open raking spec " + path);
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw ValidationError("raking spec " + path + ": " + e.what());
    }
    LoadedRakingSpec loaded;
    loaded.shape.tolerance = j.value("tolerance", 1e-6);
    loaded.shape.max_iterations = j.value("max_iterations", (long long)1000);
    loaded.per_location = j.value("scope", std::string("global")) == "per_location";
    if (!j.contains("stages"))
        throw ValidationError("raking spec: missing stages");
    for (const auto& jstage : j.at("stages")) {
        RakingStage stage;
        std::vector<std::map<std::string, std::map<std::string, double>>> stage_targets;
        for (const auto& jaxis : jstage.at("axes")) {
            RakingAxis axis;
            axis.dims = jaxis.at("dims").get<std::vector<std::string>>();
            std::map<std::string, std::map<std::string, double>> axis_targets;
            const auto& jt = jaxis.at("targets");
            if (loaded.per_location) {
                for (auto it = jt.begin(); it != jt.end(); ++it)
                    axis_targets[it.key()] =
                        it.value().get<std::map<std::string, double>>();
            } else {
                axis_targets[""] = jt.get<std::map<std::string, double>>();
            }
            stage_targets.push_back(std::move(axis_targets));
            stage.axes.push_back(std::move(axis));
        }
        loaded.shape.stages.push_back(std::move(stage));
        loaded.targets.push_back(std::move(stage_targets));
    }
    return loaded;
}

RakingItem respondent_item(const Respondent& r, const StratumSchema& schema)
{
    RakingItem item;
    item.weight = r.weight;
    for (size_t d = 0; d < schema.names.size(); ++d)
        item.categories[schema.names[d]] = r.stratum.values[d];
    item.categories["day"] = to_string(r.diary_day);
    return item;
}

RakingSpec spec_for_scope(const LoadedRakingSpec& loaded, const std::string& location)
{
    RakingSpec spec = loaded.shape;
    for (size_t s = 0; s < spec.stages.size(); ++s)
        for (size_t a = 0; a < spec.stages[s].axes.size(); ++a) {
            const auto& per_loc = loaded.targets[s][a];
            auto it = per_loc.find(loaded.per_location ? location : std::string());
            if (it == per_loc.end())
                throw ValidationError("raking spec: no targets for location " + location);
            spec.stages[s].axes[a].targets = it->second;
        }
    return spec;
}

struct CalibrationOutcome {
    bool converged = true;
    std::vector<std::string> warnings;
    std::vector<std::pair<std::string, RakingSpec>> applied; // location -> resolved spec
};

CalibrationOutcome apply_raking(Dataset& data, const LoadedRakingSpec& loaded)
{
    CalibrationOutcome outcome;
    if (loaded.per_location) {
        for (auto& [cbsa, city] : data.cities) {
            if (city.atus.empty()) continue;
            const RakingSpec spec = spec_for_scope(loaded, cbsa);
            std::vector<RakingItem> items;
            items.reserve(city.atus.size());
            for (const auto& r : city.atus) items.push_back(respondent_item(r, data.atus_schema));
            const RakingResult res = rake(items, spec);
            for (size_t i = 0; i < city.atus.size(); ++i) city.atus[i].weight = res.weights[i];
            outcome.converged = outcome.converged && res.converged;
            for (const auto& w : res.warnings) outcome.warnings.push_back(cbsa + ": " + w);
            outcome.applied.emplace_back(cbsa, spec);
        }
    } else {
        const RakingSpec spec = spec_for_scope(loaded, "");
        std::vector<RakingItem> items;
        std::vector<std::pair<std::string, size_t>> origin; // city, index
        for (auto& [cbsa, city] : data.cities)
            for (size_t i = 0; i < city.atus.size(); ++i) {
                items.push_back(respondent_item(city.atus[i], data.atus_schema));
                origin.emplace_back(cbsa, i);
            }
        if (items.empty())
            throw ValidationError("calibrate: no atus respondents to rake");
        const RakingResult res = rake(items, spec);
        for (size_t n = 0; n < origin.size(); ++n)
            data.cities.at(origin[n].first).atus[origin[n].second].weight = res.weights[n];
        outcome.converged = res.converged;
        outcome.warnings = res.warnings;
        outcome.applied.emplace_back("", spec);
    }
    return outcome;
}

} // namespace

// ---------------------------------------------------------------------------
// stage writers

namespace {

// Tracks files created by this run so a failed stage can clean up.
class OutputTracker {
public:
    OutputTracker(const fs::path& dir) : dir_(dir) {}

    std::string path(const std::string& rel)
    {
        created_.push_back(rel);
        return (dir_ / rel).string();
    }

    const std::vector<std::string>& created() const { return created_; }

    void remove_all()
    {
        for (const auto& rel : created_) {
            std::error_code ec;
            fs::remove(dir_ / rel, ec);
        }
    }

private:
    fs::path dir_;
    std::vector<std::string> created_;
};

std::string file_hash_hex(const fs::path& p)
{
    std::ifstream in(p, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", (unsigned long long)math::fnv1a64(ss.str()));
    return buf;
}

void write_json_file(const std::string& path, const json& j)
{
    std::ofstream out(path, std::ios::binary);
    if (!out)
        throw std::runtime_error("cannot write " + path);
    out << j.dump(2) << '\n';
}

std::vector<std::string> respondent_header(const StratumSchema& schema,
                                           const AlphaRegistry& registry, bool diary,
                                           bool availability)
{
    std::vector<std::string> h{"id", "cbsa", "weight"};
    if (diary) {
        h.push_back("diary_date");
        h.push_back("calls");
        h.push_back("a_nonfam");
        h.push_back("tags");
    }
    if (availability) h.push_back("avail_bin");
    for (const auto& name : schema.names) h.push_back("c_" + name);
    if (diary) {
        for (const auto& code : registry.base_codes()) h.push_back("a" + code);
        for (const auto& code : registry.base_codes()) h.push_back("t" + code);
    }
    return h;
}

std::vector<std::string> respondent_row(const Respondent& r, const StratumSchema& schema,
                                        const AlphaRegistry& registry, bool diary,
                                        bool availability)
{
    std::vector<std::string> row{r.id, r.location_id, format_double(r.weight)};
    if (diary) {
        row.push_back(r.diary_date.value_or(""));
        row.push_back(r.calls ? std::to_string(*r.calls) : "");
        row.push_back(r.nonfamily_interaction ? std::to_string(*r.nonfamily_interaction) : "");
        std::string tags;
        for (size_t i = 0; i < r.tags.size(); ++i) {
            if (i) tags += ';';
            tags += r.tags[i];
        }
        row.push_back(tags);
    }
    if (availability)
        row.push_back(r.availability_bin ? availability_bin_to_string(*r.availability_bin) : "");
    for (size_t d = 0; d < schema.names.size(); ++d)
        row.push_back(d < r.stratum.values.size() ? r.stratum.values[d] : "");
    if (diary) {
        for (const auto& code : registry.base_codes()) {
            auto it = r.interactions.find(code);
            row.push_back(it == r.interactions.end() ? "0" : std::to_string(it->second));
        }
        for (const auto& code : registry.base_codes()) {
            auto it = r.durations.find(code);
            row.push_back(it == r.durations.end() ? "0" : format_double(it->second));
        }
    }
    return row;
}

void write_ingest_outputs(const Dataset& data, const PipelineConfig& config, OutputTracker& out)
{
    const std::string hash = config.config_hash();
    std::vector<std::vector<std::string>> rows;
    for (const auto& rej : data.report.rejects)
        rows.push_back({rej.file, std::to_string(rej.line), rej.reason, hash});
    write_csv(out.path("ingest_rejects.csv"), {"file", "line", "reason", "config_hash"}, rows);

    json j;
    j["config_hash"] = hash;
    j["atus"] = {{"total", data.report.atus_total},
                 {"accepted", data.report.atus_accepted},
                 {"rejected", data.report.atus_total - data.report.atus_accepted}};
    j["psts"] = {{"total", data.report.psts_total},
                 {"accepted", data.report.psts_accepted},
                 {"rejected", data.report.psts_total - data.report.psts_accepted}};
    j["units"] = {{"total", data.report.units_total},
                  {"accepted", data.report.units_accepted},
                  {"rejected", data.report.units_total - data.report.units_accepted}};
    write_json_file(out.path("ingest_summary.json"), j);
}

void write_calibrate_outputs(const Dataset& data, const CalibrationOutcome& outcome,
                             const PipelineConfig& config, const AlphaRegistry& registry,
                             OutputTracker& out)
{
    const std::string hash = config.config_hash();
    std::vector<std::vector<std::string>> rows;
    for (const auto& [cbsa, city] : data.cities)
        for (const auto& r : city.atus)
            rows.push_back(respondent_row(r, data.atus_schema, registry, true, false));
    write_csv(out.path("atus_calibrated.csv"),
              respondent_header(data.atus_schema, registry, true, false), rows);

    std::vector<std::vector<std::string>> report_rows;
    for (const auto& [location, spec] : outcome.applied) {
        std::vector<RakingItem> items;
        for (const auto& [cbsa, city] : data.cities) {
            if (!location.empty() && cbsa != location) continue;
            for (const auto& r : city.atus) items.push_back(respondent_item(r, data.atus_schema));
        }
        const MarginalReport report = marginal_report(items, spec);
        for (const auto& row : report.rows)
            report_rows.push_back({location, std::to_string(row.stage), std::to_string(row.axis),
                                   row.cell, format_double(row.achieved),
                                   format_double(row.target), format_double(row.rel_error), hash});
        report_rows.push_back({location, "", "", "TOTAL", format_double(report.total_weight), "",
                               "", hash});
    }
    write_csv(out.path("raking_report.csv"),
              {"location", "stage", "axis", "cell", "achieved", "target", "rel_error",
               "config_hash"},
              report_rows);

    json j;
    j["config_hash"] = hash;
    j["converged"] = outcome.converged;
    j["warnings"] = outcome.warnings;
    write_json_file(out.path("raking_summary.json"), j);
}

void write_estimate_outputs(const EstimateSet& est, const PipelineConfig& config,
                            OutputTracker& out)
{
    const std::string hash = config.config_hash();
    std::vector<std::vector<std::string>> rows;
    for (const auto& s : est.series) {
        for (size_t i = 0; i < s.cities.size(); ++i) {
            const bool flagged = s.metric == "lambda" && s.v[i] > 1.0;
            rows.push_back({s.metric, s.cities[i], s.alpha_label,
                            s.k > 0 ? std::to_string(s.k) : "", format_double(s.v[i]),
                            std::to_string(s.n[i]), format_double(s.w[i]),
                            format_double(s.u[i]), flagged ? "1" : "0", hash});
        }
    }
    write_csv(out.path("estimates.csv"),
              {"metric", "location_id", "alpha", "k", "value", "n", "weight", "p", "flagged",
               "config_hash"},
              rows);

    // national propensity averages, weighted by city sample size
    std::vector<std::vector<std::string>> nat;
    for (const auto& s : est.series) {
        if (s.metric != "lambda" || s.v.empty()) continue;
        std::vector<double> sizes;
        const Series* f = est.find("f", s.alpha_label, 0);
        for (const auto& cbsa : s.cities) {
            for (size_t i = 0; i < f->cities.size(); ++i)
                if (f->cities[i] == cbsa) {
                    sizes.push_back(f->w[i]); // proportional to s_ATUS(g)
                    break;
                }
        }
        nat.push_back({s.alpha_label, std::to_string(s.k),
                       format_double(national_average_propensity(s.v, sizes)), hash});
    }
    write_csv(out.path("lambda_national.csv"), {"alpha", "k", "value", "config_hash"}, nat);

    json j;
    j["config_hash"] = hash;
    j["parameterization"] = "pmf(x) = Gamma(x+r)/(Gamma(r) x!) q^r (1-q)^x over {0,1,2,...}";
    j["r"] = est.availability_fit.nb.r;
    j["q"] = est.availability_fit.nb.q;
    j["objective"] = est.availability_fit.objective;
    j["tail_cap"] = est.availability_fit.tail_cap;
    j["bin_proportions"] = est.availability_fit.bin_proportions;
    json masses = json::array();
    for (int b = 0; b < int(est.availability_fit.bins.size()); ++b)
        masses.push_back(est.availability_fit.bin_mass(b));
    j["fitted_bin_masses"] = masses;
    write_json_file(out.path("availability_fit.json"), j);

    std::vector<std::vector<std::string>> notes;
    for (const auto& n : est.notes) notes.push_back({n, hash});
    write_csv(out.path("estimate_notes.csv"), {"note", "config_hash"}, notes);
}

struct GridArtifacts {
    std::vector<std::vector<std::string>> metadata_rows;
    std::map<std::string, std::map<std::string, ModalCurve>> curves_by_group; // group -> alpha -> curve
};

void write_trend_outputs(const EstimateSet& est, const PipelineConfig& config,
                         OutputTracker& out)
{
    const std::string hash = config.config_hash();

    std::vector<std::vector<std::string>> wls_rows;
    std::vector<std::vector<std::string>> spline_rows;
    std::vector<std::vector<std::string>> grid_rows;
    std::vector<std::vector<std::string>> curve_rows;
    std::vector<std::vector<std::string>> collapse_rows;
    json grid_meta = json::array();

    std::map<std::string, std::map<std::string, ModalCurve>> collapse_groups;

    for (const auto& s : est.series) {
        const std::string klabel = s.k > 0 ? std::to_string(s.k) : "";
        if (s.v.size() >= 3) {
            try {
                const WlsFit fit = wls_fit(s.u, s.v, s.w);
                wls_rows.push_back({s.metric, s.alpha_label, klabel, format_double(fit.beta1),
                                    significance_stars(fit.p_value), format_double(fit.se1),
                                    format_double(fit.p_value), format_double(fit.adj_r2),
                                    format_double(fit.ci95_low), format_double(fit.ci95_high),
                                    std::to_string(fit.n), std::to_string(s.sum_a), hash});
            } catch (const std::invalid_argument&) {
                // degenerate series (e.g. all cities share one abscissa); skipped
            }
        }
        if (s.v.size() >= 4) {
            const SplineFit fit = fit_spline(s.u, s.v, s.w);
            const double lo = fit.knots.front(), hi = fit.knots.back();
            for (int i = 0; i < 500; ++i) {
                const double x = lo + (hi - lo) * i / 499.0;
                spline_rows.push_back({s.metric, s.alpha_label, klabel, format_double(x),
                                       format_double(fit.evaluate(x)), hash});
            }
        }
        if (s.v.size() >= 2) {
            DensityGrid grid;
            try {
                grid = weighted_kde_grid(s.u, s.v, s.w, config.bandwidth, config.n_u,
                                         config.n_v);
            } catch (const std::invalid_argument&) {
                continue; // degenerate scatter; no grid for this series
            }
            json meta;
            meta["metric"] = s.metric;
            meta["alpha"] = s.alpha_label;
            meta["k"] = s.k;
            meta["n_u"] = config.n_u;
            meta["n_v"] = config.n_v;
            meta["bandwidth_factor"] = grid.bandwidth_factor;
            meta["silverman_reference"] = grid.silverman_reference;
            meta["n_eff"] = grid.n_eff;
            meta["kernel_scale_u"] = grid.kernel_scale_u;
            meta["kernel_scale_v"] = grid.kernel_scale_v;
            grid_meta.push_back(meta);

            const ModalCurve curve = modal_regression(grid);
            for (size_t i = 0; i < curve.u.size(); ++i)
                curve_rows.push_back({s.metric, s.alpha_label, klabel, format_double(curve.u[i]),
                                      format_double(curve.v[i]), hash});

            const Eigen::MatrixXd normalized = normalized_heatmap(grid);
            const int stride_u = std::max(1, config.n_u / config.grid_export_max_dim);
            const int stride_v = std::max(1, config.n_v / config.grid_export_max_dim);
            for (int i = 0; i < config.n_u; i += stride_u) {
                const double marg = grid.marginal[size_t(i)];
                for (int j = 0; j < config.n_v; j += stride_v) {
                    grid_rows.push_back(
                        {s.metric, s.alpha_label, klabel, format_double(grid.u_axis[size_t(i)]),
                         format_double(grid.v_axis[size_t(j)]), format_double(grid.density(i, j)),
                         format_double(marg > 0.0 ? grid.density(i, j) / marg : 0.0),
                         format_double(normalized(i, j)), hash});
                }
            }

            if (s.metric == "f" || s.metric == "t" || s.metric == "lambda") {
                const std::string group = s.metric + (s.k > 0 ? ":k" + klabel : "");
                collapse_groups[group][s.alpha_label] = curve;
            }
        }
    }

    for (const auto& [group, curves] : collapse_groups) {
        if (curves.size() < 2) continue;
        bool shared = true;
        const auto& ref = curves.begin()->second.u;
        for (const auto& [alpha, c] : curves)
            if (c.u != ref) shared = false;
        if (!shared) continue; // per-alpha exclusions broke the shared grid
        const auto scaled = scaled_collapse(curves);
        for (const auto& [alpha, c] : scaled)
            for (size_t i = 0; i < c.u.size(); ++i)
                collapse_rows.push_back(
                    {group, alpha, format_double(c.u[i]), format_double(c.v[i]), hash});
    }

    write_csv(out.path("wls_table.csv"),
              {"metric", "alpha", "k", "beta1", "stars", "se1", "p_value", "adj_r2", "ci_025",
               "ci_975", "n_cities", "sum_a", "config_hash"},
              wls_rows);
    write_csv(out.path("spline_curves.csv"),
              {"metric", "alpha", "k", "u", "v", "config_hash"}, spline_rows);
    write_csv(out.path("modal_curves.csv"),
              {"metric", "alpha", "k", "u", "v", "config_hash"}, curve_rows);
    write_csv(out.path("density_grids.csv"),
              {"metric", "alpha", "k", "u", "v", "density", "conditional", "normalized",
               "config_hash"},
              grid_rows);
    write_csv(out.path("scaled_collapse.csv"),
              {"group", "alpha", "u", "v_scaled", "config_hash"}, collapse_rows);
    json meta_doc;
    meta_doc["config_hash"] = hash;
    meta_doc["grids"] = grid_meta;
    write_json_file(out.path("grid_metadata.json"), meta_doc);
}

void write_diagnose_outputs(const Dataset& data, const PipelineConfig& config,
                            OutputTracker& out)
{
    const std::string hash = config.config_hash();
    const AlphaRegistry registry = config.make_registry();
    const ActivityDay alpha = alpha_any();

    // respondents per capita
    std::vector<std::vector<std::string>> mu_rows;
    for (const auto& [cbsa, city] : data.cities) {
        if (city.atus.empty()) continue;
        mu_rows.push_back({cbsa, std::to_string(city.location.population),
                           std::to_string(city.atus.size()),
                           format_double(respondents_per_capita(city.location,
                                                                (long long)city.atus.size())),
                           hash});
    }
    write_csv(out.path("mu.csv"), {"cbsa", "population", "respondents", "mu", "config_hash"},
              mu_rows);

    // non-response ratios and their regressions
    std::set<std::string> characteristics;
    for (const auto& [cbsa, city] : data.cities)
        for (const auto& unit : city.units) characteristics.insert(unit.characteristic);

    std::vector<std::vector<std::string>> ratio_rows;
    std::vector<std::vector<std::string>> reg_rows;
    std::vector<std::vector<std::string>> excl_rows;
    for (const auto& c : characteristics) {
        std::vector<double> ps, ratios, sizes;
        for (const auto& [cbsa, city] : data.cities) {
            std::vector<SamplingUnit> units_c;
            for (const auto& unit : city.units)
                if (unit.characteristic == c) units_c.push_back(unit);
            if (units_c.empty()) continue;
            std::vector<Respondent> resp_c;
            for (const auto& r : city.atus)
                if (r.has_tag(c)) resp_c.push_back(r);
            if (resp_c.empty()) {
                excl_rows.push_back({c, cbsa, "no tagged respondents", hash});
                continue;
            }
            double ratio;
            try {
                ratio = nonresponse_ratio(resp_c, units_c, alpha, registry);
            } catch (const std::domain_error&) {
                excl_rows.push_back({c, cbsa, "zero response rate", hash});
                continue;
            }
            ps.push_back(city.location.log_population());
            ratios.push_back(ratio);
            sizes.push_back(double(city.atus.size()));
            ratio_rows.push_back({c, cbsa, format_double(city.location.log_population()),
                                  format_double(ratio), hash});
        }
        if (ps.size() >= 3) {
            try {
                const std::vector<double> w = sample_size_weights(sizes);
                const WlsFit wls = wls_fit(ps, ratios, w);
                const std::vector<double> ones(ps.size(), 1.0);
                const WlsFit ols = wls_fit(ps, ratios, ones);
                reg_rows.push_back({c, format_double(wls.beta1),
                                    significance_stars(wls.p_value), format_double(wls.p_value),
                                    format_double(ols.beta1), significance_stars(ols.p_value),
                                    format_double(ols.p_value), std::to_string(ps.size()), hash});
            } catch (const std::invalid_argument&) {
                excl_rows.push_back({c, "", "degenerate regression input", hash});
            }
        }
    }
    write_csv(out.path("nonresponse_ratios.csv"),
              {"characteristic", "cbsa", "p", "ratio", "config_hash"}, ratio_rows);
    write_csv(out.path("nonresponse_wls.csv"),
              {"characteristic", "beta1_wls", "stars_wls", "p_wls", "beta1_ols", "stars_ols",
               "p_ols", "n_cities", "config_hash"},
              reg_rows);
    write_csv(out.path("diagnose_exclusions.csv"),
              {"characteristic", "cbsa", "reason", "config_hash"}, excl_rows);

    // call statistic
    std::vector<std::vector<std::string>> psi_rows;
    std::vector<double> pops, psis;
    for (const auto& [cbsa, city] : data.cities) {
        if (city.atus.empty()) continue;
        double psi;
        try {
            psi = call_statistic(city.atus, alpha, registry);
        } catch (const std::invalid_argument&) {
            continue; // no call data in this city
        }
        pops.push_back(double(city.location.population));
        psis.push_back(psi);
        psi_rows.push_back({cbsa, format_double(city.location.log_population()),
                            format_double(psi), format_double(1.0 - psi), hash});
    }
    write_csv(out.path("psi.csv"), {"cbsa", "p", "psi", "one_minus_psi", "config_hash"},
              psi_rows);

    std::vector<std::vector<std::string>> bin_rows;
    if (!pops.empty()) {
        for (const auto& row : psi_population_bins(pops, psis, config.psi_bins))
            bin_rows.push_back({format_double(row.mean_population), format_double(row.mean_psi),
                                format_double(1.0 - row.mean_psi), std::to_string(row.cities),
                                hash});
    }
    write_csv(out.path("psi_bins.csv"),
              {"mean_population", "mean_psi", "mean_one_minus_psi", "cities", "config_hash"},
              bin_rows);
}

void write_rank_outputs(const Dataset& data, const EstimateSet& est,
                        const PipelineConfig& config, OutputTracker& out)
{
    const std::string hash = config.config_hash();
    const std::string alpha_o = alpha_any().label();

    struct CityRank {
        double value = 0.0;
        double z = 0.0;
        int rank = 0;
        bool present = false;
    };

    // lambda rankings per k
    std::map<std::string, std::map<int, CityRank>> lambda_ranks; // cbsa -> k -> entry
    for (int k : config.k_values) {
        const Series* s = est.find("lambda", alpha_o, k);
        if (!s || s->v.size() < 2) continue;
        DensityGrid grid;
        try {
            grid = weighted_kde_grid(s->u, s->v, s->w, config.bandwidth, config.n_u, config.n_v);
        } catch (const std::invalid_argument&) {
            continue;
        }
        const double sum_w = std::accumulate(s->w.begin(), s->w.end(), 0.0);
        std::vector<std::pair<double, size_t>> zs;
        for (size_t i = 0; i < s->v.size(); ++i)
            zs.emplace_back(weighted_zscore(s->v[i], s->u[i], grid, s->w[i], sum_w), i);
        std::sort(zs.begin(), zs.end(), [](const auto& a, const auto& b) {
            if (a.first != b.first) return a.first > b.first;
            return a.second < b.second;
        });
        for (size_t pos = 0; pos < zs.size(); ++pos) {
            const size_t i = zs[pos].second;
            CityRank& entry = lambda_ranks[s->cities[i]][k];
            entry.value = s->v[i];
            entry.z = zs[pos].first;
            entry.rank = int(pos) + 1;
            entry.present = true;
        }
    }

    std::vector<std::string> header{"cbsa", "name"};
    for (int k : config.k_values) {
        header.push_back("lambda_k" + std::to_string(k));
        header.push_back("rank_k" + std::to_string(k));
    }
    header.push_back("mean_rank");
    header.push_back("config_hash");

    std::vector<std::pair<double, std::vector<std::string>>> lambda_rows;
    for (const auto& [cbsa, by_k] : lambda_ranks) {
        std::vector<std::string> row{cbsa, data.cities.at(cbsa).location.name};
        double rank_sum = 0.0;
        int rank_count = 0;
        for (int k : config.k_values) {
            auto it = by_k.find(k);
            if (it == by_k.end() || !it->second.present) {
                row.push_back("");
                row.push_back("");
                continue;
            }
            row.push_back(format_double(it->second.value));
            row.push_back(std::to_string(it->second.rank));
            rank_sum += it->second.rank;
            ++rank_count;
        }
        const double mean_rank = rank_count > 0 ? rank_sum / rank_count : 0.0;
        row.push_back(format_double(mean_rank));
        row.push_back(hash);
        lambda_rows.emplace_back(mean_rank, std::move(row));
    }
    std::sort(lambda_rows.begin(), lambda_rows.end(), [](const auto& a, const auto& b) {
        if (a.first != b.first) return a.first < b.first;
        return a.second[0] < b.second[0];
    });
    std::vector<std::vector<std::string>> lambda_out;
    for (auto& [rank, row] : lambda_rows) lambda_out.push_back(std::move(row));
    write_csv(out.path("rankings_lambda.csv"), header, lambda_out);

    // duration rankings
    std::vector<std::vector<std::string>> t_rows;
    const Series* ts = est.find("t", alpha_o, 0);
    if (ts && ts->v.size() >= 2) {
        DensityGrid grid;
        bool ok = true;
        try {
            grid = weighted_kde_grid(ts->u, ts->v, ts->w, config.bandwidth, config.n_u,
                                     config.n_v);
        } catch (const std::invalid_argument&) {
            ok = false;
        }
        if (ok) {
            const double sum_w = std::accumulate(ts->w.begin(), ts->w.end(), 0.0);
            std::vector<std::pair<double, size_t>> zs;
            for (size_t i = 0; i < ts->v.size(); ++i)
                zs.emplace_back(weighted_zscore(ts->v[i], ts->u[i], grid, ts->w[i], sum_w), i);
            std::sort(zs.begin(), zs.end(), [](const auto& a, const auto& b) {
                if (a.first != b.first) return a.first > b.first;
                return a.second < b.second;
            });
            for (size_t pos = 0; pos < zs.size(); ++pos) {
                const size_t i = zs[pos].second;
                t_rows.push_back({ts->cities[i], data.cities.at(ts->cities[i]).location.name,
                                  format_double(ts->v[i]), format_double(zs[pos].first),
                                  std::to_string(pos + 1), hash});
            }
        }
    }
    write_csv(out.path("rankings_t.csv"), {"cbsa", "name", "t", "z", "rank", "config_hash"},
              t_rows);
}

} // namespace

// ---------------------------------------------------------------------------
// orchestration

RunOutcome run(const PipelineConfig& config, const std::vector<Stage>& stages)
{
    const fs::path dir(config.output_dir);
    fs::create_directories(dir);
    const std::string hash = config.config_hash();

    const fs::path manifest_path = dir / "manifest.json";
    if (fs::exists(manifest_path)) {
        std::ifstream in(manifest_path);
        json prev;
        try {
            in >> prev;
        } catch (...) {
            prev = json::object();
        }
        if (prev.value("config_hash", hash) != hash && !config.force)
            throw ValidationError("output dir " + config.output_dir +
                                  " holds results for a different config (use force)");
    }

    auto wants = [&](Stage s) {
        return std::find(stages.begin(), stages.end(), s) != stages.end();
    };

    OutputTracker out(dir);
    const Stage first = stages.empty() ? Stage::estimate : stages.front();
    Stage current = first;
    try {
        Dataset data = ingest(config);
        write_ingest_outputs(data, config, out);

        const AlphaRegistry registry = config.make_registry();

        if (!config.raking_spec.empty()) {
            current = Stage::calibrate;
            const LoadedRakingSpec loaded = load_raking_spec(config.raking_spec);
            const CalibrationOutcome outcome = apply_raking(data, loaded);
            if (wants(Stage::calibrate))
                write_calibrate_outputs(data, outcome, config, registry, out);
        } else if (wants(Stage::calibrate)) {
            throw ValidationError("calibrate requested but config has no raking_spec");
        }

        const bool needs_estimates = wants(Stage::estimate) || wants(Stage::trend) ||
                                     wants(Stage::rank);
        EstimateSet est;
        if (needs_estimates) {
            current = Stage::estimate;
            est = compute_estimates(data, config);
            if (wants(Stage::estimate)) write_estimate_outputs(est, config, out);
        }
        if (wants(Stage::trend)) {
            current = Stage::trend;
            write_trend_outputs(est, config, out);
        }
        if (wants(Stage::diagnose)) {
            current = Stage::diagnose;
            write_diagnose_outputs(data, config, out);
        }
        if (wants(Stage::rank)) {
            current = Stage::rank;
            write_rank_outputs(data, est, config, out);
        }

        json manifest;
        manifest["tool"] = "availprop";
        manifest["version"] = "0.1.0";
        manifest["config_hash"] = hash;
        manifest["seed"] = config.seed;
        manifest["rng"] = kRngAlgorithm;
        json stage_names = json::array();
        for (Stage s : stages) stage_names.push_back(to_string(s));
        manifest["stages"] = stage_names;
        manifest["config"] = json::parse(config.canonical_json());
        json outputs = json::array();
        RunOutcome outcome;
        for (const auto& rel : out.created()) {
            json o;
            o["path"] = rel;
            o["fnv1a64"] = file_hash_hex(dir / rel);
            outputs.push_back(o);
            outcome.outputs.push_back(rel);
        }
        manifest["outputs"] = outputs;
        write_json_file(manifest_path.string(), manifest);
        outcome.outputs.push_back("manifest.json");
        outcome.config_hash = hash;
        return outcome;
    } catch (const ValidationError&) {
        out.remove_all();
        throw;
    } catch (const StageError&) {
        out.remove_all();
        throw;
    } catch (const std::exception& e) {
        out.remove_all();
        throw StageError(current, e.what());
    }
}

RunOutcome run(const PipelineConfig& config)
{
    std::vector<Stage> stages;
    if (!config.raking_spec.empty()) stages.push_back(Stage::calibrate);
    stages.insert(stages.end(), {Stage::estimate, Stage::trend, Stage::diagnose, Stage::rank});
    return run(config, stages);
}

// ---------------------------------------------------------------------------
// synthetic-survey scenario

SimSpec SimSpec::from_json_file(const std::string& path)
{
    std::ifstream in(path);
    if (!in)
        throw ValidationError("cannot open sim spec " + path);
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw ValidationError("sim spec " + path + ": " + e.what());
    }
    SimSpec s;
    read_field(j, "n_cities", s.n_cities);
    read_field(j, "p_min", s.p_min);
    read_field(j, "p_max", s.p_max);
    read_field(j, "n_strata", s.n_strata);
    read_field(j, "atus_sample_per_city", s.atus_sample_per_city);
    read_field(j, "psts_sample_per_city", s.psts_sample_per_city);
    read_field(j, "small_city_count", s.small_city_count);
    read_field(j, "small_city_atus_sample", s.small_city_atus_sample);
    read_field(j, "small_city_psts_sample", s.small_city_psts_sample);
    read_field(j, "phi_intercept", s.phi_intercept);
    read_field(j, "phi_slope", s.phi_slope);
    read_field(j, "phi_stratum_spread", s.phi_stratum_spread);
    if (j.contains("kappa")) s.kappa = j.at("kappa").get<std::map<std::string, double>>();
    read_field(j, "response_rate", s.response_rate);
    read_field(j, "seed", s.seed);
    if (s.n_cities < 1 || s.n_strata < 1)
        throw ValidationError("sim spec: city and strata counts must be positive");
    return s;
}

std::string SimSpec::canonical_json() const
{
    json j;
    j["n_cities"] = n_cities;
    j["p_min"] = p_min;
    j["p_max"] = p_max;
    j["n_strata"] = n_strata;
    j["atus_sample_per_city"] = atus_sample_per_city;
    j["psts_sample_per_city"] = psts_sample_per_city;
    j["small_city_count"] = small_city_count;
    j["small_city_atus_sample"] = small_city_atus_sample;
    j["small_city_psts_sample"] = small_city_psts_sample;
    j["phi_intercept"] = phi_intercept;
    j["phi_slope"] = phi_slope;
    j["phi_stratum_spread"] = phi_stratum_spread;
    j["kappa"] = kappa;
    j["response_rate"] = response_rate;
    j["seed"] = seed;
    return j.dump(2);
}

double SimSpec::phi_at(double p, int stratum_index) const
{
    double offset = 0.0;
    if (n_strata > 1)
        offset = phi_stratum_spread * (double(stratum_index) / double(n_strata - 1) - 0.5);
    const double phi = phi_intercept + phi_slope * (p - p_min) + offset;
    return std::clamp(phi, 0.01, 0.99);
}

namespace {

std::string sim_cbsa(int i)
{
    char buf[6];
    std::snprintf(buf, sizeof buf, "%05d", 10000 + i);
    return buf;
}

} // namespace

ModelParams SimSpec::build_params(bool psts_sizes) const
{
    ModelParams params;
    for (int i = 0; i < n_cities; ++i) {
        const double p =
            n_cities > 1 ? p_min + (p_max - p_min) * i / double(n_cities - 1) : p_min;
        const double population = std::pow(10.0, p);
        long long s = psts_sizes ? psts_sample_per_city : atus_sample_per_city;
        if (i < small_city_count)
            s = psts_sizes ? small_city_psts_sample : small_city_atus_sample;
        for (int c = 0; c < n_strata; ++c) {
            // city sample split across strata, remainder to the leading cells
            const long long cell_size = s / n_strata + (c < int(s % n_strata) ? 1 : 0);
            if (cell_size == 0) continue;
            CellParams cell;
            cell.location_id = sim_cbsa(i);
            cell.stratum.values = {"g" + std::to_string(c)};
            cell.sample_size = cell_size;
            cell.weight = population / double(n_strata) / double(cell_size);
            cell.phi = phi_at(p, c);
            for (const auto& [code, kap] : kappa)
                cell.kappa[{code, DayType::any}] = kap;
            params.cells.push_back(std::move(cell));
        }
    }
    return params;
}

std::vector<std::string> simulate(const SimSpec& spec, const std::string& out_dir)
{
    const fs::path dir(out_dir);
    fs::create_directories(dir);

    const AlphaRegistry registry;
    StratumSchema schema;
    schema.names = {"grp"};
    schema.categories.emplace_back();
    for (int c = 0; c < spec.n_strata; ++c)
        schema.categories[0].push_back("g" + std::to_string(c));

    std::vector<Respondent> atus = generate_survey(spec.build_params(false), spec.seed);
    std::vector<Respondent> psts =
        generate_survey(spec.build_params(true), math::splitmix64(spec.seed + 1));

    // tag diary respondents with their stratum group for the diagnostics channel
    for (auto& r : atus) r.tags = {r.stratum.values[0]};

    std::vector<std::string> created;
    auto track = [&](const std::string& rel) {
        created.push_back(rel);
        return (dir / rel).string();
    };

    std::vector<std::vector<std::string>> rows;
    for (const auto& r : atus) rows.push_back(respondent_row(r, schema, registry, true, false));
    write_csv(track("atus.csv"), respondent_header(schema, registry, true, false), rows);

    rows.clear();
    for (const auto& r : psts) rows.push_back(respondent_row(r, schema, registry, false, true));
    write_csv(track("psts.csv"), respondent_header(schema, registry, false, true), rows);

    rows.clear();
    std::vector<std::vector<std::string>> crosswalk_rows;
    for (int i = 0; i < spec.n_cities; ++i) {
        const double p = spec.n_cities > 1
                             ? spec.p_min + (spec.p_max - spec.p_min) * i / double(spec.n_cities - 1)
                             : spec.p_min;
        const long long population = (long long)std::llround(std::pow(10.0, p));
        rows.push_back({sim_cbsa(i), "City " + std::to_string(i), std::to_string(population)});
        crosswalk_rows.push_back({sim_cbsa(i), sim_cbsa(i)});
    }
    write_csv(track("population.csv"), {"cbsa", "name", "population"}, rows);
    write_csv(track("crosswalk.csv"), {"fips", "cbsa"}, crosswalk_rows);

    // sampling units: respondents plus non-respondents at the configured rate
    rows.clear();
    long long unit_id = 0;
    std::map<std::string, std::map<std::string, long long>> responded_by_city_group;
    for (const auto& r : atus) responded_by_city_group[r.location_id][r.stratum.values[0]]++;
    for (const auto& [cbsa, groups] : responded_by_city_group) {
        for (const auto& [grp, responded] : groups) {
            const long long total =
                (long long)std::llround(double(responded) / spec.response_rate);
            for (long long n = 0; n < std::max(total, responded); ++n)
                rows.push_back({"u" + std::to_string(unit_id++), cbsa, grp,
                                n < responded ? "1" : "0"});
        }
    }
    write_csv(track("units.csv"), {"id", "cbsa", "characteristic", "responded"}, rows);

    json manifest;
    manifest["tool"] = "availprop";
    manifest["version"] = "0.1.0";
    manifest["kind"] = "simulate";
    manifest["seed"] = spec.seed;
    manifest["rng"] = kRngAlgorithm;
    manifest["spec"] = json::parse(spec.canonical_json());
    json outputs = json::array();
    for (const auto& rel : created) {
        json o;
        o["path"] = rel;
        o["fnv1a64"] = file_hash_hex(dir / rel);
        outputs.push_back(o);
    }
    manifest["outputs"] = outputs;
    write_json_file((dir / "manifest.json").string(), manifest);
    created.push_back("manifest.json");
    return created;
}

} // namespace availprop
