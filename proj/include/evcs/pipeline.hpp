#pragma once

// Stage functions behind the command-line tool. Each stage reads declared
// inputs from the data or work directory, writes its artifacts under the
// work directory and a manifest with content hashes. Paths inside manifests
// are relative, so two runs in different directories can be compared byte
// for byte.

#include "evcs/accounts.hpp"
#include "evcs/config.hpp"
#include "evcs/csv.hpp"
#include "evcs/error.hpp"
#include "evcs/estimation.hpp"
#include "evcs/experiments.hpp"
#include "evcs/hash.hpp"
#include "evcs/io.hpp"
#include "evcs/metrics.hpp"
#include "evcs/siting.hpp"
#include "evcs/spatial.hpp"
#include "evcs/synth.hpp"
#include "evcs/utility_sim.hpp"

#include <json.hpp>

#include <filesystem>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

namespace evcs::pipeline {

namespace fs = std::filesystem;

inline constexpr std::string_view kToolVersion = "0.3.0";

/// Every key the config file may contain, with its default.
inline std::vector<std::pair<std::string, std::string>> const& config_defaults()
{
    static const std::vector<std::pair<std::string, std::string>> d{
        {"region", ""},
        {"exclusion_start", "2020-02-01"},
        {"exclusion_end", "2021-07-01"},
        {"shared_daily_sessions", "4"},
        {"monthly_energy_cap_kwh", "500"},
        {"annual_energy_cap_kwh", "6000"},
        {"check_annual_energy", "true"},
        {"rental_max_days", "14"},
        {"rental_min_sessions", "3"},
        {"shared_before_rental", "true"},
        {"max_daily_sessions", "2"},
        {"excluded_operators", "ChargePoint"},
        {"walk_threshold_m", "400"},
        {"gas_radius_m", "50"},
        {"amenity_radius_l2_m", "300"},
        {"amenity_radius_l3_m", "200"},
        {"density_mode", "log1p"},
        {"snap_radius_m", "1000"},
        {"near_threshold_km", "1.5"},
        {"outlier_quantile", "0.98"},
        {"folds", "5"},
        {"sample_size", "5000"},
        {"cv_mode", "auto"},
        {"estimation_draws", "1000"},
        {"draw_scheme", "pseudo"},
        {"max_iterations", "500"},
        {"gradient_tolerance", "1e-6"},
        {"initial_sigma", "0.1"},
        {"divergence_bound", "50"},
        {"mnl_draws_per_fold", "1000"},
        {"mxl_draws_per_fold", "2000"},
        {"percentile", "0.25"},
        {"candidate_count", "200"},
        {"candidate_spacing_m", "200"},
        {"candidate_outlets", "2"},
        {"siting_date", "2022-08-01"},
        {"exact_threshold", "20"},
        {"grid_ps", "10 25 50 75 100"},
        {"synth_private_users", "150"},
        {"synth_sessions_per_user", "8"},
        {"synth_l2_stations", "12"},
        {"synth_l3_stations", "4"},
        {"synth_customers", "16"},
    };
    return d;
}

/// Resolved settings of a run.
struct Settings {
    Config raw;
    Polygon region;
    ExclusionWindow window;
    ClassifierConfig classifier;
    int max_daily_sessions = 2;
    std::set<std::string> excluded_operators;
    EncodingConfig encoding;
    double near_threshold_km = kNearThresholdKm;
    double outlier_quantile = 0.98;
    std::size_t folds = 5;
    std::string cv_mode = "auto";
    EstimationConfig estimation;
    SimulationConfig simulation;
    CandidateGenConfig candidates;
    int candidate_outlets = 2;
    Timestamp siting_date{};
    std::size_t exact_threshold = 20;
    std::vector<std::size_t> grid_ps;

    [[nodiscard]] CvMode mode_for(Level level) const
    {
        if (cv_mode == "l2") {
            return CvMode::L2Style;
        }
        if (cv_mode == "l3") {
            return CvMode::L3Style;
        }
        return level == Level::L2 ? CvMode::L2Style : CvMode::L3Style;
    }
};

inline Settings resolve(Config const& cfg, std::uint64_t seed, unsigned jobs)
{
    std::vector<std::string> known;
    for (auto const& [k, v] : config_defaults()) {
        known.push_back(k);
    }
    if (auto bad = cfg.unknown_keys(known); !bad.empty()) {
        throw IoError("unknown config key '" + bad.front() + "'");
    }
    Config c;
    for (auto const& [k, v] : config_defaults()) {
        c.set(k, v);
    }
    for (auto const& [k, v] : config_defaults()) {
        if (cfg.has(k)) {
            c.set(k, cfg.get_string(k, v));
        }
    }
    auto size = [&](std::string const& k) {
        const auto v = c.get_int(k, 0);
        if (v < 0) {
            throw IoError("config key '" + k + "' must be non-negative");
        }
        return static_cast<std::size_t>(v);
    };
    auto date = [&](std::string const& k) {
        try {
            return parse_iso8601(c.get_string(k, ""));
        } catch (ValidationError const& e) {
            throw IoError("config key '" + k + "': " + e.what());
        }
    };

    Settings s;
    s.raw = c;
    s.region = io::polygon_from_list(c.get_list("region", {}));
    s.window = {date("exclusion_start"), date("exclusion_end")};
    s.classifier.shared_daily_sessions = static_cast<int>(c.get_int("shared_daily_sessions", 4));
    s.classifier.monthly_energy_cap_kwh = c.get_double("monthly_energy_cap_kwh", 500);
    s.classifier.annual_energy_cap_kwh = c.get_double("annual_energy_cap_kwh", 6000);
    s.classifier.check_annual_energy = c.get_bool("check_annual_energy", true);
    s.classifier.rental_max_days = static_cast<int>(c.get_int("rental_max_days", 14));
    s.classifier.rental_min_sessions = static_cast<int>(c.get_int("rental_min_sessions", 3));
    s.classifier.shared_before_rental = c.get_bool("shared_before_rental", true);
    s.max_daily_sessions = static_cast<int>(c.get_int("max_daily_sessions", 2));
    {
        std::stringstream ss(c.get_string("excluded_operators", ""));
        std::string item;
        while (std::getline(ss, item, ',')) {
            if (!item.empty()) {
                s.excluded_operators.insert(item);
            }
        }
    }
    s.encoding.walk_threshold_m = c.get_double("walk_threshold_m", 400);
    s.encoding.gas_radius_m = c.get_double("gas_radius_m", 50);
    s.encoding.amenity_radius_l2_m = c.get_double("amenity_radius_l2_m", 300);
    s.encoding.amenity_radius_l3_m = c.get_double("amenity_radius_l3_m", 200);
    const auto dm = c.get_string("density_mode", "log1p");
    if (dm != "log1p" && dm != "log_or_zero") {
        throw IoError("config key 'density_mode' must be log1p or log_or_zero");
    }
    s.encoding.density = dm == "log1p" ? DensityMode::Log1p : DensityMode::LogOrZero;
    s.encoding.snap_radius_m = c.get_double("snap_radius_m", 1000);
    s.near_threshold_km = c.get_double("near_threshold_km", kNearThresholdKm);
    s.outlier_quantile = c.get_double("outlier_quantile", 0.98);
    s.folds = size("folds");
    s.cv_mode = c.get_string("cv_mode", "auto");
    if (s.cv_mode != "auto" && s.cv_mode != "l2" && s.cv_mode != "l3") {
        throw IoError("config key 'cv_mode' must be auto, l2 or l3");
    }

    auto& e = s.estimation;
    e.sample_size = size("sample_size");
    e.draws = size("estimation_draws");
    const auto scheme = c.get_string("draw_scheme", "pseudo");
    if (scheme != "pseudo" && scheme != "halton") {
        throw IoError("config key 'draw_scheme' must be pseudo or halton");
    }
    e.draw_scheme = scheme == "pseudo" ? DrawScheme::Pseudo : DrawScheme::Halton;
    e.optimizer.max_iterations = size("max_iterations");
    e.optimizer.gradient_tolerance = c.get_double("gradient_tolerance", 1e-6);
    e.optimizer.divergence_bound = c.get_double("divergence_bound", 50);
    e.initial_sigma = c.get_double("initial_sigma", 0.1);
    e.outlier_quantile = s.outlier_quantile;
    e.near_threshold_km = s.near_threshold_km;
    e.seed = seed;
    e.jobs = jobs;

    auto& sim = s.simulation;
    sim.mnl_draws_per_fold = size("mnl_draws_per_fold");
    sim.mxl_draws_per_fold = size("mxl_draws_per_fold");
    sim.percentile = c.get_double("percentile", 0.25);
    sim.near_threshold_km = s.near_threshold_km;
    sim.seed = seed;
    sim.jobs = jobs;

    s.candidates.region = s.region;
    s.candidates.count = size("candidate_count");
    s.candidates.min_spacing_m = c.get_double("candidate_spacing_m", 200);
    s.candidates.seed = seed;
    s.candidate_outlets = static_cast<int>(c.get_int("candidate_outlets", 2));
    s.siting_date = date("siting_date");
    s.exact_threshold = size("exact_threshold");
    for (double p : c.get_list("grid_ps", {})) {
        if (p < 1 || p != std::floor(p)) {
            throw IoError("config key 'grid_ps' must list positive integers");
        }
        s.grid_ps.push_back(static_cast<std::size_t>(p));
    }
    return s;
}

struct Context {
    fs::path data_dir;
    fs::path work_dir;
    Config config;
    std::uint64_t seed = 1;
    unsigned jobs = 1;

    [[nodiscard]] Settings settings() const { return resolve(config, seed, jobs); }
};

/// Outcome of one stage: artifacts (relative to the work directory) and a
/// small machine-readable summary.
struct StageReport {
    std::string stage;
    std::vector<std::string> artifacts;
    nlohmann::ordered_json summary = nlohmann::ordered_json::object();
    bool validation_failed = false;

    [[nodiscard]] nlohmann::ordered_json to_json() const
    {
        nlohmann::ordered_json j;
        j["stage"] = stage;
        j["status"] = validation_failed ? "validation_failed" : "ok";
        j["artifacts"] = artifacts;
        j["summary"] = summary;
        return j;
    }
};

namespace detail {

class StageWriter {
  public:
    StageWriter(Context const& ctx, std::string stage) : ctx_{ctx}
    {
        report_.stage = std::move(stage);
    }

    void input(fs::path const& path, std::string const& label)
    {
        inputs_[label] = hash_file(path);
    }

    void write(std::string const& rel, std::string const& content)
    {
        csv::write_file(ctx_.work_dir / rel, content);
        artifacts_[rel] = hash_string(content);
        report_.artifacts.push_back(rel);
    }

    StageReport finish(std::string const& manifest_rel)
    {
        nlohmann::ordered_json m;
        m["stage"] = report_.stage;
        m["tool_version"] = kToolVersion;
        m["seed"] = ctx_.seed;
        m["config_hash"] = ctx_.settings().raw.hash();
        m["inputs"] = inputs_;
        m["artifacts"] = artifacts_;
        m["summary"] = report_.summary;
        const auto text = m.dump(2) + '\n';
        csv::write_file(ctx_.work_dir / manifest_rel, text);
        report_.artifacts.push_back(manifest_rel);
        return report_;
    }

    StageReport& report() { return report_; }

  private:
    Context const& ctx_;
    StageReport report_;
    std::map<std::string, std::string> inputs_;
    std::map<std::string, std::string> artifacts_;
};

inline std::string level_tag(Level l) { return std::string(to_string(l)); }

inline std::string estimate_dir(ModelKind kind, Level level)
{
    return "estimate_" + std::string(kind == ModelKind::MNL ? "mnl" : "mxl") + "_" + level_tag(level);
}

inline void hash_amenity_inputs(StageWriter& w, fs::path const& data_dir)
{
    std::vector<fs::path> files;
    for (auto const& e : fs::directory_iterator(data_dir / "amenities")) {
        files.push_back(e.path());
    }
    std::sort(files.begin(), files.end());
    for (auto const& f : files) {
        w.input(f, "data/amenities/" + f.filename().string());
    }
}

inline std::vector<std::string> read_id_list(fs::path const& path, std::string const& column)
{
    const auto t = csv::Table::read(path);
    const auto c = t.column(column);
    std::vector<std::string> out;
    for (std::size_t r = 0; r < t.size(); ++r) {
        out.push_back(t.at(r, c));
    }
    return out;
}

} // namespace detail

// ---------------------------------------------------------------------------
// synth

/// Writes a complete synthetic input set into `ctx.data_dir`, plus a config
/// file with a matching region and desk-scale sizes.
inline StageReport run_synth(Context const& ctx)
{
    const auto s = ctx.settings();
    WorldConfig wc;
    wc.seed = ctx.seed;
    wc.private_users = static_cast<std::size_t>(s.raw.get_int("synth_private_users", 150));
    wc.sessions_per_user = static_cast<std::size_t>(s.raw.get_int("synth_sessions_per_user", 8));
    wc.l2_stations = static_cast<std::size_t>(s.raw.get_int("synth_l2_stations", 12));
    wc.l3_stations = static_cast<std::size_t>(s.raw.get_int("synth_l3_stations", 4));
    wc.customers = static_cast<std::size_t>(s.raw.get_int("synth_customers", 16));
    if (wc.l2_stations < 4) {
        throw ValidationError("synthetic world needs at least 4 level 2 stations");
    }
    // Level 2 reference ratios: walking distance dominates, distance hurts
    wc.truth.mean(Coef::DistNear) = -0.6;
    wc.truth.mean(Coef::OutletsNear) = 0.2;
    wc.truth.mean(Coef::IsWalkHome) = 2.0;
    wc.truth.mean(Coef::DistFar) = -0.5;
    wc.truth.mean(Coef::OutletsFar) = 0.1;
    wc.truth.mean(Coef::IsGas) = -0.1;
    wc.truth.mean(Coef::Rest) = 0.1;
    wc.truth.mean(Coef::Mall) = 0.1;
    const auto w = generate_world(wc);

    auto const& d = ctx.data_dir;
    StageReport r;
    r.stage = "synth";
    auto put = [&](std::string const& rel, std::string const& text) {
        csv::write_file(d / rel, text);
        r.artifacts.push_back(rel);
    };
    put("accounts.csv", io::accounts_csv(w.accounts));
    put("sessions.csv", io::sessions_csv(w.accounts));
    put("nodes.csv", io::nodes_csv(w.nodes));
    put("network.csv", io::edges_csv(w.edges));
    put("stations.geojson", io::stations_geojson(w.stations));
    for (auto const& [month, snap] : w.amenities.snapshots()) {
        put("amenities/" + month_label(month) + ".csv", io::amenities_csv(snap));
    }
    put("customers.csv", io::customers_csv(w.customers));
    put("truth.params", serialize(w.truth));
    std::string cfg = "# synthetic run configuration\n";
    cfg += "region = " + io::polygon_text(w.region) + '\n';
    cfg += "folds = 5\nsample_size = " + std::to_string(wc.private_users) + "\n";
    cfg += "estimation_draws = 50\nmnl_draws_per_fold = 40\nmxl_draws_per_fold = 40\n";
    cfg += "max_iterations = 200\ncandidate_count = 8\ncandidate_spacing_m = 200\ngrid_ps = 2 4\n";
    put("config.txt", cfg);
    r.summary["accounts"] = w.accounts.size();
    r.summary["stations"] = w.stations.size();
    r.summary["customers"] = w.customers.size();
    return r;
}

// ---------------------------------------------------------------------------
// classify

inline StageReport run_classify(Context const& ctx)
{
    const auto s = ctx.settings();
    if (s.region.empty()) {
        throw IoError("config key 'region' is required for classify");
    }
    detail::StageWriter w(ctx, "classify");
    w.input(ctx.data_dir / "accounts.csv", "data/accounts.csv");
    w.input(ctx.data_dir / "sessions.csv", "data/sessions.csv");
    w.input(ctx.data_dir / "stations.geojson", "data/stations.geojson");
    const auto accounts = io::load_accounts(ctx.data_dir);
    const auto stations = io::read_stations(ctx.data_dir / "stations.geojson", s.excluded_operators);

    std::string cls = "account_id,class,reason\n";
    std::vector<Account> privates;
    std::map<std::string, std::size_t> counts;
    for (auto const& a : accounts) {
        const auto c = classify_account(a, s.window, s.classifier);
        cls += a.account_id + ',' + std::string(to_string(c.cls)) + ',' + std::string(to_string(c.reason)) + '\n';
        ++counts[std::string(to_string(c.cls))];
        if (c.cls == AccountClass::Private) {
            privates.push_back(a);
        }
    }
    std::unordered_map<std::string, LatLon> where;
    for (auto const& st : stations) {
        where.emplace(st.station_id, st.where);
    }
    const auto kept = filter_private_region(privates, s.region, where, s.max_daily_sessions);
    std::string ids = "account_id\n";
    std::vector<RawSession> kept_sessions;
    for (auto const& a : kept) {
        ids += a.account_id + '\n';
        kept_sessions.insert(kept_sessions.end(), a.sessions.begin(), a.sessions.end());
    }
    std::string summary = "level,count,duration_q1,duration_median,duration_q3,energy_q1,energy_median,energy_q3,"
                          "sessions_per_month,stations_per_month\n";
    for (auto level : {Level::L2, Level::L3}) {
        std::vector<RawSession> lv;
        for (auto const& x : kept_sessions) {
            if (x.level == level) {
                lv.push_back(x);
            }
        }
        if (lv.empty()) {
            continue;
        }
        std::stable_sort(lv.begin(), lv.end(), [](auto const& a, auto const& b) { return a.start < b.start; });
        const auto st = session_summary(lv);
        summary += detail::level_tag(level) + ',' + std::to_string(st.count) + ',' + csv::fixed(st.duration_min.q1, 2) +
                   ',' + csv::fixed(st.duration_min.median, 2) + ',' + csv::fixed(st.duration_min.q3, 2) + ',' +
                   csv::fixed(st.energy_kwh.q1, 3) + ',' + csv::fixed(st.energy_kwh.median, 3) + ',' +
                   csv::fixed(st.energy_kwh.q3, 3) + ',' + csv::fixed(st.sessions_per_month, 4) + ',' +
                   csv::fixed(st.stations_per_month, 4) + '\n';
    }
    w.write("classify/classification.csv", cls);
    w.write("classify/private_accounts.csv", ids);
    w.write("classify/session_summary.csv", summary);
    for (auto const& [k, v] : counts) {
        w.report().summary["class_" + k] = v;
    }
    w.report().summary["private_in_region"] = kept.size();
    return w.finish("classify/manifest.json");
}

// ---------------------------------------------------------------------------
// encode

inline StageReport run_encode(Context const& ctx, Level level)
{
    const auto s = ctx.settings();
    detail::StageWriter w(ctx, "encode");
    const auto ids_path = ctx.work_dir / "classify" / "private_accounts.csv";
    w.input(ids_path, "work/classify/private_accounts.csv");
    for (auto const* f : {"accounts.csv", "sessions.csv", "stations.geojson", "nodes.csv", "network.csv"}) {
        w.input(ctx.data_dir / f, std::string("data/") + f);
    }
    detail::hash_amenity_inputs(w, ctx.data_dir);

    const auto ids = detail::read_id_list(ids_path, "account_id");
    const std::set<std::string> keep(ids.begin(), ids.end());
    const auto accounts = io::load_accounts(ctx.data_dir);
    const auto stations = io::read_stations(ctx.data_dir / "stations.geojson", s.excluded_operators);
    const auto net = io::load_network(ctx.data_dir);
    const auto amenities = io::load_amenities(ctx.data_dir);

    PanelDataset data;
    std::size_t skipped = 0;
    for (auto const& a : accounts) {
        if (!keep.count(a.account_id) || !a.postal_centroid) {
            continue;
        }
        const DistanceField field(net, *a.postal_centroid, s.encoding.snap_radius_m);
        for (auto const& sess : a.sessions) {
            if (sess.level != level) {
                continue;
            }
            const auto alts =
                build_choice_set(stations, field, *a.postal_centroid, sess.start, level, amenities, s.encoding);
            ChoiceObservation o;
            o.user_id = a.account_id;
            o.when = sess.start;
            bool found = false;
            for (std::size_t j = 0; j < alts.size(); ++j) {
                if (alts[j].station_id == sess.station_id) {
                    o.chosen = j;
                    found = true;
                }
                o.alternatives.push_back(alts[j].x);
                o.station_ids.push_back(alts[j].station_id);
            }
            if (!found) {
                ++skipped; // chosen station unreachable or not open at that time
                continue;
            }
            data.add(std::move(o));
        }
    }
    data.sort_by_time();
    w.write("encode/observations_" + detail::level_tag(level) + ".csv", io::observations_csv(data));
    w.report().summary["users"] = data.num_users();
    w.report().summary["observations"] = data.num_observations();
    w.report().summary["skipped_sessions"] = skipped;
    return w.finish("encode/manifest_" + detail::level_tag(level) + ".json");
}

// ---------------------------------------------------------------------------
// estimate / validate

namespace detail {

struct PreparedData {
    PanelDataset data;
    TrimResult trim;
};

inline PreparedData prepare_observations(Context const& ctx, Level level, Settings const& s, StageWriter& w)
{
    const auto path = ctx.work_dir / "encode" / ("observations_" + level_tag(level) + ".csv");
    w.input(path, "work/encode/observations_" + level_tag(level) + ".csv");
    const auto raw = io::read_observations(csv::Table::read(path));
    PreparedData p;
    p.trim = trim_distance_outliers(raw, s.outlier_quantile);
    p.data = p.trim.kept;
    return p;
}

inline std::string std_error_csv(std::vector<EstimationResult> const& fits)
{
    std::string out = "parameter";
    for (std::size_t n = 0; n < fits.size(); ++n) {
        out += ",estimate_fold" + std::to_string(n) + ",se_fold" + std::to_string(n);
    }
    out += '\n';
    const std::size_t K = fits.empty() ? 0 : fits.front().params.num_free();
    for (std::size_t k = 0; k < K; ++k) {
        out += "beta." + std::string(kCoefNames[k % kNumCoef]) + (k < kNumCoef ? ".mu" : ".sigma");
        for (auto const& f : fits) {
            const double est = k < kNumCoef ? f.params.mu[k] : f.params.sigma[k - kNumCoef];
            const double se = f.std_errors[k];
            out += ',' + csv::fmt(est) + ',' + (std::isnan(se) ? std::string("nan") : csv::fmt(se));
        }
        out += '\n';
    }
    return out;
}

inline std::vector<ParameterSet> read_fold_params(fs::path const& dir, std::size_t k)
{
    std::vector<ParameterSet> out;
    for (std::size_t n = 0; n < k; ++n) {
        out.push_back(parse_parameter_set(csv::read_file(dir / ("fold" + std::to_string(n) + ".params"))));
    }
    return out;
}

} // namespace detail

inline StageReport run_estimate(Context const& ctx, ModelKind kind, Level level)
{
    auto s = ctx.settings();
    s.estimation.mode = s.mode_for(level);
    detail::StageWriter w(ctx, "estimate");
    const auto prepared = detail::prepare_observations(ctx, level, s, w);
    const auto dir = detail::estimate_dir(kind, level);
    const auto plan = grouped_kfold(user_counts(prepared.data), s.folds, ctx.seed);
    if (plan.k < 2) {
        throw ValidationError("cross-validation needs at least two folds");
    }

    std::vector<EstimationResult> fits;
    std::vector<IndicatorReport> reports;
    std::string status = "fold,status,iterations,gradient_norm,log_likelihood,non_identified\n";
    for (std::size_t n = 0; n < plan.k; ++n) {
        const auto fd = make_fold(prepared.data, plan, n, s.estimation);
        auto fit = fit_fold(fd, n, kind, s.estimation);
        reports.push_back(estimation_report(fd, fit, s.estimation));
        std::string ni;
        for (auto k : fit.non_identified) {
            ni += (ni.empty() ? "" : ";") + std::string(kCoefNames[k % kNumCoef]) + (k < kNumCoef ? ".mu" : ".sigma");
        }
        status += std::to_string(n) + ',' + std::string(to_string(fit.status)) + ',' +
                  std::to_string(fit.iterations) + ',' + csv::fmt(fit.gradient_norm) + ',' + csv::fmt(fit.ll_final) +
                  ',' + ni + '\n';
        w.write(dir + "/fold" + std::to_string(n) + ".params", serialize(fit.params));
        if (fit.status != FitStatus::Converged) {
            w.report().validation_failed = true;
        }
        fits.push_back(std::move(fit));
    }
    w.write(dir + "/cv_plan.json", io::fold_plan_json(plan));
    w.write(dir + "/estimation_indicators.csv", indicator_csv(reports));
    w.write(dir + "/std_errors.csv", detail::std_error_csv(fits));
    w.write(dir + "/fit_status.csv", status);
    w.report().summary["model"] = to_string(kind);
    w.report().summary["level"] = detail::level_tag(level);
    w.report().summary["observations"] = prepared.data.num_observations();
    w.report().summary["trimmed"] = prepared.trim.removed;
    w.report().summary["cutoff_km"] = prepared.trim.cutoff_km;
    return w.finish(dir + "/manifest_estimate.json");
}

inline StageReport run_validate(Context const& ctx, ModelKind kind, Level level)
{
    auto s = ctx.settings();
    s.estimation.mode = s.mode_for(level);
    detail::StageWriter w(ctx, "validate");
    const auto prepared = detail::prepare_observations(ctx, level, s, w);
    const auto dir = detail::estimate_dir(kind, level);
    w.input(ctx.work_dir / dir / "cv_plan.json", "work/" + dir + "/cv_plan.json");
    const auto plan = io::read_fold_plan(ctx.work_dir / dir / "cv_plan.json");
    for (std::size_t n = 0; n < plan.k; ++n) {
        const auto f = "fold" + std::to_string(n) + ".params";
        w.input(ctx.work_dir / dir / f, "work/" + dir + "/" + f);
    }
    const auto params = detail::read_fold_params(ctx.work_dir / dir, plan.k);
    for (auto const& p : params) {
        if (p.kind != kind) {
            throw ValidationError("fold parameters in " + dir + " are not " + std::string(to_string(kind)));
        }
    }
    const auto ratios = ratio_table(params);
    const auto avg = average_ratio_parameters(ratios);
    std::vector<IndicatorReport> reports;
    for (std::size_t n = 0; n < plan.k; ++n) {
        const auto fd = make_fold(prepared.data, plan, n, s.estimation);
        reports.push_back(validation_report(fd, n, params[n], s.estimation, &avg));
    }
    w.write(dir + "/validation_indicators.csv", indicator_csv(reports));
    w.write(dir + "/ratios.csv", ratio_csv(ratios));
    w.report().summary["model"] = to_string(kind);
    w.report().summary["level"] = detail::level_tag(level);
    nlohmann::ordered_json rho = nlohmann::ordered_json::array();
    for (auto const& r : reports) {
        rho.push_back(r.rho);
    }
    w.report().summary["validation_rho"] = rho;
    return w.finish(dir + "/manifest_validate.json");
}

// ---------------------------------------------------------------------------
// simulate

namespace detail {

/// Existing level 2 stations open at the siting date plus generated
/// candidates; written to `simulate/sites.csv` on first use.
inline std::vector<SiteStation> load_or_make_sites(Context const& ctx, Settings const& s,
                                                   std::vector<StationSnapshot> const& stations)
{
    const auto path = ctx.work_dir / "simulate" / "sites.csv";
    if (fs::exists(path)) {
        return io::read_sites(csv::Table::read(path));
    }
    if (s.region.empty()) {
        throw IoError("config key 'region' is required to generate candidates");
    }
    std::vector<SiteStation> sites;
    for (auto const& st : stations) {
        if (st.level == Level::L2 && !st.excluded_operator && st.outlets_at(s.siting_date) > 0) {
            sites.push_back({st.station_id, st.where, true});
        }
    }
    const auto cands = generate_candidates(sites, s.candidates);
    sites.insert(sites.end(), cands.begin(), cands.end());
    csv::write_file(path, io::sites_csv(sites));
    return sites;
}

} // namespace detail

/// Attributes of every customer-site pair at the siting date.
inline PairAttributes pair_attributes(std::vector<Customer> const& customers, std::vector<SiteStation> const& sites,
                                      std::vector<StationSnapshot> const& stations, RoadNetwork const& net,
                                      AmenityHistory const& amenities, Settings const& s)
{
    PairAttributes pa;
    for (auto const& c : customers) {
        pa.customer_ids.push_back(c.id);
    }
    std::map<std::string, StationSnapshot const*> by_id;
    for (auto const& st : stations) {
        by_id.emplace(st.station_id, &st);
    }
    auto const& snapshot = amenities.at(s.siting_date);
    std::vector<AttributeVector> station_side;
    for (auto const& site : sites) {
        pa.station_ids.push_back(site.id);
        int outlets = s.candidate_outlets;
        if (site.existing) {
            auto it = by_id.find(site.id);
            if (it == by_id.end()) {
                throw ValidationError("site " + site.id + " is marked existing but is not in stations.geojson");
            }
            outlets = it->second->outlets_at(s.siting_date);
        }
        station_side.push_back(station_attributes(site.where, outlets, snapshot, Level::L2, s.encoding));
    }
    for (auto const& c : customers) {
        const DistanceField field(net, c.where, s.encoding.snap_radius_m);
        for (std::size_t j = 0; j < sites.size(); ++j) {
            auto x = station_side[j];
            const auto d = field.km_to(sites[j].where);
            if (!d) {
                throw ValidationError("site " + sites[j].id + " is unreachable from customer " + c.id);
            }
            x.dist_km = *d;
            x.walk_home = walk_home_flag(c.where, sites[j].where, s.encoding.walk_threshold_m);
            pa.x.push_back(x);
        }
    }
    return pa;
}

inline StageReport run_simulate(Context const& ctx, UtilitySpec spec)
{
    const auto s = ctx.settings();
    detail::StageWriter w(ctx, "simulate");
    for (auto const* f : {"customers.csv", "stations.geojson", "nodes.csv", "network.csv"}) {
        w.input(ctx.data_dir / f, std::string("data/") + f);
    }
    detail::hash_amenity_inputs(w, ctx.data_dir);
    const auto stations = io::read_stations(ctx.data_dir / "stations.geojson", s.excluded_operators);
    const auto customers = io::read_customers(csv::Table::read(ctx.data_dir / "customers.csv"));
    const auto sites = detail::load_or_make_sites(ctx, s, stations);
    w.input(ctx.work_dir / "simulate" / "sites.csv", "work/simulate/sites.csv");
    const auto pa = pair_attributes(customers, sites, stations, io::load_network(ctx.data_dir),
                                    io::load_amenities(ctx.data_dir), s);

    std::vector<ParameterSet> folds;
    if (spec != UtilitySpec::Distance) {
        const auto kind = spec == UtilitySpec::MNL ? ModelKind::MNL : ModelKind::MXL;
        const auto dir = detail::estimate_dir(kind, Level::L2);
        const auto plan = io::read_fold_plan(ctx.work_dir / dir / "cv_plan.json");
        for (std::size_t n = 0; n < plan.k; ++n) {
            const auto f = "fold" + std::to_string(n) + ".params";
            w.input(ctx.work_dir / dir / f, "work/" + dir + "/" + f);
        }
        folds = detail::read_fold_params(ctx.work_dir / dir, plan.k);
    }
    const auto u = simulate_utilities(pa, folds, spec, s.simulation);
    const auto name = "simulate/utilities_" + std::string(to_string(spec));
    const auto text = utility_csv(u);
    w.write(name + ".csv", text);
    w.write(name + ".manifest", utility_manifest(u, text));
    w.report().summary["spec"] = to_string(spec);
    w.report().summary["customers"] = u.customers();
    w.report().summary["stations"] = u.stations();
    return w.finish(name + ".json");
}

// ---------------------------------------------------------------------------
// optimize / export / compare

struct SitingRequest {
    SitingModel model = SitingModel::PMedian;
    UtilitySpec spec = UtilitySpec::Distance;
    std::size_t p = 1;
    bool consider_existing = true;

    [[nodiscard]] std::string tag() const
    {
        return std::string(to_string(model)) + '_' + std::string(to_string(spec)) + '_' +
               (consider_existing ? "existing" : "noexisting") + "_p" + std::to_string(p);
    }
};

inline SitingInstance load_instance(Context const& ctx, SitingRequest const& req, detail::StageWriter* w = nullptr)
{
    const auto s = ctx.settings();
    const auto sites_path = ctx.work_dir / "simulate" / "sites.csv";
    const auto u_path = ctx.work_dir / "simulate" / ("utilities_" + std::string(to_string(req.spec)) + ".csv");
    if (w != nullptr) {
        w->input(sites_path, "work/simulate/sites.csv");
        w->input(u_path, "work/simulate/utilities_" + std::string(to_string(req.spec)) + ".csv");
    }
    const auto sites = io::read_sites(csv::Table::read(sites_path));
    SitingInstance inst;
    inst.utilities = read_utility_csv(csv::Table::read(u_path), req.spec);
    std::map<std::string, bool> existing;
    for (auto const& st : sites) {
        existing[st.id] = st.existing;
    }
    for (auto const& id : inst.utilities.station_ids) {
        auto it = existing.find(id);
        if (it == existing.end()) {
            throw ValidationError("utility column " + id + " is not a known site");
        }
        inst.existing.push_back(it->second);
    }
    inst.p = req.p;
    inst.consider_existing = req.consider_existing;
    inst.model = req.model;
    inst.exact_threshold = s.exact_threshold;
    return inst;
}

inline StageReport run_optimize(Context const& ctx, SitingRequest const& req)
{
    detail::StageWriter w(ctx, "optimize");
    const auto inst = load_instance(ctx, req, &w);
    const auto sol = solve(inst);
    const auto sites = io::read_sites(csv::Table::read(ctx.work_dir / "simulate" / "sites.csv"));
    nlohmann::ordered_json j;
    j["model"] = to_string(sol.model);
    j["spec"] = to_string(req.spec);
    j["p"] = req.p;
    j["consider_existing"] = req.consider_existing;
    j["objective"] = sol.objective;
    j["solver"] = to_string(sol.solver);
    j["certified"] = sol.certified;
    j["active"] = active_fraction(sol.open, inst.utilities, always_open_ids(inst));
    j["open"] = sol.open;
    nlohmann::ordered_json assign = nlohmann::ordered_json::object();
    for (std::size_t i = 0; i < sol.assignment.size(); ++i) {
        assign[inst.utilities.customer_ids[i]] = sol.assignment[i];
    }
    j["assignment"] = std::move(assign);
    std::vector<SiteStation> shown;
    for (auto const& st : sites) {
        if (!st.existing || req.consider_existing) {
            shown.push_back(st);
        }
    }
    w.write("optimize/solution_" + req.tag() + ".json", j.dump(2) + '\n');
    w.write("optimize/solution_" + req.tag() + ".geojson", solution_geojson(sol, shown));
    w.report().summary["objective"] = sol.objective;
    w.report().summary["certified"] = sol.certified;
    return w.finish("optimize/manifest_" + req.tag() + ".json");
}

inline StageReport run_export_milp(Context const& ctx, SitingRequest const& req, std::string rel_out = {})
{
    detail::StageWriter w(ctx, "export-milp");
    const auto inst = load_instance(ctx, req, &w);
    if (rel_out.empty()) {
        rel_out = "milp/" + req.tag() + ".lp";
    }
    w.write(rel_out, milp_text(inst));
    return w.finish("milp/manifest_" + req.tag() + ".json");
}

inline StageReport run_compare(Context const& ctx)
{
    const auto s = ctx.settings();
    detail::StageWriter w(ctx, "compare");
    const auto sites_path = ctx.work_dir / "simulate" / "sites.csv";
    w.input(sites_path, "work/simulate/sites.csv");
    const auto sites = io::read_sites(csv::Table::read(sites_path));
    std::map<UtilitySpec, UtilityMatrix> utilities;
    for (auto spec : kAllSpecs) {
        const auto name = "utilities_" + std::string(to_string(spec)) + ".csv";
        w.input(ctx.work_dir / "simulate" / name, "work/simulate/" + name);
        utilities.emplace(spec, read_utility_csv(csv::Table::read(ctx.work_dir / "simulate" / name), spec));
    }
    std::map<std::string, bool> flag;
    for (auto const& st : sites) {
        flag[st.id] = st.existing;
    }
    std::vector<bool> existing;
    for (auto const& id : utilities.begin()->second.station_ids) {
        existing.push_back(flag.at(id));
    }
    for (auto const& [spec, u] : utilities) {
        if (u.station_ids != utilities.begin()->second.station_ids ||
            u.customer_ids != utilities.begin()->second.customer_ids) {
            throw ValidationError("utility matrices do not share customers and stations");
        }
    }
    const auto candidates = static_cast<std::size_t>(std::count(existing.begin(), existing.end(), false));
    GridConfig g;
    g.exact_threshold = s.exact_threshold;
    g.jobs = ctx.jobs;
    g.ps.clear();
    for (auto p : s.grid_ps) {
        if (p <= candidates) {
            g.ps.push_back(p);
        }
    }
    if (g.ps.empty()) {
        throw ValidationError("no grid value of p fits the " + std::to_string(candidates) + " candidates");
    }
    const auto result = run_grid(utilities, existing, g, ctx.work_dir / "compare");
    w.report().artifacts.push_back("compare/grid.csv");
    for (auto const& [key, gm] : result.gaps) {
        w.report().artifacts.push_back("compare/gaps_" + key + ".csv");
    }
    // hash what run_grid wrote
    nlohmann::ordered_json cells = nlohmann::ordered_json::object();
    for (auto const& r : result.cells) {
        cells[r.cell.key()] = r.solution.objective;
    }
    w.report().summary["cells"] = result.cells.size();
    w.report().summary["objectives"] = std::move(cells);
    w.write("compare/summary.json", w.report().summary.dump(2) + '\n');
    return w.finish("compare/manifest.json");
}

// ---------------------------------------------------------------------------
// whole chain

/// Every stage after synth, in order, on level 2 data: classify, encode,
/// estimate and validate both models, simulate the four specifications,
/// optimize and export one p-median instance, compare.
inline std::vector<StageReport> run_all(Context const& ctx)
{
    std::vector<StageReport> out;
    out.push_back(run_classify(ctx));
    out.push_back(run_encode(ctx, Level::L2));
    for (auto kind : {ModelKind::MNL, ModelKind::MXL}) {
        out.push_back(run_estimate(ctx, kind, Level::L2));
        out.push_back(run_validate(ctx, kind, Level::L2));
    }
    for (auto spec : kAllSpecs) {
        out.push_back(run_simulate(ctx, spec));
    }
    SitingRequest req;
    req.spec = UtilitySpec::MNL;
    req.p = 2;
    out.push_back(run_optimize(ctx, req));
    out.push_back(run_export_milp(ctx, req));
    out.push_back(run_compare(ctx));
    return out;
}

} // namespace evcs::pipeline
