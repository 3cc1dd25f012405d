#pragma once

#include "evcs/csv.hpp"
#include "evcs/error.hpp"
#include "evcs/geo.hpp"
#include "evcs/rng.hpp"
#include "evcs/utility_sim.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <limits>
#include <map>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

namespace evcs {

enum class SitingModel { PMedian, MaxMin };

inline std::string_view to_string(SitingModel m) { return m == SitingModel::PMedian ? "pmedian" : "maxmin"; }

inline SitingModel parse_siting_model(std::string_view s)
{
    if (s == "pmedian" || s == "p-median") {
        return SitingModel::PMedian;
    }
    if (s == "maxmin" || s == "max-min") {
        return SitingModel::MaxMin;
    }
    throw ValidationError("unknown siting model '" + std::string(s) + "'");
}

enum class SolverKind { BruteForce, BranchBound, LocalSearch };

inline std::string_view to_string(SolverKind s)
{
    switch (s) {
    case SolverKind::BruteForce: return "brute_force";
    case SolverKind::BranchBound: return "branch_bound";
    case SolverKind::LocalSearch: return "local_search";
    }
    return "?";
}

struct Customer {
    std::string id;
    LatLon where;
    double weight = 1.0;
};

struct SiteStation {
    std::string id;
    LatLon where;
    bool existing = false;
};

/// Utilities are given for every station column in `utilities.station_ids`;
/// `existing` flags (same order) mark stations that are already built.
struct SitingInstance {
    UtilityMatrix utilities;
    std::vector<bool> existing;
    std::vector<double> weights; // empty = unweighted
    std::size_t p = 1;
    bool consider_existing = true;
    SitingModel model = SitingModel::PMedian;
    /// Largest candidate count solved exactly.
    std::size_t exact_threshold = 20;

    /// Candidate columns in ascending station-id order.
    [[nodiscard]] std::vector<std::size_t> candidate_columns() const
    {
        std::vector<std::size_t> c;
        for (std::size_t j = 0; j < existing.size(); ++j) {
            if (!existing[j]) {
                c.push_back(j);
            }
        }
        std::sort(c.begin(), c.end(), [&](std::size_t a, std::size_t b) {
            return utilities.station_ids[a] < utilities.station_ids[b];
        });
        return c;
    }

    [[nodiscard]] std::vector<std::size_t> open_existing_columns() const
    {
        std::vector<std::size_t> c;
        if (consider_existing) {
            for (std::size_t j = 0; j < existing.size(); ++j) {
                if (existing[j]) {
                    c.push_back(j);
                }
            }
        }
        return c;
    }

    [[nodiscard]] double weight(std::size_t i) const { return weights.empty() ? 1.0 : weights[i]; }

    void validate() const
    {
        utilities.validate();
        if (existing.size() != utilities.stations()) {
            throw ValidationError("existing flags do not match the station list");
        }
        if (!weights.empty() && weights.size() != utilities.customers()) {
            throw ValidationError("customer weights do not match the customer list");
        }
        const auto m = candidate_columns().size();
        if (p < 1 || p > m) {
            throw ValidationError("p = " + std::to_string(p) + " is infeasible with " + std::to_string(m) +
                                  " candidate stations");
        }
    }
};

struct SitingSolution {
    SitingModel model = SitingModel::PMedian;
    std::vector<std::string> open;       // candidate ids, ascending
    std::vector<std::string> assignment; // per customer, the utility-argmax station
    double objective = 0.0;
    SolverKind solver = SolverKind::BranchBound;
    bool certified = false;
};

struct ObjectivePair {
    double pmedian = 0.0;
    double maxmin = 0.0;
};

namespace detail {

/// Per-customer best utility over `open` plus `always` columns.
inline std::vector<double> best_utilities(UtilityMatrix const& u, std::span<const std::size_t> open,
                                          std::span<const std::size_t> always)
{
    std::vector<double> best(u.customers(), -std::numeric_limits<double>::infinity());
    for (std::size_t i = 0; i < u.customers(); ++i) {
        for (auto j : always) {
            best[i] = std::max(best[i], u.at(i, j));
        }
        for (auto j : open) {
            best[i] = std::max(best[i], u.at(i, j));
        }
    }
    return best;
}

inline ObjectivePair objectives_from_best(std::vector<double> const& best, std::vector<double> const& weights)
{
    ObjectivePair o;
    o.maxmin = best.empty() ? 0.0 : std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < best.size(); ++i) {
        o.pmedian += (weights.empty() ? 1.0 : weights[i]) * best[i];
        o.maxmin = std::min(o.maxmin, best[i]);
    }
    return o;
}

inline double objective_of(SitingInstance const& inst, std::span<const std::size_t> open,
                           std::span<const std::size_t> always)
{
    const auto o = objectives_from_best(best_utilities(inst.utilities, open, always), inst.weights);
    return inst.model == SitingModel::PMedian ? o.pmedian : o.maxmin;
}

inline std::vector<std::size_t> columns_of(UtilityMatrix const& u, std::vector<std::string> const& ids)
{
    std::map<std::string, std::size_t> index;
    for (std::size_t j = 0; j < u.stations(); ++j) {
        index.emplace(u.station_ids[j], j);
    }
    std::vector<std::size_t> out;
    for (auto const& id : ids) {
        auto it = index.find(id);
        if (it == index.end()) {
            throw ValidationError("unknown station id '" + id + "'");
        }
        out.push_back(it->second);
    }
    return out;
}

} // namespace detail

/// Both objectives of a fixed open set under `u`. `always_open` lists
/// stations that are open regardless (existing ones, when considered).
inline ObjectivePair evaluate_solution(std::vector<std::string> const& open, UtilityMatrix const& u,
                                       std::vector<std::string> const& always_open = {},
                                       std::vector<double> const& weights = {})
{
    const auto cols = detail::columns_of(u, open);
    const auto always = detail::columns_of(u, always_open);
    if (cols.empty() && always.empty()) {
        throw ValidationError("solution opens no station");
    }
    return detail::objectives_from_best(detail::best_utilities(u, cols, always), weights);
}

/// Existing station ids of an instance that are open in every solution.
inline std::vector<std::string> always_open_ids(SitingInstance const& inst)
{
    std::vector<std::string> ids;
    for (auto j : inst.open_existing_columns()) {
        ids.push_back(inst.utilities.station_ids[j]);
    }
    return ids;
}

inline ObjectivePair evaluate_solution(SitingInstance const& inst, std::vector<std::string> const& open)
{
    return evaluate_solution(open, inst.utilities, always_open_ids(inst), inst.weights);
}

/// Fills ids, assignment and objective of a solution from open columns.
inline SitingSolution make_solution(SitingInstance const& inst, std::vector<std::size_t> open, SolverKind solver,
                                    bool certified)
{
    SitingSolution s;
    s.model = inst.model;
    s.solver = solver;
    s.certified = certified;
    std::sort(open.begin(), open.end(),
              [&](std::size_t a, std::size_t b) { return inst.utilities.station_ids[a] < inst.utilities.station_ids[b]; });
    for (auto j : open) {
        s.open.push_back(inst.utilities.station_ids[j]);
    }
    // argmax over open and always-open columns; ties go to the lowest column
    std::vector<std::size_t> avail = open;
    const auto always = inst.open_existing_columns();
    avail.insert(avail.end(), always.begin(), always.end());
    std::sort(avail.begin(), avail.end());
    for (std::size_t i = 0; i < inst.utilities.customers(); ++i) {
        std::size_t best = avail.front();
        for (auto j : avail) {
            if (inst.utilities.at(i, j) > inst.utilities.at(i, best)) {
                best = j;
            }
        }
        s.assignment.push_back(inst.utilities.station_ids[best]);
    }
    s.objective = detail::objective_of(inst, open, always);
    return s;
}

// ---------------------------------------------------------------------------
// p-median

namespace detail {

/// Greedy: repeatedly add the candidate with the largest objective.
inline std::vector<std::size_t> greedy_open(SitingInstance const& inst, std::vector<std::size_t> const& cand)
{
    const auto always = inst.open_existing_columns();
    std::vector<std::size_t> open;
    std::vector<bool> used(cand.size(), false);
    for (std::size_t s = 0; s < inst.p; ++s) {
        std::size_t pick = cand.size();
        double pick_val = -std::numeric_limits<double>::infinity();
        for (std::size_t c = 0; c < cand.size(); ++c) {
            if (used[c]) {
                continue;
            }
            open.push_back(cand[c]);
            const double v = objective_of(inst, open, always);
            open.pop_back();
            if (pick == cand.size() || v > pick_val) {
                pick = c;
                pick_val = v;
            }
        }
        used[pick] = true;
        open.push_back(cand[pick]);
    }
    return open;
}

/// Swap local search from `open` until no single exchange improves.
inline std::vector<std::size_t> swap_search(SitingInstance const& inst, std::vector<std::size_t> const& cand,
                                            std::vector<std::size_t> open)
{
    const auto always = inst.open_existing_columns();
    double cur = objective_of(inst, open, always);
    for (bool improved = true; improved;) {
        improved = false;
        for (std::size_t a = 0; a < open.size() && !improved; ++a) {
            for (auto c : cand) {
                if (std::find(open.begin(), open.end(), c) != open.end()) {
                    continue;
                }
                const auto keep = open[a];
                open[a] = c;
                const double v = objective_of(inst, open, always);
                if (v > cur + 1e-12 * (1.0 + std::abs(cur))) {
                    cur = v;
                    improved = true;
                    break;
                }
                open[a] = keep;
            }
        }
    }
    return open;
}

struct PMedianSearch {
    SitingInstance const& inst;
    std::vector<std::size_t> const& cand;
    std::vector<std::size_t> always;
    double bound_value; // value every kept leaf must approach
    std::vector<std::size_t> chosen;
    std::optional<std::vector<std::size_t>> best;
    double best_value = -std::numeric_limits<double>::infinity();

    void run(std::size_t k, std::vector<double> const& cur)
    {
        const std::size_t s = chosen.size();
        const std::size_t need = inst.p - s;
        if (need == 0) {
            const double v = objective_of(inst, chosen, always);
            if (!best || v > best_value) {
                best = chosen;
                best_value = v;
            }
            bound_value = std::max(bound_value, v);
            return;
        }
        if (cand.size() - k < need) {
            return;
        }
        if (prune(k, need, cur)) {
            return;
        }
        // include cand[k] first so subsets are visited in lexicographic order
        std::vector<double> next = cur;
        for (std::size_t i = 0; i < next.size(); ++i) {
            next[i] = std::max(next[i], inst.utilities.at(i, cand[k]));
        }
        chosen.push_back(cand[k]);
        run(k + 1, next);
        chosen.pop_back();
        run(k + 1, cur);
    }

    /// Submodular bound: current value plus the `need` largest single gains.
    bool prune(std::size_t k, std::size_t need, std::vector<double> const& cur) const
    {
        double base = 0.0;
        for (std::size_t i = 0; i < cur.size(); ++i) {
            if (!std::isfinite(cur[i])) {
                return false;
            }
            base += inst.weight(i) * cur[i];
        }
        std::vector<double> gains;
        gains.reserve(cand.size() - k);
        for (std::size_t c = k; c < cand.size(); ++c) {
            double g = 0.0;
            for (std::size_t i = 0; i < cur.size(); ++i) {
                g += inst.weight(i) * std::max(0.0, inst.utilities.at(i, cand[c]) - cur[i]);
            }
            gains.push_back(g);
        }
        std::partial_sort(gains.begin(), gains.begin() + static_cast<std::ptrdiff_t>(need), gains.end(),
                          std::greater<>());
        const double ub = base + std::accumulate(gains.begin(), gains.begin() + static_cast<std::ptrdiff_t>(need), 0.0);
        return ub < bound_value - 1e-9 * (1.0 + std::abs(bound_value));
    }
};

} // namespace detail

/// Maximizes sum_i max_{j in S or existing} u_ij over |S| = p. Exact
/// (branch-and-bound, lexicographically first optimum by station id) up to
/// `exact_threshold` candidates; greedy plus swap search above, uncertified.
inline SitingSolution solve_pmedian(SitingInstance inst)
{
    inst.model = SitingModel::PMedian;
    inst.validate();
    const auto cand = inst.candidate_columns();
    const auto greedy = detail::greedy_open(inst, cand);
    if (cand.size() > inst.exact_threshold) {
        return make_solution(inst, detail::swap_search(inst, cand, greedy), SolverKind::LocalSearch, false);
    }
    const auto always = inst.open_existing_columns();
    detail::PMedianSearch search{inst, cand, always, detail::objective_of(inst, greedy, always), {}, {}, 0.0};
    search.best_value = -std::numeric_limits<double>::infinity();
    search.run(0, detail::best_utilities(inst.utilities, {}, always));
    return make_solution(inst, *search.best, SolverKind::BranchBound, true);
}

// ---------------------------------------------------------------------------
// max-min

namespace detail {

/// Exact set cover feasibility: can customers be covered at level tau using
/// at most `budget` columns from `allowed` (with `pre` already open)?
class CoverSearch {
  public:
    CoverSearch(SitingInstance const& inst, double tau) : inst_{inst}, tau_{tau} {}

    bool feasible(std::vector<std::size_t> const& pre, std::vector<std::size_t> const& allowed, std::size_t budget)
    {
        if (allowed.size() < budget) {
            return false;
        }
        std::vector<bool> covered(inst_.utilities.customers(), false);
        for (auto j : inst_.open_existing_columns()) {
            mark(covered, j);
        }
        for (auto j : pre) {
            mark(covered, j);
        }
        return branch(covered, allowed, budget);
    }

  private:
    void mark(std::vector<bool>& covered, std::size_t j) const
    {
        for (std::size_t i = 0; i < covered.size(); ++i) {
            if (inst_.utilities.at(i, j) >= tau_) {
                covered[i] = true;
            }
        }
    }

    bool branch(std::vector<bool> const& covered, std::vector<std::size_t> const& allowed, std::size_t budget)
    {
        // uncovered customer with the fewest covering columns
        std::size_t pick = covered.size();
        std::size_t fewest = std::numeric_limits<std::size_t>::max();
        for (std::size_t i = 0; i < covered.size(); ++i) {
            if (covered[i]) {
                continue;
            }
            std::size_t n = 0;
            for (auto j : allowed) {
                n += inst_.utilities.at(i, j) >= tau_ ? 1 : 0;
            }
            if (n < fewest) {
                fewest = n;
                pick = i;
            }
        }
        if (pick == covered.size()) {
            return true;
        }
        if (budget == 0 || fewest == 0) {
            return false;
        }
        for (auto j : allowed) {
            if (inst_.utilities.at(pick, j) >= tau_) {
                auto next = covered;
                mark(next, j);
                if (branch(next, allowed, budget - 1)) {
                    return true;
                }
            }
        }
        return false;
    }

    SitingInstance const& inst_;
    double tau_;
};

/// Greedy cover: pick the column covering the most uncovered customers.
inline std::optional<std::vector<std::size_t>> greedy_cover(SitingInstance const& inst,
                                                            std::vector<std::size_t> const& cand, double tau)
{
    std::vector<bool> covered(inst.utilities.customers(), false);
    auto mark = [&](std::size_t j) {
        for (std::size_t i = 0; i < covered.size(); ++i) {
            if (inst.utilities.at(i, j) >= tau) {
                covered[i] = true;
            }
        }
    };
    for (auto j : inst.open_existing_columns()) {
        mark(j);
    }
    std::vector<std::size_t> open;
    std::vector<bool> used(cand.size(), false);
    while (open.size() < inst.p) {
        std::size_t pick = cand.size(), gain = 0;
        for (std::size_t c = 0; c < cand.size(); ++c) {
            if (used[c]) {
                continue;
            }
            std::size_t g = 0;
            for (std::size_t i = 0; i < covered.size(); ++i) {
                g += !covered[i] && inst.utilities.at(i, cand[c]) >= tau ? 1 : 0;
            }
            if (pick == cand.size() || g > gain) {
                pick = c;
                gain = g;
            }
        }
        used[pick] = true;
        open.push_back(cand[pick]);
        mark(cand[pick]);
    }
    if (std::find(covered.begin(), covered.end(), false) != covered.end()) {
        return std::nullopt;
    }
    return open;
}

} // namespace detail

/// Maximizes min_i max_{j in S or existing} u_ij over |S| = p by binary
/// search over the distinct utility values with a set-cover feasibility test.
/// Exact up to `exact_threshold` candidates (lexicographically first optimal
/// set by station id); greedy covers above, uncertified.
inline SitingSolution solve_maxmin(SitingInstance inst)
{
    inst.model = SitingModel::MaxMin;
    inst.validate();
    const auto cand = inst.candidate_columns();
    std::vector<double> levels;
    for (std::size_t i = 0; i < inst.utilities.customers(); ++i) {
        for (std::size_t j = 0; j < inst.utilities.stations(); ++j) {
            if (!inst.existing[j] || inst.consider_existing) {
                levels.push_back(inst.utilities.at(i, j));
            }
        }
    }
    std::sort(levels.begin(), levels.end());
    levels.erase(std::unique(levels.begin(), levels.end()), levels.end());
    if (inst.utilities.customers() == 0) {
        std::vector<std::size_t> first(cand.begin(), cand.begin() + static_cast<std::ptrdiff_t>(inst.p));
        return make_solution(inst, first, SolverKind::BranchBound, true);
    }

    const bool exact = cand.size() <= inst.exact_threshold;
    auto feasible = [&](double tau) {
        if (exact) {
            return detail::CoverSearch(inst, tau).feasible({}, cand, inst.p);
        }
        return detail::greedy_cover(inst, cand, tau).has_value();
    };
    // levels[0] is always feasible: every customer has some utility >= the minimum
    std::size_t lo = 0, hi = levels.size() - 1;
    while (lo < hi) {
        const std::size_t mid = lo + (hi - lo + 1) / 2;
        if (feasible(levels[mid])) {
            lo = mid;
        } else {
            hi = mid - 1;
        }
    }
    const double tau = levels[lo];

    if (!exact) {
        auto open = detail::greedy_cover(inst, cand, tau);
        return make_solution(inst, open ? *open : detail::greedy_open(inst, cand), SolverKind::LocalSearch, false);
    }
    // lexicographically first optimal set: fix the smallest feasible candidate
    // at each position
    std::vector<std::size_t> open;
    std::size_t from = 0;
    detail::CoverSearch cover(inst, tau);
    while (open.size() < inst.p) {
        for (std::size_t c = from; c < cand.size(); ++c) {
            auto pre = open;
            pre.push_back(cand[c]);
            std::vector<std::size_t> rest(cand.begin() + static_cast<std::ptrdiff_t>(c + 1), cand.end());
            if (cover.feasible(pre, rest, inst.p - pre.size())) {
                open = std::move(pre);
                from = c + 1;
                break;
            }
        }
    }
    return make_solution(inst, open, SolverKind::BranchBound, true);
}

inline SitingSolution solve(SitingInstance const& inst)
{
    return inst.model == SitingModel::PMedian ? solve_pmedian(inst) : solve_maxmin(inst);
}

// ---------------------------------------------------------------------------
// Candidate generation

struct CandidateGenConfig {
    Polygon region;
    std::size_t count = 200;
    double min_spacing_m = 200.0;
    std::uint64_t seed = 1;
    /// Rejection-sampling attempts allowed per requested candidate.
    std::size_t attempts_per_candidate = 1000;
};

/// Uniform rejection sampling in the region's bounding box; every accepted
/// point is at least `min_spacing_m` from existing stations and earlier
/// candidates. Ids are `cand_NNN`, zero-padded so string order = draw order.
inline std::vector<SiteStation> generate_candidates(std::vector<SiteStation> const& existing,
                                                    CandidateGenConfig const& cfg)
{
    if (cfg.region.empty()) {
        throw ValidationError("candidate region is empty");
    }
    if (!(cfg.min_spacing_m > 0.0)) {
        throw ValidationError("candidate spacing must be positive");
    }
    const auto box = cfg.region.bounds();
    SplitMix64 rng{stream_key(cfg.seed, 0x63616e64ULL)};
    const std::size_t width = std::to_string(std::max<std::size_t>(cfg.count, 1)).size();
    std::vector<SiteStation> out;
    std::size_t attempts = 0;
    const std::size_t cap = cfg.attempts_per_candidate * std::max<std::size_t>(cfg.count, 1);
    while (out.size() < cfg.count) {
        if (attempts++ >= cap) {
            throw ValidationError("candidate generation gave up after " + std::to_string(cap) + " attempts with " +
                                  std::to_string(out.size()) + " of " + std::to_string(cfg.count) +
                                  " candidates placed");
        }
        const LatLon p{box.lo.lat + rng.open_uniform() * (box.hi.lat - box.lo.lat),
                       box.lo.lon + rng.open_uniform() * (box.hi.lon - box.lo.lon)};
        if (!cfg.region.contains(p)) {
            continue;
        }
        auto too_close = [&](SiteStation const& s) { return haversine_m(s.where, p) < cfg.min_spacing_m; };
        if (std::any_of(existing.begin(), existing.end(), too_close) ||
            std::any_of(out.begin(), out.end(), too_close)) {
            continue;
        }
        std::string num = std::to_string(out.size() + 1);
        out.push_back({"cand_" + std::string(width - num.size(), '0') + num, p, false});
    }
    return out;
}

// ---------------------------------------------------------------------------
// Export

namespace detail {

inline std::string lp_name(std::string const& s)
{
    std::string out;
    for (char c : s) {
        const bool ok = std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '.';
        out += ok ? c : '_';
    }
    return out;
}

inline std::string lp_term(double coef, std::string const& var)
{
    return (coef < 0.0 ? " - " : " + ") + csv::fmt(std::abs(coef)) + ' ' + var;
}

} // namespace detail

/// CPLEX LP text of the instance's exact formulation. Existing stations that
/// are considered are open by definition, so they get assignment variables
/// but no z variable; unconsidered ones are left out.
inline std::string milp_text(SitingInstance const& inst)
{
    inst.validate();
    auto const& u = inst.utilities;
    const auto cand = inst.candidate_columns();
    std::vector<std::size_t> cols = cand;
    const auto always = inst.open_existing_columns();
    cols.insert(cols.end(), always.begin(), always.end());
    std::sort(cols.begin(), cols.end());

    auto z = [&](std::size_t j) { return "z_" + detail::lp_name(u.station_ids[j]); };
    auto y = [&](std::size_t i, std::size_t j) {
        return "y_" + detail::lp_name(u.customer_ids[i]) + '_' + detail::lp_name(u.station_ids[j]);
    };

    std::string out = "\\ " + std::string(to_string(inst.model)) + " siting, p = " + std::to_string(inst.p) + '\n';
    out += "Maximize\n obj:";
    if (inst.model == SitingModel::PMedian) {
        for (std::size_t i = 0; i < u.customers(); ++i) {
            for (auto j : cols) {
                out += detail::lp_term(inst.weight(i) * u.at(i, j), y(i, j));
            }
        }
    } else {
        out += " alpha";
    }
    out += "\nSubject To\n";
    for (std::size_t i = 0; i < u.customers(); ++i) {
        out += " assign_" + detail::lp_name(u.customer_ids[i]) + ':';
        for (auto j : cols) {
            out += " + " + y(i, j);
        }
        out += " = 1\n";
    }
    for (std::size_t i = 0; i < u.customers(); ++i) {
        for (auto j : cand) {
            out += " link_" + detail::lp_name(u.customer_ids[i]) + '_' + detail::lp_name(u.station_ids[j]) + ": " +
                   y(i, j) + " - " + z(j) + " <= 0\n";
        }
    }
    out += " open_count:";
    for (auto j : cand) {
        out += " + " + z(j);
    }
    out += " = " + std::to_string(inst.p) + '\n';
    if (inst.model == SitingModel::MaxMin) {
        for (std::size_t i = 0; i < u.customers(); ++i) {
            out += " bound_" + detail::lp_name(u.customer_ids[i]) + ": alpha";
            for (auto j : cols) {
                out += detail::lp_term(-u.at(i, j), y(i, j));
            }
            out += " <= 0\n";
        }
    }
    out += "Bounds\n";
    if (inst.model == SitingModel::MaxMin) {
        out += " alpha free\n";
    }
    out += "Binary\n";
    for (auto j : cand) {
        out += ' ' + z(j) + '\n';
    }
    out += "End\n";
    return out;
}

inline void export_milp(SitingInstance const& inst, std::filesystem::path const& path)
{
    csv::write_file(path, milp_text(inst));
}

/// Candidate points with an `open` status plus existing stations.
inline std::string solution_geojson(SitingSolution const& sol, std::vector<SiteStation> const& stations)
{
    nlohmann::ordered_json fc;
    fc["type"] = "FeatureCollection";
    fc["features"] = nlohmann::ordered_json::array();
    for (auto const& s : stations) {
        const bool open = std::binary_search(sol.open.begin(), sol.open.end(), s.id);
        nlohmann::ordered_json f;
        f["type"] = "Feature";
        f["geometry"] = {{"type", "Point"}, {"coordinates", {s.where.lon, s.where.lat}}};
        f["properties"] = {{"station_id", s.id},
                           {"status", s.existing ? "existing" : (open ? "opened" : "closed")}};
        fc["features"].push_back(std::move(f));
    }
    return fc.dump(2) + '\n';
}

} // namespace evcs
