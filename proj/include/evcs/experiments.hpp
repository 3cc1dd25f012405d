#pragma once

#include "evcs/csv.hpp"
#include "evcs/error.hpp"
#include "evcs/hash.hpp"
#include "evcs/parallel.hpp"
#include "evcs/siting.hpp"
#include "evcs/utility_sim.hpp"

#include <json.hpp>

#include <array>
#include <cmath>
#include <filesystem>
#include <limits>
#include <map>
#include <set>
#include <string>
#include <vector>

namespace evcs {

enum class SimilarityScope { All, MxlPair };

/// Mean over unordered spec pairs of |S_a n S_b| / p.
inline double similarity(std::map<UtilitySpec, std::vector<std::string>> const& solutions,
                         SimilarityScope scope = SimilarityScope::All)
{
    std::vector<std::vector<std::string> const*> sets;
    for (auto const& [spec, open] : solutions) {
        if (scope == SimilarityScope::All || spec == UtilitySpec::MXLMean || spec == UtilitySpec::MXL25) {
            sets.push_back(&open);
        }
    }
    if (sets.size() < 2) {
        throw ValidationError("similarity needs at least two solutions in scope");
    }
    const std::size_t p = sets.front()->size();
    for (auto const* s : sets) {
        if (s->size() != p) {
            throw ValidationError("similarity: solutions open different numbers of stations");
        }
    }
    if (p == 0) {
        throw ValidationError("similarity: solutions open no station");
    }
    double total = 0.0;
    std::size_t pairs = 0;
    for (std::size_t a = 0; a < sets.size(); ++a) {
        const std::set<std::string> sa(sets[a]->begin(), sets[a]->end());
        for (std::size_t b = a + 1; b < sets.size(); ++b) {
            std::size_t common = 0;
            for (auto const& id : *sets[b]) {
                common += sa.count(id);
            }
            total += static_cast<double>(common) / static_cast<double>(p);
            ++pairs;
        }
    }
    return total / static_cast<double>(pairs);
}

/// Fraction of the opened stations that are some customer's utility argmax
/// among open and always-open stations (lowest column wins ties).
inline double active_fraction(std::vector<std::string> const& open, UtilityMatrix const& u,
                              std::vector<std::string> const& always_open = {})
{
    if (open.empty()) {
        return 0.0;
    }
    auto cols = detail::columns_of(u, open);
    const auto always = detail::columns_of(u, always_open);
    std::vector<std::size_t> avail = cols;
    avail.insert(avail.end(), always.begin(), always.end());
    std::sort(avail.begin(), avail.end());
    std::set<std::size_t> used;
    for (std::size_t i = 0; i < u.customers(); ++i) {
        std::size_t best = avail.front();
        for (auto j : avail) {
            if (u.at(i, j) > u.at(i, best)) {
                best = j;
            }
        }
        used.insert(best);
    }
    std::size_t active = 0;
    for (auto j : cols) {
        active += used.count(j);
    }
    return static_cast<double>(active) / static_cast<double>(cols.size());
}

/// Rows: spec whose optimal solution is evaluated; columns: evaluation spec.
struct GapMatrix {
    std::array<std::array<double, 4>, 4> objective{}; // objective[i][j] = obj_j(sol_i)
    std::array<std::array<double, 4>, 4> gap{};       // percent; NaN when obj_j(sol_j) = 0

    [[nodiscard]] double own(std::size_t j) const { return objective[j][j]; }
};

inline std::size_t spec_index(UtilitySpec s) { return static_cast<std::size_t>(s); }

/// gap(i, j) = 100 (obj_j(sol_j) - obj_j(sol_i)) / |obj_j(sol_j)|.
inline GapMatrix gap_matrix_from_objectives(std::array<std::array<double, 4>, 4> const& objective)
{
    GapMatrix g;
    g.objective = objective;
    for (std::size_t i = 0; i < 4; ++i) {
        for (std::size_t j = 0; j < 4; ++j) {
            const double ref = objective[j][j];
            g.gap[i][j] = i == j ? 0.0
                          : ref == 0.0 ? std::numeric_limits<double>::quiet_NaN()
                                       : 100.0 * (ref - objective[i][j]) / std::abs(ref);
        }
    }
    return g;
}

/// Cross-evaluates one solution per spec under every spec's utilities.
inline GapMatrix gap_matrix(std::map<UtilitySpec, std::vector<std::string>> const& solutions,
                            std::map<UtilitySpec, UtilityMatrix> const& utilities, SitingModel model,
                            std::vector<std::string> const& always_open = {})
{
    std::array<std::array<double, 4>, 4> obj{};
    for (auto si : kAllSpecs) {
        for (auto sj : kAllSpecs) {
            if (!solutions.count(si) || !utilities.count(sj)) {
                throw ValidationError("gap matrix needs a solution and utilities for every specification");
            }
            const auto o = evaluate_solution(solutions.at(si), utilities.at(sj), always_open);
            obj[spec_index(si)][spec_index(sj)] = model == SitingModel::PMedian ? o.pmedian : o.maxmin;
        }
    }
    return gap_matrix_from_objectives(obj);
}

inline std::string gap_csv(GapMatrix const& g)
{
    std::string out = "solution";
    for (auto s : kAllSpecs) {
        out += ",gap_" + std::string(to_string(s));
    }
    out += ",objective\n";
    for (auto si : kAllSpecs) {
        const auto i = spec_index(si);
        out += std::string(to_string(si));
        for (std::size_t j = 0; j < 4; ++j) {
            out += ',' + (std::isnan(g.gap[i][j]) ? std::string("nan") : csv::fixed(g.gap[i][j], 4));
        }
        out += ',' + csv::fmt(g.objective[i][i]) + '\n';
    }
    return out;
}

// ---------------------------------------------------------------------------
// Grid runner

struct GridConfig {
    std::vector<SitingModel> models{SitingModel::PMedian, SitingModel::MaxMin};
    std::vector<UtilitySpec> specs{kAllSpecs.begin(), kAllSpecs.end()};
    std::vector<bool> consider_existing{true, false};
    std::vector<std::size_t> ps{10, 25, 50, 75, 100};
    std::size_t exact_threshold = 20;
    unsigned jobs = 1;
};

struct GridCell {
    SitingModel model = SitingModel::PMedian;
    UtilitySpec spec = UtilitySpec::Distance;
    bool consider_existing = true;
    std::size_t p = 0;

    [[nodiscard]] std::string key() const
    {
        return std::string(to_string(model)) + '_' + std::string(to_string(spec)) + '_' +
               (consider_existing ? "existing" : "noexisting") + '_' + std::to_string(p);
    }
};

inline std::vector<GridCell> enumerate_grid(GridConfig const& cfg)
{
    std::vector<GridCell> cells;
    for (auto m : cfg.models) {
        for (bool e : cfg.consider_existing) {
            for (auto p : cfg.ps) {
                for (auto s : cfg.specs) {
                    cells.push_back({m, s, e, p});
                }
            }
        }
    }
    return cells;
}

struct CellResult {
    GridCell cell;
    SitingSolution solution;
    double active = 0.0;
};

struct GridResult {
    std::vector<CellResult> cells;
    std::map<std::string, GapMatrix> gaps; // keyed "<model>_<existing>_<p>"
    std::string grid_csv;
};

namespace detail {

inline nlohmann::ordered_json cell_json(CellResult const& r, std::string const& input_hash)
{
    nlohmann::ordered_json j;
    j["input_hash"] = input_hash;
    j["model"] = to_string(r.cell.model);
    j["spec"] = to_string(r.cell.spec);
    j["consider_existing"] = r.cell.consider_existing;
    j["p"] = r.cell.p;
    j["objective"] = r.solution.objective;
    j["active"] = r.active;
    j["solver"] = to_string(r.solution.solver);
    j["certified"] = r.solution.certified;
    j["open"] = r.solution.open;
    j["assignment"] = r.solution.assignment;
    return j;
}

inline std::optional<CellResult> load_cell(std::filesystem::path const& path, GridCell const& cell,
                                           std::string const& input_hash)
{
    if (!std::filesystem::exists(path)) {
        return std::nullopt;
    }
    try {
        const auto j = nlohmann::json::parse(csv::read_file(path));
        if (j.at("input_hash").get<std::string>() != input_hash) {
            return std::nullopt;
        }
        CellResult r;
        r.cell = cell;
        r.solution.model = cell.model;
        r.solution.objective = j.at("objective").get<double>();
        r.active = j.at("active").get<double>();
        const auto solver = j.at("solver").get<std::string>();
        for (auto k : {SolverKind::BruteForce, SolverKind::BranchBound, SolverKind::LocalSearch}) {
            if (to_string(k) == solver) {
                r.solution.solver = k;
            }
        }
        r.solution.certified = j.at("certified").get<bool>();
        r.solution.open = j.at("open").get<std::vector<std::string>>();
        r.solution.assignment = j.at("assignment").get<std::vector<std::string>>();
        return r;
    } catch (nlohmann::json::exception const&) {
        return std::nullopt; // unreadable artifact: recompute
    }
}

} // namespace detail

/// Solves every cell (reusing artifacts in `dir` whose input hash matches),
/// then aggregates similarity, Active fraction and gap matrices. Writes
/// `cells/<key>.json`, `grid.csv` and `gaps_<model>_<existing>_<p>.csv`.
inline GridResult run_grid(std::map<UtilitySpec, UtilityMatrix> const& utilities, std::vector<bool> const& existing,
                           GridConfig const& cfg, std::filesystem::path const& dir)
{
    const auto cells = enumerate_grid(cfg);
    std::vector<CellResult> results(cells.size());

    auto instance_for = [&](GridCell const& c) {
        SitingInstance inst;
        inst.utilities = utilities.at(c.spec);
        inst.existing = existing;
        inst.p = c.p;
        inst.consider_existing = c.consider_existing;
        inst.model = c.model;
        inst.exact_threshold = cfg.exact_threshold;
        return inst;
    };
    auto hash_for = [&](GridCell const& c) {
        std::string flags;
        for (bool e : existing) {
            flags += e ? '1' : '0';
        }
        return hash_string(utility_csv(utilities.at(c.spec)) + flags + c.key() + std::to_string(cfg.exact_threshold));
    };

    parallel_for(cells.size(), cfg.jobs, [&](std::size_t lo, std::size_t hi) {
        for (std::size_t k = lo; k < hi; ++k) {
            auto const& c = cells[k];
            const auto path = dir / "cells" / (c.key() + ".json");
            const auto h = hash_for(c);
            if (auto cached = detail::load_cell(path, c, h)) {
                results[k] = std::move(*cached);
                continue;
            }
            const auto inst = instance_for(c);
            CellResult r;
            r.cell = c;
            r.solution = solve(inst);
            r.active = active_fraction(r.solution.open, inst.utilities, always_open_ids(inst));
            csv::write_file(path, detail::cell_json(r, h).dump(2) + '\n');
            results[k] = std::move(r);
        }
    });

    GridResult out;
    std::map<std::string, std::map<UtilitySpec, std::vector<std::string>>> groups;
    auto group_key = [](GridCell const& c) {
        return std::string(to_string(c.model)) + '_' + (c.consider_existing ? "existing" : "noexisting") + '_' +
               std::to_string(c.p);
    };
    for (auto const& r : results) {
        groups[group_key(r.cell)][r.cell.spec] = r.solution.open;
    }
    // gap matrices need all four specifications
    const bool all_specs = cfg.specs.size() == 4;
    for (auto const& [key, sols] : groups) {
        if (!all_specs) {
            break;
        }
        GridCell probe;
        for (auto const& r : results) {
            if (group_key(r.cell) == key) {
                probe = r.cell;
                break;
            }
        }
        std::vector<std::string> always;
        if (probe.consider_existing) {
            for (std::size_t j = 0; j < existing.size(); ++j) {
                if (existing[j]) {
                    always.push_back(utilities.begin()->second.station_ids[j]);
                }
            }
        }
        const auto g = gap_matrix(sols, utilities, probe.model, always);
        csv::write_file(dir / ("gaps_" + key + ".csv"), gap_csv(g));
        out.gaps.emplace(key, g);
    }

    out.grid_csv = "model,spec,consider_existing,p,objective,active,similarity_all,similarity_mxl,solver,certified\n";
    for (auto const& r : results) {
        auto const& sols = groups.at(group_key(r.cell));
        auto sim = [&](SimilarityScope s) {
            try {
                return csv::fixed(similarity(sols, s), 4);
            } catch (ValidationError const&) {
                return std::string("nan");
            }
        };
        out.grid_csv += std::string(to_string(r.cell.model)) + ',' + std::string(to_string(r.cell.spec)) + ',' +
                        (r.cell.consider_existing ? "true" : "false") + ',' + std::to_string(r.cell.p) + ',' +
                        csv::fmt(r.solution.objective) + ',' + csv::fixed(r.active, 4) + ',' +
                        sim(SimilarityScope::All) + ',' + sim(SimilarityScope::MxlPair) + ',' +
                        std::string(to_string(r.solution.solver)) + ',' + (r.solution.certified ? "true" : "false") +
                        '\n';
    }
    csv::write_file(dir / "grid.csv", out.grid_csv);
    out.cells = std::move(results);
    return out;
}

} // namespace evcs
