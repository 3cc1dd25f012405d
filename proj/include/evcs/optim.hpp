#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <deque>
#include <limits>
#include <numeric>
#include <span>
#include <vector>

namespace evcs {

struct LbfgsOptions {
    /// Number of correction pairs kept.
    std::size_t memory = 10;
    std::size_t max_iterations = 500;
    /// Stop when the infinity norm of the gradient falls below this.
    double gradient_tolerance = 1e-6;
    /// Sufficient-increase constant of the Armijo test.
    double armijo = 1e-4;
    /// Curvature constants of the approximate Wolfe test used once function
    /// differences are lost in rounding.
    double wolfe_low = 0.1;
    double wolfe_high = 0.9;
    std::size_t max_backtracks = 50;
    /// Abort with Diverged when any |x_k| exceeds this.
    double divergence_bound = std::numeric_limits<double>::infinity();
};

enum class OptimStatus { Converged, MaxIterations, LineSearchFailed, Diverged };

struct OptimResult {
    std::vector<double> x;
    double value = 0.0;
    std::vector<double> gradient;
    std::size_t iterations = 0;
    std::size_t evaluations = 0;
    OptimStatus status = OptimStatus::MaxIterations;
    /// Objective value after every accepted step, starting with x0.
    std::vector<double> trace;
};

inline double inf_norm(std::span<const double> v) noexcept
{
    double m = 0.0;
    for (double x : v) {
        m = std::max(m, std::abs(x));
    }
    return m;
}

/// Limited-memory BFGS ascent with a backtracking line search.
///
/// `fg(x)` must return an object with `.value` and `.gradient` members. Steps
/// are accepted on the Armijo condition; when the objective change drops
/// below the rounding level of the objective, the approximate Wolfe
/// conditions on the directional derivative are used instead, which lets the
/// iteration reach gradient tolerances far below sqrt(machine epsilon).
template <class ValueAndGradient>
OptimResult maximize(ValueAndGradient&& fg, std::vector<double> x0, LbfgsOptions const& opt = {})
{
    const std::size_t n = x0.size();
    OptimResult res;
    res.x = std::move(x0);

    // Work with F = -f internally.
    auto eval = [&](std::vector<double> const& x, double& F, std::vector<double>& G) {
        auto r = fg(std::span<const double>(x));
        ++res.evaluations;
        F = -r.value;
        G.resize(n);
        for (std::size_t k = 0; k < n; ++k) {
            G[k] = -r.gradient[k];
        }
    };

    double F = 0.0;
    std::vector<double> G;
    eval(res.x, F, G);
    res.trace.push_back(-F);

    std::deque<std::vector<double>> S, Y;
    std::deque<double> rho;
    std::vector<double> d(n), xn(n), Gn(n), alpha_hist;

    auto dotp = [](std::vector<double> const& a, std::vector<double> const& b) {
        return std::inner_product(a.begin(), a.end(), b.begin(), 0.0);
    };

    auto finish = [&](OptimStatus st) {
        res.status = st;
        res.value = -F;
        res.gradient.resize(n);
        for (std::size_t k = 0; k < n; ++k) {
            res.gradient[k] = -G[k];
        }
        return res;
    };

    for (;;) {
        if (inf_norm(G) < opt.gradient_tolerance) {
            return finish(OptimStatus::Converged);
        }
        if (res.iterations >= opt.max_iterations) {
            return finish(OptimStatus::MaxIterations);
        }

        // two-loop recursion: d = -H G
        d = G;
        alpha_hist.assign(S.size(), 0.0);
        for (std::size_t i = S.size(); i-- > 0;) {
            alpha_hist[i] = rho[i] * dotp(S[i], d);
            for (std::size_t k = 0; k < n; ++k) {
                d[k] -= alpha_hist[i] * Y[i][k];
            }
        }
        double gamma = 1.0;
        if (!S.empty()) {
            gamma = dotp(S.back(), Y.back()) / dotp(Y.back(), Y.back());
        } else {
            const double gn = std::sqrt(dotp(G, G));
            gamma = gn > 0.0 ? 1.0 / gn : 1.0;
        }
        for (auto& v : d) {
            v *= gamma;
        }
        for (std::size_t i = 0; i < S.size(); ++i) {
            const double beta = rho[i] * dotp(Y[i], d);
            for (std::size_t k = 0; k < n; ++k) {
                d[k] += S[i][k] * (alpha_hist[i] - beta);
            }
        }
        for (auto& v : d) {
            v = -v;
        }
        double slope = dotp(G, d);
        if (!(slope < 0.0)) {
            // not a descent direction: restart from steepest descent
            S.clear();
            Y.clear();
            rho.clear();
            const double gn = std::sqrt(dotp(G, G));
            for (std::size_t k = 0; k < n; ++k) {
                d[k] = -G[k] / gn;
            }
            slope = dotp(G, d);
        }

        const double rounding = 1e-12 * (1.0 + std::abs(F));
        double step = 1.0;
        double Fn = 0.0;
        bool accepted = false;
        for (std::size_t ls = 0; ls < opt.max_backtracks; ++ls) {
            for (std::size_t k = 0; k < n; ++k) {
                xn[k] = res.x[k] + step * d[k];
            }
            eval(xn, Fn, Gn);
            if (std::isfinite(Fn)) {
                if (Fn <= F + opt.armijo * step * slope) {
                    accepted = true;
                    break;
                }
                const double slope_n = dotp(Gn, d);
                if (Fn <= F + rounding && slope_n >= opt.wolfe_high * slope &&
                    slope_n <= (2.0 * opt.wolfe_low - 1.0) * slope) {
                    accepted = true;
                    break;
                }
                // safeguarded quadratic interpolation
                const double denom = 2.0 * (Fn - F - slope * step);
                double next = denom > 0.0 ? -slope * step * step / denom : 0.5 * step;
                step = std::clamp(next, 0.1 * step, 0.5 * step);
            } else {
                step *= 0.5;
            }
        }
        if (!accepted) {
            return finish(OptimStatus::LineSearchFailed);
        }

        std::vector<double> s(n), y(n);
        for (std::size_t k = 0; k < n; ++k) {
            s[k] = xn[k] - res.x[k];
            y[k] = Gn[k] - G[k];
        }
        const double sy = dotp(s, y);
        if (sy > 1e-12 * std::sqrt(dotp(s, s) * dotp(y, y))) {
            S.push_back(std::move(s));
            Y.push_back(std::move(y));
            rho.push_back(1.0 / sy);
            if (S.size() > opt.memory) {
                S.pop_front();
                Y.pop_front();
                rho.pop_front();
            }
        }
        res.x = xn;
        F = Fn;
        G = Gn;
        ++res.iterations;
        res.trace.push_back(-F);
        if (inf_norm(res.x) > opt.divergence_bound) {
            return finish(OptimStatus::Diverged);
        }
    }
}

} // namespace evcs
