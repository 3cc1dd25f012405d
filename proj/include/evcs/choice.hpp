#pragma once

#include "evcs/error.hpp"
#include "evcs/parallel.hpp"
#include "evcs/rng.hpp"
#include "evcs/spatial.hpp"
#include "evcs/time.hpp"

#include <boost/math/distributions/normal.hpp>

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

namespace evcs {

/// Coefficients of the near/far utility specification, in storage order.
enum class Coef : std::size_t {
    DistNear,
    OutletsNear,
    IsWalkHome,
    DistFar,
    OutletsFar,
    IsGas,
    Leis,
    Sport,
    Sm,
    Shop,
    Mall,
    Rest,
    Ff,
};

inline constexpr std::size_t kNumCoef = 13;

inline constexpr std::array<std::string_view, kNumCoef> kCoefNames{
    "distNear", "outletsNear", "isWalkHome", "distFar", "outletsFar", "isGas", "leis",
    "sport",    "sm",          "shop",       "mall",    "rest",       "ff"};

constexpr std::size_t idx(Coef c) noexcept { return static_cast<std::size_t>(c); }

inline Coef parse_coef(std::string_view name)
{
    for (std::size_t i = 0; i < kNumCoef; ++i) {
        if (kCoefNames[i] == name) {
            return static_cast<Coef>(i);
        }
    }
    throw ValidationError("unknown coefficient '" + std::string(name) + "'");
}

using CoefArray = std::array<double, kNumCoef>;

inline constexpr double kNearThresholdKm = 1.5;

/// Maps an attribute vector onto the 13 coefficient slots. Alternatives at or
/// within the near threshold use the near-home terms; all others use the
/// far (activity) terms. Unused slots are zero, so V = beta . row.
inline CoefArray design_row(AttributeVector const& x, double near_threshold_km = kNearThresholdKm)
{
    CoefArray z{};
    if (x.dist_km <= near_threshold_km) {
        z[idx(Coef::DistNear)] = x.dist_km;
        z[idx(Coef::OutletsNear)] = x.outlets;
        z[idx(Coef::IsWalkHome)] = x.walk_home;
    } else {
        z[idx(Coef::DistFar)] = x.dist_km;
        z[idx(Coef::OutletsFar)] = x.outlets;
        z[idx(Coef::IsGas)] = x.is_gas;
        z[idx(Coef::Leis)] = x.leis;
        z[idx(Coef::Sport)] = x.sport;
        z[idx(Coef::Sm)] = x.sm;
        z[idx(Coef::Shop)] = x.shop;
        z[idx(Coef::Mall)] = x.mall;
        z[idx(Coef::Rest)] = x.rest;
        z[idx(Coef::Ff)] = x.ff;
    }
    return z;
}

inline double dot(std::span<const double> a, std::span<const double> b) noexcept
{
    double s = 0.0;
    for (std::size_t k = 0; k < a.size(); ++k) {
        s += a[k] * b[k];
    }
    return s;
}

inline double observable_utility(AttributeVector const& x, std::span<const double> beta,
                                 double near_threshold_km = kNearThresholdKm)
{
    if (beta.size() != kNumCoef) {
        throw ValidationError("coefficient vector must have 13 entries");
    }
    const auto z = design_row(x, near_threshold_km);
    return dot(z, beta);
}

/// Logit probabilities with max-subtraction.
inline std::vector<double> mnl_probabilities(std::span<const double> v)
{
    if (v.empty()) {
        throw ValidationError("choice set must contain at least one alternative");
    }
    const double m = *std::max_element(v.begin(), v.end());
    std::vector<double> p(v.size());
    double s = 0.0;
    for (std::size_t j = 0; j < v.size(); ++j) {
        p[j] = std::exp(v[j] - m);
        s += p[j];
    }
    for (auto& x : p) {
        x /= s;
    }
    return p;
}

// ---------------------------------------------------------------------------
// Parameters

enum class ModelKind { MNL, MXL };

inline std::string_view to_string(ModelKind k) { return k == ModelKind::MNL ? "MNL" : "MXL"; }

inline ModelKind parse_model_kind(std::string_view s)
{
    if (s == "MNL" || s == "mnl") {
        return ModelKind::MNL;
    }
    if (s == "MXL" || s == "mxl") {
        return ModelKind::MXL;
    }
    throw ValidationError("unknown model kind '" + std::string(s) + "'");
}

struct ParameterSet {
    CoefArray mu{};
    CoefArray sigma{};
    ModelKind kind = ModelKind::MNL;
    double near_threshold_km = kNearThresholdKm;
    std::uint64_t seed = 0;
    std::size_t draws = 0;

    [[nodiscard]] double& mean(Coef c) { return mu[idx(c)]; }
    [[nodiscard]] double mean(Coef c) const { return mu[idx(c)]; }
    [[nodiscard]] double& sd(Coef c) { return sigma[idx(c)]; }
    [[nodiscard]] double sd(Coef c) const { return sigma[idx(c)]; }

    [[nodiscard]] std::size_t num_free() const noexcept { return kind == ModelKind::MNL ? kNumCoef : 2 * kNumCoef; }

    /// Optimizer layout: mu, then sigma for MXL.
    [[nodiscard]] std::vector<double> to_vector() const
    {
        std::vector<double> v(mu.begin(), mu.end());
        if (kind == ModelKind::MXL) {
            v.insert(v.end(), sigma.begin(), sigma.end());
        }
        return v;
    }

    void assign(std::span<const double> v)
    {
        if (v.size() != num_free()) {
            throw ValidationError("parameter vector has wrong length");
        }
        std::copy_n(v.begin(), kNumCoef, mu.begin());
        if (kind == ModelKind::MXL) {
            std::copy_n(v.begin() + kNumCoef, kNumCoef, sigma.begin());
        } else {
            sigma.fill(0.0);
        }
    }

    /// Every mean and standard deviation multiplied by c.
    [[nodiscard]] ParameterSet scaled(double c) const
    {
        ParameterSet out = *this;
        for (std::size_t k = 0; k < kNumCoef; ++k) {
            out.mu[k] *= c;
            out.sigma[k] *= c;
        }
        return out;
    }

    void validate() const
    {
        if (kind == ModelKind::MNL) {
            for (double s : sigma) {
                if (s != 0.0) {
                    throw ValidationError("MNL parameter set must have all sigma = 0");
                }
            }
        }
    }
};

/// Flat key-value text: `beta.<name>.mu = ...`, `beta.<name>.sigma = ...`,
/// `model_kind`, `near_threshold_km`, `seed`, `draws`.
inline std::string serialize(ParameterSet const& p)
{
    std::ostringstream out;
    out << "model_kind = " << to_string(p.kind) << '\n';
    out << "near_threshold_km = " << csv::fmt(p.near_threshold_km) << '\n';
    out << "seed = " << p.seed << '\n';
    out << "draws = " << p.draws << '\n';
    for (std::size_t k = 0; k < kNumCoef; ++k) {
        out << "beta." << kCoefNames[k] << ".mu = " << csv::fmt(p.mu[k]) << '\n';
        out << "beta." << kCoefNames[k] << ".sigma = " << csv::fmt(p.sigma[k]) << '\n';
    }
    return out.str();
}

inline ParameterSet parse_parameter_set(std::string_view text)
{
    ParameterSet p;
    std::istringstream in{std::string(text)};
    std::string line;
    auto number = [](std::string const& key, std::string const& v) {
        double out = 0.0;
        auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
        if (ec != std::errc{} || ptr != v.data() + v.size()) {
            throw ValidationError("parameter file: '" + key + "' is not a number");
        }
        return out;
    };
    while (std::getline(in, line)) {
        if (auto h = line.find('#'); h != std::string::npos) {
            line.erase(h);
        }
        const auto eq = line.find('=');
        if (eq == std::string::npos) {
            continue;
        }
        auto trim = [](std::string s) {
            const auto b = s.find_first_not_of(" \t\r");
            const auto e = s.find_last_not_of(" \t\r");
            return b == std::string::npos ? std::string{} : s.substr(b, e - b + 1);
        };
        const auto key = trim(line.substr(0, eq));
        const auto val = trim(line.substr(eq + 1));
        if (key == "model_kind") {
            p.kind = parse_model_kind(val);
        } else if (key == "near_threshold_km") {
            p.near_threshold_km = number(key, val);
        } else if (key == "seed") {
            p.seed = std::stoull(val);
        } else if (key == "draws") {
            p.draws = std::stoull(val);
        } else if (key.rfind("beta.", 0) == 0) {
            const auto dot_pos = key.rfind('.');
            const auto name = key.substr(5, dot_pos - 5);
            const auto field = key.substr(dot_pos + 1);
            const auto c = idx(parse_coef(name));
            if (field == "mu") {
                p.mu[c] = number(key, val);
            } else if (field == "sigma") {
                p.sigma[c] = number(key, val);
            } else {
                throw ValidationError("parameter file: unknown field '" + key + "'");
            }
        } else {
            throw ValidationError("parameter file: unknown key '" + key + "'");
        }
    }
    p.validate();
    return p;
}

// ---------------------------------------------------------------------------
// Observations

struct ChoiceObservation {
    std::string user_id;
    Timestamp when{};
    std::size_t chosen = 0;
    std::vector<AttributeVector> alternatives;
    std::vector<std::string> station_ids; // optional, parallel to alternatives

    [[nodiscard]] AttributeVector const& chosen_attributes() const { return alternatives.at(chosen); }

    void validate() const
    {
        if (alternatives.empty()) {
            throw ValidationError("observation of user " + user_id + " has an empty choice set");
        }
        if (chosen >= alternatives.size()) {
            throw ValidationError("observation of user " + user_id + ": chosen index outside the choice set");
        }
        if (!station_ids.empty() && station_ids.size() != alternatives.size()) {
            throw ValidationError("observation of user " + user_id + ": station ids do not match alternatives");
        }
    }
};

struct UserPanel {
    std::string user_id;
    std::vector<ChoiceObservation> observations; // time-ordered
};

/// Observations grouped by user, users in first-seen order.
class PanelDataset {
  public:
    PanelDataset() = default;

    explicit PanelDataset(std::vector<ChoiceObservation> const& obs)
    {
        for (auto const& o : obs) {
            add(o);
        }
        sort_by_time();
    }

    void add(ChoiceObservation obs)
    {
        obs.validate();
        auto [it, inserted] = index_.emplace(obs.user_id, users_.size());
        if (inserted) {
            users_.push_back({obs.user_id, {}});
        }
        users_[it->second].observations.push_back(std::move(obs));
    }

    void add_user(UserPanel panel)
    {
        auto [it, inserted] = index_.emplace(panel.user_id, users_.size());
        if (!inserted) {
            throw ValidationError("duplicate user '" + panel.user_id + "'");
        }
        for (auto const& o : panel.observations) {
            o.validate();
        }
        users_.push_back(std::move(panel));
    }

    void sort_by_time()
    {
        for (auto& u : users_) {
            std::stable_sort(u.observations.begin(), u.observations.end(),
                             [](auto const& a, auto const& b) { return a.when < b.when; });
        }
    }

    [[nodiscard]] std::vector<UserPanel> const& users() const noexcept { return users_; }
    [[nodiscard]] std::size_t num_users() const noexcept { return users_.size(); }

    [[nodiscard]] std::size_t num_observations() const noexcept
    {
        std::size_t n = 0;
        for (auto const& u : users_) {
            n += u.observations.size();
        }
        return n;
    }

    [[nodiscard]] UserPanel const* find(std::string const& user_id) const
    {
        auto it = index_.find(user_id);
        return it == index_.end() ? nullptr : &users_[it->second];
    }

  private:
    std::vector<UserPanel> users_;
    std::map<std::string, std::size_t> index_;
};

/// Flattened design matrices: one 13-wide row per alternative.
struct DesignPanel {
    std::vector<std::size_t> user_begin;  // num_users + 1 offsets into observations
    std::vector<std::size_t> obs_begin;   // num_obs + 1 offsets into rows
    std::vector<std::size_t> chosen_row;  // absolute row index of the chosen alternative
    std::vector<double> rows;             // num_rows * 13

    [[nodiscard]] std::size_t num_users() const noexcept { return user_begin.size() - 1; }
    [[nodiscard]] std::size_t num_observations() const noexcept { return chosen_row.size(); }

    [[nodiscard]] std::span<const double> row(std::size_t r) const noexcept
    {
        return {rows.data() + r * kNumCoef, kNumCoef};
    }

    static DesignPanel compile(PanelDataset const& data, double near_threshold_km = kNearThresholdKm)
    {
        DesignPanel d;
        d.user_begin.push_back(0);
        d.obs_begin.push_back(0);
        std::size_t nrows = 0;
        for (auto const& u : data.users()) {
            for (auto const& o : u.observations) {
                d.chosen_row.push_back(nrows + o.chosen);
                for (auto const& x : o.alternatives) {
                    const auto z = design_row(x, near_threshold_km);
                    d.rows.insert(d.rows.end(), z.begin(), z.end());
                }
                nrows += o.alternatives.size();
                d.obs_begin.push_back(nrows);
            }
            d.user_begin.push_back(d.chosen_row.size());
        }
        return d;
    }
};

// ---------------------------------------------------------------------------
// Likelihoods

struct LogLik {
    double value = 0.0;
    std::vector<double> gradient;
};

namespace detail {

/// Adds ln P_chosen of one observation to `s` and z_chosen - E_P[z] to `d`.
/// `v` is scratch space.
inline void accumulate_observation(DesignPanel const& dp, std::size_t t, std::span<const double> beta, double& s,
                                   std::span<double> d, std::vector<double>& v)
{
    const std::size_t b = dp.obs_begin[t];
    const std::size_t e = dp.obs_begin[t + 1];
    const std::size_t m = e - b;
    v.resize(m);
    double vmax = -std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < m; ++j) {
        v[j] = dot(dp.row(b + j), beta);
        vmax = std::max(vmax, v[j]);
    }
    double sum = 0.0;
    for (std::size_t j = 0; j < m; ++j) {
        v[j] = std::exp(v[j] - vmax);
        sum += v[j];
    }
    const std::size_t c = dp.chosen_row[t];
    s += std::log(v[c - b] / sum);
    if (m == 1) {
        return;
    }
    auto zc = dp.row(c);
    for (std::size_t k = 0; k < kNumCoef; ++k) {
        d[k] += zc[k];
    }
    for (std::size_t j = 0; j < m; ++j) {
        const double p = v[j] / sum;
        auto z = dp.row(b + j);
        for (std::size_t k = 0; k < kNumCoef; ++k) {
            d[k] -= p * z[k];
        }
    }
}

} // namespace detail

/// MNL log-likelihood and its analytic gradient. Accumulated per user, then
/// over users in dataset order (so results do not depend on `jobs`).
inline LogLik mnl_loglik(DesignPanel const& dp, std::span<const double> beta, unsigned jobs = 1)
{
    if (beta.size() != kNumCoef) {
        throw ValidationError("MNL needs 13 coefficients");
    }
    const std::size_t n = dp.num_users();
    std::vector<double> per_user(n, 0.0);
    std::vector<double> grads(n * kNumCoef, 0.0);
    parallel_for(n, jobs, [&](std::size_t lo, std::size_t hi) {
        std::vector<double> scratch;
        for (std::size_t i = lo; i < hi; ++i) {
            double s = 0.0;
            std::span<double> d{grads.data() + i * kNumCoef, kNumCoef};
            for (std::size_t t = dp.user_begin[i]; t < dp.user_begin[i + 1]; ++t) {
                detail::accumulate_observation(dp, t, beta, s, d, scratch);
            }
            per_user[i] = s;
        }
    });
    LogLik out{0.0, std::vector<double>(kNumCoef, 0.0)};
    for (std::size_t i = 0; i < n; ++i) {
        out.value += per_user[i];
        for (std::size_t k = 0; k < kNumCoef; ++k) {
            out.gradient[k] += grads[i * kNumCoef + k];
        }
    }
    return out;
}

inline LogLik mnl_loglik(PanelDataset const& data, std::span<const double> beta,
                         double near_threshold_km = kNearThresholdKm)
{
    return mnl_loglik(DesignPanel::compile(data, near_threshold_km), beta);
}

enum class DrawScheme { Pseudo, Halton };

/// Standard-normal draws per user: users x R x 13, frozen once generated.
/// Pseudo-random draws come from a per-user stream keyed by (seed, user), so
/// a user's draws do not depend on how many other users exist.
class DrawMatrix {
  public:
    DrawMatrix() = default;

    static DrawMatrix generate(std::size_t users, std::size_t draws, std::uint64_t seed,
                               DrawScheme scheme = DrawScheme::Pseudo)
    {
        if (draws == 0) {
            throw ValidationError("draw count must be at least 1");
        }
        DrawMatrix m;
        m.users_ = users;
        m.draws_ = draws;
        m.seed_ = seed;
        m.scheme_ = scheme;
        m.eta_.resize(users * draws * kNumCoef);
        if (scheme == DrawScheme::Pseudo) {
            for (std::size_t i = 0; i < users; ++i) {
                SplitMix64 rng{stream_key(seed, 0x6472617773ULL, i)};
                double* out = m.eta_.data() + i * draws * kNumCoef;
                for (std::size_t x = 0; x < draws * kNumCoef; ++x) {
                    out[x] = rng.normal();
                }
            }
        } else {
            static constexpr std::array<unsigned, kNumCoef> primes{2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41};
            const boost::math::normal_distribution<double> nd;
            // random start in the sequence so different seeds give different draws
            const std::size_t skip = 10 + (mix64(seed) % 1000);
            for (std::size_t i = 0; i < users; ++i) {
                for (std::size_t r = 0; r < draws; ++r) {
                    const std::size_t index = skip + i * draws + r + 1;
                    for (std::size_t k = 0; k < kNumCoef; ++k) {
                        m.eta_[(i * draws + r) * kNumCoef + k] =
                            boost::math::quantile(nd, radical_inverse(index, primes[k]));
                    }
                }
            }
        }
        return m;
    }

    /// Builds a matrix from explicit values (users x draws x 13, row-major).
    static DrawMatrix from_values(std::size_t users, std::size_t draws, std::vector<double> values)
    {
        if (values.size() != users * draws * kNumCoef) {
            throw ValidationError("draw values have the wrong size");
        }
        DrawMatrix m;
        m.users_ = users;
        m.draws_ = draws;
        m.eta_ = std::move(values);
        return m;
    }

    [[nodiscard]] std::size_t users() const noexcept { return users_; }
    [[nodiscard]] std::size_t draws() const noexcept { return draws_; }
    [[nodiscard]] std::uint64_t seed() const noexcept { return seed_; }
    [[nodiscard]] DrawScheme scheme() const noexcept { return scheme_; }

    [[nodiscard]] std::span<const double> eta(std::size_t user, std::size_t r) const noexcept
    {
        return {eta_.data() + (user * draws_ + r) * kNumCoef, kNumCoef};
    }

  private:
    static double radical_inverse(std::size_t n, unsigned base)
    {
        double inv = 1.0 / base;
        double f = inv;
        double out = 0.0;
        while (n > 0) {
            out += static_cast<double>(n % base) * f;
            n /= base;
            f *= inv;
        }
        return out;
    }

    std::size_t users_ = 0;
    std::size_t draws_ = 0;
    std::uint64_t seed_ = 0;
    DrawScheme scheme_ = DrawScheme::Pseudo;
    std::vector<double> eta_;
};

/// Panel mixed-logit simulated log-likelihood. theta = (mu[13], sigma[13]);
/// each user's draws are shared by all of that user's observations. The
/// per-user simulated probability is combined in log space.
inline LogLik mxl_simulated_loglik(DesignPanel const& dp, std::span<const double> theta, DrawMatrix const& draws,
                                   unsigned jobs = 1)
{
    if (theta.size() != 2 * kNumCoef) {
        throw ValidationError("MXL needs 26 parameters");
    }
    const std::size_t n = dp.num_users();
    if (draws.users() < n) {
        throw ValidationError("draw matrix covers fewer users than the data");
    }
    const std::size_t R = draws.draws();
    const auto mu = theta.subspan(0, kNumCoef);
    const auto sigma = theta.subspan(kNumCoef, kNumCoef);
    std::vector<double> per_user(n, 0.0);
    std::vector<double> grads(n * 2 * kNumCoef, 0.0);

    parallel_for(n, jobs, [&](std::size_t lo, std::size_t hi) {
        std::vector<double> scratch;
        std::vector<double> s(R);
        std::vector<double> d(R * kNumCoef);
        std::array<double, kNumCoef> beta{};
        for (std::size_t i = lo; i < hi; ++i) {
            std::fill(d.begin(), d.end(), 0.0);
            for (std::size_t r = 0; r < R; ++r) {
                const auto eta = draws.eta(i, r);
                for (std::size_t k = 0; k < kNumCoef; ++k) {
                    beta[k] = mu[k] + sigma[k] * eta[k];
                }
                double sr = 0.0;
                std::span<double> dr{d.data() + r * kNumCoef, kNumCoef};
                for (std::size_t t = dp.user_begin[i]; t < dp.user_begin[i + 1]; ++t) {
                    detail::accumulate_observation(dp, t, beta, sr, dr, scratch);
                }
                s[r] = sr;
            }
            const double smax = *std::max_element(s.begin(), s.end());
            double sum = 0.0;
            for (std::size_t r = 0; r < R; ++r) {
                s[r] = std::exp(s[r] - smax); // reuse as unnormalized weights
                sum += s[r];
            }
            per_user[i] = smax + std::log(sum / static_cast<double>(R));
            double* g = grads.data() + i * 2 * kNumCoef;
            for (std::size_t r = 0; r < R; ++r) {
                const double w = s[r] / sum;
                const auto eta = draws.eta(i, r);
                for (std::size_t k = 0; k < kNumCoef; ++k) {
                    const double dk = d[r * kNumCoef + k];
                    g[k] += w * dk;
                    g[kNumCoef + k] += w * eta[k] * dk;
                }
            }
        }
    });

    LogLik out{0.0, std::vector<double>(2 * kNumCoef, 0.0)};
    for (std::size_t i = 0; i < n; ++i) {
        out.value += per_user[i];
        for (std::size_t k = 0; k < 2 * kNumCoef; ++k) {
            out.gradient[k] += grads[i * 2 * kNumCoef + k];
        }
    }
    return out;
}

inline LogLik mxl_simulated_loglik(PanelDataset const& data, ParameterSet const& theta, DrawMatrix const& draws)
{
    ParameterSet p = theta;
    p.kind = ModelKind::MXL;
    const auto v = p.to_vector();
    return mxl_simulated_loglik(DesignPanel::compile(data, theta.near_threshold_km), v, draws);
}

/// Predicted probability of each observation's chosen alternative. For MXL
/// the user's draw-conditioned probabilities are averaged (observations
/// treated independently).
inline std::vector<double> chosen_probabilities(DesignPanel const& dp, ParameterSet const& p,
                                                DrawMatrix const* draws = nullptr)
{
    std::vector<double> out(dp.num_observations());
    std::vector<double> v;
    auto prob = [&](std::size_t t, std::span<const double> beta) {
        const std::size_t b = dp.obs_begin[t];
        const std::size_t e = dp.obs_begin[t + 1];
        v.resize(e - b);
        for (std::size_t j = b; j < e; ++j) {
            v[j - b] = dot(dp.row(j), beta);
        }
        return mnl_probabilities(v)[dp.chosen_row[t] - b];
    };
    if (p.kind == ModelKind::MNL || draws == nullptr) {
        for (std::size_t t = 0; t < out.size(); ++t) {
            out[t] = prob(t, p.mu);
        }
        return out;
    }
    std::array<double, kNumCoef> beta{};
    for (std::size_t i = 0; i < dp.num_users(); ++i) {
        for (std::size_t t = dp.user_begin[i]; t < dp.user_begin[i + 1]; ++t) {
            double acc = 0.0;
            for (std::size_t r = 0; r < draws->draws(); ++r) {
                const auto eta = draws->eta(i, r);
                for (std::size_t k = 0; k < kNumCoef; ++k) {
                    beta[k] = p.mu[k] + p.sigma[k] * eta[k];
                }
                acc += prob(t, beta);
            }
            out[t] = acc / static_cast<double>(draws->draws());
        }
    }
    return out;
}

} // namespace evcs
