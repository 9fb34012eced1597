#include "passnet/likelihood.hpp"

#include <cmath>
#include <deque>
#include <stdexcept>

namespace passnet {

namespace {

double log1pexp(double x) {
    if (x > 35.0) return x;
    if (x < -35.0) return std::exp(x);
    return std::log1p(std::exp(x));
}

void check_finite(double v, const char* what, int event_index) {
    if (!std::isfinite(v))
        throw std::runtime_error(std::string("likelihood: non-finite ") + what + " at event " +
                                 std::to_string(event_index));
}

}  // namespace

double Gradient::max_norm() const {
    double m = 0.0;
    auto upd = [&](const Eigen::VectorXd& v) {
        if (v.size()) m = std::max(m, v.cwiseAbs().maxCoeff());
    };
    upd(omega);
    upd(alpha);
    upd(beta);
    upd(gamma);
    if (eta.size()) m = std::max(m, eta.cwiseAbs().maxCoeff());
    return m;
}

int EventData::unit_of(const std::string& label) {
    auto it = unit_index_.find(label);
    if (it != unit_index_.end()) return it->second;
    const int idx = static_cast<int>(unit_labels_.size());
    unit_labels_.push_back(label);
    unit_index_[label] = idx;
    return idx;
}

int EventData::pattern_of(const Eigen::VectorXd& c) {
    for (std::size_t k = 0; k < rate_patterns_.size(); ++k)
        if (rate_patterns_[k].c.size() == c.size() && (rate_patterns_[k].c - c).cwiseAbs().maxCoeff() == 0.0)
            return static_cast<int>(k);
    rate_patterns_.push_back({c, 0.0, 0.0});
    return static_cast<int>(rate_patterns_.size()) - 1;
}

EventData::EventData(const std::vector<MatchLog>& logs, const LikelihoodConfig& cfg)
    : model_failure_receiver_(cfg.model_failure_receiver) {
    const CovariateBuilder builder(cfg.covariates, cfg.formation);
    p_ = builder.rate_dim();
    d1_ = builder.success_dim();
    d2_ = builder.fail_dim();
    d3_ = builder.succ_dim();
    std::vector<int> season_counts;
    for (const auto& log : logs)
        add_log(log, builder, season_counts, cfg.covariates.season_scope_pass_received);
    if (logs.empty())  // prior-only fit: units come from the formation
        for (const auto& label : cfg.formation.positions) unit_of(label);
}

void EventData::add_log(const MatchLog& log, const CovariateBuilder& builder,
                        std::vector<int>& season_counts, bool season_scope) {
    log.validate();
    const RosterState& roster = log.roster;

    std::vector<int> match_counts(roster.size(), 0);
    if (season_scope && season_counts.size() != static_cast<std::size_t>(roster.size()))
        season_counts.assign(roster.size(), 0);  // season scope assumes a stable roster
    std::vector<int>& counts = season_scope ? season_counts : match_counts;

    double clock = 0.0;
    Eigen::VectorXd terminal_rate;  // rate covariates of the player holding at T
    {
        // M = 0: the initial holder is censored for the whole match
        PassContext ctx;
        ctx.passer = log.initial_holder;
        ctx.roster = &roster;
        auto [g1, g2] = log.score_at(0.0);
        const int team = roster.team_of(log.initial_holder);
        ctx.goals_for = team == 0 ? g1 : g2;
        ctx.goals_against = team == 0 ? g2 : g1;
        ctx.pass_received = &counts;
        terminal_rate = builder.build(ctx).rate;
    }

    for (std::size_t m = 0; m < log.events.size(); ++m) {
        const MatchEvent& me = log.events[m];
        PassContext ctx;
        ctx.passer = me.passer;
        ctx.roster = &roster;
        ctx.start_x = me.start_x;
        ctx.start_y = me.start_y;
        ctx.end_x = me.end_x;
        ctx.end_y = me.end_y;
        ctx.air = me.air;
        auto [g1, g2] = log.score_at(clock);
        const int team = roster.team_of(me.passer);
        ctx.goals_for = team == 0 ? g1 : g2;
        ctx.goals_against = team == 0 ? g2 : g1;
        ctx.pass_received = &counts;
        const CovariateBundle cov = builder.build(ctx);

        Event e;
        e.h = me.holding_time;
        e.success = me.success;
        e.passer_unit = unit_of(roster.label_of(me.passer));
        e.x1 = cov.success;

        if (me.success) {
            e.has_receiver_term = true;
            for (std::size_t k = 0; k < cov.succ_candidates.size(); ++k) {
                e.cand_units.push_back(unit_of(roster.label_of(cov.succ_candidates[k])));
                e.xr.push_back(cov.succ_cov[k]);
                if (cov.succ_candidates[k] == me.receiver) e.chosen = static_cast<int>(k);
            }
        } else if (model_failure_receiver_) {
            e.has_receiver_term = true;
            for (std::size_t k = 0; k < cov.fail_candidates.size(); ++k) {
                e.cand_units.push_back(unit_of(roster.label_of(cov.fail_candidates[k])));
                e.xr.push_back(cov.fail_cov[k]);
                if (cov.fail_candidates[k] == me.receiver) e.chosen = static_cast<int>(k);
            }
        }
        if (e.has_receiver_term && e.chosen < 0)
            throw std::runtime_error("likelihood: receiver not in candidate set at event " +
                                     std::to_string(m + 1));

        RatePattern& pat = rate_patterns_[pattern_of(cov.rate)];
        pat.count += 1.0;
        pat.exposure += me.holding_time;

        counts[me.receiver]++;
        clock += me.holding_time;
        events_.push_back(std::move(e));

        // update the would-be terminal pattern: whoever holds after this pass
        if (auto holder = log.terminal_holder(); m + 1 == log.events.size() && holder) {
            PassContext tctx;
            tctx.passer = *holder;
            tctx.roster = &roster;
            auto [h1, h2] = log.score_at(clock);
            const int hteam = roster.team_of(*holder);
            tctx.goals_for = hteam == 0 ? h1 : h2;
            tctx.goals_against = hteam == 0 ? h2 : h1;
            tctx.pass_received = &counts;
            terminal_rate = builder.build(tctx).rate;
        }
    }

    const double remainder = log.stop_time - clock;
    if (remainder > 0.0 && log.terminal_holder().has_value())
        rate_patterns_[pattern_of(terminal_rate)].exposure += remainder;
}

double EventData::loglik_rate(const Eigen::VectorXd& omega) const {
    if (omega.size() != p_) throw std::invalid_argument("loglik_rate: omega dimension mismatch");
    double ll = 0.0;
    for (const auto& pat : rate_patterns_) {
        const double lp = omega.dot(pat.c);
        if (std::fabs(lp) > kMaxLinearPredictor)
            throw std::domain_error("loglik_rate: linear predictor out of range");
        ll += pat.count * lp - std::exp(lp) * pat.exposure;
    }
    check_finite(ll, "rate term", -1);
    return ll;
}

double EventData::loglik_success(const Eigen::VectorXd& alpha, const Eigen::MatrixXd& eta) const {
    if (alpha.size() != d1_) throw std::invalid_argument("loglik_success: alpha dimension mismatch");
    double ll = 0.0;
    for (std::size_t m = 0; m < events_.size(); ++m) {
        const Event& e = events_[m];
        const double lp = alpha.dot(e.x1) + eta(e.passer_unit, 0);
        ll += (e.success ? lp : 0.0) - log1pexp(lp);
    }
    check_finite(ll, "success term", -1);
    return ll;
}

double EventData::loglik_receiver(bool success_side, const Eigen::VectorXd& coef,
                                  const Eigen::MatrixXd& eta) const {
    const int etacol = success_side ? 2 : 1;
    double ll = 0.0;
    for (std::size_t m = 0; m < events_.size(); ++m) {
        const Event& e = events_[m];
        if (!e.has_receiver_term || e.success != success_side) continue;
        const int n = static_cast<int>(e.cand_units.size());
        double maxlp = -std::numeric_limits<double>::infinity();
        double lps[64];
        if (n > 64) throw std::runtime_error("loglik_receiver: candidate set too large");
        for (int k = 0; k < n; ++k) {
            lps[k] = coef.dot(e.xr[k]) + eta(e.cand_units[k], etacol);
            maxlp = std::max(maxlp, lps[k]);
        }
        double denom = 0.0;
        for (int k = 0; k < n; ++k) denom += std::exp(lps[k] - maxlp);
        ll += lps[e.chosen] - maxlp - std::log(denom);
    }
    check_finite(ll, "receiver term", -1);
    return ll;
}

double EventData::log_likelihood(const ModelParams& params, const Eigen::MatrixXd& eta) const {
    double ll = loglik_rate(params.omega) + loglik_success(params.alpha, eta) +
                loglik_receiver(true, params.gamma, eta);
    if (model_failure_receiver_) ll += loglik_receiver(false, params.beta, eta);
    return ll;
}

Gradient EventData::gradient(const ModelParams& params, const Eigen::MatrixXd& eta) const {
    Gradient g;
    g.omega = Eigen::VectorXd::Zero(p_);
    g.alpha = Eigen::VectorXd::Zero(d1_);
    g.beta = Eigen::VectorXd::Zero(d2_);
    g.gamma = Eigen::VectorXd::Zero(d3_);
    g.eta = Eigen::MatrixXd::Zero(eta.rows(), 3);

    for (const auto& pat : rate_patterns_)
        g.omega += pat.c * (pat.count - std::exp(params.omega.dot(pat.c)) * pat.exposure);

    for (const auto& e : events_) {
        const double lp = params.alpha.dot(e.x1) + eta(e.passer_unit, 0);
        const double p = lp >= 0.0 ? 1.0 / (1.0 + std::exp(-lp)) : std::exp(lp) / (1.0 + std::exp(lp));
        const double resid = (e.success ? 1.0 : 0.0) - p;
        g.alpha += resid * e.x1;
        g.eta(e.passer_unit, 0) += resid;

        if (!e.has_receiver_term) continue;
        const bool success_side = e.success;
        const Eigen::VectorXd& coef = success_side ? params.gamma : params.beta;
        Eigen::VectorXd& gcoef = success_side ? g.gamma : g.beta;
        const int etacol = success_side ? 2 : 1;
        const int n = static_cast<int>(e.cand_units.size());
        double lps[64], probs[64];
        double maxlp = -std::numeric_limits<double>::infinity();
        for (int k = 0; k < n; ++k) {
            lps[k] = coef.dot(e.xr[k]) + eta(e.cand_units[k], etacol);
            maxlp = std::max(maxlp, lps[k]);
        }
        double denom = 0.0;
        for (int k = 0; k < n; ++k) {
            probs[k] = std::exp(lps[k] - maxlp);
            denom += probs[k];
        }
        for (int k = 0; k < n; ++k) {
            probs[k] /= denom;
            const double r = (k == e.chosen ? 1.0 : 0.0) - probs[k];
            gcoef += r * e.xr[k];
            g.eta(e.cand_units[k], etacol) += r;
        }
    }
    return g;
}

namespace {

Eigen::MatrixXd eta_for(const RandomEffects& effects, const EventData& data) {
    Eigen::MatrixXd eta(data.n_units(), 3);
    for (int u = 0; u < data.n_units(); ++u) {
        const int row = effects.unit_of(data.unit_labels()[u]);
        eta.row(u) = effects.eta.row(row);
    }
    return eta;
}

}  // namespace

double match_log_likelihood(const ModelParams& params, const RandomEffects& effects,
                            const MatchLog& log, const LikelihoodConfig& cfg) {
    EventData data({log}, cfg);
    return data.log_likelihood(params, eta_for(effects, data));
}

double season_log_likelihood(const ModelParams& params, const RandomEffects& effects,
                             const std::vector<MatchLog>& logs, const LikelihoodConfig& cfg) {
    EventData data(logs, cfg);
    return data.log_likelihood(params, eta_for(effects, data));
}

Gradient grad_log_likelihood(const ModelParams& params, const RandomEffects& effects,
                             const std::vector<MatchLog>& logs, const LikelihoodConfig& cfg) {
    EventData data(logs, cfg);
    return data.gradient(params, eta_for(effects, data));
}

// --- MAP ---------------------------------------------------------------------

namespace {

struct Packed {
    int p, d1, d2, d3, n_units;
    int size() const { return p + d1 + d2 + d3 + 3 * n_units; }

    void unpack(const Eigen::VectorXd& theta, ModelParams& params, Eigen::MatrixXd& eta) const {
        int off = 0;
        params.omega = theta.segment(off, p); off += p;
        params.alpha = theta.segment(off, d1); off += d1;
        params.beta = theta.segment(off, d2); off += d2;
        params.gamma = theta.segment(off, d3); off += d3;
        eta = Eigen::Map<const Eigen::MatrixXd>(theta.data() + off, n_units, 3);
    }

    Eigen::VectorXd pack(const Gradient& g) const {
        Eigen::VectorXd v(size());
        int off = 0;
        v.segment(off, p) = g.omega; off += p;
        v.segment(off, d1) = g.alpha; off += d1;
        v.segment(off, d2) = g.beta; off += d2;
        v.segment(off, d3) = g.gamma; off += d3;
        Eigen::Map<Eigen::MatrixXd>(v.data() + off, n_units, 3) = g.eta;
        return v;
    }
};

}  // namespace

MapResult map_estimate(const std::vector<MatchLog>& logs, const LikelihoodConfig& cfg,
                       const MapOptions& opts) {
    EventData data(logs, cfg);
    const Packed layout{data.rate_dim(), data.success_dim(), data.fail_dim(), data.succ_dim(),
                        data.n_units()};
    const double prior_prec = 1.0 / (opts.fixed_effect_sd * opts.fixed_effect_sd);
    const int n_fixed = layout.p + layout.d1 + layout.d2 + layout.d3;

    // negative penalized log-likelihood and its gradient
    auto eval = [&](const Eigen::VectorXd& theta, Eigen::VectorXd& grad) -> double {
        ModelParams params;
        Eigen::MatrixXd eta;
        layout.unpack(theta, params, eta);
        const double ll = data.log_likelihood(params, eta);
        Gradient g = data.gradient(params, eta);
        grad = -layout.pack(g);
        // Gaussian penalty on fixed effects, standard-normal penalty on eta
        grad.head(n_fixed) += prior_prec * theta.head(n_fixed);
        grad.tail(3 * layout.n_units) += theta.tail(3 * layout.n_units);
        return -(ll - 0.5 * prior_prec * theta.head(n_fixed).squaredNorm() -
                 0.5 * theta.tail(3 * layout.n_units).squaredNorm());
    };

    Eigen::VectorXd theta = Eigen::VectorXd::Zero(layout.size());
    Eigen::VectorXd grad(layout.size());
    double f = eval(theta, grad);
    if (!std::isfinite(f)) throw std::runtime_error("map_estimate: non-finite objective at init");

    // L-BFGS (two-loop recursion) with Armijo backtracking
    const int mem = 8;
    std::deque<Eigen::VectorXd> s_hist, y_hist;
    MapResult result;
    result.status = MapStatus::max_iters;
    int it = 0;
    for (; it < opts.max_iters; ++it) {
        if (grad.cwiseAbs().maxCoeff() <= opts.grad_tol) {
            result.status = MapStatus::converged;
            break;
        }
        Eigen::VectorXd q = grad;
        std::vector<double> alpha_hist(s_hist.size());
        for (int k = static_cast<int>(s_hist.size()) - 1; k >= 0; --k) {
            const double rho = 1.0 / y_hist[k].dot(s_hist[k]);
            alpha_hist[k] = rho * s_hist[k].dot(q);
            q -= alpha_hist[k] * y_hist[k];
        }
        if (!s_hist.empty()) {
            const auto& s = s_hist.back();
            const auto& y = y_hist.back();
            q *= s.dot(y) / y.dot(y);
        }
        for (std::size_t k = 0; k < s_hist.size(); ++k) {
            const double rho = 1.0 / y_hist[k].dot(s_hist[k]);
            const double b = rho * y_hist[k].dot(q);
            q += (alpha_hist[k] - b) * s_hist[k];
        }
        Eigen::VectorXd dir = -q;
        if (dir.dot(grad) >= 0.0) dir = -grad;  // fall back to steepest descent

        double step = 1.0;
        const double slope = dir.dot(grad);
        Eigen::VectorXd theta_new, grad_new(layout.size());
        double f_new = f;
        bool ok = false;
        for (int ls = 0; ls < 40; ++ls) {
            theta_new = theta + step * dir;
            f_new = eval(theta_new, grad_new);
            if (std::isfinite(f_new) && f_new <= f + 1e-4 * step * slope) {
                ok = true;
                break;
            }
            step *= 0.5;
        }
        if (!ok) {
            result.status = MapStatus::line_search_failed;
            break;
        }
        Eigen::VectorXd s = theta_new - theta;
        Eigen::VectorXd y = grad_new - grad;
        // relative curvature test: an absolute cutoff starves the history of
        // pairs once steps shrink near the optimum, stalling convergence
        if (y.dot(s) > 1e-10 * s.norm() * y.norm()) {
            s_hist.push_back(std::move(s));
            y_hist.push_back(std::move(y));
            if (static_cast<int>(s_hist.size()) > mem) {
                s_hist.pop_front();
                y_hist.pop_front();
            }
        }
        theta = std::move(theta_new);
        grad = std::move(grad_new);
        f = f_new;
    }

    Eigen::MatrixXd eta;
    layout.unpack(theta, result.params, eta);
    result.effects = RandomEffects::zero(data.unit_labels());
    result.effects.eta = eta;
    result.objective = -f;
    result.iterations = it;
    return result;
}

}  // namespace passnet
