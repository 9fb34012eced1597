#include "passnet/mcmc.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <limits>
#include <numbers>
#include <sstream>
#include <stdexcept>
#include <thread>

#include <json.hpp>

namespace passnet {

namespace {

using json = nlohmann::ordered_json;

std::string fmt(double v) {
    char buf[32];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, ptr);
}

double log1pexp(double x) {
    if (x > 35.0) return x;
    if (x < -35.0) return std::exp(x);
    return std::log1p(std::exp(x));
}

// Robbins-Monro step-size adaptation plus running posterior shape estimation
// (Welford, both per-coordinate spread and full covariance), active only
// during warmup. Multi-dimensional blocks graduate to correlated proposals
// once the empirical covariance has enough observations behind it.
struct Adapt {
    std::string name;
    double log_step = std::log(0.1);
    double target = 0.3;
    bool frozen = false;
    long proposals = 0, accepts = 0;
    Eigen::VectorXd mean, m2, scale;
    Eigen::MatrixXd cov_m2, chol;
    bool use_chol = false;
    bool allow_cov = false;
    long n_obs = 0;

    void init(std::string block_name, int dim, double target_accept, double step0) {
        name = std::move(block_name);
        target = target_accept;
        log_step = std::log(step0);
        scale = Eigen::VectorXd::Ones(dim);
        mean = Eigen::VectorXd::Zero(dim);
        m2 = Eigen::VectorXd::Zero(dim);
        cov_m2 = Eigen::MatrixXd::Zero(dim, dim);
        chol = Eigen::MatrixXd::Identity(dim, dim);
        use_chol = false;
    }
    double step() const { return std::exp(log_step); }
    void record(bool accepted, long iter) {
        ++proposals;
        if (accepted) ++accepts;
        if (frozen) return;
        const double gain = std::pow(static_cast<double>(iter) + 10.0, -0.6);
        log_step = std::clamp(log_step + gain * ((accepted ? 1.0 : 0.0) - target), -15.0, 5.0);
    }
    void observe(const Eigen::VectorXd& x) {
        if (frozen || x.size() != mean.size()) return;
        ++n_obs;
        const Eigen::VectorXd d = x - mean;
        mean += d / static_cast<double>(n_obs);
        const Eigen::VectorXd d2 = x - mean;
        m2 += d.cwiseProduct(d2);
        cov_m2 += d * d2.transpose();
        if (n_obs >= 50)
            scale = (m2 / static_cast<double>(n_obs - 1)).cwiseSqrt().cwiseMax(1e-3);
        // refresh the proposal Cholesky occasionally; correlated blocks mix far
        // better under a shaped proposal than under per-coordinate jitter
        if (allow_cov && mean.size() > 1 && n_obs >= 100 && n_obs % 50 == 0) {
            Eigen::MatrixXd cov = cov_m2 / static_cast<double>(n_obs - 1);
            const double ridge = 1e-6 + 1e-4 * cov.diagonal().mean();
            cov.diagonal().array() += ridge;
            const Eigen::LLT<Eigen::MatrixXd> llt(cov);
            if (llt.info() == Eigen::Success) {
                chol = llt.matrixL();
                use_chol = true;
            }
        }
    }
};

// Receiver-choice factor for one side (success or failure), with candidate
// linear predictors and per-event softmax denominators cached so per-unit eta
// proposals cost O(events containing the unit) instead of O(all candidates).
struct SideCache {
    int etacol = 2;
    std::vector<int> ev;                       // event indices on this side
    std::vector<int> off;                      // ev.size()+1 offsets into flat arrays
    std::vector<int> cand;                     // flat: candidate unit id
    std::vector<const Eigen::VectorXd*> x;     // flat: covariate vector
    std::vector<int> chosen;                   // per ev: flat position of the receiver
    std::vector<double> dot;                   // flat: coef . x
    std::vector<double> lp;                    // flat: dot + eta(cand, etacol)
    std::vector<double> maxlp, sumexp;         // per ev
    std::vector<std::vector<int>> unit_pos;    // per unit: flat positions
    std::vector<int> pos_ev;                   // flat position -> ev slot
    double cached_ll = 0.0;

    void build_structure(const EventData& data, bool success_side) {
        etacol = success_side ? 2 : 1;
        unit_pos.assign(data.n_units(), {});
        off.push_back(0);
        const auto& events = data.events();
        for (int m = 0; m < data.n_events(); ++m) {
            const auto& e = events[m];
            if (!e.has_receiver_term || e.success != success_side) continue;
            const int slot = static_cast<int>(ev.size());
            ev.push_back(m);
            for (std::size_t k = 0; k < e.cand_units.size(); ++k) {
                const int pos = static_cast<int>(cand.size());
                cand.push_back(e.cand_units[k]);
                x.push_back(&e.xr[k]);
                unit_pos[e.cand_units[k]].push_back(pos);
                pos_ev.push_back(slot);
                if (static_cast<int>(k) == e.chosen) chosen.push_back(pos);
            }
            off.push_back(static_cast<int>(cand.size()));
        }
        dot.assign(cand.size(), 0.0);
        lp.assign(cand.size(), 0.0);
        maxlp.assign(ev.size(), 0.0);
        sumexp.assign(ev.size(), 0.0);
    }

    void set_coef(const Eigen::VectorXd& coef) {
        for (std::size_t k = 0; k < cand.size(); ++k) dot[k] = coef.size() ? coef.dot(*x[k]) : 0.0;
    }

    void rebuild(const Eigen::MatrixXd& eta) {
        cached_ll = 0.0;
        for (std::size_t s = 0; s < ev.size(); ++s) {
            double mx = -std::numeric_limits<double>::infinity();
            for (int k = off[s]; k < off[s + 1]; ++k) {
                lp[k] = dot[k] + eta(cand[k], etacol);
                mx = std::max(mx, lp[k]);
            }
            double se = 0.0;
            for (int k = off[s]; k < off[s + 1]; ++k) se += std::exp(lp[k] - mx);
            maxlp[s] = mx;
            sumexp[s] = se;
            cached_ll += lp[chosen[s]] - mx - std::log(se);
        }
    }

    double loglik() const { return cached_ll; }

    // Log-likelihood under a trial eta matrix, without touching the cache.
    double loglik_with(const Eigen::MatrixXd& eta) const {
        double ll = 0.0;
        for (std::size_t s = 0; s < ev.size(); ++s) {
            double mx = -std::numeric_limits<double>::infinity();
            for (int k = off[s]; k < off[s + 1]; ++k)
                mx = std::max(mx, dot[k] + eta(cand[k], etacol));
            double se = 0.0;
            for (int k = off[s]; k < off[s + 1]; ++k) se += std::exp(dot[k] + eta(cand[k], etacol) - mx);
            ll += dot[chosen[s]] + eta(cand[chosen[s]], etacol) - mx - std::log(se);
        }
        return ll;
    }

    // Log-likelihood under trial coefficients (current eta stays baked in lp).
    double loglik_with_coef(const Eigen::VectorXd& coef, const Eigen::MatrixXd& eta) const {
        double ll = 0.0;
        for (std::size_t s = 0; s < ev.size(); ++s) {
            double mx = -std::numeric_limits<double>::infinity();
            for (int k = off[s]; k < off[s + 1]; ++k)
                mx = std::max(mx, coef.dot(*x[k]) + eta(cand[k], etacol));
            double se = 0.0;
            for (int k = off[s]; k < off[s + 1]; ++k)
                se += std::exp(coef.dot(*x[k]) + eta(cand[k], etacol) - mx);
            ll += coef.dot(*x[chosen[s]]) + eta(cand[chosen[s]], etacol) - mx - std::log(se);
        }
        return ll;
    }

    // Change in log-likelihood when unit u's eta component moves by delta.
    double unit_delta(int u, double delta) const {
        double dll = 0.0;
        for (int pos : unit_pos[u]) {
            const int s = pos_ev[pos];
            const double lp_new = lp[pos] + delta;
            if (lp_new - maxlp[s] > 30.0) {
                // shift would overflow the cached scaling: evaluate the event fresh
                double old_ll = lp[chosen[s]] - maxlp[s] - std::log(sumexp[s]);
                double mx = -std::numeric_limits<double>::infinity();
                for (int k = off[s]; k < off[s + 1]; ++k)
                    mx = std::max(mx, lp[k] + (k == pos ? delta : 0.0));
                double se = 0.0;
                for (int k = off[s]; k < off[s + 1]; ++k)
                    se += std::exp(lp[k] + (k == pos ? delta : 0.0) - mx);
                dll += lp[chosen[s]] + (chosen[s] == pos ? delta : 0.0) - mx - std::log(se) - old_ll;
                continue;
            }
            const double se_new =
                sumexp[s] + std::exp(lp_new - maxlp[s]) - std::exp(lp[pos] - maxlp[s]);
            dll += (chosen[s] == pos ? delta : 0.0) - std::log(se_new / sumexp[s]);
        }
        return dll;
    }

    void commit_unit(int u, double delta) {
        for (int pos : unit_pos[u]) {
            const int s = pos_ev[pos];
            const double lp_new = lp[pos] + delta;
            if (lp_new - maxlp[s] > 30.0) {
                lp[pos] = lp_new;
                double mx = -std::numeric_limits<double>::infinity();
                for (int k = off[s]; k < off[s + 1]; ++k) mx = std::max(mx, lp[k]);
                double se = 0.0;
                for (int k = off[s]; k < off[s + 1]; ++k) se += std::exp(lp[k] - mx);
                maxlp[s] = mx;
                sumexp[s] = se;
                continue;
            }
            sumexp[s] += std::exp(lp_new - maxlp[s]) - std::exp(lp[pos] - maxlp[s]);
            lp[pos] = lp_new;
        }
    }
};

struct BlockLayout {
    int p, d1, d2, d3, n_units;
};

class Sampler {
public:
    Sampler(const EventData& data, const PriorSpec& prior, bool gradient_proposals,
            ChainState state, Philox rng)
        : data_(data), prior_(prior), mala_(gradient_proposals), rng_(std::move(rng)),
          st_(std::move(state)) {
        succ_side_.build_structure(data_, true);
        if (data_.models_failure_receiver()) fail_side_.build_structure(data_, false);
        passer_events_.assign(data_.n_units(), {});
        for (int m = 0; m < data_.n_events(); ++m)
            passer_events_[data_.events()[m].passer_unit].push_back(m);
        alpha_dot_.assign(data_.n_events(), 0.0);

        const int n = data_.n_units();
        // the intercept/eta_1 shift direction is likelihood-invariant; a joint
        // move along it is needed for the two to decorrelate
        shift_move_ = data_.success_dim() > 0;
        for (const auto& e : data_.events())
            if (e.x1.size() == 0 || e.x1[0] != 1.0) shift_move_ = false;

        blocks_.resize(8 + n);
        blocks_[kOmega].init("omega", data_.rate_dim(), 0.3, 0.2);
        blocks_[kAlpha].init("alpha", data_.success_dim(), 0.3, 0.2);
        blocks_[kBeta].init("beta", data_.fail_dim(), 0.3, 0.2);
        blocks_[kGamma].init("gamma", data_.succ_dim(), 0.3, 0.2);
        // shaped (full-covariance) proposals suit the pass-model coefficient
        // blocks, whose posteriors are correlated but free of exact ridges;
        // the rate block keeps per-coordinate jitter because its one-hot shift
        // ridge (handled by the dedicated shift move) distorts the estimate
        blocks_[kAlpha].allow_cov = true;
        blocks_[kBeta].allow_cov = true;
        blocks_[kGamma].allow_cov = true;
        blocks_[kLogSd].init("log_sd", 3, 0.3, 0.2);
        blocks_[kCorr].init("corr", 3, 0.3, 0.3);
        blocks_[kRescale].init("rescale", 3, 0.44, 0.3);  // shared 1-dim steps per component
        blocks_[kShift].init("shift", 1, 0.44, 0.5);
        for (int u = 0; u < n; ++u)
            blocks_[kEta0 + u].init("eta[" + data_.unit_labels()[u] + "]", 3, 0.3, 0.3);
        restore_scales();
        refresh_all();
    }

    void run(int warmup, int iters, int thin, Eigen::MatrixXd& out) {
        const int n_params = row_size();
        const int n_draws = iters / thin;
        out.resize(n_draws, n_params);
        // gradient proposals start from random-walk-calibrated scales and a
        // state already inside the posterior bulk; launching them cold from the
        // zero init collapses the step size and freezes slow coordinates
        mala_gate_ = warmup / 2;
        int row = 0;
        for (long it = 0; it < warmup + iters; ++it) {
            iter_ = it;
            step_once(it < warmup);
            if (it == warmup - 1) {
                check_acceptance();
                if (std::getenv("PASSNET_MCMC_DEBUG"))
                    for (const auto& b : blocks_)
                        if (b.proposals > 0)
                            std::fprintf(stderr, "[mcmc] %-12s step=%.4g acc=%.3f\n",
                                         b.name.c_str(), b.step(),
                                         static_cast<double>(b.accepts) / b.proposals);
                for (auto& b : blocks_) b.frozen = true;
            }
            if (it >= warmup && (it - warmup + 1) % thin == 0 && row < n_draws)
                out.row(row++) = make_row();
            if ((it + 1) % 500 == 0) refresh_all();  // scrub incremental drift
        }
    }

    ChainState state() const {
        ChainState s = st_;
        s.block_names.clear();
        s.block_log_step.clear();
        s.block_scale.clear();
        for (const auto& b : blocks_) {
            s.block_names.push_back(b.name);
            s.block_log_step.push_back(b.log_step);
            s.block_scale.push_back(b.scale);
        }
        return s;
    }

    int row_size() const {
        return data_.rate_dim() + data_.success_dim() + data_.fail_dim() + data_.succ_dim() +
               3 * data_.n_units() + 6;
    }

private:
    enum { kOmega = 0, kAlpha, kBeta, kGamma, kLogSd, kCorr, kRescale, kShift, kEta0 };

    void restore_scales() {
        for (std::size_t i = 0; i < st_.block_names.size(); ++i)
            for (auto& b : blocks_)
                if (b.name == st_.block_names[i]) {
                    b.log_step = st_.block_log_step[i];
                    if (st_.block_scale[i].size() == b.scale.size()) b.scale = st_.block_scale[i];
                }
    }

    void refresh_all() {
        for (int m = 0; m < data_.n_events(); ++m)
            alpha_dot_[m] = st_.params.alpha.size() ? st_.params.alpha.dot(data_.events()[m].x1) : 0.0;
        succ_side_.set_coef(st_.params.gamma);
        succ_side_.rebuild(st_.eta);
        if (data_.models_failure_receiver()) {
            fail_side_.set_coef(st_.params.beta);
            fail_side_.rebuild(st_.eta);
        }
        refresh_sigma();
    }

    void refresh_sigma() {
        CovarianceSpec cov;
        cov.sd = st_.log_sd.array().exp();
        cov.corr = CorrTransform::corr(st_.corr_y);
        sigma_llt_.compute(cov.sigma());
        sigma_logdet_ = 2.0 * std::log(sigma_llt_.matrixL()(0, 0) * sigma_llt_.matrixL()(1, 1) *
                                       sigma_llt_.matrixL()(2, 2));
    }

    double mvn_logpdf(const Eigen::Vector3d& v) const {
        const Eigen::Vector3d z = sigma_llt_.matrixL().solve(v);
        return -1.5 * std::log(2.0 * std::numbers::pi) - 0.5 * sigma_logdet_ - 0.5 * z.squaredNorm();
    }

    double mvn_sum(const Eigen::MatrixXd& eta, const Eigen::LLT<Eigen::Matrix3d>& llt,
                   double logdet) const {
        double lp = 0.0;
        for (int i = 0; i < eta.rows(); ++i) {
            const Eigen::Vector3d z = llt.matrixL().solve(eta.row(i).transpose());
            lp += -0.5 * z.squaredNorm();
        }
        lp += eta.rows() * (-1.5 * std::log(2.0 * std::numbers::pi) - 0.5 * logdet);
        return lp;
    }

    double success_loglik(const Eigen::MatrixXd& eta) const {
        double ll = 0.0;
        const auto& events = data_.events();
        for (int m = 0; m < data_.n_events(); ++m) {
            const double lp = alpha_dot_[m] + eta(events[m].passer_unit, 0);
            ll += (events[m].success ? lp : 0.0) - log1pexp(lp);
        }
        return ll;
    }

    double success_loglik_alpha(const Eigen::VectorXd& alpha) const {
        double ll = 0.0;
        const auto& events = data_.events();
        for (int m = 0; m < data_.n_events(); ++m) {
            const double lp = alpha.dot(events[m].x1) + st_.eta(events[m].passer_unit, 0);
            ll += (events[m].success ? lp : 0.0) - log1pexp(lp);
        }
        return ll;
    }

    // --- gradient helpers (Langevin proposals) -------------------------------

    Eigen::VectorXd grad_alpha(const Eigen::VectorXd& alpha) const {
        Eigen::VectorXd g = Eigen::VectorXd::Zero(alpha.size());
        const auto& events = data_.events();
        for (int m = 0; m < data_.n_events(); ++m) {
            const double lp = alpha.dot(events[m].x1) + st_.eta(events[m].passer_unit, 0);
            const double p = lp >= 0 ? 1.0 / (1.0 + std::exp(-lp)) : std::exp(lp) / (1.0 + std::exp(lp));
            g += ((events[m].success ? 1.0 : 0.0) - p) * events[m].x1;
        }
        return g - alpha / (prior_.fixed_effect_sd * prior_.fixed_effect_sd);
    }

    Eigen::VectorXd grad_omega(const Eigen::VectorXd& omega) const {
        Eigen::VectorXd g = Eigen::VectorXd::Zero(omega.size());
        for (const auto& pat : data_.rate_patterns())
            g += pat.c * (pat.count - std::exp(omega.dot(pat.c)) * pat.exposure);
        return g - omega / (prior_.fixed_effect_sd * prior_.fixed_effect_sd);
    }

    Eigen::VectorXd grad_coef(const SideCache& side, const Eigen::VectorXd& coef) const {
        Eigen::VectorXd g = Eigen::VectorXd::Zero(coef.size());
        for (std::size_t s = 0; s < side.ev.size(); ++s) {
            double mx = -std::numeric_limits<double>::infinity();
            for (int k = side.off[s]; k < side.off[s + 1]; ++k)
                mx = std::max(mx, coef.dot(*side.x[k]) + st_.eta(side.cand[k], side.etacol));
            double se = 0.0;
            for (int k = side.off[s]; k < side.off[s + 1]; ++k)
                se += std::exp(coef.dot(*side.x[k]) + st_.eta(side.cand[k], side.etacol) - mx);
            for (int k = side.off[s]; k < side.off[s + 1]; ++k) {
                const double p =
                    std::exp(coef.dot(*side.x[k]) + st_.eta(side.cand[k], side.etacol) - mx) / se;
                g += ((k == side.chosen[s] ? 1.0 : 0.0) - p) * *side.x[k];
            }
        }
        return g - coef / (prior_.fixed_effect_sd * prior_.fixed_effect_sd);
    }

    // --- generic moves -------------------------------------------------------

    template <class Target>
    bool rw_update(Eigen::VectorXd& x, Adapt& a, Target&& log_target) {
        if (!x.size()) return false;
        const double cur = log_target(x);
        Eigen::VectorXd prop = x;
        const double s = a.step();
        if (a.use_chol) {
            Eigen::VectorXd z(x.size());
            for (int k = 0; k < x.size(); ++k) z[k] = rng_.normal();
            prop += s * (a.chol * z);
        } else {
            for (int k = 0; k < x.size(); ++k) prop[k] += s * a.scale[k] * rng_.normal();
        }
        double lp;
        try {
            lp = log_target(prop);
        } catch (const std::exception&) {
            lp = -std::numeric_limits<double>::infinity();
        }
        const bool accept = std::isfinite(lp) && std::log(rng_.uniform()) < lp - cur;
        if (accept) x = prop;
        a.record(accept, iter_);
        a.observe(x);
        return accept;
    }

    template <class Target, class Grad>
    bool mala_update(Eigen::VectorXd& x, Adapt& a, Target&& log_target, Grad&& grad) {
        if (!x.size()) return false;
        const double s = a.step();
        const Eigen::VectorXd d = a.scale;  // per-coordinate proposal sd factors
        auto drift = [&](const Eigen::VectorXd& v, const Eigen::VectorXd& g) {
            return v + 0.5 * s * s * d.cwiseProduct(d).cwiseProduct(g);
        };
        auto logq = [&](const Eigen::VectorXd& to, const Eigen::VectorXd& mu) {
            double lq = 0.0;
            for (int k = 0; k < to.size(); ++k) {
                const double sd = s * d[k];
                const double z = (to[k] - mu[k]) / sd;
                lq += -0.5 * z * z - std::log(sd);
            }
            return lq;
        };
        const double cur = log_target(x);
        const Eigen::VectorXd g0 = grad(x);
        const Eigen::VectorXd mu0 = drift(x, g0);
        Eigen::VectorXd prop(x.size());
        for (int k = 0; k < x.size(); ++k) prop[k] = mu0[k] + s * d[k] * rng_.normal();
        double lp;
        Eigen::VectorXd mu1;
        try {
            lp = log_target(prop);
            mu1 = drift(prop, grad(prop));
        } catch (const std::exception&) {
            lp = -std::numeric_limits<double>::infinity();
            mu1 = prop;
        }
        const double logr = lp - cur + logq(x, mu1) - logq(prop, mu0);
        const bool accept = std::isfinite(lp) && std::log(rng_.uniform()) < logr;
        if (accept) x = prop;
        a.record(accept, iter_);
        a.observe(x);
        return accept;
    }

    bool mala_now() const { return mala_ && iter_ >= mala_gate_; }

    // --- block updates -------------------------------------------------------

    void update_omega() {
        auto target = [&](const Eigen::VectorXd& w) {
            return data_.loglik_rate(w) + log_gaussian_prior(w, prior_.fixed_effect_sd);
        };
        if (mala_now())
            mala_update(st_.params.omega, blocks_[kOmega], target,
                        [&](const Eigen::VectorXd& w) { return grad_omega(w); });
        else
            rw_update(st_.params.omega, blocks_[kOmega], target);
    }

    void update_alpha() {
        auto target = [&](const Eigen::VectorXd& al) {
            return success_loglik_alpha(al) + log_gaussian_prior(al, prior_.fixed_effect_sd);
        };
        bool accepted;
        if (mala_now())
            accepted = mala_update(st_.params.alpha, blocks_[kAlpha], target,
                                   [&](const Eigen::VectorXd& al) { return grad_alpha(al); });
        else
            accepted = rw_update(st_.params.alpha, blocks_[kAlpha], target);
        if (accepted)
            for (int m = 0; m < data_.n_events(); ++m)
                alpha_dot_[m] = st_.params.alpha.dot(data_.events()[m].x1);
    }

    void update_coef(SideCache& side, Eigen::VectorXd& coef, Adapt& a) {
        auto target = [&](const Eigen::VectorXd& c) {
            return side.loglik_with_coef(c, st_.eta) + log_gaussian_prior(c, prior_.fixed_effect_sd);
        };
        bool accepted;
        if (mala_now())
            accepted = mala_update(coef, a, target,
                                   [&](const Eigen::VectorXd& c) { return grad_coef(side, c); });
        else
            accepted = rw_update(coef, a, target);
        if (accepted) {
            side.set_coef(coef);
            side.rebuild(st_.eta);
        }
    }

    void update_eta(int u) {
        Adapt& a = blocks_[kEta0 + u];
        const Eigen::Vector3d sd = st_.log_sd.array().exp();
        Eigen::Vector3d delta;
        const double s = a.step();
        for (int k = 0; k < 3; ++k) delta[k] = s * (sd[k] + 0.05) * rng_.normal();

        const Eigen::Vector3d cur_eta = st_.eta.row(u).transpose();
        const Eigen::Vector3d new_eta = cur_eta + delta;
        double dll = succ_side_.unit_delta(u, delta[2]);
        if (data_.models_failure_receiver()) dll += fail_side_.unit_delta(u, delta[1]);
        // success-logit part touches only this unit's passes
        for (int m : passer_events_[u]) {
            const auto& e = data_.events()[m];
            const double lp0 = alpha_dot_[m] + cur_eta[0];
            const double lp1 = alpha_dot_[m] + new_eta[0];
            dll += (e.success ? lp1 - lp0 : 0.0) - log1pexp(lp1) + log1pexp(lp0);
        }
        dll += mvn_logpdf(new_eta) - mvn_logpdf(cur_eta);

        const bool accept = std::log(rng_.uniform()) < dll;
        if (accept) {
            st_.eta.row(u) = new_eta.transpose();
            succ_side_.commit_unit(u, delta[2]);
            if (data_.models_failure_receiver()) fail_side_.commit_unit(u, delta[1]);
        }
        a.record(accept, iter_);
    }

    double scale_prior(const Eigen::Vector3d& log_sd) const {
        // Exponential(rate) on sd, with the log-transform Jacobian
        double lp = 0.0;
        for (int k = 0; k < 3; ++k)
            lp += std::log(prior_.scale_rate) - prior_.scale_rate * std::exp(log_sd[k]) + log_sd[k];
        return lp;
    }

    void update_log_sd() {
        Adapt& a = blocks_[kLogSd];
        auto target = [&](const Eigen::VectorXd& ls) {
            CovarianceSpec cov;
            cov.sd = ls.array().exp();
            cov.corr = CorrTransform::corr(st_.corr_y);
            Eigen::LLT<Eigen::Matrix3d> llt(cov.sigma());
            if (llt.info() != Eigen::Success) return -std::numeric_limits<double>::infinity();
            const double logdet =
                2.0 * std::log(llt.matrixL()(0, 0) * llt.matrixL()(1, 1) * llt.matrixL()(2, 2));
            return mvn_sum(st_.eta, llt, logdet) + scale_prior(ls);
        };
        Eigen::VectorXd ls = st_.log_sd;
        if (rw_update(ls, a, target)) {
            st_.log_sd = ls;
            refresh_sigma();
        }
    }

    void update_corr() {
        Adapt& a = blocks_[kCorr];
        auto target = [&](const Eigen::VectorXd& y) {
            CovarianceSpec cov;
            cov.sd = st_.log_sd.array().exp();
            cov.corr = CorrTransform::corr(y);
            Eigen::LLT<Eigen::Matrix3d> llt(cov.sigma());
            if (llt.info() != Eigen::Success) return -std::numeric_limits<double>::infinity();
            const double logdet =
                2.0 * std::log(llt.matrixL()(0, 0) * llt.matrixL()(1, 1) * llt.matrixL()(2, 2));
            return mvn_sum(st_.eta, llt, logdet) +
                   (prior_.lkj_shape - 1.0) * CorrTransform::log_det_corr(y) +
                   CorrTransform::log_jacobian(y);
        };
        Eigen::VectorXd y = st_.corr_y;
        if (rw_update(y, a, target)) {
            st_.corr_y = y;
            refresh_sigma();
        }
    }

    // Joint move: sd_k and the whole eta column k are scaled together. This
    // walks along the prior's funnel direction, which single-site moves cannot.
    void update_rescale(int k) {
        Adapt& a = blocks_[kRescale];
        const double eps = a.step() * a.scale[k] * rng_.normal();
        const int n = data_.n_units();

        Eigen::MatrixXd eta_try = st_.eta;
        eta_try.col(k) *= std::exp(eps);
        Eigen::Vector3d ls_try = st_.log_sd;
        ls_try[k] += eps;

        double dll = 0.0;
        if (k == 0)
            dll = success_loglik(eta_try) - success_loglik(st_.eta);
        else if (k == 2)
            dll = succ_side_.loglik_with(eta_try) - succ_side_.loglik();
        else if (data_.models_failure_receiver())
            dll = fail_side_.loglik_with(eta_try) - fail_side_.loglik();

        CovarianceSpec cov;
        cov.sd = ls_try.array().exp();
        cov.corr = CorrTransform::corr(st_.corr_y);
        Eigen::LLT<Eigen::Matrix3d> llt(cov.sigma());
        double logr = -std::numeric_limits<double>::infinity();
        if (llt.info() == Eigen::Success) {
            const double logdet =
                2.0 * std::log(llt.matrixL()(0, 0) * llt.matrixL()(1, 1) * llt.matrixL()(2, 2));
            logr = dll + mvn_sum(eta_try, llt, logdet) - mvn_sum(st_.eta, sigma_llt_, sigma_logdet_) +
                   scale_prior(ls_try) - scale_prior(st_.log_sd) + n * eps;
        }
        const bool accept = std::log(rng_.uniform()) < logr;
        if (accept) {
            st_.eta = std::move(eta_try);
            st_.log_sd = ls_try;
            refresh_sigma();
            if (k == 2) succ_side_.rebuild(st_.eta);
            if (k == 1 && data_.models_failure_receiver()) fail_side_.rebuild(st_.eta);
        }
        a.record(accept, iter_);
    }

    // alpha[0] += delta, eta(:,1) -= delta leaves every success logit
    // unchanged; only the priors move.
    void update_shift() {
        Adapt& a = blocks_[kShift];
        const double delta = a.step() * rng_.normal();
        const double a0 = st_.params.alpha[0];
        const double sd2 = prior_.fixed_effect_sd * prior_.fixed_effect_sd;
        double logr = -0.5 * ((a0 + delta) * (a0 + delta) - a0 * a0) / sd2;
        for (int u = 0; u < data_.n_units(); ++u) {
            Eigen::Vector3d row = st_.eta.row(u).transpose();
            const Eigen::Vector3d shifted{row[0] - delta, row[1], row[2]};
            logr += mvn_logpdf(shifted) - mvn_logpdf(row);
        }
        const bool accept = std::log(rng_.uniform()) < logr;
        if (accept) {
            st_.params.alpha[0] += delta;
            st_.eta.col(0).array() -= delta;
            for (int m = 0; m < data_.n_events(); ++m) alpha_dot_[m] += delta;
        }
        a.record(accept, iter_);
    }

    void step_once(bool /*in_warmup*/) {
        // fixed-effect targets cost O(events) while the sweep is dominated by
        // the per-unit receiver caches, so extra repeats buy effective sample
        // size for these slow-mixing blocks almost for free
        for (int rep = 0; rep < 4; ++rep) {
            update_omega();
            update_alpha();
        }
        if (data_.fail_dim() > 0 && data_.models_failure_receiver())
            update_coef(fail_side_, st_.params.beta, blocks_[kBeta]);
        if (data_.succ_dim() > 0) update_coef(succ_side_, st_.params.gamma, blocks_[kGamma]);
        for (int u = 0; u < data_.n_units(); ++u) update_eta(u);
        update_log_sd();
        update_corr();
        for (int k = 0; k < 3; ++k) update_rescale(k);
        if (shift_move_) update_shift();
    }

    void check_acceptance() const {
        for (const auto& b : blocks_) {
            if (b.proposals >= 100 && b.accepts == 0)
                throw std::runtime_error("mcmc: block '" + b.name +
                                         "' accepted no proposals during warmup");
        }
    }

    Eigen::RowVectorXd make_row() const {
        Eigen::RowVectorXd row(row_size());
        int off = 0;
        auto put = [&](const Eigen::VectorXd& v) {
            for (int k = 0; k < v.size(); ++k) row[off++] = v[k];
        };
        put(st_.params.omega);
        put(st_.params.alpha);
        put(st_.params.beta);
        put(st_.params.gamma);
        for (int u = 0; u < data_.n_units(); ++u)
            for (int k = 0; k < 3; ++k) row[off++] = st_.eta(u, k);
        for (int k = 0; k < 3; ++k) row[off++] = std::exp(st_.log_sd[k]);
        const Eigen::Matrix3d c = CorrTransform::corr(st_.corr_y);
        row[off++] = c(0, 1);
        row[off++] = c(0, 2);
        row[off++] = c(1, 2);
        return row;
    }

    const EventData& data_;
    const PriorSpec prior_;
    const bool mala_;
    long mala_gate_ = 0;  // iteration at which gradient proposals switch on
    bool shift_move_ = false;
    Philox rng_;
    ChainState st_;
    long iter_ = 0;

    SideCache succ_side_, fail_side_;
    std::vector<std::vector<int>> passer_events_;
    std::vector<double> alpha_dot_;
    std::vector<Adapt> blocks_;
    Eigen::LLT<Eigen::Matrix3d> sigma_llt_;
    double sigma_logdet_ = 0.0;
};

std::vector<std::string> build_param_names(const EventData& data, const CovariateBuilder& builder) {
    std::vector<std::string> names;
    for (const auto& n : builder.rate_names()) names.push_back("omega[" + n + "]");
    for (const auto& n : builder.success_names()) names.push_back("alpha[" + n + "]");
    for (int k = 0; k < data.fail_dim(); ++k) names.push_back("beta[" + std::to_string(k + 1) + "]");
    for (const auto& n : builder.succ_names()) names.push_back("gamma[" + n + "]");
    for (const auto& u : data.unit_labels())
        for (int k = 1; k <= 3; ++k) names.push_back("eta[" + u + "." + std::to_string(k) + "]");
    for (int k = 1; k <= 3; ++k) names.push_back("sigma[" + std::to_string(k) + "]");
    names.push_back("corr[1,2]");
    names.push_back("corr[1,3]");
    names.push_back("corr[2,3]");
    return names;
}

constexpr std::uint64_t kChainStreamBase = 0x6D636D6331ull;

ChainState default_state(const EventData& data, Philox& rng) {
    ChainState st;
    auto jitter = [&](int dim) {
        Eigen::VectorXd v(dim);
        for (int k = 0; k < dim; ++k) v[k] = 0.1 * rng.normal();
        return v;
    };
    st.params.omega = jitter(data.rate_dim());
    st.params.alpha = jitter(data.success_dim());
    st.params.beta = jitter(data.fail_dim());
    st.params.gamma = jitter(data.succ_dim());
    st.eta = Eigen::MatrixXd::Zero(data.n_units(), 3);
    for (int k = 0; k < 3; ++k) st.log_sd[k] = 0.2 * rng.normal();
    for (int k = 0; k < 3; ++k) st.corr_y[k] = 0.1 * rng.normal();
    return st;
}

PosteriorChains run_chains(const EventData& data, const CovariateBuilder& builder,
                           const PriorSpec& prior, const McmcConfig& mcmc,
                           const std::vector<ChainState>* inits) {
    mcmc.validate();
    PosteriorChains out;
    out.param_names = build_param_names(data, builder);
    out.unit_labels = data.unit_labels();
    out.seed = mcmc.seed;
    out.warmup = mcmc.warmup;
    out.thin = mcmc.thin;
    out.draws.resize(mcmc.chains);
    out.final_states.resize(mcmc.chains);
    out.chain_streams.resize(mcmc.chains);

    const Philox base(mcmc.seed, kChainStreamBase);
    std::vector<std::exception_ptr> errors(mcmc.chains);
    auto run_one = [&](int c) {
        try {
            Philox rng = base.derive(c);
            out.chain_streams[c] = kChainStreamBase ^ (0x9E3779B97F4A7C15ull * (c + 1));
            ChainState init;
            if (inits && !inits->empty()) {
                init = (*inits)[c % inits->size()];
            } else {
                Philox jrng = rng.derive(0x1A17);
                init = default_state(data, jrng);
            }
            Sampler sampler(data, prior, mcmc.gradient_proposals, std::move(init), std::move(rng));
            sampler.run(mcmc.warmup, mcmc.iters, mcmc.thin, out.draws[c]);
            out.final_states[c] = sampler.state();
        } catch (...) {
            errors[c] = std::current_exception();
        }
    };

    const unsigned hw = std::max(1u, std::thread::hardware_concurrency());
    const int workers = mcmc.threads > 0 ? mcmc.threads : static_cast<int>(hw);
    if (workers <= 1 || mcmc.chains == 1) {
        for (int c = 0; c < mcmc.chains; ++c) run_one(c);
    } else {
        std::vector<std::thread> pool;
        for (int c = 0; c < mcmc.chains; ++c) pool.emplace_back(run_one, c);
        for (auto& t : pool) t.join();
    }
    for (auto& e : errors)
        if (e) std::rethrow_exception(e);
    return out;
}

}  // namespace

void McmcConfig::validate() const {
    if (chains < 1) throw std::invalid_argument("mcmc: chains must be >= 1");
    if (warmup < 0 || iters < 1) throw std::invalid_argument("mcmc: bad warmup/iters");
    if (thin < 1 || iters % thin != 0)
        throw std::invalid_argument("mcmc: thin must divide iters");
}

int PosteriorChains::param_index(const std::string& name) const {
    for (std::size_t k = 0; k < param_names.size(); ++k)
        if (param_names[k] == name) return static_cast<int>(k);
    return -1;
}

Eigen::VectorXd PosteriorChains::stacked(int param) const {
    Eigen::VectorXd v(static_cast<long>(n_chains()) * n_draws());
    long off = 0;
    for (const auto& d : draws) {
        v.segment(off, d.rows()) = d.col(param);
        off += d.rows();
    }
    return v;
}

PosteriorChains run_mcmc(const std::vector<MatchLog>& logs, const LikelihoodConfig& cfg,
                         const PriorSpec& prior, const McmcConfig& mcmc) {
    const EventData data(logs, cfg);
    const CovariateBuilder builder(cfg.covariates, cfg.formation);
    return run_chains(data, builder, prior, mcmc, nullptr);
}

PosteriorChains update_posterior(const PosteriorChains& prev, const std::vector<MatchLog>& all_logs,
                                 const LikelihoodConfig& cfg, const PriorSpec& prior,
                                 const McmcConfig& mcmc) {
    if (prev.final_states.empty())
        throw std::invalid_argument("update_posterior: previous run has no chain states");
    const EventData data(all_logs, cfg);
    const CovariateBuilder builder(cfg.covariates, cfg.formation);

    std::vector<ChainState> inits(mcmc.chains);
    Philox spawn_rng(mcmc.seed, 0x5EEDull);
    for (int c = 0; c < mcmc.chains; ++c) {
        const ChainState& old = prev.final_states[c % prev.final_states.size()];
        if (old.params.omega.size() != data.rate_dim() ||
            old.params.alpha.size() != data.success_dim() ||
            old.params.beta.size() != data.fail_dim() ||
            old.params.gamma.size() != data.succ_dim())
            throw std::invalid_argument("update_posterior: incompatible covariate dimensions");
        ChainState st = old;
        st.eta = Eigen::MatrixXd::Zero(data.n_units(), 3);
        CovarianceSpec cov;
        cov.sd = old.log_sd.array().exp();
        cov.corr = CorrTransform::corr(old.corr_y);
        const Eigen::Matrix3d L = Eigen::LLT<Eigen::Matrix3d>(cov.sigma()).matrixL();
        Philox crng = spawn_rng.derive(c);
        for (int u = 0; u < data.n_units(); ++u) {
            const auto& label = data.unit_labels()[u];
            int old_row = -1;
            for (std::size_t k = 0; k < prev.unit_labels.size(); ++k)
                if (prev.unit_labels[k] == label) old_row = static_cast<int>(k);
            if (old_row >= 0) {
                st.eta.row(u) = old.eta.row(old_row);
            } else {
                const Eigen::Vector3d z{crng.normal(), crng.normal(), crng.normal()};
                st.eta.row(u) = (L * z).transpose();
            }
        }
        inits[c] = std::move(st);
    }
    return run_chains(data, builder, prior, mcmc, &inits);
}

DrawView decode_draw(const PosteriorChains& chains, int chain, int row,
                     const CovariateBuilder& builder) {
    if (chain < 0 || chain >= chains.n_chains() || row < 0 || row >= chains.n_draws())
        throw std::out_of_range("decode_draw: chain/row out of range");
    const Eigen::RowVectorXd v = chains.draws[chain].row(row);
    const int n = static_cast<int>(chains.unit_labels.size());
    const int p = builder.rate_dim(), d1 = builder.success_dim();
    const int d3 = builder.succ_dim();
    const int d2 = chains.n_params() - (p + d1 + d3 + 3 * n + 6);
    if (d2 < 0) throw std::invalid_argument("decode_draw: row layout mismatch");

    DrawView out;
    int off = 0;
    out.params.omega = v.segment(off, p).transpose(); off += p;
    out.params.alpha = v.segment(off, d1).transpose(); off += d1;
    out.params.beta = v.segment(off, d2).transpose(); off += d2;
    out.params.gamma = v.segment(off, d3).transpose(); off += d3;
    out.effects = RandomEffects::zero(chains.unit_labels);
    for (int u = 0; u < n; ++u)
        for (int k = 0; k < 3; ++k) out.effects.eta(u, k) = v[off++];
    for (int k = 0; k < 3; ++k) out.cov.sd[k] = v[off++];
    out.cov.corr = Eigen::Matrix3d::Identity();
    out.cov.corr(0, 1) = out.cov.corr(1, 0) = v[off++];
    out.cov.corr(0, 2) = out.cov.corr(2, 0) = v[off++];
    out.cov.corr(1, 2) = out.cov.corr(2, 1) = v[off++];
    return out;
}

// --- serialization -----------------------------------------------------------

void PosteriorChains::save(const std::filesystem::path& dir) const {
    std::filesystem::create_directories(dir);
    for (int c = 0; c < n_chains(); ++c) {
        std::ofstream out(dir / ("chain_" + std::to_string(c) + ".csv"));
        if (!out) throw std::runtime_error("cannot write chain file in " + dir.string());
        for (std::size_t k = 0; k < param_names.size(); ++k)
            out << (k ? "," : "") << param_names[k];
        out << "\n";
        for (int r = 0; r < draws[c].rows(); ++r) {
            for (int k = 0; k < draws[c].cols(); ++k) out << (k ? "," : "") << fmt(draws[c](r, k));
            out << "\n";
        }
    }

    json state;
    state["schema"] = "passnet-chains-1";
    state["seed"] = seed;
    state["warmup"] = warmup;
    state["thin"] = thin;
    state["chain_streams"] = chain_streams;
    state["unit_labels"] = unit_labels;
    state["param_names"] = param_names;
    json fs = json::array();
    auto vec = [](const Eigen::VectorXd& v) {
        std::vector<double> out(v.data(), v.data() + v.size());
        return out;
    };
    for (const auto& st : final_states) {
        json j;
        j["omega"] = vec(st.params.omega);
        j["alpha"] = vec(st.params.alpha);
        j["beta"] = vec(st.params.beta);
        j["gamma"] = vec(st.params.gamma);
        json eta = json::array();
        for (int u = 0; u < st.eta.rows(); ++u)
            eta.push_back(std::vector<double>{st.eta(u, 0), st.eta(u, 1), st.eta(u, 2)});
        j["eta"] = eta;
        j["log_sd"] = std::vector<double>{st.log_sd[0], st.log_sd[1], st.log_sd[2]};
        j["corr_y"] = std::vector<double>{st.corr_y[0], st.corr_y[1], st.corr_y[2]};
        json blocks = json::array();
        for (std::size_t b = 0; b < st.block_names.size(); ++b) {
            blocks.push_back({{"name", st.block_names[b]},
                              {"log_step", st.block_log_step[b]},
                              {"scale", vec(st.block_scale[b])}});
        }
        j["blocks"] = blocks;
        fs.push_back(std::move(j));
    }
    state["final_states"] = std::move(fs);
    std::ofstream out(dir / "state.json");
    if (!out) throw std::runtime_error("cannot write state.json in " + dir.string());
    out << state.dump(2) << "\n";
}

PosteriorChains PosteriorChains::load(const std::filesystem::path& dir) {
    std::ifstream in(dir / "state.json");
    if (!in) throw std::runtime_error("cannot open " + (dir / "state.json").string());
    json state = json::parse(in);
    if (state.value("schema", "") != "passnet-chains-1")
        throw std::runtime_error("unrecognized chain state schema in " + dir.string());

    PosteriorChains out;
    out.seed = state["seed"].get<std::uint64_t>();
    out.warmup = state["warmup"].get<int>();
    out.thin = state["thin"].get<int>();
    out.chain_streams = state["chain_streams"].get<std::vector<std::uint64_t>>();
    out.unit_labels = state["unit_labels"].get<std::vector<std::string>>();
    out.param_names = state["param_names"].get<std::vector<std::string>>();

    auto vec = [](const json& j) {
        const auto v = j.get<std::vector<double>>();
        return Eigen::Map<const Eigen::VectorXd>(v.data(), v.size()).eval();
    };
    for (const auto& j : state["final_states"]) {
        ChainState st;
        st.params.omega = vec(j["omega"]);
        st.params.alpha = vec(j["alpha"]);
        st.params.beta = vec(j["beta"]);
        st.params.gamma = vec(j["gamma"]);
        const auto& eta = j["eta"];
        st.eta.resize(eta.size(), 3);
        for (std::size_t u = 0; u < eta.size(); ++u)
            for (int k = 0; k < 3; ++k) st.eta(u, k) = eta[u][k].get<double>();
        for (int k = 0; k < 3; ++k) st.log_sd[k] = j["log_sd"][k].get<double>();
        for (int k = 0; k < 3; ++k) st.corr_y[k] = j["corr_y"][k].get<double>();
        for (const auto& b : j["blocks"]) {
            st.block_names.push_back(b["name"].get<std::string>());
            st.block_log_step.push_back(b["log_step"].get<double>());
            st.block_scale.push_back(vec(b["scale"]));
        }
        out.final_states.push_back(std::move(st));
    }

    for (std::size_t c = 0; c < out.chain_streams.size(); ++c) {
        std::ifstream cin(dir / ("chain_" + std::to_string(c) + ".csv"));
        if (!cin) throw std::runtime_error("missing chain file " + std::to_string(c) + " in " + dir.string());
        std::string line;
        std::getline(cin, line);  // header
        std::vector<std::vector<double>> rows;
        while (std::getline(cin, line)) {
            if (line.empty()) continue;
            std::vector<double> row;
            std::stringstream ss(line);
            std::string cell;
            while (std::getline(ss, cell, ',')) row.push_back(std::stod(cell));
            if (row.size() != out.param_names.size())
                throw std::runtime_error("chain row width mismatch in " + dir.string());
            rows.push_back(std::move(row));
        }
        Eigen::MatrixXd m(rows.size(), out.param_names.size());
        for (std::size_t r = 0; r < rows.size(); ++r)
            for (std::size_t k = 0; k < rows[r].size(); ++k) m(r, k) = rows[r][k];
        out.draws.push_back(std::move(m));
    }
    return out;
}

}  // namespace passnet
