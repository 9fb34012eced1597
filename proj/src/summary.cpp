#include "passnet/summary.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <stdexcept>

#include <json.hpp>

namespace passnet {

namespace {

double mean_of(const Eigen::VectorXd& v) { return v.mean(); }

double variance_of(const Eigen::VectorXd& v) {
    if (v.size() < 2) return 0.0;
    const double m = v.mean();
    return (v.array() - m).square().sum() / (v.size() - 1);
}

// Chain-averaged autocovariance at a given lag.
double autocovariance(const Eigen::VectorXd& v, int lag) {
    const long n = v.size();
    const double m = v.mean();
    double acc = 0.0;
    for (long t = 0; t + lag < n; ++t) acc += (v[t] - m) * (v[t + lag] - m);
    return acc / n;
}

}  // namespace

double quantile(std::vector<double> values, double p) {
    if (values.empty()) throw std::invalid_argument("quantile: empty sample");
    if (!(p >= 0.0 && p <= 1.0)) throw std::invalid_argument("quantile: p out of [0,1]");
    std::sort(values.begin(), values.end());
    const double h = (values.size() - 1) * p;
    const std::size_t lo = static_cast<std::size_t>(std::floor(h));
    if (lo + 1 >= values.size()) return values.back();
    return values[lo] + (h - lo) * (values[lo + 1] - values[lo]);
}

double effective_sample_size(const std::vector<Eigen::VectorXd>& chains) {
    if (chains.empty() || chains.front().size() < 4) return 0.0;
    const long n = chains.front().size();
    const long total = static_cast<long>(chains.size()) * n;

    double c0 = 0.0;
    for (const auto& c : chains) c0 += autocovariance(c, 0);
    c0 /= chains.size();
    if (!(c0 > 0.0)) return static_cast<double>(total);  // constant chains

    // Sum consecutive autocorrelation pairs while they stay positive.
    double rho_sum = 0.0;
    for (int lag = 1; lag + 1 < n; lag += 2) {
        double c1 = 0.0, c2 = 0.0;
        for (const auto& c : chains) {
            c1 += autocovariance(c, lag);
            c2 += autocovariance(c, lag + 1);
        }
        const double pair = (c1 + c2) / (chains.size() * c0);
        if (pair <= 0.0) break;
        rho_sum += pair;
    }
    const double ess = total / (1.0 + 2.0 * rho_sum);
    return std::min(ess, static_cast<double>(total));
}

double split_rhat(const std::vector<Eigen::VectorXd>& chains, bool* degenerate) {
    if (degenerate) *degenerate = false;
    if (chains.empty() || chains.front().size() < 4) return 1.0;

    std::vector<Eigen::VectorXd> halves;
    for (const auto& c : chains) {
        const long h = c.size() / 2;
        halves.push_back(c.head(h));
        halves.push_back(c.tail(h));
    }
    const long m = static_cast<long>(halves.size());
    const long n = halves.front().size();

    double grand = 0.0;
    for (const auto& h : halves) grand += h.mean();
    grand /= m;

    double b = 0.0, w = 0.0;
    for (const auto& h : halves) {
        const double mu = h.mean();
        b += (mu - grand) * (mu - grand);
        w += variance_of(h);
    }
    b *= static_cast<double>(n) / (m - 1);
    w /= m;
    if (!(w > 0.0)) {
        if (degenerate) *degenerate = true;
        return 1.0;
    }
    const double var_plus = (n - 1.0) / n * w + b / n;
    return std::sqrt(var_plus / w);
}

const ParamSummary& PosteriorSummary::at(const std::string& name) const {
    for (const auto& p : params)
        if (p.name == name) return p;
    throw std::out_of_range("summary: no parameter named " + name);
}

PosteriorSummary summarize(const PosteriorChains& chains) {
    if (chains.n_chains() == 0 || chains.n_draws() == 0)
        throw std::invalid_argument("summarize: empty chains");
    PosteriorSummary s;
    s.n_chains = chains.n_chains();
    s.n_draws = chains.n_draws();
    for (int k = 0; k < chains.n_params(); ++k) {
        ParamSummary ps;
        ps.name = chains.param_names[k];
        std::vector<Eigen::VectorXd> per_chain;
        for (const auto& d : chains.draws) per_chain.push_back(d.col(k));
        const Eigen::VectorXd all = chains.stacked(k);
        std::vector<double> values(all.data(), all.data() + all.size());
        ps.mean = mean_of(all);
        ps.sd = std::sqrt(variance_of(all));
        ps.median = quantile(values, 0.5);
        ps.q025 = quantile(values, 0.025);
        ps.q975 = quantile(values, 0.975);
        ps.rhat = split_rhat(per_chain, &ps.degenerate);
        ps.ess = effective_sample_size(per_chain);
        s.params.push_back(std::move(ps));
    }
    return s;
}

void write_summary(const PosteriorSummary& summary, const std::string& path) {
    nlohmann::ordered_json j;
    j["schema"] = "passnet-summary-1";
    j["n_chains"] = summary.n_chains;
    j["n_draws"] = summary.n_draws;
    nlohmann::ordered_json params = nlohmann::ordered_json::array();
    for (const auto& p : summary.params) {
        params.push_back({{"name", p.name},
                          {"mean", p.mean},
                          {"median", p.median},
                          {"sd", p.sd},
                          {"q2.5", p.q025},
                          {"q97.5", p.q975},
                          {"ess", p.ess},
                          {"rhat", p.rhat},
                          {"degenerate", p.degenerate}});
    }
    j["params"] = std::move(params);
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write summary to " + path);
    out << j.dump(2) << "\n";
}

}  // namespace passnet
