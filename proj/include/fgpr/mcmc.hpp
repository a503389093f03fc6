#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <functional>
#include <limits>
#include <random>
#include <string>
#include <thread>
#include <vector>

#include "fgpr/model.hpp"

namespace fgpr {

inline constexpr std::array<const char*, 4> kThetaNames = {"s2", "tau2", "rho1", "rho2"};

inline double theta_component(const Theta& t, int k) {
  switch (k) {
    case 0: return t.s2;
    case 1: return t.tau2;
    case 2: return t.rho1;
    default: return t.rho2;
  }
}

inline void set_theta_component(Theta& t, int k, double v) {
  switch (k) {
    case 0: t.s2 = v; break;
    case 1: t.tau2 = v; break;
    case 2: t.rho1 = v; break;
    default: t.rho2 = v; break;
  }
}

// Per-parameter standard deviations of the log-scale normal proposals.
struct ProposalScales {
  std::array<double, 4> sd{0.25, 0.25, 0.25, 0.25};
};

struct ChainState {
  Theta theta;
  double log_post = 0.0;  // cached log prior + log marginal likelihood
  long step = 0;
};

struct McmcConfig {
  int chains = 4;
  int iters = 5000;
  int burnin = 1000;
  std::uint64_t seed = 0;
  ProposalScales initial_scales{};
  int adapt_interval = 50;
  bool prior_only = false;  // replaces the likelihood by a constant
  bool parallel = true;
};

struct TraceRow {
  long iter = 0;
  Theta theta{};
  double log_post = 0.0;
  std::array<bool, 4> accepted{};
};

struct PosteriorSamples {
  std::vector<std::vector<Theta>> draws;               // per chain, post burn-in
  std::vector<std::array<double, 4>> acceptance_rates; // per chain, per parameter
  std::vector<std::vector<TraceRow>> trace;            // per chain, every iteration
  std::vector<long> numerical_rejects;                 // per chain
  int iters = 0;
  int burnin = 0;
  std::uint64_t seed = 0;

  int chains() const { return static_cast<int>(draws.size()); }

  std::vector<Theta> pooled() const {
    std::vector<Theta> all;
    for (const auto& c : draws) all.insert(all.end(), c.begin(), c.end());
    return all;
  }
};

namespace detail {

using LogTargetFn = std::function<double(const Theta&)>;

// One componentwise random-walk sweep on the log scale. The acceptance ratio
// carries the change-of-variables term log theta' - log theta.
inline std::array<bool, 4> rw_sweep(ChainState& state, const LogTargetFn& log_target,
                                    const ProposalScales& scales, std::mt19937_64& rng,
                                    long* numerical_rejects) {
  std::array<bool, 4> accepted{};
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  for (int k = 0; k < 4; ++k) {
    const double cur = theta_component(state.theta, k);
    const double log_prop = std::log(cur) + scales.sd[static_cast<std::size_t>(k)] * gauss(rng);
    const double prop = std::exp(log_prop);
    Theta cand = state.theta;
    set_theta_component(cand, k, prop);
    double cand_post;
    try {
      cand_post = log_target(cand);
    } catch (const NumericalError&) {
      if (numerical_rejects) ++*numerical_rejects;
      unif(rng);  // keep the stream aligned with the accept/reject draw
      continue;
    }
    const double log_alpha = cand_post - state.log_post + (log_prop - std::log(cur));
    if (std::log(unif(rng)) < log_alpha) {
      state.theta = cand;
      state.log_post = cand_post;
      accepted[static_cast<std::size_t>(k)] = true;
    }
  }
  ++state.step;
  return accepted;
}

inline LogTargetFn make_log_target(const FunctionalDataset& data, const CovarianceSpec& spec,
                                   const PriorSpec& priors, bool prior_only) {
  return [&data, &spec, &priors, prior_only](const Theta& theta) {
    const double lp = log_prior(theta, priors);
    if (!std::isfinite(lp) || prior_only) return lp;
    return lp + log_marginal_likelihood(theta, data, spec);
  };
}

}  // namespace detail

// Single componentwise Metropolis sweep against the configured model;
// state.log_post must already hold the posterior at state.theta.
inline std::pair<ChainState, std::array<bool, 4>> rw_metropolis_step(
    const ChainState& state, const FunctionalDataset& data, const CovarianceSpec& spec,
    const PriorSpec& priors, const ProposalScales& scales, std::mt19937_64& rng) {
  ChainState next = state;
  const auto target = detail::make_log_target(data, spec, priors, false);
  auto accepted = detail::rw_sweep(next, target, scales, rng, nullptr);
  return {next, accepted};
}

// Burn-in adaptation: nudge each scale by a factor exp(+-0.1) when the
// windowed acceptance rate leaves [0.15, 0.45].
inline ProposalScales adapt_proposals(const std::array<double, 4>& window_rates,
                                      const ProposalScales& scales) {
  ProposalScales next = scales;
  for (std::size_t k = 0; k < 4; ++k) {
    if (window_rates[k] > 0.45)
      next.sd[k] *= std::exp(0.1);
    else if (window_rates[k] < 0.15)
      next.sd[k] *= std::exp(-0.1);
  }
  return next;
}

namespace detail {

struct SingleChainResult {
  std::vector<Theta> draws;
  std::array<double, 4> acceptance{};
  std::vector<TraceRow> trace;
  long numerical_rejects = 0;
  bool failed = false;
  std::string error;
};

inline SingleChainResult run_single_chain(const LogTargetFn& target, const PriorSpec& priors,
                                          const McmcConfig& cfg, int chain_index) {
  SingleChainResult out;
  std::seed_seq sseq{static_cast<std::uint64_t>(cfg.seed), static_cast<std::uint64_t>(chain_index)};
  std::mt19937_64 rng(sseq);

  ChainState state;
  bool started = false;
  for (int attempt = 0; attempt < 100 && !started; ++attempt) {
    state.theta = sample_prior(priors, rng);
    try {
      state.log_post = target(state.theta);
      started = std::isfinite(state.log_post);
    } catch (const NumericalError&) {
      started = false;
    }
  }
  if (!started) {
    out.failed = true;
    out.error = "chain " + std::to_string(chain_index) + ": no valid starting point in 100 prior draws";
    return out;
  }

  ProposalScales scales = cfg.initial_scales;
  std::array<long, 4> window{}, kept{};
  long window_len = 0;
  out.trace.reserve(static_cast<std::size_t>(cfg.iters));
  out.draws.reserve(static_cast<std::size_t>(std::max(0, cfg.iters - cfg.burnin)));

  for (int iter = 1; iter <= cfg.iters; ++iter) {
    const auto accepted = rw_sweep(state, target, scales, rng, &out.numerical_rejects);
    out.trace.push_back(TraceRow{iter, state.theta, state.log_post, accepted});
    if (iter <= cfg.burnin) {
      ++window_len;
      for (std::size_t k = 0; k < 4; ++k) window[k] += accepted[k];
      if (iter % cfg.adapt_interval == 0 && window_len > 0) {
        std::array<double, 4> rates{};
        for (std::size_t k = 0; k < 4; ++k) rates[k] = static_cast<double>(window[k]) / window_len;
        scales = adapt_proposals(rates, scales);
        window = {};
        window_len = 0;
      }
    } else {
      out.draws.push_back(state.theta);
      for (std::size_t k = 0; k < 4; ++k) kept[k] += accepted[k];
    }
  }
  const long retained = std::max(1L, static_cast<long>(out.draws.size()));
  for (std::size_t k = 0; k < 4; ++k)
    out.acceptance[k] = static_cast<double>(kept[k]) / static_cast<double>(retained);
  return out;
}

}  // namespace detail

// Independent chains with derived seeds and prior-drawn overdispersed starts.
inline PosteriorSamples run_chains(const FunctionalDataset& data, const CovarianceSpec& spec,
                                   const PriorSpec& priors, const McmcConfig& cfg) {
  if (cfg.chains < 1 || cfg.iters < 1 || cfg.burnin < 0 || cfg.burnin >= cfg.iters)
    throw InvalidParameterError("run_chains: need chains >= 1 and 0 <= burnin < iters");
  spec.validate();
  priors.validate();
  const auto target = detail::make_log_target(data, spec, priors, cfg.prior_only);

  std::vector<detail::SingleChainResult> results(static_cast<std::size_t>(cfg.chains));
  if (cfg.parallel && cfg.chains > 1) {
    std::vector<std::thread> workers;
    workers.reserve(static_cast<std::size_t>(cfg.chains));
    for (int c = 0; c < cfg.chains; ++c)
      workers.emplace_back([&, c] { results[static_cast<std::size_t>(c)] = detail::run_single_chain(target, priors, cfg, c); });
    for (auto& w : workers) w.join();
  } else {
    for (int c = 0; c < cfg.chains; ++c)
      results[static_cast<std::size_t>(c)] = detail::run_single_chain(target, priors, cfg, c);
  }

  std::string failures;
  for (const auto& r : results)
    if (r.failed) failures += (failures.empty() ? "" : "; ") + r.error;
  if (!failures.empty()) throw NumericalError("run_chains: " + failures);

  PosteriorSamples out;
  out.iters = cfg.iters;
  out.burnin = cfg.burnin;
  out.seed = cfg.seed;
  for (auto& r : results) {
    out.draws.push_back(std::move(r.draws));
    out.acceptance_rates.push_back(r.acceptance);
    out.trace.push_back(std::move(r.trace));
    out.numerical_rejects.push_back(r.numerical_rejects);
  }
  return out;
}

struct ParamSummary {
  double mean = 0.0;
  double lower = 0.0;
  double upper = 0.0;
};

// Linear-interpolation quantile of a copy of the values.
inline double quantile(std::vector<double> v, double p) {
  if (v.empty()) throw InsufficientDataError("quantile: no values");
  std::sort(v.begin(), v.end());
  if (v.size() == 1) return v[0];
  const double h = p * static_cast<double>(v.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const std::size_t hi = std::min(lo + 1, v.size() - 1);
  const double frac = h - static_cast<double>(lo);
  return v[lo] + frac * (v[hi] - v[lo]);
}

// Pooled-across-chains means and equal-tailed credible intervals.
inline std::array<ParamSummary, 4> posterior_summary(const PosteriorSamples& samples,
                                                     double level = 0.95) {
  const auto pooled = samples.pooled();
  if (pooled.size() < 2) throw InsufficientDataError("posterior_summary: need at least two draws");
  const double tail = 0.5 * (1.0 - level);
  std::array<ParamSummary, 4> out{};
  for (int k = 0; k < 4; ++k) {
    std::vector<double> v(pooled.size());
    for (std::size_t i = 0; i < pooled.size(); ++i) v[i] = theta_component(pooled[i], k);
    ParamSummary s;
    s.mean = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
    s.lower = quantile(v, tail);
    s.upper = quantile(v, 1.0 - tail);
    out[static_cast<std::size_t>(k)] = s;
  }
  return out;
}

// Split-chain potential scale reduction factor; infinity when the within
// variance vanishes.
inline std::array<double, 4> split_rhat(const PosteriorSamples& samples) {
  if (samples.chains() < 2) throw InsufficientDataError("split_rhat: need at least two chains");
  for (const auto& c : samples.draws)
    if (c.size() < 4) throw InsufficientDataError("split_rhat: need at least four draws per chain");
  const std::size_t half = samples.draws.front().size() / 2;

  std::array<double, 4> out{};
  for (int k = 0; k < 4; ++k) {
    std::vector<double> means, vars;
    for (const auto& chain : samples.draws) {
      const std::size_t len = chain.size() / 2;
      for (int part = 0; part < 2; ++part) {
        double mean = 0.0;
        for (std::size_t i = 0; i < len; ++i)
          mean += theta_component(chain[static_cast<std::size_t>(part) * len + i], k);
        mean /= static_cast<double>(len);
        double var = 0.0;
        for (std::size_t i = 0; i < len; ++i) {
          const double d = theta_component(chain[static_cast<std::size_t>(part) * len + i], k) - mean;
          var += d * d;
        }
        var /= static_cast<double>(len - 1);
        means.push_back(mean);
        vars.push_back(var);
      }
    }
    const double N = static_cast<double>(half);
    const double M = static_cast<double>(means.size());
    const double W = std::accumulate(vars.begin(), vars.end(), 0.0) / M;
    double grand = std::accumulate(means.begin(), means.end(), 0.0) / M;
    double B = 0.0;
    for (double m : means) B += (m - grand) * (m - grand);
    B *= N / (M - 1.0);
    if (W <= 0.0) {
      out[static_cast<std::size_t>(k)] = B > 0.0 ? std::numeric_limits<double>::infinity() : 1.0;
      continue;
    }
    const double var_plus = (N - 1.0) / N * W + B / N;
    out[static_cast<std::size_t>(k)] = std::sqrt(var_plus / W);
  }
  return out;
}

}  // namespace fgpr
