// Command-line surface for the functional GP regression library: dataset
// simulation, MCMC fitting, prediction, evaluation, depth diagnostics and
// likelihood benchmarks. All tabular IO is CSV with header rows.

#include <algorithm>
#include <chrono>
#include <iostream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "fgpr/io.hpp"
#include "fgpr/kernels.hpp"
#include "fgpr/mcmc.hpp"
#include "fgpr/model.hpp"
#include "fgpr/predict.hpp"
#include "fgpr/simulate.hpp"

namespace {

using namespace fgpr;

std::vector<double> log_spaced(double lo, double hi, int count) {
  std::vector<double> g(static_cast<std::size_t>(count));
  const double llo = std::log10(lo), lhi = std::log10(hi);
  for (int i = 0; i < count; ++i)
    g[static_cast<std::size_t>(i)] = std::pow(10.0, llo + (lhi - llo) * i / (count - 1));
  return g;
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::string item;
  std::istringstream in(s);
  while (std::getline(in, item, ',')) {
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

struct SimulateArgs {
  std::string kind = "gp";
  std::string out;
  std::uint64_t seed = 0;
  int n = 30, T = 40, n_test = 200;
  double s2 = 2.0, tau2 = -1.0, rho1 = 20.0, rho2 = 0.2;
};

void run_simulate(const SimulateArgs& a) {
  const double tau2 = a.tau2 >= 0.0 ? a.tau2 : (a.kind == "gp" ? 0.05 : 0.2);
  const TimeGrid grid = TimeGrid::equispaced(a.T);
  std::seed_seq train_seq{a.seed, std::uint64_t{1}};
  std::seed_seq test_seq{a.seed, std::uint64_t{2}};
  std::mt19937_64 train_rng(train_seq), test_rng(test_seq);

  auto make = [&](int count, std::mt19937_64& rng) {
    CurveSet X = gen_brownian_covariates(count, grid, rng);
    FunctionalDataset data = a.kind == "gp"
                                 ? gen_gp_data(Theta{a.s2, tau2, a.rho1, a.rho2}, X, rng)
                                 : gen_regression_data(X, tau2, rng);
    data.seed = a.seed;
    data.params["kind"] = a.kind;
    data.params["tau2"] = format_double(tau2);
    if (a.kind == "gp") {
      data.params["s2"] = format_double(a.s2);
      data.params["rho1"] = format_double(a.rho1);
      data.params["rho2"] = format_double(a.rho2);
    }
    return data;
  };
  save_dataset(fs::path(a.out) / "train", make(a.n, train_rng));
  save_dataset(fs::path(a.out) / "test", make(a.n_test, test_rng));
  std::cout << "wrote " << a.out << "/train and " << a.out << "/test\n";
}

struct FitArgs {
  std::string train, out;
  std::string model = "full";
  int m = 30, q = 10;
  int chains = 4, iters = 5000, burnin = 1000;
  std::uint64_t seed = 0;
  double s2_shape = 2.0, s2_scale = 3.0, tau2_shape = 2.0, tau2_scale = 0.1;
  double rho1_lo = 0.0, rho1_hi = 0.0, rho2_lo = 0.0, rho2_hi = 0.0;  // 0 = heuristic
  bool serial = false;
};

void run_fit(const FitArgs& a) {
  const FunctionalDataset data = load_dataset(a.train);
  PriorSpec priors = default_priors(data.X, data.grid);
  priors.s2_shape = a.s2_shape;
  priors.s2_scale = a.s2_scale;
  priors.tau2_shape = a.tau2_shape;
  priors.tau2_scale = a.tau2_scale;
  if (a.rho1_lo > 0.0) priors.rho1_lo = a.rho1_lo;
  if (a.rho1_hi > 0.0) priors.rho1_hi = a.rho1_hi;
  if (a.rho2_lo > 0.0) priors.rho2_lo = a.rho2_lo;
  if (a.rho2_hi > 0.0) priors.rho2_hi = a.rho2_hi;

  CovarianceSpec spec;
  spec.kind = cov_kind_from_name(a.model);
  if (spec.kind != CovKind::Full) {
    std::seed_seq kseq{a.seed, std::uint64_t{0x6b6e6f74}};  // knot stream
    std::mt19937_64 krng(kseq);
    spec.knots = select_knots(data.X, a.m, data.grid, a.q, krng);
  }

  McmcConfig cfg;
  cfg.chains = a.chains;
  cfg.iters = a.iters;
  cfg.burnin = a.burnin;
  cfg.seed = a.seed;
  cfg.parallel = !a.serial;
  const PosteriorSamples samples = run_chains(data, spec, priors, cfg);
  write_fit(a.out, samples, spec, data.grid);

  const auto summary = posterior_summary(samples);
  std::ostringstream head, row;
  for (int k = 0; k < 4; ++k) {
    head << (k ? "," : "") << kThetaNames[static_cast<std::size_t>(k)] << "_mean,"
         << kThetaNames[static_cast<std::size_t>(k)] << "_lower,"
         << kThetaNames[static_cast<std::size_t>(k)] << "_upper";
    const auto& s = summary[static_cast<std::size_t>(k)];
    row << (k ? "," : "") << format_double(s.mean) << "," << format_double(s.lower) << ","
        << format_double(s.upper);
  }
  atomic_write_file(fs::path(a.out) / "summary.csv", head.str() + "\n" + row.str() + "\n");

  const auto rhat = split_rhat(samples);
  std::cout << "model=" << a.model;
  for (int k = 0; k < 4; ++k) {
    const auto& s = summary[static_cast<std::size_t>(k)];
    std::cout << "  " << kThetaNames[static_cast<std::size_t>(k)] << "=" << s.mean << " ("
              << s.lower << "," << s.upper << ") rhat=" << rhat[static_cast<std::size_t>(k)];
  }
  std::cout << "\n";
}

struct PredictArgs {
  std::string train, test, fit, out;
  std::string method = "full";
  std::uint64_t seed = 0;
  int draws_per_theta = 1, thin = 1, threads = 0;
  bool predict_w = false;
  double bandwidth = 0.0;
  double lambda = 0.0;
  bool oracle_bandwidth = false;
};

void run_predict(const PredictArgs& a) {
  const FunctionalDataset train = load_dataset(a.train);
  const FunctionalDataset test = load_dataset(a.test);

  PredictionResult result;
  if (a.method == "frkhs" || a.method == "kernel") {
    const auto [rho1_hat, rho2_hat] = heuristic_bandwidths(train.X, train.grid);
    Matrix pred;
    if (a.method == "frkhs") {
      double lambda = a.lambda;
      if (lambda <= 0.0) {
        const CvResult cv = frkhs_cv(train, log_spaced(1e-6, 1e2, 41), rho1_hat, rho2_hat);
        lambda = cv.best_lambda;
        std::cout << "frkhs: cv lambda=" << lambda << " cv error=" << cv.cv_error << "\n";
      }
      pred = frkhs_predict(train, test.X, lambda, rho1_hat, rho2_hat);
    } else {
      double h = a.bandwidth;
      if (a.oracle_bandwidth || h <= 0.0) {
        const Matrix& truth = test.W_true ? test.W_true->values : test.Y.values;
        std::vector<double> grid;
        for (double f : log_spaced(1e-2, 1e1, 40)) grid.push_back(rho1_hat * f);
        const auto [best_h, err] = select_oracle_bandwidth(train, test.X, truth, grid);
        h = best_h;
        std::cout << "kernel: oracle bandwidth=" << h << " error=" << err << "\n";
      }
      const auto res = kernel_baseline(train, test.X, h);
      if (res.zero_weight_fallbacks > 0)
        std::cerr << "kernel: " << res.zero_weight_fallbacks
                  << " test curves fell back to the mean response\n";
      pred = res.pred;
    }
    // Point estimators carry no predictive distribution; emit degenerate
    // intervals so the file schema stays uniform.
    result.mean = pred;
    result.var = Matrix::Zero(pred.rows(), pred.cols());
    result.lower = pred;
    result.upper = pred;
  } else {
    if (a.fit.empty()) throw InvalidParameterError("predict: --fit is required for " + a.method);
    const FitFiles fit = read_fit(a.fit, train.grid);
    PredictMethod method;
    CovKind needed;
    if (a.method == "full") {
      method = PredictMethod::Full;
      needed = CovKind::Full;
    } else if (a.method == "pp") {
      method = PredictMethod::Pp;
      needed = CovKind::PredProc;
    } else if (a.method == "pp_mod1") {
      method = PredictMethod::PpMod1;
      needed = CovKind::PredProc;
    } else if (a.method == "pp_mod2") {
      method = PredictMethod::PpMod2;
      needed = CovKind::PredProcDiag;
    } else {
      throw InvalidParameterError("predict: unknown method " + a.method);
    }
    if (fit.model != needed)
      throw InvalidParameterError("predict: method " + a.method + " requires traces fit with model=" +
                                  cov_kind_name(needed) + ", found model=" + cov_kind_name(fit.model));
    PredictOptions opt;
    opt.predict_w = a.predict_w;
    opt.draws_per_theta = a.draws_per_theta;
    opt.thin = a.thin;
    opt.seed = a.seed;
    opt.threads = a.threads;
    result = bayes_predict(fit.samples, train, method, fit.knots, test.X, opt);
  }
  write_prediction_csv(a.out, test.grid, result);
  std::cout << "wrote " << a.out << "\n";
}

struct EvaluateArgs {
  std::string pred, test, out, label = "pred";
  std::string mse_vs = "auto";       // w if available, else y
  std::string coverage_vs = "y";
  std::string depth_out, train;
};

void run_evaluate(const EvaluateArgs& a) {
  const FunctionalDataset test = load_dataset(a.test);
  const PredictionResult pred = read_prediction_csv(a.pred, test.T());

  const Matrix* mse_truth = nullptr;
  if (a.mse_vs == "w" || (a.mse_vs == "auto" && test.W_true)) {
    if (!test.W_true) throw DataError("evaluate: --mse-vs w requires W.csv in the test set");
    mse_truth = &test.W_true->values;
  } else {
    mse_truth = &test.Y.values;
  }
  const Matrix& cov_truth = a.coverage_vs == "w"
                                ? (test.W_true ? test.W_true->values : test.Y.values)
                                : test.Y.values;

  const double err = mse(pred.mean, *mse_truth);
  const CoverageResult cov = coverage_and_length(pred, cov_truth);
  std::ostringstream out;
  out << "label,mse,coverage,mean_length\n"
      << a.label << "," << format_double(err) << "," << format_double(cov.coverage) << ","
      << format_double(cov.mean_length) << "\n";
  atomic_write_file(a.out, out.str());
  std::cout << "mse=" << err << " coverage=" << cov.coverage << " mean_length=" << cov.mean_length
            << "\n";

  if (!a.depth_out.empty()) {
    if (a.train.empty()) throw InvalidParameterError("evaluate: --depth-out requires --train");
    const FunctionalDataset train = load_dataset(a.train);
    const Vector per_curve = per_curve_coverage(pred, cov_truth);
    const DepthCoverage dc = depth_coverage_table(test.X, train.X, per_curve);
    std::ostringstream dout;
    dout << "test_id,depth,coverage\n";
    for (std::size_t i = 0; i < dc.pairs.size(); ++i)
      dout << i << "," << format_double(dc.pairs[i].first) << ","
           << format_double(dc.pairs[i].second) << "\n";
    atomic_write_file(a.depth_out, dout.str());
    std::cout << "depth-coverage pearson=" << dc.pearson << (dc.degenerate ? " (degenerate)" : "")
              << "\n";
  }
}

struct DepthArgs {
  std::string train, test, out;
};

void run_depth(const DepthArgs& a) {
  const FunctionalDataset train = load_dataset(a.train);
  const FunctionalDataset test = load_dataset(a.test);
  std::ostringstream out;
  out << "test_id,depth\n";
  for (int i = 0; i < test.n(); ++i)
    out << i << "," << format_double(band_depth(test.X.curve(i), train.X)) << "\n";
  atomic_write_file(a.out, out.str());
  std::cout << "wrote " << a.out << "\n";
}

struct BenchArgs {
  std::string out;
  int n = 30, T = 40, m = 30, q = 10, reps = 5;
  std::uint64_t seed = 0;
};

void run_bench(const BenchArgs& a) {
  std::seed_seq sseq{a.seed, std::uint64_t{3}};
  std::mt19937_64 rng(sseq);
  const TimeGrid grid = TimeGrid::equispaced(a.T);
  const Theta theta{2.0, 0.05, 20.0, 0.2};
  const CurveSet X = gen_brownian_covariates(a.n, grid, rng);
  const FunctionalDataset data = gen_gp_data(theta, X, rng);

  const int m = std::min(a.m, a.n), q = std::min(a.q, a.T);
  std::mt19937_64 krng(rng());
  CovarianceSpec pp_spec;
  pp_spec.kind = CovKind::PredProc;
  pp_spec.knots = select_knots(data.X, m, data.grid, q, krng);
  CovarianceSpec full_spec;

  auto time_of = [&](auto&& fn) {
    fn();  // warm up
    const auto begin = std::chrono::steady_clock::now();
    for (int r = 0; r < a.reps; ++r) fn();
    const auto end = std::chrono::steady_clock::now();
    return std::chrono::duration<double>(end - begin).count() / a.reps;
  };

  volatile double sink = 0.0;
  const double t_dense = time_of([&] { sink = log_marginal_likelihood_full_dense(theta, data); });
  const double t_kron = time_of([&] { sink = log_marginal_likelihood(theta, data, full_spec); });
  const double t_pp = time_of([&] { sink = log_marginal_likelihood(theta, data, pp_spec); });
  (void)sink;

  std::ostringstream out;
  out << "path,mean_seconds,speedup_vs_dense\n";
  out << "full_dense," << format_double(t_dense) << "," << format_double(1.0) << "\n";
  out << "full_kron," << format_double(t_kron) << "," << format_double(t_dense / t_kron) << "\n";
  out << "pp," << format_double(t_pp) << "," << format_double(t_dense / t_pp) << "\n";
  if (!a.out.empty()) atomic_write_file(a.out, out.str());
  std::cout << out.str();
}

struct WeatherArgs {
  std::string temp, precip, out;
  std::string holdout;
  double log_offset = 0.05;
};

void run_weather(const WeatherArgs& a) {
  const WeatherTable table = load_weather(a.temp, a.precip);
  const FunctionalDataset all = weekly_subsample(table, a.log_offset);
  const auto holdout_names = split_list(a.holdout);

  std::vector<int> test_idx, train_idx;
  for (int i = 0; i < static_cast<int>(table.stations.size()); ++i) {
    const bool held = std::find(holdout_names.begin(), holdout_names.end(), table.stations[static_cast<std::size_t>(i)]) !=
                      holdout_names.end();
    (held ? test_idx : train_idx).push_back(i);
  }
  if (test_idx.size() != holdout_names.size())
    throw DataError("weather: some holdout stations were not found in the header");

  auto subset = [&](const std::vector<int>& idx) {
    FunctionalDataset d(all.X.rows(idx), all.Y.rows(idx));
    d.params["log_offset"] = format_double(a.log_offset);
    std::string names;
    for (int i : idx) names += (names.empty() ? "" : ";") + table.stations[static_cast<std::size_t>(i)];
    d.params["stations"] = names;
    return d;
  };
  save_dataset(fs::path(a.out) / "train", subset(train_idx));
  if (!test_idx.empty()) save_dataset(fs::path(a.out) / "test", subset(test_idx));
  std::cout << "wrote " << a.out << "/train (" << train_idx.size() << " stations)"
            << (test_idx.empty() ? "" : " and test (" + std::to_string(test_idx.size()) + ")")
            << "\n";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Bayesian Gaussian-process regression for functional responses"};
  app.require_subcommand(1);

  SimulateArgs sim;
  auto* csim = app.add_subcommand("simulate", "Generate simulation datasets");
  csim->add_option("--kind", sim.kind)->check(CLI::IsMember({"gp", "freg"}));
  csim->add_option("--out", sim.out)->required();
  csim->add_option("--seed", sim.seed);
  csim->add_option("--n", sim.n);
  csim->add_option("--T", sim.T);
  csim->add_option("--n-test", sim.n_test);
  csim->add_option("--s2", sim.s2);
  csim->add_option("--tau2", sim.tau2);
  csim->add_option("--rho1", sim.rho1);
  csim->add_option("--rho2", sim.rho2);
  csim->set_config("--config");

  FitArgs fit;
  auto* cfit = app.add_subcommand("fit", "Run MCMC over the hyperparameters");
  cfit->add_option("--train", fit.train)->required();
  cfit->add_option("--out", fit.out)->required();
  cfit->add_option("--model", fit.model)->check(CLI::IsMember({"full", "pp", "ppdiag"}));
  cfit->add_option("--m", fit.m);
  cfit->add_option("--q", fit.q);
  cfit->add_option("--chains", fit.chains);
  cfit->add_option("--iters", fit.iters);
  cfit->add_option("--burnin", fit.burnin);
  cfit->add_option("--seed", fit.seed);
  cfit->add_option("--s2-prior-shape", fit.s2_shape);
  cfit->add_option("--s2-prior-scale", fit.s2_scale);
  cfit->add_option("--tau2-prior-shape", fit.tau2_shape);
  cfit->add_option("--tau2-prior-scale", fit.tau2_scale);
  cfit->add_option("--rho1-lo", fit.rho1_lo);
  cfit->add_option("--rho1-hi", fit.rho1_hi);
  cfit->add_option("--rho2-lo", fit.rho2_lo);
  cfit->add_option("--rho2-hi", fit.rho2_hi);
  cfit->add_flag("--serial", fit.serial, "Run chains sequentially");
  cfit->set_config("--config");

  PredictArgs pre;
  auto* cpre = app.add_subcommand("predict", "Predict test responses");
  cpre->add_option("--train", pre.train)->required();
  cpre->add_option("--test", pre.test)->required();
  cpre->add_option("--fit", pre.fit);
  cpre->add_option("--out", pre.out)->required();
  cpre->add_option("--method", pre.method)
      ->check(CLI::IsMember({"full", "pp", "pp_mod1", "pp_mod2", "frkhs", "kernel"}));
  cpre->add_option("--seed", pre.seed);
  cpre->add_option("--draws-per-theta", pre.draws_per_theta);
  cpre->add_option("--thin", pre.thin);
  cpre->add_option("--threads", pre.threads);
  cpre->add_flag("--predict-w", pre.predict_w, "Predict the latent W instead of y");
  cpre->add_option("--bandwidth", pre.bandwidth, "Kernel baseline bandwidth");
  cpre->add_flag("--oracle-bandwidth", pre.oracle_bandwidth,
                 "Pick the kernel bandwidth by test-error grid search");
  cpre->add_option("--lambda", pre.lambda, "fRKHS smoothing parameter (0 = cross-validate)");
  cpre->set_config("--config");

  EvaluateArgs ev;
  auto* cev = app.add_subcommand("evaluate", "Compute MSE, coverage and interval length");
  cev->add_option("--pred", ev.pred)->required();
  cev->add_option("--test", ev.test)->required();
  cev->add_option("--out", ev.out)->required();
  cev->add_option("--label", ev.label);
  cev->add_option("--mse-vs", ev.mse_vs)->check(CLI::IsMember({"auto", "w", "y"}));
  cev->add_option("--coverage-vs", ev.coverage_vs)->check(CLI::IsMember({"y", "w"}));
  cev->add_option("--depth-out", ev.depth_out);
  cev->add_option("--train", ev.train);
  cev->set_config("--config");

  DepthArgs dep;
  auto* cdep = app.add_subcommand("depth", "Band depth of test curves w.r.t. training curves");
  cdep->add_option("--train", dep.train)->required();
  cdep->add_option("--test", dep.test)->required();
  cdep->add_option("--out", dep.out)->required();
  cdep->set_config("--config");

  BenchArgs ben;
  auto* cben = app.add_subcommand("bench", "Time the likelihood paths");
  cben->add_option("--out", ben.out);
  cben->add_option("--n", ben.n);
  cben->add_option("--T", ben.T);
  cben->add_option("--m", ben.m);
  cben->add_option("--q", ben.q);
  cben->add_option("--reps", ben.reps);
  cben->add_option("--seed", ben.seed);
  cben->set_config("--config");

  WeatherArgs wea;
  auto* cwea = app.add_subcommand("weather", "Ingest Canadian-weather-style CSVs");
  cwea->add_option("--temp", wea.temp)->required();
  cwea->add_option("--precip", wea.precip)->required();
  cwea->add_option("--out", wea.out)->required();
  cwea->add_option("--holdout", wea.holdout, "Comma-separated station names for the test split");
  cwea->add_option("--log-offset", wea.log_offset);
  cwea->set_config("--config");

  try {
    app.parse(argc, argv);
    if (*csim) run_simulate(sim);
    if (*cfit) run_fit(fit);
    if (*cpre) run_predict(pre);
    if (*cev) run_evaluate(ev);
    if (*cdep) run_depth(dep);
    if (*cben) run_bench(ben);
    if (*cwea) run_weather(wea);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  } catch (const NumericalError& e) {
    std::cerr << "numerical error: " << e.what() << "\n";
    return 3;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return 2;
  } catch (const DimensionError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return 2;
  } catch (const InvalidParameterError& e) {
    std::cerr << "configuration error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
