#include <catch_amalgamated.hpp>

#include <filesystem>
#include <fstream>

#include "fgpr/io.hpp"
#include "fgpr/simulate.hpp"
#include "test_helpers.hpp"

using namespace fgpr;

namespace {

struct TempDir {
  fs::path path;
  TempDir() {
    path = fs::temp_directory_path() /
           ("fgpr_test_" + std::to_string(std::random_device{}()));
    fs::create_directories(path);
  }
  ~TempDir() {
    std::error_code ec;
    fs::remove_all(path, ec);
  }
};

FunctionalDataset sample_dataset(std::uint64_t seed) {
  auto g = test_helpers::rng(seed);
  const TimeGrid grid = TimeGrid::equispaced(7);
  const CurveSet X = gen_brownian_covariates(4, grid, g);
  FunctionalDataset d = gen_gp_data(Theta{1.4, 0.1, 3.0, 0.3}, X, g);
  d.seed = seed;
  d.params["kind"] = "gp";
  return d;
}

void write_weather_csv(const fs::path& p, int n_stations, int rows, double base,
                       const std::string& bad_cell = "", int bad_row = -1, int bad_col = -1) {
  std::ofstream out(p);
  for (int j = 0; j < n_stations; ++j) out << (j ? "," : "") << "st" << j;
  out << "\n";
  for (int i = 0; i < rows; ++i) {
    for (int j = 0; j < n_stations; ++j) {
      out << (j ? "," : "");
      if (i == bad_row && j == bad_col)
        out << bad_cell;
      else
        out << base + 0.01 * i + j;
    }
    out << "\n";
  }
}

}  // namespace

TEST_CASE("format_double round-trips", "[io]") {
  for (double v : {0.1, 1.0 / 3.0, 2.5e-300, -7.125, 3.141592653589793}) {
    CHECK(std::stod(format_double(v)) == v);
  }
}

TEST_CASE("dataset round-trip is bit identical", "[io]") {
  TempDir tmp;
  const FunctionalDataset d = sample_dataset(401);
  save_dataset(tmp.path / "ds", d);
  const FunctionalDataset back = load_dataset(tmp.path / "ds");
  CHECK((back.X.values - d.X.values).cwiseAbs().maxCoeff() == 0.0);
  CHECK((back.Y.values - d.Y.values).cwiseAbs().maxCoeff() == 0.0);
  REQUIRE(back.W_true.has_value());
  CHECK((back.W_true->values - d.W_true->values).cwiseAbs().maxCoeff() == 0.0);
  CHECK((back.grid.points() - d.grid.points()).cwiseAbs().maxCoeff() == 0.0);
  CHECK(back.seed == 401);
  CHECK(back.params.at("kind") == "gp");
}

TEST_CASE("csv reader reports malformed cells with locations", "[io]") {
  TempDir tmp;
  const fs::path p = tmp.path / "bad.csv";
  {
    std::ofstream out(p);
    out << "a,b\n1.0,2.0\n3.0,oops\n";
  }
  try {
    read_matrix_csv(p);
    FAIL("expected DataError");
  } catch (const DataError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("row 3") != std::string::npos);
    CHECK(msg.find("column 2") != std::string::npos);
  }

  const fs::path ragged = tmp.path / "ragged.csv";
  {
    std::ofstream out(ragged);
    out << "a,b\n1.0,2.0\n3.0\n";
  }
  CHECK_THROWS_AS(read_matrix_csv(ragged), DataError);
}

TEST_CASE("fit files round-trip retained draws", "[io]") {
  TempDir tmp;
  const FunctionalDataset d = sample_dataset(409);
  const PriorSpec priors = default_priors(d.X, d.grid);
  McmcConfig cfg;
  cfg.chains = 2;
  cfg.iters = 30;
  cfg.burnin = 10;
  cfg.seed = 5;
  std::mt19937_64 kg(9);
  CovarianceSpec spec{CovKind::PredProc, select_knots(d.X, 2, d.grid, 3, kg)};
  const PosteriorSamples samples = run_chains(d, spec, priors, cfg);
  write_fit(tmp.path / "fit", samples, spec, d.grid);

  const FitFiles back = read_fit(tmp.path / "fit", d.grid);
  CHECK(back.model == CovKind::PredProc);
  REQUIRE(back.knots.has_value());
  CHECK(back.knots->m() == 2);
  CHECK(back.knots->q() == 3);
  CHECK((back.knots->covariate_knots.values - spec.knots->covariate_knots.values)
            .cwiseAbs()
            .maxCoeff() == 0.0);
  REQUIRE(back.samples.draws.size() == 2);
  for (int c = 0; c < 2; ++c) {
    REQUIRE(back.samples.draws[c].size() == samples.draws[c].size());
    for (std::size_t i = 0; i < samples.draws[c].size(); ++i) {
      CHECK(back.samples.draws[c][i].s2 == samples.draws[c][i].s2);
      CHECK(back.samples.draws[c][i].rho2 == samples.draws[c][i].rho2);
    }
  }
}

TEST_CASE("prediction csv round-trip and metric recomputation", "[io]") {
  TempDir tmp;
  const FunctionalDataset d = sample_dataset(419);
  PosteriorSamples samples;
  samples.draws = {{Theta{1.4, 0.1, 3.0, 0.3}, Theta{1.1, 0.2, 2.0, 0.25}}};
  samples.acceptance_rates = {{}};
  samples.trace = {{}};
  samples.numerical_rejects = {0};
  auto g = test_helpers::rng(421);
  const CurveSet X_test = gen_brownian_covariates(3, d.grid, g);
  PredictOptions opt;
  opt.draws_per_theta = 40;
  opt.seed = 3;
  const PredictionResult res =
      bayes_predict(samples, d, PredictMethod::Full, std::nullopt, X_test, opt);

  write_prediction_csv(tmp.path / "pred.csv", d.grid, res);
  const PredictionResult back = read_prediction_csv(tmp.path / "pred.csv", d.T());
  CHECK((back.mean - res.mean).cwiseAbs().maxCoeff() == 0.0);
  CHECK((back.lower - res.lower).cwiseAbs().maxCoeff() == 0.0);
  CHECK((back.upper - res.upper).cwiseAbs().maxCoeff() == 0.0);

  // metrics recomputed from the file agree to 1e-12 (exact here)
  const Matrix truth = Matrix::Random(3, d.T());
  const auto direct = coverage_and_length(res, truth);
  const auto refiled = coverage_and_length(back, truth);
  CHECK(std::abs(direct.coverage - refiled.coverage) <= 1e-12);
  CHECK(std::abs(direct.mean_length - refiled.mean_length) <= 1e-12);
  CHECK(std::abs(mse(res.mean, truth) - mse(back.mean, truth)) <= 1e-12);
}

TEST_CASE("weather ingestion validates and subsamples", "[io]") {
  TempDir tmp;
  const fs::path temp_csv = tmp.path / "temp.csv";
  const fs::path precip_csv = tmp.path / "precip.csv";
  write_weather_csv(temp_csv, 3, 365, -5.0);
  write_weather_csv(precip_csv, 3, 365, 1.0);

  const WeatherTable table = load_weather(temp_csv, precip_csv);
  REQUIRE(table.stations.size() == 3);
  const FunctionalDataset d = weekly_subsample(table, 0.05);
  CHECK(d.T() == 53);
  CHECK(d.n() == 3);
  CHECK(d.grid.min() == 0.0);
  CHECK(d.grid.max() == 1.0);
  CHECK_THAT(d.grid[1], Catch::Matchers::WithinAbs(7.0 / 364.0, 1e-15));
  // day 8 is row index 7
  CHECK(d.X.values(1, 1) == table.temperature(7, 1));
  CHECK_THAT(d.Y.values(2, 0), Catch::Matchers::WithinAbs(
                                   std::log(table.precipitation(0, 2) + 0.05), 1e-15));

  // zero precipitation maps to log(offset)
  write_weather_csv(precip_csv, 3, 365, 0.0);
  {
    std::ofstream out(precip_csv, std::ios::app);
  }
  const WeatherTable zt = load_weather(temp_csv, precip_csv);
  const FunctionalDataset zd = weekly_subsample(zt, 0.05);
  CHECK_THAT(zd.Y.values(0, 0), Catch::Matchers::WithinAbs(std::log(0.05), 1e-12));

  // 364 rows rejected
  write_weather_csv(temp_csv, 3, 364, -5.0);
  CHECK_THROWS_AS(load_weather(temp_csv, precip_csv), DataError);
  write_weather_csv(temp_csv, 3, 365, -5.0);

  // negative precipitation rejected with a located message
  write_weather_csv(precip_csv, 3, 365, 1.0, "-3.0", 10, 1);
  try {
    load_weather(temp_csv, precip_csv);
    FAIL("expected DataError");
  } catch (const DataError& e) {
    CHECK(std::string(e.what()).find("negative precipitation") != std::string::npos);
  }

  // non-numeric cells rejected
  write_weather_csv(precip_csv, 3, 365, 1.0, "wet", 4, 2);
  CHECK_THROWS_AS(load_weather(temp_csv, precip_csv), DataError);
}

TEST_CASE("meta files round-trip", "[io]") {
  TempDir tmp;
  std::map<std::string, std::string> meta{{"alpha", "1"}, {"beta", "x=y"}};
  write_meta(tmp.path / "meta.txt", meta);
  const auto back = read_meta(tmp.path / "meta.txt");
  CHECK(back.at("alpha") == "1");
  CHECK(back.at("beta") == "x=y");
}
