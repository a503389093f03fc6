#pragma once

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "fgpr/data.hpp"
#include "fgpr/errors.hpp"
#include "fgpr/mcmc.hpp"
#include "fgpr/model.hpp"
#include "fgpr/predict.hpp"

namespace fgpr {

namespace fs = std::filesystem;

// 17 significant digits; doubles round-trip exactly.
inline std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

// Writes via a temp file in the same directory followed by a rename.
inline void atomic_write_file(const fs::path& path, const std::string& content) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot open for writing: " + tmp.string());
    out << content;
    if (!out.good()) throw DataError("write failed: " + tmp.string());
  }
  fs::rename(tmp, path);
}

inline void write_matrix_csv(const fs::path& path, const std::vector<std::string>& header,
                             const Matrix& values) {
  if (header.size() != static_cast<std::size_t>(values.cols()))
    throw DimensionError("write_matrix_csv: header width mismatch");
  std::ostringstream out;
  for (std::size_t j = 0; j < header.size(); ++j) out << (j ? "," : "") << header[j];
  out << "\n";
  for (Eigen::Index i = 0; i < values.rows(); ++i) {
    for (Eigen::Index j = 0; j < values.cols(); ++j)
      out << (j ? "," : "") << format_double(values(i, j));
    out << "\n";
  }
  atomic_write_file(path, out.str());
}

struct CsvTable {
  std::vector<std::string> header;
  Matrix values;
};

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> cells;
  std::string cell;
  std::istringstream in(line);
  while (std::getline(in, cell, ',')) cells.push_back(cell);
  if (!line.empty() && line.back() == ',') cells.emplace_back();
  return cells;
}

inline CsvTable read_matrix_csv(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open: " + path.string());
  std::string line;
  if (!std::getline(in, line)) throw DataError("empty file: " + path.string());
  if (!line.empty() && line.back() == '\r') line.pop_back();
  CsvTable table;
  table.header = split_csv_line(line);
  std::vector<std::vector<double>> rows;
  long lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto cells = split_csv_line(line);
    if (cells.size() != table.header.size())
      throw DataError(path.string() + ": row " + std::to_string(lineno) + " has " +
                      std::to_string(cells.size()) + " cells, expected " +
                      std::to_string(table.header.size()));
    std::vector<double> row(cells.size());
    for (std::size_t j = 0; j < cells.size(); ++j) {
      try {
        std::size_t pos = 0;
        row[j] = std::stod(cells[j], &pos);
        if (pos != cells[j].size()) throw std::invalid_argument("trailing junk");
      } catch (const std::exception&) {
        throw DataError(path.string() + ": non-numeric cell at row " + std::to_string(lineno) +
                        ", column " + std::to_string(j + 1) + " ('" + cells[j] + "')");
      }
    }
    rows.push_back(std::move(row));
  }
  table.values.resize(static_cast<Eigen::Index>(rows.size()),
                      static_cast<Eigen::Index>(table.header.size()));
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (std::size_t j = 0; j < rows[i].size(); ++j)
      table.values(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = rows[i][j];
  return table;
}

inline std::vector<std::string> value_header(int T) {
  std::vector<std::string> h(static_cast<std::size_t>(T));
  for (int j = 0; j < T; ++j) h[static_cast<std::size_t>(j)] = "v" + std::to_string(j);
  return h;
}

// Key-value metadata, one `key=value` per line.
inline void write_meta(const fs::path& path, const std::map<std::string, std::string>& meta) {
  std::ostringstream out;
  for (const auto& [k, v] : meta) out << k << "=" << v << "\n";
  atomic_write_file(path, out.str());
}

inline std::map<std::string, std::string> read_meta(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open: " + path.string());
  std::map<std::string, std::string> meta;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw DataError(path.string() + ": expected key=value, got '" + line + "'");
    meta[line.substr(0, eq)] = line.substr(eq + 1);
  }
  return meta;
}

// Dataset directory: grid.csv, X.csv, Y.csv, optional W.csv, meta.txt.
inline void save_dataset(const fs::path& dir, const FunctionalDataset& data) {
  fs::create_directories(dir);
  write_matrix_csv(dir / "grid.csv", {"t"}, data.grid.points());
  write_matrix_csv(dir / "X.csv", value_header(data.T()), data.X.values);
  write_matrix_csv(dir / "Y.csv", value_header(data.T()), data.Y.values);
  if (data.W_true) write_matrix_csv(dir / "W.csv", value_header(data.T()), data.W_true->values);
  std::map<std::string, std::string> meta = data.params;
  meta["seed"] = std::to_string(data.seed);
  write_meta(dir / "meta.txt", meta);
}

inline FunctionalDataset load_dataset(const fs::path& dir) {
  const auto grid_tab = read_matrix_csv(dir / "grid.csv");
  if (grid_tab.values.cols() != 1) throw DataError("grid.csv must have a single column");
  TimeGrid grid(grid_tab.values.col(0));
  const auto x_tab = read_matrix_csv(dir / "X.csv");
  const auto y_tab = read_matrix_csv(dir / "Y.csv");
  CurveSet X(x_tab.values, grid);
  CurveSet Y(y_tab.values, grid);
  std::optional<CurveSet> W;
  if (fs::exists(dir / "W.csv")) W = CurveSet(read_matrix_csv(dir / "W.csv").values, grid);
  FunctionalDataset out(std::move(X), std::move(Y), std::move(W));
  if (fs::exists(dir / "meta.txt")) {
    auto meta = read_meta(dir / "meta.txt");
    if (auto it = meta.find("seed"); it != meta.end()) {
      out.seed = std::stoull(it->second);
      meta.erase(it);
    }
    out.params = std::move(meta);
  }
  return out;
}

// --- MCMC trace files -------------------------------------------------------

inline const char* cov_kind_name(CovKind kind) {
  switch (kind) {
    case CovKind::Full: return "full";
    case CovKind::PredProc: return "pp";
    default: return "ppdiag";
  }
}

inline CovKind cov_kind_from_name(const std::string& name) {
  if (name == "full") return CovKind::Full;
  if (name == "pp") return CovKind::PredProc;
  if (name == "ppdiag") return CovKind::PredProcDiag;
  throw InvalidParameterError("unknown covariance model: " + name);
}

// One CSV per chain plus fit_meta.txt; predictive-process fits also persist
// their knots so prediction reuses the exact same ones.
inline void write_fit(const fs::path& dir, const PosteriorSamples& samples,
                      const CovarianceSpec& spec, const TimeGrid& grid) {
  fs::create_directories(dir);
  const std::vector<std::string> cols = {"iter",     "s2",       "tau2",    "rho1",
                                         "rho2",     "log_post", "acc_s2",  "acc_tau2",
                                         "acc_rho1", "acc_rho2"};
  for (int c = 0; c < samples.chains(); ++c) {
    const auto& trace = samples.trace[static_cast<std::size_t>(c)];
    Matrix rows(static_cast<Eigen::Index>(trace.size()), 10);
    for (std::size_t i = 0; i < trace.size(); ++i) {
      const auto& tr = trace[i];
      const auto r = static_cast<Eigen::Index>(i);
      rows(r, 0) = static_cast<double>(tr.iter);
      rows(r, 1) = tr.theta.s2;
      rows(r, 2) = tr.theta.tau2;
      rows(r, 3) = tr.theta.rho1;
      rows(r, 4) = tr.theta.rho2;
      rows(r, 5) = tr.log_post;
      for (int k = 0; k < 4; ++k) rows(r, 6 + k) = tr.accepted[static_cast<std::size_t>(k)] ? 1.0 : 0.0;
    }
    write_matrix_csv(dir / ("chain_" + std::to_string(c) + ".csv"), cols, rows);
  }
  std::map<std::string, std::string> meta;
  meta["model"] = cov_kind_name(spec.kind);
  meta["chains"] = std::to_string(samples.chains());
  meta["iters"] = std::to_string(samples.iters);
  meta["burnin"] = std::to_string(samples.burnin);
  meta["seed"] = std::to_string(samples.seed);
  if (spec.knots) {
    meta["m"] = std::to_string(spec.knots->m());
    meta["q"] = std::to_string(spec.knots->q());
    write_matrix_csv(dir / "knots_x.csv", value_header(spec.knots->covariate_knots.T()),
                     spec.knots->covariate_knots.values);
    write_matrix_csv(dir / "knots_t.csv", {"t"}, spec.knots->time_knots);
  }
  write_meta(dir / "fit_meta.txt", meta);
}

struct FitFiles {
  PosteriorSamples samples;
  CovKind model = CovKind::Full;
  std::optional<KnotSet> knots;
};

inline FitFiles read_fit(const fs::path& dir, const TimeGrid& grid) {
  const auto meta = read_meta(dir / "fit_meta.txt");
  FitFiles out;
  out.model = cov_kind_from_name(meta.at("model"));
  const int chains = std::stoi(meta.at("chains"));
  out.samples.iters = std::stoi(meta.at("iters"));
  out.samples.burnin = std::stoi(meta.at("burnin"));
  out.samples.seed = std::stoull(meta.at("seed"));
  for (int c = 0; c < chains; ++c) {
    const auto tab = read_matrix_csv(dir / ("chain_" + std::to_string(c) + ".csv"));
    if (tab.header.size() != 10) throw DataError("trace file must have 10 columns");
    std::vector<Theta> draws;
    std::vector<TraceRow> trace;
    std::array<double, 4> acc{};
    long retained = 0;
    for (Eigen::Index i = 0; i < tab.values.rows(); ++i) {
      TraceRow tr;
      tr.iter = static_cast<long>(tab.values(i, 0));
      tr.theta = Theta{tab.values(i, 1), tab.values(i, 2), tab.values(i, 3), tab.values(i, 4)};
      tr.log_post = tab.values(i, 5);
      for (int k = 0; k < 4; ++k) tr.accepted[static_cast<std::size_t>(k)] = tab.values(i, 6 + k) != 0.0;
      trace.push_back(tr);
      if (tr.iter > out.samples.burnin) {
        draws.push_back(tr.theta);
        for (int k = 0; k < 4; ++k) acc[static_cast<std::size_t>(k)] += tr.accepted[static_cast<std::size_t>(k)] ? 1.0 : 0.0;
        ++retained;
      }
    }
    if (retained > 0)
      for (auto& a : acc) a /= static_cast<double>(retained);
    out.samples.draws.push_back(std::move(draws));
    out.samples.trace.push_back(std::move(trace));
    out.samples.acceptance_rates.push_back(acc);
    out.samples.numerical_rejects.push_back(0);
  }
  if (meta.count("m")) {
    CurveSet kx(read_matrix_csv(dir / "knots_x.csv").values, grid);
    const auto kt = read_matrix_csv(dir / "knots_t.csv");
    out.knots.emplace(std::move(kx), Vector(kt.values.col(0)));
  }
  return out;
}

// --- prediction files -------------------------------------------------------

inline void write_prediction_csv(const fs::path& path, const TimeGrid& grid,
                                 const PredictionResult& result) {
  std::ostringstream out;
  out << "test_id,t,mean,var,lower,upper\n";
  for (Eigen::Index r = 0; r < result.mean.rows(); ++r)
    for (Eigen::Index j = 0; j < result.mean.cols(); ++j)
      out << r << "," << format_double(grid[static_cast<int>(j)]) << ","
          << format_double(result.mean(r, j)) << "," << format_double(result.var(r, j)) << ","
          << format_double(result.lower(r, j)) << "," << format_double(result.upper(r, j))
          << "\n";
  atomic_write_file(path, out.str());
}

inline PredictionResult read_prediction_csv(const fs::path& path, int T) {
  const auto tab = read_matrix_csv(path);
  if (tab.header.size() != 6) throw DataError(path.string() + ": expected 6 columns");
  if (T < 1 || tab.values.rows() % T != 0)
    throw DataError(path.string() + ": row count not a multiple of the grid length");
  const Eigen::Index ntest = tab.values.rows() / T;
  PredictionResult res;
  res.mean.resize(ntest, T);
  res.var.resize(ntest, T);
  res.lower.resize(ntest, T);
  res.upper.resize(ntest, T);
  for (Eigen::Index r = 0; r < ntest; ++r)
    for (Eigen::Index j = 0; j < T; ++j) {
      const Eigen::Index row = r * T + j;
      if (static_cast<Eigen::Index>(tab.values(row, 0)) != r)
        throw DataError(path.string() + ": unexpected test_id ordering");
      res.mean(r, j) = tab.values(row, 2);
      res.var(r, j) = tab.values(row, 3);
      res.lower(r, j) = tab.values(row, 4);
      res.upper(r, j) = tab.values(row, 5);
    }
  return res;
}

// --- Canadian-weather-style ingestion ----------------------------------------

struct WeatherTable {
  std::vector<std::string> stations;
  Matrix temperature;    // 365 x n_stations
  Matrix precipitation;  // 365 x n_stations, nonnegative
};

inline WeatherTable load_weather(const fs::path& temp_csv, const fs::path& precip_csv) {
  const auto temp = read_matrix_csv(temp_csv);
  const auto precip = read_matrix_csv(precip_csv);
  if (temp.values.rows() != 365)
    throw DataError(temp_csv.string() + ": expected 365 daily rows, got " +
                    std::to_string(temp.values.rows()));
  if (precip.values.rows() != 365)
    throw DataError(precip_csv.string() + ": expected 365 daily rows, got " +
                    std::to_string(precip.values.rows()));
  if (temp.header != precip.header)
    throw DataError("temperature and precipitation station headers differ");
  for (Eigen::Index i = 0; i < precip.values.rows(); ++i)
    for (Eigen::Index j = 0; j < precip.values.cols(); ++j)
      if (precip.values(i, j) < 0.0)
        throw DataError(precip_csv.string() + ": negative precipitation at row " +
                        std::to_string(i + 2) + ", column " + std::to_string(j + 1));
  return WeatherTable{temp.header, temp.values, precip.values};
}

// Every 7th day (days 1, 8, ..., 365 -> 53 points), time normalized to [0,1];
// X = temperature, Y = log(precipitation + log_offset).
inline FunctionalDataset weekly_subsample(const WeatherTable& table, double log_offset = 0.05) {
  if (!(log_offset > 0.0))
    throw InvalidParameterError("weekly_subsample: log offset must be positive");
  const int n = static_cast<int>(table.stations.size());
  const int T = 53;
  Vector grid_pts(T);
  Matrix X(n, T), Y(n, T);
  for (int k = 0; k < T; ++k) {
    const int day = 1 + 7 * k;
    grid_pts[k] = static_cast<double>(day - 1) / 364.0;
    for (int i = 0; i < n; ++i) {
      X(i, k) = table.temperature(day - 1, i);
      Y(i, k) = std::log(table.precipitation(day - 1, i) + log_offset);
    }
  }
  TimeGrid grid(grid_pts);
  return FunctionalDataset(CurveSet(std::move(X), grid), CurveSet(std::move(Y), grid));
}

}  // namespace fgpr
