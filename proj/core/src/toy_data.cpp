#include "sde_elbo/toy_data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "sde_elbo/io.hpp"
#include "sde_elbo/rng.hpp"

namespace sde_elbo {

namespace {

void standardize(Dataset& ds) {
  const Eigen::Index n = ds.points.cols();
  ds.standardize_mean = Vec::Zero(ds.points.rows());
  ds.standardize_std = Vec::Ones(ds.points.rows());
  if (n < 2) return;
  ds.standardize_mean = ds.points.rowwise().mean();
  Mat centered = ds.points.colwise() - ds.standardize_mean;
  // population std, so the standardized moments are exact
  ds.standardize_std =
      (centered.array().square().rowwise().sum() / static_cast<double>(n))
          .sqrt()
          .matrix();
  for (Eigen::Index i = 0; i < ds.points.rows(); ++i) {
    if (ds.standardize_std[i] <= 0.0)
      throw std::runtime_error("standardize: degenerate coordinate");
    ds.points.row(i) = centered.row(i) / ds.standardize_std[i];
  }
  ds.standardized = true;
}

void compute_standardization_only(Dataset& ds) {
  const Eigen::Index n = ds.points.cols();
  ds.standardize_mean = Vec::Zero(ds.points.rows());
  ds.standardize_std = Vec::Ones(ds.points.rows());
  if (n < 2) return;
  ds.standardize_mean = ds.points.rowwise().mean();
  Mat centered = ds.points.colwise() - ds.standardize_mean;
  ds.standardize_std =
      (centered.array().square().rowwise().sum() / static_cast<double>(n))
          .sqrt()
          .matrix();
}

}  // namespace

Mat Dataset::train_points() const {
  const Eigen::Index n = points.cols();
  const Eigen::Index held = n / 10;
  return points.leftCols(n - held);
}

Mat Dataset::heldout_points() const {
  const Eigen::Index n = points.cols();
  const Eigen::Index held = n / 10;
  return points.rightCols(held);
}

Dataset swiss_roll(std::size_t n, double noise_std, std::uint64_t seed) {
  Dataset ds;
  ds.name = "swiss_roll";
  ds.seed = seed;
  ds.points.resize(2, static_cast<Eigen::Index>(n));
  Rng rng(mix_seed(seed, 0x70f5));
  for (std::size_t i = 0; i < n; ++i) {
    const double u = rng.uniform();
    const double t = 1.5 * M_PI * (1.0 + 2.0 * u);
    const double scale = 4.5 * M_PI;
    ds.points(0, i) = t * std::cos(t) / scale + noise_std * rng.gauss();
    ds.points(1, i) = t * std::sin(t) / scale + noise_std * rng.gauss();
  }
  if (n >= 2) standardize(ds);
  return ds;
}

Dataset gaussian_mixture(const std::vector<Vec>& centers,
                         const std::vector<double>& weights, double cov_scale,
                         std::size_t n, std::uint64_t seed) {
  if (centers.empty()) throw std::invalid_argument("gaussian_mixture: no centers");
  if (weights.size() != centers.size())
    throw std::invalid_argument("gaussian_mixture: weights/centers mismatch");
  double wsum = 0.0;
  for (double w : weights) {
    if (w < 0.0) throw std::invalid_argument("gaussian_mixture: negative weight");
    wsum += w;
  }
  if (std::abs(wsum - 1.0) > 1e-9)
    throw std::invalid_argument("gaussian_mixture: weights must sum to 1");
  if (!(cov_scale > 0.0))
    throw std::invalid_argument("gaussian_mixture: cov_scale > 0");
  const int d = static_cast<int>(centers.front().size());
  for (const auto& c : centers)
    if (c.size() != d) throw std::invalid_argument("gaussian_mixture: center dims");

  Dataset ds;
  ds.name = "gaussian_mixture";
  ds.seed = seed;
  ds.points.resize(d, static_cast<Eigen::Index>(n));
  Rng rng(mix_seed(seed, 0x96f1));
  const double sd = std::sqrt(cov_scale);
  for (std::size_t i = 0; i < n; ++i) {
    const double u = rng.uniform();
    std::size_t k = 0;
    double acc = 0.0;
    for (; k + 1 < weights.size(); ++k) {
      acc += weights[k];
      if (u < acc) break;
    }
    for (int j = 0; j < d; ++j)
      ds.points(j, i) = centers[k][j] + sd * rng.gauss();
  }
  compute_standardization_only(ds);
  return ds;
}

void save_dataset_csv(const Dataset& ds, const std::string& path) {
  std::ostringstream mean_s, std_s;
  for (Eigen::Index i = 0; i < ds.standardize_mean.size(); ++i) {
    mean_s << (i ? " " : "") << format_double(ds.standardize_mean[i]);
    std_s << (i ? " " : "") << format_double(ds.standardize_std[i]);
  }
  std::vector<std::string> header;
  for (int j = 0; j < ds.dim(); ++j) header.push_back("x" + std::to_string(j));
  std::vector<std::vector<std::string>> rows;
  rows.reserve(ds.size());
  for (std::size_t i = 0; i < ds.size(); ++i) {
    std::vector<std::string> row;
    for (int j = 0; j < ds.dim(); ++j)
      row.push_back(format_double(ds.points(j, static_cast<Eigen::Index>(i))));
    rows.push_back(std::move(row));
  }
  write_csv(path, header, rows,
            {"name = " + ds.name, "seed = " + std::to_string(ds.seed),
             "n = " + std::to_string(ds.size()),
             "standardized = " + std::string(ds.standardized ? "1" : "0"),
             "standardize_mean = " + mean_s.str(),
             "standardize_std = " + std_s.str()});
}

Dataset load_dataset_csv(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("load_dataset_csv: cannot open " + path);
  Dataset ds;
  std::string line;
  std::vector<std::vector<double>> rows;
  bool header_seen = false;
  int dim = 0;
  std::size_t declared_n = 0;
  while (std::getline(f, line)) {
    if (line.empty()) continue;
    if (line.rfind("# ", 0) == 0) {
      const auto eq = line.find(" = ");
      if (eq == std::string::npos) continue;
      const std::string key = line.substr(2, eq - 2);
      const std::string val = line.substr(eq + 3);
      if (key == "name") ds.name = val;
      else if (key == "seed") ds.seed = std::stoull(val);
      else if (key == "n") declared_n = std::stoull(val);
      else if (key == "standardized") ds.standardized = val == "1";
      else if (key == "standardize_mean" || key == "standardize_std") {
        std::istringstream is(val);
        std::vector<double> vals;
        double x;
        while (is >> x) vals.push_back(x);
        Vec v = Eigen::Map<Vec>(vals.data(), static_cast<Eigen::Index>(vals.size()));
        if (key == "standardize_mean") ds.standardize_mean = v;
        else ds.standardize_std = v;
      }
      continue;
    }
    if (!header_seen) {
      header_seen = true;
      dim = 1 + static_cast<int>(std::count(line.begin(), line.end(), ','));
      continue;
    }
    std::vector<double> row;
    std::istringstream is(line);
    std::string cell;
    while (std::getline(is, cell, ',')) row.push_back(std::stod(cell));
    if (static_cast<int>(row.size()) != dim)
      throw std::runtime_error("load_dataset_csv: ragged row");
    rows.push_back(std::move(row));
  }
  if (declared_n != 0 && declared_n != rows.size())
    throw std::runtime_error("load_dataset_csv: row count mismatch with header");
  ds.points.resize(dim, static_cast<Eigen::Index>(rows.size()));
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (int j = 0; j < dim; ++j) ds.points(j, static_cast<Eigen::Index>(i)) = rows[i][j];
  if (ds.standardize_mean.size() == 0) ds.standardize_mean = Vec::Zero(dim);
  if (ds.standardize_std.size() == 0) ds.standardize_std = Vec::Ones(dim);
  return ds;
}

}  // namespace sde_elbo
