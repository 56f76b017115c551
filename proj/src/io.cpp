#include "robmix/io.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <string_view>

namespace robmix::io {
namespace {

std::vector<std::string_view> split(std::string_view line, char sep) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  for (;;) {
    const auto pos = line.find(sep, start);
    out.push_back(line.substr(start, pos == std::string_view::npos ? pos : pos - start));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

double parse_number(std::string_view field, long line) {
  field = trim(field);
  if (!field.empty() && field.front() == '+') field.remove_prefix(1);
  double v = 0;
  const auto [ptr, ec] = std::from_chars(field.data(), field.data() + field.size(), v);
  if (ec != std::errc() || ptr != field.data() + field.size())
    throw ParseError("cannot parse number '" + std::string(field) + "'", line);
  if (!std::isfinite(v)) throw ParseError("non-finite value '" + std::string(field) + "'", line);
  return v;
}

Json vector_json(const Eigen::VectorXd& v) {
  Json a = Json::array();
  for (double x : v) a.push_back(x);
  return a;
}

}  // namespace

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string dataset_to_csv(const Dataset& data) {
  std::string out = "y";
  for (Index c = 1; c <= data.covariates(); ++c) out += ",x" + std::to_string(c);
  out += '\n';
  for (Index i = 0; i < data.size(); ++i) {
    out += format_double(data.y(i));
    for (Index c = 1; c < data.dims(); ++c) {
      out += ',';
      out += format_double(data.x(i, c));
    }
    out += '\n';
  }
  return out;
}

Dataset dataset_from_csv(const std::string& text) {
  std::istringstream in(text);
  std::string raw;
  long line = 0;
  if (!std::getline(in, raw)) throw ParseError("empty file, expected header y,x1,...", 1);
  ++line;
  const auto header = split(trim(raw), ',');
  if (trim(header[0]) != "y") throw ParseError("header must start with 'y'", line);
  const auto p = static_cast<Index>(header.size()) - 1;
  for (Index c = 1; c <= p; ++c)
    if (trim(header[static_cast<std::size_t>(c)]) != "x" + std::to_string(c))
      throw ParseError("expected column 'x" + std::to_string(c) + "' in header", line);

  std::vector<double> values;
  Index rows = 0;
  while (std::getline(in, raw)) {
    ++line;
    const auto content = trim(raw);
    if (content.empty()) continue;
    const auto fields = split(content, ',');
    if (static_cast<Index>(fields.size()) != p + 1)
      throw ParseError("expected " + std::to_string(p + 1) + " fields, found " +
                           std::to_string(fields.size()),
                       line);
    for (auto f : fields) values.push_back(parse_number(f, line));
    ++rows;
  }
  if (rows == 0) throw ParseError("no data rows", line);

  Eigen::VectorXd y(rows);
  Eigen::MatrixXd cov(rows, p);
  for (Index i = 0; i < rows; ++i) {
    const double* row = values.data() + i * (p + 1);
    y(i) = row[0];
    for (Index c = 0; c < p; ++c) cov(i, c) = row[c + 1];
  }
  return Dataset::from_covariates(std::move(y), cov);
}

std::string read_text(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open '" + path.string() + "' for reading");
  std::ostringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

Dataset read_dataset(const std::filesystem::path& path) { return dataset_from_csv(read_text(path)); }

void write_text(const std::filesystem::path& path, const std::string& content) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw IoError("cannot open '" + path.string() + "' for writing");
  f << content;
  if (!f) throw IoError("failed writing '" + path.string() + "'");
}

Json model_to_json(const MixtureModel& model) {
  Json comps = Json::array();
  for (const auto& c : model.components)
    comps.push_back({{"pi", c.pi}, {"beta", vector_json(c.beta)}, {"sigma2", c.sigma2}});
  return comps;
}

Json spec_to_json(const ScenarioSpec& spec) {
  return {{"model", static_cast<int>(spec.model)},
          {"scenario", static_cast<int>(spec.scenario)},
          {"n", spec.n},
          {"priors", spec.resolved_priors()},
          {"seed", spec.seed}};
}

Json config_to_json(const FitConfig& cfg) {
  return {{"solver", std::string(to_string(cfg.solver))},
          {"k", cfg.k},
          {"n_starts", cfg.n_starts},
          {"max_iter", cfg.max_iter},
          {"tol", cfg.tol},
          {"init_sample_size", cfg.init_sample_size},
          {"outlier_cutoff", cfg.outlier_cutoff},
          {"lts_subsets", cfg.lts_subsets},
          {"seed", cfg.seed}};
}

Json truth_to_json(const SimulatedData& sim, const ScenarioSpec& spec) {
  Json z = Json::array();
  Json outlier = Json::array();
  for (Index i = 0; i < sim.true_z.size(); ++i) {
    z.push_back(sim.true_z(i) + 1);
    outlier.push_back(sim.true_outlier(i) ? 1 : 0);
  }
  return {{"schema", kTruthSchema},
          {"spec", spec_to_json(spec)},
          {"components", model_to_json(sim.true_model)},
          {"z", std::move(z)},
          {"outlier", std::move(outlier)}};
}

Json fit_to_json(const FitResult& result, const FitConfig& cfg) {
  Json comps = model_to_json(result.model);
  for (std::size_t j = 0; j < result.robust_sigma2.size() && j < comps.size(); ++j)
    comps[j]["robust_sigma2"] = result.robust_sigma2[j];
  Json outliers = Json::array();
  for (Index i : result.outliers) outliers.push_back(i + 1);
  return {{"schema", kModelSchema},
          {"config", config_to_json(cfg)},
          {"n", result.partition.size()},
          {"converged", result.converged},
          {"iterations", result.iterations},
          {"objective", result.objective()},
          {"selection_score", result.selection_score},
          {"best_start", result.best_start + 1},
          {"starts_attempted", result.starts_attempted},
          {"starts_failed", result.starts_failed},
          {"components", std::move(comps)},
          {"outliers", std::move(outliers)}};
}

std::string assignments_csv(const FitResult& result) {
  const auto& w = result.posterior.w;
  Mask flagged = Mask::Constant(result.partition.size(), false);
  for (Index i : result.outliers) flagged(i) = true;
  std::string out = "index,z,outlier";
  for (Index j = 1; j <= w.cols(); ++j) out += ",w" + std::to_string(j);
  out += '\n';
  for (Index i = 0; i < result.partition.size(); ++i) {
    out += std::to_string(i + 1) + ',' + std::to_string(result.partition.z(i) + 1) + ',' +
           (flagged(i) ? "1" : "0");
    for (Index j = 0; j < w.cols(); ++j) out += ',' + format_double(w(i, j));
    out += '\n';
  }
  return out;
}

std::string trace_csv(const FitResult& result) {
  std::string out = "iteration,objective\n";
  for (std::size_t m = 0; m < result.trace.size(); ++m)
    out += std::to_string(m) + ',' + format_double(result.trace[m]) + '\n';
  return out;
}

std::string residuals_csv(const Dataset& data, const FitResult& result) {
  std::string out = "index,component,y,fitted,residual,standardized\n";
  for (Index i = 0; i < data.size(); ++i) {
    const int j = result.partition.z(i);
    const double fitted = data.x.row(i).dot(result.model[j].beta);
    const double scale = result.robust_sigma2.empty()
                             ? result.model[j].sigma2
                             : result.robust_sigma2[static_cast<std::size_t>(j)];
    const double r = data.y(i) - fitted;
    out += std::to_string(i + 1) + ',' + std::to_string(j + 1) + ',' + format_double(data.y(i)) +
           ',' + format_double(fitted) + ',' + format_double(r) + ',' +
           format_double(r / std::sqrt(scale)) + '\n';
  }
  return out;
}

std::string report_csv(const BenchmarkReport& report) {
  std::string out = "parameter,truth,bias,mse\n";
  for (const auto& r : report.rows)
    out += r.name + ',' + format_double(r.truth) + ',' + format_double(r.bias) + ',' +
           format_double(r.mse) + '\n';
  return out;
}

Json report_to_json(const BenchmarkReport& report) {
  Json rows = Json::array();
  for (const auto& r : report.rows)
    rows.push_back({{"parameter", r.name}, {"truth", r.truth}, {"bias", r.bias}, {"mse", r.mse}});
  return {{"schema", kBenchmarkSchema},
          {"spec", spec_to_json(report.spec)},
          {"config", config_to_json(report.config)},
          {"reps", report.n_reps},
          {"failed", report.n_failed},
          {"rows", std::move(rows)},
          {"outlier_precision", report.outlier_precision},
          {"outlier_recall", report.outlier_recall}};
}

}  // namespace robmix::io
