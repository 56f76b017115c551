#include "robmix/evaluate.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <limits>
#include <numeric>
#include <optional>
#include <thread>

namespace robmix {

double alignment_distance(const MixtureModel& estimate, const MixtureModel& truth,
                          std::span<const int> perm) {
  double d = 0;
  for (int j = 0; j < truth.k(); ++j) {
    const auto& e = estimate[perm[static_cast<std::size_t>(j)]];
    const auto& t = truth[j];
    d += (e.beta - t.beta).squaredNorm() + (e.pi - t.pi) * (e.pi - t.pi);
  }
  return d;
}

std::vector<int> align_labels(const MixtureModel& estimate, const MixtureModel& truth) {
  if (estimate.k() != truth.k())
    throw ParameterError("align_labels: estimate has K=" + std::to_string(estimate.k()) +
                         ", truth has K=" + std::to_string(truth.k()));
  if (truth.k() > 6) throw ParameterError("align_labels: exhaustive search supports K <= 6");
  std::vector<int> perm(static_cast<std::size_t>(truth.k()));
  std::iota(perm.begin(), perm.end(), 0);
  std::vector<int> best = perm;
  double best_distance = std::numeric_limits<double>::infinity();
  do {
    const double d = alignment_distance(estimate, truth, perm);
    if (d < best_distance) {
      best_distance = d;
      best = perm;
    }
  } while (std::next_permutation(perm.begin(), perm.end()));
  return best;
}

MixtureModel permute(const MixtureModel& model, std::span<const int> perm) {
  MixtureModel out;
  for (int j : perm) out.components.push_back(model[j]);
  return out;
}

BiasMse bias_mse(std::span<const double> estimates, double truth) {
  if (estimates.empty()) throw ParameterError("bias_mse: no estimates");
  const auto n = static_cast<double>(estimates.size());
  double sum = 0;
  double sq = 0;
  for (double e : estimates) {
    sum += e;
    sq += (e - truth) * (e - truth);
  }
  return {sum / n - truth, sq / n};
}

double BenchmarkReport::summed_abs_bias() const {
  double s = 0;
  for (const auto& r : rows) s += std::abs(r.bias);
  return s;
}

double BenchmarkReport::max_abs_bias() const {
  double m = 0;
  for (const auto& r : rows) m = std::max(m, std::abs(r.bias));
  return m;
}

double BenchmarkReport::max_mse() const {
  double m = 0;
  for (const auto& r : rows) m = std::max(m, r.mse);
  return m;
}

std::vector<ParameterRow> parameter_rows(const MixtureModel& truth) {
  std::vector<ParameterRow> rows;
  for (int j = 0; j < truth.k(); ++j)
    for (Index c = 0; c < truth[j].beta.size(); ++c)
      rows.push_back({"beta" + std::to_string(j + 1) + "_" + std::to_string(c), truth[j].beta(c)});
  for (int j = 0; j < truth.k(); ++j) rows.push_back({"pi" + std::to_string(j + 1), truth[j].pi});
  return rows;
}

namespace {

struct RepOutcome {
  std::vector<double> values;  // aligned, in parameter_rows order
  Index true_positive = 0;
  Index false_positive = 0;
  Index false_negative = 0;
};

std::vector<double> flatten(const MixtureModel& m) {
  std::vector<double> v;
  for (const auto& c : m.components) v.insert(v.end(), c.beta.begin(), c.beta.end());
  for (const auto& c : m.components) v.push_back(c.pi);
  return v;
}

std::optional<RepOutcome> run_rep(const ScenarioSpec& spec, const FitConfig& cfg, Index r) {
  ScenarioSpec s = spec;
  s.seed = derive_seed(spec.seed, static_cast<std::uint64_t>(2 * r));
  FitConfig c = cfg;
  c.k = spec.k();
  c.seed = derive_seed(spec.seed, static_cast<std::uint64_t>(2 * r + 1));
  const SimulatedData sim = generate(s);
  FitResult res;
  try {
    res = fit(sim.data, c);
  } catch (const FitFailure&) {
    return std::nullopt;
  }
  const auto perm = align_labels(res.model, sim.true_model);
  RepOutcome out;
  out.values = flatten(permute(res.model, perm));
  Mask flagged = Mask::Constant(sim.data.size(), false);
  for (Index i : res.outliers) flagged(i) = true;
  out.true_positive = (flagged && sim.true_outlier).count();
  out.false_positive = (flagged && !sim.true_outlier).count();
  out.false_negative = (!flagged && sim.true_outlier).count();
  return out;
}

double ratio_or_one(Index num, Index den) {
  return den == 0 ? 1.0 : static_cast<double>(num) / static_cast<double>(den);
}

}  // namespace

BenchmarkReport run_benchmark(const ScenarioSpec& spec, const FitConfig& cfg, Index reps,
                              unsigned threads) {
  if (reps < 1) throw ParameterError("run_benchmark: reps must be >= 1");
  spec.validate();
  std::vector<std::optional<RepOutcome>> outcomes(static_cast<std::size_t>(reps));

  unsigned workers = threads == 0 ? std::max(1u, std::thread::hardware_concurrency()) : threads;
  workers = static_cast<unsigned>(std::min<Index>(workers, reps));
  std::atomic<Index> next{0};
  const auto work = [&] {
    for (Index r = next++; r < reps; r = next++)
      outcomes[static_cast<std::size_t>(r)] = run_rep(spec, cfg, r);
  };
  if (workers <= 1) {
    work();
  } else {
    std::vector<std::jthread> pool;
    for (unsigned t = 0; t < workers; ++t) pool.emplace_back(work);
  }

  BenchmarkReport report;
  report.spec = spec;
  report.config = cfg;
  report.config.k = spec.k();
  report.n_reps = reps;
  report.rows = parameter_rows(true_model(spec));
  std::vector<std::vector<double>> columns(report.rows.size());
  Index tp = 0, fp = 0, fn = 0;
  for (const auto& o : outcomes) {
    if (!o) {
      ++report.n_failed;
      continue;
    }
    for (std::size_t p = 0; p < columns.size(); ++p) columns[p].push_back(o->values[p]);
    tp += o->true_positive;
    fp += o->false_positive;
    fn += o->false_negative;
    report.rep_precision.push_back(ratio_or_one(o->true_positive, o->true_positive + o->false_positive));
    report.rep_recall.push_back(ratio_or_one(o->true_positive, o->true_positive + o->false_negative));
  }
  if (report.n_failed == reps)
    throw BenchmarkFailure("run_benchmark: all " + std::to_string(reps) + " repetitions failed");
  for (std::size_t p = 0; p < columns.size(); ++p) {
    const BiasMse bm = bias_mse(columns[p], report.rows[p].truth);
    report.rows[p].bias = bm.bias;
    report.rows[p].mse = bm.mse;
  }
  report.outlier_precision = ratio_or_one(tp, tp + fp);
  report.outlier_recall = ratio_or_one(tp, tp + fn);
  return report;
}

}  // namespace robmix
