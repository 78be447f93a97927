#pragma once

// Benchmark harness: observed-value standardization, RMSE and Imputation
// Accuracy, the (dataset x pattern x replicate) grid runner and report output.

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <map>
#include <mutex>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "missbench/core.hpp"
#include "missbench/ensemble.hpp"
#include "missbench/imputers.hpp"
#include "missbench/io.hpp"
#include "missbench/missingness.hpp"
#include "missbench/scheduler.hpp"

namespace missbench {

inline constexpr int kReportVersion = 1;

// ---------------------------------------------------------------------------
// Standardization

/// x_std = (x - center) / scale, per column.
struct ColumnAffine {
  Vector center;
  Vector scale;

  [[nodiscard]] Matrix forward(const Matrix& x) const {
    Matrix out = x;
    for (Index j = 0; j < x.cols(); ++j) out.col(j) = (x.col(j).array() - center(j)) / scale(j);
    return out;
  }
  [[nodiscard]] Matrix inverse(const Matrix& z) const {
    Matrix out = z;
    for (Index j = 0; j < z.cols(); ++j) out.col(j) = z.col(j).array() * scale(j) + center(j);
    return out;
  }
};

/// Observed-entry mean and population std per column. A column with no
/// observed entries gets center 0; one observed entry or zero variance gets scale 1.
inline ColumnAffine observed_affine(const MaskedDataset& ds) {
  ColumnAffine a{Vector::Zero(ds.cols()), Vector::Ones(ds.cols())};
  for (Index j = 0; j < ds.cols(); ++j) {
    const std::vector<double> v = observed_column(ds.observed, j);
    if (v.empty()) continue;
    double mu = 0.0;
    for (double x : v) mu += x;
    mu /= static_cast<double>(v.size());
    double var = 0.0;
    for (double x : v) var += (x - mu) * (x - mu);
    var /= static_cast<double>(v.size());
    a.center(j) = mu;
    if (v.size() > 1 && var > 0.0) a.scale(j) = std::sqrt(var);
  }
  return a;
}

/// Applies the observed-entry affine map to both the truth and the observed matrix.
inline std::pair<MaskedDataset, ColumnAffine> standardize_observed(const MaskedDataset& ds) {
  ColumnAffine a = observed_affine(ds);
  MaskedDataset out = apply_mask(DataMatrix(a.forward(ds.truth.values())), ds.mask);
  return {std::move(out), std::move(a)};
}

/// Full-column z-score of a complete matrix (population std, constant columns keep scale 1).
inline DataMatrix zscore_columns(const DataMatrix& x) {
  const MaskedDataset all = apply_mask(x, Mask::all_observed(x.rows(), x.cols()));
  return DataMatrix(observed_affine(all).forward(x.values()));
}

// ---------------------------------------------------------------------------
// Metrics

inline double rmse(const DataMatrix& truth, const DataMatrix& completed,
                   const std::vector<std::pair<Index, Index>>& omega) {
  if (truth.rows() != completed.rows() || truth.cols() != completed.cols())
    throw InvalidArgument("rmse: shape mismatch");
  if (omega.empty()) throw InvalidArgument("rmse: empty missing-index set");
  double sum = 0.0;
  for (const auto& [i, j] : omega) {
    const double d = truth(i, j) - completed(i, j);
    sum += d * d;
  }
  return std::sqrt(sum / static_cast<double>(omega.size()));
}

inline double rmse(const DataMatrix& truth, const DataMatrix& completed, const Mask& mask) {
  return rmse(truth, completed, mask.missing_cells());
}

/// 1 - (r - min) / (max - min) per method; every method gets 0.5 when all tie.
inline std::map<std::string, double> imputation_accuracy(const std::map<std::string, double>& rmse_by_method) {
  if (rmse_by_method.size() < 2) throw InvalidArgument("imputation_accuracy: need at least 2 methods");
  double lo = std::numeric_limits<double>::infinity();
  double hi = -lo;
  for (const auto& [name, r] : rmse_by_method) {
    if (!std::isfinite(r)) throw InvalidArgument("imputation_accuracy: non-finite rmse for " + name);
    lo = std::min(lo, r);
    hi = std::max(hi, r);
  }
  std::map<std::string, double> out;
  for (const auto& [name, r] : rmse_by_method) {
    out[name] = hi == lo ? 0.5 : 1.0 - (r - lo) / (hi - lo);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Methods

struct MethodSpec {
  std::string name;
  ImputeFn run;
  Json config = Json::object();
};

inline Json to_json(const Imputer& imp) {
  Json j;
  j["method"] = std::string(method_key(imp.method));
  switch (imp.method) {
    case Method::ColMean:
      break;
    case Method::Knn:
      j["k"] = imp.k;
      break;
    case Method::SoftImpute:
      j["lambda"] = imp.soft_lambda ? Json(*imp.soft_lambda) : Json("0.1*sigma_max");
      j["max_iter"] = imp.max_iter;
      j["tol"] = imp.tol;
      break;
    case Method::Ice:
      j["max_iter"] = imp.max_iter;
      j["tol"] = imp.tol;
      j["ridge_lambda"] = imp.ridge_lambda;
      break;
    case Method::FeaturizedRidge:
      j["lambda"] = imp.feature_lambda;
      break;
  }
  return j;
}

inline MethodSpec make_method(const Imputer& imp) {
  validate(imp);
  return MethodSpec{std::string(method_key(imp.method)), imputer_fn(imp), to_json(imp)};
}

inline MethodSpec make_ensemble_method(const EnsembleSpec& spec) {
  validate(spec);
  Json j;
  j["method"] = "ensemble";
  j["base_a"] = to_json(spec.base_a);
  j["base_b"] = to_json(spec.base_b);
  j["n_perms"] = spec.n_perms;
  j["degenerate_tol"] = spec.degenerate_tol;
  return MethodSpec{"ensemble",
                    [spec](const MaskedDataset& ds, const SeedSpec& seed) { return blend(ds, spec, seed); },
                    std::move(j)};
}

/// Accepts method keys plus "ensemble".
inline MethodSpec method_by_name(std::string_view name) {
  if (name == "ensemble") return make_ensemble_method(EnsembleSpec{});
  return make_method(Imputer{parse_method(name)});
}

// ---------------------------------------------------------------------------
// Grid runner

struct BenchConfig {
  std::vector<DatasetRecord> datasets;
  /// The seed of each spec is ignored; masks use the per-group seed.
  std::vector<PatternParams> patterns;
  std::vector<MethodSpec> methods;
  Index n_seeds = 5;
  std::uint64_t seed = 0;
  int jobs = 1;
  bool adaptive_proportions = false;
  Index refresh_period = 1;
  double temperature = 1.0;
};

struct CellRecord {
  std::string dataset;
  Pattern pattern = Pattern::MCAR;
  std::string method;
  Index replicate = 0;
  std::uint64_t group_seed = 0;
  bool ok = false;
  double rmse = kMissing;
  /// kMissing when the method failed or its group was dropped.
  double accuracy = kMissing;
  std::optional<double> ensemble_weight;
  Index iterations = 0;
  bool converged = true;
  std::string error;
  std::vector<std::string> warnings;
};

struct GroupRecord {
  std::string dataset;
  Pattern pattern = Pattern::MCAR;
  Index replicate = 0;
  std::uint64_t group_seed = 0;
  /// FNV-1a over mask bits and observed-matrix bytes.
  std::uint64_t data_hash = 0;
  double missing_fraction = kMissing;
  bool included = false;
};

struct Timing {
  double seconds = 0.0;
  double per_entry = 0.0;
};

struct AccuracyStat {
  double mean = kMissing;
  double std = kMissing;
  Index groups = 0;
};

struct AggregateRow {
  std::string label;
  /// One entry per BenchReport::methods.
  std::vector<AccuracyStat> stats;
};

struct ProportionSnapshot {
  Index step = 0;
  bool refreshed = false;
  std::vector<double> proportions;
};

struct BenchReport {
  Json config = Json::object();
  Json run = Json::object();
  std::vector<std::string> methods;
  std::vector<Pattern> patterns;
  /// Canonical (dataset, pattern, replicate, method) order.
  std::vector<CellRecord> cells;
  /// Parallel to cells; wall-clock, so excluded from the deterministic payload.
  std::vector<Timing> timings;
  std::vector<GroupRecord> groups;
  /// Patterns in `patterns` order, then "Overall".
  std::vector<AggregateRow> aggregates;
  std::vector<ProportionSnapshot> proportion_trajectory;
  std::vector<std::string> warnings;

  [[nodiscard]] std::size_t dropped_groups() const {
    return static_cast<std::size_t>(
        std::count_if(groups.begin(), groups.end(), [](const GroupRecord& g) { return !g.included; }));
  }
};

namespace detail {

inline std::uint64_t hash_bytes(std::uint64_t h, const void* data, std::size_t len) {
  const auto* p = static_cast<const unsigned char*>(data);
  for (std::size_t k = 0; k < len; ++k) {
    h ^= p[k];
    h *= 0x100000001b3ULL;
  }
  return h;
}

inline std::uint64_t dataset_hash(const MaskedDataset& ds) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  h = hash_bytes(h, ds.mask.bits().data(), static_cast<std::size_t>(ds.mask.bits().size()));
  h = hash_bytes(h, ds.observed.data(), static_cast<std::size_t>(ds.observed.size()) * sizeof(double));
  return h;
}

inline bool zero_rate(const PatternParams& p) {
  return std::visit(
      [](const auto& q) -> bool {
        using T = std::decay_t<decltype(q)>;
        if constexpr (requires { q.p_missing; }) {
          return q.p_missing == 0.0;
        } else if constexpr (std::is_same_v<T, params::Censoring>) {
          return q.q_censor == 0.0;
        } else if constexpr (std::is_same_v<T, params::PolarizationHard>) {
          return q.q_thresh == 0.0;
        } else {
          return false;
        }
      },
      p);
}

inline AccuracyStat summarize(const std::vector<double>& v) {
  AccuracyStat s;
  s.groups = static_cast<Index>(v.size());
  if (v.empty()) return s;
  double mu = 0.0;
  for (double x : v) mu += x;
  mu /= static_cast<double>(v.size());
  double ss = 0.0;
  for (double x : v) ss += (x - mu) * (x - mu);
  s.mean = mu;
  s.std = v.size() > 1 ? std::sqrt(ss / static_cast<double>(v.size() - 1)) : 0.0;
  return s;
}

struct GroupOutput {
  GroupRecord group;
  std::vector<CellRecord> cells;
  std::vector<Timing> timings;
  std::vector<std::string> warnings;
};

inline std::string group_label(const std::string& dataset, Pattern p, Index r) {
  return dataset + "/" + std::string(pattern_key(p)) + "/" + std::to_string(r);
}

inline GroupOutput run_group(const DatasetRecord& data, const DataMatrix& zdata, const PatternParams& pp,
                             Index replicate, const BenchConfig& cfg) {
  GroupOutput out;
  const Pattern tag = static_cast<Pattern>(pp.index());
  const std::string label = group_label(data.name, tag, replicate);
  const SeedSpec group_seed{cfg.seed, "group/" + label};
  out.group = GroupRecord{data.name, tag, replicate, group_seed.key(), 0, kMissing, false};

  MaskedDataset ds;
  try {
    const PatternSpec spec =
        resolve_for_shape(PatternSpec{pp, group_seed.child("mask")}, zdata.rows(), zdata.cols());
    const Mask mask = generate(spec, zdata);
    ds = standardize_observed(apply_mask(zdata, mask)).first;
  } catch (const std::exception& e) {
    out.warnings.push_back(label + ": mask generation failed (" + e.what() + "); group dropped");
    return out;
  }
  out.group.data_hash = dataset_hash(ds);
  out.group.missing_fraction = missing_fraction(ds.mask);
  const auto omega = ds.mask.missing_cells();
  const double entries = static_cast<double>(ds.rows() * ds.cols());

  std::map<std::string, double> survivors;
  for (const MethodSpec& method : cfg.methods) {
    CellRecord cell{data.name, tag, method.name, replicate, out.group.group_seed};
    Timing timing;
    const auto t0 = std::chrono::steady_clock::now();
    try {
      if (omega.empty()) throw Error("mask has no missing entries");
      const ImputationResult r = method.run(ds, group_seed.child("method/" + method.name));
      timing.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
      if (dataset_hash(ds) != out.group.data_hash) throw Error("method mutated the shared dataset");
      const double e = rmse(ds.truth, r.completed, omega);
      if (!std::isfinite(e)) throw Error("non-finite imputation");
      cell.ok = true;
      cell.rmse = e;
      cell.ensemble_weight = r.diagnostics.ensemble_weight;
      cell.iterations = r.diagnostics.iterations;
      cell.converged = r.diagnostics.converged;
      cell.warnings = r.diagnostics.warnings;
      survivors[method.name] = e;
    } catch (const std::exception& e) {
      timing.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
      cell.error = e.what();
    }
    timing.per_entry = timing.seconds / entries;
    out.cells.push_back(std::move(cell));
    out.timings.push_back(timing);
  }

  if (survivors.size() < 2) {
    out.warnings.push_back(label + ": " + std::to_string(survivors.size()) +
                           " surviving method(s); group dropped");
    return out;
  }
  const auto acc = imputation_accuracy(survivors);
  for (CellRecord& c : out.cells)
    if (c.ok) c.accuracy = acc.at(c.method);
  out.group.included = true;
  return out;
}

}  // namespace detail

inline void validate(const BenchConfig& cfg) {
  if (cfg.datasets.empty()) throw InvalidArgument("bench: no datasets");
  if (cfg.patterns.empty()) throw InvalidArgument("bench: no patterns");
  if (cfg.methods.size() < 2) throw InvalidArgument("bench: need at least 2 methods");
  if (cfg.n_seeds < 1) throw InvalidArgument("bench: seeds must be >= 1");
  if (cfg.jobs < 1) throw InvalidArgument("bench: jobs must be >= 1");
  if (cfg.refresh_period < 1) throw InvalidArgument("bench: refresh period must be >= 1");
  if (!(cfg.temperature > 0.0)) throw InvalidArgument("bench: temperature must be > 0");
  std::set<std::string> names;
  for (const auto& d : cfg.datasets)
    if (!names.insert(d.name).second) throw InvalidArgument("bench: duplicate dataset name " + d.name);
  std::set<std::size_t> tags;
  for (const auto& p : cfg.patterns) {
    if (!tags.insert(p.index()).second)
      throw InvalidArgument("bench: duplicate pattern " +
                            std::string(pattern_key(static_cast<Pattern>(p.index()))));
    if (detail::zero_rate(p))
      throw InvalidArgument("bench: pattern " + std::string(pattern_key(static_cast<Pattern>(p.index()))) +
                            " has a zero missing rate, so no entry would be missing");
  }
  names.clear();
  for (const auto& m : cfg.methods) {
    if (!m.run) throw InvalidArgument("bench: method " + m.name + " has no implementation");
    if (!names.insert(m.name).second) throw InvalidArgument("bench: duplicate method " + m.name);
  }
  // Dry run on the first dataset so bad hyperparameters surface as config errors.
  const DataMatrix probe = zscore_columns(cfg.datasets.front().matrix);
  for (const auto& p : cfg.patterns) {
    try {
      (void)dispatch_pattern(resolve_for_shape(PatternSpec{p, SeedSpec{cfg.seed, "validate"}}, probe.rows(),
                                               probe.cols()),
                             probe, SeedSpec{cfg.seed, "validate"});
    } catch (const InvalidArgument&) {
      throw;
    } catch (const std::exception&) {
    }
  }
}

inline Json config_echo(const BenchConfig& cfg) {
  Json j;
  j["datasets"] = Json::array();
  for (const auto& d : cfg.datasets) {
    j["datasets"].push_back({{"name", d.name},
                             {"source", d.source.generic_string()},
                             {"rows", d.matrix.rows()},
                             {"cols", d.matrix.cols()},
                             {"provenance", d.provenance}});
  }
  j["patterns"] = Json::array();
  for (const auto& p : cfg.patterns) j["patterns"].push_back(to_json(p));
  j["methods"] = Json::array();
  for (const auto& m : cfg.methods) j["methods"].push_back({{"name", m.name}, {"config", m.config}});
  j["seeds"] = cfg.n_seeds;
  j["seed"] = cfg.seed;
  j["adaptive_proportions"] = cfg.adaptive_proportions;
  if (cfg.adaptive_proportions) {
    j["refresh_period"] = cfg.refresh_period;
    j["temperature"] = cfg.temperature;
  }
  j["std"] = "sample std across (dataset, pattern, replicate) groups";
  j["space"] = "columns standardized with observed-entry mean and population std";
  return j;
}

inline std::vector<Pattern> report_pattern_order(const std::vector<PatternParams>& patterns) {
  std::vector<Pattern> out;
  for (Pattern p : kAllPatterns) {
    for (const auto& pp : patterns)
      if (static_cast<Pattern>(pp.index()) == p) out.push_back(p);
  }
  return out;
}

inline void compute_aggregates(BenchReport& report) {
  report.aggregates.clear();
  auto row_for = [&](const std::string& label, auto&& keep) {
    AggregateRow row{label, {}};
    for (const auto& m : report.methods) {
      std::vector<double> v;
      for (const auto& c : report.cells)
        if (c.method == m && !std::isnan(c.accuracy) && keep(c)) v.push_back(c.accuracy);
      row.stats.push_back(detail::summarize(v));
    }
    report.aggregates.push_back(std::move(row));
  };
  for (Pattern p : report.patterns)
    row_for(std::string(pattern_display_name(p)), [p](const CellRecord& c) { return c.pattern == p; });
  row_for("Overall", [](const CellRecord&) { return true; });
}

/// Per step t the probe for a pattern is the mean, over datasets, of the best
/// method rmse in replicate t - 1 (0 when no group survived).
inline std::vector<ProportionSnapshot> proportion_trajectory(const BenchReport& report, Index steps,
                                                             Index period, double temperature) {
  ProportionState state = ProportionState::uniform(report.patterns, period, temperature);
  std::vector<ProportionSnapshot> out;
  out.push_back({0, false, state.proportions});
  for (Index t = 1; t <= steps; ++t) {
    const Index replicate = t - 1;
    auto probe = [&](Pattern p) {
      std::map<std::string, double> best;
      for (const auto& c : report.cells) {
        if (c.pattern != p || c.replicate != replicate || std::isnan(c.accuracy)) continue;
        auto [it, fresh] = best.emplace(c.dataset, c.rmse);
        if (!fresh) it->second = std::min(it->second, c.rmse);
      }
      if (best.empty()) return 0.0;
      double s = 0.0;
      for (const auto& [d, r] : best) s += r;
      return s / static_cast<double>(best.size());
    };
    state = step(state, probe);
    out.push_back({t, state.refreshes_at(t), state.proportions});
  }
  return out;
}

/// Runs the grid. Output is identical for any `jobs` except the timings.
inline BenchReport run_benchmark(const BenchConfig& cfg) {
  validate(cfg);
  BenchReport report;
  report.config = config_echo(cfg);
  for (const auto& m : cfg.methods) report.methods.push_back(m.name);
  report.patterns = report_pattern_order(cfg.patterns);

  std::vector<DataMatrix> standardized;
  for (const auto& d : cfg.datasets) standardized.push_back(zscore_columns(d.matrix));

  struct Job {
    std::size_t dataset;
    const PatternParams* pattern;
    Index replicate;
  };
  std::vector<Job> jobs;
  for (std::size_t d = 0; d < cfg.datasets.size(); ++d)
    for (Pattern p : report.patterns)
      for (Index r = 0; r < cfg.n_seeds; ++r) {
        const auto it = std::find_if(cfg.patterns.begin(), cfg.patterns.end(),
                                     [p](const PatternParams& pp) { return static_cast<Pattern>(pp.index()) == p; });
        jobs.push_back({d, &*it, r});
      }

  std::vector<detail::GroupOutput> outputs(jobs.size());
  std::atomic<std::size_t> next{0};
  std::mutex error_mutex;
  std::exception_ptr error;
  auto worker = [&] {
    for (std::size_t k = next++; k < jobs.size(); k = next++) {
      try {
        const Job& job = jobs[k];
        outputs[k] = detail::run_group(cfg.datasets[job.dataset], standardized[job.dataset], *job.pattern,
                                       job.replicate, cfg);
      } catch (...) {
        std::lock_guard<std::mutex> lock(error_mutex);
        if (!error) error = std::current_exception();
      }
    }
  };
  const auto n_threads = static_cast<std::size_t>(std::min<std::size_t>(static_cast<std::size_t>(cfg.jobs), jobs.size()));
  if (n_threads <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < n_threads; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  if (error) std::rethrow_exception(error);

  for (auto& o : outputs) {
    report.groups.push_back(o.group);
    for (std::size_t k = 0; k < o.cells.size(); ++k) {
      report.cells.push_back(std::move(o.cells[k]));
      report.timings.push_back(o.timings[k]);
    }
    report.warnings.insert(report.warnings.end(), o.warnings.begin(), o.warnings.end());
  }
  compute_aggregates(report);
  if (cfg.adaptive_proportions)
    report.proportion_trajectory =
        proportion_trajectory(report, cfg.n_seeds, cfg.refresh_period, cfg.temperature);
  report.run["jobs"] = cfg.jobs;
  return report;
}

// ---------------------------------------------------------------------------
// Report serialization

namespace detail {

inline Json number_or_null(double v) { return std::isnan(v) ? Json(nullptr) : Json(v); }
inline double number_from(const Json& j) { return j.is_null() ? kMissing : j.get<double>(); }

inline std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

inline std::uint64_t parse_hex64(const std::string& s) { return std::stoull(s, nullptr, 16); }

}  // namespace detail

inline Json cell_to_json(const CellRecord& c) {
  Json j;
  j["dataset"] = c.dataset;
  j["pattern"] = std::string(pattern_key(c.pattern));
  j["seed"] = c.replicate;
  j["method"] = c.method;
  j["group_seed"] = detail::hex64(c.group_seed);
  j["status"] = c.ok ? "ok" : "failed";
  j["rmse"] = detail::number_or_null(c.rmse);
  j["accuracy"] = detail::number_or_null(c.accuracy);
  j["ensemble_weight"] = c.ensemble_weight ? Json(*c.ensemble_weight) : Json(nullptr);
  j["iterations"] = c.iterations;
  j["converged"] = c.converged;
  if (!c.error.empty()) j["error"] = c.error;
  if (!c.warnings.empty()) j["warnings"] = c.warnings;
  return j;
}

inline CellRecord cell_from_json(const Json& j) {
  CellRecord c;
  c.dataset = j.at("dataset").get<std::string>();
  c.pattern = parse_pattern(j.at("pattern").get<std::string>());
  c.replicate = j.at("seed").get<Index>();
  c.method = j.at("method").get<std::string>();
  c.group_seed = detail::parse_hex64(j.at("group_seed").get<std::string>());
  c.ok = j.at("status").get<std::string>() == "ok";
  c.rmse = detail::number_from(j.at("rmse"));
  c.accuracy = detail::number_from(j.at("accuracy"));
  if (!j.at("ensemble_weight").is_null()) c.ensemble_weight = j.at("ensemble_weight").get<double>();
  c.iterations = j.at("iterations").get<Index>();
  c.converged = j.at("converged").get<bool>();
  if (j.contains("error")) c.error = j.at("error").get<std::string>();
  if (j.contains("warnings")) c.warnings = j.at("warnings").get<std::vector<std::string>>();
  return c;
}

inline Json cells_to_json(const BenchReport& r) {
  Json cells = Json::array();
  for (const auto& c : r.cells) cells.push_back(cell_to_json(c));
  return cells;
}

inline Json to_json(const BenchReport& r) {
  Json j;
  j["version"] = kReportVersion;
  j["config"] = r.config;
  j["methods"] = r.methods;
  j["patterns"] = Json::array();
  for (Pattern p : r.patterns) j["patterns"].push_back(std::string(pattern_key(p)));
  j["cells"] = cells_to_json(r);
  j["groups"] = Json::array();
  for (const auto& g : r.groups) {
    j["groups"].push_back({{"dataset", g.dataset},
                           {"pattern", std::string(pattern_key(g.pattern))},
                           {"seed", g.replicate},
                           {"group_seed", detail::hex64(g.group_seed)},
                           {"data_hash", detail::hex64(g.data_hash)},
                           {"missing_fraction", detail::number_or_null(g.missing_fraction)},
                           {"included", g.included}});
  }
  Json agg = Json::object();
  for (const auto& row : r.aggregates) {
    Json per = Json::object();
    for (std::size_t k = 0; k < r.methods.size(); ++k) {
      const AccuracyStat& s = row.stats[k];
      per[r.methods[k]] = {{"mean", detail::number_or_null(s.mean)},
                           {"std", detail::number_or_null(s.std)},
                           {"groups", s.groups}};
    }
    agg[row.label] = std::move(per);
  }
  j["aggregates"] = std::move(agg);
  j["proportion_trajectory"] = Json::array();
  for (const auto& s : r.proportion_trajectory) {
    Json props = Json::object();
    for (std::size_t k = 0; k < r.patterns.size(); ++k)
      props[std::string(pattern_key(r.patterns[k]))] = s.proportions[k];
    j["proportion_trajectory"].push_back({{"step", s.step}, {"refreshed", s.refreshed}, {"proportions", props}});
  }
  j["warnings"] = r.warnings;
  Json run = r.run;
  run["timings"] = Json::array();
  for (std::size_t k = 0; k < r.timings.size(); ++k) {
    run["timings"].push_back({{"cell", k},
                              {"seconds", r.timings[k].seconds},
                              {"seconds_per_entry", r.timings[k].per_entry}});
  }
  j["run"] = std::move(run);
  return j;
}

inline BenchReport report_from_json(const Json& j) {
  if (j.at("version").get<int>() != kReportVersion) throw ParseError("unsupported report version");
  BenchReport r;
  r.config = j.at("config");
  r.run = j.at("run");
  r.methods = j.at("methods").get<std::vector<std::string>>();
  for (const auto& p : j.at("patterns")) r.patterns.push_back(parse_pattern(p.get<std::string>()));
  for (const auto& c : j.at("cells")) r.cells.push_back(cell_from_json(c));
  for (const auto& g : j.at("groups")) {
    r.groups.push_back(GroupRecord{g.at("dataset").get<std::string>(),
                                   parse_pattern(g.at("pattern").get<std::string>()), g.at("seed").get<Index>(),
                                   detail::parse_hex64(g.at("group_seed").get<std::string>()),
                                   detail::parse_hex64(g.at("data_hash").get<std::string>()),
                                   detail::number_from(g.at("missing_fraction")), g.at("included").get<bool>()});
  }
  for (const auto& [label, per] : j.at("aggregates").items()) {
    AggregateRow row{label, {}};
    for (const auto& m : r.methods) {
      const Json& s = per.at(m);
      row.stats.push_back({detail::number_from(s.at("mean")), detail::number_from(s.at("std")),
                           s.at("groups").get<Index>()});
    }
    r.aggregates.push_back(std::move(row));
  }
  for (const auto& s : j.at("proportion_trajectory")) {
    ProportionSnapshot snap{s.at("step").get<Index>(), s.at("refreshed").get<bool>(), {}};
    for (Pattern p : r.patterns) snap.proportions.push_back(s.at("proportions").at(std::string(pattern_key(p))).get<double>());
    r.proportion_trajectory.push_back(std::move(snap));
  }
  r.warnings = j.at("warnings").get<std::vector<std::string>>();
  if (r.run.contains("timings")) {
    for (const auto& t : r.run.at("timings"))
      r.timings.push_back({t.at("seconds").get<double>(), t.at("seconds_per_entry").get<double>()});
    r.run.erase("timings");
  }
  return r;
}

inline std::string format_stat(const AccuracyStat& s) {
  if (s.groups == 0) return "n/a";
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.3f \xC2\xB1 %.3f", s.mean, s.std);
  return buf;
}

/// Rows = patterns + "Overall", columns = methods, cells "mean ± std".
inline std::string render_table(const BenchReport& r) {
  std::vector<std::vector<std::string>> grid;
  std::vector<std::string> header{"Pattern"};
  header.insert(header.end(), r.methods.begin(), r.methods.end());
  grid.push_back(header);
  for (const auto& row : r.aggregates) {
    std::vector<std::string> line{row.label};
    for (const auto& s : row.stats) line.push_back(format_stat(s));
    grid.push_back(std::move(line));
  }
  auto display_width = [](const std::string& s) {
    std::size_t w = 0;
    for (unsigned char c : s)
      if ((c & 0xC0) != 0x80) ++w;
    return w;
  };
  std::vector<std::size_t> width(header.size(), 0);
  for (const auto& line : grid)
    for (std::size_t k = 0; k < line.size(); ++k) width[k] = std::max(width[k], display_width(line[k]));
  std::ostringstream out;
  out << "Imputation Accuracy (mean \xC2\xB1 std across groups)\n";
  for (std::size_t li = 0; li < grid.size(); ++li) {
    for (std::size_t k = 0; k < grid[li].size(); ++k) {
      const std::string& s = grid[li][k];
      out << (k ? "  " : "") << s << std::string(width[k] - display_width(s), ' ');
    }
    out << '\n';
    if (li == 0) {
      std::size_t total = 0;
      for (std::size_t w : width) total += w;
      out << std::string(total + 2 * (width.size() - 1), '-') << '\n';
    }
  }
  return out.str();
}

inline std::string render_csv(const BenchReport& r) {
  std::ostringstream out;
  out << "pattern";
  for (const auto& m : r.methods) out << ',' << m << "_mean," << m << "_std";
  out << '\n';
  for (const auto& row : r.aggregates) {
    out << row.label;
    for (const auto& s : row.stats) out << ',' << detail::format_double(s.mean) << ',' << detail::format_double(s.std);
    out << '\n';
  }
  return out.str();
}

/// Writes report.json, report.csv and report.txt into `dir`.
inline void emit_report(const BenchReport& r, const std::filesystem::path& dir) {
  if (r.groups.empty() || r.aggregates.empty()) throw InvalidArgument("emit_report: report has no groups");
  std::filesystem::create_directories(dir);
  write_json(dir / "report.json", to_json(r));
  for (const auto& [name, text] : {std::pair{"report.csv", render_csv(r)}, std::pair{"report.txt", render_table(r)}}) {
    auto out = detail::open_for_write(dir / name);
    out << text;
    if (!out) throw Error("write failed: " + (dir / name).string());
  }
}

// ---------------------------------------------------------------------------
// Dataset discovery

/// A directory of *.csv files (sorted by name) or a manifest listing one CSV
/// path per line, relative to the manifest; '#' starts a comment.
inline std::vector<DatasetRecord> load_datasets(const std::filesystem::path& source) {
  std::vector<std::filesystem::path> files;
  if (std::filesystem::is_directory(source)) {
    for (const auto& e : std::filesystem::directory_iterator(source))
      if (e.is_regular_file() && e.path().extension() == ".csv") files.push_back(e.path());
    std::sort(files.begin(), files.end());
  } else {
    std::ifstream in(source);
    if (!in) throw ParseError("cannot open dataset manifest " + source.string());
    std::string line;
    while (std::getline(in, line)) {
      const auto hash = line.find('#');
      std::string_view entry = detail::trim(std::string_view(line).substr(0, hash));
      if (entry.empty()) continue;
      std::filesystem::path p(entry);
      files.push_back(p.is_absolute() ? p : source.parent_path() / p);
    }
  }
  if (files.empty()) throw InvalidArgument("no datasets found in " + source.string());
  std::vector<DatasetRecord> out;
  for (const auto& f : files) out.push_back(load_csv(f));
  return out;
}

}  // namespace missbench
