// missbench command-line front end: gen, mask, impute, bench, report.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "missbench.hpp"

namespace fs = std::filesystem;
using namespace missbench;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitRuntime = 1;
constexpr int kExitConfig = 2;
constexpr int kExitPartial = 3;

struct GenOptions {
  Index rows = 100;
  Index cols = 20;
  Index rank = 2;
  std::string row_dist = "gaussian";
  std::string col_dist = "gaussian";
  double noise = 0.0;
  std::uint64_t seed = kDefaultPatternSeed;
  int count = 1;
  fs::path out;
};

struct MaskOptions {
  fs::path data;
  std::string pattern;
  std::uint64_t seed = kDefaultPatternSeed;
  std::string params_json;
  fs::path params_file;
  fs::path out;
  fs::path observed_out;
  bool raw = false;
  std::map<std::string, double> numeric;
  std::map<std::string, Index> integer;
  std::string bandit;
  bool pooling = false;
};

struct ImputeOptions {
  fs::path data;
  fs::path mask;
  std::string method = "soft-impute";
  std::optional<Index> k;
  std::optional<double> lambda;
  std::optional<Index> max_iter;
  std::optional<double> tol;
  std::optional<double> ridge_lambda;
  Index n_perms = 4;
  std::string base_a = "featurized-ridge";
  std::string base_b = "soft-impute";
  std::uint64_t seed = kDefaultPatternSeed;
  fs::path out;
  fs::path diagnostics;
};

struct BenchOptions {
  fs::path datasets;
  std::vector<std::string> patterns{"all"};
  std::vector<std::string> methods{"col-mean", "knn", "soft-impute", "ice"};
  Index seeds = 5;
  std::uint64_t seed = 0;
  int jobs = 1;
  fs::path out = "bench-out";
  bool adaptive = false;
  Index refresh_period = 1;
  double temperature = 1.0;
  fs::path pattern_params;
  bool quiet = false;
};

struct ReportOptions {
  fs::path in;
  std::string format = "table";
  bool cells_only = false;
  fs::path out;
};

LatentDistribution latent_or_random(const std::string& name, Rng& rng) {
  if (name == "random") return random_latent(rng);
  return parse_latent(name);
}

int run_gen(const GenOptions& o) {
  if (o.count < 1) throw InvalidArgument("--count must be >= 1");
  const bool many = o.count > 1;
  if (many) fs::create_directories(o.out);
  std::ofstream manifest;
  if (many) manifest.open(o.out / "manifest.txt");
  for (int k = 0; k < o.count; ++k) {
    const SeedSpec seed{o.seed, "lfm/" + std::to_string(k)};
    Rng rng = seed.child("distributions").rng();
    LfmSpec spec;
    spec.rows = o.rows;
    spec.cols = o.cols;
    spec.rank = o.rank;
    spec.row_dist = latent_or_random(o.row_dist, rng);
    spec.col_dist = latent_or_random(o.col_dist, rng);
    spec.noise_scale = o.noise;
    const DataMatrix y = sample_lfm(spec, seed);
    char name[32];
    std::snprintf(name, sizeof name, "lfm_%03d.csv", k);
    const fs::path target = many ? o.out / name : o.out;
    write_table(target, default_column_names(y.cols()), y.values());
    if (many) manifest << name << '\n';
    std::cerr << "wrote " << target.string() << " (" << latent_name(spec.row_dist) << " x "
              << latent_name(spec.col_dist) << ", rank " << spec.rank << ")\n";
  }
  return kExitOk;
}

Json mask_overrides(const MaskOptions& o) {
  Json j = Json::object();
  if (!o.params_file.empty()) j = read_json(o.params_file);
  if (!o.params_json.empty()) {
    const Json inline_params = Json::parse(o.params_json);
    for (const auto& [key, value] : inline_params.items()) j[key] = value;
  }
  for (const auto& [key, value] : o.numeric) j[key] = value;
  for (const auto& [key, value] : o.integer) j[key] = value;
  if (!o.bandit.empty()) j["algorithm"] = o.bandit;
  if (o.pooling) j["pooling"] = true;
  return j;
}

int run_mask(const MaskOptions& o) {
  const DatasetRecord rec = load_csv(o.data);
  const Pattern pattern = parse_pattern(o.pattern);
  const PatternParams params = params_from_json(pattern, mask_overrides(o));
  const DataMatrix input = o.raw ? rec.matrix : zscore_columns(rec.matrix);
  const PatternSpec spec = resolve_for_shape(PatternSpec{params, SeedSpec{o.seed, std::string(pattern_key(pattern))}},
                                             input.rows(), input.cols());
  const Mask mask = generate(spec, input);
  write_mask_csv(o.out, mask);
  Json side = to_json(spec.params);
  side["seed"] = o.seed;
  side["standardized_input"] = !o.raw;
  side["rows"] = mask.rows();
  side["cols"] = mask.cols();
  side["missing_fraction"] = missing_fraction(mask);
  write_json(fs::path(o.out.string() + ".json"), side);
  if (!o.observed_out.empty()) {
    write_table(o.observed_out, rec.column_names, apply_mask(rec.matrix, mask).observed);
  }
  std::cerr << "missing fraction " << missing_fraction(mask) << '\n';
  return kExitOk;
}

Imputer imputer_from(const ImputeOptions& o, Method m) {
  Imputer imp{m};
  if (o.k) imp.k = *o.k;
  if (o.max_iter) imp.max_iter = *o.max_iter;
  if (o.tol) imp.tol = *o.tol;
  if (o.ridge_lambda) imp.ridge_lambda = *o.ridge_lambda;
  if (o.lambda) {
    imp.soft_lambda = *o.lambda;
    imp.feature_lambda = *o.lambda;
  }
  return imp;
}

Json diagnostics_json(const Diagnostics& d) {
  Json j;
  j["iterations"] = d.iterations;
  j["final_change"] = d.final_change;
  j["converged"] = d.converged;
  j["objective"] = d.objective;
  j["objective_monotone"] = d.objective_monotone;
  j["ensemble_weight"] = d.ensemble_weight ? Json(*d.ensemble_weight) : Json(nullptr);
  j["warnings"] = d.warnings;
  return j;
}

int run_impute(const ImputeOptions& o) {
  // Either a data CSV with empty cells, or a complete CSV plus a mask CSV.
  Table table = read_table(o.data);
  MaskBits bits(table.values.rows(), table.values.cols());
  for (Index i = 0; i < bits.rows(); ++i)
    for (Index j = 0; j < bits.cols(); ++j) bits(i, j) = is_missing(table.values(i, j)) ? 0 : 1;
  Mask mask(bits);
  if (!o.mask.empty()) {
    if (!table.empty_cells.empty()) throw InvalidArgument("--mask given but the data already has empty cells");
    mask = read_mask_csv(o.mask);
  }
  if (mask.rows() != table.values.rows() || mask.cols() != table.values.cols())
    throw InvalidArgument("mask shape does not match the data");

  // Imputers never read the truth; missing cells get a zero placeholder.
  Matrix placeholder = table.values;
  for (Index i = 0; i < placeholder.rows(); ++i)
    for (Index j = 0; j < placeholder.cols(); ++j)
      if (!mask.observed(i, j) || is_missing(placeholder(i, j))) placeholder(i, j) = 0.0;
  const MaskedDataset raw = apply_mask(DataMatrix(placeholder), mask);
  const auto [ds, affine] = standardize_observed(raw);

  const SeedSpec seed{o.seed, "impute"};
  ImputationResult result = [&] {
    if (o.method == "ensemble") {
      EnsembleSpec spec;
      spec.n_perms = o.n_perms;
      spec.base_a = imputer_from(o, parse_method(o.base_a));
      spec.base_b = imputer_from(o, parse_method(o.base_b));
      return blend(ds, spec, seed);
    }
    return impute(imputer_from(o, parse_method(o.method)), ds, seed);
  }();

  Matrix completed = affine.inverse(result.completed.values());
  for (Index i = 0; i < completed.rows(); ++i)
    for (Index j = 0; j < completed.cols(); ++j)
      if (mask.observed(i, j)) completed(i, j) = raw.observed(i, j);
  write_table(o.out, table.names, completed);
  const fs::path diag_path = o.diagnostics.empty() ? fs::path(o.out.string() + ".json") : o.diagnostics;
  Json diag = diagnostics_json(result.diagnostics);
  diag["method"] = o.method;
  diag["seed"] = o.seed;
  diag["missing_cells"] = mask.missing_count();
  write_json(diag_path, diag);
  for (const auto& w : result.diagnostics.warnings) std::cerr << "warning: " << w << '\n';
  return kExitOk;
}

std::vector<PatternParams> bench_patterns(const BenchOptions& o) {
  Json overrides = Json::object();
  if (!o.pattern_params.empty()) overrides = read_json(o.pattern_params);
  std::vector<Pattern> chosen;
  if (o.patterns.size() == 1 && o.patterns.front() == "all") {
    chosen.assign(kAllPatterns.begin(), kAllPatterns.end());
  } else {
    for (const auto& name : o.patterns) chosen.push_back(parse_pattern(name));
  }
  std::vector<PatternParams> out;
  for (Pattern p : chosen) {
    const std::string key(pattern_key(p));
    out.push_back(overrides.contains(key) ? params_from_json(p, overrides.at(key)) : default_params(p));
  }
  return out;
}

int run_bench(const BenchOptions& o) {
  BenchConfig cfg;
  cfg.datasets = load_datasets(o.datasets);
  cfg.patterns = bench_patterns(o);
  for (const auto& m : o.methods) cfg.methods.push_back(method_by_name(m));
  cfg.n_seeds = o.seeds;
  cfg.seed = o.seed;
  cfg.jobs = o.jobs;
  cfg.adaptive_proportions = o.adaptive;
  cfg.refresh_period = o.refresh_period;
  cfg.temperature = o.temperature;
  const BenchReport report = run_benchmark(cfg);
  emit_report(report, o.out);
  if (!o.quiet) std::cout << render_table(report);
  for (const auto& w : report.warnings) std::cerr << "warning: " << w << '\n';
  return report.dropped_groups() > 0 ? kExitPartial : kExitOk;
}

int run_report(const ReportOptions& o) {
  const fs::path path = fs::is_directory(o.in) ? o.in / "report.json" : o.in;
  const Json j = read_json(path);
  std::string text;
  if (o.cells_only || o.format == "cells") {
    text = j.at("cells").dump(2) + "\n";
  } else {
    const BenchReport report = report_from_json(j);
    if (o.format == "table") {
      text = render_table(report);
    } else if (o.format == "csv") {
      text = render_csv(report);
    } else if (o.format == "json") {
      text = to_json(report).dump(2) + "\n";
    } else {
      throw InvalidArgument("unknown --format '" + o.format + "'");
    }
  }
  if (o.out.empty()) {
    std::cout << text;
  } else {
    std::ofstream out(o.out, std::ios::binary);
    if (!out) throw Error("cannot write " + o.out.string());
    out << text;
  }
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Missing-data benchmark toolkit"};
  app.require_subcommand(1);

  GenOptions gen;
  auto* g = app.add_subcommand("gen", "Sample low-rank factor-model datasets");
  g->add_option("--rows", gen.rows, "Rows m")->capture_default_str();
  g->add_option("--cols", gen.cols, "Columns n")->capture_default_str();
  g->add_option("--rank", gen.rank, "Latent rank k")->capture_default_str();
  g->add_option("--row-dist", gen.row_dist, "gaussian|laplace|student-t|spike-slab|dirichlet|random")
      ->capture_default_str();
  g->add_option("--col-dist", gen.col_dist, "Same choices as --row-dist")->capture_default_str();
  g->add_option("--noise", gen.noise, "Additive Gaussian noise scale")->capture_default_str();
  g->add_option("--seed", gen.seed)->capture_default_str();
  g->add_option("--count", gen.count, "Number of datasets; >1 writes a directory with a manifest")
      ->capture_default_str();
  g->add_option("--out", gen.out, "Output CSV (or directory when --count > 1)")->required();

  MaskOptions mask;
  auto* m = app.add_subcommand("mask", "Generate a missingness mask for a data CSV");
  m->add_option("--data", mask.data, "Complete data CSV")->required()->check(CLI::ExistingFile);
  m->add_option("--pattern", mask.pattern, "Pattern key, e.g. mcar, self-masking, seq")->required();
  m->add_option("--seed", mask.seed)->capture_default_str();
  m->add_option("--params", mask.params_json, "Inline JSON object of pattern parameters");
  m->add_option("--params-file", mask.params_file, "JSON file of pattern parameters")->check(CLI::ExistingFile);
  m->add_option("--out", mask.out, "Mask CSV (0/1, no header); a JSON sidecar is written next to it")
      ->required();
  m->add_option("--observed-out", mask.observed_out, "Also write the masked data with empty cells");
  m->add_flag("--raw", mask.raw, "Generate on the raw values instead of z-scored columns");
  for (const char* key : {"p_missing", "predictor_fraction", "q_censor", "q_thresh", "alpha", "eps", "tau_r",
                          "tau_c", "eps_std", "f_cheap", "beta", "epsilon", "epsilon_decay",
                          "reward_noise_scale", "ucb_scale", "gradient_step"}) {
    std::string flag = std::string("--") + key;
    std::replace(flag.begin(), flag.end(), '_', '-');
    m->add_option_function<double>(flag, [&mask, k = std::string(key)](double v) { mask.numeric[k] = v; });
  }
  for (const char* key : {"k_low", "k_high", "row_clusters", "col_clusters", "row_blocks", "col_blocks",
                          "neighborhood_low", "neighborhood_high", "layers_low", "layers_high", "width_low",
                          "width_high"}) {
    std::string flag = std::string("--") + key;
    std::replace(flag.begin(), flag.end(), '_', '-');
    m->add_option_function<Index>(flag, [&mask, k = std::string(key)](Index v) { mask.integer[k] = v; });
  }
  m->add_option("--bandit", mask.bandit, "Seq pattern: epsilon-greedy|ucb|thompson|gradient");
  m->add_flag("--pooling", mask.pooling, "Seq pattern: share reward estimates across rows");

  ImputeOptions imp;
  auto* i = app.add_subcommand("impute", "Complete a masked data CSV");
  i->add_option("--data", imp.data, "Data CSV; empty cells are missing")->required()->check(CLI::ExistingFile);
  i->add_option("--mask", imp.mask, "Mask CSV applied to a complete --data file")->check(CLI::ExistingFile);
  i->add_option("--method", imp.method, "col-mean|knn|soft-impute|ice|featurized-ridge|ensemble")
      ->capture_default_str();
  i->add_option("--k", imp.k, "kNN neighbours");
  i->add_option("--lambda", imp.lambda, "SoftImpute / featurized ridge penalty");
  i->add_option("--max-iter", imp.max_iter);
  i->add_option("--tol", imp.tol);
  i->add_option("--ridge-lambda", imp.ridge_lambda, "ICE per-column ridge penalty");
  i->add_option("--perms,--n-perms", imp.n_perms, "Ensemble permutations")->capture_default_str();
  i->add_option("--base-a", imp.base_a, "Ensemble first base method")->capture_default_str();
  i->add_option("--base-b", imp.base_b, "Ensemble second base method")->capture_default_str();
  i->add_option("--seed", imp.seed)->capture_default_str();
  i->add_option("--out", imp.out, "Completed CSV")->required();
  i->add_option("--diagnostics", imp.diagnostics, "Diagnostics JSON (default <out>.json)");

  BenchOptions bench;
  auto* b = app.add_subcommand("bench", "Run the dataset x pattern x method x seed grid");
  b->add_option("--datasets", bench.datasets, "Directory of CSVs or a manifest file")->required();
  b->add_option("--patterns", bench.patterns, "Pattern keys or 'all'")->delimiter(',')->capture_default_str();
  b->add_option("--methods", bench.methods, "Method keys, 'ensemble' included")->delimiter(',')
      ->capture_default_str();
  b->add_option("--seeds", bench.seeds, "Replicates per (dataset, pattern)")->capture_default_str();
  b->add_option("--seed", bench.seed, "Run seed")->capture_default_str();
  b->add_option("--jobs", bench.jobs, "Worker threads")->capture_default_str();
  b->add_option("--out", bench.out, "Output directory")->capture_default_str();
  b->add_flag("--adaptive-proportions", bench.adaptive, "Record the softmax pattern-proportion trajectory");
  b->add_option("--refresh-period", bench.refresh_period, "Scheduler refresh period in steps")
      ->capture_default_str();
  b->add_option("--temperature", bench.temperature, "Scheduler softmax temperature")->capture_default_str();
  b->add_option("--pattern-params", bench.pattern_params, "JSON object: pattern key -> parameter overrides")
      ->check(CLI::ExistingFile);
  b->add_flag("--quiet", bench.quiet, "Do not print the table");

  ReportOptions report;
  auto* r = app.add_subcommand("report", "Render a saved report");
  r->add_option("--in", report.in, "report.json or its directory")->required()->check(CLI::ExistingPath);
  r->add_option("--format", report.format, "table|csv|json|cells")->capture_default_str();
  r->add_flag("--cells-only", report.cells_only, "Print the canonical cells array");
  r->add_option("--out", report.out, "Write to a file instead of stdout");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitConfig;
  }

  try {
    if (*g) return run_gen(gen);
    if (*m) return run_mask(mask);
    if (*i) return run_impute(imp);
    if (*b) return run_bench(bench);
    if (*r) return run_report(report);
  } catch (const InvalidArgument& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const ParseError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const nlohmann::json::exception& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitRuntime;
  }
  return kExitConfig;
}
