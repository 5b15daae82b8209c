#include "klnmf/bench.hpp"

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <fstream>
#include <istream>
#include <numbers>
#include <ostream>
#include <random>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

#include "klnmf/matrix_market.hpp"
#include "klnmf/multiplicative_update.hpp"
#include "klnmf/random.hpp"

namespace klnmf::bench {

void SyntheticSpec::validate() const {
  if (n < 1 || m < 1) throw std::invalid_argument("synthetic: n and m must be >= 1");
  if (r_true < 1) throw std::invalid_argument("synthetic: r must be >= 1");
  if (!(sparsity >= 0.0 && sparsity < 1.0))
    throw std::invalid_argument("synthetic: sparsity must lie in [0, 1)");
  if (!(factor_sparsity >= 0.0 && factor_sparsity < 1.0))
    throw std::invalid_argument("synthetic: factor sparsity must lie in [0, 1)");
}

SyntheticSpec parse_synthetic(const std::string& text, std::uint64_t seed) {
  std::vector<std::string> parts;
  std::stringstream ss(text);
  for (std::string item; std::getline(ss, item, ',');) parts.push_back(item);
  if (parts.size() != 5)
    throw std::invalid_argument("--synthetic expects n,m,r,sparsity,model; got '" + text + "'");
  SyntheticSpec spec;
  try {
    spec.n = std::stoll(parts[0]);
    spec.m = std::stoll(parts[1]);
    spec.r_true = std::stoi(parts[2]);
    spec.sparsity = std::stod(parts[3]);
  } catch (const std::exception&) {
    throw std::invalid_argument("--synthetic: cannot parse numbers in '" + text + "'");
  }
  if (parts[4] == "count" || parts[4] == "poisson")
    spec.model = ValueModel::kCountPoisson;
  else if (parts[4] == "tfidf")
    spec.model = ValueModel::kTfidfLike;
  else
    throw std::invalid_argument("--synthetic: model must be count or tfidf, got '" + parts[4] + "'");
  spec.seed = seed;
  spec.validate();
  return spec;
}

SparseMatrixd synthesize(const SyntheticSpec& spec) {
  spec.validate();
  Rng rng(spec.seed);
  const int r = spec.r_true;

  auto planted = [&](Index items) {
    DenseFactord factor(r, items);
    for (Index i = 0; i < items; ++i) {
      bool any = false;
      for (int k = 0; k < r; ++k) {
        const bool zero = rng.uniform01() < spec.factor_sparsity;
        factor(k, i) = zero ? 0.0 : rng.uniform_open_closed();
        any = any || !zero;
      }
      if (!any) factor(static_cast<Index>(rng.below(static_cast<std::uint64_t>(r))), i) = rng.uniform_open_closed();
    }
    return factor;
  };
  const DenseFactord w = planted(spec.n);
  const DenseFactord f = planted(spec.m);

  const double cells = static_cast<double>(spec.n) * static_cast<double>(spec.m);
  const auto target = static_cast<Index>(std::llround((1.0 - spec.sparsity) * cells));
  std::vector<Index> per_col(static_cast<std::size_t>(spec.m), target / spec.m);
  {
    auto order = rng.permutation<Index>(static_cast<std::size_t>(spec.m));
    for (Index p = 0; p < target % spec.m; ++p) ++per_col[static_cast<std::size_t>(order[static_cast<std::size_t>(p)])];
  }

  // Intensities are rescaled so that their mean over all cells is 2.
  const double mean_intensity = row_sums(w).dot(row_sums(f)) / cells;
  const double scale = 2.0 / mean_intensity;
  const double floor = 1e-3;

  std::poisson_distribution<long> unit_poisson;
  std::vector<std::pair<double, Index>> keys(static_cast<std::size_t>(spec.n));
  std::vector<Triplet<double>> entries;
  entries.reserve(static_cast<std::size_t>(target));
  Vector<double> lambda(spec.n);
  for (Index j = 0; j < spec.m; ++j) {
    const Index take = std::min(per_col[static_cast<std::size_t>(j)], spec.n);
    if (take == 0) continue;
    lambda.noalias() = w.transpose() * f.col(j);
    lambda = (lambda.array() * scale + floor).matrix();
    // Weighted sampling without replacement: keep the `take` largest log(u)/lambda.
    for (Index i = 0; i < spec.n; ++i)
      keys[static_cast<std::size_t>(i)] = {std::log(rng.uniform_open_closed()) / lambda(i), i};
    std::nth_element(keys.begin(), keys.begin() + (take - 1), keys.end(),
                     [](const auto& a, const auto& b) { return a.first > b.first; });
    for (Index p = 0; p < take; ++p) {
      const Index i = keys[static_cast<std::size_t>(p)].second;
      double value;
      if (spec.model == ValueModel::kCountPoisson) {
        unit_poisson.param(std::poisson_distribution<long>::param_type(lambda(i)));
        value = 1.0 + static_cast<double>(unit_poisson(rng.engine()));
      } else {
        // Box-Muller normal for a log-normal multiplier.
        const double u1 = rng.uniform_open_closed();
        const double u2 = rng.uniform01();
        const double z = std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
        value = lambda(i) * std::exp(0.5 * z);
      }
      entries.push_back({i, j, value});
    }
  }
  return SparseMatrixd::from_triplets(spec.n, spec.m, std::move(entries));
}

SparseMatrixd load_dataset(const Dataset& dataset) {
  if (const auto* path = std::get_if<std::filesystem::path>(&dataset))
    return load_matrix_market(*path);
  return synthesize(std::get<SyntheticSpec>(dataset));
}

std::string describe(const Dataset& dataset) {
  if (const auto* path = std::get_if<std::filesystem::path>(&dataset)) return path->string();
  const auto& s = std::get<SyntheticSpec>(dataset);
  std::ostringstream out;
  out << "synthetic:" << s.n << "," << s.m << "," << s.r_true << "," << s.sparsity << ","
      << (s.model == ValueModel::kCountPoisson ? "count" : "tfidf") << ",seed=" << s.seed;
  return out.str();
}

Algorithm parse_algorithm(const std::string& name) {
  if (name == "srcd") return Algorithm::kSrcd;
  if (name == "mu") return Algorithm::kMu;
  throw std::invalid_argument("unknown algorithm '" + name + "' (expected srcd or mu)");
}

std::string to_string(Algorithm algorithm) {
  return algorithm == Algorithm::kSrcd ? "srcd" : "mu";
}

namespace {

constexpr const char* kLogHeader =
    "iteration,elapsed_seconds,kl_objective,total_objective,sparsity_W,sparsity_F";

std::string fmt(double v) {
  char buf[32];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, ptr);
}

double parse_double(const std::string& s) {
  double v = 0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size())
    throw std::invalid_argument("bad number '" + s + "' in CSV");
  return v;
}

std::ofstream open_out(const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  return out;
}

}  // namespace

void write_log_csv(std::ostream& out, const ConvergenceLog& log) {
  out << kLogHeader << '\n';
  for (const auto& rec : log) {
    out << rec.iteration << ',' << fmt(rec.elapsed_seconds) << ',' << fmt(rec.kl_objective) << ','
        << fmt(rec.total_objective) << ',' << fmt(rec.sparsity_w) << ',' << fmt(rec.sparsity_f)
        << '\n';
  }
}

ConvergenceLog read_log_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line) || line != kLogHeader)
    throw std::invalid_argument("log CSV: unexpected header");
  ConvergenceLog log;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<std::string> cells;
    std::stringstream ss(line);
    for (std::string cell; std::getline(ss, cell, ',');) cells.push_back(cell);
    if (cells.size() != 6) throw std::invalid_argument("log CSV: expected 6 fields");
    ConvergenceRecord rec;
    rec.iteration = static_cast<int>(parse_double(cells[0]));
    rec.elapsed_seconds = parse_double(cells[1]);
    rec.kl_objective = parse_double(cells[2]);
    rec.total_objective = parse_double(cells[3]);
    rec.sparsity_w = parse_double(cells[4]);
    rec.sparsity_f = parse_double(cells[5]);
    if (!log.empty() && (rec.iteration <= log.back().iteration ||
                         rec.elapsed_seconds <= log.back().elapsed_seconds))
      throw std::invalid_argument("log CSV: iteration and elapsed_seconds must increase");
    if (log.empty() && rec.iteration != 1)
      throw std::invalid_argument("log CSV: iterations start at 1");
    log.push_back(rec);
  }
  return log;
}

void save_log_csv(const std::filesystem::path& path, const ConvergenceLog& log) {
  auto out = open_out(path);
  write_log_csv(out, log);
}

ConvergenceLog load_log_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  return read_log_csv(in);
}

std::uint64_t hash_factors(const FactorPaird& factors) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (const auto* m : {&factors.W, &factors.F}) {
    const auto* bytes = reinterpret_cast<const unsigned char*>(m->data());
    const auto len = static_cast<std::size_t>(m->size()) * sizeof(double);
    for (std::size_t p = 0; p < len; ++p) {
      h ^= bytes[p];
      h *= 0x100000001b3ULL;
    }
  }
  return h;
}

void write_summary_json(const std::filesystem::path& path, const ExperimentSummary& s) {
  nlohmann::json j;
  j["algorithm"] = to_string(s.algorithm);
  j["n"] = s.n;
  j["m"] = s.m;
  j["nnz"] = s.nnz;
  j["rank"] = s.rank;
  j["iterations"] = s.iterations;
  j["converged"] = s.converged;
  j["initial_kl_objective"] = s.initial_kl;
  j["final_kl_objective"] = s.final_kl;
  j["final_total_objective"] = s.final_total;
  j["sparsity_W"] = s.sparsity_w;
  j["sparsity_F"] = s.sparsity_f;
  j["solve_seconds"] = s.solve_seconds;
  j["wall_seconds"] = s.wall_seconds;
  j["peak_accounted_bytes"] = s.peak_accounted_bytes;
  j["reference_bytes"] = s.reference_bytes;
  j["initial_factor_hash"] = s.initial_hash;
  j["orientation"] = "W is r x n and F is r x m; V ~ W^T F";
  auto out = open_out(path);
  out << j.dump(2) << '\n';
}

namespace {

std::size_t reference_bytes(const SparseMatrixd& v, const SparseMatrixd& vt, int rank,
                            int n_workers) {
  const auto factor_bytes =
      static_cast<std::size_t>(rank) * static_cast<std::size_t>(v.rows() + v.cols()) * sizeof(double);
  const auto worker_bytes = static_cast<std::size_t>(n_workers) *
                            static_cast<std::size_t>(std::max(v.rows(), v.cols())) * sizeof(double);
  return v.storage_bytes() + vt.storage_bytes() + factor_bytes + worker_bytes;
}

ExperimentSummary summarize(const SparseMatrixd& v, Algorithm algorithm,
                            const NmfConfig<double>& cfg, const NmfResultd& result,
                            std::uint64_t initial_hash, double wall_seconds) {
  ExperimentSummary s;
  s.algorithm = algorithm;
  s.n = v.rows();
  s.m = v.cols();
  s.nnz = v.nnz();
  s.rank = cfg.rank;
  s.iterations = result.iterations_run;
  s.converged = result.converged;
  s.initial_kl = result.initial.kl;
  s.final_kl = result.log.empty() ? result.initial.kl : result.log.back().kl_objective;
  s.final_total = result.log.empty() ? result.initial.total : result.log.back().total_objective;
  s.sparsity_w = sparsity(result.factors.W);
  s.sparsity_f = sparsity(result.factors.F);
  s.solve_seconds = result.solve_seconds;
  s.wall_seconds = wall_seconds;
  s.peak_accounted_bytes = result.peak_accounted_bytes;
  s.reference_bytes = reference_bytes(v, transpose(v), cfg.rank, cfg.n_workers);
  s.initial_hash = initial_hash;
  return s;
}

NmfResultd solve(const SparseMatrixd& v, Algorithm algorithm, const NmfConfig<double>& cfg,
                 FactorPaird initial) {
  std::optional<FactorPaird> start(std::move(initial));
  return algorithm == Algorithm::kSrcd ? factorize(v, cfg, std::move(start))
                                       : mu_factorize(v, cfg, std::move(start));
}

void write_outputs(const std::filesystem::path& out_dir, const NmfResultd& result,
                   const ExperimentSummary& summary) {
  std::filesystem::create_directories(out_dir);
  save_log_csv(out_dir / "log.csv", result.log);
  save_matrix_market(out_dir / "W.mtx", result.factors.W, "W");
  save_tsv(out_dir / "W.tsv", result.factors.W);
  save_matrix_market(out_dir / "F.mtx", result.factors.F, "F");
  save_tsv(out_dir / "F.tsv", result.factors.F);
  write_summary_json(out_dir / "summary.json", summary);
}

}  // namespace

ExperimentSummary run_experiment(const SparseMatrixd& v, Algorithm algorithm,
                                 const NmfConfig<double>& cfg,
                                 const std::filesystem::path& out_dir) {
  cfg.validate();
  if (v.nnz() == 0) throw std::invalid_argument("data matrix has no nonzero entries");
  auto initial = init_factors<double>(v.rows(), v.cols(), cfg.rank, mean_value(v), cfg.seed);
  const auto hash = hash_factors(initial);
  const auto start = std::chrono::steady_clock::now();
  const auto result = solve(v, algorithm, cfg, std::move(initial));
  const double wall =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  const auto summary = summarize(v, algorithm, cfg, result, hash, wall);
  write_outputs(out_dir, result, summary);
  return summary;
}

ExperimentSummary run_experiment(const Dataset& dataset, Algorithm algorithm,
                                 const NmfConfig<double>& cfg,
                                 const std::filesystem::path& out_dir) {
  return run_experiment(load_dataset(dataset), algorithm, cfg, out_dir);
}

void write_race_csv(std::ostream& out, const std::vector<RaceRow>& rows) {
  out << "algorithm,iteration,elapsed_seconds,kl_objective,total_objective\n";
  for (const auto& row : rows) {
    out << to_string(row.algorithm) << ',' << row.iteration << ',' << fmt(row.elapsed_seconds)
        << ',' << fmt(row.kl_objective) << ',' << fmt(row.total_objective) << '\n';
  }
}

RaceResult race(const SparseMatrixd& v, NmfConfig<double> cfg, double budget_seconds,
                const std::filesystem::path& out_dir) {
  if (!(budget_seconds >= 0)) throw std::invalid_argument("race budget must be >= 0");
  cfg.time_budget_seconds = budget_seconds;
  cfg.check_convergence = false;
  cfg.max_outer_iters = std::numeric_limits<int>::max();
  cfg.validate();
  if (v.nnz() == 0) throw std::invalid_argument("data matrix has no nonzero entries");

  const auto initial = init_factors<double>(v.rows(), v.cols(), cfg.rank, mean_value(v), cfg.seed);
  RaceResult out;
  for (const Algorithm algorithm : {Algorithm::kSrcd, Algorithm::kMu}) {
    FactorPaird start = initial;
    const auto hash = hash_factors(start);
    const auto t0 = std::chrono::steady_clock::now();
    const auto result = solve(v, algorithm, cfg, std::move(start));
    const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    auto summary = summarize(v, algorithm, cfg, result, hash, wall);
    write_outputs(out_dir / to_string(algorithm), result, summary);

    out.rows.push_back({algorithm, 0, 0.0, result.initial.kl, result.initial.total});
    for (const auto& rec : result.log)
      out.rows.push_back(
          {algorithm, rec.iteration, rec.elapsed_seconds, rec.kl_objective, rec.total_objective});
    (algorithm == Algorithm::kSrcd ? out.srcd : out.mu) = summary;
  }
  std::filesystem::create_directories(out_dir);
  auto csv = open_out(out_dir / "race.csv");
  write_race_csv(csv, out.rows);
  return out;
}

RaceResult race(const Dataset& dataset, NmfConfig<double> cfg, double budget_seconds,
                const std::filesystem::path& out_dir) {
  return race(load_dataset(dataset), std::move(cfg), budget_seconds, out_dir);
}

void write_scaling_csv(std::ostream& out, const std::vector<ScalingRow>& rows) {
  out << "r,n_threads,iterations,wall_seconds\n";
  for (const auto& row : rows)
    out << row.rank << ',' << row.n_threads << ',' << row.iterations << ','
        << fmt(row.wall_seconds) << '\n';
}

std::vector<ScalingRow> scaling_report(const SparseMatrixd& v, const std::vector<int>& r_values,
                                       const std::vector<int>& n_threads_values, int iters,
                                       const NmfConfig<double>& base,
                                       const std::filesystem::path& out_dir) {
  if (r_values.empty() || n_threads_values.empty())
    throw std::invalid_argument("scaling_report: rank and thread lists must be nonempty");
  if (iters < 0) throw std::invalid_argument("scaling_report: iterations must be >= 0");
  std::vector<ScalingRow> rows;
  for (const int r : r_values) {
    for (const int threads : n_threads_values) {
      NmfConfig<double> cfg = base;
      cfg.rank = r;
      cfg.n_workers = threads;
      cfg.max_outer_iters = iters;
      cfg.check_convergence = false;
      const auto result = factorize(v, cfg);
      rows.push_back({r, threads, result.solve_seconds, result.iterations_run});
    }
  }
  std::filesystem::create_directories(out_dir);
  auto csv = open_out(out_dir / "scaling.csv");
  write_scaling_csv(csv, rows);
  return rows;
}

std::vector<ScalingRow> scaling_report(const SyntheticSpec& spec, const std::vector<int>& r_values,
                                       const std::vector<int>& n_threads_values, int iters,
                                       const NmfConfig<double>& base,
                                       const std::filesystem::path& out_dir) {
  return scaling_report(synthesize(spec), r_values, n_threads_values, iters, base, out_dir);
}

}  // namespace klnmf::bench
