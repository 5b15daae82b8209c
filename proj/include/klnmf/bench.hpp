#ifndef KLNMF_BENCH_HPP
#define KLNMF_BENCH_HPP

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <variant>
#include <vector>

#include "klnmf/alternating_solver.hpp"
#include "klnmf/sparse_matrix.hpp"

namespace klnmf::bench {

enum class ValueModel { kCountPoisson, kTfidfLike };

/// Planted low-rank data at a requested matrix sparsity.
struct SyntheticSpec {
  Index n = 0;
  Index m = 0;
  int r_true = 1;
  double sparsity = 0.99;
  ValueModel model = ValueModel::kCountPoisson;
  std::uint64_t seed = 1;
  /// Fraction of exact zeros in each planted factor.
  double factor_sparsity = 0.5;

  void validate() const;
};

/// Parses "n,m,r,sparsity,model" with model in {count, tfidf}.
SyntheticSpec parse_synthetic(const std::string& text, std::uint64_t seed);

/// Each column receives round((1 - sparsity) n m) / m stored rows (the
/// remainder spread over random columns), sampled without replacement with
/// probability proportional to the planted intensity W*^T F*. Values are
/// 1 + Poisson(intensity) draws for the count model and log-normally
/// perturbed intensities for the tf-idf model.
SparseMatrixd synthesize(const SyntheticSpec& spec);

using Dataset = std::variant<std::filesystem::path, SyntheticSpec>;
SparseMatrixd load_dataset(const Dataset& dataset);
std::string describe(const Dataset& dataset);

enum class Algorithm { kSrcd, kMu };
Algorithm parse_algorithm(const std::string& name);
std::string to_string(Algorithm algorithm);

// Convergence log CSV: fixed header, '.' decimal separator, shortest
// round-trip formatting of doubles.
void write_log_csv(std::ostream& out, const ConvergenceLog& log);
ConvergenceLog read_log_csv(std::istream& in);
void save_log_csv(const std::filesystem::path& path, const ConvergenceLog& log);
ConvergenceLog load_log_csv(const std::filesystem::path& path);

/// Hash of the raw bytes of both factors (FNV-1a, 64 bit).
std::uint64_t hash_factors(const FactorPaird& factors);

struct ExperimentSummary {
  Algorithm algorithm = Algorithm::kSrcd;
  Index n = 0, m = 0, nnz = 0;
  int rank = 0;
  int iterations = 0;
  bool converged = false;
  double initial_kl = 0;
  double final_kl = 0;
  double final_total = 0;
  double sparsity_w = 0;
  double sparsity_f = 0;
  double solve_seconds = 0;
  double wall_seconds = 0;
  std::size_t peak_accounted_bytes = 0;
  /// Bytes of V's CSC arrays + factor arrays + worker Ax buffers.
  std::size_t reference_bytes = 0;
  std::uint64_t initial_hash = 0;
};

void write_summary_json(const std::filesystem::path& path, const ExperimentSummary& s);

/// Runs one solver and writes log.csv, W.mtx, W.tsv, F.mtx, F.tsv and
/// summary.json into out_dir (created when missing).
ExperimentSummary run_experiment(const Dataset& dataset, Algorithm algorithm,
                                 const NmfConfig<double>& cfg,
                                 const std::filesystem::path& out_dir);
ExperimentSummary run_experiment(const SparseMatrixd& v, Algorithm algorithm,
                                 const NmfConfig<double>& cfg,
                                 const std::filesystem::path& out_dir);

struct RaceRow {
  Algorithm algorithm;
  int iteration;
  double elapsed_seconds;
  double kl_objective;
  double total_objective;
};

struct RaceResult {
  ExperimentSummary srcd;
  ExperimentSummary mu;
  std::vector<RaceRow> rows;
};

/// SRCD and MU from the same initial factors, each with `budget_seconds` of
/// solve time. Writes race.csv plus a subdirectory per algorithm.
RaceResult race(const Dataset& dataset, NmfConfig<double> cfg, double budget_seconds,
                const std::filesystem::path& out_dir);
RaceResult race(const SparseMatrixd& v, NmfConfig<double> cfg, double budget_seconds,
                const std::filesystem::path& out_dir);
void write_race_csv(std::ostream& out, const std::vector<RaceRow>& rows);

struct ScalingRow {
  int rank;
  int n_threads;
  double wall_seconds;
  int iterations;
};

/// Fixed-iteration SRCD timings over the rank x thread grid. Writes scaling.csv.
std::vector<ScalingRow> scaling_report(const SparseMatrixd& v, const std::vector<int>& r_values,
                                       const std::vector<int>& n_threads_values, int iters,
                                       const NmfConfig<double>& base,
                                       const std::filesystem::path& out_dir);
std::vector<ScalingRow> scaling_report(const SyntheticSpec& spec, const std::vector<int>& r_values,
                                       const std::vector<int>& n_threads_values, int iters,
                                       const NmfConfig<double>& base,
                                       const std::filesystem::path& out_dir);
void write_scaling_csv(std::ostream& out, const std::vector<ScalingRow>& rows);

}  // namespace klnmf::bench

#endif  // KLNMF_BENCH_HPP
