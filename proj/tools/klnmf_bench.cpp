// Benchmark driver for KL-NMF solvers.
//
//   klnmf_bench run     --synthetic 500,2000,10,0.99,count --rank 10 --out out/run
//   klnmf_bench race    --input data.mtx --rank 10 --budget 30 --out out/race
//   klnmf_bench scaling --synthetic 500,2000,10,0.99,count --ranks 10,20,40 --thread-list 1 --out out/scale
//
// Exit codes: 0 success, 1 usage error, 2 runtime error.

#include <cstdio>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "klnmf/bench.hpp"

namespace {

struct Options {
  std::string input;
  std::string synthetic;
  int rank = 10;
  double alpha1 = 0, alpha2 = 0, beta1 = 0, beta2 = 0;
  int max_iters = 100;
  double tol = 1e-6;
  double eps_x = 0.1;
  double eps_grad = 1e-10;
  int threads = 1;
  std::uint64_t seed = 42;
  std::string algorithm = "srcd";
  std::string out = "klnmf_out";
  double budget = 30.0;
  std::vector<int> ranks{10, 20, 40};
  std::vector<int> thread_list{1, 2, 4};
};

void add_common(CLI::App* app, Options& o) {
  auto* input = app->add_option("--input", o.input, "MatrixMarket file (coordinate real general)");
  auto* synth = app->add_option("--synthetic", o.synthetic, "n,m,r,sparsity,model (model: count|tfidf)");
  input->excludes(synth);
  app->add_option("--rank", o.rank, "latent factor count r")->check(CLI::PositiveNumber);
  app->add_option("--alpha1", o.alpha1, "L2 weight on W")->check(CLI::NonNegativeNumber);
  app->add_option("--alpha2", o.alpha2, "L2 weight on F")->check(CLI::NonNegativeNumber);
  app->add_option("--beta1", o.beta1, "L1 weight on W")->check(CLI::NonNegativeNumber);
  app->add_option("--beta2", o.beta2, "L1 weight on F")->check(CLI::NonNegativeNumber);
  app->add_option("--max-iters", o.max_iters, "outer iteration cap")->check(CLI::NonNegativeNumber);
  app->add_option("--tol", o.tol, "relative objective decrease tolerance")->check(CLI::NonNegativeNumber);
  app->add_option("--eps-x", o.eps_x, "relative step cutoff of the inner loop");
  app->add_option("--eps-grad", o.eps_grad, "gradient tolerance of the inner loop");
  app->add_option("--threads", o.threads, "worker threads")->check(CLI::PositiveNumber);
  app->add_option("--seed", o.seed, "RNG seed");
  app->add_option("--out", o.out, "output directory");
}

klnmf::NmfConfigd make_config(const Options& o) {
  klnmf::NmfConfigd cfg;
  cfg.rank = o.rank;
  cfg.reg = {o.alpha1, o.alpha2, o.beta1, o.beta2};
  cfg.max_outer_iters = o.max_iters;
  cfg.rel_obj_tol = o.tol;
  cfg.tolerances.eps_x = o.eps_x;
  cfg.tolerances.eps_grad = o.eps_grad;
  cfg.n_workers = o.threads;
  cfg.seed = o.seed;
  cfg.validate();
  return cfg;
}

klnmf::bench::Dataset make_dataset(const Options& o) {
  if (!o.input.empty()) return std::filesystem::path(o.input);
  if (!o.synthetic.empty()) return klnmf::bench::parse_synthetic(o.synthetic, o.seed);
  throw CLI::ValidationError("one of --input or --synthetic is required");
}

void print(const klnmf::bench::ExperimentSummary& s) {
  std::printf("%-5s iterations=%d kl=%.10g total=%.10g sparsity(W,F)=(%.4f,%.4f) solve=%.3fs peak=%zuB\n",
              klnmf::bench::to_string(s.algorithm).c_str(), s.iterations, s.final_kl, s.final_total,
              s.sparsity_w, s.sparsity_f, s.solve_seconds, s.peak_accounted_bytes);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Sparse randomized coordinate descent for KL-NMF: experiments and baselines"};
  app.require_subcommand(1);
  Options o;

  auto* run = app.add_subcommand("run", "factorize once and write log.csv, factors and summary.json");
  add_common(run, o);
  run->add_option("--algorithm", o.algorithm, "srcd or mu")->check(CLI::IsMember({"srcd", "mu"}));

  auto* race = app.add_subcommand("race", "srcd vs mu from shared initial factors under a time budget");
  add_common(race, o);
  race->add_option("--budget", o.budget, "solve-time budget per algorithm, seconds")
      ->check(CLI::NonNegativeNumber);

  auto* scaling = app.add_subcommand("scaling", "fixed-iteration timings over ranks and thread counts");
  add_common(scaling, o);
  scaling->add_option("--ranks", o.ranks, "comma-separated ranks")->delimiter(',');
  scaling->add_option("--thread-list", o.thread_list, "comma-separated thread counts")->delimiter(',');

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  klnmf::NmfConfigd cfg;
  klnmf::bench::Dataset dataset;
  try {
    cfg = make_config(o);
    dataset = make_dataset(o);
  } catch (const std::exception& e) {
    std::cerr << "usage error: " << e.what() << '\n';
    return 1;
  }

  try {
    if (run->parsed()) {
      print(klnmf::bench::run_experiment(dataset, klnmf::bench::parse_algorithm(o.algorithm), cfg, o.out));
    } else if (race->parsed()) {
      const auto result = klnmf::bench::race(dataset, cfg, o.budget, o.out);
      print(result.srcd);
      print(result.mu);
    } else if (scaling->parsed()) {
      const auto v = klnmf::bench::load_dataset(dataset);
      const auto rows = klnmf::bench::scaling_report(v, o.ranks, o.thread_list, o.max_iters, cfg, o.out);
      klnmf::bench::write_scaling_csv(std::cout, rows);
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
  return 0;
}
