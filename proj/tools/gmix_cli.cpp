// Command-line runner: gmix run | summarize | compare | diagnose.
#include <filesystem>
#include <iostream>
#include <string>

#include "CLI11.hpp"
#include "json.hpp"

#include "gmix/pipeline.hpp"

namespace fs = std::filesystem;
namespace pl = gmix::pipeline;
using gmix::Index;

namespace {

struct Flags {
  std::string config_file;
  std::string experiment;
  std::string preset;
  std::string method;
  Index r = -1;
  double tau = -1.0;
  Index r_max = -1;
  Index n_samples = -1;
  Index n_chains = -1;
  double burn_in = -1.0;
  std::uint64_t seed = 0;
  std::size_t workers = 0;
  Index diagnostic_samples = -1;
  std::string init;
  std::string rto_solver;
  std::vector<double> ci_levels;
  std::string out;
};

void add_run_flags(CLI::App* app, Flags& f, bool with_out) {
  app->add_option("--config", f.config_file, "JSON config document; flags override its fields");
  app->add_option("--experiment", f.experiment, "toy | deblur1d | storm2d");
  app->add_option("--preset", f.preset, "toy | deblur-small | deblur | storm-small | storm");
  app->add_option("--method", f.method, "reference | ccs-w | ccs-x | map-w | map-x");
  app->add_option("--r", f.r, "number of selected coordinates (CCS)");
  app->add_option("--tau", f.tau, "tolerance on epsilon(r) (CCS, with --r-max)");
  app->add_option("--r-max", f.r_max, "cap on the selected rank (CCS, with --tau)");
  app->add_option("--n-samples", f.n_samples, "retained samples per chain");
  app->add_option("--n-chains", f.n_chains, "number of chains");
  app->add_option("--burn-in", f.burn_in, "burn-in length as a fraction of --n-samples");
  app->add_option("--seed", f.seed, "root random seed")->required();
  app->add_option("--workers", f.workers, "worker threads (0 = hardware concurrency)");
  app->add_option("--diagnostic-samples", f.diagnostic_samples, "prior draws for the CCS diagnostic");
  app->add_option("--init", f.init, "chain initialization: mode | prior");
  app->add_option("--rto-solver", f.rto_solver, "cgls | cholesky");
  app->add_option("--ci-levels", f.ci_levels, "credible levels, e.g. 0.6 0.9 0.99");
  if (with_out) app->add_option("--out", f.out, "output directory");
}

pl::RunConfig to_config(const Flags& f) {
  pl::RunConfig c;
  if (!f.config_file.empty()) {
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(gmix::io::read_bytes(f.config_file));
    } catch (const nlohmann::json::parse_error& e) {
      throw gmix::ConfigError(std::string("cannot parse config: ") + e.what());
    }
    c = pl::config_from_json(j);
  }
  if (!f.experiment.empty()) c.experiment = f.experiment;
  if (!f.preset.empty()) c.preset = f.preset;
  if (!f.method.empty()) c.method = pl::parse_method(f.method);
  if (f.r >= 0) c.r = f.r;
  if (f.tau >= 0.0) c.tau = f.tau;
  if (f.r_max >= 0) c.r_max = f.r_max;
  if (f.n_samples >= 0) c.n_samples = f.n_samples;
  if (f.n_chains >= 0) c.n_chains = f.n_chains;
  if (f.burn_in >= 0.0) c.burn_in = f.burn_in;
  c.seed = f.seed;
  c.workers = f.workers > 0 ? f.workers : c.workers;
  if (f.diagnostic_samples >= 0) c.diagnostic_samples = f.diagnostic_samples;
  if (!f.init.empty()) c.init = f.init;
  if (!f.rto_solver.empty()) c.rto_solver = f.rto_solver;
  if (!f.ci_levels.empty()) c.ci_levels = f.ci_levels;
  if (!f.out.empty()) c.out_dir = f.out;
  return c;
}

void print_report(const pl::RunReport& rep) {
  using gmix::io::format_double;
  std::cout << "experiment " << rep.meta.experiment << " (" << rep.meta.preset << "), method " << rep.meta.method
            << ", seed " << rep.meta.seed << ", d = " << rep.meta.d << "\n";
  if (rep.rank >= 0) std::cout << "rank " << rep.rank << "\n";
  if (rep.meta.map_nnz >= 0) std::cout << "map_nnz " << rep.meta.map_nnz << "\n";
  if (!std::isnan(rep.epsilon_at_rank)) std::cout << "epsilon_at_rank " << format_double(rep.epsilon_at_rank) << "\n";
  for (const auto& [role, s] : rep.roles)
    std::cout << "mean_ness[" << role << "] " << format_double(s.mean_ness) << "  max_epsr "
              << format_double(s.max_epsr) << "\n";
  for (const auto& [k, v] : rep.meta.timings) std::cout << "time[" << k << "] " << format_double(v) << " s\n";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Posterior sampling for linear inverse problems with Gaussian scale-mixture priors"};
  app.require_subcommand(1);

  Flags run_flags;
  auto* run = app.add_subcommand("run", "run a sampling pipeline and write chains and reports");
  add_run_flags(run, run_flags, true);

  std::string sum_dir;
  auto* sum = app.add_subcommand("summarize", "recompute the report of a run directory from its chains");
  sum->add_option("run_dir", sum_dir, "run directory")->required();

  std::string cmp_a, cmp_b, cmp_out;
  auto* cmp = app.add_subcommand("compare", "compare two runs (nESS table and mean/CI curves)");
  cmp->add_option("run_a", cmp_a, "first run directory")->required();
  cmp->add_option("run_b", cmp_b, "second run directory")->required();
  cmp->add_option("--out", cmp_out, "directory for ness.csv and curves.csv (default: print the nESS table)");

  Flags diag_flags;
  auto* diag = app.add_subcommand("diagnose", "print the epsilon(r) curve as CSV");
  add_run_flags(diag, diag_flags, false);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  try {
    if (*run) {
      pl::RunConfig cfg = to_config(run_flags);
      if (cfg.out_dir.empty()) throw gmix::ConfigError("--out is required");
      const auto res = pl::run(cfg);
      print_report(res.report);
    } else if (*sum) {
      const auto rep = pl::summarize(sum_dir);
      pl::write_report(sum_dir, rep);
      print_report(rep);
    } else if (*cmp) {
      const auto c = pl::compare(pl::summarize(cmp_a), pl::summarize(cmp_b));
      const gmix::io::CsvMeta meta{{"generator", "gmix"}, {"run_a", cmp_a}, {"run_b", cmp_b}};
      if (cmp_out.empty()) {
        std::cout << gmix::io::csv_text(meta, pl::compare_ness_header(), c.ness_rows);
      } else {
        gmix::io::write_csv(fs::path(cmp_out) / "ness.csv", meta, pl::compare_ness_header(), c.ness_rows);
        gmix::io::write_csv(fs::path(cmp_out) / "curves.csv", meta, pl::compare_curve_header(), c.curve_rows);
      }
    } else if (*diag) {
      const gmix::Vec eps = pl::diagnose(to_config(diag_flags));
      std::vector<gmix::io::CsvRow> rows;
      for (Index r = 0; r < eps.size(); ++r) rows.push_back({std::to_string(r + 1), gmix::io::format_double(eps(r))});
      std::cout << gmix::io::csv_text({{"generator", "gmix"}, {"seed", std::to_string(diag_flags.seed)}},
                                      {"r", "epsilon"}, rows);
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return pl::exit_code(e);
  }
  return 0;
}
