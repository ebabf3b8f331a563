#pragma once

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <limits>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "json.hpp"

#include "gmix/ccs.hpp"
#include "gmix/diagnostics.hpp"
#include "gmix/io/container.hpp"
#include "gmix/io/csv.hpp"
#include "gmix/map_approx.hpp"
#include "gmix/mixing_posterior.hpp"
#include "gmix/problems/experiments.hpp"
#include "gmix/reduction.hpp"
#include "gmix/rto.hpp"

namespace gmix::pipeline {

namespace fs = std::filesystem;
using nlohmann::json;

enum class Method { Reference, CcsW, CcsX, MapW, MapX };

inline const char* to_string(Method m) {
  switch (m) {
    case Method::Reference:
      return "reference";
    case Method::CcsW:
      return "ccs-w";
    case Method::CcsX:
      return "ccs-x";
    case Method::MapW:
      return "map-w";
    case Method::MapX:
      return "map-x";
  }
  return "unknown";
}

inline Method parse_method(const std::string& s) {
  for (Method m : {Method::Reference, Method::CcsW, Method::CcsX, Method::MapW, Method::MapX})
    if (s == to_string(m)) return m;
  throw ConfigError("unknown method '" + s + "' (expected reference, ccs-w, ccs-x, map-w or map-x)");
}

inline bool is_ccs(Method m) { return m == Method::CcsW || m == Method::CcsX; }

struct RunConfig {
  std::string experiment;  // toy | deblur1d | storm2d
  std::string preset;      // toy | deblur-small | deblur | storm-small | storm
  Method method = Method::CcsW;
  std::optional<Index> r;
  std::optional<double> tau;
  std::optional<Index> r_max;
  Index n_samples = 1000;
  Index n_chains = 5;
  double burn_in = 0.2;  // fraction of n_samples discarded before recording
  std::optional<std::uint64_t> seed;
  std::size_t workers = 1;
  Index diagnostic_samples = 1000;
  std::string init = "mode";        // mode | prior
  std::string rto_solver = "cgls";  // cgls | cholesky
  std::vector<double> ci_levels{0.6, 0.9, 0.99};
  std::string out_dir;
};

inline const std::map<std::string, std::string>& preset_experiments() {
  static const std::map<std::string, std::string> m{{"toy", "toy"},
                                                    {"deblur-small", "deblur1d"},
                                                    {"deblur", "deblur1d"},
                                                    {"storm-small", "storm2d"},
                                                    {"storm", "storm2d"}};
  return m;
}

/// Fill in experiment/preset from each other and check every field.
inline RunConfig normalized(RunConfig c) {
  const auto& presets = preset_experiments();
  if (c.preset.empty()) {
    if (c.experiment == "toy") c.preset = "toy";
    else if (c.experiment == "deblur1d") c.preset = "deblur";
    else if (c.experiment == "storm2d") c.preset = "storm";
    else if (c.experiment.empty()) throw ConfigError("either experiment or preset is required");
    else throw ConfigError("unknown experiment '" + c.experiment + "' (expected toy, deblur1d or storm2d)");
  }
  const auto it = presets.find(c.preset);
  if (it == presets.end()) throw ConfigError("unknown preset '" + c.preset + "'");
  if (!c.experiment.empty() && c.experiment != it->second)
    throw ConfigError("preset '" + c.preset + "' belongs to experiment " + it->second + ", not " + c.experiment);
  c.experiment = it->second;

  if (!c.seed) throw ConfigError("a seed is required");
  if (is_ccs(c.method)) {
    const bool by_rank = c.r.has_value();
    const bool by_tau = c.tau.has_value() || c.r_max.has_value();
    if (by_rank == by_tau) throw ConfigError("CCS methods need either r or (tau, r_max), not both");
    if (by_tau && !(c.tau && c.r_max)) throw ConfigError("tau and r_max must be given together");
    if (by_rank && *c.r < 1) throw ConfigError("r must be at least 1");
    if (c.r_max && *c.r_max < 1) throw ConfigError("r_max must be at least 1");
    if (c.tau && !(*c.tau >= 0.0)) throw ConfigError("tau must be non-negative");
    if (c.diagnostic_samples < 1) throw ConfigError("diagnostic_samples must be positive");
  } else if (c.r || c.tau || c.r_max) {
    throw ConfigError(std::string("r, tau and r_max apply to CCS methods only, not ") + to_string(c.method));
  }
  if (c.n_samples < 10) throw ConfigError("n_samples must be at least 10");
  if (c.n_chains < 1) throw ConfigError("n_chains must be at least 1");
  if (!(c.burn_in >= 0.0 && c.burn_in < 10.0)) throw ConfigError("burn_in fraction must lie in [0, 10)");
  if (c.init != "mode" && c.init != "prior") throw ConfigError("init must be 'mode' or 'prior'");
  if (c.rto_solver != "cgls" && c.rto_solver != "cholesky") throw ConfigError("rto_solver must be 'cgls' or 'cholesky'");
  if (c.ci_levels.empty()) throw ConfigError("at least one credible level is required");
  for (double l : c.ci_levels)
    if (!(l > 0.0 && l < 1.0)) throw ConfigError("credible levels must lie in (0, 1)");
  return c;
}

inline json to_json(const RunConfig& c) {
  json j;
  j["experiment"] = c.experiment;
  j["preset"] = c.preset;
  j["method"] = to_string(c.method);
  j["r"] = c.r ? json(*c.r) : json(nullptr);
  j["tau"] = c.tau ? json(*c.tau) : json(nullptr);
  j["r_max"] = c.r_max ? json(*c.r_max) : json(nullptr);
  j["n_samples"] = c.n_samples;
  j["n_chains"] = c.n_chains;
  j["burn_in"] = c.burn_in;
  j["seed"] = c.seed ? json(*c.seed) : json(nullptr);
  j["workers"] = c.workers;
  j["diagnostic_samples"] = c.diagnostic_samples;
  j["init"] = c.init;
  j["rto_solver"] = c.rto_solver;
  j["ci_levels"] = c.ci_levels;
  j["out_dir"] = c.out_dir;
  return j;
}

/// Parse a config document; unknown keys are rejected.
inline RunConfig config_from_json(const json& j) {
  if (!j.is_object()) throw ConfigError("config must be a JSON object");
  static const std::set<std::string> keys{"experiment", "preset",  "method",    "r",        "tau",
                                          "r_max",      "n_samples", "n_chains", "burn_in", "seed",
                                          "workers",    "diagnostic_samples", "init", "rto_solver",
                                          "ci_levels",  "out_dir"};
  for (const auto& [k, v] : j.items())
    if (!keys.count(k)) throw ConfigError("unknown config key '" + k + "'");
  RunConfig c;
  try {
    if (j.contains("experiment")) c.experiment = j["experiment"].get<std::string>();
    if (j.contains("preset")) c.preset = j["preset"].get<std::string>();
    if (j.contains("method")) c.method = parse_method(j["method"].get<std::string>());
    if (j.contains("r") && !j["r"].is_null()) c.r = j["r"].get<Index>();
    if (j.contains("tau") && !j["tau"].is_null()) c.tau = j["tau"].get<double>();
    if (j.contains("r_max") && !j["r_max"].is_null()) c.r_max = j["r_max"].get<Index>();
    if (j.contains("n_samples")) c.n_samples = j["n_samples"].get<Index>();
    if (j.contains("n_chains")) c.n_chains = j["n_chains"].get<Index>();
    if (j.contains("burn_in")) c.burn_in = j["burn_in"].get<double>();
    if (j.contains("seed") && !j["seed"].is_null()) c.seed = j["seed"].get<std::uint64_t>();
    if (j.contains("workers")) c.workers = j["workers"].get<std::size_t>();
    if (j.contains("diagnostic_samples")) c.diagnostic_samples = j["diagnostic_samples"].get<Index>();
    if (j.contains("init")) c.init = j["init"].get<std::string>();
    if (j.contains("rto_solver")) c.rto_solver = j["rto_solver"].get<std::string>();
    if (j.contains("ci_levels")) c.ci_levels = j["ci_levels"].get<std::vector<double>>();
    if (j.contains("out_dir")) c.out_dir = j["out_dir"].get<std::string>();
  } catch (const json::exception& e) {
    throw ConfigError(std::string("bad config value: ") + e.what());
  }
  return c;
}

/// Build the problem named by a normalized config.
inline Experiment build_problem(const RunConfig& c) {
  const std::uint64_t seed = *c.seed;
  if (c.preset == "toy") return build_toy();
  if (c.preset == "deblur") return build_deblurring(seed);
  if (c.preset == "deblur-small") return build_deblurring(seed, DeblurSize{256, 8, 0.03});
  if (c.preset == "storm") return build_storm(seed);
  if (c.preset == "storm-small") {
    StormSize s;
    s.coarse_side = 16;
    s.oversampling = 2;
    s.molecules = 10;
    return build_storm(seed, s);
  }
  throw ConfigError("unknown preset '" + c.preset + "'");
}

namespace detail {

template <typename E>
[[noreturn]] void rethrow_with(const std::string& prefix, const E& e) {
  throw E(prefix + e.what());
}

}  // namespace detail

/// Run `f`, re-raising library errors with the stage name prepended (type preserved).
template <typename F>
auto in_stage(const std::string& stage, F&& f) -> decltype(f()) {
  const std::string p = "[" + stage + "] ";
  try {
    return f();
  } catch (const FormatError&) {
    throw;
  } catch (const IoError& e) {
    detail::rethrow_with(p, e);
  } catch (const ConfigError& e) {
    detail::rethrow_with(p, e);
  } catch (const ArgError& e) {
    detail::rethrow_with(p, e);
  } catch (const ShapeError& e) {
    detail::rethrow_with(p, e);
  } catch (const InitError& e) {
    detail::rethrow_with(p, e);
  } catch (const DivergenceError& e) {
    detail::rethrow_with(p, e);
  } catch (const FeasibilityError& e) {
    detail::rethrow_with(p, e);
  } catch (const OptimError& e) {
    detail::rethrow_with(p, e);
  } catch (const NumericalError& e) {
    detail::rethrow_with(p, e);
  } catch (const DomainError& e) {
    detail::rethrow_with(p, e);
  } catch (const SupportError& e) {
    detail::rethrow_with(p, e);
  }
}

/// Everything needed to rebuild a report, as held in memory or on disk.
struct RunMeta {
  std::string experiment;
  std::string preset;
  std::string method;
  std::uint64_t seed = 0;
  Index d = 0;
  Index n_chains = 0;
  Index n_samples = 0;
  std::vector<double> ci_levels;
  std::vector<std::string> roles;
  std::map<std::string, double> timings;
  std::vector<double> acceptance;
  std::vector<double> step_size;
  Index map_nnz = -1;
};

struct ChainData {
  std::map<std::string, std::vector<Mat>> roles;  // each chain: n x N
  std::vector<Index> selected;                    // coordinate set I (may be empty)
  Vec h;                                          // diagnostic vector (CCS only)
};

struct RoleStats {
  double mean_ness = 0.0;
  double max_epsr = std::numeric_limits<double>::quiet_NaN();
  bool operator==(const RoleStats& o) const {
    return mean_ness == o.mean_ness && (max_epsr == o.max_epsr || (std::isnan(max_epsr) && std::isnan(o.max_epsr)));
  }
};

struct RunReport {
  RunMeta meta;
  Index rank = -1;
  std::vector<Index> selected;
  Vec mean;                    // posterior mean of x
  std::vector<Interval> ci;    // one per meta.ci_levels
  Vec ness_x;                  // per coordinate of x
  Vec epsr_x;                  // per coordinate of x (NaN with one chain)
  std::map<std::string, RoleStats> roles;  // "w_I", "x_I", "x"
  Vec epsilon;                 // epsilon(r) curve, r = 1..d (CCS only)
  double epsilon_at_rank = std::numeric_limits<double>::quiet_NaN();
};

namespace detail {

inline double mean_over(const Vec& v, const std::vector<Index>& idx) {
  if (idx.empty()) return v.mean();
  double s = 0.0;
  for (Index i : idx) s += v(i);
  return s / static_cast<double>(idx.size());
}

inline double max_over(const Vec& v, const std::vector<Index>& idx) {
  if (idx.empty()) return v.maxCoeff();
  double s = -std::numeric_limits<double>::infinity();
  for (Index i : idx) s = std::max(s, v(i));
  return s;
}

inline Vec nan_vec(Index n) { return Vec::Constant(n, std::numeric_limits<double>::quiet_NaN()); }

}  // namespace detail

/// Recompute every statistic from chains plus metadata.
inline RunReport assemble_report(const ChainData& data, const RunMeta& meta) {
  RunReport rep;
  rep.meta = meta;
  rep.selected = data.selected;
  rep.rank = data.selected.empty() ? -1 : static_cast<Index>(data.selected.size());
  const auto xit = data.roles.find("x");
  if (xit == data.roles.end() || xit->second.empty()) throw FormatError("run has no x chains", 0);
  const auto& xs = xit->second;
  const bool multi = xs.size() >= 2;
  Mat pooled(xs.front().rows(), 0);
  {
    Index total = 0;
    for (const auto& c : xs) total += c.cols();
    pooled.resize(xs.front().rows(), total);
    Index off = 0;
    for (const auto& c : xs) {
      pooled.middleCols(off, c.cols()) = c;
      off += c.cols();
    }
  }
  rep.mean = pooled.rowwise().mean();
  for (double l : meta.ci_levels) rep.ci.push_back(credible_interval(pooled, l));
  rep.ness_x = ness(xs);
  rep.epsr_x = multi ? epsr(xs) : detail::nan_vec(pooled.rows());

  rep.roles["x"] = {rep.ness_x.mean(), multi ? rep.epsr_x.maxCoeff() : std::numeric_limits<double>::quiet_NaN()};
  if (!data.selected.empty())
    rep.roles["x_I"] = {detail::mean_over(rep.ness_x, data.selected),
                        multi ? detail::max_over(rep.epsr_x, data.selected) : std::numeric_limits<double>::quiet_NaN()};
  const auto wit = data.roles.find("w_I");
  if (wit != data.roles.end() && !wit->second.empty()) {
    const Vec nw = ness(wit->second);
    rep.roles["w_I"] = {nw.mean(), wit->second.size() >= 2 ? epsr(wit->second).maxCoeff()
                                                           : std::numeric_limits<double>::quiet_NaN()};
  }
  if (data.h.size() > 0) {
    rep.epsilon = epsilon_curve(data.h);
    if (rep.rank >= 1) rep.epsilon_at_rank = rep.epsilon(rep.rank - 1);
  }
  return rep;
}

struct RunResult {
  RunReport report;
  ChainData chains;
};

namespace detail {

inline Mat prior_w_samples(const Vec& rates, Index n, std::uint64_t seed) {
  Rng rng = make_rng(seed, "diagnostic-prior");
  return exponential_sample(rates, n, rng);
}

inline Mat prior_x_samples(const Vec& delta, Index n, std::uint64_t seed) {
  Rng rng = make_rng(seed, "diagnostic-prior");
  Mat out(delta.size(), n);
  for (Index j = 0; j < n; ++j) out.col(j) = laplace_sample(delta, rng);
  return out;
}

inline SplitResult choose_split(const RunConfig& c, const Diagnostic& diag) {
  if (c.r) {
    if (*c.r > diag.h.size())
      throw ConfigError("r = " + std::to_string(*c.r) + " exceeds the dimension " + std::to_string(diag.h.size()));
    return split_by_rank(diag, *c.r);
  }
  return split_by_diagnostic(diag, *c.tau, *c.r_max);
}

inline std::vector<Mat> rows_of(const std::vector<Mat>& chains, const std::vector<Index>& idx) {
  std::vector<Mat> out;
  for (const auto& c : chains) {
    Mat m(static_cast<Index>(idx.size()), c.cols());
    for (std::size_t k = 0; k < idx.size(); ++k) m.row(static_cast<Index>(k)) = c.row(idx[k]);
    out.push_back(std::move(m));
  }
  return out;
}

class Stopwatch {
 public:
  Stopwatch() : t0_(std::chrono::steady_clock::now()) {}
  double seconds() const { return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0_).count(); }

 private:
  std::chrono::steady_clock::time_point t0_;
};

}  // namespace detail

/// Diagnostic h for the selected method's variable (w for ccs-w, x for ccs-x).
inline Diagnostic compute_diagnostic(const RunConfig& cfg, const Experiment& ex, const WSpaceEvaluator& ev) {
  if (cfg.method == Method::CcsX)
    return estimate_diagnostic_x(*ex.model, ex.prior, detail::prior_x_samples(ex.prior.rates(), cfg.diagnostic_samples, *cfg.seed));
  return estimate_diagnostic_w(ev, detail::prior_w_samples(ev.rates(), cfg.diagnostic_samples, *cfg.seed),
                               DiagnosticSource::Prior, cfg.workers);
}

inline void write_run(const fs::path& dir, const RunConfig& cfg, const RunReport& rep, const ChainData& data);

/// Execute the configured pipeline end to end. Artifacts are written when out_dir is set.
inline RunResult run(RunConfig cfg_in) {
  const RunConfig cfg = normalized(std::move(cfg_in));
  const std::uint64_t seed = *cfg.seed;
  detail::Stopwatch total;
  RunMeta meta;
  meta.experiment = cfg.experiment;
  meta.preset = cfg.preset;
  meta.method = to_string(cfg.method);
  meta.seed = seed;
  meta.n_chains = cfg.n_chains;
  meta.n_samples = cfg.n_samples;
  meta.ci_levels = cfg.ci_levels;

  detail::Stopwatch sw;
  Experiment ex = in_stage("build", [&] { return build_problem(cfg); });
  meta.timings["build"] = sw.seconds();
  const LinearGaussianModel& model = *ex.model;
  meta.d = model.d();
  const WSpaceEvaluator ev(model, ex.prior.mixing_rates());
  RtoOptions ropt;
  ropt.solver = cfg.rto_solver == "cholesky" ? RtoSolver::Cholesky : RtoSolver::Cgls;
  const LinearRto rto(model, ropt);

  ChainConfig cc;
  cc.mala.n_chains = cfg.n_chains;
  cc.mala.n_samples = cfg.n_samples;
  cc.mala.burn_in = static_cast<Index>(std::llround(cfg.burn_in * static_cast<double>(cfg.n_samples)));
  cc.mala.seed = seed;
  cc.mala.workers = cfg.workers;
  cc.init = cfg.init == "prior" ? InitPolicy::Prior : InitPolicy::Mode;

  ChainData data;
  std::vector<Mat> w_chains;
  std::optional<CoordinateSplit> split;

  if (is_ccs(cfg.method)) {
    sw = {};
    const Diagnostic diag = in_stage("diagnostic", [&] { return compute_diagnostic(cfg, ex, ev); });
    data.h = diag.h;
    split = in_stage("selection", [&] { return detail::choose_split(cfg, diag).split; });
    data.selected = split->selected();
    meta.timings["diagnostic"] = sw.seconds();
  }

  sw = {};
  switch (cfg.method) {
    case Method::Reference: {
      auto res = in_stage("mixing", [&] { return reference_w_sampler(ev, cc); });
      meta.acceptance = res.reduced.acceptance;
      meta.step_size = res.reduced.step_size;
      w_chains = std::move(res.w);
      split = CoordinateSplit::full(model.d());
      data.selected = split->selected();
      break;
    }
    case Method::CcsW: {
      auto res = in_stage("mixing", [&] { return ccs_w_sampler(ev, *split, cc); });
      meta.acceptance = res.reduced.acceptance;
      meta.step_size = res.reduced.step_size;
      w_chains = std::move(res.w);
      break;
    }
    case Method::CcsX: {
      auto res = in_stage("sampling", [&] { return ccs_x_sampler(model, ex.prior, *split, cc); });
      meta.acceptance = res.reduced.acceptance;
      meta.step_size = res.reduced.step_size;
      data.roles["x"] = std::move(res.x);
      break;
    }
    case Method::MapW: {
      const MapApprox approx = in_stage("map", [&] { return map_w_approx(ev); });
      meta.map_nnz = approx.split.rank();
      split = approx.split;
      data.selected = split->selected();
      in_stage("mixing", [&] {
        for (Index c = 0; c < cfg.n_chains; ++c) {
          Rng rng = make_rng(seed, "map-w", static_cast<std::uint64_t>(c));
          w_chains.push_back(map_w_sampler(approx, ev.rates(), cfg.n_samples, rng));
        }
      });
      break;
    }
    case Method::MapX: {
      const MapXApprox approx = in_stage("map", [&] { return map_x_approx(model, ex.prior); });
      in_stage("sampling", [&] {
        for (Index c = 0; c < cfg.n_chains; ++c) {
          Mat x(model.d(), cfg.n_samples);
          parallel_for(static_cast<std::size_t>(cfg.n_samples), cfg.workers, [&](std::size_t j) {
            Rng rng = make_rng(seed, "map-x", static_cast<std::uint64_t>(c * cfg.n_samples) + j);
            x.col(static_cast<Index>(j)) = map_x_sample(rto, approx, rng);
          });
          data.roles["x"].push_back(std::move(x));
        }
      });
      break;
    }
  }
  meta.timings["mixing"] = sw.seconds();

  if (!w_chains.empty()) {
    sw = {};
    data.roles["x"] = in_stage("components", [&] { return sample_components(rto, w_chains, seed, cfg.workers); });
    meta.timings["components"] = sw.seconds();
    if (!data.selected.empty()) data.roles["w_I"] = detail::rows_of(w_chains, data.selected);
  }
  for (const auto& [role, chains] : data.roles) meta.roles.push_back(role);

  sw = {};
  RunResult out;
  out.report = in_stage("report", [&] { return assemble_report(data, meta); });
  meta.timings["report"] = sw.seconds();
  meta.timings["total"] = total.seconds();
  out.report.meta.timings = meta.timings;
  out.chains = std::move(data);
  if (!cfg.out_dir.empty()) in_stage("write", [&] { write_run(cfg.out_dir, cfg, out.report, out.chains); });
  return out;
}

// ---------------------------------------------------------------------------
// Persistence

inline json meta_to_json(const RunMeta& m) {
  json j;
  j["experiment"] = m.experiment;
  j["preset"] = m.preset;
  j["method"] = m.method;
  j["seed"] = m.seed;
  j["d"] = m.d;
  j["n_chains"] = m.n_chains;
  j["n_samples"] = m.n_samples;
  j["ci_levels"] = m.ci_levels;
  j["roles"] = m.roles;
  j["timings"] = m.timings;
  j["acceptance"] = m.acceptance;
  j["step_size"] = m.step_size;
  j["map_nnz"] = m.map_nnz;
  return j;
}

inline RunMeta meta_from_json(const json& j) {
  RunMeta m;
  try {
    m.experiment = j.at("experiment").get<std::string>();
    m.preset = j.at("preset").get<std::string>();
    m.method = j.at("method").get<std::string>();
    m.seed = j.at("seed").get<std::uint64_t>();
    m.d = j.at("d").get<Index>();
    m.n_chains = j.at("n_chains").get<Index>();
    m.n_samples = j.at("n_samples").get<Index>();
    m.ci_levels = j.at("ci_levels").get<std::vector<double>>();
    m.roles = j.at("roles").get<std::vector<std::string>>();
    m.timings = j.at("timings").get<std::map<std::string, double>>();
    m.acceptance = j.at("acceptance").get<std::vector<double>>();
    m.step_size = j.at("step_size").get<std::vector<double>>();
    m.map_nnz = j.at("map_nnz").get<Index>();
  } catch (const json::exception& e) {
    throw FormatError(std::string("bad run metadata: ") + e.what(), 0);
  }
  return m;
}

inline fs::path chain_path(const fs::path& dir, const std::string& role, std::size_t c) {
  return dir / "chains" / (role + "_chain" + std::to_string(c) + ".bin");
}

/// Report tables as CSV under dir/report. Content depends only on chains and the
/// deterministic part of the metadata, so repeated runs give identical files.
inline void write_report(const fs::path& dir, const RunReport& rep) {
  using io::format_double;
  const auto& m = rep.meta;
  const io::CsvMeta head{{"generator", "gmix"},
                         {"experiment", m.experiment},
                         {"preset", m.preset},
                         {"method", m.method},
                         {"seed", std::to_string(m.seed)},
                         {"d", std::to_string(m.d)},
                         {"n_chains", std::to_string(m.n_chains)},
                         {"n_samples", std::to_string(m.n_samples)},
                         {"rank", std::to_string(rep.rank)}};

  std::vector<io::CsvRow> summary;
  summary.push_back({"rank", std::to_string(rep.rank)});
  summary.push_back({"map_nnz", std::to_string(m.map_nnz)});
  summary.push_back({"epsilon_at_rank", format_double(rep.epsilon_at_rank)});
  for (std::size_t c = 0; c < m.acceptance.size(); ++c)
    summary.push_back({"acceptance_chain" + std::to_string(c), format_double(m.acceptance[c])});
  for (std::size_t c = 0; c < m.step_size.size(); ++c)
    summary.push_back({"step_size_chain" + std::to_string(c), format_double(m.step_size[c])});
  io::write_csv(dir / "report" / "summary.csv", head, {"key", "value"}, summary);

  std::vector<io::CsvRow> ness_rows;
  for (const auto& [role, s] : rep.roles) ness_rows.push_back({role, format_double(s.mean_ness), format_double(s.max_epsr)});
  io::write_csv(dir / "report" / "ness.csv", head, {"role", "mean_ness", "max_epsr"}, ness_rows);

  io::CsvRow cols{"coordinate", "mean"};
  for (double l : m.ci_levels) {
    const std::string p = std::to_string(static_cast<int>(std::lround(l * 100)));
    cols.push_back("ci" + p + "_lo");
    cols.push_back("ci" + p + "_hi");
  }
  cols.insert(cols.end(), {"ness", "epsr", "selected"});
  std::vector<char> sel(static_cast<std::size_t>(rep.mean.size()), 0);
  for (Index i : rep.selected) sel[static_cast<std::size_t>(i)] = 1;
  std::vector<io::CsvRow> rows;
  for (Index i = 0; i < rep.mean.size(); ++i) {
    io::CsvRow r{std::to_string(i), format_double(rep.mean(i))};
    for (const auto& iv : rep.ci) {
      r.push_back(format_double(iv.lo(i)));
      r.push_back(format_double(iv.hi(i)));
    }
    r.push_back(format_double(rep.ness_x(i)));
    r.push_back(format_double(rep.epsr_x(i)));
    r.push_back(sel[static_cast<std::size_t>(i)] ? "1" : "0");
    rows.push_back(std::move(r));
  }
  io::write_csv(dir / "report" / "posterior.csv", head, cols, rows);

  if (rep.epsilon.size() > 0) {
    std::vector<io::CsvRow> er;
    for (Index r = 0; r < rep.epsilon.size(); ++r) er.push_back({std::to_string(r + 1), format_double(rep.epsilon(r))});
    io::write_csv(dir / "report" / "epsilon.csv", head, {"r", "epsilon"}, er);
  }
}

inline void write_run(const fs::path& dir, const RunConfig& cfg, const RunReport& rep, const ChainData& data) {
  io::write_bytes(dir / "config.json", to_json(cfg).dump(2) + "\n");
  for (const auto& [role, chains] : data.roles)
    for (std::size_t c = 0; c < chains.size(); ++c) {
      json h{{"role", role}, {"seed", rep.meta.seed}, {"chain", c}, {"method", rep.meta.method},
             {"experiment", rep.meta.experiment}};
      io::write_container(chain_path(dir, role, c), chains[c].transpose(), h);
    }
  if (!data.selected.empty()) {
    Mat s(static_cast<Index>(data.selected.size()), 1);
    for (std::size_t k = 0; k < data.selected.size(); ++k) s(static_cast<Index>(k), 0) = static_cast<double>(data.selected[k]);
    io::write_container(dir / "aux" / "selected.bin", s, {{"role", "selected"}, {"seed", rep.meta.seed}});
  }
  if (data.h.size() > 0)
    io::write_container(dir / "aux" / "diagnostic.bin", data.h, {{"role", "diagnostic"}, {"seed", rep.meta.seed}});
  io::write_bytes(dir / "run_meta.json", meta_to_json(rep.meta).dump(2) + "\n");
  write_report(dir, rep);
}

/// Read persisted chains and auxiliary arrays of a run directory.
inline ChainData read_chains(const fs::path& dir, const RunMeta& meta) {
  ChainData data;
  for (const auto& role : meta.roles)
    for (Index c = 0; c < meta.n_chains; ++c) {
      const io::Container k = io::read_container(chain_path(dir, role, static_cast<std::size_t>(c)));
      data.roles[role].push_back(k.data.transpose());
    }
  if (fs::exists(dir / "aux" / "selected.bin")) {
    const Mat s = io::read_container(dir / "aux" / "selected.bin").data;
    for (Index k = 0; k < s.rows(); ++k) data.selected.push_back(static_cast<Index>(s(k, 0)));
  }
  if (fs::exists(dir / "aux" / "diagnostic.bin")) data.h = io::read_container(dir / "aux" / "diagnostic.bin").data.col(0);
  return data;
}

inline RunMeta read_meta(const fs::path& dir) {
  const std::string text = io::read_bytes(dir / "run_meta.json");
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw FormatError(std::string("malformed run_meta.json: ") + e.what(), e.byte);
  }
  return meta_from_json(j);
}

/// Recompute the report of a run directory from its persisted chains.
inline RunReport summarize(const fs::path& dir) {
  const RunMeta meta = read_meta(dir);
  return assemble_report(read_chains(dir, meta), meta);
}

inline bool operator==(const Interval& a, const Interval& b) { return a.lo == b.lo && a.hi == b.hi; }

namespace detail {

inline bool same_vec(const Vec& a, const Vec& b) {
  if (a.size() != b.size()) return false;
  for (Index i = 0; i < a.size(); ++i)
    if (!(a(i) == b(i) || (std::isnan(a(i)) && std::isnan(b(i))))) return false;
  return true;
}

inline bool same_double(double a, double b) { return a == b || (std::isnan(a) && std::isnan(b)); }

}  // namespace detail

/// Field-by-field equality (NaN equals NaN).
inline bool same_report(const RunReport& a, const RunReport& b) {
  const auto& ma = a.meta;
  const auto& mb = b.meta;
  if (ma.experiment != mb.experiment || ma.preset != mb.preset || ma.method != mb.method || ma.seed != mb.seed ||
      ma.d != mb.d || ma.n_chains != mb.n_chains || ma.n_samples != mb.n_samples || ma.ci_levels != mb.ci_levels ||
      ma.roles != mb.roles || ma.timings != mb.timings || ma.acceptance != mb.acceptance ||
      ma.step_size != mb.step_size || ma.map_nnz != mb.map_nnz)
    return false;
  if (a.rank != b.rank || a.selected != b.selected || a.roles != b.roles) return false;
  if (!detail::same_vec(a.mean, b.mean) || !detail::same_vec(a.ness_x, b.ness_x) || !detail::same_vec(a.epsr_x, b.epsr_x) ||
      !detail::same_vec(a.epsilon, b.epsilon) || !detail::same_double(a.epsilon_at_rank, b.epsilon_at_rank))
    return false;
  if (a.ci.size() != b.ci.size()) return false;
  for (std::size_t k = 0; k < a.ci.size(); ++k)
    if (!detail::same_vec(a.ci[k].lo, b.ci[k].lo) || !detail::same_vec(a.ci[k].hi, b.ci[k].hi)) return false;
  return true;
}

/// Side-by-side comparison: a nESS table by role and per-coordinate mean/CI curves.
struct Comparison {
  std::vector<io::CsvRow> ness_rows;   // role, ness_a, ness_b, delta, epsr_a, epsr_b
  std::vector<io::CsvRow> curve_rows;  // coordinate, mean_a, mean_b, delta, lo_a, hi_a, lo_b, hi_b
  double max_abs_delta = 0.0;
};

inline Comparison compare(const RunReport& a, const RunReport& b) {
  using io::format_double;
  if (a.mean.size() != b.mean.size()) throw ArgError("reports have different dimensions");
  Comparison out;
  std::set<std::string> roles;
  for (const auto& [r, s] : a.roles) roles.insert(r);
  for (const auto& [r, s] : b.roles) roles.insert(r);
  const double nan = std::numeric_limits<double>::quiet_NaN();
  for (const auto& role : roles) {
    const auto ia = a.roles.find(role);
    const auto ib = b.roles.find(role);
    const double na = ia != a.roles.end() ? ia->second.mean_ness : nan;
    const double nb = ib != b.roles.end() ? ib->second.mean_ness : nan;
    const double ea = ia != a.roles.end() ? ia->second.max_epsr : nan;
    const double eb = ib != b.roles.end() ? ib->second.max_epsr : nan;
    const double delta = na - nb;
    if (std::isfinite(delta)) out.max_abs_delta = std::max(out.max_abs_delta, std::abs(delta));
    out.ness_rows.push_back({role, format_double(na), format_double(nb), format_double(delta), format_double(ea),
                             format_double(eb)});
  }
  // The widest shared credible level is reported alongside the means.
  const Interval* ca = a.ci.empty() ? nullptr : &a.ci.back();
  const Interval* cb = b.ci.empty() ? nullptr : &b.ci.back();
  for (Index i = 0; i < a.mean.size(); ++i) {
    const double delta = a.mean(i) - b.mean(i);
    out.max_abs_delta = std::max(out.max_abs_delta, std::abs(delta));
    out.curve_rows.push_back({std::to_string(i), format_double(a.mean(i)), format_double(b.mean(i)),
                              format_double(delta), format_double(ca ? ca->lo(i) : nan),
                              format_double(ca ? ca->hi(i) : nan), format_double(cb ? cb->lo(i) : nan),
                              format_double(cb ? cb->hi(i) : nan)});
  }
  return out;
}

inline const io::CsvRow& compare_ness_header() {
  static const io::CsvRow h{"role", "ness_a", "ness_b", "delta", "max_epsr_a", "max_epsr_b"};
  return h;
}

inline const io::CsvRow& compare_curve_header() {
  static const io::CsvRow h{"coordinate", "mean_a", "mean_b", "delta", "lo_a", "hi_a", "lo_b", "hi_b"};
  return h;
}

/// epsilon(r) curve for the configured problem and CCS method.
inline Vec diagnose(RunConfig cfg) {
  if (!is_ccs(cfg.method)) cfg.method = Method::CcsW;
  if (!cfg.r && !cfg.tau && !cfg.r_max) cfg.r = 1;
  cfg = normalized(std::move(cfg));
  const Experiment ex = in_stage("build", [&] { return build_problem(cfg); });
  const WSpaceEvaluator ev(*ex.model, ex.prior.mixing_rates());
  const Diagnostic diag = in_stage("diagnostic", [&] { return compute_diagnostic(cfg, ex, ev); });
  return epsilon_curve(diag.h);
}

/// Process exit code for an error raised anywhere in the pipeline.
inline int exit_code(const std::exception& e) {
  if (dynamic_cast<const IoError*>(&e)) return 4;
  if (dynamic_cast<const ConfigError*>(&e) || dynamic_cast<const ArgError*>(&e) || dynamic_cast<const ShapeError*>(&e))
    return 2;
  if (dynamic_cast<const NumericalError*>(&e) || dynamic_cast<const DomainError*>(&e) ||
      dynamic_cast<const SupportError*>(&e))
    return 3;
  return 1;
}

}  // namespace gmix::pipeline
