// qrs — approximate sampling from unnormalized discrete distributions with
// explicit quality/efficiency diagnostics.
//
// Subcommands:
//   poisson-demo   two-Poissons experiment: sweep, trade-off curve, summary
//   sweep          beta sweep over a configured testbed, CSV/JSON output
//   sample         run one sampler and emit points plus a metadata footer
//   mcmc-compare   QRS vs chain samplers at matched efficiency proxies
//   oracle-check   exact-enumeration property battery (exit 1 on any failure)
//
// Exit codes: 0 success, 1 check failure, 2 I/O error, 64 usage error,
// 65 config schema violation. Outputs contain no timestamps: a rerun with
// identical flags and seed produces byte-identical files.

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "qrs/config.hpp"
#include "qrs/estimators.hpp"
#include "qrs/io.hpp"
#include "qrs/log_real.hpp"
#include "qrs/oracle.hpp"
#include "qrs/samplers.hpp"
#include "qrs/sweep.hpp"
#include "qrs/testbeds.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitCheckFailure = 1;
constexpr int kExitIo = 2;
constexpr int kExitUsage = 64;
constexpr int kExitConfig = 65;

struct IoError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path);
  out << content;
  if (!out) throw IoError("cannot write " + path);
}

void write_output(const std::string& path, const std::string& content) {
  if (path.empty() || path == "-")
    std::cout << content;
  else
    write_file(path, content);
}

unsigned thread_count(unsigned flag_value) {
  if (flag_value > 0) return flag_value;
  if (const char* env = std::getenv("QRS_THREADS")) {
    const long v = std::strtol(env, nullptr, 10);
    if (v > 0) return static_cast<unsigned>(v);
  }
  return 1;
}

// ---------------------------------------------------------------------------
// Testbed materialization
// ---------------------------------------------------------------------------

// A categorical-family environment: spaces are held behind stable pointers
// because targets and proposals reference them. The sampling proposal comes
// from proposal_space when set (the constraint-demo pairs an EBM over one
// space's base with an independent imperfect proposal), else from space.
struct CategoricalEnv {
  std::shared_ptr<qrs::CategoricalSpace> space;
  std::shared_ptr<qrs::CategoricalSpace> proposal_space;
  using Prop = qrs::CategoricalSpace::Prop;
  using Ebm = qrs::ConstraintEbm<Prop>;
  std::optional<Ebm> ebm;                       // set for constraint testbeds
  std::optional<qrs::ProjectedProposal<Prop>> projected;
  bool pointwise = false;
  std::vector<qrs::MomentSpec<std::int32_t>> moments;

  Prop sampling_proposal() const {
    return (proposal_space ? *proposal_space : *space).proposal();
  }
};

CategoricalEnv make_categorical_env(const qrs::io::TestbedRef& ref,
                                    const std::string& proposal_source) {
  CategoricalEnv env;
  switch (ref.kind) {
    case qrs::io::TestbedRef::Kind::two_point:
      env.space = std::make_shared<qrs::CategoricalSpace>(qrs::make_two_point_space());
      break;
    case qrs::io::TestbedRef::Kind::categorical:
      env.space = std::make_shared<qrs::CategoricalSpace>(
          qrs::make_random_categorical(ref.positions, ref.symbols, ref.seed, ref.law));
      break;
    case qrs::io::TestbedRef::Kind::constraint_demo: {
      // Built-in toy constraint instance on a 10^4-point space: the EBM
      // tilts a base model hard toward high values of a graded feature, and
      // the sampling proposal is an independent imperfect model. The target
      // stays spread over many points (QRS output is near-unique) while the
      // uneven importance ratios make thinned chains repeat samples.
      env.space = std::make_shared<qrs::CategoricalSpace>(
          qrs::make_random_categorical(4, 10, 11, qrs::WeightLaw::uniform_dirichlet));
      env.proposal_space = std::make_shared<qrs::CategoricalSpace>(
          qrs::make_random_categorical(4, 10, 12, qrs::WeightLaw::uniform_dirichlet));
      auto level = [](const std::int32_t& x) {
        return static_cast<double>((x / 1000) % 10) / 9.0;
      };
      env.ebm.emplace(env.space->proposal(),
                      std::vector<CategoricalEnv::Ebm::Feature>{{"level", level}},
                      std::vector<double>{18.0}, qrs::ConstraintMode::exponential);
      env.moments.push_back({"level", level});
      break;
    }
    case qrs::io::TestbedRef::Kind::constraint_file: {
      const auto spec = qrs::io::parse_constraint_spec(read_file(ref.path));
      env.space = std::make_shared<qrs::CategoricalSpace>(qrs::make_random_categorical(
          spec.positions, spec.symbols, spec.seed, spec.law));
      std::vector<CategoricalEnv::Ebm::Feature> features;
      std::vector<double> lambdas;
      for (const auto& f : spec.features) {
        features.push_back({f.name, qrs::io::make_feature_fn(*env.space, f.kind)});
        env.moments.push_back({f.name, features.back().phi});
        lambdas.push_back(f.lambda);
      }
      env.pointwise = spec.mode == qrs::ConstraintMode::pointwise;
      if (env.pointwise) lambdas.clear();
      env.ebm.emplace(env.space->proposal(), std::move(features), std::move(lambdas), spec.mode);
      break;
    }
    default:
      throw std::invalid_argument("not a categorical-family testbed: " + ref.raw);
  }
  if (env.moments.empty())  // constraint testbeds wire their feature moments
    env.moments.push_back(
        {"mean", [](const std::int32_t& x) { return static_cast<double>(x); }});
  if (proposal_source == "projected") {
    if (!env.ebm || !env.pointwise)
      throw qrs::io::ConfigError(
          "proposal.testbed 'projected' requires a pointwise constraint target",
          {"proposal.testbed"});
    const auto& features = env.ebm->features();
    auto filter = [features](const std::int32_t& x) {
      for (const auto& f : features)
        if (f.phi(x) == 0.0) return 0.0;
      return 1.0;
    };
    env.projected.emplace(
        qrs::make_projected_proposal(env.sampling_proposal(), filter, env.space->space()));
  }
  return env;
}

std::string format_point(const qrs::CategoricalSpace& space, std::int32_t x) {
  const auto digits = space.decode(x);
  std::string out;
  for (std::size_t i = 0; i < digits.size(); ++i) {
    if (i) out += ',';
    out += std::to_string(digits[i]);
  }
  return out;
}

// ---------------------------------------------------------------------------
// sweep
// ---------------------------------------------------------------------------

struct SweepOutputs {
  std::vector<qrs::DiagnosticsRow> rows;
};

template <typename P, typename Q>
SweepOutputs execute_sweep(const qrs::io::RunConfig& cfg, unsigned threads, const P& target,
                           const Q& proposal,
                           std::vector<qrs::MomentSpec<typename Q::point_type>> moments = {},
                           std::function<qrs::LogReal(const typename Q::point_type&)> base = {}) {
  qrs::SweepPlan<typename Q::point_type> plan;
  plan.beta_grid = cfg.beta_grid;
  plan.n_draws = cfg.n_draws;
  plan.replicates = cfg.replicates;
  plan.seed = cfg.seed;
  plan.threads = threads;
  plan.moments = std::move(moments);
  plan.base_log_prob = std::move(base);
  auto report = qrs::run_sweep(plan, target, proposal);
  return {std::move(report.rows)};
}

int cmd_sweep(const std::string& config_path, const std::string& format_override,
              unsigned threads) {
  auto cfg = qrs::io::parse_run_config(read_file(config_path));
  if (!format_override.empty()) cfg.output_format = format_override;

  SweepOutputs out;
  switch (cfg.target.kind) {
    case qrs::io::TestbedRef::Kind::poisson: {
      if (cfg.proposal_source != "paired")
        throw qrs::io::ConfigError(
            "proposal.testbed 'projected' requires a pointwise constraint target",
            {"proposal.testbed"});
      const auto pair = qrs::make_poisson_pair(cfg.target.lambda_p, cfg.target.lambda_q);
      out = execute_sweep(cfg, threads, pair.target, pair.proposal);
      break;
    }
    default: {
      const auto env = make_categorical_env(cfg.target, cfg.proposal_source);
      std::function<qrs::LogReal(const std::int32_t&)> base;
      if (env.ebm) {
        auto space = env.space;
        base = [space](const std::int32_t& x) { return space->proposal().log_prob(x); };
      }
      if (env.ebm && env.projected)
        out = execute_sweep(cfg, threads, *env.ebm, *env.projected, env.moments, base);
      else if (env.ebm)
        out = execute_sweep(cfg, threads, *env.ebm, env.sampling_proposal(), env.moments, base);
      else
        out = execute_sweep(cfg, threads, env.space->target(), env.space->proposal());
      break;
    }
  }
  write_output(cfg.output_path, cfg.output_format == "json" ? qrs::io::to_json(out.rows)
                                                            : qrs::io::to_csv(out.rows));
  return kExitOk;
}

// ---------------------------------------------------------------------------
// poisson-demo
// ---------------------------------------------------------------------------

std::vector<double> poisson_demo_grid() {
  // Linear 0.5 .. 4 step 0.125, then doubling out to 2^17 so the trade-off
  // curve covers acceptance rates from 1 down past 1e-5.
  std::vector<double> grid;
  for (double b = 0.5; b <= 4.0 + 1e-9; b += 0.125) grid.push_back(b);
  for (double b = 8.0; b <= 131072.0 + 1.0; b *= 2.0) grid.push_back(b);
  return grid;
}

int cmd_poisson_demo(double lambda_p, double lambda_q, std::uint64_t num_draws,
                     std::uint64_t replicates, std::uint64_t seed, const std::string& out_dir,
                     bool plot, bool smoke, double threshold_flag, unsigned threads) {
  if (num_draws == 0) throw std::invalid_argument("--num-draws must be positive");
  if (replicates == 0) throw std::invalid_argument("--replicates must be positive");
  double threshold = threshold_flag;
  if (smoke) {
    if (num_draws == 10000000) num_draws = 1000000;
    if (threshold == 0.0) threshold = 1e-3;
  }
  if (threshold == 0.0) threshold = 1e-4;

  const auto pair = qrs::make_poisson_pair(lambda_p, lambda_q);
  qrs::SweepPlan<std::int64_t> plan;
  plan.beta_grid = poisson_demo_grid();
  plan.n_draws = num_draws;
  plan.replicates = replicates;
  plan.seed = seed;
  plan.threads = threads;
  const auto report = qrs::run_sweep(plan, pair.target, pair.proposal);

  const std::string prefix = out_dir.empty() ? "" : out_dir + "/";
  write_file(prefix + "poisson_sweep.csv", qrs::io::to_csv(report.rows));
  write_file(prefix + "poisson_summary.csv", qrs::io::to_csv(report.summary));
  if (report.tradeoff_available && report.tradeoff.isotonic_repairs > 0)
    std::cout << "note: " << report.tradeoff.isotonic_repairs
              << " acceptance-rate values isotonically repaired for the trade-off curve\n";
  if (plot) {
    qrs::io::PlotSeries tvd{"TVD", {}}, kl{"KL", {}};
    for (const auto& p : report.tradeoff.points) {
      tvd.xy.push_back({p.ar, p.tvd});
      kl.xy.push_back({p.ar, p.kl});
    }
    write_file(prefix + "poisson_tradeoff.svg",
               qrs::io::svg_line_plot("quality vs efficiency", "acceptance rate",
                                      "divergence", {tvd, kl}));
  }

  // Per replicate, the row whose estimated AR is nearest 0.25.
  bool all_pass = true;
  double worst = 0.0;
  for (std::uint64_t r = 0; r < replicates; ++r) {
    const qrs::DiagnosticsRow* best = nullptr;
    for (const auto& row : report.rows) {
      if (row.replicate != r) continue;
      if (!best || std::abs(row.ar - 0.25) < std::abs(best->ar - 0.25)) best = &row;
    }
    std::cout << "replicate " << r << ": beta=" << best->beta << " ar=" << best->ar
              << " tvd=" << best->tvd << "\n";
    worst = std::max(worst, best->tvd);
    if (!(best->tvd < threshold)) all_pass = false;
  }
  std::cout << "TVD@AR~0.25 < " << threshold << ": " << (all_pass ? "PASS" : "FAIL")
            << " (max over " << replicates << " replicates: " << worst << ")\n";
  return all_pass ? kExitOk : kExitCheckFailure;
}

// ---------------------------------------------------------------------------
// sample
// ---------------------------------------------------------------------------

struct SampleArgs {
  std::string testbed;
  std::string method;
  std::uint64_t n = 1000;
  double beta = 0.0;
  double min_ar = 0.0;
  std::uint64_t thinning = 1;
  std::uint64_t reset_every = 0;
  std::uint64_t burn_in = 1000;
  std::uint64_t seed = 0;
  std::uint64_t stream = 0;
  std::uint64_t max_draws = 100000000;
  std::string out;
  std::string meta;
};

struct SampleOutput {
  std::vector<std::string> lines;
  std::string metadata_json;
  bool budget_exhausted = false;
};

std::string metadata_json(const SampleArgs& a, double beta_used, double realized_ar,
                          std::uint64_t draws, std::size_t emitted, bool certified,
                          bool budget_exhausted) {
  std::ostringstream out;
  out << "{\n";
  out << "  \"method\": \"" << a.method << "\",\n";
  out << "  \"testbed\": \"" << a.testbed << "\",\n";
  out << "  \"beta_used\": " << qrs::io::format_double(beta_used) << ",\n";
  out << "  \"realized_ar\": " << qrs::io::format_double(realized_ar) << ",\n";
  out << "  \"proposal_draws\": " << draws << ",\n";
  out << "  \"samples\": " << emitted << ",\n";
  out << "  \"seed\": " << a.seed << ",\n";
  out << "  \"stream\": " << a.stream << ",\n";
  out << "  \"certified\": " << (certified ? "true" : "false") << ",\n";
  out << "  \"budget_exhausted\": " << (budget_exhausted ? "true" : "false") << "\n";
  out << "}\n";
  return out.str();
}

template <typename P, typename Q, typename Fmt>
SampleOutput execute_sample(const SampleArgs& a, const P& target, const Q& proposal,
                            std::optional<qrs::LogReal> sup_ratio, Fmt&& fmt,
                            const qrs::SingleSiteKernel* kernel) {
  using X = typename Q::point_type;
  qrs::RngStream rng(a.seed, a.stream);
  SampleOutput out;

  auto emit = [&](const std::vector<X>& pts) {
    out.lines.reserve(pts.size());
    for (const auto& x : pts) out.lines.push_back(fmt(x));
  };

  if (a.method == "qrs" || a.method == "rs") {
    if (!(a.beta > 0.0)) throw std::invalid_argument("--beta must be positive for " + a.method);
    const qrs::LogReal beta = qrs::LogReal::from_linear(a.beta);
    qrs::QrsResult<X> result;
    try {
      result = a.method == "rs"
                   ? qrs::rs_certified(target, proposal, beta, a.n, rng, sup_ratio, a.max_draws)
                   : qrs::qrs_collect(target, proposal, beta, a.n, rng, a.max_draws);
    } catch (const qrs::BudgetExhaustedError<X>& e) {
      result = e.partial();
      out.budget_exhausted = true;
    }
    emit(result.points());
    out.metadata_json = metadata_json(a, a.beta, result.empirical_ar(), result.draws,
                                      result.samples.size(), result.certified,
                                      out.budget_exhausted);
    return out;
  }
  if (a.method == "qrs-incremental") {
    if (!(a.min_ar > 0.0 && a.min_ar <= 1.0))
      throw std::invalid_argument("--min-ar must be in (0, 1] for qrs-incremental");
    const auto result =
        qrs::qrs_incremental(target, proposal, a.n, a.min_ar, rng, a.max_draws);
    emit(result.points());
    out.metadata_json = metadata_json(a, result.beta_final.linear(), result.realized_ar,
                                      result.draws, result.kept.size(), false, false);
    return out;
  }
  if (a.method == "imh") {
    const auto chain = qrs::imh_chain(target, proposal, a.n, a.burn_in, a.thinning, rng);
    std::vector<X> pts;
    for (const auto& c : chain.samples) pts.push_back(c.point);
    emit(pts);
    out.metadata_json = metadata_json(a, 0.0, chain.acceptance_rate(), chain.proposal_draws,
                                      chain.samples.size(), false, false);
    return out;
  }
  if (a.method == "imh-reset") {
    if (a.reset_every == 0)
      throw std::invalid_argument("--reset-every is required for imh-reset");
    const auto chain = qrs::imh_reset(target, proposal, a.reset_every, a.n, rng);
    std::vector<X> pts;
    for (const auto& c : chain.samples) pts.push_back(c.point);
    emit(pts);
    out.metadata_json = metadata_json(a, 0.0, chain.acceptance_rate(), chain.proposal_draws,
                                      chain.samples.size(), false, false);
    return out;
  }
  if (a.method == "mh-local") {
    if constexpr (std::is_same_v<X, std::int32_t>) {
      if (!kernel)
        throw std::invalid_argument("mh-local requires a categorical-family testbed");
      const auto init = proposal.draw(rng);
      const auto chain =
          qrs::mh_local_chain(target, *kernel, init, a.n, a.burn_in, a.thinning, rng);
      std::vector<X> pts;
      for (const auto& c : chain.samples) pts.push_back(c.point);
      emit(pts);
      out.metadata_json = metadata_json(a, 0.0, chain.acceptance_rate(), chain.proposal_draws,
                                        chain.samples.size(), false, false);
      return out;
    } else {
      throw std::invalid_argument("mh-local requires a categorical-family testbed");
    }
  }
  throw std::invalid_argument("unknown method: " + a.method);
}

int cmd_sample(const SampleArgs& a) {
  const auto ref = qrs::io::parse_testbed_name(a.testbed);
  SampleOutput out;
  if (ref.kind == qrs::io::TestbedRef::Kind::poisson) {
    const auto pair = qrs::make_poisson_pair(ref.lambda_p, ref.lambda_q);
    out = execute_sample(a, pair.target, pair.proposal, pair.sup_log_ratio(),
                         [](std::int64_t k) { return std::to_string(k); }, nullptr);
  } else {
    const auto env = make_categorical_env(ref, "paired");
    const qrs::SingleSiteKernel kernel(env.space->positions(), env.space->symbols());
    auto fmt = [space = env.space](std::int32_t x) { return format_point(*space, x); };
    if (env.ebm) {
      const auto sup =
          qrs::exact_sup_log_ratio(*env.ebm, env.sampling_proposal(), env.space->space());
      out = execute_sample(a, *env.ebm, env.sampling_proposal(), sup, fmt, &kernel);
    } else {
      out = execute_sample(a, env.space->target(), env.space->proposal(),
                           env.space->sup_log_ratio(), fmt, &kernel);
    }
  }

  std::string body;
  for (const auto& line : out.lines) {
    body += line;
    body += '\n';
  }
  write_output(a.out, body);
  const std::string meta_path =
      !a.meta.empty() ? a.meta
                      : (a.out.empty() || a.out == "-" ? "sample_meta.json" : a.out + ".meta.json");
  write_file(meta_path, out.metadata_json);
  return out.budget_exhausted ? kExitCheckFailure : kExitOk;
}

// ---------------------------------------------------------------------------
// mcmc-compare
// ---------------------------------------------------------------------------

int cmd_mcmc_compare(const std::string& testbed, std::uint64_t budget,
                     const std::string& ar_list, const std::string& out_path,
                     std::uint64_t seed) {
  std::vector<double> ars;
  std::size_t start = 0;
  for (std::size_t i = 0; i <= ar_list.size(); ++i) {
    if (i == ar_list.size() || ar_list[i] == ',') {
      if (i > start) ars.push_back(qrs::io::parse_double(ar_list.substr(start, i - start)));
      start = i + 1;
    }
  }
  if (ars.empty()) throw std::invalid_argument("--ar needs at least one value");

  const auto ref = qrs::io::parse_testbed_name(testbed);
  std::vector<qrs::ComparisonRow> rows;
  std::vector<std::string> moment_names;
  if (ref.kind == qrs::io::TestbedRef::Kind::poisson) {
    const auto pair = qrs::make_poisson_pair(ref.lambda_p, ref.lambda_q);
    const std::vector<qrs::MomentSpec<std::int64_t>> moments{
        {"mean", [](const std::int64_t& k) { return static_cast<double>(k); }}};
    moment_names.push_back("mean");
    rows = qrs::mcmc_compare(pair.target, pair.proposal, qrs::DiracKernel<std::int64_t>{},
                             budget,
                             {qrs::CompareMethod::qrs, qrs::CompareMethod::imh,
                              qrs::CompareMethod::imh_reset},
                             ars, moments, seed);
  } else {
    const auto env = make_categorical_env(ref, "paired");
    for (const auto& m : env.moments) moment_names.push_back(m.name);
    const qrs::SingleSiteKernel kernel(env.space->positions(), env.space->symbols());
    const std::vector<qrs::CompareMethod> protocols{
        qrs::CompareMethod::qrs, qrs::CompareMethod::imh, qrs::CompareMethod::imh_reset,
        qrs::CompareMethod::mh_local};
    if (env.ebm)
      rows = qrs::mcmc_compare(*env.ebm, env.sampling_proposal(), kernel, budget, protocols,
                               ars, env.moments, seed);
    else
      rows = qrs::mcmc_compare(env.space->target(), env.space->proposal(), kernel, budget,
                               protocols, ars, env.moments, seed);
  }
  write_output(out_path, qrs::io::comparison_csv(rows, moment_names));
  return kExitOk;
}

// ---------------------------------------------------------------------------
// oracle-check
// ---------------------------------------------------------------------------

struct CheckResult {
  std::string check;
  std::string instance;
  double exact = 0.0;
  double estimated = 0.0;
  bool pass = false;
};

class CheckCollector {
 public:
  void add(const std::string& check, const std::string& instance, double exact,
           double estimated, bool pass) {
    results_.push_back({check, instance, exact, estimated, pass});
  }
  bool report() const {
    // One line per check with aggregate pass/fail.
    std::vector<std::pair<std::string, std::pair<int, int>>> tally;
    for (const auto& r : results_) {
      auto it = std::find_if(tally.begin(), tally.end(),
                             [&](const auto& t) { return t.first == r.check; });
      if (it == tally.end()) {
        tally.push_back({r.check, {0, 0}});
        it = std::prev(tally.end());
      }
      ++it->second.second;
      if (r.pass) ++it->second.first;
    }
    bool all = true;
    for (const auto& [name, counts] : tally) {
      const bool ok = counts.first == counts.second;
      all = all && ok;
      std::cout << (ok ? "[ ok ] " : "[FAIL] ") << name << ": " << counts.first << "/"
                << counts.second << " cases\n";
    }
    for (const auto& r : results_)
      if (!r.pass)
        std::cout << "       failing case " << r.check << "/" << r.instance
                  << " exact=" << r.exact << " estimated=" << r.estimated << "\n";
    return all;
  }
  std::string csv() const {
    std::string out = "check,case,exact,estimated,abs_diff,pass\n";
    for (const auto& r : results_) {
      out += r.check + ',' + r.instance + ',' + qrs::io::format_double(r.exact) + ',' +
             qrs::io::format_double(r.estimated) + ',' +
             qrs::io::format_double(std::abs(r.exact - r.estimated)) + ',' +
             (r.pass ? "1" : "0") + '\n';
    }
    return out;
  }

 private:
  std::vector<CheckResult> results_;
};

std::vector<qrs::LogReal> beta_ladder(const qrs::CategoricalSpace& space, std::size_t points) {
  // Log-spaced between the smallest and largest positive ratio, padded a
  // decade on each side.
  double lo = 1e300, hi = -1e300;
  for (std::int32_t x = 0; x < static_cast<std::int32_t>(space.size()); ++x) {
    const auto r =
        qrs::log_importance_ratio(space.target().log_score(x), space.proposal().log_prob(x));
    if (!r.is_zero() && !r.is_infinite()) {
      lo = std::min(lo, r.log());
      hi = std::max(hi, r.log());
    }
  }
  lo -= std::log(10.0);
  hi += std::log(10.0);
  std::vector<qrs::LogReal> ladder;
  for (std::size_t i = 0; i < points; ++i) {
    const double t = points == 1 ? 0.5 : static_cast<double>(i) / static_cast<double>(points - 1);
    ladder.push_back(qrs::LogReal::from_log(lo + t * (hi - lo)));
  }
  return ladder;
}

int cmd_oracle_check(std::uint64_t seeds, std::size_t beta_points, double beta_flag,
                     const std::string& csv_path, bool quick) {
  if (beta_flag != 0.0 && !(beta_flag > 0.0))
    throw std::invalid_argument("--beta must be positive");
  CheckCollector checks;
  const std::size_t n_est = quick ? 20000 : 100000;

  for (std::uint64_t seed = 0; seed < seeds; ++seed) {
    const auto law =
        seed % 2 ? qrs::WeightLaw::heavy_tail : qrs::WeightLaw::uniform_dirichlet;
    const int k = seed % 3 == 0 ? 3 : 2;
    const int v = seed % 3 == 0 ? 10 : 8;
    const auto space = qrs::make_random_categorical(k, v, seed, law);
    const auto id = std::to_string(seed);
    const auto p = qrs::enumerate_target(space.target(), space.space());

    // TVD upper bound plus AR/TVD/bound monotonicity on a beta ladder.
    double prev_ar = 2.0, prev_tvd = 2.0, prev_bound = 2.0;
    bool ar_mono = true, tvd_mono = true, bound_mono = true;
    auto ladder = beta_ladder(space, beta_points);
    if (beta_flag > 0.0) ladder.push_back(qrs::LogReal::from_linear(beta_flag));
    for (const auto& beta : ladder) {
      const auto pb = qrs::exact_p_beta(space.target(), space.proposal(), beta, space.space());
      const auto tvd = qrs::exact_divergences(p, pb).first;
      const double bound =
          1.0 - qrs::exact_region_mass(space.target(), space.proposal(), beta, space.space());
      checks.add("tvd-bound", id + "/beta=" + qrs::io::format_double(beta.linear()), bound, tvd,
                 tvd <= bound + 1e-12);
      const double ar = qrs::exact_ar(space.target(), space.proposal(), beta, space.space());
      if (ar > prev_ar + 1e-12) ar_mono = false;
      if (tvd > prev_tvd + 1e-12) tvd_mono = false;
      if (bound > prev_bound + 1e-12) bound_mono = false;
      prev_ar = ar;
      prev_tvd = tvd;
      prev_bound = bound;
    }
    checks.add("ar-monotone", id, 1.0, ar_mono ? 1.0 : 0.0, ar_mono);
    checks.add("tvd-monotone", id, 1.0, tvd_mono ? 1.0 : 0.0, tvd_mono);
    checks.add("bound-monotone", id, 1.0, bound_mono ? 1.0 : 0.0, bound_mono);

    // Large-beta limit, with and without support holes. "Large" is relative
    // to the instance: heavy-tail laws produce ratios past 2^20, so the
    // limit beta must dominate the finite sup ratio.
    const auto sup = qrs::exact_sup_log_ratio(space.target(), space.proposal(), space.space());
    const auto huge = qrs::LogReal::from_log(
        std::max(20.0 * std::log(2.0), sup.log() + std::log(10.0)));
    const auto pb_full =
        qrs::exact_p_beta(space.target(), space.proposal(), huge, space.space());
    checks.add("limit-full-support", id, 0.0, qrs::exact_divergences(p, pb_full).first,
               qrs::exact_divergences(p, pb_full).first < 1e-10);
    const auto holed = space.with_proposal_holes(0.25, seed);
    const auto sup_holed =
        qrs::exact_sup_log_ratio(holed.target(), holed.proposal(), holed.space());
    qrs::LogReal huge_holed = huge;  // sup over the remaining support only
    if (sup_holed.is_finite_positive())
      huge_holed = qrs::LogReal::from_log(
          std::max(huge.log(), sup_holed.log() + std::log(10.0)));
    const auto hp = qrs::enumerate_target(holed.target(), holed.space());
    const auto hpb =
        qrs::exact_p_beta(holed.target(), holed.proposal(), huge_holed, holed.space());
    const double floor_mass =
        1.0 - qrs::exact_support_mass(holed.target(), holed.proposal(), holed.space());
    checks.add("limit-support-holes", id, floor_mass, qrs::exact_divergences(hp, hpb).first,
               std::abs(qrs::exact_divergences(hp, hpb).first - floor_mass) < 1e-10);

    // TVD one-sided identity on p vs p_beta pairs.
    const auto pb_mid =
        qrs::exact_p_beta(space.target(), space.proposal(), qrs::LogReal::one(), space.space());
    const auto sym = qrs::exact_divergences(p, pb_mid).first;
    const auto one_sided = qrs::tvd_one_sided_identity(p, pb_mid);
    checks.add("tvd-identity", id, sym, one_sided, std::abs(sym - one_sided) < 1e-12);

    // Estimator consistency at a mid-ladder beta. Heavy-tail instances are
    // excluded: their importance weights are too wild for any fixed batch
    // size, which is exactly the failure mode the diagnostics report (huge
    // standard errors), not an estimator defect.
    if (law == qrs::WeightLaw::uniform_dirichlet && seed < std::max<std::uint64_t>(10, seeds / 2)) {
      const auto beta = ladder[ladder.size() / 2];
      qrs::RngStream rng(seed, 1000);
      const auto batch = qrs::draw_batch(space.target(), space.proposal(), n_est, rng);
      const auto ctx = qrs::make_batch_context(batch);
      const auto row = qrs::diagnostics_row(ctx, beta);
      const auto pb = qrs::exact_p_beta(space.target(), space.proposal(), beta, space.space());
      const auto [tvd_x, kl_x] = qrs::exact_divergences(p, pb);
      const double ar_x = qrs::exact_ar(space.target(), space.proposal(), beta, space.space());
      const double z_x = std::exp(p.log_z);
      checks.add("est-z", id, z_x, std::exp(row.log_z),
                 std::abs(std::exp(row.log_z) - z_x) <=
                     std::max(0.01, 5 * qrs::estimate_z_se(ctx)));
      checks.add("est-ar", id, ar_x, row.ar,
                 std::abs(row.ar - ar_x) <= std::max(0.01, 5 * row.ar_se));
      checks.add("est-tvd", id, tvd_x, row.tvd,
                 std::abs(row.tvd - tvd_x) <= std::max(0.01, 5 * row.tvd_se));
      checks.add("est-kl", id, kl_x, row.kl,
                 std::abs(row.kl - kl_x) <= std::max(0.05, 5 * row.kl_se));
    }

    // Markov kernel checks on small spaces.
    if (space.size() <= 100) {
      const auto kern = qrs::imh_exact_kernel(space.target(), space.proposal(), space.space());
      const auto pvec = qrs::table_probs(p);
      checks.add("imh-stationarity", id, 0.0, kern.stationarity_deviation(pvec),
                 kern.stationarity_deviation(pvec) < 1e-12);
      const qrs::SingleSiteKernel local(k, v);
      const auto lk = qrs::mh_local_exact_kernel(space.target(), local, space.space());
      checks.add("mh-detailed-balance", id, 0.0, lk.detailed_balance_deviation(pvec),
                 lk.detailed_balance_deviation(pvec) < 1e-12);
    }
  }

  const bool all = checks.report();
  if (!csv_path.empty()) write_file(csv_path, checks.csv());
  std::cout << (all ? "oracle-check: PASS" : "oracle-check: FAIL") << "\n";
  return all ? kExitOk : kExitCheckFailure;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"qrs: quasi rejection sampling toolkit with exact diagnostics"};
  app.require_subcommand(1);
  app.fallthrough();  // global flags may appear after the subcommand
  unsigned threads_flag = 0;
  app.add_option("--threads", threads_flag, "worker threads (default: QRS_THREADS or 1)");

  // poisson-demo
  auto* demo = app.add_subcommand("poisson-demo", "two-Poissons sweep and trade-off summary");
  double lambda_p = 11.0, lambda_q = 10.0, demo_threshold = 0.0;
  std::uint64_t demo_draws = 10000000, demo_reps = 5, demo_seed = 0;
  std::string demo_out_dir = ".";
  bool demo_plot = false, demo_smoke = false;
  demo->add_option("--lambda-p", lambda_p, "target Poisson rate");
  demo->add_option("--lambda-q", lambda_q, "proposal Poisson rate");
  demo->add_option("--num-draws", demo_draws, "proposal draws per replicate");
  demo->add_option("--replicates", demo_reps, "independent replicates");
  demo->add_option("--seed", demo_seed, "base seed");
  demo->add_option("--out-dir", demo_out_dir, "output directory");
  demo->add_flag("--plot", demo_plot, "also write poisson_tradeoff.svg");
  demo->add_flag("--smoke", demo_smoke, "1M-draw variant with threshold 1e-3");
  demo->add_option("--threshold", demo_threshold, "TVD pass threshold at AR~0.25");

  // sweep
  auto* sweep = app.add_subcommand("sweep", "beta sweep from a config file");
  std::string sweep_config, sweep_format;
  sweep->add_option("config", sweep_config, "run-config JSON path")->required();
  sweep->add_option("--output", sweep_format, "output format override: csv|json")
      ->check(CLI::IsMember({"csv", "json"}));

  // sample
  auto* sample = app.add_subcommand("sample", "draw samples with one sampler");
  SampleArgs sa;
  sample->add_option("--testbed", sa.testbed, "testbed name")->required();
  sample
      ->add_option("--method", sa.method,
                   "qrs|qrs-incremental|rs|imh|imh-reset|mh-local")
      ->required()
      ->check(CLI::IsMember({"qrs", "qrs-incremental", "rs", "imh", "imh-reset", "mh-local"}));
  sample->add_option("--n", sa.n, "samples to draw");
  sample->add_option("--beta", sa.beta, "beta for qrs/rs");
  sample->add_option("--min-ar", sa.min_ar, "minimum acceptance rate for qrs-incremental");
  sample->add_option("--thinning", sa.thinning, "thinning period for imh/mh-local");
  sample->add_option("--reset-every", sa.reset_every, "chain length per sample for imh-reset");
  sample->add_option("--burn-in", sa.burn_in, "burn-in steps for chains");
  sample->add_option("--seed", sa.seed, "seed");
  sample->add_option("--stream", sa.stream, "stream id");
  sample->add_option("--max-draws", sa.max_draws, "proposal draw budget");
  sample->add_option("--out", sa.out, "samples path ('-' or empty: stdout)");
  sample->add_option("--meta", sa.meta, "metadata JSON path");

  // mcmc-compare
  auto* compare = app.add_subcommand("mcmc-compare", "QRS vs chain samplers");
  std::string cmp_testbed = "constraint-demo", cmp_ar = "0.1,0.001", cmp_out;
  std::uint64_t cmp_budget = 10000, cmp_seed = 0;
  compare->add_option("--testbed", cmp_testbed, "testbed name");
  compare->add_option("--budget", cmp_budget, "proposal draws per protocol");
  compare->add_option("--ar", cmp_ar, "comma-separated acceptance-rate proxies");
  compare->add_option("--out", cmp_out, "CSV path (default stdout)");
  compare->add_option("--seed", cmp_seed, "seed");

  // oracle-check
  auto* oracle = app.add_subcommand("oracle-check", "exact-enumeration property battery");
  std::uint64_t oc_seeds = 25;
  std::size_t oc_beta_points = 25;
  double oc_beta = 0.0;
  std::string oc_csv;
  bool oc_quick = false;
  oracle->add_option("--seeds", oc_seeds, "number of random instances");
  oracle->add_option("--beta-points", oc_beta_points, "betas per ladder");
  oracle->add_option("--beta", oc_beta, "extra beta to include (must be positive)");
  oracle->add_option("--csv", oc_csv, "write per-case results CSV");
  oracle->add_flag("--quick", oc_quick, "smaller estimator batches");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitUsage;
  }

  try {
    const unsigned threads = thread_count(threads_flag);
    if (demo->parsed())
      return cmd_poisson_demo(lambda_p, lambda_q, demo_draws, demo_reps, demo_seed,
                              demo_out_dir, demo_plot, demo_smoke, demo_threshold, threads);
    if (sweep->parsed()) return cmd_sweep(sweep_config, sweep_format, threads);
    if (sample->parsed()) return cmd_sample(sa);
    if (compare->parsed())
      return cmd_mcmc_compare(cmp_testbed, cmp_budget, cmp_ar, cmp_out, cmp_seed);
    if (oracle->parsed())
      return cmd_oracle_check(oc_seeds, oc_beta_points, oc_beta, oc_csv, oc_quick);
    return kExitUsage;
  } catch (const qrs::io::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const IoError& e) {
    std::cerr << "io error: " << e.what() << "\n";
    return kExitIo;
  } catch (const std::invalid_argument& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitCheckFailure;
  }
}
