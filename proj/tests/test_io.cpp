#include <doctest.h>

#include <cmath>
#include <string>
#include <vector>

#include "qrs/config.hpp"
#include "qrs/io.hpp"

TEST_SUITE_BEGIN("io");

namespace {

qrs::DiagnosticsRow sample_row(double beta, std::uint64_t rep) {
  qrs::DiagnosticsRow r;
  r.beta = beta;
  r.replicate = rep;
  r.ar = 0.12345678901234567;
  r.ar_se = 1.5e-300;
  r.log_z = -0.22314355131420976;
  r.log_z_beta = -0.35667494393873245;
  r.tvd = 1.0 / 28.0;
  r.tvd_se = 3.000000000000001e-05;
  r.tvd_bound = 0.75;
  r.kl = 0.0032097749709433801;
  r.kl_se = 1e-6;
  r.n_draws = 1000000;
  r.seed = 42;
  return r;
}

}  // namespace

TEST_CASE("doubles round-trip through 17 significant digits") {
  for (double v : {0.1, 1.0 / 3.0, 1e-300, 6.02214076e23, -0.0, 1.0000000000000002}) {
    const std::string s = qrs::io::format_double(v);
    CHECK(qrs::io::parse_double(s) == v);
  }
}

TEST_CASE("sweep CSV round trip is exact") {
  std::vector<qrs::DiagnosticsRow> rows{sample_row(1.0, 0), sample_row(2.0, 1)};
  rows[1].kl_to_base = 0.094877591974688060;
  const std::string csv = qrs::io::to_csv(rows);
  CHECK(csv.find("beta,replicate,ar,ar_se,log_z,log_z_beta,tvd,tvd_se,tvd_bound,kl,kl_se,"
                 "kl_to_base,n_draws,seed\n") == 0);
  const auto parsed = qrs::io::parse_sweep_csv(csv);
  REQUIRE(parsed.size() == 2);
  CHECK(qrs::io::to_csv(parsed) == csv);
  CHECK(parsed[0].beta == rows[0].beta);
  CHECK(parsed[0].tvd == rows[0].tvd);
  CHECK(parsed[0].ar_se == rows[0].ar_se);
  CHECK(!parsed[0].kl_to_base.has_value());
  CHECK(parsed[1].kl_to_base == rows[1].kl_to_base);
  CHECK(parsed[1].n_draws == 1000000);
}

TEST_CASE("json mirror carries the same fields") {
  std::vector<qrs::DiagnosticsRow> rows{sample_row(1.0, 0)};
  const std::string js = qrs::io::to_json(rows);
  CHECK(js.find("\"beta\":1") != std::string::npos);
  CHECK(js.find("\"kl_to_base\":null") != std::string::npos);
  CHECK(js.find("\"n_draws\":1000000") != std::string::npos);
}

TEST_CASE("testbed names") {
  const auto p = qrs::io::parse_testbed_name("poisson:11:10");
  CHECK(p.kind == qrs::io::TestbedRef::Kind::poisson);
  CHECK(p.lambda_p == 11.0);
  CHECK(p.lambda_q == 10.0);

  const auto c = qrs::io::parse_testbed_name("categorical:2:10:7:heavy-tail");
  CHECK(c.kind == qrs::io::TestbedRef::Kind::categorical);
  CHECK(c.positions == 2);
  CHECK(c.symbols == 10);
  CHECK(c.seed == 7);
  CHECK(c.law == qrs::WeightLaw::heavy_tail);

  const auto f = qrs::io::parse_testbed_name("constraint:specs/my file.json");
  CHECK(f.kind == qrs::io::TestbedRef::Kind::constraint_file);
  CHECK(f.path == "specs/my file.json");

  CHECK(qrs::io::parse_testbed_name("twopoint").kind == qrs::io::TestbedRef::Kind::two_point);
  CHECK(qrs::io::parse_testbed_name("constraint-demo").kind ==
        qrs::io::TestbedRef::Kind::constraint_demo);

  CHECK_THROWS_AS(qrs::io::parse_testbed_name("poisson:11"), std::invalid_argument);
  CHECK_THROWS_AS(qrs::io::parse_testbed_name("nonsense"), std::invalid_argument);
  CHECK_THROWS_AS(qrs::io::parse_testbed_name("categorical:2:10:7:cauchy"),
                  std::invalid_argument);
}

namespace {

const char* kGoodConfig = R"({
  "schema_version": "1",
  "target": {"testbed": "poisson:11:10"},
  "proposal": {"testbed": "paired"},
  "sweep": {"beta_min": "0.5", "beta_max": "4", "grid_points": "8",
            "grid_scale": "linear", "n_draws": "10000", "replicates": "2", "seed": "3"},
  "output": {"path": "out.csv", "format": "csv"}
})";

}  // namespace

TEST_CASE("run config parsing") {
  const auto cfg = qrs::io::parse_run_config(kGoodConfig);
  CHECK(cfg.target.kind == qrs::io::TestbedRef::Kind::poisson);
  CHECK(cfg.beta_grid.size() == 8);
  CHECK(cfg.beta_grid.front() == doctest::Approx(0.5));
  CHECK(cfg.beta_grid.back() == doctest::Approx(4.0));
  CHECK(cfg.n_draws == 10000);
  CHECK(cfg.replicates == 2);
  CHECK(cfg.seed == 3);
  CHECK(cfg.output_path == "out.csv");

  SUBCASE("unknown keys are rejected and listed") {
    std::string bad = kGoodConfig;
    bad.insert(bad.rfind('}') - 1, ", \"extra\": {\"x\": \"1\"}");
    try {
      qrs::io::parse_run_config(bad);
      FAIL("expected ConfigError");
    } catch (const qrs::io::ConfigError& e) {
      REQUIRE(e.keys().size() == 1);
      CHECK(e.keys()[0] == "extra");
    }
  }
  SUBCASE("missing target section") {
    CHECK_THROWS_AS(qrs::io::parse_run_config(
                        R"({"schema_version": "1", "sweep": {"beta_min": "1", "beta_max": "2",
                            "grid_points": "2", "n_draws": "10"}})"),
                    qrs::io::ConfigError);
  }
  SUBCASE("raw JSON numbers violate the decimal-string rule") {
    std::string bad = kGoodConfig;
    const auto pos = bad.find("\"0.5\"");
    bad.replace(pos, 5, "0.5");
    try {
      qrs::io::parse_run_config(bad);
      FAIL("expected ConfigError");
    } catch (const qrs::io::ConfigError& e) {
      REQUIRE(e.keys().size() == 1);
      CHECK(e.keys()[0] == "sweep.beta_min");
    }
  }
  SUBCASE("log grids are log-spaced") {
    std::string cfg2 = kGoodConfig;
    const auto pos = cfg2.find("linear");
    cfg2.replace(pos, 6, "log");
    const auto parsed = qrs::io::parse_run_config(cfg2);
    const double r1 = parsed.beta_grid[1] / parsed.beta_grid[0];
    const double r2 = parsed.beta_grid[7] / parsed.beta_grid[6];
    CHECK(r1 == doctest::Approx(r2).epsilon(1e-12));
  }
}

TEST_CASE("constraint spec parsing") {
  const char* text = R"({
    "schema_version": "1",
    "space": {"positions": "3", "symbols": "4", "seed": "5", "law": "uniform-dirichlet"},
    "mode": "exponential",
    "features": [{"name": "f0", "kind": "pos:0:1", "lambda": "2.0"},
                 {"name": "f1", "kind": "contains:3", "lambda": "-0.5"}]
  })";
  const auto spec = qrs::io::parse_constraint_spec(text);
  CHECK(spec.positions == 3);
  CHECK(spec.symbols == 4);
  CHECK(spec.mode == qrs::ConstraintMode::exponential);
  REQUIRE(spec.features.size() == 2);
  CHECK(spec.features[0].lambda == 2.0);
  CHECK(spec.features[1].kind == "contains:3");

  const auto space = qrs::make_random_categorical(3, 4, 5, qrs::WeightLaw::uniform_dirichlet);
  const auto f0 = qrs::io::make_feature_fn(space, "pos:0:1");
  CHECK(f0(space.encode({1, 0, 0})) == 1.0);
  CHECK(f0(space.encode({2, 0, 0})) == 0.0);
  const auto f1 = qrs::io::make_feature_fn(space, "contains:3");
  CHECK(f1(space.encode({0, 3, 0})) == 1.0);
  CHECK(f1(space.encode({0, 2, 0})) == 0.0);
  CHECK_THROWS_AS(qrs::io::make_feature_fn(space, "pos:9:1"), std::invalid_argument);
  CHECK_THROWS_AS(qrs::io::make_feature_fn(space, "wavelet:1"), std::invalid_argument);

  SUBCASE("pointwise features must not carry lambdas") {
    const char* bad = R"({
      "schema_version": "1",
      "space": {"positions": "2", "symbols": "2", "seed": "0", "law": "uniform-dirichlet"},
      "mode": "pointwise",
      "features": [{"name": "f0", "kind": "pos:0:1", "lambda": "2.0"}]
    })";
    CHECK_THROWS_AS(qrs::io::parse_constraint_spec(bad), qrs::io::ConfigError);
  }
}

TEST_CASE("svg plots are well-formed enough") {
  qrs::io::PlotSeries tvd{"TVD", {{1.0, 0.03}, {0.5, 0.01}, {0.1, 1e-4}}};
  qrs::io::PlotSeries kl{"KL", {{1.0, 0.05}, {0.5, 0.02}, {0.1, 1e-3}}};
  const auto svg = qrs::io::svg_line_plot("quality vs efficiency", "acceptance rate", "divergence",
                                          {tvd, kl});
  CHECK(svg.find("<svg") == 0);
  CHECK(svg.find("</svg>") != std::string::npos);
  CHECK(svg.find("polyline") != std::string::npos);
  CHECK(svg.find("TVD") != std::string::npos);
}

TEST_SUITE_END();
