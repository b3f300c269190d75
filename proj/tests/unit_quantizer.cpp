#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "driftforge/errors.hpp"
#include "driftforge/quantizer.hpp"

using namespace driftforge;
using doctest::Approx;

namespace {

const NormStats kLogStats{0.0, 1.0, 0.0, 1.0};  // normalize == ln

TrainConfig tiny_gen_config() {
  TrainConfig cfg;
  cfg.z_dim = 3;
  cfg.g_embed = 6;
  cfg.g_hidden = 8;
  return cfg;
}

GeneratorNet identity_generator(std::uint64_t seed = 3) {
  const TrainConfig cfg = tiny_gen_config();
  Rng rng = make_rng(seed, streams::net_init, 0);
  return make_generator(cfg, rng);
}

std::string tmp_path(const std::string& name) {
  return (std::filesystem::temp_directory_path() / name).string();
}

}  // namespace

TEST_CASE("decode maps boundaries onto the upper bin") {
  QuantizationScheme sch;
  sch.levels = {-1.0, 0.0, 1.0};
  sch.boundaries = {-0.5, 0.5};
  sch.delay = 10.0;
  validate_scheme(sch);
  CHECK(decode(std::exp(-1.0), sch, kLogStats) == 0);
  CHECK(decode(std::exp(-0.5), sch, kLogStats) == 1);
  CHECK(decode(std::exp(0.0), sch, kLogStats) == 1);
  CHECK(decode(std::exp(0.5), sch, kLogStats) == 2);
  CHECK(decode(std::exp(2.0), sch, kLogStats) == 2);
  CHECK(decode(1e-9, sch, kLogStats) == 0);
}

TEST_CASE("scheme validation rejects broken orderings") {
  QuantizationScheme sch;
  sch.levels = {0.0, 1.0};
  sch.boundaries = {0.5};
  sch.delay = 1.0;
  CHECK_NOTHROW(validate_scheme(sch));
  sch.boundaries = {0.5, 0.7};
  CHECK_THROWS_AS(validate_scheme(sch), ValidationError);
  sch.boundaries = {1.5};  // above the next level
  CHECK_THROWS_AS(validate_scheme(sch), ValidationError);
  sch.boundaries = {-0.5};  // below its own level
  CHECK_THROWS_AS(validate_scheme(sch), ValidationError);
  sch.boundaries = {0.5};
  sch.delay = 0.0;
  CHECK_THROWS_AS(validate_scheme(sch), ValidationError);
  sch.delay = 1.0;
  sch.levels.clear();
  sch.boundaries.clear();
  CHECK_THROWS_AS(validate_scheme(sch), ValidationError);
}

TEST_CASE("initial schemes subdivide the allowed range evenly") {
  QuantizerConfig cfg;
  const QuantizationScheme sch = init_scheme(4, 100.0, cfg, kLogStats);
  CHECK(sch.delay == 100.0);
  REQUIRE(sch.levels.size() == 4);
  REQUIRE(sch.boundaries.size() == 3);
  CHECK_NOTHROW(validate_scheme(sch));
  const double lo = std::log(cfg.r_qmin) + cfg.rho;
  const double hi = std::log(cfg.r_qmax) - cfg.rho;
  for (int i = 0; i < 4; ++i)
    CHECK(sch.levels[static_cast<std::size_t>(i)] ==
          Approx(lo + (hi - lo) * (i + 0.5) / 4.0).epsilon(1e-12));
  for (int i = 0; i < 3; ++i)
    CHECK(sch.boundaries[static_cast<std::size_t>(i)] ==
          Approx(0.5 * (sch.levels[static_cast<std::size_t>(i)] +
                        sch.levels[static_cast<std::size_t>(i) + 1]))
              .epsilon(1e-12));

  const QuantizationScheme one = init_scheme(1, 5.0, cfg, kLogStats);
  CHECK(one.levels.size() == 1);
  CHECK(one.boundaries.empty());
  CHECK(one.levels[0] == Approx(0.5 * (lo + hi)).epsilon(1e-12));

  CHECK_THROWS_AS(init_scheme(0, 5.0, cfg, kLogStats), ValidationError);
  CHECK_THROWS_AS(init_scheme(2, 0.0, cfg, kLogStats), ValidationError);
  QuantizerConfig wide = cfg;
  wide.rho = 10.0;  // swallows the whole range
  CHECK_THROWS_AS(init_scheme(2, 5.0, wide, kLogStats), ValidationError);
}

TEST_CASE("config guards and the default range weight") {
  QuantizerConfig cfg;
  CHECK_NOTHROW(cfg.validate());
  CHECK(cfg.resolved_lambda2(8) == 4.0);
  CHECK(cfg.resolved_lambda2(1) == 0.5);
  cfg.lambda2 = 3.0;
  CHECK(cfg.resolved_lambda2(8) == 3.0);

  cfg = QuantizerConfig{};
  cfg.rho = -0.1;
  CHECK_THROWS_AS(cfg.validate(), ValidationError);
  cfg = QuantizerConfig{};
  cfg.lr = 0.0;
  CHECK_THROWS_AS(cfg.validate(), ValidationError);
  cfg = QuantizerConfig{};
  cfg.r_qmax = cfg.r_qmin;
  CHECK_THROWS_AS(cfg.validate(), ValidationError);
  cfg = QuantizerConfig{};
  cfg.lr_decay = 1.5;
  CHECK_THROWS_AS(cfg.validate(), ValidationError);
}

TEST_CASE("an identity generator sits at exactly zero loss") {
  const GeneratorNet g = identity_generator();
  QuantizerConfig cfg;
  cfg.mc_trials = 4;
  const QuantizationScheme sch = init_scheme(4, 50.0, cfg, kLogStats);
  Rng rng = make_rng(11, streams::quantizer, 0, 0);
  const ZDraws zs = draw_quantizer_z(4, cfg.mc_trials, g.z_dim, rng);
  std::vector<double> gl(4, 1.0), gb(3, 1.0);
  const double loss = quantization_loss(sch, 50.0, g, kLogStats, cfg, zs,
                                        gl, gb);
  CHECK(loss == 0.0);
  for (double v : gl) CHECK(v == 0.0);
  for (double v : gb) CHECK(v == 0.0);
}

TEST_CASE("single-level range hinge has a closed form") {
  const GeneratorNet g = identity_generator();
  QuantizerConfig cfg;
  cfg.mc_trials = 2;
  const double nmin = std::log(cfg.r_qmin);
  QuantizationScheme sch;
  sch.delay = 10.0;
  sch.levels = {nmin + cfg.rho - 0.3};  // violates the lower range guard
  Rng rng = make_rng(12);
  const ZDraws zs = draw_quantizer_z(1, cfg.mc_trials, g.z_dim, rng);
  std::vector<double> gl(1, 0.0), gb;
  const double loss =
      quantization_loss(sch, 10.0, g, kLogStats, cfg, zs, gl, gb);
  const double lam2 = cfg.resolved_lambda2(1);
  CHECK(loss == Approx(lam2 * 0.09).epsilon(1e-12));
  CHECK(gl[0] == Approx(lam2 * 2.0 * -0.3).epsilon(1e-12));
}

TEST_CASE("loss gradients match finite differences on a live generator") {
  GeneratorNet g = identity_generator(8);
  {
    Rng rng = make_rng(19);
    std::uniform_real_distribution<double> dist(-0.4, 0.4);
    DenseNet& head = g.combined;
    for (std::size_t k = head.offsets.back(); k < head.param_count(); ++k)
      head.params[k] = dist(rng);
  }
  QuantizerConfig cfg;
  cfg.mc_trials = 6;
  cfg.rho = 0.3;  // pull hinges into the active region
  QuantizationScheme sch = init_scheme(3, 20.0, cfg, kLogStats);
  Rng zrng = make_rng(23);
  const ZDraws zs = draw_quantizer_z(3, cfg.mc_trials, g.z_dim, zrng);

  std::vector<double> gl(3, 0.0), gb(2, 0.0);
  const double base =
      quantization_loss(sch, 20.0, g, kLogStats, cfg, zs, gl, gb);
  CHECK(base >= 0.0);

  const double h = 1e-6;
  std::vector<double> dummy_l(3, 0.0), dummy_b(2, 0.0);
  const auto eval = [&](const QuantizationScheme& s) {
    return quantization_loss(s, 20.0, g, kLogStats, cfg, zs, dummy_l,
                             dummy_b);
  };
  for (std::size_t i = 0; i < sch.levels.size(); ++i) {
    QuantizationScheme p = sch, m = sch;
    p.levels[i] += h;
    m.levels[i] -= h;
    CHECK(gl[i] == Approx((eval(p) - eval(m)) / (2.0 * h))
                       .epsilon(1e-4)
                       .scale(1.0));
  }
  for (std::size_t i = 0; i < sch.boundaries.size(); ++i) {
    QuantizationScheme p = sch, m = sch;
    p.boundaries[i] += h;
    m.boundaries[i] -= h;
    CHECK(gb[i] == Approx((eval(p) - eval(m)) / (2.0 * h))
                       .epsilon(1e-4)
                       .scale(1.0));
  }
}

TEST_CASE("optimizing an identity generator stops at the seeded optimum") {
  const GeneratorNet g = identity_generator();
  QuantizerConfig cfg;
  cfg.mc_trials = 3;
  cfg.convergence_window = 10;
  cfg.max_steps = 100;
  Rng rng = make_rng(31, streams::quantizer, 2, 0);
  const OptimizeResult res = optimize(2, 25.0, g, kLogStats, cfg, rng);
  CHECK(res.valid);
  CHECK(res.best_loss == 0.0);
  CHECK(res.trace.size() == 11);  // step 0 plus one convergence window
  const QuantizationScheme seed_scheme = init_scheme(2, 25.0, cfg, kLogStats);
  CHECK(res.scheme.levels == seed_scheme.levels);
  CHECK(res.scheme.boundaries == seed_scheme.boundaries);

  // log-domain symmetry puts the lone boundary at the geometric midpoint
  const double b_ohms = denormalize_resistance(res.scheme.boundaries[0],
                                               kLogStats);
  CHECK(b_ohms == Approx(std::sqrt(cfg.r_qmin * cfg.r_qmax)).epsilon(1e-9));
}

TEST_CASE("the geometric midpoint survives nontrivial stats") {
  const GeneratorNet g = identity_generator();
  QuantizerConfig cfg;
  cfg.mc_trials = 3;
  cfg.convergence_window = 10;
  cfg.max_steps = 100;
  const NormStats st{6.0, 1.5, 0.0, 0.5};
  Rng rng = make_rng(31, streams::quantizer, 2, 0);
  const OptimizeResult res = optimize(2, 25.0, g, st, cfg, rng);
  REQUIRE(res.valid);
  const double b_ohms = denormalize_resistance(res.scheme.boundaries[0], st);
  CHECK(b_ohms == Approx(70710.678118).epsilon(1e-6));
}

TEST_CASE("decoding error of a deterministic drift-by-six sampler") {
  QuantizationScheme sch;
  sch.levels = {0.0, 5.0};
  sch.boundaries = {2.5};
  sch.delay = 10.0;
  const Sampler shift = [](double r, double, Rng&) {
    return r * std::exp(6.0);
  };
  Rng rng = make_rng(5);
  CHECK(evaluate_error(sch, 10.0, shift, kLogStats, 20, rng) == 0.5);

  const Sampler hold = [](double r, double, Rng&) { return r; };
  Rng rng2 = make_rng(5);
  CHECK(evaluate_error(sch, 10.0, hold, kLogStats, 20, rng2) == 0.0);
  CHECK_THROWS_AS(evaluate_error(sch, 10.0, hold, kLogStats, 0, rng2),
                  ValidationError);
  CHECK_THROWS_AS(evaluate_error(sch, 0.0, hold, kLogStats, 20, rng2),
                  ValidationError);
}

TEST_CASE("an identity generator supports the full level ladder") {
  const GeneratorNet g = identity_generator();
  QuantizerConfig cfg;
  cfg.mc_trials = 3;
  cfg.convergence_window = 5;
  cfg.max_steps = 50;
  const MaxLevelsResult res =
      max_levels(0.01, 40.0, g, kLogStats, cfg, 50, 77);
  CHECK(res.best == 16);
  REQUIRE(res.trace.size() == 5);
  int expect = 1;
  for (const auto& entry : res.trace) {
    CHECK(entry.levels == expect);
    CHECK(entry.error == 0.0);
    expect *= 2;
  }
  CHECK_THROWS_AS(max_levels(-0.5, 40.0, g, kLogStats, cfg, 50, 77),
                  ValidationError);
}

TEST_CASE("scheme files round trip and reject corruption") {
  QuantizerConfig cfg;
  const QuantizationScheme sch = init_scheme(3, 12.0, cfg, kLogStats);
  const std::string path = tmp_path("df_scheme.json");
  write_scheme(sch, cfg, kLogStats, "aabbccddeeff0011", path);

  const QuantizationScheme back = read_scheme(path);
  CHECK(back.delay == 12.0);
  CHECK(back.levels == sch.levels);
  CHECK(back.boundaries == sch.boundaries);

  nlohmann::json j;
  std::ifstream(path) >> j;
  CHECK(j.at("checkpoint_hash").get<std::string>() == "aabbccddeeff0011");
  CHECK(j.at("config").at("r_qmax").get<double>() == cfg.r_qmax);
  const auto ohms = j.at("levels_ohms").get<std::vector<double>>();
  REQUIRE(ohms.size() == 3);
  for (std::size_t i = 0; i < 3; ++i)
    CHECK(ohms[i] ==
          Approx(std::exp(sch.levels[i])).epsilon(1e-12));

  j.erase("boundaries_normalized");
  std::ofstream(path) << j.dump();
  CHECK_THROWS_AS(read_scheme(path), ValidationError);

  std::ofstream(path) << "{\"delay\": 1.0, \"levels_normalized\": [1.0, 0.5],"
                         " \"boundaries_normalized\": [0.7]}";
  CHECK_THROWS_AS(read_scheme(path), ValidationError);

  std::ofstream(path) << "nonsense";
  CHECK_THROWS_AS(read_scheme(path), ValidationError);
  CHECK_THROWS_AS(read_scheme(tmp_path("df_scheme_absent.json")),
                  ValidationError);

  QuantizationScheme bad = sch;
  bad.levels[0] = bad.levels[2];
  CHECK_THROWS_AS(write_scheme(bad, cfg, kLogStats, "x", path),
                  ValidationError);
}
