#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <numbers>

#include "mvlatent/distributions.hpp"
#include "support/oracles.hpp"

using namespace mvlatent;

namespace {

DiagonalGaussian gauss_on(Tape& tape, std::vector<double> mu,
                          std::vector<double> log_sigma, bool requires_grad = false) {
  const std::size_t d = mu.size();
  Var m = tape.leaf(Tensor({1, d}, std::move(mu)), requires_grad);
  Var s = tape.leaf(Tensor({1, d}, std::move(log_sigma)), requires_grad);
  return make_diagonal_gaussian(m, s);
}

}  // namespace

TEST_CASE("kl closed form: standard posterior gives zero") {
  Tape tape;
  auto q = gauss_on(tape, {0, 0, 0, 0}, {0, 0, 0, 0});
  CHECK(kl_to_standard_normal(q).value().item() == doctest::Approx(0.0));
}

TEST_CASE("kl closed form: unit-variance shifted mean") {
  Tape tape;
  auto q = gauss_on(tape, {1.0}, {0.0});
  CHECK(kl_to_standard_normal(q).value().item() == doctest::Approx(0.5));
}

TEST_CASE("kl closed form: variance 2 in two dimensions vs MC oracle") {
  const double log_sigma = 0.5 * std::log(2.0);
  Tape tape;
  auto q = gauss_on(tape, {0.0, 0.0}, {log_sigma, log_sigma});
  const double closed = kl_to_standard_normal(q).value().item();
  CHECK(closed == doctest::Approx(1.0 - std::log(2.0)).epsilon(1e-12));

  auto mc = mvtest::mc_kl_to_standard_normal({0.0, 0.0}, {log_sigma, log_sigma},
                                             1000000, Rng(5));
  CHECK(std::abs(closed - mc.value) < 3.0 * mc.std_error);
}

TEST_CASE("kl vs MC oracle over random posteriors") {
  Rng rng(77);
  for (int inst = 0; inst < 50; ++inst) {
    const std::size_t d = 1 + static_cast<std::size_t>(rng.next_double() * 4);
    std::vector<double> mu(d), ls(d);
    for (std::size_t j = 0; j < d; ++j) {
      mu[j] = rng.next_uniform(-2.0, 2.0);
      ls[j] = rng.next_uniform(-1.0, 1.0);
    }
    Tape tape;
    const double closed = kl_to_standard_normal(gauss_on(tape, mu, ls)).value().item();
    auto mc = mvtest::mc_kl_to_standard_normal(mu, ls, 100000, rng.substream(inst));
    CHECK(std::abs(closed - mc.value) < 3.0 * mc.std_error);
    CHECK(closed >= 0.0);
  }
}

TEST_CASE("kl nonnegative, zero only at the prior") {
  Rng rng(3);
  for (int i = 0; i < 200; ++i) {
    Tape tape;
    std::vector<double> mu = {rng.next_uniform(-3, 3)};
    std::vector<double> ls = {rng.next_uniform(-2, 2)};
    const double kl = kl_to_standard_normal(gauss_on(tape, mu, ls)).value().item();
    CHECK(kl >= 0.0);
    if (std::abs(mu[0]) > 1e-3 || std::abs(ls[0]) > 1e-3) CHECK(kl > 0.0);
  }
}

TEST_CASE("log_sigma clamp applies at construction") {
  Tape tape;
  auto q = gauss_on(tape, {0.0, 0.0}, {-20.0, 20.0});
  CHECK(q.log_sigma.value().data()[0] == kLogSigmaClampLo);
  CHECK(q.log_sigma.value().data()[1] == kLogSigmaClampHi);
}

TEST_CASE("reparameterize identities") {
  Tape tape;
  auto q = gauss_on(tape, {1.5, -2.0}, {0.3, -0.7});
  Var z0 = reparameterize(q, tape.constant(Tensor({1, 2}, {0.0, 0.0})));
  CHECK(z0.value().data()[0] == doctest::Approx(1.5));
  CHECK(z0.value().data()[1] == doctest::Approx(-2.0));

  auto std_q = gauss_on(tape, {0.0, 0.0}, {0.0, 0.0});
  Var z1 = reparameterize(std_q, tape.constant(Tensor({1, 2}, {0.4, -1.1})));
  CHECK(z1.value().data()[0] == doctest::Approx(0.4));
  CHECK(z1.value().data()[1] == doctest::Approx(-1.1));

  // mu=(1,2), sigma=(0.5,2), eps=(2,-1) -> z=(2,0)
  auto q2 = gauss_on(tape, {1.0, 2.0}, {std::log(0.5), std::log(2.0)});
  Var z2 = reparameterize(q2, tape.constant(Tensor({1, 2}, {2.0, -1.0})));
  CHECK(z2.value().data()[0] == doctest::Approx(2.0));
  CHECK(z2.value().data()[1] == doctest::Approx(0.0));

  CHECK_THROWS_AS(reparameterize(q2, tape.constant(Tensor({1, 3}, {0, 0, 0}))),
                  ShapeError);
}

TEST_CASE("reparameterize gradients flow to mu and log_sigma only") {
  std::vector<Tensor> params = {Tensor({1, 2}, {0.3, -0.4}),
                                Tensor({1, 2}, {0.2, 0.1})};
  auto build = [](Tape& t, const std::vector<Var>& p) {
    auto q = make_diagonal_gaussian(p[0], p[1]);
    Var eps = t.constant(Tensor({1, 2}, {0.7, -1.3}));
    return sum(square(reparameterize(q, eps)));
  };
  auto report = mvtest::check_gradients(build, params);
  CHECK(report.max_rel_err < 1e-6);
}

TEST_CASE("bernoulli log likelihood examples") {
  Tape tape;
  Var x1 = tape.constant(Tensor({1, 1}, {1.0}));
  Var m = tape.constant(Tensor({1, 1}, {0.5}));
  CHECK(bernoulli_log_lik(x1, m).value().item() ==
        doctest::Approx(std::log(0.5)).epsilon(1e-12));

  Var x2 = tape.constant(Tensor({1, 2}, {1.0, 0.0}));
  Var m2 = tape.constant(Tensor({1, 2}, {0.5, 0.5}));
  CHECK(bernoulli_log_lik(x2, m2).value().item() ==
        doctest::Approx(2.0 * std::log(0.5)).epsilon(1e-12));

  Var x0 = tape.constant(Tensor({1, 1}, {0.0}));
  Var msig = sigmoid(tape.constant(Tensor({1, 1}, {0.0})));
  CHECK(bernoulli_log_lik(x0, msig).value().item() ==
        doctest::Approx(std::log(0.5)).epsilon(1e-12));

  CHECK_THROWS_AS(bernoulli_log_lik(x2, m), ShapeError);
}

TEST_CASE("gaussian log likelihood examples") {
  const double log2pi = std::log(2.0 * std::numbers::pi);
  Tape tape;
  Var x = tape.constant(Tensor({1, 1}, {0.3}));
  Var m_eq = tape.constant(Tensor({1, 1}, {0.3}));
  CHECK(gaussian_log_lik(x, m_eq, 1.0).value().item() ==
        doctest::Approx(-0.5 * log2pi).epsilon(1e-12));

  Var m_off = tape.constant(Tensor({1, 1}, {-0.7}));
  CHECK(gaussian_log_lik(x, m_off, 1.0).value().item() ==
        doctest::Approx(-0.5 * log2pi - 0.5).epsilon(1e-12));

  // sigma = 0.1 (the smaller view-2 deviation): -0.5 log(2 pi 0.01)
  CHECK(gaussian_log_lik(x, m_eq, 0.1).value().item() ==
        doctest::Approx(-0.5 * std::log(2.0 * std::numbers::pi * 0.01))
            .epsilon(1e-12));
  CHECK(gaussian_log_lik(x, m_eq, 0.1).value().item() ==
        doctest::Approx(1.38364).epsilon(1e-4));

  CHECK_THROWS_AS(gaussian_log_lik(x, m_eq, 0.0), NumericError);
}

TEST_CASE("gaussian sigma=1 equals -0.5 l2 minus constant exactly") {
  Rng rng(9);
  Tape tape;
  const std::size_t d = 6;
  Tensor xv({1, d}, 0.0);
  Tensor mv({1, d}, 0.0);
  for (std::size_t i = 0; i < d; ++i) {
    xv.data()[i] = rng.next_uniform(-2, 2);
    mv.data()[i] = rng.next_uniform(-2, 2);
  }
  double l2 = 0.0;
  for (std::size_t i = 0; i < d; ++i) {
    const double diff = xv.data()[i] - mv.data()[i];
    l2 += diff * diff;
  }
  const double expected =
      -0.5 * l2 - 0.5 * static_cast<double>(d) * std::log(2.0 * std::numbers::pi);
  Var got = gaussian_log_lik(tape.constant(xv), tape.constant(mv), 1.0);
  CHECK(got.value().item() == doctest::Approx(expected).epsilon(1e-14));
}

TEST_CASE("likelihood and kl gradients pass finite differences") {
  Rng rng(55);
  for (int i = 0; i < 10; ++i) {
    std::vector<Tensor> params = {Tensor({1, 3}, {rng.next_uniform(-1, 1),
                                                  rng.next_uniform(-1, 1),
                                                  rng.next_uniform(-1, 1)}),
                                  Tensor({1, 3}, {rng.next_uniform(-1, 1),
                                                  rng.next_uniform(-1, 1),
                                                  rng.next_uniform(-1, 1)})};
    auto kl_build = [](Tape& t, const std::vector<Var>& p) {
      return kl_to_standard_normal(make_diagonal_gaussian(p[0], p[1]));
    };
    CHECK(mvtest::check_gradients(kl_build, params).max_rel_err < 1e-6);

    Tensor target({1, 3}, {0.2, 0.9, 0.4});
    auto bern_build = [target](Tape& t, const std::vector<Var>& p) {
      Var means = clamp(sigmoid(p[0]), kBernoulliMeanEps, 1.0 - kBernoulliMeanEps);
      return bernoulli_log_lik(t.constant(target), means);
    };
    CHECK(mvtest::check_gradients(bern_build, {params[0]}).max_rel_err < 1e-6);

    auto gauss_build = [target](Tape& t, const std::vector<Var>& p) {
      return gaussian_log_lik(t.constant(target), p[0], p[1]);
    };
    CHECK(mvtest::check_gradients(gauss_build, params).max_rel_err < 1e-6);
  }
}

TEST_CASE("observation model validation") {
  CHECK_THROWS_AS(make_observation_model(ObsKind::GaussianFixedSigma, 4, 0.0),
                  ConfigError);
  CHECK(obs_kind_from_name("bernoulli") == ObsKind::BernoulliMean);
  CHECK_THROWS_AS(obs_kind_from_name("nope"), ConfigError);
}
