#include "mvlatent/distributions.hpp"

#include <cmath>
#include <numbers>

namespace mvlatent {

namespace {
constexpr double kLog2Pi = 1.8378770664093454836;  // log(2*pi)
}

DiagonalGaussian make_diagonal_gaussian(const Var& mu, const Var& log_sigma_raw) {
  if (!mu.value().same_shape(log_sigma_raw.value())) {
    throw ShapeError("DiagonalGaussian: mu and log_sigma must have equal shape");
  }
  return {mu, clamp(log_sigma_raw, kLogSigmaClampLo, kLogSigmaClampHi)};
}

Var kl_to_standard_normal(const DiagonalGaussian& q) {
  // -0.5 * sum(1 + 2s - e^{2s} - mu^2), s = log sigma.
  Var two_s = scale(q.log_sigma, 2.0);
  Var inner = sub(sub(add(two_s, 1.0), exp(two_s)), square(q.mu));
  return scale(sum(inner), -0.5);
}

Var reparameterize(const DiagonalGaussian& q, const Var& eps) {
  if (!eps.value().same_shape(q.mu.value())) {
    throw ShapeError("reparameterize: eps shape must match mu");
  }
  return add(q.mu, mul(exp(q.log_sigma), eps));
}

Var bernoulli_log_lik(const Var& x, const Var& mean) {
  if (!x.value().same_shape(mean.value())) {
    throw ShapeError("bernoulli_log_lik: shapes must match");
  }
  Var pos = mul(x, log(mean));
  Var neg = mul(rsub(1.0, x), log(rsub(1.0, mean)));
  return add(sum(pos), sum(neg));
}

Var gaussian_log_lik(const Var& x, const Var& mean, double sigma) {
  if (!(sigma > 0.0)) throw NumericError("gaussian_log_lik: sigma must be > 0");
  if (!x.value().same_shape(mean.value())) {
    throw ShapeError("gaussian_log_lik: shapes must match");
  }
  const double n = static_cast<double>(x.value().size());
  const double log_const = -0.5 * n * (kLog2Pi + 2.0 * std::log(sigma));
  Var quad = scale(sum(square(sub(x, mean))), -0.5 / (sigma * sigma));
  return add(quad, log_const);
}

Var gaussian_log_lik(const Var& x, const Var& mean, const Var& log_sigma) {
  if (!x.value().same_shape(mean.value()) ||
      !x.value().same_shape(log_sigma.value())) {
    throw ShapeError("gaussian_log_lik: shapes must match");
  }
  const double n = static_cast<double>(x.value().size());
  // sum(-s - (x-m)^2 e^{-2s} / 2) - n/2 log(2 pi)
  Var quad = mul(square(sub(x, mean)), exp(scale(log_sigma, -2.0)));
  Var core = sub(scale(sum(quad), -0.5), sum(log_sigma));
  return add(core, -0.5 * n * kLog2Pi);
}

ObservationModel make_observation_model(ObsKind kind, std::size_t dim, double sigma) {
  if (dim == 0) throw ConfigError("observation model dimension must be positive");
  if (kind == ObsKind::GaussianFixedSigma && !(sigma > 0.0)) {
    throw ConfigError("GaussianFixedSigma requires sigma > 0");
  }
  return {kind, dim, sigma};
}

const char* obs_kind_name(ObsKind kind) {
  switch (kind) {
    case ObsKind::BernoulliMean: return "bernoulli";
    case ObsKind::GaussianFixedSigma: return "gaussian_fixed";
    case ObsKind::GaussianLearnedSigma: return "gaussian_learned";
  }
  return "?";
}

ObsKind obs_kind_from_name(const std::string& name) {
  if (name == "bernoulli") return ObsKind::BernoulliMean;
  if (name == "gaussian_fixed") return ObsKind::GaussianFixedSigma;
  if (name == "gaussian_learned") return ObsKind::GaussianLearnedSigma;
  throw ConfigError("unknown observation model kind: " + name);
}

Var observation_log_lik(const ObservationModel& model, const Var& x,
                        const ObsParams& params) {
  switch (model.kind) {
    case ObsKind::BernoulliMean:
      return bernoulli_log_lik(x, params.mean);
    case ObsKind::GaussianFixedSigma:
      return gaussian_log_lik(x, params.mean, model.sigma);
    case ObsKind::GaussianLearnedSigma:
      if (!params.log_sigma.valid()) {
        throw ConfigError("GaussianLearnedSigma requires a log_sigma head");
      }
      return gaussian_log_lik(x, params.mean, params.log_sigma);
  }
  throw ConfigError("unhandled observation kind");
}

}  // namespace mvlatent
