#pragma once

#include <cstddef>
#include <string>

#include "mvlatent/tensor.hpp"

namespace mvlatent {

inline constexpr double kLogSigmaClampLo = -7.0;
inline constexpr double kLogSigmaClampHi = 7.0;
inline constexpr double kBernoulliMeanEps = 1e-7;

// Diagonal Gaussian with parameters batched by row: mu and log_sigma are
// (n, d) with one distribution per row. log_sigma is clamped to [-7, 7]
// at construction.
struct DiagonalGaussian {
  Var mu;
  Var log_sigma;

  std::size_t dim() const { return mu.value().cols(); }
  std::size_t batch() const { return mu.value().rows(); }
};

DiagonalGaussian make_diagonal_gaussian(const Var& mu, const Var& log_sigma_raw);

// Exact KL(q || N(0, I)) summed over all rows and dimensions.
Var kl_to_standard_normal(const DiagonalGaussian& q);

// z = mu + exp(log_sigma) * eps. Gradients flow into mu and log_sigma only;
// eps enters as a constant.
Var reparameterize(const DiagonalGaussian& q, const Var& eps);

// sum_j x_j log m_j + (1 - x_j) log(1 - m_j), over all entries. Real-valued
// x in [0,1] is allowed (cross-entropy form); means must already be clamped
// away from {0, 1}.
Var bernoulli_log_lik(const Var& x, const Var& mean);

// sum_j -0.5 log(2 pi sigma^2) - (x_j - mean_j)^2 / (2 sigma^2).
Var gaussian_log_lik(const Var& x, const Var& mean, double sigma);

// Per-dimension learned scale: log_sigma is a tensor shaped like x.
Var gaussian_log_lik(const Var& x, const Var& mean, const Var& log_sigma);

enum class ObsKind {
  BernoulliMean,
  GaussianFixedSigma,
  GaussianLearnedSigma,
};

struct ObservationModel {
  ObsKind kind = ObsKind::BernoulliMean;
  std::size_t dim = 0;
  double sigma = 1.0;  // GaussianFixedSigma only; units of the data
};

ObservationModel make_observation_model(ObsKind kind, std::size_t dim,
                                        double sigma = 1.0);

const char* obs_kind_name(ObsKind kind);
ObsKind obs_kind_from_name(const std::string& name);

// Decoder outputs for one view: mean always, log_sigma only for learned-
// sigma Gaussians.
struct ObsParams {
  Var mean;
  Var log_sigma;  // unbound unless GaussianLearnedSigma
};

// Dispatches to the likelihood matching the observation model; returns the
// sum over all rows and dimensions.
Var observation_log_lik(const ObservationModel& model, const Var& x,
                        const ObsParams& params);

}  // namespace mvlatent
