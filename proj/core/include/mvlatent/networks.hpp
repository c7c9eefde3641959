#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "mvlatent/distributions.hpp"
#include "mvlatent/tensor.hpp"

namespace mvlatent {

enum class HeadKind {
  GaussianParams,          // 2*d outputs: means then clamped log sigmas
  BernoulliMeans,          // d outputs: sigmoid, clamped away from {0,1}
  GaussianMeans,           // d outputs: sigmoid when squash_means, raw otherwise
  GaussianMeansAndLogSigma // 2*d outputs: means (optionally squashed) + log sigmas
};

const char* head_kind_name(HeadKind kind);
HeadKind head_kind_from_name(const std::string& name);

struct MlpSpec {
  std::size_t input_dim = 0;
  std::vector<std::size_t> hidden;  // relu layers
  HeadKind head = HeadKind::GaussianParams;
  std::size_t head_dim = 0;
  bool squash_means = false;  // sigmoid on Gaussian means ([0,1] image data)

  std::size_t head_width() const {
    return (head == HeadKind::GaussianParams ||
            head == HeadKind::GaussianMeansAndLogSigma)
               ? 2 * head_dim
               : head_dim;
  }
  std::size_t layer_count() const { return hidden.size() + 1; }
  void validate() const;
};

// Feed-forward network parameters; weights[i] is (in_i, out_i) and
// biases[i] has length out_i, with the head as the last layer.
struct Network {
  MlpSpec spec;
  std::vector<Tensor> weights;
  std::vector<Tensor> biases;

  std::size_t parameter_count() const;
};

// He initialization for relu layers (variance 2/fan_in), variance 1/fan_in
// for the head; biases zero.
Network init_network(const MlpSpec& spec, Rng& rng);

struct DropoutPlan {
  double rate = 0.0;
  bool training = false;

  bool active() const { return training && rate > 0.0; }
};

// Inverted dropout: entries zeroed with probability rate, survivors scaled
// by 1/(1-rate); identity when training is false.
Var apply_dropout(const Var& t, double rate, Rng& rng, bool training);

// A network's parameters registered on a tape for one forward/backward pass.
struct BoundNetwork {
  const MlpSpec* spec = nullptr;
  std::vector<Var> weights;
  std::vector<Var> biases;
};

BoundNetwork bind(Tape& tape, const Network& net, bool requires_grad = true);

// Runs input dropout, the relu stack with per-layer dropout, and the head
// affine; returns the raw head pre-activation.
Var mlp_raw(const BoundNetwork& net, const Var& input, const DropoutPlan& drop,
            Rng& drop_rng);

// Gaussian-parameter head -> posterior. Requires HeadKind::GaussianParams.
DiagonalGaussian encode(const BoundNetwork& net, const Var& input,
                        const DropoutPlan& drop, Rng& drop_rng);

// Observation head -> likelihood parameters.
ObsParams decode(const BoundNetwork& net, const Var& latent,
                 const DropoutPlan& drop, Rng& drop_rng);

// No-tape forward used for feature extraction and image grids; dropout off.
// Arithmetically identical to the tape path (shared kernels).
Tensor eval_raw(const Network& net, const Tensor& input);
Tensor eval_means(const Network& net, const Tensor& input);  // mu / mean part

}  // namespace mvlatent
