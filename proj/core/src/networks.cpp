#include "mvlatent/networks.hpp"

#include <cmath>

namespace mvlatent {

const char* head_kind_name(HeadKind kind) {
  switch (kind) {
    case HeadKind::GaussianParams: return "gaussian_params";
    case HeadKind::BernoulliMeans: return "bernoulli_means";
    case HeadKind::GaussianMeans: return "gaussian_means";
    case HeadKind::GaussianMeansAndLogSigma: return "gaussian_means_log_sigma";
  }
  return "?";
}

HeadKind head_kind_from_name(const std::string& name) {
  if (name == "gaussian_params") return HeadKind::GaussianParams;
  if (name == "bernoulli_means") return HeadKind::BernoulliMeans;
  if (name == "gaussian_means") return HeadKind::GaussianMeans;
  if (name == "gaussian_means_log_sigma") return HeadKind::GaussianMeansAndLogSigma;
  throw ConfigError("unknown head kind: " + name);
}

void MlpSpec::validate() const {
  if (input_dim == 0) throw ConfigError("MlpSpec: input_dim must be positive");
  if (head_dim == 0) throw ConfigError("MlpSpec: head_dim must be positive");
  for (std::size_t w : hidden) {
    if (w == 0) throw ConfigError("MlpSpec: hidden widths must be positive");
  }
}

std::size_t Network::parameter_count() const {
  std::size_t n = 0;
  for (const Tensor& t : weights) n += t.size();
  for (const Tensor& t : biases) n += t.size();
  return n;
}

Network init_network(const MlpSpec& spec, Rng& rng) {
  spec.validate();
  Network net;
  net.spec = spec;
  std::size_t in = spec.input_dim;
  auto push_layer = [&](std::size_t out, double variance) {
    Tensor w({in, out}, 0.0);
    const double sd = std::sqrt(variance);
    for (double& v : w.data()) v = sd * rng.next_normal();
    w.requires_grad = true;
    Tensor b({out}, 0.0);
    b.requires_grad = true;
    net.weights.push_back(std::move(w));
    net.biases.push_back(std::move(b));
    in = out;
  };
  for (std::size_t width : spec.hidden) push_layer(width, 2.0 / static_cast<double>(in));
  push_layer(spec.head_width(), 1.0 / static_cast<double>(in));
  return net;
}

Var apply_dropout(const Var& t, double rate, Rng& rng, bool training) {
  if (rate < 0.0 || rate >= 1.0) {
    throw ConfigError("dropout rate must lie in [0, 1)");
  }
  if (!training || rate == 0.0) return t;
  const double keep_scale = 1.0 / (1.0 - rate);
  Tensor mask(t.value().shape(), 0.0);
  for (double& m : mask.data()) {
    m = rng.next_double() < rate ? 0.0 : keep_scale;
  }
  return mul(t, t.tape()->constant(std::move(mask)));
}

BoundNetwork bind(Tape& tape, const Network& net, bool requires_grad) {
  BoundNetwork bound;
  bound.spec = &net.spec;
  bound.weights.reserve(net.weights.size());
  bound.biases.reserve(net.biases.size());
  for (const Tensor& w : net.weights) bound.weights.push_back(tape.leaf(w, requires_grad));
  for (const Tensor& b : net.biases) bound.biases.push_back(tape.leaf(b, requires_grad));
  return bound;
}

Var mlp_raw(const BoundNetwork& net, const Var& input, const DropoutPlan& drop,
            Rng& drop_rng) {
  const MlpSpec& spec = *net.spec;
  if (input.value().cols() != spec.input_dim) {
    throw ShapeError("mlp_raw: input width " + std::to_string(input.value().cols()) +
                     " does not match spec input_dim " + std::to_string(spec.input_dim));
  }
  Var h = apply_dropout(input, drop.rate, drop_rng, drop.training);
  for (std::size_t i = 0; i < spec.hidden.size(); ++i) {
    h = relu(affine(h, net.weights[i], net.biases[i]));
    h = apply_dropout(h, drop.rate, drop_rng, drop.training);
  }
  return affine(h, net.weights.back(), net.biases.back());
}

DiagonalGaussian encode(const BoundNetwork& net, const Var& input,
                        const DropoutPlan& drop, Rng& drop_rng) {
  if (net.spec->head != HeadKind::GaussianParams) {
    throw ConfigError("encode requires a GaussianParams head");
  }
  Var raw = mlp_raw(net, input, drop, drop_rng);
  const std::size_t d = net.spec->head_dim;
  return make_diagonal_gaussian(slice_cols(raw, 0, d), slice_cols(raw, d, d));
}

ObsParams decode(const BoundNetwork& net, const Var& latent,
                 const DropoutPlan& drop, Rng& drop_rng) {
  const MlpSpec& spec = *net.spec;
  Var raw = mlp_raw(net, latent, drop, drop_rng);
  const std::size_t d = spec.head_dim;
  switch (spec.head) {
    case HeadKind::BernoulliMeans:
      return {clamp(sigmoid(raw), kBernoulliMeanEps, 1.0 - kBernoulliMeanEps), Var()};
    case HeadKind::GaussianMeans:
      return {spec.squash_means ? sigmoid(raw) : raw, Var()};
    case HeadKind::GaussianMeansAndLogSigma: {
      Var m = slice_cols(raw, 0, d);
      if (spec.squash_means) m = sigmoid(m);
      return {m, clamp(slice_cols(raw, d, d), kLogSigmaClampLo, kLogSigmaClampHi)};
    }
    case HeadKind::GaussianParams:
      throw ConfigError("decode on an encoder head");
  }
  throw ConfigError("unhandled head kind");
}

Tensor eval_raw(const Network& net, const Tensor& input) {
  const MlpSpec& spec = net.spec;
  if (input.cols() != spec.input_dim) {
    throw ShapeError("eval_raw: input width does not match spec");
  }
  Tensor h = input;
  for (std::size_t i = 0; i < spec.hidden.size(); ++i) {
    Tensor next({h.rows(), net.weights[i].cols()}, 0.0);
    kernels::affine(next, h, net.weights[i], net.biases[i]);
    kernels::relu_inplace(next);
    h = std::move(next);
  }
  Tensor out({h.rows(), net.weights.back().cols()}, 0.0);
  kernels::affine(out, h, net.weights.back(), net.biases.back());
  if (!out.all_finite()) throw NumericError("non-finite result in eval_raw");
  return out;
}

Tensor eval_means(const Network& net, const Tensor& input) {
  Tensor raw = eval_raw(net, input);
  const MlpSpec& spec = net.spec;
  const std::size_t d = spec.head_dim;
  switch (spec.head) {
    case HeadKind::GaussianParams:
    case HeadKind::GaussianMeansAndLogSigma: {
      Tensor m({raw.rows(), d}, 0.0);
      for (std::size_t r = 0; r < raw.rows(); ++r)
        for (std::size_t c = 0; c < d; ++c) m.at(r, c) = raw.at(r, c);
      if (spec.head == HeadKind::GaussianMeansAndLogSigma && spec.squash_means) {
        kernels::sigmoid_inplace(m);
      }
      return m;
    }
    case HeadKind::BernoulliMeans: {
      kernels::sigmoid_inplace(raw);
      for (double& v : raw.data()) {
        v = std::min(1.0 - kBernoulliMeanEps, std::max(kBernoulliMeanEps, v));
      }
      return raw;
    }
    case HeadKind::GaussianMeans:
      if (spec.squash_means) kernels::sigmoid_inplace(raw);
      return raw;
  }
  throw ConfigError("unhandled head kind");
}

}  // namespace mvlatent
