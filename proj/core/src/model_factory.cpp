#include "mvlatent/model_factory.hpp"

namespace mvlatent {

namespace {

MlpSpec encoder_spec(std::size_t in, const std::vector<std::size_t>& hidden,
                     std::size_t d_out, bool variational) {
  MlpSpec spec;
  spec.input_dim = in;
  spec.hidden = hidden;
  spec.head = variational ? HeadKind::GaussianParams : HeadKind::GaussianMeans;
  spec.head_dim = d_out;
  spec.squash_means = false;
  return spec;
}

MlpSpec decoder_spec(std::size_t in, const std::vector<std::size_t>& hidden,
                     std::size_t d_out, ObsKind obs, bool squash) {
  MlpSpec spec;
  spec.input_dim = in;
  spec.hidden = hidden;
  spec.head_dim = d_out;
  spec.squash_means = squash;
  switch (obs) {
    case ObsKind::BernoulliMean:
      spec.head = HeadKind::BernoulliMeans;
      break;
    case ObsKind::GaussianFixedSigma:
      spec.head = HeadKind::GaussianMeans;
      break;
    case ObsKind::GaussianLearnedSigma:
      spec.head = HeadKind::GaussianMeansAndLogSigma;
      break;
  }
  return spec;
}

}  // namespace

ModelBundle make_model_bundle(const ModelConfig& cfg, Rng& rng) {
  if (cfg.d_x == 0 || cfg.d_y == 0 || cfg.d_z == 0) {
    throw ConfigError("model dims d_x, d_y, d_z must be positive");
  }
  ModelBundle bundle;
  bundle.kind = cfg.kind;
  bundle.d_z = cfg.d_z;
  bundle.d_hx = is_private(cfg.kind) ? cfg.d_hx : 0;
  bundle.d_hy = is_private(cfg.kind) ? cfg.d_hy : 0;
  bundle.obs_x = make_observation_model(cfg.obs_x, cfg.d_x, cfg.sigma_x);
  bundle.obs_y = make_observation_model(cfg.obs_y, cfg.d_y, cfg.sigma_y);

  const bool variational = cfg.kind == ObjectiveKind::Vcca || is_private(cfg.kind) ||
                           is_bi(cfg.kind);
  // Init draws use per-network substreams so adding a network does not
  // shift the others' weights.
  auto net = [&](unsigned slot, const MlpSpec& spec) {
    Rng sub = rng.substream(slot);
    return init_network(spec, sub);
  };

  bundle.enc_zx = net(0, encoder_spec(cfg.d_x, cfg.hidden, cfg.d_z, variational));
  if (is_bi(cfg.kind) || cfg.kind == ObjectiveKind::Contrastive) {
    bundle.enc_zy = net(1, encoder_spec(cfg.d_y, cfg.hidden, cfg.d_z, variational));
  }
  if (cfg.kind == ObjectiveKind::Contrastive) {
    bundle.d_hx = bundle.d_hy = 0;
    return bundle;
  }
  if (is_private(cfg.kind)) {
    if (bundle.d_hx > 0) {
      bundle.enc_hx = net(2, encoder_spec(cfg.d_x, cfg.hidden, cfg.d_hx, true));
    }
    if (bundle.d_hy > 0) {
      bundle.enc_hy = net(3, encoder_spec(cfg.d_y, cfg.hidden, cfg.d_hy, true));
    }
  }
  const bool mvae = cfg.kind == ObjectiveKind::Mvae || cfg.kind == ObjectiveKind::MvaeVar;
  const ObsKind dec_x_obs = mvae ? ObsKind::GaussianFixedSigma : cfg.obs_x;
  ObsKind dec_y_obs = mvae ? ObsKind::GaussianFixedSigma : cfg.obs_y;
  if (cfg.kind == ObjectiveKind::MvaeVar) dec_y_obs = ObsKind::BernoulliMean;
  bundle.dec_x = net(4, decoder_spec(cfg.d_z + bundle.d_hx, cfg.hidden, cfg.d_x,
                                     dec_x_obs, cfg.squash_decoder_means));
  bundle.dec_y = net(5, decoder_spec(cfg.d_z + bundle.d_hy, cfg.hidden, cfg.d_y,
                                     dec_y_obs, cfg.squash_decoder_means));
  bundle.validate();
  return bundle;
}

}  // namespace mvlatent
