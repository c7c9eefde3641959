#pragma once

#include "mvlatent/objectives.hpp"

namespace mvlatent {

// Wiring recipe for one model variant; heads are derived from the kind and
// observation models.
struct ModelConfig {
  ObjectiveKind kind = ObjectiveKind::Vcca;
  std::size_t d_x = 0;
  std::size_t d_y = 0;
  std::size_t d_z = 10;
  std::size_t d_hx = 0;
  std::size_t d_hy = 0;
  std::vector<std::size_t> hidden = {128, 128};
  ObsKind obs_x = ObsKind::BernoulliMean;
  ObsKind obs_y = ObsKind::BernoulliMean;
  double sigma_x = 1.0;  // GaussianFixedSigma views
  double sigma_y = 1.0;
  bool squash_decoder_means = true;  // sigmoid Gaussian means ([0,1] data)
};

ModelBundle make_model_bundle(const ModelConfig& cfg, Rng& rng);

}  // namespace mvlatent
