#pragma once

#include <optional>
#include <utility>
#include <vector>

#include "mvlatent/networks.hpp"

namespace mvlatent {

enum class ObjectiveKind {
  Vcca,
  VccaPrivate,
  BiVcca,
  BiVccaPrivate,
  Mvae,
  MvaeVar,
  Contrastive,
};

const char* objective_kind_name(ObjectiveKind kind);
ObjectiveKind objective_kind_from_name(const std::string& name);
bool is_private(ObjectiveKind kind);
bool is_bi(ObjectiveKind kind);

// All networks and likelihood configuration for one model variant. Decoders
// are shared across the two bounds of the bi variants; the private
// posteriors q(h_x|x), q(h_y|y) are likewise shared.
struct ModelBundle {
  ObjectiveKind kind = ObjectiveKind::Vcca;
  std::size_t d_z = 0;
  std::size_t d_hx = 0;
  std::size_t d_hy = 0;

  Network enc_zx;                  // q(z|x); f(x) for MVAE/contrastive
  std::optional<Network> enc_zy;   // q(z|y); g(y) for contrastive
  std::optional<Network> enc_hx;   // q(h_x|x), d_hx > 0 only
  std::optional<Network> enc_hy;   // q(h_y|y), d_hy > 0 only
  std::optional<Network> dec_x;
  std::optional<Network> dec_y;

  ObservationModel obs_x;
  ObservationModel obs_y;

  void validate() const;
  // Canonical parameter traversal: enc_zx, enc_zy, enc_hx, enc_hy, dec_x,
  // dec_y; within a network w0, b0, w1, b1, ... Checkpoints and the
  // optimizer rely on this order.
  std::vector<Tensor*> parameters();
  std::vector<const Tensor*> parameters() const;
  std::vector<std::string> parameter_names() const;
};

struct ObjectiveConfig {
  std::size_t mc_samples = 1;  // L
  double mu = 1.0;             // bi-bound weight
  double w_x = 1.0;            // per-view likelihood weights
  double w_y = 1.0;
  double dropout_rate = 0.0;
  double margin = 0.5;         // contrastive hinge margin
  bool training = false;       // enables dropout
  bool zero_noise = false;     // replaces latent noise with zeros (diagnostic)

  void validate() const;
};

// Per-batch mean objective terms in nats. Fields are absent when the
// active objective has no such term. total = -(kl terms) + weighted rec
// terms; the scalar loss is its negation.
struct ElboTerms {
  std::optional<double> kl_z;
  std::optional<double> kl_hx;
  std::optional<double> kl_hy;
  std::optional<double> rec_x;
  std::optional<double> rec_y;
  double total = 0.0;

  double recombine(double w_x, double w_y) const;
};

struct LossResult {
  Var loss;
  ElboTerms terms;
  // bi variants only: the x-conditioned and y-conditioned bound terms.
  std::optional<std::pair<ElboTerms, ElboTerms>> bound_terms;
  // Tape handles for the bundle parameters, in canonical order; the trainer
  // reads gradients through these after backward().
  std::vector<Var> param_vars;
};

// Deterministic per-step randomness. Noise draws are keyed by
// (stream purpose, latent block / dropout role, MC draw, sample row) and
// are shared between the two bounds of the bi objectives, so the endpoint
// and symmetry identities hold bit-exactly.
class StepRng {
 public:
  explicit StepRng(Rng base) : base_(base) {}
  static StepRng for_step(std::uint64_t seed, std::uint64_t epoch,
                          std::uint64_t step_in_epoch);

  Rng eps_stream(unsigned block, unsigned draw) const {
    return base_.substream(0).substream(block).substream(draw);
  }
  Rng dropout_stream(unsigned role, unsigned draw) const {
    return base_.substream(1).substream(role).substream(draw);
  }
  Rng negatives_stream() const { return base_.substream(2); }

 private:
  Rng base_;
};

struct Batch {
  Tensor x;
  Tensor y;

  std::size_t size() const { return x.rows(); }
};

struct BoundBundle {
  const ModelBundle* model = nullptr;
  BoundNetwork enc_zx;
  std::optional<BoundNetwork> enc_zy;
  std::optional<BoundNetwork> enc_hx;
  std::optional<BoundNetwork> enc_hy;
  std::optional<BoundNetwork> dec_x;
  std::optional<BoundNetwork> dec_y;
};

BoundBundle bind_bundle(Tape& tape, const ModelBundle& bundle,
                        bool requires_grad = true);
std::vector<Var> parameter_vars(const BoundBundle& bound);

// Entry point used by the trainer; dispatches on bundle.kind.
LossResult compute_loss(Tape& tape, const ModelBundle& bundle, const Batch& batch,
                        const ObjectiveConfig& cfg, const StepRng& rng);

LossResult vcca_loss(Tape& tape, const ModelBundle& bundle, const Batch& batch,
                     const ObjectiveConfig& cfg, const StepRng& rng);
LossResult vcca_private_loss(Tape& tape, const ModelBundle& bundle,
                             const Batch& batch, const ObjectiveConfig& cfg,
                             const StepRng& rng);
LossResult bi_vcca_loss(Tape& tape, const ModelBundle& bundle, const Batch& batch,
                        const ObjectiveConfig& cfg, const StepRng& rng);

// One side of Eq-12-style combinations: the x-conditioned (from_y = false)
// or y-conditioned (from_y = true) bound on its own. Accepts any VCCA-family
// bundle; from_y requires enc_zy.
LossResult vcca_single_bound_loss(Tape& tape, const ModelBundle& bundle,
                                  const Batch& batch, const ObjectiveConfig& cfg,
                                  const StepRng& rng, bool from_y);
LossResult mvae_loss(Tape& tape, const ModelBundle& bundle, const Batch& batch,
                     const ObjectiveConfig& cfg, const StepRng& rng);
LossResult mvae_var_loss(Tape& tape, const ModelBundle& bundle, const Batch& batch,
                         const ObjectiveConfig& cfg, const StepRng& rng);

// Hinge over cosine distances: mean_i max(0, m + dis(f(x_i), g(y_i))
// - dis(f(x_i), g(y_neg_i))). negatives[i] indexes the mismatched view-2
// row for sample i.
LossResult contrastive_loss(Tape& tape, const ModelBundle& bundle,
                            const Batch& batch,
                            const std::vector<std::size_t>& negatives,
                            const ObjectiveConfig& cfg, const StepRng& rng);

// Uniform mismatched index per sample, excluding the paired index.
std::vector<std::size_t> sample_negatives(std::size_t n, Rng rng);

}  // namespace mvlatent
