#include "mvlatent/objectives.hpp"

#include <cmath>

namespace mvlatent {

namespace {

// Dropout stream roles. The two bounds of a bi objective share roles, so
// corresponding forwards draw identical masks.
enum DropRole : unsigned {
  kDropEncZ = 0,
  kDropEncHx,
  kDropEncHy,
  kDropDecX,
  kDropDecY,
  kDropLatentZ,
  kDropLatentHx,
  kDropLatentHy,
};

enum EpsBlock : unsigned { kEpsZ = 0, kEpsHx = 1, kEpsHy = 2 };

}  // namespace

const char* objective_kind_name(ObjectiveKind kind) {
  switch (kind) {
    case ObjectiveKind::Vcca: return "VCCA";
    case ObjectiveKind::VccaPrivate: return "VCCA_PRIVATE";
    case ObjectiveKind::BiVcca: return "BI_VCCA";
    case ObjectiveKind::BiVccaPrivate: return "BI_VCCA_PRIVATE";
    case ObjectiveKind::Mvae: return "MVAE";
    case ObjectiveKind::MvaeVar: return "MVAE_VAR";
    case ObjectiveKind::Contrastive: return "CONTRASTIVE";
  }
  return "?";
}

ObjectiveKind objective_kind_from_name(const std::string& name) {
  if (name == "VCCA") return ObjectiveKind::Vcca;
  if (name == "VCCA_PRIVATE") return ObjectiveKind::VccaPrivate;
  if (name == "BI_VCCA") return ObjectiveKind::BiVcca;
  if (name == "BI_VCCA_PRIVATE") return ObjectiveKind::BiVccaPrivate;
  if (name == "MVAE") return ObjectiveKind::Mvae;
  if (name == "MVAE_VAR") return ObjectiveKind::MvaeVar;
  if (name == "CONTRASTIVE") return ObjectiveKind::Contrastive;
  throw ConfigError("unknown objective kind: " + name);
}

bool is_private(ObjectiveKind kind) {
  return kind == ObjectiveKind::VccaPrivate || kind == ObjectiveKind::BiVccaPrivate;
}

bool is_bi(ObjectiveKind kind) {
  return kind == ObjectiveKind::BiVcca || kind == ObjectiveKind::BiVccaPrivate;
}

void ModelBundle::validate() const {
  const bool vcca_family = kind == ObjectiveKind::Vcca || is_private(kind) || is_bi(kind);
  if (kind == ObjectiveKind::Contrastive) {
    if (!enc_zy) throw ConfigError("CONTRASTIVE requires enc_zy (the view-2 embedder)");
    if (enc_zx.spec.head != HeadKind::GaussianMeans ||
        enc_zy->spec.head != HeadKind::GaussianMeans) {
      throw ConfigError("contrastive embedders need GaussianMeans heads");
    }
    if (enc_zx.spec.head_dim != d_z || enc_zy->spec.head_dim != d_z) {
      throw ConfigError("contrastive embedding dimension must equal d_z");
    }
    return;
  }
  if ((kind == ObjectiveKind::Mvae || kind == ObjectiveKind::MvaeVar) &&
      enc_zx.spec.head != HeadKind::GaussianMeans) {
    throw ConfigError("MVAE encoders need a GaussianMeans (code) head");
  }
  if (!dec_x || !dec_y) {
    throw ConfigError(std::string(objective_kind_name(kind)) +
                      " requires both decoders");
  }
  if (is_bi(kind) && !enc_zy) {
    throw ConfigError("bi objectives require enc_zy");
  }
  if (is_private(kind)) {
    if (d_hx > 0 && !enc_hx) throw ConfigError("d_hx > 0 requires enc_hx");
    if (d_hy > 0 && !enc_hy) throw ConfigError("d_hy > 0 requires enc_hy");
    const std::size_t dec_x_in = d_z + d_hx;
    const std::size_t dec_y_in = d_z + d_hy;
    if (dec_x->spec.input_dim != dec_x_in || dec_y->spec.input_dim != dec_y_in) {
      throw ConfigError("private decoders must consume concat(z, h)");
    }
  } else if (vcca_family || kind == ObjectiveKind::Mvae ||
             kind == ObjectiveKind::MvaeVar) {
    if (dec_x->spec.input_dim != d_z || dec_y->spec.input_dim != d_z) {
      throw ConfigError("decoders must consume d_z inputs");
    }
  }
  if (vcca_family) {
    if (enc_zx.spec.head != HeadKind::GaussianParams) {
      throw ConfigError("VCCA encoders need GaussianParams heads");
    }
    if (enc_zy && enc_zy->spec.head != HeadKind::GaussianParams) {
      throw ConfigError("VCCA encoders need GaussianParams heads");
    }
    auto check_obs = [](const ObservationModel& obs, const Network& dec,
                        const char* view) {
      const HeadKind head = dec.spec.head;
      const bool ok =
          (obs.kind == ObsKind::BernoulliMean && head == HeadKind::BernoulliMeans) ||
          (obs.kind == ObsKind::GaussianFixedSigma && head == HeadKind::GaussianMeans) ||
          (obs.kind == ObsKind::GaussianLearnedSigma &&
           head == HeadKind::GaussianMeansAndLogSigma);
      if (!ok) {
        throw ConfigError(std::string("decoder head does not match the ") + view +
                          " observation model");
      }
    };
    check_obs(obs_x, *dec_x, "view-1");
    check_obs(obs_y, *dec_y, "view-2");
  }
  if (kind == ObjectiveKind::MvaeVar &&
      dec_y->spec.head != HeadKind::BernoulliMeans) {
    throw ConfigError("MVAE_VAR requires a BernoulliMeans view-2 decoder head");
  }
  if (enc_zx.spec.head_dim != d_z) {
    throw ConfigError("enc_zx head dimension must equal d_z");
  }
}

namespace {

void collect(std::vector<Tensor*>& out, Network* net) {
  if (!net) return;
  for (std::size_t i = 0; i < net->weights.size(); ++i) {
    out.push_back(&net->weights[i]);
    out.push_back(&net->biases[i]);
  }
}

void collect_names(std::vector<std::string>& out, const Network* net,
                   const char* name) {
  if (!net) return;
  for (std::size_t i = 0; i < net->weights.size(); ++i) {
    out.push_back(std::string(name) + ".w" + std::to_string(i));
    out.push_back(std::string(name) + ".b" + std::to_string(i));
  }
}

}  // namespace

std::vector<Tensor*> ModelBundle::parameters() {
  std::vector<Tensor*> out;
  collect(out, &enc_zx);
  collect(out, enc_zy ? &*enc_zy : nullptr);
  collect(out, enc_hx ? &*enc_hx : nullptr);
  collect(out, enc_hy ? &*enc_hy : nullptr);
  collect(out, dec_x ? &*dec_x : nullptr);
  collect(out, dec_y ? &*dec_y : nullptr);
  return out;
}

std::vector<const Tensor*> ModelBundle::parameters() const {
  auto mut = const_cast<ModelBundle*>(this)->parameters();
  return {mut.begin(), mut.end()};
}

std::vector<std::string> ModelBundle::parameter_names() const {
  std::vector<std::string> out;
  collect_names(out, &enc_zx, "enc_zx");
  collect_names(out, enc_zy ? &*enc_zy : nullptr, "enc_zy");
  collect_names(out, enc_hx ? &*enc_hx : nullptr, "enc_hx");
  collect_names(out, enc_hy ? &*enc_hy : nullptr, "enc_hy");
  collect_names(out, dec_x ? &*dec_x : nullptr, "dec_x");
  collect_names(out, dec_y ? &*dec_y : nullptr, "dec_y");
  return out;
}

void ObjectiveConfig::validate() const {
  if (mc_samples < 1) throw ConfigError("L must be >= 1");
  if (mu < 0.0 || mu > 1.0) throw ConfigError("mu must lie in [0, 1]");
  if (!(w_x > 0.0) || !(w_y > 0.0)) {
    throw ConfigError("view likelihood weights must be positive");
  }
  if (dropout_rate < 0.0 || dropout_rate >= 1.0) {
    throw ConfigError("dropout rate must lie in [0, 1)");
  }
  if (margin < 0.0) throw ConfigError("contrastive margin must be nonnegative");
}

double ElboTerms::recombine(double w_x, double w_y) const {
  double t = 0.0;
  if (kl_z) t = -*kl_z;
  if (kl_hx) t -= *kl_hx;
  if (kl_hy) t -= *kl_hy;
  if (rec_x) t += w_x * *rec_x;
  if (rec_y) t += w_y * *rec_y;
  return t;
}

StepRng StepRng::for_step(std::uint64_t seed, std::uint64_t epoch,
                          std::uint64_t step_in_epoch) {
  return StepRng(Rng(seed).substream(1).substream(epoch).substream(step_in_epoch));
}

BoundBundle bind_bundle(Tape& tape, const ModelBundle& bundle, bool requires_grad) {
  BoundBundle out;
  out.model = &bundle;
  out.enc_zx = bind(tape, bundle.enc_zx, requires_grad);
  if (bundle.enc_zy) out.enc_zy = bind(tape, *bundle.enc_zy, requires_grad);
  if (bundle.enc_hx) out.enc_hx = bind(tape, *bundle.enc_hx, requires_grad);
  if (bundle.enc_hy) out.enc_hy = bind(tape, *bundle.enc_hy, requires_grad);
  if (bundle.dec_x) out.dec_x = bind(tape, *bundle.dec_x, requires_grad);
  if (bundle.dec_y) out.dec_y = bind(tape, *bundle.dec_y, requires_grad);
  return out;
}

std::vector<Var> parameter_vars(const BoundBundle& bound) {
  std::vector<Var> out;
  auto collect_net = [&out](const BoundNetwork* net) {
    if (!net) return;
    for (std::size_t i = 0; i < net->weights.size(); ++i) {
      out.push_back(net->weights[i]);
      out.push_back(net->biases[i]);
    }
  };
  collect_net(&bound.enc_zx);
  collect_net(bound.enc_zy ? &*bound.enc_zy : nullptr);
  collect_net(bound.enc_hx ? &*bound.enc_hx : nullptr);
  collect_net(bound.enc_hy ? &*bound.enc_hy : nullptr);
  collect_net(bound.dec_x ? &*bound.dec_x : nullptr);
  collect_net(bound.dec_y ? &*bound.dec_y : nullptr);
  return out;
}

namespace {

// Batch-summed terms of one variational bound; rec terms are additionally
// summed over the L Monte Carlo draws.
struct BoundSums {
  Var kl_z;
  Var kl_hx;  // unbound when the model has no h_x
  Var kl_hy;
  Var rec_x;
  Var rec_y;
};

Tensor eps_tensor(const StepRng& rng, unsigned block, unsigned draw, std::size_t n,
                  std::size_t d, bool zero_noise) {
  if (zero_noise) return Tensor({n, d}, 0.0);
  return sample_normal_per_row(rng.eps_stream(block, draw), n, d);
}

// One x- or y-conditioned bound of the (private) VCCA objective. Both
// bounds of a bi objective go through here with shared eps draws and
// shared dropout roles.
BoundSums vcca_bound(Tape& tape, const BoundBundle& b, const Batch& batch,
                     const ObjectiveConfig& cfg, const StepRng& rng, bool from_y) {
  const ModelBundle& m = *b.model;
  const std::size_t n = batch.size();
  const DropoutPlan drop{cfg.dropout_rate, cfg.training};

  const Var xc = tape.constant(batch.x);
  const Var yc = tape.constant(batch.y);

  const BoundNetwork& enc = from_y ? *b.enc_zy : b.enc_zx;
  Rng enc_rng = rng.dropout_stream(kDropEncZ, 0);
  const DiagonalGaussian q_z = encode(enc, from_y ? yc : xc, drop, enc_rng);

  std::optional<DiagonalGaussian> q_hx;
  std::optional<DiagonalGaussian> q_hy;
  if (b.enc_hx) {
    Rng hx_rng = rng.dropout_stream(kDropEncHx, 0);
    q_hx = encode(*b.enc_hx, xc, drop, hx_rng);
  }
  if (b.enc_hy) {
    Rng hy_rng = rng.dropout_stream(kDropEncHy, 0);
    q_hy = encode(*b.enc_hy, yc, drop, hy_rng);
  }

  BoundSums sums;
  sums.kl_z = kl_to_standard_normal(q_z);
  if (q_hx) sums.kl_hx = kl_to_standard_normal(*q_hx);
  if (q_hy) sums.kl_hy = kl_to_standard_normal(*q_hy);

  for (unsigned l = 0; l < cfg.mc_samples; ++l) {
    Var z = reparameterize(
        q_z, tape.constant(eps_tensor(rng, kEpsZ, l, n, m.d_z, cfg.zero_noise)));
    Rng zdrop = rng.dropout_stream(kDropLatentZ, l);
    z = apply_dropout(z, cfg.dropout_rate, zdrop, cfg.training);

    Var dec_x_in = z;
    if (q_hx) {
      Var hx = reparameterize(
          *q_hx, tape.constant(eps_tensor(rng, kEpsHx, l, n, m.d_hx, cfg.zero_noise)));
      Rng hdrop = rng.dropout_stream(kDropLatentHx, l);
      hx = apply_dropout(hx, cfg.dropout_rate, hdrop, cfg.training);
      dec_x_in = concat_cols(z, hx);
    }
    Var dec_y_in = z;
    if (q_hy) {
      Var hy = reparameterize(
          *q_hy, tape.constant(eps_tensor(rng, kEpsHy, l, n, m.d_hy, cfg.zero_noise)));
      Rng hdrop = rng.dropout_stream(kDropLatentHy, l);
      hy = apply_dropout(hy, cfg.dropout_rate, hdrop, cfg.training);
      dec_y_in = concat_cols(z, hy);
    }

    Rng dx_rng = rng.dropout_stream(kDropDecX, l);
    const ObsParams px = decode(*b.dec_x, dec_x_in, drop, dx_rng);
    Var ll_x = observation_log_lik(m.obs_x, xc, px);

    Rng dy_rng = rng.dropout_stream(kDropDecY, l);
    const ObsParams py = decode(*b.dec_y, dec_y_in, drop, dy_rng);
    Var ll_y = observation_log_lik(m.obs_y, yc, py);

    sums.rec_x = l == 0 ? ll_x : add(sums.rec_x, ll_x);
    sums.rec_y = l == 0 ? ll_y : add(sums.rec_y, ll_y);
  }
  return sums;
}

// Converts batch sums into per-batch means, assembles the bound value
// left-to-right, and returns loss = -bound. The assembly order is shared
// by every kind so that identical term values yield bit-identical losses.
LossResult assemble(const BoundSums& sums, std::size_t n,
                    const ObjectiveConfig& cfg, std::size_t mc_samples) {
  const double inv_n = 1.0 / static_cast<double>(n);
  const double inv_nl = inv_n / static_cast<double>(mc_samples);

  ElboTerms terms;
  Var elbo;
  if (sums.kl_z.valid()) {
    Var kl_mean = scale(sums.kl_z, inv_n);
    terms.kl_z = kl_mean.value().item();
    elbo = scale(kl_mean, -1.0);
  }
  if (sums.kl_hx.valid()) {
    Var kl_mean = scale(sums.kl_hx, inv_n);
    terms.kl_hx = kl_mean.value().item();
    elbo = sub(elbo, kl_mean);
  }
  if (sums.kl_hy.valid()) {
    Var kl_mean = scale(sums.kl_hy, inv_n);
    terms.kl_hy = kl_mean.value().item();
    elbo = sub(elbo, kl_mean);
  }
  Var rec_x_mean = scale(sums.rec_x, inv_nl);
  terms.rec_x = rec_x_mean.value().item();
  Var weighted_x = scale(rec_x_mean, cfg.w_x);
  elbo = elbo.valid() ? add(elbo, weighted_x) : weighted_x;
  Var rec_y_mean = scale(sums.rec_y, inv_nl);
  terms.rec_y = rec_y_mean.value().item();
  elbo = add(elbo, scale(rec_y_mean, cfg.w_y));

  terms.total = elbo.value().item();
  LossResult result;
  result.loss = scale(elbo, -1.0);
  result.terms = terms;
  return result;
}

void require_kind(const ModelBundle& bundle, ObjectiveKind expected) {
  if (bundle.kind != expected) {
    throw ConfigError(std::string("objective mismatch: bundle is ") +
                      objective_kind_name(bundle.kind) + ", expected " +
                      objective_kind_name(expected));
  }
}

void check_batch(const ModelBundle& bundle, const Batch& batch) {
  if (batch.x.rows() != batch.y.rows()) {
    throw ShapeError("batch views must have equal row counts");
  }
  if (batch.x.cols() != bundle.enc_zx.spec.input_dim) {
    throw ShapeError("batch view-1 width does not match enc_zx input");
  }
}

}  // namespace

LossResult vcca_single_bound_loss(Tape& tape, const ModelBundle& bundle,
                                  const Batch& batch, const ObjectiveConfig& cfg,
                                  const StepRng& rng, bool from_y) {
  const bool vcca_family = bundle.kind == ObjectiveKind::Vcca ||
                           is_private(bundle.kind) || is_bi(bundle.kind);
  if (!vcca_family) {
    throw ConfigError("vcca_single_bound_loss requires a VCCA-family bundle");
  }
  if (from_y && !bundle.enc_zy) {
    throw ConfigError("the y-conditioned bound requires enc_zy");
  }
  bundle.validate();
  cfg.validate();
  check_batch(bundle, batch);
  const BoundBundle b = bind_bundle(tape, bundle);
  const BoundSums sums = vcca_bound(tape, b, batch, cfg, rng, from_y);
  LossResult result = assemble(sums, batch.size(), cfg, cfg.mc_samples);
  result.param_vars = parameter_vars(b);
  return result;
}

LossResult vcca_loss(Tape& tape, const ModelBundle& bundle, const Batch& batch,
                     const ObjectiveConfig& cfg, const StepRng& rng) {
  require_kind(bundle, ObjectiveKind::Vcca);
  return vcca_single_bound_loss(tape, bundle, batch, cfg, rng, /*from_y=*/false);
}

LossResult vcca_private_loss(Tape& tape, const ModelBundle& bundle,
                             const Batch& batch, const ObjectiveConfig& cfg,
                             const StepRng& rng) {
  require_kind(bundle, ObjectiveKind::VccaPrivate);
  return vcca_single_bound_loss(tape, bundle, batch, cfg, rng, /*from_y=*/false);
}

LossResult bi_vcca_loss(Tape& tape, const ModelBundle& bundle, const Batch& batch,
                        const ObjectiveConfig& cfg, const StepRng& rng) {
  if (!is_bi(bundle.kind)) {
    throw ConfigError("bi_vcca_loss requires a BI_VCCA or BI_VCCA_PRIVATE bundle");
  }
  bundle.validate();
  cfg.validate();
  check_batch(bundle, batch);
  const BoundBundle b = bind_bundle(tape, bundle);
  const BoundSums from_x = vcca_bound(tape, b, batch, cfg, rng, /*from_y=*/false);
  const BoundSums from_y = vcca_bound(tape, b, batch, cfg, rng, /*from_y=*/true);

  // Convex combination applied term-wise, so mu in {0,1} collapses to the
  // single-bound arithmetic exactly.
  auto combine = [&](const Var& a, const Var& c) -> Var {
    if (!a.valid()) return Var();
    return add(scale(a, cfg.mu), scale(c, 1.0 - cfg.mu));
  };
  BoundSums mixed;
  mixed.kl_z = combine(from_x.kl_z, from_y.kl_z);
  mixed.kl_hx = combine(from_x.kl_hx, from_y.kl_hx);
  mixed.kl_hy = combine(from_x.kl_hy, from_y.kl_hy);
  mixed.rec_x = combine(from_x.rec_x, from_y.rec_x);
  mixed.rec_y = combine(from_x.rec_y, from_y.rec_y);

  LossResult result = assemble(mixed, batch.size(), cfg, cfg.mc_samples);
  const LossResult tx = assemble(from_x, batch.size(), cfg, cfg.mc_samples);
  const LossResult ty = assemble(from_y, batch.size(), cfg, cfg.mc_samples);
  result.bound_terms = std::make_pair(tx.terms, ty.terms);
  result.param_vars = parameter_vars(b);
  return result;
}

namespace {

// Shared MVAE path: deterministic code from view 1, l2 reconstruction for
// view 1, and l2 (MVAE) or cross-entropy (MVAE_VAR) for view 2.
LossResult mvae_impl(Tape& tape, const ModelBundle& bundle, const Batch& batch,
                     const ObjectiveConfig& cfg, const StepRng& rng) {
  bundle.validate();
  cfg.validate();
  check_batch(bundle, batch);
  const DropoutPlan drop{cfg.dropout_rate, cfg.training};
  const BoundBundle b = bind_bundle(tape, bundle);
  const Var xc = tape.constant(batch.x);
  const Var yc = tape.constant(batch.y);

  Rng enc_rng = rng.dropout_stream(kDropEncZ, 0);
  Var code = mlp_raw(b.enc_zx, xc, drop, enc_rng);
  Rng code_rng = rng.dropout_stream(kDropLatentZ, 0);
  code = apply_dropout(code, cfg.dropout_rate, code_rng, cfg.training);

  Rng dx_rng = rng.dropout_stream(kDropDecX, 0);
  const ObsParams px = decode(*b.dec_x, code, drop, dx_rng);
  Rng dy_rng = rng.dropout_stream(kDropDecY, 0);
  const ObsParams py = decode(*b.dec_y, code, drop, dy_rng);

  BoundSums sums;
  sums.rec_x = scale(sum(square(sub(xc, px.mean))), -0.5);
  if (bundle.kind == ObjectiveKind::MvaeVar) {
    sums.rec_y = bernoulli_log_lik(yc, py.mean);
  } else {
    sums.rec_y = scale(sum(square(sub(yc, py.mean))), -0.5);
  }
  LossResult result = assemble(sums, batch.size(), cfg, 1);
  result.param_vars = parameter_vars(b);
  return result;
}

}  // namespace

LossResult mvae_loss(Tape& tape, const ModelBundle& bundle, const Batch& batch,
                     const ObjectiveConfig& cfg, const StepRng& rng) {
  require_kind(bundle, ObjectiveKind::Mvae);
  return mvae_impl(tape, bundle, batch, cfg, rng);
}

LossResult mvae_var_loss(Tape& tape, const ModelBundle& bundle, const Batch& batch,
                         const ObjectiveConfig& cfg, const StepRng& rng) {
  require_kind(bundle, ObjectiveKind::MvaeVar);
  return mvae_impl(tape, bundle, batch, cfg, rng);
}

LossResult contrastive_loss(Tape& tape, const ModelBundle& bundle,
                            const Batch& batch,
                            const std::vector<std::size_t>& negatives,
                            const ObjectiveConfig& cfg, const StepRng& rng) {
  require_kind(bundle, ObjectiveKind::Contrastive);
  bundle.validate();
  cfg.validate();
  check_batch(bundle, batch);
  const std::size_t n = batch.size();
  if (negatives.size() != n) {
    throw ShapeError("contrastive_loss: one negative index per sample required");
  }
  Tensor y_neg({n, batch.y.cols()}, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    if (negatives[i] >= n) throw ShapeError("negative index out of range");
    for (std::size_t c = 0; c < batch.y.cols(); ++c) {
      y_neg.at(i, c) = batch.y.at(negatives[i], c);
    }
  }

  const DropoutPlan drop{cfg.dropout_rate, cfg.training};
  const BoundBundle b = bind_bundle(tape, bundle);
  Rng f_rng = rng.dropout_stream(kDropEncZ, 0);
  Var f = mlp_raw(b.enc_zx, tape.constant(batch.x), drop, f_rng);
  Rng g_rng = rng.dropout_stream(kDropEncHy, 0);
  Var g_pos = mlp_raw(*b.enc_zy, tape.constant(batch.y), drop, g_rng);
  Rng gn_rng = rng.dropout_stream(kDropEncHy, 1);
  Var g_neg = mlp_raw(*b.enc_zy, tape.constant(std::move(y_neg)), drop, gn_rng);

  // Row norms guarded below by ~1e-12 to avoid 0/0 at init.
  auto inv_norm = [&](const Var& v) {
    return exp(scale(log(add(sum_rows(square(v)), 1e-24)), -0.5));
  };
  auto cosine_distance = [&](const Var& a, const Var& c) {
    Var cos = mul(mul(sum_rows(mul(a, c)), inv_norm(a)), inv_norm(c));
    return rsub(1.0, cos);
  };
  Var hinge = relu(add(sub(cosine_distance(f, g_pos), cosine_distance(f, g_neg)),
                       cfg.margin));
  Var loss = mean(hinge);

  ElboTerms terms;
  terms.total = -loss.value().item();
  LossResult result;
  result.loss = loss;
  result.terms = terms;
  result.param_vars = parameter_vars(b);
  return result;
}

std::vector<std::size_t> sample_negatives(std::size_t n, Rng rng) {
  if (n < 2) throw ConfigError("negative sampling requires at least two samples");
  std::vector<std::size_t> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    // Uniform over the n-1 indices excluding i.
    std::size_t j = static_cast<std::size_t>(rng.next_double() * static_cast<double>(n - 1));
    if (j >= n - 1) j = n - 2;
    out[i] = j >= i ? j + 1 : j;
  }
  return out;
}

LossResult compute_loss(Tape& tape, const ModelBundle& bundle, const Batch& batch,
                        const ObjectiveConfig& cfg, const StepRng& rng) {
  switch (bundle.kind) {
    case ObjectiveKind::Vcca:
      return vcca_loss(tape, bundle, batch, cfg, rng);
    case ObjectiveKind::VccaPrivate:
      return vcca_private_loss(tape, bundle, batch, cfg, rng);
    case ObjectiveKind::BiVcca:
    case ObjectiveKind::BiVccaPrivate:
      return bi_vcca_loss(tape, bundle, batch, cfg, rng);
    case ObjectiveKind::Mvae:
      return mvae_loss(tape, bundle, batch, cfg, rng);
    case ObjectiveKind::MvaeVar:
      return mvae_var_loss(tape, bundle, batch, cfg, rng);
    case ObjectiveKind::Contrastive: {
      auto negatives = sample_negatives(batch.size(), rng.negatives_stream());
      return contrastive_loss(tape, bundle, batch, negatives, cfg, rng);
    }
  }
  throw ConfigError("unhandled objective kind");
}

}  // namespace mvlatent
