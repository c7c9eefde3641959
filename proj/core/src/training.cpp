#include "mvlatent/training.hpp"

#include <nlohmann/json.hpp>

#include <bit>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "mvlatent/datasets.hpp"

namespace mvlatent {

using nlohmann::json;

AdamState::AdamState(const std::vector<const Tensor*>& params, AdamConfig cfg)
    : cfg_(cfg) {
  m_.reserve(params.size());
  v_.reserve(params.size());
  for (const Tensor* p : params) {
    m_.emplace_back(p->shape(), 0.0);
    v_.emplace_back(p->shape(), 0.0);
  }
}

void AdamState::restore(std::vector<Tensor> m, std::vector<Tensor> v,
                        std::uint64_t t) {
  m_ = std::move(m);
  v_ = std::move(v);
  t_ = t;
}

void AdamState::step(const std::vector<Tensor*>& params,
                     const std::vector<Tensor>& grads) {
  if (params.size() != m_.size() || grads.size() != m_.size()) {
    throw ShapeError("adam_step: parameter/gradient count mismatch");
  }
  double clip_scale = 1.0;
  if (cfg_.clip_norm > 0.0) {
    double sq = 0.0;
    for (const Tensor& g : grads)
      for (double v : g.data()) sq += v * v;
    const double norm = std::sqrt(sq);
    if (norm > cfg_.clip_norm) clip_scale = cfg_.clip_norm / norm;
  }
  ++t_;
  const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
  for (std::size_t i = 0; i < params.size(); ++i) {
    Tensor& p = *params[i];
    const Tensor& g = grads[i];
    if (!p.same_shape(g) || !p.same_shape(m_[i])) {
      throw ShapeError("adam_step: shape mismatch at parameter " + std::to_string(i));
    }
    for (std::size_t j = 0; j < p.size(); ++j) {
      const double gj = g.data()[j] * clip_scale;
      double& mj = m_[i].data()[j];
      double& vj = v_[i].data()[j];
      mj = cfg_.beta1 * mj + (1.0 - cfg_.beta1) * gj;
      vj = cfg_.beta2 * vj + (1.0 - cfg_.beta2) * gj * gj;
      const double mhat = mj / bc1;
      const double vhat = vj / bc2;
      p.data()[j] -= cfg_.learning_rate * mhat / (std::sqrt(vhat) + cfg_.epsilon);
    }
  }
}

void adam_step(const std::vector<Tensor*>& params, const std::vector<Tensor>& grads,
               AdamState& state) {
  state.step(params, grads);
}

ObjectiveConfig TrainConfig::objective_config() const {
  ObjectiveConfig cfg;
  cfg.mc_samples = mc_samples;
  cfg.mu = mu;
  cfg.w_x = w_x;
  cfg.w_y = w_y;
  cfg.dropout_rate = dropout_rate;
  cfg.margin = margin;
  cfg.training = true;
  return cfg;
}

std::vector<std::size_t> shuffled_indices(std::size_t n, Rng rng) {
  std::vector<std::size_t> idx(n);
  for (std::size_t i = 0; i < n; ++i) idx[i] = i;
  for (std::size_t i = n; i > 1; --i) {
    const std::size_t j =
        static_cast<std::size_t>(rng.next_double() * static_cast<double>(i));
    std::swap(idx[i - 1], idx[j >= i ? i - 1 : j]);
  }
  return idx;
}

namespace {

std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

std::string optional_field(const std::optional<double>& v) {
  return v ? format_double(*v) : std::string();
}

}  // namespace

std::string metrics_csv_header() {
  return "epoch,step,total,kl_z,kl_hx,kl_hy,rec_x,rec_y,wall_ms";
}

std::string metrics_csv_row(const MetricsRow& row) {
  std::ostringstream os;
  os << row.epoch << ',' << row.step << ',' << format_double(row.terms.total) << ','
     << optional_field(row.terms.kl_z) << ',' << optional_field(row.terms.kl_hx)
     << ',' << optional_field(row.terms.kl_hy) << ','
     << optional_field(row.terms.rec_x) << ',' << optional_field(row.terms.rec_y)
     << ',' << format_double(row.wall_ms);
  return os.str();
}

namespace {

void validate_train_config(const TrainConfig& cfg, std::size_t train_size) {
  if (cfg.epochs == 0) throw ConfigError("epochs must be positive");
  if (cfg.batch_size == 0 || cfg.batch_size > train_size) {
    throw ConfigError("batch_size must lie in [1, train split size]");
  }
  if (!(cfg.learning_rate > 0.0)) throw ConfigError("learning_rate must be > 0");
}

}  // namespace

TrainResult train(ModelBundle& bundle, const TwoViewDataset& data,
                  const TrainConfig& config, const std::filesystem::path& run_dir,
                  const TrainerState* resume) {
  bundle.validate();
  data.validate();
  const std::vector<std::size_t>& train_idx = data.splits.train;
  if (train_idx.empty()) throw ConfigError("train split is empty");
  validate_train_config(config, train_idx.size());

  ObjectiveConfig obj_cfg = config.objective_config();
  obj_cfg.validate();

  std::vector<Tensor*> params = bundle.parameters();
  AdamConfig adam_cfg;
  adam_cfg.learning_rate = config.learning_rate;
  adam_cfg.clip_norm = config.clip_norm;

  TrainerState state;
  AdamState adam({params.begin(), params.end()}, adam_cfg);
  if (resume) {
    state = *resume;
    if (state.seed != config.seed) {
      throw ConfigError("resume seed does not match config seed");
    }
    if (state.adam) {
      // Moments come from the checkpoint; hyperparameters from the config.
      adam.restore(state.adam->first_moments(), state.adam->second_moments(),
                   state.adam->t());
    }
  } else {
    state.seed = config.seed;
  }

  std::ofstream metrics;
  if (!run_dir.empty()) {
    std::filesystem::create_directories(run_dir);
    const auto metrics_path = run_dir / "metrics.csv";
    const bool append = resume && std::filesystem::exists(metrics_path);
    metrics.open(metrics_path, append ? std::ios::app : std::ios::trunc);
    if (!metrics) throw IoError("cannot open " + metrics_path.string());
    if (!append) metrics << metrics_csv_header() << '\n';
  }

  const std::size_t steps_per_epoch =
      (train_idx.size() + config.batch_size - 1) / config.batch_size;

  TrainResult result;
  const Rng run_rng(config.seed);
  for (std::uint64_t epoch = state.next_epoch; epoch < config.epochs; ++epoch) {
    const Rng epoch_rng = run_rng.substream(0).substream(epoch);
    std::vector<std::size_t> order =
        shuffled_indices(train_idx.size(), epoch_rng.substream(0));

    for (std::size_t s = 0; s < steps_per_epoch; ++s) {
      const auto t0 = std::chrono::steady_clock::now();
      const std::size_t begin = s * config.batch_size;
      const std::size_t end = std::min(begin + config.batch_size, train_idx.size());
      std::vector<std::size_t> rows(end - begin);
      for (std::size_t i = begin; i < end; ++i) rows[i - begin] = train_idx[order[i]];

      Batch batch{data.gather_x(rows), data.gather_y(rows)};
      const StepRng step_rng = StepRng::for_step(config.seed, epoch, s);

      Tape tape;
      LossResult loss;
      try {
        loss = compute_loss(tape, bundle, batch, obj_cfg, step_rng);
      } catch (const NumericError& e) {
        std::string detail = e.what();
        if (!result.rows.empty()) {
          detail += "; last step terms: " + metrics_csv_row(result.rows.back());
        }
        throw NumericError("numerical abort at epoch " + std::to_string(epoch) +
                           " step " + std::to_string(state.global_step) + ": " +
                           detail);
      }
      tape.backward(loss.loss);

      // Gradients in canonical order; a parameter disconnected from the
      // loss contributes zeros.
      std::vector<Tensor> grads;
      grads.reserve(params.size());
      for (std::size_t i = 0; i < params.size(); ++i) {
        const Var& v = loss.param_vars[i];
        Tensor g = tape.has_grad(v) ? tape.grad(v) : Tensor(params[i]->shape(), 0.0);
        if (!g.all_finite()) {
          throw NumericError("non-finite gradient at epoch " + std::to_string(epoch) +
                             " step " + std::to_string(state.global_step));
        }
        grads.push_back(std::move(g));
      }
      adam.step(params, grads);
      ++state.global_step;

      MetricsRow row;
      row.epoch = epoch;
      row.step = state.global_step - 1;
      row.terms = loss.terms;
      row.wall_ms = std::chrono::duration<double, std::milli>(
                        std::chrono::steady_clock::now() - t0)
                        .count();
      if (metrics.is_open()) metrics << metrics_csv_row(row) << '\n';
      result.rows.push_back(std::move(row));
    }

    state.next_epoch = epoch + 1;
    if (!run_dir.empty() && config.eval_every > 0 &&
        (epoch + 1) % config.eval_every == 0 && epoch + 1 < config.epochs) {
      state.adam = adam;
      save_checkpoint(run_dir / "checkpoint", bundle, state);
    }
  }

  state.adam = adam;
  if (!run_dir.empty()) {
    save_checkpoint(run_dir / "checkpoint", bundle, state);
  }
  result.state = state;
  return result;
}

// ---------------------------------------------------------------------------
// Checkpoint

namespace {

void write_f64_le(std::ofstream& out, double v) {
  const std::uint64_t bits = std::bit_cast<std::uint64_t>(v);
  unsigned char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(bits >> (8 * i));
  out.write(reinterpret_cast<const char*>(b), 8);
}

double read_f64_le(std::ifstream& in) {
  unsigned char b[8];
  in.read(reinterpret_cast<char*>(b), 8);
  std::uint64_t bits = 0;
  for (int i = 0; i < 8; ++i) bits |= static_cast<std::uint64_t>(b[i]) << (8 * i);
  return std::bit_cast<double>(bits);
}

json network_to_json(const Network& net) {
  json j;
  j["input_dim"] = net.spec.input_dim;
  j["hidden"] = net.spec.hidden;
  j["head"] = head_kind_name(net.spec.head);
  j["head_dim"] = net.spec.head_dim;
  j["squash_means"] = net.spec.squash_means;
  return j;
}

MlpSpec spec_from_json(const json& j) {
  MlpSpec spec;
  spec.input_dim = j.at("input_dim").get<std::size_t>();
  spec.hidden = j.at("hidden").get<std::vector<std::size_t>>();
  spec.head = head_kind_from_name(j.at("head").get<std::string>());
  spec.head_dim = j.at("head_dim").get<std::size_t>();
  spec.squash_means = j.at("squash_means").get<bool>();
  return spec;
}

Network empty_network(const MlpSpec& spec) {
  Network net;
  net.spec = spec;
  std::size_t in = spec.input_dim;
  auto push = [&](std::size_t out) {
    Tensor w({in, out}, 0.0);
    w.requires_grad = true;
    Tensor b({out}, 0.0);
    b.requires_grad = true;
    net.weights.push_back(std::move(w));
    net.biases.push_back(std::move(b));
    in = out;
  };
  for (std::size_t width : spec.hidden) push(width);
  push(spec.head_width());
  return net;
}

json obs_to_json(const ObservationModel& obs) {
  json j;
  j["kind"] = obs_kind_name(obs.kind);
  j["dim"] = obs.dim;
  j["sigma"] = obs.sigma;
  return j;
}

ObservationModel obs_from_json(const json& j) {
  return make_observation_model(obs_kind_from_name(j.at("kind").get<std::string>()),
                                j.at("dim").get<std::size_t>(),
                                j.at("sigma").get<double>());
}

}  // namespace

void save_checkpoint(const std::filesystem::path& dir, const ModelBundle& bundle,
                     const TrainerState& state) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError("cannot create checkpoint dir " + dir.string());

  const std::vector<const Tensor*> params = bundle.parameters();
  std::size_t total = 0;
  for (const Tensor* p : params) total += p->size();

  json manifest;
  manifest["format_version"] = kCheckpointFormatVersion;
  manifest["objective_kind"] = objective_kind_name(bundle.kind);
  manifest["dims"] = {{"d_z", bundle.d_z}, {"d_hx", bundle.d_hx}, {"d_hy", bundle.d_hy}};
  json nets = json::object();
  nets["enc_zx"] = network_to_json(bundle.enc_zx);
  if (bundle.enc_zy) nets["enc_zy"] = network_to_json(*bundle.enc_zy);
  if (bundle.enc_hx) nets["enc_hx"] = network_to_json(*bundle.enc_hx);
  if (bundle.enc_hy) nets["enc_hy"] = network_to_json(*bundle.enc_hy);
  if (bundle.dec_x) nets["dec_x"] = network_to_json(*bundle.dec_x);
  if (bundle.dec_y) nets["dec_y"] = network_to_json(*bundle.dec_y);
  manifest["networks"] = nets;
  manifest["observation"] = {{"x", obs_to_json(bundle.obs_x)},
                             {"y", obs_to_json(bundle.obs_y)}};
  manifest["parameter_order"] = bundle.parameter_names();
  manifest["param_count"] = total;
  manifest["rng"] = {{"seed", state.seed},
                     {"next_epoch", state.next_epoch},
                     {"global_step", state.global_step}};
  manifest["adam_present"] = state.adam.has_value();
  if (state.adam) manifest["adam_t"] = state.adam->t();

  {
    std::ofstream out(dir / "manifest.json");
    if (!out) throw IoError("cannot write manifest.json in " + dir.string());
    out << manifest.dump(2) << '\n';
  }
  {
    std::ofstream out(dir / "params.bin", std::ios::binary);
    if (!out) throw IoError("cannot write params.bin in " + dir.string());
    for (const Tensor* p : params)
      for (double v : p->data()) write_f64_le(out, v);
  }
  if (state.adam) {
    std::ofstream out(dir / "adam.bin", std::ios::binary);
    if (!out) throw IoError("cannot write adam.bin in " + dir.string());
    for (const Tensor& t : state.adam->first_moments())
      for (double v : t.data()) write_f64_le(out, v);
    for (const Tensor& t : state.adam->second_moments())
      for (double v : t.data()) write_f64_le(out, v);
  }
}

LoadedCheckpoint load_checkpoint(const std::filesystem::path& dir) {
  std::ifstream in(dir / "manifest.json");
  if (!in) throw IoError("cannot open " + (dir / "manifest.json").string());
  json manifest;
  try {
    in >> manifest;
  } catch (const json::exception& e) {
    throw IoError("corrupt manifest.json: " + std::string(e.what()));
  }

  const int version = manifest.at("format_version").get<int>();
  if (version != kCheckpointFormatVersion) {
    throw IoError("checkpoint format version " + std::to_string(version) +
                  " is not supported (expected " +
                  std::to_string(kCheckpointFormatVersion) + ")");
  }

  LoadedCheckpoint out;
  ModelBundle& bundle = out.bundle;
  bundle.kind =
      objective_kind_from_name(manifest.at("objective_kind").get<std::string>());
  const json& dims = manifest.at("dims");
  bundle.d_z = dims.at("d_z").get<std::size_t>();
  bundle.d_hx = dims.at("d_hx").get<std::size_t>();
  bundle.d_hy = dims.at("d_hy").get<std::size_t>();

  const json& nets = manifest.at("networks");
  bundle.enc_zx = empty_network(spec_from_json(nets.at("enc_zx")));
  if (nets.contains("enc_zy")) bundle.enc_zy = empty_network(spec_from_json(nets.at("enc_zy")));
  if (nets.contains("enc_hx")) bundle.enc_hx = empty_network(spec_from_json(nets.at("enc_hx")));
  if (nets.contains("enc_hy")) bundle.enc_hy = empty_network(spec_from_json(nets.at("enc_hy")));
  if (nets.contains("dec_x")) bundle.dec_x = empty_network(spec_from_json(nets.at("dec_x")));
  if (nets.contains("dec_y")) bundle.dec_y = empty_network(spec_from_json(nets.at("dec_y")));
  bundle.obs_x = obs_from_json(manifest.at("observation").at("x"));
  bundle.obs_y = obs_from_json(manifest.at("observation").at("y"));

  std::vector<Tensor*> params = bundle.parameters();
  std::size_t total = 0;
  for (Tensor* p : params) total += p->size();
  if (manifest.at("param_count").get<std::size_t>() != total) {
    throw IoError("manifest param_count disagrees with network specs");
  }

  const auto params_path = dir / "params.bin";
  const auto blob_size = std::filesystem::file_size(params_path);
  if (blob_size != total * 8) {
    throw IoError("params.bin length mismatch: expected " +
                  std::to_string(total * 8) + " bytes, found " +
                  std::to_string(blob_size));
  }
  std::ifstream blob(params_path, std::ios::binary);
  if (!blob) throw IoError("cannot open " + params_path.string());
  for (Tensor* p : params)
    for (double& v : p->data()) v = read_f64_le(blob);

  TrainerState& state = out.state;
  const json& rng = manifest.at("rng");
  state.seed = rng.at("seed").get<std::uint64_t>();
  state.next_epoch = rng.at("next_epoch").get<std::uint64_t>();
  state.global_step = rng.at("global_step").get<std::uint64_t>();

  if (manifest.at("adam_present").get<bool>()) {
    const auto adam_path = dir / "adam.bin";
    const auto adam_size = std::filesystem::file_size(adam_path);
    if (adam_size != total * 16) {
      throw IoError("adam.bin length mismatch: expected " +
                    std::to_string(total * 16) + " bytes, found " +
                    std::to_string(adam_size));
    }
    std::ifstream astream(adam_path, std::ios::binary);
    if (!astream) throw IoError("cannot open " + adam_path.string());
    std::vector<Tensor> m, v;
    for (Tensor* p : params) {
      Tensor t(p->shape(), 0.0);
      for (double& x : t.data()) x = read_f64_le(astream);
      m.push_back(std::move(t));
    }
    for (Tensor* p : params) {
      Tensor t(p->shape(), 0.0);
      for (double& x : t.data()) x = read_f64_le(astream);
      v.push_back(std::move(t));
    }
    AdamState adam({params.begin(), params.end()}, AdamConfig{});
    adam.restore(std::move(m), std::move(v), manifest.at("adam_t").get<std::uint64_t>());
    state.adam = adam;
  }
  return out;
}

}  // namespace mvlatent
