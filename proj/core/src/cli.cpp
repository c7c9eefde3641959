#include "mvlatent/cli.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include "mvlatent/evaluation.hpp"

namespace mvlatent::cli {

using nlohmann::json;

namespace {

void check_keys(const json& j, const std::string& section,
                const std::set<std::string>& allowed) {
  if (!j.is_object()) {
    throw ConfigError("config section '" + section + "' must be an object");
  }
  for (const auto& [key, _] : j.items()) {
    if (!allowed.contains(key)) {
      throw ConfigError("unknown key '" + key + "' in config section '" + section +
                        "'");
    }
  }
}

template <typename T>
T get_or(const json& j, const char* key, T fallback) {
  if (!j.contains(key)) return fallback;
  try {
    return j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ConfigError("bad value for '" + std::string(key) + "': " + e.what());
  }
}

DataConfig parse_data(const json& j) {
  check_keys(j, "data",
             {"kind", "classes", "image_side", "train", "tune", "test", "rotation",
              "noise", "jitter_sigma", "seed", "path"});
  DataConfig cfg;
  cfg.kind = get_or<std::string>(j, "kind", "synthetic");
  if (cfg.kind != "synthetic" && cfg.kind != "dir") {
    throw ConfigError("data.kind must be 'synthetic' or 'dir'");
  }
  cfg.synth.class_count = get_or<std::size_t>(j, "classes", 10);
  cfg.synth.image_side = get_or<std::size_t>(j, "image_side", 16);
  cfg.synth.n_train = get_or<std::size_t>(j, "train", 5000);
  cfg.synth.n_tune = get_or<std::size_t>(j, "tune", 1000);
  cfg.synth.n_test = get_or<std::size_t>(j, "test", 1000);
  if (j.contains("rotation")) {
    const auto rot = j.at("rotation").get<std::vector<double>>();
    if (rot.size() != 2) throw ConfigError("data.rotation must be [lo, hi]");
    cfg.synth.rotation_lo = rot[0];
    cfg.synth.rotation_hi = rot[1];
  }
  if (j.contains("noise")) {
    const auto noise = j.at("noise").get<std::vector<double>>();
    if (noise.size() != 2) throw ConfigError("data.noise must be [lo, hi]");
    cfg.synth.noise_lo = noise[0];
    cfg.synth.noise_hi = noise[1];
  }
  cfg.synth.jitter_sigma = get_or<double>(j, "jitter_sigma", 0.1);
  cfg.synth.seed = get_or<std::uint64_t>(j, "seed", 1);
  cfg.path = get_or<std::string>(j, "path", "");
  if (cfg.kind == "dir" && cfg.path.empty()) {
    throw ConfigError("data.kind 'dir' requires data.path");
  }
  return cfg;
}

ObsKind parse_obs(const json& j, const char* which, double* sigma, ObsKind fallback) {
  if (!j.contains(which)) return fallback;
  const json& o = j.at(which);
  check_keys(o, which, {"kind", "sigma"});
  const ObsKind kind = obs_kind_from_name(o.at("kind").get<std::string>());
  *sigma = get_or<double>(o, "sigma", 1.0);
  return kind;
}

ModelConfig parse_model(const json& j) {
  check_keys(j, "model",
             {"objective", "d_z", "d_hx", "d_hy", "hidden", "obs_x", "obs_y",
              "squash_decoder_means"});
  ModelConfig cfg;
  cfg.kind = objective_kind_from_name(get_or<std::string>(j, "objective", "VCCA"));
  cfg.d_z = get_or<std::size_t>(j, "d_z", 10);
  cfg.d_hx = get_or<std::size_t>(j, "d_hx", is_private(cfg.kind) ? 30 : 0);
  cfg.d_hy = get_or<std::size_t>(j, "d_hy", is_private(cfg.kind) ? 30 : 0);
  cfg.hidden = get_or<std::vector<std::size_t>>(j, "hidden", {128, 128});
  cfg.obs_x = parse_obs(j, "obs_x", &cfg.sigma_x, ObsKind::BernoulliMean);
  cfg.obs_y = parse_obs(j, "obs_y", &cfg.sigma_y, ObsKind::BernoulliMean);
  cfg.squash_decoder_means = get_or<bool>(j, "squash_decoder_means", true);
  return cfg;
}

TrainConfig parse_train(const json& j) {
  check_keys(j, "train",
             {"epochs", "batch_size", "learning_rate", "seed", "L", "mu", "dropout",
              "w_x", "w_y", "margin", "clip_norm", "eval_every"});
  TrainConfig cfg;
  cfg.epochs = get_or<std::size_t>(j, "epochs", 50);
  cfg.batch_size = get_or<std::size_t>(j, "batch_size", 100);
  cfg.learning_rate = get_or<double>(j, "learning_rate", 1e-3);
  cfg.seed = get_or<std::uint64_t>(j, "seed", 0);
  cfg.mc_samples = get_or<std::size_t>(j, "L", 1);
  cfg.mu = get_or<double>(j, "mu", 1.0);
  cfg.dropout_rate = get_or<double>(j, "dropout", 0.0);
  cfg.w_x = get_or<double>(j, "w_x", 1.0);
  cfg.w_y = get_or<double>(j, "w_y", 1.0);
  cfg.margin = get_or<double>(j, "margin", 0.5);
  cfg.clip_norm = get_or<double>(j, "clip_norm", 0.0);
  cfg.eval_every = get_or<std::size_t>(j, "eval_every", 0);
  return cfg;
}

EvalConfig parse_eval(const json& j) {
  check_keys(j, "eval",
             {"features", "classifier_grid", "include_raw_baseline",
              "include_cca_baseline", "export_features", "threads", "grid_samples",
              "traversal_size"});
  EvalConfig cfg;
  cfg.features = get_or<std::vector<std::string>>(j, "features", {"z_from_x"});
  cfg.classifier_grid =
      get_or<std::vector<double>>(j, "classifier_grid", {0.01, 0.1, 1.0, 10.0});
  cfg.include_raw_baseline = get_or<bool>(j, "include_raw_baseline", false);
  cfg.include_cca_baseline = get_or<bool>(j, "include_cca_baseline", false);
  cfg.export_features = get_or<bool>(j, "export_features", false);
  cfg.threads = get_or<std::size_t>(j, "threads", 0);
  cfg.grid_samples = get_or<std::size_t>(j, "grid_samples", 8);
  cfg.traversal_size = get_or<std::size_t>(j, "traversal_size", 8);
  return cfg;
}

json synth_to_json(const SynthConfig& s) {
  json j;
  j["classes"] = s.class_count;
  j["image_side"] = s.image_side;
  j["train"] = s.n_train;
  j["tune"] = s.n_tune;
  j["test"] = s.n_test;
  j["rotation"] = {s.rotation_lo, s.rotation_hi};
  j["noise"] = {s.noise_lo, s.noise_hi};
  j["jitter_sigma"] = s.jitter_sigma;
  j["seed"] = s.seed;
  return j;
}

}  // namespace

void RunConfig::validate() const {
  if (data.kind == "synthetic") data.synth.validate();
  // Hyperparameter grids from the experimental protocol.
  static const std::set<std::size_t> kDzGrid = {10, 20, 30, 40, 50};
  if (!kDzGrid.contains(model.d_z)) {
    throw ConfigError("model.d_z must lie on the grid {10, 20, 30, 40, 50}");
  }
  static const std::vector<double> kDropoutGrid = {0.0, 0.1, 0.2, 0.4};
  if (std::find(kDropoutGrid.begin(), kDropoutGrid.end(), train.dropout_rate) ==
      kDropoutGrid.end()) {
    throw ConfigError("train.dropout must lie on the grid {0, 0.1, 0.2, 0.4}");
  }
  if (train.mu < 0.0 || train.mu > 1.0) throw ConfigError("train.mu must lie in [0, 1]");
  if (train.mc_samples < 1) throw ConfigError("train.L must be >= 1");
  for (const std::string& f : eval.features) feature_source_from_name(f);
  for (double mu : sweep_mu) {
    if (mu < 0.0 || mu > 1.0) throw ConfigError("sweep.mu_list entries must lie in [0, 1]");
  }
}

RunConfig parse_run_config(const std::string& json_text) {
  json root;
  try {
    root = json::parse(json_text);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  check_keys(root, "(root)", {"data", "model", "train", "eval", "sweep", "out"});
  RunConfig cfg;
  if (root.contains("data")) cfg.data = parse_data(root.at("data"));
  if (root.contains("model")) cfg.model = parse_model(root.at("model"));
  if (root.contains("train")) cfg.train = parse_train(root.at("train"));
  if (root.contains("eval")) cfg.eval = parse_eval(root.at("eval"));
  if (root.contains("sweep")) {
    check_keys(root.at("sweep"), "sweep", {"mu_list"});
    cfg.sweep_mu =
        get_or<std::vector<double>>(root.at("sweep"), "mu_list", cfg.sweep_mu);
  }
  if (root.contains("out")) {
    check_keys(root.at("out"), "out", {"dir"});
    cfg.out_dir = get_or<std::string>(root.at("out"), "dir", "runs/run");
  }
  cfg.validate();
  return cfg;
}

RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_run_config(buf.str());
}

std::string serialize_run_config(const RunConfig& cfg) {
  json root;
  json data = synth_to_json(cfg.data.synth);
  data["kind"] = cfg.data.kind;
  data["path"] = cfg.data.path;
  root["data"] = data;

  json model;
  model["objective"] = objective_kind_name(cfg.model.kind);
  model["d_z"] = cfg.model.d_z;
  model["d_hx"] = cfg.model.d_hx;
  model["d_hy"] = cfg.model.d_hy;
  model["hidden"] = cfg.model.hidden;
  model["obs_x"] = {{"kind", obs_kind_name(cfg.model.obs_x)}, {"sigma", cfg.model.sigma_x}};
  model["obs_y"] = {{"kind", obs_kind_name(cfg.model.obs_y)}, {"sigma", cfg.model.sigma_y}};
  model["squash_decoder_means"] = cfg.model.squash_decoder_means;
  root["model"] = model;

  json train;
  train["epochs"] = cfg.train.epochs;
  train["batch_size"] = cfg.train.batch_size;
  train["learning_rate"] = cfg.train.learning_rate;
  train["seed"] = cfg.train.seed;
  train["L"] = cfg.train.mc_samples;
  train["mu"] = cfg.train.mu;
  train["dropout"] = cfg.train.dropout_rate;
  train["w_x"] = cfg.train.w_x;
  train["w_y"] = cfg.train.w_y;
  train["margin"] = cfg.train.margin;
  train["clip_norm"] = cfg.train.clip_norm;
  train["eval_every"] = cfg.train.eval_every;
  root["train"] = train;

  json eval;
  eval["features"] = cfg.eval.features;
  eval["classifier_grid"] = cfg.eval.classifier_grid;
  eval["include_raw_baseline"] = cfg.eval.include_raw_baseline;
  eval["include_cca_baseline"] = cfg.eval.include_cca_baseline;
  eval["export_features"] = cfg.eval.export_features;
  eval["threads"] = cfg.eval.threads;
  eval["grid_samples"] = cfg.eval.grid_samples;
  eval["traversal_size"] = cfg.eval.traversal_size;
  root["eval"] = eval;

  root["sweep"] = {{"mu_list", cfg.sweep_mu}};
  root["out"] = {{"dir", cfg.out_dir.string()}};
  return root.dump(2) + "\n";
}

TwoViewDataset load_data(const DataConfig& cfg) {
  if (cfg.kind == "dir") return load_dataset(cfg.path);
  return generate_two_view(cfg.synth);
}

void cmd_gen_data(const RunConfig& cfg, const std::filesystem::path& out_dir) {
  const TwoViewDataset ds = generate_two_view(cfg.data.synth);
  save_dataset(out_dir, ds, cfg.data.synth.seed);
}

namespace {

ModelBundle build_bundle(const RunConfig& cfg, const TwoViewDataset& ds) {
  ModelConfig mc = cfg.model;
  mc.d_x = ds.x.cols();
  mc.d_y = ds.y.cols();
  Rng init = Rng(cfg.train.seed).substream(2);
  return make_model_bundle(mc, init);
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << text;
}

}  // namespace

TrainOutcome cmd_train(const RunConfig& cfg,
                       const std::filesystem::path& resume_checkpoint) {
  cfg.validate();
  const TwoViewDataset ds = load_data(cfg.data);
  std::error_code ec;
  std::filesystem::create_directories(cfg.out_dir, ec);
  if (ec) throw IoError("cannot create run dir " + cfg.out_dir.string());
  write_text(cfg.out_dir / "config.resolved.json", serialize_run_config(cfg));

  TrainResult result;
  if (resume_checkpoint.empty()) {
    ModelBundle bundle = build_bundle(cfg, ds);
    result = train(bundle, ds, cfg.train, cfg.out_dir);
  } else {
    LoadedCheckpoint loaded = load_checkpoint(resume_checkpoint);
    result = train(loaded.bundle, ds, cfg.train, cfg.out_dir, &loaded.state);
  }

  TrainOutcome outcome;
  outcome.run_dir = cfg.out_dir;
  if (!result.rows.empty()) {
    outcome.first_total = result.rows.front().terms.total;
    outcome.last_total = result.rows.back().terms.total;
  }
  return outcome;
}

namespace {

struct SplitView {
  Tensor x;
  Tensor y;
  std::vector<int> labels;
};

SplitView make_split(const TwoViewDataset& ds, const std::vector<std::size_t>& idx) {
  SplitView view;
  view.x = ds.gather_x(idx);
  view.y = ds.gather_y(idx);
  if (!ds.labels.empty()) view.labels = ds.gather_labels(idx);
  return view;
}

double evaluate_feature_error(const Tensor& train_f, const std::vector<int>& train_l,
                              const Tensor& tune_f, const std::vector<int>& tune_l,
                              const Tensor& test_f, const std::vector<int>& test_l,
                              const std::vector<double>& grid, double* chosen_c,
                              double* tune_error) {
  auto sel = select_linear_classifier(train_f, train_l, tune_f, tune_l, grid);
  if (chosen_c) *chosen_c = sel.chosen_c;
  if (tune_error) *tune_error = sel.tune_error;
  return classification_error(sel.classifier, test_f, test_l);
}

}  // namespace

std::string cmd_eval(const RunConfig& cfg, const std::filesystem::path& checkpoint) {
  const TwoViewDataset ds = load_data(cfg.data);
  if (ds.labels.empty()) throw ConfigError("evaluation requires a labeled dataset");
  LoadedCheckpoint loaded = load_checkpoint(checkpoint);
  const ModelBundle& bundle = loaded.bundle;

  const SplitView train_v = make_split(ds, ds.splits.train);
  const SplitView tune_v = make_split(ds, ds.splits.tune);
  const SplitView test_v = make_split(ds, ds.splits.test);
  const std::size_t threads = cfg.eval.threads;

  json report;
  json errors = json::object();
  json chosen = json::object();
  for (const std::string& name : cfg.eval.features) {
    const FeatureSource source = feature_source_from_name(name);
    const FeatureMatrix ftr = extract_features(bundle, train_v.x, train_v.y, source, threads);
    const FeatureMatrix ftu = extract_features(bundle, tune_v.x, tune_v.y, source, threads);
    const FeatureMatrix fte = extract_features(bundle, test_v.x, test_v.y, source, threads);
    double c = 0.0, tune_err = 0.0;
    const double err = evaluate_feature_error(
        ftr.values, train_v.labels, ftu.values, tune_v.labels, fte.values,
        test_v.labels, cfg.eval.classifier_grid, &c, &tune_err);
    errors[name] = err;
    chosen[name] = {{"c", c}, {"tune_error", tune_err}};
    if (cfg.eval.export_features) {
      write_feature_csv(cfg.out_dir / ("features_" + name + ".csv"), fte,
                        test_v.labels);
    }
  }
  report["error_rate"] = errors;
  report["classifier"] = chosen;

  if (cfg.eval.include_raw_baseline) {
    report["raw_baseline"] = evaluate_feature_error(
        train_v.x, train_v.labels, tune_v.x, tune_v.labels, test_v.x, test_v.labels,
        cfg.eval.classifier_grid, nullptr, nullptr);
  }
  if (cfg.eval.include_cca_baseline) {
    const std::size_t k = std::min({bundle.d_z, train_v.x.cols(), train_v.y.cols()});
    auto cca = linear_cca(train_v.x, train_v.y, k);
    report["cca_baseline"] = evaluate_feature_error(
        cca.project_x(train_v.x), train_v.labels, cca.project_x(tune_v.x),
        tune_v.labels, cca.project_x(test_v.x), test_v.labels,
        cfg.eval.classifier_grid, nullptr, nullptr);
  }

  if (is_private(bundle.kind) && bundle.d_hx > 0 && bundle.d_hy > 0) {
    const FeatureMatrix z = extract_features(bundle, tune_v.x, tune_v.y,
                                             FeatureSource::ZFromX, threads);
    const FeatureMatrix hx =
        extract_features(bundle, tune_v.x, tune_v.y, FeatureSource::Hx, threads);
    const FeatureMatrix hy =
        extract_features(bundle, tune_v.x, tune_v.y, FeatureSource::Hy, threads);
    report["orthogonality"] = {
        {"z_hx", orthogonality_score(z.values, hx.values)},
        {"z_hy", orthogonality_score(z.values, hy.values)}};
  }

  std::error_code ec;
  std::filesystem::create_directories(cfg.out_dir, ec);
  const std::string text = report.dump(2) + "\n";
  write_text(cfg.out_dir / "report.json", text);
  return text;
}

void cmd_reconstruct(const RunConfig& cfg, const std::filesystem::path& checkpoint,
                     const std::filesystem::path& out_pgm) {
  const TwoViewDataset ds = load_data(cfg.data);
  LoadedCheckpoint loaded = load_checkpoint(checkpoint);
  const std::size_t n = std::min<std::size_t>(cfg.eval.grid_samples,
                                              ds.splits.test.size());
  if (n == 0) throw ConfigError("reconstruct needs a nonempty test split");
  std::vector<std::size_t> idx(ds.splits.test.begin(), ds.splits.test.begin() + n);
  reconstruct_grid(loaded.bundle, ds.gather_x(idx), ds.gather_y(idx), out_pgm,
                   Rng(cfg.train.seed).substream(3));
}

void cmd_traverse(const RunConfig& cfg, const std::filesystem::path& checkpoint,
                  const std::filesystem::path& out_pgm) {
  const TwoViewDataset ds = load_data(cfg.data);
  LoadedCheckpoint loaded = load_checkpoint(checkpoint);
  const std::size_t n = std::min<std::size_t>(cfg.eval.traversal_size,
                                              ds.splits.test.size());
  if (n == 0) throw ConfigError("traverse needs a nonempty test split");
  std::vector<std::size_t> idx(ds.splits.test.begin(), ds.splits.test.begin() + n);
  private_traversal_grid(loaded.bundle, ds.gather_x(idx), n, out_pgm,
                         Rng(cfg.train.seed).substream(4));
}

std::string cmd_sweep_mu(const RunConfig& cfg, const std::vector<double>& mu_list) {
  if (!is_bi(cfg.model.kind)) {
    throw ConfigError("sweep-mu requires a BI_VCCA or BI_VCCA_PRIVATE model");
  }
  if (mu_list.empty()) throw ConfigError("mu list is empty");
  const TwoViewDataset ds = load_data(cfg.data);
  if (ds.labels.empty()) throw ConfigError("sweep-mu requires a labeled dataset");

  const SplitView train_v = make_split(ds, ds.splits.train);
  const SplitView tune_v = make_split(ds, ds.splits.tune);
  const SplitView test_v = make_split(ds, ds.splits.test);

  std::ostringstream csv;
  csv << "mu,tune_metric,test_metric\n";
  char buf[96];
  for (double mu : mu_list) {
    RunConfig run = cfg;
    run.train.mu = mu;
    run.validate();
    ModelBundle bundle = build_bundle(run, ds);
    train(bundle, ds, run.train);

    const FeatureMatrix ftr = extract_features(bundle, train_v.x, train_v.y,
                                               FeatureSource::ZFromX, cfg.eval.threads);
    const FeatureMatrix ftu = extract_features(bundle, tune_v.x, tune_v.y,
                                               FeatureSource::ZFromX, cfg.eval.threads);
    const FeatureMatrix fte = extract_features(bundle, test_v.x, test_v.y,
                                               FeatureSource::ZFromX, cfg.eval.threads);
    auto sel = select_linear_classifier(ftr.values, train_v.labels, ftu.values,
                                        tune_v.labels, cfg.eval.classifier_grid);
    const double test_err = classification_error(sel.classifier, fte.values,
                                                 test_v.labels);
    std::snprintf(buf, sizeof(buf), "%.17g,%.17g,%.17g\n", mu, sel.tune_error,
                  test_err);
    csv << buf;
  }

  std::error_code ec;
  std::filesystem::create_directories(cfg.out_dir, ec);
  write_text(cfg.out_dir / "sweep.csv", csv.str());
  return csv.str();
}

}  // namespace mvlatent::cli
