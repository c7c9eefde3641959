#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <numbers>

#include "mvlatent/evaluation.hpp"
#include "mvlatent/model_factory.hpp"
#include "support/oracles.hpp"

using namespace mvlatent;
namespace fs = std::filesystem;

namespace {

fs::path temp_dir(const char* name) {
  fs::path dir = fs::temp_directory_path() / "mvlatent_tests" / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

ModelBundle small_bundle(ObjectiveKind kind, std::uint64_t seed = 1,
                         std::size_t dx = 16, std::size_t dy = 16) {
  ModelConfig cfg;
  cfg.kind = kind;
  cfg.d_x = dx;
  cfg.d_y = dy;
  cfg.d_z = 3;
  cfg.d_hx = 2;
  cfg.d_hy = 2;
  cfg.hidden = {6};
  cfg.obs_x = ObsKind::BernoulliMean;
  cfg.obs_y = ObsKind::GaussianFixedSigma;
  Rng rng(seed);
  return make_model_bundle(cfg, rng);
}

Tensor random_matrix(std::size_t n, std::size_t d, Rng& rng, double lo = -1.0,
                     double hi = 1.0) {
  Tensor t({n, d}, 0.0);
  for (double& v : t.data()) v = rng.next_uniform(lo, hi);
  return t;
}

}  // namespace

TEST_CASE("zero encoder produces all-zero features") {
  ModelBundle bundle = small_bundle(ObjectiveKind::Vcca);
  for (Tensor& w : bundle.enc_zx.weights)
    for (double& v : w.data()) v = 0.0;
  Rng rng(2);
  Tensor x = random_matrix(5, 16, rng, 0.0, 1.0);
  Tensor y = random_matrix(5, 16, rng, 0.0, 1.0);
  FeatureMatrix f = extract_features(bundle, x, y, FeatureSource::ZFromX);
  for (double v : f.values.data()) CHECK(v == 0.0);
  CHECK(f.source == "z_from_x");
}

TEST_CASE("concat features have width 2 d_z; missing encoders are errors") {
  ModelBundle bi = small_bundle(ObjectiveKind::BiVcca);
  Rng rng(3);
  Tensor x = random_matrix(4, 16, rng, 0, 1);
  Tensor y = random_matrix(4, 16, rng, 0, 1);
  FeatureMatrix f = extract_features(bi, x, y, FeatureSource::ConcatZxZy);
  CHECK(f.values.cols() == 6);

  ModelBundle plain = small_bundle(ObjectiveKind::Vcca);
  CHECK_THROWS_AS(extract_features(plain, x, y, FeatureSource::ZFromY), ConfigError);
  CHECK_THROWS_AS(extract_features(plain, x, y, FeatureSource::Hx), ConfigError);
}

TEST_CASE("feature extraction is repeatable and thread-count independent") {
  ModelBundle bundle = small_bundle(ObjectiveKind::VccaPrivate, 7);
  Rng rng(5);
  Tensor x = random_matrix(33, 16, rng, 0, 1);
  Tensor y = random_matrix(33, 16, rng, 0, 1);
  FeatureMatrix a = extract_features(bundle, x, y, FeatureSource::ZFromX, 1);
  FeatureMatrix b = extract_features(bundle, x, y, FeatureSource::ZFromX, 4);
  FeatureMatrix c = extract_features(bundle, x, y, FeatureSource::ZFromX, 4);
  CHECK(a.values.data() == b.values.data());
  CHECK(b.values.data() == c.values.data());
}

TEST_CASE("classifier separates two well-separated clusters") {
  Rng rng(11);
  const std::size_t n = 50;
  Tensor feats({2 * n, 2}, 0.0);
  std::vector<int> labels(2 * n);
  for (std::size_t i = 0; i < n; ++i) {
    feats.at(i, 0) = 1.0 + 0.1 * rng.next_normal();
    feats.at(i, 1) = 1.0 + 0.1 * rng.next_normal();
    labels[i] = 0;
    feats.at(n + i, 0) = 3.0 + 0.1 * rng.next_normal();
    feats.at(n + i, 1) = 3.0 + 0.1 * rng.next_normal();
    labels[n + i] = 1;
  }
  LinearClassifier clf = train_linear_classifier(feats, labels, 1.0);
  CHECK(classification_error(clf, feats, labels) == doctest::Approx(0.0));
}

TEST_CASE("random labels give chance-level error at K=10") {
  Rng rng(13);
  const std::size_t n = 2000;
  Tensor feats = random_matrix(n, 5, rng);
  std::vector<int> labels(n);
  for (auto& lb : labels)
    lb = static_cast<int>(rng.next_double() * 10.0) % 10;
  Tensor test_feats = random_matrix(n, 5, rng);
  std::vector<int> test_labels(n);
  for (auto& lb : test_labels)
    lb = static_cast<int>(rng.next_double() * 10.0) % 10;
  LinearClassifier clf = train_linear_classifier(feats, labels, 1.0);
  const double err = classification_error(clf, test_feats, test_labels);
  CHECK(err > 0.85);
  CHECK(err < 0.95);
}

TEST_CASE("doubling features with the hinge weight divided by 4 preserves predictions") {
  Rng rng(17);
  const std::size_t n = 60;
  Tensor feats = random_matrix(n, 3, rng);
  std::vector<int> labels(n);
  for (std::size_t i = 0; i < n; ++i)
    labels[i] = static_cast<int>(rng.next_double() * 3.0) % 3;
  Tensor doubled({n, 3}, 0.0);
  for (std::size_t i = 0; i < feats.size(); ++i)
    doubled.data()[i] = 2.0 * feats.data()[i];

  for (double c : {0.04, 0.4, 4.0}) {
    LinearClassifier base = train_linear_classifier(feats, labels, c);
    LinearClassifier scaled = train_linear_classifier(doubled, labels, c / 4.0);
    Rng probe(19);
    Tensor queries = random_matrix(40, 3, probe);
    Tensor queries2({40, 3}, 0.0);
    for (std::size_t i = 0; i < queries.size(); ++i)
      queries2.data()[i] = 2.0 * queries.data()[i];
    CHECK(base.predict(queries) == scaled.predict(queries2));
  }
}

TEST_CASE("classification_error endpoints") {
  Tensor feats({4, 1}, {-1, -1, 1, 1});
  std::vector<int> labels = {0, 0, 1, 1};
  LinearClassifier clf = train_linear_classifier(feats, labels, 1.0);
  CHECK(classification_error(clf, feats, labels) == 0.0);
  std::vector<int> wrong = {1, 1, 0, 0};
  CHECK(classification_error(clf, feats, wrong) == 1.0);
}

TEST_CASE("classifier selection picks the best tune error") {
  Rng rng(23);
  Tensor train_feats({40, 2}, 0.0);
  std::vector<int> train_labels(40);
  for (std::size_t i = 0; i < 40; ++i) {
    const int k = i % 2;
    train_labels[i] = k;
    train_feats.at(i, 0) = (k ? 1.0 : -1.0) + 0.3 * rng.next_normal();
    train_feats.at(i, 1) = 0.5 * rng.next_normal();
  }
  auto sel = select_linear_classifier(train_feats, train_labels, train_feats,
                                      train_labels, {0.01, 0.1, 1.0, 10.0});
  CHECK(sel.tune_error <= 0.1);
  CHECK(sel.chosen_c > 0.0);
}

TEST_CASE("orthogonality score examples") {
  // Single column, orthogonal.
  Tensor z1({2, 1}, {1.0, 0.0});
  Tensor h1({2, 1}, {0.0, 1.0});
  CHECK(orthogonality_score(z1, h1) == doctest::Approx(0.0).epsilon(1e-12));
  // Identical single columns.
  CHECK(orthogonality_score(z1, z1) == doctest::Approx(1.0).epsilon(1e-12));
  // Z = [[1],[0]], H = [[1],[1]] -> 0.5.
  Tensor h2({2, 1}, {1.0, 1.0});
  CHECK(orthogonality_score(z1, h2) == doctest::Approx(0.5).epsilon(1e-12));
  CHECK_THROWS_AS(orthogonality_score(z1, Tensor({2, 1}, 0.0)), NumericError);
}

TEST_CASE("orthogonality score stays in [0,1] on random inputs") {
  Rng rng(29);
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t n = 2 + static_cast<std::size_t>(rng.next_double() * 6);
    const std::size_t dz = 1 + static_cast<std::size_t>(rng.next_double() * 4);
    const std::size_t dh = 1 + static_cast<std::size_t>(rng.next_double() * 4);
    Tensor z = random_matrix(n, dz, rng, -3, 3);
    Tensor h = random_matrix(n, dh, rng, -3, 3);
    const double lambda = orthogonality_score(z, h);
    CHECK(lambda >= -1e-12);
    CHECK(lambda <= 1.0 + 1e-12);
  }
}

TEST_CASE("linear cca: identical 1-D views give correlation 1") {
  Rng rng(31);
  Tensor x = random_matrix(500, 1, rng);
  auto res = linear_cca(x, x, 1);
  // The 1e-6 whitening ridge pulls the exact 1 down by ~sigma^-2 * 1e-6.
  CHECK(res.correlations[0] == doctest::Approx(1.0).epsilon(1e-4));
}

TEST_CASE("linear cca: independent views give near-zero correlations") {
  Rng rng(37);
  const std::size_t n = 100000;
  Tensor x({n, 2}, 0.0);
  Tensor y({n, 2}, 0.0);
  for (double& v : x.data()) v = rng.next_normal();
  for (double& v : y.data()) v = rng.next_normal();
  auto res = linear_cca(x, y, 2);
  for (double c : res.correlations) {
    CHECK(c < 0.02);
    CHECK(c >= 0.0);
  }
  CHECK(res.correlations[0] >= res.correlations[1]);
}

TEST_CASE("linear cca: shared scalar signal gives correlation 0.5") {
  Rng rng(41);
  const std::size_t n = 100000;
  Tensor x({n, 1}, 0.0);
  Tensor y({n, 1}, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    const double z = rng.next_normal();
    x.at(i, 0) = z + rng.next_normal();
    y.at(i, 0) = z + rng.next_normal();
  }
  auto res = linear_cca(x, y, 1);
  CHECK(res.correlations[0] == doctest::Approx(0.5).epsilon(0.04));
  CHECK(std::abs(res.correlations[0] - 0.5) < 0.02);
}

TEST_CASE("linear cca projections whiten the training covariance") {
  Rng rng(43);
  const std::size_t n = 4000;
  Tensor x({n, 3}, 0.0);
  Tensor y({n, 2}, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    const double z = rng.next_normal();
    for (std::size_t j = 0; j < 3; ++j)
      x.at(i, j) = 0.7 * z + rng.next_normal() + 0.2 * static_cast<double>(j);
    for (std::size_t j = 0; j < 2; ++j) y.at(i, j) = -0.4 * z + rng.next_normal();
  }
  auto res = linear_cca(x, y, 2);
  const Tensor px = res.project_x(x);
  // Covariance of projections (ridge-adjusted whitening) is the identity.
  for (std::size_t a = 0; a < 2; ++a) {
    for (std::size_t b = 0; b < 2; ++b) {
      double cov = 0.0;
      for (std::size_t i = 0; i < n; ++i) cov += px.at(i, a) * px.at(i, b);
      cov /= static_cast<double>(n - 1);
      CHECK(cov == doctest::Approx(a == b ? 1.0 : 0.0).epsilon(1e-6).scale(1.0));
    }
  }
  CHECK_THROWS_AS(linear_cca(x, y, 5), ConfigError);
}

TEST_CASE("analytic linear-Gaussian log-likelihood examples") {
  // Wx = Wy = 0 at the origin: two independent standard normals.
  Tensor w0({1, 1}, {0.0});
  CHECK(analytic_linear_gaussian_loglik(w0, w0, {0.0}, {0.0}) ==
        doctest::Approx(-std::log(2.0 * std::numbers::pi)).epsilon(1e-12));
  // Wx = Wy = 1 at the origin: cov [[2,1],[1,2]], det 3.
  Tensor w1({1, 1}, {1.0});
  const double expected =
      -0.5 * std::log(4.0 * std::numbers::pi * std::numbers::pi * 3.0);
  CHECK(analytic_linear_gaussian_loglik(w1, w1, {0.0}, {0.0}) ==
        doctest::Approx(expected).epsilon(1e-12));
  CHECK(expected == doctest::Approx(-2.38718).epsilon(1e-5));
  // Quadrature agreement on random instances.
  Rng rng(47);
  for (int i = 0; i < 10; ++i) {
    const double wx = rng.next_uniform(-2, 2);
    const double wy = rng.next_uniform(-2, 2);
    const double x = rng.next_uniform(-3, 3);
    const double y = rng.next_uniform(-3, 3);
    CHECK(analytic_linear_gaussian_loglik(Tensor({1, 1}, {wx}), Tensor({1, 1}, {wy}),
                                          {x}, {y}) ==
          doctest::Approx(mvtest::quadrature_linear_gaussian_loglik_1d(wx, wy, x, y))
              .epsilon(1e-6));
  }
}

TEST_CASE("pgm writes the exact byte format") {
  const fs::path dir = temp_dir("pgm");
  Tensor img({2, 3}, {0.0, 0.5, 1.0, -0.2, 1.4, 0.25});
  write_pgm(dir / "t.pgm", img);
  std::ifstream in(dir / "t.pgm", std::ios::binary);
  std::string content((std::istreambuf_iterator<char>(in)), {});
  const std::string header = "P5\n3 2\n255\n";
  REQUIRE(content.size() == header.size() + 6);
  CHECK(content.substr(0, header.size()) == header);
  const auto* bytes =
      reinterpret_cast<const unsigned char*>(content.data() + header.size());
  CHECK(bytes[0] == 0);
  CHECK(bytes[1] == 128);  // round(0.5*255)
  CHECK(bytes[2] == 255);
  CHECK(bytes[3] == 0);    // clamped below
  CHECK(bytes[4] == 255);  // clamped above
  CHECK(bytes[5] == 64);   // round(0.25*255)

  const Tensor back = read_pgm(dir / "t.pgm");
  CHECK(back.rows() == 2);
  CHECK(back.cols() == 3);
}

TEST_CASE("reconstruct grid layout and identity decode") {
  const fs::path dir = temp_dir("recon");
  // Identity model on 2x2 images: enc mu = x, dec mean = z.
  ModelConfig cfg;
  cfg.kind = ObjectiveKind::Vcca;
  cfg.d_x = 4;
  cfg.d_y = 4;
  cfg.d_z = 4;
  cfg.hidden = {};
  cfg.obs_x = ObsKind::GaussianFixedSigma;
  cfg.obs_y = ObsKind::GaussianFixedSigma;
  cfg.sigma_y = 0.25;
  cfg.squash_decoder_means = false;
  Rng rng(53);
  ModelBundle bundle = make_model_bundle(cfg, rng);
  auto identity = [](Network& net) {
    for (double& v : net.weights[0].data()) v = 0.0;
    for (std::size_t i = 0; i < 4; ++i) net.weights[0].at(i, i) = 1.0;
    for (double& v : net.biases[0].data()) v = 0.0;
  };
  // Encoder head is (mu, log_sigma): set the mu block to the identity.
  Network& enc = bundle.enc_zx;
  for (double& v : enc.weights[0].data()) v = 0.0;
  for (std::size_t i = 0; i < 4; ++i) enc.weights[0].at(i, i) = 1.0;
  for (double& v : enc.biases[0].data()) v = 0.0;
  identity(*bundle.dec_x);
  identity(*bundle.dec_y);

  Rng data_rng(3);
  Tensor x({3, 4}, 0.0);
  for (double& v : x.data()) v = data_rng.next_uniform(0.1, 0.9);
  const Tensor y = x;  // views identical so mean panel must equal the input

  reconstruct_grid(bundle, x, y, dir / "grid.pgm", Rng(1));
  const Tensor grid = read_pgm(dir / "grid.pgm");
  // 3 rows x 3 panels of 2x2 cells with 1px separators.
  CHECK(grid.rows() == 3 * 2 + 2);
  CHECK(grid.cols() == 3 * 2 + 2);

  // Input panel equals mean panel (both derived from x through identities).
  for (std::size_t r = 0; r < 3; ++r) {
    for (std::size_t i = 0; i < 2; ++i)
      for (std::size_t j = 0; j < 2; ++j) {
        const double input_px = grid.at(r * 3 + i, j);
        const double mean_px = grid.at(r * 3 + i, 3 + j);
        CHECK(input_px == doctest::Approx(mean_px).epsilon(1e-12));
      }
  }
  // Fixed-sigma stddev panel is constant.
  const double sd = grid.at(0, 6);
  for (std::size_t r = 0; r < 3; ++r)
    for (std::size_t i = 0; i < 2; ++i)
      for (std::size_t j = 0; j < 2; ++j)
        CHECK(grid.at(r * 3 + i, 6 + j) == doctest::Approx(sd));
}

TEST_CASE("private traversal grid") {
  const fs::path dir = temp_dir("traverse");
  ModelConfig cfg;
  cfg.kind = ObjectiveKind::VccaPrivate;
  cfg.d_x = 9;
  cfg.d_y = 9;
  cfg.d_z = 2;
  cfg.d_hx = 2;
  cfg.d_hy = 2;
  cfg.hidden = {5};
  cfg.obs_x = ObsKind::BernoulliMean;
  cfg.obs_y = ObsKind::BernoulliMean;
  Rng rng(59);
  ModelBundle bundle = make_model_bundle(cfg, rng);

  Rng data_rng(5);
  Tensor x({4, 9}, 0.0);
  for (double& v : x.data()) v = data_rng.next_uniform(0, 1);
  // Rows 2 and 3 share the same input.
  for (std::size_t j = 0; j < 9; ++j) x.at(3, j) = x.at(2, j);

  private_traversal_grid(bundle, x, 4, dir / "t.pgm", Rng(7));
  const Tensor grid = read_pgm(dir / "t.pgm");
  CHECK(grid.rows() == 4 * 3 + 3);
  CHECK(grid.cols() == 4 * 3 + 3);

  // Identical inputs give identical rows.
  for (std::size_t c = 0; c < grid.cols(); ++c) {
    for (std::size_t i = 0; i < 3; ++i) {
      CHECK(grid.at(2 * 4 + i, c) == grid.at(3 * 4 + i, c));
    }
  }

  // Same seed, same bytes.
  private_traversal_grid(bundle, x, 4, dir / "t2.pgm", Rng(7));
  std::ifstream a(dir / "t.pgm", std::ios::binary);
  std::ifstream b(dir / "t2.pgm", std::ios::binary);
  std::string sa((std::istreambuf_iterator<char>(a)), {});
  std::string sb((std::istreambuf_iterator<char>(b)), {});
  CHECK(sa == sb);

  // Column 0 is the h=0 prototype: decode(z_r, 0).
  const Tensor z = eval_means(bundle.enc_zx, x);
  Tensor dec_in({1, 4}, 0.0);
  for (std::size_t j = 0; j < 2; ++j) dec_in.at(0, j) = z.at(0, j);
  const Tensor proto = eval_means(*bundle.dec_x, dec_in);
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t j = 0; j < 3; ++j) {
      const double expected =
          std::lround(255.0 * std::min(1.0, std::max(0.0, proto.at(0, i * 3 + j)))) /
          255.0;
      CHECK(grid.at(i, j) == doctest::Approx(expected).epsilon(1e-9));
    }

  ModelBundle plain = small_bundle(ObjectiveKind::Vcca);
  CHECK_THROWS_AS(private_traversal_grid(plain, x, 4, dir / "bad.pgm", Rng(1)),
                  ConfigError);
}

TEST_CASE("feature csv export") {
  const fs::path dir = temp_dir("csv");
  FeatureMatrix f;
  f.values = Tensor({2, 3}, {1.0, 2.0, 3.0, 4.0, 5.0, 6.0});
  f.source = "z_from_x";
  write_feature_csv(dir / "f.csv", f, {0, 1});
  std::ifstream in(dir / "f.csv");
  std::string line;
  std::getline(in, line);
  CHECK(line == "f0,f1,f2,label");
  std::getline(in, line);
  CHECK(line == "1,2,3,0");
}
