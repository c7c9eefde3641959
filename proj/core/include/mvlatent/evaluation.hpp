#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "mvlatent/objectives.hpp"

namespace mvlatent {

enum class FeatureSource { ZFromX, ZFromY, Hx, Hy, ConcatZxZy };

const char* feature_source_name(FeatureSource source);
FeatureSource feature_source_from_name(const std::string& name);

struct FeatureMatrix {
  Tensor values;       // (N, d)
  std::string source;  // which posterior/view produced it
};

// Posterior means (no sampling, dropout off). threads > 1 splits rows
// across workers; the result is identical to the single-threaded one.
FeatureMatrix extract_features(const ModelBundle& bundle, const Tensor& x,
                               const Tensor& y, FeatureSource source,
                               std::size_t threads = 1);

// One-vs-all L2-hinge linear classifier. Features are mean-centered
// internally and scored without a bias, so uniformly rescaling the features
// (with the hinge weight c rescaled by the inverse square) leaves
// predictions unchanged. Training is deterministic full-batch subgradient
// descent.
struct LinearClassifier {
  Tensor weights;               // (K, d)
  std::vector<double> center;   // feature means from the training split
  std::size_t classes = 0;

  // argmax over class scores; ties break to the lowest class index.
  std::vector<int> predict(const Tensor& feats) const;
};

LinearClassifier train_linear_classifier(const Tensor& feats,
                                         const std::vector<int>& labels,
                                         double c);

double classification_error(const LinearClassifier& clf, const Tensor& feats,
                            const std::vector<int>& labels);

// Fits one classifier per hinge weight, picks the best on the tune split
// (ties to the smaller weight).
struct ClassifierSelection {
  LinearClassifier classifier;
  double chosen_c = 0.0;
  double tune_error = 1.0;
};

ClassifierSelection select_linear_classifier(const Tensor& train_feats,
                                             const std::vector<int>& train_labels,
                                             const Tensor& tune_feats,
                                             const std::vector<int>& tune_labels,
                                             const std::vector<double>& c_grid);

// ||H^T Z||_F^2 / (||H||_F^2 ||Z||_F^2), in [0, 1].
double orthogonality_score(const Tensor& z, const Tensor& h);

struct LinearCcaResult {
  Tensor proj_x;                     // (d_x, k)
  Tensor proj_y;                     // (d_y, k)
  std::vector<double> correlations;  // nonincreasing, in [0, 1]
  std::vector<double> mean_x;
  std::vector<double> mean_y;

  Tensor project_x(const Tensor& x) const;
  Tensor project_y(const Tensor& y) const;
};

// Classical CCA: mean-center, whiten each view (ridge 1e-6), SVD of the
// whitened cross-covariance. Projected training covariance is the identity.
LinearCcaResult linear_cca(const Tensor& x, const Tensor& y, std::size_t k);

// Exact log N([x;y]; 0, [[WxWx'+I, WxWy'],[WyWx', WyWy'+I]]): the marginal
// of the linear-Gaussian latent model with standard-normal z and unit
// observation noise.
double analytic_linear_gaussian_loglik(const Tensor& w_x, const Tensor& w_y,
                                       const std::vector<double>& x,
                                       const std::vector<double>& y);

// 8-bit binary PGM (P5), values round(255 * clamp(v, 0, 1)).
void write_pgm(const std::filesystem::path& path, const Tensor& image);
Tensor read_pgm(const std::filesystem::path& path);

// Rows are samples: view-2 input | reconstruction mean | reconstruction
// stddev. z comes from q(z|x) means; private models sample h_y from its
// posterior.
void reconstruct_grid(const ModelBundle& bundle, const Tensor& x, const Tensor& y,
                      const std::filesystem::path& path, Rng rng);

// n x n grid of decoder means: row = shared z from q(z|x_i), column =
// private h_x (column 0 is h_x = 0, the rest are standard-normal draws).
void private_traversal_grid(const ModelBundle& bundle, const Tensor& x_inputs,
                            std::size_t n, const std::filesystem::path& path,
                            Rng rng);

// CSV with header f0..f{d-1},label.
void write_feature_csv(const std::filesystem::path& path, const FeatureMatrix& feats,
                       const std::vector<int>& labels);

}  // namespace mvlatent
