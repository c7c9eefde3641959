#include "mvlatent/evaluation.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <numbers>
#include <thread>

namespace mvlatent {

namespace {

using EMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using CMap = Eigen::Map<const EMat>;

CMap to_eigen(const Tensor& t) {
  return CMap(t.data().data(), static_cast<Eigen::Index>(t.rows()),
              static_cast<Eigen::Index>(t.cols()));
}

std::size_t env_thread_cap() {
  if (const char* env = std::getenv("MVLATENT_THREADS")) {
    const long v = std::strtol(env, nullptr, 10);
    if (v >= 1) return static_cast<std::size_t>(v);
  }
  return 4;
}

// Runs fn(row_begin, row_end) over disjoint chunks. Work per row is
// independent, so the output never depends on the thread count.
void parallel_rows(std::size_t rows, std::size_t threads,
                   const std::function<void(std::size_t, std::size_t)>& fn) {
  threads = std::min({threads, env_thread_cap(), rows});
  if (threads <= 1) {
    fn(0, rows);
    return;
  }
  std::vector<std::thread> pool;
  const std::size_t chunk = (rows + threads - 1) / threads;
  for (std::size_t t = 0; t < threads; ++t) {
    const std::size_t begin = t * chunk;
    const std::size_t end = std::min(begin + chunk, rows);
    if (begin >= end) break;
    pool.emplace_back(fn, begin, end);
  }
  for (std::thread& th : pool) th.join();
}

// Each row is forwarded on its own so the output is bit-identical for any
// thread count or chunking.
Tensor network_means_parallel(const Network& net, const Tensor& input,
                              std::size_t threads) {
  const std::size_t rows = input.rows();
  Tensor out({rows, net.spec.head_dim}, 0.0);
  parallel_rows(rows, threads, [&](std::size_t begin, std::size_t end) {
    Tensor row({1, input.cols()}, 0.0);
    for (std::size_t i = begin; i < end; ++i) {
      for (std::size_t c = 0; c < input.cols(); ++c) row.at(0, c) = input.at(i, c);
      const Tensor means = eval_means(net, row);
      for (std::size_t c = 0; c < means.cols(); ++c) out.at(i, c) = means.at(0, c);
    }
  });
  return out;
}

}  // namespace

const char* feature_source_name(FeatureSource source) {
  switch (source) {
    case FeatureSource::ZFromX: return "z_from_x";
    case FeatureSource::ZFromY: return "z_from_y";
    case FeatureSource::Hx: return "hx";
    case FeatureSource::Hy: return "hy";
    case FeatureSource::ConcatZxZy: return "concat_zx_zy";
  }
  return "?";
}

FeatureSource feature_source_from_name(const std::string& name) {
  if (name == "z_from_x") return FeatureSource::ZFromX;
  if (name == "z_from_y") return FeatureSource::ZFromY;
  if (name == "hx") return FeatureSource::Hx;
  if (name == "hy") return FeatureSource::Hy;
  if (name == "concat_zx_zy") return FeatureSource::ConcatZxZy;
  throw ConfigError("unknown feature source: " + name);
}

FeatureMatrix extract_features(const ModelBundle& bundle, const Tensor& x,
                               const Tensor& y, FeatureSource source,
                               std::size_t threads) {
  auto need = [&](const std::optional<Network>& net, const char* name) -> const Network& {
    if (!net) {
      throw ConfigError(std::string("feature source needs the ") + name + " encoder");
    }
    return *net;
  };
  FeatureMatrix out;
  out.source = feature_source_name(source);
  switch (source) {
    case FeatureSource::ZFromX:
      out.values = network_means_parallel(bundle.enc_zx, x, threads);
      return out;
    case FeatureSource::ZFromY:
      out.values = network_means_parallel(need(bundle.enc_zy, "enc_zy"), y, threads);
      return out;
    case FeatureSource::Hx:
      out.values = network_means_parallel(need(bundle.enc_hx, "enc_hx"), x, threads);
      return out;
    case FeatureSource::Hy:
      out.values = network_means_parallel(need(bundle.enc_hy, "enc_hy"), y, threads);
      return out;
    case FeatureSource::ConcatZxZy: {
      const Tensor zx = network_means_parallel(bundle.enc_zx, x, threads);
      const Tensor zy =
          network_means_parallel(need(bundle.enc_zy, "enc_zy"), y, threads);
      Tensor both({zx.rows(), zx.cols() + zy.cols()}, 0.0);
      for (std::size_t r = 0; r < zx.rows(); ++r) {
        for (std::size_t c = 0; c < zx.cols(); ++c) both.at(r, c) = zx.at(r, c);
        for (std::size_t c = 0; c < zy.cols(); ++c)
          both.at(r, zx.cols() + c) = zy.at(r, c);
      }
      out.values = std::move(both);
      return out;
    }
  }
  throw ConfigError("unhandled feature source");
}

// ---------------------------------------------------------------------------
// Linear classifier

std::vector<int> LinearClassifier::predict(const Tensor& feats) const {
  if (feats.cols() != center.size()) {
    throw ShapeError("classifier width does not match features");
  }
  std::vector<int> out(feats.rows());
  for (std::size_t i = 0; i < feats.rows(); ++i) {
    int best = 0;
    double best_score = -std::numeric_limits<double>::infinity();
    for (std::size_t k = 0; k < classes; ++k) {
      double s = 0.0;
      for (std::size_t c = 0; c < feats.cols(); ++c) {
        s += weights.at(k, c) * (feats.at(i, c) - center[c]);
      }
      if (s > best_score) {
        best_score = s;
        best = static_cast<int>(k);
      }
    }
    out[i] = best;
  }
  return out;
}

LinearClassifier train_linear_classifier(const Tensor& feats,
                                         const std::vector<int>& labels,
                                         double c) {
  if (!(c > 0.0)) throw ConfigError("hinge weight must be positive");
  const std::size_t n = feats.rows();
  const std::size_t d = feats.cols();
  if (labels.size() != n) throw ShapeError("label count must match feature rows");
  int max_label = 0;
  for (int lb : labels) {
    if (lb < 0) throw ConfigError("labels must be nonnegative");
    max_label = std::max(max_label, lb);
  }
  const std::size_t classes = static_cast<std::size_t>(max_label) + 1;
  if (classes < 2) throw ConfigError("need at least two classes");

  LinearClassifier clf;
  clf.classes = classes;
  clf.center.assign(d, 0.0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < d; ++j) clf.center[j] += feats.at(i, j);
  for (double& v : clf.center) v /= static_cast<double>(n);

  Tensor centered({n, d}, 0.0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < d; ++j)
      centered.at(i, j) = feats.at(i, j) - clf.center[j];

  clf.weights = Tensor({classes, d}, 0.0);
  constexpr std::size_t kIters = 300;
  const auto cm = to_eigen(centered);
  Eigen::VectorXd scores(static_cast<Eigen::Index>(n));
  Eigen::VectorXd mask(static_cast<Eigen::Index>(n));
  Eigen::VectorXd w(static_cast<Eigen::Index>(d));
  const double cn = c / static_cast<double>(n);
  for (std::size_t k = 0; k < classes; ++k) {
    w.setZero();
    for (std::size_t t = 0; t < kIters; ++t) {
      // J(w) = 0.5 ||w||^2 + c * mean_i hinge(1 - y_i w.x_i)
      scores.noalias() = cm * w;
      for (std::size_t i = 0; i < n; ++i) {
        const double y = labels[i] == static_cast<int>(k) ? 1.0 : -1.0;
        mask(static_cast<Eigen::Index>(i)) =
            y * scores(static_cast<Eigen::Index>(i)) < 1.0 ? -y * cn : 0.0;
      }
      const double eta = 1.0 / (1.0 + static_cast<double>(t));
      w -= eta * (w + (cm.transpose() * mask));
    }
    for (std::size_t j = 0; j < d; ++j)
      clf.weights.at(k, j) = w(static_cast<Eigen::Index>(j));
  }
  return clf;
}

double classification_error(const LinearClassifier& clf, const Tensor& feats,
                            const std::vector<int>& labels) {
  if (labels.size() != feats.rows()) {
    throw ShapeError("label count must match feature rows");
  }
  const std::vector<int> pred = clf.predict(feats);
  std::size_t wrong = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    if (pred[i] != labels[i]) ++wrong;
  }
  return static_cast<double>(wrong) / static_cast<double>(pred.size());
}

ClassifierSelection select_linear_classifier(const Tensor& train_feats,
                                             const std::vector<int>& train_labels,
                                             const Tensor& tune_feats,
                                             const std::vector<int>& tune_labels,
                                             const std::vector<double>& c_grid) {
  if (c_grid.empty()) throw ConfigError("hinge weight grid is empty");
  ClassifierSelection best;
  bool first = true;
  for (double c : c_grid) {
    LinearClassifier clf = train_linear_classifier(train_feats, train_labels, c);
    const double err = classification_error(clf, tune_feats, tune_labels);
    if (first || err < best.tune_error) {
      best.classifier = std::move(clf);
      best.chosen_c = c;
      best.tune_error = err;
      first = false;
    }
  }
  return best;
}

// ---------------------------------------------------------------------------
// Diagnostics

double orthogonality_score(const Tensor& z, const Tensor& h) {
  if (z.rows() != h.rows()) throw ShapeError("row counts must match");
  const auto zm = to_eigen(z);
  const auto hm = to_eigen(h);
  const double num = (hm.transpose() * zm).squaredNorm();
  const double den = hm.squaredNorm() * zm.squaredNorm();
  if (!(den > 0.0)) throw NumericError("orthogonality_score: zero-norm input");
  return num / den;
}

namespace {

EMat inverse_sqrt_spd(const EMat& m, double ridge) {
  EMat sym = 0.5 * (m + m.transpose());
  for (Eigen::Index i = 0; i < sym.rows(); ++i) sym(i, i) += ridge;
  Eigen::SelfAdjointEigenSolver<EMat> eig(sym);
  if (eig.info() != Eigen::Success) {
    throw NumericError("eigendecomposition failed in CCA whitening");
  }
  Eigen::VectorXd vals = eig.eigenvalues();
  for (Eigen::Index i = 0; i < vals.size(); ++i) {
    if (!(vals(i) > 0.0)) {
      throw NumericError("covariance not positive definite beyond ridge repair");
    }
    vals(i) = 1.0 / std::sqrt(vals(i));
  }
  return eig.eigenvectors() * vals.asDiagonal() * eig.eigenvectors().transpose();
}

}  // namespace

Tensor LinearCcaResult::project_x(const Tensor& x) const {
  Tensor out({x.rows(), static_cast<std::size_t>(correlations.size())}, 0.0);
  for (std::size_t i = 0; i < x.rows(); ++i)
    for (std::size_t k = 0; k < correlations.size(); ++k) {
      double s = 0.0;
      for (std::size_t j = 0; j < x.cols(); ++j)
        s += (x.at(i, j) - mean_x[j]) * proj_x.at(j, k);
      out.at(i, k) = s;
    }
  return out;
}

Tensor LinearCcaResult::project_y(const Tensor& y) const {
  Tensor out({y.rows(), static_cast<std::size_t>(correlations.size())}, 0.0);
  for (std::size_t i = 0; i < y.rows(); ++i)
    for (std::size_t k = 0; k < correlations.size(); ++k) {
      double s = 0.0;
      for (std::size_t j = 0; j < y.cols(); ++j)
        s += (y.at(i, j) - mean_y[j]) * proj_y.at(j, k);
      out.at(i, k) = s;
    }
  return out;
}

LinearCcaResult linear_cca(const Tensor& x, const Tensor& y, std::size_t k) {
  const std::size_t n = x.rows();
  const std::size_t dx = x.cols();
  const std::size_t dy = y.cols();
  if (y.rows() != n) throw ShapeError("linear_cca: row counts must match");
  if (k == 0 || k > std::min(dx, dy)) {
    throw ConfigError("linear_cca: k must lie in [1, min(d_x, d_y)]");
  }
  if (n <= std::max(dx, dy)) {
    throw ConfigError("linear_cca: need more samples than dimensions");
  }
  constexpr double kRidge = 1e-6;

  EMat xm = to_eigen(x);
  EMat ym = to_eigen(y);
  const Eigen::RowVectorXd mx = xm.colwise().mean();
  const Eigen::RowVectorXd my = ym.colwise().mean();
  xm.rowwise() -= mx;
  ym.rowwise() -= my;
  const double denom = static_cast<double>(n - 1);
  const EMat cxx = (xm.transpose() * xm) / denom;
  const EMat cyy = (ym.transpose() * ym) / denom;
  const EMat cxy = (xm.transpose() * ym) / denom;

  const EMat wx = inverse_sqrt_spd(cxx, kRidge);
  const EMat wy = inverse_sqrt_spd(cyy, kRidge);
  const EMat t = wx * cxy * wy;

  Eigen::JacobiSVD<EMat> svd(t, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const EMat ax = wx * svd.matrixU().leftCols(static_cast<Eigen::Index>(k));
  const EMat ay = wy * svd.matrixV().leftCols(static_cast<Eigen::Index>(k));

  LinearCcaResult out;
  out.proj_x = Tensor({dx, k}, 0.0);
  out.proj_y = Tensor({dy, k}, 0.0);
  for (std::size_t i = 0; i < dx; ++i)
    for (std::size_t j = 0; j < k; ++j)
      out.proj_x.at(i, j) = ax(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
  for (std::size_t i = 0; i < dy; ++i)
    for (std::size_t j = 0; j < k; ++j)
      out.proj_y.at(i, j) = ay(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
  out.correlations.resize(k);
  for (std::size_t j = 0; j < k; ++j) {
    out.correlations[j] =
        std::min(1.0, std::max(0.0, svd.singularValues()(static_cast<Eigen::Index>(j))));
  }
  out.mean_x.assign(mx.data(), mx.data() + dx);
  out.mean_y.assign(my.data(), my.data() + dy);
  return out;
}

double analytic_linear_gaussian_loglik(const Tensor& w_x, const Tensor& w_y,
                                       const std::vector<double>& x,
                                       const std::vector<double>& y) {
  const std::size_t dx = w_x.rows();
  const std::size_t dy = w_y.rows();
  const std::size_t dz = w_x.cols();
  if (w_y.cols() != dz) throw ShapeError("latent widths must match");
  if (x.size() != dx || y.size() != dy) throw ShapeError("observation sizes must match");

  const std::size_t d = dx + dy;
  EMat w(d, dz);
  for (std::size_t i = 0; i < dx; ++i)
    for (std::size_t j = 0; j < dz; ++j) w(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = w_x.at(i, j);
  for (std::size_t i = 0; i < dy; ++i)
    for (std::size_t j = 0; j < dz; ++j)
      w(static_cast<Eigen::Index>(dx + i), static_cast<Eigen::Index>(j)) = w_y.at(i, j);

  EMat cov = w * w.transpose();
  for (std::size_t i = 0; i < d; ++i) cov(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(i)) += 1.0;

  Eigen::VectorXd obs(static_cast<Eigen::Index>(d));
  for (std::size_t i = 0; i < dx; ++i) obs(static_cast<Eigen::Index>(i)) = x[i];
  for (std::size_t i = 0; i < dy; ++i) obs(static_cast<Eigen::Index>(dx + i)) = y[i];

  Eigen::LLT<EMat> llt(cov);
  if (llt.info() != Eigen::Success) {
    throw NumericError("marginal covariance is not positive definite");
  }
  double log_det = 0.0;
  for (std::size_t i = 0; i < d; ++i) {
    log_det += 2.0 * std::log(llt.matrixL()(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(i)));
  }
  const Eigen::VectorXd solved = llt.solve(obs);
  const double quad = obs.dot(solved);
  const double log2pi = std::log(2.0 * std::numbers::pi);
  return -0.5 * (static_cast<double>(d) * log2pi + log_det + quad);
}

// ---------------------------------------------------------------------------
// Image grids

void write_pgm(const std::filesystem::path& path, const Tensor& image) {
  if (image.rank() != 2) throw ShapeError("write_pgm expects a 2-D tensor");
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out << "P5\n" << image.cols() << " " << image.rows() << "\n255\n";
  for (double v : image.data()) {
    const double clamped = std::min(1.0, std::max(0.0, v));
    out.put(static_cast<char>(static_cast<unsigned char>(std::lround(255.0 * clamped))));
  }
}

Tensor read_pgm(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::string magic;
  in >> magic;
  if (magic != "P5") throw IoError("not a binary PGM: " + path.string());
  std::size_t w = 0, h = 0, maxval = 0;
  in >> w >> h >> maxval;
  in.get();
  if (maxval != 255) throw IoError("unsupported PGM maxval");
  Tensor out({h, w}, 0.0);
  for (double& v : out.data()) {
    const int byte = in.get();
    if (byte < 0) throw IoError("truncated PGM payload");
    v = static_cast<double>(byte) / 255.0;
  }
  return out;
}

namespace {

std::size_t square_side(std::size_t pixels, const char* what) {
  const auto side = static_cast<std::size_t>(std::lround(std::sqrt(static_cast<double>(pixels))));
  if (side * side != pixels) {
    throw ShapeError(std::string(what) + ": pixel count is not a perfect square");
  }
  return side;
}

// cells[r][c] are side x side images in [0,1]; 1px white separators.
Tensor assemble_grid(const std::vector<std::vector<std::vector<double>>>& cells,
                     std::size_t side) {
  const std::size_t rows = cells.size();
  const std::size_t cols = cells[0].size();
  Tensor grid({rows * side + (rows - 1), cols * side + (cols - 1)}, 1.0);
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < cols; ++c) {
      const auto& cell = cells[r][c];
      for (std::size_t i = 0; i < side; ++i)
        for (std::size_t j = 0; j < side; ++j)
          grid.at(r * (side + 1) + i, c * (side + 1) + j) = cell[i * side + j];
    }
  }
  return grid;
}

std::vector<double> tensor_row(const Tensor& t, std::size_t r) {
  std::vector<double> out(t.cols());
  for (std::size_t c = 0; c < t.cols(); ++c) out[c] = t.at(r, c);
  return out;
}

}  // namespace

void reconstruct_grid(const ModelBundle& bundle, const Tensor& x, const Tensor& y,
                      const std::filesystem::path& path, Rng rng) {
  if (!bundle.dec_y) throw ConfigError("reconstruct_grid needs a view-2 decoder");
  const std::size_t n = x.rows();
  const std::size_t side = square_side(y.cols(), "reconstruct_grid");

  const Tensor z = eval_means(bundle.enc_zx, x);
  Tensor dec_in = z;
  if (is_private(bundle.kind) && bundle.d_hy > 0) {
    // h_y sampled from its posterior.
    const Tensor raw = eval_raw(*bundle.enc_hy, y);
    Tensor hy({n, bundle.d_hy}, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
      Rng row = rng.substream(i);
      for (std::size_t j = 0; j < bundle.d_hy; ++j) {
        const double mu = raw.at(i, j);
        const double ls = std::min(kLogSigmaClampHi,
                                   std::max(kLogSigmaClampLo, raw.at(i, bundle.d_hy + j)));
        hy.at(i, j) = mu + std::exp(ls) * row.next_normal();
      }
    }
    Tensor both({n, bundle.d_z + bundle.d_hy}, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < bundle.d_z; ++j) both.at(i, j) = z.at(i, j);
      for (std::size_t j = 0; j < bundle.d_hy; ++j)
        both.at(i, bundle.d_z + j) = hy.at(i, j);
    }
    dec_in = std::move(both);
  }

  const Tensor mean = eval_means(*bundle.dec_y, dec_in);
  Tensor stddev({n, y.cols()}, 0.0);
  switch (bundle.obs_y.kind) {
    case ObsKind::GaussianFixedSigma:
      for (double& v : stddev.data()) v = bundle.obs_y.sigma;
      break;
    case ObsKind::GaussianLearnedSigma: {
      const Tensor raw = eval_raw(*bundle.dec_y, dec_in);
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < y.cols(); ++j) {
          const double ls = std::min(kLogSigmaClampHi,
                                     std::max(kLogSigmaClampLo, raw.at(i, y.cols() + j)));
          stddev.at(i, j) = std::exp(ls);
        }
      break;
    }
    case ObsKind::BernoulliMean:
      for (std::size_t i = 0; i < stddev.size(); ++i) {
        const double m = mean.data()[i];
        stddev.data()[i] = std::sqrt(m * (1.0 - m));
      }
      break;
  }

  std::vector<std::vector<std::vector<double>>> cells(n);
  for (std::size_t i = 0; i < n; ++i) {
    cells[i] = {tensor_row(y, i), tensor_row(mean, i), tensor_row(stddev, i)};
  }
  write_pgm(path, assemble_grid(cells, side));
}

void private_traversal_grid(const ModelBundle& bundle, const Tensor& x_inputs,
                            std::size_t n, const std::filesystem::path& path,
                            Rng rng) {
  if (!is_private(bundle.kind) || bundle.d_hx == 0) {
    throw ConfigError("private_traversal_grid needs a *_PRIVATE bundle with d_hx > 0");
  }
  if (x_inputs.rows() < n) throw ShapeError("need n input rows");
  const std::size_t side = square_side(bundle.dec_x->spec.head_dim, "traversal grid");

  const Tensor z = eval_means(bundle.enc_zx, x_inputs);
  // Column 0 holds h_x = 0; the rest are standard-normal draws.
  std::vector<std::vector<double>> h_cols(n, std::vector<double>(bundle.d_hx, 0.0));
  for (std::size_t c = 1; c < n; ++c) {
    Rng col = rng.substream(c);
    for (std::size_t j = 0; j < bundle.d_hx; ++j) h_cols[c][j] = col.next_normal();
  }

  std::vector<std::vector<std::vector<double>>> cells(n);
  for (std::size_t r = 0; r < n; ++r) {
    cells[r].resize(n);
    Tensor dec_in({n, bundle.d_z + bundle.d_hx}, 0.0);
    for (std::size_t c = 0; c < n; ++c) {
      for (std::size_t j = 0; j < bundle.d_z; ++j) dec_in.at(c, j) = z.at(r, j);
      for (std::size_t j = 0; j < bundle.d_hx; ++j)
        dec_in.at(c, bundle.d_z + j) = h_cols[c][j];
    }
    const Tensor means = eval_means(*bundle.dec_x, dec_in);
    for (std::size_t c = 0; c < n; ++c) cells[r][c] = tensor_row(means, c);
  }
  write_pgm(path, assemble_grid(cells, side));
}

void write_feature_csv(const std::filesystem::path& path, const FeatureMatrix& feats,
                       const std::vector<int>& labels) {
  if (!labels.empty() && labels.size() != feats.values.rows()) {
    throw ShapeError("label count must match feature rows");
  }
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  for (std::size_t c = 0; c < feats.values.cols(); ++c) {
    out << 'f' << c << ',';
  }
  out << "label\n";
  char buf[32];
  for (std::size_t r = 0; r < feats.values.rows(); ++r) {
    for (std::size_t c = 0; c < feats.values.cols(); ++c) {
      std::snprintf(buf, sizeof(buf), "%.17g", feats.values.at(r, c));
      out << buf << ',';
    }
    out << (labels.empty() ? -1 : labels[r]) << '\n';
  }
}

}  // namespace mvlatent
