#pragma once

#include <filesystem>
#include <numbers>
#include <span>
#include <vector>

#include "mvlatent/tensor.hpp"

namespace mvlatent {

// Paired two-view data: x is (N, d_x), y is (N, d_y); labels optional.
struct TwoViewDataset {
  Tensor x;
  Tensor y;
  std::vector<int> labels;  // empty when unlabeled

  struct Splits {
    std::vector<std::size_t> train;
    std::vector<std::size_t> tune;
    std::vector<std::size_t> test;
  } splits;

  std::size_t size() const { return x.rows(); }
  void validate() const;

  // Row-gathered copies for one split / index list.
  Tensor gather_x(std::span<const std::size_t> idx) const;
  Tensor gather_y(std::span<const std::size_t> idx) const;
  std::vector<int> gather_labels(std::span<const std::size_t> idx) const;
};

struct SynthConfig {
  std::size_t class_count = 10;
  std::size_t image_side = 16;
  std::size_t n_train = 5000;
  std::size_t n_tune = 1000;
  std::size_t n_test = 1000;
  double rotation_lo = -std::numbers::pi / 4;
  double rotation_hi = std::numbers::pi / 4;
  double noise_lo = 0.0;
  double noise_hi = 1.0;
  double jitter_sigma = 0.1;
  // View-1 translation range in normalized units (1 unit = half the image
  // side), applied with the rotation; view 2 stays centered so the class
  // prototype is its only structured content.
  double position_jitter = 0.3;
  std::uint64_t seed = 0;

  void validate() const;
};

// Optional generation trace for tests.
struct SynthDiagnostics {
  std::vector<double> rotation_angles;
};

// Two views of procedural glyph classes: view 1 is a rotated instance of
// class k, view 2 is a different instance of the same class plus uniform
// noise, truncated to [0,1]. The class identity is the only variable shared
// by the two views; every view-2 draw is keyed only by (sample, purpose)
// substreams and never consumes view-1 state.
TwoViewDataset generate_two_view(const SynthConfig& cfg,
                                 SynthDiagnostics* diag = nullptr);

// Deterministic class prototype on an s x s grid, values in [0,1].
std::vector<double> glyph_prototype(std::size_t class_id, std::size_t side);

// Prototype rendered at a sub-pixel offset (normalized units).
std::vector<double> render_glyph(std::size_t class_id, std::size_t side,
                                 double offset_u, double offset_v);

// Rotation about the image center with bilinear interpolation; out-of-bounds
// source pixels read as 0 and outputs are clamped to [0,1].
std::vector<double> rotate_image(std::span<const double> img, std::size_t side,
                                 double angle);

// IDX (MNIST container) reader: big-endian magic, dimension sizes, payload.
// Unsigned-byte image payloads are scaled to [0,1] by /255.
Tensor load_idx(const std::filesystem::path& path);
std::vector<int> load_idx_labels(const std::filesystem::path& path);

// The noisy two-view construction applied to real images: view 1 rotated,
// view 2 a same-label partner plus uniform noise, truncated. Splits are
// 50K/10K/10K when given the full 60K + 10K MNIST (train images first).
TwoViewDataset make_noisy_mnist(const Tensor& images, const std::vector<int>& labels,
                                std::uint64_t seed);

// Raw float64 little-endian matrices + meta.json (shapes, seed, splits).
void save_dataset(const std::filesystem::path& dir, const TwoViewDataset& ds,
                  std::uint64_t seed);
TwoViewDataset load_dataset(const std::filesystem::path& dir);

}  // namespace mvlatent
