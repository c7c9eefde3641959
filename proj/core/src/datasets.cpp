#include "mvlatent/datasets.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <iostream>
#include <unordered_set>

namespace mvlatent {

using nlohmann::json;

void TwoViewDataset::validate() const {
  if (x.rows() != y.rows()) {
    throw ShapeError("views must have equal row counts");
  }
  if (!labels.empty() && labels.size() != x.rows()) {
    throw ShapeError("label count must match row count");
  }
  std::unordered_set<std::size_t> seen;
  auto check_split = [&](const std::vector<std::size_t>& idx, const char* name) {
    for (std::size_t i : idx) {
      if (i >= x.rows()) {
        throw ConfigError(std::string(name) + " split index out of range");
      }
      if (!seen.insert(i).second) {
        throw ConfigError("splits must be disjoint");
      }
    }
  };
  check_split(splits.train, "train");
  check_split(splits.tune, "tune");
  check_split(splits.test, "test");
}

namespace {

Tensor gather_rows(const Tensor& src, std::span<const std::size_t> idx) {
  Tensor out({idx.size(), src.cols()}, 0.0);
  for (std::size_t i = 0; i < idx.size(); ++i) {
    if (idx[i] >= src.rows()) throw ShapeError("gather index out of range");
    for (std::size_t c = 0; c < src.cols(); ++c) out.at(i, c) = src.at(idx[i], c);
  }
  return out;
}

}  // namespace

Tensor TwoViewDataset::gather_x(std::span<const std::size_t> idx) const {
  return gather_rows(x, idx);
}

Tensor TwoViewDataset::gather_y(std::span<const std::size_t> idx) const {
  return gather_rows(y, idx);
}

std::vector<int> TwoViewDataset::gather_labels(std::span<const std::size_t> idx) const {
  if (labels.empty()) throw ConfigError("dataset has no labels");
  std::vector<int> out(idx.size());
  for (std::size_t i = 0; i < idx.size(); ++i) out[i] = labels[idx[i]];
  return out;
}

void SynthConfig::validate() const {
  if (class_count < 2) throw ConfigError("class_count must be >= 2");
  if (image_side < 4) throw ConfigError("image_side must be >= 4");
  if (n_train == 0) throw ConfigError("train split must be nonempty");
  if (!(rotation_lo <= rotation_hi)) throw ConfigError("bad rotation range");
  if (!(noise_lo <= noise_hi)) throw ConfigError("bad noise range");
  if (jitter_sigma < 0.0) throw ConfigError("jitter_sigma must be >= 0");
  if (position_jitter < 0.0 || position_jitter > 0.8) {
    throw ConfigError("position_jitter must lie in [0, 0.8]");
  }
}

// ---------------------------------------------------------------------------
// Glyphs

namespace {

// Shape predicate in [-1,1]^2 coordinates. Shapes are chosen so classes
// stay identifiable under rotations in [-pi/4, pi/4] (no plus/diagonal-cross
// pair, bars only touch at exactly 45 degrees).
bool glyph_hit(std::size_t shape, double u, double v) {
  const double r = std::sqrt(u * u + v * v);
  switch (shape) {
    case 0: return r < 0.35;
    case 1: return std::abs(r - 0.62) < 0.10;
    case 2: return (std::abs(u) < 0.15 && std::abs(v) < 0.75) ||
                   (std::abs(v) < 0.15 && std::abs(u) < 0.75);
    case 3: return std::abs(v) < 0.18 && std::abs(u) < 0.80;
    case 4: return std::abs(u) < 0.18 && std::abs(v) < 0.80;
    case 5: return std::abs(r - 0.28) < 0.08 || std::abs(r - 0.66) < 0.08;
    case 6: {
      const double du = u - 0.25;
      return r < 0.62 && std::sqrt(du * du + v * v) > 0.42;  // crescent
    }
    case 7: return std::max(std::abs(u), std::abs(v)) > 0.45 &&
                   std::max(std::abs(u), std::abs(v)) < 0.72;
    case 8: return std::max(std::abs(u), std::abs(v)) < 0.42;
    case 9: {
      for (int k = 0; k < 4; ++k) {
        const double a = k * std::numbers::pi / 2.0;
        const double du = u - 0.66 * std::cos(a);
        const double dv = v - 0.66 * std::sin(a);
        if (std::sqrt(du * du + dv * dv) < 0.22) return true;
      }
      return false;
    }
    default: return false;
  }
}

}  // namespace

std::vector<double> render_glyph(std::size_t class_id, std::size_t side,
                                 double offset_u, double offset_v) {
  const std::size_t shape = class_id % 10;
  // Classes beyond the base ten reuse shapes at a smaller scale.
  const double scale = std::pow(0.72, static_cast<double>(class_id / 10));
  std::vector<double> img(side * side, 0.0);
  const double half = static_cast<double>(side) / 2.0;
  constexpr int kSub = 3;  // supersampling grid per pixel
  for (std::size_t row = 0; row < side; ++row) {
    for (std::size_t col = 0; col < side; ++col) {
      int hits = 0;
      for (int sr = 0; sr < kSub; ++sr) {
        for (int sc = 0; sc < kSub; ++sc) {
          const double y = (static_cast<double>(row) + (sr + 0.5) / kSub) / half - 1.0;
          const double x = (static_cast<double>(col) + (sc + 0.5) / kSub) / half - 1.0;
          if (glyph_hit(shape, (x - offset_u) / scale, (y - offset_v) / scale)) ++hits;
        }
      }
      img[row * side + col] = static_cast<double>(hits) / (kSub * kSub);
    }
  }
  return img;
}

std::vector<double> glyph_prototype(std::size_t class_id, std::size_t side) {
  return render_glyph(class_id, side, 0.0, 0.0);
}

std::vector<double> rotate_image(std::span<const double> img, std::size_t side,
                                 double angle) {
  if (!std::isfinite(angle)) throw NumericError("rotation angle must be finite");
  if (img.size() != side * side) throw ShapeError("rotate_image: bad image size");
  std::vector<double> out(side * side, 0.0);
  const double c = std::cos(angle);
  const double s = std::sin(angle);
  const double center = (static_cast<double>(side) - 1.0) / 2.0;
  for (std::size_t row = 0; row < side; ++row) {
    for (std::size_t col = 0; col < side; ++col) {
      // Inverse map: destination pixel pulls from the source.
      const double dx = static_cast<double>(col) - center;
      const double dy = static_cast<double>(row) - center;
      const double sx = c * dx + s * dy + center;
      const double sy = -s * dx + c * dy + center;
      const double fx = std::floor(sx);
      const double fy = std::floor(sy);
      const double wx = sx - fx;
      const double wy = sy - fy;
      auto sample = [&](double yy, double xx) -> double {
        const auto iy = static_cast<long long>(yy);
        const auto ix = static_cast<long long>(xx);
        if (iy < 0 || ix < 0 || iy >= static_cast<long long>(side) ||
            ix >= static_cast<long long>(side)) {
          return 0.0;
        }
        return img[static_cast<std::size_t>(iy) * side + static_cast<std::size_t>(ix)];
      };
      const double v = (1.0 - wy) * ((1.0 - wx) * sample(fy, fx) + wx * sample(fy, fx + 1)) +
                       wy * ((1.0 - wx) * sample(fy + 1, fx) + wx * sample(fy + 1, fx + 1));
      out[row * side + col] = std::min(1.0, std::max(0.0, v));
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Synthetic two-view generation

namespace {

// Per-sample purpose streams. View-2 streams never depend on view-1 draws,
// which is what makes the two views conditionally independent given the
// class.
enum SamplePurpose : unsigned {
  kPurposeLabel = 0,
  kPurposeView1Jitter,
  kPurposeView1Angle,
  kPurposeView2Jitter,
  kPurposeView2Noise,
};

// An instance: the centered class glyph plus Gaussian pixel jitter,
// clamped to [0,1].
std::vector<double> make_instance(const SynthConfig& cfg, std::size_t label,
                                  Rng rng) {
  std::vector<double> out = glyph_prototype(label, cfg.image_side);
  if (cfg.jitter_sigma > 0.0) {
    for (double& v : out) {
      v = std::min(1.0, std::max(0.0, v + cfg.jitter_sigma * rng.next_normal()));
    }
  }
  return out;
}

// Rotation about the center combined with a translation, one bilinear
// resample; out-of-bounds reads are 0 and outputs clamp to [0,1].
std::vector<double> rotate_translate(std::span<const double> img, std::size_t side,
                                     double angle, double shift_x, double shift_y) {
  std::vector<double> out(side * side, 0.0);
  const double c = std::cos(angle);
  const double s = std::sin(angle);
  const double center = (static_cast<double>(side) - 1.0) / 2.0;
  for (std::size_t row = 0; row < side; ++row) {
    for (std::size_t col = 0; col < side; ++col) {
      const double dx = static_cast<double>(col) - center - shift_x;
      const double dy = static_cast<double>(row) - center - shift_y;
      const double sx = c * dx + s * dy + center;
      const double sy = -s * dx + c * dy + center;
      const double fx = std::floor(sx);
      const double fy = std::floor(sy);
      const double wx = sx - fx;
      const double wy = sy - fy;
      auto sample = [&](double yy, double xx) -> double {
        const auto iy = static_cast<long long>(yy);
        const auto ix = static_cast<long long>(xx);
        if (iy < 0 || ix < 0 || iy >= static_cast<long long>(side) ||
            ix >= static_cast<long long>(side)) {
          return 0.0;
        }
        return img[static_cast<std::size_t>(iy) * side + static_cast<std::size_t>(ix)];
      };
      const double v = (1.0 - wy) * ((1.0 - wx) * sample(fy, fx) + wx * sample(fy, fx + 1)) +
                       wy * ((1.0 - wx) * sample(fy + 1, fx) + wx * sample(fy + 1, fx + 1));
      out[row * side + col] = std::min(1.0, std::max(0.0, v));
    }
  }
  return out;
}

}  // namespace

TwoViewDataset generate_two_view(const SynthConfig& cfg, SynthDiagnostics* diag) {
  cfg.validate();
  const std::size_t n = cfg.n_train + cfg.n_tune + cfg.n_test;
  const std::size_t d = cfg.image_side * cfg.image_side;

  TwoViewDataset ds;
  ds.x = Tensor({n, d}, 0.0);
  ds.y = Tensor({n, d}, 0.0);
  ds.labels.resize(n);
  if (diag) diag->rotation_angles.assign(n, 0.0);

  const Rng root(cfg.seed);
  for (std::size_t i = 0; i < n; ++i) {
    const Rng sample = root.substream(i);
    Rng label_rng = sample.substream(kPurposeLabel);
    const auto k = static_cast<std::size_t>(label_rng.next_double() *
                                            static_cast<double>(cfg.class_count));
    const std::size_t label = std::min(k, cfg.class_count - 1);
    ds.labels[i] = static_cast<int>(label);

    const std::vector<double> inst1 =
        make_instance(cfg, label, sample.substream(kPurposeView1Jitter));
    Rng angle_rng = sample.substream(kPurposeView1Angle);
    const double angle = angle_rng.next_uniform(cfg.rotation_lo, cfg.rotation_hi);
    if (diag) diag->rotation_angles[i] = angle;
    const double half = static_cast<double>(cfg.image_side) / 2.0;
    const double px = cfg.position_jitter * half;
    const double sx = px > 0.0 ? angle_rng.next_uniform(-px, px) : 0.0;
    const double sy = px > 0.0 ? angle_rng.next_uniform(-px, px) : 0.0;
    const std::vector<double> view1 =
        rotate_translate(inst1, cfg.image_side, angle, sx, sy);

    const std::vector<double> inst2 =
        make_instance(cfg, label, sample.substream(kPurposeView2Jitter));
    Rng noise_rng = sample.substream(kPurposeView2Noise);
    for (std::size_t p = 0; p < d; ++p) {
      ds.x.at(i, p) = view1[p];
      const double noisy = inst2[p] + noise_rng.next_uniform(cfg.noise_lo, cfg.noise_hi);
      ds.y.at(i, p) = std::min(1.0, std::max(0.0, noisy));
    }
  }

  ds.splits.train.resize(cfg.n_train);
  ds.splits.tune.resize(cfg.n_tune);
  ds.splits.test.resize(cfg.n_test);
  for (std::size_t i = 0; i < cfg.n_train; ++i) ds.splits.train[i] = i;
  for (std::size_t i = 0; i < cfg.n_tune; ++i) ds.splits.tune[i] = cfg.n_train + i;
  for (std::size_t i = 0; i < cfg.n_test; ++i)
    ds.splits.test[i] = cfg.n_train + cfg.n_tune + i;
  ds.validate();
  return ds;
}

// ---------------------------------------------------------------------------
// IDX

namespace {

std::uint32_t read_u32_be(std::ifstream& in) {
  unsigned char b[4];
  in.read(reinterpret_cast<char*>(b), 4);
  if (!in) throw IoError("IDX header truncated");
  return (static_cast<std::uint32_t>(b[0]) << 24) |
         (static_cast<std::uint32_t>(b[1]) << 16) |
         (static_cast<std::uint32_t>(b[2]) << 8) | static_cast<std::uint32_t>(b[3]);
}

struct IdxHeader {
  unsigned element_type = 0;
  std::vector<std::size_t> dims;
};

IdxHeader read_idx_header(std::ifstream& in, const std::filesystem::path& path) {
  const std::uint32_t magic = read_u32_be(in);
  if ((magic & 0xFFFF0000u) != 0) {
    throw IoError("bad IDX magic in " + path.string());
  }
  IdxHeader header;
  header.element_type = (magic >> 8) & 0xFF;
  const unsigned ndims = magic & 0xFF;
  if (ndims == 0 || ndims > 3) {
    throw IoError("unsupported IDX dimensionality in " + path.string());
  }
  for (unsigned i = 0; i < ndims; ++i) {
    header.dims.push_back(read_u32_be(in));
  }
  return header;
}

std::vector<unsigned char> read_payload(std::ifstream& in, std::size_t expected,
                                        const std::filesystem::path& path) {
  std::vector<unsigned char> bytes(expected);
  in.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(expected));
  const auto got = static_cast<std::size_t>(in.gcount());
  if (got != expected) {
    throw IoError("truncated IDX payload in " + path.string() + ": expected " +
                  std::to_string(expected) + " bytes, found " + std::to_string(got));
  }
  return bytes;
}

}  // namespace

Tensor load_idx(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open IDX file " + path.string());
  const IdxHeader header = read_idx_header(in, path);
  if (header.element_type != 0x08) {
    throw IoError("unsupported IDX element type in " + path.string() +
                  " (only unsigned byte is supported)");
  }
  std::size_t total = 1;
  for (std::size_t d : header.dims) total *= d;
  const std::vector<unsigned char> bytes = read_payload(in, total, path);
  Tensor out(header.dims, 0.0);
  for (std::size_t i = 0; i < total; ++i) {
    out.data()[i] = static_cast<double>(bytes[i]) / 255.0;
  }
  return out;
}

std::vector<int> load_idx_labels(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open IDX file " + path.string());
  const IdxHeader header = read_idx_header(in, path);
  if (header.element_type != 0x08 || header.dims.size() != 1) {
    throw IoError("label file must be a 1-D unsigned-byte IDX: " + path.string());
  }
  const std::vector<unsigned char> bytes = read_payload(in, header.dims[0], path);
  return {bytes.begin(), bytes.end()};
}

// ---------------------------------------------------------------------------
// Noisy two-view construction over real images

TwoViewDataset make_noisy_mnist(const Tensor& images, const std::vector<int>& labels,
                                std::uint64_t seed) {
  Tensor flat = images;
  if (images.rank() == 3) {
    const auto& sh = images.shape();
    flat = Tensor({sh[0], sh[1] * sh[2]},
                  std::vector<double>(images.data().begin(), images.data().end()));
  }
  const std::size_t n = flat.rows();
  const std::size_t d = flat.cols();
  if (labels.size() != n) throw ShapeError("label count must match image count");
  const auto side = static_cast<std::size_t>(std::lround(std::sqrt(static_cast<double>(d))));
  if (side * side != d) throw ShapeError("images must be square for rotation");
  for (double v : flat.data()) {
    if (v < 0.0 || v > 1.0) throw NumericError("images must lie in [0,1]");
  }

  std::vector<std::vector<std::size_t>> by_label;
  for (std::size_t i = 0; i < n; ++i) {
    const int lb = labels[i];
    if (lb < 0) throw ConfigError("labels must be nonnegative");
    if (static_cast<std::size_t>(lb) >= by_label.size()) by_label.resize(lb + 1);
    by_label[static_cast<std::size_t>(lb)].push_back(i);
  }

  TwoViewDataset ds;
  ds.x = Tensor({n, d}, 0.0);
  ds.y = Tensor({n, d}, 0.0);
  ds.labels = labels;

  const Rng root(seed);
  bool warned_single = false;
  for (std::size_t i = 0; i < n; ++i) {
    const Rng sample = root.substream(i);
    Rng angle_rng = sample.substream(kPurposeView1Angle);
    const double angle =
        angle_rng.next_uniform(-std::numbers::pi / 4, std::numbers::pi / 4);
    std::vector<double> img(d);
    for (std::size_t p = 0; p < d; ++p) img[p] = flat.at(i, p);
    const std::vector<double> view1 = rotate_image(img, side, angle);

    const auto& peers = by_label[static_cast<std::size_t>(labels[i])];
    Rng partner_rng = sample.substream(kPurposeView2Jitter);
    std::size_t partner = i;
    if (peers.size() == 1) {
      if (!warned_single) {
        std::cerr << "make_noisy_mnist: label " << labels[i]
                  << " has a single instance; pairing it with itself\n";
        warned_single = true;
      }
    } else {
      // Uniform over same-label peers excluding the sample itself.
      const auto pick = static_cast<std::size_t>(
          partner_rng.next_double() * static_cast<double>(peers.size() - 1));
      std::size_t pos = std::min(pick, peers.size() - 2);
      std::size_t self_pos = peers.size();
      for (std::size_t q = 0; q < peers.size(); ++q) {
        if (peers[q] == i) {
          self_pos = q;
          break;
        }
      }
      if (pos >= self_pos) ++pos;
      partner = peers[pos];
    }

    Rng noise_rng = sample.substream(kPurposeView2Noise);
    for (std::size_t p = 0; p < d; ++p) {
      ds.x.at(i, p) = view1[p];
      const double noisy = flat.at(partner, p) + noise_rng.next_uniform(0.0, 1.0);
      ds.y.at(i, p) = std::min(1.0, std::max(0.0, noisy));
    }
  }

  // Full MNIST (60K train + 10K test appended) gets the 50K/10K/10K split;
  // anything else splits 80/10/10 by position.
  std::size_t n_train, n_tune;
  if (n == 70000) {
    n_train = 50000;
    n_tune = 10000;
  } else {
    n_tune = std::max<std::size_t>(1, n / 10);
    n_train = n - 2 * n_tune;
  }
  for (std::size_t i = 0; i < n_train; ++i) ds.splits.train.push_back(i);
  for (std::size_t i = n_train; i < n_train + n_tune; ++i) ds.splits.tune.push_back(i);
  for (std::size_t i = n_train + n_tune; i < n; ++i) ds.splits.test.push_back(i);
  ds.validate();
  return ds;
}

// ---------------------------------------------------------------------------
// Dataset persistence

namespace {

void write_matrix(const std::filesystem::path& path, const Tensor& t) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  for (double v : t.data()) {
    const std::uint64_t bits = std::bit_cast<std::uint64_t>(v);
    unsigned char b[8];
    for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(bits >> (8 * i));
    out.write(reinterpret_cast<const char*>(b), 8);
  }
}

Tensor read_matrix(const std::filesystem::path& path, std::size_t rows,
                   std::size_t cols) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  Tensor t({rows, cols}, 0.0);
  for (double& v : t.data()) {
    unsigned char b[8];
    in.read(reinterpret_cast<char*>(b), 8);
    if (!in) throw IoError("truncated matrix file " + path.string());
    std::uint64_t bits = 0;
    for (int i = 0; i < 8; ++i) bits |= static_cast<std::uint64_t>(b[i]) << (8 * i);
    v = std::bit_cast<double>(bits);
  }
  return t;
}

}  // namespace

void save_dataset(const std::filesystem::path& dir, const TwoViewDataset& ds,
                  std::uint64_t seed) {
  ds.validate();
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError("cannot create dataset dir " + dir.string());
  write_matrix(dir / "x.f64", ds.x);
  write_matrix(dir / "y.f64", ds.y);
  if (!ds.labels.empty()) {
    Tensor lab({ds.labels.size(), 1}, 0.0);
    for (std::size_t i = 0; i < ds.labels.size(); ++i)
      lab.data()[i] = static_cast<double>(ds.labels[i]);
    write_matrix(dir / "labels.f64", lab);
  }
  json meta;
  meta["rows"] = ds.size();
  meta["d_x"] = ds.x.cols();
  meta["d_y"] = ds.y.cols();
  meta["seed"] = seed;
  meta["has_labels"] = !ds.labels.empty();
  meta["splits"] = {{"train", ds.splits.train},
                    {"tune", ds.splits.tune},
                    {"test", ds.splits.test}};
  std::ofstream out(dir / "meta.json");
  if (!out) throw IoError("cannot write meta.json in " + dir.string());
  out << meta.dump(2) << '\n';
}

TwoViewDataset load_dataset(const std::filesystem::path& dir) {
  std::ifstream in(dir / "meta.json");
  if (!in) throw IoError("cannot open " + (dir / "meta.json").string());
  json meta;
  try {
    in >> meta;
  } catch (const json::exception& e) {
    throw IoError("corrupt meta.json: " + std::string(e.what()));
  }
  const auto rows = meta.at("rows").get<std::size_t>();
  TwoViewDataset ds;
  ds.x = read_matrix(dir / "x.f64", rows, meta.at("d_x").get<std::size_t>());
  ds.y = read_matrix(dir / "y.f64", rows, meta.at("d_y").get<std::size_t>());
  if (meta.at("has_labels").get<bool>()) {
    const Tensor lab = read_matrix(dir / "labels.f64", rows, 1);
    ds.labels.resize(rows);
    for (std::size_t i = 0; i < rows; ++i)
      ds.labels[i] = static_cast<int>(lab.data()[i]);
  }
  const json& splits = meta.at("splits");
  ds.splits.train = splits.at("train").get<std::vector<std::size_t>>();
  ds.splits.tune = splits.at("tune").get<std::vector<std::size_t>>();
  ds.splits.test = splits.at("test").get<std::vector<std::size_t>>();
  ds.validate();
  return ds;
}

}  // namespace mvlatent
