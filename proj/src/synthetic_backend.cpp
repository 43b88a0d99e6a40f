#include "stylescout/synthetic_backend.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>

#include "stylescout/error.hpp"
#include "stylescout/rng.hpp"

namespace stylescout {

namespace {

constexpr std::array<std::string_view, kSyntheticAttributeCount> kAttributeNames = {
    "mouth_curvature", "eye_aperture", "hair_hue", "brow_tilt",
    "nose_length",     "cheek_blush",  "ear_size", "collar_tone"};

struct Rect {
  int r0, c0, r1, c1;  // half-open, mask cells
};

// Screen regions in kMaskSize coordinates; pairwise disjoint.
const std::array<std::vector<Rect>, kSyntheticAttributeCount> kRegions = {{
    {{44, 20, 54, 44}},                     // mouth
    {{20, 12, 28, 52}},                     // eyes
    {{0, 8, 10, 56}},                       // hair
    {{12, 12, 18, 52}},                     // brows
    {{29, 27, 42, 37}},                     // nose
    {{30, 10, 42, 24}, {30, 40, 42, 54}},   // cheeks
    {{20, 0, 44, 8}, {20, 56, 44, 64}},     // ears
    {{56, 8, 64, 56}},                      // collar
}};

constexpr std::array<std::uint8_t, 4> kMagic = {'S', 'S', 'Y', '1'};

struct Rgb {
  double r, g, b;
};

Rgb hsv(double h, double s, double v) {
  h = h - std::floor(h);
  const double i = std::floor(h * 6.0);
  const double f = h * 6.0 - i;
  const double p = v * (1 - s), q = v * (1 - f * s), t = v * (1 - (1 - f) * s);
  switch (static_cast<int>(i) % 6) {
    case 0: return {v, t, p};
    case 1: return {q, v, p};
    case 2: return {p, v, t};
    case 3: return {p, q, v};
    case 4: return {t, p, v};
    default: return {v, p, q};
  }
}

void put(Image& image, int x, int y, Rgb c) {
  std::uint8_t* px = image.pixel(x, y);
  px[0] = static_cast<std::uint8_t>(std::clamp(std::lround(c.r * 255.0), 0L, 255L));
  px[1] = static_cast<std::uint8_t>(std::clamp(std::lround(c.g * 255.0), 0L, 255L));
  px[2] = static_cast<std::uint8_t>(std::clamp(std::lround(c.b * 255.0), 0L, 255L));
}

double unit(double a) { return 0.5 * (a + 1.0); }  // (-1, 1) -> (0, 1)

}  // namespace

SyntheticBackend::SyntheticBackend(SyntheticConfig config) : config_(config) {
  if (config_.attributes < 1 || config_.attributes > kSyntheticAttributeCount) {
    throw InvalidArgument("synthetic backend: attribute count must lie in [1, 8]");
  }
  if (config_.layers < 1 || config_.channels_per_layer < 1) throw InvalidArgument("synthetic backend: empty layout");
  const Eigen::Index dim = config_.dim();
  const int attrs = config_.attributes;
  if (config_.params_per_attribute < 1 || static_cast<Eigen::Index>(config_.params_per_attribute) * attrs > dim) {
    throw InvalidArgument("synthetic backend: attribute supports do not fit the parameter dimension");
  }
  if (config_.embedding_dim < attrs + 1) throw InvalidArgument("synthetic backend: embedding_dim must exceed attributes");
  if (!(config_.weight_min > 0.0 && config_.weight_max >= config_.weight_min)) {
    throw InvalidArgument("synthetic backend: bad weight range");
  }
  if (config_.image_size < 64) throw InvalidArgument("synthetic backend: image_size must be at least 64");

  // Row-sparse mixing: a seeded permutation hands each attribute its own
  // block of parameters; the remaining rows stay zero.
  Rng rng(derive_seed(config_.model_seed, 1));
  std::vector<int> perm(static_cast<std::size_t>(dim));
  for (Eigen::Index i = 0; i < dim; ++i) perm[i] = static_cast<int>(i);
  for (Eigen::Index i = dim - 1; i > 0; --i) {
    std::swap(perm[i], perm[rng.below(static_cast<std::uint64_t>(i + 1))]);
  }
  mixing_ = Eigen::MatrixXd::Zero(dim, attrs);
  for (int j = 0; j < attrs; ++j) {
    for (int k = 0; k < config_.params_per_attribute; ++k) {
      const int row = perm[static_cast<std::size_t>(j * config_.params_per_attribute + k)];
      const double magnitude = config_.weight_min + (config_.weight_max - config_.weight_min) * rng.uniform();
      mixing_(row, j) = (rng.uniform() < 0.5 ? -1.0 : 1.0) * magnitude;
    }
  }

  Rng qrng(derive_seed(config_.model_seed, 2));
  Eigen::MatrixXd gaussian(config_.embedding_dim, config_.embedding_dim);
  for (Eigen::Index c = 0; c < gaussian.cols(); ++c) {
    for (Eigen::Index r = 0; r < gaussian.rows(); ++r) gaussian(r, c) = qrng.normal();
  }
  const Eigen::MatrixXd q = Eigen::HouseholderQR<Eigen::MatrixXd>(gaussian).householderQ();
  embedding_map_ = q.leftCols(attrs + 1);

  for (int j = 0; j < attrs; ++j) {
    Eigen::Array<bool, Eigen::Dynamic, Eigen::Dynamic> region =
        Eigen::Array<bool, Eigen::Dynamic, Eigen::Dynamic>::Constant(kMaskSize, kMaskSize, false);
    for (const Rect& r : kRegions[j]) region.block(r.r0, r.c0, r.r1 - r.r0, r.c1 - r.c0).setConstant(true);
    regions_.push_back(std::move(region));
  }

  meta_.dim = dim;
  for (int l = 0; l < config_.layers; ++l) meta_.layout.push_back({l, config_.channels_per_layer});
  meta_.embedding_dim = config_.embedding_dim;
  meta_.lambda_max = config_.lambda_max;

  // Exemplars: Gaussian style vectors scaled so each attribute's
  // pre-activation has standard deviation exemplar_spread.
  const double mean_energy = mixing_.colwise().squaredNorm().mean();
  const double scale = config_.exemplar_spread / std::sqrt(mean_energy);
  Rng erng(derive_seed(config_.model_seed, 3));
  for (int e = 0; e < config_.exemplar_count; ++e) {
    Exemplar ex{"e" + std::to_string(e), StyleVector(dim)};
    for (Eigen::Index i = 0; i < dim; ++i) ex.values[i] = scale * erng.normal();
    meta_.exemplars.push_back(std::move(ex));
  }
  meta_.validate();

  std::uint64_t fp = config_.model_seed;
  for (const std::uint64_t v : {std::uint64_t(config_.layers), std::uint64_t(config_.channels_per_layer),
                                std::uint64_t(attrs), std::uint64_t(config_.embedding_dim),
                                std::uint64_t(config_.params_per_attribute), std::bit_cast<std::uint64_t>(config_.weight_min),
                                std::bit_cast<std::uint64_t>(config_.weight_max), std::uint64_t(config_.image_size)}) {
    fp = mix_seed(fp ^ v);
  }
  fingerprint_ = fp;
}

Eigen::VectorXd SyntheticBackend::attributes(const StyleVector& values) const {
  if (values.size() != meta_.dim) {
    throw InvalidArgument("style vector has dimension " + std::to_string(values.size()) + ", expected " +
                          std::to_string(meta_.dim));
  }
  if (!values.allFinite()) throw InvalidArgument("style vector has non-finite entries");
  return (mixing_.transpose() * values).array().tanh().matrix();
}

Eigen::VectorXd SyntheticBackend::embed_attributes(const Eigen::VectorXd& attributes) const {
  Eigen::VectorXd padded(attributes.size() + 1);
  padded << attributes, 1.0;
  return embedding_map_ * (padded / padded.norm());
}

Image SyntheticBackend::generate(const StyleVector& values) const {
  const Eigen::VectorXd a = attributes(values);
  Image image(config_.image_size, config_.image_size);
  render(a, image);
  write_signature(a, image);
  return image;
}

void SyntheticBackend::render(const Eigen::VectorXd& attributes, Image& image) const {
  const int n = config_.image_size;
  const double s = n / static_cast<double>(kMaskSize);  // pixels per mask cell
  auto attr = [&](int j) { return j < attributes.size() ? attributes[j] : 0.0; };

  const Rgb background{0.78, 0.82, 0.88};
  const Rgb skin{0.93, 0.78, 0.66};
  const Rgb dark{0.18, 0.12, 0.10};
  const Rgb hair = hsv(0.05 + 0.45 * unit(attr(2)), 0.6, 0.55);
  const Rgb collar = hsv(0.6, 0.35, 0.2 + 0.7 * unit(attr(7)));
  const double blush = 0.6 * unit(attr(5));
  const double eye_open = 0.5 + 3.0 * unit(attr(1));
  const double brow_tilt = 0.35 * attr(3);
  const double nose_len = 4.0 + 8.0 * unit(attr(4));
  const double ear_r = 2.0 + 2.5 * unit(attr(6));
  const double smile = 0.035 * attr(0);

  for (int y = 0; y < n - 1; ++y) {  // last row holds the signature
    for (int x = 0; x < n; ++x) {
      const double cy = y / s, cx = x / s;  // mask-cell coordinates
      Rgb c = background;

      const double fx = (cx - 32.0) / 24.0, fy = (cy - 34.0) / 26.0;
      const bool face = fx * fx + fy * fy <= 1.0;
      if (face) c = skin;

      for (const double ex : {4.0, 60.0}) {
        const double dx = (cx - ex) / ear_r, dy = (cy - 32.0) / (2.0 * ear_r);
        if (dx * dx + dy * dy <= 1.0) c = skin;
      }
      if (cy < 10.0 && cx >= 8.0 && cx < 56.0) c = hair;

      if (face) {
        for (const double chx : {17.0, 47.0}) {
          const double d2 = ((cx - chx) * (cx - chx) + (cy - 36.0) * (cy - 36.0)) / 25.0;
          if (d2 <= 1.0) c = {c.r, c.g * (1.0 - blush * (1.0 - d2)), c.b * (1.0 - blush * (1.0 - d2))};
        }
        for (const double bx : {22.0, 42.0}) {
          const double side = bx < 32.0 ? -1.0 : 1.0;
          const double line = 15.0 + side * brow_tilt * (cx - bx);
          if (std::abs(cx - bx) <= 7.0 && std::abs(cy - line) <= 0.8) c = dark;
        }
        for (const double exx : {22.0, 42.0}) {
          const double dx = (cx - exx) / 5.0, dy = (cy - 24.0) / eye_open;
          if (dx * dx + dy * dy <= 1.0) c = (dx * dx + dy * dy <= 0.2) ? dark : Rgb{0.97, 0.97, 0.97};
        }
        if (std::abs(cx - 32.0) <= 1.2 && cy >= 30.0 && cy <= 30.0 + nose_len) c = {0.80, 0.62, 0.52};
        if (cx >= 22.0 && cx <= 42.0) {
          const double curve = 49.0 - smile * ((cx - 32.0) * (cx - 32.0) - 50.0);
          if (std::abs(cy - curve) <= 0.9) c = {0.65, 0.15, 0.2};
        }
      }
      if (cy >= 56.0 && cx >= 8.0 && cx < 56.0) c = collar;
      put(image, x, y, c);
    }
  }
}

void SyntheticBackend::write_signature(const Eigen::VectorXd& attributes, Image& image) const {
  std::uint8_t* row = image.pixel(0, image.height - 1);
  std::memset(row, 0, static_cast<std::size_t>(image.width) * 3);
  std::memcpy(row, kMagic.data(), kMagic.size());
  row[4] = static_cast<std::uint8_t>(attributes.size());
  for (int b = 0; b < 8; ++b) row[8 + b] = static_cast<std::uint8_t>(fingerprint_ >> (8 * b));
  for (Eigen::Index j = 0; j < attributes.size(); ++j) {
    const auto bits = std::bit_cast<std::uint64_t>(attributes[j]);
    for (int b = 0; b < 8; ++b) row[16 + 8 * j + b] = static_cast<std::uint8_t>(bits >> (8 * b));
  }
}

Eigen::VectorXd SyntheticBackend::read_attributes(const Image& image) const {
  if (image.width != config_.image_size || image.height != config_.image_size ||
      image.rgb.size() != static_cast<std::size_t>(image.width) * image.height * 3) {
    throw InvalidArgument("image was not produced by this backend (size)");
  }
  const std::uint8_t* row = image.pixel(0, image.height - 1);
  std::uint64_t fp = 0;
  for (int b = 0; b < 8; ++b) fp |= static_cast<std::uint64_t>(row[8 + b]) << (8 * b);
  if (!std::equal(kMagic.begin(), kMagic.end(), row) || row[4] != config_.attributes || fp != fingerprint_) {
    throw InvalidArgument("image was not produced by this backend");
  }
  Eigen::VectorXd a(config_.attributes);
  for (int j = 0; j < config_.attributes; ++j) {
    std::uint64_t bits = 0;
    for (int b = 0; b < 8; ++b) bits |= static_cast<std::uint64_t>(row[16 + 8 * j + b]) << (8 * b);
    a[j] = std::bit_cast<double>(bits);
  }
  if (!a.allFinite() || (a.array().abs() > 1.0).any()) throw InvalidArgument("image carries corrupt attributes");
  return a;
}

Eigen::VectorXd SyntheticBackend::embed(const Image& image) const { return embed_attributes(read_attributes(image)); }

Eigen::VectorXd SyntheticBackend::importance(const HighlightMask& mask) const {
  mask.validate();
  if (!meta_.has_exemplar(mask.exemplar_id)) throw NotFound("unknown exemplar: " + mask.exemplar_id);
  Eigen::VectorXd overlap(config_.attributes);
  for (int j = 0; j < config_.attributes; ++j) {
    const double inside = (mask.grid && regions_[j]).count();
    overlap[j] = inside / static_cast<double>(regions_[j].count());
  }
  return mixing_.cwiseAbs() * overlap;
}

std::vector<int> SyntheticBackend::attribute_support(int attribute) const {
  if (attribute < 0 || attribute >= config_.attributes) throw NotFound("unknown attribute index");
  std::vector<int> out;
  for (Eigen::Index i = 0; i < mixing_.rows(); ++i) {
    if (mixing_(i, attribute) != 0.0) out.push_back(static_cast<int>(i));
  }
  return out;
}

std::string_view SyntheticBackend::attribute_name(int attribute) {
  if (attribute < 0 || attribute >= kSyntheticAttributeCount) throw NotFound("unknown attribute index");
  return kAttributeNames[static_cast<std::size_t>(attribute)];
}

int SyntheticBackend::attribute_index(std::string_view name) const {
  for (int j = 0; j < config_.attributes; ++j) {
    if (kAttributeNames[static_cast<std::size_t>(j)] == name) return j;
  }
  throw NotFound("unknown attribute: " + std::string(name));
}

HighlightMask SyntheticBackend::region_mask(int attribute, const std::string& exemplar_id) const {
  if (attribute < 0 || attribute >= config_.attributes) throw NotFound("unknown attribute index");
  HighlightMask mask;
  mask.exemplar_id = exemplar_id;
  mask.grid = regions_[static_cast<std::size_t>(attribute)];
  return mask;
}

}  // namespace stylescout
