#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "stylescout/backend.hpp"

namespace stylescout {

struct SyntheticConfig {
  std::uint64_t model_seed = 7;
  int layers = 8;
  int channels_per_layer = 64;
  int attributes = 8;  // at most kSyntheticAttributeCount
  int embedding_dim = 32;
  int params_per_attribute = 32;
  double weight_min = 4.0;
  double weight_max = 8.0;
  int image_size = 128;
  double lambda_max = kDefaultLambdaMax;
  int exemplar_count = 4;
  double exemplar_spread = 0.4;  // std of exemplar pre-activations

  Eigen::Index dim() const { return static_cast<Eigen::Index>(layers) * channels_per_layer; }
};

inline constexpr int kSyntheticAttributeCount = 8;

/// Analytic stand-in for a style-based generator.
///
/// attributes(v) = tanh(mixing^T v), with a row-sparse mixing matrix: each
/// active parameter drives exactly one attribute. Renders are abstract faces
/// whose features are functions of the attributes only; the exact attribute
/// values ride along in a signature row at the bottom of the image so that
/// embed() can recover them losslessly. Every attribute owns a fixed screen
/// region, which is what importance() scores masks against.
class SyntheticBackend final : public GeneratorBackend {
 public:
  explicit SyntheticBackend(SyntheticConfig config = {});

  const BackendMeta& meta() const override { return meta_; }
  Image generate(const StyleVector& values) const override;
  Eigen::VectorXd embed(const Image& image) const override;
  Eigen::VectorXd importance(const HighlightMask& mask) const override;
  bool concurrent() const override { return true; }

  const SyntheticConfig& config() const { return config_; }
  const Eigen::MatrixXd& mixing() const { return mixing_; }  // D x A

  Eigen::VectorXd attributes(const StyleVector& values) const;
  /// Unit embedding of an attribute vector (what embed() returns).
  Eigen::VectorXd embed_attributes(const Eigen::VectorXd& attributes) const;
  /// Attribute values carried by a render; throws InvalidArgument for images
  /// this model did not produce.
  Eigen::VectorXd read_attributes(const Image& image) const;

  /// Parameters with a nonzero mixing weight for attribute j, ascending.
  std::vector<int> attribute_support(int attribute) const;
  static std::string_view attribute_name(int attribute);
  int attribute_index(std::string_view name) const;  // throws NotFound
  int attribute_count() const { return config_.attributes; }

  /// Mask covering exactly the screen region owned by attribute j.
  HighlightMask region_mask(int attribute, const std::string& exemplar_id) const;

 private:
  void render(const Eigen::VectorXd& attributes, Image& image) const;
  void write_signature(const Eigen::VectorXd& attributes, Image& image) const;

  SyntheticConfig config_;
  BackendMeta meta_;
  Eigen::MatrixXd mixing_;
  Eigen::MatrixXd embedding_map_;  // E x (A + 1), orthonormal columns
  std::vector<Eigen::Array<bool, Eigen::Dynamic, Eigen::Dynamic>> regions_;
  std::uint64_t fingerprint_ = 0;
};

}  // namespace stylescout
