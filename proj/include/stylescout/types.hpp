#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

namespace stylescout {

/// A point in style-parameter space (one strength per generator filter).
using StyleVector = Eigen::VectorXd;

struct LayerSpec {
  int layer = 0;
  int channels = 0;
};

using Layout = std::vector<LayerSpec>;

/// Throws InvalidArgument unless every channel count is positive and they sum
/// to `dim`.
void validate_layout(const Layout& layout, Eigen::Index dim);

using DirectionId = std::uint64_t;
using NodeId = std::uint64_t;

enum class Provenance { sampled, resampled, scattered };

std::string_view to_string(Provenance p);
Provenance provenance_from_string(std::string_view s);

/// A sparse editing direction: `deltas[k]` applies to parameter `support[k]`.
struct Direction {
  DirectionId id = 0;
  std::vector<int> support;
  Eigen::VectorXd deltas;
  Provenance provenance = Provenance::sampled;
  std::vector<DirectionId> parent_ids;

  /// Checks the structural invariants against a parameter dimension.
  void validate(Eigen::Index dim) const;

  Eigen::VectorXd dense(Eigen::Index dim) const;

  /// Delta at parameter `index`, 0 when the index is outside the support.
  double at(int index) const;

  bool operator==(const Direction&) const = default;
};

inline constexpr int kMaskSize = 64;

/// Binary highlight painted over one exemplar, at kMaskSize x kMaskSize.
struct HighlightMask {
  std::string exemplar_id;
  Eigen::Array<bool, Eigen::Dynamic, Eigen::Dynamic> grid =
      Eigen::Array<bool, Eigen::Dynamic, Eigen::Dynamic>::Constant(kMaskSize, kMaskSize, false);

  void validate() const;

  /// Parses kMaskSize strings of kMaskSize '0'/'1' characters.
  static HighlightMask from_rows(std::string exemplar_id, const std::vector<std::string>& rows);
  std::vector<std::string> to_rows() const;

  /// Convenience: a mask with the half-open cell rectangle [r0, r1) x [c0, c1) set.
  static HighlightMask rect(std::string exemplar_id, int r0, int c0, int r1, int c1);
};

struct ParameterSubset {
  std::vector<int> indices;
  Eigen::VectorXd importance;

  static ParameterSubset full(Eigen::Index dim);
  bool is_full(Eigen::Index dim) const { return static_cast<Eigen::Index>(indices.size()) == dim; }
  void validate(Eigen::Index dim) const;
};

/// Unit-L2 copy of `v`. Throws BackendError on a zero or non-finite vector.
Eigen::VectorXd normalized_embedding(const Eigen::VectorXd& v);

struct Cluster {
  int id = 0;  // ordinal within its node, 0 = largest
  std::vector<DirectionId> member_ids;
  Eigen::VectorXd centroid;
  DirectionId representative_id = 0;

  bool operator==(const Cluster&) const = default;
};

inline constexpr double kDefaultStrength = 1.0;
inline constexpr double kDefaultLambdaMax = 10.0;

/// Strength lambda, clamped to [-lambda_max, lambda_max].
class Strength {
 public:
  explicit Strength(double lambda = kDefaultStrength, double lambda_max = kDefaultLambdaMax);
  double value() const { return lambda_; }

 private:
  double lambda_;
};

/// Base + lambda * d. Only support indices are written.
StyleVector compose(const StyleVector& base, const Direction& d, Strength strength);

}  // namespace stylescout
