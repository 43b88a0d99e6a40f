#pragma once

#include <string>
#include <vector>

#include <Eigen/Dense>

#include "stylescout/image.hpp"
#include "stylescout/types.hpp"

namespace stylescout {

struct Exemplar {
  std::string id;
  StyleVector values;
};

struct BackendMeta {
  Eigen::Index dim = 0;            // D
  Layout layout;
  Eigen::Index embedding_dim = 0;  // E
  double lambda_max = kDefaultLambdaMax;
  std::vector<Exemplar> exemplars;

  const Exemplar& exemplar(const std::string& id) const;  // throws NotFound
  bool has_exemplar(const std::string& id) const;
  void validate() const;
};

/// The oracle every discovery algorithm talks to: render, embed, and score
/// parameter importance under a highlight. Implementations report failures
/// as BackendError.
class GeneratorBackend {
 public:
  virtual ~GeneratorBackend() = default;

  virtual const BackendMeta& meta() const = 0;
  virtual Image generate(const StyleVector& values) const = 0;
  /// Raw embedding; callers normalize.
  virtual Eigen::VectorXd embed(const Image& image) const = 0;
  /// Non-negative weight per style parameter for the masked region of
  /// `mask.exemplar_id`.
  virtual Eigen::VectorXd importance(const HighlightMask& mask) const = 0;

  /// True when generate/embed may be called from several threads at once.
  virtual bool concurrent() const { return false; }
};

}  // namespace stylescout
