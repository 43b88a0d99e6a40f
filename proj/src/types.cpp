#include "stylescout/types.hpp"

#include <algorithm>
#include <cmath>

#include "stylescout/error.hpp"

namespace stylescout {

void validate_layout(const Layout& layout, Eigen::Index dim) {
  Eigen::Index total = 0;
  for (const auto& spec : layout) {
    if (spec.channels <= 0) throw InvalidArgument("layout: channel counts must be positive");
    total += spec.channels;
  }
  if (total != dim) throw InvalidArgument("layout: channel counts do not sum to the parameter dimension");
}

std::string_view to_string(Provenance p) {
  switch (p) {
    case Provenance::sampled:
      return "sampled";
    case Provenance::resampled:
      return "resampled";
    case Provenance::scattered:
      return "scattered";
  }
  return "sampled";
}

Provenance provenance_from_string(std::string_view s) {
  if (s == "sampled") return Provenance::sampled;
  if (s == "resampled") return Provenance::resampled;
  if (s == "scattered") return Provenance::scattered;
  throw InvalidArgument("unknown provenance: " + std::string(s));
}

void Direction::validate(Eigen::Index dim) const {
  if (support.empty()) throw InvalidArgument("direction: empty support");
  if (static_cast<Eigen::Index>(support.size()) != deltas.size()) {
    throw InvalidArgument("direction: support and deltas differ in length");
  }
  for (std::size_t k = 0; k < support.size(); ++k) {
    if (support[k] < 0 || support[k] >= dim) throw InvalidArgument("direction: support index out of range");
    if (k > 0 && support[k] <= support[k - 1]) throw InvalidArgument("direction: support not strictly increasing");
  }
  if (!deltas.allFinite()) throw InvalidArgument("direction: non-finite delta");
  if (provenance == Provenance::scattered && parent_ids.size() != 2) {
    throw InvalidArgument("direction: scattered directions need exactly two parents");
  }
}

Eigen::VectorXd Direction::dense(Eigen::Index dim) const {
  Eigen::VectorXd out = Eigen::VectorXd::Zero(dim);
  for (std::size_t k = 0; k < support.size(); ++k) out[support[k]] = deltas[static_cast<Eigen::Index>(k)];
  return out;
}

double Direction::at(int index) const {
  const auto it = std::lower_bound(support.begin(), support.end(), index);
  if (it == support.end() || *it != index) return 0.0;
  return deltas[it - support.begin()];
}

void HighlightMask::validate() const {
  if (grid.rows() != kMaskSize || grid.cols() != kMaskSize) {
    throw InvalidArgument("highlight mask must be " + std::to_string(kMaskSize) + "x" + std::to_string(kMaskSize));
  }
  if (!grid.any()) throw InvalidArgument("highlight mask has no highlighted cell");
}

HighlightMask HighlightMask::from_rows(std::string exemplar_id, const std::vector<std::string>& rows) {
  HighlightMask mask;
  mask.exemplar_id = std::move(exemplar_id);
  if (rows.size() != kMaskSize) throw InvalidArgument("highlight mask: wrong row count");
  for (int r = 0; r < kMaskSize; ++r) {
    if (rows[r].size() != kMaskSize) throw InvalidArgument("highlight mask: wrong row length");
    for (int c = 0; c < kMaskSize; ++c) {
      const char ch = rows[r][c];
      if (ch != '0' && ch != '1') throw InvalidArgument("highlight mask: cells must be '0' or '1'");
      mask.grid(r, c) = ch == '1';
    }
  }
  return mask;
}

std::vector<std::string> HighlightMask::to_rows() const {
  std::vector<std::string> rows(static_cast<std::size_t>(grid.rows()));
  for (Eigen::Index r = 0; r < grid.rows(); ++r) {
    rows[r].resize(static_cast<std::size_t>(grid.cols()));
    for (Eigen::Index c = 0; c < grid.cols(); ++c) rows[r][c] = grid(r, c) ? '1' : '0';
  }
  return rows;
}

HighlightMask HighlightMask::rect(std::string exemplar_id, int r0, int c0, int r1, int c1) {
  HighlightMask mask;
  mask.exemplar_id = std::move(exemplar_id);
  r0 = std::clamp(r0, 0, kMaskSize);
  r1 = std::clamp(r1, 0, kMaskSize);
  c0 = std::clamp(c0, 0, kMaskSize);
  c1 = std::clamp(c1, 0, kMaskSize);
  if (r1 > r0 && c1 > c0) mask.grid.block(r0, c0, r1 - r0, c1 - c0).setConstant(true);
  return mask;
}

ParameterSubset ParameterSubset::full(Eigen::Index dim) {
  ParameterSubset s;
  s.indices.resize(static_cast<std::size_t>(dim));
  for (Eigen::Index i = 0; i < dim; ++i) s.indices[i] = static_cast<int>(i);
  s.importance = Eigen::VectorXd::Ones(dim);
  return s;
}

void ParameterSubset::validate(Eigen::Index dim) const {
  if (indices.empty()) throw InvalidArgument("parameter subset is empty");
  if (static_cast<Eigen::Index>(indices.size()) != importance.size()) {
    throw InvalidArgument("parameter subset: importance length mismatch");
  }
  for (std::size_t k = 0; k < indices.size(); ++k) {
    if (indices[k] < 0 || indices[k] >= dim) throw InvalidArgument("parameter subset: index out of range");
    if (k > 0 && indices[k] <= indices[k - 1]) throw InvalidArgument("parameter subset: indices not sorted");
  }
  if ((importance.array() <= 0.0).any()) throw InvalidArgument("parameter subset: importance must be positive");
}

Eigen::VectorXd normalized_embedding(const Eigen::VectorXd& v) {
  const double norm = v.norm();
  if (!std::isfinite(norm) || norm == 0.0) throw BackendError("backend returned a degenerate embedding");
  return v / norm;
}

Strength::Strength(double lambda, double lambda_max) {
  if (!std::isfinite(lambda)) throw InvalidArgument("strength must be finite");
  if (!(lambda_max > 0.0)) throw InvalidArgument("lambda_max must be positive");
  lambda_ = std::clamp(lambda, -lambda_max, lambda_max);
}

StyleVector compose(const StyleVector& base, const Direction& d, Strength strength) {
  d.validate(base.size());
  StyleVector v = base;
  const double lambda = strength.value();
  if (lambda == 0.0) return v;
  for (std::size_t k = 0; k < d.support.size(); ++k) {
    v[d.support[k]] = base[d.support[k]] + lambda * d.deltas[static_cast<Eigen::Index>(k)];
  }
  return v;
}

}  // namespace stylescout
