#include "stylescout/backend.hpp"

#include <algorithm>

#include "stylescout/error.hpp"

namespace stylescout {

const Exemplar& BackendMeta::exemplar(const std::string& id) const {
  const auto it = std::find_if(exemplars.begin(), exemplars.end(), [&](const Exemplar& e) { return e.id == id; });
  if (it == exemplars.end()) throw NotFound("unknown exemplar: " + id);
  return *it;
}

bool BackendMeta::has_exemplar(const std::string& id) const {
  return std::any_of(exemplars.begin(), exemplars.end(), [&](const Exemplar& e) { return e.id == id; });
}

void BackendMeta::validate() const {
  if (dim <= 0) throw BackendError("meta: parameter dimension must be positive");
  if (embedding_dim <= 0) throw BackendError("meta: embedding dimension must be positive");
  if (!(lambda_max > 0.0)) throw BackendError("meta: lambda_max must be positive");
  try {
    validate_layout(layout, dim);
  } catch (const InvalidArgument& e) {
    throw BackendError(std::string("meta: ") + e.what());
  }
  if (exemplars.empty()) throw BackendError("meta: backend offers no exemplars");
  for (const auto& e : exemplars) {
    if (e.values.size() != dim) throw BackendError("meta: exemplar " + e.id + " has the wrong dimension");
  }
}

}  // namespace stylescout
