// Copyright 2026 The sopflow Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "sopflow/embedding.h"

#include <algorithm>
#include <cmath>

#include <fmt/format.h>

#include "sopflow/errors.h"

namespace sopflow {

EmbeddingVector::EmbeddingVector(std::vector<double> values) : values_(std::move(values)) {
  if (values_.empty()) throw ValidationError("embedding vector must have dim > 0");
  if (!std::all_of(values_.begin(), values_.end(), [](double v) { return std::isfinite(v); })) {
    throw ValidationError("embedding vector contains non-finite values");
  }
}

double EmbeddingVector::norm() const {
  double sum = 0.0;
  for (double v : values_) sum += v * v;
  return std::sqrt(sum);
}

double cosine_similarity(const EmbeddingVector& a, const EmbeddingVector& b) {
  if (a.dim() != b.dim()) {
    throw DimensionError(fmt::format("dimension mismatch: {} vs {}", a.dim(), b.dim()));
  }
  double dot = 0.0, na = 0.0, nb = 0.0;
  auto av = a.values();
  auto bv = b.values();
  for (std::size_t i = 0; i < av.size(); ++i) {
    dot += av[i] * bv[i];
    na += av[i] * av[i];
    nb += bv[i] * bv[i];
  }
  if (na == 0.0 || nb == 0.0) throw DegenerateVectorError("cosine similarity of a zero vector");
  double score = dot / (std::sqrt(na) * std::sqrt(nb));
  return std::clamp(score, -1.0, 1.0);
}

}  // namespace sopflow
