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

#pragma once

#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace sopflow {

// Dense real-valued text embedding. Always non-empty and finite.
class EmbeddingVector {
 public:
  EmbeddingVector() = default;
  // Throws ValidationError on an empty or non-finite input.
  explicit EmbeddingVector(std::vector<double> values);

  std::size_t dim() const { return values_.size(); }
  std::span<const double> values() const { return values_; }
  double norm() const;

  friend bool operator==(const EmbeddingVector&, const EmbeddingVector&) = default;

 private:
  std::vector<double> values_;
};

// dot(a,b) / (|a||b|). Throws DimensionError / DegenerateVectorError.
double cosine_similarity(const EmbeddingVector& a, const EmbeddingVector& b);

// Anything that can turn text into an EmbeddingVector deterministically for
// a given backend state.
class Embedder {
 public:
  virtual ~Embedder() = default;
  virtual EmbeddingVector embed(std::string_view text) = 0;
  // Stable identifier; part of the embedding cache key.
  virtual std::string embedder_id() const = 0;
  virtual std::size_t dimension() const = 0;
};

}  // namespace sopflow
