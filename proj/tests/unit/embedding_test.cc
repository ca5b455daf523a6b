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


#include <cmath>
#include <limits>

#include <gtest/gtest.h>

#include "sopflow/embedding.h"
#include "sopflow/errors.h"

namespace sopflow {
namespace {

EmbeddingVector v(std::vector<double> x) { return EmbeddingVector(std::move(x)); }

TEST(Cosine, IdenticalVectors) { EXPECT_DOUBLE_EQ(cosine_similarity(v({1, 0}), v({1, 0})), 1.0); }

TEST(Cosine, OrthogonalVectors) { EXPECT_DOUBLE_EQ(cosine_similarity(v({1, 0}), v({0, 1})), 0.0); }

TEST(Cosine, FortyFiveDegrees) {
  // 1 / (1 * sqrt(2))
  EXPECT_NEAR(cosine_similarity(v({1, 0}), v({1, 1})), 0.70710678, 1e-8);
}

TEST(Cosine, ScaleInvariantAndSymmetric) {
  auto a = v({0.3, -2.0, 5.5});
  auto b = v({1.0, 4.0, -0.5});
  auto a10 = v({3.0, -20.0, 55.0});
  EXPECT_NEAR(cosine_similarity(a, b), cosine_similarity(b, a), 1e-15);
  EXPECT_NEAR(cosine_similarity(a, b), cosine_similarity(a10, b), 1e-12);
}

TEST(Cosine, DimensionMismatchThrows) {
  EXPECT_THROW(cosine_similarity(v({1, 0}), v({1, 0, 0})), DimensionError);
}

TEST(Cosine, ZeroVectorThrows) { EXPECT_THROW(cosine_similarity(v({0, 0}), v({1, 0})), DegenerateVectorError); }

TEST(EmbeddingVector, RejectsEmptyAndNonFinite) {
  EXPECT_THROW(v({}), ValidationError);
  EXPECT_THROW(v({1.0, std::numeric_limits<double>::quiet_NaN()}), ValidationError);
  EXPECT_THROW(v({std::numeric_limits<double>::infinity()}), ValidationError);
}

TEST(EmbeddingVector, Norm) { EXPECT_DOUBLE_EQ(v({3, 4}).norm(), 5.0); }

}  // namespace
}  // namespace sopflow
