// Copyright 2026 the pdro authors
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef PDRO_REQUIREMENT_HPP
#define PDRO_REQUIREMENT_HPP

#include <string>

#include "pdro/conic/builder.hpp"
#include "pdro/geometry.hpp"

namespace pdro {

/// Deferred membership requirement "expr is copositive on cone": the matrix
/// expression, affine in the decision variables and symmetric by
/// construction, must satisfy xi' expr xi >= 0 for every xi in the cone.
/// Discharged into semidefinite-representable blocks by the reformulation
/// layer (inner approximation) rather than checked exactly.
struct CopositiveRequirement {
  SymExpr expr;
  const SupportCone* cone = nullptr;
  std::string tag;  // diagnostic label, e.g. "k=2 l=5"
};

}  // namespace pdro

#endif  // PDRO_REQUIREMENT_HPP
