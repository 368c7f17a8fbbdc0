// Copyright 2026 The hops-spectra Authors
//
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

#pragma once

#include <string>
#include <random>

#include "hops/model.hpp"

namespace hops::test {

// Message of the exception thrown by f, or "" when nothing is thrown.
template <class F>
std::string error_of(F&& f) {
  try {
    f();
  } catch (const std::exception& e) {
    return e.what();
  }
  return {};
}

inline bool contains(const std::string& s, const std::string& part) { return s.find(part) != std::string::npos; }

// Homodimer with eps = 0, V = 1 and d = (1, 1).
inline ExcitonModel homodimer(Real v = 1.0) {
  RMatrix c(2, 2);
  c << 0.0, v, v, 0.0;
  return ExcitonModel{RVector::Zero(2), c, RVector::Ones(2), 0.0};
}

inline CVector random_state(std::mt19937_64& rng, Eigen::Index n) {
  std::normal_distribution<Real> g;
  CVector v(n);
  for (auto& x : v) x = Complex(g(rng), g(rng));
  return v;
}

}  // namespace hops::test
