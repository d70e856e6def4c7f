// Copyright 2026 The taskaug Authors
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

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

// Quick property suites run by `taskaug selftest`: tape gradients, renderer
// gradients, the end-to-end adversary gradient, QP optimality and envelope
// gradients, oracle labels and the Wilcoxon test.

namespace taskaug::selftest {

struct Check {
  std::string suite;
  std::string name;
  bool pass = false;
  double error = 0;
  double tolerance = 0;
  std::string detail;
};

struct Report {
  std::vector<Check> checks;
  double seconds = 0;
  bool pass() const;
  int failures() const;
};

Report run(std::uint64_t seed = 0, const std::function<void(const Check&)>& progress = {});

}  // namespace taskaug::selftest
