// Copyright 2026 The vapnev Authors. All Rights Reserved.
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

#ifndef VAPNEV_VERIFY_HPP_
#define VAPNEV_VERIFY_HPP_

#include <cstdint>
#include <string>
#include <vector>

namespace vapnev {

struct CheckResult {
  std::string name;
  bool passed = false;
  double value = 0;      // measured worst case
  double threshold = 0;  // pass iff value < threshold (or within it, see detail)
  std::string detail;
};

struct VerifyOptions {
  bool quick = false;
  std::uint64_t seed = 0;
  // Test hook: adds a constant to every stack log-determinant before it is
  // compared, so the log-det check must fail.
  bool break_logdet = false;
};

// Double-precision self-checks of the implementation against numerical
// references: "invertibility", "logdet-oracle", "gradient", "normalization"
// and "kl-closed-form".
CheckResult check_invertibility(const VerifyOptions& options);
CheckResult check_logdet(const VerifyOptions& options);
CheckResult check_gradient(const VerifyOptions& options);
CheckResult check_normalization(const VerifyOptions& options);
CheckResult check_kl(const VerifyOptions& options);
std::vector<CheckResult> run_verification(const VerifyOptions& options);

}  // namespace vapnev

#endif  // VAPNEV_VERIFY_HPP_
