// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "easwin/config.hpp"

namespace easwin {

struct GradcheckVariant {
  std::string name;
  HeadConfig head;
  double max_rel_err = 0;
  std::string worst_param;  // "name[flat index]"
  Index checked = 0;        // scalar parameters compared
};

struct GradcheckReport {
  std::vector<GradcheckVariant> variants;
  double max_rel_err = 0;
  double tolerance = 0;
  double seconds = 0;
  bool passed() const { return max_rel_err < tolerance; }
};

/// |a - n| / max(|a|, |n|, 1e-6).
double relative_error(double analytic, double numeric);

/// Compares backprop gradients of the mean BCE loss against central finite
/// differences for every scalar parameter of a 64-bit head. Parameters get
/// a random nudge first so zero-initialized tables and the pooling query are
/// exercised away from zero. The nudge is small on purpose: the roundoff of a
/// central difference grows with the loss value, and near-zero gradients
/// are compared against a 1e-6 floor.
GradcheckVariant gradcheck_head(const HeadConfig& head, const GradcheckConfig& cfg,
                                const std::string& name);

/// Both pooling modes, with and without shift. Shifted blocks are the odd
/// ones, so the shift variants add a second block per axis when the
/// configured depth is 1; otherwise they would never run a shifted layer.
GradcheckReport run_gradcheck(const GradcheckConfig& cfg);

/// "PASS max_rel_err=..." or "FAIL ...", one line.
std::string summary_line(const GradcheckReport& r);
nlohmann::json to_json(const GradcheckReport& r);

struct BenchRow {
  Index frames = 0;
  std::uint64_t factorized_macs = 0, factorized_core_macs = 0;
  std::uint64_t joint_macs = 0, joint_core_macs = 0;
  double factorized_ms = 0, joint_ms = 0;
};

/// One temporal windowed layer on (S, T, D) against one joint layer on
/// (1, T*S, D), for each frame count. MACs are counted by matmul; "core" is
/// the QK^T and PV products only.
std::vector<BenchRow> run_bench(const BenchConfig& cfg);
nlohmann::json to_json(const std::vector<BenchRow>& rows);

}  // namespace easwin
