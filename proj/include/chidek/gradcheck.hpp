#pragma once

#include "chidek/numerics.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace chidek {

struct AuditOptions {
  std::uint64_t seed = 1;
  double tol = 1e-4;
  double step = 1e-5;
  // Test hook: name of a block whose analytic gradient is deliberately
  // corrupted before comparison, to prove the audit can fail.
  std::string sabotage;
};

struct AuditBlock {
  std::string name;
  std::size_t parameters = 0;  // length of the checked vector
  GradCheckReport report;
  std::string worst_tensor;  // tensor holding report.worst_index
};

/// kernel, layer_norm, gkpt, attention, predictor, l_reg, encoder, full_loss.
const std::vector<std::string>& audit_block_names();

/// Checks every hand-written reverse pass on the tiny configuration against
/// central finite differences of a random linear functional of its outputs.
std::vector<AuditBlock> run_gradient_audit(const AuditOptions& opts = {});

}  // namespace chidek
