#pragma once

// Named finite-difference checks over tiny double-precision configurations
// of every differentiable block, used by `mmfuse grad-check`.

#include "mmfuse/grad_check.hpp"

#include <string>
#include <vector>

namespace mmfuse {

const std::vector<std::string>& grad_check_modules();

// Throws ConfigError for an unknown module name.
GradCheckReport run_module_grad_check(const std::string& module, const GradCheckOptions& opts = {});

}  // namespace mmfuse
