#pragma once

#include "deepcross/autodiff.hpp"

#include <functional>
#include <string>

namespace deepcross {

struct GradCheckReport {
    double max_rel_error = 0.0;
    double max_abs_grad = 0.0;
    std::size_t entries = 0;
    std::string worst_param;
    std::size_t worst_index = 0;
    double worst_analytic = 0.0;
    double worst_numeric = 0.0;
    bool passed = true;
};

using ScalarFunction = std::function<Var(Tape&)>;

/**
 * Compares tape gradients against central finite differences for every entry
 * of every trainable parameter. Relative error uses the denominator
 * max(|analytic|, |numeric|, 1e-8). Parameter values are restored on return.
 */
GradCheckReport grad_check(const ScalarFunction& f, std::span<Param* const> params, double step = 1e-4,
                           double tol = 1e-3);

} // namespace deepcross
