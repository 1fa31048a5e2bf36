#pragma once

#include <functional>
#include <vector>

#include "kggen/tensor.hpp"

namespace kggen {

struct GradCheckReport {
    double max_rel_error = 0.0;
    std::size_t n_checked = 0;
    double tolerance = 0.0;
    bool passed() const { return max_rel_error <= tolerance; }
};

// Compares reverse-mode gradients of a scalar-valued function against central
// finite differences (step 1e-5). Relative error is |a - n| / max(1, |a|, |n|)
// so tiny components are judged on an absolute scale. Inputs are perturbed in
// place and restored.
GradCheckReport check_gradients(const std::function<Tensor(const std::vector<Tensor>&)>& fn,
                                const std::vector<Tensor>& inputs, double tolerance,
                                double step = 1e-5);

}  // namespace kggen
