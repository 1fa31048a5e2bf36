#include "kggen/gradcheck.hpp"

#include <cmath>

#include "kggen/errors.hpp"

namespace kggen {

GradCheckReport check_gradients(const std::function<Tensor(const std::vector<Tensor>&)>& fn,
                                const std::vector<Tensor>& inputs, double tolerance,
                                double step) {
    Tensor out = fn(inputs);
    if (out.size() != 1) {
        throw UsageError("check_gradients: function must be scalar-valued, got shape " +
                         shape_str(out.shape()));
    }
    for (const Tensor& t : inputs) {
        if (t.requires_grad()) const_cast<Tensor&>(t).zero_grad();
    }
    out.backward();

    std::vector<std::vector<double>> analytic;
    analytic.reserve(inputs.size());
    for (const Tensor& t : inputs)
        analytic.push_back(t.requires_grad() ? t.grad() : std::vector<double>(t.size(), 0.0));

    GradCheckReport report;
    report.tolerance = tolerance;
    for (std::size_t ti = 0; ti < inputs.size(); ++ti) {
        if (!inputs[ti].requires_grad()) continue;
        auto& vals = const_cast<Tensor&>(inputs[ti]).values();
        for (std::size_t i = 0; i < vals.size(); ++i) {
            const double saved = vals[i];
            vals[i] = saved + step;
            const double up = fn(inputs).item();
            vals[i] = saved - step;
            const double down = fn(inputs).item();
            vals[i] = saved;
            const double numeric = (up - down) / (2.0 * step);
            const double a = analytic[ti][i];
            const double denom = std::max({1.0, std::fabs(a), std::fabs(numeric)});
            const double rel = std::fabs(a - numeric) / denom;
            report.max_rel_error = std::max(report.max_rel_error, rel);
            ++report.n_checked;
        }
    }
    return report;
}

}  // namespace kggen
