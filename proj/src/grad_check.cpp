#include "deepcross/grad_check.hpp"

#include <algorithm>
#include <cmath>

namespace deepcross {
namespace {

double evaluate(const ScalarFunction& f)
{
    Tape tape;
    const Var loss = f(tape);
    if (loss.size() != 1)
        throw std::logic_error("grad_check: function must return a single element");
    return loss.value()[0];
}

} // namespace

GradCheckReport grad_check(const ScalarFunction& f, std::span<Param* const> params, double step, double tol)
{
    zero_grads(params);
    {
        Tape tape;
        tape.backward(f(tape));
    }

    GradCheckReport report;
    for (Param* p : params) {
        if (!p->trainable)
            continue;
        for (std::size_t i = 0; i < p->value.size(); ++i) {
            const double original = p->value[i];
            p->value[i] = original + step;
            const double up = evaluate(f);
            p->value[i] = original - step;
            const double down = evaluate(f);
            p->value[i] = original;

            const double numeric = (up - down) / (2.0 * step);
            const double analytic = p->grad[i];
            const double denom = std::max({std::abs(analytic), std::abs(numeric), 1e-8});
            const double rel = std::abs(analytic - numeric) / denom;
            ++report.entries;
            report.max_abs_grad = std::max(report.max_abs_grad, std::abs(analytic));
            if (rel > report.max_rel_error || report.entries == 1) {
                report.max_rel_error = rel;
                report.worst_param = p->name;
                report.worst_index = i;
                report.worst_analytic = analytic;
                report.worst_numeric = numeric;
            }
        }
    }
    report.passed = report.max_rel_error <= tol;
    return report;
}

} // namespace deepcross
