#pragma once

#include <functional>

#include "videogoal/params.hpp"

namespace videogoal::nn {

// Scalar function of a parameter store. When grads_out is non-null the callee
// must fill it with analytic gradients (typically via Tape::export_grads).
using GradCheckFn =
    std::function<double(ParamStore<double>&, std::map<std::string, Tensor<double>>*)>;

// Central-difference check: (f(x+eps) - f(x-eps)) / (2 eps) per coordinate against
// the analytic gradient. Returns the max relative error with denominator
// max(|analytic|, |numeric|, 1e-8). 64-bit only; finite differences are
// meaningless at float precision.
inline double grad_check(const GradCheckFn& f, ParamStore<double>& point, double eps) {
    std::map<std::string, Tensor<double>> analytic;
    double f0 = f(point, &analytic);
    if (!std::isfinite(f0)) throw EvalError("grad_check: non-finite function value");
    double max_rel = 0.0;
    for (auto& [name, p] : point.params) {
        auto it = analytic.find(name);
        for (size_t i = 0; i < p.v.size(); ++i) {
            double orig = p.v[i];
            p.v[i] = orig + eps;
            double fp = f(point, nullptr);
            p.v[i] = orig - eps;
            double fm = f(point, nullptr);
            p.v[i] = orig;
            if (!std::isfinite(fp) || !std::isfinite(fm))
                throw EvalError("grad_check: non-finite function value at " + name);
            double numeric = (fp - fm) / (2.0 * eps);
            double anal = it == analytic.end() ? 0.0 : it->second.v[i];
            double denom = std::max({std::abs(anal), std::abs(numeric), 1e-8});
            max_rel = std::max(max_rel, std::abs(anal - numeric) / denom);
        }
    }
    return max_rel;
}

}  // namespace videogoal::nn
