#include "superdec/gradcheck.hpp"

#include <algorithm>
#include <cmath>

namespace superdec {

template <typename T>
double grad_check(const std::function<Tensor<T>(const Tensor<T>&)>& fn,
                  const Tensor<T>& x, double step) {
    if (step <= 0) throw ValueError("grad_check: step must be positive");

    Tensor<T> probe = x.detach();
    probe.set_requires_grad(true);
    Tensor<T> loss = fn(probe);
    if (loss.numel() != 1)
        throw ShapeError("grad_check: fn must return a scalar, got " + loss.shape().str());
    if (!std::isfinite(static_cast<double>(loss.item())))
        throw ValueError("grad_check: fn returned a non-finite value");
    backward(loss);
    std::vector<T> analytic(probe.grad().begin(), probe.grad().end());

    Tensor<T> work = x.detach();
    auto vals = work.values_mut();
    double worst = 0.0;
    for (std::size_t i = 0; i < vals.size(); ++i) {
        const T orig = vals[i];
        vals[i] = orig + static_cast<T>(step);
        const double fp = static_cast<double>(fn(work).item());
        vals[i] = orig - static_cast<T>(step);
        const double fm = static_cast<double>(fn(work).item());
        vals[i] = orig;
        if (!std::isfinite(fp) || !std::isfinite(fm))
            throw ValueError("grad_check: fn returned a non-finite value during perturbation");
        const double numeric = (fp - fm) / (2.0 * step);
        const double a = static_cast<double>(analytic[i]);
        const double denom = std::max({std::abs(a), std::abs(numeric), 1e-8});
        worst = std::max(worst, std::abs(a - numeric) / denom);
    }
    return worst;
}

template double grad_check<float>(const std::function<Tensor<float>(const Tensor<float>&)>&,
                                  const Tensor<float>&, double);
template double grad_check<double>(const std::function<Tensor<double>(const Tensor<double>&)>&,
                                   const Tensor<double>&, double);

} // namespace superdec
