#pragma once

#include <functional>

#include "superdec/tensor.hpp"

namespace superdec {

// Compares the analytic gradient of a scalar-valued function against central
// finite differences, coordinate by coordinate. Returns the worst relative
// error, with denominator max(|analytic|, |numeric|, 1e-8). fn must be
// deterministic; non-finite fn output is an error.
template <typename T>
double grad_check(const std::function<Tensor<T>(const Tensor<T>&)>& fn,
                  const Tensor<T>& x, double step);

} // namespace superdec
