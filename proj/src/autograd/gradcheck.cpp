#include "wsr/gradcheck.hpp"

#include <cmath>
#include <vector>

#include "wsr/error.hpp"

namespace wsr::ag {

GradCheckResult finite_diff_check(const ScalarFn& f, const Tensor<double>& x, double h) {
  if (!(h >= 1e-7 && h <= 1e-3))
    throw InvalidArgument("finite_diff_check: step must lie in [1e-7, 1e-3]");

  Tensor<double> probe = x.detach();
  probe.set_requires_grad(true);
  Tape<double> tape;
  Tensor<double> y = f(&tape, probe);
  if (y.numel() != 1)
    throw ShapeError("finite_diff_check: function must return a scalar, got " +
                     shape_str(y.shape()));

  std::vector<double> analytic(probe.numel(), 0.0);
  if (tape.contains(y)) {
    tape.backward(y);
    auto g = probe.grad();
    analytic.assign(g.begin(), g.end());
  }

  GradCheckResult result;
  Tensor<double> work = x.detach();
  auto w = work.data();
  for (std::size_t i = 0; i < w.size(); ++i) {
    const double orig = w[i];
    w[i] = orig + h;
    const double fp = f(nullptr, work).item();
    w[i] = orig - h;
    const double fm = f(nullptr, work).item();
    w[i] = orig;
    const double numeric = (fp - fm) / (2.0 * h);
    const double err = std::abs(analytic[i] - numeric) / (std::abs(analytic[i]) + 1e-8);
    if (i == 0 || err > result.max_rel_error) result = {err, i, analytic[i], numeric};
  }
  return result;
}

}  // namespace wsr::ag
