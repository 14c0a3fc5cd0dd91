#include "streamtts/numerics/grad_check.hpp"

#include <cmath>
#include <string>

#include "streamtts/error.hpp"

namespace streamtts::num {

namespace {

double evaluate(const ScalarFn& f, const Tensor& x) {
  Tape tape;
  const double v = f(tape, tape.constant(x)).value().item();
  if (!std::isfinite(v)) throw EvaluationError("grad_check: f(x) is not finite");
  return v;
}

}  // namespace

GradCheckReport grad_check_report(const ScalarFn& f, const Tensor& x, double h) {
  if (!(h > 0.0 && h <= 1e-3)) {
    throw Error("grad_check: step must lie in (0, 1e-3], got " + std::to_string(h));
  }
  GradCheckReport report;
  {
    Tape tape;
    Var xv = tape.variable(x);
    Var y = f(tape, xv);
    if (!std::isfinite(y.value().item())) {
      throw EvaluationError("grad_check: f(x) is not finite");
    }
    tape.backward(y);
    report.analytic = tape.grad(xv);
  }
  report.numeric = Tensor(x.shape());
  Tensor probe = x;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double orig = probe[i];
    probe[i] = orig + h;
    const double up = evaluate(f, probe);
    probe[i] = orig - h;
    const double down = evaluate(f, probe);
    probe[i] = orig;
    report.numeric[i] = (up - down) / (2.0 * h);
    const double err = std::fabs(report.analytic[i] - report.numeric[i]) /
                       (std::fabs(report.numeric[i]) + 1e-8);
    if (err > report.max_rel_error) {
      report.max_rel_error = err;
      report.worst_index = i;
    }
  }
  return report;
}

}  // namespace streamtts::num
