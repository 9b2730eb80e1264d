#pragma once

#include <algorithm>
#include <cmath>
#include <span>
#include <string>
#include <vector>

#include "tcp/tape.hpp"

namespace tcp {

struct GradCheckReport {
  double max_rel_error = 0.0;
  std::string worst_parameter;
  Index worst_index = -1;
  double analytic = 0.0;
  double numeric = 0.0;
  std::size_t coordinates = 0;
};

// Compares reverse-mode gradients with central differences
//   (f(theta + h) - f(theta - h)) / 2h
// coordinate by coordinate, using |a - n| / max(1, |a|, |n|).
// `loss` is called with a fresh tape and must return a 1x1 value; it reads
// the parameters through tape.param(), so perturbations of p.value are seen.
template <typename F>
GradCheckReport grad_check(F&& loss, std::span<Parameter<double>* const> params, double h = 1e-5) {
  std::vector<Matrix<double>> analytic;
  {
    Tape<double> tape;
    Var<double> out = loss(tape);
    if (!std::isfinite(out.value()(0, 0))) throw NumericError("grad_check: non-finite loss");
    for (Parameter<double>* p : params) tape.param(*p);
    tape.backward(out);
    for (Parameter<double>* p : params) analytic.push_back(tape.grad(*p));
  }

  auto evaluate = [&]() {
    Tape<double> tape;
    double v = loss(tape).value()(0, 0);
    if (!std::isfinite(v)) throw NumericError("grad_check: non-finite loss");
    return v;
  };

  GradCheckReport report;
  for (std::size_t k = 0; k < params.size(); ++k) {
    Parameter<double>& p = *params[k];
    for (Index i = 0; i < p.value.size(); ++i) {
      const double saved = p.value(i);
      p.value(i) = saved + h;
      const double up = evaluate();
      p.value(i) = saved - h;
      const double down = evaluate();
      p.value(i) = saved;

      const double numeric = (up - down) / (2.0 * h);
      const double a = analytic[k](i);
      const double err =
          std::abs(a - numeric) / std::max({1.0, std::abs(a), std::abs(numeric)});
      ++report.coordinates;
      if (err > report.max_rel_error || report.worst_index < 0) {
        report.max_rel_error = std::max(report.max_rel_error, err);
        if (err >= report.max_rel_error) {
          report.worst_parameter = p.name;
          report.worst_index = i;
          report.analytic = a;
          report.numeric = numeric;
        }
      }
    }
  }
  return report;
}

template <typename F>
GradCheckReport grad_check(F&& loss, std::vector<Parameter<double>*> params, double h = 1e-5) {
  return grad_check(std::forward<F>(loss), std::span<Parameter<double>* const>(params), h);
}

}  // namespace tcp
