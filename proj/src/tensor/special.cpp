#include "tensor/special.hpp"

#include <cmath>
#include <string>

#include "common/errors.hpp"

namespace ehrgen {

double digamma(double x) {
  if (!(x > 0.0)) throw ValidationError("digamma requires x > 0");
  double result = 0.0;
  while (x < 10.0) {
    result -= 1.0 / x;
    x += 1.0;
  }
  const double inv = 1.0 / x;
  const double inv2 = inv * inv;
  // Bernoulli-number coefficients of the asymptotic expansion.
  result += std::log(x) - 0.5 * inv -
            inv2 * (1.0 / 12 - inv2 * (1.0 / 120 - inv2 * (1.0 / 252 - inv2 * (1.0 / 240 - inv2 * (1.0 / 132)))));
  return result;
}

double gamma_log_pdf(double alpha, double beta, double t) {
  if (!(alpha > 0.0) || !(beta > 0.0)) throw ValidationError("Gamma parameters must be positive");
  if (!(t > 0.0)) throw ValidationError("Gamma density evaluated at non-positive t=" + std::to_string(t));
  return alpha * std::log(beta) - std::lgamma(alpha) + (alpha - 1.0) * std::log(t) - beta * t;
}

}  // namespace ehrgen
