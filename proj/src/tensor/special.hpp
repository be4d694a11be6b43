#pragma once

namespace ehrgen {

// Digamma for x > 0: upward recurrence to x >= 6, then the asymptotic series.
double digamma(double x);

// Shape-rate Gamma log density: a log b - lgamma(a) + (a-1) log t - b t.
// Throws ValidationError unless a, b, t are all positive.
double gamma_log_pdf(double alpha, double beta, double t);

}  // namespace ehrgen
