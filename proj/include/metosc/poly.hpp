#pragma once

#include <vector>

namespace metosc::poly {

// Coefficients are stored in ascending degree: c[0] + c[1] x + ... + c[k] x^k.
using Coeffs = std::vector<double>;

double eval(const Coeffs& c, double x);
Coeffs derivative(const Coeffs& c);

/// Cauchy bound: every real root lies in [-bound, bound].
double root_bound(const Coeffs& c);

/// Number of distinct real roots in (lo, hi] via a Sturm chain.
int sturm_count(const Coeffs& c, double lo, double hi);

/// Distinct real roots in (lo, hi], isolated by Sturm bisection and polished
/// by Newton. Ascending. Multiple roots are reported once.
std::vector<double> real_roots(const Coeffs& c, double lo, double hi);

}  // namespace metosc::poly
