#include "metosc/poly.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace metosc::poly {
namespace {

Coeffs trimmed(Coeffs c) {
  double scale = 0.0;
  for (double v : c) scale = std::max(scale, std::abs(v));
  while (c.size() > 1 && std::abs(c.back()) <= 1e-14 * scale) c.pop_back();
  return c;
}

// Remainder of a / b.
Coeffs remainder(Coeffs a, const Coeffs& b) {
  const std::size_t nb = b.size();
  while (a.size() >= nb) {
    const double q = a.back() / b.back();
    const std::size_t shift = a.size() - nb;
    for (std::size_t i = 0; i < nb; ++i) a[shift + i] -= q * b[i];
    a.pop_back();
  }
  return a.empty() ? Coeffs{0.0} : trimmed(a);
}

std::vector<Coeffs> sturm_chain(const Coeffs& c) {
  std::vector<Coeffs> chain{trimmed(c)};
  chain.push_back(trimmed(derivative(chain[0])));
  double scale = 0.0;
  for (double v : chain[0]) scale = std::max(scale, std::abs(v));
  while (chain.back().size() > 1) {
    Coeffs r = remainder(chain[chain.size() - 2], chain.back());
    double rmax = 0.0;
    for (double v : r) rmax = std::max(rmax, std::abs(v));
    if (rmax <= 1e-13 * scale) break;
    for (double& v : r) v = -v;
    chain.push_back(std::move(r));
  }
  return chain;
}

int sign_changes(const std::vector<Coeffs>& chain, double x) {
  int changes = 0;
  int last = 0;
  for (const auto& p : chain) {
    const double v = eval(p, x);
    const int s = (v > 0) - (v < 0);
    if (s == 0) continue;
    if (last != 0 && s != last) ++changes;
    last = s;
  }
  return changes;
}

double polish(const Coeffs& c, const Coeffs& dc, double x, double lo, double hi) {
  for (int it = 0; it < 50; ++it) {
    const double d = eval(dc, x);
    if (d == 0.0) break;
    const double step = eval(c, x) / d;
    const double next = x - step;
    if (!(next > lo && next <= hi)) break;
    x = next;
    if (std::abs(step) <= 1e-16 * std::max(1.0, std::abs(x))) break;
  }
  return x;
}

}  // namespace

double eval(const Coeffs& c, double x) {
  double acc = 0.0;
  for (auto it = c.rbegin(); it != c.rend(); ++it) acc = acc * x + *it;
  return acc;
}

Coeffs derivative(const Coeffs& c) {
  if (c.size() <= 1) return {0.0};
  Coeffs d(c.size() - 1);
  for (std::size_t i = 1; i < c.size(); ++i) d[i - 1] = static_cast<double>(i) * c[i];
  return d;
}

double root_bound(const Coeffs& c) {
  const Coeffs t = trimmed(c);
  if (t.size() <= 1) return 0.0;
  double m = 0.0;
  for (std::size_t i = 0; i + 1 < t.size(); ++i) m = std::max(m, std::abs(t[i] / t.back()));
  return 1.0 + m;
}

int sturm_count(const Coeffs& c, double lo, double hi) {
  const auto chain = sturm_chain(c);
  return sign_changes(chain, lo) - sign_changes(chain, hi);
}

std::vector<double> real_roots(const Coeffs& c, double lo, double hi) {
  if (!(lo < hi)) throw std::invalid_argument("real_roots: empty interval");
  const Coeffs t = trimmed(c);
  if (t.size() <= 1) return {};
  const auto chain = sturm_chain(t);
  const Coeffs dc = derivative(t);

  std::vector<double> roots;
  struct Interval {
    double lo, hi;
    int vlo, vhi;
  };
  std::vector<Interval> stack{{lo, hi, sign_changes(chain, lo), sign_changes(chain, hi)}};
  while (!stack.empty()) {
    Interval iv = stack.back();
    stack.pop_back();
    const int n = iv.vlo - iv.vhi;
    if (n <= 0) continue;
    const double width = iv.hi - iv.lo;
    if (n == 1 || width <= 1e-14 * std::max(1.0, std::abs(iv.hi))) {
      // One root in (lo, hi]: bisect on sign when it brackets, then Newton.
      double a = iv.lo, b = iv.hi;
      double fa = eval(t, a), fb = eval(t, b);
      if (fb == 0.0) {
        roots.push_back(b);
        continue;
      }
      if (fa * fb < 0.0) {
        for (int it = 0; it < 200 && b - a > 1e-15 * std::max(1.0, std::abs(b)); ++it) {
          const double m = 0.5 * (a + b);
          const double fm = eval(t, m);
          if (fm == 0.0) {
            a = b = m;
            break;
          }
          if ((fm < 0) == (fa < 0)) {
            a = m;
            fa = fm;
          } else {
            b = m;
          }
        }
        roots.push_back(polish(t, dc, 0.5 * (a + b), iv.lo, iv.hi));
      } else {
        // Even-multiplicity root: locate the extremum of |p| by refining
        // until the Sturm count pins it to a tiny interval.
        for (int it = 0; it < 200 && b - a > 1e-14 * std::max(1.0, std::abs(b)); ++it) {
          const double m = 0.5 * (a + b);
          if (sign_changes(chain, a) - sign_changes(chain, m) > 0) {
            b = m;
          } else {
            a = m;
          }
        }
        roots.push_back(0.5 * (a + b));
      }
      continue;
    }
    const double mid = iv.lo + 0.5 * width;
    const int vmid = sign_changes(chain, mid);
    stack.push_back({mid, iv.hi, vmid, iv.vhi});
    stack.push_back({iv.lo, mid, iv.vlo, vmid});
  }
  std::sort(roots.begin(), roots.end());
  return roots;
}

}  // namespace metosc::poly
