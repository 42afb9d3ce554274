#ifndef SGLMM_NUMERIC_HPP
#define SGLMM_NUMERIC_HPP

#include <array>
#include <cmath>
#include <functional>
#include <vector>

#include "sglmm/common.hpp"

namespace sglmm {

// Stable ratio helpers for Box-Cox style expressions. psi_k(u) is the k-th
// nu-derivative kernel of expm1(nu*t)/nu evaluated at u = nu*t:
//   psi0 = expm1(u)/u, psi1 = psi0', psi2 = psi1', psi3 = psi2'.
// Closed forms cancel catastrophically near u = 0, so small |u| switches to
// the Taylor series.
namespace detail {
template <int K>
double psi_series(double u) {
  // c_j for psi0 is 1/(j+1)!; each derivative shifts c_j <- (j+1) c_{j+1}.
  double c[20];
  double fact = 1.0;
  for (int j = 0; j < 20; ++j) {
    fact *= (j + 1);
    c[j] = 1.0 / fact;  // 1/(j+1)!
  }
  for (int k = 0; k < K; ++k)
    for (int j = 0; j < 19; ++j) c[j] = (j + 1) * c[j + 1];
  double s = 0.0, up = 1.0;
  for (int j = 0; j < 14; ++j) {
    s += c[j] * up;
    up *= u;
  }
  return s;
}
}  // namespace detail

inline double psi0(double u) {
  if (std::abs(u) < 0.25) return detail::psi_series<0>(u);
  return std::expm1(u) / u;
}
inline double psi1(double u) {
  if (std::abs(u) < 0.25) return detail::psi_series<1>(u);
  double e = std::exp(u);
  return (u * e - std::expm1(u)) / (u * u);
}
inline double psi2(double u) {
  if (std::abs(u) < 0.25) return detail::psi_series<2>(u);
  double e = std::exp(u);
  return (u * u * e - 2.0 * u * e + 2.0 * std::expm1(u)) / (u * u * u);
}
inline double psi3(double u) {
  if (std::abs(u) < 0.25) return detail::psi_series<3>(u);
  double e = std::exp(u);
  return (u * u * u * e - 3.0 * u * u * e + 6.0 * u * e - 6.0 * std::expm1(u)) /
         (u * u * u * u);
}

// lam_k(u): k-th derivative of log1p(u)/u. Same small-|u| series treatment.
inline double lam0(double u) {
  if (std::abs(u) < 0.25) {
    double s = 0.0, up = 1.0;
    for (int j = 0; j < 24; ++j) {
      s += ((j % 2 == 0) ? 1.0 : -1.0) / (j + 1.0) * up;
      up *= u;
    }
    return s;
  }
  return std::log1p(u) / u;
}
inline double lam1(double u) {
  if (std::abs(u) < 0.25) {
    double s = 0.0, up = 1.0;
    for (int j = 1; j < 24; ++j) {
      s += ((j % 2 == 0) ? 1.0 : -1.0) * j / (j + 1.0) * up;
      up *= u;
    }
    return s;
  }
  return (u / (1.0 + u) - std::log1p(u)) / (u * u);
}
inline double lam2(double u) {
  if (std::abs(u) < 0.25) {
    double s = 0.0, up = 1.0;
    for (int j = 2; j < 26; ++j) {
      s += ((j % 2 == 0) ? 1.0 : -1.0) * j * (j - 1.0) / (j + 1.0) * up;
      up *= u;
    }
    return s;
  }
  double op = 1.0 + u;
  return (-u * u / (op * op) - 2.0 * u / op + 2.0 * std::log1p(u)) / (u * u * u);
}

// Adaptive Simpson on [a,b].
namespace detail {
inline double simpson_rec(const std::function<double(double)>& f, double a,
                          double b, double fa, double fm, double fb,
                          double whole, double tol, int depth) {
  double m = 0.5 * (a + b);
  double lm = 0.5 * (a + m), rm = 0.5 * (m + b);
  double flm = f(lm), frm = f(rm);
  double left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
  double right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
  double delta = left + right - whole;
  if (depth <= 0 || std::abs(delta) <= 15.0 * tol)
    return left + right + delta / 15.0;
  return simpson_rec(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1) +
         simpson_rec(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1);
}
}  // namespace detail

inline double adaptive_simpson(const std::function<double(double)>& f, double a,
                               double b, double tol = 1e-12, int max_depth = 40) {
  if (a == b) return 0.0;
  double fa = f(a), fb = f(b), fm = f(0.5 * (a + b));
  double whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
  return detail::simpson_rec(f, a, b, fa, fm, fb, whole, tol, max_depth);
}

// Golden-section maximization on [a,b].
inline double golden_section_max(const std::function<double(double)>& f,
                                 double a, double b, double tol = 1e-8,
                                 int max_iter = 200) {
  const double gr = 0.5 * (std::sqrt(5.0) - 1.0);
  double c = b - gr * (b - a);
  double d = a + gr * (b - a);
  double fc = f(c), fd = f(d);
  for (int i = 0; i < max_iter && (b - a) > tol * (1.0 + std::abs(a) + std::abs(b)); ++i) {
    if (fc > fd) {
      b = d;
      d = c;
      fd = fc;
      c = b - gr * (b - a);
      fc = f(c);
    } else {
      a = c;
      c = d;
      fc = fd;
      d = a + gr * (b - a);
      fd = f(d);
    }
  }
  return 0.5 * (a + b);
}

// Nelder-Mead maximization with box constraints (clamped evaluation).
struct NelderMeadResult {
  Vec x;
  double f = neg_inf;
  int evals = 0;
};

inline NelderMeadResult nelder_mead_max(
    const std::function<double(const Vec&)>& f, const Vec& x0, const Vec& step,
    const Vec& lo, const Vec& hi, int max_evals = 400, double ftol = 1e-9) {
  const int n = static_cast<int>(x0.size());
  auto clamp = [&](Vec x) {
    for (int i = 0; i < n; ++i) x[i] = std::min(hi[i], std::max(lo[i], x[i]));
    return x;
  };
  int evals = 0;
  auto eval = [&](const Vec& x) {
    ++evals;
    return f(clamp(x));
  };
  std::vector<Vec> simplex(n + 1);
  std::vector<double> fv(n + 1);
  simplex[0] = clamp(x0);
  fv[0] = eval(simplex[0]);
  for (int i = 0; i < n; ++i) {
    Vec x = simplex[0];
    x[i] += step[i];
    simplex[i + 1] = clamp(x);
    fv[i + 1] = eval(simplex[i + 1]);
  }
  auto order = [&]() {
    for (int i = 0; i <= n; ++i)
      for (int j = i + 1; j <= n; ++j)
        if (fv[j] > fv[i]) {
          std::swap(fv[i], fv[j]);
          std::swap(simplex[i], simplex[j]);
        }
  };
  order();
  while (evals < max_evals) {
    if (std::abs(fv[0] - fv[n]) <= ftol * (std::abs(fv[0]) + std::abs(fv[n]) + 1e-300))
      break;
    Vec centroid = Vec::Zero(n);
    for (int i = 0; i < n; ++i) centroid += simplex[i];
    centroid /= n;
    Vec xr = centroid + (centroid - simplex[n]);
    double fr = eval(xr);
    if (fr > fv[0]) {
      Vec xe = centroid + 2.0 * (centroid - simplex[n]);
      double fe = eval(xe);
      if (fe > fr) {
        simplex[n] = clamp(xe);
        fv[n] = fe;
      } else {
        simplex[n] = clamp(xr);
        fv[n] = fr;
      }
    } else if (fr > fv[n - 1]) {
      simplex[n] = clamp(xr);
      fv[n] = fr;
    } else {
      Vec xc = centroid + 0.5 * (simplex[n] - centroid);
      double fc = eval(xc);
      if (fc > fv[n]) {
        simplex[n] = clamp(xc);
        fv[n] = fc;
      } else {
        for (int i = 1; i <= n; ++i) {
          simplex[i] = clamp(simplex[0] + 0.5 * (simplex[i] - simplex[0]));
          fv[i] = eval(simplex[i]);
        }
      }
    }
    order();
  }
  return {simplex[0], fv[0], evals};
}

}  // namespace sglmm

#endif
