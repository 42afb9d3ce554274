#include "sglmm/links.hpp"

#include <boost/math/distributions/students_t.hpp>
#include <boost/math/special_functions/digamma.hpp>
#include <boost/math/special_functions/erf.hpp>
#include <boost/math/special_functions/trigamma.hpp>

#include "sglmm/numeric.hpp"

namespace sglmm {

namespace {

constexpr double sqrt_2pi = 2.5066282746310005024;
constexpr double inv_sqrt2 = 0.70710678118654752440;

double norm_pdf(double x) { return std::exp(-0.5 * x * x) / sqrt_2pi; }
double norm_cdf(double x) { return 0.5 * std::erfc(-x * inv_sqrt2); }
double norm_quantile(double w) {
  // complement-side evaluation keeps both tails accurate
  if (w < 0.5) return -std::sqrt(2.0) * boost::math::erfc_inv(2.0 * w);
  return std::sqrt(2.0) * boost::math::erfc_inv(2.0 * (1.0 - w));
}

bool robit_is_probit(double nu) { return !std::isfinite(nu) || nu > 1e10; }

// ---------------------------------------------------------------- exponent jets

// Mixed partials of a scalar expression in (z, nu) up to the orders needed
// by the score/Hessian formulas.
struct GJet {
  double v = 0, z = 0, zz = 0, zzz = 0;
  double n = 0, nn = 0, nz = 0, nzz = 0, nnz = 0;
};

GJet jet_neg(const GJet& g) {
  return {-g.v, -g.z, -g.zz, -g.zzz, -g.n, -g.nn, -g.nz, -g.nzz, -g.nnz};
}

GJet jet_exp(const GJet& g) {
  GJet y;
  y.v = std::exp(g.v);
  y.z = y.v * g.z;
  y.zz = y.v * (g.zz + g.z * g.z);
  y.zzz = y.v * (g.zzz + 3.0 * g.z * g.zz + g.z * g.z * g.z);
  y.n = y.v * g.n;
  y.nn = y.v * (g.nn + g.n * g.n);
  y.nz = y.v * (g.nz + g.n * g.z);
  y.nzz = y.v * (g.nzz + 2.0 * g.z * g.nz + g.n * g.zz + g.n * g.z * g.z);
  y.nnz = y.v * (g.nnz + 2.0 * g.n * g.nz + g.nn * g.z + g.n * g.n * g.z);
  return y;
}

ZJet jet_from(const GJet& y, bool boundary = false) {
  ZJet out;
  out.f = y.v;
  out.fz = y.z;
  out.fzz = y.zz;
  out.fzzz = y.zzz;
  out.fn = y.n;
  out.fnn = y.nn;
  out.fnz = y.nz;
  out.fnzz = y.nzz;
  out.fnnz = y.nnz;
  out.boundary = boundary;
  return out;
}

// Exponent of the Box-Cox inverse link, G = z*lam0(nu*z); inverse GEV
// exponent is its negative.
GJet boxcox_exponent(double z, double nu) {
  const double u = nu * z;
  const double op = 1.0 + u;
  GJet g;
  g.v = z * lam0(u);
  g.z = 1.0 / op;
  g.zz = -nu / (op * op);
  g.zzz = 2.0 * nu * nu / (op * op * op);
  g.n = z * z * lam1(u);
  g.nn = z * z * z * lam2(u);
  g.nz = -z / (op * op);
  g.nzz = (u - 1.0) / (op * op * op);
  g.nnz = 2.0 * z * z / (op * op * op);
  return g;
}

// Onto-R variant: G = z*lam0(nu*|z|), nu >= 0.
GJet modified_boxcox_exponent(double z, double nu) {
  const double s = (z < 0.0) ? -1.0 : 1.0;
  const double u = nu * std::abs(z);
  const double op = 1.0 + u;
  GJet g;
  g.v = z * lam0(u);
  g.z = 1.0 / op;
  g.zz = -nu * s / (op * op);
  g.zzz = 2.0 * nu * nu / (op * op * op);
  g.n = z * std::abs(z) * lam1(u);
  g.nn = z * z * z * lam2(u);
  g.nz = -std::abs(z) / (op * op);
  g.nzz = -s * (1.0 - u) / (op * op * op);
  g.nnz = 2.0 * z * z / (op * op * op);
  return g;
}

ZJet boxcox_zjet(double z, double nu) {
  if (1.0 + nu * z <= 0.0) {
    ZJet out;
    out.boundary = true;
    out.f = (nu > 0.0) ? 0.0 : pos_inf;
    return out;
  }
  return jet_from(jet_exp(boxcox_exponent(z, nu)));
}

ZJet modified_boxcox_zjet(double z, double nu) {
  return jet_from(jet_exp(modified_boxcox_exponent(z, nu)));
}

ZJet log_link_zjet(double z) {
  const double e = std::exp(z);
  ZJet out;
  out.f = out.fz = out.fzz = out.fzzz = e;
  return out;
}

ZJet gev_zjet(double z, double nu) {
  if (nu != 0.0 && 1.0 + nu * z <= 0.0) {
    ZJet out;
    out.boundary = true;
    out.f = (nu > 0.0) ? 0.0 : 1.0;
    return out;
  }
  return jet_from(jet_exp(jet_neg(jet_exp(jet_neg(boxcox_exponent(z, nu))))));
}

ZJet modified_gev_zjet(double z, double nu) {
  return jet_from(jet_exp(jet_neg(jet_exp(jet_neg(modified_boxcox_exponent(z, nu))))));
}

ZJet neg_modified_gev_zjet(double z, double nu) {
  ZJet r = modified_gev_zjet(-z, nu);
  ZJet out;
  out.f = 1.0 - r.f;
  out.fz = r.fz;
  out.fzz = -r.fzz;
  out.fzzz = r.fzzz;
  out.fn = -r.fn;
  out.fnn = -r.fnn;
  out.fnz = r.fnz;
  out.fnzz = -r.fnzz;
  out.fnnz = r.fnnz;
  return out;
}

ZJet logit_zjet(double z) {
  double sig, one_m;
  if (z >= 0.0) {
    const double e = std::exp(-z);
    sig = 1.0 / (1.0 + e);
    one_m = e / (1.0 + e);
  } else {
    const double e = std::exp(z);
    sig = e / (1.0 + e);
    one_m = 1.0 / (1.0 + e);
  }
  ZJet out;
  out.f = sig;
  out.fz = sig * one_m;
  out.fzz = out.fz * (1.0 - 2.0 * sig);
  out.fzzz = out.fz * ((1.0 - 2.0 * sig) * (1.0 - 2.0 * sig) - 2.0 * out.fz);
  return out;
}

ZJet probit_zjet(double z) {
  const double p = norm_pdf(z);
  ZJet out;
  out.f = norm_cdf(z);
  out.fz = p;
  out.fzz = -z * p;
  out.fzzz = (z * z - 1.0) * p;
  return out;
}

// ------------------------------------------------------------- Wallace family

struct ZetaJet {
  double v = 0, z = 0, zz = 0, zzz = 0;
  double n = 0, nn = 0, nz = 0, nzz = 0, nnz = 0;
};

// zeta(z,nu) = c(nu) sign(z) sqrt(nu log(1+z^2/nu)), c = (8nu+1)/(8nu+3)
ZetaJet wallace_zeta(double z, double nu) {
  const double c = (8.0 * nu + 1.0) / (8.0 * nu + 3.0);
  const double cd = 16.0 / ((8.0 * nu + 3.0) * (8.0 * nu + 3.0));
  const double cdd = -256.0 / std::pow(8.0 * nu + 3.0, 3);
  const double s = (z < 0.0) ? -1.0 : 1.0;
  const double zp = std::abs(z);
  const double x = zp * zp / nu;
  ZetaJet j;
  if (x < 1e-4) {
    // series of S(x) = sqrt(log(1+x)/x); cancellation-free near zero
    const double S = 1.0 - x / 4.0 + 13.0 * x * x / 96.0 - 35.0 * x * x * x / 384.0 +
                     6271.0 * x * x * x * x / 92160.0;
    const double S1 = -0.25 + 13.0 * x / 48.0 - 35.0 * x * x / 128.0 +
                      6271.0 * x * x * x / 23040.0;
    const double S2 = 13.0 / 48.0 - 35.0 * x / 64.0 + 6271.0 * x * x / 7680.0;
    const double S3 = -35.0 / 64.0 + 6271.0 * x / 3840.0;
    j.v = c * zp * S;
    j.z = c * (S + 2.0 * x * S1);
    j.zz = (2.0 * c * zp / nu) * (3.0 * S1 + 2.0 * x * S2);
    j.zzz = c * (2.0 / nu) * (3.0 * S1 + 2.0 * x * S2) +
            c * (4.0 * x / nu) * (5.0 * S2 + 2.0 * x * S3);
    j.n = zp * (cd * S - c * x * S1 / nu);
    j.nn = zp * (cdd * S - 2.0 * cd * x * S1 / nu +
                 c * (2.0 * x * S1 + x * x * S2) / (nu * nu));
    j.nz = cd * (S + 2.0 * x * S1) - (c / nu) * (3.0 * x * S1 + 2.0 * x * x * S2);
    j.nnz = cdd * (S + 2.0 * x * S1) -
            (2.0 * cd / nu) * (3.0 * x * S1 + 2.0 * x * x * S2) +
            (c / (nu * nu)) *
                (6.0 * x * S1 + 9.0 * x * x * S2 + 2.0 * x * x * x * S3);
    j.nzz = (2.0 * zp / nu) * (cd - c / nu) * (3.0 * S1 + 2.0 * x * S2) -
            (2.0 * c * zp * x / (nu * nu)) * (5.0 * S2 + 2.0 * x * S3);
  } else {
    const double d = nu + zp * zp;
    const double P = nu * std::log1p(x);
    const double Pz = 2.0 * nu * zp / d;
    const double Pzz = 2.0 * nu * (nu - zp * zp) / (d * d);
    const double Pzzz = -4.0 * nu * zp * (3.0 * nu - zp * zp) / (d * d * d);
    const double Pn = std::log1p(x) - zp * zp / d;
    const double Pnz = 2.0 * std::pow(zp, 3) / (d * d);
    const double Pnn = -std::pow(zp, 4) / (nu * d * d);
    const double Pnnz = -4.0 * std::pow(zp, 3) / (d * d * d);
    const double Pnzz = 2.0 * zp * zp * (3.0 * nu - zp * zp) / (d * d * d);
    const double Q = std::sqrt(P);
    const double P32 = P * Q, P52 = P * P * Q;
    const double Qz = Pz / (2.0 * Q);
    const double Qzz = Pzz / (2.0 * Q) - Pz * Pz / (4.0 * P32);
    const double Qzzz = Pzzz / (2.0 * Q) - 3.0 * Pz * Pzz / (4.0 * P32) +
                        3.0 * std::pow(Pz, 3) / (8.0 * P52);
    const double Qn = Pn / (2.0 * Q);
    const double Qnz = Pnz / (2.0 * Q) - Pz * Pn / (4.0 * P32);
    const double Qnn = Pnn / (2.0 * Q) - Pn * Pn / (4.0 * P32);
    const double Qnnz = Pnnz / (2.0 * Q) - Pnn * Pz / (4.0 * P32) -
                        Pn * Pnz / (2.0 * P32) + 3.0 * Pn * Pn * Pz / (8.0 * P52);
    const double Qnzz = Pnzz / (2.0 * Q) - Pnz * Pz / (4.0 * P32) -
                        (Pzz * Pn + Pz * Pnz) / (4.0 * P32) +
                        3.0 * Pz * Pz * Pn / (8.0 * P52);
    j.v = c * Q;
    j.z = c * Qz;
    j.zz = c * Qzz;
    j.zzz = c * Qzzz;
    j.n = cd * Q + c * Qn;
    j.nz = cd * Qz + c * Qnz;
    j.nn = cdd * Q + 2.0 * cd * Qn + c * Qnn;
    j.nnz = cdd * Qz + 2.0 * cd * Qnz + c * Qnnz;
    j.nzz = cd * Qzz + c * Qnzz;
  }
  if (s < 0.0) {  // odd function of z
    j.v = -j.v;
    j.zz = -j.zz;
    j.n = -j.n;
    j.nn = -j.nn;
    j.nzz = -j.nzz;
  }
  return j;
}

ZJet wallace_zjet(double z, double nu) {
  if (robit_is_probit(nu)) return probit_zjet(z);
  const ZetaJet t = wallace_zeta(z, nu);
  const double p = norm_pdf(t.v);
  ZJet out;
  out.f = norm_cdf(t.v);
  out.fz = p * t.z;
  out.fzz = p * (t.zz - t.v * t.z * t.z);
  out.fzzz = p * (t.zzz - 3.0 * t.v * t.z * t.zz - std::pow(t.z, 3) +
                  t.v * t.v * std::pow(t.z, 3));
  out.fn = p * t.n;
  out.fnn = p * (t.nn - t.v * t.n * t.n);
  out.fnz = p * (t.nz - t.v * t.n * t.z);
  out.fnzz = p * (-t.v * t.z * (t.nz - t.v * t.n * t.z) + t.nzz -
                  t.n * t.z * t.z - t.v * t.nz * t.z - t.v * t.n * t.zz);
  out.fnnz = p * (-t.v * t.n * (t.nz - t.v * t.n * t.z) + t.nnz -
                  t.n * t.n * t.z - t.v * t.nn * t.z - t.v * t.n * t.nz);
  return out;
}

// --------------------------------------------------------------- robit family

struct RobitLogPdfDerivs {
  double ldot;   // d log t_nu / d nu
  double lddot;  // d2 log t_nu / d nu2
};

RobitLogPdfDerivs robit_logpdf_nu(double x, double nu) {
  const double d = nu + x * x;
  const double D = 0.5 * boost::math::digamma(0.5 * (nu + 1.0)) -
                   0.5 * boost::math::digamma(0.5 * nu) - 0.5 / nu;
  const double T = -0.5 * std::log1p(x * x / nu) +
                   (nu + 1.0) * x * x / (2.0 * nu * d);
  const double Dp = 0.25 * boost::math::trigamma(0.5 * (nu + 1.0)) -
                    0.25 * boost::math::trigamma(0.5 * nu) + 0.5 / (nu * nu);
  const double Tp = x * x / (2.0 * nu * d) +
                    0.5 * x * x * (-nu * nu - 2.0 * nu - x * x) / (nu * d * nu * d);
  return {D + T, Dp + Tp};
}

ZJet robit_zjet(double z, double nu) {
  if (robit_is_probit(nu)) return probit_zjet(z);
  boost::math::students_t_distribution<double> dist(nu);
  const double pdf = boost::math::pdf(dist, z);
  const double m = -(nu + 1.0) * z / (nu + z * z);
  const double mp = -(nu + 1.0) * (nu - z * z) / std::pow(nu + z * z, 2);
  const auto [ld, ldd] = robit_logpdf_nu(z, nu);
  const double ldz = -z / (nu + z * z) + (nu + 1.0) * z / std::pow(nu + z * z, 2);
  ZJet out;
  out.f = boost::math::cdf(dist, z);
  out.fz = pdf;
  out.fzz = pdf * m;
  out.fzzz = pdf * (m * m + mp);
  out.fnz = pdf * ld;
  out.fnzz = pdf * (m * ld + ldz);
  out.fnnz = pdf * (ld * ld + ldd);
  // dG/dnu(0) = 0 by symmetry, so integrate the pdf nu-derivatives on [0,|z|]
  const double za = std::abs(z);
  const double sg = (z < 0.0) ? -1.0 : 1.0;
  if (za > 0.0) {
    out.fn = sg * adaptive_simpson(
                      [&](double x) {
                        return boost::math::pdf(dist, x) * robit_logpdf_nu(x, nu).ldot;
                      },
                      0.0, za, 1e-13);
    out.fnn = sg * adaptive_simpson(
                       [&](double x) {
                         const auto d2 = robit_logpdf_nu(x, nu);
                         return boost::math::pdf(dist, x) *
                                (d2.ldot * d2.ldot + d2.lddot);
                       },
                       0.0, za, 1e-13);
  }
  return out;
}

// ----------------------------------------------------------- link (h) jets

// Shared core for h(mu) = t psi0(nu*T) with T = |t| (onto-R variants) or
// T = t (raw Box-Cox / GEV); t is the inner log-scale coordinate and t_w its
// derivative with respect to mu.
WJet psi_form_wjet(double t, double t_w, double nu, bool absolute) {
  const double T = absolute ? std::abs(t) : t;
  const double u = nu * T;
  const double eu = std::exp(u);
  WJet out;
  out.g = t * psi0(u);
  out.gw = eu * t_w;
  out.gn = t * T * psi1(u);
  out.gnn = t * t * t * psi2(u);
  out.gnw = T * eu * t_w;
  out.gnnw = t * t * eu * t_w;
  return out;
}

WJet wallace_wjet(double w, double nu) {
  const double q = norm_quantile(w);
  if (robit_is_probit(nu)) {
    WJet out;
    out.g = q;
    out.gw = sqrt_2pi * std::exp(0.5 * q * q);
    return out;
  }
  const double c = (8.0 * nu + 1.0) / (8.0 * nu + 3.0);
  const double cd = 16.0 / ((8.0 * nu + 3.0) * (8.0 * nu + 3.0));
  const double cdd = -256.0 / std::pow(8.0 * nu + 3.0, 3);
  const double sq = (q < 0.0) ? -1.0 : 1.0;
  const double qa = std::abs(q);
  const double y = qa * qa / (c * c * nu);
  const double mm = -(2.0 * cd / c + 1.0 / nu);
  const double mp = -2.0 * (cdd * c - cd * cd) / (c * c) + 1.0 / (nu * nu);
  double zv, zq, zn, znn, znq, znnq;
  if (y < 1e-4) {
    const double T = 1.0 + y / 4.0 + 5.0 * y * y / 96.0 + y * y * y / 128.0 +
                     79.0 * y * y * y * y / 92160.0;
    const double T1 = 0.25 + 5.0 * y / 48.0 + 3.0 * y * y / 128.0 +
                      79.0 * y * y * y / 23040.0;
    const double T2 = 5.0 / 48.0 + 3.0 * y / 64.0 + 79.0 * y * y / 7680.0;
    const double T3 = 3.0 / 64.0 + 79.0 * y / 3840.0;
    zv = (qa / c) * T;
    zq = (1.0 / c) * (T + 2.0 * y * T1);
    zn = (qa / c) * (y * mm * T1 - (cd / c) * T);
    znn = (qa / c) * (T * (2.0 * cd * cd / (c * c) - cdd / c) -
                      2.0 * (cd / c) * y * mm * T1 + y * y * mm * mm * T2 +
                      (y * mm * mm + y * mp) * T1);
    znq = (1.0 / c) * (-(cd / c) * (T + 2.0 * y * T1) +
                       mm * (3.0 * y * T1 + 2.0 * y * y * T2));
    znnq = -(cd / c) * znq +
           (1.0 / c) *
               (-((cdd * c - cd * cd) / (c * c)) * (T + 2.0 * y * T1) -
                (cd / c) * (T1 * y * mm + 2.0 * (y * mm * T1 + y * y * mm * T2)) +
                mp * (3.0 * y * T1 + 2.0 * y * y * T2) +
                mm * (3.0 * y * mm * T1 + 7.0 * y * y * mm * T2 +
                      2.0 * y * y * y * mm * T3));
  } else {
    const double A = y;
    const double eA = std::exp(A);
    const double B = std::expm1(A);
    const double An = A * mm;
    const double Ann = An * mm + A * mp;
    const double Aq = 2.0 * A / qa;
    const double Anq = 2.0 * An / qa;
    const double Annq = 2.0 * Ann / qa;
    const double Bn = eA * An;
    const double Bq = eA * Aq;
    const double Bnn = eA * (An * An + Ann);
    const double Bnq = eA * (An * Aq + Anq);
    const double Bnnq = eA * (Aq * (An * An + Ann) + 2.0 * An * Anq + Annq);
    zv = std::sqrt(nu * B);
    zq = nu * Bq / (2.0 * zv);
    zn = (B + nu * Bn) / (2.0 * zv);
    znn = (2.0 * Bn + nu * Bnn - 2.0 * zn * zn) / (2.0 * zv);
    znq = (Bq + nu * Bnq - 2.0 * zq * zn) / (2.0 * zv);
    znnq = (2.0 * Bnq + nu * Bnnq - 4.0 * zn * znq - 2.0 * zq * znn) / (2.0 * zv);
  }
  const double dqdw = sqrt_2pi * std::exp(0.5 * q * q);
  WJet out;
  out.g = sq * zv;
  out.gw = zq * dqdw;
  out.gn = sq * zn;
  out.gnn = sq * znn;
  out.gnw = znq * dqdw;
  out.gnnw = znnq * dqdw;
  return out;
}

WJet robit_wjet(double w, double nu) {
  if (robit_is_probit(nu)) {
    const double q = norm_quantile(w);
    WJet out;
    out.g = q;
    out.gw = sqrt_2pi * std::exp(0.5 * q * q);
    return out;
  }
  boost::math::students_t_distribution<double> dist(nu);
  const double z = (w < 0.5) ? boost::math::quantile(dist, w)
                             : -boost::math::quantile(dist, 1.0 - w);
  const ZJet j = robit_zjet(z, nu);
  const double a1 = j.fz, a2 = j.fzz, a3 = j.fzzz;
  const double b0 = j.fn, b1 = j.fnz, b2 = j.fnzz;
  const double c0 = j.fnn, c1 = j.fnnz;
  WJet out;
  out.g = z;
  out.gw = 1.0 / a1;
  out.gn = -b0 / a1;
  const double udot = b1 + a2 * out.gn;
  out.gnw = -udot / (a1 * a1);
  out.gnn = -((c0 + b1 * out.gn) * a1 - b0 * udot) / (a1 * a1);
  const double uddot = c1 + 2.0 * b2 * out.gn + a3 * out.gn * out.gn + a2 * out.gnn;
  out.gnnw = -uddot / (a1 * a1) + 2.0 * udot * udot / (a1 * a1 * a1);
  return out;
}

// t = -log(-log(mu)) for the GEV-type link direction
WJet gev_type_wjet(double mu, double nu, bool absolute) {
  const double E = -std::log(mu);
  const double t = -std::log(E);
  const double t_w = 1.0 / (mu * E);
  return psi_form_wjet(t, t_w, nu, absolute);
}

}  // namespace

// ------------------------------------------------------------------ metadata

LinkFamily link_family_from_string(const std::string& s) {
  if (s == "logit") return LinkFamily::logit;
  if (s == "probit") return LinkFamily::probit;
  if (s == "robit") return LinkFamily::robit;
  if (s == "wallace_robit") return LinkFamily::wallace_robit;
  if (s == "gev") return LinkFamily::gev;
  if (s == "modified_gev") return LinkFamily::modified_gev;
  if (s == "neg_modified_gev") return LinkFamily::neg_modified_gev;
  if (s == "boxcox") return LinkFamily::boxcox;
  if (s == "modified_boxcox") return LinkFamily::modified_boxcox;
  if (s == "log") return LinkFamily::log_link;
  throw ConfigError("unknown link family: " + s);
}

std::string to_string(LinkFamily f) {
  switch (f) {
    case LinkFamily::logit: return "logit";
    case LinkFamily::probit: return "probit";
    case LinkFamily::robit: return "robit";
    case LinkFamily::wallace_robit: return "wallace_robit";
    case LinkFamily::gev: return "gev";
    case LinkFamily::modified_gev: return "modified_gev";
    case LinkFamily::neg_modified_gev: return "neg_modified_gev";
    case LinkFamily::boxcox: return "boxcox";
    case LinkFamily::modified_boxcox: return "modified_boxcox";
    case LinkFamily::log_link: return "log";
  }
  return "?";
}

bool link_has_nu(LinkFamily f) {
  switch (f) {
    case LinkFamily::logit:
    case LinkFamily::probit:
    case LinkFamily::log_link:
      return false;
    default:
      return true;
  }
}

bool maps_onto_reals(LinkFamily f) {
  switch (f) {
    case LinkFamily::gev:
    case LinkFamily::boxcox:
      return false;
    default:
      return true;
  }
}

bool is_cdf_link(LinkFamily f) {
  switch (f) {
    case LinkFamily::boxcox:
    case LinkFamily::modified_boxcox:
    case LinkFamily::log_link:
      return false;
    default:
      return true;
  }
}

void LinkSpec::validate() const {
  if (!link_has_nu(family)) return;
  switch (family) {
    case LinkFamily::robit:
    case LinkFamily::wallace_robit:
      if (!(nu > 0.0)) throw DomainError("robit-type link requires nu > 0");
      break;
    case LinkFamily::modified_gev:
    case LinkFamily::neg_modified_gev:
    case LinkFamily::modified_boxcox:
      if (!(nu >= 0.0)) throw DomainError(to_string(family) + " requires nu >= 0");
      break;
    default:
      if (!std::isfinite(nu)) throw DomainError(to_string(family) + " requires finite nu");
  }
}

// ---------------------------------------------------------------- public API

ZJet inv_link_jet(const LinkSpec& link, double z) {
  link.validate();
  switch (link.family) {
    case LinkFamily::logit: return logit_zjet(z);
    case LinkFamily::probit: return probit_zjet(z);
    case LinkFamily::robit: return robit_zjet(z, link.nu);
    case LinkFamily::wallace_robit: return wallace_zjet(z, link.nu);
    case LinkFamily::gev: return gev_zjet(z, link.nu);
    case LinkFamily::modified_gev: return modified_gev_zjet(z, link.nu);
    case LinkFamily::neg_modified_gev: return neg_modified_gev_zjet(z, link.nu);
    case LinkFamily::boxcox: return boxcox_zjet(z, link.nu);
    case LinkFamily::modified_boxcox: return modified_boxcox_zjet(z, link.nu);
    case LinkFamily::log_link: return log_link_zjet(z);
  }
  throw NumericError("unreachable link family");
}

WJet link_jet(const LinkSpec& link, double mu) {
  link.validate();
  if (is_cdf_link(link.family)) {
    if (!(mu > 0.0 && mu < 1.0))
      throw DomainError("mean outside (0,1) for " + to_string(link.family));
  } else {
    if (!(mu > 0.0) || !std::isfinite(mu))
      throw DomainError("mean outside (0,inf) for " + to_string(link.family));
  }
  switch (link.family) {
    case LinkFamily::logit: {
      WJet out;
      out.g = std::log(mu) - std::log1p(-mu);
      out.gw = 1.0 / (mu * (1.0 - mu));
      return out;
    }
    case LinkFamily::probit: {
      WJet out;
      out.g = norm_quantile(mu);
      out.gw = sqrt_2pi * std::exp(0.5 * out.g * out.g);
      return out;
    }
    case LinkFamily::robit: return robit_wjet(mu, link.nu);
    case LinkFamily::wallace_robit: return wallace_wjet(mu, link.nu);
    case LinkFamily::gev: return gev_type_wjet(mu, link.nu, false);
    case LinkFamily::modified_gev: return gev_type_wjet(mu, link.nu, true);
    case LinkFamily::neg_modified_gev: {
      WJet r = gev_type_wjet(1.0 - mu, link.nu, true);
      WJet out;
      out.g = -r.g;
      out.gw = r.gw;
      out.gn = -r.gn;
      out.gnn = -r.gnn;
      out.gnw = r.gnw;
      out.gnnw = r.gnnw;
      return out;
    }
    case LinkFamily::boxcox:
      return psi_form_wjet(std::log(mu), 1.0 / mu, link.nu, false);
    case LinkFamily::modified_boxcox:
      return psi_form_wjet(std::log(mu), 1.0 / mu, link.nu, true);
    case LinkFamily::log_link: {
      WJet out;
      out.g = std::log(mu);
      out.gw = 1.0 / mu;
      return out;
    }
  }
  throw NumericError("unreachable link family");
}

double inv_link_eval(const LinkSpec& link, double z) {
  ZJet j = inv_link_jet(link, z);
  if (j.boundary)
    throw DomainError("z outside the invertible domain of " + to_string(link.family));
  return j.f;
}

double link_eval(const LinkSpec& link, double mu) { return link_jet(link, mu).g; }

double link_grad(const LinkSpec& link, double point, GradKind kind) {
  if (kind == GradKind::dg_dw) return link_jet(link, point).gw;
  if (!link_has_nu(link.family))
    throw DomainError("unsupported derivative: " + to_string(link.family) +
                      " has no nu parameter");
  switch (kind) {
    case GradKind::df_dnu: {
      ZJet j = inv_link_jet(link, point);
      if (j.boundary) throw DomainError("derivative at non-invertible point");
      return j.fn;
    }
    case GradKind::dg_dnu: return link_jet(link, point).gn;
    case GradKind::d2g_dnu2: return link_jet(link, point).gnn;
    default: break;
  }
  throw NumericError("unreachable grad kind");
}

// -------------------------------------------------------------------- plans

bool TransformPlan::all_identity() const {
  for (auto t : per_site)
    if (t != SiteTransform::identity) return false;
  return true;
}

bool TransformPlan::uses_aux() const {
  for (auto t : per_site)
    if (t == SiteTransform::auxiliary) return true;
  return false;
}

std::string to_string(PlanKind k) {
  switch (k) {
    case PlanKind::identity: return "identity";
    case PlanKind::mu_reparam: return "mu";
    case PlanKind::general_reparam: return "general";
  }
  return "?";
}

PlanKind plan_kind_from_string(const std::string& s) {
  if (s == "identity" || s == "none") return PlanKind::identity;
  if (s == "mu" || s == "link") return PlanKind::mu_reparam;
  if (s == "general" || s == "wallace" || s == "aux") return PlanKind::general_reparam;
  throw ConfigError("unknown transform plan: " + s);
}

TransformPlan make_plan(LinkFamily model_link, PlanKind kind,
                        const std::vector<double>& y) {
  TransformPlan plan;
  const std::size_t n = y.size();
  auto fill = [&](SiteTransform t) {
    plan.per_site.assign(std::max<std::size_t>(n, 1), t);
  };
  switch (kind) {
    case PlanKind::identity:
      fill(SiteTransform::identity);
      return plan;
    case PlanKind::mu_reparam:
      if (!maps_onto_reals(model_link))
        throw ConfigError("mu reparameterization needs an onto-R link; " +
                          to_string(model_link) + " is not");
      fill(SiteTransform::inverse_link);
      return plan;
    case PlanKind::general_reparam:
      break;
  }
  switch (model_link) {
    case LinkFamily::robit:
      plan.aux_family = LinkFamily::wallace_robit;
      fill(SiteTransform::auxiliary);
      break;
    case LinkFamily::gev:
      plan.aux_family = LinkFamily::modified_gev;
      fill(SiteTransform::auxiliary);
      break;
    case LinkFamily::boxcox:
      // raw transform where y_i > 0, onto-R transform where y_i = 0
      plan.aux_family = LinkFamily::modified_boxcox;
      plan.per_site.resize(std::max<std::size_t>(n, 1));
      for (std::size_t i = 0; i < plan.per_site.size(); ++i)
        plan.per_site[i] = (i < n && y[i] == 0.0) ? SiteTransform::auxiliary
                                                  : SiteTransform::inverse_link;
      break;
    case LinkFamily::modified_boxcox:
      plan.aux_family = LinkFamily::boxcox;
      plan.per_site.resize(std::max<std::size_t>(n, 1));
      for (std::size_t i = 0; i < plan.per_site.size(); ++i)
        plan.per_site[i] = (i < n && y[i] == 0.0) ? SiteTransform::inverse_link
                                                  : SiteTransform::auxiliary;
      break;
    case LinkFamily::probit:
      plan.aux_family = LinkFamily::logit;
      fill(SiteTransform::auxiliary);
      break;
    case LinkFamily::logit:
      plan.aux_family = LinkFamily::probit;
      fill(SiteTransform::auxiliary);
      break;
    default:
      // remaining onto-R families: the mean transform is already the fast one
      fill(SiteTransform::inverse_link);
      break;
  }
  return plan;
}

LinkSpec site_transform_spec(const TransformPlan& plan, const LinkSpec& model_link,
                             int site) {
  SiteTransform t = plan.per_site.empty()
                        ? SiteTransform::identity
                        : plan.per_site[static_cast<std::size_t>(site) %
                                        plan.per_site.size()];
  if (t == SiteTransform::auxiliary) return {plan.aux_family, model_link.nu};
  return model_link;
}

Vec forward_transform(const TransformPlan& plan, const LinkSpec& model_link,
                      const Vec& z) {
  Vec w(z.size());
  for (Eigen::Index i = 0; i < z.size(); ++i) {
    SiteTransform t = plan.per_site.empty() ? SiteTransform::identity
                                            : plan.per_site[i % plan.per_site.size()];
    if (t == SiteTransform::identity) {
      w[i] = z[i];
    } else {
      LinkSpec spec = site_transform_spec(plan, model_link, static_cast<int>(i));
      ZJet j = inv_link_jet(spec, z[i]);
      if (j.boundary)
        throw DomainError("site " + std::to_string(i) +
                          ": z outside the transform domain");
      w[i] = j.f;
    }
  }
  return w;
}

Vec back_transform(const TransformPlan& plan, const LinkSpec& model_link,
                   const Vec& w) {
  Vec z(w.size());
  for (Eigen::Index i = 0; i < w.size(); ++i) {
    SiteTransform t = plan.per_site.empty() ? SiteTransform::identity
                                            : plan.per_site[i % plan.per_site.size()];
    if (t == SiteTransform::identity) {
      z[i] = w[i];
    } else {
      LinkSpec spec = site_transform_spec(plan, model_link, static_cast<int>(i));
      z[i] = link_jet(spec, w[i]).g;
    }
  }
  return z;
}

double log_jacobian(const LinkSpec& model_link, const TransformPlan& plan,
                    const Vec& w) {
  double acc = 0.0;
  for (Eigen::Index i = 0; i < w.size(); ++i) {
    SiteTransform t = plan.per_site.empty() ? SiteTransform::identity
                                            : plan.per_site[i % plan.per_site.size()];
    if (t == SiteTransform::identity) continue;
    LinkSpec spec = site_transform_spec(plan, model_link, static_cast<int>(i));
    double gp = link_jet(spec, w[i]).gw;
    if (!(gp > 0.0) || !std::isfinite(gp))
      throw DomainError("monotonicity violation: g' <= 0 at site " + std::to_string(i));
    acc += std::log(gp);
  }
  return acc;
}

}  // namespace sglmm
