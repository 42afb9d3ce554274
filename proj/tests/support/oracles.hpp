#ifndef SGLMM_TESTS_ORACLES_HPP
#define SGLMM_TESTS_ORACLES_HPP

#include <functional>

#include "sglmm/model_core.hpp"

namespace sglmm::oracle {

// central finite difference, step scaled to the point
double fd_central(const std::function<double(double)>& f, double x,
                  double h = 1e-6);
double fd_second(const std::function<double(double)>& f, double x,
                 double h = 1e-4);

// exact Student-t cdf via adaptive integration of the density (independent
// of the boost-based implementation path)
double t_cdf_by_quadrature(double nu, double z);

// marginal density m_xi(y) for n <= 2 by adaptive quadrature over
// (z, sigma2) with beta integrated analytically
double log_marginal_quadrature(const ModelSpec& model, const Dataset& data,
                               const XiPoint& xi);

// posterior mean and variance of z for an n = 1 model at fixed (beta, sigma2)
struct Moments {
  double mean, var;
};
Moments z_posterior_moments_1d(const ModelSpec& model, const Dataset& data,
                               const XiPoint& xi, double beta, double sigma2);

}  // namespace sglmm::oracle

#endif
