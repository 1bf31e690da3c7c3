#pragma once

#include <complex>
#include <cstdint>
#include <vector>

#include "heracles/tensor.hpp"

// Linear state-space layers x' = A x + B u, y = C x + D u, their discretization,
// and the two equivalent execution paths: the recurrent scan and the
// convolution with the materialized kernel K = (CB, CAB, ..., CA^{L-1}B).
//
// Dense systems are discretized with the bilinear rule
//   Abar = (I - dt/2 A)^{-1} (I + dt/2 A),  Bbar = (I - dt/2 A)^{-1} dt B,  Cbar = C,
// diagonal systems with the zero-order hold
//   Lbar = exp(dt L),  Bbar = (Lbar - 1) / L * B.
// The two agree to O(dt^2) as dt -> 0.
namespace heracles::ssm {

using cplx = std::complex<double>;

/// Dense real continuous system. `a` is row-major N x N.
struct ContinuousSsm {
    std::int64_t n = 0;
    std::vector<double> a;
    std::vector<double> b;
    std::vector<double> c;
    double d = 0.0;
};

/// Diagonal (possibly complex) continuous system; outputs take the real part.
struct DiagonalSsm {
    std::vector<cplx> lambda;
    std::vector<cplx> b;
    std::vector<cplx> c;
    double d = 0.0;
};

struct DiscreteSsm {
    std::int64_t n = 0;
    std::vector<double> a_bar;
    std::vector<double> b_bar;
    std::vector<double> c_bar;
    double dt = 0.0;
};

struct DiscreteDiagonalSsm {
    std::vector<cplx> lambda_bar;
    std::vector<cplx> b_bar;
    std::vector<cplx> c_bar;
    double dt = 0.0;
};

DiscreteSsm discretize_bilinear(const ContinuousSsm& ssm, double dt);
DiscreteDiagonalSsm discretize_zoh_diagonal(const DiagonalSsm& ssm, double dt);

/// K[l] = Cbar Abar^l Bbar by repeated state propagation.
Tensor kernel_unroll(const DiscreteSsm& ssm, std::int64_t length);
Tensor kernel_unroll(const DiscreteDiagonalSsm& ssm, std::int64_t length);

/// Causal linear convolution y[k] = sum_{j<=k} K[j] u[k-j] through a
/// zero-padded FFT of length >= 2L - 1.
Tensor long_conv_fft(const Tensor& kernel, const Tensor& u);

/// Recurrence x_k = Abar x_{k-1} + Bbar u_k, y_k = Cbar x_k + D u_k, x_{-1} = 0.
Tensor ssm_scan(const DiscreteSsm& ssm, double d, const Tensor& u);
Tensor ssm_scan(const DiscreteDiagonalSsm& ssm, double d, const Tensor& u);

double spectral_radius(const DiscreteDiagonalSsm& ssm);

/// Stable diagonal parameterization: Re(lambda) = -exp(log_neg_re) < 0.
cplx stable_lambda(double log_neg_re, double im);
/// Positive timestep from an unconstrained parameter.
double softplus(double x);

}  // namespace heracles::ssm
