#include "heracles/ssm.hpp"

#include <cmath>

#include "heracles/spectral.hpp"

namespace heracles::ssm {

namespace {

/// Inverse of a dense N x N matrix by Gauss-Jordan with partial pivoting.
std::vector<double> invert(std::vector<double> m, std::int64_t n) {
    std::vector<double> inv(static_cast<std::size_t>(n * n), 0.0);
    for (std::int64_t i = 0; i < n; ++i) inv[static_cast<std::size_t>(i * n + i)] = 1.0;
    double norm = 0.0;
    for (double v : m) norm = std::max(norm, std::fabs(v));
    for (std::int64_t col = 0; col < n; ++col) {
        std::int64_t pivot = col;
        for (std::int64_t r = col + 1; r < n; ++r) {
            if (std::fabs(m[r * n + col]) > std::fabs(m[pivot * n + col])) pivot = r;
        }
        double p = m[pivot * n + col];
        if (std::fabs(p) <= 1e-14 * std::max(norm, 1.0)) {
            throw Error(Errc::SingularMatrix, "(I - dt/2 A) is not invertible");
        }
        if (pivot != col) {
            for (std::int64_t j = 0; j < n; ++j) {
                std::swap(m[col * n + j], m[pivot * n + j]);
                std::swap(inv[col * n + j], inv[pivot * n + j]);
            }
        }
        for (std::int64_t j = 0; j < n; ++j) {
            m[col * n + j] /= p;
            inv[col * n + j] /= p;
        }
        for (std::int64_t r = 0; r < n; ++r) {
            if (r == col) continue;
            double f = m[r * n + col];
            if (f == 0.0) continue;
            for (std::int64_t j = 0; j < n; ++j) {
                m[r * n + j] -= f * m[col * n + j];
                inv[r * n + j] -= f * inv[col * n + j];
            }
        }
    }
    return inv;
}

void check_dense(const ContinuousSsm& s) {
    auto n = static_cast<std::size_t>(s.n);
    if (s.n < 1 || s.a.size() != n * n || s.b.size() != n || s.c.size() != n) {
        throw Error(Errc::ShapeMismatch, "inconsistent dense SSM shapes");
    }
}

void check_length(const Tensor& u) {
    if (u.dim() != 1) throw Error(Errc::ShapeMismatch, "SSM input must be rank 1, got " + shape_str(u.shape()));
}

}  // namespace

DiscreteSsm discretize_bilinear(const ContinuousSsm& ssm, double dt) {
    check_dense(ssm);
    if (!(dt > 0.0)) throw Error(Errc::BadInput, "timestep must be positive");
    const std::int64_t n = ssm.n;
    std::vector<double> minus(static_cast<std::size_t>(n * n));
    std::vector<double> plus(static_cast<std::size_t>(n * n));
    for (std::int64_t i = 0; i < n; ++i) {
        for (std::int64_t j = 0; j < n; ++j) {
            double eye = i == j ? 1.0 : 0.0;
            double half = 0.5 * dt * ssm.a[static_cast<std::size_t>(i * n + j)];
            minus[static_cast<std::size_t>(i * n + j)] = eye - half;
            plus[static_cast<std::size_t>(i * n + j)] = eye + half;
        }
    }
    auto inv = invert(minus, n);
    DiscreteSsm out;
    out.n = n;
    out.dt = dt;
    out.a_bar.assign(static_cast<std::size_t>(n * n), 0.0);
    out.b_bar.assign(static_cast<std::size_t>(n), 0.0);
    for (std::int64_t i = 0; i < n; ++i) {
        for (std::int64_t k = 0; k < n; ++k) {
            double v = inv[static_cast<std::size_t>(i * n + k)];
            for (std::int64_t j = 0; j < n; ++j) out.a_bar[static_cast<std::size_t>(i * n + j)] += v * plus[static_cast<std::size_t>(k * n + j)];
            out.b_bar[static_cast<std::size_t>(i)] += v * dt * ssm.b[static_cast<std::size_t>(k)];
        }
    }
    out.c_bar = ssm.c;
    return out;
}

DiscreteDiagonalSsm discretize_zoh_diagonal(const DiagonalSsm& ssm, double dt) {
    if (ssm.b.size() != ssm.lambda.size() || ssm.c.size() != ssm.lambda.size()) {
        throw Error(Errc::ShapeMismatch, "inconsistent diagonal SSM shapes");
    }
    if (!(dt > 0.0)) throw Error(Errc::BadInput, "timestep must be positive");
    DiscreteDiagonalSsm out;
    out.dt = dt;
    out.c_bar = ssm.c;
    for (std::size_t i = 0; i < ssm.lambda.size(); ++i) {
        cplx l = ssm.lambda[i];
        cplx lb = std::exp(dt * l);
        out.lambda_bar.push_back(lb);
        if (std::abs(l) * dt < 1e-8) {
            // (exp(dt l) - 1) / l -> dt (1 + dt l / 2) as l -> 0.
            out.b_bar.push_back(dt * (1.0 + 0.5 * dt * l) * ssm.b[i]);
        } else {
            out.b_bar.push_back((lb - 1.0) / l * ssm.b[i]);
        }
    }
    return out;
}

Tensor kernel_unroll(const DiscreteSsm& ssm, std::int64_t length) {
    if (length < 1) throw Error(Errc::BadInput, "kernel length must be positive");
    const auto n = static_cast<std::size_t>(ssm.n);
    std::vector<double> state = ssm.b_bar;
    std::vector<double> next(n);
    std::vector<double> k(static_cast<std::size_t>(length));
    for (std::int64_t l = 0; l < length; ++l) {
        double y = 0.0;
        for (std::size_t i = 0; i < n; ++i) y += ssm.c_bar[i] * state[i];
        k[static_cast<std::size_t>(l)] = y;
        for (std::size_t i = 0; i < n; ++i) {
            double s = 0.0;
            for (std::size_t j = 0; j < n; ++j) s += ssm.a_bar[i * n + j] * state[j];
            next[i] = s;
        }
        std::swap(state, next);
    }
    return Tensor::from({length}, std::move(k));
}

Tensor kernel_unroll(const DiscreteDiagonalSsm& ssm, std::int64_t length) {
    if (length < 1) throw Error(Errc::BadInput, "kernel length must be positive");
    std::vector<cplx> state = ssm.b_bar;
    std::vector<double> k(static_cast<std::size_t>(length));
    for (std::int64_t l = 0; l < length; ++l) {
        cplx y = 0.0;
        for (std::size_t i = 0; i < state.size(); ++i) {
            y += ssm.c_bar[i] * state[i];
            state[i] *= ssm.lambda_bar[i];
        }
        k[static_cast<std::size_t>(l)] = y.real();
    }
    return Tensor::from({length}, std::move(k));
}

Tensor long_conv_fft(const Tensor& kernel, const Tensor& u) {
    check_length(u);
    if (kernel.shape() != u.shape()) throw Error(Errc::ShapeMismatch, "kernel and input lengths differ");
    const auto len = static_cast<std::size_t>(u.numel());
    if (len == 0) throw Error(Errc::EmptyInput, "empty input");
    std::size_t m = 1;
    while (m < 2 * len - 1) m <<= 1;
    std::vector<spectral::cplx> kf(m, 0.0);
    std::vector<spectral::cplx> uf(m, 0.0);
    auto kd = kernel.data();
    auto ud = u.data();
    for (std::size_t i = 0; i < len; ++i) {
        kf[i] = kd[i];
        uf[i] = ud[i];
    }
    spectral::fft_inplace(kf);
    spectral::fft_inplace(uf);
    for (std::size_t i = 0; i < m; ++i) kf[i] *= uf[i];
    spectral::fft_inplace(kf, true);
    std::vector<double> y(len);
    for (std::size_t i = 0; i < len; ++i) y[i] = kf[i].real() / static_cast<double>(m);
    return Tensor::from(u.shape(), std::move(y), promote(kernel.dtype(), u.dtype()));
}

Tensor ssm_scan(const DiscreteSsm& ssm, double d, const Tensor& u) {
    check_length(u);
    const auto n = static_cast<std::size_t>(ssm.n);
    std::vector<double> x(n, 0.0);
    std::vector<double> next(n);
    auto ud = u.data();
    std::vector<double> y(ud.size());
    for (std::size_t k = 0; k < ud.size(); ++k) {
        for (std::size_t i = 0; i < n; ++i) {
            double s = ssm.b_bar[i] * ud[k];
            for (std::size_t j = 0; j < n; ++j) s += ssm.a_bar[i * n + j] * x[j];
            next[i] = s;
        }
        std::swap(x, next);
        double out = d * ud[k];
        for (std::size_t i = 0; i < n; ++i) out += ssm.c_bar[i] * x[i];
        y[k] = out;
    }
    return Tensor::from(u.shape(), std::move(y), u.dtype());
}

Tensor ssm_scan(const DiscreteDiagonalSsm& ssm, double d, const Tensor& u) {
    check_length(u);
    std::vector<cplx> x(ssm.lambda_bar.size(), 0.0);
    auto ud = u.data();
    std::vector<double> y(ud.size());
    for (std::size_t k = 0; k < ud.size(); ++k) {
        cplx out = d * ud[k];
        for (std::size_t i = 0; i < x.size(); ++i) {
            x[i] = ssm.lambda_bar[i] * x[i] + ssm.b_bar[i] * ud[k];
            out += ssm.c_bar[i] * x[i];
        }
        y[k] = out.real();
    }
    return Tensor::from(u.shape(), std::move(y), u.dtype());
}

double spectral_radius(const DiscreteDiagonalSsm& ssm) {
    double r = 0.0;
    for (auto l : ssm.lambda_bar) r = std::max(r, std::abs(l));
    return r;
}

cplx stable_lambda(double log_neg_re, double im) { return {-std::exp(log_neg_re), im}; }

double softplus(double x) { return x > 30.0 ? x : std::log1p(std::exp(x)); }

}  // namespace heracles::ssm
