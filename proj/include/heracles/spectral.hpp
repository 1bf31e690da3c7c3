#pragma once

#include <complex>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "heracles/tensor.hpp"

// Exact discrete transforms on real data.
//
// Conventions (N = transform length):
//   FFT   X[k] = sum_n x[n] exp(-2 pi i n k / N); the inverse carries 1/N.
//   DHT   H[k] = sum_n x[n] cas(2 pi n k / N), cas = cos + sin; H = Re(FFT) - Im(FFT).
//         The inverse is DHT / N, so DHT(DHT(x)) = N x.
//   DCT   orthonormal DCT-II, X[k] = s(k) sum_n x[n] cos(pi (n + 1/2) k / N) with
//         s(0) = sqrt(1/N), s(k>0) = sqrt(2/N); DCT-III is its transpose and inverse.
//   2D    separable: the 1D transform along rows, then along columns.
//
// Power-of-two lengths use an iterative radix-2 FFT; other lengths go through
// Bluestein's chirp-z algorithm on a power-of-two grid.
namespace heracles::spectral {

enum class TransformKind { Hartley, Cosine, Fourier };

std::string to_string(TransformKind kind);
TransformKind parse_transform_kind(const std::string& name);

/// Complex spectrum stored as two real tensors of equal shape.
struct ComplexSpectrum {
    Tensor re;
    Tensor im;
};

using cplx = std::complex<double>;

// Buffer-level kernels. All accept any length >= 1.
void fft_inplace(std::span<cplx> data, bool inverse_unnormalized = false);
void dht_inplace(std::span<double> data);
void dct2_inplace(std::span<double> data);
void dct3_inplace(std::span<double> data);

// 1D transforms of rank-1 tensors.
ComplexSpectrum fft_1d(const Tensor& x);
/// Inverse FFT with 1/N scaling; returns the complex result.
ComplexSpectrum ifft_1d(const ComplexSpectrum& spectrum);
Tensor dht_1d(const Tensor& x);
Tensor idht_1d(const Tensor& spectrum);
Tensor dct2_1d(const Tensor& x);
Tensor dct3_1d(const Tensor& spectrum);

// 2D transforms of rank-2 tensors [H, W].
/// Hartley or Cosine; Fourier is complex-valued, see fft_2d.
Tensor transform_2d(TransformKind kind, const Tensor& x);
Tensor inverse_2d(TransformKind kind, const Tensor& spectrum);
ComplexSpectrum fft_2d(const Tensor& x);
ComplexSpectrum ifft_2d(const ComplexSpectrum& spectrum);

/// Real-to-real transform of every fiber along `axis` of an arbitrary-rank
/// tensor (Hartley or Cosine). Not differentiable; see blocks for the
/// taped version.
Tensor transform_along_axis(TransformKind kind, const Tensor& x, std::int64_t axis, bool inverse);

/// Raw variant used by differentiable wrappers: applies the transform (or its
/// inverse) to `data` laid out as [outer, n, inner] in place.
void transform_fibers(TransformKind kind, bool inverse, std::span<double> data, std::int64_t outer, std::int64_t n,
                      std::int64_t inner);

}  // namespace heracles::spectral
