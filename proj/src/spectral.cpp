#include "heracles/spectral.hpp"

#include <cmath>
#include <map>
#include <memory>
#include <mutex>
#include <numbers>

namespace heracles::spectral {

std::string to_string(TransformKind kind) {
    switch (kind) {
        case TransformKind::Hartley: return "hartley";
        case TransformKind::Cosine: return "cosine";
        case TransformKind::Fourier: return "fourier";
    }
    return "unknown";
}

TransformKind parse_transform_kind(const std::string& name) {
    if (name == "hartley") return TransformKind::Hartley;
    if (name == "cosine") return TransformKind::Cosine;
    if (name == "fourier") return TransformKind::Fourier;
    throw Error(Errc::BadInput, "unknown transform kind '" + name + "'");
}

namespace {

constexpr double kPi = std::numbers::pi;

bool is_pow2(std::size_t n) { return n != 0 && (n & (n - 1)) == 0; }

/// Twiddles and bit-reversal table for a power-of-two length.
struct Radix2Plan {
    std::size_t n = 0;
    std::vector<std::size_t> bitrev;
    std::vector<cplx> twiddle;  // exp(-2 pi i k / n), k < n/2

    explicit Radix2Plan(std::size_t len) : n(len), bitrev(len), twiddle(len / 2) {
        std::size_t bits = 0;
        while ((std::size_t{1} << bits) < n) ++bits;
        for (std::size_t i = 0; i < n; ++i) {
            std::size_t r = 0;
            for (std::size_t b = 0; b < bits; ++b) {
                if (i & (std::size_t{1} << b)) r |= std::size_t{1} << (bits - 1 - b);
            }
            bitrev[i] = r;
        }
        for (std::size_t k = 0; k < n / 2; ++k) {
            double angle = -2.0 * kPi * static_cast<double>(k) / static_cast<double>(n);
            twiddle[k] = {std::cos(angle), std::sin(angle)};
        }
    }

    /// Forward transform (negative exponent) in place.
    void run(cplx* data) const {
        for (std::size_t i = 0; i < n; ++i) {
            if (i < bitrev[i]) std::swap(data[i], data[bitrev[i]]);
        }
        for (std::size_t len = 2; len <= n; len <<= 1) {
            std::size_t half = len / 2;
            std::size_t step = n / len;
            for (std::size_t start = 0; start < n; start += len) {
                for (std::size_t j = 0; j < half; ++j) {
                    cplx t = data[start + j + half] * twiddle[j * step];
                    cplx u = data[start + j];
                    data[start + j] = u + t;
                    data[start + j + half] = u - t;
                }
            }
        }
    }
};

/// Bluestein chirp-z for arbitrary lengths.
struct BluesteinPlan {
    std::size_t n = 0;
    std::size_t m = 0;
    std::vector<cplx> chirp;      // exp(-i pi k^2 / n)
    std::vector<cplx> kernel_ft;  // FFT of the conjugate chirp, wrapped
    std::shared_ptr<const Radix2Plan> inner;

    BluesteinPlan(std::size_t len, std::shared_ptr<const Radix2Plan> radix, std::size_t padded)
        : n(len), m(padded), chirp(len), kernel_ft(padded, cplx{0.0, 0.0}), inner(std::move(radix)) {
        for (std::size_t k = 0; k < n; ++k) {
            // k^2 mod 2n keeps the angle small and exact.
            std::size_t k2 = (k * k) % (2 * n);
            double angle = -kPi * static_cast<double>(k2) / static_cast<double>(n);
            chirp[k] = {std::cos(angle), std::sin(angle)};
        }
        kernel_ft[0] = std::conj(chirp[0]);
        for (std::size_t k = 1; k < n; ++k) {
            kernel_ft[k] = std::conj(chirp[k]);
            kernel_ft[m - k] = std::conj(chirp[k]);
        }
        inner->run(kernel_ft.data());
    }

    void run(cplx* data) const {
        std::vector<cplx> work(m, cplx{0.0, 0.0});
        for (std::size_t k = 0; k < n; ++k) work[k] = data[k] * chirp[k];
        inner->run(work.data());
        for (std::size_t k = 0; k < m; ++k) work[k] *= kernel_ft[k];
        // Inverse via conjugation.
        for (auto& w : work) w = std::conj(w);
        inner->run(work.data());
        const double scale = 1.0 / static_cast<double>(m);
        for (std::size_t k = 0; k < n; ++k) data[k] = std::conj(work[k]) * scale * chirp[k];
    }
};

std::mutex g_plan_mutex;
std::map<std::size_t, std::shared_ptr<const Radix2Plan>> g_radix2;
std::map<std::size_t, std::shared_ptr<const BluesteinPlan>> g_bluestein;

std::shared_ptr<const Radix2Plan> radix2_plan(std::size_t n) {
    std::lock_guard<std::mutex> lock(g_plan_mutex);
    auto& slot = g_radix2[n];
    if (!slot) slot = std::make_shared<Radix2Plan>(n);
    return slot;
}

std::shared_ptr<const BluesteinPlan> bluestein_plan(std::size_t n) {
    std::size_t m = 1;
    while (m < 2 * n - 1) m <<= 1;
    auto radix = radix2_plan(m);
    std::lock_guard<std::mutex> lock(g_plan_mutex);
    auto& slot = g_bluestein[n];
    if (!slot) slot = std::make_shared<BluesteinPlan>(n, radix, m);
    return slot;
}

void fft_forward(cplx* data, std::size_t n) {
    if (n <= 1) return;
    if (is_pow2(n)) {
        radix2_plan(n)->run(data);
    } else {
        bluestein_plan(n)->run(data);
    }
}

void require_nonempty(std::size_t n) {
    if (n == 0) throw Error(Errc::EmptyInput, "transform of an empty sequence");
}

void require_rank(const Tensor& x, std::int64_t rank) {
    if (x.dim() != rank) {
        throw Error(Errc::UnsupportedRank, "expected rank " + std::to_string(rank) + ", got " + shape_str(x.shape()));
    }
    if (x.numel() == 0) throw Error(Errc::EmptyInput, "transform of an empty tensor");
}

double dct_scale(std::size_t k, std::size_t n) {
    return std::sqrt((k == 0 ? 1.0 : 2.0) / static_cast<double>(n));
}

}  // namespace

void fft_inplace(std::span<cplx> data, bool inverse_unnormalized) {
    require_nonempty(data.size());
    if (inverse_unnormalized) {
        for (auto& v : data) v = std::conj(v);
        fft_forward(data.data(), data.size());
        for (auto& v : data) v = std::conj(v);
    } else {
        fft_forward(data.data(), data.size());
    }
}

void dht_inplace(std::span<double> data) {
    require_nonempty(data.size());
    std::vector<cplx> work(data.begin(), data.end());
    fft_forward(work.data(), work.size());
    for (std::size_t k = 0; k < data.size(); ++k) data[k] = work[k].real() - work[k].imag();
}

void dct2_inplace(std::span<double> data) {
    const std::size_t n = data.size();
    require_nonempty(n);
    std::vector<cplx> v(n);
    for (std::size_t i = 0; 2 * i < n; ++i) v[i] = data[2 * i];
    for (std::size_t i = 0; 2 * i + 1 < n; ++i) v[n - 1 - i] = data[2 * i + 1];
    fft_forward(v.data(), n);
    for (std::size_t k = 0; k < n; ++k) {
        double angle = -kPi * static_cast<double>(k) / (2.0 * static_cast<double>(n));
        cplx w{std::cos(angle), std::sin(angle)};
        data[k] = dct_scale(k, n) * (w * v[k]).real();
    }
}

void dct3_inplace(std::span<double> data) {
    const std::size_t n = data.size();
    require_nonempty(n);
    std::vector<cplx> w(n);
    for (std::size_t k = 0; k < n; ++k) {
        double angle = kPi * static_cast<double>(k) / (2.0 * static_cast<double>(n));
        w[k] = dct_scale(k, n) * data[k] * cplx{std::cos(angle), std::sin(angle)};
    }
    // Unnormalized inverse DFT via conjugation.
    for (auto& c : w) c = std::conj(c);
    fft_forward(w.data(), n);
    for (std::size_t i = 0; 2 * i < n; ++i) data[2 * i] = w[i].real();
    for (std::size_t i = 0; 2 * i + 1 < n; ++i) data[2 * i + 1] = w[n - 1 - i].real();
}

ComplexSpectrum fft_1d(const Tensor& x) {
    require_rank(x, 1);
    auto src = x.data();
    std::vector<cplx> work(src.begin(), src.end());
    fft_forward(work.data(), work.size());
    std::vector<double> re(work.size());
    std::vector<double> im(work.size());
    for (std::size_t k = 0; k < work.size(); ++k) {
        re[k] = work[k].real();
        im[k] = work[k].imag();
    }
    return {Tensor::from(x.shape(), std::move(re), x.dtype()), Tensor::from(x.shape(), std::move(im), x.dtype())};
}

ComplexSpectrum ifft_1d(const ComplexSpectrum& spectrum) {
    require_rank(spectrum.re, 1);
    if (spectrum.re.shape() != spectrum.im.shape()) throw Error(Errc::ShapeMismatch, "spectrum re/im shapes differ");
    auto re = spectrum.re.data();
    auto im = spectrum.im.data();
    const std::size_t n = re.size();
    std::vector<cplx> work(n);
    for (std::size_t k = 0; k < n; ++k) work[k] = {re[k], -im[k]};
    fft_forward(work.data(), n);
    std::vector<double> out_re(n);
    std::vector<double> out_im(n);
    for (std::size_t k = 0; k < n; ++k) {
        out_re[k] = work[k].real() / static_cast<double>(n);
        out_im[k] = -work[k].imag() / static_cast<double>(n);
    }
    DType dt = spectrum.re.dtype();
    return {Tensor::from(spectrum.re.shape(), std::move(out_re), dt), Tensor::from(spectrum.re.shape(), std::move(out_im), dt)};
}

namespace {

Tensor apply_1d(const Tensor& x, void (*kernel)(std::span<double>), double scale) {
    require_rank(x, 1);
    auto v = x.to_vector();
    kernel(v);
    if (scale != 1.0) {
        for (auto& e : v) e *= scale;
    }
    return Tensor::from(x.shape(), std::move(v), x.dtype());
}

}  // namespace

Tensor dht_1d(const Tensor& x) { return apply_1d(x, dht_inplace, 1.0); }
Tensor idht_1d(const Tensor& spectrum) {
    require_rank(spectrum, 1);
    return apply_1d(spectrum, dht_inplace, 1.0 / static_cast<double>(spectrum.numel()));
}
Tensor dct2_1d(const Tensor& x) { return apply_1d(x, dct2_inplace, 1.0); }
Tensor dct3_1d(const Tensor& spectrum) { return apply_1d(spectrum, dct3_inplace, 1.0); }

void transform_fibers(TransformKind kind, bool inverse, std::span<double> data, std::int64_t outer, std::int64_t n,
                      std::int64_t inner) {
    if (kind == TransformKind::Fourier) throw Error(Errc::BadInput, "Fourier is not a real-to-real transform");
    require_nonempty(static_cast<std::size_t>(n));
    std::vector<double> fiber(static_cast<std::size_t>(n));
    const double hartley_scale = inverse ? 1.0 / static_cast<double>(n) : 1.0;
    for (std::int64_t o = 0; o < outer; ++o) {
        for (std::int64_t i = 0; i < inner; ++i) {
            double* base = data.data() + o * n * inner + i;
            for (std::int64_t k = 0; k < n; ++k) fiber[static_cast<std::size_t>(k)] = base[k * inner];
            if (kind == TransformKind::Hartley) {
                dht_inplace(fiber);
                for (std::int64_t k = 0; k < n; ++k) base[k * inner] = fiber[static_cast<std::size_t>(k)] * hartley_scale;
            } else {
                if (inverse) {
                    dct3_inplace(fiber);
                } else {
                    dct2_inplace(fiber);
                }
                for (std::int64_t k = 0; k < n; ++k) base[k * inner] = fiber[static_cast<std::size_t>(k)];
            }
        }
    }
}

Tensor transform_along_axis(TransformKind kind, const Tensor& x, std::int64_t axis, bool inverse) {
    auto rank = x.dim();
    if (axis < 0) axis += rank;
    if (axis < 0 || axis >= rank) throw Error(Errc::InvalidAxis, "transform axis out of range");
    if (x.numel() == 0) throw Error(Errc::EmptyInput, "transform of an empty tensor");
    const Shape& s = x.shape();
    std::int64_t outer = 1;
    for (std::int64_t i = 0; i < axis; ++i) outer *= s[static_cast<std::size_t>(i)];
    std::int64_t inner = 1;
    for (std::size_t i = static_cast<std::size_t>(axis) + 1; i < s.size(); ++i) inner *= s[i];
    auto v = x.to_vector();
    transform_fibers(kind, inverse, v, outer, s[static_cast<std::size_t>(axis)], inner);
    return Tensor::from(s, std::move(v), x.dtype());
}

Tensor transform_2d(TransformKind kind, const Tensor& x) {
    require_rank(x, 2);
    if (kind == TransformKind::Fourier) throw Error(Errc::BadInput, "use fft_2d for the Fourier transform");
    return transform_along_axis(kind, transform_along_axis(kind, x, 1, false), 0, false);
}

Tensor inverse_2d(TransformKind kind, const Tensor& spectrum) {
    require_rank(spectrum, 2);
    if (kind == TransformKind::Fourier) throw Error(Errc::BadInput, "use ifft_2d for the Fourier transform");
    return transform_along_axis(kind, transform_along_axis(kind, spectrum, 0, true), 1, true);
}

namespace {

void fft_2d_inplace(std::vector<cplx>& grid, std::size_t h, std::size_t w) {
    std::vector<cplx> col(h);
    for (std::size_t r = 0; r < h; ++r) fft_forward(grid.data() + r * w, w);
    for (std::size_t c = 0; c < w; ++c) {
        for (std::size_t r = 0; r < h; ++r) col[r] = grid[r * w + c];
        fft_forward(col.data(), h);
        for (std::size_t r = 0; r < h; ++r) grid[r * w + c] = col[r];
    }
}

}  // namespace

ComplexSpectrum fft_2d(const Tensor& x) {
    require_rank(x, 2);
    auto h = static_cast<std::size_t>(x.size(0));
    auto w = static_cast<std::size_t>(x.size(1));
    auto src = x.data();
    std::vector<cplx> grid(src.begin(), src.end());
    fft_2d_inplace(grid, h, w);
    std::vector<double> re(grid.size());
    std::vector<double> im(grid.size());
    for (std::size_t i = 0; i < grid.size(); ++i) {
        re[i] = grid[i].real();
        im[i] = grid[i].imag();
    }
    return {Tensor::from(x.shape(), std::move(re), x.dtype()), Tensor::from(x.shape(), std::move(im), x.dtype())};
}

ComplexSpectrum ifft_2d(const ComplexSpectrum& spectrum) {
    require_rank(spectrum.re, 2);
    if (spectrum.re.shape() != spectrum.im.shape()) throw Error(Errc::ShapeMismatch, "spectrum re/im shapes differ");
    auto h = static_cast<std::size_t>(spectrum.re.size(0));
    auto w = static_cast<std::size_t>(spectrum.re.size(1));
    auto re = spectrum.re.data();
    auto im = spectrum.im.data();
    std::vector<cplx> grid(re.size());
    for (std::size_t i = 0; i < grid.size(); ++i) grid[i] = {re[i], -im[i]};
    fft_2d_inplace(grid, h, w);
    const double scale = 1.0 / static_cast<double>(h * w);
    std::vector<double> out_re(grid.size());
    std::vector<double> out_im(grid.size());
    for (std::size_t i = 0; i < grid.size(); ++i) {
        out_re[i] = grid[i].real() * scale;
        out_im[i] = -grid[i].imag() * scale;
    }
    DType dt = spectrum.re.dtype();
    return {Tensor::from(spectrum.re.shape(), std::move(out_re), dt),
            Tensor::from(spectrum.re.shape(), std::move(out_im), dt)};
}

}  // namespace heracles::spectral
