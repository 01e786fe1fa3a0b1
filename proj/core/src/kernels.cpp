#include "sepseg/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <thread>

namespace sepseg {

namespace {

int g_kernel_threads = 1;

template <class T>
void require_rank5(const Tensor<T>& t, const char* what) {
    if (t.rank() != 5) throw ConfigError(std::string(what) + " must have rank 5 (N,C,D,H,W)");
}

// Runs fn(i) for i in [0, count); slices are independent by construction.
template <class Fn>
void parallel_for(std::int64_t count, const Fn& fn) {
    const int threads = std::min<std::int64_t>(g_kernel_threads, count);
    if (threads <= 1) {
        for (std::int64_t i = 0; i < count; ++i) fn(i);
        return;
    }
    std::vector<std::thread> pool;
    pool.reserve(static_cast<std::size_t>(threads));
    for (int t = 0; t < threads; ++t)
        pool.emplace_back([&, t] {
            for (std::int64_t i = t; i < count; i += threads) fn(i);
        });
    for (auto& th : pool) th.join();
}

}  // namespace

void set_kernel_threads(int n) { g_kernel_threads = std::max(1, n); }
int kernel_threads() { return g_kernel_threads; }

template <class T>
Tensor<T> conv3d(const Tensor<T>& x, const Tensor<T>& k, const Tensor<T>& bias) {
    require_rank5(x, "conv3d input");
    require_rank5(k, "conv3d kernel");
    const std::int64_t N = x.size(0), Cin = x.size(1), D = x.size(2), H = x.size(3), W = x.size(4);
    const std::int64_t Cout = k.size(0), kd = k.size(2), kh = k.size(3), kw = k.size(4);
    if (k.size(1) != Cin) throw ConfigError("conv3d: kernel Cin does not match input channels");
    if (kd % 2 == 0 || kh % 2 == 0 || kw % 2 == 0) throw ConfigError("conv3d: kernel extents must be odd");
    if (bias.rank() != 1 || bias.size(0) != Cout) throw ConfigError("conv3d: bias must have shape (Cout)");
    const std::int64_t pd = kd / 2, ph = kh / 2, pw = kw / 2;
    const std::int64_t spatial = D * H * W;

    Tensor<T> y = Tensor<T>::zeros({N, Cout, D, H, W});
    parallel_for(N * Cout, [&](std::int64_t nc) {
        const std::int64_t n = nc / Cout, co = nc % Cout;
        std::vector<double> acc(static_cast<std::size_t>(spatial), static_cast<double>(bias[co]));
        for (std::int64_t ci = 0; ci < Cin; ++ci) {
            const T* xs = x.data.data() + ((n * Cin + ci) * spatial);
            for (std::int64_t a = 0; a < kd; ++a) {
                const std::int64_t dz = a - pd;
                for (std::int64_t b = 0; b < kh; ++b) {
                    const std::int64_t dyy = b - ph;
                    for (std::int64_t c = 0; c < kw; ++c) {
                        const std::int64_t dxx = c - pw;
                        const double wgt =
                            static_cast<double>(k.data[(((co * Cin + ci) * kd + a) * kh + b) * kw + c]);
                        if (wgt == 0.0) continue;
                        const std::int64_t z0 = std::max<std::int64_t>(0, -dz), z1 = std::min(D, D - dz);
                        const std::int64_t y0 = std::max<std::int64_t>(0, -dyy), y1 = std::min(H, H - dyy);
                        const std::int64_t x0 = std::max<std::int64_t>(0, -dxx), x1 = std::min(W, W - dxx);
                        for (std::int64_t z = z0; z < z1; ++z)
                            for (std::int64_t yy = y0; yy < y1; ++yy) {
                                double* dst = acc.data() + (z * H + yy) * W;
                                const T* src = xs + ((z + dz) * H + (yy + dyy)) * W + dxx;
                                for (std::int64_t xx = x0; xx < x1; ++xx)
                                    dst[xx] += wgt * static_cast<double>(src[xx]);
                            }
                    }
                }
            }
        }
        T* out = y.data.data() + ((n * Cout + co) * spatial);
        for (std::int64_t i = 0; i < spatial; ++i) out[i] = static_cast<T>(acc[static_cast<std::size_t>(i)]);
    });
    return y;
}

template <class T>
void conv3d_backward(const Tensor<T>& x, const Tensor<T>& k, const Tensor<T>& dy, Tensor<T>* dx,
                     Tensor<T>* dk, Tensor<T>* dbias) {
    const std::int64_t N = x.size(0), Cin = x.size(1), D = x.size(2), H = x.size(3), W = x.size(4);
    const std::int64_t Cout = k.size(0), kd = k.size(2), kh = k.size(3), kw = k.size(4);
    const std::int64_t pd = kd / 2, ph = kh / 2, pw = kw / 2;
    const std::int64_t spatial = D * H * W;

    if (dbias) {
        for (std::int64_t co = 0; co < Cout; ++co) {
            double acc = 0.0;
            for (std::int64_t n = 0; n < N; ++n) {
                const T* g = dy.data.data() + ((n * Cout + co) * spatial);
                for (std::int64_t i = 0; i < spatial; ++i) acc += static_cast<double>(g[i]);
            }
            (*dbias)[co] += static_cast<T>(acc);
        }
    }

    if (dk) {
        parallel_for(Cout * Cin, [&](std::int64_t cc) {
            const std::int64_t co = cc / Cin, ci = cc % Cin;
            for (std::int64_t a = 0; a < kd; ++a)
                for (std::int64_t b = 0; b < kh; ++b)
                    for (std::int64_t c = 0; c < kw; ++c) {
                        const std::int64_t dz = a - pd, dyy = b - ph, dxx = c - pw;
                        const std::int64_t z0 = std::max<std::int64_t>(0, -dz), z1 = std::min(D, D - dz);
                        const std::int64_t y0 = std::max<std::int64_t>(0, -dyy), y1 = std::min(H, H - dyy);
                        const std::int64_t x0 = std::max<std::int64_t>(0, -dxx), x1 = std::min(W, W - dxx);
                        double acc = 0.0;
                        for (std::int64_t n = 0; n < N; ++n) {
                            const T* g = dy.data.data() + ((n * Cout + co) * spatial);
                            const T* xs = x.data.data() + ((n * Cin + ci) * spatial);
                            for (std::int64_t z = z0; z < z1; ++z)
                                for (std::int64_t yy = y0; yy < y1; ++yy) {
                                    const T* grow = g + (z * H + yy) * W;
                                    const T* xrow = xs + ((z + dz) * H + (yy + dyy)) * W + dxx;
                                    for (std::int64_t xx = x0; xx < x1; ++xx)
                                        acc += static_cast<double>(grow[xx]) * static_cast<double>(xrow[xx]);
                                }
                        }
                        (*dk)[(((co * Cin + ci) * kd + a) * kh + b) * kw + c] += static_cast<T>(acc);
                    }
        });
    }

    if (dx) {
        parallel_for(N * Cin, [&](std::int64_t nc) {
            const std::int64_t n = nc / Cin, ci = nc % Cin;
            std::vector<double> acc(static_cast<std::size_t>(spatial), 0.0);
            for (std::int64_t co = 0; co < Cout; ++co) {
                const T* g = dy.data.data() + ((n * Cout + co) * spatial);
                for (std::int64_t a = 0; a < kd; ++a)
                    for (std::int64_t b = 0; b < kh; ++b)
                        for (std::int64_t c = 0; c < kw; ++c) {
                            const std::int64_t dz = a - pd, dyy = b - ph, dxx = c - pw;
                            const double wgt =
                                static_cast<double>(k.data[(((co * Cin + ci) * kd + a) * kh + b) * kw + c]);
                            if (wgt == 0.0) continue;
                            const std::int64_t z0 = std::max<std::int64_t>(0, -dz), z1 = std::min(D, D - dz);
                            const std::int64_t y0 = std::max<std::int64_t>(0, -dyy), y1 = std::min(H, H - dyy);
                            const std::int64_t x0 = std::max<std::int64_t>(0, -dxx), x1 = std::min(W, W - dxx);
                            for (std::int64_t z = z0; z < z1; ++z)
                                for (std::int64_t yy = y0; yy < y1; ++yy) {
                                    const T* grow = g + (z * H + yy) * W;
                                    double* arow = acc.data() + ((z + dz) * H + (yy + dyy)) * W + dxx;
                                    for (std::int64_t xx = x0; xx < x1; ++xx)
                                        arow[xx] += wgt * static_cast<double>(grow[xx]);
                                }
                        }
            }
            T* out = dx->data.data() + ((n * Cin + ci) * spatial);
            for (std::int64_t i = 0; i < spatial; ++i)
                out[i] += static_cast<T>(acc[static_cast<std::size_t>(i)]);
        });
    }
}

template <class T>
Tensor<T> instance_norm(const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta, double eps,
                        InstanceNormCache* cache) {
    require_rank5(x, "instance_norm input");
    const std::int64_t N = x.size(0), C = x.size(1), m = x.size(2) * x.size(3) * x.size(4);
    if (gamma.rank() != 1 || gamma.size(0) != C || beta.rank() != 1 || beta.size(0) != C)
        throw ConfigError("instance_norm: gamma/beta must have shape (C)");
    Tensor<T> y = Tensor<T>::zeros(x.shape);
    if (cache) {
        cache->mean.assign(static_cast<std::size_t>(N * C), 0.0);
        cache->inv_std.assign(static_cast<std::size_t>(N * C), 0.0);
    }
    for (std::int64_t nc = 0; nc < N * C; ++nc) {
        const T* xs = x.data.data() + nc * m;
        double mean = 0.0;
        for (std::int64_t i = 0; i < m; ++i) mean += static_cast<double>(xs[i]);
        mean /= static_cast<double>(m);
        double var = 0.0;
        for (std::int64_t i = 0; i < m; ++i) {
            const double d = static_cast<double>(xs[i]) - mean;
            var += d * d;
        }
        var /= static_cast<double>(m);
        const double inv_std = 1.0 / std::sqrt(var + eps);
        if (cache) {
            cache->mean[static_cast<std::size_t>(nc)] = mean;
            cache->inv_std[static_cast<std::size_t>(nc)] = inv_std;
        }
        const std::int64_t c = nc % C;
        const double g = static_cast<double>(gamma[c]), b = static_cast<double>(beta[c]);
        T* ys = y.data.data() + nc * m;
        for (std::int64_t i = 0; i < m; ++i)
            ys[i] = static_cast<T>(g * (static_cast<double>(xs[i]) - mean) * inv_std + b);
    }
    return y;
}

template <class T>
void instance_norm_backward(const Tensor<T>& x, const Tensor<T>& gamma, const InstanceNormCache& cache,
                            const Tensor<T>& dy, Tensor<T>* dx, Tensor<T>* dgamma, Tensor<T>* dbeta) {
    const std::int64_t N = x.size(0), C = x.size(1), m = x.size(2) * x.size(3) * x.size(4);
    for (std::int64_t nc = 0; nc < N * C; ++nc) {
        const std::int64_t c = nc % C;
        const T* xs = x.data.data() + nc * m;
        const T* gs = dy.data.data() + nc * m;
        const double mean = cache.mean[static_cast<std::size_t>(nc)];
        const double inv_std = cache.inv_std[static_cast<std::size_t>(nc)];
        const double g = static_cast<double>(gamma[c]);

        double sum_dy = 0.0, sum_dy_xhat = 0.0;
        for (std::int64_t i = 0; i < m; ++i) {
            const double xhat = (static_cast<double>(xs[i]) - mean) * inv_std;
            const double d = static_cast<double>(gs[i]);
            sum_dy += d;
            sum_dy_xhat += d * xhat;
        }
        if (dgamma) (*dgamma)[c] += static_cast<T>(sum_dy_xhat);
        if (dbeta) (*dbeta)[c] += static_cast<T>(sum_dy);
        if (dx) {
            // dx = g*inv_std/m * (m*dy - sum_dy - xhat * sum_dy_xhat)
            T* out = dx->data.data() + nc * m;
            const double scale = g * inv_std / static_cast<double>(m);
            for (std::int64_t i = 0; i < m; ++i) {
                const double xhat = (static_cast<double>(xs[i]) - mean) * inv_std;
                const double d = static_cast<double>(gs[i]);
                out[i] += static_cast<T>(scale * (static_cast<double>(m) * d - sum_dy - xhat * sum_dy_xhat));
            }
        }
    }
}

template <class T>
Tensor<T> relu(const Tensor<T>& x) {
    Tensor<T> y = x;
    for (auto& v : y.data) v = v > T(0) ? v : T(0);
    return y;
}

template <class T>
Tensor<T> relu_backward(const Tensor<T>& x, const Tensor<T>& dy) {
    Tensor<T> dx = Tensor<T>::zeros(x.shape);
    for (std::int64_t i = 0; i < x.numel(); ++i) dx[i] = x[i] > T(0) ? dy[i] : T(0);
    return dx;
}

template <class T>
Tensor<T> max_pool(const Tensor<T>& x, Window3 window, std::vector<std::int64_t>* argmax) {
    require_rank5(x, "max_pool input");
    const std::int64_t N = x.size(0), C = x.size(1), D = x.size(2), H = x.size(3), W = x.size(4);
    if (window.d < 1 || window.h < 1 || window.w < 1) throw ConfigError("max_pool: window must be >= 1");
    if (D % window.d || H % window.h || W % window.w)
        throw ConfigError("max_pool: window must divide the spatial dims");
    const std::int64_t Do = D / window.d, Ho = H / window.h, Wo = W / window.w;
    Tensor<T> y = Tensor<T>::zeros({N, C, Do, Ho, Wo});
    if (argmax) argmax->assign(static_cast<std::size_t>(y.numel()), 0);
    std::int64_t oi = 0;
    for (std::int64_t nc = 0; nc < N * C; ++nc) {
        const std::int64_t base = nc * D * H * W;
        for (std::int64_t zo = 0; zo < Do; ++zo)
            for (std::int64_t yo = 0; yo < Ho; ++yo)
                for (std::int64_t xo = 0; xo < Wo; ++xo, ++oi) {
                    T best = x[base + ((zo * window.d) * H + yo * window.h) * W + xo * window.w];
                    std::int64_t best_idx =
                        base + ((zo * window.d) * H + yo * window.h) * W + xo * window.w;
                    for (std::int64_t a = 0; a < window.d; ++a)
                        for (std::int64_t b = 0; b < window.h; ++b)
                            for (std::int64_t c = 0; c < window.w; ++c) {
                                const std::int64_t idx =
                                    base + ((zo * window.d + a) * H + yo * window.h + b) * W +
                                    xo * window.w + c;
                                if (x[idx] > best) {  // strict: first (lowest index) wins ties
                                    best = x[idx];
                                    best_idx = idx;
                                }
                            }
                    y[oi] = best;
                    if (argmax) (*argmax)[static_cast<std::size_t>(oi)] = best_idx;
                }
    }
    return y;
}

template <class T>
Tensor<T> max_pool_backward(const Tensor<T>& dy, const std::vector<std::int64_t>& argmax,
                            const std::vector<std::int64_t>& x_shape) {
    Tensor<T> dx = Tensor<T>::zeros(x_shape);
    for (std::int64_t i = 0; i < dy.numel(); ++i) dx[argmax[static_cast<std::size_t>(i)]] += dy[i];
    return dx;
}

template <class T>
Tensor<T> upsample_nearest(const Tensor<T>& x, Window3 factor) {
    require_rank5(x, "upsample input");
    const std::int64_t N = x.size(0), C = x.size(1), D = x.size(2), H = x.size(3), W = x.size(4);
    const std::int64_t Do = D * factor.d, Ho = H * factor.h, Wo = W * factor.w;
    Tensor<T> y = Tensor<T>::zeros({N, C, Do, Ho, Wo});
    for (std::int64_t nc = 0; nc < N * C; ++nc) {
        const T* xs = x.data.data() + nc * D * H * W;
        T* ys = y.data.data() + nc * Do * Ho * Wo;
        for (std::int64_t z = 0; z < Do; ++z)
            for (std::int64_t yy = 0; yy < Ho; ++yy) {
                const T* row = xs + ((z / factor.d) * H + yy / factor.h) * W;
                T* out = ys + (z * Ho + yy) * Wo;
                for (std::int64_t xx = 0; xx < Wo; ++xx) out[xx] = row[xx / factor.w];
            }
    }
    return y;
}

template <class T>
Tensor<T> upsample_nearest_backward(const Tensor<T>& dy, Window3 factor,
                                    const std::vector<std::int64_t>& x_shape) {
    Tensor<T> dx = Tensor<T>::zeros(x_shape);
    const std::int64_t N = x_shape[0], C = x_shape[1], D = x_shape[2], H = x_shape[3], W = x_shape[4];
    const std::int64_t Do = D * factor.d, Ho = H * factor.h, Wo = W * factor.w;
    for (std::int64_t nc = 0; nc < N * C; ++nc) {
        const T* gs = dy.data.data() + nc * Do * Ho * Wo;
        T* out = dx.data.data() + nc * D * H * W;
        for (std::int64_t z = 0; z < Do; ++z)
            for (std::int64_t yy = 0; yy < Ho; ++yy) {
                const T* row = gs + (z * Ho + yy) * Wo;
                T* orow = out + ((z / factor.d) * H + yy / factor.h) * W;
                for (std::int64_t xx = 0; xx < Wo; ++xx) orow[xx / factor.w] += row[xx];
            }
    }
    return dx;
}

template <class T>
Tensor<T> concat_channels(const Tensor<T>& a, const Tensor<T>& b) {
    require_rank5(a, "concat input");
    require_rank5(b, "concat input");
    for (int axis : {0, 2, 3, 4})
        if (a.size(axis) != b.size(axis))
            throw ConfigError("concat_channels: non-channel dims must match");
    const std::int64_t N = a.size(0), Ca = a.size(1), Cb = b.size(1);
    const std::int64_t spatial = a.size(2) * a.size(3) * a.size(4);
    Tensor<T> y = Tensor<T>::zeros({N, Ca + Cb, a.size(2), a.size(3), a.size(4)});
    for (std::int64_t n = 0; n < N; ++n) {
        std::copy_n(a.data.data() + n * Ca * spatial, Ca * spatial,
                    y.data.data() + n * (Ca + Cb) * spatial);
        std::copy_n(b.data.data() + n * Cb * spatial, Cb * spatial,
                    y.data.data() + n * (Ca + Cb) * spatial + Ca * spatial);
    }
    return y;
}

template <class T>
Tensor<T> softmax_channels(const Tensor<T>& x) {
    require_rank5(x, "softmax input");
    const std::int64_t N = x.size(0), C = x.size(1), spatial = x.size(2) * x.size(3) * x.size(4);
    Tensor<T> y = Tensor<T>::zeros(x.shape);
    for (std::int64_t n = 0; n < N; ++n)
        for (std::int64_t v = 0; v < spatial; ++v) {
            const std::int64_t base = n * C * spatial + v;
            double mx = static_cast<double>(x[base]);
            for (std::int64_t c = 1; c < C; ++c)
                mx = std::max(mx, static_cast<double>(x[base + c * spatial]));
            double sum = 0.0;
            for (std::int64_t c = 0; c < C; ++c)
                sum += std::exp(static_cast<double>(x[base + c * spatial]) - mx);
            for (std::int64_t c = 0; c < C; ++c)
                y[base + c * spatial] =
                    static_cast<T>(std::exp(static_cast<double>(x[base + c * spatial]) - mx) / sum);
        }
    return y;
}

template <class T>
Tensor<T> softmax_channels_backward(const Tensor<T>& y, const Tensor<T>& dy) {
    const std::int64_t N = y.size(0), C = y.size(1), spatial = y.size(2) * y.size(3) * y.size(4);
    Tensor<T> dx = Tensor<T>::zeros(y.shape);
    for (std::int64_t n = 0; n < N; ++n)
        for (std::int64_t v = 0; v < spatial; ++v) {
            const std::int64_t base = n * C * spatial + v;
            double dot = 0.0;
            for (std::int64_t c = 0; c < C; ++c)
                dot += static_cast<double>(dy[base + c * spatial]) *
                       static_cast<double>(y[base + c * spatial]);
            for (std::int64_t c = 0; c < C; ++c)
                dx[base + c * spatial] = static_cast<T>(
                    static_cast<double>(y[base + c * spatial]) *
                    (static_cast<double>(dy[base + c * spatial]) - dot));
        }
    return dx;
}

#define SEPSEG_INSTANTIATE(T)                                                                          \
    template Tensor<T> conv3d<T>(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&);               \
    template void conv3d_backward<T>(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&,            \
                                     Tensor<T>*, Tensor<T>*, Tensor<T>*);                             \
    template Tensor<T> instance_norm<T>(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, double, \
                                        InstanceNormCache*);                                          \
    template void instance_norm_backward<T>(const Tensor<T>&, const Tensor<T>&,                       \
                                            const InstanceNormCache&, const Tensor<T>&, Tensor<T>*,   \
                                            Tensor<T>*, Tensor<T>*);                                  \
    template Tensor<T> relu<T>(const Tensor<T>&);                                                     \
    template Tensor<T> relu_backward<T>(const Tensor<T>&, const Tensor<T>&);                          \
    template Tensor<T> max_pool<T>(const Tensor<T>&, Window3, std::vector<std::int64_t>*);            \
    template Tensor<T> max_pool_backward<T>(const Tensor<T>&, const std::vector<std::int64_t>&,       \
                                            const std::vector<std::int64_t>&);                        \
    template Tensor<T> upsample_nearest<T>(const Tensor<T>&, Window3);                                \
    template Tensor<T> upsample_nearest_backward<T>(const Tensor<T>&, Window3,                        \
                                                    const std::vector<std::int64_t>&);                \
    template Tensor<T> concat_channels<T>(const Tensor<T>&, const Tensor<T>&);                        \
    template Tensor<T> softmax_channels<T>(const Tensor<T>&);                                         \
    template Tensor<T> softmax_channels_backward<T>(const Tensor<T>&, const Tensor<T>&);

SEPSEG_INSTANTIATE(float)
SEPSEG_INSTANTIATE(double)
#undef SEPSEG_INSTANTIATE

}  // namespace sepseg
