#include "recdesk/nn.hpp"

#include <cassert>
#include <cmath>
#include <cstring>

#include "recdesk/errors.hpp"
#include "recdesk/rng.hpp"

#ifdef _OPENMP
#include <omp.h>
#endif

namespace recdesk::nn {

namespace {
#ifdef _OPENMP
Backend g_backend = Backend::openmp;
#else
Backend g_backend = Backend::serial;
#endif
} // namespace

Backend backend() { return g_backend; }

void set_backend(Backend b) { g_backend = b; }

bool openmp_compiled() {
#ifdef _OPENMP
    return true;
#else
    return false;
#endif
}

// Each kernel computes output row i (or element block) with a serial inner
// sum over the contraction index, in the same order on both backends.

namespace {

inline void matmul_row(const double* A, const double* B, double* C, int i, int k, int n) {
    double* Ci = C + static_cast<std::size_t>(i) * n;
    const double* Ai = A + static_cast<std::size_t>(i) * k;
    for (int j = 0; j < n; ++j) Ci[j] = 0.0;
    for (int kk = 0; kk < k; ++kk) {
        const double a = Ai[kk];
        const double* Bk = B + static_cast<std::size_t>(kk) * n;
        for (int j = 0; j < n; ++j) Ci[j] += a * Bk[j];
    }
}

inline void matmul_nt_row(const double* A, const double* B, double* C, int i, int k, int n) {
    double* Ci = C + static_cast<std::size_t>(i) * n;
    const double* Ai = A + static_cast<std::size_t>(i) * k;
    for (int j = 0; j < n; ++j) {
        const double* Bj = B + static_cast<std::size_t>(j) * k;
        double acc = 0.0;
        for (int kk = 0; kk < k; ++kk) acc += Ai[kk] * Bj[kk];
        Ci[j] = acc;
    }
}

inline void matmul_tn_row(const double* A, const double* B, double* C, int r, int m, int k, int n) {
    // Row r of C (k x n): C[r][j] = sum_b A[b][r] * B[b][j]
    double* Cr = C + static_cast<std::size_t>(r) * n;
    for (int j = 0; j < n; ++j) Cr[j] = 0.0;
    for (int b = 0; b < m; ++b) {
        const double a = A[static_cast<std::size_t>(b) * k + r];
        const double* Bb = B + static_cast<std::size_t>(b) * n;
        for (int j = 0; j < n; ++j) Cr[j] += a * Bb[j];
    }
}

} // namespace

void matmul(const double* A, const double* B, double* C, int m, int k, int n) {
    if (g_backend == Backend::openmp) {
#pragma omp parallel for schedule(static)
        for (int i = 0; i < m; ++i) matmul_row(A, B, C, i, k, n);
    } else {
        for (int i = 0; i < m; ++i) matmul_row(A, B, C, i, k, n);
    }
}

void matmul_nt(const double* A, const double* B, double* C, int m, int k, int n) {
    if (g_backend == Backend::openmp) {
#pragma omp parallel for schedule(static)
        for (int i = 0; i < m; ++i) matmul_nt_row(A, B, C, i, k, n);
    } else {
        for (int i = 0; i < m; ++i) matmul_nt_row(A, B, C, i, k, n);
    }
}

void matmul_tn(const double* A, const double* B, double* C, int m, int k, int n) {
    if (g_backend == Backend::openmp) {
#pragma omp parallel for schedule(static)
        for (int r = 0; r < k; ++r) matmul_tn_row(A, B, C, r, m, k, n);
    } else {
        for (int r = 0; r < k; ++r) matmul_tn_row(A, B, C, r, m, k, n);
    }
}

void add_bias(double* Y, const double* b, int m, int n) {
    if (g_backend == Backend::openmp) {
#pragma omp parallel for schedule(static)
        for (int i = 0; i < m; ++i) {
            double* Yi = Y + static_cast<std::size_t>(i) * n;
            for (int j = 0; j < n; ++j) Yi[j] += b[j];
        }
    } else {
        for (int i = 0; i < m; ++i) {
            double* Yi = Y + static_cast<std::size_t>(i) * n;
            for (int j = 0; j < n; ++j) Yi[j] += b[j];
        }
    }
}

namespace {

template <typename F>
inline void elementwise(double* Y, std::size_t count, F f) {
    if (g_backend == Backend::openmp) {
#pragma omp parallel for schedule(static)
        for (long long i = 0; i < static_cast<long long>(count); ++i)
            Y[i] = f(Y[i], static_cast<std::size_t>(i));
    } else {
        for (std::size_t i = 0; i < count; ++i) Y[i] = f(Y[i], i);
    }
}

} // namespace

void relu_forward(double* Y, std::size_t count) {
    elementwise(Y, count, [](double y, std::size_t) { return y > 0.0 ? y : 0.0; });
}

void relu_backward(const double* Y, double* dY, std::size_t count) {
    elementwise(dY, count, [Y](double d, std::size_t i) { return Y[i] > 0.0 ? d : 0.0; });
}

void tanh_forward(double* Y, std::size_t count) {
    elementwise(Y, count, [](double y, std::size_t) { return std::tanh(y); });
}

void tanh_backward(const double* Y, double* dY, std::size_t count) {
    elementwise(dY, count, [Y](double d, std::size_t i) { return d * (1.0 - Y[i] * Y[i]); });
}

void col_sum(const double* Y, double* out, int m, int n) {
    for (int j = 0; j < n; ++j) out[j] = 0.0;
    for (int i = 0; i < m; ++i) {
        const double* Yi = Y + static_cast<std::size_t>(i) * n;
        for (int j = 0; j < n; ++j) out[j] += Yi[j];
    }
}

Mlp Mlp::make(const std::vector<int>& dims, Act hidden, Act output, std::uint64_t seed) {
    if (dims.size() < 2) throw ShapeMismatch("Mlp needs at least input and output dims");
    Mlp net;
    std::mt19937_64 eng(seed);
    for (std::size_t i = 0; i + 1 < dims.size(); ++i) {
        Dense layer;
        layer.in = dims[i];
        layer.out = dims[i + 1];
        layer.W.resize(static_cast<std::size_t>(layer.out) * layer.in);
        layer.b.assign(static_cast<std::size_t>(layer.out), 0.0);
        // He-uniform over the fan-in.
        const double limit = std::sqrt(6.0 / layer.in);
        for (double& w : layer.W) w = uniform_range(eng, -limit, limit);
        net.layers.push_back(std::move(layer));
        net.acts.push_back(i + 2 == dims.size() ? output : hidden);
    }
    return net;
}

std::size_t Mlp::param_count() const {
    std::size_t n = 0;
    for (const Dense& l : layers) n += l.W.size() + l.b.size();
    return n;
}

void Mlp::forward(const std::vector<double>& X, int batch,
                  std::vector<std::vector<double>>& acts_cache) const {
    if (layers.empty()) throw ShapeMismatch("forward on empty Mlp");
    if (X.size() != static_cast<std::size_t>(batch) * layers.front().in)
        throw ShapeMismatch("input batch does not match network input dim");
    acts_cache.assign(layers.size() + 1, {});
    acts_cache[0] = X;
    for (std::size_t li = 0; li < layers.size(); ++li) {
        const Dense& l = layers[li];
        std::vector<double>& Y = acts_cache[li + 1];
        Y.resize(static_cast<std::size_t>(batch) * l.out);
        matmul_nt(acts_cache[li].data(), l.W.data(), Y.data(), batch, l.in, l.out);
        add_bias(Y.data(), l.b.data(), batch, l.out);
        switch (acts[li]) {
            case Act::relu: relu_forward(Y.data(), Y.size()); break;
            case Act::tanh: tanh_forward(Y.data(), Y.size()); break;
            case Act::linear: break;
        }
    }
}

std::vector<double> Mlp::forward(const std::vector<double>& X, int batch) const {
    std::vector<std::vector<double>> cache;
    forward(X, batch, cache);
    return std::move(cache.back());
}

MlpGrads backward(const Mlp& net, const std::vector<std::vector<double>>& acts_cache,
                  int batch, const std::vector<double>& dY) {
    MlpGrads g;
    g.layers.resize(net.layers.size());
    std::vector<double> delta = dY;
    for (int li = static_cast<int>(net.layers.size()) - 1; li >= 0; --li) {
        const Dense& l = net.layers[static_cast<std::size_t>(li)];
        const std::vector<double>& Y = acts_cache[static_cast<std::size_t>(li) + 1];
        const std::vector<double>& Xin = acts_cache[static_cast<std::size_t>(li)];
        switch (net.acts[static_cast<std::size_t>(li)]) {
            case Act::relu: relu_backward(Y.data(), delta.data(), delta.size()); break;
            case Act::tanh: tanh_backward(Y.data(), delta.data(), delta.size()); break;
            case Act::linear: break;
        }
        DenseGrads& lg = g.layers[static_cast<std::size_t>(li)];
        lg.W.resize(l.W.size());
        lg.b.resize(l.b.size());
        // dW[out x in] = delta^T [out x batch] * X [batch x in]
        matmul_tn(delta.data(), Xin.data(), lg.W.data(), batch, l.out, l.in);
        col_sum(delta.data(), lg.b.data(), batch, l.out);
        // dX [batch x in] = delta [batch x out] * W [out x in]
        std::vector<double> dX(static_cast<std::size_t>(batch) * l.in);
        matmul(delta.data(), l.W.data(), dX.data(), batch, l.out, l.in);
        delta = std::move(dX);
    }
    g.input = std::move(delta);
    return g;
}

void accumulate(MlpGrads& into, const MlpGrads& other) {
    for (std::size_t li = 0; li < into.layers.size(); ++li) {
        for (std::size_t i = 0; i < into.layers[li].W.size(); ++i)
            into.layers[li].W[i] += other.layers[li].W[i];
        for (std::size_t i = 0; i < into.layers[li].b.size(); ++i)
            into.layers[li].b[i] += other.layers[li].b[i];
    }
}

void scale(MlpGrads& g, double factor) {
    for (DenseGrads& lg : g.layers) {
        for (double& w : lg.W) w *= factor;
        for (double& b : lg.b) b *= factor;
    }
    for (double& x : g.input) x *= factor;
}

void soft_update(Mlp& target, const Mlp& online, double tau) {
    if (target.layers.size() != online.layers.size())
        throw ShapeMismatch("soft_update across different architectures");
    for (std::size_t li = 0; li < target.layers.size(); ++li) {
        Dense& t = target.layers[li];
        const Dense& o = online.layers[li];
        if (t.W.size() != o.W.size() || t.b.size() != o.b.size())
            throw ShapeMismatch("soft_update layer shape mismatch");
        for (std::size_t i = 0; i < t.W.size(); ++i) t.W[i] = tau * o.W[i] + (1.0 - tau) * t.W[i];
        for (std::size_t i = 0; i < t.b.size(); ++i) t.b[i] = tau * o.b[i] + (1.0 - tau) * t.b[i];
    }
}

void Adam::step(Mlp& net, const MlpGrads& grads) {
    const std::size_t n = net.param_count();
    if (m.size() != n) {
        m.assign(n, 0.0);
        v.assign(n, 0.0);
    }
    ++t;
    const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(t));
    const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(t));
    std::size_t off = 0;
    auto update = [&](double* p, const double* g, std::size_t count) {
        for (std::size_t i = 0; i < count; ++i) {
            const std::size_t j = off + i;
            m[j] = beta1 * m[j] + (1.0 - beta1) * g[i];
            v[j] = beta2 * v[j] + (1.0 - beta2) * g[i] * g[i];
            const double mhat = m[j] / bc1;
            const double vhat = v[j] / bc2;
            p[i] -= lr * mhat / (std::sqrt(vhat) + eps);
        }
        off += count;
    };
    for (std::size_t li = 0; li < net.layers.size(); ++li) {
        update(net.layers[li].W.data(), grads.layers[li].W.data(), net.layers[li].W.size());
        update(net.layers[li].b.data(), grads.layers[li].b.data(), net.layers[li].b.size());
    }
}

} // namespace recdesk::nn
