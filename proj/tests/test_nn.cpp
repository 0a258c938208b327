#include <doctest.h>

#include <cmath>
#include <random>
#include <vector>

#include "recdesk/nn.hpp"
#include "recdesk/rng.hpp"

using namespace recdesk;

namespace {

struct BackendGuard {
    nn::Backend saved = nn::backend();
    ~BackendGuard() { nn::set_backend(saved); }
};

std::vector<double> random_vec(std::size_t count, std::mt19937_64& eng, double scale = 1.0) {
    std::vector<double> v(count);
    for (auto& x : v) x = uniform_range(eng, -scale, scale);
    return v;
}

void naive_matmul(const double* A, const double* B, double* C, int m, int k, int n) {
    for (int i = 0; i < m; ++i)
        for (int j = 0; j < n; ++j) {
            double s = 0.0;
            for (int p = 0; p < k; ++p) s += A[i * k + p] * B[p * n + j];
            C[i * n + j] = s;
        }
}

double* flat_param(nn::Mlp& net, std::size_t idx) {
    for (auto& layer : net.layers) {
        if (idx < layer.W.size()) return &layer.W[idx];
        idx -= layer.W.size();
        if (idx < layer.b.size()) return &layer.b[idx];
        idx -= layer.b.size();
    }
    return nullptr;
}

double flat_grad(const nn::MlpGrads& g, std::size_t idx) {
    for (const auto& layer : g.layers) {
        if (idx < layer.W.size()) return layer.W[idx];
        idx -= layer.W.size();
        if (idx < layer.b.size()) return layer.b[idx];
        idx -= layer.b.size();
    }
    return 0.0;
}

// Scalar loss: dot(forward(X), R) for a fixed random functional R, so the
// output gradient is simply R.
double loss_of(const nn::Mlp& net, const std::vector<double>& X, int batch,
               const std::vector<double>& R) {
    const auto Y = net.forward(X, batch);
    double s = 0.0;
    for (std::size_t i = 0; i < Y.size(); ++i) s += Y[i] * R[i];
    return s;
}

} // namespace

TEST_SUITE("nn") {

TEST_CASE("matmul hand example") {
    const double A[] = {1, 2, 3, 4};
    const double B[] = {5, 6, 7, 8};
    double C[4];
    nn::matmul(A, B, C, 2, 2, 2);
    CHECK(C[0] == 19.0);
    CHECK(C[1] == 22.0);
    CHECK(C[2] == 43.0);
    CHECK(C[3] == 50.0);
}

TEST_CASE("matmul variants agree with naive loops") {
    std::mt19937_64 eng(5);
    const int m = 7, k = 5, n = 9;
    auto A = random_vec(std::size_t(m) * k, eng);
    auto B = random_vec(std::size_t(k) * n, eng);
    std::vector<double> C(std::size_t(m) * n), ref(std::size_t(m) * n);
    nn::matmul(A.data(), B.data(), C.data(), m, k, n);
    naive_matmul(A.data(), B.data(), ref.data(), m, k, n);
    for (std::size_t i = 0; i < C.size(); ++i) CHECK(C[i] == doctest::Approx(ref[i]).epsilon(1e-12));

    // B^T variant: B stored as n rows of length k.
    std::vector<double> Bt(std::size_t(n) * k);
    for (int p = 0; p < k; ++p)
        for (int j = 0; j < n; ++j) Bt[std::size_t(j) * k + p] = B[std::size_t(p) * n + j];
    nn::matmul_nt(A.data(), Bt.data(), C.data(), m, k, n);
    for (std::size_t i = 0; i < C.size(); ++i) CHECK(C[i] == doctest::Approx(ref[i]).epsilon(1e-12));

    // A^T variant: C[k*n] = A[m*k]^T * B2[m*n].
    auto B2 = random_vec(std::size_t(m) * n, eng);
    std::vector<double> C2(std::size_t(k) * n), ref2(std::size_t(k) * n, 0.0);
    nn::matmul_tn(A.data(), B2.data(), C2.data(), m, k, n);
    for (int p = 0; p < k; ++p)
        for (int j = 0; j < n; ++j) {
            double s = 0.0;
            for (int i = 0; i < m; ++i) s += A[std::size_t(i) * k + p] * B2[std::size_t(i) * n + j];
            ref2[std::size_t(p) * n + j] = s;
        }
    for (std::size_t i = 0; i < C2.size(); ++i)
        CHECK(C2[i] == doctest::Approx(ref2[i]).epsilon(1e-12));
}

TEST_CASE("openmp backend is bit-identical to the serial reference") {
    BackendGuard guard;
    std::mt19937_64 eng(11);
    auto net = nn::Mlp::make({14, 64, 64, 2}, nn::Act::relu, nn::Act::tanh, 3);
    const int batch = 33;
    auto X = random_vec(std::size_t(batch) * 14, eng);
    auto dY = random_vec(std::size_t(batch) * 2, eng);

    nn::set_backend(nn::Backend::serial);
    std::vector<std::vector<double>> cache_s;
    net.forward(X, batch, cache_s);
    auto grads_s = nn::backward(net, cache_s, batch, dY);

    nn::set_backend(nn::Backend::openmp);
    std::vector<std::vector<double>> cache_p;
    net.forward(X, batch, cache_p);
    auto grads_p = nn::backward(net, cache_p, batch, dY);

    REQUIRE(cache_s.size() == cache_p.size());
    for (std::size_t i = 0; i < cache_s.size(); ++i) CHECK(cache_s[i] == cache_p[i]);
    REQUIRE(grads_s.layers.size() == grads_p.layers.size());
    for (std::size_t i = 0; i < grads_s.layers.size(); ++i) {
        CHECK(grads_s.layers[i].W == grads_p.layers[i].W);
        CHECK(grads_s.layers[i].b == grads_p.layers[i].b);
    }
    CHECK(grads_s.input == grads_p.input);
}

TEST_CASE("analytic gradients match central finite differences") {
    std::mt19937_64 eng(17);
    struct Case {
        std::vector<int> dims;
        nn::Act out;
    };
    // Actor-shaped (tanh head) and critic-shaped (linear head) networks.
    const Case cases[] = {{{5, 8, 8, 2}, nn::Act::tanh}, {{12, 8, 8, 1}, nn::Act::linear}};
    for (const auto& c : cases) {
        auto net = nn::Mlp::make(c.dims, nn::Act::relu, c.out, eng());
        const int batch = 6;
        auto X = random_vec(std::size_t(batch) * c.dims.front(), eng);
        std::vector<double> R = random_vec(std::size_t(batch) * c.dims.back(), eng);

        std::vector<std::vector<double>> cache;
        net.forward(X, batch, cache);
        auto grads = nn::backward(net, cache, batch, R);

        const std::size_t n_params = net.param_count();
        int checked = 0;
        for (int trial = 0; trial < 50; ++trial) {
            const std::size_t idx = std::size_t(uniform01(eng) * double(n_params));
            double* p = flat_param(net, idx);
            REQUIRE(p != nullptr);
            const double save = *p;
            const double h = 1e-6 * std::max(1.0, std::fabs(save));
            *p = save + h;
            const double lp = loss_of(net, X, batch, R);
            *p = save - h;
            const double lm = loss_of(net, X, batch, R);
            *p = save;
            const double numeric = (lp - lm) / (2.0 * h);
            const double analytic = flat_grad(grads, idx);
            const double denom = std::max(1e-8, std::fabs(numeric) + std::fabs(analytic));
            CHECK(std::fabs(numeric - analytic) / denom < 1e-4);
            ++checked;
        }
        CHECK(checked == 50);

        // Input gradients too: the actor update backpropagates through the
        // critic's input block.
        for (int trial = 0; trial < 10; ++trial) {
            const std::size_t idx = std::size_t(uniform01(eng) * X.size());
            const double save = X[idx];
            const double h = 1e-6 * std::max(1.0, std::fabs(save));
            X[idx] = save + h;
            const double lp = loss_of(net, X, batch, R);
            X[idx] = save - h;
            const double lm = loss_of(net, X, batch, R);
            X[idx] = save;
            const double numeric = (lp - lm) / (2.0 * h);
            const double analytic = grads.input[idx];
            const double denom = std::max(1e-8, std::fabs(numeric) + std::fabs(analytic));
            CHECK(std::fabs(numeric - analytic) / denom < 1e-4);
        }
    }
}

TEST_CASE("soft update blends elementwise") {
    auto online = nn::Mlp::make({2, 3, 1}, nn::Act::relu, nn::Act::linear, 1);
    auto target = online;
    for (auto& l : online.layers) {
        for (auto& w : l.W) w = 2.0;
        for (auto& b : l.b) b = 2.0;
    }
    for (auto& l : target.layers) {
        for (auto& w : l.W) w = 0.0;
        for (auto& b : l.b) b = 0.0;
    }
    auto t2 = target;
    nn::soft_update(t2, online, 0.25);
    for (const auto& l : t2.layers) {
        for (double w : l.W) CHECK(w == 0.5);
        for (double b : l.b) CHECK(b == 0.5);
    }
    nn::soft_update(t2, online, 1.0);
    for (const auto& l : t2.layers)
        for (double w : l.W) CHECK(w == 2.0);
    auto t3 = t2;
    nn::soft_update(t3, online, 0.0);
    for (std::size_t i = 0; i < t3.layers.size(); ++i) CHECK(t3.layers[i].W == t2.layers[i].W);
}

TEST_CASE("adam first steps on unit gradient") {
    // With g = 1 the bias corrections cancel exactly: each step moves the
    // weight by ~lr.
    auto net = nn::Mlp::make({1, 1}, nn::Act::linear, nn::Act::linear, 1);
    net.layers[0].W[0] = 5.0;
    net.layers[0].b[0] = 5.0;
    nn::MlpGrads g;
    g.layers.resize(1);
    g.layers[0].W = {1.0};
    g.layers[0].b = {1.0};
    nn::Adam opt;
    opt.lr = 0.1;
    opt.step(net, g);
    CHECK(net.layers[0].W[0] == doctest::Approx(4.9).epsilon(1e-7));
    opt.step(net, g);
    CHECK(net.layers[0].W[0] == doctest::Approx(4.8).epsilon(1e-7));
    CHECK(net.layers[0].b[0] == doctest::Approx(4.8).epsilon(1e-7));
}

TEST_CASE("initialization is seed-deterministic") {
    auto a = nn::Mlp::make({4, 8, 2}, nn::Act::relu, nn::Act::tanh, 42);
    auto b = nn::Mlp::make({4, 8, 2}, nn::Act::relu, nn::Act::tanh, 42);
    auto c = nn::Mlp::make({4, 8, 2}, nn::Act::relu, nn::Act::tanh, 43);
    REQUIRE(a.layers.size() == b.layers.size());
    for (std::size_t i = 0; i < a.layers.size(); ++i) {
        CHECK(a.layers[i].W == b.layers[i].W);
        CHECK(a.layers[i].b == b.layers[i].b);
    }
    bool any_diff = false;
    for (std::size_t i = 0; i < a.layers.size(); ++i)
        if (a.layers[i].W != c.layers[i].W) any_diff = true;
    CHECK(any_diff);
}

TEST_CASE("activation kernels") {
    std::vector<double> y = {-1.0, 0.0, 2.0};
    nn::relu_forward(y.data(), y.size());
    CHECK(y == std::vector<double>{0.0, 0.0, 2.0});
    std::vector<double> dy = {5.0, 5.0, 5.0};
    nn::relu_backward(y.data(), dy.data(), y.size());
    CHECK(dy == std::vector<double>{0.0, 0.0, 5.0});

    std::vector<double> t = {0.0, 100.0, -100.0};
    nn::tanh_forward(t.data(), t.size());
    CHECK(t[0] == 0.0);
    CHECK(t[1] == doctest::Approx(1.0));
    CHECK(t[2] == doctest::Approx(-1.0));
}

} // TEST_SUITE
