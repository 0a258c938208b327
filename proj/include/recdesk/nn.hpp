#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

namespace recdesk::nn {

// Dense-math kernels behind the actor/critic networks. Two backends share
// one contract: every output element is a fixed-order serial sum, so the
// OpenMP backend is bit-identical to the serial reference for any thread
// count. The serial backend stays as the oracle for tests and as the
// baseline for the kernel benchmark.

enum class Backend { serial, openmp };

Backend backend();
void set_backend(Backend b);
bool openmp_compiled();

// Row-major. C[m*n] = A[m*k] * B[k*n]
void matmul(const double* A, const double* B, double* C, int m, int k, int n);
// C[m*n] = A[m*k] * B[n*k]^T   (B stored row-major as n rows of length k)
void matmul_nt(const double* A, const double* B, double* C, int m, int k, int n);
// C[k*n] = A[m*k]^T * B[m*n]
void matmul_tn(const double* A, const double* B, double* C, int m, int k, int n);

void add_bias(double* Y, const double* b, int m, int n);
void relu_forward(double* Y, std::size_t count);
// dY *= 1[Y > 0], with Y the post-activation values
void relu_backward(const double* Y, double* dY, std::size_t count);
void tanh_forward(double* Y, std::size_t count);
// dY *= (1 - Y^2), with Y the post-activation values
void tanh_backward(const double* Y, double* dY, std::size_t count);
// out[n] = column sums of Y[m*n]
void col_sum(const double* Y, double* out, int m, int n);

enum class Act : std::uint8_t { linear, relu, tanh };

struct Dense {
    int in = 0;
    int out = 0;
    std::vector<double> W; // out x in, row-major
    std::vector<double> b; // out
};

struct DenseGrads {
    std::vector<double> W;
    std::vector<double> b;
};

// Fully connected network; layer i maps dims[i] -> dims[i+1] through acts[i].
struct Mlp {
    std::vector<Dense> layers;
    std::vector<Act> acts;

    static Mlp make(const std::vector<int>& dims, Act hidden, Act output,
                    std::uint64_t seed);

    int input_dim() const { return layers.empty() ? 0 : layers.front().in; }
    int output_dim() const { return layers.empty() ? 0 : layers.back().out; }
    std::size_t param_count() const;

    // acts_cache[0] is the input batch, acts_cache[i] the post-activation
    // output of layer i-1; all batch-major.
    void forward(const std::vector<double>& X, int batch,
                 std::vector<std::vector<double>>& acts_cache) const;

    // Convenience single-pass forward without keeping intermediates.
    std::vector<double> forward(const std::vector<double>& X, int batch) const;
};

struct MlpGrads {
    std::vector<DenseGrads> layers;
    std::vector<double> input; // dL/dX, batch x input_dim
};

// dY is dL/d(output), batch-major. Returns gradients for every layer and
// for the input batch.
MlpGrads backward(const Mlp& net, const std::vector<std::vector<double>>& acts_cache,
                  int batch, const std::vector<double>& dY);

void accumulate(MlpGrads& into, const MlpGrads& other);
void scale(MlpGrads& g, double factor);

// theta_target <- tau * theta_online + (1 - tau) * theta_target
void soft_update(Mlp& target, const Mlp& online, double tau);

struct Adam {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    long t = 0;
    std::vector<double> m;
    std::vector<double> v;

    void step(Mlp& net, const MlpGrads& grads);
};

} // namespace recdesk::nn
