// Kernel and train-step timings, serial reference vs OpenMP. Run after any
// change to the dense kernels; the two backends must agree bit-for-bit, so
// this also doubles as a quick smoke check.

#include <chrono>
#include <cstdio>
#include <random>
#include <vector>

#include "recdesk/control.hpp"
#include "recdesk/nn.hpp"
#include "recdesk/rng.hpp"

using namespace recdesk;
using Clock = std::chrono::steady_clock;

namespace {

double ms_since(Clock::time_point t0) {
    return std::chrono::duration<double, std::milli>(Clock::now() - t0).count();
}

std::vector<double> random_vec(std::size_t count, std::mt19937_64& eng) {
    std::vector<double> v(count);
    for (auto& x : v) x = uniform_range(eng, -1.0, 1.0);
    return v;
}

double bench_matmul(int m, int k, int n, int reps, nn::Backend be, double& checksum) {
    std::mt19937_64 eng(7);
    auto A = random_vec(std::size_t(m) * k, eng);
    auto B = random_vec(std::size_t(k) * n, eng);
    std::vector<double> C(std::size_t(m) * n);
    nn::set_backend(be);
    auto t0 = Clock::now();
    for (int r = 0; r < reps; ++r) nn::matmul(A.data(), B.data(), C.data(), m, k, n);
    double ms = ms_since(t0) / reps;
    checksum = 0.0;
    for (double x : C) checksum += x;
    return ms;
}

double bench_train_step(nn::Backend be, int steps) {
    nn::set_backend(be);
    const int n_agents = 4, obs = 14, act = 2;
    control::TrainConfig cfg;
    cfg.batch = 256;
    auto policy = control::init_policy({"b1", "b2", "b3", "b4"}, obs, act, 1);
    control::Trainer trainer(std::move(policy), cfg);
    control::ReplayBuffer buf(4096, 9);
    std::mt19937_64 eng(11);
    for (int i = 0; i < 1024; ++i) {
        control::Transition tr;
        tr.obs = random_vec(std::size_t(n_agents) * obs, eng);
        tr.actions = random_vec(std::size_t(n_agents) * act, eng);
        tr.rewards = random_vec(n_agents, eng);
        tr.next_obs = random_vec(std::size_t(n_agents) * obs, eng);
        buf.push(std::move(tr));
    }
    trainer.train_step(buf); // warm up
    auto t0 = Clock::now();
    for (int i = 0; i < steps; ++i) trainer.train_step(buf);
    return ms_since(t0) / steps;
}

} // namespace

int main() {
    std::printf("openmp compiled: %s\n", nn::openmp_compiled() ? "yes" : "no");

    struct Shape { int m, k, n; int reps; };
    const Shape shapes[] = {{256, 64, 64, 200}, {256, 16, 64, 400}, {1024, 64, 64, 100}};
    std::printf("\n%-18s %12s %12s %8s\n", "matmul shape", "serial ms", "openmp ms", "match");
    for (const auto& s : shapes) {
        double sum_s = 0.0, sum_p = 0.0;
        double ser = bench_matmul(s.m, s.k, s.n, s.reps, nn::Backend::serial, sum_s);
        double par = bench_matmul(s.m, s.k, s.n, s.reps, nn::Backend::openmp, sum_p);
        char label[32];
        std::snprintf(label, sizeof label, "%dx%dx%d", s.m, s.k, s.n);
        std::printf("%-18s %12.3f %12.3f %8s\n", label, ser, par,
                    sum_s == sum_p ? "bit" : "DIFF");
    }

    std::printf("\n%-18s %12s\n", "train_step", "ms/step");
    double ser = bench_train_step(nn::Backend::serial, 30);
    std::printf("%-18s %12.3f\n", "serial", ser);
    double par = bench_train_step(nn::Backend::openmp, 30);
    std::printf("%-18s %12.3f\n", "openmp", par);

    nn::set_backend(nn::Backend::openmp);
    return 0;
}
