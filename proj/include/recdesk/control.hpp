#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "recdesk/nn.hpp"
#include "recdesk/scenario.hpp"
#include "recdesk/telemetry.hpp"
#include "recdesk/twin.hpp"

namespace recdesk::control {

struct TrainConfig {
    double gamma = 0.99;
    double tau = 0.005;
    double actor_lr = 1e-4;
    double critic_lr = 1e-3;
    int batch = 256;
    double sigma = 0.3;        // exploration noise at episode 0
    double sigma_decay = 0.995; // per episode
    int episodes = 15;
    double lambda_peak = 0.01;
    double lambda_ev = 1.0;
    std::uint64_t seed = 42;
    int update_every = 8; // env steps per gradient step
    std::size_t replay_capacity = 100000;

    std::uint64_t hash() const;
    bool operator==(const TrainConfig&) const = default;
};

struct AgentNets {
    nn::Mlp actor, critic;
    nn::Mlp actor_target, critic_target;
};

struct PolicyParams {
    int n_agents = 0;
    int obs_dim = 0;
    int action_dim = 2;
    std::vector<std::string> agent_ids;
    std::vector<AgentNets> agents;
    std::uint64_t config_hash = 0;
};

PolicyParams init_policy(const std::vector<std::string>& agent_ids, int obs_dim, int action_dim,
                         std::uint64_t seed);

struct Transition {
    std::vector<double> obs;      // n_agents * obs_dim
    std::vector<double> actions;  // n_agents * action_dim
    std::vector<double> rewards;  // n_agents
    std::vector<double> next_obs; // n_agents * obs_dim
    bool done = false;
};

class ReplayBuffer {
public:
    ReplayBuffer(std::size_t capacity, std::uint64_t seed);
    void push(Transition t);
    std::size_t size() const { return items_.size(); }
    // Uniform with replacement; the index stream is a pure function of the
    // seed and call history.
    std::vector<std::size_t> sample_indices(std::size_t batch); // throws InsufficientData
    const Transition& at(std::size_t i) const { return items_[i]; }

private:
    std::size_t capacity_;
    std::size_t head_ = 0;
    std::vector<Transition> items_;
    std::mt19937_64 eng_;
};

// Deterministic actor forward for one agent; explore adds clipped Gaussian
// noise from the caller's stream. v2g widens the EV command range.
twin::Action act(const PolicyParams& p, int agent, const std::vector<double>& obs, bool explore,
                 std::mt19937_64& noise_eng, double sigma, bool v2g);

// Conservative fallback rules: EV at full power while below target; battery
// absorbs PV surplus and covers residual deficit, never exporting.
twin::Action rbc_act(double load_kwh, double pv_kwh, bool ev_connected, double ev_soc,
                     double ev_target_soc, const scenario::BuildingSpec& spec, double dt_h);

double reward(double cost_i, double community_kwh, int n_agents, double unmet_kwh_now,
              const TrainConfig& cfg);

struct StepLosses {
    std::vector<double> critic_loss;
    std::vector<double> actor_objective; // mean Q under the online actor
};

class Trainer {
public:
    Trainer(PolicyParams params, const TrainConfig& cfg);

    StepLosses train_step(ReplayBuffer& buffer); // throws InsufficientData

    const PolicyParams& params() const { return params_; }
    PolicyParams& params() { return params_; }
    const TrainConfig& config() const { return cfg_; }

private:
    PolicyParams params_;
    TrainConfig cfg_;
    std::vector<nn::Adam> actor_opt_, critic_opt_;
};

// Checkpoint: JSON header line with shapes and ids, then little-endian
// IEEE-754 doubles for every layer of every net. Loading validates shapes.
void save_checkpoint(const PolicyParams& p, const std::string& path);
PolicyParams load_checkpoint(const std::string& path); // ParseError / ShapeMismatch

} // namespace recdesk::control
