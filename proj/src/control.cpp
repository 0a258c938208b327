#include "recdesk/control.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "recdesk/errors.hpp"
#include "recdesk/rng.hpp"

namespace recdesk::control {

using json = nlohmann::ordered_json;

std::uint64_t TrainConfig::hash() const {
    std::ostringstream ss;
    ss.precision(17);
    ss << gamma << '|' << tau << '|' << actor_lr << '|' << critic_lr << '|' << batch << '|'
       << sigma << '|' << sigma_decay << '|' << episodes << '|' << lambda_peak << '|' << lambda_ev
       << '|' << seed << '|' << update_every << '|' << replay_capacity;
    return fnv1a64(ss.str());
}

PolicyParams init_policy(const std::vector<std::string>& agent_ids, int obs_dim, int action_dim,
                         std::uint64_t seed) {
    PolicyParams p;
    p.n_agents = (int)agent_ids.size();
    p.obs_dim = obs_dim;
    p.action_dim = action_dim;
    p.agent_ids = agent_ids;
    const int joint = p.n_agents * (obs_dim + action_dim);
    // Hidden stacks keep He fan-in scaling; output heads start near zero.
    // A full-scale tanh head begins life saturated and cannot climb out of
    // its own flat region, and a full-scale critic head hands the actors
    // large confident gradients before it has seen anything.
    auto tiny_head = [&](nn::Mlp& net, const std::string& tag) {
        auto& last = net.layers.back();
        std::mt19937_64 eng(derive_seed(seed, tag));
        for (auto& w : last.W) w = uniform_range(eng, -3e-3, 3e-3);
        for (auto& b : last.b) b = uniform_range(eng, -3e-3, 3e-3);
    };
    for (int i = 0; i < p.n_agents; ++i) {
        AgentNets nets;
        nets.actor = nn::Mlp::make({obs_dim, 64, 64, action_dim}, nn::Act::relu, nn::Act::tanh,
                                   derive_seed(seed, "actor/" + agent_ids[i]));
        nets.critic = nn::Mlp::make({joint, 64, 64, 1}, nn::Act::relu, nn::Act::linear,
                                    derive_seed(seed, "critic/" + agent_ids[i]));
        tiny_head(nets.actor, "actor_head/" + agent_ids[i]);
        tiny_head(nets.critic, "critic_head/" + agent_ids[i]);
        nets.actor_target = nets.actor;
        nets.critic_target = nets.critic;
        p.agents.push_back(std::move(nets));
    }
    return p;
}

ReplayBuffer::ReplayBuffer(std::size_t capacity, std::uint64_t seed)
    : capacity_(capacity), eng_(derive_seed(seed, "replay")) {}

void ReplayBuffer::push(Transition t) {
    if (items_.size() < capacity_) {
        items_.push_back(std::move(t));
    } else {
        items_[head_] = std::move(t);
        head_ = (head_ + 1) % capacity_;
    }
}

std::vector<std::size_t> ReplayBuffer::sample_indices(std::size_t batch) {
    // With replacement, so any non-empty buffer can serve any batch size.
    if (items_.empty()) throw InsufficientData("replay buffer is empty");
    std::vector<std::size_t> idx(batch);
    for (auto& i : idx) i = (std::size_t)(uniform01(eng_) * (double)items_.size());
    return idx;
}

namespace {

// Net-input scaling for the canonical 14-feature observation layout. Two
// features are energies/counts an order of magnitude above the others
// (required EV energy in kWh, intervals to departure); fed raw they dominate
// He-initialized first layers and park the tanh heads in saturation before
// the first update. Constants of the layout, not learned state, applied
// identically at every network entry; observations keep canonical units
// everywhere else (audit log, replay storage, checkpoints).
constexpr int kCanonicalObsDim = 14;

void scale_obs_slice(double* o) {
    o[11] *= 1.0 / 20.0;
    o[12] *= 1.0 / 96.0;
}

std::vector<double> scaled_for_net(const std::vector<double>& obs, int obs_dim) {
    std::vector<double> s(obs);
    if (obs_dim == kCanonicalObsDim)
        for (std::size_t off = 0; off + kCanonicalObsDim <= s.size();
             off += kCanonicalObsDim)
            scale_obs_slice(s.data() + off);
    return s;
}

// Global-norm gradient cap. Bootstrapped critic targets drift once the actors
// start moving, and one oversized batch can rail the tanh heads for good.
constexpr double kMaxGradNorm = 1.0;

void clip_grads(nn::MlpGrads& g) {
    double sq = 0.0;
    for (const auto& lg : g.layers) {
        for (double w : lg.W) sq += w * w;
        for (double b : lg.b) sq += b * b;
    }
    const double norm = std::sqrt(sq);
    if (norm > kMaxGradNorm) nn::scale(g, kMaxGradNorm / norm);
}

} // namespace

twin::Action act(const PolicyParams& p, int agent, const std::vector<double>& obs, bool explore,
                 std::mt19937_64& noise_eng, double sigma, bool v2g) {
    if ((int)obs.size() != p.obs_dim)
        throw ShapeMismatch("observation dim " + std::to_string(obs.size()) + " != " +
                            std::to_string(p.obs_dim));
    const auto y = p.agents[agent].actor.forward(scaled_for_net(obs, p.obs_dim), 1);
    double bat = y[0];
    double ev = y[1];
    if (explore) {
        bat += sigma * normal01(noise_eng);
        ev += sigma * normal01(noise_eng);
    }
    twin::Action a;
    a.battery_cmd = std::clamp(bat, -1.0, 1.0);
    a.ev_cmd = std::clamp(ev, v2g ? -1.0 : 0.0, 1.0);
    return a;
}

twin::Action rbc_act(double load_kwh, double pv_kwh, bool ev_connected, double ev_soc,
                     double ev_target_soc, const scenario::BuildingSpec& spec, double dt_h) {
    twin::Action a;
    if (spec.charger && ev_connected && ev_soc < ev_target_soc) a.ev_cmd = 1.0;
    if (spec.battery) {
        const double full = spec.battery->rated_kw * dt_h;
        const double ev_draw = a.ev_cmd * (spec.charger ? spec.charger->rated_kw * dt_h : 0.0);
        const double surplus = pv_kwh - load_kwh - ev_draw;
        if (surplus > 0.0)
            a.battery_cmd = std::clamp(surplus / full, 0.0, 1.0);
        else if (surplus < 0.0)
            a.battery_cmd = -std::clamp(-surplus / full, 0.0, 1.0);
    }
    return a;
}

double reward(double cost_i, double community_kwh, int n_agents, double unmet_kwh_now,
              const TrainConfig& cfg) {
    const double imp = std::max(0.0, community_kwh);
    return -cost_i - cfg.lambda_peak * imp * imp / (double)n_agents -
           cfg.lambda_ev * unmet_kwh_now;
}

Trainer::Trainer(PolicyParams params, const TrainConfig& cfg)
    : params_(std::move(params)), cfg_(cfg) {
    params_.config_hash = cfg.hash();
    for (int i = 0; i < params_.n_agents; ++i) {
        nn::Adam a;
        a.lr = cfg.actor_lr;
        actor_opt_.push_back(a);
        nn::Adam c;
        c.lr = cfg.critic_lr;
        critic_opt_.push_back(c);
    }
}

StepLosses Trainer::train_step(ReplayBuffer& buffer) {
    const int B = cfg_.batch;
    const int N = params_.n_agents;
    const int od = params_.obs_dim;
    const int ad = params_.action_dim;
    const int joint = N * (od + ad);

    if (buffer.size() < (std::size_t)B)
        throw InsufficientData("replay buffer holds " + std::to_string(buffer.size()) +
                               " < batch " + std::to_string(B));
    const auto idx = buffer.sample_indices((std::size_t)B);

    // Batch-major copies of the sampled transitions.
    std::vector<double> obs((std::size_t)B * N * od), next_obs((std::size_t)B * N * od);
    std::vector<double> actions((std::size_t)B * N * ad);
    std::vector<double> rewards((std::size_t)B * N);
    std::vector<double> done(B);
    for (int s = 0; s < B; ++s) {
        const Transition& t = buffer.at(idx[s]);
        std::copy(t.obs.begin(), t.obs.end(), obs.begin() + (std::size_t)s * N * od);
        std::copy(t.next_obs.begin(), t.next_obs.end(),
                  next_obs.begin() + (std::size_t)s * N * od);
        std::copy(t.actions.begin(), t.actions.end(), actions.begin() + (std::size_t)s * N * ad);
        std::copy(t.rewards.begin(), t.rewards.end(), rewards.begin() + (std::size_t)s * N);
        done[s] = t.done ? 1.0 : 0.0;
    }
    obs = scaled_for_net(obs, od);
    next_obs = scaled_for_net(next_obs, od);

    // Target policy actions on the next observations, all agents at once.
    std::vector<double> next_actions((std::size_t)B * N * ad);
    for (int i = 0; i < N; ++i) {
        std::vector<double> oi((std::size_t)B * od);
        for (int s = 0; s < B; ++s)
            std::copy(next_obs.begin() + ((std::size_t)s * N + i) * od,
                      next_obs.begin() + ((std::size_t)s * N + i + 1) * od,
                      oi.begin() + (std::size_t)s * od);
        const auto ai = params_.agents[i].actor_target.forward(oi, B);
        for (int s = 0; s < B; ++s)
            std::copy(ai.begin() + (std::size_t)s * ad, ai.begin() + (std::size_t)(s + 1) * ad,
                      next_actions.begin() + ((std::size_t)s * N + i) * ad);
    }

    auto joint_input = [&](const std::vector<double>& o, const std::vector<double>& a) {
        std::vector<double> x((std::size_t)B * joint);
        for (int s = 0; s < B; ++s) {
            double* row = x.data() + (std::size_t)s * joint;
            std::copy(o.begin() + (std::size_t)s * N * od,
                      o.begin() + (std::size_t)(s + 1) * N * od, row);
            std::copy(a.begin() + (std::size_t)s * N * ad,
                      a.begin() + (std::size_t)(s + 1) * N * ad, row + N * od);
        }
        return x;
    };

    const auto x_now = joint_input(obs, actions);
    const auto x_next = joint_input(next_obs, next_actions);

    StepLosses losses;
    losses.critic_loss.resize(N);
    losses.actor_objective.resize(N);

    for (int i = 0; i < N; ++i) {
        AgentNets& nets = params_.agents[i];

        // Critic regression toward the bootstrapped target.
        const auto q_next = nets.critic_target.forward(x_next, B);
        std::vector<std::vector<double>> cache;
        nets.critic.forward(x_now, B, cache);
        const auto& q = cache.back();
        std::vector<double> dq(B);
        double loss = 0.0;
        for (int s = 0; s < B; ++s) {
            const double y = rewards[(std::size_t)s * N + i] +
                             cfg_.gamma * (1.0 - done[s]) * q_next[s];
            const double err = q[s] - y;
            loss += err * err;
            dq[s] = 2.0 * err / B;
        }
        losses.critic_loss[i] = loss / B;
        auto cgrads = nn::backward(nets.critic, cache, B, dq);
        clip_grads(cgrads);
        critic_opt_[i].step(nets.critic, cgrads);

        // Actor ascends Q with its own action column replaced by mu_i(o_i).
        std::vector<double> oi((std::size_t)B * od);
        for (int s = 0; s < B; ++s)
            std::copy(obs.begin() + ((std::size_t)s * N + i) * od,
                      obs.begin() + ((std::size_t)s * N + i + 1) * od,
                      oi.begin() + (std::size_t)s * od);
        std::vector<std::vector<double>> acache;
        nets.actor.forward(oi, B, acache);
        const auto& mu = acache.back();

        std::vector<double> x_actor = x_now;
        for (int s = 0; s < B; ++s)
            std::copy(mu.begin() + (std::size_t)s * ad, mu.begin() + (std::size_t)(s + 1) * ad,
                      x_actor.begin() + (std::size_t)s * joint + N * od + i * ad);

        std::vector<std::vector<double>> qcache;
        nets.critic.forward(x_actor, B, qcache);
        double obj = 0.0;
        for (int s = 0; s < B; ++s) obj += qcache.back()[s];
        losses.actor_objective[i] = obj / B;

        std::vector<double> dq_up(B, -1.0 / B); // minimize -mean(Q)
        const auto qgrads = nn::backward(nets.critic, qcache, B, dq_up);
        std::vector<double> dmu((std::size_t)B * ad);
        for (int s = 0; s < B; ++s)
            std::copy(qgrads.input.begin() + (std::size_t)s * joint + N * od + i * ad,
                      qgrads.input.begin() + (std::size_t)s * joint + N * od + (i + 1) * ad,
                      dmu.begin() + (std::size_t)s * ad);
        auto agrads = nn::backward(nets.actor, acache, B, dmu);
        clip_grads(agrads);
        actor_opt_[i].step(nets.actor, agrads);
    }

    for (int i = 0; i < N; ++i) {
        nn::soft_update(params_.agents[i].actor_target, params_.agents[i].actor, cfg_.tau);
        nn::soft_update(params_.agents[i].critic_target, params_.agents[i].critic, cfg_.tau);
    }
    return losses;
}

// ---------------------------------------------------------------------------
// checkpoint I/O

static const char kMagic[] = "RECDESKCKPT1";

static void append_net_shapes(json& arr, const nn::Mlp& net) {
    json layers = json::array();
    for (const auto& l : net.layers) layers.push_back({{"in", l.in}, {"out", l.out}});
    arr.push_back(std::move(layers));
}

static void write_doubles(std::ofstream& out, const std::vector<double>& v) {
    for (double d : v) {
        const auto bits = std::bit_cast<std::uint64_t>(d);
        char b[8];
        for (int i = 0; i < 8; ++i) b[i] = (char)((bits >> (8 * i)) & 0xff);
        out.write(b, 8);
    }
}

static void read_doubles(std::ifstream& in, std::vector<double>& v) {
    for (double& d : v) {
        unsigned char b[8];
        in.read((char*)b, 8);
        std::uint64_t bits = 0;
        for (int i = 0; i < 8; ++i) bits |= (std::uint64_t)b[i] << (8 * i);
        d = std::bit_cast<double>(bits);
    }
}

template <typename P, typename Fn> static void for_each_net(P& p, Fn&& fn) {
    for (auto& a : p.agents) {
        fn(a.actor);
        fn(a.critic);
        fn(a.actor_target);
        fn(a.critic_target);
    }
}

void save_checkpoint(const PolicyParams& p, const std::string& path) {
    json h;
    h["version"] = 1;
    h["n_agents"] = p.n_agents;
    h["obs_dim"] = p.obs_dim;
    h["action_dim"] = p.action_dim;
    h["agent_ids"] = p.agent_ids;
    h["config_hash"] = p.config_hash;
    json shapes = json::array();
    for (const auto& a : p.agents) {
        json nets = json::object();
        json actor = json::array(), critic = json::array();
        append_net_shapes(actor, a.actor);
        append_net_shapes(critic, a.critic);
        nets["actor"] = actor[0];
        nets["critic"] = critic[0];
        shapes.push_back(std::move(nets));
    }
    h["shapes"] = std::move(shapes);

    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw StorageError("cannot write checkpoint: " + path);
    out << kMagic << '\n' << h.dump() << '\n';
    for_each_net(p, [&](const nn::Mlp& net) {
        for (const auto& l : net.layers) {
            write_doubles(out, l.W);
            write_doubles(out, l.b);
        }
    });
    if (!out) throw StorageError("short checkpoint write: " + path);
}

PolicyParams load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw StorageError("cannot open checkpoint: " + path);
    std::string magic, header;
    if (!std::getline(in, magic) || magic != kMagic)
        throw ParseError("not a policy checkpoint: " + path);
    if (!std::getline(in, header)) throw ParseError("checkpoint header missing: " + path);
    json h;
    try {
        h = json::parse(header);
    } catch (const json::exception& e) {
        throw ParseError(std::string("checkpoint header: ") + e.what());
    }

    PolicyParams p;
    try {
        p.n_agents = h.at("n_agents").get<int>();
        p.obs_dim = h.at("obs_dim").get<int>();
        p.action_dim = h.at("action_dim").get<int>();
        p.agent_ids = h.at("agent_ids").get<std::vector<std::string>>();
        p.config_hash = h.at("config_hash").get<std::uint64_t>();
    } catch (const json::exception& e) {
        throw ParseError(std::string("checkpoint header: ") + e.what());
    }
    if ((int)p.agent_ids.size() != p.n_agents)
        throw ShapeMismatch("checkpoint agent id count mismatch");

    const auto& shapes = h.at("shapes");
    if ((int)shapes.size() != p.n_agents) throw ShapeMismatch("checkpoint shape table mismatch");

    auto build_net = [](const json& layer_shapes, nn::Act hidden, nn::Act output) {
        std::vector<int> dims;
        for (const auto& l : layer_shapes) {
            if (dims.empty()) dims.push_back(l.at("in").get<int>());
            else if (dims.back() != l.at("in").get<int>())
                throw ShapeMismatch("checkpoint layer dims disagree");
            dims.push_back(l.at("out").get<int>());
        }
        return nn::Mlp::make(dims, hidden, output, 0);
    };

    for (int i = 0; i < p.n_agents; ++i) {
        AgentNets nets;
        nets.actor = build_net(shapes[i].at("actor"), nn::Act::relu, nn::Act::tanh);
        nets.critic = build_net(shapes[i].at("critic"), nn::Act::relu, nn::Act::linear);
        if (nets.actor.input_dim() != p.obs_dim || nets.actor.output_dim() != p.action_dim)
            throw ShapeMismatch("actor shape disagrees with header dims");
        if (nets.critic.input_dim() != p.n_agents * (p.obs_dim + p.action_dim) ||
            nets.critic.output_dim() != 1)
            throw ShapeMismatch("critic shape disagrees with header dims");
        nets.actor_target = nets.actor;
        nets.critic_target = nets.critic;
        p.agents.push_back(std::move(nets));
    }

    for_each_net(p, [&](nn::Mlp& net) {
        for (auto& l : net.layers) {
            read_doubles(in, l.W);
            read_doubles(in, l.b);
        }
    });
    if (!in) throw ParseError("checkpoint truncated: " + path);
    char extra;
    if (in.read(&extra, 1))
        throw ParseError("checkpoint has trailing bytes: " + path);
    return p;
}

} // namespace recdesk::control
