#include "recdesk/audit.hpp"

#include <json.hpp>

#include "recdesk/errors.hpp"

namespace recdesk::audit {

using json = nlohmann::ordered_json;

static json action_json(const twin::Action& a) {
    return {{"battery_cmd", a.battery_cmd}, {"ev_cmd", a.ev_cmd}};
}

static twin::Action action_from(const json& j) {
    return {j.at("battery_cmd").get<double>(), j.at("ev_cmd").get<double>()};
}

std::string to_jsonl(const Record& r) {
    json j;
    j["step"] = r.step;
    j["ts"] = r.ts;
    j["building"] = r.building;
    j["observation"] = r.observation;
    j["proposed_action"] = action_json(r.proposed);
    j["vetted_action"] = action_json(r.vetted);
    json iv = json::array();
    for (const auto& i : r.interventions)
        iv.push_back({{"step", i.step},
                      {"building", i.building},
                      {"reason", supervisor::reason_name(i.reason)},
                      {"proposed", action_json(i.proposed)},
                      {"applied", action_json(i.applied)}});
    j["interventions"] = std::move(iv);
    return j.dump();
}

static supervisor::Reason reason_from(const std::string& name) {
    using supervisor::Reason;
    for (Reason r : {Reason::overrated_power, Reason::soc_bound, Reason::ev_reserve,
                     Reason::infeasible_target, Reason::stale_data, Reason::invalid_value})
        if (name == supervisor::reason_name(r)) return r;
    throw ParseError("unknown intervention reason: " + name);
}

Record record_from_json(const std::string& line) {
    json j;
    try {
        j = json::parse(line);
    } catch (const json::exception& e) {
        throw ParseError(std::string("audit record: ") + e.what());
    }
    try {
        Record r;
        r.step = j.at("step").get<int>();
        r.ts = j.at("ts").get<std::string>();
        r.building = j.at("building").get<std::string>();
        r.observation = j.at("observation").get<std::vector<double>>();
        r.proposed = action_from(j.at("proposed_action"));
        r.vetted = action_from(j.at("vetted_action"));
        for (const auto& i : j.at("interventions")) {
            supervisor::Intervention iv;
            iv.step = i.at("step").get<int>();
            iv.building = i.at("building").get<std::string>();
            iv.reason = reason_from(i.at("reason").get<std::string>());
            iv.proposed = action_from(i.at("proposed"));
            iv.applied = action_from(i.at("applied"));
            r.interventions.push_back(std::move(iv));
        }
        return r;
    } catch (const json::exception& e) {
        throw ParseError(std::string("audit record: ") + e.what());
    }
}

Writer::Writer(const std::string& path) : out_(path, std::ios::app), path_(path) {
    if (!out_) throw StorageError("cannot open audit log: " + path);
}

void Writer::append(const Record& r) {
    if (r.step < last_step_)
        throw StorageError("audit records must not go back in time (step " +
                           std::to_string(r.step) + " after " + std::to_string(last_step_) + ")");
    out_ << to_jsonl(r) << '\n';
    if (!out_) throw StorageError("audit write failed: " + path_);
    last_step_ = r.step;
    ++count_;
}

void Writer::flush() {
    out_.flush();
    if (!out_) throw StorageError("audit flush failed: " + path_);
}

std::vector<Record> read_log(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw StorageError("cannot open audit log: " + path);
    std::vector<Record> out;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        out.push_back(record_from_json(line));
    }
    return out;
}

} // namespace recdesk::audit
