#include "recdesk/evgateway.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include <json.hpp>

#include "recdesk/rng.hpp"

namespace recdesk::evgateway {

using json = nlohmann::ordered_json;

const char* state_name(StateKind k) {
    switch (k) {
        case StateKind::Unlinked: return "unlinked";
        case StateKind::PendingAuth: return "pending_auth";
        case StateKind::Linked: return "linked";
        case StateKind::Expired: return "expired";
    }
    return "?";
}

// ---------------------------------------------------------------- MockServer

MockServer::MockServer(SimClock& clock, double token_lifetime_s)
    : clock_(&clock), lifetime_(token_lifetime_s) {}

MockServer::Behavior MockServer::next(Behavior fallback) {
    if (script_.empty()) return fallback;
    Behavior b = script_.front();
    script_.pop_front();
    return b;
}

std::string MockServer::token_exchange(const std::string& code, const std::string&) {
    ++token_calls_;
    Behavior b = next(Behavior::ok);
    if (b == Behavior::refuse_consent) throw ConsentRefused("user declined consent at provider");
    if (b == Behavior::invalid_code || code.empty())
        throw InvalidCode("authorization code rejected: '" + code + "'");
    ++serial_;
    valid_access_ = "acc-" + std::to_string(serial_);
    valid_refresh_ = "ref-" + std::to_string(serial_);
    access_expiry_ = clock_->now + lifetime_;
    json j = {{"access", valid_access_}, {"refresh", valid_refresh_}, {"expires_in_s", lifetime_}};
    return j.dump();
}

std::string MockServer::token_refresh(const std::string& refresh) {
    ++token_calls_;
    Behavior b = next(Behavior::ok);
    if (b == Behavior::revoke_refresh || refresh != valid_refresh_)
        throw RefreshFailed("refresh token revoked or unknown");
    ++serial_;
    valid_access_ = "acc-" + std::to_string(serial_);
    valid_refresh_ = "ref-" + std::to_string(serial_);
    access_expiry_ = clock_->now + lifetime_;
    json j = {{"access", valid_access_}, {"refresh", valid_refresh_}, {"expires_in_s", lifetime_}};
    return j.dump();
}

std::optional<std::string> MockServer::fetch_snapshot(const std::string& access) {
    ++snapshot_calls_;
    last_access_ = access;
    Behavior b = next(Behavior::ok);
    if (b == Behavior::timeout) return std::nullopt;
    if (b == Behavior::unauthorized || access != valid_access_ || clock_->now > access_expiry_)
        throw Unauthorized("access token not accepted");
    json j;
    j["soc"] = soc_;
    j["charging_power_kw"] = power_kw_;
    if (departure_) j["expected_departure"] = *departure_; else j["expected_departure"] = nullptr;
    return j.dump();
}

void MockServer::set_vehicle(double soc, double power_kw, std::optional<double> departure) {
    soc_ = soc;
    power_kw_ = power_kw;
    departure_ = departure;
}

// ------------------------------------------------------------------ Gateway

Gateway::Gateway(MockServer& server, SimClock& clock, std::string building,
                 std::string manufacturer, std::uint64_t seed, double poll_period_s)
    : server_(&server), clock_(&clock), seed_(seed), poll_period_(poll_period_s) {
    state_.building = std::move(building);
    state_.manufacturer = std::move(manufacturer);
}

TokenState Gateway::begin_authorization() {
    if (state_.kind == StateKind::Linked || state_.kind == StateKind::Expired)
        throw AlreadyLinked(state_.building + " already linked to " + state_.manufacturer);
    // Restarting from PendingAuth just mints a fresh nonce; the old one dies.
    std::uint64_t h = fnv1a64(state_.building + "|" + state_.manufacturer + "|" +
                              std::to_string(seed_) + "|" + std::to_string(nonce_counter_++));
    std::ostringstream nonce;
    nonce << std::hex << h;
    state_.nonce = nonce.str();
    state_.auth_url = "mock://auth/" + state_.manufacturer +
                      "/authorize?building=" + state_.building + "&state=" + state_.nonce;
    state_.kind = StateKind::PendingAuth;
    state_.access.clear();
    state_.refresh.clear();
    return state_;
}

TokenState Gateway::apply_token_body(const std::string& body) {
    json j = json::parse(body);
    state_.access = j.at("access").get<std::string>();
    state_.refresh = j.at("refresh").get<std::string>();
    state_.expiry = clock_->now + j.at("expires_in_s").get<double>();
    state_.kind = StateKind::Linked;
    return state_;
}

TokenState Gateway::exchange_code(const std::string& code, const std::string& nonce) {
    if (state_.kind == StateKind::Linked || state_.kind == StateKind::Expired)
        throw AlreadyLinked("exchange after link for " + state_.building);
    if (state_.kind != StateKind::PendingAuth)
        throw NonceMismatch("no authorization in flight");
    if (nonce != state_.nonce)
        throw NonceMismatch("state nonce does not match the pending authorization");
    // Correct nonce: consumed now, success or not.
    state_.nonce.clear();
    try {
        std::string body = server_->token_exchange(code, nonce);
        return apply_token_body(body);
    } catch (const std::exception&) {
        state_.kind = StateKind::Unlinked;
        state_.auth_url.clear();
        throw;
    }
}

TokenState Gateway::refresh_token() {
    if (state_.refresh.empty())
        throw RefreshFailed("no refresh token held for " + state_.building);
    if (state_.kind == StateKind::Linked && clock_->now < state_.expiry - poll_period_)
        return state_; // far from expiry: nothing to do
    if (state_.expiry == refresh_attempted_for_)
        throw RefreshFailed("refresh already attempted for this expiry");
    refresh_attempted_for_ = state_.expiry;
    try {
        std::string body = server_->token_refresh(state_.refresh);
        return apply_token_body(body);
    } catch (const std::exception&) {
        state_ = TokenState{StateKind::Unlinked, state_.building, state_.manufacturer,
                            "", "", "", "", 0.0};
        throw;
    }
}

void Gateway::tick() {
    if (state_.kind == StateKind::Linked && clock_->now >= state_.expiry) {
        state_.kind = StateKind::Expired;
        state_.access.clear();
    }
}

void Gateway::reset() {
    state_ = TokenState{StateKind::Unlinked, state_.building, state_.manufacturer,
                        "", "", "", "", 0.0};
    last_snapshot_.reset();
    refresh_attempted_for_ = -1.0;
}

EvSnapshot Gateway::poll_snapshot() {
    if (state_.kind == StateKind::Unlinked || state_.kind == StateKind::PendingAuth)
        throw Unauthorized("vehicle not linked for " + state_.building);
    if (state_.kind == StateKind::Expired || clock_->now >= state_.expiry)
        refresh_token(); // proactive: known-dead access never hits the wire
    bool refreshed = false;
    for (;;) {
        std::optional<std::string> body;
        try {
            body = server_->fetch_snapshot(state_.access);
        } catch (const Unauthorized&) {
            if (refreshed) throw; // one refresh per poll, then give up
            refreshed = true;
            // Server-side surprise: the provider no longer honors this access
            // token whatever its local expiry says. Demote it so the refresh
            // cannot take the young-token shortcut, and clear the storm guard
            // because this is a genuinely new expiry event.
            state_.kind = StateKind::Expired;
            state_.access.clear();
            refresh_attempted_for_ = -1.0;
            refresh_token();
            continue;
        }
        if (!body) {
            // Timed out: burn the timeout budget and degrade to the last snapshot.
            clock_->advance(2.0);
            EvSnapshot out = last_snapshot_.value_or(EvSnapshot{});
            out.stale = true;
            return out;
        }
        json j = json::parse(*body);
        EvSnapshot snap;
        snap.ts = clock_->now;
        snap.soc = std::clamp(j.at("soc").get<double>(), 0.0, 1.0);
        snap.charging_power_kw = j.at("charging_power_kw").get<double>();
        if (!j.at("expected_departure").is_null())
            snap.expected_departure = j.at("expected_departure").get<double>();
        snap.stale = (clock_->now - snap.ts) > 2.0 * poll_period_;
        last_snapshot_ = snap;
        return snap;
    }
}

} // namespace recdesk::evgateway
