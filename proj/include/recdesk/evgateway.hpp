#pragma once

#include <cstdint>
#include <deque>
#include <optional>
#include <stdexcept>
#include <string>

#include "recdesk/errors.hpp"

namespace recdesk::evgateway {

// OAuth-ish errors; all carry the offending context in what().
struct AlreadyLinked : std::runtime_error { using std::runtime_error::runtime_error; };
struct InvalidCode : std::runtime_error { using std::runtime_error::runtime_error; };
struct NonceMismatch : std::runtime_error { using std::runtime_error::runtime_error; };
struct ConsentRefused : std::runtime_error { using std::runtime_error::runtime_error; };
struct RefreshFailed : std::runtime_error { using std::runtime_error::runtime_error; };
struct Unauthorized : std::runtime_error { using std::runtime_error::runtime_error; };

struct SimClock {
    double now = 0.0;
    void advance(double seconds) { now += seconds; }
};

enum class StateKind { Unlinked, PendingAuth, Linked, Expired };

const char* state_name(StateKind k);

struct TokenState {
    StateKind kind = StateKind::Unlinked;
    std::string building;
    std::string manufacturer;
    std::string auth_url; // PendingAuth
    std::string nonce;    // PendingAuth, single-use
    std::string access;   // Linked
    std::string refresh;  // Linked / Expired
    double expiry = 0.0;  // Linked
};

struct EvSnapshot {
    double ts = 0.0;
    double soc = 0.0;
    double charging_power_kw = 0.0;
    std::optional<double> expected_departure;
    bool stale = false;
};

// Scripted manufacturer endpoint. Responses are consumed in order; an empty
// script answers the happy path. All bodies cross as JSON text so the wire
// contract is exercised even in-process.
class MockServer {
public:
    enum class Behavior { ok, refuse_consent, invalid_code, revoke_refresh, timeout,
                          unauthorized };

    explicit MockServer(SimClock& clock, double token_lifetime_s = 3600.0);

    void script(Behavior b) { script_.push_back(b); }

    // Wire-level calls; return JSON bodies, throw the mapped errors.
    std::string token_exchange(const std::string& code, const std::string& state_nonce);
    std::string token_refresh(const std::string& refresh);
    // Returns nullopt on scripted timeout.
    std::optional<std::string> fetch_snapshot(const std::string& access);

    void set_vehicle(double soc, double power_kw, std::optional<double> departure);

    int token_calls() const { return token_calls_; }
    int snapshot_calls() const { return snapshot_calls_; }

    const std::string& last_access() const { return last_access_; }

private:
    Behavior next(Behavior fallback);
    SimClock* clock_;
    double lifetime_;
    std::deque<Behavior> script_;
    int serial_ = 0;
    int token_calls_ = 0;
    int snapshot_calls_ = 0;
    std::string valid_access_, valid_refresh_, last_access_;
    double access_expiry_ = 0.0;
    double soc_ = 0.5, power_kw_ = 0.0;
    std::optional<double> departure_;
};

class Gateway {
public:
    Gateway(MockServer& server, SimClock& clock, std::string building, std::string manufacturer,
            std::uint64_t seed = 0, double poll_period_s = 60.0);

    const TokenState& state() const { return state_; }

    TokenState begin_authorization();                            // AlreadyLinked
    TokenState exchange_code(const std::string& code,
                             const std::string& nonce);          // InvalidCode/NonceMismatch/ConsentRefused
    TokenState refresh_token();                                  // RefreshFailed
    EvSnapshot poll_snapshot();                                  // Unauthorized

    // Marks the token Expired once the clock passes expiry.
    void tick();

    void reset(); // back to Unlinked (unlink/test support)

private:
    TokenState apply_token_body(const std::string& body);
    MockServer* server_;
    SimClock* clock_;
    TokenState state_;
    std::uint64_t nonce_counter_ = 0;
    std::uint64_t seed_;
    double poll_period_;
    std::optional<EvSnapshot> last_snapshot_;
    double refresh_attempted_for_ = -1.0; // expiry value already tried once
};

} // namespace recdesk::evgateway
