#include <doctest.h>

#include <string>

#include "recdesk/evgateway.hpp"

using namespace recdesk::evgateway;

namespace {

struct Rig {
    SimClock clock;
    MockServer server{clock};
    Gateway gw{server, clock, "b1", "acme"};

    // Drive the gateway to Linked and return the access token's expiry.
    double link() {
        auto pending = gw.begin_authorization();
        return gw.exchange_code("code-1", pending.nonce).expiry;
    }
};

} // namespace

TEST_SUITE("evgateway") {

TEST_CASE("authorization walks unlinked -> pending -> linked") {
    Rig r;
    CHECK(r.gw.state().kind == StateKind::Unlinked);

    auto pending = r.gw.begin_authorization();
    CHECK(pending.kind == StateKind::PendingAuth);
    CHECK_FALSE(pending.nonce.empty());
    CHECK(pending.auth_url.find(pending.nonce) != std::string::npos);
    CHECK(pending.auth_url.find("acme") != std::string::npos);

    auto linked = r.gw.exchange_code("code-1", pending.nonce);
    CHECK(linked.kind == StateKind::Linked);
    CHECK(linked.access == "acc-1");
    CHECK(linked.refresh == "ref-1");
    CHECK(linked.expiry == 3600.0);
    CHECK(linked.nonce.empty()); // single use, gone on success
}

TEST_CASE("nonces are deterministic per identity and fresh per attempt") {
    SimClock clock;
    MockServer server(clock);
    Gateway a(server, clock, "b1", "acme", 7);
    Gateway b(server, clock, "b1", "acme", 7);
    Gateway c(server, clock, "b1", "acme", 8);
    auto na = a.begin_authorization().nonce;
    CHECK(na == b.begin_authorization().nonce);
    CHECK(na != c.begin_authorization().nonce);

    // Restarting the flow invalidates the first nonce.
    auto nb = a.begin_authorization().nonce;
    CHECK(nb != na);
    CHECK_THROWS_AS(a.exchange_code("code-1", na), NonceMismatch);
    CHECK(a.state().kind == StateKind::PendingAuth);
    CHECK(a.exchange_code("code-1", nb).kind == StateKind::Linked);
}

TEST_CASE("linking twice is refused") {
    Rig r;
    r.link();
    CHECK_THROWS_AS(r.gw.begin_authorization(), AlreadyLinked);
    CHECK_THROWS_AS(r.gw.exchange_code("code-2", "x"), AlreadyLinked);

    r.clock.advance(4000.0);
    r.gw.tick();
    CHECK(r.gw.state().kind == StateKind::Expired);
    CHECK_THROWS_AS(r.gw.begin_authorization(), AlreadyLinked); // refresh, don't relink
}

TEST_CASE("a wrong nonce leaves the flow intact") {
    Rig r;
    auto pending = r.gw.begin_authorization();
    CHECK_THROWS_AS(r.gw.exchange_code("code-1", "bogus"), NonceMismatch);
    CHECK(r.gw.state().kind == StateKind::PendingAuth);
    // The genuine nonce still works afterwards.
    CHECK(r.gw.exchange_code("code-1", pending.nonce).kind == StateKind::Linked);
}

TEST_CASE("exchange without a pending flow is a mismatch") {
    Rig r;
    CHECK_THROWS_AS(r.gw.exchange_code("code-1", "any"), NonceMismatch);
}

TEST_CASE("declined consent burns the nonce and unlinks") {
    Rig r;
    auto pending = r.gw.begin_authorization();
    r.server.script(MockServer::Behavior::refuse_consent);
    CHECK_THROWS_AS(r.gw.exchange_code("code-1", pending.nonce), ConsentRefused);
    CHECK(r.gw.state().kind == StateKind::Unlinked);
    CHECK(r.gw.state().auth_url.empty());
    // The consumed nonce cannot be replayed.
    CHECK_THROWS_AS(r.gw.exchange_code("code-1", pending.nonce), NonceMismatch);
}

TEST_CASE("a rejected code unlinks too") {
    Rig r;
    auto pending = r.gw.begin_authorization();
    r.server.script(MockServer::Behavior::invalid_code);
    CHECK_THROWS_AS(r.gw.exchange_code("code-1", pending.nonce), InvalidCode);
    CHECK(r.gw.state().kind == StateKind::Unlinked);

    // Empty codes are rejected by the provider without scripting.
    auto again = r.gw.begin_authorization();
    CHECK_THROWS_AS(r.gw.exchange_code("", again.nonce), InvalidCode);
}

TEST_CASE("refresh is a no-op while the token is young") {
    Rig r;
    r.link();
    const int calls = r.server.token_calls();
    auto st = r.gw.refresh_token();
    CHECK(st.access == "acc-1");
    CHECK(r.server.token_calls() == calls); // never touched the wire
}

TEST_CASE("refresh near expiry rotates both tokens") {
    Rig r;
    double expiry = r.link();
    r.clock.advance(3540.0); // exactly poll_period before expiry
    auto st = r.gw.refresh_token();
    CHECK(st.kind == StateKind::Linked);
    CHECK(st.access == "acc-2");
    CHECK(st.refresh == "ref-2");
    CHECK(st.expiry == r.clock.now + 3600.0);
    CHECK(st.expiry > expiry);
}

TEST_CASE("refresh without a token fails fast") {
    Rig r;
    CHECK_THROWS_AS(r.gw.refresh_token(), RefreshFailed);
    r.gw.begin_authorization();
    CHECK_THROWS_AS(r.gw.refresh_token(), RefreshFailed);
}

TEST_CASE("a revoked refresh token drops the link") {
    Rig r;
    r.link();
    r.clock.advance(3599.0);
    r.server.script(MockServer::Behavior::revoke_refresh);
    CHECK_THROWS_AS(r.gw.refresh_token(), RefreshFailed);
    CHECK(r.gw.state().kind == StateKind::Unlinked);
    CHECK(r.gw.state().refresh.empty());
    CHECK_THROWS_AS(r.gw.refresh_token(), RefreshFailed); // nothing left to retry with
}

TEST_CASE("tick expires the token exactly at the deadline") {
    Rig r;
    double expiry = r.link();
    r.clock.advance(3599.9);
    r.gw.tick();
    CHECK(r.gw.state().kind == StateKind::Linked);
    r.clock.now = expiry;
    r.gw.tick();
    CHECK(r.gw.state().kind == StateKind::Expired);
    CHECK(r.gw.state().access.empty());
    CHECK_FALSE(r.gw.state().refresh.empty()); // kept for the recovery path
}

TEST_CASE("polling returns the live vehicle state") {
    Rig r;
    r.link();
    r.server.set_vehicle(0.62, 7.4, 5400.0);
    r.clock.advance(10.0);
    auto snap = r.gw.poll_snapshot();
    CHECK(snap.ts == 10.0);
    CHECK(snap.soc == 0.62);
    CHECK(snap.charging_power_kw == 7.4);
    REQUIRE(snap.expected_departure.has_value());
    CHECK(*snap.expected_departure == 5400.0);
    CHECK_FALSE(snap.stale);
    CHECK(r.server.last_access() == "acc-1");

    // Out-of-range SoC from the provider is clamped; null departure passes through.
    r.server.set_vehicle(1.7, 0.0, std::nullopt);
    auto clamped = r.gw.poll_snapshot();
    CHECK(clamped.soc == 1.0);
    CHECK_FALSE(clamped.expected_departure.has_value());
}

TEST_CASE("polling unlinked is unauthorized") {
    Rig r;
    CHECK_THROWS_AS(r.gw.poll_snapshot(), Unauthorized);
    r.gw.begin_authorization();
    CHECK_THROWS_AS(r.gw.poll_snapshot(), Unauthorized);
}

TEST_CASE("an expired token is refreshed before the snapshot call") {
    Rig r;
    r.link();
    r.clock.advance(3700.0);
    r.gw.tick();
    REQUIRE(r.gw.state().kind == StateKind::Expired);
    const int tok = r.server.token_calls();
    const int snaps = r.server.snapshot_calls();
    auto snap = r.gw.poll_snapshot();
    CHECK(r.server.token_calls() == tok + 1);   // one refresh
    CHECK(r.server.snapshot_calls() == snaps + 1); // one fetch, no blind 401 first
    CHECK(r.gw.state().kind == StateKind::Linked);
    CHECK_FALSE(snap.stale);
}

TEST_CASE("clock past expiry triggers the same proactive refresh without tick") {
    Rig r;
    r.link();
    r.clock.advance(3600.0);
    const int tok = r.server.token_calls();
    r.gw.poll_snapshot();
    CHECK(r.server.token_calls() == tok + 1);
    CHECK(r.gw.state().access == "acc-2");
}

TEST_CASE("a surprise 401 earns one refresh and one retry") {
    Rig r;
    r.link();
    r.server.set_vehicle(0.4, 0.0, std::nullopt);
    const int tok = r.server.token_calls();
    const int snaps = r.server.snapshot_calls();

    SUBCASE("retry succeeds") {
        r.server.script(MockServer::Behavior::unauthorized);
        auto snap = r.gw.poll_snapshot();
        CHECK(snap.soc == 0.4);
        CHECK(r.server.token_calls() == tok + 1);
        CHECK(r.server.snapshot_calls() == snaps + 2);
    }
    SUBCASE("a second 401 gives up") {
        // The script queue feeds every endpoint, so the refresh between the
        // two failing fetches needs its own entry.
        r.server.script(MockServer::Behavior::unauthorized);
        r.server.script(MockServer::Behavior::ok);
        r.server.script(MockServer::Behavior::unauthorized);
        CHECK_THROWS_AS(r.gw.poll_snapshot(), Unauthorized);
        CHECK(r.server.token_calls() == tok + 1);
        CHECK(r.server.snapshot_calls() == snaps + 2);
    }
    SUBCASE("revocation during the retry surfaces as RefreshFailed") {
        r.server.script(MockServer::Behavior::unauthorized);
        r.server.script(MockServer::Behavior::revoke_refresh);
        CHECK_THROWS_AS(r.gw.poll_snapshot(), RefreshFailed);
        CHECK(r.gw.state().kind == StateKind::Unlinked);
    }
}

TEST_CASE("timeouts degrade to the previous snapshot") {
    Rig r;
    r.link();
    r.server.set_vehicle(0.55, 3.7, std::nullopt);
    auto first = r.gw.poll_snapshot();
    REQUIRE_FALSE(first.stale);

    r.server.set_vehicle(0.70, 0.0, std::nullopt); // never seen through the timeout
    r.server.script(MockServer::Behavior::timeout);
    const double before = r.clock.now;
    auto snap = r.gw.poll_snapshot();
    CHECK(r.clock.now == before + 2.0); // the wait is charged to the clock
    CHECK(snap.stale);
    CHECK(snap.soc == 0.55);
    CHECK(snap.charging_power_kw == 3.7);
    CHECK(snap.ts == first.ts);

    // The next clean poll recovers the live value.
    auto clean = r.gw.poll_snapshot();
    CHECK_FALSE(clean.stale);
    CHECK(clean.soc == 0.70);
}

TEST_CASE("a timeout on the very first poll yields an empty stale snapshot") {
    Rig r;
    r.link();
    r.server.script(MockServer::Behavior::timeout);
    auto snap = r.gw.poll_snapshot();
    CHECK(snap.stale);
    CHECK(snap.soc == 0.0);
    CHECK(snap.ts == 0.0);
}

TEST_CASE("snapshot timestamps never run backwards") {
    Rig r;
    r.link();
    double last = -1.0;
    for (int i = 0; i < 5; ++i) {
        if (i == 2) r.server.script(MockServer::Behavior::timeout);
        auto snap = r.gw.poll_snapshot();
        CHECK(snap.ts >= 0.0);
        CHECK(snap.ts <= r.clock.now);
        CHECK(snap.ts >= (i == 2 ? 0.0 : last)); // stale replays keep the old stamp
        if (!snap.stale) last = snap.ts;
        r.clock.advance(60.0);
    }
}

TEST_CASE("reset returns to a clean slate") {
    Rig r;
    r.link();
    r.gw.reset();
    CHECK(r.gw.state().kind == StateKind::Unlinked);
    CHECK(r.gw.state().access.empty());
    CHECK(r.gw.state().refresh.empty());
    CHECK(r.gw.state().building == "b1"); // identity survives
    // The full flow works again from scratch.
    auto pending = r.gw.begin_authorization();
    CHECK(r.gw.exchange_code("code-2", pending.nonce).kind == StateKind::Linked);
}

} // TEST_SUITE
