#include <cmath>
#include <regex>
#include <sstream>

#include "doctest.h"
#include "dapp/harness.hpp"
#include "dapp/scenario.hpp"
#include "dapp/simnet.hpp"

using namespace dapp;
using protocol::Message;
using protocol::MessageKind;
using protocol::ServiceRecord;

namespace {

// Field widths of the control-plane packets.
constexpr int kHeader = 80, kDcId = 12, kServiceId = 14, kClassId = 4, kBeta = 5, kDeficit = 16;

// Independent field-sum: the record carries its id, class, the part of the
// feasible path still relevant to the receiver, plus origin and top ids.
std::int64_t field_sum(const Message& m, const Topology& t) {
    const int lvl = t.level(m.receiver);
    auto path_fields = [&](const ServiceRecord& r, bool up) {
        int k = 0;
        for (DatacenterId s : r.feasible) k += up ? t.level(s) >= lvl : t.level(s) <= lvl;
        return (k + 2) * kDcId;
    };
    std::int64_t b = kHeader;
    switch (m.kind) {
        case MessageKind::Sfs:
        case MessageKind::Pu:
            for (const auto& r : m.not_assigned) b += kServiceId + kClassId + path_fields(r, true);
            for (const auto& r : m.push_up) b += kServiceId + kClassId + path_fields(r, true);
            break;
        case MessageKind::PuAck:
            for (std::size_t i = 0; i < m.acks.size(); ++i) b += kServiceId + 1;
            break;
        case MessageKind::PdRequest:
            b += kDcId + kDeficit;
            for (const auto& r : m.push_down) b += kServiceId + kClassId + path_fields(r, false) + kBeta;
            break;
        case MessageKind::PdAck:
            b += kDcId + kDeficit;
            for (std::size_t i = 0; i < m.acks.size(); ++i) b += kServiceId + 1;
            break;
    }
    return b;
}

ServiceRecord rec(RequestId id, std::vector<DatacenterId> feasible) {
    ServiceRecord r;
    r.request = id;
    r.feasible = std::move(feasible);
    return r;
}

// Chain of `levels` datacenters with a single PoA; only the leaf is too small.
Scenario chain(int levels) {
    Scenario sc;
    sc.name = "chain";
    sc.shape.levels = levels;
    sc.shape.arity = 1;
    sc.shape.leaf_capacity = 10;
    sc.shape.capacity_overrides[static_cast<DatacenterId>(levels - 1)] = 1;
    sc.system.topology = build_tree(sc.shape);
    ServiceClass c;
    c.name = "svc";
    c.latency_constraint = 1;
    for (int l = 0; l < levels; ++l) {
        c.cpu_demand[l] = 2;
        c.placement_cost[l] = 10 * (levels - l);
    }
    sc.system.classes = {c};
    sc.rtt_by_level.assign(static_cast<std::size_t>(levels), 0.001);
    return sc;
}

struct SendLine {
    SimTime sent = 0, arrive = 0;
    std::int64_t bits = 0;
};

SimTime parse_time(const std::string& s) {
    auto dot = s.find('.');
    return std::stoll(s.substr(0, dot)) * kNanosPerSecond + std::stoll(s.substr(dot + 1));
}

std::vector<SendLine> sends(const std::vector<std::string>& log) {
    static const std::regex re(R"(^(\d+\.\d{9}) send \S+ s\d+->s\d+ bits=(\d+) arrive=(\d+\.\d{9})$)");
    std::vector<SendLine> out;
    for (const auto& l : log) {
        std::smatch m;
        if (std::regex_match(l, m, re)) out.push_back({parse_time(m[1]), parse_time(m[3]), std::stoll(m[2])});
    }
    return out;
}

}  // namespace

TEST_CASE("message sizes on the declared layout") {
    const Topology t = build_tree(4, 1, 1);  // s3 leaf .. s0 at level 3
    Message ack;
    ack.kind = MessageKind::PuAck;
    CHECK(simnet::message_bits(ack, t) == 80);

    Message sfs;
    sfs.kind = MessageKind::Sfs;
    sfs.sender = 3;
    sfs.receiver = 2;
    sfs.not_assigned = {rec(1, {3, 2, 1, 0})};
    CHECK(simnet::message_bits(sfs, t) == 158);

    Message pd;
    pd.kind = MessageKind::PdRequest;
    pd.sender = 2;
    pd.receiver = 3;
    pd.push_down = {rec(1, {3, 2})};
    CHECK(simnet::message_bits(pd, t) == 167);

    ack.acks = {{1, true}};
    CHECK(simnet::message_bits(ack, t) == 95);
}

TEST_CASE("message sizes match the field-sum on random messages") {
    const Topology t = build_tree(5, 2, 1);
    std::mt19937_64 rng(11);
    auto pick = [&](std::size_t n) { return std::uniform_int_distribution<std::size_t>(0, n - 1)(rng); };
    for (int i = 0; i < 500; ++i) {
        Message m;
        m.kind = static_cast<MessageKind>(pick(5));
        const DatacenterId leaf = t.leaves()[pick(t.leaves().size())];
        auto path = t.path_to_root(leaf);
        path.resize(1 + pick(path.size()));
        const DatacenterId at = path[pick(path.size())];
        m.sender = at;
        m.receiver = at == 0 ? t.children(0)[0] : *t.parent(at);
        const std::size_t n = pick(6);
        for (std::size_t k = 0; k < n; ++k) {
            auto r = rec(static_cast<RequestId>(k), path);
            m.not_assigned.push_back(r);
            if (k % 2) m.push_up.push_back(r);
            m.push_down.push_back(r);
            m.acks.push_back({r.request, k % 2 == 0});
        }
        if (m.kind != MessageKind::Sfs && m.kind != MessageKind::Pu) {
            m.not_assigned.clear();
            m.push_up.clear();
        }
        if (m.kind != MessageKind::PdRequest) m.push_down.clear();
        CHECK(simnet::message_bits(m, t) == field_sum(m, t));
    }
}

TEST_CASE("transmission delay rounds up to whole nanoseconds") {
    LinkParams link;
    CHECK(simnet::transmission_delay(158, link) == 15'800);
    CHECK(simnet::transmission_delay(0, link) == 0);
    link.control_capacity_bps = 3;
    CHECK(simnet::transmission_delay(1, link) == 333'333'334);
    link.control_capacity_bps = 0;
    CHECK_THROWS_AS(simnet::transmission_delay(1, link), ModelError);
}

TEST_CASE("overhead divides total bytes by injected requests") {
    simnet::RunReport r;
    r.bits = 158 + 95;
    r.injected = 1;
    CHECK(r.overhead_bytes_per_request() == doctest::Approx(31.625));
}

TEST_CASE("a request the leaf cannot host costs one record to the parent") {
    Scenario sc = chain(2);
    sc.events = {{0, 0, 0, sc.system.topology.leaves()[0], false}};
    auto res = harness::run_algorithm(sc, "dapp");
    REQUIRE(res.placed_all());
    CHECK(res.final_hosts.at(0) == 0);
    CHECK(res.messages == 1);
    CHECK(res.injected == 1);
    CHECK(res.bits == kHeader + kServiceId + kClassId + 3 * kDcId);
    CHECK(*res.bytes_per_request() == doctest::Approx(134.0 / 8));
}

TEST_CASE("delivery equals send time plus propagation and serialization") {
    for (const char* name : {"fig3", "fig2"}) {
        const Scenario sc = builtin_scenario(name);
        simnet::Config cfg;
        cfg.params = sc.params;
        cfg.keep_log = true;
        simnet::World w(sc.system, sc.latency(), cfg);
        w.seed(sc.initial);
        w.schedule(sc.events);
        auto rep = w.run();
        CHECK(rep.fifo_clamps == 0);
        const auto lines = sends(rep.log);
        CHECK(lines.size() == rep.messages);
        std::uint64_t by_kind = 0;
        for (const auto& [k, n] : rep.messages_by_kind) by_kind += n;
        CHECK(by_kind == rep.messages);
        std::int64_t bits = 0;
        const LinkParams link = sc.shape.link;
        for (const auto& s : lines) {
            const SimTime ser = (s.bits * kNanosPerSecond + link.control_capacity_bps - 1) / link.control_capacity_bps;
            CHECK(s.arrive - s.sent == link.propagation_delay + ser);
            bits += s.bits;
        }
        CHECK(bits == rep.bits);
        CHECK(rep.violations.empty());
        CHECK(w.check_invariants().empty());
    }
}

TEST_CASE("empty workload sends nothing") {
    const Scenario sc = builtin_scenario("empty");
    auto res = harness::run_algorithm(sc, "dapp");
    CHECK(res.messages == 0);
    CHECK(res.injected == 0);
    CHECK_FALSE(res.bytes_per_request());
    simnet::RunReport empty;
    CHECK(std::isnan(empty.overhead_bytes_per_request()));
    auto cost = harness::evaluate_cost(sc, res.samples, 1000);
    CHECK(cost.total == 0);
}

TEST_CASE("event budget cuts a run off as diverged") {
    Scenario sc = builtin_scenario("fig3");
    sc.event_budget = 3;
    auto res = harness::run_algorithm(sc, "dapp");
    CHECK(res.outcome == simnet::Outcome::Diverged);
    CHECK_FALSE(res.placed_all());
}

TEST_CASE("identical inputs give identical runs") {
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
        const Scenario sc = builtin_scenario("rand", seed);
        harness::RunOptions opts;
        opts.keep_log = true;
        auto a = harness::run_algorithm(sc, "dapp", opts);
        auto b = harness::run_algorithm(sc, "dapp", opts);
        CHECK(a.log == b.log);
        CHECK(a.bits == b.bits);
        opts.interleave_seed = 99;
        opts.max_jitter = 5'000;
        auto c = harness::run_algorithm(sc, "dapp", opts);
        auto d = harness::run_algorithm(sc, "dapp", opts);
        CHECK(c.log == d.log);
        CHECK(c.violations.empty());
    }
}

TEST_CASE("jittered links stay FIFO") {
    const Scenario sc = builtin_scenario("rand", 3);
    harness::RunOptions opts;
    opts.keep_log = true;
    opts.interleave_seed = 7;
    opts.max_jitter = 50'000;
    auto res = harness::run_algorithm(sc, "dapp", opts);
    static const std::regex re(R"(^\S+ send \S+ (s\d+->s\d+) bits=\d+ arrive=(\d+\.\d{9})$)");
    std::map<std::string, SimTime> last;
    for (const auto& l : res.log) {
        std::smatch m;
        if (!std::regex_match(l, m, re)) continue;
        const SimTime at = parse_time(m[2]);
        auto it = last.find(m[1]);
        if (it != last.end()) CHECK(at >= it->second);
        last[m[1]] = at;
    }
    CHECK(res.violations.empty());
}

TEST_CASE("world rejects initial placements off the feasible path") {
    Scenario sc = chain(3);
    simnet::World w(sc.system, sc.latency(), simnet::Config{});
    // The chain's leaf is s2; s0 is feasible, a missing id is not.
    CHECK_NOTHROW(w.seed({{0, 0, 2, 0}}));
    simnet::World w2(sc.system, sc.latency(), simnet::Config{});
    CHECK_THROWS_AS(w2.seed({{0, 0, 2, 7}}), ModelError);
}
