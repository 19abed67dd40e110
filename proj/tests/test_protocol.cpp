#include <algorithm>
#include <regex>

#include "doctest.h"
#include "dapp/harness.hpp"
#include "dapp/protocol.hpp"
#include "dapp/scenario.hpp"

using namespace dapp;
using namespace dapp::protocol;

namespace {

// Binary tree, three levels, one class with beta 1 everywhere.
System small_system(CpuUnits leaf_capacity) {
    System sys;
    sys.topology = build_tree(3, 2, leaf_capacity);
    ServiceClass c;
    c.name = "svc";
    c.latency_constraint = 1;
    c.cpu_demand = {{0, 1}, {1, 1}, {2, 1}};
    c.placement_cost = {{0, 3}, {1, 2}, {2, 1}};
    ServiceClass wide = c;
    wide.id = 1;
    wide.name = "wide";
    wide.cpu_demand = {{0, 2}, {1, 2}, {2, 2}};
    sys.classes = {c, wide};
    return sys;
}

ServiceRecord record(RequestId id, std::vector<DatacenterId> feasible, ClassId cls = 0, bool is_new = true) {
    ServiceRecord r;
    r.request = id;
    r.class_id = cls;
    r.is_new = is_new;
    r.feasible = std::move(feasible);
    return r;
}

std::vector<RequestId> ids(const std::vector<ServiceRecord>& rs) {
    std::vector<RequestId> out;
    for (const auto& r : rs) out.push_back(r.request);
    return out;
}

// Fires every timer the outbox asked for, in deadline order.
void drain_timers(Datacenter& dc, Outbox& out) {
    while (!out.timers.empty()) {
        auto t = out.timers.front();
        out.timers.erase(out.timers.begin());
        dc.on_timer(t.kind, t.deadline, t.deadline, out);
    }
}

std::vector<std::string> lines_matching(const std::vector<std::string>& log, const std::string& pattern) {
    const std::regex re(pattern);
    std::vector<std::string> out;
    for (const auto& l : log)
        if (std::regex_search(l, re)) out.push_back(l);
    return out;
}

}  // namespace

TEST_CASE("requests are ordered by room above, then CPU, critical first") {
    const System sys = small_system(4);
    Params params;
    Datacenter dc(sys, params, 3);
    auto sorted = dc.sort_requests({
        record(1, {3, 1, 0}),
        record(2, {3, 1}),
        record(3, {3}, 1),
        record(4, {3}),
        record(5, {3}, 0, false),
        record(6, {3, 1}, 1),
    });
    CHECK(ids(sorted) == std::vector<RequestId>{5, 4, 3, 2, 6, 1});
}

TEST_CASE("a leaf with room assigns locally and offers the services upward") {
    const System sys = small_system(4);
    Params params;
    Datacenter dc(sys, params, 3);
    Outbox out;
    dc.inject({record(1, {3, 1, 0}), record(2, {3, 1, 0})}, 0, out);
    REQUIRE(out.timers.size() == 1);
    CHECK(out.timers[0].deadline == params.sfs_accumulation);  // level 0 waits one period
    drain_timers(dc, out);
    // Services climb toward cheaper datacenters, so the leaf hands them up.
    REQUIRE(out.messages.size() == 1);
    CHECK(out.messages[0].kind == MessageKind::Pu);
    CHECK(out.messages[0].receiver == 1);
    CHECK(ids(out.messages[0].push_up) == std::vector<RequestId>{1, 2});
    CHECK(dc.state().available_cpu == 2);
}

TEST_CASE("a full leaf forwards the unassigned records") {
    const System sys = small_system(1);
    Params params;
    Datacenter dc(sys, params, 3);
    Outbox out;
    dc.inject({record(1, {3, 1, 0}, 1)}, 0, out);
    drain_timers(dc, out);
    REQUIRE(out.messages.size() == 1);
    CHECK(ids(out.messages[0].not_assigned) == std::vector<RequestId>{1});
    CHECK(out.messages[0].push_up.empty());
    CHECK(dc.state().available_cpu == 1);
}

TEST_CASE("timers scale with the level") {
    const System sys = small_system(1);
    Params params;
    Datacenter root(sys, params, 0);
    Outbox out;
    Message m;
    m.kind = MessageKind::Sfs;
    m.sender = 1;
    m.receiver = 0;
    m.not_assigned = {record(1, {3, 1, 0})};
    root.receive(m, 1000, out);
    REQUIRE(out.timers.size() == 1);
    CHECK(out.timers[0].deadline == 1000 + 3 * params.sfs_accumulation);
}

TEST_CASE("the top of a path places what fits and starts a push-down for the rest") {
    const System sys = small_system(1);  // root capacity 3
    Params params;
    Datacenter root(sys, params, 0);
    root.seed_placement(record(10, {3, 1, 0}, 0, false));
    root.seed_placement(record(11, {5, 2, 0}, 0, false));
    Outbox out;
    Message m;
    m.kind = MessageKind::Sfs;
    m.sender = 1;
    m.receiver = 0;
    m.not_assigned = {record(1, {3, 1, 0}, 1)};
    root.receive(m, 0, out);
    drain_timers(root, out);
    CHECK(out.placements.empty());
    CHECK(out.pd_runs_started == 1);
    // The PD goes toward the subtree holding a resident that can move down.
    REQUIRE_FALSE(out.messages.empty());
    CHECK(out.messages.back().kind == MessageKind::PdRequest);
    CHECK(out.messages.back().deficit_cpu == 1);
    CHECK(root.state().within_pd);
    // SFS wait, then PD wait, then the quiet period.
    CHECK(root.state().f_mode_until ==
          3 * params.sfs_accumulation + 3 * params.pd_accumulation + params.f_mode_period);
}

TEST_CASE("a push-down reaching a busy datacenter is refused") {
    const System sys = small_system(1);
    Params params;
    Datacenter mid(sys, params, 1);
    mid.mutable_state().within_pd = true;
    Outbox out;
    Message pd;
    pd.kind = MessageKind::PdRequest;
    pd.sender = 0;
    pd.receiver = 1;
    pd.initiator = 0;
    pd.deficit_cpu = 2;
    pd.push_down = {record(7, {3, 1, 0}, 0, false)};
    pd.push_down[0].origin = 0;
    mid.receive(pd, 0, out);
    REQUIRE(out.messages.size() == 1);
    const auto& ack = out.messages[0];
    CHECK(ack.kind == MessageKind::PdAck);
    CHECK(ack.deficit_cpu == 2);
    REQUIRE(ack.acks.size() == 1);
    CHECK_FALSE(ack.acks[0].positive);
}

TEST_CASE("release frees held capacity once") {
    const System sys = small_system(2);
    Params params;
    Datacenter leaf(sys, params, 3);
    leaf.seed_placement(record(1, {3, 1, 0}, 1, false));
    CHECK(leaf.state().available_cpu == 0);
    CHECK(leaf.release(1));
    CHECK(leaf.state().available_cpu == 2);
    CHECK_FALSE(leaf.release(1));
}

TEST_CASE("push-down walkthrough on the four-leaf star") {
    const auto log = harness::fixture_log("fig3");
    // Deficit trajectory seen by the initiator: 3, then 1 after s2, then -1 after s3.
    const auto acks = lines_matching(log, R"(s0 PD (start|ack from))");
    REQUIRE(acks.size() == 3);
    CHECK(acks[0].find("D=3") != std::string::npos);
    CHECK(acks[1].find("ack from s2 D=1") != std::string::npos);
    CHECK(acks[2].find("ack from s3 D=-1") != std::string::npos);
    CHECK(lines_matching(log, R"(send PD s0->s1)").empty());
    CHECK(lines_matching(log, R"(send PD s0->s4)").empty());
    for (const char* f : {"final r2 s2", "final r3 s3", "final r5 s0", "final r6 s0", "final r1 s1", "final r4 s4"})
        CHECK(std::find(log.begin(), log.end(), f) != log.end());
    // Every datacenter taking part in the push-down counts one run.
    CHECK(log.back() == "outcome OK messages=5 pd_runs=3");
}

TEST_CASE("naive highest-first placement strands the fourth request") {
    // Oracle: each arrival takes the highest feasible datacenter with room, no migration.
    const Scenario sc = builtin_scenario("fig2");
    const auto& topo = sc.system.topology;
    std::map<DatacenterId, CpuUnits> free;
    for (const auto& n : topo.nodes()) free[n.id] = n.capacity;
    std::vector<RequestId> stranded;
    for (const auto& e : sc.events) {
        if (e.departure || e.request > 3) continue;
        auto path = feasible_set_for(sc.system.service_class(e.class_id), e.poa, topo, sc.latency());
        bool placed = false;
        for (auto it = path.rbegin(); it != path.rend(); ++it) {
            if (free[*it] >= 1) {
                --free[*it];
                placed = true;
                break;
            }
        }
        if (!placed) stranded.push_back(e.request);
    }
    CHECK(stranded == std::vector<RequestId>{3});
}

TEST_CASE("the protocol places the same four by pushing one service down") {
    const auto log = harness::fixture_log("fig2-oscillation");
    const auto commits_r1 = lines_matching(log, R"( commit r1 at )");
    REQUIRE(commits_r1.size() == 2);
    CHECK(commits_r1[0].find("at s2") != std::string::npos);
    CHECK(commits_r1[1].find("at s5") != std::string::npos);
    CHECK(lines_matching(log, R"(PD start)").size() == 1);
    CHECK(lines_matching(log, R"(commit r3 at s2)").size() == 1);
    // r4 arrives inside the quiet period and is placed without pulling r1 back up.
    CHECK(lines_matching(log, R"(F-SFS U=\[r4\])").size() == 1);
    CHECK(std::find(log.begin(), log.end(), "final r1 s5") != log.end());
    CHECK(std::find(log.begin(), log.end(), "final r4 s2") != log.end());
    CHECK(lines_matching(log, R"(failure)").empty());
}

TEST_CASE("outside the quiet period a freed parent pulls services back up") {
    Scenario sc = builtin_scenario("fig2");
    sc.params.f_mode_period = seconds(0.5);
    harness::RunOptions opts;
    opts.keep_log = true;
    auto res = harness::run_algorithm(sc, "dapp", opts);
    CHECK(res.placed_all());
    CHECK(res.violations.empty());
    CHECK(res.final_hosts.size() == 4);
}
