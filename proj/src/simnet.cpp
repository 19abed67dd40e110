#include "dapp/simnet.hpp"

#include <algorithm>
#include <cstdio>
#include <limits>
#include <set>

namespace dapp::simnet {

using protocol::Message;
using protocol::MessageKind;
using protocol::ServiceRecord;

namespace {

std::int64_t remainder_size(const std::vector<DatacenterId>& feasible, const Topology& topo, int level, bool upward) {
    std::int64_t n = 0;
    for (DatacenterId s : feasible) {
        int l = topo.level(s);
        if (upward ? l >= level : l <= level) ++n;
    }
    return n;
}

std::string format_time(SimTime t) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%lld.%09lld", static_cast<long long>(t / kNanosPerSecond),
                  static_cast<long long>(t % kNanosPerSecond));
    return buf;
}

}  // namespace

std::int64_t message_bits(const Message& msg, const Topology& topology) {
    const int level = topology.level(msg.receiver);
    std::int64_t bits = kHeaderBits;
    switch (msg.kind) {
        case MessageKind::Sfs:
        case MessageKind::Pu:
            for (const auto* list : {&msg.not_assigned, &msg.push_up})
                for (const auto& r : *list)
                    bits += kRequestIdBits + kClassBits +
                            (remainder_size(r.feasible, topology, level, true) + 2) * kDatacenterBits;
            break;
        case MessageKind::PuAck:
            bits += static_cast<std::int64_t>(msg.acks.size()) * (kRequestIdBits + kStatusBits);
            break;
        case MessageKind::PdRequest:
            bits += kDatacenterBits + kDeficitBits;
            for (const auto& r : msg.push_down)
                bits += kRequestIdBits + kClassBits +
                        (remainder_size(r.feasible, topology, level, false) + 2) * kDatacenterBits +
                        kPdRecordExtraBits;
            break;
        case MessageKind::PdAck:
            bits += kDatacenterBits + kDeficitBits +
                    static_cast<std::int64_t>(msg.acks.size()) * (kRequestIdBits + kStatusBits);
            break;
    }
    return bits;
}

SimTime transmission_delay(std::int64_t bits, const LinkParams& link) {
    if (link.control_capacity_bps <= 0) throw ModelError("link capacity must be positive");
    const std::int64_t num = bits * kNanosPerSecond;
    return (num + link.control_capacity_bps - 1) / link.control_capacity_bps;
}

const char* to_string(Outcome o) {
    switch (o) {
        case Outcome::Ok: return "OK";
        case Outcome::Diverged: return "DIVERGED";
        case Outcome::Failure: return "FAILURE";
    }
    return "?";
}

double RunReport::overhead_bytes_per_request() const {
    if (injected == 0) return std::numeric_limits<double>::quiet_NaN();
    return static_cast<double>(bits) / 8.0 / static_cast<double>(injected);
}

bool World::Later::operator()(const Event& a, const Event& b) const {
    if (a.time != b.time) return a.time > b.time;
    if (a.tie != b.tie) return a.tie > b.tie;
    return a.seq > b.seq;
}

World::World(const System& system, const PathLatency& latency, Config config)
    : system_(&system), latency_(latency), config_(config), rng_(config.interleave_seed) {
    nodes_.reserve(system.topology.size());
    for (DatacenterId s = 0; s < system.topology.size(); ++s) nodes_.emplace_back(system, config_.params, s);
}

void World::push(Event e) {
    e.seq = seq_++;
    e.tie = (config_.interleave_seed != 0 && e.kind != Kind::Deliver) ? rng_() : 0;
    queue_.push(e);
}

void World::log(const std::string& line) {
    if (config_.keep_log) report_.log.push_back(format_time(now_) + " " + line);
}

ServiceRecord World::record_of(const Tracked& t, bool is_new) const {
    ServiceRecord rec;
    rec.request = t.req.id;
    rec.class_id = t.req.class_id;
    rec.is_new = is_new;
    rec.feasible = t.req.feasible_set;
    return rec;
}

void World::seed(const std::vector<InitialPlacement>& placements) {
    const auto& topo = system_->topology;
    for (const auto& p : placements) {
        if (requests_.count(p.request)) throw ModelError("request r" + std::to_string(p.request) + " seeded twice");
        Tracked t;
        t.req.id = p.request;
        t.req.class_id = p.class_id;
        t.req.poa = p.poa;
        t.req.feasible_set = feasible_set_for(system_->service_class(p.class_id), p.poa, topo, latency_);
        if (!t.req.is_feasible(p.host))
            throw ModelError("seeded host " + topo.name(p.host) + " is not feasible for r" + std::to_string(p.request));
        t.req.current_host = p.host;
        t.req.lifecycle = Lifecycle::Placed;
        nodes_[p.host].seed_placement(record_of(t, false));
        if (nodes_[p.host].state().available_cpu < 0)
            throw ModelError("seeded placement overloads " + topo.name(p.host));
        requests_[p.request] = std::move(t);
    }
}

void World::schedule(const std::vector<UserEvent>& events) {
    for (const auto& u : events) {
        if (last_user_time_ && u.time < *last_user_time_) throw ModelError("user events must be time-ordered");
        last_user_time_ = u.time;
        users_.push_back(u);
        Event e;
        e.time = u.time;
        e.kind = Kind::User;
        e.index = users_.size() - 1;
        push(e);
    }
}

std::optional<DatacenterId> World::host(RequestId r) const {
    auto it = requests_.find(r);
    if (it == requests_.end()) return std::nullopt;
    return it->second.req.current_host;
}

void World::inject(RequestId r, bool critical) {
    Tracked& t = requests_.at(r);
    t.in_flight = true;
    t.req.lifecycle = critical ? Lifecycle::Critical : Lifecycle::New;
    ++report_.injected;
    protocol::Outbox out;
    if (t.req.feasible_set.empty()) {
        out.failures.push_back({r, t.req.poa});
    } else {
        log("inject r" + std::to_string(r) + (critical ? " critical" : " new") + " at " +
            system_->topology.name(t.req.poa));
        nodes_[t.req.poa].inject({record_of(t, !critical)}, now_, out);
    }
    apply(out);
}

void World::on_user(const UserEvent& u) {
    const auto& topo = system_->topology;
    auto it = requests_.find(u.request);
    if (u.departure) {
        if (it == requests_.end() || it->second.departed) return;
        Tracked& t = it->second;
        t.departed = true;
        t.req.lifecycle = Lifecycle::Departed;
        log("depart r" + std::to_string(u.request));
        if (t.req.current_host) {
            nodes_[*t.req.current_host].release(u.request);
            t.req.current_host.reset();
        }
        return;
    }
    if (it == requests_.end() || it->second.departed) {
        Tracked t;
        t.req.id = u.request;
        t.req.class_id = u.class_id;
        t.req.poa = u.poa;
        t.req.feasible_set = feasible_set_for(system_->service_class(u.class_id), u.poa, topo, latency_);
        requests_[u.request] = std::move(t);
        inject(u.request, false);
        return;
    }
    Tracked& t = it->second;
    if (t.failed || t.req.poa == u.poa) return;
    t.req.poa = u.poa;
    t.req.feasible_set = feasible_set_for(system_->service_class(t.req.class_id), u.poa, topo, latency_);
    log("move r" + std::to_string(u.request) + " to " + topo.name(u.poa));
    if (t.req.current_host) {
        auto& resident = nodes_[*t.req.current_host].mutable_state().resident;
        if (auto r = resident.find(u.request); r != resident.end()) r->second.feasible = t.req.feasible_set;
    }
    if (t.in_flight) return;  // checked again when it commits
    if (t.req.current_host && t.req.is_feasible(*t.req.current_host)) return;
    inject(u.request, t.req.current_host.has_value());
}

void World::commit(RequestId r, DatacenterId at) {
    const auto& topo = system_->topology;
    auto it = requests_.find(r);
    if (it == requests_.end()) {
        nodes_[at].release(r);
        return;
    }
    Tracked& t = it->second;
    if (t.departed || t.failed) {
        nodes_[at].release(r);
        t.in_flight = false;
        return;
    }
    if (!t.req.is_feasible(at)) {
        nodes_[at].release(r);
        t.in_flight = false;
        log("stale placement of r" + std::to_string(r) + " at " + topo.name(at));
        if (!t.req.current_host || !t.req.is_feasible(*t.req.current_host)) inject(r, t.req.current_host.has_value());
        return;
    }
    if (t.req.current_host && *t.req.current_host != at) nodes_[*t.req.current_host].release(r);
    t.req.current_host = at;
    t.req.lifecycle = Lifecycle::Placed;
    t.in_flight = false;
    log("commit r" + std::to_string(r) + " at " + topo.name(at));
}

void World::apply(protocol::Outbox& out) {
    const auto& topo = system_->topology;
    for (auto& line : out.trace) log(line);
    report_.pd_runs += out.pd_runs_started;
    for (const auto& p : out.placements) commit(p.request, p.host);
    for (const auto& f : out.failures) {
        auto it = requests_.find(f.request);
        if (it != requests_.end()) {
            it->second.failed = true;
            it->second.in_flight = false;
            it->second.req.lifecycle = Lifecycle::Failed;
        }
        report_.failures.push_back(f);
        log("failure r" + std::to_string(f.request) + " at " + topo.name(f.at));
    }
    for (const auto& tr : out.timers) {
        Event e;
        e.time = tr.deadline;
        e.kind = Kind::Timer;
        e.node = tr.node;
        e.timer = tr.kind;
        push(e);
    }
    for (auto& msg : out.messages) {
        const std::int64_t bits = message_bits(msg, topo);
        const DatacenterId child = topo.parent(msg.sender) == msg.receiver ? msg.sender : msg.receiver;
        if (topo.parent(child) != (child == msg.sender ? msg.receiver : msg.sender))
            throw ModelError("message between non-adjacent datacenters");
        const LinkParams& link = topo.node(child).uplink;
        SimTime delivery = now_ + link.propagation_delay + transmission_delay(bits, link);
        if (config_.max_jitter > 0)
            delivery += static_cast<SimTime>(rng_() % static_cast<std::uint64_t>(config_.max_jitter + 1));
        auto& busy = link_busy_[{msg.sender, msg.receiver}];
        if (delivery < busy) {
            delivery = busy;
            ++report_.fifo_clamps;
            log("fifo clamp on " + topo.name(msg.sender) + "->" + topo.name(msg.receiver));
        }
        busy = delivery;
        ++report_.messages;
        ++report_.messages_by_kind[msg.kind];
        report_.bits += bits;
        log(std::string("send ") + protocol::to_string(msg.kind) + " " + topo.name(msg.sender) + "->" +
            topo.name(msg.receiver) + " bits=" + std::to_string(bits) + " arrive=" + format_time(delivery));
        messages_.push_back(std::move(msg));
        Event e;
        e.time = delivery;
        e.kind = Kind::Deliver;
        e.index = messages_.size() - 1;
        push(e);
    }
}

void World::sample() {
    Sample s;
    s.time = now_;
    for (const auto& [id, t] : requests_)
        if (!t.departed && t.req.current_host)
            s.services[id] = SampledService{*t.req.current_host, t.req.class_id, t.req.feasible_set};
    report_.samples.push_back(std::move(s));
}

void World::dispatch(const Event& e) {
    switch (e.kind) {
        case Kind::User:
            on_user(users_[e.index]);
            break;
        case Kind::Deliver: {
            const Message& msg = messages_[e.index];
            protocol::Outbox out;
            nodes_[msg.receiver].receive(msg, now_, out);
            apply(out);
            break;
        }
        case Kind::Timer: {
            protocol::Outbox out;
            nodes_[e.node].on_timer(e.timer, e.time, now_, out);
            apply(out);
            break;
        }
        case Kind::Sample:
            sample();
            if (!queue_.empty()) {
                Event next;
                next.time = e.time + config_.sample_period;
                next.kind = Kind::Sample;
                push(next);
            }
            break;
    }
}

bool World::run_until(SimTime until) {
    if (!sampling_ && config_.sample_period > 0) {
        sampling_ = true;
        sample();
        Event first;
        first.time = now_ + config_.sample_period;
        first.kind = Kind::Sample;
        push(first);
    }
    while (!queue_.empty() && queue_.top().time <= until) {
        if (report_.events >= config_.event_budget) {
            report_.outcome = Outcome::Diverged;
            return false;
        }
        Event e = queue_.top();
        queue_.pop();
        // Sampling alone keeps nothing alive.
        if (e.kind == Kind::Sample && queue_.empty()) {
            now_ = e.time;
            sample();
            continue;
        }
        now_ = e.time;
        ++report_.events;
        dispatch(e);
        if (config_.check_invariants) {
            for (auto& v : check_invariants()) report_.violations.push_back(format_time(now_) + " " + v);
        }
    }
    return true;
}

RunReport World::run() {
    run_until(std::numeric_limits<SimTime>::max());
    return report();
}

RunReport World::report() const {
    RunReport r = report_;
    r.end_time = now_;
    r.hosts.clear();
    r.unplaced.clear();
    for (const auto& [id, t] : requests_) {
        if (t.departed || t.failed) continue;
        if (t.req.current_host) r.hosts[id] = *t.req.current_host;
        if (t.in_flight || !t.req.current_host) r.unplaced.push_back(id);
    }
    if (r.outcome != Outcome::Diverged && (!r.failures.empty() || !r.violations.empty()))
        r.outcome = Outcome::Failure;
    return r;
}

std::vector<std::string> World::check_invariants() const {
    std::vector<std::string> out;
    const auto& topo = system_->topology;
    std::map<RequestId, int> placed_count;
    for (const auto& dc : nodes_) {
        const auto& st = dc.state();
        CpuUnits used = 0;
        for (const auto& [r, b] : st.assigned) {
            used += b;
            if (st.placed.count(r)) out.push_back(topo.name(st.id) + " holds r" + std::to_string(r) + " twice");
        }
        for (const auto& [r, b] : st.placed) {
            used += b;
            ++placed_count[r];
        }
        if (st.available_cpu != topo.capacity(st.id) - used)
            out.push_back(topo.name(st.id) + " available CPU out of sync");
        if (st.available_cpu < 0) out.push_back(topo.name(st.id) + " over capacity");
    }
    for (const auto& [r, n] : placed_count)
        if (n > 1) out.push_back("r" + std::to_string(r) + " placed on " + std::to_string(n) + " datacenters");
    for (const auto& [id, t] : requests_) {
        if (!t.req.current_host || t.departed) continue;
        if (!nodes_[*t.req.current_host].state().placed.count(id))
            out.push_back("r" + std::to_string(id) + " host " + topo.name(*t.req.current_host) + " lost it");
    }
    return out;
}

}  // namespace dapp::simnet
