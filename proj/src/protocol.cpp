#include "dapp/protocol.hpp"

#include <algorithm>
#include <limits>
#include <sstream>

namespace dapp::protocol {

namespace {

constexpr CpuUnits kNeverFits = std::numeric_limits<CpuUnits>::max() / 4;

std::string ids(const std::vector<ServiceRecord>& recs) {
    std::ostringstream os;
    os << "[";
    for (std::size_t i = 0; i < recs.size(); ++i) os << (i ? "," : "") << "r" << recs[i].request;
    os << "]";
    return os.str();
}

bool contains_id(const std::vector<ServiceRecord>& recs, RequestId r) {
    return std::any_of(recs.begin(), recs.end(), [r](const ServiceRecord& x) { return x.request == r; });
}

void erase_id(std::vector<ServiceRecord>& recs, RequestId r) {
    recs.erase(std::remove_if(recs.begin(), recs.end(), [r](const ServiceRecord& x) { return x.request == r; }),
               recs.end());
}

}  // namespace

const char* to_string(MessageKind k) {
    switch (k) {
        case MessageKind::Sfs: return "SFS";
        case MessageKind::Pu: return "PU";
        case MessageKind::PuAck: return "PU_ACK";
        case MessageKind::PdRequest: return "PD";
        case MessageKind::PdAck: return "PD_ACK";
    }
    return "?";
}

Datacenter::Datacenter(const System& system, const Params& params, DatacenterId id)
    : system_(&system), params_(&params) {
    state_.id = id;
    state_.available_cpu = system.topology.capacity(id);
}

int Datacenter::level() const { return system_->topology.level(state_.id); }

CpuUnits Datacenter::beta(const ServiceRecord& r) const {
    auto b = system_->beta(r.class_id, r.feasible, state_.id);
    return b ? *b : kNeverFits;
}

void Datacenter::note(Outbox& out, const std::string& what) const {
    out.trace.push_back(system_->topology.name(state_.id) + " " + what);
}

void Datacenter::send(Message msg, Outbox& out) const {
    msg.sender = state_.id;
    out.messages.push_back(std::move(msg));
}

void Datacenter::merge_unique(std::vector<ServiceRecord>& into, std::vector<ServiceRecord> from) const {
    for (auto& r : from)
        if (!contains_id(into, r.request)) into.push_back(std::move(r));
}

std::vector<ServiceRecord> Datacenter::sort_requests(std::vector<ServiceRecord> reqs) const {
    const DatacenterId s = state_.id;
    auto above = [s](const ServiceRecord& r) -> std::size_t {
        auto it = std::find(r.feasible.begin(), r.feasible.end(), s);
        if (it == r.feasible.end()) return std::numeric_limits<std::size_t>::max();
        return static_cast<std::size_t>(r.feasible.end() - it) - 1;
    };
    std::stable_sort(reqs.begin(), reqs.end(), [&](const ServiceRecord& a, const ServiceRecord& b) {
        auto ua = above(a), ub = above(b);
        if (ua != ub) return ua < ub;
        auto ba = beta(a), bb = beta(b);
        if (ba != bb) return ba < bb;
        return !a.is_new && b.is_new;
    });
    return reqs;
}

// Capacity bookkeeping.

void Datacenter::assign(const ServiceRecord& r, CpuUnits b) {
    state_.available_cpu -= b;
    state_.assigned[r.request] = b;
    auto rec = r;
    rec.origin = state_.id;
    state_.resident[r.request] = rec;
}

void Datacenter::place(const ServiceRecord& r, CpuUnits b, Outbox& out) {
    state_.available_cpu -= b;
    state_.placed[r.request] = b;
    state_.placement_order.push_back(r.request);
    auto rec = r;
    rec.origin = state_.id;
    state_.resident[r.request] = rec;
    out.placements.push_back({r.request, state_.id});
    note(out, "place r" + std::to_string(r.request));
}

void Datacenter::commit_assigned(RequestId r, Outbox& out) {
    auto it = state_.assigned.find(r);
    if (it == state_.assigned.end()) return;
    state_.placed[r] = it->second;
    state_.assigned.erase(it);
    state_.placement_order.push_back(r);
    out.placements.push_back({r, state_.id});
    note(out, "place r" + std::to_string(r));
}

void Datacenter::forget(RequestId r) {
    erase_id(state_.not_assigned, r);
    erase_id(state_.push_up, r);
    erase_id(state_.pending_pd, r);
}

bool Datacenter::release(RequestId r) {
    bool held = false;
    if (auto it = state_.placed.find(r); it != state_.placed.end()) {
        state_.available_cpu += it->second;
        state_.placed.erase(it);
        auto& order = state_.placement_order;
        order.erase(std::remove(order.begin(), order.end(), r), order.end());
        held = true;
    }
    if (auto it = state_.assigned.find(r); it != state_.assigned.end()) {
        state_.available_cpu += it->second;
        state_.assigned.erase(it);
        held = true;
    }
    if (held) {
        state_.resident.erase(r);
        erase_id(state_.push_up, r);
    }
    return held;
}

void Datacenter::seed_placement(const ServiceRecord& r) {
    const CpuUnits b = beta(r);
    if (b == kNeverFits) throw ModelError("seed placement outside the feasible set of r" + std::to_string(r.request));
    state_.available_cpu -= b;
    state_.placed[r.request] = b;
    state_.placement_order.push_back(r.request);
    auto rec = r;
    rec.origin = state_.id;
    rec.is_new = false;
    state_.resident[r.request] = rec;
}

// Timers and mode.

SimTime Datacenter::start_sfs_timer(SimTime now, Outbox& out) {
    if (state_.sfs_timer) return *state_.sfs_timer;
    const SimTime deadline = now + static_cast<SimTime>(level() + 1) * params_->sfs_accumulation;
    state_.sfs_timer = deadline;
    out.timers.push_back({state_.id, TimerKind::Sfs, deadline});
    return deadline;
}

SimTime Datacenter::start_pd_timer(SimTime now, Outbox& out) {
    if (state_.pd_timer) return *state_.pd_timer;
    const SimTime deadline = now + static_cast<SimTime>(level() + 1) * params_->pd_accumulation;
    state_.pd_timer = deadline;
    out.timers.push_back({state_.id, TimerKind::Pd, deadline});
    return deadline;
}

void Datacenter::enter_f_mode(SimTime now) {
    state_.f_mode_until = std::max(state_.f_mode_until, now + params_->f_mode_period);
}

// Transport entry points.

void Datacenter::inject(std::vector<ServiceRecord> requests, SimTime now, Outbox& out) {
    for (auto& r : requests) r.origin.reset();
    merge_unique(state_.not_assigned, std::move(requests));
    start_sfs_timer(now, out);
}

void Datacenter::receive(const Message& msg, SimTime now, Outbox& out) {
    switch (msg.kind) {
        case MessageKind::Sfs:
        case MessageKind::Pu:
            merge_unique(state_.not_assigned, msg.not_assigned);
            merge_unique(state_.push_up, msg.push_up);
            start_sfs_timer(now, out);
            break;
        case MessageKind::PuAck:
            if (in_f_mode(now))
                handle_f_pu(msg.acks, now, out);
            else
                handle_pu(msg.acks, now, out);
            break;
        case MessageKind::PdRequest:
            handle_pd(msg.push_down, msg.deficit_cpu, msg.sender, msg.initiator, now, out);
            break;
        case MessageKind::PdAck:
            pd_on_ack(msg, now, out);
            break;
    }
}

void Datacenter::on_timer(TimerKind kind, SimTime deadline, SimTime now, Outbox& out) {
    if (kind == TimerKind::Sfs) {
        if (state_.sfs_timer != deadline) return;
        state_.sfs_timer.reset();
        // A running PD ends with F-SFS over whatever accumulated meanwhile.
        if (state_.within_pd) return;
        if (in_f_mode(now))
            handle_f_sfs({}, {}, now, out);
        else
            handle_sfs({}, {}, now, out);
        return;
    }
    if (state_.pd_timer != deadline) return;
    state_.pd_timer.reset();
    std::vector<ServiceRecord> failing;
    for (auto& r : state_.pending_pd)
        if (contains_id(state_.not_assigned, r.request) && !is_resident(r.request)) failing.push_back(r);
    if (failing.empty()) {
        state_.pending_pd.clear();
        return;
    }
    if (state_.within_pd) {
        start_pd_timer(now, out);
        return;
    }
    state_.pending_pd.clear();
    CpuUnits need = 0;
    for (auto& r : failing) need += beta(r);
    handle_pd(std::move(failing), need - state_.available_cpu, std::nullopt, state_.id, now, out);
}


// Service finding and push-up.

void Datacenter::handle_sfs(std::vector<ServiceRecord> not_assigned, std::vector<ServiceRecord> push_up, SimTime now,
                            Outbox& out) {
    const DatacenterId s = state_.id;
    merge_unique(state_.push_up, std::move(push_up));
    merge_unique(state_.not_assigned, std::move(not_assigned));
    auto list = sort_requests(std::move(state_.not_assigned));
    state_.not_assigned.clear();
    note(out, "SFS U=" + ids(list) + " a=" + std::to_string(state_.available_cpu));

    std::vector<ServiceRecord> remaining, failing;
    for (auto& r : list) {
        const CpuUnits b = beta(r);
        if (state_.available_cpu >= b) {
            assign(r, b);
            if (r.top() == s) {
                commit_assigned(r.request, out);
            } else {
                auto rec = state_.resident[r.request];
                state_.push_up.push_back(rec);
            }
        } else {
            if (r.top() == s) failing.push_back(r);
            remaining.push_back(std::move(r));
        }
    }
    state_.not_assigned = std::move(remaining);

    if (!failing.empty()) {
        CpuUnits need = 0;
        for (auto& r : failing) need += beta(r);
        note(out, "push-down needed for " + ids(failing) + " D=" + std::to_string(need - state_.available_cpu));
        merge_unique(state_.pending_pd, std::move(failing));
        start_pd_timer(now, out);
        return;
    }

    std::vector<ServiceRecord> up_to_parent, kept;
    for (auto& r : state_.push_up) (r.top() != s ? up_to_parent : kept).push_back(r);
    auto parent = system_->topology.parent(s);
    std::vector<ServiceRecord> na_to_parent;
    if (parent) {
        std::vector<ServiceRecord> stay;
        for (auto& r : state_.not_assigned) (r.top() != s ? na_to_parent : stay).push_back(r);
        state_.not_assigned = std::move(stay);
    } else {
        up_to_parent.clear();
        kept = state_.push_up;
    }
    if (parent && (!na_to_parent.empty() || !up_to_parent.empty())) {
        Message m;
        m.kind = na_to_parent.empty() ? MessageKind::Pu : MessageKind::Sfs;
        m.receiver = *parent;
        m.not_assigned = na_to_parent;
        m.push_up = up_to_parent;
        note(out, "call parent U=" + ids(na_to_parent) + " P=" + ids(up_to_parent));
        send(std::move(m), out);
        for (auto& r : up_to_parent) state_.outstanding_up[r.request] = r;
        state_.push_up = std::move(kept);
    }
    if (up_to_parent.empty()) handle_pu({}, now, out);
}

void Datacenter::handle_f_sfs(std::vector<ServiceRecord> not_assigned, std::vector<ServiceRecord> push_up,
                              SimTime now, Outbox& out, const std::set<RequestId>& tried) {
    const DatacenterId s = state_.id;
    merge_unique(state_.push_up, std::move(push_up));
    merge_unique(state_.not_assigned, std::move(not_assigned));
    auto list = sort_requests(std::move(state_.not_assigned));
    state_.not_assigned.clear();
    note(out, "F-SFS U=" + ids(list) + " a=" + std::to_string(state_.available_cpu));

    std::vector<ServiceRecord> keep, failing;
    for (auto& r : list) {
        const CpuUnits b = beta(r);
        if (state_.available_cpu >= b) {
            place(r, b, out);
        } else if (r.top() == s) {
            if (state_.within_pd && tried.count(r.request)) {
                out.failures.push_back({r.request, s});
                note(out, "FAILURE r" + std::to_string(r.request));
            } else {
                failing.push_back(r);
                keep.push_back(std::move(r));
            }
        } else {
            keep.push_back(std::move(r));
        }
    }
    state_.not_assigned = std::move(keep);
    if (!failing.empty()) {
        merge_unique(state_.pending_pd, std::move(failing));
        start_pd_timer(now, out);
    }
    if (auto parent = system_->topology.parent(s)) {
        std::vector<ServiceRecord> to_parent, stay;
        for (auto& r : state_.not_assigned) (r.top() != s ? to_parent : stay).push_back(r);
        state_.not_assigned = std::move(stay);
        if (!to_parent.empty()) {
            Message m;
            m.kind = MessageKind::Sfs;
            m.receiver = *parent;
            m.not_assigned = to_parent;
            note(out, "call parent U=" + ids(to_parent));
            send(std::move(m), out);
        }
    }
    handle_f_pu({}, now, out);
}

void Datacenter::handle_pu(const std::vector<AckEntry>& from_parent, SimTime, Outbox& out) {
    std::vector<std::pair<ServiceRecord, bool>> items;
    for (auto& a : from_parent) {
        auto it = state_.outstanding_up.find(a.request);
        if (it == state_.outstanding_up.end()) continue;
        items.emplace_back(it->second, a.positive);
        state_.outstanding_up.erase(it);
    }
    std::vector<ServiceRecord> stay;
    for (auto& r : state_.push_up) {
        if (r.top() == state_.id)
            items.emplace_back(r, false);
        else
            stay.push_back(r);
    }
    state_.push_up = std::move(stay);
    run_pu(std::move(items), false, out);
}

void Datacenter::handle_f_pu(const std::vector<AckEntry>& from_parent, SimTime, Outbox& out) {
    std::vector<std::pair<ServiceRecord, bool>> items;
    for (auto& a : from_parent) {
        auto it = state_.outstanding_up.find(a.request);
        if (it == state_.outstanding_up.end()) continue;
        items.emplace_back(it->second, a.positive);
        state_.outstanding_up.erase(it);
    }
    for (auto& r : state_.push_up) items.emplace_back(r, false);
    state_.push_up.clear();
    run_pu(std::move(items), true, out);
}

void Datacenter::run_pu(std::vector<std::pair<ServiceRecord, bool>> items, bool f_mode, Outbox& out) {
    const DatacenterId s = state_.id;
    if (items.empty()) return;
    std::map<RequestId, bool> status;
    std::vector<ServiceRecord> recs;
    for (auto& [r, pos] : items) {
        if (pos && r.origin == s) {
            // Hosted higher up: drop the local reservation.
            if (state_.assigned.count(r.request)) release(r.request);
            continue;
        }
        status[r.request] = pos;
        recs.push_back(r);
    }
    recs = sort_requests(std::move(recs));
    std::map<DatacenterId, std::vector<AckEntry>> acks;
    for (auto& r : recs) {
        bool pos = status[r.request];
        if (r.origin == s) {
            commit_assigned(r.request, out);
            continue;
        }
        if (!pos && !f_mode) {
            const CpuUnits b = beta(r);
            if (state_.available_cpu >= b && !is_resident(r.request)) {
                place(r, b, out);
                pos = true;
            }
        }
        if (!r.origin) continue;
        auto child = system_->topology.child_toward(s, *r.origin);
        if (!child) continue;
        acks[*child].push_back({r.request, pos});
    }
    for (auto& [child, entries] : acks) {
        Message m;
        m.kind = MessageKind::PuAck;
        m.receiver = child;
        m.acks = std::move(entries);
        std::string desc;
        for (auto& e : m.acks) desc += " r" + std::to_string(e.request) + (e.positive ? "+" : "-");
        note(out, std::string(f_mode ? "F-PU" : "PU") + " ack to " + system_->topology.name(child) + desc);
        send(std::move(m), out);
    }
}


// Push-down.

void Datacenter::handle_pd(std::vector<ServiceRecord> records, CpuUnits deficit, std::optional<DatacenterId> caller,
                           DatacenterId initiator, SimTime now, Outbox& out) {
    const DatacenterId s = state_.id;
    if (state_.within_pd) {
        if (caller) {
            Message m;
            m.kind = MessageKind::PdAck;
            m.receiver = *caller;
            m.initiator = initiator;
            m.deficit_cpu = deficit;
            for (auto& r : records) m.acks.push_back({r.request, false});
            note(out, "busy, PD refused");
            send(std::move(m), out);
        }
        return;
    }
    state_.within_pd = true;
    enter_f_mode(now);
    ++out.pd_runs_started;

    PdRun run;
    run.initiator = !caller;
    run.initiator_id = initiator;
    run.caller = caller;
    run.deficit = deficit;
    for (auto& r : records) {
        run.received.insert(r.request);
        if (run.initiator) r.beta_at_initiator = beta(r);
    }
    run.records = std::move(records);
    auto add_own = [&](RequestId id) {
        auto it = state_.resident.find(id);
        if (it == state_.resident.end() || run.received.count(id)) return;
        auto rec = it->second;
        rec.origin = s;
        rec.beta_at_initiator = run.initiator ? beta(rec) : 0;
        run.own.insert(id);
        run.records.push_back(std::move(rec));
    };
    for (auto& [id, b] : state_.assigned)
        if (!state_.outstanding_up.count(id)) add_own(id);
    for (auto id : state_.placement_order) add_own(id);
    for (auto& r : run.records) {
        auto c = pd_route(r);
        if (c && std::find(run.child_order.begin(), run.child_order.end(), *c) == run.child_order.end())
            run.child_order.push_back(*c);
    }
    note(out, std::string(run.initiator ? "PD start" : "PD") + " list=" + ids(run.records) +
                  " D=" + std::to_string(run.deficit));
    state_.pd = std::move(run);
    pd_advance(now, out);
}

std::optional<DatacenterId> Datacenter::pd_route(const ServiceRecord& r) const {
    const DatacenterId s = state_.id;
    auto it = std::find(r.feasible.begin(), r.feasible.end(), s);
    if (it == r.feasible.end() || it == r.feasible.begin()) return std::nullopt;
    const DatacenterId child = *(it - 1);
    const bool own = state_.pd && state_.pd->own.count(r.request);
    if (own && !is_resident(r.request)) return std::nullopt;
    // A service not running anywhere has nothing to free in a leaf.
    if (!own && !r.origin && system_->topology.is_leaf(child)) return std::nullopt;
    return child;
}

bool Datacenter::pd_can_break() const {
    const PdRun& run = *state_.pd;
    if (run.deficit <= 0) return true;
    if (run.initiator) return false;
    CpuUnits tmp_a = state_.available_cpu;
    CpuUnits tmp_d = run.deficit;
    for (auto& r : run.records) {
        if (run.own.count(r.request) || r.beta_at_initiator <= 0) continue;
        const CpuUnits b = beta(r);
        if (b <= tmp_a) {
            tmp_a -= b;
            tmp_d -= r.beta_at_initiator;
            if (tmp_d <= 0) return true;
        }
    }
    return false;
}

void Datacenter::pd_advance(SimTime now, Outbox& out) {
    PdRun& run = *state_.pd;
    while (run.next_child < run.child_order.size()) {
        if (pd_can_break()) {
            note(out, "PD break D=" + std::to_string(run.deficit));
            break;
        }
        const DatacenterId c = run.child_order[run.next_child++];
        std::vector<ServiceRecord> recs;
        for (auto& r : run.records)
            if (pd_route(r) == c) recs.push_back(r);
        if (recs.empty()) continue;
        Message m;
        m.kind = MessageKind::PdRequest;
        m.receiver = c;
        m.push_down = recs;
        m.initiator = run.initiator_id;
        m.deficit_cpu = run.deficit;
        note(out, "PD call " + system_->topology.name(c) + " list=" + ids(recs) + " D=" + std::to_string(run.deficit));
        send(std::move(m), out);
        run.awaiting = c;
        return;
    }
    pd_finish(now, out);
}

void Datacenter::pd_on_ack(const Message& msg, SimTime now, Outbox& out) {
    if (!state_.pd || state_.pd->awaiting != msg.sender) return;
    PdRun& run = *state_.pd;
    run.awaiting.reset();
    for (auto& a : msg.acks) {
        if (!a.positive) continue;
        erase_id(run.records, a.request);
        if (run.own.count(a.request)) release(a.request);
        if (run.received.count(a.request)) run.hosted.insert(a.request);
        forget(a.request);
    }
    run.deficit = msg.deficit_cpu;
    note(out, "PD ack from " + system_->topology.name(msg.sender) + " D=" + std::to_string(run.deficit));
    pd_advance(now, out);
}

void Datacenter::pd_finish(SimTime now, Outbox& out) {
    PdRun run = std::move(*state_.pd);
    state_.pd.reset();
    auto records = run.records;
    for (auto& r : records) {
        if (run.own.count(r.request) || is_resident(r.request)) continue;
        const CpuUnits b = beta(r);
        if (b > state_.available_cpu) continue;
        if (!run.initiator) {
            if (run.deficit <= 0) break;
            run.deficit -= r.beta_at_initiator;
            run.hosted.insert(r.request);
        }
        place(r, b, out);
        forget(r.request);
        erase_id(run.records, r.request);
    }
    if (run.caller) {
        Message m;
        m.kind = MessageKind::PdAck;
        m.receiver = *run.caller;
        m.initiator = run.initiator_id;
        m.deficit_cpu = run.deficit;
        for (auto id : run.received) m.acks.push_back({id, run.hosted.count(id) != 0});
        note(out, "PD done D=" + std::to_string(run.deficit));
        send(std::move(m), out);
    } else {
        note(out, "PD finished D=" + std::to_string(run.deficit));
    }
    handle_f_sfs({}, {}, now, out, run.initiator ? run.received : std::set<RequestId>{});
    state_.within_pd = false;
}

}  // namespace dapp::protocol
