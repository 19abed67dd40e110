#ifndef DAPP_PROTOCOL_HPP
#define DAPP_PROTOCOL_HPP

#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "dapp/model.hpp"

namespace dapp::protocol {

/// What a node knows about one service while the protocol moves it around.
/// `feasible` is the full poa->top path; the wire size only counts the part
/// relevant to the receiver (see simnet::message_bits).
struct ServiceRecord {
    RequestId request = 0;
    ClassId class_id = 0;
    bool is_new = true;
    std::vector<DatacenterId> feasible;
    std::optional<DatacenterId> origin;  // where it is assigned or placed
    CpuUnits beta_at_initiator = 0;      // PD only: CPU it frees at the PD initiator

    DatacenterId top() const { return feasible.back(); }
};

enum class MessageKind { Sfs, Pu, PuAck, PdRequest, PdAck };
const char* to_string(MessageKind k);

struct AckEntry {
    RequestId request = 0;
    bool positive = false;  // PU: pushed up; PD: hosted in the receiver's subtree
};

/// Single-hop control packet between a parent and a child.
///
/// - Sfs: a SFS call to the parent with not-assigned and push-up records.
/// - Pu: a SFS call that carries push-up records only.
/// - PuAck: pos/neg acks travelling down toward the origin of each record.
/// - PdRequest: push-down call to a child with the deficit to free.
/// - PdAck: reply to PdRequest with per-record hosted status.
struct Message {
    MessageKind kind = MessageKind::Sfs;
    DatacenterId sender = 0;
    DatacenterId receiver = 0;
    std::vector<ServiceRecord> not_assigned;
    std::vector<ServiceRecord> push_up;
    std::vector<ServiceRecord> push_down;
    std::vector<AckEntry> acks;
    DatacenterId initiator = 0;
    CpuUnits deficit_cpu = 0;
};

struct Params {
    SimTime sfs_accumulation = 100'000;  // T_ad^SFS, 0.1 ms
    SimTime pd_accumulation = 400'000;   // T_ad^PD, 0.4 ms
    SimTime f_mode_period = 10 * kNanosPerSecond;
};

enum class TimerKind { Sfs, Pd };

struct TimerRequest {
    DatacenterId node = 0;
    TimerKind kind = TimerKind::Sfs;
    SimTime deadline = 0;
};

struct Placement {
    RequestId request = 0;
    DatacenterId host = 0;
};

struct Failure {
    RequestId request = 0;
    DatacenterId at = 0;
};

/// Side effects of handling one event at one node. The transport owns
/// delivery; the protocol only fills this in.
struct Outbox {
    std::vector<Message> messages;
    std::vector<TimerRequest> timers;
    std::vector<Placement> placements;
    std::vector<Failure> failures;
    std::vector<std::string> trace;  // human-readable protocol steps
    std::size_t pd_runs_started = 0;
};

/// In-progress push-down run at one node. The run suspends while waiting
/// for a child's PdAck.
struct PdRun {
    bool initiator = false;
    DatacenterId initiator_id = 0;
    std::optional<DatacenterId> caller;
    std::vector<ServiceRecord> records;
    std::set<RequestId> received;       // records handed down by the caller
    std::set<RequestId> own;            // records resident here when the run began
    std::set<RequestId> hosted;         // received records hosted here or below
    CpuUnits deficit = 0;
    std::vector<DatacenterId> child_order;
    std::size_t next_child = 0;
    std::optional<DatacenterId> awaiting;
};

struct NodeState {
    DatacenterId id = 0;
    CpuUnits available_cpu = 0;
    std::vector<ServiceRecord> not_assigned;   // U_s
    std::vector<ServiceRecord> push_up;        // P^up_s, not yet sent upward
    std::vector<ServiceRecord> pending_pd;     // failing records waiting for the PD timer
    std::map<RequestId, ServiceRecord> outstanding_up;  // sent to parent, ack pending
    std::map<RequestId, CpuUnits> assigned;    // reserved, not placed
    std::map<RequestId, CpuUnits> placed;
    std::vector<RequestId> placement_order;    // placed ids, oldest first
    std::map<RequestId, ServiceRecord> resident;  // record of every assigned or placed service
    bool within_pd = false;
    SimTime f_mode_until = 0;
    std::optional<SimTime> sfs_timer;
    std::optional<SimTime> pd_timer;
    std::optional<PdRun> pd;
};

/// One datacenter's protocol instance: SFS, PU, PD, F-mode SFS and F-PU.
/// Handlers are synchronous; every inter-node effect is a Message in the Outbox.
class Datacenter {
public:
    Datacenter(const System& system, const Params& params, DatacenterId id);

    const NodeState& state() const { return state_; }
    NodeState& mutable_state() { return state_; }
    DatacenterId id() const { return state_.id; }
    int level() const;

    // Transport entry points.
    void inject(std::vector<ServiceRecord> requests, SimTime now, Outbox& out);
    void receive(const Message& msg, SimTime now, Outbox& out);
    void on_timer(TimerKind kind, SimTime deadline, SimTime now, Outbox& out);

    /// Places a service directly, used to seed initial states.
    void seed_placement(const ServiceRecord& r);
    /// Frees whatever `r` holds here (placed or assigned). Returns true if anything was held.
    bool release(RequestId r);

    // Protocol procedures.
    std::vector<ServiceRecord> sort_requests(std::vector<ServiceRecord> reqs) const;
    void handle_sfs(std::vector<ServiceRecord> not_assigned, std::vector<ServiceRecord> push_up, SimTime now,
                    Outbox& out);
    void handle_f_sfs(std::vector<ServiceRecord> not_assigned, std::vector<ServiceRecord> push_up, SimTime now,
                      Outbox& out, const std::set<RequestId>& tried = {});
    void handle_pu(const std::vector<AckEntry>& from_parent, SimTime now, Outbox& out);
    void handle_f_pu(const std::vector<AckEntry>& from_parent, SimTime now, Outbox& out);
    void handle_pd(std::vector<ServiceRecord> records, CpuUnits deficit, std::optional<DatacenterId> caller,
                   DatacenterId initiator, SimTime now, Outbox& out);

    SimTime start_sfs_timer(SimTime now, Outbox& out);
    SimTime start_pd_timer(SimTime now, Outbox& out);
    void enter_f_mode(SimTime now);
    bool in_f_mode(SimTime now) const { return now < state_.f_mode_until; }

    CpuUnits beta(const ServiceRecord& r) const;
    bool is_resident(RequestId r) const { return state_.placed.count(r) || state_.assigned.count(r); }

private:
    void place(const ServiceRecord& r, CpuUnits beta, Outbox& out);
    void assign(const ServiceRecord& r, CpuUnits beta);
    void forget(RequestId r);
    void commit_assigned(RequestId r, Outbox& out);
    void run_pu(std::vector<std::pair<ServiceRecord, bool>> items, bool f_mode, Outbox& out);
    void pd_advance(SimTime now, Outbox& out);
    void pd_finish(SimTime now, Outbox& out);
    void pd_on_ack(const Message& msg, SimTime now, Outbox& out);
    bool pd_can_break() const;
    std::optional<DatacenterId> pd_route(const ServiceRecord& r) const;
    void send(Message msg, Outbox& out) const;
    void note(Outbox& out, const std::string& what) const;
    void merge_unique(std::vector<ServiceRecord>& into, std::vector<ServiceRecord> from) const;

    const System* system_;
    const Params* params_;
    NodeState state_;
};

}  // namespace dapp::protocol

#endif  // DAPP_PROTOCOL_HPP
