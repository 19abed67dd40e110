#ifndef DAPP_SIMNET_HPP
#define DAPP_SIMNET_HPP

#include <cstdint>
#include <map>
#include <optional>
#include <queue>
#include <random>
#include <string>
#include <vector>

#include "dapp/model.hpp"
#include "dapp/protocol.hpp"

namespace dapp::simnet {

constexpr std::int64_t kHeaderBits = 80;
constexpr std::int64_t kRequestIdBits = 14;
constexpr std::int64_t kClassBits = 4;
constexpr std::int64_t kDatacenterBits = 12;
constexpr std::int64_t kDeficitBits = 16;
constexpr std::int64_t kStatusBits = 1;
constexpr std::int64_t kPdRecordExtraBits = 5;

/// Exact wire size of a control message, in bits.
std::int64_t message_bits(const protocol::Message& msg, const Topology& topology);
/// Serialization delay on a link, rounded up to whole nanoseconds.
SimTime transmission_delay(std::int64_t bits, const LinkParams& link);

struct Config {
    protocol::Params params;
    std::uint64_t event_budget = 20'000'000;
    bool check_invariants = true;
    bool keep_log = false;
    SimTime sample_period = kNanosPerSecond;
    // Non-zero: random order among same-time events and up to this much
    // extra delay per message (links stay FIFO).
    std::uint64_t interleave_seed = 0;
    SimTime max_jitter = 0;
};

/// Request already running when the simulation starts.
struct InitialPlacement {
    RequestId request = 0;
    ClassId class_id = 0;
    DatacenterId poa = 0;
    DatacenterId host = 0;
};

/// Arrival, move (known request at a new PoA) or departure.
struct UserEvent {
    SimTime time = 0;
    RequestId request = 0;
    ClassId class_id = 0;
    DatacenterId poa = 0;
    bool departure = false;
};

enum class Outcome { Ok, Diverged, Failure };
const char* to_string(Outcome o);

struct SampledService {
    DatacenterId host = 0;
    ClassId class_id = 0;
    std::vector<DatacenterId> feasible;  // at sampling time
};

/// Global placement at one instant: every live service that has a host.
struct Sample {
    SimTime time = 0;
    std::map<RequestId, SampledService> services;
};

struct RunReport {
    Outcome outcome = Outcome::Ok;
    std::uint64_t events = 0;
    std::uint64_t messages = 0;
    std::int64_t bits = 0;
    std::map<protocol::MessageKind, std::uint64_t> messages_by_kind;
    std::uint64_t pd_runs = 0;
    std::uint64_t injected = 0;  // SFS injections, new and critical
    std::uint64_t fifo_clamps = 0;
    std::vector<protocol::Failure> failures;
    std::vector<RequestId> unplaced;     // alive but unhosted when the run stopped
    std::vector<std::string> violations; // invariant breaches
    std::map<RequestId, DatacenterId> hosts;
    std::vector<Sample> samples;
    std::vector<std::string> log;
    SimTime end_time = 0;

    double overhead_bytes_per_request() const;
};

/// Discrete-event world: datacenters, links, users and the authoritative
/// map of where each service runs.
class World {
public:
    World(const System& system, const PathLatency& latency, Config config);

    void seed(const std::vector<InitialPlacement>& placements);
    void schedule(const std::vector<UserEvent>& events);

    /// Processes events with time <= until. Returns false once the event budget is spent.
    bool run_until(SimTime until);
    /// Runs until no events remain (or the budget is spent).
    RunReport run();
    RunReport report() const;

    SimTime now() const { return now_; }
    const protocol::Datacenter& datacenter(DatacenterId s) const { return nodes_.at(s); }
    std::optional<DatacenterId> host(RequestId r) const;
    std::vector<std::string> check_invariants() const;

private:
    enum class Kind { User, Deliver, Timer, Sample };
    struct Event {
        SimTime time = 0;
        std::uint64_t tie = 0;
        std::uint64_t seq = 0;
        Kind kind = Kind::User;
        std::size_t index = 0;  // into users_ or messages_
        DatacenterId node = 0;
        protocol::TimerKind timer = protocol::TimerKind::Sfs;
    };
    struct Later {
        bool operator()(const Event& a, const Event& b) const;
    };
    struct Tracked {
        Request req;
        bool in_flight = false;
        bool departed = false;
        bool failed = false;
    };

    void push(Event e);
    void dispatch(const Event& e);
    void on_user(const UserEvent& u);
    void apply(protocol::Outbox& out);
    void commit(RequestId r, DatacenterId at);
    void inject(RequestId r, bool critical);
    protocol::ServiceRecord record_of(const Tracked& t, bool is_new) const;
    void log(const std::string& line);
    void sample();

    const System* system_;
    PathLatency latency_;
    Config config_;
    std::vector<protocol::Datacenter> nodes_;
    std::priority_queue<Event, std::vector<Event>, Later> queue_;
    std::uint64_t seq_ = 0;
    SimTime now_ = 0;
    std::mt19937_64 rng_;
    std::vector<UserEvent> users_;
    std::vector<protocol::Message> messages_;
    std::map<std::pair<DatacenterId, DatacenterId>, SimTime> link_busy_;
    std::map<RequestId, Tracked> requests_;
    std::optional<SimTime> last_user_time_;
    bool sampling_ = false;
    RunReport report_;
};

}  // namespace dapp::simnet

#endif  // DAPP_SIMNET_HPP
