#ifndef DAPP_MODEL_HPP
#define DAPP_MODEL_HPP

#include <cstdint>
#include <functional>
#include <limits>
#include <map>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace dapp {

using DatacenterId = std::uint32_t;
using RequestId = std::uint32_t;
using ClassId = std::uint32_t;
using CpuUnits = std::int64_t;
using CostUnits = std::int64_t;

// Simulation time in integer nanoseconds. All delay arithmetic is exact.
using SimTime = std::int64_t;

constexpr SimTime kNanosPerSecond = 1'000'000'000;
constexpr CostUnits kInfiniteCost = std::numeric_limits<CostUnits>::max();

inline SimTime seconds(double s) { return static_cast<SimTime>(s * 1e9 + (s >= 0 ? 0.5 : -0.5)); }
inline double to_seconds(SimTime t) { return static_cast<double>(t) / 1e9; }

class ModelError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

struct LinkParams {
    SimTime propagation_delay = 22'000;           // 22 us
    std::int64_t control_capacity_bps = 10'000'000;
};

struct TreeShape {
    int levels = 6;
    int arity = 4;
    CpuUnits leaf_capacity = 1;
    LinkParams link;
    // Keyed by node id of the complete (unpruned) tree, BFS order from root 0.
    std::map<DatacenterId, CpuUnits> capacity_overrides;
    // Leaf ids of the complete tree to remove; interior nodes left childless go too.
    std::set<DatacenterId> pruned_leaves;
};

/// Immutable rooted tree of datacenters. Ids are dense and assigned in BFS
/// order, so the root is always 0 and a parent's id is smaller than its
/// children's. Leaves sit at level 0, the root at level `height() - 1`.
class Topology {
public:
    struct Node {
        DatacenterId id = 0;
        int level = 0;
        std::optional<DatacenterId> parent;
        std::vector<DatacenterId> children;
        CpuUnits capacity = 0;
        LinkParams uplink;  // link to the parent; unused at the root
    };

    Topology() = default;
    /// Validates tree shape: single root, consistent levels, leaves at 0,
    /// positive capacities, ids equal to positions.
    explicit Topology(std::vector<Node> nodes);

    std::size_t size() const { return nodes_.size(); }
    const Node& node(DatacenterId s) const;
    const std::vector<Node>& nodes() const { return nodes_; }

    DatacenterId root() const { return 0; }
    int height() const { return nodes_.empty() ? 0 : nodes_[0].level + 1; }
    int level(DatacenterId s) const { return node(s).level; }
    CpuUnits capacity(DatacenterId s) const { return node(s).capacity; }
    std::optional<DatacenterId> parent(DatacenterId s) const { return node(s).parent; }
    const std::vector<DatacenterId>& children(DatacenterId s) const { return node(s).children; }
    bool is_leaf(DatacenterId s) const { return node(s).children.empty(); }
    bool contains(DatacenterId s) const { return s < nodes_.size(); }

    /// Leaves in ascending id order; the k-th leaf is the PoA named poa_k.
    const std::vector<DatacenterId>& leaves() const { return leaves_; }
    std::optional<std::size_t> leaf_index(DatacenterId s) const;

    /// `s` and all of its descendants, ascending.
    std::vector<DatacenterId> subtree(DatacenterId s) const;
    bool in_subtree(DatacenterId root_of_subtree, DatacenterId s) const;
    /// Path from `s` up to the root, inclusive at both ends.
    std::vector<DatacenterId> path_to_root(DatacenterId s) const;
    /// Child of `ancestor` whose subtree holds `descendant`.
    std::optional<DatacenterId> child_toward(DatacenterId ancestor, DatacenterId descendant) const;

    std::string name(DatacenterId s) const { return "s" + std::to_string(s); }

private:
    std::vector<Node> nodes_;
    std::vector<DatacenterId> leaves_;
    std::vector<std::size_t> leaf_index_;
};

/// Complete arity-ary tree with capacity (level + 1) * leaf_capacity, after
/// applying overrides and pruning.
Topology build_tree(const TreeShape& shape);
Topology build_tree(int levels, int arity, CpuUnits leaf_capacity, LinkParams link = {});

struct ServiceClass {
    ClassId id = 0;
    std::string name;
    double latency_constraint = 0.0;              // seconds, round trip
    std::map<int, CpuUnits> cpu_demand;           // by level; absent = infeasible
    std::map<int, CostUnits> placement_cost;      // by level

    bool feasible_at_level(int level) const { return cpu_demand.count(level) != 0; }
    /// Throws ModelError when the class breaks its invariants.
    void validate() const;
};

struct CostModel {
    CostUnits migration_cost = 600;
    // Data-plane traffic cost; already folded into the per-level placement
    // cost tables, kept for configuration round-trips.
    CostUnits per_bit_link_cost = 3;

    CostUnits migration(DatacenterId from, DatacenterId to) const { return from == to ? 0 : migration_cost; }
};

enum class Lifecycle { New, Assigned, Placed, Critical, Departed, Failed };
const char* to_string(Lifecycle l);

struct Request {
    RequestId id = 0;
    ClassId class_id = 0;
    DatacenterId poa = 0;
    std::vector<DatacenterId> feasible_set;  // poa upward, contiguous
    Lifecycle lifecycle = Lifecycle::New;
    std::optional<DatacenterId> current_host;

    DatacenterId top_feasible() const { return feasible_set.back(); }
    bool is_feasible(DatacenterId s) const;
    /// Position of `s` in feasible_set, or -1.
    int feasible_index(DatacenterId s) const;
};

/// The static part of a system: tree, service classes and cost constants.
struct System {
    Topology topology;
    std::vector<ServiceClass> classes;
    CostModel costs;

    const ServiceClass& service_class(ClassId c) const;
    /// CPU needed to host the request on `s`; nullopt when `s` is not latency-feasible.
    std::optional<CpuUnits> beta(const Request& r, DatacenterId s) const;
    std::optional<CpuUnits> beta(ClassId c, const std::vector<DatacenterId>& feasible, DatacenterId s) const;
    CostUnits placement_cost(const Request& r, DatacenterId s) const;  // kInfiniteCost if infeasible
    CostUnits placement_cost(ClassId c, const std::vector<DatacenterId>& feasible, DatacenterId s) const;
};

using PathLatency = std::function<double(int level)>;

/// Round-trip latency from a PoA to the datacenter at `level`, from a table.
PathLatency rtt_table(std::vector<double> seconds_by_level);

/// Longest prefix of the poa->root path whose round-trip latency fits the
/// class deadline and where the class defines a CPU demand.
std::vector<DatacenterId> feasible_set_for(const ServiceClass& cls, DatacenterId poa, const Topology& topology,
                                           const PathLatency& path_latency);

/// Binary placement matrices. `y` is the scheduled placement, `x` the current one.
struct PlacementSnapshot {
    std::set<std::pair<RequestId, DatacenterId>> x;
    std::set<std::pair<RequestId, DatacenterId>> y;

    void schedule(RequestId r, DatacenterId s) { y.emplace(r, s); }
    void current(RequestId r, DatacenterId s) { x.emplace(r, s); }
    std::optional<DatacenterId> scheduled_host(RequestId r) const;
    std::optional<DatacenterId> current_host(RequestId r) const;
};

CostUnits saturating_add(CostUnits a, CostUnits b);

/// Objective: migrations between the two snapshots plus processing cost of
/// the scheduled placement. `before.y` is read as the current placement x.
CostUnits objective_cost(const PlacementSnapshot& before, const PlacementSnapshot& after, const System& system,
                         const std::vector<Request>& requests);

struct Violation {
    enum class Kind { NotPlaced, MultiplyPlaced, OverCapacity, Infeasible } kind;
    std::optional<RequestId> request;
    std::optional<DatacenterId> datacenter;
    std::string describe() const;
};

struct FeasibilityVerdict {
    std::vector<Violation> violations;
    std::map<DatacenterId, CpuUnits> available;  // C_s minus scheduled demand
    bool ok() const { return violations.empty(); }
};

/// Checks single placement and capacity for every request in `requests`.
FeasibilityVerdict check_feasible(const PlacementSnapshot& snapshot, const System& system,
                                  const std::vector<Request>& requests);

}  // namespace dapp

#endif  // DAPP_MODEL_HPP
