#include "dapp/model.hpp"

#include <algorithm>
#include <deque>
#include <sstream>

namespace dapp {

Topology::Topology(std::vector<Node> nodes) : nodes_(std::move(nodes)) {
    if (nodes_.empty()) throw ModelError("topology has no nodes");
    std::size_t roots = 0;
    for (std::size_t i = 0; i < nodes_.size(); ++i) {
        const Node& n = nodes_[i];
        if (n.id != i) throw ModelError("node ids must be dense and match their position");
        if (n.capacity <= 0) throw ModelError("capacity of " + name(n.id) + " must be positive");
        if (!n.parent) {
            ++roots;
            if (i != 0) throw ModelError("root must have id 0");
            continue;
        }
        if (*n.parent >= n.id) throw ModelError("parent id must precede child id");
        const Node& p = nodes_[*n.parent];
        if (p.level != n.level + 1) throw ModelError("level of " + name(n.id) + " must be one below its parent");
        if (std::find(p.children.begin(), p.children.end(), n.id) == p.children.end())
            throw ModelError("parent of " + name(n.id) + " does not list it as child");
    }
    if (roots != 1) throw ModelError("topology must have exactly one root");
    leaf_index_.assign(nodes_.size(), static_cast<std::size_t>(-1));
    for (const Node& n : nodes_) {
        for (DatacenterId c : n.children)
            if (c >= nodes_.size() || nodes_[c].parent != n.id) throw ModelError("child/parent maps disagree");
        if (n.children.empty()) {
            if (n.level != 0) throw ModelError("leaf " + name(n.id) + " must be at level 0");
            leaf_index_[n.id] = leaves_.size();
            leaves_.push_back(n.id);
        }
    }
}

const Topology::Node& Topology::node(DatacenterId s) const {
    if (s >= nodes_.size()) throw ModelError("unknown datacenter id " + std::to_string(s));
    return nodes_[s];
}

std::optional<std::size_t> Topology::leaf_index(DatacenterId s) const {
    if (s >= nodes_.size() || leaf_index_[s] == static_cast<std::size_t>(-1)) return std::nullopt;
    return leaf_index_[s];
}

std::vector<DatacenterId> Topology::subtree(DatacenterId s) const {
    std::vector<DatacenterId> out;
    std::deque<DatacenterId> pending{node(s).id};
    while (!pending.empty()) {
        DatacenterId cur = pending.front();
        pending.pop_front();
        out.push_back(cur);
        for (DatacenterId c : nodes_[cur].children) pending.push_back(c);
    }
    std::sort(out.begin(), out.end());
    return out;
}

bool Topology::in_subtree(DatacenterId root_of_subtree, DatacenterId s) const {
    node(root_of_subtree);
    for (std::optional<DatacenterId> cur = node(s).id; cur; cur = nodes_[*cur].parent)
        if (*cur == root_of_subtree) return true;
    return false;
}

std::vector<DatacenterId> Topology::path_to_root(DatacenterId s) const {
    std::vector<DatacenterId> out;
    for (std::optional<DatacenterId> cur = node(s).id; cur; cur = nodes_[*cur].parent) out.push_back(*cur);
    return out;
}

std::optional<DatacenterId> Topology::child_toward(DatacenterId ancestor, DatacenterId descendant) const {
    node(ancestor);
    std::optional<DatacenterId> prev;
    for (std::optional<DatacenterId> cur = node(descendant).id; cur; cur = nodes_[*cur].parent) {
        if (*cur == ancestor) return prev;
        prev = cur;
    }
    return std::nullopt;
}

Topology build_tree(const TreeShape& shape) {
    if (shape.levels < 1 || shape.arity < 1 || shape.leaf_capacity <= 0)
        throw ModelError("tree dimensions and leaf capacity must be positive");

    // Complete tree in BFS order.
    struct Proto {
        int level;
        std::optional<std::size_t> parent;
        std::vector<std::size_t> children;
        bool alive = true;
    };
    std::vector<Proto> full;
    full.push_back({shape.levels - 1, std::nullopt, {}});
    for (std::size_t i = 0; i < full.size(); ++i) {
        if (full[i].level == 0) continue;
        for (int k = 0; k < shape.arity; ++k) {
            full[i].children.push_back(full.size());
            full.push_back({full[i].level - 1, i, {}});
        }
    }
    for (DatacenterId leaf : shape.pruned_leaves) {
        if (leaf >= full.size() || full[leaf].level != 0)
            throw ModelError("pruned id " + std::to_string(leaf) + " is not a leaf");
        full[leaf].alive = false;
    }
    // Interior nodes die when all their children died; children precede parents in reverse BFS.
    for (std::size_t i = full.size(); i-- > 0;) {
        if (full[i].level == 0) continue;
        bool any = std::any_of(full[i].children.begin(), full[i].children.end(),
                               [&](std::size_t c) { return full[c].alive; });
        full[i].alive = any;
    }
    if (!full[0].alive) throw ModelError("pruning removed every leaf");
    for (const auto& [id, cap] : shape.capacity_overrides)
        if (id >= full.size()) throw ModelError("capacity override for unknown id " + std::to_string(id));

    std::vector<DatacenterId> remap(full.size(), 0);
    std::vector<Topology::Node> nodes;
    for (std::size_t i = 0; i < full.size(); ++i) {
        if (!full[i].alive) continue;
        remap[i] = static_cast<DatacenterId>(nodes.size());
        Topology::Node n;
        n.id = remap[i];
        n.level = full[i].level;
        if (full[i].parent) {
            n.parent = remap[*full[i].parent];
            nodes[*n.parent].children.push_back(n.id);
        }
        auto ov = shape.capacity_overrides.find(static_cast<DatacenterId>(i));
        n.capacity = ov != shape.capacity_overrides.end() ? ov->second : (n.level + 1) * shape.leaf_capacity;
        n.uplink = shape.link;
        nodes.push_back(std::move(n));
    }
    return Topology(std::move(nodes));
}

Topology build_tree(int levels, int arity, CpuUnits leaf_capacity, LinkParams link) {
    TreeShape shape;
    shape.levels = levels;
    shape.arity = arity;
    shape.leaf_capacity = leaf_capacity;
    shape.link = link;
    return build_tree(shape);
}

void ServiceClass::validate() const {
    if (cpu_demand.empty()) throw ModelError("class " + name + " has no feasible level");
    for (const auto& [level, beta] : cpu_demand) {
        if (beta <= 0) throw ModelError("class " + name + " has non-positive cpu demand");
        if (!placement_cost.count(level)) throw ModelError("class " + name + " lacks a cost for a feasible level");
    }
    std::optional<CostUnits> prev;
    for (const auto& [level, cost] : placement_cost) {
        if (cost < 0) throw ModelError("class " + name + " has a negative placement cost");
        if (prev && cost >= *prev) throw ModelError("placement cost of class " + name + " must decrease with level");
        prev = cost;
    }
}

const char* to_string(Lifecycle l) {
    switch (l) {
        case Lifecycle::New: return "new";
        case Lifecycle::Assigned: return "assigned";
        case Lifecycle::Placed: return "placed";
        case Lifecycle::Critical: return "critical";
        case Lifecycle::Departed: return "departed";
        case Lifecycle::Failed: return "failed";
    }
    return "?";
}

bool Request::is_feasible(DatacenterId s) const { return feasible_index(s) >= 0; }

int Request::feasible_index(DatacenterId s) const {
    for (std::size_t i = 0; i < feasible_set.size(); ++i)
        if (feasible_set[i] == s) return static_cast<int>(i);
    return -1;
}

const ServiceClass& System::service_class(ClassId c) const {
    for (const auto& cls : classes)
        if (cls.id == c) return cls;
    throw ModelError("unknown service class " + std::to_string(c));
}

std::optional<CpuUnits> System::beta(ClassId c, const std::vector<DatacenterId>& feasible, DatacenterId s) const {
    if (std::find(feasible.begin(), feasible.end(), s) == feasible.end()) return std::nullopt;
    const auto& cls = service_class(c);
    auto it = cls.cpu_demand.find(topology.level(s));
    if (it == cls.cpu_demand.end()) return std::nullopt;
    return it->second;
}

std::optional<CpuUnits> System::beta(const Request& r, DatacenterId s) const {
    return beta(r.class_id, r.feasible_set, s);
}

CostUnits System::placement_cost(ClassId c, const std::vector<DatacenterId>& feasible, DatacenterId s) const {
    if (!beta(c, feasible, s)) return kInfiniteCost;
    return service_class(c).placement_cost.at(topology.level(s));
}

CostUnits System::placement_cost(const Request& r, DatacenterId s) const {
    return placement_cost(r.class_id, r.feasible_set, s);
}

PathLatency rtt_table(std::vector<double> seconds_by_level) {
    return [table = std::move(seconds_by_level)](int level) {
        if (level < 0 || static_cast<std::size_t>(level) >= table.size())
            return std::numeric_limits<double>::infinity();
        return table[level];
    };
}

std::vector<DatacenterId> feasible_set_for(const ServiceClass& cls, DatacenterId poa, const Topology& topology,
                                           const PathLatency& path_latency) {
    if (!topology.is_leaf(poa)) throw ModelError("PoA " + topology.name(poa) + " is not a leaf");
    std::vector<DatacenterId> out;
    for (DatacenterId s : topology.path_to_root(poa)) {
        int level = topology.level(s);
        if (!cls.feasible_at_level(level) || path_latency(level) > cls.latency_constraint) break;
        out.push_back(s);
    }
    return out;
}

namespace {
std::optional<DatacenterId> single_host(const std::set<std::pair<RequestId, DatacenterId>>& m, RequestId r) {
    auto it = m.lower_bound({r, 0});
    if (it == m.end() || it->first != r) return std::nullopt;
    return it->second;
}
}  // namespace

std::optional<DatacenterId> PlacementSnapshot::scheduled_host(RequestId r) const { return single_host(y, r); }
std::optional<DatacenterId> PlacementSnapshot::current_host(RequestId r) const { return single_host(x, r); }

CostUnits saturating_add(CostUnits a, CostUnits b) {
    if (a == kInfiniteCost || b == kInfiniteCost) return kInfiniteCost;
    if (a > kInfiniteCost - b) return kInfiniteCost;
    return a + b;
}

CostUnits objective_cost(const PlacementSnapshot& before, const PlacementSnapshot& after, const System& system,
                         const std::vector<Request>& requests) {
    CostUnits total = 0;
    for (const Request& r : requests) {
        auto x_begin = before.y.lower_bound({r.id, 0});
        auto y_begin = after.y.lower_bound({r.id, 0});
        for (auto y = y_begin; y != after.y.end() && y->first == r.id; ++y) {
            total = saturating_add(total, system.placement_cost(r, y->second));
            for (auto x = x_begin; x != before.y.end() && x->first == r.id; ++x)
                total = saturating_add(total, system.costs.migration(x->second, y->second));
        }
    }
    return total;
}

std::string Violation::describe() const {
    std::ostringstream os;
    switch (kind) {
        case Kind::NotPlaced: os << "request " << *request << " has no scheduled placement"; break;
        case Kind::MultiplyPlaced: os << "request " << *request << " is scheduled on several datacenters"; break;
        case Kind::OverCapacity: os << "datacenter s" << *datacenter << " exceeds its capacity"; break;
        case Kind::Infeasible:
            os << "request " << *request << " is scheduled on non-feasible datacenter s" << *datacenter;
            break;
    }
    return os.str();
}

FeasibilityVerdict check_feasible(const PlacementSnapshot& snapshot, const System& system,
                                  const std::vector<Request>& requests) {
    FeasibilityVerdict v;
    const Topology& topo = system.topology;
    for (const auto& n : topo.nodes()) v.available[n.id] = n.capacity;
    for (const Request& r : requests) {
        std::size_t count = 0;
        for (auto it = snapshot.y.lower_bound({r.id, 0}); it != snapshot.y.end() && it->first == r.id; ++it) {
            ++count;
            auto beta = system.beta(r, it->second);
            if (!beta) {
                v.violations.push_back({Violation::Kind::Infeasible, r.id, it->second});
                continue;
            }
            v.available[it->second] -= *beta;
        }
        if (count == 0) v.violations.push_back({Violation::Kind::NotPlaced, r.id, std::nullopt});
        if (count > 1) v.violations.push_back({Violation::Kind::MultiplyPlaced, r.id, std::nullopt});
    }
    for (const auto& [s, a] : v.available)
        if (a < 0) v.violations.push_back({Violation::Kind::OverCapacity, std::nullopt, s});
    return v;
}

}  // namespace dapp
