#ifndef DAPP_TESTS_SUPPORT_HPP
#define DAPP_TESTS_SUPPORT_HPP

#include <functional>
#include <memory>
#include <random>

#include "dapp/baselines.hpp"

namespace dapp::testing {

/// Epoch problem that owns its system.
struct OwnedProblem {
    std::unique_ptr<System> system;
    baselines::EpochProblem problem;
};

inline int pick(std::mt19937_64& rng, int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng); }

/// Random tree of at most `max_nodes` nodes, two classes, up to `max_requests`
/// services split between new, critical and fixed ones.
inline OwnedProblem random_problem(std::mt19937_64& rng, std::size_t max_nodes, int max_requests) {
    OwnedProblem out;
    out.system = std::make_unique<System>();
    System& sys = *out.system;
    int levels = pick(rng, 1, 3), arity = pick(rng, 1, 3);
    auto size = [&] {
        std::size_t n = 0, w = 1;
        for (int l = 0; l < levels; ++l, w *= static_cast<std::size_t>(arity)) n += w;
        return n;
    };
    while (size() > max_nodes) (arity > 1 ? arity : levels)--;
    sys.topology = build_tree(levels, arity, pick(rng, 1, 4));
    for (int c = 0; c < 2; ++c) {
        ServiceClass cls;
        cls.id = static_cast<ClassId>(c);
        cls.name = "c" + std::to_string(c);
        cls.latency_constraint = 1;
        CostUnits cost = pick(rng, 3 * levels, 5 * levels + 5);
        for (int l = 0; l < levels; ++l) {
            cls.cpu_demand[l] = pick(rng, 1, 3);
            cls.placement_cost[l] = cost;
            cost -= pick(rng, 1, 3);
        }
        sys.classes.push_back(cls);
    }
    sys.costs.migration_cost = pick(rng, 0, 1) ? 600 : pick(rng, 1, 8);
    const auto& topo = sys.topology;
    std::map<DatacenterId, CpuUnits> room;
    for (const auto& n : topo.nodes()) room[n.id] = n.capacity;
    const int n = pick(rng, 1, max_requests);
    for (int i = 0; i < n; ++i) {
        baselines::EpochRequest r;
        r.id = static_cast<RequestId>(i);
        r.class_id = static_cast<ClassId>(pick(rng, 0, 1));
        const DatacenterId poa = topo.leaves()[static_cast<std::size_t>(pick(rng, 0, int(topo.leaves().size()) - 1))];
        auto path = topo.path_to_root(poa);
        path.resize(static_cast<std::size_t>(pick(rng, 1, int(path.size()))));
        r.feasible = path;
        const int kind = pick(rng, 0, 2);
        if (kind == 0) {
            out.problem.requests.push_back(r);
            continue;
        }
        const DatacenterId h = path[static_cast<std::size_t>(pick(rng, 0, int(path.size()) - 1))];
        const CpuUnits b = sys.service_class(r.class_id).cpu_demand.at(topo.level(h));
        if (kind == 2 && room[h] >= b) {
            room[h] -= b;
            r.current_host = h;
            r.is_new = false;
            out.problem.fixed.push_back(r);
        } else {
            // Critical: the old host is anywhere in the tree, possibly out of reach now.
            r.current_host = static_cast<DatacenterId>(pick(rng, 0, int(topo.size()) - 1));
            r.is_new = false;
            out.problem.requests.push_back(r);
        }
    }
    out.problem.system = out.system.get();
    return out;
}

/// Cheapest full placement by enumeration, costed straight from the class tables.
inline std::optional<CostUnits> exhaustive_optimum(const baselines::EpochProblem& p) {
    const System& sys = *p.system;
    std::vector<const baselines::EpochRequest*> all;
    for (const auto& r : p.requests) all.push_back(&r);
    for (const auto& r : p.fixed) all.push_back(&r);
    std::vector<CpuUnits> used(sys.topology.size(), 0);
    std::optional<CostUnits> best;
    std::function<void(std::size_t, CostUnits)> go = [&](std::size_t i, CostUnits cost) {
        if (i == all.size()) {
            if (!best || cost < *best) best = cost;
            return;
        }
        const auto& r = *all[i];
        const auto& cls = sys.service_class(r.class_id);
        for (DatacenterId s : r.feasible) {
            const int l = sys.topology.level(s);
            const CpuUnits b = cls.cpu_demand.at(l);
            if (used[s] + b > sys.topology.capacity(s)) continue;
            used[s] += b;
            CostUnits c = cls.placement_cost.at(l);
            if (r.current_host && *r.current_host != s) c += sys.costs.migration_cost;
            go(i + 1, cost + c);
            used[s] -= b;
        }
    };
    go(0, 0);
    return best;
}

}  // namespace dapp::testing

#endif  // DAPP_TESTS_SUPPORT_HPP
