#ifndef DAPP_BASELINES_HPP
#define DAPP_BASELINES_HPP

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "dapp/model.hpp"

namespace dapp::baselines {

struct EpochRequest {
    RequestId id = 0;
    ClassId class_id = 0;
    std::vector<DatacenterId> feasible;  // poa upward
    std::optional<DatacenterId> current_host;
    bool is_new = true;
};

/// One-second snapshot handed to a centralized algorithm. `requests` are the
/// critical and new services, in arrival order; `fixed` are the services that
/// stay where they are unless an algorithm chooses to re-place them.
struct EpochProblem {
    const System* system = nullptr;
    std::vector<EpochRequest> requests;
    std::vector<EpochRequest> fixed;

    /// Capacity net of the fixed services.
    std::map<DatacenterId, CpuUnits> available() const;
    /// Throws ModelError on empty feasible sets, unknown classes or fixed services without a host.
    void validate() const;
};

enum class Verdict { Ok, Infeasible, BudgetExceeded };
const char* to_string(Verdict v);

struct Solution {
    Verdict verdict = Verdict::Infeasible;
    // Host of every request and of every fixed service; fixed ones keep
    // their current host unless re-placed.
    std::map<RequestId, DatacenterId> hosts;
    CostUnits cost = 0;
    std::uint64_t nodes_explored = 0;

    bool ok() const { return verdict == Verdict::Ok; }
};

/// Placement plus migration cost of `hosts` over requests and fixed services.
CostUnits epoch_cost(const EpochProblem& p, const std::map<RequestId, DatacenterId>& hosts);
/// Capacity and latency check of `hosts`; empty when feasible.
std::vector<std::string> check_solution(const EpochProblem& p, const std::map<RequestId, DatacenterId>& hosts);

Solution ffit(const EpochProblem& p);
Solution bupu(const EpochProblem& p);
Solution cpvnf(const EpochProblem& p);
Solution multiscaler(const EpochProblem& p);

/// Minimum-cost placement of every request and fixed service with full capacity.
/// With `first_feasible` the search stops at the first complete placement.
Solution exact_optimal(const EpochProblem& p, std::uint64_t node_budget = 5'000'000, bool first_feasible = false);

struct SearchResult {
    enum class Status { Found, NoUpperBound } status = Status::Found;
    CpuUnits value = 0;
    std::uint64_t probes = 0;
};

/// Least x in [lo, hi] (to within tolerance) with feasible(x), assuming monotonicity.
SearchResult min_cpu_binary_search(const std::function<bool(CpuUnits)>& feasible, CpuUnits lo, CpuUnits hi,
                                   CpuUnits tolerance);

using Algorithm = std::function<Solution(const EpochProblem&)>;
/// Lookup by name: ffit, bupu, cpvnf, multiscaler, exact. Throws ModelError otherwise.
Algorithm algorithm(const std::string& name);

}  // namespace dapp::baselines

#endif  // DAPP_BASELINES_HPP
