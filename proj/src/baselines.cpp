#include "dapp/baselines.hpp"

#include <algorithm>
#include <numeric>
#include <set>

namespace dapp::baselines {

namespace {

std::optional<CpuUnits> beta_at(const System& sys, const EpochRequest& r, DatacenterId s) {
    return sys.beta(r.class_id, r.feasible, s);
}

std::size_t above(const EpochRequest& r, DatacenterId s) {
    auto it = std::find(r.feasible.begin(), r.feasible.end(), s);
    return static_cast<std::size_t>(r.feasible.end() - it) - 1;
}

void fill_fixed(const EpochProblem& p, Solution& sol) {
    for (const auto& f : p.fixed) sol.hosts[f.id] = *f.current_host;
}

Solution finish(const EpochProblem& p, Solution sol) {
    sol.verdict = Verdict::Ok;
    sol.cost = epoch_cost(p, sol.hosts);
    return sol;
}

Solution infeasible() { return Solution{}; }

// Nodes sorted bottom-up: level ascending, then id.
std::vector<DatacenterId> bottom_up_order(const Topology& topo, const std::vector<DatacenterId>& nodes) {
    auto out = nodes;
    std::sort(out.begin(), out.end(), [&](DatacenterId a, DatacenterId b) {
        if (topo.level(a) != topo.level(b)) return topo.level(a) < topo.level(b);
        return a < b;
    });
    return out;
}

}  // namespace

const char* to_string(Verdict v) {
    switch (v) {
        case Verdict::Ok: return "OK";
        case Verdict::Infeasible: return "INFEASIBLE";
        case Verdict::BudgetExceeded: return "BUDGET_EXCEEDED";
    }
    return "?";
}

std::map<DatacenterId, CpuUnits> EpochProblem::available() const {
    std::map<DatacenterId, CpuUnits> a;
    for (const auto& n : system->topology.nodes()) a[n.id] = n.capacity;
    for (const auto& f : fixed) {
        auto b = system->beta(f.class_id, f.feasible, *f.current_host);
        if (!b) {
            // A fixed service outside its feasible set still occupies its host.
            const auto& cls = system->service_class(f.class_id);
            auto it = cls.cpu_demand.find(system->topology.level(*f.current_host));
            b = it == cls.cpu_demand.end() ? 0 : it->second;
        }
        a[*f.current_host] -= *b;
    }
    return a;
}

void EpochProblem::validate() const {
    if (!system) throw ModelError("epoch problem without a system");
    std::set<RequestId> seen;
    for (const auto* list : {&requests, &fixed}) {
        for (const auto& r : *list) {
            if (!seen.insert(r.id).second) throw ModelError("request r" + std::to_string(r.id) + " listed twice");
            if (r.feasible.empty()) throw ModelError("request r" + std::to_string(r.id) + " has no feasible datacenter");
            system->service_class(r.class_id);
        }
    }
    for (const auto& f : fixed)
        if (!f.current_host) throw ModelError("fixed service r" + std::to_string(f.id) + " has no host");
}

CostUnits epoch_cost(const EpochProblem& p, const std::map<RequestId, DatacenterId>& hosts) {
    CostUnits total = 0;
    for (const auto* list : {&p.requests, &p.fixed}) {
        for (const auto& r : *list) {
            auto it = hosts.find(r.id);
            DatacenterId h = it != hosts.end() ? it->second : r.current_host.value_or(0);
            if (it == hosts.end() && !r.current_host) return kInfiniteCost;
            total = saturating_add(total, p.system->placement_cost(r.class_id, r.feasible, h));
            if (r.current_host) total = saturating_add(total, p.system->costs.migration(*r.current_host, h));
        }
    }
    return total;
}

std::vector<std::string> check_solution(const EpochProblem& p, const std::map<RequestId, DatacenterId>& hosts) {
    std::vector<std::string> errs;
    const auto& topo = p.system->topology;
    std::map<DatacenterId, CpuUnits> used;
    for (const auto* list : {&p.requests, &p.fixed}) {
        for (const auto& r : *list) {
            auto it = hosts.find(r.id);
            if (it == hosts.end()) {
                errs.push_back("r" + std::to_string(r.id) + " not placed");
                continue;
            }
            auto b = p.system->beta(r.class_id, r.feasible, it->second);
            if (!b) {
                errs.push_back("r" + std::to_string(r.id) + " on infeasible " + topo.name(it->second));
                continue;
            }
            used[it->second] += *b;
        }
    }
    for (const auto& [s, u] : used)
        if (u > topo.capacity(s)) errs.push_back(topo.name(s) + " over capacity");
    return errs;
}

Solution ffit(const EpochProblem& p) {
    p.validate();
    auto avail = p.available();
    Solution sol;
    fill_fixed(p, sol);
    for (const auto& r : p.requests) {
        bool placed = false;
        for (DatacenterId s : r.feasible) {
            auto b = beta_at(*p.system, r, s);
            if (b && avail[s] >= *b) {
                avail[s] -= *b;
                sol.hosts[r.id] = s;
                placed = true;
                break;
            }
        }
        if (!placed) return infeasible();
    }
    return finish(p, std::move(sol));
}

Solution bupu(const EpochProblem& p) {
    p.validate();
    const System& sys = *p.system;
    const Topology& topo = sys.topology;
    auto avail = p.available();

    std::map<RequestId, EpochRequest> items;  // services this algorithm places
    for (const auto& r : p.requests) items[r.id] = r;
    std::map<RequestId, DatacenterId> hosts;
    std::map<RequestId, const EpochRequest*> fixed_left;  // fixed services still untouched
    for (const auto& f : p.fixed) fixed_left[f.id] = &f;

    auto key_less = [&](DatacenterId s) {
        return [&, s](RequestId a, RequestId b) {
            const auto& ra = items.at(a);
            const auto& rb = items.at(b);
            auto ua = above(ra, s), ub = above(rb, s);
            if (ua != ub) return ua < ub;
            auto ba = *beta_at(sys, ra, s), bb = *beta_at(sys, rb, s);
            if (ba != bb) return ba < bb;
            if (ra.is_new != rb.is_new) return !ra.is_new;
            return a < b;
        };
    };
    // Places what fits at s; true when a request whose last option is s stays out.
    auto place_at = [&](DatacenterId s) {
        std::vector<RequestId> cands;
        for (const auto& [id, r] : items)
            if (!hosts.count(id) && beta_at(sys, r, s)) cands.push_back(id);
        std::sort(cands.begin(), cands.end(), key_less(s));
        bool failed = false;
        for (RequestId id : cands) {
            const CpuUnits b = *beta_at(sys, items.at(id), s);
            if (avail[s] >= b) {
                avail[s] -= b;
                hosts[id] = s;
            } else if (items.at(id).feasible.back() == s) {
                failed = true;
            }
        }
        return failed;
    };

    std::vector<DatacenterId> all(topo.size());
    std::iota(all.begin(), all.end(), DatacenterId{0});
    for (DatacenterId s : bottom_up_order(topo, all)) {
        if (!place_at(s)) continue;
        // Re-place everything in s's subtree, fixed services included.
        const auto sub = topo.subtree(s);
        const std::set<DatacenterId> in_sub(sub.begin(), sub.end());
        for (auto it = hosts.begin(); it != hosts.end();) {
            if (in_sub.count(it->second)) {
                avail[it->second] += *beta_at(sys, items.at(it->first), it->second);
                it = hosts.erase(it);
            } else {
                ++it;
            }
        }
        for (auto it = fixed_left.begin(); it != fixed_left.end();) {
            const EpochRequest& f = *it->second;
            if (in_sub.count(*f.current_host)) {
                EpochProblem one{p.system, {}, {f}};
                avail[*f.current_host] += topo.capacity(*f.current_host) - one.available().at(*f.current_host);
                items[f.id] = f;
                items[f.id].is_new = false;
                it = fixed_left.erase(it);
            } else {
                ++it;
            }
        }
        for (DatacenterId t : bottom_up_order(topo, sub))
            if (place_at(t)) return infeasible();
    }
    for (const auto& [id, r] : items)
        if (!hosts.count(id)) return infeasible();

    // Push-up, top-down.
    std::vector<DatacenterId> top_down = all;
    std::sort(top_down.begin(), top_down.end(), [&](DatacenterId a, DatacenterId b) {
        if (topo.level(a) != topo.level(b)) return topo.level(a) > topo.level(b);
        return a < b;
    });
    for (DatacenterId s : top_down) {
        std::vector<RequestId> cands;
        for (const auto& [id, h] : hosts) {
            const auto& r = items.at(id);
            if (beta_at(sys, r, s) && above(r, h) > above(r, s)) cands.push_back(id);
        }
        std::sort(cands.begin(), cands.end(), key_less(s));
        for (RequestId id : cands) {
            const auto& r = items.at(id);
            const CpuUnits b = *beta_at(sys, r, s);
            if (avail[s] < b) continue;
            avail[hosts[id]] += *beta_at(sys, r, hosts[id]);
            avail[s] -= b;
            hosts[id] = s;
        }
    }

    Solution sol;
    for (const auto& [id, f] : fixed_left) sol.hosts[id] = *f->current_host;
    for (const auto& [id, h] : hosts) sol.hosts[id] = h;
    return finish(p, std::move(sol));
}

Solution cpvnf(const EpochProblem& p) {
    p.validate();
    const System& sys = *p.system;
    auto avail = p.available();
    auto leaf_beta = [&](const EpochRequest& r) { return *beta_at(sys, r, r.feasible.front()); };
    std::vector<const EpochRequest*> order;
    for (const auto& r : p.requests) order.push_back(&r);
    std::stable_sort(order.begin(), order.end(),
                     [&](const EpochRequest* a, const EpochRequest* b) { return leaf_beta(*a) > leaf_beta(*b); });
    Solution sol;
    fill_fixed(p, sol);
    for (const auto* r : order) {
        std::optional<DatacenterId> best;
        CostUnits best_cost = kInfiniteCost;
        for (DatacenterId s : r->feasible) {
            const CpuUnits b = *beta_at(sys, *r, s);
            if (avail[s] < b) continue;
            CostUnits c = sys.placement_cost(r->class_id, r->feasible, s);
            if (r->current_host) c = saturating_add(c, sys.costs.migration(*r->current_host, s));
            if (!best || c < best_cost || (c == best_cost && s < *best)) {
                best = s;
                best_cost = c;
            }
        }
        if (!best) return infeasible();
        avail[*best] -= *beta_at(sys, *r, *best);
        sol.hosts[r->id] = *best;
    }
    return finish(p, std::move(sol));
}

Solution multiscaler(const EpochProblem& p) {
    p.validate();
    const System& sys = *p.system;
    auto avail = p.available();
    std::vector<const EpochRequest*> critical, fresh;
    for (const auto& r : p.requests) (r.current_host && !r.is_new ? critical : fresh).push_back(&r);
    auto allocated = [&](const EpochRequest& r) {
        EpochProblem one{p.system, {}, {r}};
        return sys.topology.capacity(*r.current_host) - one.available().at(*r.current_host);
    };
    const auto start = avail;
    std::stable_sort(critical.begin(), critical.end(), [&](const EpochRequest* a, const EpochRequest* b) {
        CpuUnits aa = start.at(*a->current_host), ab = start.at(*b->current_host);
        if (aa != ab) return aa < ab;
        CpuUnits ca = allocated(*a), cb = allocated(*b);
        if (ca != cb) return ca > cb;
        return a->id < b->id;
    });
    std::stable_sort(fresh.begin(), fresh.end(), [](const EpochRequest* a, const EpochRequest* b) {
        return a->feasible.size() < b->feasible.size();
    });
    Solution sol;
    fill_fixed(p, sol);
    for (const auto* list : {&critical, &fresh}) {
        for (const auto* r : *list) {
            std::optional<DatacenterId> best;
            for (DatacenterId s : r->feasible) {
                const CpuUnits b = *beta_at(sys, *r, s);
                if (avail[s] < b) continue;
                if (!best || avail[s] > avail[*best] || (avail[s] == avail[*best] && s < *best)) best = s;
            }
            if (!best) return infeasible();
            avail[*best] -= *beta_at(sys, *r, *best);
            sol.hosts[r->id] = *best;
        }
    }
    return finish(p, std::move(sol));
}

namespace {

struct ExactSearch {
    struct Item {
        const EpochRequest* req;
        std::vector<std::pair<CostUnits, DatacenterId>> options;  // cheapest first
        CpuUnits min_beta = 0;
        DatacenterId top = 0;
    };

    const System& sys;
    std::vector<Item> items;
    std::vector<CostUnits> suffix_min;      // bound on the cost of items[i..]
    std::vector<CpuUnits> free;             // per node
    std::vector<CpuUnits> subtree_free;     // per node
    std::vector<CpuUnits> subtree_need;     // min CPU of unplaced items whose top is in the subtree
    std::vector<std::vector<DatacenterId>> ancestors;  // self included
    std::vector<DatacenterId> chosen;
    std::vector<DatacenterId> best;
    CostUnits best_cost = kInfiniteCost;
    std::uint64_t explored = 0;
    std::uint64_t budget = 0;
    bool exhausted = false;
    bool first_feasible = false;
    bool done = false;

    bool subtree_ok(DatacenterId s) const {
        for (DatacenterId a : ancestors[s])
            if (subtree_need[a] > subtree_free[a]) return false;
        return true;
    }

    void dfs(std::size_t i, CostUnits cost) {
        if (exhausted || done) return;
        if (++explored > budget) {
            exhausted = true;
            return;
        }
        if (i == items.size()) {
            if (cost < best_cost) {
                best_cost = cost;
                best = chosen;
            }
            done = first_feasible;
            return;
        }
        const Item& it = items[i];
        for (DatacenterId a : ancestors[it.top]) subtree_need[a] -= it.min_beta;
        for (const auto& [c, s] : it.options) {
            if (saturating_add(cost, saturating_add(c, suffix_min[i + 1])) >= best_cost) break;
            const CpuUnits b = *sys.beta(it.req->class_id, it.req->feasible, s);
            if (free[s] < b) continue;
            free[s] -= b;
            for (DatacenterId a : ancestors[s]) subtree_free[a] -= b;
            if (subtree_ok(s)) {
                chosen[i] = s;
                dfs(i + 1, cost + c);
            }
            free[s] += b;
            for (DatacenterId a : ancestors[s]) subtree_free[a] += b;
            if (exhausted || done) break;
        }
        for (DatacenterId a : ancestors[it.top]) subtree_need[a] += it.min_beta;
    }
};

}  // namespace

Solution exact_optimal(const EpochProblem& p, std::uint64_t node_budget, bool first_feasible) {
    p.validate();
    const System& sys = *p.system;
    const Topology& topo = sys.topology;
    ExactSearch search{sys, {}, {}, {}, {}, {}, {}, {}, {}, kInfiniteCost, 0, node_budget, false, first_feasible, false};
    for (const auto* list : {&p.requests, &p.fixed}) {
        for (const auto& r : *list) {
            ExactSearch::Item item{&r, {}, 0, r.feasible.back()};
            for (DatacenterId s : r.feasible) {
                auto b = sys.beta(r.class_id, r.feasible, s);
                if (!b) continue;
                CostUnits c = sys.placement_cost(r.class_id, r.feasible, s);
                if (r.current_host) c = saturating_add(c, sys.costs.migration(*r.current_host, s));
                item.options.emplace_back(c, s);
                item.min_beta = item.options.size() == 1 ? *b : std::min(item.min_beta, *b);
            }
            if (item.options.empty()) return infeasible();
            std::sort(item.options.begin(), item.options.end());
            search.items.push_back(std::move(item));
        }
    }
    std::stable_sort(search.items.begin(), search.items.end(), [](const auto& a, const auto& b) {
        if (a.options.size() != b.options.size()) return a.options.size() < b.options.size();
        if (a.min_beta != b.min_beta) return a.min_beta > b.min_beta;
        return a.req->id < b.req->id;
    });
    const std::size_t n = search.items.size();
    search.suffix_min.assign(n + 1, 0);
    for (std::size_t i = n; i-- > 0;)
        search.suffix_min[i] = saturating_add(search.suffix_min[i + 1], search.items[i].options.front().first);
    search.free.resize(topo.size());
    search.subtree_free.assign(topo.size(), 0);
    search.subtree_need.assign(topo.size(), 0);
    search.ancestors.resize(topo.size());
    for (DatacenterId s = 0; s < topo.size(); ++s) {
        search.free[s] = topo.capacity(s);
        search.ancestors[s] = topo.path_to_root(s);
        for (DatacenterId a : search.ancestors[s]) search.subtree_free[a] += topo.capacity(s);
    }
    for (const auto& it : search.items)
        for (DatacenterId a : search.ancestors[it.top]) search.subtree_need[a] += it.min_beta;
    search.chosen.assign(n, 0);

    // A heuristic placement is a valid upper bound and, when only feasibility
    // matters, already the answer.
    std::optional<Solution> warm;
    for (auto* h : {&bupu, &ffit}) {
        auto s = h(p);
        if (s.ok() && check_solution(p, s.hosts).empty() && (!warm || s.cost < warm->cost)) warm = std::move(s);
    }
    if (warm) {
        if (first_feasible) return *warm;
        search.best.resize(n);
        for (std::size_t i = 0; i < n; ++i) search.best[i] = warm->hosts.at(search.items[i].req->id);
        search.best_cost = 0;
        for (std::size_t i = 0; i < n; ++i)
            for (const auto& [c, s] : search.items[i].options)
                if (s == search.best[i]) search.best_cost = saturating_add(search.best_cost, c);
    }

    bool root_ok = true;
    for (DatacenterId s = 0; s < topo.size(); ++s)
        if (search.subtree_need[s] > search.subtree_free[s]) root_ok = false;
    if (root_ok) search.dfs(0, 0);

    Solution sol;
    sol.nodes_explored = search.explored;
    if (search.exhausted) {
        sol.verdict = Verdict::BudgetExceeded;
        return sol;
    }
    if (search.best_cost == kInfiniteCost) return sol;
    for (std::size_t i = 0; i < n; ++i) sol.hosts[search.items[i].req->id] = search.best[i];
    sol.verdict = Verdict::Ok;
    sol.cost = epoch_cost(p, sol.hosts);
    return sol;
}

SearchResult min_cpu_binary_search(const std::function<bool(CpuUnits)>& feasible, CpuUnits lo, CpuUnits hi,
                                   CpuUnits tolerance) {
    if (lo > hi) throw ModelError("empty search bracket");
    tolerance = std::max<CpuUnits>(tolerance, 1);
    SearchResult res;
    ++res.probes;
    if (!feasible(hi)) {
        res.status = SearchResult::Status::NoUpperBound;
        res.value = hi;
        return res;
    }
    ++res.probes;
    if (feasible(lo)) {
        res.value = lo;
        return res;
    }
    // Invariant: feasible(hi), !feasible(lo).
    while (hi - lo > tolerance) {
        const CpuUnits mid = lo + (hi - lo) / 2;
        ++res.probes;
        if (feasible(mid))
            hi = mid;
        else
            lo = mid;
    }
    res.value = hi;
    return res;
}

Algorithm algorithm(const std::string& name) {
    if (name == "ffit") return ffit;
    if (name == "bupu") return bupu;
    if (name == "cpvnf") return cpvnf;
    if (name == "multiscaler") return multiscaler;
    if (name == "exact") return [](const EpochProblem& p) { return exact_optimal(p); };
    throw ModelError("unknown algorithm '" + name + "'");
}

}  // namespace dapp::baselines
