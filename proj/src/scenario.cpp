#include "dapp/scenario.hpp"

#include <fstream>
#include <map>
#include <random>
#include <set>
#include <sstream>

#include "json.hpp"

namespace dapp {

using nlohmann::json;

namespace {

const std::vector<CpuUnits> kRtCpu{170, 170, 190};
const std::vector<CostUnits> kRtCost{544, 278, 164};
const std::vector<CostUnits> kNonRtCost{544, 278, 148, 86, 58, 47};
constexpr CpuUnits kNonRtCpu = 170;
const std::vector<double> kRtt{0.001, 0.003, 0.008, 0.015, 0.030, 0.060};

[[noreturn]] void bad(const std::string& path, const std::string& what) {
    throw ConfigError("config " + path + ": " + what);
}

void only_keys(const json& j, const std::string& path, std::initializer_list<const char*> keys) {
    if (!j.is_object()) bad(path, "expected an object");
    std::set<std::string> allowed(keys.begin(), keys.end());
    for (auto it = j.begin(); it != j.end(); ++it)
        if (!allowed.count(it.key())) bad(path + "." + it.key(), "unknown key");
}

template <class T>
void read(const json& j, const std::string& path, const char* key, T& out) {
    if (!j.contains(key)) return;
    const json& v = j.at(key);
    try {
        if constexpr (std::is_same_v<T, bool>) {
            if (!v.is_boolean()) throw json::type_error::create(302, "expected a boolean", &v);
        } else if constexpr (std::is_integral_v<T>) {
            if (!v.is_number_integer()) throw json::type_error::create(302, "expected an integer", &v);
            if constexpr (std::is_unsigned_v<T>)
                if (v.get<std::int64_t>() < 0) throw json::type_error::create(302, "expected a non-negative integer", &v);
        } else if constexpr (std::is_floating_point_v<T>) {
            if (!v.is_number()) throw json::type_error::create(302, "expected a number", &v);
        }
        out = v.get<T>();
    } catch (const json::exception& e) {
        bad(path + "." + key, e.what());
    }
}

SimTime read_seconds(const json& j, const std::string& path, const char* key, SimTime fallback) {
    double s = to_seconds(fallback);
    read(j, path, key, s);
    if (s < 0) bad(path + "." + key, "must be non-negative");
    return seconds(s);
}

std::map<int, std::int64_t> read_level_map(const json& j, const std::string& path) {
    std::map<int, std::int64_t> out;
    if (j.is_array()) {
        for (std::size_t i = 0; i < j.size(); ++i) {
            if (!j[i].is_number_integer()) bad(path + "[" + std::to_string(i) + "]", "expected an integer");
            out[static_cast<int>(i)] = j[i].get<std::int64_t>();
        }
        return out;
    }
    if (!j.is_object()) bad(path, "expected an array or an object keyed by level");
    for (auto it = j.begin(); it != j.end(); ++it) {
        int level = 0;
        try {
            std::size_t used = 0;
            level = std::stoi(it.key(), &used);
            if (used != it.key().size()) throw std::invalid_argument("level");
        } catch (const std::logic_error&) {
            bad(path + "." + it.key(), "level keys must be integers");
        }
        if (!it.value().is_number_integer()) bad(path + "." + it.key(), "expected an integer");
        out[level] = it.value().get<std::int64_t>();
    }
    return out;
}

ServiceClass fig_class(int levels, CpuUnits beta) {
    ServiceClass c;
    c.id = 0;
    c.name = "svc";
    c.latency_constraint = 1.0;
    for (int l = 0; l < levels; ++l) {
        c.cpu_demand[l] = beta;
        c.placement_cost[l] = levels - l;
    }
    return c;
}

Scenario fig2_scenario() {
    Scenario sc;
    sc.name = "fig2";
    sc.shape = TreeShape{3, 2, 1, {}, {{0, 1}, {1, 1}, {2, 1}}, {}};
    sc.system.topology = build_tree(sc.shape);
    sc.system.classes = {fig_class(3, 1)};
    sc.rtt_by_level = {0.001, 0.002, 0.003};
    // Leaves s3..s6; r3 leaves before r4 shows up.
    sc.events = {
        {seconds(0), 0, 0, 3, false}, {seconds(1), 1, 0, 5, false}, {seconds(2), 2, 0, 6, false},
        {seconds(3), 3, 0, 6, false}, {seconds(4), 3, 0, 6, true},  {seconds(5), 4, 0, 6, false},
    };
    return sc;
}

Scenario fig3_scenario() {
    Scenario sc;
    sc.name = "fig3";
    sc.shape = TreeShape{2, 4, 2, {}, {{0, 5}}, {}};
    sc.system.topology = build_tree(sc.shape);
    sc.system.classes = {fig_class(2, 2)};
    sc.rtt_by_level = {0.001, 0.002};
    sc.initial = {{1, 0, 1, 1}, {2, 0, 2, 0}, {3, 0, 3, 0}, {4, 0, 4, 4}};
    sc.events = {{0, 5, 0, 4, false}, {0, 6, 0, 4, false}};
    return sc;
}

Scenario empty_scenario() {
    Scenario sc;
    sc.name = "empty";
    sc.shape = TreeShape{3, 2, 400, {}, {}, {}};
    sc.system.topology = build_tree(sc.shape);
    sc.system.classes = default_classes(3);
    sc.rtt_by_level = default_rtt(3);
    return sc;
}

}  // namespace

std::vector<ServiceClass> default_classes(int levels) {
    if (levels < 1 || levels > static_cast<int>(kNonRtCost.size()))
        throw ModelError("default classes cover 1 to 6 levels");
    ServiceClass rt;
    rt.id = 0;
    rt.name = "RT";
    rt.latency_constraint = 0.010;
    for (int l = 0; l < levels && l < static_cast<int>(kRtCpu.size()); ++l) {
        rt.cpu_demand[l] = kRtCpu[l];
        rt.placement_cost[l] = kRtCost[l];
    }
    ServiceClass nrt;
    nrt.id = 1;
    nrt.name = "nonRT";
    nrt.latency_constraint = 0.100;
    for (int l = 0; l < levels; ++l) {
        nrt.cpu_demand[l] = kNonRtCpu;
        nrt.placement_cost[l] = kNonRtCost[l];
    }
    return {rt, nrt};
}

std::vector<double> default_rtt(int levels) {
    if (levels < 1 || levels > static_cast<int>(kRtt.size())) throw ModelError("default RTT table covers 1 to 6 levels");
    return {kRtt.begin(), kRtt.begin() + levels};
}

void validate_config(const ExperimentConfig& cfg) {
    static const std::set<std::string> scenarios{"fig2", "fig3", "empty", "rand", "synth", "trace"};
    static const std::set<std::string> algos{"dapp", "ffit", "bupu", "cpvnf", "multiscaler", "exact"};
    if (!scenarios.count(cfg.scenario)) bad("$.scenario", "unknown scenario '" + cfg.scenario + "'");
    if (cfg.scenario == "trace" && cfg.trace_path.empty()) bad("$.trace", "required for the trace scenario");
    if (cfg.algorithms.empty()) bad("$.algorithms", "must not be empty");
    for (const auto& a : cfg.algorithms)
        if (!algos.count(a)) bad("$.algorithms", "unknown algorithm '" + a + "'");
    if (cfg.seeds == 0) bad("$.seeds", "must be positive");
    if (cfg.p_rt_grid.empty()) bad("$.p_rt", "must not be empty");
    for (double p : cfg.p_rt_grid)
        if (p < 0 || p > 1) bad("$.p_rt", "values must lie in [0, 1]");
    if (cfg.t_sfs_grid.empty()) bad("$.t_sfs", "must not be empty");
    for (double t : cfg.t_sfs_grid)
        if (t <= 0) bad("$.t_sfs", "values must be positive");
    if (cfg.tree.levels < 1 || cfg.tree.arity < 1 || cfg.tree.leaf_capacity <= 0)
        bad("$.tree", "levels, arity and leaf_capacity must be positive");
    if (cfg.min_cpu_lo > cfg.min_cpu_hi) bad("$.min_cpu", "lo exceeds hi");
    if (cfg.capacity_margin <= 0) bad("$.capacity_margin", "must be positive");
}

ExperimentConfig parse_config(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::parse_error& e) {
        throw ConfigError(std::string("config is not valid JSON: ") + e.what());
    }
    ExperimentConfig cfg;
    only_keys(j, "$", {"scenario", "tree", "classes", "rtt", "costs", "protocol", "synth", "rand", "trace",
                       "algorithms", "seeds", "first_seed", "p_rt", "t_sfs", "min_cpu", "capacity_margin",
                       "event_budget", "exact_budget"});
    read(j, "$", "scenario", cfg.scenario);
    read(j, "$", "trace", cfg.trace_path);
    read(j, "$", "seeds", cfg.seeds);
    read(j, "$", "first_seed", cfg.first_seed);
    read(j, "$", "capacity_margin", cfg.capacity_margin);
    read(j, "$", "event_budget", cfg.event_budget);
    read(j, "$", "exact_budget", cfg.exact_budget);
    read(j, "$", "algorithms", cfg.algorithms);
    read(j, "$", "p_rt", cfg.p_rt_grid);
    read(j, "$", "t_sfs", cfg.t_sfs_grid);
    if (j.contains("rtt")) {
        std::vector<double> rtt;
        read(j, "$", "rtt", rtt);
        cfg.rtt = rtt;
    }
    if (j.contains("tree")) {
        const json& t = j["tree"];
        only_keys(t, "$.tree", {"levels", "arity", "leaf_capacity", "capacity_overrides", "pruned_leaves",
                                "propagation_delay", "control_capacity_bps"});
        read(t, "$.tree", "levels", cfg.tree.levels);
        read(t, "$.tree", "arity", cfg.tree.arity);
        read(t, "$.tree", "leaf_capacity", cfg.tree.leaf_capacity);
        read(t, "$.tree", "control_capacity_bps", cfg.tree.link.control_capacity_bps);
        cfg.tree.link.propagation_delay =
            read_seconds(t, "$.tree", "propagation_delay", cfg.tree.link.propagation_delay);
        if (t.contains("capacity_overrides"))
            for (auto& [k, v] : read_level_map(t["capacity_overrides"], "$.tree.capacity_overrides"))
                cfg.tree.capacity_overrides[static_cast<DatacenterId>(k)] = v;
        if (t.contains("pruned_leaves")) {
            std::vector<DatacenterId> ids;
            read(t, "$.tree", "pruned_leaves", ids);
            cfg.tree.pruned_leaves = {ids.begin(), ids.end()};
        }
    }
    if (j.contains("classes")) {
        const json& cs = j["classes"];
        if (!cs.is_array()) bad("$.classes", "expected an array");
        std::vector<ServiceClass> classes;
        for (std::size_t i = 0; i < cs.size(); ++i) {
            const std::string path = "$.classes[" + std::to_string(i) + "]";
            only_keys(cs[i], path, {"name", "latency", "cpu", "cost"});
            ServiceClass c;
            c.id = static_cast<ClassId>(i);
            read(cs[i], path, "name", c.name);
            read(cs[i], path, "latency", c.latency_constraint);
            if (!cs[i].contains("cpu") || !cs[i].contains("cost")) bad(path, "needs cpu and cost");
            for (auto& [l, v] : read_level_map(cs[i]["cpu"], path + ".cpu")) c.cpu_demand[l] = v;
            for (auto& [l, v] : read_level_map(cs[i]["cost"], path + ".cost")) c.placement_cost[l] = v;
            try {
                c.validate();
            } catch (const ModelError& e) {
                bad(path, e.what());
            }
            classes.push_back(std::move(c));
        }
        cfg.classes = classes;
    }
    if (j.contains("costs")) {
        only_keys(j["costs"], "$.costs", {"migration", "per_bit"});
        read(j["costs"], "$.costs", "migration", cfg.costs.migration_cost);
        read(j["costs"], "$.costs", "per_bit", cfg.costs.per_bit_link_cost);
    }
    if (j.contains("protocol")) {
        const json& p = j["protocol"];
        only_keys(p, "$.protocol", {"t_sfs", "t_pd", "f_period"});
        cfg.params.sfs_accumulation = read_seconds(p, "$.protocol", "t_sfs", cfg.params.sfs_accumulation);
        cfg.params.pd_accumulation = read_seconds(p, "$.protocol", "t_pd", cfg.params.pd_accumulation);
        cfg.params.f_mode_period = read_seconds(p, "$.protocol", "f_period", cfg.params.f_mode_period);
    }
    if (j.contains("synth")) {
        const json& s = j["synth"];
        only_keys(s, "$.synth", {"duration", "arrival_rate", "platoon_size", "platoon_jitter", "move_rate",
                                 "mean_dwell", "p_rt"});
        read(s, "$.synth", "duration", cfg.synth.duration);
        read(s, "$.synth", "arrival_rate", cfg.synth.arrival_rate);
        read(s, "$.synth", "platoon_size", cfg.synth.platoon_size);
        read(s, "$.synth", "platoon_jitter", cfg.synth.platoon_jitter);
        read(s, "$.synth", "move_rate", cfg.synth.move_rate);
        read(s, "$.synth", "mean_dwell", cfg.synth.mean_dwell);
        read(s, "$.synth", "p_rt", cfg.synth.p_rt);
    }
    if (j.contains("rand")) {
        const json& r = j["rand"];
        only_keys(r, "$.rand", {"max_levels", "max_arity", "max_nodes", "max_requests"});
        read(r, "$.rand", "max_levels", cfg.rand.max_levels);
        read(r, "$.rand", "max_arity", cfg.rand.max_arity);
        read(r, "$.rand", "max_nodes", cfg.rand.max_nodes);
        read(r, "$.rand", "max_requests", cfg.rand.max_requests);
    }
    if (j.contains("min_cpu")) {
        const json& m = j["min_cpu"];
        only_keys(m, "$.min_cpu", {"lo", "hi", "tolerance"});
        read(m, "$.min_cpu", "lo", cfg.min_cpu_lo);
        read(m, "$.min_cpu", "hi", cfg.min_cpu_hi);
        read(m, "$.min_cpu", "tolerance", cfg.min_cpu_tolerance);
    }

    validate_config(cfg);
    return cfg;
}

ExperimentConfig load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_config(ss.str());
}

std::vector<simnet::UserEvent> events_from_trace(const std::vector<TraceEvent>& trace, const System& system) {
    const auto& leaves = system.topology.leaves();
    std::map<std::string, ClassId> by_name;
    for (const auto& c : system.classes) by_name[c.name] = c.id;
    std::map<std::string, std::pair<RequestId, ClassId>> session;
    RequestId next = 0;
    std::vector<simnet::UserEvent> out;
    for (const auto& e : trace) {
        if (e.departure) {
            auto it = session.find(e.user);
            if (it == session.end()) continue;
            out.push_back({e.time, it->second.first, it->second.second, 0, true});
            session.erase(it);
            continue;
        }
        if (e.poa >= leaves.size())
            throw TraceError("poa " + std::to_string(e.poa) + " out of range (" + std::to_string(leaves.size()) +
                             " leaves)");
        auto it = session.find(e.user);
        if (it == session.end()) {
            auto c = by_name.find(e.class_name);
            if (c == by_name.end()) throw TraceError("unknown class '" + e.class_name + "'");
            it = session.emplace(e.user, std::make_pair(next++, c->second)).first;
        }
        out.push_back({e.time, it->second.first, it->second.second, leaves[e.poa], false});
    }
    return out;
}

Scenario random_scenario(const RandParams& rand, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    auto pick = [&](int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng); };
    Scenario sc;
    sc.name = "rand";
    TreeShape shape;
    // Shrink until the complete tree fits the node limit.
    for (int attempt = 0;; ++attempt) {
        shape.levels = pick(2, std::max(2, rand.max_levels));
        shape.arity = pick(2, std::max(2, rand.max_arity));
        std::size_t nodes = 0, width = 1;
        for (int l = 0; l < shape.levels; ++l, width *= shape.arity) nodes += width;
        if (nodes <= rand.max_nodes || attempt > 50) {
            if (nodes > rand.max_nodes) {
                shape.levels = 2;
                shape.arity = 2;
            }
            break;
        }
    }
    shape.leaf_capacity = 170 * pick(1, 3);
    sc.shape = shape;
    sc.system.topology = build_tree(shape);
    sc.system.classes = default_classes(shape.levels);
    sc.rtt_by_level = default_rtt(shape.levels);

    const auto& leaves = sc.system.topology.leaves();
    const std::size_t n = static_cast<std::size_t>(pick(1, static_cast<int>(std::max<std::size_t>(1, rand.max_requests))));
    struct Ev {
        SimTime t;
        simnet::UserEvent e;
    };
    std::vector<Ev> evs;
    for (std::size_t i = 0; i < n; ++i) {
        const SimTime arrive = pick(0, 4000) * 1'000'000LL;
        const ClassId cls = static_cast<ClassId>(pick(0, 1));
        const DatacenterId poa = leaves[static_cast<std::size_t>(pick(0, static_cast<int>(leaves.size()) - 1))];
        evs.push_back({arrive, {arrive, static_cast<RequestId>(i), cls, poa, false}});
        if (pick(0, 2) == 0) {
            const SimTime leave = arrive + pick(1, 3000) * 1'000'000LL;
            evs.push_back({leave, {leave, static_cast<RequestId>(i), cls, poa, true}});
        }
    }
    std::stable_sort(evs.begin(), evs.end(), [](const Ev& a, const Ev& b) { return a.t < b.t; });
    for (auto& e : evs) sc.events.push_back(e.e);
    return sc;
}

Scenario with_leaf_capacity(const Scenario& base, CpuUnits leaf_capacity) {
    Scenario sc = base;
    sc.shape.leaf_capacity = leaf_capacity;
    sc.system.topology = build_tree(sc.shape);
    return sc;
}

Scenario builtin_scenario(const std::string& name, std::uint64_t seed) {
    if (name == "fig2") return fig2_scenario();
    if (name == "fig3") return fig3_scenario();
    if (name == "empty") return empty_scenario();
    ExperimentConfig cfg;
    cfg.scenario = name;
    return make_scenario(cfg, seed);
}

Scenario make_scenario(const ExperimentConfig& cfg, std::uint64_t seed, std::optional<double> p_rt) {
    Scenario sc;
    if (cfg.scenario == "fig2") {
        sc = fig2_scenario();
    } else if (cfg.scenario == "fig3") {
        sc = fig3_scenario();
    } else if (cfg.scenario == "empty") {
        sc = empty_scenario();
    } else if (cfg.scenario == "rand") {
        sc = random_scenario(cfg.rand, seed);
    } else if (cfg.scenario == "synth" || cfg.scenario == "trace") {
        sc.name = cfg.scenario;
        sc.shape = cfg.tree;
        sc.system.topology = build_tree(sc.shape);
        sc.system.classes = cfg.classes ? *cfg.classes : default_classes(cfg.tree.levels);
        sc.rtt_by_level = cfg.rtt ? *cfg.rtt : default_rtt(cfg.tree.levels);
        std::vector<TraceEvent> trace;
        if (cfg.scenario == "trace") {
            trace = load_trace(cfg.trace_path);
        } else {
            SynthParams sp = cfg.synth;
            sp.leaves = sc.system.topology.leaves().size();
            sp.seed = seed;
            if (p_rt) sp.p_rt = *p_rt;
            if (cfg.classes && cfg.classes->size() >= 2) {
                sp.rt_class = (*cfg.classes)[0].name;
                sp.non_rt_class = (*cfg.classes)[1].name;
            }
            trace = synth_trace(sp);
        }
        sc.events = events_from_trace(trace, sc.system);
    } else {
        throw ConfigError("unknown scenario '" + cfg.scenario + "'");
    }
    sc.system.costs = cfg.costs;
    if (cfg.scenario != "fig2" && cfg.scenario != "fig3") sc.params = cfg.params;
    sc.event_budget = cfg.event_budget;
    for (const auto& c : sc.system.classes) c.validate();
    return sc;
}

}  // namespace dapp
