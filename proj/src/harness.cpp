#include "dapp/harness.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "json.hpp"

namespace dapp::harness {

using baselines::EpochProblem;
using baselines::EpochRequest;
using simnet::Outcome;
using simnet::Sample;
using simnet::SampledService;

namespace {

struct Live {
    ClassId class_id = 0;
    std::vector<DatacenterId> feasible;
    std::optional<DatacenterId> host;
    bool pending = false;  // new or critical, waiting for the next epoch
    std::uint64_t seq = 0;
};

AlgoResult run_dapp(const Scenario& sc, const RunOptions& opts) {
    simnet::Config cfg;
    cfg.params = sc.params;
    cfg.event_budget = sc.event_budget;
    cfg.check_invariants = opts.check_invariants;
    cfg.keep_log = opts.keep_log;
    cfg.sample_period = opts.epoch;
    cfg.interleave_seed = opts.interleave_seed;
    cfg.max_jitter = opts.max_jitter;
    simnet::World world(sc.system, sc.latency(), cfg);
    world.seed(sc.initial);
    world.schedule(sc.events);
    auto rep = world.run();
    AlgoResult res;
    res.algorithm = "dapp";
    res.outcome = rep.outcome;
    res.samples = std::move(rep.samples);
    res.messages = rep.messages;
    res.bits = rep.bits;
    res.injected = rep.injected;
    res.pd_runs = rep.pd_runs;
    res.failures = rep.failures.size();
    res.unplaced = rep.unplaced.size();
    res.violations = std::move(rep.violations);
    res.log = std::move(rep.log);
    res.final_hosts = std::move(rep.hosts);
    return res;
}

AlgoResult run_centralized(const Scenario& sc, const std::string& algo, const RunOptions& opts) {
    const System& sys = sc.system;
    const auto latency = sc.latency();
    baselines::Algorithm solve;
    if (algo == "exact") {
        const auto budget = opts.exact_budget;
        const bool first = opts.exact_first_feasible;
        solve = [budget, first](const EpochProblem& p) { return baselines::exact_optimal(p, budget, first); };
    } else {
        solve = baselines::algorithm(algo);
    }
    AlgoResult res;
    res.algorithm = algo;
    std::map<RequestId, Live> live;
    std::uint64_t seq = 0;
    for (const auto& ip : sc.initial) {
        Live l;
        l.class_id = ip.class_id;
        l.feasible = feasible_set_for(sys.service_class(ip.class_id), ip.poa, sys.topology, latency);
        l.host = ip.host;
        live[ip.request] = l;
    }
    auto sample = [&](SimTime t) {
        Sample s;
        s.time = t;
        for (const auto& [id, l] : live)
            if (l.host) s.services[id] = SampledService{*l.host, l.class_id, l.feasible};
        res.samples.push_back(std::move(s));
    };
    sample(0);
    if (sc.events.empty()) return res;
    const SimTime last = sc.events.back().time;
    std::size_t next = 0;
    for (SimTime t = opts.epoch; next < sc.events.size() || t <= last + opts.epoch; t += opts.epoch) {
        for (; next < sc.events.size() && sc.events[next].time < t; ++next) {
            const auto& u = sc.events[next];
            auto it = live.find(u.request);
            if (u.departure) {
                if (it != live.end()) live.erase(it);
                continue;
            }
            const auto feasible = feasible_set_for(sys.service_class(u.class_id), u.poa, sys.topology, latency);
            if (it == live.end()) {
                Live l;
                l.class_id = u.class_id;
                l.feasible = feasible;
                l.pending = true;
                l.seq = seq++;
                ++res.injected;
                live[u.request] = l;
                continue;
            }
            it->second.feasible = feasible;
            const bool stranded = it->second.host &&
                std::find(feasible.begin(), feasible.end(), *it->second.host) == feasible.end();
            if (stranded && !it->second.pending) {
                it->second.pending = true;
                it->second.seq = seq++;
                ++res.injected;
            }
        }
        EpochProblem p;
        p.system = &sys;
        std::vector<std::pair<std::uint64_t, EpochRequest>> pending;
        std::vector<RequestId> dead;
        for (const auto& [id, l] : live) {
            if (l.feasible.empty()) {
                dead.push_back(id);
                continue;
            }
            EpochRequest r{id, l.class_id, l.feasible, l.host, !l.host};
            if (l.pending)
                pending.emplace_back(l.seq, r);
            else
                p.fixed.push_back(r);
        }
        for (RequestId id : dead) {
            live.erase(id);
            ++res.failures;
        }
        std::sort(pending.begin(), pending.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
        for (auto& [s, r] : pending) p.requests.push_back(r);
        if (!p.requests.empty()) {
            auto sol = solve(p);
            if (sol.ok()) {
                for (const auto& [id, h] : sol.hosts) {
                    auto& l = live.at(id);
                    l.host = h;
                    l.pending = false;
                }
            } else {
                res.failures += p.requests.size();
                if (sol.verdict == baselines::Verdict::BudgetExceeded) res.outcome = Outcome::Diverged;
                for (const auto& r : p.requests) {
                    if (r.current_host)
                        live.at(r.id).pending = false;  // keeps running out of range
                    else
                        live.erase(r.id);
                }
            }
        }
        sample(t);
    }
    for (const auto& [id, l] : live)
        if (l.host) res.final_hosts[id] = *l.host;
    if (res.failures && res.outcome == Outcome::Ok) res.outcome = Outcome::Failure;
    return res;
}

std::string fmt_double(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.6f", v);
    return buf;
}

std::string point_name(const std::vector<std::pair<std::string, double>>& kv) {
    std::string s;
    for (const auto& [k, v] : kv) {
        if (!s.empty()) s += ";";
        char buf[64];
        std::snprintf(buf, sizeof buf, "%g", v);
        s += k + "=" + buf;
    }
    return s.empty() ? "-" : s;
}

void merge_exit(int& exit_code, const AlgoResult& r) {
    if (!r.placed_all() || !r.violations.empty()) exit_code = std::max(exit_code, 2);
}

}  // namespace

std::optional<double> AlgoResult::bytes_per_request() const {
    if (injected == 0 || messages == 0) return std::nullopt;
    return static_cast<double>(bits) / 8.0 / static_cast<double>(injected);
}

AlgoResult run_algorithm(const Scenario& sc, const std::string& algo, const RunOptions& opts) {
    if (algo == "dapp") return run_dapp(sc, opts);
    return run_centralized(sc, algo, opts);
}

CostSummary evaluate_cost(const Scenario& sc, const std::vector<Sample>& samples, std::uint64_t exact_budget) {
    const System& sys = sc.system;
    CostSummary out;
    CostUnits reference = 0;
    bool reference_ok = true;
    for (std::size_t k = 1; k < samples.size(); ++k) {
        const auto& prev = samples[k - 1].services;
        EpochProblem p;
        p.system = &sys;
        CostUnits phi = 0;
        for (const auto& [id, s] : samples[k].services) {
            auto feasible = s.feasible;
            if (std::find(feasible.begin(), feasible.end(), s.host) == feasible.end()) feasible.push_back(s.host);
            phi = saturating_add(phi, sys.placement_cost(s.class_id, feasible, s.host));
            std::optional<DatacenterId> before;
            if (auto it = prev.find(id); it != prev.end()) before = it->second.host;
            if (before) phi = saturating_add(phi, sys.costs.migration(*before, s.host));
            EpochRequest r{id, s.class_id, feasible, before, !before};
            (before ? p.fixed : p.requests).push_back(std::move(r));
        }
        out.total = saturating_add(out.total, phi);
        if (!reference_ok || samples[k].services.empty()) continue;
        auto sol = baselines::exact_optimal(p, exact_budget);
        if (!sol.ok())
            reference_ok = false;
        else
            reference = saturating_add(reference, sol.cost);
    }
    if (reference_ok) {
        out.reference = reference;
        if (reference > 0) out.normalized = static_cast<double>(out.total) / static_cast<double>(reference);
    }
    return out;
}

baselines::SearchResult min_cpu(const Scenario& sc, const std::string& algo, CpuUnits lo, CpuUnits hi,
                                CpuUnits tolerance, const RunOptions& opts) {
    RunOptions quiet = opts;
    quiet.keep_log = false;
    quiet.check_invariants = false;
    quiet.exact_first_feasible = true;
    auto feasible = [&](CpuUnits c) {
        return run_algorithm(with_leaf_capacity(sc, c), algo, quiet).placed_all();
    };
    return baselines::min_cpu_binary_search(feasible, lo, hi, tolerance);
}

void sort_rows(std::vector<MetricsRow>& rows) {
    std::sort(rows.begin(), rows.end(), [](const MetricsRow& a, const MetricsRow& b) {
        return std::tie(a.scenario, a.point, a.algorithm, a.seed) < std::tie(b.scenario, b.point, b.algorithm, b.seed);
    });
}

void write_csv(std::ostream& out, const std::vector<MetricsRow>& rows) {
    out << "scenario,point,algorithm,seed,outcome,total_cost,normalized_cost,min_cpu,bytes_per_request,messages,"
           "failures\n";
    for (const auto& r : rows) {
        out << r.scenario << ',' << r.point << ',' << r.algorithm << ',' << r.seed << ',' << r.outcome << ',';
        if (r.total_cost) out << *r.total_cost;
        out << ',';
        if (r.normalized_cost) out << fmt_double(*r.normalized_cost);
        out << ',';
        if (r.min_cpu) out << *r.min_cpu;
        out << ',';
        if (r.bytes_per_request) out << fmt_double(*r.bytes_per_request);
        out << ',' << r.messages << ',' << r.failures << '\n';
    }
}

void write_json(std::ostream& out, const std::vector<MetricsRow>& rows) {
    nlohmann::ordered_json arr = nlohmann::ordered_json::array();
    for (const auto& r : rows) {
        nlohmann::ordered_json j;
        j["scenario"] = r.scenario;
        j["point"] = r.point;
        j["algorithm"] = r.algorithm;
        j["seed"] = r.seed;
        j["outcome"] = r.outcome;
        j["total_cost"] = r.total_cost ? nlohmann::ordered_json(*r.total_cost) : nullptr;
        j["normalized_cost"] = r.normalized_cost ? nlohmann::ordered_json(*r.normalized_cost) : nullptr;
        j["min_cpu"] = r.min_cpu ? nlohmann::ordered_json(*r.min_cpu) : nullptr;
        j["bytes_per_request"] = r.bytes_per_request ? nlohmann::ordered_json(*r.bytes_per_request) : nullptr;
        j["messages"] = r.messages;
        j["failures"] = r.failures;
        arr.push_back(std::move(j));
    }
    out << arr.dump(2) << '\n';
}

std::vector<std::string> fixture_names() { return {"fig2-oscillation", "fig3"}; }

std::vector<std::string> fixture_log(const std::string& name) {
    std::string scenario;
    if (name == "fig3")
        scenario = "fig3";
    else if (name == "fig2-oscillation")
        scenario = "fig2";
    else
        throw ConfigError("unknown fixture '" + name + "'");
    RunOptions opts;
    opts.keep_log = true;
    auto res = run_algorithm(builtin_scenario(scenario), "dapp", opts);
    auto log = res.log;
    for (const auto& [id, h] : res.final_hosts) log.push_back("final r" + std::to_string(id) + " s" + std::to_string(h));
    log.push_back(std::string("outcome ") + simnet::to_string(res.outcome) + " messages=" +
                  std::to_string(res.messages) + " pd_runs=" + std::to_string(res.pd_runs));
    return log;
}

int cmd_replay(const std::string& fixture, const std::string& golden_dir, bool write, std::ostream& out) {
    std::vector<std::string> got;
    try {
        got = fixture_log(fixture);
    } catch (const ConfigError& e) {
        out << e.what() << '\n';
        return 1;
    }
    const std::string path = golden_dir + "/" + fixture + ".log";
    if (write) {
        std::ofstream f(path);
        if (!f) {
            out << "cannot write " << path << '\n';
            return 1;
        }
        for (const auto& l : got) f << l << '\n';
        out << "wrote " << got.size() << " lines to " << path << '\n';
        return 0;
    }
    std::ifstream f(path);
    if (!f) {
        out << "missing golden log " << path << '\n';
        return 1;
    }
    std::vector<std::string> want;
    for (std::string l; std::getline(f, l);) want.push_back(l);
    const std::size_t n = std::max(want.size(), got.size());
    for (std::size_t i = 0; i < n; ++i) {
        const std::string w = i < want.size() ? want[i] : "<end of log>";
        const std::string g = i < got.size() ? got[i] : "<end of log>";
        if (w != g) {
            out << "FAIL " << fixture << ": first divergence at line " << i + 1 << "\n  expected: " << w
                << "\n  actual:   " << g << '\n';
            return 2;
        }
    }
    out << "PASS " << fixture << " (" << got.size() << " events)\n";
    return 0;
}

std::vector<MetricsRow> run_rows(const ExperimentConfig& cfg, int& exit_code) {
    std::vector<MetricsRow> rows;
    exit_code = 0;
    RunOptions opts;
    opts.exact_budget = cfg.exact_budget;
    for (std::uint64_t k = 0; k < cfg.seeds; ++k) {
        const std::uint64_t seed = cfg.first_seed + k;
        const Scenario sc = make_scenario(cfg, seed);
        if (sc.events.empty() && sc.initial.empty()) continue;
        for (const auto& algo : cfg.algorithms) {
            auto res = run_algorithm(sc, algo, opts);
            merge_exit(exit_code, res);
            auto cost = evaluate_cost(sc, res.samples, cfg.exact_budget);
            MetricsRow row;
            row.scenario = sc.name;
            row.point = "-";
            row.algorithm = algo;
            row.seed = seed;
            row.outcome = simnet::to_string(res.placed_all() ? Outcome::Ok
                                             : res.outcome == Outcome::Ok ? Outcome::Failure
                                                                          : res.outcome);
            row.total_cost = cost.total;
            row.normalized_cost = cost.normalized;
            row.bytes_per_request = res.bytes_per_request();
            row.messages = res.messages;
            row.failures = res.failures + res.unplaced;
            rows.push_back(std::move(row));
        }
    }
    sort_rows(rows);
    return rows;
}

std::vector<MetricsRow> min_cpu_rows(const ExperimentConfig& cfg, int& exit_code) {
    std::vector<MetricsRow> rows;
    exit_code = 0;
    RunOptions opts;
    opts.exact_budget = cfg.exact_budget;
    const bool synthetic = cfg.scenario == "synth";
    const std::vector<double> grid = synthetic ? cfg.p_rt_grid : std::vector<double>{-1.0};
    for (std::uint64_t k = 0; k < cfg.seeds; ++k) {
        const std::uint64_t seed = cfg.first_seed + k;
        for (double p : grid) {
            const Scenario sc = synthetic ? make_scenario(cfg, seed, p) : make_scenario(cfg, seed);
            if (sc.events.empty() && sc.initial.empty()) continue;
            for (const auto& algo : cfg.algorithms) {
                auto r = min_cpu(sc, algo, cfg.min_cpu_lo, cfg.min_cpu_hi, cfg.min_cpu_tolerance, opts);
                MetricsRow row;
                row.scenario = sc.name;
                row.point = synthetic ? point_name({{"p_rt", p}}) : "-";
                row.algorithm = algo;
                row.seed = seed;
                if (r.status == baselines::SearchResult::Status::Found) {
                    row.outcome = "OK";
                    row.min_cpu = r.value;
                } else {
                    row.outcome = "NO_UPPER_BOUND";
                    exit_code = 2;
                }
                rows.push_back(std::move(row));
            }
        }
    }
    sort_rows(rows);
    return rows;
}

std::vector<MetricsRow> sweep_overhead_rows(const ExperimentConfig& cfg, int& exit_code) {
    std::vector<MetricsRow> rows;
    exit_code = 0;
    RunOptions opts;
    opts.exact_budget = cfg.exact_budget;
    opts.check_invariants = false;
    for (std::uint64_t k = 0; k < cfg.seeds; ++k) {
        const std::uint64_t seed = cfg.first_seed + k;
        const Scenario all_rt = make_scenario(cfg, seed, 1.0);
        auto base = min_cpu(all_rt, "exact", cfg.min_cpu_lo, cfg.min_cpu_hi, cfg.min_cpu_tolerance, opts);
        if (base.status != baselines::SearchResult::Status::Found) {
            exit_code = 2;
            continue;
        }
        const auto capacity =
            static_cast<CpuUnits>(std::ceil(cfg.capacity_margin * static_cast<double>(base.value)));
        for (double p : cfg.p_rt_grid) {
            for (double t : cfg.t_sfs_grid) {
                Scenario sc = with_leaf_capacity(make_scenario(cfg, seed, p), capacity);
                sc.params.sfs_accumulation = seconds(t);
                sc.params.pd_accumulation = 4 * seconds(t);
                auto res = run_algorithm(sc, "dapp", opts);
                merge_exit(exit_code, res);
                MetricsRow row;
                row.scenario = sc.name;
                row.point = point_name({{"p_rt", p}, {"t_sfs", t}});
                row.algorithm = "dapp";
                row.seed = seed;
                row.outcome = res.placed_all() ? "OK" : simnet::to_string(res.outcome == Outcome::Ok
                                                                              ? Outcome::Failure
                                                                              : res.outcome);
                row.min_cpu = capacity;
                row.bytes_per_request = res.bytes_per_request();
                row.messages = res.messages;
                row.failures = res.failures + res.unplaced;
                rows.push_back(std::move(row));
            }
        }
    }
    sort_rows(rows);
    return rows;
}

}  // namespace dapp::harness
