#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "doctest.h"
#include "json.hpp"
#include "dapp/harness.hpp"
#include "dapp/scenario.hpp"
#include "dapp/trace.hpp"

using namespace dapp;
using namespace dapp::harness;

namespace {

std::string config_error(const std::string& text) {
    try {
        parse_config(text);
    } catch (const ConfigError& e) {
        return e.what();
    }
    return "";
}

std::string trace_error(const std::string& text) {
    std::istringstream in(text);
    try {
        parse_trace(in);
    } catch (const TraceError& e) {
        return e.what();
    }
    return "";
}

std::string csv_of(const std::vector<MetricsRow>& rows) {
    std::ostringstream os;
    write_csv(os, rows);
    return os.str();
}

std::size_t line_count(const std::string& s) { return static_cast<std::size_t>(std::count(s.begin(), s.end(), '\n')); }

}  // namespace

TEST_CASE("config errors name the offending key") {
    CHECK(config_error("{").find("not valid JSON") != std::string::npos);
    CHECK(config_error(R"({"bogus": 1})").find("$.bogus") != std::string::npos);
    CHECK(config_error(R"({"tree": {"levels": "x"}})").find("$.tree.levels") != std::string::npos);
    CHECK(config_error(R"({"tree": {"depth": 3}})").find("$.tree.depth") != std::string::npos);
    CHECK(config_error(R"({"seeds": 0})").find("$.seeds") != std::string::npos);
    CHECK(config_error(R"({"algorithms": ["dapp", "magic"]})").find("$.algorithms") != std::string::npos);
    CHECK(config_error(R"({"algorithms": []})").find("$.algorithms") != std::string::npos);
    CHECK(config_error(R"({"p_rt": [1.5]})").find("$.p_rt") != std::string::npos);
    CHECK(config_error(R"({"t_sfs": []})").find("$.t_sfs") != std::string::npos);
    CHECK(config_error(R"({"scenario": "trace"})").find("$.trace") != std::string::npos);
    CHECK(config_error(R"({"synth": {"speed": 1}})").find("$.synth.speed") != std::string::npos);
    CHECK(config_error(R"({"min_cpu": {"lo": 10, "hi": 1}})").find("$.min_cpu") != std::string::npos);
    CHECK_THROWS_AS(load_config("/nonexistent/config.json"), ConfigError);
}

TEST_CASE("config values override the defaults") {
    auto cfg = parse_config(R"({
        "scenario": "rand",
        "tree": {"levels": 4, "arity": 3, "leaf_capacity": 250},
        "protocol": {"t_sfs": 2e-4, "t_pd": 1e-3, "f_period": 5},
        "costs": {"migration": 100},
        "algorithms": ["bupu", "exact"],
        "seeds": 3,
        "p_rt": [0.1],
        "min_cpu": {"lo": 5, "hi": 50, "tolerance": 2}
    })");
    CHECK(cfg.scenario == "rand");
    CHECK(cfg.tree.levels == 4);
    CHECK(cfg.tree.arity == 3);
    CHECK(cfg.tree.leaf_capacity == 250);
    CHECK(cfg.params.sfs_accumulation == 200'000);
    CHECK(cfg.params.pd_accumulation == 1'000'000);
    CHECK(cfg.params.f_mode_period == 5 * kNanosPerSecond);
    CHECK(cfg.costs.migration_cost == 100);
    CHECK(cfg.algorithms == std::vector<std::string>{"bupu", "exact"});
    CHECK(cfg.seeds == 3);
    CHECK(cfg.min_cpu_tolerance == 2);

    const ExperimentConfig def;
    CHECK(def.params.sfs_accumulation == 100'000);
    CHECK(def.params.pd_accumulation == 400'000);
    CHECK(def.params.f_mode_period == 10 * kNanosPerSecond);
    CHECK(def.costs.migration_cost == 600);
    CHECK(def.capacity_margin == doctest::Approx(1.10));
}

TEST_CASE("trace lines parse into records") {
    std::istringstream in("time,user_id,poa_id,class\n12.5,veh42,poa_017,RT\n13,veh42,OUT,RT\n");
    auto ev = parse_trace(in);
    REQUIRE(ev.size() == 2);
    CHECK(ev[0].time == 12'500'000'000);
    CHECK(ev[0].user == "veh42");
    CHECK(ev[0].poa == 17);
    CHECK(ev[0].class_name == "RT");
    CHECK_FALSE(ev[0].departure);
    CHECK(ev[1].departure);
}

TEST_CASE("trace errors carry line numbers") {
    CHECK(trace_error("").find("empty") != std::string::npos);
    CHECK(trace_error("t,u,p,c\n").find("line 1") != std::string::npos);
    const std::string h = "time,user_id,poa_id,class\n";
    CHECK(trace_error(h + "1,a,0,RT\n0.5,b,0,RT\n").find("line 3") != std::string::npos);
    CHECK(trace_error(h + "x,a,0,RT\n").find("line 2") != std::string::npos);
    CHECK(trace_error(h + "1,a,poa_x,RT\n").find("line 2") != std::string::npos);
    CHECK(trace_error(h + "1,a,0\n").find("line 2") != std::string::npos);
    CHECK(trace_error(h + "1,a,0,\n").find("line 2") != std::string::npos);
    CHECK(trace_error(h + "-1,a,0,RT\n").find("line 2") != std::string::npos);
    CHECK_THROWS_AS(load_trace("/nonexistent/trace.csv"), TraceError);
}

TEST_CASE("synthetic traces are reproducible and round-trip through CSV") {
    SynthParams p;
    p.leaves = 8;
    p.duration = 60;
    p.arrival_rate = 10;
    p.move_rate = 0.2;
    p.mean_dwell = 10;
    p.seed = 7;
    const auto a = synth_trace(p);
    const auto b = synth_trace(p);
    REQUIRE(!a.empty());
    std::ostringstream sa, sb;
    write_trace(sa, a);
    write_trace(sb, b);
    CHECK(sa.str() == sb.str());
    std::istringstream in(sa.str());
    const auto back = parse_trace(in);
    REQUIRE(back.size() == a.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
        CHECK(back[i].time == a[i].time);
        CHECK(back[i].user == a[i].user);
        if (!a[i].departure) CHECK(back[i].poa == a[i].poa);
        CHECK(back[i].departure == a[i].departure);
    }
    for (std::size_t i = 1; i < a.size(); ++i) CHECK(a[i].time >= a[i - 1].time);

    p.p_rt = 1.0;
    for (const auto& e : synth_trace(p)) CHECK(e.class_name == "RT");
    p.p_rt = 0.0;
    for (const auto& e : synth_trace(p)) CHECK(e.class_name == "nonRT");
}

TEST_CASE("raising the RT share only flips classes") {
    SynthParams p;
    p.leaves = 4;
    p.duration = 30;
    p.arrival_rate = 5;
    p.seed = 3;
    p.p_rt = 0.3;
    const auto lo = synth_trace(p);
    p.p_rt = 0.7;
    const auto hi = synth_trace(p);
    REQUIRE(lo.size() == hi.size());
    for (std::size_t i = 0; i < lo.size(); ++i) {
        CHECK(lo[i].time == hi[i].time);
        CHECK(lo[i].poa == hi[i].poa);
        if (lo[i].class_name == "RT") CHECK(hi[i].class_name == "RT");
    }
}

TEST_CASE("trace events become sessions") {
    const System sys{build_tree(2, 2, 10), default_classes(2), {}};
    std::istringstream in("time,user_id,poa_id,class\n0,a,0,RT\n1,b,1,nonRT\n2,a,1,RT\n3,a,OUT,RT\n4,zz,OUT,RT\n");
    auto ev = events_from_trace(parse_trace(in), sys);
    REQUIRE(ev.size() == 4);
    CHECK(ev[0].request == 0);
    CHECK(ev[1].request == 1);
    CHECK(ev[2].request == 0);
    CHECK(ev[2].poa == sys.topology.leaves()[1]);
    CHECK(ev[3].departure);
    std::istringstream far("time,user_id,poa_id,class\n0,a,9,RT\n");
    CHECK_THROWS_AS(events_from_trace(parse_trace(far), sys), TraceError);
    std::istringstream odd("time,user_id,poa_id,class\n0,a,0,Gold\n");
    CHECK_THROWS_AS(events_from_trace(parse_trace(odd), sys), TraceError);
}

TEST_CASE("run rows: one per algorithm and seed, sorted, reproducible") {
    ExperimentConfig cfg;
    cfg.scenario = "rand";
    cfg.algorithms = {"dapp", "bupu", "exact"};
    cfg.seeds = 5;
    int code = -1;
    auto rows = run_rows(cfg, code);
    CHECK(rows.size() == 15);
    const auto csv = csv_of(rows);
    CHECK(line_count(csv) == 16);
    CHECK(csv.rfind("scenario,point,algorithm,seed,outcome,total_cost,normalized_cost,min_cpu,bytes_per_request,"
                    "messages,failures\n",
                    0) == 0);
    int again_code = -1;
    CHECK(csv_of(run_rows(cfg, again_code)) == csv);
    CHECK(again_code == code);
    for (std::size_t i = 1; i < rows.size(); ++i)
        CHECK(std::tie(rows[i - 1].algorithm, rows[i - 1].seed) < std::tie(rows[i].algorithm, rows[i].seed));
    for (const auto& r : rows)
        if (r.normalized_cost && r.outcome == "OK") CHECK(*r.normalized_cost >= 1.0 - 1e-9);

    cfg.scenario = "empty";
    cfg.seeds = 1;
    rows = run_rows(cfg, code);
    CHECK(rows.empty());
    CHECK(code == 0);
    CHECK(line_count(csv_of(rows)) == 1);
}

TEST_CASE("json output carries the same rows") {
    ExperimentConfig cfg;
    cfg.scenario = "fig3";
    cfg.algorithms = {"dapp"};
    int code = -1;
    auto rows = run_rows(cfg, code);
    CHECK(code == 0);
    REQUIRE(rows.size() == 1);
    std::ostringstream os;
    write_json(os, rows);
    auto j = nlohmann::json::parse(os.str());
    REQUIRE(j.is_array());
    CHECK(j[0]["algorithm"] == "dapp");
    CHECK(j[0]["outcome"] == "OK");
    CHECK(j[0]["messages"] == 5);
}

TEST_CASE("normalized cost uses the per-epoch optimum as reference") {
    const Scenario sc = builtin_scenario("fig2");
    auto exact = run_algorithm(sc, "exact");
    REQUIRE(exact.placed_all());
    auto cost = evaluate_cost(sc, exact.samples, 1'000'000);
    REQUIRE(cost.reference);
    CHECK(*cost.normalized == doctest::Approx(1.0));
    for (const char* algo : {"dapp", "ffit", "bupu", "cpvnf", "multiscaler"}) {
        auto res = run_algorithm(sc, algo);
        auto c = evaluate_cost(sc, res.samples, 1'000'000);
        if (c.normalized) CHECK(*c.normalized >= 1.0 - 1e-9);
    }
}

TEST_CASE("centralized algorithms act once per epoch") {
    Scenario sc = builtin_scenario("fig2");
    auto res = run_algorithm(sc, "ffit");
    // One sample at time zero, then one per second up to one epoch past the last event.
    REQUIRE(!res.samples.empty());
    CHECK(res.samples.front().time == 0);
    for (std::size_t i = 1; i < res.samples.size(); ++i)
        CHECK(res.samples[i].time - res.samples[i - 1].time == kNanosPerSecond);
    // r0 arrives at t=0 and is visible only after the first epoch boundary.
    CHECK(res.samples[0].services.empty());
    CHECK(res.samples[1].services.count(0));
}

TEST_CASE("min-cpu search brackets each algorithm") {
    ExperimentConfig cfg;
    cfg.scenario = "synth";
    cfg.synth.duration = 8;
    cfg.synth.arrival_rate = 2;
    const Scenario sc = make_scenario(cfg, 1, 0.5);
    for (const char* algo : {"exact", "bupu", "ffit", "dapp"}) {
        auto r = min_cpu(sc, algo, 1, 20'000, 5);
        REQUIRE(r.status == baselines::SearchResult::Status::Found);
        CHECK(run_algorithm(with_leaf_capacity(sc, r.value), algo).placed_all());
    }
}

TEST_CASE("replay compares against the golden logs") {
    std::ostringstream out;
    CHECK(cmd_replay("fig3", DAPP_GOLDEN_DIR, false, out) == 0);
    CHECK(out.str().rfind("PASS fig3", 0) == 0);
    out.str("");
    CHECK(cmd_replay("fig2-oscillation", DAPP_GOLDEN_DIR, false, out) == 0);
    out.str("");
    CHECK(cmd_replay("fig9", DAPP_GOLDEN_DIR, false, out) == 1);

    const auto dir = std::filesystem::temp_directory_path() / "dapp_replay_test";
    std::filesystem::create_directories(dir);
    std::filesystem::copy_file(std::string(DAPP_GOLDEN_DIR) + "/fig3.log", dir / "fig3.log",
                               std::filesystem::copy_options::overwrite_existing);
    {
        std::ifstream in(dir / "fig3.log");
        std::vector<std::string> lines;
        for (std::string l; std::getline(in, l);) lines.push_back(l);
        lines[0] += " tampered";
        std::ofstream o(dir / "fig3.log");
        for (const auto& l : lines) o << l << '\n';
    }
    out.str("");
    CHECK(cmd_replay("fig3", dir.string(), false, out) == 2);
    CHECK(out.str().find("first divergence at line 1") != std::string::npos);
    out.str("");
    CHECK(cmd_replay("fig3", (dir / "missing").string(), false, out) == 1);
    std::filesystem::remove_all(dir);
}
