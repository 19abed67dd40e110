#include <fstream>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "dapp/harness.hpp"

namespace {

struct Common {
    std::string config;
    std::string scenario;
    std::string algos;
    std::uint64_t seeds = 0;
    std::string out;
    std::string format = "csv";
};

void add_common(CLI::App* cmd, Common& c) {
    cmd->add_option("--config", c.config, "JSON experiment config");
    cmd->add_option("--scenario", c.scenario, "fig2, fig3, empty, rand, synth or trace");
    cmd->add_option("--algo", c.algos, "comma-separated: dapp,ffit,bupu,cpvnf,multiscaler,exact");
    cmd->add_option("--seeds", c.seeds, "number of seeds");
    cmd->add_option("--out", c.out, "output file (default stdout)");
    cmd->add_option("--format", c.format, "csv or json")->check(CLI::IsMember({"csv", "json"}));
}

dapp::ExperimentConfig resolve(const Common& c) {
    dapp::ExperimentConfig cfg = c.config.empty() ? dapp::ExperimentConfig{} : dapp::load_config(c.config);
    if (!c.scenario.empty()) cfg.scenario = c.scenario;
    if (!c.algos.empty()) {
        cfg.algorithms.clear();
        std::stringstream ss(c.algos);
        for (std::string a; std::getline(ss, a, ',');)
            if (!a.empty()) cfg.algorithms.push_back(a);
    }
    if (c.seeds) cfg.seeds = c.seeds;
    dapp::validate_config(cfg);
    return cfg;
}

int emit(const Common& c, const std::vector<dapp::harness::MetricsRow>& rows) {
    std::ofstream file;
    std::ostream* out = &std::cout;
    if (!c.out.empty()) {
        file.open(c.out);
        if (!file) {
            std::cerr << "cannot write " << c.out << '\n';
            return 1;
        }
        out = &file;
    }
    if (c.format == "json")
        dapp::harness::write_json(*out, rows);
    else
        dapp::harness::write_csv(*out, rows);
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Distributed service placement simulator"};
    app.require_subcommand(1);

    Common run_opts, sweep_opts, mincpu_opts;
    auto* run = app.add_subcommand("run", "run algorithms and report cost and overhead");
    add_common(run, run_opts);
    auto* sweep = app.add_subcommand("sweep-overhead", "bytes per request over the RT fraction and T_ad grid");
    add_common(sweep, sweep_opts);
    auto* mincpu = app.add_subcommand("min-cpu", "least leaf capacity that places every request");
    add_common(mincpu, mincpu_opts);

    std::string fixture;
    std::string golden_dir = "tests/golden";
    bool write_golden = false;
    auto* replay = app.add_subcommand("replay", "compare a fixture's event log with its golden log");
    replay->add_option("fixture", fixture, "fig3 or fig2-oscillation")->required();
    replay->add_option("--golden-dir", golden_dir, "directory holding <fixture>.log");
    replay->add_flag("--write", write_golden, "overwrite the golden log instead of comparing");

    CLI11_PARSE(app, argc, argv);

    try {
        if (replay->parsed()) return dapp::harness::cmd_replay(fixture, golden_dir, write_golden, std::cout);
        int code = 0;
        std::vector<dapp::harness::MetricsRow> rows;
        const Common* c = nullptr;
        if (run->parsed()) {
            c = &run_opts;
            rows = dapp::harness::run_rows(resolve(*c), code);
        } else if (sweep->parsed()) {
            c = &sweep_opts;
            rows = dapp::harness::sweep_overhead_rows(resolve(*c), code);
        } else {
            c = &mincpu_opts;
            rows = dapp::harness::min_cpu_rows(resolve(*c), code);
        }
        if (int e = emit(*c, rows); e != 0) return e;
        return code;
    } catch (const dapp::ConfigError& e) {
        std::cerr << e.what() << '\n';
        return 1;
    } catch (const dapp::TraceError& e) {
        std::cerr << e.what() << '\n';
        return 1;
    } catch (const dapp::ModelError& e) {
        std::cerr << e.what() << '\n';
        return 1;
    }
}
