#ifndef DAPP_HARNESS_HPP
#define DAPP_HARNESS_HPP

#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "dapp/baselines.hpp"
#include "dapp/scenario.hpp"
#include "dapp/simnet.hpp"

namespace dapp::harness {

struct RunOptions {
    bool keep_log = false;
    bool check_invariants = true;
    std::uint64_t interleave_seed = 0;
    SimTime max_jitter = 0;
    std::uint64_t exact_budget = 2'000'000;
    bool exact_first_feasible = false;  // enough when only feasibility matters
    SimTime epoch = kNanosPerSecond;
};

/// Outcome of one algorithm on one scenario. Centralized algorithms leave
/// the message counters at zero.
struct AlgoResult {
    std::string algorithm;
    simnet::Outcome outcome = simnet::Outcome::Ok;
    std::vector<simnet::Sample> samples;
    std::uint64_t messages = 0;
    std::int64_t bits = 0;
    std::uint64_t injected = 0;
    std::uint64_t pd_runs = 0;
    std::size_t failures = 0;
    std::size_t unplaced = 0;
    std::vector<std::string> violations;
    std::vector<std::string> log;
    std::map<RequestId, DatacenterId> final_hosts;

    /// Every request was placed and nothing broke.
    bool placed_all() const { return outcome == simnet::Outcome::Ok && failures == 0 && unplaced == 0; }
    std::optional<double> bytes_per_request() const;
};

/// algo: dapp, ffit, bupu, cpvnf, multiscaler or exact.
AlgoResult run_algorithm(const Scenario& sc, const std::string& algo, const RunOptions& opts = {});

struct CostSummary {
    CostUnits total = 0;
    std::optional<CostUnits> reference;  // sum of per-epoch optima
    std::optional<double> normalized;
};

/// Per-epoch cost of consecutive samples, and the same quantity for the
/// optimal one-shot placement of each epoch given the previous sample.
CostSummary evaluate_cost(const Scenario& sc, const std::vector<simnet::Sample>& samples,
                          std::uint64_t exact_budget);

/// Least leaf capacity at which `algo` places every request of the scenario.
baselines::SearchResult min_cpu(const Scenario& sc, const std::string& algo, CpuUnits lo, CpuUnits hi,
                                CpuUnits tolerance, const RunOptions& opts = {});

struct MetricsRow {
    std::string scenario;
    std::string point;
    std::string algorithm;
    std::uint64_t seed = 0;
    std::string outcome;
    std::optional<CostUnits> total_cost;
    std::optional<double> normalized_cost;
    std::optional<CpuUnits> min_cpu;
    std::optional<double> bytes_per_request;
    std::uint64_t messages = 0;
    std::size_t failures = 0;
};

void sort_rows(std::vector<MetricsRow>& rows);
void write_csv(std::ostream& out, const std::vector<MetricsRow>& rows);
void write_json(std::ostream& out, const std::vector<MetricsRow>& rows);

/// Event log of a named fixture (fig3, fig2-oscillation).
std::vector<std::string> fixture_log(const std::string& name);
std::vector<std::string> fixture_names();

// Subcommands. Exit codes: 0 ok, 1 config error, 2 divergence or failure.
std::vector<MetricsRow> run_rows(const ExperimentConfig& cfg, int& exit_code);
std::vector<MetricsRow> sweep_overhead_rows(const ExperimentConfig& cfg, int& exit_code);
std::vector<MetricsRow> min_cpu_rows(const ExperimentConfig& cfg, int& exit_code);
int cmd_replay(const std::string& fixture, const std::string& golden_dir, bool write, std::ostream& out);

}  // namespace dapp::harness

#endif  // DAPP_HARNESS_HPP
