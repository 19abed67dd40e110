#ifndef DAPP_SCENARIO_HPP
#define DAPP_SCENARIO_HPP

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "dapp/model.hpp"
#include "dapp/protocol.hpp"
#include "dapp/simnet.hpp"
#include "dapp/trace.hpp"

namespace dapp {

class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Everything needed to run one algorithm on one workload.
struct Scenario {
    std::string name;
    TreeShape shape;
    System system;
    std::vector<double> rtt_by_level;  // seconds
    protocol::Params params;
    std::vector<simnet::InitialPlacement> initial;
    std::vector<simnet::UserEvent> events;
    std::uint64_t event_budget = 20'000'000;

    PathLatency latency() const { return rtt_table(rtt_by_level); }
};

/// RT and nonRT classes with the default cost and CPU tables for `levels` levels.
std::vector<ServiceClass> default_classes(int levels);
std::vector<double> default_rtt(int levels);

struct RandParams {
    int max_levels = 3;
    int max_arity = 3;
    std::size_t max_nodes = 63;
    std::size_t max_requests = 50;
};

/// Settings read from a JSON config; every field has a default.
struct ExperimentConfig {
    std::string scenario = "synth";  // fig2, fig3, empty, rand, synth, trace
    TreeShape tree{3, 2, 400, {}, {}, {}};
    std::optional<std::vector<ServiceClass>> classes;
    std::optional<std::vector<double>> rtt;
    CostModel costs;
    protocol::Params params;
    SynthParams synth;
    RandParams rand;
    std::string trace_path;
    std::vector<std::string> algorithms{"dapp"};
    std::uint64_t seeds = 1;
    std::uint64_t first_seed = 1;
    std::vector<double> p_rt_grid{0.0, 0.25, 0.5, 0.75, 1.0};
    std::vector<double> t_sfs_grid{1e-6, 1e-5, 1e-4};
    CpuUnits min_cpu_lo = 1;
    CpuUnits min_cpu_hi = 20'000;
    CpuUnits min_cpu_tolerance = 10;
    double capacity_margin = 1.10;
    std::uint64_t event_budget = 20'000'000;
    std::uint64_t exact_budget = 2'000'000;
};

/// Parses JSON text. Unknown keys and bad types raise ConfigError naming the key path.
ExperimentConfig parse_config(const std::string& json_text);
ExperimentConfig load_config(const std::string& path);
/// Cross-field checks shared by files and command-line overrides.
void validate_config(const ExperimentConfig& cfg);

/// Builds a scenario. `seed` feeds the rand and synth generators; `p_rt`
/// overrides the synthetic RT fraction when set.
Scenario make_scenario(const ExperimentConfig& cfg, std::uint64_t seed, std::optional<double> p_rt = std::nullopt);
Scenario builtin_scenario(const std::string& name, std::uint64_t seed = 1);

/// Converts a trace into user events: a user's session gets a fresh request id;
/// later events at another PoA are moves.
std::vector<simnet::UserEvent> events_from_trace(const std::vector<TraceEvent>& trace, const System& system);

/// Random small scenario: tree of at most rand.max_nodes nodes and at most
/// rand.max_requests arrivals, with random departures.
Scenario random_scenario(const RandParams& rand, std::uint64_t seed);

/// Same scenario with a different leaf capacity, (level + 1) scaling kept.
Scenario with_leaf_capacity(const Scenario& base, CpuUnits leaf_capacity);

}  // namespace dapp

#endif  // DAPP_SCENARIO_HPP
