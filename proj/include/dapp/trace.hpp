#ifndef DAPP_TRACE_HPP
#define DAPP_TRACE_HPP

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "dapp/model.hpp"

namespace dapp {

/// One line of a mobility trace. A user's first event is an arrival, later
/// events at another PoA are moves, and `departure` ends the session.
struct TraceEvent {
    SimTime time = 0;
    std::string user;
    bool departure = false;
    std::size_t poa = 0;  // leaf index
    std::string class_name;
};

class TraceError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// CSV with header `time,user_id,poa_id,class`; time in seconds, poa_id is a
/// leaf index (`17` or `poa_017`) or OUT. Errors name the offending line.
std::vector<TraceEvent> parse_trace(std::istream& in);
std::vector<TraceEvent> load_trace(const std::string& path);
void write_trace(std::ostream& out, const std::vector<TraceEvent>& events);

struct SynthParams {
    std::size_t leaves = 1;
    double duration = 60.0;        // seconds
    double arrival_rate = 1.0;     // platoons per second
    int platoon_size = 1;
    double platoon_jitter = 5e-6;  // seconds between platoon members
    double move_rate = 0.0;        // per user per second, to an adjacent leaf
    double mean_dwell = 30.0;      // seconds until departure
    double p_rt = 0.5;
    std::string rt_class = "RT";
    std::string non_rt_class = "nonRT";
    std::uint64_t seed = 1;
};

/// Deterministic synthetic trace. A user is RT iff its uniform draw is below
/// p_rt, so raising p_rt with the same seed only turns nonRT users into RT.
std::vector<TraceEvent> synth_trace(const SynthParams& p);

}  // namespace dapp

#endif  // DAPP_TRACE_HPP
