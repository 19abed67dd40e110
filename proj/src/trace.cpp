#include "dapp/trace.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <map>
#include <random>
#include <sstream>

namespace dapp {

namespace {

std::vector<std::string> split_csv(const std::string& line) {
    std::vector<std::string> out;
    std::string cell;
    std::istringstream is(line);
    while (std::getline(is, cell, ',')) {
        auto b = cell.find_first_not_of(" \t\r");
        auto e = cell.find_last_not_of(" \t\r");
        out.push_back(b == std::string::npos ? "" : cell.substr(b, e - b + 1));
    }
    if (!line.empty() && line.back() == ',') out.emplace_back();
    return out;
}

[[noreturn]] void fail(std::size_t line_no, const std::string& what) {
    throw TraceError("trace line " + std::to_string(line_no) + ": " + what);
}

}  // namespace

std::vector<TraceEvent> parse_trace(std::istream& in) {
    std::vector<TraceEvent> events;
    std::string line;
    std::size_t line_no = 0;
    bool header = false;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        auto cells = split_csv(line);
        if (!header) {
            if (cells != std::vector<std::string>{"time", "user_id", "poa_id", "class"})
                fail(line_no, "expected header time,user_id,poa_id,class");
            header = true;
            continue;
        }
        if (cells.size() != 4) fail(line_no, "expected 4 fields, got " + std::to_string(cells.size()));
        TraceEvent ev;
        try {
            std::size_t used = 0;
            double t = std::stod(cells[0], &used);
            if (used != cells[0].size() || !std::isfinite(t) || t < 0) fail(line_no, "bad time '" + cells[0] + "'");
            ev.time = seconds(t);
            if (cells[1].empty()) fail(line_no, "missing user_id");
            ev.user = cells[1];
            if (cells[2] == "OUT") {
                ev.departure = true;
            } else {
                std::string poa = cells[2];
                if (poa.rfind("poa_", 0) == 0) poa = poa.substr(4);
                if (poa.empty() || poa.find_first_not_of("0123456789") != std::string::npos)
                    fail(line_no, "bad poa_id '" + cells[2] + "'");
                ev.poa = static_cast<std::size_t>(std::stoull(poa));
            }
        } catch (const std::logic_error&) {
            fail(line_no, "unparsable field in '" + line + "'");
        }
        ev.class_name = cells[3];
        if (!ev.departure && ev.class_name.empty()) fail(line_no, "missing class");
        if (!events.empty() && ev.time < events.back().time) fail(line_no, "time goes backwards");
        events.push_back(std::move(ev));
    }
    if (!header) throw TraceError("trace is empty");
    return events;
}

std::vector<TraceEvent> load_trace(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw TraceError("cannot open trace " + path);
    return parse_trace(in);
}

void write_trace(std::ostream& out, const std::vector<TraceEvent>& events) {
    out << "time,user_id,poa_id,class\n";
    for (const auto& e : events) {
        out << e.time / kNanosPerSecond << '.' << std::setw(9) << std::setfill('0') << e.time % kNanosPerSecond
            << std::setfill(' ') << ',' << e.user << ',';
        if (e.departure)
            out << "OUT";
        else
            out << e.poa;
        out << ',' << e.class_name << '\n';
    }
}

std::vector<TraceEvent> synth_trace(const SynthParams& p) {
    if (p.leaves == 0) throw TraceError("synthetic trace needs at least one leaf");
    if (p.arrival_rate <= 0 || p.platoon_size < 1 || p.mean_dwell <= 0) throw TraceError("bad synthetic parameters");
    std::mt19937_64 rng(p.seed);
    std::exponential_distribution<double> gap(p.arrival_rate);
    std::exponential_distribution<double> dwell(1.0 / p.mean_dwell);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    std::uniform_int_distribution<std::size_t> leaf(0, p.leaves - 1);

    struct Raw {
        double time;
        std::string user;
        bool departure;
        std::size_t poa;
        std::string cls;
        std::uint64_t order;
    };
    std::vector<Raw> raw;
    std::uint64_t order = 0;
    std::uint32_t next_user = 0;
    double t = 0.0;
    while (true) {
        t += gap(rng);
        if (t >= p.duration) break;
        const std::size_t poa = leaf(rng);
        for (int k = 0; k < p.platoon_size; ++k) {
            const std::string user = "veh" + std::to_string(next_user++);
            const double start = t + k * p.platoon_jitter;
            // Draw everything per user in a fixed order so p_rt only flips classes.
            const double u_class = unit(rng);
            const double stay = dwell(rng);
            const std::string cls = u_class < p.p_rt ? p.rt_class : p.non_rt_class;
            raw.push_back({start, user, false, poa, cls, order++});
            double now = start;
            std::size_t at = poa;
            const double end = start + stay;
            if (p.move_rate > 0) {
                std::exponential_distribution<double> move(p.move_rate);
                while (true) {
                    now += move(rng);
                    const bool up = unit(rng) < 0.5;
                    if (now >= end || now >= p.duration) break;
                    std::size_t next = at;
                    if (up && at + 1 < p.leaves)
                        next = at + 1;
                    else if (!up && at > 0)
                        next = at - 1;
                    else if (p.leaves > 1)
                        next = up ? at - 1 : at + 1;
                    if (next == at) continue;
                    at = next;
                    raw.push_back({now, user, false, at, cls, order++});
                }
            }
            if (end < p.duration) raw.push_back({end, user, true, at, cls, order++});
        }
    }
    std::stable_sort(raw.begin(), raw.end(), [](const Raw& a, const Raw& b) {
        if (a.time != b.time) return a.time < b.time;
        return a.order < b.order;
    });
    std::vector<TraceEvent> out;
    out.reserve(raw.size());
    for (auto& r : raw) out.push_back({seconds(r.time), r.user, r.departure, r.poa, r.cls});
    // Rounding to nanoseconds must not reorder a user's own events.
    for (std::size_t i = 1; i < out.size(); ++i) out[i].time = std::max(out[i].time, out[i - 1].time);
    return out;
}

}  // namespace dapp
