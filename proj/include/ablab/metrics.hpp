#pragma once

#include <cstddef>
#include <map>
#include <string>

namespace ablab::metrics {

// full-rank element count over retained (possibly factored) element count
double compression_ratio(std::size_t full_elements, std::size_t retained_elements);

// Estimated communication reduction in percent: 100 - F - L'*c/100, where F
// and L are the percentages of training spent near full rank and near the
// final compression state, c is the retained-size percentage, and L' = L -
// groupPhaseFrac when the run used grouped AB phases (no global traffic flows
// during those), L otherwise.
double ecr(double full_rank_frac, double final_state_frac, double retained_percent,
           double group_phase_frac, bool is_ab);

struct MetricsReport {
    double final_top1 = 0.0;
    double best_top1 = 0.0;
    double compression_ratio = 1.0;
    double total_bytes = 0.0;
    double scaled_traffic = 0.0;
    double ecr = 0.0;
    double wall_seconds = 0.0; // reported to stdout only; CSV stays byte-stable
    std::map<std::string, double> per_phase_bytes;
};

} // namespace ablab::metrics
