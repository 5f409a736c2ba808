#include "ablab/metrics.hpp"

#include "ablab/error.hpp"

namespace ablab::metrics {

double compression_ratio(std::size_t full_elements, std::size_t retained_elements) {
    if (retained_elements == 0)
        throw ConfigError("compression ratio needs a positive retained element count");
    return static_cast<double>(full_elements) / static_cast<double>(retained_elements);
}

double ecr(double full_rank_frac, double final_state_frac, double retained_percent,
           double group_phase_frac, bool is_ab) {
    if (full_rank_frac < 0.0 || final_state_frac < 0.0 ||
        full_rank_frac + final_state_frac > 100.0)
        throw ConfigError("training-fraction percentages must be nonnegative and sum to <= 100");
    if (retained_percent <= 0.0 || retained_percent > 100.0)
        throw ConfigError("retained percentage must lie in (0, 100]");
    if (group_phase_frac < 0.0 || group_phase_frac > 100.0)
        throw ConfigError("group phase percentage must lie in [0, 100]");
    double effective_l = final_state_frac;
    if (is_ab) {
        effective_l -= group_phase_frac;
        if (effective_l < 0.0)
            throw ConfigError("group phase percentage exceeds the final-state fraction");
    }
    return 100.0 - full_rank_frac - effective_l * retained_percent / 100.0;
}

} // namespace ablab::metrics
