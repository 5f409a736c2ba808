#include "ablab/dist.hpp"

#include "ablab/error.hpp"
#include "ablab/kernels.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <numeric>

namespace ablab::dist {

std::size_t WorldTopology::group_of(std::size_t rank) const {
    if (rank >= world_size)
        throw ConfigError("rank " + std::to_string(rank) + " outside world of " +
                          std::to_string(world_size));
    return rank / nodes_per_group();
}

WorldTopology::Role WorldTopology::role_of_group(std::size_t group) const {
    if (group >= num_groups)
        throw ConfigError("group " + std::to_string(group) + " outside " +
                          std::to_string(num_groups) + " groups");
    if (num_groups == 1)
        return Role::B;
    return group < num_groups / 2 ? Role::A : Role::B;
}

std::vector<std::size_t> WorldTopology::ranks_in_group(std::size_t group) const {
    if (group >= num_groups)
        throw ConfigError("group " + std::to_string(group) + " outside " +
                          std::to_string(num_groups) + " groups");
    std::vector<std::size_t> ranks(nodes_per_group());
    std::iota(ranks.begin(), ranks.end(), group * nodes_per_group());
    return ranks;
}

WorldTopology make_topology(std::size_t world_size, std::size_t num_groups) {
    if (world_size == 0)
        throw ConfigError("world size must be positive");
    if (num_groups == 0)
        throw ConfigError("group count must be positive");
    if (world_size % num_groups != 0)
        throw ConfigError(std::to_string(num_groups) + " groups do not divide world of " +
                          std::to_string(world_size));
    if (num_groups != 1 && num_groups % 2 != 0)
        throw ConfigError("grouped training needs an even group count, got " +
                          std::to_string(num_groups));
    return WorldTopology{world_size, num_groups};
}

double ring_factor(std::size_t participants) {
    if (participants <= 1)
        return 0.0;
    return 2.0 * static_cast<double>(participants - 1) / static_cast<double>(participants);
}

TrafficLedger::TrafficLedger(std::size_t bytes_per_element)
    : bytes_per_element_(bytes_per_element) {
    if (bytes_per_element_ != 4 && bytes_per_element_ != 8)
        throw ConfigError("wire precision must be 4 or 8 bytes per element");
}

void TrafficLedger::record(std::size_t step, const std::string &phase, const std::string &scope,
                           std::size_t elements, std::size_t participants, CollectiveKind kind) {
    double factor = ring_factor(participants);
    if (kind == CollectiveKind::Broadcast)
        factor *= 0.5;
    const double bytes =
        static_cast<double>(elements) * static_cast<double>(bytes_per_element_) * factor;
    entries_.push_back(LedgerEntry{step, phase, scope, elements, bytes});
}

namespace {

// shortest round-trip decimal; integral values print without a fraction
std::string format_double(double v) {
    if (std::isfinite(v) && v == std::floor(v) && std::fabs(v) < 9.007199254740992e15) {
        const long long i = static_cast<long long>(v);
        return std::to_string(i);
    }
    char buf[64];
    auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

} // namespace

void TrafficLedger::write_csv(std::ostream &out) const {
    out << "step,phase,scope,elements,bytes\n";
    for (const LedgerEntry &e : entries_)
        out << e.step << ',' << e.phase << ',' << e.scope << ',' << e.elements << ','
            << format_double(e.bytes) << '\n';
}

LedgerTotals ledger_totals(const TrafficLedger &ledger, const std::string &phase_filter,
                           const std::string &scope_filter) {
    LedgerTotals t;
    std::map<std::size_t, double> by_step;
    for (const LedgerEntry &e : ledger.entries()) {
        if (!phase_filter.empty() && e.phase != phase_filter)
            continue;
        if (!scope_filter.empty() && e.scope != scope_filter)
            continue;
        t.total_bytes += e.bytes;
        t.per_phase[e.phase] += e.bytes;
        by_step[e.step] += e.bytes;
    }
    t.per_step.assign(by_step.begin(), by_step.end());
    return t;
}

double scaled_traffic(double total_bytes, double backward_fraction) {
    if (backward_fraction < 0.0 || backward_fraction > 1.0)
        throw ConfigError("backward fraction must lie in [0, 1]");
    return total_bytes * backward_fraction;
}

namespace {

void check_participants(const std::vector<Tensor *> &participants) {
    if (participants.empty())
        throw ProtocolError("collective with no participants");
    for (const Tensor *t : participants)
        if (t == nullptr)
            throw ProtocolError("collective with a null participant");
    for (std::size_t r = 1; r < participants.size(); ++r)
        if (!participants[r]->same_shape(*participants[0]))
            throw ProtocolError("collective shape divergence: rank 0 has " +
                                shape_to_string(participants[0]->shape()) + ", rank " +
                                std::to_string(r) + " has " +
                                shape_to_string(participants[r]->shape()));
}

} // namespace

void all_reduce_average(const std::vector<Tensor *> &participants, TrafficLedger *ledger,
                        std::size_t step, const std::string &phase, const std::string &scope) {
    check_participants(participants);
    const std::size_t q = participants.size();
    const std::size_t n = participants[0]->size();
    if (ledger)
        ledger->record(step, phase, scope, n, q, CollectiveKind::AllReduce);
    Tensor acc = *participants[0];
    for (std::size_t r = 1; r < q; ++r)
        kernels::add(acc.data(), participants[r]->data(), n);
    kernels::scale(acc.data(), 1.0 / static_cast<double>(q), n);
    for (Tensor *t : participants)
        *t = acc;
}

void broadcast(const std::vector<Tensor *> &participants, std::size_t root,
               TrafficLedger *ledger, std::size_t step, const std::string &phase,
               const std::string &scope) {
    check_participants(participants);
    if (root >= participants.size())
        throw ProtocolError("broadcast root " + std::to_string(root) + " outside " +
                            std::to_string(participants.size()) + " participants");
    if (ledger)
        ledger->record(step, phase, scope, participants[0]->size(), participants.size(),
                       CollectiveKind::Broadcast);
    for (std::size_t r = 0; r < participants.size(); ++r)
        if (r != root)
            *participants[r] = *participants[root];
}

} // namespace ablab::dist
