#pragma once

#include "ablab/tensor.hpp"

#include <cstdint>
#include <map>
#include <ostream>
#include <string>
#include <vector>

namespace ablab::dist {

// Ranks are split into numGroups contiguous equal blocks; the first half of
// the groups carries role A, the second half role B. numGroups == 1 is the
// ungrouped topology used by the baseline modes (its single group gets role B
// so that a B-only mode works unchanged).
struct WorldTopology {
    enum class Role { A, B };

    std::size_t world_size = 1;
    std::size_t num_groups = 1;

    std::size_t nodes_per_group() const { return world_size / num_groups; }
    std::size_t group_of(std::size_t rank) const;
    Role role_of_group(std::size_t group) const;
    std::vector<std::size_t> ranks_in_group(std::size_t group) const;
};

WorldTopology make_topology(std::size_t world_size, std::size_t num_groups);

enum class CollectiveKind { AllReduce, Broadcast };

struct LedgerEntry {
    std::size_t step;
    std::string phase;
    std::string scope; // "global" or "groupK"
    std::size_t elements;
    double bytes;
};

// Append-only record of simulated collective traffic. Bytes follow a ring
// cost model: all-reduce moves elements*bpe*2(q-1)/q per participant set of
// size q, broadcast half that; a single participant moves nothing.
class TrafficLedger {
  public:
    explicit TrafficLedger(std::size_t bytes_per_element = 4);

    std::size_t bytes_per_element() const { return bytes_per_element_; }
    void record(std::size_t step, const std::string &phase, const std::string &scope,
                std::size_t elements, std::size_t participants,
                CollectiveKind kind = CollectiveKind::AllReduce);
    const std::vector<LedgerEntry> &entries() const { return entries_; }

    // columns: step,phase,scope,elements,bytes
    void write_csv(std::ostream &out) const;

  private:
    std::size_t bytes_per_element_;
    std::vector<LedgerEntry> entries_;
};

double ring_factor(std::size_t participants);

struct LedgerTotals {
    double total_bytes = 0.0;
    std::map<std::string, double> per_phase;
    std::vector<std::pair<std::size_t, double>> per_step; // ascending step
};

// Exact sums over entries whose phase/scope match the filters (empty filter
// matches everything).
LedgerTotals ledger_totals(const TrafficLedger &ledger, const std::string &phase_filter = "",
                           const std::string &scope_filter = "");

double scaled_traffic(double total_bytes, double backward_fraction);

// Every participant ends up with the bit-identical elementwise mean, computed
// by summing in ascending participant order in 64-bit and broadcasting the
// quotient. Appends one ledger entry when a ledger is given.
void all_reduce_average(const std::vector<Tensor *> &participants, TrafficLedger *ledger,
                        std::size_t step, const std::string &phase, const std::string &scope);

// Copies the root participant's tensor to everyone.
void broadcast(const std::vector<Tensor *> &participants, std::size_t root,
               TrafficLedger *ledger, std::size_t step, const std::string &phase,
               const std::string &scope);

} // namespace ablab::dist
