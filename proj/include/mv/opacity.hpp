#pragma once

// Brute-force opacity check for small recorded histories: search for a
// sequential order of the committed transactions that respects real time and
// explains every read, then require each aborted attempt's reads to match
// some prefix of that order that lies within the attempt's lifetime.

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "mv/history.hpp"

namespace mv {

struct OpacityVerdict {
    enum class Status { Ok, Violation, SizeExceeded };
    Status status{Status::Ok};
    // Committed transaction ids in serialization order when ok.
    std::vector<uint64_t> witness;
    std::string message;

    bool ok() const { return status == Status::Ok; }
};

struct OpacityLimits {
    std::size_t maxCommitted = 8;
    std::size_t maxCells = 8;
};

// `initial` maps cell ids to their value before the history; absent cells
// start at 0. Attempts without a commit or abort event count as aborted.
OpacityVerdict checkOpacity(const History& h, const std::map<uint64_t, Word>& initial = {},
                            OpacityLimits limits = {});

}  // namespace mv
