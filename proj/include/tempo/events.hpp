#pragma once

#include <vector>

#include "tempo/errors.hpp"

namespace tempo::data {

/// Ordered (event id, timestamp) pairs with non-decreasing timestamps.
struct EventSequence {
    std::vector<int> events;
    std::vector<double> times;

    size_t size() const { return events.size(); }
    bool empty() const { return events.empty(); }
};

using Dataset = std::vector<EventSequence>;

/// Checks the sequence invariants; vocab <= 0 skips the id bound check.
void validate_sequence(const EventSequence& seq, int vocab);

} // namespace tempo::data
