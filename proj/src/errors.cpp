#include "dlmp/errors.hpp"

namespace dlmp {

FeederError::FeederError(FeederErrc code, const std::string& what)
    : Error(std::string(to_string(code)) + ": " + what), code_(code) {}

const char* to_string(FeederErrc code) noexcept
{
    switch (code) {
    case FeederErrc::malformed: return "malformed feeder";
    case FeederErrc::cycle: return "cycle detected";
    case FeederErrc::disconnected: return "disconnected node";
    case FeederErrc::duplicate_line: return "duplicate line";
    case FeederErrc::nonpositive_impedance: return "nonpositive impedance";
    case FeederErrc::invalid_limit: return "invalid limit";
    case FeederErrc::unknown_aggregator_node: return "unknown aggregator node";
    }
    return "feeder error";
}

} // namespace dlmp
