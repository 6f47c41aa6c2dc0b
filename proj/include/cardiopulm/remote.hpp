#pragma once

#include <string>

#include "cardiopulm/findings.hpp"
#include "cardiopulm/reasoning.hpp"

namespace cardiopulm {

// HTTP clients for dropping in external perception / reasoning services.
// Endpoints are base URLs ("http://host:port"); paths are fixed:
//   POST /findings   {"scan_id":.., "volume_ref":..}
//                 -> {"findings":[{"name":.., "score":..}]}
//   POST /reason     {"findings":[{"name":..,"score":..}], "kb_version":..}
//                 -> reasoning trace JSON (chains, indicator_vector,
//                    rationale, judgment)
// Responses are validated against the same invariants the local
// implementations guarantee; out-of-range values are rejected, never clamped.

struct RemoteConfig {
    int timeout_seconds = 5;
};

FindingSet fetch_findings_remote(const std::string& scan_ref, const std::string& endpoint,
                                 const RemoteConfig& config = {});

ReasoningTrace fetch_reasoning_remote(const FindingSet& findings,
                                      const std::string& endpoint, const KnowledgeGraph& kb,
                                      const RemoteConfig& config = {});

}  // namespace cardiopulm
