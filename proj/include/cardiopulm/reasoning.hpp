#pragma once

#include <string>
#include <vector>

#include "cardiopulm/findings.hpp"
#include "cardiopulm/knowledge.hpp"

namespace cardiopulm {

enum class Judgment { elevated_risk, not_elevated };
const char* to_string(Judgment j);
Judgment judgment_from_string(const std::string& s);

enum class TraceSource { local, external_service };

struct ReasoningChain {
    std::vector<std::string> path;  // finding, mechanism, effect, consequence
    double activation = 0.0;        // (0, 1]
};

struct ReasoningTrace {
    std::vector<ReasoningChain> chains;   // activation-descending, ties by path text
    std::vector<double> indicator_vector; // non-finding nodes in KB order
    std::string rationale;                // empty iff chains empty
    Judgment judgment = Judgment::not_elevated;
    std::string kb_version;
    TraceSource source = TraceSource::local;
};

// Propagate retained findings through the graph. Node activation is the max
// over incoming contributions of activation(parent) * weight; edges in an
// and_group contribute min over the group instead. Deterministic.
ReasoningTrace reason(const FindingSet& findings, const KnowledgeGraph& kb);

// The indicator vector in fixed KB order; checks the trace against the KB
// version the caller's model expects.
std::vector<double> encode_indicators(const ReasoningTrace& trace);
std::vector<double> encode_indicators(const ReasoningTrace& trace,
                                      const std::string& expected_kb_version,
                                      int expected_dim);

// Canonical text for a trace; the empty trace renders a fixed sentence.
std::string render_rationale(const ReasoningTrace& trace);

inline constexpr const char* kEmptyRationale =
    "No pulmonary drivers of cardiovascular risk identified.";

std::string trace_to_json(const ReasoningTrace& trace);
// Parse + validate against a KB (dimension, judgment consistency, rationale
// presence). Used by both the file cache and the remote client.
ReasoningTrace trace_from_json(const std::string& text, const KnowledgeGraph& kb);

}  // namespace cardiopulm
