#pragma once

#include <string>
#include <vector>

#include "cardiopulm/findings.hpp"

namespace cardiopulm {

// Four-level causal graph: finding (0) -> mechanism (1) -> effect (2) ->
// consequence (3). Edges connect level L to L+1 only, which also makes the
// graph acyclic by construction. Edges in the same and_group act as a
// conjunction: the group's contribution is the minimum over its members of
// activation(parent) * weight, instead of the usual per-edge maximum.
struct KbNode {
    std::string name;
    int level = 0;
};

struct KbEdge {
    std::string from;
    std::string to;
    double weight = 1.0;  // (0, 1]
    std::string phrase;   // rendered into the rationale
    int and_group = 0;    // 0 = plain edge
};

struct KnowledgeGraph {
    std::string version;
    std::vector<KbNode> nodes;
    std::vector<KbEdge> edges;

    // Indicator slots: the non-finding nodes in (level, declaration) order.
    std::vector<std::string> indicator_names;

    int d_reason() const { return static_cast<int>(indicator_names.size()); }
    int node_level(const std::string& name) const;  // -1 when absent
    int indicator_index(const std::string& name) const;  // -1 when absent
    std::string display_name(const std::string& name) const;  // underscores -> spaces
};

// Parse + validate. Throws ValidationError on level-skipping edges, weights
// outside (0,1], unknown node references, duplicate nodes, or level-0 nodes
// outside the perception vocabulary.
KnowledgeGraph parse_knowledge_base(const std::string& json_text);
KnowledgeGraph load_knowledge_base(const std::string& path);

// The knowledge base shipped with the pipeline (version kb-v1, 5 finding
// nodes, 11 indicator nodes). data/knowledge_base.json carries the same
// content for editing; a unit test keeps the two in sync.
const std::string& default_knowledge_base_json();
const KnowledgeGraph& default_knowledge_base();

}  // namespace cardiopulm
