#include "cardiopulm/knowledge.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include <json.hpp>

#include "cardiopulm/errors.hpp"

namespace cardiopulm {

using nlohmann::json;

int KnowledgeGraph::node_level(const std::string& name) const {
    for (const KbNode& n : nodes)
        if (n.name == name) return n.level;
    return -1;
}

int KnowledgeGraph::indicator_index(const std::string& name) const {
    for (std::size_t i = 0; i < indicator_names.size(); ++i)
        if (indicator_names[i] == name) return static_cast<int>(i);
    return -1;
}

std::string KnowledgeGraph::display_name(const std::string& name) const {
    std::string out = name;
    std::replace(out.begin(), out.end(), '_', ' ');
    return out;
}

namespace {

void validate_graph(KnowledgeGraph& kb) {
    if (kb.version.empty()) throw ValidationError("knowledge base needs a version string");

    std::set<std::string> seen;
    for (const KbNode& n : kb.nodes) {
        if (n.level < 0 || n.level > 3)
            throw ValidationError("node '" + n.name + "' has level " +
                                  std::to_string(n.level) + ", want 0..3");
        if (!seen.insert(n.name).second)
            throw ValidationError("duplicate node '" + n.name + "'");
        if (n.level == 0) {
            // must be part of the perception vocabulary
            finding_from_string(n.name);
        }
    }

    std::map<int, std::vector<const KbEdge*>> groups;
    for (const KbEdge& e : kb.edges) {
        const int lf = kb.node_level(e.from);
        const int lt = kb.node_level(e.to);
        if (lf < 0) throw ValidationError("edge references unknown node '" + e.from + "'");
        if (lt < 0) throw ValidationError("edge references unknown node '" + e.to + "'");
        if (lt != lf + 1)
            throw ValidationError("level order violation on edge " + e.from + " -> " + e.to +
                                  " (level " + std::to_string(lf) + " -> " +
                                  std::to_string(lt) + ")");
        if (!(e.weight > 0.0 && e.weight <= 1.0))
            throw ValidationError("edge weight must lie in (0,1] on " + e.from + " -> " +
                                  e.to);
        if (e.and_group != 0) groups[e.and_group].push_back(&e);
    }
    for (const auto& [gid, members] : groups) {
        if (members.size() < 2)
            throw ValidationError("and_group " + std::to_string(gid) +
                                  " needs at least two edges");
        for (const KbEdge* e : members)
            if (e->to != members.front()->to)
                throw ValidationError("and_group " + std::to_string(gid) +
                                      " edges must share a target node");
    }

    // Edges strictly increase level, so cycles cannot exist; nothing more to
    // check for acyclicity.

    kb.indicator_names.clear();
    for (int level = 1; level <= 3; ++level)
        for (const KbNode& n : kb.nodes)
            if (n.level == level) kb.indicator_names.push_back(n.name);
}

}  // namespace

KnowledgeGraph parse_knowledge_base(const std::string& json_text) {
    KnowledgeGraph kb;
    try {
        const json j = json::parse(json_text);
        kb.version = j.at("version").get<std::string>();
        for (const json& n : j.at("nodes"))
            kb.nodes.push_back({n.at("name").get<std::string>(), n.at("level").get<int>()});
        for (const json& e : j.at("edges")) {
            KbEdge edge;
            edge.from = e.at("from").get<std::string>();
            edge.to = e.at("to").get<std::string>();
            edge.weight = e.at("weight").get<double>();
            edge.phrase = e.at("phrase").get<std::string>();
            edge.and_group = e.value("and_group", 0);
            kb.edges.push_back(edge);
        }
    } catch (const json::exception& e) {
        throw ValidationError(std::string("bad knowledge base JSON: ") + e.what());
    }
    validate_graph(kb);
    return kb;
}

KnowledgeGraph load_knowledge_base(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open knowledge base '" + path + "'");
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_knowledge_base(ss.str());
}

const std::string& default_knowledge_base_json() {
    static const std::string text = R"({
  "version": "kb-v1",
  "nodes": [
    {"name": "opacity", "level": 0},
    {"name": "pleural_effusion", "level": 0},
    {"name": "fibrosis", "level": 0},
    {"name": "emphysema", "level": 0},
    {"name": "nodule", "level": 0},
    {"name": "hypoxemia", "level": 1},
    {"name": "reduced_venous_return", "level": 1},
    {"name": "endothelial_dysfunction", "level": 1},
    {"name": "chronic_inflammation", "level": 1},
    {"name": "pulmonary_hypertension", "level": 2},
    {"name": "venous_congestion", "level": 2},
    {"name": "vascular_remodeling", "level": 2},
    {"name": "right_ventricular_strain", "level": 3},
    {"name": "elevated_hemodynamic_load", "level": 3},
    {"name": "impaired_myocardial_perfusion", "level": 3},
    {"name": "elevated_cvd_risk", "level": 3}
  ],
  "edges": [
    {"from": "opacity", "to": "hypoxemia", "weight": 0.9,
     "phrase": "impaired gas exchange causing systemic hypoxemia"},
    {"from": "emphysema", "to": "hypoxemia", "weight": 0.9,
     "phrase": "alveolar destruction and air trapping causing hypoxemia"},
    {"from": "pleural_effusion", "to": "reduced_venous_return", "weight": 0.9,
     "phrase": "elevated intrathoracic pressure reducing venous return"},
    {"from": "fibrosis", "to": "endothelial_dysfunction", "weight": 0.9,
     "phrase": "chronic inflammation driving endothelial dysfunction"},
    {"from": "fibrosis", "to": "chronic_inflammation", "weight": 0.9,
     "phrase": "fibrotic remodeling sustaining chronic inflammation"},
    {"from": "hypoxemia", "to": "pulmonary_hypertension", "weight": 0.9,
     "phrase": "pulmonary vasoconstriction raising pulmonary arterial pressure"},
    {"from": "reduced_venous_return", "to": "venous_congestion", "weight": 0.9,
     "phrase": "systemic venous congestion"},
    {"from": "endothelial_dysfunction", "to": "vascular_remodeling", "weight": 0.9,
     "phrase": "progressive vascular remodeling"},
    {"from": "chronic_inflammation", "to": "vascular_remodeling", "weight": 0.85,
     "phrase": "inflammatory mediators accelerating vascular remodeling"},
    {"from": "pulmonary_hypertension", "to": "right_ventricular_strain", "weight": 0.9,
     "phrase": "right ventricular overload culminating in right ventricular strain",
     "and_group": 1},
    {"from": "venous_congestion", "to": "right_ventricular_strain", "weight": 0.9,
     "phrase": "congestive preload aggravating right ventricular strain",
     "and_group": 1},
    {"from": "pulmonary_hypertension", "to": "elevated_hemodynamic_load", "weight": 0.9,
     "phrase": "sustained pressure elevating hemodynamic load"},
    {"from": "venous_congestion", "to": "elevated_hemodynamic_load", "weight": 0.85,
     "phrase": "congestion increasing cardiac workload"},
    {"from": "vascular_remodeling", "to": "impaired_myocardial_perfusion", "weight": 0.9,
     "phrase": "remodeled vasculature impairing myocardial perfusion"},
    {"from": "vascular_remodeling", "to": "elevated_cvd_risk", "weight": 0.85,
     "phrase": "structural vascular change raising long-term cardiovascular risk"},
    {"from": "pulmonary_hypertension", "to": "elevated_cvd_risk", "weight": 0.85,
     "phrase": "sustained pulmonary pressure raising long-term cardiovascular risk"}
  ]
})";
    return text;
}

const KnowledgeGraph& default_knowledge_base() {
    static const KnowledgeGraph kb = parse_knowledge_base(default_knowledge_base_json());
    return kb;
}

}  // namespace cardiopulm
