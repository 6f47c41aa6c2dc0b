#include "cardiopulm/reasoning.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <sstream>

#include <json.hpp>

#include "cardiopulm/errors.hpp"

namespace cardiopulm {

using nlohmann::json;

const char* to_string(Judgment j) {
    return j == Judgment::elevated_risk ? "elevated_risk" : "not_elevated";
}

Judgment judgment_from_string(const std::string& s) {
    if (s == "elevated_risk") return Judgment::elevated_risk;
    if (s == "not_elevated") return Judgment::not_elevated;
    throw ValidationError("unknown judgment '" + s + "'");
}

namespace {

struct Propagation {
    std::map<std::string, double> activation;           // all nodes
    std::map<std::string, const KbEdge*> best_incoming; // strongest contributor per node
};

double group_contribution(const std::vector<const KbEdge*>& members,
                          const std::map<std::string, double>& act) {
    double m = 1.0;
    for (const KbEdge* e : members) {
        const auto it = act.find(e->from);
        const double a = it == act.end() ? 0.0 : it->second;
        m = std::min(m, a * e->weight);
    }
    return m;
}

Propagation propagate(const FindingSet& findings, const KnowledgeGraph& kb) {
    Propagation p;
    for (const KbNode& n : kb.nodes) p.activation[n.name] = 0.0;
    for (Finding f : findings.retained()) p.activation[to_string(f)] = findings.score_of(f);

    for (int level = 1; level <= 3; ++level) {
        for (const KbNode& n : kb.nodes) {
            if (n.level != level) continue;
            double best = 0.0;
            const KbEdge* best_edge = nullptr;
            std::map<int, std::vector<const KbEdge*>> groups;
            for (const KbEdge& e : kb.edges) {
                if (e.to != n.name) continue;
                if (e.and_group != 0) {
                    groups[e.and_group].push_back(&e);
                    continue;
                }
                const double c = p.activation[e.from] * e.weight;
                if (c > best) {
                    best = c;
                    best_edge = &e;
                }
            }
            for (const auto& [gid, members] : groups) {
                const double c = group_contribution(members, p.activation);
                if (c > best) {
                    best = c;
                    // deterministic representative: strongest member edge
                    const KbEdge* rep = members.front();
                    for (const KbEdge* e : members)
                        if (p.activation[e->from] * e->weight >
                            p.activation[rep->from] * rep->weight)
                            rep = e;
                    best_edge = rep;
                }
            }
            p.activation[n.name] = best;
            if (best > 0.0) p.best_incoming[n.name] = best_edge;
        }
    }
    return p;
}

// All finding -> consequence paths, with activations gated the same way the
// node propagation is (AND edges see the other members' global activations).
void enumerate_chains(const FindingSet& findings, const KnowledgeGraph& kb,
                      const Propagation& p, std::vector<ReasoningChain>& out) {
    std::map<int, std::vector<const KbEdge*>> groups;
    for (const KbEdge& e : kb.edges)
        if (e.and_group != 0) groups[e.and_group].push_back(&e);

    struct Frame {
        std::vector<std::string> path;
        double value;
    };

    for (Finding f : findings.retained()) {
        const double score = findings.score_of(f);
        if (score <= 0.0) continue;
        std::vector<Frame> stack;
        stack.push_back({{to_string(f)}, score});
        while (!stack.empty()) {
            Frame cur = stack.back();
            stack.pop_back();
            const std::string& tail = cur.path.back();
            const int level = kb.node_level(tail);
            if (level == 3) {
                if (cur.value > 0.0) out.push_back({cur.path, cur.value});
                continue;
            }
            for (const KbEdge& e : kb.edges) {
                if (e.from != tail) continue;
                double v = cur.value * e.weight;
                if (e.and_group != 0) {
                    // gate by the weakest member of the conjunction
                    const double gate = group_contribution(groups[e.and_group], p.activation);
                    v = std::min(v, gate);
                }
                if (v <= 0.0) continue;
                Frame next = cur;
                next.path.push_back(e.to);
                next.value = v;
                stack.push_back(std::move(next));
            }
        }
    }

    std::sort(out.begin(), out.end(), [](const ReasoningChain& a, const ReasoningChain& b) {
        if (a.activation != b.activation) return a.activation > b.activation;
        return a.path < b.path;
    });
}

std::string join_names(const std::vector<std::string>& names) {
    std::string out;
    for (std::size_t i = 0; i < names.size(); ++i) {
        if (i > 0) out += (i + 1 == names.size()) ? " and " : ", ";
        out += names[i];
    }
    return out;
}

std::string capitalize(std::string s) {
    if (!s.empty() && s[0] >= 'a' && s[0] <= 'z')
        s[0] = static_cast<char>(s[0] - 'a' + 'A');
    return s;
}

std::string build_rationale(const FindingSet& findings, const KnowledgeGraph& kb,
                            const Propagation& p) {
    std::ostringstream text;

    // One sentence per active mechanism: which retained findings feed it and
    // through what phrase.
    for (const std::string& name : kb.indicator_names) {
        if (kb.node_level(name) != 1 || p.activation.at(name) <= 0.0) continue;
        std::vector<std::string> sources;
        for (const KbEdge& e : kb.edges)
            if (e.to == name && p.activation.at(e.from) > 0.0 && kb.node_level(e.from) == 0)
                sources.push_back(kb.display_name(e.from));
        const KbEdge* via = p.best_incoming.at(name);
        text << capitalize(join_names(sources)) << (sources.size() > 1 ? " indicate " : " indicates ")
             << via->phrase << ". ";
    }

    // One integrative sentence per active effect.
    for (const std::string& name : kb.indicator_names) {
        if (kb.node_level(name) != 2 || p.activation.at(name) <= 0.0) continue;
        const KbEdge* via = p.best_incoming.at(name);
        text << capitalize(kb.display_name(via->from)) << " drives " << via->phrase << ". ";
    }

    // Concluding sentence naming the active consequences.
    std::vector<std::string> consequences;
    double max_l3 = 0.0;
    for (const std::string& name : kb.indicator_names) {
        if (kb.node_level(name) != 3) continue;
        const double a = p.activation.at(name);
        if (a > 0.0) consequences.push_back(kb.display_name(name));
        max_l3 = std::max(max_l3, a);
    }
    if (!consequences.empty()) {
        text << "Together these changes culminate in " << join_names(consequences)
             << (max_l3 >= 0.5 ? ", indicating elevated cardiovascular risk."
                               : "; overall cardiovascular risk is not judged elevated.");
    }

    (void)findings;
    std::string s = text.str();
    while (!s.empty() && s.back() == ' ') s.pop_back();
    return s;
}

}  // namespace

ReasoningTrace reason(const FindingSet& findings, const KnowledgeGraph& kb) {
    const Propagation p = propagate(findings, kb);

    ReasoningTrace trace;
    trace.kb_version = kb.version;
    trace.indicator_vector.resize(static_cast<std::size_t>(kb.d_reason()));
    for (int i = 0; i < kb.d_reason(); ++i)
        trace.indicator_vector[static_cast<std::size_t>(i)] =
            p.activation.at(kb.indicator_names[static_cast<std::size_t>(i)]);

    enumerate_chains(findings, kb, p, trace.chains);

    double max_l3 = 0.0;
    for (const std::string& name : kb.indicator_names)
        if (kb.node_level(name) == 3) max_l3 = std::max(max_l3, p.activation.at(name));
    trace.judgment = max_l3 >= 0.5 ? Judgment::elevated_risk : Judgment::not_elevated;

    trace.rationale = trace.chains.empty() ? std::string() : build_rationale(findings, kb, p);
    return trace;
}

std::vector<double> encode_indicators(const ReasoningTrace& trace) {
    return trace.indicator_vector;
}

std::vector<double> encode_indicators(const ReasoningTrace& trace,
                                      const std::string& expected_kb_version,
                                      int expected_dim) {
    if (trace.kb_version != expected_kb_version)
        throw ValidationError("KB version mismatch: trace has '" + trace.kb_version +
                              "', model expects '" + expected_kb_version + "'");
    if (static_cast<int>(trace.indicator_vector.size()) != expected_dim)
        throw ValidationError("indicator dimension mismatch: trace has " +
                              std::to_string(trace.indicator_vector.size()) +
                              ", model expects " + std::to_string(expected_dim));
    return trace.indicator_vector;
}

std::string render_rationale(const ReasoningTrace& trace) {
    if (trace.chains.empty()) return kEmptyRationale;
    return trace.rationale;
}

std::string trace_to_json(const ReasoningTrace& trace) {
    json j;
    json chains = json::array();
    for (const ReasoningChain& c : trace.chains) {
        json jc;
        jc["path"] = c.path;
        jc["activation"] = c.activation;
        chains.push_back(jc);
    }
    j["chains"] = chains;
    j["indicator_vector"] = trace.indicator_vector;
    j["rationale"] = trace.rationale;
    j["judgment"] = to_string(trace.judgment);
    j["kb_version"] = trace.kb_version;
    j["source"] = trace.source == TraceSource::local ? "local" : "external_service";
    return j.dump(2);
}

ReasoningTrace trace_from_json(const std::string& text, const KnowledgeGraph& kb) {
    ReasoningTrace trace;
    try {
        const json j = json::parse(text);
        for (const json& jc : j.at("chains")) {
            ReasoningChain c;
            c.path = jc.at("path").get<std::vector<std::string>>();
            c.activation = jc.at("activation").get<double>();
            trace.chains.push_back(std::move(c));
        }
        trace.indicator_vector = j.at("indicator_vector").get<std::vector<double>>();
        trace.rationale = j.at("rationale").get<std::string>();
        trace.judgment = judgment_from_string(j.at("judgment").get<std::string>());
        trace.kb_version = j.value("kb_version", kb.version);
        trace.source = j.value("source", std::string("local")) == "external_service"
                           ? TraceSource::external_service
                           : TraceSource::local;
    } catch (const json::exception& e) {
        throw ValidationError(std::string("bad reasoning trace JSON: ") + e.what());
    }

    if (trace.kb_version != kb.version)
        throw ValidationError("trace KB version '" + trace.kb_version +
                              "' does not match loaded KB '" + kb.version + "'");
    if (static_cast<int>(trace.indicator_vector.size()) != kb.d_reason())
        throw ValidationError("indicator_vector has dimension " +
                              std::to_string(trace.indicator_vector.size()) + ", KB needs " +
                              std::to_string(kb.d_reason()));
    for (double a : trace.indicator_vector)
        if (!(a >= 0.0 && a <= 1.0))
            throw ValidationError("indicator activation outside [0,1]");
    if (!trace.chains.empty() && trace.rationale.empty())
        throw ValidationError("nonempty chains require a rationale");
    if (trace.chains.empty() && !trace.rationale.empty())
        throw ValidationError("empty chains must carry an empty rationale");

    double max_l3 = 0.0;
    for (const std::string& name : kb.indicator_names)
        if (kb.node_level(name) == 3) {
            const int idx = kb.indicator_index(name);
            max_l3 = std::max(max_l3, trace.indicator_vector[static_cast<std::size_t>(idx)]);
        }
    const Judgment expect = max_l3 >= 0.5 ? Judgment::elevated_risk : Judgment::not_elevated;
    if (expect != trace.judgment)
        throw ValidationError("judgment inconsistent with level-3 activations");
    return trace;
}

}  // namespace cardiopulm
