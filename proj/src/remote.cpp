#include "cardiopulm/remote.hpp"

#include <httplib.h>
#include <json.hpp>

#include "cardiopulm/errors.hpp"

namespace cardiopulm {

using nlohmann::json;

namespace {

httplib::Client make_client(const std::string& endpoint, const RemoteConfig& config) {
    httplib::Client cli(endpoint);
    cli.set_connection_timeout(config.timeout_seconds, 0);
    cli.set_read_timeout(config.timeout_seconds, 0);
    cli.set_write_timeout(config.timeout_seconds, 0);
    return cli;
}

}  // namespace

FindingSet fetch_findings_remote(const std::string& scan_ref, const std::string& endpoint,
                                 const RemoteConfig& config) {
    json req;
    req["scan_id"] = scan_ref;
    req["volume_ref"] = scan_ref;

    httplib::Client cli = make_client(endpoint, config);
    const httplib::Result res = cli.Post("/findings", req.dump(), "application/json");
    if (!res)
        throw RemoteError("findings request failed for scan '" + scan_ref + "' (" +
                          httplib::to_string(res.error()) + ")");
    if (res->status != 200)
        throw RemoteError("findings service returned HTTP " + std::to_string(res->status) +
                          " for scan '" + scan_ref + "'");

    std::vector<FindingScore> raw;
    try {
        const json j = json::parse(res->body);
        for (const json& f : j.at("findings"))
            raw.push_back({finding_from_string(f.at("name").get<std::string>()),
                           f.at("score").get<double>()});
    } catch (const json::exception& e) {
        throw ValidationError("findings response schema violation for scan '" + scan_ref +
                              "': " + e.what());
    }
    FindingSet out = filter_findings(raw, FindingSource::external_service);
    return out;
}

ReasoningTrace fetch_reasoning_remote(const FindingSet& findings,
                                      const std::string& endpoint, const KnowledgeGraph& kb,
                                      const RemoteConfig& config) {
    json req;
    json fs = json::array();
    for (Finding f : findings.retained())
        fs.push_back({{"name", to_string(f)}, {"score", findings.score_of(f)}});
    req["findings"] = fs;
    req["kb_version"] = kb.version;

    httplib::Client cli = make_client(endpoint, config);
    const httplib::Result res = cli.Post("/reason", req.dump(), "application/json");
    if (!res)
        throw RemoteError("reasoning request failed (" + httplib::to_string(res.error()) + ")");
    if (res->status != 200)
        throw RemoteError("reasoning service returned HTTP " + std::to_string(res->status));

    ReasoningTrace trace = trace_from_json(res->body, kb);
    trace.source = TraceSource::external_service;
    return trace;
}

}  // namespace cardiopulm
