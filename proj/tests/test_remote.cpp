#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <httplib.h>

#include <atomic>
#include <thread>

#include <json.hpp>

#include "cardiopulm/errors.hpp"
#include "cardiopulm/knowledge.hpp"
#include "cardiopulm/reasoning.hpp"
#include "cardiopulm/remote.hpp"

using namespace cardiopulm;
using nlohmann::json;

namespace {

// One-shot localhost stub; each test installs its handlers then queries it.
class StubServer {
public:
    explicit StubServer(std::function<void(httplib::Server&)> setup) {
        setup(server_);
        port_ = server_.bind_to_any_port("127.0.0.1");
        thread_ = std::thread([this] { server_.listen_after_bind(); });
        server_.wait_until_ready();
    }
    ~StubServer() {
        server_.stop();
        thread_.join();
    }
    std::string endpoint() const { return "http://127.0.0.1:" + std::to_string(port_); }

private:
    httplib::Server server_;
    int port_ = 0;
    std::thread thread_;
};

}  // namespace

TEST_SUITE("remote findings") {
    TEST_CASE("a valid response becomes an external-service finding set") {
        StubServer stub([](httplib::Server& s) {
            s.Post("/findings", [](const httplib::Request& req, httplib::Response& res) {
                const json in = json::parse(req.body);
                CHECK(in.at("scan_id") == "scan42");
                res.set_content(R"({"findings":[{"name":"opacity","score":0.9}]})",
                                "application/json");
            });
        });
        const FindingSet fs = fetch_findings_remote("scan42", stub.endpoint());
        CHECK(fs.source == FindingSource::external_service);
        CHECK(fs.score_of(Finding::opacity) == 0.9);
        CHECK(fs.retained() == std::vector<Finding>{Finding::opacity});
    }

    TEST_CASE("out-of-range scores are rejected, never clamped") {
        StubServer stub([](httplib::Server& s) {
            s.Post("/findings", [](const httplib::Request&, httplib::Response& res) {
                res.set_content(R"({"findings":[{"name":"opacity","score":1.3}]})",
                                "application/json");
            });
        });
        CHECK_THROWS_AS((void)fetch_findings_remote("scan1", stub.endpoint()),
                        ValidationError);
    }

    TEST_CASE("schema violations are validation errors") {
        StubServer stub([](httplib::Server& s) {
            s.Post("/findings", [](const httplib::Request&, httplib::Response& res) {
                res.set_content(R"({"items":[]})", "application/json");
            });
        });
        CHECK_THROWS_AS((void)fetch_findings_remote("scan1", stub.endpoint()),
                        ValidationError);
    }

    TEST_CASE("non-200 statuses are remote errors") {
        StubServer stub([](httplib::Server& s) {
            s.Post("/findings", [](const httplib::Request&, httplib::Response& res) {
                res.status = 503;
            });
        });
        CHECK_THROWS_AS((void)fetch_findings_remote("scan1", stub.endpoint()), RemoteError);
    }

    TEST_CASE("unreachable endpoints fail with the scan reference attached") {
        RemoteConfig cfg;
        cfg.timeout_seconds = 1;
        try {
            (void)fetch_findings_remote("scan_xyz", "http://127.0.0.1:1", cfg);
            FAIL("expected RemoteError");
        } catch (const RemoteError& e) {
            CHECK(std::string(e.what()).find("scan_xyz") != std::string::npos);
        }
    }
}

TEST_SUITE("remote reasoning") {
    TEST_CASE("a stub echoing a locally computed trace is accepted") {
        const KnowledgeGraph& kb = default_knowledge_base();
        const FindingSet fs = filter_findings({{Finding::opacity, 0.9},
                                               {Finding::pleural_effusion, 0.8}});
        const ReasoningTrace local = reason(fs, kb);
        const std::string payload = trace_to_json(local);

        StubServer stub([payload](httplib::Server& s) {
            s.Post("/reason", [payload](const httplib::Request& req, httplib::Response& res) {
                const json in = json::parse(req.body);
                CHECK(in.at("kb_version") == "kb-v1");
                CHECK(in.at("findings").size() == 2);
                res.set_content(payload, "application/json");
            });
        });
        const ReasoningTrace got = fetch_reasoning_remote(fs, stub.endpoint(), kb);
        CHECK(got.source == TraceSource::external_service);
        CHECK(got.indicator_vector == local.indicator_vector);
        CHECK(got.judgment == local.judgment);
    }

    TEST_CASE("wrong indicator dimension is rejected") {
        const KnowledgeGraph& kb = default_knowledge_base();
        StubServer stub([](httplib::Server& s) {
            s.Post("/reason", [](const httplib::Request&, httplib::Response& res) {
                json j;
                j["chains"] = json::array();
                j["indicator_vector"] = std::vector<double>(7, 0.0);  // KB needs 11
                j["rationale"] = "";
                j["judgment"] = "not_elevated";
                j["kb_version"] = "kb-v1";
                res.set_content(j.dump(), "application/json");
            });
        });
        const FindingSet fs = filter_findings({});
        CHECK_THROWS_AS((void)fetch_reasoning_remote(fs, stub.endpoint(), kb),
                        ValidationError);
    }

    TEST_CASE("nonempty chains without a rationale are rejected") {
        const KnowledgeGraph& kb = default_knowledge_base();
        const FindingSet fs = filter_findings({{Finding::opacity, 0.9}});
        ReasoningTrace bad = reason(fs, kb);
        REQUIRE(!bad.chains.empty());
        bad.rationale.clear();
        const std::string payload = trace_to_json(bad);
        StubServer stub([payload](httplib::Server& s) {
            s.Post("/reason", [payload](const httplib::Request&, httplib::Response& res) {
                res.set_content(payload, "application/json");
            });
        });
        CHECK_THROWS_AS((void)fetch_reasoning_remote(fs, stub.endpoint(), kb),
                        ValidationError);
    }
}
