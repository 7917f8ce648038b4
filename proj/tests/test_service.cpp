#include <gtest/gtest.h>

#include <httplib.h>

#include <filesystem>
#include <fstream>
#include <thread>

#include "bam/service.hpp"
#include "bam/simharness.hpp"

using namespace bam;
using nlohmann::json;

namespace {

Model use_case_model() {
    return build_model(use_case_topology(), ModelParams{});
}

HttpRequest request(std::string method, std::string path, std::string body = {}) {
    HttpRequest r;
    r.method = std::move(method);
    r.path = std::move(path);
    r.body = std::move(body);
    return r;
}

const std::string kFirstAlert = R"({"kind":"SensorAlert","subjectId":"s_A","source":"internet","timestamp":1})";

std::filesystem::path temp_log(const std::string& name) {
    auto p = std::filesystem::temp_directory_path() / ("bam_test_" + name + ".jsonl");
    std::filesystem::remove(p);
    return p;
}

double prob(const json& body, const std::string& host) {
    return body["report"]["perAsset"][host].get<double>();
}

} // namespace

TEST(Service, ModelEndpoint) {
    Session s(use_case_model());
    auto r = s.handle(request("GET", "/model"));
    EXPECT_EQ(r.status, 200);
    EXPECT_EQ(r.body["bam"]["bats"].size(), 12u);
    EXPECT_EQ(r.body["params"]["nbSteps"], 3);
    EXPECT_EQ(r.body["revision"], 0);
}

TEST(Service, PostEventRaisesTarget) {
    Session s(use_case_model());
    auto base = s.handle(request("GET", "/risk"));
    ASSERT_EQ(base.status, 200);
    EXPECT_EQ(base.body["revision"], 0);
    auto r = s.handle(request("POST", "/events", kFirstAlert));
    ASSERT_EQ(r.status, 200) << r.body.dump();
    EXPECT_EQ(r.body["revision"], 1);
    EXPECT_EQ(r.body["ids"], json({1}));
    EXPECT_GT(prob(r.body, "A"), prob(base.body, "A"));
    EXPECT_EQ(s.handle(request("GET", "/risk")).body, (json{{"revision", 1}, {"report", r.body["report"]}}));
}

TEST(Service, WhatIfIsIsolated) {
    Session s(use_case_model());
    auto before = s.handle(request("GET", "/risk")).body;
    auto a = s.handle(request("POST", "/whatif", kFirstAlert));
    auto b = s.handle(request("POST", "/whatif", kFirstAlert));
    ASSERT_EQ(a.status, 200);
    EXPECT_EQ(a.body, b.body);
    EXPECT_EQ(a.body["revision"], 0);
    EXPECT_TRUE(a.body["hypothetical"]);
    EXPECT_EQ(s.handle(request("GET", "/risk")).body, before);
    EXPECT_EQ(s.revision(), 0u);
}

TEST(Service, DeleteRestoresReport) {
    Session s(use_case_model());
    auto before = s.handle(request("GET", "/risk")).body["report"];
    auto posted = s.handle(request("POST", "/events", kFirstAlert));
    auto id = posted.body["ids"][0].get<std::uint64_t>();
    auto r = s.handle(request("DELETE", "/events/" + std::to_string(id)));
    ASSERT_EQ(r.status, 200);
    EXPECT_EQ(r.body["revision"], 2);
    for (auto& [host, p] : before["perAsset"].items()) {
        EXPECT_NEAR(p.get<double>(), r.body["report"]["perAsset"][host].get<double>(), 1e-9);
    }
    EXPECT_EQ(s.handle(request("DELETE", "/events/" + std::to_string(id))).status, 404);
}

TEST(Service, ErrorStatuses) {
    Session s(use_case_model());
    EXPECT_EQ(s.handle(request("POST", "/events", "{oops")).status, 400);
    EXPECT_EQ(s.handle(request("POST", "/events", R"({"kind":"Nope","subjectId":"s_A"})")).status, 400);
    auto unknown = s.handle(request("POST", "/events", R"({"kind":"SensorAlert","subjectId":"s_Z"})"));
    EXPECT_EQ(unknown.status, 404);
    EXPECT_EQ(unknown.body["id"], "s_Z");
    EXPECT_EQ(s.handle(request("GET", "/nowhere")).status, 404);
    EXPECT_EQ(s.handle(request("PUT", "/risk")).status, 405);
    EXPECT_EQ(s.handle(request("GET", "/bats/Q/explain")).status, 404);
    EXPECT_EQ(s.revision(), 0u);

    auto stale = request("POST", "/events", kFirstAlert);
    stale.headers["if-match"] = "\"7\"";
    auto r = s.handle(stale);
    EXPECT_EQ(r.status, 409);
    EXPECT_EQ(r.body["revision"], 0);
    stale.headers["if-match"] = "0";
    EXPECT_EQ(s.handle(stale).status, 200);

    auto body = json{{"revision", 0}, {"events", json::array({json::parse(kFirstAlert)})}};
    EXPECT_EQ(s.handle(request("POST", "/events", body.dump())).status, 409);
}

TEST(Service, ImpossibleEvidenceIs422AndNotCommitted) {
    Topology t;
    Vulnerability v;
    v.id = "v";
    v.explicitProbability = 0.5;
    v.sensor = SensorSpec{"s", 0.0, 0.0};
    t.hosts = {HostSpec{"X", {}, {}, 1}, HostSpec{"T", {v}, {}, 1}};
    t.reachability = {{"X", "T"}};
    Session s(build_model(t, ModelParams{}));
    auto r = s.handle(request("POST", "/events",
                              R"([{"kind":"HostHealthy","subjectId":"X"},{"kind":"SensorAlert","subjectId":"s"}])"));
    EXPECT_EQ(r.status, 422);
    EXPECT_EQ(r.body["batSource"], "X");
    EXPECT_EQ(s.revision(), 0u);
}

TEST(Service, ExplainBestPath) {
    Session s(use_case_model());
    for (const auto& e : use_case_scenarios()[3].events()) s.commit({e});
    auto r = s.handle([] {
        auto q = request("GET", "/bats/internet/explain");
        q.query["asset"] = "D";
        return q;
    }());
    ASSERT_EQ(r.status, 200) << r.body.dump();
    ASSERT_EQ(r.body["assets"].size(), 1u);
    const auto& path = r.body["assets"][0]["path"];
    ASSERT_EQ(path.size(), 4u);
    EXPECT_EQ(path[0]["host"], "internet");
    EXPECT_EQ(path[1]["host"], "A");
    EXPECT_EQ(path[2]["host"], "G");
    EXPECT_EQ(path[3]["host"], "D");
    EXPECT_EQ(path[3]["via"]["sensor"]["evidence"], "HardPositive");
    EXPECT_EQ(path[3]["probability"], r.body["assets"][0]["probability"]);

    auto all = s.handle(request("GET", "/bats/internet/explain"));
    EXPECT_EQ(all.body["assets"].size(), 8u);  // internet, A, C, D, G, H, I, J
}

TEST(Service, LogReplayReproducesState) {
    auto log = temp_log("replay");
    json last;
    {
        Session s(use_case_model(), log);
        for (const auto& e : use_case_scenarios()[3].events()) s.commit({e});
        s.handle(request("DELETE", "/events/2"));
        s.handle(request("POST", "/events", R"({"kind":"HostCompromised","subjectId":"K","confidence":0.6})"));
        last = s.handle(request("GET", "/risk")).body;
        EXPECT_EQ(last["revision"], 5);
    }
    Session replayed(use_case_model(), log);
    EXPECT_EQ(replayed.handle(request("GET", "/risk")).body, last);
    EXPECT_EQ(replayed.handle(request("GET", "/events")).body["events"].size(), 3u);
    // New ids continue after the replayed ones.
    auto r = replayed.handle(request("POST", "/events", kFirstAlert));
    EXPECT_EQ(r.body["ids"][0], 5);
    std::filesystem::remove(log);
}

TEST(Service, CorruptLogIsRejected) {
    auto log = temp_log("corrupt");
    std::ofstream(log) << "{\"op\":\"commit\",\"events\":[]}\nnot json\n";
    try {
        Session s(use_case_model(), log);
        FAIL();
    } catch (const SchemaError& e) {
        EXPECT_NE(std::string(e.path()).find("line 2"), std::string::npos);
    }
    std::filesystem::remove(log);
}

TEST(Service, PortFromEnv) {
    ::setenv("BAM_PORT", "9123", 1);
    EXPECT_EQ(port_from_env(8080), 9123);
    ::setenv("BAM_PORT", "banana", 1);
    EXPECT_EQ(port_from_env(8080), 8080);
    ::unsetenv("BAM_PORT");
    EXPECT_EQ(port_from_env(8080), 8080);
}

TEST(Service, HttpRoundTrip) {
    Session s(use_case_model());
    auto dir = std::filesystem::temp_directory_path() / "bam_static_test";
    std::filesystem::create_directories(dir);
    std::ofstream(dir / "index.html") << "<html>console</html>";

    ServeOptions opts;
    opts.port = 0;
    opts.staticDir = dir;
    HttpServer server(s, opts);
    int port = server.bind();
    std::thread t([&] { server.run(); });

    httplib::Client client("127.0.0.1", port);
    auto risk = client.Get("/risk");
    ASSERT_TRUE(risk);
    EXPECT_EQ(risk->status, 200);
    EXPECT_EQ(json::parse(risk->body)["revision"], 0);

    auto posted = client.Post("/events", kFirstAlert, "application/json");
    ASSERT_TRUE(posted);
    EXPECT_EQ(posted->status, 200);
    EXPECT_EQ(json::parse(posted->body)["revision"], 1);

    auto del = client.Delete("/events/1");
    ASSERT_TRUE(del);
    EXPECT_EQ(del->status, 200);

    auto page = client.Get("/index.html");
    ASSERT_TRUE(page);
    EXPECT_EQ(page->body, "<html>console</html>");

    auto missing = client.Get("/bats/nobody/explain");
    ASSERT_TRUE(missing);
    EXPECT_EQ(missing->status, 404);

    server.stop();
    t.join();
    std::filesystem::remove_all(dir);
}
