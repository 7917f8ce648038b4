#include <gtest/gtest.h>

#include <random>

#include "bam/engine.hpp"
#include "bam/errors.hpp"
#include "bam/simharness.hpp"

using namespace bam;

namespace {

Vulnerability vuln(std::string id, std::string sensor, double p = 0.8, std::optional<double> fp = std::nullopt) {
    Vulnerability v;
    v.id = std::move(id);
    v.explicitProbability = p;
    v.sensor = SensorSpec{std::move(sensor), fp, std::nullopt};
    return v;
}

// X, Y and Z all reach T, and nothing else.
Topology fan_in() {
    Topology t;
    for (const char* h : {"X", "Y", "Z"}) t.hosts.push_back(HostSpec{h, {}, {}, 1});
    t.hosts.push_back(HostSpec{"T", {vuln("vt", "s")}, {}, 1});
    t.reachability = {{"X", "T"}, {"Y", "T"}, {"Z", "T"}};
    return t;
}

SecurityEvent event(EventKind kind, std::string subject, std::optional<double> confidence = std::nullopt,
                    std::optional<std::string> source = std::nullopt) {
    SecurityEvent e;
    e.kind = kind;
    e.subjectId = std::move(subject);
    e.confidence = confidence;
    e.source = std::move(source);
    return e;
}

EvidenceState observed_only() {
    EvidenceState s;
    s.assumeSilentSensors = false;
    return s;
}

std::size_t total_items(const std::vector<std::vector<EvidenceItem>>& ev) {
    std::size_t n = 0;
    for (const auto& v : ev) n += v.size();
    return n;
}

} // namespace

TEST(RiskLevel, Bands) {
    EXPECT_EQ(risk_level(0.2), RiskLevel::NotSignificant);
    EXPECT_EQ(risk_level(0.25), RiskLevel::NotSignificant);
    EXPECT_EQ(risk_level(0.2500001), RiskLevel::Low);
    EXPECT_EQ(risk_level(0.5), RiskLevel::Low);
    EXPECT_EQ(risk_level(0.6), RiskLevel::Medium);
    EXPECT_EQ(risk_level(0.75), RiskLevel::Medium);
    EXPECT_EQ(risk_level(0.76), RiskLevel::High);
    EXPECT_EQ(risk_level(1.0), RiskLevel::High);
}

TEST(ApplyEvent, AlertFansOutToEveryBat) {
    Model m = build_model(fan_in(), ModelParams{});
    auto state = apply_event(m, observed_only(), event(EventKind::SensorAlert, "s"));
    auto ev = resolve_evidence(m, state);
    EXPECT_EQ(total_items(ev), 3u);
    int batsWithItems = 0;
    for (const auto& v : ev) {
        batsWithItems += !v.empty();
        for (const auto& item : v) EXPECT_EQ(item.mode, EvidenceMode::HardPositive);
    }
    EXPECT_EQ(batsWithItems, 3);
}

TEST(ApplyEvent, ConfidenceGivesSoftEvidence) {
    Model m = build_model(fan_in(), ModelParams{});
    auto state = apply_event(m, observed_only(), event(EventKind::SensorAlert, "s", 0.8));
    for (const auto& v : resolve_evidence(m, state)) {
        for (const auto& item : v) {
            EXPECT_EQ(item.mode, EvidenceMode::Soft);
            EXPECT_DOUBLE_EQ(item.p, 0.8);
        }
    }
}

TEST(ApplyEvent, ScopedAlertOnlyHitsThatSource) {
    Model m = build_model(fan_in(), ModelParams{});
    auto state = apply_event(m, EvidenceState{}, event(EventKind::SensorAlert, "s", std::nullopt, "Y"));
    auto ev = resolve_evidence(m, state);
    auto y = *m.tag.find_node("Y");
    for (std::size_t b = 0; b < ev.size(); ++b) {
        for (const auto& item : ev[b]) {
            // auto-silent: other sources see a silent sensor
            EXPECT_EQ(item.mode, b == y ? EvidenceMode::HardPositive : EvidenceMode::HardNegative);
        }
    }
    // A later unscoped event replaces the scoped one.
    state = apply_event(m, state, event(EventKind::SensorSilent, "s"));
    for (const auto& v : resolve_evidence(m, state)) {
        for (const auto& item : v) EXPECT_EQ(item.mode, EvidenceMode::HardNegative);
    }
}

TEST(ApplyEvent, HostHealthySetsEveryInstance) {
    Model m = build_model(use_case_topology(), ModelParams{});
    auto state = apply_event(m, observed_only(), event(EventKind::HostHealthy, "D"));
    auto ev = resolve_evidence(m, state);
    auto d = *m.tag.find_node("D");
    std::size_t instances = 0;
    for (const auto& bat : m.bam.bats) {
        for (const auto& n : bat.nodes()) {
            instances += (n.kind == NodeKind::Topological || n.kind == NodeKind::AttackSource) && n.ref == d;
        }
    }
    EXPECT_GT(instances, 1u);
    EXPECT_EQ(total_items(ev), instances);
    for (std::size_t b = 0; b < ev.size(); ++b) {
        for (const auto& item : ev[b]) {
            EXPECT_EQ(item.mode, EvidenceMode::HardNegative);
            EXPECT_EQ(m.bam.bats[b].node(item.node).ref, d);
        }
    }
    auto report = assess(m, state);
    EXPECT_EQ(report.probability("D"), 0.0);
}

TEST(ApplyEvent, UnknownSubjects) {
    Model m = build_model(fan_in(), ModelParams{});
    EXPECT_THROW(apply_event(m, {}, event(EventKind::SensorAlert, "nope")), UnknownId);
    EXPECT_THROW(apply_event(m, {}, event(EventKind::HostCompromised, "nope")), UnknownId);
    EXPECT_THROW(apply_event(m, {}, event(EventKind::SensorAlert, "s", std::nullopt, "nope")), UnknownId);
    EXPECT_THROW(apply_event(m, {}, event(EventKind::SensorAlert, "s", 1.5)), InvalidArgument);
}

TEST(ApplyEvent, LastEventWinsAndIdempotent) {
    Model m = build_model(fan_in(), ModelParams{});
    auto alert = event(EventKind::SensorAlert, "s");
    auto once = apply_event(m, {}, alert);
    auto twice = apply_event(m, once, alert);
    EXPECT_EQ(once, twice);
    auto replaced = apply_event(m, once, event(EventKind::SensorSilent, "s"));
    EXPECT_EQ(replaced, apply_event(m, {}, event(EventKind::SensorSilent, "s")));
}

TEST(ApplyEvent, UnobservedClearsAutoSilence) {
    Model m = build_model(fan_in(), ModelParams{});
    EXPECT_EQ(total_items(resolve_evidence(m, {})), 3u);
    auto state = apply_event(m, {}, event(EventKind::SensorUnobserved, "s"));
    EXPECT_EQ(total_items(resolve_evidence(m, state)), 0u);
}

TEST(Consolidate, MaxRule) {
    // T appears in BAT(X), BAT(Y), BAT(Z) and as the source of BAT(T).
    Model m = build_model(fan_in(), ModelParams{});
    std::vector<Marginals> marg;
    for (const auto& bat : m.bam.bats) marg.emplace_back(bat.size(), 0.0);
    auto t = *m.tag.find_node("T");
    const double values[] = {0.2, 0.5, 0.3};
    int k = 0;
    for (std::size_t b = 0; b < m.bam.bats.size(); ++b) {
        if (m.bam.bats[b].source() == t) continue;
        for (BatNodeId i = 0; i < m.bam.bats[b].size(); ++i) {
            if (m.bam.bats[b].node(i).kind == NodeKind::Topological) marg[b][i] = values[k++];
        }
    }
    ASSERT_EQ(k, 3);
    auto r = consolidate(m, marg);
    EXPECT_DOUBLE_EQ(r.probability("T"), 0.5);
    EXPECT_EQ(r.at("T").batSource, "Y");
    EXPECT_EQ(r.at("T").bestPath, (std::vector<std::string>{"Y", "T"}));
    EXPECT_EQ(r.ranking.front(), "T");
    // Remaining hosts tie at 0 and are ordered by id.
    EXPECT_EQ(r.ranking, (std::vector<std::string>{"T", "X", "Y", "Z"}));
}

TEST(Assess, PriorFloorWithoutEvidence) {
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
        TopologyGenSpec spec;
        spec.nHosts = 8;
        spec.nSubnets = 3;
        spec.vulnsPerHost = 3;
        spec.seed = seed;
        Model m = build_model(random_topology(spec), ModelParams{});
        auto r = assess(m, observed_only());
        for (std::size_t h = 0; h < m.tag.nodes.size(); ++h) {
            EXPECT_GE(r.perAsset[h].probability, m.priors[h] - 1e-15) << m.tag.nodes[h];
        }
    }
}

TEST(Assess, AlertMonotonicity) {
    std::mt19937_64 rng(11);
    Model m = build_model(use_case_topology(), ModelParams{});
    std::vector<std::string> sensors(m.sensorIds.begin(), m.sensorIds.end());
    for (int trial = 0; trial < 40; ++trial) {
        // Random background of silent/alert/unobserved sensors, then one extra alert.
        EvidenceState base;
        for (const auto& s : sensors) {
            switch (rng() % 3) {
            case 0:
                base = apply_event(m, base, event(EventKind::SensorAlert, s));
                break;
            case 1:
                base = apply_event(m, base, event(EventKind::SensorUnobserved, s));
                break;
            default:
                break;
            }
        }
        const auto& step = m.tag.steps[rng() % m.tag.steps.size()];
        const auto& sensor = step.sensor->memberSensorIds.front();
        auto src = m.tag.node_id(step.source);
        auto dst = m.tag.node_id(step.target);
        auto before = assess(m, base);
        auto after = assess(m, apply_event(m, base, event(EventKind::SensorAlert, sensor, std::nullopt, src)));
        EXPECT_GE(after.probability(src), before.probability(src) - 1e-12);
        EXPECT_GE(after.probability(dst), before.probability(dst) - 1e-12);
    }
}

TEST(Assess, ReplayDeterminismAndWorkers) {
    Model m = build_model(use_case_topology(), ModelParams{});
    auto sc = use_case_scenarios()[3];
    auto run = [&](unsigned workers) {
        EvidenceState s;
        for (const auto& e : sc.events()) s = apply_event(m, s, e);
        return to_json(assess(m, s, workers));
    };
    EXPECT_EQ(run(1), run(1));
    EXPECT_EQ(run(1), run(3));
}

TEST(Assess, ChainEffect) {
    auto r = run_use_case(ModelParams{});
    for (const char* h : {"A", "G", "D"}) EXPECT_GT(r.reports[3].probability(h), r.reports[0].probability(h)) << h;
}

TEST(Assess, ImpossibleEvidenceNamesBat) {
    Topology t;
    t.hosts = {HostSpec{"X", {}, {}, 1}, HostSpec{"T", {vuln("vt", "s", 0.8, 0.0)}, {}, 1}};
    t.reachability = {{"X", "T"}};
    Model m = build_model(t, ModelParams{});
    EvidenceState s;
    s = apply_event(m, s, event(EventKind::HostHealthy, "X"));
    s = apply_event(m, s, event(EventKind::SensorAlert, "s"));
    try {
        assess(m, s);
        FAIL() << "expected ImpossibleEvidence";
    } catch (const ImpossibleEvidence& e) {
        EXPECT_EQ(e.bat_source(), "X");
    }
}

TEST(ReportJson, Schema) {
    auto r = run_use_case(ModelParams{});
    auto j = to_json(r.reports[3]);
    EXPECT_TRUE(j["perAsset"].is_object());
    EXPECT_EQ(j["ranking"].size(), 12u);
    EXPECT_EQ(j["riskLevel"]["A"], "High");
    EXPECT_EQ(j["bestPath"]["internet"], nlohmann::json({"internet"}));
}

TEST(EventStream, ParsesJsonLines) {
    auto events = parse_event_stream(
        "{\"kind\":\"SensorAlert\",\"subjectId\":\"s_A\",\"timestamp\":1,\"source\":\"internet\"}\n"
        "\n"
        "{\"kind\":\"HostHealthy\",\"subjectId\":\"D\",\"confidence\":0.9,\"timestamp\":2}\n");
    ASSERT_EQ(events.size(), 2u);
    EXPECT_EQ(events[0].kind, EventKind::SensorAlert);
    EXPECT_EQ(events[0].source, "internet");
    EXPECT_EQ(events[1].confidence, 0.9);
    EXPECT_EQ(parse_event(to_json(events[1])), events[1]);
}

TEST(EventStream, ErrorsNameTheLine) {
    try {
        parse_event_stream("{\"kind\":\"SensorAlert\",\"subjectId\":\"s\"}\n{\"kind\":\"Bogus\",\"subjectId\":\"s\"}\n");
        FAIL();
    } catch (const SchemaError& e) {
        EXPECT_EQ(e.path(), "line 2/kind");
    }
    EXPECT_THROW(parse_event_stream("{\"kind\":\"SensorAlert\",\"subjectId\":\"s\",\"confidence\":2}"), SchemaError);
    EXPECT_THROW(parse_event_stream("not json"), SchemaError);
}
