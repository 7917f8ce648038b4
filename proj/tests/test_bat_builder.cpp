#include <gtest/gtest.h>

#include <fstream>
#include <functional>
#include <set>

#include "bam/bat.hpp"
#include "bam/errors.hpp"

using namespace bam;

namespace {

// Complete TAG on nodes "1".."n": k step types on every ordered pair, each
// with `conditions` conditions and an optional sensor.
Tag complete_tag(int n, int k = 1, bool sensors = true, int conditions = 1) {
    Tag tag;
    for (int i = 1; i <= n; ++i) tag.nodes.push_back(std::to_string(i));
    for (int a = 0; a < n; ++a) {
        for (int b = 0; b < n; ++b) {
            if (a == b) continue;
            for (int t = 0; t < k; ++t) {
                AttackStep s;
                s.source = a;
                s.target = b;
                s.type = static_cast<AttackType>(t);
                for (int c = 0; c < conditions; ++c) s.conditions.push_back({"c" + std::to_string(c), 0.5 + 0.1 * c});
                if (sensors) s.sensor = GroupedSensor{{"s"}, 0.05, 0.01};
                s.memberVulnIds = {"v"};
                tag.steps.push_back(s);
            }
        }
    }
    return tag;
}

std::vector<double> priors_for(const Tag& tag, double p = 0.7) {
    return std::vector<double>(tag.nodes.size(), p);
}

ModelParams with_steps(int s) {
    ModelParams p;
    p.nbSteps = s;
    return p;
}

std::set<std::vector<std::string>> path_memories(const Bat& bat, const Tag& tag) {
    std::set<std::vector<std::string>> out;
    for (BatNodeId i = 0; i < bat.size(); ++i) {
        if (!bat.is_topological(i)) continue;
        std::vector<std::string> ids;
        for (auto t : bat.path_memory(i)) ids.push_back(tag.node_id(t));
        out.insert(ids);
    }
    return out;
}

std::size_t topological_count(const Bat& bat) {
    std::size_t n = 0;
    for (BatNodeId i = 0; i < bat.size(); ++i) n += bat.is_topological(i) ? 1 : 0;
    return n;
}

// Independent oracle: walk simple paths over the raw step list and add up the
// nodes each step instance contributes.
std::size_t oracle_node_count(const Tag& tag, TagNodeIndex source, int nbSteps) {
    std::vector<bool> visited(tag.nodes.size(), false);
    std::function<std::size_t(TagNodeIndex, int)> walk = [&](TagNodeIndex at, int depth) -> std::size_t {
        if (depth == nbSteps) return 0;
        visited[at] = true;
        std::size_t total = 0;
        for (const auto& s : tag.steps) {
            if (s.source != at || visited[s.target]) continue;
            total += 2 + s.conditions.size() + (s.sensor ? 1 : 0);
            total += walk(s.target, depth + 1);
        }
        visited[at] = false;
        return total;
    };
    return 1 + walk(source, 0);
}

} // namespace

TEST(BuildBat, CompleteThreeNodePathMemories) {
    auto tag = complete_tag(3);
    auto bat = build_bat(tag, 0, with_steps(3), priors_for(tag));
    std::set<std::vector<std::string>> expected{{"1"}, {"1", "2"}, {"1", "3"}, {"1", "2", "3"}, {"1", "3", "2"}};
    EXPECT_EQ(path_memories(bat, tag), expected);
    EXPECT_EQ(topological_count(bat), 5u);
    EXPECT_EQ(bat.node(0).kind, NodeKind::AttackSource);
    EXPECT_DOUBLE_EQ(bat.cpt(0).probability(0), 0.7);
}

TEST(BuildBat, CompleteThreeNodeOneStep) {
    auto tag = complete_tag(3);
    auto bat = build_bat(tag, 0, with_steps(1), priors_for(tag));
    std::set<std::vector<std::string>> expected{{"1"}, {"1", "2"}, {"1", "3"}};
    EXPECT_EQ(path_memories(bat, tag), expected);
}

TEST(BuildBat, NoStepsGivesSingleSource) {
    Tag tag;
    tag.nodes = {"a", "b"};
    auto bat = build_bat(tag, 1, ModelParams{}, priors_for(tag, 0.1));
    EXPECT_EQ(bat.size(), 1u);
    EXPECT_EQ(bat.node(0).kind, NodeKind::AttackSource);
    EXPECT_EQ(bat.source(), 1u);
    EXPECT_TRUE(validate_polytree(bat));
}

TEST(BuildBat, UnknownSource) {
    auto tag = complete_tag(2);
    EXPECT_THROW(build_bat(tag, 5, ModelParams{}, priors_for(tag)), UnknownId);
}

TEST(BuildBat, NodeLayoutOfOneStep) {
    auto tag = complete_tag(2);
    ModelParams params;
    auto bat = build_bat(tag, 0, params, priors_for(tag));
    // source, condition, attack step, sensor, target
    ASSERT_EQ(bat.size(), 5u);
    EXPECT_EQ(bat.node(1).kind, NodeKind::Condition);
    EXPECT_EQ(bat.node(2).kind, NodeKind::AttackStep);
    EXPECT_EQ(bat.node(3).kind, NodeKind::Sensor);
    EXPECT_EQ(bat.node(4).kind, NodeKind::Topological);
    EXPECT_EQ(std::vector<BatNodeId>(bat.parents(2).begin(), bat.parents(2).end()), (std::vector<BatNodeId>{0, 1}));
    EXPECT_EQ(bat.parents(3)[0], 2u);
    EXPECT_EQ(bat.parents(4)[0], 2u);

    EXPECT_DOUBLE_EQ(bat.cpt(1).probability(0), 0.5);
    EXPECT_DOUBLE_EQ(bat.cpt(2).probability(0b11), params.probabilityNewAttackStep);
    EXPECT_DOUBLE_EQ(bat.cpt(2).probability(0b01), 0.0);
    EXPECT_DOUBLE_EQ(bat.cpt(2).probability(0b10), 0.0);
    EXPECT_DOUBLE_EQ(bat.cpt(3).probability(1), 0.99);
    EXPECT_DOUBLE_EQ(bat.cpt(3).probability(0), 0.05);
    EXPECT_DOUBLE_EQ(bat.cpt(4).probability(1), 1.0);
    EXPECT_DOUBLE_EQ(bat.cpt(4).probability(0), params.probabilityUnknownAttack);
    EXPECT_EQ(state_labels(NodeKind::Sensor).positive, "Alert");
}

TEST(BuildBat, ConditionsAreNotShared) {
    auto tag = complete_tag(4, 1, true, 2);
    auto bat = build_bat(tag, 0, with_steps(3), priors_for(tag));
    std::vector<int> children(bat.size(), 0);
    for (BatNodeId i = 0; i < bat.size(); ++i) {
        for (auto p : bat.parents(i)) ++children[p];
    }
    for (BatNodeId i = 0; i < bat.size(); ++i) {
        auto k = bat.node(i).kind;
        if (k == NodeKind::Condition) EXPECT_EQ(children[i], 1);
        if (k == NodeKind::Sensor) EXPECT_EQ(children[i], 0);
    }
}

TEST(ValidatePolytree, SharedConditionIsRejected) {
    Bat bat(0);
    BatNode src;
    src.kind = NodeKind::AttackSource;
    auto root = bat.add_node(src, {}, Cpt::prior(0.7));
    BatNode cond;
    cond.kind = NodeKind::Condition;
    auto c = bat.add_node(cond, {}, Cpt::prior(1.0));
    BatNode step;
    step.kind = NodeKind::AttackStep;
    BatNodeId parents[] = {root, c};
    bat.add_node(step, parents, cpt_attack_step(1, 0.3));
    bat.add_node(step, parents, cpt_attack_step(1, 0.3));
    EXPECT_FALSE(validate_polytree(bat));
}

TEST(ValidatePolytree, SingleNode) {
    Bat bat(0);
    BatNode src;
    src.kind = NodeKind::AttackSource;
    bat.add_node(src, {}, Cpt::prior(0.5));
    EXPECT_TRUE(validate_polytree(bat));
    EXPECT_TRUE(structural_violations(bat).empty());
}

TEST(ValidatePolytree, DirectedCycleAndDanglingParent) {
    Bat bat(0);
    BatNode n;
    BatNodeId one[] = {1};
    BatNodeId zero[] = {0};
    bat.add_node(n, one, cpt_topological(1, 0.0));
    bat.add_node(n, zero, cpt_topological(1, 0.0));
    EXPECT_FALSE(validate_polytree(bat));

    Bat dangling(0);
    BatNodeId nine[] = {9};
    dangling.add_node(n, nine, cpt_topological(1, 0.0));
    EXPECT_FALSE(validate_polytree(dangling));
}

TEST(StructuralViolations, DetectsBadParentKinds) {
    Bat bat(0);
    BatNode src;
    src.kind = NodeKind::AttackSource;
    bat.add_node(src, {}, Cpt::prior(0.5));
    BatNode sensor;
    sensor.kind = NodeKind::Sensor;
    BatNodeId parent[] = {0};
    bat.add_node(sensor, parent, cpt_sensor(0.1, 0.1));
    EXPECT_FALSE(structural_violations(bat).empty());
}

TEST(NodeCountBound, Examples) {
    EXPECT_EQ(node_count_bound(3, 1, 2), 24u);
    EXPECT_EQ(node_count_bound(3, 1, 1), 12u);
    EXPECT_EQ(node_count_bound(3, 0, 2), 0u);
    EXPECT_EQ(node_count_bound(6, 2, 6), 4u * 2 * 720);
    EXPECT_THROW(node_count_bound(3, 1, 4), InvalidArgument);
    EXPECT_THROW(node_count_bound(3, 1, 0), InvalidArgument);
}

TEST(BuildBam, OneBatPerNode) {
    auto tag = complete_tag(3);
    auto bam = build_bam(tag, ModelParams{}, priors_for(tag));
    ASSERT_EQ(bam.bats.size(), 3u);
    for (std::size_t i = 0; i < 3; ++i) EXPECT_EQ(bam.bats[i].source(), i);

    Tag empty;
    EXPECT_TRUE(build_bam(empty, ModelParams{}, {}).bats.empty());
}

TEST(BuildBam, SingleStepTag) {
    Tag tag;
    tag.nodes = {"A", "B"};
    AttackStep s;
    s.source = 0;
    s.target = 1;
    s.conditions = {{"c", 1.0}};
    tag.steps = {s};
    auto bam = build_bam(tag, ModelParams{}, priors_for(tag));
    auto steps = [](const Bat& b) {
        int n = 0;
        for (const auto& node : b.nodes()) n += node.kind == NodeKind::AttackStep;
        return n;
    };
    EXPECT_EQ(steps(bam.bats[0]), 1);
    EXPECT_EQ(steps(bam.bats[1]), 0);
}

TEST(BuildBam, ParallelMatchesSerial) {
    auto tag = complete_tag(5);
    auto serial = build_bam(tag, with_steps(4), priors_for(tag), 1);
    auto parallel = build_bam(tag, with_steps(4), priors_for(tag), 4);
    ASSERT_EQ(serial.bats.size(), parallel.bats.size());
    for (std::size_t i = 0; i < serial.bats.size(); ++i) EXPECT_TRUE(serial.bats[i] == parallel.bats[i]);
}

TEST(BuildBat, Deterministic) {
    auto tag = complete_tag(4, 2);
    auto a = build_bat(tag, 2, with_steps(3), priors_for(tag));
    auto b = build_bat(tag, 2, with_steps(3), priors_for(tag));
    EXPECT_TRUE(a == b);
    EXPECT_EQ(to_json(a, tag), to_json(b, tag));
}

TEST(BuildBat, ChildrenInNodeIdOrder) {
    Tag tag;
    tag.nodes = {"src", "zeta", "alpha"};
    for (TagNodeIndex t : {1u, 2u}) {
        AttackStep s;
        s.source = 0;
        s.target = t;
        s.conditions = {{"c", 1.0}};
        tag.steps.push_back(s);
    }
    auto bat = build_bat(tag, 0, with_steps(1), priors_for(tag));
    std::vector<std::string> order;
    for (BatNodeId i = 1; i < bat.size(); ++i) {
        if (bat.is_topological(i)) order.push_back(tag.node_id(bat.node(i).ref));
    }
    EXPECT_EQ(order, (std::vector<std::string>{"alpha", "zeta"}));
}

TEST(BatExport, GoldenThreeNode) {
    auto tag = complete_tag(3);
    auto j = to_json(build_bat(tag, 0, with_steps(2), priors_for(tag)), tag);
    std::ifstream in(std::string(BAM_TEST_DATA) + "/bat_complete3.json");
    ASSERT_TRUE(in) << "missing golden file";
    auto golden = nlohmann::json::parse(in);
    EXPECT_EQ(j, golden) << j.dump(2);
}

// Structural properties over complete TAGs of every small size and depth.
struct Shape {
    int n;
    int k;
    int steps;
    int conditions;
};

class CompleteTagProperties : public ::testing::TestWithParam<Shape> {};

TEST_P(CompleteTagProperties, MatchesOracleAndBound) {
    auto [n, k, steps, conditions] = GetParam();
    auto tag = complete_tag(n, k, true, conditions);
    auto params = with_steps(steps);
    for (TagNodeIndex src = 0; src < static_cast<TagNodeIndex>(n); ++src) {
        auto bat = build_bat(tag, src, params, priors_for(tag));
        EXPECT_EQ(bat.size(), oracle_node_count(tag, src, steps));
        EXPECT_TRUE(validate_polytree(bat));
        EXPECT_TRUE(structural_violations(bat).empty());
        if (k == 1 && conditions == 1) {
            EXPECT_LE(bat.size(), node_count_bound(n, k, steps) + 1);
        }
        for (BatNodeId i = 0; i < bat.size(); ++i) {
            if (!bat.is_topological(i)) continue;
            auto mem = bat.path_memory(i);
            EXPECT_EQ(mem.front(), src);
            EXPECT_LE(mem.size(), static_cast<std::size_t>(steps) + 1);
            EXPECT_EQ(std::set<TagNodeIndex>(mem.begin(), mem.end()).size(), mem.size());
        }
        for (const auto& cpt : bat.cpts()) {
            for (double r : cpt.rows()) {
                EXPECT_GE(r, 0.0);
                EXPECT_LE(r, 1.0);
                EXPECT_GE(1.0 - r, 0.0);
            }
        }
    }
}

INSTANTIATE_TEST_SUITE_P(Small, CompleteTagProperties,
                         ::testing::Values(Shape{1, 1, 1, 1}, Shape{2, 1, 1, 1}, Shape{2, 1, 2, 1}, Shape{3, 1, 1, 1},
                                           Shape{3, 1, 2, 1}, Shape{3, 1, 3, 1}, Shape{4, 1, 2, 1}, Shape{4, 1, 4, 1},
                                           Shape{5, 1, 3, 1}, Shape{5, 1, 5, 1}, Shape{6, 1, 3, 1}, Shape{6, 1, 6, 1},
                                           Shape{3, 2, 3, 1}, Shape{4, 2, 3, 1}, Shape{5, 2, 2, 1}, Shape{4, 1, 3, 3},
                                           Shape{6, 1, 4, 0}));
