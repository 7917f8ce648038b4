#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "bam/params.hpp"
#include "bam/topology.hpp"

namespace bam {

inline constexpr int kTagFormatVersion = 1;

using TagNodeIndex = std::uint32_t;

enum class AttackType : std::uint8_t { RemoteExploit, CredentialTheft };

std::string_view to_string(AttackType t);

struct Condition {
    std::string description;
    double probability = 1.0;

    bool operator==(const Condition&) const = default;
};

// Boolean OR of the member sensors of a grouped attack step.
struct GroupedSensor {
    std::vector<std::string> memberSensorIds;
    double falsePositive = 0.0;
    double falseNegative = 0.0;

    bool operator==(const GroupedSensor&) const = default;
};

// One exploitable vulnerability between two nodes, before grouping.
struct RawStep {
    TagNodeIndex source = 0;
    TagNodeIndex target = 0;
    AttackType type = AttackType::RemoteExploit;
    std::string vulnId;
    double probability = 1.0;
    std::optional<std::string> sensorId;
    double sensorFalsePositive = 0.0;
    double sensorFalseNegative = 0.0;
};

struct AttackStep {
    TagNodeIndex source = 0;
    TagNodeIndex target = 0;
    AttackType type = AttackType::RemoteExploit;
    // Generated steps carry exactly one (grouped) condition; hand-built graphs may have any number.
    std::vector<Condition> conditions;
    std::optional<GroupedSensor> sensor;
    std::vector<std::string> memberVulnIds;

    bool operator==(const AttackStep&) const = default;
};

struct Tag {
    std::vector<std::string> nodes;
    std::vector<AttackStep> steps;

    std::optional<TagNodeIndex> find_node(std::string_view id) const;
    const std::string& node_id(TagNodeIndex i) const { return nodes.at(i); }

    /// Indices into `steps` leaving each node, ordered by (target id, type).
    std::vector<std::vector<std::uint32_t>> out_steps() const;

    /// Maximum number of distinct step types between any ordered node pair.
    std::size_t max_step_types() const;

    bool operator==(const Tag&) const = default;
};

/// One node per host; every reachability pair yields a RemoteExploit step per
/// network/adjacent vulnerability of the target, then steps are grouped.
/// Sensors without explicit rates take params.falsePositive / falseNegative.
Tag generate_tag(const Topology& topology, const ModelParams& params = {});

/// Merges steps sharing (source, target, type): condition is the OR of member
/// conditions under independence; the grouped sensor fires when any member does.
/// Accepts grouped steps too, which makes the operation idempotent.
std::vector<AttackStep> group_attack_steps(std::span<const RawStep> raw);
std::vector<AttackStep> group_attack_steps(std::span<const AttackStep> steps);

nlohmann::json to_json(const Tag& tag);

} // namespace bam
