#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "bam/params.hpp"

namespace bam {

inline constexpr std::string_view kInternetHost = "internet";
inline constexpr int kTopologyFormatVersion = 1;

enum class AttackVector : std::uint8_t { Network, Adjacent, Local, Physical };
enum class AttackComplexity : std::uint8_t { Low, High };
enum class PrivilegesRequired : std::uint8_t { None, Low, High };
enum class UserInteraction : std::uint8_t { None, Required };

struct SensorSpec {
    std::string id;
    // Unset rates fall back to ModelParams::falsePositive / falseNegative.
    std::optional<double> falsePositive;
    std::optional<double> falseNegative;

    bool operator==(const SensorSpec&) const = default;
};

struct Vulnerability {
    std::string id;
    AttackVector attackVector = AttackVector::Network;
    AttackComplexity attackComplexity = AttackComplexity::Low;
    PrivilegesRequired privilegesRequired = PrivilegesRequired::None;
    UserInteraction userInteraction = UserInteraction::None;
    std::optional<double> explicitProbability;
    std::optional<SensorSpec> sensor;

    bool operator==(const Vulnerability&) const = default;
};

struct Service {
    int port = 0;
    std::string name;

    bool operator==(const Service&) const = default;
};

struct HostSpec {
    std::string id;
    std::vector<Vulnerability> vulnerabilities;
    std::vector<Service> services;
    int multiplicity = 1;  // cluster template size, informational only

    bool operator==(const HostSpec&) const = default;
};

struct Subnet {
    std::string id;
    std::vector<std::string> hosts;

    bool operator==(const Subnet&) const = default;
};

struct Topology {
    std::vector<HostSpec> hosts;
    std::vector<Subnet> subnets;
    std::vector<std::pair<std::string, std::string>> reachability;  // (attacker, target), no duplicates
    std::map<std::string, double> sourcePriors;                     // explicit priors only

    const HostSpec* find_host(std::string_view id) const;

    /// Checks every invariant; throws SchemaError on the first violation.
    void validate() const;

    bool operator==(const Topology&) const = default;
};

Topology parse_topology(const nlohmann::json& document);
Topology parse_topology(std::string_view text);
Topology load_topology(const std::string& path);

nlohmann::json to_json(const Topology& topology);

/// Probability of successful exploitation: the explicit override when present,
/// otherwise the product of the CVSS v3 AC/PR/UI coefficients normalised so
/// that AC:L/PR:N/UI:N maps to exactly 1.
double cvss_exploit_probability(const Vulnerability& v);

/// Prior of `host` being an attack source: the explicit entry if any,
/// else probabilityInternet for the internet host and probabilityOtherHosts otherwise.
double source_prior(const Topology& topology, std::string_view host, const ModelParams& params);

std::string_view to_string(AttackVector v);
std::string_view to_string(AttackComplexity v);
std::string_view to_string(PrivilegesRequired v);
std::string_view to_string(UserInteraction v);

} // namespace bam
