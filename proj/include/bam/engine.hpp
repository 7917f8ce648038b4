#pragma once

#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "bam/bat.hpp"
#include "bam/inference.hpp"
#include "bam/params.hpp"
#include "bam/tag.hpp"
#include "bam/topology.hpp"

namespace bam {

/// Everything derived from a topology and a parameter set.
struct Model {
    Topology topology;
    ModelParams params;
    Tag tag;
    std::vector<double> priors;  // per TAG node
    Bam bam;
    std::set<std::string> sensorIds;
};

Model build_model(Topology topology, const ModelParams& params, unsigned workers = 1);

/// Every sensor id deployed on some vulnerability of the topology.
std::set<std::string> sensor_ids(const Topology& topology);

enum class EventKind : std::uint8_t { SensorAlert, SensorSilent, SensorUnobserved, HostCompromised, HostHealthy };

std::string_view to_string(EventKind k);
std::optional<EventKind> parse_event_kind(std::string_view s);

struct SecurityEvent {
    EventKind kind = EventKind::SensorAlert;
    std::string subjectId;             // sensor id or host id
    std::optional<double> confidence;  // soft evidence when set
    double timestamp = 0.0;
    // Sensor events only: restrict to attack steps launched from this host.
    std::optional<std::string> source;

    bool operator==(const SecurityEvent&) const = default;
};

SecurityEvent parse_event(const nlohmann::json& j);
nlohmann::json to_json(const SecurityEvent& e);

struct NumberedEvent {
    std::size_t line = 0;  // 1-based
    SecurityEvent event;
};

/// Reads newline-delimited event records. Blank lines are skipped. Errors name
/// the 1-based line number.
std::vector<NumberedEvent> parse_event_lines(std::string_view text);
std::vector<SecurityEvent> parse_event_stream(std::string_view text);

/// Latest known state of one subject.
struct Observation {
    enum class State : std::uint8_t { Positive, Negative, Unobserved };
    State state = State::Positive;
    std::optional<double> confidence;

    bool operator==(const Observation&) const = default;
};

/// Evidence currently asserted on the model. Later events on the same subject
/// replace earlier ones; a source-scoped sensor observation takes precedence
/// over an unscoped one for steps from that source.
struct EvidenceState {
    std::map<std::string, Observation> hosts;
    std::map<std::pair<std::string, std::string>, Observation> sensors;  // (sensor, source or "")
    // Deployed sensors with no event are treated as silent.
    bool assumeSilentSensors = true;

    bool operator==(const EvidenceState&) const = default;
};

/// Throws UnknownId when the subject (or scoping source) is not part of the model.
EvidenceState apply_event(const Model& model, EvidenceState state, const SecurityEvent& event);

/// Per-BAT evidence lists implied by the state, in node order.
std::vector<std::vector<EvidenceItem>> resolve_evidence(const Model& model, const EvidenceState& state);

enum class RiskLevel : std::uint8_t { NotSignificant, Low, Medium, High };

std::string_view to_string(RiskLevel level);

/// <= 0.25 NotSignificant, <= 0.5 Low, <= 0.75 Medium, else High.
RiskLevel risk_level(double p);

struct AssetRisk {
    std::string host;
    double probability = 0.0;
    RiskLevel level = RiskLevel::NotSignificant;
    std::vector<std::string> bestPath;  // path memory of the maximising node
    std::string batSource;              // BAT holding that node
    BatNodeId node = 0;
};

struct RiskReport {
    std::vector<AssetRisk> perAsset;  // topology host order
    std::vector<std::string> ranking;  // descending probability, ties by host id

    const AssetRisk& at(std::string_view host) const;
    double probability(std::string_view host) const { return at(host).probability; }
};

nlohmann::json to_json(const RiskReport& report);

/// Consolidated risk: per host, the maximum Compromised probability over every
/// topological and attack-source instance of that host across all BATs.
/// BATs are evaluated on `workers` threads (0 = hardware concurrency).
/// Throws ImpossibleEvidence naming the BAT source on contradictory observations.
RiskReport assess(const Model& model, const EvidenceState& state, unsigned workers = 1);

/// Marginals of every BAT under the state, same order as model.bam.bats.
std::vector<Marginals> infer_all(const Model& model, const EvidenceState& state, unsigned workers = 1);

RiskReport consolidate(const Model& model, const std::vector<Marginals>& marginals);

} // namespace bam
