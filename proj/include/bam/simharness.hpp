#pragma once

#include <cstdint>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "bam/engine.hpp"

namespace bam {

// ---- random topologies and scenarios ----

struct TopologyGenSpec {
    int nHosts = 10;
    int nSubnets = 7;
    int vulnsPerHost = 30;
    std::uint64_t seed = 1;
    // Only "defense-in-depth" is implemented: full mesh inside a subnet, every
    // host reaches every host of the next deeper subnet, the internet reaches
    // the first subnet.
    std::string interSubnetRule = "defense-in-depth";
    double sensorFalsePositive = 0.05;
    double sensorFalseNegative = 0.01;
    double priorInternet = 0.7;
    double priorOthers = 0.1;

    void validate() const;
};

/// Deterministic for a given spec. nHosts == 0 gives an empty topology;
/// otherwise an "internet" host is added in front of the generated ones.
Topology random_topology(const TopologyGenSpec& spec);

enum class Detection : std::uint8_t { Alert, Silent, NoSensor };
std::string_view to_string(Detection d);

struct ScenarioStep {
    std::string attacker;
    std::string victim;
    std::optional<std::string> sensorId;
    Detection detection = Detection::Alert;
};

struct Scenario {
    std::string name;
    std::vector<ScenarioStep> steps;
    std::set<std::string> groundTruth;  // every host on the attacker path

    /// Sensor events implementing the detection plan, scoped to each step's
    /// attacker. NoSensor clears any observation of the step's sensor.
    std::vector<SecurityEvent> events() const;
};

/// Non-revisiting walk of at most `length` TAG steps starting at the internet.
/// Shorter when the walk gets stuck. Every step is detected.
Scenario random_scenario(const Topology& topology, const Tag& tag, int length, std::uint64_t seed);

// ---- built-in use case ----

/// Internet, DMZ hosts A-D, LAN hosts E-J and firewall K. The internet reaches A,
/// A reaches G-J, and G-J reach A, C and D. Every other host has one network
/// vulnerability with probability 0.8 watched by sensor "s_<host>".
Topology use_case_topology();

/// The six detection scenarios on the chain internet -> A -> G -> D.
std::vector<Scenario> use_case_scenarios();

struct UseCaseResult {
    std::vector<std::string> hosts;
    std::vector<RiskReport> reports;  // one per scenario, same order
};

UseCaseResult run_use_case(const ModelParams& params, unsigned workers = 1);

// ---- accuracy ----

struct AccuracyRun {
    std::uint64_t seed = 0;
    int nHosts = 0;
    int scenarioSteps = 0;
    double minCompromised = 1.0;
    double maxHealthy = 0.0;
    bool separable = true;  // at 0.5
};

struct AccuracyReport {
    std::vector<AccuracyRun> runs;
    double minCompromisedProb = 1.0;
    double maxHealthyProb = 0.0;
    bool separable = true;
    double meanCompromised = 0.0;  // mean / stddev of per-run minCompromised
    double stddevCompromised = 0.0;
    double meanHealthy = 0.0;  // mean / stddev of per-run maxHealthy
    double stddevHealthy = 0.0;
};

/// One random topology and one perfect-detection scenario of `scenarioLength`
/// steps per spec. Sensor rates of the specs are forced to zero.
AccuracyReport evaluate_accuracy(std::span<const TopologyGenSpec> specs, const ModelParams& params,
                                 int scenarioLength = 7, unsigned workers = 1);

/// nScenarios runs on `spec`, seeds spec.seed, spec.seed + 1, ...
AccuracyReport evaluate_accuracy(const TopologyGenSpec& spec, int nScenarios, const ModelParams& params,
                                 int scenarioLength = 7, unsigned workers = 1);

nlohmann::json to_json(const AccuracyReport& report);

// ---- performance ----

struct Timing {
    unsigned workers = 1;
    double buildSeconds = 0.0;
    double inferSeconds = 0.0;
    double total() const { return buildSeconds + inferSeconds; }
};

struct PerfReport {
    int nHosts = 0;
    std::size_t totalVulns = 0;
    std::size_t tagSteps = 0;
    std::vector<std::size_t> batNodeCounts;  // per BAT, TAG node order
    std::size_t totalNodes = 0;
    int scenarioSteps = 0;
    Timing serial;
    std::optional<Timing> parallel;
};

/// Build + assessment of a 7-step scenario, timed. A parallel run is added
/// when `parallelWorkers` != 1 (0 = hardware concurrency).
std::vector<PerfReport> benchmark(std::span<const TopologyGenSpec> specs, const ModelParams& params,
                                  unsigned parallelWorkers = 0, int scenarioLength = 7);

nlohmann::json to_json(const PerfReport& report);
/// Plot-ready columns: nHosts, totalVulns, totalNodes, workers, buildSeconds, inferSeconds.
std::string perf_csv(std::span<const PerfReport> reports);
/// Columns: scenario, host, probability, level.
std::string use_case_csv(const UseCaseResult& result);

// ---- parameter sensitivity ----

/// Parameter names accepted by set_parameter and the sweeps:
/// falseNegative, falsePositive, nbSteps, probabilityInternet,
/// probabilityOtherHosts, probabilityUnknownAttack, probabilityNewAttackStep.
std::vector<std::string> parameter_names();
/// Throws InvalidArgument on unknown names.
void set_parameter(ModelParams& params, std::string_view name, double value);
double get_parameter(const ModelParams& params, std::string_view name);
/// Inclusive sweep range for a parameter.
std::pair<double, double> parameter_range(std::string_view name);

struct RankAgreement {
    std::size_t concordant = 0;
    std::size_t discordant = 0;
    double spearman = 1.0;  // average ranks for ties; NaN when either side is constant
    double gamma = 1.0;     // Goodman-Kruskal; 1 when no strictly ordered pair exists
};

/// Values closer than `tieTolerance` count as tied.
RankAgreement rank_agreement(std::span<const double> a, std::span<const double> b, double tieTolerance = 1e-10);

struct SweepPoint {
    double value = 0.0;
    std::vector<std::vector<double>> probabilities;  // [scenario][host]
    std::vector<RankAgreement> agreement;            // per scenario, vs. the base setting
    double maxDelta = 0.0;
};

struct ParameterSweep {
    std::string parameter;
    std::vector<std::string> hosts;  // hosts entering the rank comparison
    std::vector<SweepPoint> points;

    std::size_t discordant_pairs() const;
    double min_spearman() const;
};

struct SensitivityReport {
    ModelParams base;
    std::vector<std::string> hosts;
    std::vector<std::vector<double>> baseProbabilities;  // [scenario][host]
    std::vector<ParameterSweep> sweeps;
};

using SweepGrid = std::vector<std::pair<std::string, std::vector<double>>>;

/// Grids spanning each parameter's full sensitivity range.
SweepGrid default_sensitivity_grids();

/// Re-runs the use-case scenarios for every grid value (other parameters at
/// `base`). The internet is left out of the ranking for probabilityInternet.
/// Throws InvalidArgument for unknown parameters or values out of range.
SensitivityReport sensitivity_sweep(const SweepGrid& grids, const ModelParams& base = {}, unsigned workers = 1);

nlohmann::json to_json(const SensitivityReport& report);

} // namespace bam
