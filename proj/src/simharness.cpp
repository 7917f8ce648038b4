#include "bam/simharness.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <random>
#include <sstream>

#include "bam/errors.hpp"
#include "bam/parallel.hpp"

namespace bam {

namespace {

std::string padded(int value, int width) {
    std::string s = std::to_string(value);
    if (static_cast<int>(s.size()) < width) s.insert(0, static_cast<std::size_t>(width) - s.size(), '0');
    return s;
}

int digits(int n) {
    int d = 1;
    while (n >= 10) {
        n /= 10;
        ++d;
    }
    return d;
}

EvidenceState apply_all(const Model& model, const std::vector<SecurityEvent>& events) {
    EvidenceState state;
    for (const auto& e : events) state = apply_event(model, std::move(state), e);
    return state;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

void mean_stddev(const std::vector<double>& xs, double& mean, double& stddev) {
    mean = 0.0;
    stddev = 0.0;
    if (xs.empty()) return;
    for (double x : xs) mean += x;
    mean /= static_cast<double>(xs.size());
    for (double x : xs) stddev += (x - mean) * (x - mean);
    stddev = std::sqrt(stddev / static_cast<double>(xs.size()));
}

} // namespace

void TopologyGenSpec::validate() const {
    if (nHosts < 0) throw InvalidArgument("nHosts must be non-negative");
    if (nSubnets < 1) throw InvalidArgument("nSubnets must be positive");
    if (vulnsPerHost < 0) throw InvalidArgument("vulnsPerHost must be non-negative");
    if (interSubnetRule != "defense-in-depth") throw InvalidArgument("unsupported interSubnetRule: " + interSubnetRule);
    for (double p : {sensorFalsePositive, sensorFalseNegative, priorInternet, priorOthers}) {
        if (!(p >= 0.0 && p <= 1.0)) throw InvalidArgument("generator probabilities must lie in [0,1]");
    }
}

Topology random_topology(const TopologyGenSpec& spec) {
    spec.validate();
    Topology t;
    if (spec.nHosts == 0) return t;

    std::mt19937_64 rng(spec.seed);
    const int width = digits(spec.nHosts - 1);
    const int vulnWidth = digits(std::max(0, spec.vulnsPerHost - 1));
    const int subnets = std::min(spec.nSubnets, spec.nHosts);

    t.hosts.push_back(HostSpec{std::string(kInternetHost), {}, {}, 1});
    t.sourcePriors[std::string(kInternetHost)] = spec.priorInternet;

    std::vector<std::vector<std::string>> members(static_cast<std::size_t>(subnets));
    for (int i = 0; i < spec.nHosts; ++i) {
        HostSpec h;
        h.id = "h" + padded(i, width);
        for (int k = 0; k < spec.vulnsPerHost; ++k) {
            Vulnerability v;
            v.id = h.id + "-v" + padded(k, vulnWidth);
            v.attackVector = static_cast<AttackVector>(rng() % 4);
            v.attackComplexity = static_cast<AttackComplexity>(rng() % 2);
            v.privilegesRequired = static_cast<PrivilegesRequired>(rng() % 3);
            v.userInteraction = static_cast<UserInteraction>(rng() % 2);
            v.sensor = SensorSpec{v.id + "-ids", spec.sensorFalsePositive, spec.sensorFalseNegative};
            h.vulnerabilities.push_back(std::move(v));
        }
        t.sourcePriors[h.id] = spec.priorOthers;
        // Contiguous, evenly sized blocks.
        std::size_t block = static_cast<std::size_t>(static_cast<long long>(i) * subnets / spec.nHosts);
        members[block].push_back(h.id);
        t.hosts.push_back(std::move(h));
    }

    for (int s = 0; s < subnets; ++s) t.subnets.push_back(Subnet{"net" + std::to_string(s), members[s]});

    for (const auto& h : members.front()) t.reachability.emplace_back(std::string(kInternetHost), h);
    for (int s = 0; s < subnets; ++s) {
        for (const auto& a : members[s]) {
            for (const auto& b : members[s]) {
                if (a != b) t.reachability.emplace_back(a, b);
            }
            if (s + 1 < subnets) {
                for (const auto& b : members[s + 1]) t.reachability.emplace_back(a, b);
            }
        }
    }
    t.validate();
    return t;
}

std::string_view to_string(Detection d) {
    switch (d) {
    case Detection::Alert:
        return "Alert";
    case Detection::Silent:
        return "Silent";
    case Detection::NoSensor:
        return "NoSensor";
    }
    return "?";
}

std::vector<SecurityEvent> Scenario::events() const {
    std::vector<SecurityEvent> out;
    double ts = 0.0;
    for (const auto& step : steps) {
        if (!step.sensorId) continue;
        SecurityEvent e;
        e.subjectId = *step.sensorId;
        e.source = step.attacker;
        e.timestamp = ts;
        ts += 1.0;
        switch (step.detection) {
        case Detection::Alert:
            e.kind = EventKind::SensorAlert;
            break;
        case Detection::Silent:
            e.kind = EventKind::SensorSilent;
            break;
        case Detection::NoSensor:
            e.kind = EventKind::SensorUnobserved;
            break;
        }
        out.push_back(std::move(e));
    }
    return out;
}

Scenario random_scenario(const Topology& topology, const Tag& tag, int length, std::uint64_t seed) {
    Scenario sc;
    sc.name = "random-" + std::to_string(seed);
    auto start = tag.find_node(kInternetHost);
    if (!start || topology.hosts.empty()) return sc;

    std::mt19937_64 rng(seed ^ 0x9e3779b97f4a7c15ULL);
    auto out = tag.out_steps();
    std::vector<bool> visited(tag.nodes.size(), false);
    TagNodeIndex at = *start;
    visited[at] = true;
    sc.groundTruth.insert(tag.node_id(at));

    for (int i = 0; i < length; ++i) {
        std::vector<std::uint32_t> options;
        for (auto s : out[at]) {
            if (!visited[tag.steps[s].target]) options.push_back(s);
        }
        if (options.empty()) break;
        const AttackStep& step = tag.steps[options[rng() % options.size()]];
        ScenarioStep ss;
        ss.attacker = tag.node_id(step.source);
        ss.victim = tag.node_id(step.target);
        if (step.sensor && !step.sensor->memberSensorIds.empty()) {
            ss.sensorId = step.sensor->memberSensorIds.front();
            ss.detection = Detection::Alert;
        } else {
            ss.detection = Detection::NoSensor;
        }
        sc.steps.push_back(std::move(ss));
        at = step.target;
        visited[at] = true;
        sc.groundTruth.insert(tag.node_id(at));
    }
    return sc;
}

Topology use_case_topology() {
    Topology t;
    t.hosts.push_back(HostSpec{std::string(kInternetHost), {}, {}, 1});
    const std::vector<std::string> dmz{"A", "B", "C", "D"};
    const std::vector<std::string> lan{"E", "F", "G", "H", "I", "J"};
    std::vector<std::string> all = dmz;
    all.insert(all.end(), lan.begin(), lan.end());
    all.push_back("K");
    for (const auto& id : all) {
        Vulnerability v;
        v.id = "vuln-" + id;
        v.explicitProbability = 0.8;
        v.sensor = SensorSpec{"s_" + id, std::nullopt, std::nullopt};
        t.hosts.push_back(HostSpec{id, {v}, {}, 1});
    }
    t.subnets = {Subnet{"dmz", dmz}, Subnet{"lan", lan}, Subnet{"firewall", {"K"}}};
    t.reachability.emplace_back(std::string(kInternetHost), "A");
    for (const auto& h : {"G", "H", "I", "J"}) t.reachability.emplace_back("A", h);
    for (const auto& h : {"G", "H", "I", "J"}) {
        for (const auto& target : {"A", "C", "D"}) t.reachability.emplace_back(h, target);
    }
    t.validate();
    return t;
}

std::vector<Scenario> use_case_scenarios() {
    using D = Detection;
    struct Row {
        D ia, ag, gd;
    };
    const Row rows[] = {
        {D::Silent, D::Silent, D::Silent}, {D::Alert, D::Silent, D::Silent},   {D::Alert, D::Alert, D::Silent},
        {D::Alert, D::Alert, D::Alert},    {D::Alert, D::NoSensor, D::Alert}, {D::Alert, D::Silent, D::Alert},
    };
    std::vector<Scenario> out;
    int n = 1;
    for (const auto& r : rows) {
        Scenario sc;
        sc.name = std::to_string(n++);
        sc.steps = {
            {std::string(kInternetHost), "A", "s_A", r.ia},
            {"A", "G", "s_G", r.ag},
            {"G", "D", "s_D", r.gd},
        };
        sc.groundTruth = {std::string(kInternetHost), "A", "G", "D"};
        out.push_back(std::move(sc));
    }
    return out;
}

UseCaseResult run_use_case(const ModelParams& params, unsigned workers) {
    Model model = build_model(use_case_topology(), params, workers);
    UseCaseResult result;
    for (const auto& h : model.topology.hosts) result.hosts.push_back(h.id);
    for (const auto& sc : use_case_scenarios()) {
        result.reports.push_back(assess(model, apply_all(model, sc.events()), workers));
    }
    return result;
}

AccuracyReport evaluate_accuracy(std::span<const TopologyGenSpec> specs, const ModelParams& params, int scenarioLength,
                                 unsigned workers) {
    AccuracyReport report;
    std::vector<double> mins;
    std::vector<double> maxes;
    for (TopologyGenSpec spec : specs) {
        spec.sensorFalsePositive = 0.0;
        spec.sensorFalseNegative = 0.0;
        Model model = build_model(random_topology(spec), params, workers);
        Scenario sc = random_scenario(model.topology, model.tag, scenarioLength, spec.seed);
        RiskReport risk = assess(model, apply_all(model, sc.events()), workers);

        AccuracyRun run;
        run.seed = spec.seed;
        run.nHosts = spec.nHosts;
        run.scenarioSteps = static_cast<int>(sc.steps.size());
        for (const auto& a : risk.perAsset) {
            if (sc.groundTruth.count(a.host)) run.minCompromised = std::min(run.minCompromised, a.probability);
            else run.maxHealthy = std::max(run.maxHealthy, a.probability);
        }
        run.separable = run.minCompromised > 0.5 && run.maxHealthy <= 0.5;
        report.minCompromisedProb = std::min(report.minCompromisedProb, run.minCompromised);
        report.maxHealthyProb = std::max(report.maxHealthyProb, run.maxHealthy);
        report.separable = report.separable && run.separable;
        mins.push_back(run.minCompromised);
        maxes.push_back(run.maxHealthy);
        report.runs.push_back(run);
    }
    mean_stddev(mins, report.meanCompromised, report.stddevCompromised);
    mean_stddev(maxes, report.meanHealthy, report.stddevHealthy);
    return report;
}

AccuracyReport evaluate_accuracy(const TopologyGenSpec& spec, int nScenarios, const ModelParams& params,
                                 int scenarioLength, unsigned workers) {
    std::vector<TopologyGenSpec> specs;
    for (int i = 0; i < nScenarios; ++i) {
        TopologyGenSpec s = spec;
        s.seed = spec.seed + static_cast<std::uint64_t>(i);
        specs.push_back(s);
    }
    return evaluate_accuracy(specs, params, scenarioLength, workers);
}

nlohmann::json to_json(const AccuracyReport& report) {
    nlohmann::json runs = nlohmann::json::array();
    for (const auto& r : report.runs) {
        runs.push_back({{"seed", r.seed},
                        {"nHosts", r.nHosts},
                        {"scenarioSteps", r.scenarioSteps},
                        {"minCompromised", r.minCompromised},
                        {"maxHealthy", r.maxHealthy},
                        {"separable", r.separable}});
    }
    return {{"runs", runs},
            {"minCompromisedProb", report.minCompromisedProb},
            {"maxHealthyProb", report.maxHealthyProb},
            {"separable", report.separable},
            {"meanCompromised", report.meanCompromised},
            {"stddevCompromised", report.stddevCompromised},
            {"meanHealthy", report.meanHealthy},
            {"stddevHealthy", report.stddevHealthy}};
}

namespace {

Timing timed_run(const Topology& topology, const ModelParams& params, const std::vector<SecurityEvent>& events,
                 unsigned workers, PerfReport* counts) {
    Timing t;
    t.workers = resolve_workers(workers);
    auto t0 = std::chrono::steady_clock::now();
    Model model = build_model(topology, params, workers);
    t.buildSeconds = seconds_since(t0);

    auto t1 = std::chrono::steady_clock::now();
    RiskReport report = assess(model, apply_all(model, events), workers);
    t.inferSeconds = seconds_since(t1);

    if (counts) {
        counts->tagSteps = model.tag.steps.size();
        counts->batNodeCounts.clear();
        counts->totalNodes = 0;
        for (const auto& bat : model.bam.bats) {
            counts->batNodeCounts.push_back(bat.size());
            counts->totalNodes += bat.size();
        }
    }
    return t;
}

} // namespace

std::vector<PerfReport> benchmark(std::span<const TopologyGenSpec> specs, const ModelParams& params,
                                  unsigned parallelWorkers, int scenarioLength) {
    std::vector<PerfReport> out;
    for (const auto& spec : specs) {
        Topology topology = random_topology(spec);
        Scenario sc = random_scenario(topology, generate_tag(topology, params), scenarioLength, spec.seed);
        auto events = sc.events();

        PerfReport r;
        r.nHosts = spec.nHosts;
        for (const auto& h : topology.hosts) r.totalVulns += h.vulnerabilities.size();
        r.scenarioSteps = static_cast<int>(sc.steps.size());
        r.serial = timed_run(topology, params, events, 1, &r);
        if (resolve_workers(parallelWorkers) != 1) r.parallel = timed_run(topology, params, events, parallelWorkers, nullptr);
        out.push_back(std::move(r));
    }
    return out;
}

nlohmann::json to_json(const PerfReport& r) {
    auto timing = [](const Timing& t) {
        return nlohmann::json{{"workers", t.workers}, {"buildSeconds", t.buildSeconds}, {"inferSeconds", t.inferSeconds}};
    };
    nlohmann::json j{{"nHosts", r.nHosts},
                     {"totalVulns", r.totalVulns},
                     {"tagSteps", r.tagSteps},
                     {"batNodeCounts", r.batNodeCounts},
                     {"totalNodes", r.totalNodes},
                     {"scenarioSteps", r.scenarioSteps},
                     {"serial", timing(r.serial)}};
    if (r.parallel) j["parallel"] = timing(*r.parallel);
    return j;
}

std::string perf_csv(std::span<const PerfReport> reports) {
    std::ostringstream os;
    os << "nHosts,totalVulns,totalNodes,workers,buildSeconds,inferSeconds\n";
    auto row = [&](const PerfReport& r, const Timing& t) {
        os << r.nHosts << ',' << r.totalVulns << ',' << r.totalNodes << ',' << t.workers << ',' << t.buildSeconds << ','
           << t.inferSeconds << '\n';
    };
    for (const auto& r : reports) {
        row(r, r.serial);
        if (r.parallel) row(r, *r.parallel);
    }
    return os.str();
}

std::string use_case_csv(const UseCaseResult& result) {
    std::ostringstream os;
    os.precision(12);
    os << "scenario,host,probability,level\n";
    for (std::size_t s = 0; s < result.reports.size(); ++s) {
        for (const auto& a : result.reports[s].perAsset) {
            os << (s + 1) << ',' << a.host << ',' << a.probability << ',' << to_string(a.level) << '\n';
        }
    }
    return os.str();
}

// ---- sensitivity ----

namespace {

struct ParamInfo {
    const char* name;
    double ModelParams::*field;  // null for nbSteps
    double lo;
    double hi;
};

const ParamInfo kParams[] = {
    {"falseNegative", &ModelParams::falseNegative, 0.0, 0.3},
    {"falsePositive", &ModelParams::falsePositive, 0.0, 0.3},
    {"nbSteps", nullptr, 1.0, 4.0},
    {"probabilityInternet", &ModelParams::probabilityInternet, 0.0, 1.0},
    {"probabilityOtherHosts", &ModelParams::probabilityOtherHosts, 0.0, 1.0},
    {"probabilityUnknownAttack", &ModelParams::probabilityUnknownAttack, 0.0, 0.15},
    {"probabilityNewAttackStep", &ModelParams::probabilityNewAttackStep, 0.0, 1.0},
};

const ParamInfo& param_info(std::string_view name) {
    for (const auto& p : kParams) {
        if (name == p.name) return p;
    }
    throw InvalidArgument("unknown parameter: " + std::string(name));
}

std::vector<double> average_ranks(std::span<const double> v, double tol) {
    std::vector<std::size_t> idx(v.size());
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
    std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
    std::vector<double> ranks(v.size());
    std::size_t i = 0;
    while (i < idx.size()) {
        std::size_t j = i + 1;
        while (j < idx.size() && v[idx[j]] - v[idx[j - 1]] <= tol) ++j;
        double r = 0.5 * static_cast<double>(i + j - 1) + 1.0;
        for (std::size_t k = i; k < j; ++k) ranks[idx[k]] = r;
        i = j;
    }
    return ranks;
}

} // namespace

std::vector<std::string> parameter_names() {
    std::vector<std::string> out;
    for (const auto& p : kParams) out.emplace_back(p.name);
    return out;
}

void set_parameter(ModelParams& params, std::string_view name, double value) {
    const auto& info = param_info(name);
    if (info.field) {
        params.*info.field = value;
    } else {
        if (value != std::floor(value)) throw InvalidArgument("nbSteps must be an integer");
        params.nbSteps = static_cast<int>(value);
    }
}

double get_parameter(const ModelParams& params, std::string_view name) {
    const auto& info = param_info(name);
    return info.field ? params.*info.field : static_cast<double>(params.nbSteps);
}

std::pair<double, double> parameter_range(std::string_view name) {
    const auto& info = param_info(name);
    return {info.lo, info.hi};
}

RankAgreement rank_agreement(std::span<const double> a, std::span<const double> b, double tol) {
    if (a.size() != b.size()) throw InvalidArgument("rank_agreement needs equally long inputs");
    RankAgreement r;
    for (std::size_t i = 0; i < a.size(); ++i) {
        for (std::size_t j = i + 1; j < a.size(); ++j) {
            double da = a[i] - a[j];
            double db = b[i] - b[j];
            if (std::abs(da) <= tol || std::abs(db) <= tol) continue;
            if ((da > 0) == (db > 0)) ++r.concordant;
            else ++r.discordant;
        }
    }
    if (r.concordant + r.discordant > 0) {
        r.gamma = (static_cast<double>(r.concordant) - static_cast<double>(r.discordant)) /
                  static_cast<double>(r.concordant + r.discordant);
    }

    auto ra = average_ranks(a, tol);
    auto rb = average_ranks(b, tol);
    double n = static_cast<double>(a.size());
    double ma = 0.0, mb = 0.0;
    for (std::size_t i = 0; i < ra.size(); ++i) {
        ma += ra[i];
        mb += rb[i];
    }
    ma /= n;
    mb /= n;
    double cov = 0.0, va = 0.0, vb = 0.0;
    for (std::size_t i = 0; i < ra.size(); ++i) {
        cov += (ra[i] - ma) * (rb[i] - mb);
        va += (ra[i] - ma) * (ra[i] - ma);
        vb += (rb[i] - mb) * (rb[i] - mb);
    }
    r.spearman = (va > 0.0 && vb > 0.0) ? cov / std::sqrt(va * vb) : std::numeric_limits<double>::quiet_NaN();
    return r;
}

std::size_t ParameterSweep::discordant_pairs() const {
    std::size_t n = 0;
    for (const auto& p : points) {
        for (const auto& a : p.agreement) n += a.discordant;
    }
    return n;
}

double ParameterSweep::min_spearman() const {
    // NaN as soon as one comparison is undefined (a constant side).
    double m = 1.0;
    for (const auto& p : points) {
        for (const auto& a : p.agreement) {
            if (std::isnan(a.spearman)) return a.spearman;
            m = std::min(m, a.spearman);
        }
    }
    return m;
}

SweepGrid default_sensitivity_grids() {
    return {
        {"falseNegative", {0.0, 0.01, 0.05, 0.1, 0.15, 0.2, 0.25, 0.3}},
        {"falsePositive", {0.0, 0.01, 0.025, 0.05, 0.1, 0.15, 0.2, 0.25, 0.3}},
        {"nbSteps", {1, 2, 3, 4}},
        {"probabilityInternet", {0.0, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0}},
        {"probabilityOtherHosts", {0.0, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0}},
        {"probabilityUnknownAttack", {0.0, 0.001, 0.025, 0.05, 0.075, 0.1, 0.125, 0.15}},
        {"probabilityNewAttackStep", {0.0, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0}},
    };
}

SensitivityReport sensitivity_sweep(const SweepGrid& grids, const ModelParams& base, unsigned workers) {
    for (const auto& [name, values] : grids) {
        auto [lo, hi] = parameter_range(name);
        for (double v : values) {
            if (!(v >= lo && v <= hi)) {
                throw InvalidArgument(name + " value " + std::to_string(v) + " outside [" + std::to_string(lo) + ", " +
                                      std::to_string(hi) + "]");
            }
        }
    }

    auto matrix = [](const UseCaseResult& r) {
        std::vector<std::vector<double>> m;
        for (const auto& rep : r.reports) {
            std::vector<double> row;
            for (const auto& a : rep.perAsset) row.push_back(a.probability);
            m.push_back(std::move(row));
        }
        return m;
    };

    SensitivityReport report;
    report.base = base;
    UseCaseResult baseRun = run_use_case(base, workers);
    report.hosts = baseRun.hosts;
    report.baseProbabilities = matrix(baseRun);

    for (const auto& [name, values] : grids) {
        ParameterSweep sweep;
        sweep.parameter = name;
        std::vector<std::size_t> keep;
        for (std::size_t h = 0; h < report.hosts.size(); ++h) {
            if (name == "probabilityInternet" && report.hosts[h] == kInternetHost) continue;
            keep.push_back(h);
            sweep.hosts.push_back(report.hosts[h]);
        }
        for (double v : values) {
            ModelParams p = base;
            set_parameter(p, name, v);
            SweepPoint point;
            point.value = v;
            point.probabilities = matrix(run_use_case(p, workers));
            for (std::size_t s = 0; s < point.probabilities.size(); ++s) {
                std::vector<double> a, b;
                for (auto h : keep) {
                    a.push_back(report.baseProbabilities[s][h]);
                    b.push_back(point.probabilities[s][h]);
                    point.maxDelta = std::max(point.maxDelta, std::abs(a.back() - b.back()));
                }
                point.agreement.push_back(rank_agreement(a, b));
            }
            sweep.points.push_back(std::move(point));
        }
        report.sweeps.push_back(std::move(sweep));
    }
    return report;
}

nlohmann::json to_json(const SensitivityReport& report) {
    auto nan_safe = [](double x) { return std::isnan(x) ? nlohmann::json(nullptr) : nlohmann::json(x); };
    nlohmann::json sweeps = nlohmann::json::array();
    for (const auto& s : report.sweeps) {
        nlohmann::json points = nlohmann::json::array();
        for (const auto& p : s.points) {
            nlohmann::json agree = nlohmann::json::array();
            for (const auto& a : p.agreement) {
                agree.push_back({{"spearman", nan_safe(a.spearman)},
                                 {"gamma", a.gamma},
                                 {"concordant", a.concordant},
                                 {"discordant", a.discordant}});
            }
            points.push_back(
                {{"value", p.value}, {"maxDelta", p.maxDelta}, {"probabilities", p.probabilities}, {"agreement", agree}});
        }
        sweeps.push_back({{"parameter", s.parameter},
                          {"hosts", s.hosts},
                          {"discordantPairs", s.discordant_pairs()},
                          {"minSpearman", nan_safe(s.min_spearman())},
                          {"points", points}});
    }
    return {{"base", to_json(report.base)},
            {"hosts", report.hosts},
            {"baseProbabilities", report.baseProbabilities},
            {"sweeps", sweeps}};
}

} // namespace bam
