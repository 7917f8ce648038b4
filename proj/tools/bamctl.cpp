#include <CLI11.hpp>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include <algorithm>
#include <chrono>
#include <csignal>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <thread>

#include "bam/errors.hpp"
#include "bam/service.hpp"
#include "bam/simharness.hpp"

using namespace bam;
using nlohmann::json;

namespace {

struct ParamFlags {
    std::optional<int> nbSteps;
    std::optional<double> pua, pnas, fp, fn, priorInternet, priorHosts;

    void add_to(CLI::App& app) {
        app.add_option("--nb-steps", nbSteps, "Max successive attack steps per BAT");
        app.add_option("--pua", pua, "probabilityUnknownAttack");
        app.add_option("--pnas", pnas, "probabilityNewAttackStep");
        app.add_option("--fp", fp, "Default sensor false-positive rate");
        app.add_option("--fn", fn, "Default sensor false-negative rate");
        app.add_option("--prior-internet", priorInternet, "Prior of the internet attack source");
        app.add_option("--prior-hosts", priorHosts, "Prior of every other attack source");
    }

    ModelParams resolve() const {
        ModelParams p;
        if (nbSteps) p.nbSteps = *nbSteps;
        if (pua) p.probabilityUnknownAttack = *pua;
        if (pnas) p.probabilityNewAttackStep = *pnas;
        if (fp) p.falsePositive = *fp;
        if (fn) p.falseNegative = *fn;
        if (priorInternet) p.probabilityInternet = *priorInternet;
        if (priorHosts) p.probabilityOtherHosts = *priorHosts;
        p.validate();
        return p;
    }
};

std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot open " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_output(const std::string& path, const std::string& text) {
    if (path.empty() || path == "-") {
        std::cout << text;
        if (!text.empty() && text.back() != '\n') std::cout << '\n';
        std::cout.flush();
        return;
    }
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot write " + path);
    out << text;
    if (!text.empty() && text.back() != '\n') out << '\n';
}

void configure_logging() {
    auto logger = spdlog::stderr_color_mt("bamctl");
    spdlog::set_default_logger(logger);
    spdlog::set_pattern("[%H:%M:%S.%e] [%^%l%$] %v");
    spdlog::set_level(spdlog::level::warn);
    if (const char* lvl = std::getenv("BAM_LOG")) spdlog::set_level(spdlog::level::from_str(lvl));
}

// "10..70" (step 10), "10..70:5" or "1,10,20".
std::vector<int> parse_host_list(const std::string& spec) {
    std::vector<int> out;
    auto dots = spec.find("..");
    try {
        if (dots != std::string::npos) {
            int lo = std::stoi(spec.substr(0, dots));
            std::string rest = spec.substr(dots + 2);
            int step = 10;
            if (auto colon = rest.find(':'); colon != std::string::npos) {
                step = std::stoi(rest.substr(colon + 1));
                rest = rest.substr(0, colon);
            }
            int hi = std::stoi(rest);
            if (step <= 0 || lo < 0 || hi < lo) throw InvalidArgument("bad host range " + spec);
            for (int n = lo; n <= hi; n += step) out.push_back(n);
        } else {
            std::stringstream ss(spec);
            std::string item;
            while (std::getline(ss, item, ',')) {
                int n = std::stoi(item);
                if (n < 0) throw InvalidArgument("host counts must be non-negative");
                out.push_back(n);
            }
        }
    } catch (const std::logic_error&) {
        throw InvalidArgument("bad host list '" + spec + "'");
    }
    if (out.empty()) throw InvalidArgument("empty host list");
    return out;
}

// Events in timestamp order, ties in file order. Unknown ids name their line.
EvidenceState replay(const Model& model, const std::string& text, const std::string& path, bool autoSilent) {
    auto events = parse_event_lines(text);
    std::stable_sort(events.begin(), events.end(),
                     [](const NumberedEvent& a, const NumberedEvent& b) { return a.event.timestamp < b.event.timestamp; });
    EvidenceState state;
    state.assumeSilentSensors = autoSilent;
    for (const auto& e : events) {
        try {
            state = apply_event(model, std::move(state), e.event);
        } catch (const UnknownId& err) {
            throw UnknownId(err.id(), path + ": line " + std::to_string(e.line) + ": unknown id");
        }
    }
    return state;
}

std::string band_table(const UseCaseResult& r) {
    std::ostringstream os;
    os << "host";
    for (std::size_t s = 0; s < r.reports.size(); ++s) os << "\tS" << (s + 1);
    os << '\n';
    for (std::size_t h = 0; h < r.hosts.size(); ++h) {
        os << r.hosts[h];
        for (const auto& rep : r.reports) {
            char buf[64];
            std::snprintf(buf, sizeof buf, "\t%.4f %s", rep.perAsset[h].probability,
                          std::string(to_string(rep.perAsset[h].level)).c_str());
            os << buf;
        }
        os << '\n';
    }
    return os.str();
}

HttpServer* g_server = nullptr;

void on_signal(int) {
    if (g_server) g_server->stop();
}

} // namespace

int main(int argc, char** argv) {
    configure_logging();
    CLI::App app{"Bayesian attack model: build, assess and experiment"};
    app.require_subcommand(1);

    unsigned workers = 1;
    std::uint64_t seed = 1;
    app.add_option("--workers", workers, "Worker threads for BAT fan-out (0 = hardware)")->capture_default_str();
    app.add_option("--seed", seed, "Seed for every random generator")->capture_default_str();

    // build
    auto* build = app.add_subcommand("build", "Generate the attack graph and the BAM, write their summary");
    std::string topologyPath, outPath;
    bool withBats = false;
    ParamFlags buildParams;
    build->add_option("--topology", topologyPath, "Topology document")->required();
    build->add_option("--out", outPath, "Output file (default stdout)");
    build->add_flag("--bats", withBats, "Include the full export of every BAT");
    buildParams.add_to(*build);

    // assess
    auto* assessCmd = app.add_subcommand("assess", "Apply security events and report per-asset risk");
    std::string eventsPath, format = "json";
    bool watch = false, observedOnly = false;
    double watchInterval = 0.5, watchTimeout = 0.0;
    ParamFlags assessParams;
    assessCmd->add_option("--topology", topologyPath, "Topology document")->required();
    assessCmd->add_option("--events", eventsPath, "Newline-delimited events (omit for the baseline)");
    assessCmd->add_option("--out", outPath, "Output file (default stdout)");
    assessCmd->add_option("--format", format, "json or table")->check(CLI::IsMember({"json", "table"}));
    assessCmd->add_flag("--watch", watch, "Re-emit the report whenever the events file changes");
    assessCmd->add_option("--watch-interval", watchInterval, "Polling period in seconds");
    assessCmd->add_option("--watch-timeout", watchTimeout, "Stop watching after this many seconds (0 = never)");
    assessCmd->add_flag("--observed-only", observedOnly, "Do not treat sensors without events as silent");
    assessParams.add_to(*assessCmd);

    // experiment
    auto* experiment = app.add_subcommand("experiment", "Run the use case or a simulation experiment");
    experiment->require_subcommand(1);
    ParamFlags expParams;
    expParams.add_to(*experiment);
    std::string csvPath;

    auto* usecase = experiment->add_subcommand("usecase", "Six detection scenarios on the built-in use case");
    std::string topologyOut;
    usecase->add_option("--out", outPath, "JSON reports");
    usecase->add_option("--csv", csvPath, "Plot-ready CSV");
    usecase->add_option("--topology-out", topologyOut, "Also write the use-case topology document");

    auto* accuracy = experiment->add_subcommand("accuracy", "Perfect-detection runs on random topologies");
    int runs = 10, hostsMin = 20, hostsMax = 40, subnets = 7, vulns = 30, steps = 7;
    accuracy->add_option("--runs", runs)->capture_default_str();
    accuracy->add_option("--hosts-min", hostsMin)->capture_default_str();
    accuracy->add_option("--hosts-max", hostsMax)->capture_default_str();
    accuracy->add_option("--subnets", subnets)->capture_default_str();
    accuracy->add_option("--vulns", vulns)->capture_default_str();
    accuracy->add_option("--steps", steps, "Scenario length")->capture_default_str();
    accuracy->add_option("--out", outPath, "JSON report");

    auto* bench = experiment->add_subcommand("bench", "Build and assessment timings");
    std::string hostList = "10..70";
    unsigned parallelWorkers = 0;
    bench->add_option("--hosts", hostList, "Host counts: 10..70, 10..70:5 or 1,10,20")->capture_default_str();
    bench->add_option("--subnets", subnets)->capture_default_str();
    bench->add_option("--vulns", vulns)->capture_default_str();
    bench->add_option("--parallel-workers", parallelWorkers, "Workers of the parallel run (0 = hardware, 1 = skip)");
    bench->add_option("--csv", csvPath, "CSV output (default stdout)");
    bench->add_option("--out", outPath, "JSON reports");

    auto* sens = experiment->add_subcommand("sensitivity", "Parameter sweeps over the use case");
    std::vector<std::string> sweepParams;
    sens->add_option("--param", sweepParams, "Parameter to sweep (repeatable, default all)");
    sens->add_option("--out", outPath, "JSON report");

    // serve
    auto* serveCmd = app.add_subcommand("serve", "HTTP API for the operator console");
    int port = port_from_env(8080);
    std::string host = "127.0.0.1", logPath, staticDir;
    ParamFlags serveParams;
    serveCmd->add_option("--topology", topologyPath, "Topology document")->required();
    serveCmd->add_option("--port", port, "Listening port (BAM_PORT)")->capture_default_str();
    serveCmd->add_option("--host", host, "Listening address")->capture_default_str();
    serveCmd->add_option("--event-log", logPath, "Append-only event log, replayed at startup");
    serveCmd->add_option("--static", staticDir, "Directory served as the console bundle");
    serveParams.add_to(*serveCmd);

    CLI11_PARSE(app, argc, argv);

    try {
        if (*build) {
            auto params = buildParams.resolve();
            auto t0 = std::chrono::steady_clock::now();
            Model m = build_model(load_topology(topologyPath), params, workers);
            double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
            json bats = json::array();
            std::size_t total = 0;
            for (const auto& bat : m.bam.bats) {
                json b{{"source", m.tag.node_id(bat.source())}, {"nodes", bat.size()}, {"edges", bat.edge_count()}};
                if (withBats) b["export"] = to_json(bat, m.tag);
                bats.push_back(std::move(b));
                total += bat.size();
            }
            json doc{{"params", to_json(params)},
                     {"tag", to_json(m.tag)},
                     {"bam", {{"batCount", m.bam.bats.size()}, {"totalNodes", total}, {"bats", bats}}}};
            write_output(outPath, doc.dump(2));
            spdlog::info("built {} BATs, {} nodes in {:.3f}s", m.bam.bats.size(), total, secs);
            if (!outPath.empty() && outPath != "-") {
                std::cout << "BATs: " << m.bam.bats.size() << ", nodes: " << total << '\n';
            }
            return 0;
        }

        if (*assessCmd) {
            auto params = assessParams.resolve();
            Model m = build_model(load_topology(topologyPath), params, workers);
            auto emit = [&](const std::string& text) {
                EvidenceState state = replay(m, text, eventsPath, !observedOnly);
                RiskReport report = assess(m, state, workers);
                if (format == "table") {
                    std::ostringstream os;
                    for (const auto& id : report.ranking) {
                        const auto& a = report.at(id);
                        char buf[128];
                        std::snprintf(buf, sizeof buf, "%-16s %.6f  %s\n", a.host.c_str(), a.probability,
                                      std::string(to_string(a.level)).c_str());
                        os << buf;
                    }
                    write_output(outPath, os.str());
                } else {
                    write_output(outPath, watch ? to_json(report).dump() : to_json(report).dump(2));
                }
            };
            std::string text = eventsPath.empty() ? std::string() : read_file(eventsPath);
            emit(text);
            if (watch) {
                if (eventsPath.empty()) throw InvalidArgument("--watch needs --events");
                auto start = std::chrono::steady_clock::now();
                while (watchTimeout <= 0.0 ||
                       std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count() < watchTimeout) {
                    std::this_thread::sleep_for(std::chrono::duration<double>(watchInterval));
                    std::string now = read_file(eventsPath);
                    if (now == text) continue;
                    text = std::move(now);
                    spdlog::info("events changed, re-assessing");
                    try {
                        emit(text);
                    } catch (const Error& e) {
                        spdlog::error("{}", e.what());
                    }
                }
            }
            return 0;
        }

        if (*experiment) {
            auto params = expParams.resolve();
            if (*usecase) {
                auto r = run_use_case(params, workers);
                json scenarios = json::array();
                auto scs = use_case_scenarios();
                for (std::size_t i = 0; i < r.reports.size(); ++i) {
                    json steps = json::array();
                    for (const auto& s : scs[i].steps) {
                        steps.push_back({{"attacker", s.attacker}, {"victim", s.victim}, {"detection", to_string(s.detection)}});
                    }
                    scenarios.push_back({{"scenario", scs[i].name}, {"steps", steps}, {"report", to_json(r.reports[i])}});
                }
                if (!outPath.empty()) write_output(outPath, json{{"params", to_json(params)}, {"scenarios", scenarios}}.dump(2));
                if (!csvPath.empty()) write_output(csvPath, use_case_csv(r));
                if (!topologyOut.empty()) write_output(topologyOut, to_json(use_case_topology()).dump(2));
                std::cout << band_table(r);
                return 0;
            }
            if (*accuracy) {
                if (runs < 0 || hostsMin < 1 || hostsMax < hostsMin) throw InvalidArgument("bad accuracy run settings");
                std::vector<TopologyGenSpec> specs;
                for (int i = 0; i < runs; ++i) {
                    TopologyGenSpec s;
                    s.nHosts = runs > 1 ? hostsMin + (hostsMax - hostsMin) * i / (runs - 1) : hostsMin;
                    s.nSubnets = subnets;
                    s.vulnsPerHost = vulns;
                    s.seed = seed + static_cast<std::uint64_t>(i);
                    specs.push_back(s);
                }
                auto r = evaluate_accuracy(specs, params, steps, workers);
                if (!outPath.empty()) write_output(outPath, to_json(r).dump(2));
                std::cout << "seed\thosts\tsteps\tminCompromised\tmaxHealthy\tseparable\n";
                for (const auto& run : r.runs) {
                    std::cout << run.seed << '\t' << run.nHosts << '\t' << run.scenarioSteps << '\t' << run.minCompromised
                              << '\t' << run.maxHealthy << '\t' << (run.separable ? "yes" : "no") << '\n';
                }
                std::cout << "mean minCompromised " << r.meanCompromised << " (sd " << r.stddevCompromised
                          << "), mean maxHealthy " << r.meanHealthy << " (sd " << r.stddevHealthy << ")\n";
                return r.separable ? 0 : 1;
            }
            if (*bench) {
                std::vector<TopologyGenSpec> specs;
                for (int n : parse_host_list(hostList)) {
                    TopologyGenSpec s;
                    s.nHosts = n;
                    s.nSubnets = subnets;
                    s.vulnsPerHost = vulns;
                    s.seed = seed;
                    specs.push_back(s);
                }
                auto reports = benchmark(specs, params, parallelWorkers);
                if (!outPath.empty()) {
                    json arr = json::array();
                    for (const auto& r : reports) arr.push_back(to_json(r));
                    write_output(outPath, arr.dump(2));
                }
                write_output(csvPath, perf_csv(reports));
                return 0;
            }
            if (*sens) {
                auto grids = default_sensitivity_grids();
                if (!sweepParams.empty()) {
                    SweepGrid chosen;
                    for (const auto& p : sweepParams) {
                        auto it = std::find_if(grids.begin(), grids.end(), [&](const auto& g) { return g.first == p; });
                        if (it == grids.end()) throw InvalidArgument("unknown parameter: " + p);
                        chosen.push_back(*it);
                    }
                    grids = std::move(chosen);
                }
                auto r = sensitivity_sweep(grids, params, workers);
                if (!outPath.empty()) write_output(outPath, to_json(r).dump(2));
                std::cout << "parameter\tvalue\tmaxDelta\tminSpearman\tminGamma\tdiscordantPairs\n";
                for (const auto& s : r.sweeps) {
                    for (const auto& p : s.points) {
                        double sp = 1.0, g = 1.0;
                        bool undefined = false;
                        std::size_t disc = 0;
                        for (const auto& a : p.agreement) {
                            if (std::isnan(a.spearman)) undefined = true;
                            else sp = std::min(sp, a.spearman);
                            g = std::min(g, a.gamma);
                            disc += a.discordant;
                        }
                        std::cout << s.parameter << '\t' << p.value << '\t' << p.maxDelta << '\t'
                                  << (undefined ? std::string("undefined") : std::to_string(sp)) << '\t' << g << '\t'
                                  << disc << '\n';
                    }
                }
                return 0;
            }
        }

        if (*serveCmd) {
            auto params = serveParams.resolve();
            Session session(build_model(load_topology(topologyPath), params, workers),
                            logPath.empty() ? std::nullopt : std::optional<std::filesystem::path>(logPath), workers);
            ServeOptions opts;
            opts.host = host;
            opts.port = port;
            if (!staticDir.empty()) opts.staticDir = staticDir;
            HttpServer server(session, opts);
            int bound = server.bind();
            g_server = &server;
            std::signal(SIGINT, on_signal);
            std::signal(SIGTERM, on_signal);
            std::cout << "listening on " << host << ':' << bound << " (revision " << session.revision() << ")"
                      << std::endl;
            server.run();
            g_server = nullptr;
            return 0;
        }
    } catch (const SchemaError& e) {
        std::cerr << "schema error: " << e.what() << '\n';
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 0;
}
