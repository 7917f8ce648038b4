#pragma once

#include <nlohmann/json.hpp>

namespace bam {

/// Tunable parameters of the attack model. Defaults are the reference
/// values used for a typical, well-monitored critical system.
struct ModelParams {
    double probabilityUnknownAttack = 0.001;  ///< leak of the topological noisy-OR (0-days)
    double probabilityNewAttackStep = 0.3;    ///< attacker continues from a compromised host
    int nbSteps = 3;                          ///< max successive attack steps kept per BAT
    double falsePositive = 0.05;              ///< sensor rate when no explicit rate is given
    double falseNegative = 0.01;
    double probabilityInternet = 0.7;         ///< prior of the "internet" attack source
    double probabilityOtherHosts = 0.1;       ///< prior of every other attack source

    /// Throws InvalidArgument naming the first offending field.
    void validate() const;

    bool operator==(const ModelParams&) const = default;
};

nlohmann::json to_json(const ModelParams& params);

} // namespace bam
