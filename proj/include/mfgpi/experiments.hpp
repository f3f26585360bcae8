#pragma once

/// @file experiments.hpp
/// @brief Declarative experiment presets, seeded observation synthesis, run
/// orchestration for the plain policy iteration vs. the Schwarz-Newton
/// accelerator, and machine-readable reports (JSON + CSV).
///
/// Each named preset bundles a fully-specified solver configuration, the
/// matching finite-difference reference problem, and the observation layout
/// (how many readings of which field, drawn where).  Observation noise is
/// generated by a portable seeded RNG (std::mt19937_64 bit stream, explicit
/// Fisher-Yates shuffle, 53-bit uniform doubles, Box-Muller normals) so that
/// two runs with the same seed produce byte-identical observation sets on any
/// platform.

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "mfgpi/hjb_solver.hpp"
#include "mfgpi/mfg_stationary.hpp"
#include "mfgpi/mfg_timedep.hpp"
#include "mfgpi/problem_common.hpp"

namespace mfgpi {

/// The experiment families.  Every kind except `custom` corresponds to a
/// named preset whose parameters are fixed; `custom` starts from a named base
/// preset and applies numeric overrides from the config file.
enum class ProblemKind {
    hjb_inverse,                ///< LQR-type HJB, U and V jointly inferred
    mfg_stationary_forward,     ///< ergodic MFG, V known
    mfg_stationary_inverse_1d,  ///< ergodic MFG, V inferred (1D)
    mfg_stationary_inverse_2d,  ///< ergodic MFG, V inferred (2D)
    mfg_timedep_inverse,        ///< time-dependent MFG, V inferred
    custom,
};

enum class RunMethod { gppi, as_newton, both };

/// Noise standard deviations per observed quantity.
struct NoiseSpec {
    double gamma_m = 1e-3;
    double gamma_u = 1e-3;
    double gamma_v = 1e-3;
};

/// A fully-resolved experiment: exactly one of the nested solver configs is
/// active (selected by `problem`); observations are synthesized at run time
/// from the reference solution and `seed`.
struct ExperimentConfig {
    ProblemKind problem = ProblemKind::mfg_stationary_forward;
    std::string preset_name;  ///< name this config was derived from

    HjbConfig hjb;
    StationaryConfig stationary;
    TimeDepConfig timedep;

    /// Observation counts (fields not observed by the preset keep 0).
    int n_obs_m = 0, n_obs_u = 0, n_obs_v = 0;

    NoiseSpec noise;
    std::uint64_t seed = 0;
    RunMethod method = RunMethod::both;
    std::string out_dir;  ///< empty: no files written
};

/// Names accepted by make_preset, in a stable order.
std::vector<std::string> preset_names();

/// Builds the named preset with the given seed; throws ConfigError for an
/// unknown name.
ExperimentConfig make_preset(const std::string& name, std::uint64_t seed);

/// Parses a JSON config file: {"preset": <name>, "seed": N, "method":
/// "gppi"|"as"|"both", "out": <dir>, "overrides": {<key>: <number>}}.
/// Throws ConfigError naming the offending field on schema violations.
ExperimentConfig parse_experiment_config(const std::string& path);

/// values[i] = field(points.row(i)) + gamma * xi_i with xi_i standard normal
/// from the portable generator; deterministic per (seed, point order).
Observations synthesize_observations(const std::function<double(const Vec&)>& field,
                                     const Mat& points, double gamma, std::uint64_t seed);

/// One row of the error-curve table (the CSV contract).
struct ErrorRow {
    int iteration = 0;
    double l2_error_m = 0.0;   ///< vs. the FD reference; 0 when there is no density
    double l2_error_u = 0.0;
    double residual_norm = 0.0;
    double seconds = 0.0;      ///< wall-clock of this iteration
};

/// The structured result of one solver run on one preset.
struct RunReport {
    std::string preset;
    std::string method;  ///< "gppi" or "as"
    bool converged = false;
    int iterations = 0;
    std::optional<double> lambda;
    std::vector<ErrorRow> rows;
    double total_seconds = 0.0;
    std::string failure;

    Mat nodes;      ///< collocation nodes of the final fields (one per row)
    Vec m_values;   ///< empty when the problem has no density
    Vec u_values;

    /// Recovered spatial cost in inverse mode: one value per collocation
    /// node (spatial coordinates in v_nodes); empty in forward mode.
    Mat v_nodes;
    Vec v_values;
};

/// Executes the configured method(s); returns one report per method run.
/// When out_dir is non-empty, writes per-method artifacts:
///   <out>/<preset>_<method>_report.json
///   <out>/<preset>_<method>_errors.csv   (iteration,l2_error_m,l2_error_u,residual_norm,seconds)
///   <out>/<preset>_<method>_fields.csv   (axis columns, then m and/or u)
std::vector<RunReport> run_experiment(const ExperimentConfig& config);

/// Report (de)serialization for the compare command.
std::string report_to_json(const RunReport& report);
RunReport report_from_json(const std::string& text);

/// Pairwise method comparison; throws ConfigError when the presets differ.
struct MethodComparison {
    double delta_lambda = 0.0;      ///< |lambda_a - lambda_b| (0 when absent)
    double final_error_ratio = 1.0; ///< a's final primary error / b's
    double iteration_ratio = 1.0;   ///< a's iterations / b's
    double runtime_ratio = 1.0;     ///< a's wall-clock / b's
};
MethodComparison compare_methods(const RunReport& a, const RunReport& b);

}  // namespace mfgpi
