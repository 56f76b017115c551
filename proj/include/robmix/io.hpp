#pragma once

// File formats. Datasets are CSV with header `y,x1,...,xP` (no intercept
// column); numbers are written with 17 significant digits. Structured outputs
// are JSON objects carrying a versioned "schema" field. See docs/formats.md.

#include <json.hpp>

#include <filesystem>
#include <string>

#include "robmix/evaluate.hpp"
#include "robmix/mixture.hpp"
#include "robmix/simulate.hpp"

namespace robmix::io {

using Json = nlohmann::ordered_json;

inline constexpr const char* kModelSchema = "robmix.fit/1";
inline constexpr const char* kTruthSchema = "robmix.truth/1";
inline constexpr const char* kBenchmarkSchema = "robmix.benchmark/1";
inline constexpr const char* kManifestSchema = "robmix.manifest/1";

/// %.17g formatting.
std::string format_double(double v);

std::string dataset_to_csv(const Dataset& data);
/// Throws ParseError naming the 1-based line on malformed input.
Dataset dataset_from_csv(const std::string& text);

Dataset read_dataset(const std::filesystem::path& path);
void write_text(const std::filesystem::path& path, const std::string& content);
std::string read_text(const std::filesystem::path& path);

Json model_to_json(const MixtureModel& model);
Json truth_to_json(const SimulatedData& sim, const ScenarioSpec& spec);
Json spec_to_json(const ScenarioSpec& spec);
Json config_to_json(const FitConfig& cfg);
Json fit_to_json(const FitResult& result, const FitConfig& cfg);

/// index, z, outlier, w1..wK (1-based index and labels).
std::string assignments_csv(const FitResult& result);
/// iteration, objective.
std::string trace_csv(const FitResult& result);
/// index, component, y, fitted, residual, standardized.
std::string residuals_csv(const Dataset& data, const FitResult& result);

std::string report_csv(const BenchmarkReport& report);
Json report_to_json(const BenchmarkReport& report);

}  // namespace robmix::io
