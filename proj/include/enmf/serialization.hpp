#pragma once

// JSON mapping for configs, datasets, reports and benchmark records.

#include "enmf/analysis.hpp"
#include "enmf/datasets.hpp"
#include "enmf/pipeline.hpp"

#include <json.hpp>

namespace enmf {

using Json = nlohmann::json;

// Non-finite doubles are written as the strings "inf", "-inf", "nan".
Json number_to_json(double x);
double number_from_json(const Json& j);

void to_json(Json& j, const RotationConfig& c);
void from_json(const Json& j, RotationConfig& c);
void to_json(Json& j, const PenaltyConfig& c);
void from_json(const Json& j, PenaltyConfig& c);
void to_json(Json& j, const DescentStop& c);
void from_json(const Json& j, DescentStop& c);
void to_json(Json& j, const PipelineConfig& c);
/// Missing keys keep their defaults; unknown keys are rejected.
void from_json(const Json& j, PipelineConfig& c);

void to_json(Json& j, const PhaseTimings& t);
void from_json(const Json& j, PhaseTimings& t);
void to_json(Json& j, const KktResiduals& k);
void from_json(const Json& j, KktResiduals& k);
void to_json(Json& j, const EquivalenceReport& r);

void to_json(Json& j, const DatasetSpec& d);
void from_json(const Json& j, DatasetSpec& d);

/// Reads a JSON document from disk (IoError / ParseError on failure).
Json read_json_file(const std::filesystem::path& path);

}  // namespace enmf
