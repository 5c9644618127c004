#pragma once

#include <string>
#include <vector>

#include "rdrom/error.hpp"

namespace rdrom {

/// One file written by a pipeline run. `path` is relative to the output
/// directory.
struct ArtifactRecord {
  std::string stage;
  std::string path;
  std::string kind;
};

struct PipelineReport {
  bool ok = true;
  std::string failed_stage;
  ErrorCode error_code = ErrorCode::StageFailure;
  std::string error_message;
  std::vector<ArtifactRecord> artifacts;
  std::string manifest_json;
};

/// Checks a pipeline config without running it. Throws Error with
/// ErrorCode::Config naming the offending field.
///
/// Config document:
///   {
///     "output": "<directory>",
///     "seed": <uint, default 0>,
///     "input": {"synth": {<synth spec>}} | {"path": "<field csv>"},
///     "stages": ["pod", {"stage": "untwist-preprocess", "window": 10, ...}, ...]
///   }
void validate_pipeline_config(const std::string& config_json);

/// Validates and runs every stage in order, writing artifacts under the
/// output directory together with manifest.json. A failing stage stops the
/// run: artifacts written so far are kept, the manifest records the failure
/// and a FAILED marker file holds the stage name and cause. Config errors
/// throw before anything is written.
PipelineReport run_pipeline(const std::string& config_json);

/// Names of the supported stages, in canonical order.
const std::vector<std::string>& pipeline_stage_names();

}  // namespace rdrom
