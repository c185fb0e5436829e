#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "cscore/data/synthetic.hpp"
#include "cscore/gen/generator.hpp"
#include "cscore/metrics/metrics.hpp"
#include "cscore/retrieval/retriever.hpp"

namespace csc {

// Test-set generation driver shared by eval and ablate: streams every
// held-out clip of every test identity through a GenerationSession and
// scores the result against the reference distribution.

struct EvalSpec {
  std::int64_t lookahead = 0;
  bool empty_library = false;
  cs::gen::QueryMode query_mode = cs::gen::QueryMode::kFull;
  // Library restriction: `count` segments of `frames` frames cut
  // consecutively from the identity's template clips; -1 keeps everything.
  std::int64_t lib_templates = -1;
  std::int64_t lib_frames = -1;
  std::int64_t eval_clips = 2;    // clips streamed per identity
  std::int64_t eval_frames = 200; // audio frames streamed per clip
  std::uint64_t sampler_seed = 101;
};

struct GeneratedClip {
  std::string identity_tag;
  std::string ref_path;  // dataset-relative reference clip
  cs::TensorF audio;     // the audio that was streamed
  cs::TensorF motion;    // generated, same row count
  double sync = 0.0;
};

struct EvalRun {
  std::vector<GeneratedClip> clips;
  cs::metrics::MetricReport report;
};

cs::retrieval::StyleLibrary make_library(const cs::data::Dataset& ds,
                                         const std::string& identity_tag,
                                         std::int64_t count,
                                         std::int64_t frames);

EvalRun run_eval_set(const cs::gen::GeneratorModel& model,
                     const cs::data::Dataset& ds,
                     const cs::gen::SamplerConfig& base_sampler,
                     const EvalSpec& spec);

}  // namespace csc
