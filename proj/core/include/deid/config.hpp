#pragma once

// Declarative run configuration (JSON). Every field has a default, so `{}` is
// a valid config; loading reports every problem at once, each with its key
// path (e.g. "pipeline.k").

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "deid/eval.hpp"
#include "deid/pipeline.hpp"

namespace deid::config {

class ConfigError : public Error {
 public:
  ConfigError(const std::string& what, std::vector<std::string> problems = {})
      : Error(what), problems_(std::move(problems)) {}
  const std::vector<std::string>& problems() const noexcept { return problems_; }

 private:
  std::vector<std::string> problems_;
};

struct CorpusConfig {
  std::uint64_t seed = 1;            // subject corpus
  std::uint64_t gallery_seed = 1001; // gallery (generator training) corpus
  std::uint64_t encoder_seed = 2001; // encoder training population
  int identities = 16;
  int gallery_identities = 16;
  int encoder_identities = 48;
  std::vector<synth::Expression> expressions{synth::kAllExpressions.begin(), synth::kAllExpressions.end()};
  std::vector<synth::Pose> poses{synth::Pose::frontal, synth::Pose::profile};
  std::vector<double> illuminations{0.8, 1.2};
  int frame_size = 96;
};

struct TrainSection {
  int epochs = 60;
  int batch_size = 16;
  double learning_rate = 1e-3;
  std::uint64_t seed = 1;
};

struct EncoderSection {
  int epochs = 30;
  int batch_size = 16;
  double learning_rate = 1e-3;
  std::uint64_t seed = 7;
  int embedding_dim = 64;
  int input_size = 64;
};

struct ExperimentEntry {
  eval::ProbeCondition probe = eval::ProbeCondition::original;
  eval::ReferenceSplit reference = eval::ReferenceSplit::original;
  bool parrot = false;
  bool operator==(const ExperimentEntry&) const = default;
};

struct EvaluationConfig {
  std::vector<ExperimentEntry> experiments = default_experiments();
  std::vector<eval::ContextMode> contexts{eval::ContextMode::context, eval::ContextMode::nocontext};
  int folds = 10;
  int legit_pairs = 300;
  int impostor_pairs = 300;
  std::uint64_t seed = 1;

  static std::vector<ExperimentEntry> default_experiments();
};

struct PathsConfig {
  std::string out = "run";
  std::string frames;  // deidentify input; empty = the subject corpus images
};

struct RunConfig {
  CorpusConfig corpus;
  TrainSection generator;
  EncoderSection encoder;
  pipeline::PipelineConfig pipeline;
  EvaluationConfig evaluation;
  PathsConfig paths;
};

/// Parses JSON text. Syntax errors carry line and column; the ConfigError
/// message lists every invalid or unknown key.
RunConfig parse_config(const std::string& text, const std::string& source = "<config>");
RunConfig load_config(const std::filesystem::path& path);

/// Complete effective configuration as pretty JSON; parse_config of the
/// output yields the same config.
std::string print_config(const RunConfig& cfg);

/// Range checks and path checks; returns one message per violation.
std::vector<std::string> validate(const RunConfig& cfg);

bool operator==(const RunConfig& a, const RunConfig& b);

}  // namespace deid::config
