#include "deid/config.hpp"

#include <fstream>
#include <functional>
#include <set>
#include <sstream>

#include "json.hpp"

namespace deid::config {

namespace {

using nlohmann::json;

/// Walks a JSON object, collecting problems instead of throwing so that every
/// bad key is reported in one go.
class Section {
 public:
  Section(const json* node, std::string path, std::vector<std::string>& problems)
      : node_(node), path_(std::move(path)), problems_(problems) {
    if (node_ && !node_->is_object()) {
      problem(path_.empty() ? "<root>" : path_, "expected an object");
      node_ = nullptr;
    }
  }

  ~Section() {
    if (!node_) return;
    for (const auto& [key, value] : node_->items())
      if (!seen_.count(key)) problem(key_path(key), "unknown key");
  }

  Section child(const std::string& key) {
    seen_.insert(key);
    return Section(find(key), key_path(key), problems_);
  }

  template <typename T>
  void get(const std::string& key, T& out) {
    seen_.insert(key);
    const json* v = find(key);
    if (!v) return;
    try {
      if constexpr (std::is_same_v<T, bool>) {
        if (!v->is_boolean()) throw std::invalid_argument("expected true or false");
      } else if constexpr (std::is_integral_v<T>) {
        if (!v->is_number_integer()) throw std::invalid_argument("expected an integer");
        if constexpr (std::is_unsigned_v<T>)
          if (v->is_number_integer() && !v->is_number_unsigned()) throw std::invalid_argument("expected a non-negative integer");
      } else if constexpr (std::is_floating_point_v<T>) {
        if (!v->is_number()) throw std::invalid_argument("expected a number");
      } else if constexpr (std::is_same_v<T, std::string>) {
        if (!v->is_string()) throw std::invalid_argument("expected a string");
      }
      out = v->get<T>();
    } catch (const std::exception& e) {
      problem(key_path(key), e.what());
    }
  }

  /// String-valued enum field.
  template <typename T>
  void get_enum(const std::string& key, T& out, const std::function<T(const std::string&)>& parse) {
    std::string s;
    bool present = find(key) != nullptr;
    get(key, s);
    if (!present || s.empty()) {
      if (present) problem(key_path(key), "expected a non-empty string");
      return;
    }
    try {
      out = parse(s);
    } catch (const std::exception& e) {
      problem(key_path(key), e.what());
    }
  }

  template <typename T>
  void get_list(const std::string& key, std::vector<T>& out, const std::function<T(const json&)>& item) {
    seen_.insert(key);
    const json* v = find(key);
    if (!v) return;
    if (!v->is_array()) {
      problem(key_path(key), "expected an array");
      return;
    }
    std::vector<T> items;
    for (std::size_t i = 0; i < v->size(); ++i) {
      try {
        items.push_back(item((*v)[i]));
      } catch (const std::exception& e) {
        problem(key_path(key) + "[" + std::to_string(i) + "]", e.what());
        return;
      }
    }
    out = std::move(items);
  }

 private:
  const json* find(const std::string& key) const {
    if (!node_) return nullptr;
    const auto it = node_->find(key);
    return it == node_->end() ? nullptr : &*it;
  }
  std::string key_path(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }
  void problem(const std::string& where, const std::string& what) { problems_.push_back(where + ": " + what); }

  const json* node_;
  std::string path_;
  std::vector<std::string>& problems_;
  std::set<std::string> seen_;
};

std::string string_item(const json& j) {
  if (!j.is_string()) throw std::invalid_argument("expected a string");
  return j.get<std::string>();
}

std::string weighting_name(embed::Weighting w) { return w == embed::Weighting::uniform ? "uniform" : "similarity"; }

embed::Weighting parse_weighting(const std::string& s) {
  if (s == "uniform") return embed::Weighting::uniform;
  if (s == "similarity") return embed::Weighting::similarity;
  throw InvalidArgument("unknown weighting '" + s + "' (expected uniform or similarity)");
}

json to_json(const RunConfig& c) {
  json j;
  json exprs = json::array(), poses = json::array();
  for (auto e : c.corpus.expressions) exprs.push_back(synth::to_string(e));
  for (auto p : c.corpus.poses) poses.push_back(synth::to_string(p));
  j["corpus"] = {{"seed", c.corpus.seed},
                 {"gallery_seed", c.corpus.gallery_seed},
                 {"encoder_seed", c.corpus.encoder_seed},
                 {"identities", c.corpus.identities},
                 {"gallery_identities", c.corpus.gallery_identities},
                 {"encoder_identities", c.corpus.encoder_identities},
                 {"expressions", exprs},
                 {"poses", poses},
                 {"illuminations", c.corpus.illuminations},
                 {"frame_size", c.corpus.frame_size}};
  j["generator"] = {{"epochs", c.generator.epochs},
                    {"batch_size", c.generator.batch_size},
                    {"learning_rate", c.generator.learning_rate},
                    {"seed", c.generator.seed}};
  j["encoder"] = {{"epochs", c.encoder.epochs},
                  {"batch_size", c.encoder.batch_size},
                  {"learning_rate", c.encoder.learning_rate},
                  {"seed", c.encoder.seed},
                  {"embedding_dim", c.encoder.embedding_dim},
                  {"input_size", c.encoder.input_size}};
  const auto& p = c.pipeline;
  j["pipeline"] = {{"k", p.k},
                   {"weighting", weighting_name(p.weighting)},
                   {"expression", synth::to_string(p.expression)},
                   {"identity_lock", p.identity_lock},
                   {"skin_lower", p.skin.lower},
                   {"skin_upper", p.skin.upper},
                   {"morph_radius", p.morph_radius},
                   {"ransac_iterations", p.robust.iterations},
                   {"ransac_threshold", p.robust.inlier_threshold},
                   {"ransac_seed", p.robust.seed}};
  json exps = json::array();
  for (const auto& e : c.evaluation.experiments)
    exps.push_back({{"probe", eval::to_string(e.probe)}, {"reference", eval::to_string(e.reference)}, {"parrot", e.parrot}});
  json ctx = json::array();
  for (auto m : c.evaluation.contexts) ctx.push_back(eval::to_string(m));
  j["evaluation"] = {{"experiments", exps},
                     {"contexts", ctx},
                     {"folds", c.evaluation.folds},
                     {"legit_pairs", c.evaluation.legit_pairs},
                     {"impostor_pairs", c.evaluation.impostor_pairs},
                     {"seed", c.evaluation.seed}};
  j["paths"] = {{"out", c.paths.out}, {"frames", c.paths.frames}};
  return j;
}

void from_json(const json& root, RunConfig& c, std::vector<std::string>& problems) {
  Section top(&root, "", problems);
  {
    auto s = top.child("corpus");
    s.get("seed", c.corpus.seed);
    s.get("gallery_seed", c.corpus.gallery_seed);
    s.get("encoder_seed", c.corpus.encoder_seed);
    s.get("identities", c.corpus.identities);
    s.get("gallery_identities", c.corpus.gallery_identities);
    s.get("encoder_identities", c.corpus.encoder_identities);
    s.get_list<synth::Expression>("expressions", c.corpus.expressions,
                                  [](const json& j) { return synth::parse_expression(string_item(j)); });
    s.get_list<synth::Pose>("poses", c.corpus.poses, [](const json& j) { return synth::parse_pose(string_item(j)); });
    s.get_list<double>("illuminations", c.corpus.illuminations, [](const json& j) {
      if (!j.is_number()) throw std::invalid_argument("expected a number");
      return j.get<double>();
    });
    s.get("frame_size", c.corpus.frame_size);
  }
  {
    auto s = top.child("generator");
    s.get("epochs", c.generator.epochs);
    s.get("batch_size", c.generator.batch_size);
    s.get("learning_rate", c.generator.learning_rate);
    s.get("seed", c.generator.seed);
  }
  {
    auto s = top.child("encoder");
    s.get("epochs", c.encoder.epochs);
    s.get("batch_size", c.encoder.batch_size);
    s.get("learning_rate", c.encoder.learning_rate);
    s.get("seed", c.encoder.seed);
    s.get("embedding_dim", c.encoder.embedding_dim);
    s.get("input_size", c.encoder.input_size);
  }
  {
    auto s = top.child("pipeline");
    auto& p = c.pipeline;
    s.get("k", p.k);
    s.get_enum<embed::Weighting>("weighting", p.weighting, parse_weighting);
    s.get_enum<synth::Expression>("expression", p.expression, synth::parse_expression);
    s.get("identity_lock", p.identity_lock);
    auto triple = [](const json& j) {
      if (!j.is_number()) throw std::invalid_argument("expected a number");
      return j.get<double>();
    };
    std::vector<double> lo(p.skin.lower.begin(), p.skin.lower.end()), hi(p.skin.upper.begin(), p.skin.upper.end());
    s.get_list<double>("skin_lower", lo, triple);
    s.get_list<double>("skin_upper", hi, triple);
    if (lo.size() == 3) std::copy(lo.begin(), lo.end(), p.skin.lower.begin());
    else problems.push_back("pipeline.skin_lower: expected 3 values");
    if (hi.size() == 3) std::copy(hi.begin(), hi.end(), p.skin.upper.begin());
    else problems.push_back("pipeline.skin_upper: expected 3 values");
    s.get("morph_radius", p.morph_radius);
    s.get("ransac_iterations", p.robust.iterations);
    s.get("ransac_threshold", p.robust.inlier_threshold);
    s.get("ransac_seed", p.robust.seed);
  }
  {
    auto s = top.child("evaluation");
    auto& e = c.evaluation;
    s.get_list<ExperimentEntry>("experiments", e.experiments, [](const json& j) {
      if (!j.is_object()) throw std::invalid_argument("expected an object with probe, reference, parrot");
      ExperimentEntry x;
      for (const auto& [k, v] : j.items()) {
        if (k == "probe") x.probe = eval::parse_probe_condition(string_item(v));
        else if (k == "reference") x.reference = eval::parse_reference_split(string_item(v));
        else if (k == "parrot") {
          if (!v.is_boolean()) throw std::invalid_argument("parrot: expected true or false");
          x.parrot = v.get<bool>();
        } else throw std::invalid_argument("unknown key '" + k + "'");
      }
      return x;
    });
    s.get_list<eval::ContextMode>("contexts", e.contexts,
                                  [](const json& j) { return eval::parse_context_mode(string_item(j)); });
    s.get("folds", e.folds);
    s.get("legit_pairs", e.legit_pairs);
    s.get("impostor_pairs", e.impostor_pairs);
    s.get("seed", e.seed);
  }
  {
    auto s = top.child("paths");
    s.get("out", c.paths.out);
    s.get("frames", c.paths.frames);
  }
}

std::string line_col(const std::string& text, std::size_t byte) {
  int line = 1, col = 1;
  for (std::size_t i = 0; i + 1 < byte && i < text.size(); ++i) {
    if (text[i] == '\n') {
      ++line;
      col = 1;
    } else {
      ++col;
    }
  }
  return "line " + std::to_string(line) + ", column " + std::to_string(col);
}

}  // namespace

std::vector<ExperimentEntry> EvaluationConfig::default_experiments() {
  using eval::ProbeCondition;
  using eval::ReferenceSplit;
  return {{ProbeCondition::original, ReferenceSplit::original, false},
          {ProbeCondition::original, ReferenceSplit::profile, false},
          {ProbeCondition::deidentified, ReferenceSplit::original, false},
          {ProbeCondition::deidentified, ReferenceSplit::profile, false},
          {ProbeCondition::pixelated, ReferenceSplit::original, false},
          {ProbeCondition::pixelated, ReferenceSplit::original, true},
          {ProbeCondition::blurred, ReferenceSplit::original, false},
          {ProbeCondition::blurred, ReferenceSplit::original, true}};
}

std::vector<std::string> validate(const RunConfig& c) {
  std::vector<std::string> v;
  auto range = [&](const char* key, double value, double lo, double hi) {
    if (!(value >= lo && value <= hi)) {
      std::ostringstream os;
      os << key << ": " << value << " outside [" << lo << ", " << hi << "]";
      v.push_back(os.str());
    }
  };
  range("corpus.identities", c.corpus.identities, 2, 1000);
  range("corpus.gallery_identities", c.corpus.gallery_identities, 2, 1000);
  range("corpus.encoder_identities", c.corpus.encoder_identities, 2, 1000);
  if (c.corpus.expressions.empty()) v.push_back("corpus.expressions: must not be empty");
  if (c.corpus.poses.empty()) v.push_back("corpus.poses: must not be empty");
  if (c.corpus.illuminations.empty()) v.push_back("corpus.illuminations: must not be empty");
  for (std::size_t i = 0; i < c.corpus.illuminations.size(); ++i)
    range(("corpus.illuminations[" + std::to_string(i) + "]").c_str(), c.corpus.illuminations[i], 0.5, 1.5);
  range("corpus.frame_size", c.corpus.frame_size, 96, 96);

  range("generator.epochs", c.generator.epochs, 1, 100000);
  range("generator.batch_size", c.generator.batch_size, 1, 4096);
  range("generator.learning_rate", c.generator.learning_rate, 1e-8, 1.0);
  range("encoder.epochs", c.encoder.epochs, 1, 100000);
  range("encoder.batch_size", c.encoder.batch_size, 1, 4096);
  range("encoder.learning_rate", c.encoder.learning_rate, 1e-8, 1.0);
  range("encoder.embedding_dim", c.encoder.embedding_dim, 1, 4096);
  if (c.encoder.input_size < 8 || c.encoder.input_size % 8 != 0)
    v.push_back("encoder.input_size: " + std::to_string(c.encoder.input_size) + " must be a multiple of 8, >= 8");

  const auto& p = c.pipeline;
  range("pipeline.k", p.k, 1, c.corpus.gallery_identities);
  for (int i = 0; i < 3; ++i) {
    range(("pipeline.skin_lower[" + std::to_string(i) + "]").c_str(), p.skin.lower[i], 0.0, 255.0);
    range(("pipeline.skin_upper[" + std::to_string(i) + "]").c_str(), p.skin.upper[i], 0.0, 255.0);
    if (p.skin.lower[i] > p.skin.upper[i])
      v.push_back("pipeline.skin_lower[" + std::to_string(i) + "]: exceeds pipeline.skin_upper[" + std::to_string(i) + "]");
  }
  range("pipeline.morph_radius", p.morph_radius, 0, 16);
  range("pipeline.ransac_iterations", p.robust.iterations, 1, 1000000);
  range("pipeline.ransac_threshold", p.robust.inlier_threshold, 1e-6, 1000.0);

  const auto& e = c.evaluation;
  if (e.experiments.empty()) v.push_back("evaluation.experiments: must not be empty");
  if (e.contexts.empty()) v.push_back("evaluation.contexts: must not be empty");
  range("evaluation.folds", e.folds, 2, 1000);
  range("evaluation.legit_pairs", e.legit_pairs, 1, 1000000);
  range("evaluation.impostor_pairs", e.impostor_pairs, 1, 1000000);

  if (c.paths.out.empty()) {
    v.push_back("paths.out: must not be empty");
  } else {
    const auto parent = std::filesystem::absolute(c.paths.out).parent_path();
    if (!std::filesystem::is_directory(parent)) v.push_back("paths.out: parent directory " + parent.string() + " does not exist");
  }
  if (!c.paths.frames.empty() && !std::filesystem::is_directory(c.paths.frames))
    v.push_back("paths.frames: directory " + c.paths.frames + " does not exist");
  return v;
}

RunConfig parse_config(const std::string& text, const std::string& source) {
  json root;
  try {
    root = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError(source + ": syntax error at " + line_col(text, e.byte) + ": " + e.what());
  }
  RunConfig c;
  std::vector<std::string> problems;
  from_json(root, c, problems);
  for (auto& p : validate(c)) problems.push_back(std::move(p));
  if (!problems.empty()) {
    std::string msg = source + ": invalid configuration";
    for (const auto& p : problems) msg += "\n  " + p;
    throw ConfigError(msg, problems);
  }
  return c;
}

RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str(), path.string());
}

std::string print_config(const RunConfig& cfg) { return to_json(cfg).dump(2) + "\n"; }

bool operator==(const RunConfig& a, const RunConfig& b) { return print_config(a) == print_config(b); }

}  // namespace deid::config
