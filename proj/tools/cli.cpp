#include "cli.hpp"

#include <chrono>
#include <cstdio>
#include <fstream>
#include <ostream>
#include <string>

#include "CLI11.hpp"
#include "deid/config.hpp"
#include "deid/workflow.hpp"

namespace deid::cli {

namespace fs = std::filesystem;

namespace {

struct Options {
  std::string config_path;
  std::uint64_t seed = 0;
  bool seed_given = false;
  int threads = 1;
  std::string out_dir;
  bool print = false;
};

struct Layout {
  fs::path root;
  fs::path subjects() const { return root / "data" / "subjects"; }
  fs::path gallery() const { return root / "data" / "gallery"; }
  fs::path population() const { return root / "data" / "population"; }
  fs::path models() const { return root / "models"; }
  fs::path generator() const { return models() / "generator.bin"; }
  fs::path encoder() const { return models() / "encoder.bin"; }
  fs::path featdb() const { return models() / "gallery.fdb"; }
  fs::path deidentified() const { return root / "deidentified"; }
  fs::path report() const { return root / "report"; }
};

class Timer {
 public:
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
  }

 private:
  std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
};

std::ofstream open_out(const fs::path& path) {
  std::ofstream f(path);
  if (!f) throw IoError("cannot write " + path.string());
  return f;
}

void require(const fs::path& path, const char* produced_by) {
  if (!fs::exists(path)) throw IoError(path.string() + " not found; run `deid " + produced_by + "` first");
}

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

void cmd_synth_data(const config::RunConfig& cfg, const Layout& l, std::ostream& out) {
  struct Part {
    const char* name;
    synth::CorpusSpec spec;
    fs::path dir;
  };
  const Part parts[] = {{"subjects", workflow::subject_corpus_spec(cfg), l.subjects()},
                        {"gallery", workflow::gallery_corpus_spec(cfg), l.gallery()},
                        {"population", workflow::encoder_corpus_spec(cfg), l.population()}};
  for (const auto& p : parts) {
    const synth::Corpus c = synth::generate_corpus(p.spec);
    synth::write_corpus(c, p.dir);
    out << p.name << ": " << c.samples.size() << " frames, " << p.spec.identities << " identities -> " << p.dir.string()
        << '\n';
  }
  workflow::write_sidecars(l.subjects());
}

void cmd_train_gen(const config::RunConfig& cfg, const Layout& l, std::ostream& out, std::ostream& err) {
  require(l.gallery() / "all.csv", "synth-data");
  const auto gallery = synth::load_samples(l.gallery() / "all.csv");
  err << "training generator on " << gallery.size() << " images for " << cfg.generator.epochs << " epochs\n";
  Timer t;
  const auto result = workflow::train_generator(cfg, gallery);
  fs::create_directories(l.models());
  gen::save_generator(result.model, l.generator());
  auto csv = open_out(l.models() / "generator_loss.csv");
  csv << "epoch,loss\n";
  for (std::size_t e = 0; e < result.loss_curve.size(); ++e) csv << e << ',' << fmt(result.loss_curve[e]) << '\n';
  out << "generator: final training MSE " << result.model.final_loss() << " (" << t.seconds() << " s) -> "
      << l.generator().string() << '\n';
}

void cmd_train_embed(const config::RunConfig& cfg, const Layout& l, std::ostream& out, std::ostream& err) {
  require(l.population() / "all.csv", "synth-data");
  const auto population = synth::load_samples(l.population() / "all.csv");
  err << "training encoder on " << population.size() << " images for " << cfg.encoder.epochs << " epochs\n";
  Timer t;
  const auto result = workflow::train_encoder(cfg, population);
  fs::create_directories(l.models());
  embed::save_encoder(result.model, l.encoder());
  auto csv = open_out(l.models() / "encoder_train.csv");
  csv << "epoch,loss,accuracy\n";
  for (std::size_t e = 0; e < result.loss_curve.size(); ++e)
    csv << e << ',' << fmt(result.loss_curve[e]) << ',' << fmt(result.accuracy_curve[e]) << '\n';
  out << "encoder: training accuracy " << result.final_accuracy << " (" << t.seconds() << " s) -> "
      << l.encoder().string() << '\n';
}

void cmd_build_gallery(const Layout& l, std::ostream& out) {
  require(l.encoder(), "train-embed");
  require(l.gallery() / "all.csv", "synth-data");
  const auto encoder = embed::load_encoder(l.encoder());
  const auto gallery = synth::load_samples(l.gallery() / "all.csv");
  const auto db = workflow::build_gallery(encoder, gallery);
  fs::create_directories(l.models());
  db.save(l.featdb());
  out << "gallery: " << db.size() << " identities, dimension " << db.dim() << " -> " << l.featdb().string() << '\n';
}

struct LoadedModels {
  embed::Encoder encoder;
  embed::FeatDB gallery;
  gen::Generator generator;
  pipeline::Models refs() const { return {encoder, gallery, generator}; }
};

LoadedModels load_models(const Layout& l) {
  require(l.encoder(), "train-embed");
  require(l.featdb(), "build-gallery");
  require(l.generator(), "train-gen");
  return {embed::load_encoder(l.encoder()), embed::FeatDB::load(l.featdb()), gen::load_generator(l.generator())};
}

void cmd_deidentify(const config::RunConfig& cfg, const Layout& l, int threads, std::ostream& out,
                    std::ostream& err) {
  const fs::path frames_dir = cfg.paths.frames.empty() ? l.subjects() / "images" : fs::path(cfg.paths.frames);
  if (cfg.paths.frames.empty()) require(frames_dir, "synth-data");
  const LoadedModels m = load_models(l);
  const auto set = workflow::load_frames(frames_dir);
  Timer t;
  const auto result = pipeline::deidentify_sequence(set.frames, set.faces, m.refs(), cfg.pipeline, threads,
                                                    [&](const std::string& msg) { err << msg << '\n'; });
  fs::create_directories(l.deidentified());
  auto csv = open_out(l.deidentified() / "faces.csv");
  csv << "frame,face,applied,skip_reason,identities\n";
  int applied = 0, skipped = 0;
  for (std::size_t f = 0; f < set.paths.size(); ++f) {
    img::save_image(result.frames[f], l.deidentified() / set.paths[f].filename());
    for (std::size_t i = 0; i < result.reports[f].size(); ++i) {
      const auto& r = result.reports[f][i];
      (r.applied ? applied : skipped) += 1;
      std::string ids;
      for (const auto& match : r.match) ids += (ids.empty() ? "" : ";") + match.id;
      csv << set.paths[f].filename().string() << ',' << i << ',' << (r.applied ? 1 : 0) << ',' << r.skip_reason << ','
          << ids << '\n';
    }
  }
  out << "deidentified " << set.paths.size() << " frames (" << applied << " faces replaced, " << skipped
      << " skipped) in " << t.seconds() << " s -> " << l.deidentified().string() << '\n';
}

void cmd_evaluate(const config::RunConfig& cfg, const Layout& l, int threads, std::ostream& out, std::ostream& err) {
  require(l.subjects() / "all.csv", "synth-data");
  const LoadedModels m = load_models(l);
  const eval::EvalData data =
      eval::EvalData::from_corpus(workflow::corpus_from_samples(synth::load_samples(l.subjects() / "all.csv")));
  err << "evaluating " << workflow::experiment_grid(cfg).size() << " experiment cells on " << data.samples.size()
      << " frames\n";
  Timer t;
  const auto results = workflow::run_evaluation(cfg, data, m.encoder, m.refs(), threads);
  eval::write_report(results, l.report());
  out << eval::format_table(eval::read_metrics(l.report() / "metrics.json"));
  out << "report (" << t.seconds() << " s) -> " << l.report().string() << '\n';
}

void cmd_report(const Layout& l, std::ostream& out) {
  require(l.report() / "metrics.json", "evaluate");
  const std::string table = eval::format_table(eval::read_metrics(l.report() / "metrics.json"));
  auto md = open_out(l.report() / "table.md");
  md << table;
  out << table;
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Face deidentification with identity-mixing surrogate faces.", "deid"};
  app.require_subcommand(1);
  app.fallthrough();
  Options o;
  app.add_option("--config", o.config_path, "JSON run configuration (defaults apply when omitted)")
      ->check(CLI::ExistingFile);
  auto* seed_opt = app.add_option("--seed", o.seed, "Override the seed the subcommand uses");
  app.add_option("--threads", o.threads, "Worker thread cap")->check(CLI::Range(1, 256));
  app.add_option("--out", o.out_dir, "Output directory (overrides paths.out)");

  auto* synth_cmd = app.add_subcommand("synth-data", "Render the subject, gallery and encoder-population corpora");
  auto* gen_cmd = app.add_subcommand("train-gen", "Train the surrogate face generator on the gallery corpus");
  auto* embed_cmd = app.add_subcommand("train-embed", "Train the identity encoder on the population corpus");
  auto* gallery_cmd = app.add_subcommand("build-gallery", "Enrol the gallery identities");
  auto* deid_cmd = app.add_subcommand("deidentify", "Deidentify every annotated frame");
  auto* eval_cmd = app.add_subcommand("evaluate", "Run the verification experiments and write the report");
  auto* report_cmd = app.add_subcommand("report", "Print the metrics table of an evaluated run");
  auto* config_cmd = app.add_subcommand("config", "Validate the configuration");
  config_cmd->add_flag("--print", o.print, "Print the effective configuration");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e, out, err);
  }
  o.seed_given = seed_opt->count() > 0;

  try {
    config::RunConfig cfg = o.config_path.empty() ? config::RunConfig{} : config::load_config(o.config_path);
    if (!o.out_dir.empty()) cfg.paths.out = o.out_dir;
    if (o.seed_given) {
      if (synth_cmd->parsed()) cfg.corpus.seed = o.seed;
      if (gen_cmd->parsed()) cfg.generator.seed = o.seed;
      if (embed_cmd->parsed()) cfg.encoder.seed = o.seed;
      if (deid_cmd->parsed()) cfg.pipeline.robust.seed = o.seed;
      if (eval_cmd->parsed()) cfg.evaluation.seed = o.seed;
    }
    if (const auto problems = config::validate(cfg); !problems.empty()) {
      std::string msg = "invalid configuration";
      for (const auto& p : problems) msg += "\n  " + p;
      throw config::ConfigError(msg, problems);
    }
    const Layout layout{cfg.paths.out};

    if (config_cmd->parsed()) {
      if (o.print)
        out << config::print_config(cfg);
      else
        out << "configuration OK\n";
    } else if (synth_cmd->parsed()) {
      cmd_synth_data(cfg, layout, out);
    } else if (gen_cmd->parsed()) {
      cmd_train_gen(cfg, layout, out, err);
    } else if (embed_cmd->parsed()) {
      cmd_train_embed(cfg, layout, out, err);
    } else if (gallery_cmd->parsed()) {
      cmd_build_gallery(layout, out);
    } else if (deid_cmd->parsed()) {
      cmd_deidentify(cfg, layout, o.threads, out, err);
    } else if (eval_cmd->parsed()) {
      cmd_evaluate(cfg, layout, o.threads, out, err);
    } else if (report_cmd->parsed()) {
      cmd_report(layout, out);
    }
  } catch (const std::exception& e) {
    err << "deid: error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}

}  // namespace deid::cli
