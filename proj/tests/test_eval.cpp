#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include "deid/eval.hpp"
#include "deid/workflow.hpp"

using namespace deid;
using namespace deid::eval;

namespace {

std::filesystem::path temp_dir(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / "deid_test_eval" / name;
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

synth::Corpus small_corpus() {
  synth::CorpusSpec cs;
  cs.seed = 21;
  cs.identities = 5;
  cs.expressions = {synth::Expression::neutral, synth::Expression::happy};
  return synth::generate_corpus(cs);
}

embed::EncoderSpec tiny_encoder() {
  embed::EncoderSpec s;
  s.input_size = 16;
  s.channels = {4};
  s.embedding_dim = 8;
  s.classes = 2;
  return s;
}

}  // namespace

TEST(ExperimentSpec, NamesAndValidation) {
  ExperimentSpec s;
  EXPECT_EQ(s.name(), "original-vs-original");
  s.probe = ProbeCondition::deidentified;
  s.reference = ReferenceSplit::profile;
  EXPECT_EQ(s.name(), "deidentified-vs-profile");
  s.probe = ProbeCondition::blurred;
  s.reference = ReferenceSplit::original;
  s.parrot = true;
  EXPECT_EQ(s.name(), "blurred-parrot-vs-original");
  EXPECT_NO_THROW(s.validate());
  s.folds = 1;
  EXPECT_THROW(s.validate(), InvalidArgument);
  s.folds = 2;
  s.impostor_pairs = 0;
  EXPECT_THROW(s.validate(), InvalidArgument);
  for (auto c : {ProbeCondition::original, ProbeCondition::deidentified, ProbeCondition::pixelated,
                 ProbeCondition::blurred})
    EXPECT_EQ(parse_probe_condition(to_string(c)), c);
  EXPECT_EQ(parse_context_mode("nocontext"), ContextMode::nocontext);
  EXPECT_EQ(parse_reference_split("profile"), ReferenceSplit::profile);
  EXPECT_THROW(parse_probe_condition("masked"), InvalidArgument);
}

TEST(FoldPairs, AvailableCountsMatchEnumeration) {
  const synth::Corpus c = small_corpus();
  // Same split: 5 identities x 4 frontal samples each.
  const PairCounts same = available_pairs(c.samples, c.frontal, c.frontal);
  EXPECT_EQ(same.legit, 5 * 6);
  EXPECT_EQ(same.impostor, 20 * 19 / 2 - 30);
  const PairCounts cross = available_pairs(c.samples, c.frontal, c.profile);
  EXPECT_EQ(cross.legit, 5 * 4 * 4);
  EXPECT_EQ(cross.impostor, 20 * 20 - 80);
}

TEST(FoldPairs, CountsIdentitiesAndDeterminism) {
  const synth::Corpus c = small_corpus();
  ExperimentSpec spec;
  spec.legit_pairs = 25;
  spec.impostor_pairs = 60;
  spec.seed = 5;
  for (bool cross : {false, true}) {
    const auto& ref = cross ? c.profile : c.frontal;
    const std::set<int> probe_set(c.frontal.begin(), c.frontal.end()), ref_set(ref.begin(), ref.end());
    for (int fold = 0; fold < spec.folds; ++fold) {
      const FoldPairs p = sample_fold_pairs(c.samples, c.frontal, ref, spec, fold);
      ASSERT_EQ(p.legit.size(), 25u);
      ASSERT_EQ(p.impostor.size(), 60u);
      std::set<std::pair<int, int>> seen;
      for (const auto* list : {&p.legit, &p.impostor})
        for (const Pair& q : *list) {
          EXPECT_TRUE(probe_set.count(q.probe));
          EXPECT_TRUE(ref_set.count(q.reference));
          EXPECT_NE(q.probe, q.reference);
          const auto key = cross ? std::pair{q.probe, q.reference}
                                 : std::pair{std::min(q.probe, q.reference), std::max(q.probe, q.reference)};
          EXPECT_TRUE(seen.insert(key).second) << "duplicate pair";
        }
      for (const Pair& q : p.legit) EXPECT_EQ(c.samples[q.probe].identity, c.samples[q.reference].identity);
      for (const Pair& q : p.impostor) EXPECT_NE(c.samples[q.probe].identity, c.samples[q.reference].identity);
      const FoldPairs again = sample_fold_pairs(c.samples, c.frontal, ref, spec, fold);
      EXPECT_EQ(again.legit, p.legit);
      EXPECT_EQ(again.impostor, p.impostor);
    }
    EXPECT_NE(sample_fold_pairs(c.samples, c.frontal, ref, spec, 0).legit,
              sample_fold_pairs(c.samples, c.frontal, ref, spec, 1).legit);
  }
  EXPECT_THROW(sample_fold_pairs(c.samples, c.frontal, c.frontal, spec, spec.folds), InvalidArgument);
}

TEST(FoldPairs, ShortfallIsNamed) {
  const synth::Corpus c = small_corpus();
  ExperimentSpec spec;
  spec.legit_pairs = 31;
  try {
    sample_fold_pairs(c.samples, c.frontal, c.frontal, spec, 0);
    FAIL();
  } catch (const InsufficientDataError& e) {
    EXPECT_NE(std::string(e.what()).find("31 legit"), std::string::npos) << e.what();
    EXPECT_NE(std::string(e.what()).find("offers 30"), std::string::npos) << e.what();
  }
  const ExperimentSpec fitted = fit_pair_counts(ExperimentSpec{}, {30, 160});
  EXPECT_EQ(fitted.legit_pairs, 30);
  EXPECT_EQ(fitted.impostor_pairs, 30);
  ExperimentSpec uneven;
  uneven.legit_pairs = 10;
  uneven.impostor_pairs = 500;
  const ExperimentSpec f2 = fit_pair_counts(uneven, {30, 160});
  EXPECT_EQ(f2.legit_pairs, 10);
  EXPECT_EQ(f2.impostor_pairs, 160);
  EXPECT_THROW(fit_pair_counts(ExperimentSpec{}, {0, 10}), InsufficientDataError);
}

TEST(Crops, NoContextIsStrictlyInside) {
  for (int w : {40, 84, 100}) {
    const img::BoundingBox ctx{6, 7, w, w + 3};
    EXPECT_EQ(crop_box(ctx, ContextMode::context), ctx);
    const img::BoundingBox in = crop_box(ctx, ContextMode::nocontext);
    EXPECT_TRUE(ctx.contains(in));
    EXPECT_GT(in.x, ctx.x);
    EXPECT_GT(in.y, ctx.y);
    EXPECT_LT(in.right(), ctx.right());
    EXPECT_LT(in.bottom(), ctx.bottom());
  }
}

TEST(Naive, ParametersAndLocality) {
  const NaiveTransform p = naive_for_face(NaiveKind::pixelate, {0, 0, 56, 56});
  EXPECT_EQ(p.block, 7);
  EXPECT_EQ(naive_for_face(NaiveKind::pixelate, {0, 0, 57, 57}).block, 8);
  EXPECT_DOUBLE_EQ(naive_for_face(NaiveKind::blur, {0, 0, 56, 56}).sigma, 3.5);

  const synth::FaceSample s =
      synth::render_face(synth::identity_params(1, 0), synth::Expression::neutral, synth::Pose::frontal, 1.0);
  EXPECT_EQ(apply_naive(s.image, s.tight, NaiveKind::none), s.image);
  for (NaiveKind k : {NaiveKind::pixelate, NaiveKind::blur}) {
    const img::Image out = apply_naive(s.image, s.tight, k);
    EXPECT_NE(out, s.image);
    for (int y = 0; y < out.height(); ++y)
      for (int x = 0; x < out.width(); ++x) {
        const bool inside = x >= s.tight.x && x < s.tight.right() && y >= s.tight.y && y < s.tight.bottom();
        if (inside) continue;
        for (int c = 0; c < 3; ++c) ASSERT_EQ(out.at(x, y, c), s.image.at(x, y, c));
      }
  }
}

TEST(Naive, ParrotTransform) {
  const synth::Corpus c = small_corpus();
  std::vector<img::Image> refs;
  std::vector<img::BoundingBox> boxes;
  for (int i = 0; i < 4; ++i) {
    refs.push_back(c.samples[i].image);
    boxes.push_back(c.samples[i].tight);
  }
  EXPECT_EQ(parrot_transform(refs, boxes, NaiveKind::none), refs);
  const auto blurred = parrot_transform(refs, boxes, NaiveKind::blur);
  for (int i = 0; i < 4; ++i) EXPECT_EQ(blurred[i], apply_naive(refs[i], boxes[i], NaiveKind::blur));
  boxes.pop_back();
  EXPECT_THROW(parrot_transform(refs, boxes, NaiveKind::blur), InvalidArgument);
}

TEST(Scoring, IdenticalImagesScoreOne) {
  const synth::Corpus c = small_corpus();
  const embed::Encoder enc(tiny_encoder(), 2);
  std::vector<img::Image> frames;
  for (const auto& s : c.samples) frames.push_back(s.image);
  ExperimentSpec spec;
  spec.legit_pairs = 10;
  spec.impostor_pairs = 10;
  FoldPairs pairs = sample_fold_pairs(c.samples, c.frontal, c.frontal, spec, 0);
  pairs.legit.push_back({c.frontal[0], c.frontal[0]});
  for (ContextMode mode : {ContextMode::context, ContextMode::nocontext}) {
    const ScoreSet s = score_pairs(enc, pairs, frames, frames, c.samples, mode);
    ASSERT_EQ(s.legit.size(), 11u);
    EXPECT_NEAR(s.legit.back(), 1.0, 1e-12);
    for (const auto* v : {&s.legit, &s.impostor})
      for (double x : *v) EXPECT_TRUE(std::isfinite(x) && x >= -1.0 && x <= 1.0);
  }
  frames.resize(2);
  EXPECT_THROW(score_pairs(enc, pairs, frames, frames, c.samples, ContextMode::context), InvalidArgument);
}

TEST(RunExperiment, SummaryAndDeterminism) {
  const EvalData data = EvalData::from_corpus(small_corpus());
  const embed::Encoder enc(tiny_encoder(), 3);
  ExperimentSpec spec;
  spec.folds = 4;
  spec.legit_pairs = 12;
  spec.impostor_pairs = 12;
  spec.seed = 9;
  const ExperimentResult a = run_experiment(spec, data, enc, std::nullopt, {});
  const ExperimentResult b = run_experiment(spec, data, enc, std::nullopt, {}, 3);
  ASSERT_EQ(a.folds.size(), 4u);
  for (int f = 0; f < 4; ++f) {
    EXPECT_EQ(a.folds[f].eer, b.folds[f].eer);
    EXPECT_EQ(a.folds[f].auc, b.folds[f].auc);
    EXPECT_EQ(a.folds[f].roc, b.folds[f].roc);
  }
  double eer = 0, auc = 0, ver = 0;
  for (const auto& f : a.folds) {
    eer += f.eer / 4;
    auc += f.auc / 4;
    ver += f.ver1 / 4;
  }
  EXPECT_NEAR(a.metrics.eer_mean, eer, 1e-12);
  EXPECT_NEAR(a.metrics.auc_mean, auc, 1e-12);
  EXPECT_NEAR(a.metrics.ver1_mean, ver, 1e-12);
  EXPECT_EQ(a.metrics.eer.size(), 4u);

  spec.probe = ProbeCondition::deidentified;
  EXPECT_THROW(run_experiment(spec, data, enc, std::nullopt, {}), InvalidArgument);
}

TEST(RunExperiment, ExhaustedPoolGivesIdenticalFolds) {
  // Requesting every available pair makes each fold score the same set.
  const EvalData data = EvalData::from_corpus(small_corpus());
  const embed::Encoder enc(tiny_encoder(), 4);
  ExperimentSpec spec;
  spec.folds = 3;
  spec.legit_pairs = 30;
  spec.impostor_pairs = 160;
  const ExperimentResult r = run_experiment(spec, data, enc, std::nullopt, {});
  EXPECT_EQ(r.metrics.eer_std, 0.0);
  EXPECT_EQ(r.metrics.auc_std, 0.0);
  EXPECT_EQ(r.metrics.ver1_std, 0.0);
}

TEST(RunExperiment, NaiveAndParrotConditions) {
  const EvalData data = EvalData::from_corpus(small_corpus());
  const embed::Encoder enc(tiny_encoder(), 5);
  Evaluator ev(data, enc, std::nullopt, {});
  const int i = data.frontal[0];
  EXPECT_EQ(ev.frame(ProbeCondition::original, i), data.samples[i].image);
  EXPECT_EQ(ev.frame(ProbeCondition::blurred, i), apply_naive(data.samples[i].image, data.samples[i].tight, NaiveKind::blur));
  ExperimentSpec spec;
  spec.folds = 2;
  spec.legit_pairs = 10;
  spec.impostor_pairs = 10;
  spec.probe = ProbeCondition::pixelated;
  const ExperimentResult plain = ev.run(spec);
  spec.parrot = true;
  const ExperimentResult parrot = ev.run(spec);
  EXPECT_EQ(parrot.spec.name(), "pixelated-parrot-vs-original");
  // Same pairs, different reference images.
  EXPECT_NE(plain.folds[0].roc, parrot.folds[0].roc);
}

TEST(Report, RoundTripMonotoneFilesAndGrid) {
  config::RunConfig cfg;
  cfg.evaluation.folds = 2;
  cfg.evaluation.legit_pairs = 8;
  cfg.evaluation.impostor_pairs = 8;
  cfg.evaluation.experiments.erase(
      std::remove_if(cfg.evaluation.experiments.begin(), cfg.evaluation.experiments.end(),
                     [](const config::ExperimentEntry& e) { return e.probe == ProbeCondition::deidentified; }),
      cfg.evaluation.experiments.end());
  ASSERT_FALSE(cfg.evaluation.experiments.empty());
  const EvalData data = EvalData::from_corpus(small_corpus());
  const embed::Encoder enc(tiny_encoder(), 6);
  const auto results = workflow::run_evaluation(cfg, data, enc, std::nullopt);
  const auto grid = workflow::experiment_grid(cfg);
  ASSERT_EQ(results.size(), grid.size());
  ASSERT_EQ(results.size(), cfg.evaluation.experiments.size() * cfg.evaluation.contexts.size());

  const auto dir = temp_dir("report");
  write_report(results, dir);
  const auto records = read_metrics(dir / "metrics.json");
  ASSERT_EQ(records.size(), results.size());
  std::set<std::pair<std::string, std::string>> cells;
  for (std::size_t i = 0; i < records.size(); ++i) {
    EXPECT_EQ(records[i].experiment, results[i].spec.name());
    EXPECT_EQ(records[i].context, to_string(results[i].spec.context));
    EXPECT_EQ(records[i].metrics.eer, results[i].metrics.eer);
    EXPECT_EQ(records[i].metrics.auc, results[i].metrics.auc);
    EXPECT_EQ(records[i].metrics.ver1, results[i].metrics.ver1);
    EXPECT_EQ(records[i].metrics.eer_mean, results[i].metrics.eer_mean);
    EXPECT_EQ(records[i].metrics.auc_std, results[i].metrics.auc_std);
    EXPECT_EQ(records[i].legit_pairs, results[i].spec.legit_pairs);
    cells.insert({records[i].experiment, records[i].context});
    for (int f = 0; f < 2; ++f) {
      std::ifstream in(dir / "roc" / (records[i].experiment + "_" + records[i].context + "_fold" + std::to_string(f) + ".csv"));
      ASSERT_TRUE(in) << records[i].experiment;
      std::string line;
      std::getline(in, line);
      EXPECT_EQ(line, "far,ver");
      double prev = -1;
      int rows = 0;
      while (std::getline(in, line)) {
        const double far = std::stod(line.substr(0, line.find(',')));
        EXPECT_GE(far, prev);
        prev = far;
        ++rows;
      }
      EXPECT_EQ(rows, static_cast<int>(results[i].folds[f].roc.size()));
    }
  }
  EXPECT_EQ(cells.size(), results.size());
  EXPECT_TRUE(std::filesystem::exists(dir / "auc_folds.csv"));
  EXPECT_TRUE(std::filesystem::exists(dir / "roc.svg"));
  const std::string table = format_table(records);
  for (const auto& r : records) EXPECT_NE(table.find(r.experiment), std::string::npos);

  std::ofstream(dir / "blocker") << "x";
  EXPECT_THROW(write_report(results, dir / "blocker" / "sub"), IoError);
}
