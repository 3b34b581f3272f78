#include <cstdio>
#include <fstream>
#include <sstream>

#include "deid/eval.hpp"
#include "json.hpp"

namespace deid::eval {

namespace {

using nlohmann::json;

std::ofstream open_out(const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  return out;
}

void finish(std::ofstream& out, const std::filesystem::path& path) {
  out.flush();
  if (!out) throw IoError("short write to " + path.string());
}

std::string cell_name(const ExperimentResult& r) { return r.spec.name() + "_" + to_string(r.spec.context); }

json stat(double mean, double std) { return {{"mean", mean}, {"std", std}}; }

std::string fmt(double v, const char* f = "%.6g") {
  char buf[48];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

void write_svg(const std::vector<ExperimentResult>& results, const std::filesystem::path& path) {
  constexpr int kSize = 420, kPad = 50;
  static const char* kColors[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#e377c2",
                                  "#7f7f7f"};
  auto out = open_out(path);
  const int w = kSize + 2 * kPad + 220, h = kSize + 2 * kPad;
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << w << "\" height=\"" << h << "\">\n";
  out << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  out << "<rect x=\"" << kPad << "\" y=\"" << kPad << "\" width=\"" << kSize << "\" height=\"" << kSize
      << "\" fill=\"none\" stroke=\"black\"/>\n";
  out << "<line x1=\"" << kPad << "\" y1=\"" << kPad + kSize << "\" x2=\"" << kPad + kSize << "\" y2=\"" << kPad
      << "\" stroke=\"#bbb\" stroke-dasharray=\"4 4\"/>\n";
  out << "<text x=\"" << kPad + kSize / 2 << "\" y=\"" << h - 12 << "\" text-anchor=\"middle\" font-size=\"13\">FAR</text>\n";
  out << "<text x=\"14\" y=\"" << kPad + kSize / 2 << "\" font-size=\"13\" transform=\"rotate(-90 14 "
      << kPad + kSize / 2 << ")\" text-anchor=\"middle\">VER</text>\n";
  for (std::size_t i = 0; i < results.size(); ++i) {
    const auto& r = results[i];
    if (r.folds.empty()) continue;
    const char* color = kColors[i % std::size(kColors)];
    const char* dash = r.spec.context == ContextMode::context ? "" : " stroke-dasharray=\"6 3\"";
    out << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"1.5\"" << dash << " points=\"";
    for (const auto& p : r.folds.front().roc)
      out << fmt(kPad + p.far * kSize, "%.2f") << ',' << fmt(kPad + (1.0 - p.ver) * kSize, "%.2f") << ' ';
    out << "\"/>\n";
    const int ly = kPad + 14 + static_cast<int>(i) * 16;
    out << "<line x1=\"" << kPad + kSize + 12 << "\" y1=\"" << ly - 4 << "\" x2=\"" << kPad + kSize + 32 << "\" y2=\""
        << ly - 4 << "\" stroke=\"" << color << "\"" << dash << "/>\n";
    out << "<text x=\"" << kPad + kSize + 36 << "\" y=\"" << ly << "\" font-size=\"11\">" << cell_name(r)
        << "</text>\n";
  }
  out << "</svg>\n";
  finish(out, path);
}

}  // namespace

void write_report(const std::vector<ExperimentResult>& results, const std::filesystem::path& dir,
                  const ReportOptions& options) {
  if (results.empty()) throw InvalidArgument("write_report: no results");
  std::error_code ec;
  std::filesystem::create_directories(dir / "roc", ec);
  if (ec) throw IoError("cannot create report directory " + dir.string() + ": " + ec.message());

  json doc;
  doc["format"] = "deid-metrics";
  doc["version"] = 1;
  json& cells = doc["experiments"] = json::array();
  for (const auto& r : results) {
    json folds = json::array();
    for (std::size_t f = 0; f < r.folds.size(); ++f)
      folds.push_back({{"fold", f}, {"eer", r.folds[f].eer}, {"ver1", r.folds[f].ver1}, {"auc", r.folds[f].auc}});
    const auto& m = r.metrics;
    cells.push_back({{"experiment", r.spec.name()},
                     {"probe", to_string(r.spec.probe)},
                     {"reference", to_string(r.spec.reference)},
                     {"parrot", r.spec.parrot},
                     {"context", to_string(r.spec.context)},
                     {"seed", r.spec.seed},
                     {"legit_pairs", r.spec.legit_pairs},
                     {"impostor_pairs", r.spec.impostor_pairs},
                     {"folds", folds},
                     {"summary",
                      {{"eer", stat(m.eer_mean, m.eer_std)},
                       {"ver1", stat(m.ver1_mean, m.ver1_std)},
                       {"auc", stat(m.auc_mean, m.auc_std)}}}});

    for (std::size_t f = 0; f < r.folds.size(); ++f) {
      const auto path = dir / "roc" / (cell_name(r) + "_fold" + std::to_string(f) + ".csv");
      auto out = open_out(path);
      out << "far,ver\n";
      for (const auto& p : r.folds[f].roc) out << fmt(p.far, "%.17g") << ',' << fmt(p.ver, "%.17g") << '\n';
      finish(out, path);
    }
  }
  {
    const auto path = dir / "metrics.json";
    auto out = open_out(path);
    out << doc.dump(2) << '\n';
    finish(out, path);
  }
  {
    const auto path = dir / "auc_folds.csv";
    auto out = open_out(path);
    out << "experiment,context,fold,auc\n";
    for (const auto& r : results)
      for (std::size_t f = 0; f < r.folds.size(); ++f)
        out << r.spec.name() << ',' << to_string(r.spec.context) << ',' << f << ',' << fmt(r.folds[f].auc, "%.17g")
            << '\n';
    finish(out, path);
  }
  if (options.roc_plot) write_svg(results, dir / "roc.svg");
}

std::vector<MetricsRecord> read_metrics(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  std::vector<MetricsRecord> out;
  try {
    const json doc = json::parse(in);
    if (doc.value("format", "") != "deid-metrics") throw DecodeError(path.string() + ": not a metrics file");
    for (const auto& c : doc.at("experiments")) {
      MetricsRecord r;
      r.experiment = c.at("experiment").get<std::string>();
      r.context = c.at("context").get<std::string>();
      r.legit_pairs = c.at("legit_pairs").get<int>();
      r.impostor_pairs = c.at("impostor_pairs").get<int>();
      for (const auto& f : c.at("folds")) {
        r.metrics.eer.push_back(f.at("eer").get<double>());
        r.metrics.ver1.push_back(f.at("ver1").get<double>());
        r.metrics.auc.push_back(f.at("auc").get<double>());
      }
      const auto& s = c.at("summary");
      r.metrics.eer_mean = s.at("eer").at("mean").get<double>();
      r.metrics.eer_std = s.at("eer").at("std").get<double>();
      r.metrics.ver1_mean = s.at("ver1").at("mean").get<double>();
      r.metrics.ver1_std = s.at("ver1").at("std").get<double>();
      r.metrics.auc_mean = s.at("auc").at("mean").get<double>();
      r.metrics.auc_std = s.at("auc").at("std").get<double>();
      out.push_back(std::move(r));
    }
  } catch (const json::exception& e) {
    throw DecodeError(path.string() + ": " + e.what());
  }
  return out;
}

std::string format_table(const std::vector<MetricsRecord>& records) {
  std::vector<std::string> experiments, contexts;
  for (const auto& r : records) {
    if (std::find(experiments.begin(), experiments.end(), r.experiment) == experiments.end())
      experiments.push_back(r.experiment);
    if (std::find(contexts.begin(), contexts.end(), r.context) == contexts.end()) contexts.push_back(r.context);
  }
  auto pct = [](double m, double s) { return fmt(100 * m, "%.1f") + " +- " + fmt(100 * s, "%.1f"); };
  auto dec = [](double m, double s) { return fmt(m, "%.3f") + " +- " + fmt(s, "%.3f"); };
  std::ostringstream os;
  os << "| experiment |";
  for (const auto& c : contexts) os << " EER % (" << c << ") | VER-1 % (" << c << ") | AUC (" << c << ") |";
  os << "\n|---|";
  for (std::size_t i = 0; i < contexts.size(); ++i) os << "---|---|---|";
  os << '\n';
  for (const auto& e : experiments) {
    os << "| " << e << " |";
    for (const auto& c : contexts) {
      const auto it = std::find_if(records.begin(), records.end(),
                                   [&](const MetricsRecord& r) { return r.experiment == e && r.context == c; });
      if (it == records.end()) {
        os << " - | - | - |";
        continue;
      }
      const auto& m = it->metrics;
      os << ' ' << pct(m.eer_mean, m.eer_std) << " | " << pct(m.ver1_mean, m.ver1_std) << " | "
         << dec(m.auc_mean, m.auc_std) << " |";
    }
    os << '\n';
  }
  return os.str();
}

}  // namespace deid::eval
