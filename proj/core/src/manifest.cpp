#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <map>
#include <sstream>

#include "deid/synthface.hpp"

namespace deid::synth {

namespace {

constexpr int kColumns = 23;

std::string fmt_real(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::string field;
  std::istringstream in(line);
  while (std::getline(in, field, ',')) out.push_back(field);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

double parse_real(const std::string& s, const std::string& where) {
  char* end = nullptr;
  const double v = std::strtod(s.c_str(), &end);
  if (s.empty() || end != s.c_str() + s.size()) throw ManifestError(where + ": bad number '" + s + "'");
  return v;
}

int parse_int(const std::string& s, const std::string& where) {
  char* end = nullptr;
  const long v = std::strtol(s.c_str(), &end, 10);
  if (s.empty() || end != s.c_str() + s.size()) throw ManifestError(where + ": bad integer '" + s + "'");
  return static_cast<int>(v);
}

}  // namespace

std::string manifest_header() {
  return "image,identity,expression,pose,illumination,"
         "left_eye_x,left_eye_y,right_eye_x,right_eye_y,nose_x,nose_y,"
         "mouth_left_x,mouth_left_y,mouth_right_x,mouth_right_y,"
         "tight_x,tight_y,tight_w,tight_h,context_x,context_y,context_w,context_h";
}

ManifestRecord to_record(const FaceSample& s, const std::string& image_path) {
  return {image_path, s.identity, s.expression, s.pose, s.illumination, s.landmarks, s.tight, s.context};
}

void write_manifest(const std::filesystem::path& path, const std::vector<ManifestRecord>& records) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write manifest " + path.string());
  out << manifest_header() << '\n';
  for (const auto& r : records) {
    if (r.image.find_first_of(",\n") != std::string::npos || r.identity.find_first_of(",\n") != std::string::npos)
      throw ManifestError("manifest fields must not contain commas or newlines: " + r.image);
    out << r.image << ',' << r.identity << ',' << to_string(r.expression) << ',' << to_string(r.pose) << ','
        << fmt_real(r.illumination);
    for (const auto& p : r.landmarks) out << ',' << fmt_real(p.x) << ',' << fmt_real(p.y);
    for (const auto* b : {&r.tight, &r.context}) out << ',' << b->x << ',' << b->y << ',' << b->w << ',' << b->h;
    out << '\n';
  }
  if (!out) throw IoError("short write to manifest " + path.string());
}

std::vector<ManifestRecord> read_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ManifestError("cannot open manifest " + path.string());
  const auto base = path.parent_path();
  std::string line;
  if (!std::getline(in, line) || line != manifest_header())
    throw ManifestError(path.string() + ":1: missing or unexpected header line");
  std::vector<ManifestRecord> out;
  int lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    const std::string where = path.string() + ":" + std::to_string(lineno);
    const auto f = split_csv(line);
    if (static_cast<int>(f.size()) != kColumns)
      throw ManifestError(where + ": expected " + std::to_string(kColumns) + " fields, got " +
                          std::to_string(f.size()));
    ManifestRecord r;
    r.image = f[0];
    r.identity = f[1];
    try {
      r.expression = parse_expression(f[2]);
      r.pose = parse_pose(f[3]);
    } catch (const InvalidArgument& e) {
      throw ManifestError(where + ": " + e.what());
    }
    r.illumination = parse_real(f[4], where);
    for (int i = 0; i < 5; ++i) {
      r.landmarks[i].x = parse_real(f[5 + 2 * i], where);
      r.landmarks[i].y = parse_real(f[6 + 2 * i], where);
    }
    r.tight = {parse_int(f[15], where), parse_int(f[16], where), parse_int(f[17], where), parse_int(f[18], where)};
    r.context = {parse_int(f[19], where), parse_int(f[20], where), parse_int(f[21], where), parse_int(f[22], where)};
    const auto image_path = base / r.image;
    if (!std::filesystem::is_regular_file(image_path))
      throw ManifestError(where + ": image file not found: " + image_path.string());
    out.push_back(std::move(r));
  }
  return out;
}

void write_corpus(const Corpus& corpus, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir / "images");
  std::vector<ManifestRecord> all, frontal, profile;
  for (const auto& s : corpus.samples) {
    char name[128];
    std::snprintf(name, sizeof name, "images/%s_%s_%s_L%.2f.ppm", s.identity.c_str(), to_string(s.expression).c_str(),
                  to_string(s.pose).c_str(), s.illumination);
    img::save_image(s.image, dir / name);
    all.push_back(to_record(s, name));
    (s.pose == Pose::frontal ? frontal : profile).push_back(all.back());
  }
  write_manifest(dir / "all.csv", all);
  write_manifest(dir / "frontal.csv", frontal);
  write_manifest(dir / "profile.csv", profile);
}

std::vector<FaceSample> load_samples(const std::filesystem::path& manifest_path) {
  const auto records = read_manifest(manifest_path);
  const auto base = manifest_path.parent_path();
  std::map<std::string, int> index;
  std::vector<FaceSample> out;
  for (const auto& r : records) {
    FaceSample s;
    s.image = img::load_image(base / r.image);
    s.landmarks = r.landmarks;
    s.tight = r.tight;
    s.context = r.context;
    s.identity = r.identity;
    s.identity_index = index.emplace(r.identity, static_cast<int>(index.size())).first->second;
    s.expression = r.expression;
    s.pose = r.pose;
    s.illumination = r.illumination;
    out.push_back(std::move(s));
  }
  return out;
}

}  // namespace deid::synth
