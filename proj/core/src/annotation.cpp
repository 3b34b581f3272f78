#include <cstdio>
#include <fstream>
#include <sstream>

#include "deid/pipeline.hpp"

namespace deid::pipeline {

namespace {

bool box_inside(const img::BoundingBox& b, int w, int h) {
  return b.w >= 1 && b.h >= 1 && b.x >= 0 && b.y >= 0 && b.right() <= w && b.bottom() <= h;
}

}  // namespace

void validate(const FaceAnnotation& a, int frame_w, int frame_h) {
  if (!box_inside(a.tight, frame_w, frame_h)) throw AnnotationError("face annotation: tight box outside the frame");
  if (!box_inside(a.context, frame_w, frame_h)) throw AnnotationError("face annotation: context box outside the frame");
  for (const auto& p : a.landmarks)
    if (!(p.x >= 0.0 && p.y >= 0.0 && p.x <= frame_w - 1.0 && p.y <= frame_h - 1.0))
      throw AnnotationError("face annotation: landmark outside the frame");
}

FaceAnnotation annotation_of(const synth::FaceSample& s, std::optional<int> track) {
  return {s.tight, s.context, s.landmarks, track};
}

std::filesystem::path sidecar_path(const std::filesystem::path& frame) {
  auto p = frame;
  p += ".faces";
  return p;
}

void write_annotation(const std::filesystem::path& path, const FrameAnnotation& faces) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write annotation " + path.string());
  out << "# tight(x y w h) context(x y w h) landmarks(10) [track]\n";
  char buf[64];
  for (const auto& f : faces) {
    for (const auto* b : {&f.tight, &f.context}) out << b->x << ' ' << b->y << ' ' << b->w << ' ' << b->h << ' ';
    for (const auto& p : f.landmarks) {
      std::snprintf(buf, sizeof buf, "%.17g %.17g", p.x, p.y);
      out << buf << (&p == &f.landmarks.back() ? "" : " ");
    }
    if (f.track) out << ' ' << *f.track;
    out << '\n';
  }
  if (!out) throw IoError("short write to annotation " + path.string());
}

FrameAnnotation read_annotation(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw AnnotationError("cannot open annotation " + path.string());
  FrameAnnotation faces;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    std::istringstream ls(line);
    std::vector<std::string> tok;
    for (std::string t; ls >> t;) tok.push_back(t);
    if (tok.empty()) continue;
    const std::string where = path.string() + ":" + std::to_string(lineno);
    if (tok.size() != 18 && tok.size() != 19)
      throw AnnotationError(where + ": expected 18 or 19 fields, got " + std::to_string(tok.size()));
    auto as_int = [&](const std::string& s) {
      std::size_t used = 0;
      int v = 0;
      try {
        v = std::stoi(s, &used);
      } catch (const std::logic_error&) {
        used = 0;
      }
      if (used != s.size() || s.empty()) throw AnnotationError(where + ": bad integer '" + s + "'");
      return v;
    };
    auto as_real = [&](const std::string& s) {
      std::size_t used = 0;
      double v = 0;
      try {
        v = std::stod(s, &used);
      } catch (const std::logic_error&) {
        used = 0;
      }
      if (used != s.size() || s.empty()) throw AnnotationError(where + ": bad number '" + s + "'");
      return v;
    };
    FaceAnnotation f;
    f.tight = {as_int(tok[0]), as_int(tok[1]), as_int(tok[2]), as_int(tok[3])};
    f.context = {as_int(tok[4]), as_int(tok[5]), as_int(tok[6]), as_int(tok[7])};
    for (int i = 0; i < 5; ++i) f.landmarks[i] = {as_real(tok[8 + 2 * i]), as_real(tok[9 + 2 * i])};
    if (tok.size() == 19) f.track = as_int(tok[18]);
    faces.push_back(f);
  }
  return faces;
}

}  // namespace deid::pipeline
