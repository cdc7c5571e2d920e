#include "gesture/manifest.hpp"

#include <filesystem>
#include <fstream>

#include "gesture/error.hpp"

namespace fs = std::filesystem;

namespace gesture {

void ClipAnnotation::validate(int frame_width, int frame_height) const {
  const std::string where = "annotation '" + source + "'";
  if (end <= start) throw DataError(where + ": segment end must exceed start");
  if (start < 0) throw DataError(where + ": segment starts before frame 0");
  if (end > num_frames()) {
    throw DataError(where + ": segment [" + std::to_string(start) + "," + std::to_string(end) +
                    ") exceeds the " + std::to_string(num_frames()) + " boxed frames");
  }
  if (label < 0) throw DataError(where + ": negative label");
  for (std::size_t i = 0; i < boxes.size(); ++i) {
    const auto& b = boxes[i];
    const bool bad = b.x1 <= b.x0 || b.y1 <= b.y0 || b.x0 < 0 || b.y0 < 0 ||
                     (frame_width > 0 && b.x1 > frame_width) || (frame_height > 0 && b.y1 > frame_height);
    if (bad) throw DataError(where + ": invalid box at frame " + std::to_string(i));
  }
}

std::string Manifest::resolve(const ClipAnnotation& ann) const {
  fs::path p(ann.source);
  if (p.is_absolute() || root.empty()) return p.string();
  return (fs::path(root) / p).string();
}

nlohmann::json to_json(const Manifest& manifest) {
  nlohmann::json records = nlohmann::json::array();
  for (const auto& r : manifest.records) {
    nlohmann::json boxes = nlohmann::json::array();
    for (const auto& b : r.boxes) boxes.push_back({b.x0, b.y0, b.x1, b.y1});
    records.push_back({{"video", r.source},
                       {"label", r.label},
                       {"label_name", r.label_name},
                       {"start", r.start},
                       {"end", r.end},
                       {"fps", r.fps},
                       {"boxes", boxes}});
  }
  return {{"classes", manifest.class_names}, {"records", records}};
}

Manifest manifest_from_json(const nlohmann::json& doc, const std::string& root) {
  Manifest m;
  m.root = root;
  try {
    m.class_names = doc.at("classes").get<std::vector<std::string>>();
    for (const auto& r : doc.at("records")) {
      ClipAnnotation a;
      a.source = r.at("video").get<std::string>();
      a.label = r.at("label").get<int>();
      a.label_name = r.value("label_name", std::string{});
      a.start = r.at("start").get<int>();
      a.end = r.at("end").get<int>();
      a.fps = r.value("fps", 15.0);
      for (const auto& b : r.at("boxes")) {
        const auto v = b.get<std::vector<double>>();
        if (v.size() != 4) throw DataError("manifest: box needs 4 coordinates in '" + a.source + "'");
        a.boxes.push_back({v[0], v[1], v[2], v[3]});
      }
      a.validate();
      if (a.label >= static_cast<int>(m.class_names.size())) {
        throw DataError("manifest: label " + std::to_string(a.label) + " of '" + a.source +
                        "' has no class name");
      }
      m.records.push_back(std::move(a));
    }
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("malformed manifest: ") + e.what());
  }
  return m;
}

Manifest load_manifest(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open manifest '" + path + "'");
  nlohmann::json doc;
  try {
    in >> doc;
  } catch (const nlohmann::json::parse_error& e) {
    throw DataError("manifest '" + path + "' is not valid JSON: " + e.what());
  }
  return manifest_from_json(doc, fs::path(path).parent_path().string());
}

Dataset load_dataset(const std::string& manifest_path) {
  Dataset ds;
  ds.manifest = load_manifest(manifest_path);
  for (const auto& rec : ds.manifest.records) {
    auto video = load_video(ds.manifest.resolve(rec));
    if (video.size(0) != rec.num_frames()) {
      throw DataError("'" + rec.source + "' has " + std::to_string(video.size(0)) + " frames but " +
                      std::to_string(rec.num_frames()) + " boxes");
    }
    rec.validate(static_cast<int>(video.size(2)), static_cast<int>(video.size(1)));
    ds.videos.push_back(std::move(video));
  }
  return ds;
}

void save_manifest(const Manifest& manifest, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write manifest '" + path + "'");
  out << to_json(manifest).dump(1) << '\n';
}

}  // namespace gesture
