#include "xva/dataset.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "xva/error.hpp"
#include "xva/io.hpp"
#include "xva/preprocess.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace xva {

int TrialManifest::label(LabelTask task) const {
  return task == LabelTask::kExpertNovice ? (cohort == Cohort::kNovice ? 1 : 0)
                                          : (outcome == Outcome::kFailure ? 1 : 0);
}

LabelTask parse_task(const std::string& name) {
  if (name == "expert-novice") return LabelTask::kExpertNovice;
  if (name == "success-failure") return LabelTask::kSuccessFailure;
  throw ConfigError("unknown task '" + name + "' (expected expert-novice or success-failure)");
}

std::string task_name(LabelTask task) {
  return task == LabelTask::kExpertNovice ? "expert-novice" : "success-failure";
}

namespace {

std::string relative_to(const fs::path& p, const fs::path& root) {
  if (p.empty()) return "";
  if (!root.empty() && p.is_absolute()) {
    const auto rel = p.lexically_relative(root);
    if (!rel.empty() && *rel.begin() != "..") return rel.generic_string();
  }
  return p.generic_string();
}

fs::path resolve(const std::string& p, const fs::path& root) {
  if (p.empty()) return {};
  fs::path path(p);
  return path.is_absolute() ? path : (root / path).lexically_normal();
}

template <typename V>
V required(const json& j, const char* key, const std::string& where) {
  if (!j.contains(key)) throw IoError(where + ": missing field '" + key + "'");
  try {
    return j.at(key).get<V>();
  } catch (const json::exception&) {
    throw IoError(where + ": field '" + key + "' has the wrong type");
  }
}

}  // namespace

std::string manifest_json(const Manifest& manifest) {
  nlohmann::ordered_json trials = nlohmann::ordered_json::array();
  for (const auto& t : manifest.trials) {
    nlohmann::ordered_json j;
    j["trial_id"] = t.trial_id;
    j["subject_id"] = t.subject_id;
    j["cohort"] = t.cohort == Cohort::kNovice ? "novice" : "expert";
    j["outcome"] = t.outcome == Outcome::kFailure ? "failure" : "success";
    nlohmann::ordered_json views = nlohmann::ordered_json::object();
    for (const auto& v : t.views) {
      views[std::string(view_name(v.view))] = {
          {"frames", relative_to(v.frames_dir, manifest.root)},
          {"frame_count", v.frame_count}};
    }
    j["views"] = views;
    j["features"] = relative_to(t.features, manifest.root);
    nlohmann::ordered_json motifs = nlohmann::ordered_json::array();
    for (const auto& m : t.motifs) {
      motifs.push_back({{"view", view_name(m.view)}, {"begin", m.begin}, {"end", m.end}});
    }
    j["motifs"] = motifs;
    trials.push_back(j);
  }
  nlohmann::ordered_json root;
  root["version"] = 1;
  root["trials"] = trials;
  return root.dump(2) + "\n";
}

Manifest parse_manifest(const std::string& text, const fs::path& root,
                        const std::string& source) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw IoError(source + ": invalid JSON (" + e.what() + ")");
  }
  if (!doc.is_object() || !doc.contains("trials") || !doc["trials"].is_array()) {
    throw IoError(source + ": manifest needs a 'trials' array");
  }
  Manifest m;
  m.root = root;
  for (const auto& j : doc["trials"]) {
    TrialManifest t;
    t.trial_id = required<std::string>(j, "trial_id", source);
    const std::string where = source + " trial " + t.trial_id;
    t.subject_id = required<std::string>(j, "subject_id", where);
    const auto cohort = required<std::string>(j, "cohort", where);
    if (cohort != "expert" && cohort != "novice") throw IoError(where + ": bad cohort");
    t.cohort = cohort == "novice" ? Cohort::kNovice : Cohort::kExpert;
    const auto outcome = required<std::string>(j, "outcome", where);
    if (outcome != "success" && outcome != "failure") throw IoError(where + ": bad outcome");
    t.outcome = outcome == "failure" ? Outcome::kFailure : Outcome::kSuccess;
    if (j.contains("views")) {
      for (const auto& [name, v] : j["views"].items()) {
        ViewFrames vf;
        vf.view = parse_view(name);
        vf.frames_dir = resolve(required<std::string>(v, "frames", where), root);
        vf.frame_count = required<std::size_t>(v, "frame_count", where);
        t.views.push_back(vf);
      }
      // JSON objects are unordered; keep views in canonical order.
      std::sort(t.views.begin(), t.views.end(),
                [](const auto& a, const auto& b) { return a.view < b.view; });
    }
    if (j.contains("features")) t.features = resolve(required<std::string>(j, "features", where), root);
    if (j.contains("motifs")) {
      for (const auto& mj : j["motifs"]) {
        MotifWindow w;
        w.view = parse_view(required<std::string>(mj, "view", where));
        w.begin = required<std::size_t>(mj, "begin", where);
        w.end = required<std::size_t>(mj, "end", where);
        t.motifs.push_back(w);
      }
    }
    m.trials.push_back(std::move(t));
  }
  return m;
}

Manifest load_manifest(const fs::path& path) {
  if (!fs::is_regular_file(path)) throw IoError("manifest not found: " + path.string());
  const auto bytes = io::read_file(path);
  const auto root = fs::absolute(path).parent_path();
  return parse_manifest(std::string(bytes.begin(), bytes.end()), root, path.string());
}

void save_manifest(const fs::path& path, const Manifest& manifest) {
  io::write_text_atomic(path, manifest_json(manifest));
}

std::vector<fs::path> frame_files(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw IoError("frame directory not found: " + dir.string());
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(dir)) {
    if (e.is_regular_file() && e.path().extension() == ".ppm") files.push_back(e.path());
  }
  std::sort(files.begin(), files.end());
  return files;
}

std::vector<std::vector<Tensor>> ingest_frames(const TrialManifest& trial, std::size_t height,
                                               std::size_t width, std::size_t frame_stride) {
  if (frame_stride == 0) throw ConfigError("frame stride must be positive");
  if (trial.views.empty()) throw IoError("trial " + trial.trial_id + " lists no views");
  std::vector<std::vector<Tensor>> out;
  for (const auto& v : trial.views) {
    if (v.frame_count != trial.views.front().frame_count) {
      throw IoError("trial " + trial.trial_id + ": synchronized views have different frame counts (" +
                    v.frames_dir.string() + ")");
    }
    const auto files = frame_files(v.frames_dir);
    if (files.size() != v.frame_count) {
      throw IoError(v.frames_dir.string() + ": holds " + std::to_string(files.size()) +
                    " frames, manifest declares " + std::to_string(v.frame_count));
    }
    std::vector<Tensor> frames;
    for (std::size_t i = 0; i < files.size(); i += frame_stride) {
      frames.push_back(preprocess_frame(read_ppm(files[i]), height, width));
    }
    out.push_back(std::move(frames));
  }
  return out;
}

std::vector<MultiViewSample<float>> load_samples(const Manifest& manifest, LabelTask task,
                                                 std::span<const ViewId> views) {
  std::vector<MultiViewSample<float>> samples;
  for (const auto& t : manifest.trials) {
    if (t.features.empty()) throw IoError("trial " + t.trial_id + " has no feature file");
    MultiViewSample<float> s;
    s.trial_id = t.trial_id;
    s.subject_id = t.subject_id;
    s.label = t.label(task);
    s.views = io::load_features(t.features);
    samples.push_back(views.empty() ? std::move(s) : select_views(s, views));
  }
  return samples;
}

}  // namespace xva
