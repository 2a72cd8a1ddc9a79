#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "xva/classifier.hpp"
#include "xva/tensor.hpp"

namespace xva {

enum class Cohort { kExpert, kNovice };
enum class Outcome { kSuccess, kFailure };

struct ViewFrames {
  ViewId view = ViewId::kLeft;
  std::filesystem::path frames_dir;  // absolute once loaded
  std::size_t frame_count = 0;
};

/// Half-open frame range [begin, end) where class evidence was planted.
struct MotifWindow {
  ViewId view = ViewId::kLeft;
  std::size_t begin = 0;
  std::size_t end = 0;
  bool operator==(const MotifWindow&) const = default;
};

struct TrialManifest {
  std::string trial_id;
  std::string subject_id;
  Cohort cohort = Cohort::kExpert;
  Outcome outcome = Outcome::kSuccess;
  std::vector<ViewFrames> views;
  std::filesystem::path features;  // absolute once loaded; may be empty
  std::vector<MotifWindow> motifs;

  /// Positive class (1) is novice, respectively failure.
  int label(LabelTask task) const;
};

struct Manifest {
  std::filesystem::path root;  // directory holding the manifest file
  std::vector<TrialManifest> trials;
};

LabelTask parse_task(const std::string& name);
std::string task_name(LabelTask task);

/// JSON manifest; relative paths resolve against the manifest's directory.
Manifest load_manifest(const std::filesystem::path& path);
/// Paths under `manifest.root` are written relative to it.
void save_manifest(const std::filesystem::path& path, const Manifest& manifest);
std::string manifest_json(const Manifest& manifest);
Manifest parse_manifest(const std::string& text, const std::filesystem::path& root,
                        const std::string& source);

/// Sorted *.ppm files of a frame directory.
std::vector<std::filesystem::path> frame_files(const std::filesystem::path& dir);

/// Preprocessed frames per view (in manifest view order), every
/// `frame_stride`-th frame. Fails naming the offending path when a
/// directory is missing, a frame is malformed, a directory's file count
/// differs from its declared frame_count, or views disagree on length.
std::vector<std::vector<Tensor>> ingest_frames(const TrialManifest& trial, std::size_t height,
                                               std::size_t width, std::size_t frame_stride = 1);

/// Loads each trial's feature file and keeps `views` in that order (all
/// views in file order when `views` is empty).
std::vector<MultiViewSample<float>> load_samples(const Manifest& manifest, LabelTask task,
                                                 std::span<const ViewId> views = {});

}  // namespace xva
