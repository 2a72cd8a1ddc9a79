#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "xva/classifier.hpp"
#include "xva/dataset.hpp"

namespace xva {

enum class SynthTask { kMarginal, kCrossView };

SynthTask parse_synth_task(const std::string& name);
std::string synth_task_name(SynthTask task);

/// Synthetic multi-view feature sequences with planted motifs.
///
/// Marginal: view 0 carries one motif whose type (A or B) is the class;
/// the remaining views are background only.
/// Cross-view: each of the two views carries one motif of type A or B, in
/// opposite halves of the sequence (order seeded, at least `min_gap`
/// frames apart). Class 1 iff both types agree. Each class is split evenly
/// between its two type combinations, so either view alone is
/// uninformative.
struct SynthSpec {
  SynthTask task = SynthTask::kMarginal;
  std::size_t n_per_class = 40;
  std::size_t t_min = 40;
  std::size_t t_max = 80;
  std::size_t motif_length = 8;
  std::size_t min_gap = 3;
  std::size_t nz = 32;
  std::size_t views = 2;  // marginal only; cross-view always uses 2
  std::size_t subjects = 10;
  double noise = 1.0;        // background std
  double amplitude = 2.0;    // motif scale
  std::uint64_t seed = 0;
};

struct SynthTrial {
  MultiViewSample<float> sample;
  std::vector<MotifWindow> motifs;
  std::vector<int> motif_types;  // per motif, 0 = A, 1 = B
};

/// Throws ConfigError for inconsistent specs (e.g. motif longer than fits).
std::vector<SynthTrial> synth_features(const SynthSpec& spec);

/// Structured RGB test images (smooth gradients plus random rectangles and
/// discs), 3 x height x width in [-1, 1].
std::vector<Tensor> synth_frames(std::size_t count, std::size_t height, std::size_t width,
                                 std::uint64_t seed);

struct SynthOutput {
  bool write_frames = false;
  std::size_t frame_size = 32;
};

/// Writes feature files (features/<trial>.xvaf), optional PPM frame
/// directories (frames/<trial>/<view>/NNNNN.ppm, frame content keyed to the
/// planted motif) and manifest.json under `dir`. Labels map to cohort and
/// outcome alike (class 1 = novice / failure).
Manifest synth_generate(const SynthSpec& spec, const std::filesystem::path& dir,
                        const SynthOutput& output = {});

}  // namespace xva
