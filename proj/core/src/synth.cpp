#include "xva/synth.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include "xva/error.hpp"
#include "xva/io.hpp"
#include "xva/preprocess.hpp"
#include "xva/rng.hpp"

namespace fs = std::filesystem;

namespace xva {

SynthTask parse_synth_task(const std::string& name) {
  if (name == "marginal") return SynthTask::kMarginal;
  if (name == "cross-view") return SynthTask::kCrossView;
  throw ConfigError("unknown synthetic task '" + name + "' (expected marginal or cross-view)");
}

std::string synth_task_name(SynthTask task) {
  return task == SynthTask::kMarginal ? "marginal" : "cross-view";
}

namespace {

void check_spec(const SynthSpec& s) {
  if (s.n_per_class == 0) throw ConfigError("synth: n_per_class must be positive");
  if (s.t_min == 0 || s.t_min > s.t_max) throw ConfigError("synth: need 0 < t_min <= t_max");
  if (s.nz == 0 || s.motif_length == 0) throw ConfigError("synth: nz and motif length must be positive");
  if (s.subjects == 0) throw ConfigError("synth: subjects must be positive");
  if (s.noise < 0 || s.amplitude <= 0) throw ConfigError("synth: bad noise or amplitude");
  if (s.task == SynthTask::kMarginal) {
    if (s.views == 0 || s.views > 4) throw ConfigError("synth: views must be 1..4");
    if (s.motif_length > s.t_min) throw ConfigError("synth: motif longer than the shortest sequence");
  } else {
    // Two windows, one per half, separated by at least min_gap frames.
    if (2 * s.motif_length + s.min_gap > s.t_min) {
      throw ConfigError("synth: two motifs plus gap do not fit in the shortest sequence");
    }
  }
}

Tensor motif_pattern(Rng& rng, std::size_t len, std::size_t nz, double amplitude) {
  Tensor p({len, nz});
  for (auto& v : p.data()) {
    v = static_cast<float>((rng.uniform() < 0.5 ? -1.0 : 1.0) * amplitude);
  }
  return p;
}

Tensor background(Rng& rng, std::size_t len, std::size_t nz, double sigma) {
  Tensor x({len, nz});
  for (auto& v : x.data()) v = static_cast<float>(rng.gaussian(0.0, sigma));
  return x;
}

void plant(Tensor& x, const Tensor& pattern, std::size_t begin) {
  const std::size_t nz = x.dim(1);
  for (std::size_t i = 0; i < pattern.dim(0); ++i) {
    for (std::size_t k = 0; k < nz; ++k) x[(begin + i) * nz + k] += pattern[i * nz + k];
  }
}

std::size_t uniform_in(Rng& rng, std::size_t lo, std::size_t hi) {  // inclusive
  return lo + static_cast<std::size_t>(rng.uniform_int(hi - lo + 1));
}

}  // namespace

std::vector<SynthTrial> synth_features(const SynthSpec& spec) {
  check_spec(spec);
  Rng master(spec.seed);
  Rng pattern_rng = master.split();
  const Tensor patterns[2] = {
      motif_pattern(pattern_rng, spec.motif_length, spec.nz, spec.amplitude),
      motif_pattern(pattern_rng, spec.motif_length, spec.nz, spec.amplitude)};

  // (label, first motif type) for every trial, then a seeded shuffle so
  // trial order carries no class information.
  std::vector<std::pair<int, int>> plan;
  for (int label = 0; label < 2; ++label) {
    for (std::size_t i = 0; i < spec.n_per_class; ++i) {
      plan.emplace_back(label, static_cast<int>(i % 2));
    }
  }
  master.shuffle(std::span<std::pair<int, int>>(plan));

  const std::size_t n_views = spec.task == SynthTask::kMarginal ? spec.views : 2;
  const std::size_t len = spec.motif_length;
  std::vector<SynthTrial> trials;
  for (std::size_t idx = 0; idx < plan.size(); ++idx) {
    const auto [label, first_type] = plan[idx];
    Rng rng = master.split();
    SynthTrial trial;
    auto& s = trial.sample;
    char id[32];
    std::snprintf(id, sizeof id, "trial_%04zu", idx);
    s.trial_id = id;
    std::snprintf(id, sizeof id, "subject_%02zu", idx % spec.subjects);
    s.subject_id = id;
    s.label = label;
    const std::size_t T = uniform_in(rng, spec.t_min, spec.t_max);
    for (std::size_t v = 0; v < n_views; ++v) {
      s.views.push_back({static_cast<ViewId>(v), background(rng, T, spec.nz, spec.noise)});
    }

    if (spec.task == SynthTask::kMarginal) {
      const std::size_t begin = uniform_in(rng, 0, T - len);
      plant(s.views[0].features, patterns[label], begin);
      trial.motifs.push_back({ViewId::kLeft, begin, begin + len});
      trial.motif_types.push_back(label);
    } else {
      const int types[2] = {first_type, label == 1 ? first_type : 1 - first_type};
      // First half ends before the gap; second half starts after it.
      const std::size_t half = (T - spec.min_gap) / 2;
      const std::size_t early = uniform_in(rng, 0, half - len);
      const std::size_t late = uniform_in(rng, half + spec.min_gap, T - len);
      const bool swap = rng.uniform() < 0.5;
      const std::size_t begins[2] = {swap ? late : early, swap ? early : late};
      for (std::size_t v = 0; v < 2; ++v) {
        plant(s.views[v].features, patterns[types[v]], begins[v]);
        trial.motifs.push_back({static_cast<ViewId>(v), begins[v], begins[v] + len});
        trial.motif_types.push_back(types[v]);
      }
    }
    trials.push_back(std::move(trial));
  }
  return trials;
}

namespace {

struct Shape2 {
  bool disc;
  double cy, cx, r;
  float color[3];
};

Tensor render(std::size_t h, std::size_t w, Rng& rng, const std::vector<Shape2>& extra) {
  Tensor img({3, h, w});
  double gy[3], gx[3], g0[3];
  for (int c = 0; c < 3; ++c) {
    g0[c] = rng.uniform(-0.6, 0.2);
    gy[c] = rng.uniform(-0.4, 0.4);
    gx[c] = rng.uniform(-0.4, 0.4);
  }
  std::vector<Shape2> shapes = extra;
  const std::size_t n_shapes = 1 + rng.uniform_int(3);
  for (std::size_t i = 0; i < n_shapes; ++i) {
    Shape2 s{rng.uniform() < 0.5, rng.uniform(), rng.uniform(), rng.uniform(0.08, 0.25), {}};
    for (auto& c : s.color) c = static_cast<float>(rng.uniform(-1.0, 1.0));
    shapes.insert(shapes.begin(), s);
  }
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < w; ++x) {
      const double fy = (static_cast<double>(y) + 0.5) / static_cast<double>(h);
      const double fx = (static_cast<double>(x) + 0.5) / static_cast<double>(w);
      float px[3];
      for (int c = 0; c < 3; ++c) px[c] = static_cast<float>(g0[c] + gy[c] * fy + gx[c] * fx);
      for (const auto& s : shapes) {
        const double dy = fy - s.cy, dx = fx - s.cx;
        const bool inside = s.disc ? dy * dy + dx * dx <= s.r * s.r
                                   : std::abs(dy) <= s.r && std::abs(dx) <= s.r;
        if (inside) std::copy(s.color, s.color + 3, px);
      }
      for (int c = 0; c < 3; ++c) img[(c * h + y) * w + x] = std::clamp(px[c], -1.0f, 1.0f);
    }
  }
  return img;
}

}  // namespace

std::vector<Tensor> synth_frames(std::size_t count, std::size_t height, std::size_t width,
                                 std::uint64_t seed) {
  if (height == 0 || width == 0) throw ConfigError("synth_frames: zero extent");
  Rng rng(seed);
  std::vector<Tensor> frames;
  for (std::size_t i = 0; i < count; ++i) frames.push_back(render(height, width, rng, {}));
  return frames;
}

Manifest synth_generate(const SynthSpec& spec, const fs::path& dir, const SynthOutput& output) {
  const auto trials = synth_features(spec);
  const fs::path root = fs::absolute(dir).lexically_normal();
  Manifest m;
  m.root = root;
  Rng frame_rng(spec.seed ^ 0xF4A3E5ULL);
  // Fixed marker shapes for the two motif types: a red square, a blue disc.
  const Shape2 markers[2] = {{false, 0.5, 0.5, 0.3, {1.0f, -1.0f, -1.0f}},
                             {true, 0.5, 0.5, 0.3, {-1.0f, -1.0f, 1.0f}}};
  for (const auto& t : trials) {
    TrialManifest tm;
    tm.trial_id = t.sample.trial_id;
    tm.subject_id = t.sample.subject_id;
    tm.cohort = t.sample.label == 1 ? Cohort::kNovice : Cohort::kExpert;
    tm.outcome = t.sample.label == 1 ? Outcome::kFailure : Outcome::kSuccess;
    tm.motifs = t.motifs;
    tm.features = root / "features" / (tm.trial_id + ".xvaf");
    io::save_features(tm.features, t.sample.views);
    for (const auto& v : t.sample.views) {
      ViewFrames vf;
      vf.view = v.view;
      vf.frame_count = v.features.dim(0);
      if (output.write_frames) {
        vf.frames_dir = root / "frames" / tm.trial_id / std::string(view_name(v.view));
        for (std::size_t f = 0; f < vf.frame_count; ++f) {
          std::vector<Shape2> extra;
          for (std::size_t k = 0; k < t.motifs.size(); ++k) {
            const auto& w = t.motifs[k];
            if (w.view == v.view && f >= w.begin && f < w.end) {
              extra.push_back(markers[t.motif_types[k]]);
            }
          }
          const auto img = render(output.frame_size, output.frame_size, frame_rng, extra);
          char name[32];
          std::snprintf(name, sizeof name, "%05zu.ppm", f);
          write_ppm(vf.frames_dir / name, tensor_to_image(img));
        }
      }
      tm.views.push_back(vf);
    }
    m.trials.push_back(std::move(tm));
  }
  save_manifest(root / "manifest.json", m);
  return m;
}

}  // namespace xva
