#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "config_args.hpp"
#include "xva/autoencoder.hpp"
#include "xva/checkpoint.hpp"
#include "xva/classifier.hpp"
#include "xva/dataset.hpp"
#include "xva/error.hpp"
#include "xva/evalkit.hpp"
#include "xva/explain.hpp"
#include "xva/io.hpp"
#include "xva/pipeline.hpp"
#include "xva/preprocess.hpp"
#include "xva/synth.hpp"

namespace fs = std::filesystem;
using namespace xva;

namespace {

constexpr std::uint64_t kPerceptualSeedSalt = 0x9E3779B97F4A7C15ULL;

std::vector<ViewId> parse_views(const std::vector<std::string>& names) {
  std::vector<ViewId> out;
  for (const auto& n : names) out.push_back(parse_view(n));
  return out;
}

std::string join_views(std::span<const ViewId> views) {
  std::string s;
  for (auto v : views) {
    if (!s.empty()) s += ',';
    s += view_name(v);
  }
  return s;
}

std::vector<ViewId> split_views(const std::string& joined) {
  std::vector<ViewId> out;
  std::size_t start = 0;
  while (start <= joined.size() && !joined.empty()) {
    const auto comma = joined.find(',', start);
    out.push_back(parse_view(joined.substr(start, comma - start)));
    if (comma == std::string::npos) break;
    start = comma + 1;
  }
  return out;
}

std::optional<std::string> config_value(const Checkpoint& c, const std::string& key) {
  auto it = c.config.find(key);
  if (it == c.config.end()) return std::nullopt;
  return it->second;
}

struct Verbose {
  bool on = false;
  template <typename... A>
  void operator()(const char* fmt, A... a) const {
    if (on) std::fprintf(stderr, fmt, a...);
  }
};

// --- synth ---------------------------------------------------------------------

struct SynthArgs {
  std::string task;
  std::uint64_t seed = 0;
  std::string out;
  SynthSpec spec;
  bool frames = false;
  std::size_t frame_size = 32;
};

int run_synth(const SynthArgs& a) {
  SynthSpec spec = a.spec;
  spec.task = parse_synth_task(a.task);
  spec.seed = a.seed;
  const auto m = synth_generate(spec, a.out, {a.frames, a.frame_size});
  std::printf("wrote %zu trials to %s\n", m.trials.size(), (fs::path(a.out) / "manifest.json").c_str());
  return 0;
}

// --- train-ae ------------------------------------------------------------------

struct TrainAeArgs {
  std::string manifest, out, perceptual;
  std::uint64_t seed = 0;
  std::size_t nz = 32, input_size = 256, epochs = 100, batch_size = 128, frame_stride = 1;
  double lr = 1e-3, noise_sigma = 0.1;
  bool no_perceptual = false;
  std::vector<std::string> views;
  Verbose verbose;
};

int run_train_ae(const TrainAeArgs& a) {
  const auto manifest = load_manifest(a.manifest);
  const auto keep = parse_views(a.views);
  std::vector<Tensor> frames;
  for (const auto& trial : manifest.trials) {
    TrialManifest t = trial;
    if (!keep.empty()) {
      std::erase_if(t.views, [&](const ViewFrames& v) {
        return std::find(keep.begin(), keep.end(), v.view) == keep.end();
      });
    }
    for (auto& view : ingest_frames(t, a.input_size, a.input_size, a.frame_stride)) {
      for (auto& f : view) frames.push_back(std::move(f));
    }
  }
  if (frames.empty()) throw UsageError("no frames found in " + a.manifest);

  AEModel<float> model({a.nz, a.input_size, a.input_size});
  Rng rng(a.seed);
  model.init(rng);
  const auto phi = a.perceptual.empty()
                       ? PerceptualExtractor<float>::random(a.seed ^ kPerceptualSeedSalt)
                       : perceptual_from_checkpoint(load_checkpoint(a.perceptual));
  AETrainOptions opt;
  opt.epochs = a.epochs;
  opt.batch_size = a.batch_size;
  opt.schedule.initial = a.lr;
  opt.seed = a.seed;
  opt.use_perceptual = !a.no_perceptual;
  opt.on_epoch = [&](std::size_t e, double loss, double lr) {
    a.verbose("epoch %zu loss %.6g lr %.3g\n", e, loss, lr);
  };
  const auto result = train_ae<float>(model, phi, frames, {a.noise_sigma, a.seed + 1}, opt);
  save_checkpoint(a.out, to_checkpoint(model, {{"seed", std::to_string(a.seed)},
                                               {"epochs", std::to_string(a.epochs)},
                                               {"noise_sigma", format_real(a.noise_sigma)},
                                               {"perceptual", a.no_perceptual ? "off" : "on"}}));
  std::printf("frames,%zu\nepochs,%zu\nfirst_loss,%s\nfinal_loss,%s\n", frames.size(), a.epochs,
              format_real(result.epoch_loss.front()).c_str(),
              format_real(result.epoch_loss.back()).c_str());
  return 0;
}

// --- extract -------------------------------------------------------------------

struct ExtractArgs {
  std::string manifest, model, out;
  std::size_t frame_stride = 1;
};

int run_extract(const ExtractArgs& a) {
  auto manifest = load_manifest(a.manifest);
  const auto model = ae_from_checkpoint(load_checkpoint(a.model));
  const auto& cfg = model.config();
  const fs::path root = fs::absolute(a.out).lexically_normal();
  for (auto& trial : manifest.trials) {
    const auto frames = ingest_frames(trial, cfg.height, cfg.width, a.frame_stride);
    std::vector<ViewFeatureSequence<float>> views;
    for (std::size_t v = 0; v < trial.views.size(); ++v) {
      views.push_back({trial.views[v].view, extract_features<float>(model, frames[v])});
    }
    trial.features = root / "features" / (trial.trial_id + ".xvaf");
    io::save_features(trial.features, views);
  }
  manifest.root = root;
  save_manifest(root / "manifest.json", manifest);
  std::printf("extracted %zu trials to %s\n", manifest.trials.size(),
              (root / "manifest.json").c_str());
  return 0;
}

// --- train-clf -----------------------------------------------------------------

struct TrainClfArgs {
  std::string manifest, out, task = "expert-novice";
  std::uint64_t seed = 0;
  std::vector<std::string> views;
  std::size_t epochs = 50;
  double lr = 1e-3;
  bool no_xva = false, no_se = false, balance = false;
  Verbose verbose;
};

std::vector<ViewId> default_views(const Manifest& m) {
  std::vector<ViewId> v;
  if (m.trials.empty()) throw UsageError("manifest lists no trials");
  for (const auto& f : io::load_features(m.trials.front().features)) v.push_back(f.view);
  return v;
}

int run_train_clf(const TrainClfArgs& a) {
  const auto manifest = load_manifest(a.manifest);
  const LabelTask task = parse_task(a.task);
  const auto views = a.views.empty() ? default_views(manifest) : parse_views(a.views);
  const auto samples = load_samples(manifest, task, views);

  ClassifierConfig cfg;
  cfg.nz = samples.front().views.front().features.dim(1);
  cfg.views = views.size();
  cfg.use_xva = !a.no_xva;
  cfg.use_se = !a.no_se;
  cfg.seed = a.seed;
  ClassifierModel<float> model(cfg);
  model.init();
  ClassifierTrainOptions opt;
  opt.epochs = a.epochs;
  opt.learning_rate = a.lr;
  opt.seed = a.seed + 1;
  opt.balance_classes = a.balance;
  opt.on_epoch = [&](std::size_t e, double loss, double acc) {
    a.verbose("epoch %zu loss %.6g acc %.4f\n", e, loss, acc);
  };
  const auto result = train_classifier<float>(model, samples, opt);
  save_checkpoint(a.out, to_checkpoint(model, {{"task", task_name(task)},
                                               {"view_names", join_views(views)},
                                               {"epochs", std::to_string(a.epochs)},
                                               {"learning_rate", format_real(a.lr)},
                                               {"balance_classes", a.balance ? "true" : "false"}}));
  std::printf("samples,%zu\nepochs,%zu\nfinal_loss,%s\nfinal_train_accuracy,%s\n", samples.size(),
              a.epochs, format_real(result.epoch_loss.back()).c_str(),
              format_real(result.epoch_accuracy.back()).c_str());
  return 0;
}

// --- shared model/sample loading -------------------------------------------------

struct LoadedClassifier {
  Checkpoint ckpt;
  std::vector<ViewId> views;
  LabelTask task = LabelTask::kExpertNovice;
  std::vector<MultiViewSample<float>> samples;
};

LoadedClassifier load_classifier_and_samples(const std::string& model_path,
                                             const std::string& manifest_path,
                                             const std::string& task_flag) {
  LoadedClassifier lc;
  lc.ckpt = load_checkpoint(model_path);
  if (lc.ckpt.kind != ModelKind::kClassifier) {
    throw UsageError(model_path + " is not a classifier checkpoint");
  }
  const auto manifest = load_manifest(manifest_path);
  if (auto v = config_value(lc.ckpt, "view_names")) {
    lc.views = split_views(*v);
  } else {
    lc.views = default_views(manifest);
  }
  const auto stored_task = config_value(lc.ckpt, "task");
  lc.task = parse_task(!task_flag.empty() ? task_flag : stored_task.value_or("expert-novice"));
  lc.samples = load_samples(manifest, lc.task, lc.views);
  return lc;
}

// --- eval ----------------------------------------------------------------------

struct EvalArgs {
  std::string manifest, model = "classifier.xvam", task, out, fold_mode = "stratified";
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> epochs;
  std::size_t folds = 0;
  Verbose verbose;
};

int run_eval(const EvalArgs& a) {
  const auto lc = load_classifier_and_samples(a.model, a.manifest, a.task);
  std::vector<std::vector<Prediction>> folds;
  EvaluationReport report;
  if (a.folds == 0) {
    const auto model = classifier_from_checkpoint(lc.ckpt);
    folds.emplace_back();
    for (const auto& s : lc.samples) folds.back().push_back(predict(model, s));
    report = evaluate(folds);
  } else {
    if (a.fold_mode != "stratified" && a.fold_mode != "subject") {
      throw ConfigError("--fold-mode must be stratified or subject");
    }
    const auto cfg = classifier_config_from(lc.ckpt.config);
    ClassifierTrainOptions opt;
    opt.epochs = a.epochs.value_or(std::stoul(config_value(lc.ckpt, "epochs").value_or("50")));
    opt.learning_rate = std::stod(config_value(lc.ckpt, "learning_rate").value_or("0.001"));
    opt.balance_classes = config_value(lc.ckpt, "balance_classes").value_or("false") == "true";
    const auto mode = a.fold_mode == "subject" ? FoldMode::kSubjectGrouped : FoldMode::kStratified;
    auto cv = cross_validate(lc.samples, cfg, opt, a.folds, mode, a.seed.value_or(cfg.seed),
                             [&](std::size_t f, double acc) {
                               a.verbose("fold %zu accuracy %.4f\n", f, acc);
                             });
    folds = std::move(cv.folds);
    report = std::move(cv.report);
  }
  if (!a.out.empty()) {
    io::write_text_atomic(fs::path(a.out) / "report.csv", report_csv(report));
    io::write_text_atomic(fs::path(a.out) / "predictions.jsonl", predictions_jsonl(folds));
    io::write_text_atomic(fs::path(a.out) / "metrics.csv", metric_block_csv(report));
  }
  std::fputs(metric_block_csv(report).c_str(), stdout);
  return 0;
}

// --- explain -------------------------------------------------------------------

struct ExplainArgs {
  std::string manifest, model, out, task, trial, format = "csv", ae;
  std::optional<int> class_index;
  std::optional<std::size_t> frame;
  std::size_t layer = kEncoderDepth;
  std::size_t frame_stride = 1;
  bool raw = false;
};

int run_explain(const ExplainArgs& a) {
  const auto lc = load_classifier_and_samples(a.model, a.manifest, a.task);
  const auto model = classifier_from_checkpoint(lc.ckpt);
  std::vector<SaliencyFormat> formats;
  if (a.format == "csv" || a.format == "both") formats.push_back(SaliencyFormat::kCsv);
  if (a.format == "pgm" || a.format == "both") formats.push_back(SaliencyFormat::kPgm);
  if (formats.empty()) throw ConfigError("--format must be csv, pgm or both");
  if (a.layer == 0 || a.layer > kEncoderDepth) throw ConfigError("--layer must be 1..8");

  std::optional<AEModel<float>> ae;
  std::optional<Manifest> manifest;
  if (!a.ae.empty()) {
    ae = ae_from_checkpoint(load_checkpoint(a.ae));
    manifest = load_manifest(a.manifest);
  }

  std::size_t written = 0;
  for (const auto& s : lc.samples) {
    if (!a.trial.empty() && s.trial_id != a.trial) continue;
    const int c = a.class_index.value_or(model.classify(s).predicted);
    const auto cam = temporal_gradcam(model, s, c);
    const auto& sal = a.raw ? cam.raw : cam.rectified;
    for (auto f : formats) {
      export_saliency(sal, fs::path(a.out) / saliency_filename(s.trial_id, "fused", c, f), f);
      ++written;
    }
    if (!ae) continue;

    std::size_t t = 0;
    if (a.frame) {
      t = *a.frame;
    } else {
      // Default to the most salient time step.
      t = static_cast<std::size_t>(std::max_element(cam.rectified.upsampled.begin(),
                                                    cam.rectified.upsampled.end()) -
                                   cam.rectified.upsampled.begin());
    }
    const auto& tm = *std::find_if(manifest->trials.begin(), manifest->trials.end(),
                                   [&](const TrialManifest& m) { return m.trial_id == s.trial_id; });
    for (std::size_t v = 0; v < s.views.size(); ++v) {
      auto it = std::find_if(tm.views.begin(), tm.views.end(),
                             [&](const ViewFrames& vf) { return vf.view == s.views[v].view; });
      if (it == tm.views.end() || it->frames_dir.empty()) continue;
      const auto files = frame_files(it->frames_dir);
      if (t * a.frame_stride >= files.size()) throw UsageError("frame index out of range");
      const auto& cfg = ae->config();
      const auto frame = preprocess_frame(read_ppm(files[t * a.frame_stride]), cfg.height, cfg.width);
      const auto map = spatial_gradcam(*ae, model, s, v, frame, t, c, a.layer - 1);
      const std::string view(view_name(s.views[v].view));
      for (auto f : formats) {
        export_saliency(map, fs::path(a.out) / saliency_filename(s.trial_id, view, c, f), f);
        ++written;
      }
    }
  }
  if (!a.trial.empty() && written == 0) throw UsageError("trial not found: " + a.trial);
  std::printf("wrote %zu saliency files to %s\n", written, a.out.c_str());
  return 0;
}

// --- trust ---------------------------------------------------------------------

struct TrustArgs {
  std::string predictions = "predictions.jsonl", out;
};

int run_trust(const TrustArgs& a) {
  if (!fs::is_regular_file(a.predictions)) {
    throw IoError("predictions not found: " + a.predictions);
  }
  const auto bytes = io::read_file(a.predictions);
  const auto folds = parse_predictions_jsonl(std::string(bytes.begin(), bytes.end()), a.predictions);
  std::vector<Prediction> all;
  for (const auto& f : folds) all.insert(all.end(), f.begin(), f.end());
  const auto spectra = trust_spectrum(all);
  if (!a.out.empty()) {
    io::write_text_atomic(fs::path(a.out) / "trust.csv", trust_csv(spectra));
    io::write_text_atomic(fs::path(a.out) / "trust_density.csv", trust_density_csv(spectra));
  }
  std::fputs(trust_csv(spectra).c_str(), stdout);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Multi-view video skill assessment: autoencoder features, cross-view attention "
               "classifier, GradCAM and evaluation."};
  app.require_subcommand(1);
  std::string config_file;
  auto add_config = [&](CLI::App* sub) {
    sub->add_option("--config", config_file, "Flat key = value file; flags take precedence")
        ->check(CLI::ExistingFile);
  };

  SynthArgs synth;
  auto* s = app.add_subcommand("synth", "Generate a synthetic multi-view dataset");
  add_config(s);
  s->add_option("--task", synth.task, "marginal or cross-view")->required();
  s->add_option("--seed", synth.seed)->required();
  s->add_option("--out", synth.out, "Output directory")->required();
  s->add_option("--samples", synth.spec.n_per_class, "Trials per class");
  s->add_option("--t-min", synth.spec.t_min);
  s->add_option("--t-max", synth.spec.t_max);
  s->add_option("--motif-length", synth.spec.motif_length);
  s->add_option("--nz", synth.spec.nz);
  s->add_option("--view-count", synth.spec.views, "Views for the marginal task");
  s->add_option("--subjects", synth.spec.subjects);
  s->add_option("--noise", synth.spec.noise);
  s->add_option("--amplitude", synth.spec.amplitude);
  s->add_flag("--frames", synth.frames, "Also write PPM frames");
  s->add_option("--frame-size", synth.frame_size);

  TrainAeArgs tae;
  auto* ta = app.add_subcommand("train-ae", "Train the denoising autoencoder on manifest frames");
  add_config(ta);
  ta->add_option("--manifest", tae.manifest)->required();
  ta->add_option("--out", tae.out, "Checkpoint path")->required();
  ta->add_option("--seed", tae.seed)->required();
  ta->add_option("--nz", tae.nz);
  ta->add_option("--input-size", tae.input_size);
  ta->add_option("--epochs", tae.epochs);
  ta->add_option("--batch-size", tae.batch_size);
  ta->add_option("--lr", tae.lr);
  ta->add_option("--noise-sigma", tae.noise_sigma);
  ta->add_option("--frame-stride", tae.frame_stride);
  ta->add_option("--views", tae.views)->delimiter(',');
  ta->add_option("--perceptual", tae.perceptual, "Perceptual extractor checkpoint");
  ta->add_flag("--no-perceptual", tae.no_perceptual);
  ta->add_flag("--verbose", tae.verbose.on);

  ExtractArgs ex;
  auto* e = app.add_subcommand("extract", "Encode every frame into feature files");
  add_config(e);
  e->add_option("--manifest", ex.manifest)->required();
  e->add_option("--model", ex.model, "Autoencoder checkpoint")->required();
  e->add_option("--out", ex.out, "Output directory")->required();
  e->add_option("--frame-stride", ex.frame_stride);

  TrainClfArgs tc;
  auto* c = app.add_subcommand("train-clf", "Train the multi-view classifier");
  add_config(c);
  c->add_option("--manifest", tc.manifest)->required();
  c->add_option("--out", tc.out, "Checkpoint path")->required();
  c->add_option("--seed", tc.seed)->required();
  c->add_option("--task", tc.task, "expert-novice or success-failure");
  c->add_option("--views", tc.views)->delimiter(',');
  c->add_option("--epochs", tc.epochs);
  c->add_option("--lr", tc.lr);
  c->add_flag("--no-xva", tc.no_xva);
  c->add_flag("--no-se", tc.no_se);
  c->add_flag("--balance", tc.balance, "Inverse-frequency class weights");
  c->add_flag("--verbose", tc.verbose.on);

  EvalArgs ev;
  auto* v = app.add_subcommand("eval", "Evaluate a classifier, optionally by k-fold retraining");
  add_config(v);
  v->add_option("--manifest", ev.manifest)->required();
  v->add_option("--model", ev.model, "Classifier checkpoint");
  v->add_option("--task", ev.task);
  v->add_option("--folds", ev.folds, "0 = score the checkpoint as is");
  v->add_option("--fold-mode", ev.fold_mode, "stratified or subject");
  v->add_option("--seed", ev.seed);
  v->add_option("--epochs", ev.epochs);
  v->add_option("--out", ev.out, "Directory for report.csv, metrics.csv, predictions.jsonl");
  v->add_flag("--verbose", ev.verbose.on);

  ExplainArgs xp;
  auto* x = app.add_subcommand("explain", "Export GradCAM saliency");
  add_config(x);
  x->add_option("--manifest", xp.manifest)->required();
  x->add_option("--model", xp.model, "Classifier checkpoint")->required();
  x->add_option("--out", xp.out)->required();
  x->add_option("--task", xp.task);
  x->add_option("--trial", xp.trial);
  x->add_option("--class", xp.class_index, "Defaults to the predicted class");
  x->add_option("--format", xp.format, "csv, pgm or both");
  x->add_flag("--raw", xp.raw, "Export the unrectified map");
  x->add_option("--ae", xp.ae, "Autoencoder checkpoint for frame-level maps");
  x->add_option("--frame", xp.frame, "Frame index for frame-level maps");
  x->add_option("--layer", xp.layer, "Encoder conv tapped for frame-level maps (1-8)");
  x->add_option("--frame-stride", xp.frame_stride);

  TrustArgs tr;
  auto* t = app.add_subcommand("trust", "Trust spectrum and NTS from eval predictions");
  add_config(t);
  t->add_option("--predictions", tr.predictions);
  t->add_option("--out", tr.out);

  std::vector<std::string> args(argv + 1, argv + argc);
  try {
    CLI::App* sub = args.empty() ? nullptr : app.get_subcommand_no_throw(args.front());
    if (sub != nullptr) {
      args = cli::expand_config(
          args,
          [sub](const std::string& key) {
            const CLI::Option* opt = sub->get_option_no_throw("--" + key);
            if (opt == nullptr) return cli::OptionKind::kUnknown;
            return opt->get_type_size() == 0 ? cli::OptionKind::kFlag : cli::OptionKind::kValue;
          },
          [](const std::string& msg) { std::fprintf(stderr, "warning: %s\n", msg.c_str()); });
    }
    std::reverse(args.begin(), args.end());
    app.parse(args);
  } catch (const CLI::ParseError& err) {
    return app.exit(err);
  } catch (const std::exception& err) {
    std::fprintf(stderr, "error: %s\n", err.what());
    return 2;
  }

  try {
    if (*s) return run_synth(synth);
    if (*ta) return run_train_ae(tae);
    if (*e) return run_extract(ex);
    if (*c) return run_train_clf(tc);
    if (*v) return run_eval(ev);
    if (*x) return run_explain(xp);
    if (*t) return run_trust(tr);
  } catch (const std::exception& err) {
    std::fprintf(stderr, "error: %s\n", err.what());
    return 1;
  }
  return 1;
}
